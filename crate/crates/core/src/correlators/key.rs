use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sector {
    Open,
    /// Genus-zero closed theory with at most one twist `-1` marking.
    Ext,
}

/// One internal marking `τ^a_d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Insertion {
    pub a: i32,
    pub d: u32,
}

impl Insertion {
    pub fn new(a: i32, d: u32) -> Self {
        Insertion { a, d }
    }

    /// `a + 1 + r d`
    pub fn weight(self, r: u32) -> i64 {
        self.a as i64 + 1 + (r * self.d) as i64
    }

    pub fn lowered(self) -> Option<Self> {
        self.d.checked_sub(1).map(|d| Insertion { a: self.a, d })
    }
}

/// Canonical identifier of a correlator `⟨τ^{a_1}_{d_1} ... σ^k⟩_g`.
///
/// Insertions are kept sorted, so equal multisets compare and hash equal.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CorrelatorKey {
    pub sector: Sector,
    pub g: u32,
    ins: Vec<Insertion>,
    pub k: u32,
}

/// Outcome of the dimension gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Zero,
    Candidate,
}

impl CorrelatorKey {
    pub fn open(g: u32, ins: impl IntoIterator<Item = Insertion>, k: u32) -> Self {
        let mut ins: Vec<Insertion> = ins.into_iter().collect();
        ins.sort();
        CorrelatorKey { sector: Sector::Open, g, ins, k }
    }

    pub fn ext(ins: impl IntoIterator<Item = Insertion>) -> Self {
        let mut ins: Vec<Insertion> = ins.into_iter().collect();
        ins.sort();
        CorrelatorKey { sector: Sector::Ext, g: 0, ins, k: 0 }
    }

    /// Parses pairs `(a, d)`.
    pub fn from_pairs(sector: Sector, g: u32, pairs: &[(i32, u32)], k: u32) -> Self {
        let ins = pairs.iter().map(|&(a, d)| Insertion::new(a, d));
        match sector {
            Sector::Open => Self::open(g, ins, k),
            Sector::Ext => {
                let mut key = Self::ext(ins);
                key.g = g;
                key.k = k;
                key
            }
        }
    }

    pub fn insertions(&self) -> &[Insertion] {
        &self.ins
    }

    pub fn l(&self) -> usize {
        self.ins.len()
    }

    pub fn sum_d(&self) -> u32 {
        self.ins.iter().map(|i| i.d).sum()
    }

    pub fn sum_a(&self) -> i64 {
        self.ins.iter().map(|i| i.a as i64).sum()
    }

    /// `Σ (a_i + 1 + r d_i) + r k`.
    pub fn weight(&self, r: u32) -> i64 {
        self.ins.iter().map(|i| i.weight(r)).sum::<i64>() + (r * self.k) as i64
    }

    /// Same key with the insertion at `idx` removed.
    pub fn without(&self, idx: usize) -> Self {
        let mut key = self.clone();
        key.ins.remove(idx);
        key
    }

    /// Same key with the insertion at `idx` replaced.
    pub fn replaced(&self, idx: usize, by: Insertion) -> Self {
        let mut key = self.clone();
        key.ins[idx] = by;
        key.ins.sort();
        key
    }

    pub fn with_k(&self, k: u32) -> Self {
        let mut key = self.clone();
        key.k = k;
        key
    }

    /// Structural validity for the given `r`.
    pub fn validate(&self, r: u32) -> Result<()> {
        let bad = |reason: &str| Err(Error::InvalidKey { key: self.to_string(), reason: reason.into() });
        let top = r as i32 - 1;
        match self.sector {
            Sector::Open => {
                if self.g > 1 {
                    return bad("only genus 0 and 1 are supported");
                }
                if self.ins.iter().any(|i| i.a < 0 || i.a > top) {
                    return bad("open twists must lie in 0..=r-1");
                }
            }
            Sector::Ext => {
                if self.g != 0 || self.k != 0 {
                    return bad("extended correlators have genus 0 and no boundary markings");
                }
                if self.ins.iter().any(|i| i.a < -1 || i.a > top) {
                    return bad("extended twists must lie in -1..=r-1");
                }
                if self.ins.iter().filter(|i| i.a == -1).count() > 1 {
                    return bad("at most one marking of twist -1");
                }
            }
        }
        Ok(())
    }

    /// Whether the moduli space is stable (and the correlator defined).
    pub fn is_stable(&self) -> bool {
        let l = self.l() as i64;
        match self.sector {
            Sector::Open => 2 * self.g as i64 - 2 + self.k as i64 + 2 * l > 0,
            Sector::Ext => l >= 3,
        }
    }

    /// Rank-equals-dimension selection rule.
    pub fn dimension_gate(&self, r: u32) -> Result<Gate> {
        self.validate(r)?;
        let r = r as i64;
        let l = self.l() as i64;
        let sd = self.sum_d() as i64;
        let sa = self.sum_a();
        let ok = match self.sector {
            Sector::Open => {
                let (g, k) = (self.g as i64, self.k as i64);
                let num = 2 * sa + k * (r - 2) + (g - 1) * (r - 2);
                num.rem_euclid(r) == 0 && 2 * sd + num / r == 2 * l + k + 3 * g - 3
            }
            Sector::Ext => {
                let num = sa - (r - 2);
                num.rem_euclid(r) == 0 && sd == l - 3 - num.div_euclid(r)
            }
        };
        Ok(if ok { Gate::Candidate } else { Gate::Zero })
    }
}

impl fmt::Display for CorrelatorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        let mut parts: Vec<String> = self.ins.iter().map(|i| format!("t{}_{}", i.a, i.d)).collect();
        if self.k > 0 {
            parts.push(format!("s^{}", self.k));
        }
        write!(f, "{}", parts.join(" "))?;
        match self.sector {
            Sector::Open => write!(f, ">_{}", self.g),
            Sector::Ext => write!(f, ">ext"),
        }
    }
}

impl fmt::Debug for CorrelatorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(g: u32, ins: &[(i32, u32)], k: u32) -> CorrelatorKey {
        CorrelatorKey::from_pairs(Sector::Open, g, ins, k)
    }

    #[test]
    fn gate_examples() {
        assert_eq!(open(1, &[(1, 1)], 1).dimension_gate(3).unwrap(), Gate::Candidate);
        assert_eq!(open(1, &[(0, 1)], 2).dimension_gate(2).unwrap(), Gate::Zero);
        for r in 2..6u32 {
            let a = (r - 2) as i32;
            let key = CorrelatorKey::ext([Insertion::new(a, 0), Insertion::new(0, 0), Insertion::new(0, 0)]);
            assert_eq!(key.dimension_gate(r).unwrap(), Gate::Candidate);
        }
        assert_eq!(open(0, &[], 3).dimension_gate(2).unwrap(), Gate::Candidate);
        assert_eq!(open(0, &[(0, 0)], 1).dimension_gate(2).unwrap(), Gate::Candidate);
    }

    #[test]
    fn canonical_order() {
        assert_eq!(open(0, &[(1, 0), (0, 2)], 1), open(0, &[(0, 2), (1, 0)], 1));
        assert_eq!(open(0, &[(1, 0), (0, 2)], 1).to_string(), "<t0_2 t1_0 s^1>_0");
    }

    #[test]
    fn validity() {
        assert!(open(0, &[(3, 0)], 1).validate(3).is_err());
        let two_minus = CorrelatorKey::ext([Insertion::new(-1, 0), Insertion::new(-1, 0), Insertion::new(0, 0)]);
        assert!(two_minus.validate(3).is_err());
        assert!(CorrelatorKey::ext([Insertion::new(-1, 1)]).validate(3).is_ok());
    }
}
