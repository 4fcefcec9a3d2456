use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use super::key::{CorrelatorKey, Sector};
use super::relations::{expand, vanishes, Relation, Term};
use super::table::CorrelatorTable;
use crate::coeffring::Rational;
use crate::error::{Error, Result};

/// How the distinguished insertions of a reduction are picked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Choice {
    First,
    Last,
    Seeded(u64),
}

/// Where open correlators come from.
#[derive(Clone, Copy, Debug)]
pub enum OpenSource<'a> {
    /// Reduce with string, dilaton and the TRRs down to primaries.
    Recursion,
    /// Read every open value from a table (typically pipeline A).
    Table(&'a CorrelatorTable),
}

/// Memoized evaluator for open and extended correlators.
///
/// Primaries (open and extended) are read from `base`; descendants are
/// reduced with the deterministic strategy string, dilaton, TRR.
pub struct Evaluator<'a> {
    r: u32,
    base: &'a CorrelatorTable,
    open: OpenSource<'a>,
    choice: Choice,
    rng: ChaCha8Rng,
    memo: FxHashMap<CorrelatorKey, Rational>,
}

impl<'a> Evaluator<'a> {
    pub fn new(r: u32, base: &'a CorrelatorTable, open: OpenSource<'a>, choice: Choice) -> Self {
        let seed = match choice {
            Choice::Seeded(s) => s,
            _ => 0,
        };
        Evaluator { r, base, open, choice, rng: ChaCha8Rng::seed_from_u64(seed), memo: FxHashMap::default() }
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    /// Every value computed so far.
    pub fn memo(&self) -> impl Iterator<Item = (&CorrelatorKey, &Rational)> {
        self.memo.iter()
    }

    fn pick(&mut self, options: &[Relation]) -> Relation {
        match self.choice {
            Choice::First => options[0],
            Choice::Last => options[options.len() - 1],
            Choice::Seeded(_) => options[self.rng.gen_range(0..options.len())],
        }
    }

    /// The reduction used for `key`, or `None` when it is a base case.
    pub fn reduction(&mut self, key: &CorrelatorKey) -> Option<Relation> {
        let rels = super::relations::applicable(key);
        let by_kind = |f: fn(&Relation) -> bool| rels.iter().copied().filter(&f).collect::<Vec<_>>();
        for class in [
            by_kind(|r| matches!(r, Relation::String { .. })),
            by_kind(|r| matches!(r, Relation::Dilaton { .. })),
        ] {
            if !class.is_empty() {
                return Some(class[0]);
            }
        }
        let trr = if key.sector == Sector::Open && key.g == 0 && key.k >= 1 {
            by_kind(|r| matches!(r, Relation::TrrA { .. }))
        } else {
            by_kind(|r| matches!(r, Relation::TrrB { .. } | Relation::TrrG1 { .. } | Relation::TrrExt { .. }))
        };
        if trr.is_empty() {
            None
        } else {
            Some(self.pick(&trr))
        }
    }

    pub fn value(&mut self, key: &CorrelatorKey) -> Result<Rational> {
        if vanishes(key, self.r) {
            return Ok(Rational::zero());
        }
        if let Some(v) = self.memo.get(key) {
            return Ok(v.clone());
        }
        let v = self.compute(key)?;
        self.memo.insert(key.clone(), v.clone());
        Ok(v)
    }

    fn compute(&mut self, key: &CorrelatorKey) -> Result<Rational> {
        if let (Sector::Open, OpenSource::Table(t)) = (key.sector, self.open) {
            return t.get(key).cloned().ok_or_else(|| Error::NeedsBase(key.clone()));
        }
        match self.reduction(key) {
            Some(rel) => {
                let terms = expand(key, rel, self.r).expect("applicable relation expands");
                self.sum(&terms)
            }
            None => self.base.get(key).cloned().ok_or_else(|| Error::NeedsBase(key.clone())),
        }
    }

    /// `Σ coef · Π factors`. Open factors are evaluated first so that extended
    /// factors multiplying a zero are never requested.
    pub fn sum(&mut self, terms: &[Term]) -> Result<Rational> {
        let mut total = Rational::zero();
        for t in terms {
            let mut order: Vec<&CorrelatorKey> = t.factors.iter().collect();
            order.sort_by_key(|k| k.sector != Sector::Open);
            let mut prod = t.coef.clone();
            for f in order {
                prod *= self.value(f)?;
                if prod.is_zero() {
                    break;
                }
            }
            total += prod;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffring::int;
    use crate::correlators::{Insertion, Provenance};

    #[test]
    fn reduces_to_base_and_reports_missing() {
        let mut base = CorrelatorTable::new();
        base.insert(CorrelatorKey::open(0, [Insertion::new(0, 0)], 1), int(1), Provenance::Base).unwrap();
        base.insert(CorrelatorKey::open(0, [], 3), int(-2), Provenance::Base).unwrap();
        let mut ev = Evaluator::new(2, &base, OpenSource::Recursion, Choice::First);
        assert_eq!(ev.value(&CorrelatorKey::open(0, [Insertion::new(0, 1)], 3)).unwrap(), int(-4));
        let missing = CorrelatorKey::open(0, [Insertion::new(1, 0)], 2);
        assert!(matches!(ev.value(&missing), Err(Error::NeedsBase(k)) if k == missing));
        assert!(ev.value(&CorrelatorKey::open(0, [], 2)).unwrap().is_zero());
    }
}
