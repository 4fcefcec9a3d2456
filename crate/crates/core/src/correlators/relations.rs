//! Right-hand sides of the recursions as lists of products of correlators.
//!
//! Terms whose factors are forced to vanish (unstable, gate-failing, ψ-free
//! genus one, two `-1` twists) are dropped during expansion.

use num_traits::One;

use super::key::{CorrelatorKey, Gate, Insertion, Sector};
use crate::coeffring::{binomial, int, ratio, Rational};

/// `coef · Π factors`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coef: Rational,
    pub factors: Vec<CorrelatorKey>,
}

/// Which relation produced an expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    /// `(i₁, boundary)` genus-zero TRR.
    TrrA { i1: usize },
    /// `(i₁, j)` genus-zero TRR with two internal markings.
    TrrB { i1: usize, j: usize },
    TrrG1 { i1: usize },
    /// Closed extended TRR with respect to `(i₁, {j₁, j₂})`.
    TrrExt { i1: usize, j1: usize, j2: usize },
    String { at: usize },
    Dilaton { at: usize },
}

/// Whether the correlator is zero by convention or by the selection rules.
pub fn vanishes(key: &CorrelatorKey, r: u32) -> bool {
    if !key.is_stable() {
        return true;
    }
    match key.dimension_gate(r) {
        Ok(Gate::Candidate) => {}
        _ => return true,
    }
    key.sector == Sector::Open && key.g == 1 && key.sum_d() == 0
}

struct Builder {
    r: u32,
    terms: Vec<Term>,
}

impl Builder {
    fn push(&mut self, coef: Rational, factors: Vec<CorrelatorKey>) {
        if factors.iter().any(|f| vanishes(f, self.r)) {
            return;
        }
        self.terms.push(Term { coef, factors });
    }
}

fn split(items: &[Insertion], mask: u32) -> (Vec<Insertion>, Vec<Insertion>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (i, x) in items.iter().enumerate() {
        if mask & (1 << i) != 0 {
            left.push(*x);
        } else {
            right.push(*x);
        }
    }
    (left, right)
}

fn with(head: &[Insertion], tail: &[Insertion]) -> Vec<Insertion> {
    head.iter().chain(tail).copied().collect()
}

fn others(key: &CorrelatorKey, skip: &[usize]) -> Vec<Insertion> {
    key.insertions().iter().enumerate().filter(|(i, _)| !skip.contains(i)).map(|(_, x)| *x).collect()
}

/// `Σ_a ⟨τ^a_0 lowered S⟩^ext · ⟨τ^{r-2-a}_0 fixed R σ^k⟩_g`.
fn ext_split(b: &mut Builder, lowered: Insertion, rest: &[Insertion], fixed: &[Insertion], g: u32, k: u32) {
    let r = b.r as i32;
    for mask in 0..(1u32 << rest.len()) {
        let (s, rr) = split(rest, mask);
        for a in -1..=r - 2 {
            let ext = CorrelatorKey::ext(with(&[Insertion::new(a, 0), lowered], &s));
            let open = CorrelatorKey::open(g, with(&with(&[Insertion::new(r - 2 - a, 0)], fixed), &rr), k);
            b.push(Rational::one(), vec![ext, open]);
        }
    }
}

/// LHS key `⟨τ^{a₁}_{d₁+1} ... σ^k⟩_0` reduced with respect to
/// `(i₁, boundary)`; needs `d_{i₁} >= 1` and `k >= 1`.
pub fn trr_a(key: &CorrelatorKey, i1: usize, r: u32) -> Option<Vec<Term>> {
    let lowered = key.insertions().get(i1)?.lowered()?;
    if key.sector != Sector::Open || key.g != 0 || key.k == 0 {
        return None;
    }
    let rest = others(key, &[i1]);
    let mut b = Builder { r, terms: Vec::new() };
    ext_split(&mut b, lowered, &rest, &[], 0, key.k);
    let k = key.k - 1;
    for mask in 0..(1u32 << rest.len()) {
        let (s, rr) = split(&rest, mask);
        for k1 in 0..=k {
            let left = CorrelatorKey::open(0, with(&[lowered], &s), k1);
            let right = CorrelatorKey::open(0, rr.clone(), k - k1 + 2);
            b.push(binomial(k, k1), vec![left, right]);
        }
    }
    Some(b.terms)
}

/// Reduction with respect to two internal markings `(i₁, j)`.
pub fn trr_b(key: &CorrelatorKey, i1: usize, j: usize, r: u32) -> Option<Vec<Term>> {
    let lowered = key.insertions().get(i1)?.lowered()?;
    let fixed = *key.insertions().get(j)?;
    if key.sector != Sector::Open || key.g != 0 || i1 == j {
        return None;
    }
    let rest = others(key, &[i1, j]);
    let mut b = Builder { r, terms: Vec::new() };
    ext_split(&mut b, lowered, &rest, &[fixed], 0, key.k);
    let k = key.k;
    for mask in 0..(1u32 << rest.len()) {
        let (s, rr) = split(&rest, mask);
        for k1 in 0..=k {
            let left = CorrelatorKey::open(0, with(&[lowered], &s), k1);
            let right = CorrelatorKey::open(0, with(&[fixed], &rr), k - k1 + 1);
            b.push(binomial(k, k1), vec![left, right]);
        }
    }
    Some(b.terms)
}

/// Genus-one reduction with respect to `i₁`.
pub fn trr_g1(key: &CorrelatorKey, i1: usize, r: u32) -> Option<Vec<Term>> {
    let lowered = key.insertions().get(i1)?.lowered()?;
    if key.sector != Sector::Open || key.g != 1 {
        return None;
    }
    let rest = others(key, &[i1]);
    let mut b = Builder { r, terms: Vec::new() };
    ext_split(&mut b, lowered, &rest, &[], 1, key.k);
    let k = key.k;
    for mask in 0..(1u32 << rest.len()) {
        let (s, rr) = split(&rest, mask);
        for k1 in 0..=k {
            let left = CorrelatorKey::open(0, with(&[lowered], &s), k1);
            let right = CorrelatorKey::open(1, rr.clone(), k - k1 + 1);
            b.push(binomial(k, k1), vec![left, right]);
        }
    }
    b.push(ratio(1, 2), vec![CorrelatorKey::open(0, with(&[lowered], &rest), k + 1)]);
    Some(b.terms)
}

/// Closed extended reduction with respect to `(i₁, {j₁, j₂})`.
pub fn trr_ext(key: &CorrelatorKey, i1: usize, j1: usize, j2: usize, r: u32) -> Option<Vec<Term>> {
    let lowered = key.insertions().get(i1)?.lowered()?;
    let ins = key.insertions();
    if key.sector != Sector::Ext || j1 >= ins.len() || j2 >= ins.len() || i1 == j1 || i1 == j2 || j1 == j2 {
        return None;
    }
    let fixed = [ins[j1], ins[j2]];
    let rest = others(key, &[i1, j1, j2]);
    let mut b = Builder { r, terms: Vec::new() };
    let r = r as i32;
    for mask in 0..(1u32 << rest.len()) {
        let (r1, r2) = split(&rest, mask);
        for a in -1..=r - 2 {
            let left = CorrelatorKey::ext(with(&[Insertion::new(a, 0), lowered], &r1));
            let right = CorrelatorKey::ext(with(&with(&[Insertion::new(r - 2 - a, 0)], &fixed), &r2));
            if left.validate(b.r).is_err() || right.validate(b.r).is_err() {
                continue;
            }
            b.push(Rational::one(), vec![left, right]);
        }
    }
    Some(b.terms)
}

/// Removes `τ^0_0` at `at`; needs the remaining key to be stable.
pub fn string(key: &CorrelatorKey, at: usize, r: u32) -> Option<Vec<Term>> {
    if key.sector != Sector::Open || key.insertions().get(at) != Some(&Insertion::new(0, 0)) {
        return None;
    }
    let rest = key.without(at);
    if !rest.is_stable() {
        return None;
    }
    let mut b = Builder { r, terms: Vec::new() };
    for (j, x) in rest.insertions().iter().enumerate() {
        if let Some(low) = x.lowered() {
            b.push(Rational::one(), vec![rest.replaced(j, low)]);
        }
    }
    Some(b.terms)
}

/// Removes the dilaton insertion `τ^0_1` at `at`; needs the remaining key to
/// be stable.
pub fn dilaton(key: &CorrelatorKey, at: usize, r: u32) -> Option<Vec<Term>> {
    if key.sector != Sector::Open || key.insertions().get(at) != Some(&Insertion::new(0, 1)) {
        return None;
    }
    let rest = key.without(at);
    if !rest.is_stable() {
        return None;
    }
    let factor = key.g as i64 + rest.l() as i64 + key.k as i64 - 1;
    let mut b = Builder { r, terms: Vec::new() };
    b.push(int(factor), vec![rest]);
    Some(b.terms)
}

/// Every relation applicable to `key`, over all legal choices.
pub fn applicable(key: &CorrelatorKey) -> Vec<Relation> {
    let ins = key.insertions();
    let n = ins.len();
    let mut out = Vec::new();
    let desc: Vec<usize> = (0..n).filter(|&i| ins[i].d >= 1).collect();
    match (key.sector, key.g) {
        (Sector::Open, 0) => {
            for &i1 in &desc {
                if key.k >= 1 {
                    out.push(Relation::TrrA { i1 });
                }
                out.extend((0..n).filter(|&j| j != i1).map(|j| Relation::TrrB { i1, j }));
            }
        }
        (Sector::Open, _) => out.extend(desc.iter().map(|&i1| Relation::TrrG1 { i1 })),
        (Sector::Ext, _) => {
            // The twist -1 marking, when present, must be one of j1, j2.
            let neg = ins.iter().position(|x| x.a < 0);
            for &i1 in &desc {
                for j1 in 0..n {
                    for j2 in j1 + 1..n {
                        let anchored = neg.is_none_or(|m| m == j1 || m == j2);
                        if j1 != i1 && j2 != i1 && anchored {
                            out.push(Relation::TrrExt { i1, j1, j2 });
                        }
                    }
                }
            }
        }
    }
    if key.sector == Sector::Open {
        for special in [Insertion::new(0, 0), Insertion::new(0, 1)] {
            if let Some(at) = ins.iter().position(|x| *x == special) {
                if key.without(at).is_stable() {
                    out.push(if special.d == 0 { Relation::String { at } } else { Relation::Dilaton { at } });
                }
            }
        }
    }
    out
}

pub fn expand(key: &CorrelatorKey, rel: Relation, r: u32) -> Option<Vec<Term>> {
    match rel {
        Relation::TrrA { i1 } => trr_a(key, i1, r),
        Relation::TrrB { i1, j } => trr_b(key, i1, j, r),
        Relation::TrrG1 { i1 } => trr_g1(key, i1, r),
        Relation::TrrExt { i1, j1, j2 } => trr_ext(key, i1, j1, j2, r),
        Relation::String { at } => string(key, at, r),
        Relation::Dilaton { at } => dilaton(key, at, r),
    }
}
