//! Truncated pseudo-differential operators `Σ a_e ∂_x^e` over [`MSeries`]
//! coefficients, with `x = T_1` (variable position 0).
//!
//! An operator is either known exactly, or only for exponents at or above a
//! floor; composition propagates floors so that every stored coefficient is
//! exact in the `∂_x` direction. Precision in the `T` direction is tracked
//! separately by the coefficient series.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::coeffring::{falling_binomial, int, ratio, Coeff, Rational};
use crate::error::{Error, Result};
use crate::series::{Key, MSeries, Monomial};

/// Position of `x = T_1` in the variable system.
pub const X: usize = 0;

#[derive(Clone)]
pub struct PsiDO<C: Coeff> {
    zero: MSeries<C>,
    coeffs: BTreeMap<i32, MSeries<C>>,
    /// Exponents below the floor are unknown; `None` means exact.
    floor: Option<i32>,
}

impl<C: Coeff> PartialEq for PsiDO<C> {
    fn eq(&self, other: &Self) -> bool {
        self.floor == other.floor && self.coeffs == other.coeffs
    }
}

fn max_floor(a: Option<i32>, b: Option<i32>) -> Option<i32> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl<C: Coeff> PsiDO<C> {
    /// The exact zero operator; `template` fixes variables, weight and ring.
    pub fn zero(template: &MSeries<C>) -> Self {
        PsiDO { zero: template.zero_like(), coeffs: BTreeMap::new(), floor: None }
    }

    /// `∂_x^k`
    pub fn dx(template: &MSeries<C>, k: i32) -> Self {
        let mut op = Self::zero(template);
        let one = MSeries::constant(*template.vars(), template.weight(), template.one().clone());
        op.coeffs.insert(k, one);
        op
    }

    /// Multiplication by `f`.
    pub fn mult(f: MSeries<C>) -> Self {
        let mut op = Self::zero(&f);
        op.set(0, f);
        op
    }

    pub fn from_coeffs(template: &MSeries<C>, coeffs: impl IntoIterator<Item = (i32, MSeries<C>)>, floor: Option<i32>) -> Self {
        let mut op = Self::zero(template);
        op.floor = floor;
        for (e, f) in coeffs {
            op.add_at(e, &f);
        }
        op
    }

    pub fn template(&self) -> &MSeries<C> {
        &self.zero
    }

    pub fn floor(&self) -> Option<i32> {
        self.floor
    }

    pub fn is_exact(&self) -> bool {
        self.floor.is_none()
    }

    /// Highest exponent with a nonzero coefficient.
    pub fn top(&self) -> Option<i32> {
        self.coeffs.keys().next_back().copied()
    }

    fn effective_top(&self) -> Option<i32> {
        match (self.top(), self.floor) {
            (Some(t), Some(f)) => Some(t.max(f - 1)),
            (t, None) => t,
            (None, Some(f)) => Some(f - 1),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (i32, &MSeries<C>)> {
        self.coeffs.iter().map(|(&e, f)| (e, f))
    }

    pub fn get(&self, e: i32) -> Option<&MSeries<C>> {
        self.coeffs.get(&e)
    }

    /// Coefficient of `∂_x^e`, rejecting exponents below the floor.
    pub fn coefficient(&self, e: i32) -> Result<MSeries<C>> {
        if let Some(f) = self.floor {
            if e < f {
                return Err(Error::OutsideWindow { exponent: e, floor: f });
            }
        }
        Ok(self.coeffs.get(&e).cloned().unwrap_or_else(|| self.zero.clone()))
    }

    pub fn set(&mut self, e: i32, f: MSeries<C>) {
        if f.is_zero() {
            self.coeffs.remove(&e);
        } else {
            self.coeffs.insert(e, f);
        }
    }

    fn add_at(&mut self, e: i32, f: &MSeries<C>) {
        if f.is_zero() || self.floor.is_some_and(|fl| e < fl) {
            return;
        }
        match self.coeffs.get_mut(&e) {
            Some(c) => {
                c.add_assign(f);
                if c.is_zero() {
                    self.coeffs.remove(&e);
                }
            }
            None => {
                self.coeffs.insert(e, f.clone());
            }
        }
    }

    /// Discards exponents below `e` and marks them unknown.
    pub fn truncate_below(&self, e: i32) -> Self {
        let floor = max_floor(self.floor, Some(e));
        PsiDO {
            zero: self.zero.clone(),
            coeffs: self.coeffs.range(floor.unwrap()..).map(|(&k, f)| (k, f.clone())).collect(),
            floor,
        }
    }

    /// Applies `f` to every coefficient.
    pub fn map(&self, f: impl Fn(&MSeries<C>) -> MSeries<C>) -> Self {
        let mut out = PsiDO { zero: f(&self.zero), coeffs: BTreeMap::new(), floor: self.floor };
        for (&e, c) in &self.coeffs {
            out.set(e, f(c));
        }
        out
    }

    /// Lowers the coefficient weight cap.
    pub fn truncate_weight(&self, w: u32) -> Self {
        self.map(|c| c.truncate(w))
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut out = self.clone();
        out.floor = max_floor(self.floor, rhs.floor);
        if let Some(f) = out.floor {
            out.coeffs = out.coeffs.split_off(&f);
        }
        for (&e, c) in &rhs.coeffs {
            out.add_at(e, c);
        }
        out
    }

    pub fn neg(&self) -> Self {
        self.map(|c| c.neg())
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn scale(&self, s: &Rational) -> Self {
        self.map(|c| c.scale(s))
    }

    pub fn shift_lambda(&self, k: i32) -> Self {
        self.map(|c| c.shift_lambda(k))
    }

    /// `A ∘ B`.
    pub fn compose(&self, rhs: &Self) -> Self {
        self.compose_above(rhs, None)
    }

    /// `A ∘ B` keeping only exponents `>= cut` (if given).
    ///
    /// The result's floor is `max(floor_A + top_B, floor_B + top_A, cut)`:
    /// unknown terms of either factor cannot reach higher exponents.
    pub fn compose_above(&self, rhs: &Self, cut: Option<i32>) -> Self {
        if (self.is_zero() && self.is_exact()) || (rhs.is_zero() && rhs.is_exact()) {
            let mut z = Self::zero(&self.zero);
            z.floor = cut;
            return z;
        }
        let mut floor = cut;
        if let (Some(fa), Some(tb)) = (self.floor, rhs.effective_top()) {
            floor = max_floor(floor, Some(fa + tb));
        }
        if let (Some(fb), Some(ta)) = (rhs.floor, self.effective_top()) {
            floor = max_floor(floor, Some(fb + ta));
        }
        let lhs: Vec<(i32, &MSeries<C>)> = self.terms().collect();
        let rhs_terms: Vec<(i32, &MSeries<C>)> = rhs.terms().collect();
        let top_a = self.top().unwrap_or(i32::MIN / 4);
        let partials: Vec<BTreeMap<i32, MSeries<C>>> = rhs_terms
            .par_iter()
            .map(|&(j, b)| {
                let mut acc: BTreeMap<i32, MSeries<C>> = BTreeMap::new();
                let mut deriv = b.clone();
                let mut l = 0u32;
                while !deriv.is_zero() {
                    if floor.is_some_and(|f| top_a + j - (l as i32) < f) {
                        break;
                    }
                    let mut any = false;
                    for &(i, a) in &lhs {
                        let e = i + j - l as i32;
                        if floor.is_some_and(|f| e < f) {
                            continue;
                        }
                        let coef = falling_binomial(i as i64, l);
                        if num_traits::Zero::is_zero(&coef) {
                            continue;
                        }
                        any = true;
                        let term = (a * &deriv).scale(&coef);
                        if term.is_zero() {
                            continue;
                        }
                        match acc.get_mut(&e) {
                            Some(c) => c.add_assign(&term),
                            None => {
                                acc.insert(e, term);
                            }
                        }
                    }
                    // Only non-negative exponents remain and all binomials vanished.
                    if !any && lhs.iter().all(|&(i, _)| i >= 0 && (l as i32) > i) {
                        break;
                    }
                    deriv = deriv.derive(X);
                    l += 1;
                }
                acc
            })
            .collect();
        let mut out = Self::zero(&self.zero);
        out.floor = floor;
        for part in partials {
            for (e, c) in part {
                out.add_at(e, &c);
            }
        }
        out
    }

    /// `A B - B A`.
    pub fn commutator(&self, rhs: &Self) -> Self {
        self.compose(rhs).sub(&rhs.compose(self))
    }

    /// Non-negative part `(A)_+`; exact whenever the floor is at most 0.
    pub fn positive_part(&self) -> Self {
        PsiDO {
            zero: self.zero.clone(),
            coeffs: self.coeffs.range(0..).map(|(&e, f)| (e, f.clone())).collect(),
            floor: self.floor.filter(|&f| f > 0),
        }
    }

    /// Coefficient of `∂_x^{-1}`.
    pub fn residue(&self) -> Result<MSeries<C>> {
        self.coefficient(-1)
    }

    /// Applies a differential operator to a function.
    pub fn apply(&self, f: &MSeries<C>) -> Result<MSeries<C>> {
        if let Some((e, _)) = self.coeffs.iter().next() {
            if *e < 0 {
                return Err(Error::Unsupported("applying an operator with negative powers".into()));
            }
        }
        if self.floor.is_some_and(|fl| fl > 0) {
            return Err(Error::OutsideWindow { exponent: 0, floor: self.floor.unwrap() });
        }
        let mut out = f.zero_like();
        let mut deriv = f.clone();
        let mut k = 0;
        for (&e, c) in &self.coeffs {
            while k < e {
                deriv = deriv.derive(X);
                k += 1;
            }
            out.add_assign(&(c * &deriv));
        }
        Ok(out)
    }

    fn check_monic(&self, r: u32) -> Result<()> {
        let r = r as i32;
        let not_monic = |detail: String| Err(Error::NotMonic { order: r as u32, detail });
        if self.top() != Some(r) {
            return not_monic(format!("top exponent is {:?}", self.top()));
        }
        let lead = &self.coeffs[&r];
        let one = MSeries::constant(*lead.vars(), lead.weight(), lead.one().clone());
        if !lead.eq_upto(&one, lead.weight()) {
            return not_monic("leading coefficient is not 1".into());
        }
        Ok(())
    }

    /// The unique `B = ∂_x + Σ_{m>=0} b_m ∂_x^{-m}` with `B^r = A`, computed
    /// down to `∂_x^{e_min}`.
    pub fn rth_root(&self, r: u32, e_min: i32) -> Result<Self> {
        Ok(self.root_powers(r, e_min)?.swap_remove(0))
    }

    /// `B, B^2, ..., B^r` for `B = A^{1/r}`, where `B` is known down to
    /// `∂_x^{e_min}` and `B^j` down to `∂_x^{j-1+e_min}`.
    ///
    /// Column by column: at step `m` every power `B^j` gains its exponent
    /// `j-1-m`, whose coefficient is `c_j + j b_m` with `c_j` independent of
    /// `b_m`; matching `B^r` against `A` at `∂^{r-1-m}` gives `b_m`.
    pub fn root_powers(&self, r: u32, e_min: i32) -> Result<Vec<Self>> {
        self.check_monic(r)?;
        let ri = r as i32;
        let m_max = (-e_min).max(0) as usize;
        if let Some(f) = self.floor {
            if f > ri - 1 - m_max as i32 {
                return Err(Error::OutsideWindow { exponent: ri - 1 - m_max as i32, floor: f });
            }
        }
        let one = MSeries::constant(*self.zero.vars(), self.zero.weight(), self.zero.one().clone());
        // cols[j][e] = coefficient of ∂^e in B^j; derivs caches x-derivatives.
        let mut cols: Vec<BTreeMap<i32, MSeries<C>>> = vec![BTreeMap::new(); r as usize + 1];
        let mut derivs: Vec<BTreeMap<i32, Vec<MSeries<C>>>> = vec![BTreeMap::new(); r as usize + 1];
        for (j, col) in cols.iter_mut().enumerate().skip(1) {
            col.insert(j as i32, one.clone());
        }
        let mut b: Vec<MSeries<C>> = Vec::with_capacity(m_max + 1);
        let inv_r = ratio(1, r as i64);
        for m in 0..=m_max {
            let mut c: Vec<MSeries<C>> = vec![self.zero.clone(); r as usize + 1];
            for j in 2..=r as usize {
                let e = j as i32 - 1 - m as i32;
                let mut acc = self.zero.clone();
                if let Some(f) = cols[j - 1].get(&e) {
                    acc.add_assign(&nth_derivative(&mut derivs[j - 1], e, f, 1));
                }
                acc.add_assign(&c[j - 1]);
                for (i, bi) in b.iter().enumerate() {
                    if bi.is_zero() {
                        continue;
                    }
                    for l in 0..(m - i) as u32 {
                        let src = e + i as i32 + l as i32;
                        let Some(f) = cols[j - 1].get(&src) else { continue };
                        let coef = falling_binomial(-(i as i64), l);
                        if num_traits::Zero::is_zero(&coef) {
                            continue;
                        }
                        let d = nth_derivative(&mut derivs[j - 1], src, f, l);
                        if d.is_zero() {
                            continue;
                        }
                        acc.add_assign(&(bi * &d).scale(&coef));
                    }
                }
                c[j] = acc;
            }
            let target = self.coefficient(ri - 1 - m as i32)?;
            let bm = target.sub(&c[r as usize]).scale(&inv_r);
            for j in 1..=r as usize {
                let e = j as i32 - 1 - m as i32;
                let v = c[j].add(&bm.scale(&int(j as i64)));
                if !v.is_zero() {
                    cols[j].insert(e, v);
                }
            }
            b.push(bm);
        }
        Ok((1..=r as usize)
            .map(|j| PsiDO {
                zero: self.zero.clone(),
                coeffs: std::mem::take(&mut cols[j]),
                floor: Some(j as i32 - 1 - m_max as i32),
            })
            .collect())
    }

    /// `A^{n/r}` for `n = 1..=n_max`, using `A^{n/r} = A ∘ A^{(n-r)/r}` above `r`.
    pub fn fractional_powers(&self, r: u32, n_max: u32, e_min: i32) -> Result<Vec<Self>> {
        let mut powers = self.root_powers(r, e_min)?;
        powers.truncate(n_max as usize);
        for n in r as usize + 1..=n_max as usize {
            let next = self.compose(&powers[n - 1 - r as usize]);
            powers.push(next);
        }
        Ok(powers)
    }

    /// First exponent and series key where two operators differ, among
    /// exponents both know and coefficient weights up to `upto`.
    pub fn first_difference(&self, other: &Self, upto: u32) -> Option<(i32, Key)> {
        let floor = max_floor(self.floor, other.floor);
        let exps: std::collections::BTreeSet<i32> = self.coeffs.keys().chain(other.coeffs.keys()).copied().collect();
        for e in exps.into_iter().rev() {
            if floor.is_some_and(|f| e < f) {
                continue;
            }
            let a = self.coeffs.get(&e).unwrap_or(&self.zero);
            let b = other.coeffs.get(&e).unwrap_or(&other.zero);
            if let Some(k) = a.first_difference(b, upto) {
                return Some((e, k));
            }
        }
        None
    }

    /// Text form: one `a_e * Dx^e` line per term, descending in `e`, with
    /// coefficients in series JSON.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (e, c) in self.coeffs.iter().rev() {
            let js = serde_json::to_string(&c.to_json()).expect("series serialize");
            out.push_str(&format!("{js} * Dx^{e}\n"));
        }
        if let Some(f) = self.floor {
            out.push_str(&format!("+ O(Dx^{})\n", f - 1));
        }
        out
    }
}

fn nth_derivative<C: Coeff>(cache: &mut BTreeMap<i32, Vec<MSeries<C>>>, e: i32, f: &MSeries<C>, l: u32) -> MSeries<C> {
    let v = cache.entry(e).or_insert_with(|| vec![f.clone()]);
    while v.len() <= l as usize {
        let next = v.last().unwrap().derive(X);
        v.push(next);
    }
    v[l as usize].clone()
}

impl<C: Coeff> fmt::Debug for PsiDO<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (e, c) in self.coeffs.iter().rev() {
            writeln!(f, "[{c:?}] Dx^{e}")?;
        }
        if let Some(fl) = self.floor {
            writeln!(f, "+ O(Dx^{})", fl - 1)?;
        }
        Ok(())
    }
}

/// Convenience: `x^p` as a series in the template's system.
pub fn x_power<C: Coeff>(template: &MSeries<C>, p: u32, c: C) -> MSeries<C> {
    let mut s = template.zero_like();
    s.insert(Key::new(Monomial::var(X, p), 0), c);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{QSeries, VarSystem};

    fn template() -> QSeries {
        QSeries::rational_zero(VarSystem::T { max: 4, exact_x: true }, 6)
    }

    fn x() -> QSeries {
        x_power(&template(), 1, int(1))
    }

    fn dx(k: i32) -> PsiDO<Rational> {
        PsiDO::dx(&template(), k)
    }

    #[test]
    fn compose_examples() {
        let lhs = dx(1).compose(&PsiDO::mult(x()));
        let expected = PsiDO::from_coeffs(&template(), [(1, x()), (0, x_power(&template(), 0, int(1)))], None);
        assert_eq!(lhs, expected);

        let lhs = dx(-1).compose(&PsiDO::mult(x()));
        let expected = PsiDO::from_coeffs(&template(), [(-1, x()), (-2, x_power(&template(), 0, int(-1)))], None);
        assert_eq!(lhs, expected);

        // (∂ + u)(∂ - u) = ∂² + u' - u² with u = x (the ∂ terms cancel)
        let u = PsiDO::mult(x());
        let prod = dx(1).add(&u).compose(&dx(1).sub(&u));
        let expected = PsiDO::from_coeffs(
            &template(),
            [(2, x_power(&template(), 0, int(1))), (0, x_power(&template(), 0, int(-1)).sub(&x_power(&template(), 2, int(1))))],
            None,
        );
        assert_eq!(prod, expected);
    }

    #[test]
    fn positive_part_and_residue() {
        let u = x();
        let v = x_power(&template(), 2, int(3));
        let a = PsiDO::from_coeffs(&template(), [(2, x_power(&template(), 0, int(1))), (0, u.clone()), (-1, v.clone())], None);
        let plus = a.positive_part();
        assert_eq!(plus, PsiDO::from_coeffs(&template(), [(2, x_power(&template(), 0, int(1))), (0, u.clone())], None));
        assert!(dx(-3).positive_part().is_zero());
        assert_eq!(plus.add(&a.sub(&plus)), a);
        let b = dx(1).add(&PsiDO::from_coeffs(&template(), [(-1, u.clone())], None));
        assert_eq!(b.residue().unwrap(), u);
        assert!(dx(2).residue().unwrap().is_zero());
    }

    #[test]
    fn commutator_examples() {
        let c = dx(1).commutator(&PsiDO::mult(x()));
        assert_eq!(c, PsiDO::mult(x_power(&template(), 0, int(1))));
        let a = dx(2).add(&PsiDO::mult(x()));
        assert!(a.commutator(&a).is_zero());
    }

    #[test]
    fn root_of_pure_power() {
        for r in 2..5 {
            let b = dx(r).rth_root(r as u32, -8).unwrap();
            assert_eq!(b.truncate_below(-8), dx(1).truncate_below(-8));
        }
    }

    #[test]
    fn square_root_of_schrodinger() {
        // sqrt(∂² + u) = ∂ + (u/2)∂^{-1} - (u'/4)∂^{-2} + ...
        let u = x_power(&template(), 3, int(1));
        let a = dx(2).add(&PsiDO::mult(u.clone()));
        let b = a.rth_root(2, -6).unwrap();
        assert_eq!(b.coefficient(0).unwrap(), template());
        assert_eq!(b.coefficient(-1).unwrap(), u.scale(&ratio(1, 2)));
        assert_eq!(b.coefficient(-2).unwrap(), u.derive(X).scale(&ratio(-1, 4)));
        let sq = b.compose(&b);
        assert_eq!(sq.first_difference(&a, 6), None);
        assert!(sq.floor().unwrap() <= -4);
    }

    #[test]
    fn root_of_initial_operator() {
        for r in 2..5u32 {
            let lam = x().scale(&int(r as i64)).shift_lambda(-(r as i32));
            let a = dx(r as i32).add(&PsiDO::mult(lam));
            let powers = a.root_powers(r, -10).unwrap();
            let b = &powers[0];
            let lead = x().shift_lambda(-(r as i32));
            assert_eq!(b.coefficient(1 - r as i32).unwrap(), lead);
            for m in 0..(r as i32 - 1) {
                assert!(b.coefficient(-m).unwrap().is_zero());
            }
            assert_eq!(powers[r as usize - 1].first_difference(&a, 6), None);
            let mut p = b.clone();
            for _ in 1..r {
                p = p.compose(b);
            }
            assert_eq!(p.first_difference(&a, 6), None);
        }
    }

    #[test]
    fn root_rejects_non_monic() {
        let a = dx(2).scale(&int(2));
        assert!(matches!(a.rth_root(2, -4), Err(Error::NotMonic { .. })));
        assert!(matches!(dx(3).rth_root(2, -4), Err(Error::NotMonic { .. })));
    }

    #[test]
    fn initial_commutator_seed() {
        for r in 2..5u32 {
            let lam = x().scale(&int(r as i64)).shift_lambda(-(r as i32));
            let l = dx(r as i32).add(&PsiDO::mult(lam));
            let b = l.rth_root(r, -8).unwrap();
            let c = b.positive_part().commutator(&l);
            let expected = x_power(&template(), 0, int(r as i64)).shift_lambda(-(r as i32));
            assert_eq!(c, PsiDO::mult(expected));
        }
    }

    #[test]
    fn residue_rejects_shallow_window() {
        let b = dx(2).rth_root(2, 0).unwrap();
        assert!(matches!(b.residue(), Err(Error::OutsideWindow { .. })));
    }
}
