//! Truncated multivariate power series with Laurent-in-`λ` coefficients.
//!
//! A series lives in one of two variable systems: the hierarchy times
//! `T_1..T_N`, or the correlator variables `t^a_d` together with the boundary
//! variable `s`. Both carry the weight `wt(T_k) = wt(t^a_d) = k` where
//! `k = a + 1 + r d`, and `wt(s) = r`. A series is truncated at a weight cap
//! and additionally records the weight up to which its terms are exact; the
//! two only differ after operations such as [`MSeries::derive`] that shift
//! weight downwards.
//!
//! Inside the hierarchy solver the variable `x = T_1` is kept exact: the
//! truncation ignores its degree, so `∂/∂x` never loses precision (see
//! [`VarSystem::T`]). Jets in `T_{≥2}` then carry honest polynomials in `x`.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::coeffring::{int, Coeff, Rational};
use crate::error::{Error, Result};

/// Maximum number of variables in a system.
pub const MAX_VARS: usize = 16;

/// The variables a series is written in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VarSystem {
    /// `T_1..T_max`. With `exact_x`, `T_1` does not count towards truncation.
    T { max: u32, exact_x: bool },
    /// `t^a_d` for `0 <= a <= r-1` with `a + 1 + r d <= max_weight`, then `s`.
    Ts { r: u32, max_weight: u32 },
}

/// A single variable, independent of its position in a system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    T(u32),
    /// `t^a_d`
    Ts { a: u32, d: u32 },
    S,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T(n) => write!(f, "T{n}"),
            Var::Ts { a, d } => write!(f, "t{a}_{d}"),
            Var::S => write!(f, "s"),
        }
    }
}

impl VarSystem {
    pub fn t_vars(max: u32) -> Self {
        VarSystem::T { max, exact_x: false }
    }

    pub fn ts_vars(r: u32, max_weight: u32) -> Self {
        VarSystem::Ts { r, max_weight }
    }

    pub fn len(&self) -> usize {
        match *self {
            VarSystem::T { max, .. } => max as usize,
            VarSystem::Ts { max_weight, .. } => max_weight as usize + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.len() > MAX_VARS {
            return Err(Error::Unsupported(format!(
                "{} variables requested, at most {MAX_VARS} supported",
                self.len()
            )));
        }
        if let VarSystem::Ts { r, .. } = self {
            if *r < 2 {
                return Err(Error::Unsupported("r must be at least 2".into()));
            }
        }
        Ok(())
    }

    /// Variable stored at position `i`.
    pub fn var(&self, i: usize) -> Var {
        match *self {
            VarSystem::T { .. } => Var::T(i as u32 + 1),
            VarSystem::Ts { r, max_weight } => {
                if i == max_weight as usize {
                    Var::S
                } else {
                    let k = i as u32 + 1;
                    Var::Ts { a: (k - 1) % r, d: (k - 1) / r }
                }
            }
        }
    }

    /// Position of `v`, if it belongs to this system.
    pub fn index(&self, v: Var) -> Option<usize> {
        let i = match (*self, v) {
            (VarSystem::T { .. }, Var::T(n)) if n >= 1 => n as usize - 1,
            (VarSystem::Ts { r, .. }, Var::Ts { a, d }) if a < r => (a + 1 + r * d) as usize - 1,
            (VarSystem::Ts { max_weight, .. }, Var::S) => max_weight as usize,
            _ => return None,
        };
        (i < self.len()).then_some(i)
    }

    /// Grading weight of the variable at position `i`.
    pub fn weight(&self, i: usize) -> u32 {
        match *self {
            VarSystem::T { .. } => i as u32 + 1,
            VarSystem::Ts { r, max_weight } => {
                if i == max_weight as usize {
                    r
                } else {
                    i as u32 + 1
                }
            }
        }
    }

    /// Weight counted by truncation; differs from [`Self::weight`] only for
    /// `x = T_1` in exact-`x` mode.
    pub fn trunc_weight(&self, i: usize) -> u32 {
        match *self {
            VarSystem::T { exact_x: true, .. } if i == 0 => 0,
            _ => self.weight(i),
        }
    }

    fn trunc_table(&self) -> [u32; MAX_VARS] {
        let mut t = [0; MAX_VARS];
        for (i, w) in t.iter_mut().enumerate().take(self.len()) {
            *w = self.trunc_weight(i);
        }
        t
    }

    pub fn name(&self, i: usize) -> String {
        self.var(i).to_string()
    }

    pub fn index_of_name(&self, name: &str) -> Option<usize> {
        (0..self.len()).find(|&i| self.name(i) == name)
    }
}

/// Exponent vector packed one byte per variable.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Monomial(u128);

const HIGH_BITS: u128 = 0x8080_8080_8080_8080_8080_8080_8080_8080;

impl Monomial {
    pub const ONE: Monomial = Monomial(0);

    pub fn from_exponents(exps: &[u32]) -> Self {
        assert!(exps.len() <= MAX_VARS);
        let mut m = Monomial::ONE;
        for (i, &e) in exps.iter().enumerate() {
            m = m.with_exp(i, e);
        }
        m
    }

    pub fn var(i: usize, e: u32) -> Self {
        Monomial::ONE.with_exp(i, e)
    }

    #[inline]
    pub fn exp(self, i: usize) -> u32 {
        ((self.0 >> (8 * i)) & 0xff) as u32
    }

    #[inline]
    pub fn with_exp(self, i: usize, e: u32) -> Self {
        assert!(e < 256, "exponent overflow");
        let shift = 8 * i;
        Monomial((self.0 & !(0xffu128 << shift)) | ((e as u128) << shift))
    }

    #[inline]
    pub fn mul(self, rhs: Self) -> Self {
        if (self.0 | rhs.0) & HIGH_BITS == 0 {
            Monomial(self.0 + rhs.0)
        } else {
            let mut m = self;
            for i in 0..MAX_VARS {
                m = m.with_exp(i, self.exp(i) + rhs.exp(i));
            }
            m
        }
    }

    /// `self / rhs` if `rhs` divides `self`.
    pub fn div(self, rhs: Self) -> Option<Self> {
        let mut m = Monomial::ONE;
        for i in 0..MAX_VARS {
            let (a, b) = (self.exp(i), rhs.exp(i));
            if b > a {
                return None;
            }
            m = m.with_exp(i, a - b);
        }
        Some(m)
    }

    pub fn exponents(self, n: usize) -> Vec<u32> {
        (0..n).map(|i| self.exp(i)).collect()
    }

    #[inline]
    fn weight_with(self, table: &[u32; MAX_VARS]) -> u32 {
        let mut w = 0;
        let mut bits = self.0;
        let mut i = 0;
        while bits != 0 {
            w += (bits & 0xff) as u32 * table[i];
            bits >>= 8;
            i += 1;
        }
        w
    }

    pub fn weight(self, vars: &VarSystem) -> u32 {
        (0..vars.len()).map(|i| self.exp(i) * vars.weight(i)).sum()
    }

    pub fn trunc_weight(self, vars: &VarSystem) -> u32 {
        self.weight_with(&vars.trunc_table())
    }

    pub fn degree(self) -> u32 {
        (0..MAX_VARS).map(|i| self.exp(i)).sum()
    }

    pub fn display(self, vars: &VarSystem) -> String {
        let parts: Vec<String> = (0..vars.len())
            .filter(|&i| self.exp(i) > 0)
            .map(|i| match self.exp(i) {
                1 => vars.name(i),
                e => format!("{}^{e}", vars.name(i)),
            })
            .collect();
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join("*")
        }
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let exps: Vec<u32> = (0..MAX_VARS).map(|i| self.exp(i)).collect();
        let last = exps.iter().rposition(|&e| e > 0).map_or(0, |p| p + 1);
        write!(f, "Monomial({:?})", &exps[..last])
    }
}

/// Storage key: a monomial together with its `λ`-exponent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key {
    pub mono: Monomial,
    pub lambda: i32,
}

impl Key {
    pub fn new(mono: Monomial, lambda: i32) -> Self {
        Key { mono, lambda }
    }

    #[inline]
    fn mul(self, rhs: Key) -> Key {
        Key { mono: self.mono.mul(rhs.mono), lambda: self.lambda + rhs.lambda }
    }
}

/// Finitely supported Laurent polynomial in `λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LaurentSeries<C> {
    coeffs: BTreeMap<i32, C>,
}

impl<C: Coeff> LaurentSeries<C> {
    pub fn new() -> Self {
        LaurentSeries { coeffs: BTreeMap::new() }
    }

    pub fn insert(&mut self, lambda: i32, c: C) {
        if c.is_zero() {
            self.coeffs.remove(&lambda);
        } else {
            self.coeffs.insert(lambda, c);
        }
    }

    pub fn get(&self, lambda: i32) -> Option<&C> {
        self.coeffs.get(&lambda)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Lowest and highest `λ`-exponent present.
    pub fn window(&self) -> Option<(i32, i32)> {
        Some((*self.coeffs.keys().next()?, *self.coeffs.keys().next_back()?))
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, &C)> {
        self.coeffs.iter().map(|(&e, c)| (e, c))
    }
}

impl<C: Coeff> Default for LaurentSeries<C> {
    fn default() -> Self {
        Self::new()
    }
}

/// Truncated power series over a [`VarSystem`] with `λ`-Laurent coefficients.
#[derive(Clone)]
pub struct MSeries<C> {
    vars: VarSystem,
    weight: u32,
    reliable: u32,
    one: C,
    terms: BTreeMap<Key, C>,
}

impl<C: Coeff> PartialEq for MSeries<C> {
    fn eq(&self, other: &Self) -> bool {
        self.vars == other.vars && self.terms == other.terms
    }
}

impl<C: Coeff> MSeries<C> {
    /// The zero series; `one` fixes the coefficient ring.
    pub fn zero(vars: VarSystem, weight: u32, one: C) -> Self {
        MSeries { vars, weight, reliable: weight, one, terms: BTreeMap::new() }
    }

    /// `c` times the empty monomial.
    pub fn constant(vars: VarSystem, weight: u32, c: C) -> Self {
        let one = c.embed(&Rational::one());
        let mut s = Self::zero(vars, weight, one);
        s.insert(Key::new(Monomial::ONE, 0), c);
        s
    }

    /// `c λ^lambda v^power`.
    pub fn monomial(vars: VarSystem, weight: u32, var: Var, power: u32, lambda: i32, c: C) -> Result<Self> {
        let i = vars.index(var).ok_or_else(|| Error::Mismatch(format!("{var} not in {vars:?}")))?;
        let one = c.embed(&Rational::one());
        let mut s = Self::zero(vars, weight, one);
        s.insert(Key::new(Monomial::var(i, power), lambda), c);
        Ok(s)
    }

    /// Zero series sharing shape and ring with `self`.
    pub fn zero_like(&self) -> Self {
        MSeries {
            vars: self.vars,
            weight: self.weight,
            reliable: self.reliable,
            one: self.one.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn from_terms(vars: VarSystem, weight: u32, one: C, terms: impl IntoIterator<Item = (Key, C)>) -> Self {
        let mut s = Self::zero(vars, weight, one);
        for (k, c) in terms {
            s.add_term(k, &c);
        }
        s
    }

    pub fn vars(&self) -> &VarSystem {
        &self.vars
    }

    /// Truncation cap.
    pub fn weight(&self) -> u32 {
        self.weight
    }

    /// Weight up to which the stored terms are exact.
    pub fn reliable(&self) -> u32 {
        self.reliable
    }

    pub fn one(&self) -> &C {
        &self.one
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Key, &C)> {
        self.terms.iter()
    }

    pub fn into_terms(self) -> impl Iterator<Item = (Key, C)> {
        self.terms.into_iter()
    }

    fn fits(&self, mono: Monomial) -> bool {
        mono.trunc_weight(&self.vars) <= self.weight
    }

    /// Inserts, replacing; drops zeros and anything above the cap.
    pub fn insert(&mut self, key: Key, c: C) {
        if c.is_zero() || !self.fits(key.mono) {
            self.terms.remove(&key);
        } else {
            self.terms.insert(key, c);
        }
    }

    /// Adds `c` to the coefficient at `key`.
    pub fn add_term(&mut self, key: Key, c: &C) {
        if c.is_zero() || !self.fits(key.mono) {
            return;
        }
        match self.terms.get_mut(&key) {
            Some(existing) => {
                existing.add_assign(c);
                if existing.is_zero() {
                    self.terms.remove(&key);
                }
            }
            None => {
                self.terms.insert(key, c.clone());
            }
        }
    }

    pub fn get(&self, key: &Key) -> Option<&C> {
        self.terms.get(key)
    }

    fn check_compatible(&self, rhs: &Self) -> Result<()> {
        if self.vars != rhs.vars {
            return Err(Error::Mismatch(format!("{:?} vs {:?}", self.vars, rhs.vars)));
        }
        Ok(())
    }

    /// Checked product.
    pub fn multiply(&self, rhs: &Self) -> Result<Self> {
        self.check_compatible(rhs)?;
        Ok(self.mul_unchecked(rhs))
    }

    fn mul_unchecked(&self, rhs: &Self) -> Self {
        let cap = self.weight.min(rhs.weight);
        let table = self.vars.trunc_table();
        let (a, b) = (sorted_by_weight(self, &table, cap), sorted_by_weight(rhs, &table, cap));
        let mut acc: FxHashMap<Key, C> = FxHashMap::default();
        for (wa, ka, ca) in &a {
            for (wb, kb, cb) in &b {
                if wa + wb > cap {
                    break;
                }
                let p = ca.mul(cb);
                match acc.entry(ka.mul(*kb)) {
                    std::collections::hash_map::Entry::Occupied(mut e) => e.get_mut().add_assign(&p),
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(p);
                    }
                }
            }
        }
        MSeries {
            vars: self.vars,
            weight: cap,
            reliable: self.reliable.min(rhs.reliable).min(cap),
            one: self.one.clone(),
            terms: acc.into_iter().filter(|(_, c)| !c.is_zero()).collect(),
        }
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.vars, rhs.vars, "adding series over different variables");
        let mut out = self.clone();
        out.weight = self.weight.min(rhs.weight);
        out.reliable = self.reliable.min(rhs.reliable).min(out.weight);
        if out.weight < self.weight {
            out = out.truncate(out.weight);
        }
        for (k, c) in &rhs.terms {
            out.add_term(*k, c);
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn add_assign(&mut self, rhs: &Self) {
        assert_eq!(self.vars, rhs.vars, "adding series over different variables");
        if rhs.weight < self.weight {
            *self = self.truncate(rhs.weight);
        }
        self.reliable = self.reliable.min(rhs.reliable);
        for (k, c) in &rhs.terms {
            self.add_term(*k, c);
        }
    }

    pub fn neg(&self) -> Self {
        self.map_terms(|_, c| Some(c.neg()))
    }

    pub fn scale(&self, s: &Rational) -> Self {
        if Zero::is_zero(s) {
            return self.zero_like();
        }
        self.map_terms(|_, c| Some(c.scale(s)))
    }

    pub fn scale_by(&self, s: &C) -> Self {
        self.map_terms(|_, c| Some(c.mul(s)))
    }

    /// Multiplies by `λ^k`.
    pub fn shift_lambda(&self, k: i32) -> Self {
        let mut out = self.zero_like();
        out.terms = self.terms.iter().map(|(key, c)| (Key::new(key.mono, key.lambda + k), c.clone())).collect();
        out
    }

    /// Multiplies by `v^power`, truncating.
    pub fn mul_var(&self, i: usize, power: u32) -> Self {
        let m = Monomial::var(i, power);
        let mut out = self.zero_like();
        for (k, c) in &self.terms {
            out.insert(Key::new(k.mono.mul(m), k.lambda), c.clone());
        }
        out
    }

    fn map_terms(&self, mut f: impl FnMut(&Key, &C) -> Option<C>) -> Self {
        let mut out = self.zero_like();
        for (k, c) in &self.terms {
            if let Some(v) = f(k, c) {
                out.insert(*k, v);
            }
        }
        out
    }

    /// Coefficient-wise map into another ring.
    pub fn map_coeffs<D: Coeff>(&self, one: D, f: impl Fn(&C) -> D) -> MSeries<D> {
        let mut out = MSeries::zero(self.vars, self.weight, one);
        out.reliable = self.reliable;
        for (k, c) in &self.terms {
            out.insert(*k, f(c));
        }
        out
    }

    /// Lowers the cap (and reliability) to `w`.
    pub fn truncate(&self, w: u32) -> Self {
        let mut out = self.zero_like();
        out.weight = self.weight.min(w);
        out.reliable = self.reliable.min(out.weight);
        let table = self.vars.trunc_table();
        out.terms = self
            .terms
            .iter()
            .filter(|(k, _)| k.mono.weight_with(&table) <= out.weight)
            .map(|(k, c)| (*k, c.clone()))
            .collect();
        out
    }

    /// Terms whose truncation weight is exactly `w`.
    pub fn homogeneous_part(&self, w: u32) -> Self {
        let table = self.vars.trunc_table();
        let mut out = self.zero_like();
        out.terms = self
            .terms
            .iter()
            .filter(|(k, _)| k.mono.weight_with(&table) == w)
            .map(|(k, c)| (*k, c.clone()))
            .collect();
        out
    }

    /// Re-expresses the series in a system with the same variable layout but a
    /// different truncation rule (e.g. switching exact-`x` off).
    pub fn retruncate(&self, vars: VarSystem, weight: u32) -> Result<Self> {
        if vars.len() < self.vars.len() {
            let needed = self.terms.keys().any(|k| (vars.len()..self.vars.len()).any(|i| k.mono.exp(i) > 0));
            if needed {
                return Err(Error::Mismatch(format!("cannot drop variables: {:?} -> {vars:?}", self.vars)));
            }
        }
        for i in 0..vars.len().min(self.vars.len()) {
            if vars.var(i) != self.vars.var(i) {
                return Err(Error::Mismatch(format!("{:?} vs {vars:?}", self.vars)));
            }
        }
        // A term is exact if its new weight is within the old reliable range.
        let reliable = match (self.vars, vars) {
            (VarSystem::T { exact_x: true, .. }, VarSystem::T { exact_x: false, .. }) => self.reliable.min(weight),
            (a, b) if a == b => self.reliable.min(weight),
            _ => self.reliable.min(weight),
        };
        let mut out = MSeries::zero(vars, weight, self.one.clone());
        out.reliable = reliable;
        for (k, c) in &self.terms {
            out.insert(*k, c.clone());
        }
        Ok(out)
    }

    /// Partial derivative with respect to the variable at position `i`.
    pub fn derive(&self, i: usize) -> Self {
        let mut out = self.zero_like();
        for (k, c) in &self.terms {
            let e = k.mono.exp(i);
            if e > 0 {
                out.terms.insert(Key::new(k.mono.with_exp(i, e - 1), k.lambda), c.scale(&int(e as i64)));
            }
        }
        out.reliable = self.reliable.saturating_sub(self.vars.trunc_weight(i));
        out
    }

    /// `∂/∂v` by variable.
    pub fn derive_var(&self, v: Var) -> Result<Self> {
        let i = self.vars.index(v).ok_or_else(|| Error::Mismatch(format!("{v} not in {:?}", self.vars)))?;
        Ok(self.derive(i))
    }

    /// Exact coefficient of `mono λ^lambda`; rejects monomials beyond the
    /// reliable weight.
    pub fn coefficient(&self, mono: Monomial, lambda: i32) -> Result<C> {
        let w = mono.trunc_weight(&self.vars);
        if w > self.reliable {
            return Err(Error::BeyondPrecision { requested: w, reliable: self.reliable });
        }
        Ok(self.terms.get(&Key::new(mono, lambda)).cloned().unwrap_or_else(|| self.one.embed(&Rational::zero())))
    }

    /// All `λ`-powers at one monomial.
    pub fn laurent(&self, mono: Monomial) -> LaurentSeries<C> {
        let mut l = LaurentSeries::new();
        let lo = Key::new(mono, i32::MIN);
        let hi = Key::new(mono, i32::MAX);
        for (k, c) in self.terms.range(lo..=hi) {
            l.insert(k.lambda, c.clone());
        }
        l
    }

    /// The `λ^k` part, returned `λ`-free.
    pub fn lambda_part(&self, k: i32) -> Self {
        let mut out = self.zero_like();
        out.terms =
            self.terms.iter().filter(|(key, _)| key.lambda == k).map(|(key, c)| (Key::new(key.mono, 0), c.clone())).collect();
        out
    }

    /// Range of `λ`-exponents present.
    pub fn lambda_window(&self) -> Option<(i32, i32)> {
        let lo = self.terms.keys().map(|k| k.lambda).min()?;
        let hi = self.terms.keys().map(|k| k.lambda).max()?;
        Some((lo, hi))
    }

    /// Sets every variable in `zero_vars` to zero.
    pub fn restrict_zero(&self, zero_vars: &[usize]) -> Self {
        self.map_terms_keyed(|k| zero_vars.iter().all(|&i| k.mono.exp(i) == 0))
    }

    fn map_terms_keyed(&self, keep: impl Fn(&Key) -> bool) -> Self {
        let mut out = self.zero_like();
        out.terms = self.terms.iter().filter(|(k, _)| keep(k)).map(|(k, c)| (*k, c.clone())).collect();
        out
    }

    /// First monomial (in key order) where the two series differ, comparing
    /// only terms up to weight `upto`.
    pub fn first_difference(&self, other: &Self, upto: u32) -> Option<Key> {
        let table = self.vars.trunc_table();
        let diff = self.sub(other);
        diff.terms.keys().find(|k| k.mono.weight_with(&table) <= upto).copied()
    }

    /// Equality on all terms of truncation weight at most `upto`.
    pub fn eq_upto(&self, other: &Self, upto: u32) -> bool {
        self.first_difference(other, upto).is_none()
    }

    fn has_unit_constant(&self) -> bool {
        let one = &self.one;
        let constant: Vec<_> = self.terms.iter().filter(|(k, _)| k.mono == Monomial::ONE).collect();
        constant.len() == 1 && constant[0].0.lambda == 0 && constant[0].1 == one
    }

    /// `log f` for `f = 1 + h`, summing `Σ (-1)^{m+1} h^m / m` until the
    /// powers of `h` truncate away.
    pub fn log_series(&self) -> Result<Self> {
        if !self.has_unit_constant() {
            return Err(Error::LogDomain("constant term is not 1".into()));
        }
        let mut h = self.clone();
        h.terms.remove(&Key::new(Monomial::ONE, 0));
        let table = self.vars.trunc_table();
        if h.terms.keys().any(|k| k.mono.weight_with(&table) == 0) {
            return Err(Error::LogDomain("h has terms of truncation weight 0; the series would not terminate".into()));
        }
        let mut out = self.zero_like();
        let mut power = h.clone();
        let mut m = 1i64;
        while !power.is_zero() {
            let c = crate::coeffring::ratio(if m % 2 == 1 { 1 } else { -1 }, m);
            out.add_assign(&power.scale(&c));
            power = power.mul_unchecked(&h);
            m += 1;
        }
        Ok(out)
    }

    /// `exp h` for `h` without terms of truncation weight 0.
    pub fn exp_series(&self) -> Result<Self> {
        let table = self.vars.trunc_table();
        if self.terms.keys().any(|k| k.mono.weight_with(&table) == 0) {
            return Err(Error::LogDomain("exp needs a series without constant terms".into()));
        }
        let mut out = MSeries::constant(self.vars, self.weight, self.one.clone());
        out.reliable = self.reliable;
        let mut power = out.clone();
        let mut m = 1i64;
        loop {
            power = power.mul_unchecked(self).scale(&crate::coeffring::ratio(1, m));
            if power.is_zero() {
                break;
            }
            out.add_assign(&power);
            m += 1;
        }
        Ok(out)
    }

    /// Applies a linear substitution of variables.
    pub fn substitute(&self, sub: &Substitution<C>) -> Result<Self> {
        if sub.source != self.vars {
            return Err(Error::Mismatch(format!("substitution expects {:?}, series is {:?}", sub.source, self.vars)));
        }
        if matches!(self.vars, VarSystem::T { exact_x: true, .. }) && sub.target != self.vars {
            return Err(Error::Mismatch("truncate exact-x series before changing variables".into()));
        }
        let mut images: Vec<MSeries<C>> = Vec::with_capacity(self.vars.len());
        for i in 0..self.vars.len() {
            let img = match &sub.rules[i] {
                Some(lin) => {
                    let mut s = MSeries::zero(sub.target, self.weight, self.one.clone());
                    for (j, c) in lin {
                        s.add_term(Key::new(Monomial::var(*j, 1), 0), c);
                    }
                    s
                }
                None => {
                    let j = sub.target.index(self.vars.var(i)).ok_or_else(|| {
                        Error::Mismatch(format!("no rule for {} and it is absent from the target", self.vars.name(i)))
                    })?;
                    MSeries::from_terms(sub.target, self.weight, self.one.clone(), [(Key::new(Monomial::var(j, 1), 0), self.one.clone())])
                }
            };
            images.push(img);
        }
        let mut powers: Vec<Vec<MSeries<C>>> = images
            .iter()
            .map(|img| vec![MSeries::constant(sub.target, self.weight, self.one.clone()), img.clone()])
            .collect();
        let mut out = MSeries::zero(sub.target, self.weight, self.one.clone());
        out.reliable = self.reliable;
        for (k, c) in &self.terms {
            let mut term = MSeries::constant(sub.target, self.weight, c.clone()).shift_lambda(k.lambda);
            for (i, p) in powers.iter_mut().enumerate() {
                let e = k.mono.exp(i) as usize;
                if e == 0 {
                    continue;
                }
                while p.len() <= e {
                    let next = p.last().unwrap().mul_unchecked(&images[i]);
                    p.push(next);
                }
                term = term.mul_unchecked(&p[e]);
            }
            out.add_assign(&term);
        }
        out.reliable = self.reliable;
        Ok(out)
    }

    pub fn to_json(&self) -> SeriesJson {
        SeriesJson {
            vars: self.vars,
            w: self.weight,
            reliable: self.reliable,
            terms: self
                .terms
                .iter()
                .map(|(k, c)| TermJson {
                    expo: (0..self.vars.len())
                        .filter(|&i| k.mono.exp(i) > 0)
                        .map(|i| (self.vars.name(i), k.mono.exp(i)))
                        .collect(),
                    lambda: k.lambda,
                    coeff: c.to_string(),
                })
                .collect(),
        }
    }

    pub fn from_json(json: &SeriesJson, one: C) -> Result<Self> {
        json.vars.validate()?;
        let mut s = MSeries::zero(json.vars, json.w, one.clone());
        s.reliable = json.reliable.min(json.w);
        for t in &json.terms {
            let mut m = Monomial::ONE;
            for (name, e) in &t.expo {
                let i = json.vars.index_of_name(name).ok_or_else(|| Error::Parse(format!("unknown variable {name}")))?;
                m = m.with_exp(i, *e);
            }
            let c = C::parse_like(&one, &t.coeff)?;
            s.add_term(Key::new(m, t.lambda), &c);
        }
        Ok(s)
    }
}

fn sorted_by_weight<'a, C>(s: &'a MSeries<C>, table: &[u32; MAX_VARS], cap: u32) -> Vec<(u32, Key, &'a C)> {
    let mut v: Vec<(u32, Key, &C)> = s
        .terms
        .iter()
        .map(|(k, c)| (k.mono.weight_with(table), *k, c))
        .filter(|(w, _, _)| *w <= cap)
        .collect();
    v.sort_by_key(|t| t.0);
    v
}

impl<C: Coeff> fmt::Debug for MSeries<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(k, c)| {
                let lam = if k.lambda == 0 { String::new() } else { format!("λ^{}*", k.lambda) };
                format!("({c})*{lam}{}", k.mono.display(&self.vars))
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl<C: Coeff> std::ops::Mul for &MSeries<C> {
    type Output = MSeries<C>;

    fn mul(self, rhs: Self) -> MSeries<C> {
        assert_eq!(self.vars, rhs.vars, "multiplying series over different variables");
        self.mul_unchecked(rhs)
    }
}

impl<C: Coeff> std::ops::Add for &MSeries<C> {
    type Output = MSeries<C>;

    fn add(self, rhs: Self) -> MSeries<C> {
        MSeries::add(self, rhs)
    }
}

impl<C: Coeff> std::ops::Sub for &MSeries<C> {
    type Output = MSeries<C>;

    fn sub(self, rhs: Self) -> MSeries<C> {
        MSeries::sub(self, rhs)
    }
}

/// Linear change of variables between two systems.
///
/// `rules[i]`, when present, is the image of source variable `i` as a list of
/// `(target index, scalar)` pairs; absent rules map a variable to itself.
#[derive(Clone, Debug)]
pub struct Substitution<C> {
    source: VarSystem,
    target: VarSystem,
    rules: Vec<Option<Vec<(usize, C)>>>,
}

impl<C: Coeff> Substitution<C> {
    pub fn new(source: VarSystem, target: VarSystem) -> Self {
        Substitution { source, target, rules: vec![None; source.len()] }
    }

    /// Sets the image of `from` to `Σ c_j · to_j`. Every target variable must
    /// carry the same weight as `from`.
    pub fn rule(&mut self, from: Var, image: Vec<(Var, C)>) -> Result<&mut Self> {
        let i = self.source.index(from).ok_or_else(|| Error::Mismatch(format!("{from} not in source")))?;
        let w = self.source.weight(i);
        let mut lin = Vec::with_capacity(image.len());
        for (v, c) in image {
            let j = self.target.index(v).ok_or_else(|| Error::Mismatch(format!("{v} not in target")))?;
            if self.target.weight(j) != w {
                return Err(Error::WeightIncompatible {
                    var: from.to_string(),
                    detail: format!("{v} has weight {} but {from} has weight {w}", self.target.weight(j)),
                });
            }
            lin.push((j, c));
        }
        self.rules[i] = Some(lin);
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermJson {
    pub expo: BTreeMap<String, u32>,
    pub lambda: i32,
    pub coeff: String,
}

/// JSON form `{vars, W, terms: [{expo, lambda, coeff}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesJson {
    pub vars: VarSystem,
    #[serde(rename = "W")]
    pub w: u32,
    pub reliable: u32,
    pub terms: Vec<TermJson>,
}

/// Convenience for the common rational case.
pub type QSeries = MSeries<Rational>;

impl QSeries {
    pub fn rational_zero(vars: VarSystem, weight: u32) -> Self {
        MSeries::zero(vars, weight, Rational::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffring::{q_power, ratio, RingElem};

    fn tvars(n: u32) -> VarSystem {
        VarSystem::t_vars(n)
    }

    fn t(n: u32, e: u32, w: u32) -> QSeries {
        MSeries::monomial(tvars(8), w, Var::T(n), e, 0, int(1)).unwrap()
    }

    fn one(w: u32) -> QSeries {
        MSeries::constant(tvars(8), w, int(1))
    }

    #[test]
    fn weights_and_bijection() {
        let ts = VarSystem::ts_vars(3, 9);
        assert_eq!(ts.len(), 10);
        assert_eq!(ts.var(4), Var::Ts { a: 1, d: 1 });
        assert_eq!(ts.weight(4), 5);
        assert_eq!(ts.var(2), Var::Ts { a: 2, d: 0 });
        assert_eq!(ts.var(9), Var::S);
        assert_eq!(ts.weight(9), 3);
        for k in 1..=9u32 {
            let i = k as usize - 1;
            let Var::Ts { a, d } = ts.var(i) else { panic!() };
            assert_eq!(a + 1 + 3 * d, k);
            assert_eq!(a == 2, k % 3 == 0);
            assert_eq!(ts.index(ts.var(i)), Some(i));
        }
    }

    #[test]
    fn multiply_examples() {
        let w = 6;
        let a = &one(w) + &t(1, 1, w);
        let b = &one(w) - &t(1, 1, w);
        assert_eq!(&a * &b, &one(w) - &t(1, 2, w));

        let x = t(2, 1, w).shift_lambda(-2);
        let y = t(3, 1, w).shift_lambda(3);
        let prod = &x * &y;
        assert_eq!(prod.len(), 1);
        let m = Monomial::from_exponents(&[0, 1, 1]);
        assert_eq!(prod.coefficient(m, 1).unwrap(), int(1));

        let top = t(1, w, w);
        assert!((&top * &t(1, 1, w)).is_zero());
    }

    #[test]
    fn multiply_rejects_mismatch() {
        let a = one(4);
        let b = MSeries::constant(VarSystem::ts_vars(2, 4), 4, int(1));
        assert!(matches!(a.multiply(&b), Err(Error::Mismatch(_))));
    }

    #[test]
    fn derive_examples() {
        let w = 8;
        assert_eq!(t(2, 2, w).derive(1), t(2, 1, w).scale(&int(2)));
        assert_eq!((&t(1, 1, w) * &t(3, 1, w)).derive(2), t(1, 1, w));
        assert!(one(w).derive(3).is_zero());
        assert_eq!(t(2, 2, w).derive(1).reliable(), w - 2);
    }

    #[test]
    fn exact_x_keeps_precision() {
        let vars = VarSystem::T { max: 4, exact_x: true };
        let x = MSeries::monomial(vars, 4, Var::T(1), 30, 0, int(1)).unwrap();
        assert_eq!(x.len(), 1);
        assert_eq!(x.derive(0).reliable(), 4);
        assert_eq!(x.derive(0).coefficient(Monomial::var(0, 29), 0).unwrap(), int(30));
    }

    #[test]
    fn substitute_examples() {
        let ts = VarSystem::ts_vars(3, 6);
        let c = q_power(-3, 3).scale(&ratio(1, 10));
        let f = MSeries::monomial(VarSystem::t_vars(6), 6, Var::T(5), 1, 0, RingElem::from_rational(3, int(1))).unwrap();
        let mut sub = Substitution::new(VarSystem::t_vars(6), ts);
        for k in 1..=6u32 {
            let v = ts.var(k as usize - 1);
            let coeff = if k == 5 { c.clone() } else { RingElem::from_rational(3, int(1)) };
            sub.rule(Var::T(k), vec![(v, coeff)]).unwrap();
        }
        let g = f.substitute(&sub).unwrap();
        assert_eq!(g.coefficient(Monomial::var(4, 1), 0).unwrap(), c);

        // t^{r-1}_0 -> (t^{r-1}_0 - r s)/sqrt(-r)
        let r = 3;
        let t20 = Var::Ts { a: 2, d: 0 };
        let f = MSeries::monomial(ts, 6, t20, 1, 0, RingElem::from_rational(r, int(1))).unwrap();
        let inv_sqrt = q_power(-(r as i64 + 1), r);
        let mut shift = Substitution::new(ts, ts);
        shift.rule(t20, vec![(t20, inv_sqrt.clone()), (Var::S, inv_sqrt.scale(&int(-3)))]).unwrap();
        let g = f.substitute(&shift).unwrap();
        assert_eq!(g.coefficient(Monomial::var(2, 1), 0).unwrap(), inv_sqrt);
        assert_eq!(g.coefficient(Monomial::var(6, 1), 0).unwrap(), inv_sqrt.scale(&int(-3)));

        let ident = Substitution::new(ts, ts);
        assert_eq!(g.substitute(&ident).unwrap(), g);
    }

    #[test]
    fn substitute_rejects_weight_mismatch() {
        let ts = VarSystem::ts_vars(3, 6);
        let mut sub: Substitution<Rational> = Substitution::new(VarSystem::t_vars(6), ts);
        let err = sub.rule(Var::T(5), vec![(Var::Ts { a: 0, d: 1 }, int(1))]).unwrap_err();
        assert!(matches!(err, Error::WeightIncompatible { .. }));
    }

    #[test]
    fn log_examples() {
        let w = 8;
        let f = &one(w) + &t(2, 1, w);
        let lg = f.log_series().unwrap();
        for e in 1..=4u32 {
            let sign = if e % 2 == 1 { 1 } else { -1 };
            assert_eq!(lg.coefficient(Monomial::var(1, e), 0).unwrap(), ratio(sign, e as i64));
        }
        assert!(one(w).log_series().unwrap().is_zero());
        let e3 = t(3, 1, w).exp_series().unwrap();
        assert_eq!(e3.log_series().unwrap(), t(3, 1, w));
        assert!(matches!(t(3, 1, w).log_series(), Err(Error::LogDomain(_))));
    }

    #[test]
    fn coefficient_examples() {
        let f = t(2, 2, 8).scale(&int(3)).shift_lambda(1);
        assert_eq!(f.coefficient(Monomial::var(1, 2), 1).unwrap(), int(3));
        assert!(matches!(f.coefficient(Monomial::var(1, 5), 1), Err(Error::BeyondPrecision { .. })));
        assert_eq!(QSeries::rational_zero(tvars(8), 8).coefficient(Monomial::var(0, 3), 0).unwrap(), int(0));
    }

    #[test]
    fn json_round_trip() {
        let f = &t(2, 2, 8).scale(&ratio(3, 2)).shift_lambda(-1) + &t(1, 1, 8);
        let js = serde_json::to_string(&f.to_json()).unwrap();
        assert!(js.contains("\"W\":8"));
        let back: SeriesJson = serde_json::from_str(&js).unwrap();
        assert_eq!(QSeries::from_json(&back, int(1)).unwrap(), f);
    }
}
