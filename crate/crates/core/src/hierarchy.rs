//! The `r`-th Gelfand–Dikii hierarchy and its wave function, solved jet by
//! jet in the weighted degree of `T_2, T_3, ...`.
//!
//! All series here live in `T_1..T_W` with `x = T_1` kept exact, so every jet
//! is an honest polynomial in `x` (and Laurent in `λ`). A monomial `T^α` of
//! weight `w` is reached from each flow `n ∈ supp(α)`; the solver computes all
//! of them and insists they agree.

use std::collections::BTreeMap;

use num_traits::One;
use rayon::prelude::*;

use crate::coeffring::{int, ratio, Rational};
use crate::error::{Error, Result};
use crate::psido::{x_power, PsiDO, X};
use crate::series::{Key, Monomial, QSeries, VarSystem, MAX_VARS};

/// Deliberate corruption used to exercise the self-checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Adds 1 to the coefficient of `T_3 λ^0` in `f_0` right after it is
    /// solved.
    Flow,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SolveOptions {
    /// Lowest `∂_x` exponent kept in roots; defaults to `-(W + r + 2)`.
    pub e_min: Option<i32>,
    pub fault: Option<Fault>,
}

/// A solved hierarchy: `L`, its fractional powers, and optionally `Φ`, `φ`.
#[derive(Clone, Debug)]
pub struct GdSolution {
    r: u32,
    weight: u32,
    e_min: i32,
    l: PsiDO<Rational>,
    powers: Vec<PsiDO<Rational>>,
    wave: Option<QSeries>,
    phi: Option<QSeries>,
}

pub fn default_e_min(r: u32, weight: u32) -> i32 {
    -((weight + r + 2) as i32)
}

/// Variable system used by the solver: `T_1..T_W`, `x` exact.
pub fn solver_vars(weight: u32) -> VarSystem {
    VarSystem::T { max: weight.max(1), exact_x: true }
}

/// `∂_x^r + r λ^{-r} x`.
pub fn initial_operator(r: u32, weight: u32) -> PsiDO<Rational> {
    let template = QSeries::rational_zero(solver_vars(weight), weight);
    let f0 = x_power(&template, 1, int(r as i64)).shift_lambda(-(r as i32));
    PsiDO::dx(&template, r as i32).add(&PsiDO::mult(f0))
}

/// Solves `∂L/∂T_n = λ^{n-1}[(L^{n/r})_+, L]` with `L|_{T_{>=2}=0} = ∂^r + rλ^{-r}x`.
pub fn solve_l(r: u32, weight: u32, opts: SolveOptions) -> Result<GdSolution> {
    if r < 2 {
        return Err(Error::Unsupported("r must be at least 2".into()));
    }
    if weight == 0 || weight as usize > MAX_VARS - 1 {
        return Err(Error::Unsupported(format!("weight must lie in 1..={}", MAX_VARS - 1)));
    }
    let e_min = opts.e_min.unwrap_or_else(|| default_e_min(r, weight));
    let mut l = initial_operator(r, weight);
    for w in 2..=weight {
        let lt = l.truncate_weight(w - 2);
        let powers = lt.fractional_powers(r, w, e_min)?;
        let per_flow: Vec<Result<(u32, BTreeMap<i32, QSeries>)>> = (2..=w)
            .into_par_iter()
            .map(|n| {
                let cap = w - n;
                let d = powers[n as usize - 1].positive_part().truncate_weight(cap);
                let rhs = d.commutator(&lt.truncate_weight(cap)).shift_lambda(n as i32 - 1);
                let mut parts = BTreeMap::new();
                for (e, c) in rhs.terms() {
                    let top = c.homogeneous_part(cap);
                    if top.is_zero() {
                        continue;
                    }
                    if e < 0 || e > r as i32 - 2 {
                        return Err(Error::Mismatch(format!("flow {n} produced a Dx^{e} term at weight {w}")));
                    }
                    parts.insert(e, top);
                }
                Ok((n, parts))
            })
            .collect();
        let per_flow = per_flow.into_iter().collect::<Result<Vec<_>>>()?;
        let jets = assemble_jets(&per_flow, l.template(), "L")?;
        for (e, jet) in jets {
            let mut c = l.coefficient(e)?;
            c.add_assign(&jet);
            l.set(e, c);
        }
        if w == 3 && opts.fault == Some(Fault::Flow) {
            let mut f0 = l.coefficient(0)?;
            f0.add_term(Key::new(Monomial::var(2, 1), 0), &Rational::one());
            l.set(0, f0);
        }
    }
    let powers = l.fractional_powers(r, weight, e_min)?;
    Ok(GdSolution { r, weight, e_min, l, powers, wave: None, phi: None })
}

/// Lifts per-flow right-hand sides at `T^{α-e_n}` to jets at `T^α`, checking
/// that every `n ∈ supp(α)` (with `n >= 2`) yields the same value.
fn assemble_jets(
    per_flow: &[(u32, BTreeMap<i32, QSeries>)],
    template: &QSeries,
    object: &str,
) -> Result<BTreeMap<i32, QSeries>> {
    let mut candidates: BTreeMap<(i32, Key), Vec<(u32, Rational)>> = BTreeMap::new();
    for (n, parts) in per_flow {
        let idx = *n as usize - 1;
        for (&e, series) in parts {
            for (key, c) in series.terms() {
                let mono = key.mono.mul(Monomial::var(idx, 1));
                let alpha = mono.exp(idx);
                let value = c * &ratio(1, alpha as i64);
                candidates.entry((e, Key::new(mono, key.lambda))).or_default().push((*n, value));
            }
        }
    }
    let mut out: BTreeMap<i32, QSeries> = BTreeMap::new();
    for ((e, key), values) in candidates {
        let (n0, v0) = &values[0];
        let vars = *template.vars();
        let describe = |n: u32, v: &Rational| (n, v.to_string());
        for (n, v) in &values[1..] {
            if v != v0 {
                return Err(inconsistent(object, e, key, &vars, describe(*n0, v0), describe(*n, v)));
            }
        }
        for i in 1..MAX_VARS.min(vars.len()) {
            let n = i as u32 + 1;
            if key.mono.exp(i) > 0 && !values.iter().any(|(m, _)| *m == n) {
                return Err(inconsistent(object, e, key, &vars, describe(*n0, v0), (n, "0".into())));
            }
        }
        let entry = out.entry(e).or_insert_with(|| template.zero_like());
        entry.add_term(key, v0);
    }
    Ok(out)
}

fn inconsistent(object: &str, e: i32, key: Key, vars: &VarSystem, a: (u32, String), b: (u32, String)) -> Error {
    let lam = if key.lambda == 0 { String::new() } else { format!(" λ^{}", key.lambda) };
    let at = if object == "L" { format!("Dx^{e} of L") } else { object.to_string() };
    Error::InconsistentJet {
        monomial: format!("{}{lam} in {at}", key.mono.display(vars)),
        first: a.0,
        first_value: a.1,
        second: b.0,
        second_value: b.1,
    }
}

impl GdSolution {
    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn weight(&self) -> u32 {
        self.weight
    }

    pub fn e_min(&self) -> i32 {
        self.e_min
    }

    pub fn l(&self) -> &PsiDO<Rational> {
        &self.l
    }

    /// `f_i`, the coefficient of `∂_x^i` in `L`.
    pub fn f(&self, i: u32) -> QSeries {
        self.l.coefficient(i as i32).expect("L is exact")
    }

    /// `L^{n/r}` for `1 <= n <= W`.
    pub fn power(&self, n: u32) -> &PsiDO<Rational> {
        &self.powers[n as usize - 1]
    }

    pub fn residue(&self, n: u32) -> Result<QSeries> {
        self.power(n).residue()
    }

    pub fn wave(&self) -> Option<&QSeries> {
        self.wave.as_ref()
    }

    pub fn phi(&self) -> Option<&QSeries> {
        self.phi.as_ref()
    }

    /// `λ^{n-1}[(L^{n/r})_+, L]`.
    pub fn flow_rhs(&self, n: u32) -> PsiDO<Rational> {
        self.power(n).positive_part().commutator(&self.l).shift_lambda(n as i32 - 1)
    }

    /// `λ^{n-1}(L^{n/r})_+`.
    pub fn wave_operator(&self, n: u32) -> PsiDO<Rational> {
        self.power(n).positive_part().shift_lambda(n as i32 - 1)
    }

    /// Solves `∂Φ/∂T_n = λ^{n-1}(L^{n/r})_+ Φ`, `Φ|_{T_{>=2}=0} = 1`, and sets
    /// `φ = log Φ`.
    pub fn solve_wave_function(&mut self) -> Result<()> {
        let template = QSeries::rational_zero(solver_vars(self.weight), self.weight);
        let mut wave = QSeries::constant(*template.vars(), self.weight, Rational::one());
        let ops: Vec<PsiDO<Rational>> = (1..=self.weight).map(|n| self.wave_operator(n)).collect();
        for w in 2..=self.weight {
            let per_flow: Vec<Result<(u32, BTreeMap<i32, QSeries>)>> = (2..=w)
                .into_par_iter()
                .map(|n| {
                    let cap = w - n;
                    let d = ops[n as usize - 1].truncate_weight(cap);
                    let top = d.apply(&wave.truncate(cap))?.homogeneous_part(cap);
                    let mut parts = BTreeMap::new();
                    if !top.is_zero() {
                        parts.insert(0, top);
                    }
                    Ok((n, parts))
                })
                .collect();
            let per_flow = per_flow.into_iter().collect::<Result<Vec<_>>>()?;
            if let Some(jet) = assemble_jets(&per_flow, &template, "Φ")?.remove(&0) {
                wave.add_assign(&jet);
            }
        }
        // Unused x-flow, checked a posteriori.
        let lhs = wave.derive(X);
        let rhs = ops[0].apply(&wave)?;
        if let Some(k) = lhs.first_difference(&rhs, self.weight) {
            return Err(Error::T1FlowViolation { object: "Φ".into(), monomial: k.mono.display(wave.vars()) });
        }
        self.phi = Some(wave.log_series()?);
        self.wave = Some(wave);
        Ok(())
    }

    /// `φ_g`, the `λ^{g-1}` part of `φ`, as a `λ`-free series.
    pub fn genus_component(&self, g: i32) -> Result<QSeries> {
        let phi = self.phi.as_ref().ok_or_else(|| Error::Unsupported("wave function not solved".into()))?;
        Ok(phi.lambda_part(g - 1))
    }

    /// Genus indices `g` with a nonzero `φ_g`.
    pub fn genus_range(&self) -> Option<(i32, i32)> {
        self.phi.as_ref()?.lambda_window().map(|(lo, hi)| (lo + 1, hi + 1))
    }
}

/// Outcome of an a-posteriori check: `Err` carries a concrete counterexample.
pub type Check = std::result::Result<(), String>;

fn describe(op_e: i32, key: Key, vars: &VarSystem) -> String {
    let lam = if key.lambda == 0 { String::new() } else { format!(" λ^{}", key.lambda) };
    format!("Dx^{op_e}: {}{lam}", key.mono.display(vars))
}

impl GdSolution {
    fn vars(&self) -> VarSystem {
        solver_vars(self.weight)
    }

    /// `∂L/∂T_n = λ^{n-1}[(L^{n/r})_+, L]` for every `1 <= n <= W`, to the
    /// reliable weight `W - n`.
    pub fn check_flow_equations(&self) -> Check {
        for n in 1..=self.weight {
            let lhs = self.l.map(|c| c.derive(n as usize - 1));
            let rhs = self.flow_rhs(n);
            if let Some((e, k)) = lhs.first_difference(&rhs, self.weight - n) {
                return Err(format!("flow T{n}: {}", describe(e, k, &self.vars())));
            }
        }
        Ok(())
    }

    /// `∂_m(RHS_n) = ∂_n(RHS_m)` for all `m < n` with `m + n <= W`.
    pub fn check_flow_commutativity(&self) -> Check {
        let rhs: Vec<PsiDO<Rational>> = (1..=self.weight).map(|n| self.flow_rhs(n)).collect();
        for n in 2..=self.weight {
            for m in 1..n {
                if m + n > self.weight {
                    continue;
                }
                let a = rhs[n as usize - 1].map(|c| c.derive(m as usize - 1));
                let b = rhs[m as usize - 1].map(|c| c.derive(n as usize - 1));
                if let Some((e, k)) = a.first_difference(&b, self.weight - m - n) {
                    return Err(format!("T{m}/T{n}: {}", describe(e, k, &self.vars())));
                }
            }
        }
        Ok(())
    }

    /// `∂L/∂x = [(L^{1/r})_+, L]` and `L|_{T_{>=2}=0} = ∂^r + rλ^{-r}x`.
    pub fn check_x_flow(&self) -> Check {
        let lhs = self.l.map(|c| c.derive(X));
        if let Some((e, k)) = lhs.first_difference(&self.flow_rhs(1), self.weight) {
            return Err(format!("x-flow of L: {}", describe(e, k, &self.vars())));
        }
        let higher: Vec<usize> = (1..self.weight as usize).collect();
        let restricted = self.l.map(|c| c.restrict_zero(&higher));
        let init = initial_operator(self.r, self.weight);
        if let Some((e, k)) = restricted.first_difference(&init, self.weight) {
            return Err(format!("initial condition: {}", describe(e, k, &self.vars())));
        }
        if let Some(wave) = &self.wave {
            let lhs = wave.derive(X);
            let rhs = self.wave_operator(1).apply(wave).map_err(|e| e.to_string())?;
            if let Some(k) = lhs.first_difference(&rhs, self.weight) {
                return Err(format!("x-flow of Φ: {}", describe(0, k, &self.vars())));
            }
            let one = QSeries::constant(self.vars(), self.weight, Rational::one());
            if let Some(k) = wave.restrict_zero(&higher).first_difference(&one, self.weight) {
                return Err(format!("Φ initial condition: {}", describe(0, k, &self.vars())));
            }
        }
        Ok(())
    }

    /// `L = ∂^r + Σ_{i<=r-2} f_i ∂^i` exactly.
    pub fn check_monic(&self) -> Check {
        let r = self.r as i32;
        match self.l.top() {
            Some(t) if t == r => {}
            t => return Err(format!("top exponent {t:?}")),
        }
        let one = QSeries::constant(self.vars(), self.weight, Rational::one());
        if self.l.coefficient(r).unwrap() != one {
            return Err("leading coefficient is not 1".into());
        }
        if let Some(c) = self.l.get(r - 1) {
            let k = c.terms().next().unwrap().0;
            return Err(describe(r - 1, *k, &self.vars()));
        }
        if let Some((e, _)) = self.l.terms().next() {
            if e < 0 {
                return Err(format!("negative power Dx^{e} in L"));
            }
        }
        Ok(())
    }

    /// `[(L^{n/r})_+, L]` is supported in `∂^0..∂^{r-2}` for all `n <= W`.
    pub fn check_commutator_support(&self) -> Check {
        for n in 1..=self.weight {
            for (e, c) in self.flow_rhs(n).terms() {
                if (e < 0 || e > self.r as i32 - 2) && !c.is_zero() {
                    let k = c.terms().next().unwrap().0;
                    return Err(format!("n={n}: {}", describe(e, *k, &self.vars())));
                }
            }
        }
        Ok(())
    }

    /// `res L^{m/r} = 0` whenever `r | m`.
    pub fn check_ramond(&self) -> Check {
        for m in (self.r..=self.weight).step_by(self.r as usize) {
            let res = self.residue(m).map_err(|e| e.to_string())?;
            let first = res.terms().next().map(|(k, _)| *k);
            if let Some(k) = first {
                return Err(format!("res L^{m}/{}: {}", self.r, describe(-1, k, &self.vars())));
            }
        }
        Ok(())
    }

    /// `λ^{n-1} ∂_{T_m} res L^{n/r} = λ^{m-1} ∂_{T_n} res L^{m/r}` for `m, n`
    /// not divisible by `r`; both sides equal `∂³F/∂T_1∂T_m∂T_n`.
    pub fn check_two_point(&self) -> Check {
        let res: Vec<QSeries> = (1..=self.weight).map(|n| self.residue(n).expect("window covers -1")).collect();
        for n in 1..=self.weight {
            for m in 1..n {
                if n % self.r == 0 || m % self.r == 0 {
                    continue;
                }
                let a = res[n as usize - 1].derive(m as usize - 1).shift_lambda(n as i32 - 1);
                let b = res[m as usize - 1].derive(n as usize - 1).shift_lambda(m as i32 - 1);
                if let Some(k) = a.first_difference(&b, self.weight - n) {
                    return Err(format!("m={m}, n={n}: {}", describe(-1, k, &self.vars())));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mono(exps: &[u32]) -> Monomial {
        Monomial::from_exponents(exps)
    }

    #[test]
    fn initial_data_and_seed() {
        let sol = solve_l(2, 4, SolveOptions::default()).unwrap();
        let f0 = sol.f(0);
        assert_eq!(f0.coefficient(mono(&[1]), -2).unwrap(), int(2));
        assert!(sol.check_monic().is_ok());
        assert!(sol.check_x_flow().is_ok());
    }

    #[test]
    fn third_flow_by_hand_r2() {
        // (L^{3/2})_+ = ∂³ + (3/2)u∂ + (3/4)u', so ∂u/∂T_3 = λ²((1/4)u''' + (3/2)uu'),
        // which at u = 2λ^{-2}x is 6λ^{-2}x. The T_2 flow is [L, L] = 0.
        let sol = solve_l(2, 6, SolveOptions::default()).unwrap();
        let f0 = sol.f(0);
        assert_eq!(f0.coefficient(mono(&[1, 0, 1]), -2).unwrap(), int(6));
        assert!(f0.laurent(mono(&[0, 1])).is_zero());
        assert!(f0.laurent(mono(&[1, 1])).is_zero());
        assert_eq!(sol.check_flow_equations(), Ok(()));
    }

    #[test]
    fn flow_commutativity_small() {
        for r in [2, 3] {
            let sol = solve_l(r, 7, SolveOptions::default()).unwrap();
            assert_eq!(sol.check_flow_commutativity(), Ok(()));
            assert_eq!(sol.check_commutator_support(), Ok(()));
            assert_eq!(sol.check_ramond(), Ok(()));
            assert_eq!(sol.check_two_point(), Ok(()));
        }
    }

    #[test]
    fn fault_is_detected() {
        let opts = SolveOptions { fault: Some(Fault::Flow), ..Default::default() };
        let err = solve_l(3, 7, opts).unwrap_err();
        assert!(matches!(err, Error::InconsistentJet { .. }), "{err}");
        // For r = 2 the first monomial reached from T_3 and another flow is T_3 T_5.
        let sol = solve_l(2, 7, opts).unwrap();
        assert!(sol.check_flow_equations().is_err());
        assert!(matches!(solve_l(2, 8, opts), Err(Error::InconsistentJet { .. })));
    }

    #[test]
    fn wave_function_basics() {
        let mut sol = solve_l(2, 6, SolveOptions::default()).unwrap();
        sol.solve_wave_function().unwrap();
        let wave = sol.wave().unwrap();
        let higher: Vec<usize> = (1..6).collect();
        assert_eq!(wave.restrict_zero(&higher), QSeries::constant(*wave.vars(), 6, int(1)));
        assert!(sol.phi().unwrap().restrict_zero(&higher).is_zero());
        // ∂Φ/∂T_2 at T_{>=2}=0 is λ (L)_+ 1 = λ · 2λ^{-2}x
        let t2 = wave.coefficient(mono(&[1, 1]), -1).unwrap();
        assert_eq!(t2, int(2));
        assert_eq!(sol.check_x_flow(), Ok(()));
    }

    #[test]
    fn genus_components_split_phi() {
        let mut sol = solve_l(2, 6, SolveOptions::default()).unwrap();
        sol.solve_wave_function().unwrap();
        let (lo, hi) = sol.genus_range().unwrap();
        let mut total = sol.phi().unwrap().zero_like();
        for g in lo..=hi {
            total.add_assign(&sol.genus_component(g).unwrap().shift_lambda(g - 1));
        }
        assert_eq!(&total, sol.phi().unwrap());
    }
}
