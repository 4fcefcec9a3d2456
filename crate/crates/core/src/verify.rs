//! The property suite and the cross-check between the two pipelines.
//!
//! Every check yields a [`CheckRecord`]; a failing record always names a
//! concrete counterexample.

use std::time::Instant;

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeffring::{int, Rational};
use crate::correlators::relations::{applicable, expand, Relation};
use crate::correlators::{
    ext_keys, fit_extended_primaries, Choice, CorrelatorKey, CorrelatorTable, Evaluator, ExtFit, OpenSource, Sector,
};
use crate::error::{Error, Result};
use crate::hierarchy::{default_e_min, solve_l, solver_vars, Fault, GdSolution, SolveOptions};
use crate::potentials::open_potential;
use crate::psido::PsiDO;
use crate::series::{Key, Monomial, QSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub r: u32,
    #[serde(rename = "W")]
    pub weight: u32,
    pub status: Status,
    /// Number of instances examined.
    pub cases: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerifyReport {
    pub checks: Vec<CheckRecord>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status == Status::Pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }

    pub fn find(&self, name: &str, r: u32) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name && c.r == r)
    }

    /// Same report with every timing zeroed, for run-to-run comparison.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        for c in &mut out.checks {
            c.seconds = 0.0;
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialize")
    }
}

/// Sizes of the randomized and optional parts of the suite.
#[derive(Clone, Copy, Debug)]
pub struct Bounds {
    pub random_operators: usize,
    pub triples: usize,
    pub seed: u64,
    /// Extra depth for the window-stability re-solve.
    pub window_extra: i32,
    pub fault: Option<Fault>,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { random_operators: 20, triples: 50, seed: 0x5eed, window_extra: 5, fault: None }
    }
}

/// Outcome of a single check body: instance count, or a counterexample.
type Outcome = std::result::Result<usize, (usize, String)>;

struct Recorder<'a> {
    r: u32,
    weight: u32,
    report: &'a mut VerifyReport,
}

impl Recorder<'_> {
    fn run(&mut self, name: &str, body: impl FnOnce() -> Outcome) -> bool {
        let start = Instant::now();
        let outcome = body();
        let seconds = start.elapsed().as_secs_f64();
        let (status, cases, counterexample) = match outcome {
            Ok(n) => (Status::Pass, n, None),
            Err((n, c)) => (Status::Fail, n, Some(c)),
        };
        self.report.checks.push(CheckRecord {
            name: name.to_string(),
            r: self.r,
            weight: self.weight,
            status,
            cases,
            counterexample,
            detail: None,
            seconds,
        });
        status == Status::Pass
    }

    fn annotate(&mut self, detail: String) {
        if let Some(last) = self.report.checks.last_mut() {
            last.detail = Some(detail);
        }
    }
}

fn single(check: std::result::Result<(), String>) -> Outcome {
    check.map(|_| 1).map_err(|e| (1, e))
}

/// Pipeline A for one `(r, W)`: the solution and every open correlator of
/// genus 0 and 1 up to `W`.
pub struct PipelineA {
    pub solution: GdSolution,
    pub table: CorrelatorTable,
}

pub fn pipeline_a(r: u32, weight: u32, fault: Option<Fault>) -> Result<PipelineA> {
    let mut solution = solve_l(r, weight, SolveOptions { e_min: None, fault })?;
    solution.solve_wave_function()?;
    let mut table = open_potential(&solution, 0)?.table()?;
    table.merge(&open_potential(&solution, 1)?.table()?)?;
    Ok(PipelineA { solution, table })
}

/// Base cases for pipeline B: open primaries from `open` plus fitted
/// extended primaries.
pub fn recursion_base(open: &CorrelatorTable, fit: &ExtFit) -> Result<CorrelatorTable> {
    let mut base = open.filtered(|k| k.sector == Sector::Open && k.sum_d() == 0);
    base.merge(&fit.table)?;
    Ok(base)
}

/// Runs the suite for every `r` in `rs` at weight `weight` (or the default
/// per-`r` weight when `None`).
pub fn run_suite(rs: &[u32], weight: Option<u32>, bounds: &Bounds) -> VerifyReport {
    let mut report = VerifyReport::default();
    for &r in rs {
        let w = weight.unwrap_or_else(|| default_weight(r));
        run_one(r, w, bounds, &mut report);
    }
    report
}

/// Default weight per `r`, sized so the suite runs in minutes.
pub fn default_weight(r: u32) -> u32 {
    match r {
        2 => 10,
        3 => 9,
        _ => 8,
    }
}

fn run_one(r: u32, weight: u32, bounds: &Bounds, report: &mut VerifyReport) {
    let mut rec = Recorder { r, weight, report };
    let mut a = None;
    rec.run("hierarchy.solve", || match pipeline_a(r, weight, bounds.fault) {
        Ok(p) => {
            let n = p.table.len();
            a = Some(p);
            Ok(n)
        }
        Err(e) => Err((0, e.to_string())),
    });
    let Some(a) = a else { return };
    let sol = &a.solution;

    operator_checks(&mut rec, sol, bounds);
    rec.run("hierarchy.flow_equations", || single(sol.check_flow_equations()));
    rec.run("hierarchy.flow_commutativity", || single(sol.check_flow_commutativity()));
    rec.run("hierarchy.x_flow", || single(sol.check_x_flow()));
    rec.run("hierarchy.commutator_support", || single(sol.check_commutator_support()));
    rec.run("hierarchy.ramond_vanishing", || single(sol.check_ramond()));
    rec.run("hierarchy.two_point_symmetry", || single(sol.check_two_point()));

    potential_checks(&mut rec, &a);

    let mut fit = None;
    rec.run("recursion.extended_fit", || match fit_extended_primaries(&a.table, r) {
        Ok(f) => {
            let n = f.equations;
            fit = Some(f);
            Ok(n)
        }
        Err(e) => Err((0, e.to_string())),
    });
    let Some(fit) = fit else { return };
    rec.annotate(format!(
        "{} unknowns, {} determined, undetermined: [{}]",
        fit.unknowns,
        fit.table.len(),
        fit.undetermined.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", ")
    ));

    identity_checks(&mut rec, &a.table, &fit);

    let base = match recursion_base(&a.table, &fit) {
        Ok(b) => b,
        Err(e) => {
            rec.run("cross_check.base", || Err((0, e.to_string())));
            return;
        }
    };
    for g in [0, 1] {
        rec.run(&format!("cross_check.g{g}"), || cross_check_table(r, &a.table, &base, g, Choice::First));
    }
    rec.run("determinism.reduction_choice", || {
        let mut n = 0;
        for choice in [Choice::Last, Choice::Seeded(bounds.seed), Choice::Seeded(bounds.seed + 1)] {
            for g in [0, 1] {
                n += cross_check_table(r, &a.table, &base, g, choice).map_err(|(m, e)| (n + m, format!("{choice:?}: {e}")))?;
            }
        }
        Ok(n)
    });
    rec.run("determinism.thread_count", || {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| (0, e.to_string()))?;
        let single_thread = pool.install(|| pipeline_a(r, weight, bounds.fault)).map_err(|e| (0, e.to_string()))?;
        compare_tables(&single_thread.table, &a.table)
    });
}

fn compare_tables(a: &CorrelatorTable, b: &CorrelatorTable) -> Outcome {
    if a.len() != b.len() {
        return Err((0, format!("table sizes differ: {} vs {}", a.len(), b.len())));
    }
    for (n, (k, e)) in a.iter().enumerate() {
        if b.get(k) != Some(&e.value) {
            return Err((n, format!("{k}: {} vs {:?}", e.value, b.get(k).map(|v| v.to_string()))));
        }
    }
    Ok(a.len())
}

/// Pipeline B, seeded by `base`, against pipeline A on every genus-`g` key.
pub fn cross_check_table(r: u32, a: &CorrelatorTable, base: &CorrelatorTable, g: u32, choice: Choice) -> Outcome {
    let mut ev = Evaluator::new(r, base, OpenSource::Recursion, choice);
    let mut n = 0;
    for (key, e) in a.iter().filter(|(k, _)| k.sector == Sector::Open && k.g == g) {
        let b = ev.value(key).map_err(|err| (n, format!("{key}: {err}")))?;
        if b != e.value {
            let trace = ev.reduction(key).map(|r| format!("{r:?}")).unwrap_or_else(|| "base".into());
            return Err((n, format!("{key}: pipeline A {} vs recursion {b} (via {trace})", e.value)));
        }
        n += 1;
    }
    Ok(n)
}

fn operator_checks(rec: &mut Recorder<'_>, sol: &GdSolution, bounds: &Bounds) {
    let (r, w) = (rec.r, rec.weight);
    let e_min = sol.e_min();
    rec.run("psido.root_of_L", || root_round_trip(sol.l(), r, e_min, w).map(|_| 1).map_err(|e| (0, e)));
    let mut rng = ChaCha8Rng::seed_from_u64(bounds.seed ^ r as u64);
    let template = QSeries::rational_zero(solver_vars(w), w);
    rec.run("psido.random_roots", || {
        for i in 0..bounds.random_operators {
            let a = random_monic(&mut rng, &template, r);
            root_round_trip(&a, r, e_min, w).map_err(|e| (i, format!("operator #{i}: {e}")))?;
        }
        Ok(bounds.random_operators)
    });
    rec.run("psido.associativity", || {
        for i in 0..bounds.triples {
            let [a, b, c] = [0, 0, 0].map(|_| random_operator(&mut rng, &template));
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            if let Some((e, k)) = left.first_difference(&right, w) {
                return Err((i, format!("triple #{i}: Dx^{e} at {}", k.mono.display(template.vars()))));
            }
        }
        Ok(bounds.triples)
    });
    rec.run("psido.window_stability", || {
        let opts = SolveOptions { e_min: Some(default_e_min(r, w) - bounds.window_extra), fault: bounds.fault };
        let deeper = solve_l(r, w, opts).map_err(|e| (0, e.to_string()))?;
        if let Some((e, k)) = deeper.l().first_difference(sol.l(), w) {
            return Err((0, format!("L differs at Dx^{e}, {}", k.mono.display(template.vars()))));
        }
        for n in 1..=w {
            if let Some((e, k)) = deeper.power(n).first_difference(sol.power(n), w) {
                return Err((n as usize, format!("L^({n}/{r}) differs at Dx^{e}, {}", k.mono.display(template.vars()))));
            }
        }
        Ok(w as usize + 1)
    });
}

fn root_round_trip(a: &PsiDO<Rational>, r: u32, e_min: i32, w: u32) -> std::result::Result<(), String> {
    let b = a.rth_root(r, e_min).map_err(|e| e.to_string())?;
    let mut p = b.clone();
    for _ in 1..r {
        p = p.compose(&b);
    }
    match p.first_difference(a, w) {
        None => Ok(()),
        Some((e, k)) => Err(format!("(A^(1/{r}))^{r} differs from A at Dx^{e}, {}", k.mono.display(a.template().vars()))),
    }
}

fn random_series(rng: &mut ChaCha8Rng, template: &QSeries, terms: usize) -> QSeries {
    let vars = *template.vars();
    let w = template.weight();
    let mut s = template.zero_like();
    for _ in 0..terms {
        let mut mono = Monomial::var(0, rng.gen_range(0..3));
        let mut budget = rng.gen_range(0..=w) as i64;
        while budget > 1 {
            let i = rng.gen_range(1..vars.len());
            let vw = vars.trunc_weight(i) as i64;
            if vw > budget {
                break;
            }
            mono = mono.with_exp(i, mono.exp(i) + 1);
            budget -= vw;
        }
        let c = int(rng.gen_range(-3..=3));
        s.add_term(Key::new(mono, rng.gen_range(-1..=1)), &c);
    }
    s
}

fn random_monic(rng: &mut ChaCha8Rng, template: &QSeries, r: u32) -> PsiDO<Rational> {
    let mut op = PsiDO::dx(template, r as i32);
    for i in 0..r as i32 - 1 {
        op.set(i, random_series(rng, template, 3));
    }
    op
}

fn random_operator(rng: &mut ChaCha8Rng, template: &QSeries) -> PsiDO<Rational> {
    let mut op = PsiDO::zero(template);
    for e in -2..=2 {
        if rng.gen_bool(0.6) {
            op.set(e, random_series(rng, template, 2));
        }
    }
    op
}

fn potential_checks(rec: &mut Recorder<'_>, a: &PipelineA) {
    let r = rec.r;
    for g in [0, 1] {
        rec.run(&format!("potential.rationality_g{g}"), || {
            let pot = open_potential(&a.solution, g).map_err(|e| (0, e.to_string()))?;
            let t = pot.table().map_err(|e| (0, e.to_string()))?;
            let stray = pot.stray_monomials();
            if let Some(m) = stray.first() {
                return Err((t.len(), format!("monomial outside every stable key: {m}")));
            }
            Ok(t.len())
        });
    }
    rec.run("potential.selection_rules", || {
        let mut n = 0;
        for (k, e) in a.table.iter() {
            let gate = k.dimension_gate(r).map_err(|err| (n, err.to_string()))?;
            if gate == crate::correlators::Gate::Zero {
                n += 1;
                if !e.value.is_zero() {
                    return Err((n, format!("{k} fails the dimension gate but equals {}", e.value)));
                }
            }
        }
        Ok(n)
    });
    rec.run("potential.psi_free_genus_one", || {
        let mut n = 0;
        for (k, e) in a.table.iter().filter(|(k, _)| k.g == 1 && k.sum_d() == 0) {
            n += 1;
            if !e.value.is_zero() {
                return Err((n, format!("{k} = {}", e.value)));
            }
        }
        Ok(n)
    });
}

fn identity_checks(rec: &mut Recorder<'_>, open: &CorrelatorTable, fit: &ExtFit) {
    let r = rec.r;
    let w = rec.weight;
    let mut ev = Evaluator::new(r, &fit.table, OpenSource::Table(open), Choice::First);
    let mut check = |rec: &mut Recorder<'_>, name: &str, want: &dyn Fn(&CorrelatorKey, Relation) -> bool| {
        rec.run(name, || {
            let mut n = 0;
            for (key, e) in open.iter() {
                for rel in applicable(key) {
                    if !want(key, rel) {
                        continue;
                    }
                    let terms = expand(key, rel, r).expect("applicable relation expands");
                    n += 1;
                    match ev.sum(&terms) {
                        Ok(v) if v == e.value => {}
                        Ok(v) => return Err((n, format!("{key} via {rel:?}: lhs {} rhs {v}", e.value))),
                        Err(Error::NeedsBase(k)) => return Err((n, format!("{key} via {rel:?}: needs base value {k}"))),
                        Err(err) => return Err((n, format!("{key} via {rel:?}: {err}"))),
                    }
                }
            }
            Ok(n)
        });
    };
    let candidate = |k: &CorrelatorKey| !crate::correlators::relations::vanishes(k, r);
    check(rec, "recursion.trr_g0", &|k, rel| candidate(k) && matches!(rel, Relation::TrrA { .. } | Relation::TrrB { .. }));
    check(rec, "recursion.trr_g1", &|k, rel| candidate(k) && matches!(rel, Relation::TrrG1 { .. }));
    check(rec, "recursion.string", &|k, rel| k.weight(r) < w as i64 && matches!(rel, Relation::String { .. }));
    check(rec, "recursion.dilaton", &|k, rel| k.weight(r) + 2 <= w as i64 && matches!(rel, Relation::Dilaton { .. }));
    let mut skipped = 0;
    rec.run("recursion.extended_choice", || {
        let mut n = 0;
        for key in ext_keys(r, w) {
            if key.sum_d() == 0 || crate::correlators::relations::vanishes(&key, r) {
                continue;
            }
            let want = match ev.value(&key) {
                Ok(v) => v,
                Err(Error::NeedsBase(_)) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err((n, format!("{key}: {e}"))),
            };
            for rel in applicable(&key) {
                let terms = expand(&key, rel, r).expect("applicable relation expands");
                n += 1;
                match ev.sum(&terms) {
                    Ok(v) if v == want => {}
                    Ok(v) => return Err((n, format!("{key} via {rel:?}: {want} vs {v}"))),
                    Err(err) => return Err((n, format!("{key} via {rel:?}: {err}"))),
                }
            }
        }
        Ok(n)
    });
    rec.annotate(format!("{skipped} keys need extended primaries the fit leaves open"));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_bounds_empty_report() {
        let report = run_suite(&[], Some(4), &Bounds::default());
        assert!(report.checks.is_empty());
        assert!(report.passed());
    }

    #[test]
    fn small_suite_passes() {
        let bounds = Bounds { random_operators: 3, triples: 3, ..Bounds::default() };
        let report = run_suite(&[2], Some(6), &bounds);
        let failures: Vec<_> = report.failures().collect();
        assert!(failures.is_empty(), "{failures:#?}");
    }

    #[test]
    fn fault_is_reported_with_counterexample() {
        let bounds = Bounds { random_operators: 1, triples: 1, fault: Some(Fault::Flow), ..Bounds::default() };
        let report = run_suite(&[3], Some(7), &bounds);
        let fail = report.failures().next().expect("fault must be detected");
        assert!(fail.counterexample.is_some());
    }
}
