//! Open potentials `F_0`, `F_1` in the variables `t^a_d`, `s`, obtained from
//! the genus components of `φ = log Φ`, and correlator extraction.
//!
//! The fractional powers of `-r` in the coordinate changes are monomials in
//! `q` (see [`crate::coeffring`]), with `sqrt(-r) = q^{r+1}`.

use num_traits::One;
use serde::Serialize;

use crate::coeffring::{factorial, int, q_power, rational_part, Coeff, Rational, RingElem};
use crate::correlators::{open_keys, CorrelatorKey, CorrelatorTable, Provenance, Sector, TableRecord};
use crate::error::{Error, Result};
use crate::hierarchy::GdSolution;
use crate::series::{Key, MSeries, Monomial, QSeries, Substitution, Var, VarSystem};

pub type RSeries = MSeries<RingElem>;

/// `k!_r = Π_{i=0}^{d} (a + 1 + r i)`.
pub fn r_factorial(a: u32, d: u32, r: u32) -> Rational {
    (0..=d).fold(Rational::one(), |acc, i| acc * int((a + 1 + r * i) as i64))
}

/// Scalar `c_k` in `T_k = c_k t^a_d`, `k = a + 1 + r d`.
pub fn time_scale(k: u32, r: u32) -> RingElem {
    let (a, d) = ((k - 1) % r, (k - 1) / r);
    if a < r - 1 {
        let e = 3 * k as i64 - (r as i64 + 1) - 2 * (r as i64 + 1) * d as i64;
        q_power(-e, r).scale(&r_factorial(a, d, r).recip())
    } else {
        let m = (k / r) as i64;
        let denom = factorial(m as u32) * num_traits::pow(int(r as i64), m as usize);
        q_power(-m * (r as i64 - 2), r).scale(&denom.recip())
    }
}

/// `T_k ↦ c_k t^a_d` for every `k <= W`.
pub fn change_of_variables(f: &QSeries, r: u32) -> Result<RSeries> {
    let weight = f.weight();
    let source = VarSystem::t_vars(weight.max(1));
    let f = f.retruncate(source, weight)?;
    let target = VarSystem::ts_vars(r, weight.max(1));
    target.validate()?;
    let one = RingElem::from_rational(r, Rational::one());
    let g = f.map_coeffs(one, |c| RingElem::from_rational(r, c.clone()));
    let mut sub = Substitution::new(source, target);
    for k in 1..=source.len() as u32 {
        let v = target.var(k as usize - 1);
        sub.rule(Var::T(k), vec![(v, time_scale(k, r))])?;
    }
    g.substitute(&sub)
}

/// `t^{r-1}_d ↦ (t^{r-1}_d - δ_{d,0} r s)/sqrt(-r)`, or without the shift.
fn ramond_shift(f: &RSeries, r: u32, with_boundary: bool) -> Result<RSeries> {
    let vars = *f.vars();
    let inv_sqrt = q_power(-(r as i64 + 1), r);
    let mut sub = Substitution::new(vars, vars);
    let VarSystem::Ts { max_weight, .. } = vars else { unreachable!("ts variables") };
    for d in 0.. {
        if r * (d + 1) > max_weight {
            break;
        }
        let v = Var::Ts { a: r - 1, d };
        let mut image = vec![(v, inv_sqrt.clone())];
        if d == 0 && with_boundary {
            image.push((Var::S, inv_sqrt.scale(&int(-(r as i64)))));
        }
        sub.rule(v, image)?;
    }
    f.substitute(&sub)
}

/// `F_g` for `g ∈ {0, 1}` as a series in `t^a_d`, `s`.
#[derive(Clone, Debug)]
pub struct OpenPotential {
    r: u32,
    g: u32,
    series: RSeries,
}

pub fn open_potential(sol: &GdSolution, g: u32) -> Result<OpenPotential> {
    let r = sol.r();
    let phi_g = sol.genus_component(g as i32)?;
    let phi_t = change_of_variables(&phi_g, r)?;
    let series = match g {
        0 => {
            let c = q_power(-(r as i64 + 1), r);
            let shifted = ramond_shift(&phi_t, r, true)?;
            let plain = ramond_shift(&phi_t, r, false)?;
            shifted.sub(&plain).scale_by(&c)
        }
        1 => ramond_shift(&phi_t, r, true)?,
        _ => return Err(Error::Unsupported(format!("open potential of genus {g}"))),
    };
    Ok(OpenPotential { r, g, series })
}

impl OpenPotential {
    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn g(&self) -> u32 {
        self.g
    }

    pub fn weight(&self) -> u32 {
        self.series.weight()
    }

    pub fn series(&self) -> &RSeries {
        &self.series
    }

    /// Monomial of `Π t^{a_i}_{d_i} s^k`.
    pub fn monomial(&self, key: &CorrelatorKey) -> Result<Monomial> {
        let vars = *self.series.vars();
        let mut m = Monomial::ONE;
        for ins in key.insertions() {
            let i = vars
                .index(Var::Ts { a: ins.a as u32, d: ins.d })
                .ok_or_else(|| Error::BeyondPrecision { requested: key.weight(self.r) as u32, reliable: self.weight() })?;
            m = m.with_exp(i, m.exp(i) + 1);
        }
        let s = vars.index(Var::S).expect("s is always present");
        Ok(m.with_exp(s, key.k))
    }

    /// `(Π m_{a,d}!) k! × [Π t s^k] F_g`, which undoes the `1/(l! k!)`
    /// normalization of the labeled sum.
    pub fn extract(&self, key: &CorrelatorKey) -> Result<RingElem> {
        if key.sector != Sector::Open || key.g != self.g {
            return Err(Error::InvalidKey { key: key.to_string(), reason: format!("not an open genus-{} key", self.g) });
        }
        key.validate(self.r)?;
        let w = key.weight(self.r) as u32;
        if w > self.weight() {
            return Err(Error::BeyondPrecision { requested: w, reliable: self.weight() });
        }
        let mono = self.monomial(key)?;
        let coeff = self.series.coefficient(mono, 0)?;
        Ok(coeff.scale(&multiplicity_factor(key)))
    }

    /// [`Self::extract`] followed by the rationality check.
    pub fn correlator(&self, key: &CorrelatorKey) -> Result<Rational> {
        rational_part(&self.extract(key)?)
    }

    /// Every stable open key of this genus up to the weight, zeros included.
    pub fn table(&self) -> Result<CorrelatorTable> {
        let mut table = CorrelatorTable::new();
        for key in open_keys(self.r, self.g, self.weight()) {
            let v = self.correlator(&key)?;
            table.insert(key, v, Provenance::PipelineA)?;
        }
        Ok(table)
    }

    /// Monomials of the series that no stable key of this genus accounts for.
    pub fn stray_monomials(&self) -> Vec<String> {
        let vars = *self.series.vars();
        let keys: std::collections::BTreeSet<Monomial> =
            open_keys(self.r, self.g, self.weight()).iter().filter_map(|k| self.monomial(k).ok()).collect();
        self.series
            .terms()
            .filter(|(k, _)| !keys.contains(&k.mono) || k.lambda != 0)
            .map(|(k, c): (&Key, &RingElem)| format!("{c} * {}", k.mono.display(&vars)))
            .collect()
    }
}

/// `Π_{(a,d)} m_{a,d}! · k!`.
pub fn multiplicity_factor(key: &CorrelatorKey) -> Rational {
    let mut f = factorial(key.k);
    let ins = key.insertions();
    let mut i = 0;
    while i < ins.len() {
        let j = ins[i..].iter().take_while(|x| **x == ins[i]).count();
        f *= factorial(j as u32);
        i += j;
    }
    f
}

/// Row of the `potential` dump.
#[derive(Clone, Debug, Serialize)]
pub struct DumpRow {
    pub monomial: String,
    #[serde(flatten)]
    pub record: TableRecord,
}

pub fn dump(pot: &OpenPotential) -> Result<Vec<DumpRow>> {
    let vars = *pot.series.vars();
    let table = pot.table()?;
    table
        .iter()
        .map(|(key, e)| {
            Ok(DumpRow { monomial: pot.monomial(key)?.display(&vars), record: TableRecord::from_entry(key, &e.value) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffring::ratio;
    use crate::correlators::Insertion;
    use crate::hierarchy::{solve_l, SolveOptions};

    #[test]
    fn time_scale_examples() {
        assert_eq!(time_scale(5, 3), q_power(-3, 3).scale(&ratio(1, 10)));
        assert_eq!(time_scale(1, 2), RingElem::from_rational(2, int(1)));
        assert_eq!(time_scale(3, 3), q_power(-1, 3).scale(&ratio(1, 3)));
        assert_eq!(r_factorial(1, 1, 3), int(10));
    }

    #[test]
    fn multiplicity_convention() {
        let key = CorrelatorKey::open(0, [Insertion::new(0, 0), Insertion::new(0, 0)], 1);
        assert_eq!(multiplicity_factor(&key), int(2));
        assert_eq!(multiplicity_factor(&CorrelatorKey::open(0, [], 3)), int(6));
    }

    fn potentials(r: u32, w: u32) -> (OpenPotential, OpenPotential) {
        let mut sol = solve_l(r, w, SolveOptions::default()).unwrap();
        sol.solve_wave_function().unwrap();
        (open_potential(&sol, 0).unwrap(), open_potential(&sol, 1).unwrap())
    }

    // At T_{>=3} = 0 and r = 2 the genus-zero part of log Φ is
    // 2 x T_2 + (4/3) T_2^3, so F_0 = ((t^1_0 - 2s)^3 - (t^1_0)^3)/24 + x s + ...
    #[test]
    fn r2_disk_spot_values() {
        let (f0, f1) = potentials(2, 8);
        assert_eq!(f0.correlator(&CorrelatorKey::open(0, [], 3)).unwrap(), int(-2));
        assert_eq!(f0.correlator(&CorrelatorKey::open(0, [Insertion::new(1, 0)], 2)).unwrap(), int(1));
        let pair = CorrelatorKey::open(0, [Insertion::new(1, 0), Insertion::new(1, 0)], 1);
        assert_eq!(f0.correlator(&pair).unwrap(), ratio(-1, 2));
        assert_eq!(f0.correlator(&CorrelatorKey::open(0, [Insertion::new(0, 0)], 1)).unwrap(), int(1));
        let s_free = f0.series().restrict_zero(&[8]);
        assert!(s_free.is_zero());
        let constant = f1.series().coefficient(Monomial::ONE, 0).unwrap();
        assert!(constant.is_zero());
    }

    #[test]
    fn beyond_weight_is_rejected() {
        let (f0, _) = potentials(2, 4);
        let err = f0.extract(&CorrelatorKey::open(0, [Insertion::new(0, 2)], 1)).unwrap_err();
        assert!(matches!(err, Error::BeyondPrecision { .. }));
    }
}
