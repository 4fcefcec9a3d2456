use std::collections::BTreeMap;

use num_traits::{One, Zero};

use super::key::{CorrelatorKey, Gate, Sector};
use super::relations::{applicable, expand, Relation};
use super::table::{CorrelatorTable, Provenance};
use crate::coeffring::Rational;
use crate::error::{Error, Result};

/// Extended primaries recovered from genus-zero open values.
#[derive(Clone, Debug)]
pub struct ExtFit {
    pub table: CorrelatorTable,
    /// Unknowns that appear in the system but are not pinned by it.
    pub undetermined: Vec<CorrelatorKey>,
    pub equations: usize,
    pub unknowns: usize,
}

struct Row {
    coeffs: BTreeMap<usize, Rational>,
    rhs: Rational,
    source: String,
}

/// Builds the linear system given by the genus-zero TRRs on every
/// `Σd = 1` key of `open`, whose only unknowns are extended primaries, and
/// solves it exactly.
pub fn fit_extended_primaries(open: &CorrelatorTable, r: u32) -> Result<ExtFit> {
    let mut index: BTreeMap<CorrelatorKey, usize> = BTreeMap::new();
    let mut rows = Vec::new();
    for key in open.keys() {
        if key.sector != Sector::Open || key.g != 0 || key.sum_d() != 1 || key.dimension_gate(r)? != Gate::Candidate {
            continue;
        }
        let lhs = open.get(key).expect("key from table");
        for rel in applicable(key) {
            if !matches!(rel, Relation::TrrA { .. } | Relation::TrrB { .. }) {
                continue;
            }
            let terms = expand(key, rel, r).expect("applicable relation expands");
            let mut row = Row { coeffs: BTreeMap::new(), rhs: lhs.clone(), source: format!("{key} via {rel:?}") };
            for t in terms {
                let mut c = t.coef.clone();
                let mut unknown = None;
                for f in &t.factors {
                    if f.sector == Sector::Ext {
                        unknown = Some(f.clone());
                    } else {
                        c *= open.get(f).cloned().ok_or_else(|| Error::NeedsBase(f.clone()))?;
                    }
                }
                if c.is_zero() {
                    continue;
                }
                match unknown {
                    Some(u) => {
                        let n = index.len();
                        let col = *index.entry(u).or_insert(n);
                        *row.coeffs.entry(col).or_insert_with(Rational::zero) += c;
                    }
                    None => row.rhs -= c,
                }
            }
            row.coeffs.retain(|_, c| !c.is_zero());
            rows.push(row);
        }
    }
    let equations = rows.len();
    let unknowns = index.len();
    let solution = solve(rows, unknowns)?;
    let keys: Vec<CorrelatorKey> = {
        let mut v: Vec<_> = index.into_iter().collect();
        v.sort_by_key(|(_, i)| *i);
        v.into_iter().map(|(k, _)| k).collect()
    };
    let mut table = CorrelatorTable::new();
    let mut undetermined = Vec::new();
    for (i, key) in keys.into_iter().enumerate() {
        match &solution[i] {
            Some(v) => table.insert(key, v.clone(), Provenance::Base)?,
            None => undetermined.push(key),
        }
    }
    Ok(ExtFit { table, undetermined, equations, unknowns })
}

/// Exact elimination; `None` marks unknowns not fixed by the system.
fn solve(rows: Vec<Row>, n: usize) -> Result<Vec<Option<Rational>>> {
    let mut pivots: Vec<(usize, Row)> = Vec::new();
    for mut row in rows {
        for (col, prow) in &pivots {
            if let Some(c) = row.coeffs.get(col).cloned() {
                eliminate(&mut row, prow, &c);
            }
        }
        match row.coeffs.iter().next().map(|(c, v)| (*c, v.clone())) {
            None => {
                if !row.rhs.is_zero() {
                    return Err(Error::InconsistentSystem(row.source));
                }
            }
            Some((col, lead)) => {
                let inv = Rational::one() / lead;
                for v in row.coeffs.values_mut() {
                    *v *= &inv;
                }
                row.rhs *= &inv;
                for (_, prow) in pivots.iter_mut() {
                    if let Some(c) = prow.coeffs.get(&col).cloned() {
                        eliminate(prow, &row, &c);
                    }
                }
                pivots.push((col, row));
            }
        }
    }
    let mut out = vec![None; n];
    for (col, row) in pivots {
        if row.coeffs.len() == 1 {
            out[col] = Some(row.rhs);
        }
    }
    Ok(out)
}

/// `row -= c · pivot`.
fn eliminate(row: &mut Row, pivot: &Row, c: &Rational) {
    for (k, v) in &pivot.coeffs {
        let e = row.coeffs.entry(*k).or_insert_with(Rational::zero);
        *e -= c * v;
        if e.is_zero() {
            row.coeffs.remove(k);
        }
    }
    row.rhs -= c * &pivot.rhs;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffring::int;

    fn row(coeffs: &[(usize, i64)], rhs: i64) -> Row {
        Row { coeffs: coeffs.iter().map(|&(c, v)| (c, int(v))).collect(), rhs: int(rhs), source: "t".into() }
    }

    #[test]
    fn overdetermined_consistent() {
        let sol = solve(vec![row(&[(0, 1), (1, 1)], 3), row(&[(0, 1), (1, -1)], 1), row(&[(0, 2)], 4)], 3).unwrap();
        assert_eq!(sol, vec![Some(int(2)), Some(int(1)), None]);
    }

    #[test]
    fn inconsistent_is_rejected() {
        let err = solve(vec![row(&[(0, 1)], 1), row(&[(0, 2)], 3)], 1).unwrap_err();
        assert!(matches!(err, Error::InconsistentSystem(_)));
    }

    #[test]
    fn underdetermined_is_reported() {
        let sol = solve(vec![row(&[(0, 1), (1, 1)], 3)], 2).unwrap();
        assert_eq!(sol, vec![None, None]);
    }
}
