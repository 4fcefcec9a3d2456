use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::key::{CorrelatorKey, Gate, Insertion, Sector};
use crate::coeffring::{parse_rational, Rational};
use crate::error::{Error, Result};

/// Where a stored value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Base,
    PipelineA,
    Recursion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub value: Rational,
    pub provenance: Provenance,
}

/// Exact correlator values keyed canonically; conflicting inserts are errors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrelatorTable {
    entries: BTreeMap<CorrelatorKey, Entry>,
}

/// One line of the JSON-lines table format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRecord {
    pub sector: Sector,
    pub g: u32,
    pub ins: Vec<(i32, u32)>,
    pub k: u32,
    pub value: String,
}

impl TableRecord {
    pub fn key(&self) -> CorrelatorKey {
        CorrelatorKey::from_pairs(self.sector, self.g, &self.ins, self.k)
    }

    pub fn from_entry(key: &CorrelatorKey, value: &Rational) -> Self {
        TableRecord {
            sector: key.sector,
            g: key.g,
            ins: key.insertions().iter().map(|i| (i.a, i.d)).collect(),
            k: key.k,
            value: value.to_string(),
        }
    }
}

impl CorrelatorTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &CorrelatorKey) -> Option<&Rational> {
        self.entries.get(key).map(|e| &e.value)
    }

    pub fn entry(&self, key: &CorrelatorKey) -> Option<&Entry> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CorrelatorKey, &Entry)> {
        self.entries.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &CorrelatorKey> {
        self.entries.keys()
    }

    /// Inserts a value; an existing different value for the same key is a
    /// [`Error::Conflict`].
    pub fn insert(&mut self, key: CorrelatorKey, value: Rational, provenance: Provenance) -> Result<()> {
        if let Some(old) = self.entries.get(&key) {
            if old.value != value {
                return Err(Error::Conflict { key, old: old.value.to_string(), new: value.to_string() });
            }
            return Ok(());
        }
        self.entries.insert(key, Entry { value, provenance });
        Ok(())
    }

    /// Merges `other` into `self` with conflict detection.
    pub fn merge(&mut self, other: &CorrelatorTable) -> Result<()> {
        for (k, e) in &other.entries {
            self.insert(k.clone(), e.value.clone(), e.provenance)?;
        }
        Ok(())
    }

    /// Keeps only entries satisfying `keep`.
    pub fn filtered(&self, keep: impl Fn(&CorrelatorKey) -> bool) -> CorrelatorTable {
        CorrelatorTable { entries: self.entries.iter().filter(|(k, _)| keep(k)).map(|(k, e)| (k.clone(), e.clone())).collect() }
    }

    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for (k, e) in &self.entries {
            out.push_str(&serde_json::to_string(&TableRecord::from_entry(k, &e.value)).expect("record serialize"));
            out.push('\n');
        }
        out
    }

    /// Parses JSON lines; blank lines are skipped. Keys are validated for `r`,
    /// and a nonzero value on a gate-failing key is rejected.
    pub fn parse_json_lines(text: &str, r: u32, path: &str, provenance: Provenance) -> Result<Self> {
        let mut table = CorrelatorTable::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let at = |reason: String| Error::Table { path: path.to_string(), line: line_no, reason };
            let rec: TableRecord = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
            let key = rec.key();
            let gate = key.dimension_gate(r).map_err(|e| at(e.to_string()))?;
            let value = parse_rational(&rec.value).map_err(|e| at(e.to_string()))?;
            if gate == Gate::Zero && !value.is_zero() {
                return Err(at(format!("{key} fails the dimension gate but has value {value}")));
            }
            table.insert(key, value, provenance).map_err(|e| at(e.to_string()))?;
        }
        Ok(table)
    }
}

/// Reads a base table from a JSON-lines file.
pub fn load_base_table(path: &Path, r: u32) -> Result<CorrelatorTable> {
    let text = fs::read_to_string(path)?;
    CorrelatorTable::parse_json_lines(&text, r, &path.display().to_string(), Provenance::Base)
}

/// All stable open keys of genus `g` with weight at most `weight`.
pub fn open_keys(r: u32, g: u32, weight: u32) -> Vec<CorrelatorKey> {
    let items: Vec<Insertion> = (1..=weight).map(|k| Insertion::new(((k - 1) % r) as i32, (k - 1) / r)).collect();
    let mut out = Vec::new();
    let mut current = Vec::new();
    multisets(&items, 0, weight as i64, r, &mut current, &mut |ins, left| {
        for k in 0..=(left / r as i64) as u32 {
            let key = CorrelatorKey::open(g, ins.iter().copied(), k);
            if key.is_stable() {
                out.push(key);
            }
        }
    });
    out.sort();
    out
}

/// All extended keys (at most one twist `-1`, `l >= 3`) with weight at most
/// `weight`, where `τ^{-1}_d` weighs `r d`.
pub fn ext_keys(r: u32, weight: u32) -> Vec<CorrelatorKey> {
    let mut items: Vec<Insertion> = (1..=weight).map(|k| Insertion::new(((k - 1) % r) as i32, (k - 1) / r)).collect();
    let mut out = Vec::new();
    let mut current = Vec::new();
    let mut visit = |ins: &[Insertion], _left: i64| {
        let key = CorrelatorKey::ext(ins.iter().copied());
        if key.is_stable() {
            out.push(key);
        }
    };
    multisets(&items, 0, weight as i64, r, &mut current, &mut visit);
    // One twist -1 marking with descendant d >= 0.
    items.retain(|i| i.a >= 0);
    for d in 0..=weight / r {
        let minus = Insertion::new(-1, d);
        let budget = weight as i64 - minus.weight(r);
        let mut current = vec![minus];
        multisets(&items, 0, budget, r, &mut current, &mut visit);
    }
    out.sort();
    out.dedup();
    out
}

fn multisets(
    items: &[Insertion],
    start: usize,
    budget: i64,
    r: u32,
    current: &mut Vec<Insertion>,
    visit: &mut dyn FnMut(&[Insertion], i64),
) {
    visit(current, budget);
    for (idx, item) in items.iter().enumerate().skip(start) {
        let w = item.weight(r);
        if w > budget {
            continue;
        }
        current.push(*item);
        multisets(items, idx, budget - w, r, current, visit);
        current.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffring::{int, ratio};

    #[test]
    fn empty_and_duplicates() {
        assert!(CorrelatorTable::parse_json_lines("", 2, "t", Provenance::Base).unwrap().is_empty());
        let line = r#"{"sector":"open","g":0,"ins":[],"k":3,"value":"1"}"#;
        let two = format!("{line}\n{line}\n");
        let t = CorrelatorTable::parse_json_lines(&two, 2, "t", Provenance::Base).unwrap();
        assert_eq!(t.len(), 1);
        let conflict = format!("{line}\n{}\n", line.replace("\"1\"", "\"2\""));
        let err = CorrelatorTable::parse_json_lines(&conflict, 2, "t", Provenance::Base).unwrap_err();
        assert!(matches!(err, Error::Table { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_two_minus_one_twists() {
        let line = r#"{"sector":"ext","g":0,"ins":[[-1,0],[-1,0],[1,0]],"k":0,"value":"1"}"#;
        let err = CorrelatorTable::parse_json_lines(line, 3, "t", Provenance::Base).unwrap_err();
        assert!(matches!(err, Error::Table { line: 1, .. }));
    }

    #[test]
    fn rejects_nonzero_gate_failure() {
        let line = r#"{"sector":"open","g":1,"ins":[[0,1]],"k":2,"value":"1/2"}"#;
        assert!(CorrelatorTable::parse_json_lines(line, 2, "t", Provenance::Base).is_err());
    }

    #[test]
    fn round_trip() {
        let mut t = CorrelatorTable::new();
        t.insert(CorrelatorKey::open(0, [Insertion::new(0, 0)], 1), int(1), Provenance::Base).unwrap();
        t.insert(CorrelatorKey::ext([Insertion::new(-1, 0), Insertion::new(1, 0), Insertion::new(0, 0)]), ratio(1, 1), Provenance::Base)
            .unwrap();
        let back = CorrelatorTable::parse_json_lines(&t.to_json_lines(), 2, "t", Provenance::Base).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn key_enumeration() {
        let keys = open_keys(2, 0, 6);
        assert!(keys.contains(&CorrelatorKey::open(0, [], 3)));
        assert!(keys.contains(&CorrelatorKey::open(0, [Insertion::new(0, 0)], 1)));
        assert!(!keys.contains(&CorrelatorKey::open(0, [], 2)));
        assert!(keys.iter().all(|k| k.weight(2) <= 6 && k.is_stable()));
        let ext = ext_keys(3, 4);
        assert!(ext.iter().all(|k| k.validate(3).is_ok() && k.l() >= 3));
    }
}
