//! Documents: curve configs in, tables/operators/reports out. Rationals travel as
//! "p/q" strings; every writer is deterministic (sorted keys, canonical key order).

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::curve::{Curve, CurveSpec, DEFAULT_MAX_INDEX};
use crate::error::{Error, Result};
use crate::exact::{fmt_rat, parse_rat, Rat};
use crate::series::{chi, CorrelatorTable};

/// A rational written either as a string or a bare integer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RatText {
    Int(i64),
    Text(String),
}

impl RatText {
    pub fn parse(&self) -> Result<Rat> {
        match self {
            RatText::Int(n) => Ok(crate::exact::rint(*n)),
            RatText::Text(s) => parse_rat(s),
        }
    }

    fn of(q: &Rat) -> Self {
        RatText::Text(fmt_rat(q))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexValue {
    pub k: u32,
    pub value: RatText,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairValue {
    pub k: u32,
    pub l: u32,
    pub value: RatText,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftValue {
    pub i: u32,
    pub l: u32,
    pub value: RatText,
}

/// One table entry to perturb after computing (fixtures only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub two_g: u32,
    pub keys: Vec<u32>,
    pub delta: RatText,
}

/// Test hooks, honoured only in fixtures mode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureHooks {
    /// Skip admissibility and s-consistency.
    #[serde(default)]
    pub unchecked: bool,
    #[serde(default)]
    pub perturb: Vec<Perturbation>,
}

/// The curve spec document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub r: u32,
    pub s: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub f01: Vec<IndexValue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub f12: Vec<IndexValue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub f02: Vec<PairValue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shifts: Vec<ShiftValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_index: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<FixtureHooks>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    /// JSON for *.json, TOML otherwise.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

pub fn parse_config(text: &str, format: Format) -> Result<CurveConfig> {
    match format {
        Format::Json => serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string())),
        Format::Toml => toml::from_str(text).map_err(|e| Error::Parse(e.to_string())),
    }
}

impl CurveConfig {
    pub fn to_spec(&self) -> Result<CurveSpec> {
        let mut spec = CurveSpec::new(self.r, self.s);
        if let Some(m) = self.max_index {
            spec.max_index = m;
        }
        for e in &self.f01 {
            spec = spec.with_f01(e.k, e.value.parse()?);
        }
        for e in &self.f12 {
            spec = spec.with_f12(e.k, e.value.parse()?);
        }
        for e in &self.f02 {
            spec = spec.with_f02(e.k, e.l, e.value.parse()?);
        }
        for e in &self.shifts {
            spec = spec.shift(e.i, e.l, e.value.parse()?);
        }
        Ok(spec)
    }

    pub fn from_spec(spec: &CurveSpec) -> Self {
        CurveConfig {
            r: spec.r,
            s: spec.s,
            f01: spec
                .f01
                .iter()
                .map(|(&k, v)| IndexValue {
                    k,
                    value: RatText::of(v),
                })
                .collect(),
            f12: spec
                .f12
                .iter()
                .map(|(&k, v)| IndexValue {
                    k,
                    value: RatText::of(v),
                })
                .collect(),
            f02: spec
                .f02
                .iter()
                .map(|(&(k, l), v)| PairValue {
                    k,
                    l,
                    value: RatText::of(v),
                })
                .collect(),
            shifts: spec
                .shifts
                .iter()
                .map(|(&(i, l), v)| ShiftValue {
                    i,
                    l,
                    value: RatText::of(v),
                })
                .collect(),
            max_index: (spec.max_index != DEFAULT_MAX_INDEX).then_some(spec.max_index),
            fixtures: None,
        }
    }

    /// Validates the curve; with `fixtures`, honours the `unchecked` hook.
    pub fn build(&self, fixtures: bool) -> Result<Arc<Curve>> {
        let spec = self.to_spec()?;
        match &self.fixtures {
            Some(h) if h.unchecked => {
                if !fixtures {
                    return Err(Error::InvalidParameter(
                        "the `unchecked` hook needs fixtures mode".into(),
                    ));
                }
                build_unchecked(&spec)
            }
            _ => spec.validate(),
        }
    }

    /// Applies the perturbation hooks to a computed table.
    pub fn perturb(&self, table: &mut CorrelatorTable, fixtures: bool) -> Result<()> {
        let Some(h) = &self.fixtures else {
            return Ok(());
        };
        if h.perturb.is_empty() {
            return Ok(());
        }
        if !fixtures {
            return Err(Error::InvalidParameter(
                "the `perturb` hook needs fixtures mode".into(),
            ));
        }
        for p in &h.perturb {
            let mut keys = p.keys.clone();
            keys.sort_unstable();
            let v = table.value(p.two_g, &keys) + p.delta.parse()?;
            table.set_value(p.two_g, &keys, v, true);
        }
        Ok(())
    }
}

#[cfg(feature = "fixtures")]
fn build_unchecked(spec: &CurveSpec) -> Result<Arc<Curve>> {
    spec.build_unchecked()
}

#[cfg(not(feature = "fixtures"))]
fn build_unchecked(_: &CurveSpec) -> Result<Arc<Curve>> {
    Err(Error::Unsupported(
        "built without the `fixtures` feature".into(),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub chi_max: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Deformations {
    pub f01: Vec<IndexValue>,
    pub f12: Vec<IndexValue>,
    pub f02: Vec<PairValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    pub r: u32,
    pub s: u32,
    pub shifts: Vec<ShiftValue>,
    pub deformations: Deformations,
    pub truncation: Truncation,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unchecked: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub two_g: u32,
    pub n: u32,
    pub keys: Vec<u32>,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableDoc {
    pub header: TableHeader,
    pub entries: Vec<TableEntry>,
}

impl TableDoc {
    pub fn of(table: &CorrelatorTable) -> Self {
        let curve = table.curve();
        let cfg = CurveConfig::from_spec(curve.spec());
        TableDoc {
            header: TableHeader {
                r: cfg.r,
                s: cfg.s,
                shifts: cfg.shifts,
                deformations: Deformations {
                    f01: cfg.f01,
                    f12: cfg.f12,
                    f02: cfg.f02,
                },
                truncation: Truncation {
                    chi_max: table.chi_max(),
                },
                unchecked: curve.is_unchecked(),
            },
            entries: table
                .canonical_entries()
                .into_iter()
                .map(|(two_g, n, keys, v)| TableEntry {
                    two_g,
                    n,
                    keys,
                    value: fmt_rat(&v),
                })
                .collect(),
        }
    }

    pub fn to_table(&self, fixtures: bool) -> Result<CorrelatorTable> {
        let h = &self.header;
        let cfg = CurveConfig {
            r: h.r,
            s: h.s,
            f01: h.deformations.f01.clone(),
            f12: h.deformations.f12.clone(),
            f02: h.deformations.f02.clone(),
            shifts: h.shifts.clone(),
            max_index: None,
            fixtures: h.unchecked.then(|| FixtureHooks {
                unchecked: true,
                perturb: vec![],
            }),
        };
        let curve = cfg.build(fixtures)?;
        let mut table = CorrelatorTable::new(curve);
        for (g2, n) in CorrelatorTable::stable_indices(h.truncation.chi_max) {
            table.insert(g2, n, Default::default());
        }
        table.set_chi_max(h.truncation.chi_max);
        for e in &self.entries {
            if e.keys.len() != e.n as usize
                || chi(e.two_g, e.n) < 1
                || chi(e.two_g, e.n) > h.truncation.chi_max as i64
            {
                return Err(Error::Parse(format!(
                    "entry (2g={}, n={}, keys {:?}) outside the table",
                    e.two_g, e.n, e.keys
                )));
            }
            if !e.keys.windows(2).all(|w| w[0] <= w[1]) {
                return Err(Error::Parse(format!(
                    "entry keys {:?} not in nondecreasing order",
                    e.keys
                )));
            }
            table.set_value(e.two_g, &e.keys, parse_rat(&e.value)?, true);
        }
        Ok(table)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_document<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("documents are plain data");
    s.push('\n');
    s
}

pub fn write_table(table: &CorrelatorTable) -> String {
    to_document(&TableDoc::of(table))
}

pub fn read_table(text: &str, fixtures: bool) -> Result<CorrelatorTable> {
    let doc: TableDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    doc.to_table(fixtures)
}

/// First differing (2g, n, keys) between two tables, with both values.
pub fn diff_tables(a: &CorrelatorTable, b: &CorrelatorTable) -> Option<String> {
    if a.curve().spec() != b.curve().spec() {
        return Some("curve headers differ".into());
    }
    if a.chi_max() != b.chi_max() {
        return Some(format!(
            "truncation differs: χ ≤ {} vs χ ≤ {}",
            a.chi_max(),
            b.chi_max()
        ));
    }
    a.first_difference(b).map(|(g2, n, k)| {
        format!(
            "2g={g2} n={n} keys {k:?}: {} vs {}",
            fmt_rat(&a.value(g2, &k)),
            fmt_rat(&b.value(g2, &k))
        )
    })
}

/// A free-form keyed document, used for the summaries the CLI writes.
pub type Doc = BTreeMap<String, serde_json::Value>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{rat, rint};
    use crate::exec::Exec;
    use crate::tr::run;

    const TOML_CFG: &str = r#"
r = 3
s = 1
shifts = [
  { i = 1, l = 1, value = "1/2" },
  { i = 2, l = 2, value = -1 },
]
"#;

    #[test]
    fn toml_and_json_configs_agree() {
        let a = parse_config(TOML_CFG, Format::Toml).unwrap();
        let json =
            r#"{"r":3,"s":1,"shifts":[{"i":1,"l":1,"value":"1/2"},{"i":2,"l":2,"value":"-1"}]}"#;
        let b = parse_config(json, Format::Json).unwrap();
        assert_eq!(a.to_spec().unwrap(), b.to_spec().unwrap());
        assert_eq!(
            a.to_spec().unwrap(),
            CurveSpec::new(3, 1)
                .shift(1, 1, rat(1, 2))
                .shift(2, 2, rint(-1))
        );
    }

    #[test]
    fn config_errors_are_parse_errors() {
        assert!(matches!(
            parse_config("r = 3\ns = \"x\"", Format::Toml),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            parse_config("r = 3\ns = 1\nbogus = 1", Format::Toml),
            Err(Error::Parse(_))
        ));
        let c = parse_config(
            "r = 3\ns = 1\nshifts = [{ i = 1, l = 1, value = \"1/0\" }]",
            Format::Toml,
        )
        .unwrap();
        assert!(matches!(c.to_spec(), Err(Error::Parse(_))));
    }

    #[test]
    fn hooks_need_fixtures_mode() {
        let c = parse_config(
            "r = 5\ns = 3\nshifts = [{ i = 1, l = 1, value = 1 }]\n[fixtures]\nunchecked = true",
            Format::Toml,
        )
        .unwrap();
        assert!(c.build(false).is_err());
        assert!(c.build(true).unwrap().is_unchecked());
    }

    #[test]
    fn table_round_trip_and_byte_stability() {
        let curve = CurveSpec::new(3, 1)
            .shift(1, 1, rat(1, 2))
            .validate()
            .unwrap();
        let t = run(&curve, 2, Exec::Sequential).unwrap();
        let a = write_table(&t);
        let b = write_table(&run(&curve, 2, Exec::Parallel).unwrap());
        assert_eq!(a, b);
        let back = read_table(&a, false).unwrap();
        assert_eq!(back, t);
        assert_eq!(write_table(&back), a);
    }

    #[test]
    fn deformed_header_round_trips() {
        let curve = CurveSpec::new(2, 1)
            .with_f12(1, rat(1, 3))
            .with_f02(1, 2, rint(2))
            .validate()
            .unwrap();
        let t = run(&curve, 1, Exec::Sequential).unwrap();
        assert_eq!(read_table(&write_table(&t), false).unwrap(), t);
    }

    #[test]
    fn diff_reports_first_difference() {
        let curve = CurveSpec::new(2, 3).validate().unwrap();
        let t = run(&curve, 2, Exec::Sequential).unwrap();
        let mut u = t.clone();
        assert_eq!(diff_tables(&t, &u), None);
        let v = u.value(0, &[1, 1, 1]);
        u.set_value(0, &[1, 1, 1], v.clone() + rint(1), true);
        let want = format!(
            "2g=0 n=3 keys [1, 1, 1]: {} vs {}",
            fmt_rat(&v),
            fmt_rat(&(v.clone() + rint(1)))
        );
        assert_eq!(diff_tables(&t, &u).unwrap(), want);
    }

    #[test]
    fn malformed_entries_are_rejected() {
        let curve = CurveSpec::new(2, 3).validate().unwrap();
        let t = run(&curve, 1, Exec::Sequential).unwrap();
        let mut doc = TableDoc::of(&t);
        doc.entries[0].keys.reverse();
        doc.entries[0].keys.insert(0, 9);
        assert!(doc.to_table(false).is_err());
    }
}
