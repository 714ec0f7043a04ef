use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ordering::{NodeOrdering, NodeRef, NodeSpec, Role};
use crate::error::{Error, Result};
use crate::seed::fnv1a;

/// Rectangular unit × node value store in the wide layout.
///
/// Column `j` holds the values of `ordering.node(j)` for every unit; binary
/// variables are coded 0/1 and missing cells are `NaN` until validated away.
/// `pre_period[var][k - 1]` holds the value of `var` at `first_time - k`, the
/// history that dynamic rules consume before the first in-sample period.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    unit_ids: Vec<String>,
    ordering: NodeOrdering,
    columns: Vec<Vec<f64>>,
    pre_period: BTreeMap<String, Vec<Vec<f64>>>,
}

/// How to assign roles when reading a wide CSV file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Variables whose nodes are binary interventions.
    pub treatment_vars: Vec<String>,
    /// Terminal outcome node; defaults to the last column.
    #[serde(default)]
    pub outcome: Option<NodeRef>,
}

impl PanelDataset {
    pub fn new(
        unit_ids: Vec<String>,
        ordering: NodeOrdering,
        columns: Vec<Vec<f64>>,
        pre_period: BTreeMap<String, Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = unit_ids.len();
        if columns.len() != ordering.len() {
            return Err(Error::InvalidDataset(format!(
                "{} columns for {} ordered nodes",
                columns.len(),
                ordering.len()
            )));
        }
        let bad_len = |c: &Vec<f64>| c.len() != n;
        if columns.iter().any(bad_len) || pre_period.values().flatten().any(bad_len) {
            return Err(Error::InvalidDataset(format!("every column must have {n} rows")));
        }
        Ok(PanelDataset {
            unit_ids,
            ordering,
            columns,
            pre_period,
        })
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn ordering(&self) -> &NodeOrdering {
        &self.ordering
    }

    pub fn column_at(&self, pos: usize) -> &[f64] {
        &self.columns[pos]
    }

    pub fn column(&self, node: &NodeRef) -> Option<&[f64]> {
        self.ordering.position(node).map(|p| self.columns[p].as_slice())
    }

    pub fn pre_period(&self) -> &BTreeMap<String, Vec<Vec<f64>>> {
        &self.pre_period
    }

    pub fn first_time(&self) -> Option<i32> {
        self.ordering.time_range().map(|(lo, _)| lo)
    }

    /// Value of `var` at `time` for `unit`, looking into the pre-period
    /// history for times before the first in-sample period.
    pub fn history_value(&self, var: &str, time: i32, unit: usize) -> Option<f64> {
        if let Some(p) = self.ordering.position(&NodeRef::new(var, time)) {
            return Some(self.columns[p][unit]);
        }
        let first = self.first_time()?;
        let lag = first.checked_sub(time)?;
        if lag < 1 {
            return None;
        }
        self.pre_period
            .get(var)
            .and_then(|lags| lags.get(lag as usize - 1))
            .map(|c| c[unit])
    }

    /// Dataset restricted to the nodes relevant for estimating `outcome`; see
    /// [`NodeOrdering::for_outcome`].
    pub fn for_outcome(&self, outcome: &NodeRef, lag: i32) -> Result<PanelDataset> {
        let ordering = self.ordering.for_outcome(outcome, lag)?;
        let columns = self.columns[..ordering.len()].to_vec();
        Ok(PanelDataset {
            unit_ids: self.unit_ids.clone(),
            ordering,
            columns,
            pre_period: self.pre_period.clone(),
        })
    }

    /// Copy with the outcome node's column replaced (used for affine checks).
    pub fn map_column(&self, node: &NodeRef, f: impl Fn(f64) -> f64) -> Result<PanelDataset> {
        let p = self
            .ordering
            .position(node)
            .ok_or_else(|| Error::UnknownNode(node.to_string()))?;
        let mut out = self.clone();
        out.columns[p].iter_mut().for_each(|v| *v = f(*v));
        Ok(out)
    }

    /// Content hash identifying the dataset in results.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(self.columns.len() * self.n_units() * 8 + 64);
        for id in &self.unit_ids {
            bytes.extend_from_slice(id.as_bytes());
            bytes.push(0);
        }
        for (spec, col) in self.ordering.nodes().iter().zip(&self.columns) {
            bytes.extend_from_slice(spec.node.to_string().as_bytes());
            bytes.push(0);
            for v in col {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        fnv1a(&bytes)
    }

    /// Reads the wide CSV layout: `unit_id`, then `VAR_t` columns in node
    /// order, plus optional `VAR_pre_k` lag columns. Empty or `NA` cells
    /// become missing values.
    pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("unit_id") {
            return Err(Error::InvalidDataset("first column must be `unit_id`".into()));
        }
        enum Col {
            Node(usize),
            Pre(String, usize),
        }
        let mut layout = Vec::new();
        let mut specs = Vec::new();
        for h in headers.iter().skip(1) {
            if let Some((var, k)) = h.rsplit_once("_pre_") {
                let k: usize = k
                    .parse()
                    .ok()
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| Error::InvalidDataset(format!("bad pre-period column `{h}`")))?;
                layout.push(Col::Pre(var.to_string(), k));
                continue;
            }
            let node: NodeRef = h
                .parse()
                .map_err(|_| Error::InvalidDataset(format!("bad column name `{h}`")))?;
            let role = if schema.treatment_vars.contains(&node.var) {
                Role::Intervention
            } else {
                Role::Covariate
            };
            layout.push(Col::Node(specs.len()));
            specs.push(NodeSpec::new(node, role));
        }
        match &schema.outcome {
            Some(o) => {
                let spec = specs
                    .iter_mut()
                    .find(|s| &s.node == o)
                    .ok_or_else(|| Error::UnknownNode(o.to_string()))?;
                spec.role = Role::Outcome;
            }
            None => {
                if let Some(last) = specs.last_mut() {
                    last.role = Role::Outcome;
                }
            }
        }

        let mut unit_ids = Vec::new();
        let mut columns = vec![Vec::new(); specs.len()];
        let mut pre: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or_default().to_string();
            for (c, col) in layout.iter().enumerate() {
                let raw = rec.get(c + 1).unwrap_or("");
                let value = if raw.is_empty() || raw == "NA" {
                    f64::NAN
                } else {
                    raw.parse::<f64>().map_err(|_| {
                        Error::InvalidDataset(format!(
                            "row {} column `{}`: `{raw}` is not a number",
                            row + 1,
                            &headers[c + 1]
                        ))
                    })?
                };
                match col {
                    Col::Node(j) => columns[*j].push(value),
                    Col::Pre(var, k) => pre
                        .entry(var.clone())
                        .or_default()
                        .entry(*k)
                        .or_default()
                        .push(value),
                }
            }
            unit_ids.push(id);
        }
        let mut pre_period = BTreeMap::new();
        for (var, lags) in pre {
            let max_k = *lags.keys().max().unwrap_or(&0);
            if lags.len() != max_k {
                return Err(Error::InvalidDataset(format!(
                    "pre-period lags of `{var}` must be contiguous from 1"
                )));
            }
            pre_period.insert(var, lags.into_values().collect());
        }
        PanelDataset::new(unit_ids, NodeOrdering::new(specs), columns, pre_period)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["unit_id".to_string()];
        for (var, lags) in &self.pre_period {
            for k in (1..=lags.len()).rev() {
                header.push(format!("{var}_pre_{k}"));
            }
        }
        header.extend(self.ordering.nodes().iter().map(|s| s.node.to_string()));
        w.write_record(&header)?;
        for (i, id) in self.unit_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            for lags in self.pre_period.values() {
                for k in (1..=lags.len()).rev() {
                    rec.push(fmt_value(lags[k - 1][i]));
                }
            }
            rec.extend(self.columns.iter().map(|c| fmt_value(c[i])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    MissingCell { unit: String, node: String },
    NonBinaryIntervention { unit: String, node: String, value: f64 },
    Ordering { message: String },
    TooFewUnits { n: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingCell { unit, node } => write!(f, "missing cell: unit {unit}, node {node}"),
            Violation::NonBinaryIntervention { unit, node, value } => {
                write!(f, "non-binary intervention: unit {unit}, node {node}, value {value}")
            }
            Violation::Ordering { message } => write!(f, "ordering: {message}"),
            Violation::TooFewUnits { n } => write!(f, "too few units: {n} (at least 2 required)"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            return Ok(());
        }
        let msg: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        Err(Error::InvalidDataset(msg.join("; ")))
    }
}

pub fn validate_dataset(dataset: &PanelDataset) -> ValidationReport {
    let mut violations = Vec::new();
    if dataset.n_units() < 2 {
        violations.push(Violation::TooFewUnits { n: dataset.n_units() });
    }
    for message in dataset.ordering.violations() {
        violations.push(Violation::Ordering { message });
    }
    for (spec, col) in dataset.ordering.nodes().iter().zip(&dataset.columns) {
        for (i, &v) in col.iter().enumerate() {
            let unit = &dataset.unit_ids[i];
            if v.is_nan() {
                violations.push(Violation::MissingCell {
                    unit: unit.clone(),
                    node: spec.node.to_string(),
                });
            } else if spec.role == Role::Intervention && v != 0.0 && v != 1.0 {
                violations.push(Violation::NonBinaryIntervention {
                    unit: unit.clone(),
                    node: spec.node.to_string(),
                    value: v,
                });
            }
        }
    }
    for (var, lags) in &dataset.pre_period {
        for (k, col) in lags.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                if v.is_nan() {
                    violations.push(Violation::MissingCell {
                        unit: dataset.unit_ids[i].clone(),
                        node: format!("{var}_pre_{}", k + 1),
                    });
                }
            }
        }
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "unit_id,L_1,A_1,Y_1,L_2,A_2,Y_2,L_3,A_3,Y_3
1,0.1,1,50.2,1.0,1,101,2.0,1,150
2,-0.3,0,0.1,0.2,0,0.4,0.1,0,0.3
3,0.5,1,49.8,1.4,0,52.0,1.2,1,110
";

    fn schema() -> CsvSchema {
        CsvSchema {
            treatment_vars: vec!["A".into()],
            outcome: None,
        }
    }

    #[test]
    fn complete_binary_panel_is_valid() {
        let ds = PanelDataset::read_csv(GOOD.as_bytes(), &schema()).unwrap();
        assert_eq!(ds.n_units(), 3);
        assert!(validate_dataset(&ds).is_ok());
    }

    #[test]
    fn fractional_treatment_is_reported() {
        let bad = GOOD.replace("1.4,0,52.0", "1.4,0.5,52.0");
        let ds = PanelDataset::read_csv(bad.as_bytes(), &schema()).unwrap();
        let report = validate_dataset(&ds);
        assert_eq!(
            report.violations,
            vec![Violation::NonBinaryIntervention {
                unit: "3".into(),
                node: "A_2".into(),
                value: 0.5
            }]
        );
        assert!(report.violations[0].to_string().contains("non-binary intervention"));
    }

    #[test]
    fn missing_cell_names_its_coordinates() {
        let bad = GOOD.replace("0.2,0,0.4", "0.2,0,");
        let ds = PanelDataset::read_csv(bad.as_bytes(), &schema()).unwrap();
        let report = validate_dataset(&ds);
        assert_eq!(
            report.violations,
            vec![Violation::MissingCell {
                unit: "2".into(),
                node: "Y_2".into()
            }]
        );
    }

    #[test]
    fn outcome_not_last_is_an_ordering_violation() {
        let s = CsvSchema {
            treatment_vars: vec!["A".into()],
            outcome: Some(NodeRef::new("Y", 2)),
        };
        let ds = PanelDataset::read_csv(GOOD.as_bytes(), &s).unwrap();
        let report = validate_dataset(&ds);
        assert!(matches!(report.violations[0], Violation::Ordering { .. }));
        assert!(report.violations[0].to_string().starts_with("ordering"));
    }

    #[test]
    fn csv_round_trip_preserves_pre_period() {
        let text = "unit_id,Y_pre_2,Y_pre_1,Y_2000,A_2000\nu1,3,4,5,1\nu2,6,7,8,0\n";
        let ds = PanelDataset::read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.history_value("Y", 1999, 1), Some(7.0));
        assert_eq!(ds.history_value("Y", 1998, 0), Some(3.0));
        assert_eq!(ds.history_value("Y", 1997, 0), None);
        let mut out = Vec::new();
        ds.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }
}
