use std::io::Write;

use serde::Serialize;

use super::EstimateResult;
use crate::error::{Error, Result};

/// Weight diagnostics laid out with one row per statistic and one column
/// per regime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsTable {
    pub regimes: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub const TRUNCATION_ROW: &str = "Trunc. (%)";
pub const CC_MEAN_ROW: &str = "CC Mean";
pub const CC_MAX_ROW: &str = "CC Max.";

pub fn diagnostics_summary(results: &[EstimateResult]) -> Result<DiagnosticsTable> {
    let mut regimes = Vec::with_capacity(results.len());
    let mut cols = Vec::with_capacity(results.len());
    for r in results {
        let d = r
            .diagnostics
            .ok_or_else(|| Error::InvalidArgument(format!("`{}` carries no diagnostics", r.regime)))?;
        regimes.push(r.regime.clone());
        cols.push(d);
    }
    Ok(DiagnosticsTable {
        regimes,
        rows: vec![
            (TRUNCATION_ROW.into(), cols.iter().map(|d| d.truncation_pct).collect()),
            (CC_MEAN_ROW.into(), cols.iter().map(|d| d.cc_mean).collect()),
            (CC_MAX_ROW.into(), cols.iter().map(|d| d.cc_max).collect()),
        ],
    })
}

/// Writes the table with three decimals.
pub fn write_diagnostics_csv<W: Write>(table: &DiagnosticsTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::new()];
    header.extend(table.regimes.iter().cloned());
    w.write_record(&header)?;
    for (label, values) in &table.rows {
        let mut rec = vec![label.clone()];
        rec.extend(values.iter().map(|v| format!("{v:.3}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-unit influence-curve values, one column per result.
pub fn write_ic_csv<W: Write>(unit_ids: &[String], results: &[EstimateResult], out: W) -> Result<()> {
    if results.iter().any(|r| r.ic.len() != unit_ids.len()) {
        return Err(Error::Mismatch("influence curves do not match the units".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["unit_id".to_string()];
    header.extend(results.iter().map(|r| r.regime.clone()));
    w.write_record(&header)?;
    for (i, id) in unit_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(results.iter().map(|r| r.ic[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ltmle::{Diagnostics, Estimator};
    use crate::panel::NodeRef;

    fn with_diag(name: &str, d: Diagnostics) -> EstimateResult {
        let mut r = EstimateResult::from_ic(Estimator::Ltmle, name, &NodeRef::new("Y", 1), 0.0, vec![0.0; 2], 0);
        r.diagnostics = Some(d);
        r
    }

    #[test]
    fn single_adherent_unit_among_zeros() {
        let cc = crate::ltmle::CleverCovariates {
            cumulative: vec![vec![1.0 / 7.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]],
            truncated: vec![vec![false; 7]],
            h: vec![vec![7.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]],
        };
        let d = Diagnostics::from_clever(&cc);
        assert_eq!((d.cc_max, d.cc_mean, d.truncation_pct), (7.0, 1.0, 0.0));
    }

    #[test]
    fn only_adherent_unit_times_count_towards_truncation() {
        let cc = crate::ltmle::clever_covariates(
            &[vec![0.5, 0.05], vec![0.5, 0.05]],
            &[vec![1, 0], vec![1, 0]],
            0.01,
        );
        assert!(cc.truncated[1][1]);
        assert_eq!(Diagnostics::from_clever(&cc).truncation_pct, 0.0);
        let cc = crate::ltmle::clever_covariates(&[vec![0.5, 0.05], vec![0.5, 0.05]], &[vec![1, 1], vec![1, 1]], 0.01);
        assert_eq!(Diagnostics::from_clever(&cc).truncation_pct, 25.0);
    }

    #[test]
    fn csv_has_table_rows() {
        let d = Diagnostics {
            truncation_pct: 0.0,
            cc_mean: 1.0234,
            cc_max: 5.0,
            ess: 1.0,
            adherent: 1,
        };
        let t = diagnostics_summary(&[with_diag("d1", d), with_diag("d3", d)]).unwrap();
        let mut buf = Vec::new();
        write_diagnostics_csv(&t, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, ",d1,d3\nTrunc. (%),0.000,0.000\nCC Mean,1.023,1.023\nCC Max.,5.000,5.000\n");
    }
}
