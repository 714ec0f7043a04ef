use serde::{Deserialize, Serialize};

use super::dataset::PanelDataset;
use crate::error::{Error, Result};
use crate::stats::median;

/// A deterministic treatment rule applied at every intervention time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub name: String,
    #[serde(flatten)]
    pub rule: RegimeRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegimeRule {
    /// Always assign `value` (0 or 1).
    Static { value: u8 },
    /// Assign 1 when the median of the `window` most recent past values of
    /// `source` is `<= lower` or `>= upper`, else 0.
    MedianWindow {
        source: String,
        window: usize,
        lower: f64,
        upper: f64,
    },
}

impl Regime {
    pub fn static_rule(name: impl Into<String>, value: u8) -> Self {
        Regime {
            name: name.into(),
            rule: RegimeRule::Static { value },
        }
    }

    pub fn median_window(name: impl Into<String>, source: impl Into<String>, window: usize, lower: f64, upper: f64) -> Self {
        Regime {
            name: name.into(),
            rule: RegimeRule::MedianWindow {
                source: source.into(),
                window,
                lower,
                upper,
            },
        }
    }

    pub fn source_var(&self) -> Option<&str> {
        match &self.rule {
            RegimeRule::Static { .. } => None,
            RegimeRule::MedianWindow { source, .. } => Some(source),
        }
    }

    pub fn check(&self) -> Result<()> {
        match &self.rule {
            RegimeRule::Static { value } if *value > 1 => Err(Error::InvalidArgument(format!(
                "regime `{}`: static value must be 0 or 1",
                self.name
            ))),
            RegimeRule::MedianWindow { window: 0, .. } => Err(Error::InvalidArgument(format!(
                "regime `{}`: window must be positive",
                self.name
            ))),
            _ => Ok(()),
        }
    }

    /// Prescribed treatment at `time`, reading the rule's source variable
    /// through `history(time)`.
    ///
    /// Returns the number of history values found when the window cannot be
    /// filled.
    pub fn prescribe(&self, time: i32, history: impl Fn(i32) -> Option<f64>) -> std::result::Result<u8, usize> {
        match &self.rule {
            RegimeRule::Static { value } => Ok(*value),
            RegimeRule::MedianWindow {
                window,
                lower,
                upper,
                ..
            } => {
                let past: Vec<f64> = (1..=*window as i32).map_while(|k| history(time - k)).collect();
                if past.len() < *window {
                    return Err(past.len());
                }
                let m = median(&past);
                Ok(u8::from(m <= *lower || m >= *upper))
            }
        }
    }
}

pub fn evaluate_regime(regime: &Regime, dataset: &PanelDataset, unit: usize, time: i32) -> Result<u8> {
    let source = regime.source_var().unwrap_or_default();
    regime
        .prescribe(time, |s| dataset.history_value(source, s, unit))
        .map_err(|available| insufficient(regime, dataset, unit, time, available))
}

fn insufficient(regime: &Regime, dataset: &PanelDataset, unit: usize, time: i32, available: usize) -> Error {
    let (var, window) = match &regime.rule {
        RegimeRule::MedianWindow { source, window, .. } => (source.clone(), *window),
        RegimeRule::Static { .. } => (String::new(), 0),
    };
    Error::InsufficientHistory {
        unit: dataset.unit_ids()[unit].clone(),
        time,
        var,
        window,
        available,
    }
}

/// Prescriptions and adherence of every unit at every intervention node.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeAssignment {
    /// Ordering positions of the intervention nodes.
    pub positions: Vec<usize>,
    pub times: Vec<i32>,
    /// `prescribed[k][i]`: rule's treatment for unit `i` at intervention node `k`.
    pub prescribed: Vec<Vec<u8>>,
    /// `adherent[k][i]`: 1 iff unit `i` followed the rule at all nodes up to `k`.
    pub adherent: Vec<Vec<u8>>,
}

impl RegimeAssignment {
    pub fn new(dataset: &PanelDataset, regime: &Regime) -> Result<Self> {
        regime.check()?;
        let ordering = dataset.ordering();
        let positions = ordering.intervention_positions();
        let times: Vec<i32> = positions.iter().map(|&p| ordering.node(p).time).collect();
        let n = dataset.n_units();
        let mut prescribed = Vec::with_capacity(positions.len());
        let mut adherent: Vec<Vec<u8>> = Vec::with_capacity(positions.len());
        for (k, &pos) in positions.iter().enumerate() {
            let observed = dataset.column_at(pos);
            let mut d = Vec::with_capacity(n);
            let mut adh = Vec::with_capacity(n);
            for i in 0..n {
                let di = evaluate_regime(regime, dataset, i, times[k])?;
                let prev = if k == 0 { 1 } else { adherent[k - 1][i] };
                adh.push(prev & u8::from(observed[i] == f64::from(di)));
                d.push(di);
            }
            prescribed.push(d);
            adherent.push(adh);
        }
        Ok(RegimeAssignment {
            positions,
            times,
            prescribed,
            adherent,
        })
    }
}

/// Per-unit 0/1 sequences over the intervention times: entry `t` is 1 iff the
/// unit's observed treatments match the rule at every time up to `t`.
pub fn adherence_indicators(dataset: &PanelDataset, regime: &Regime) -> Result<Vec<Vec<u8>>> {
    let a = RegimeAssignment::new(dataset, regime)?;
    Ok((0..dataset.n_units())
        .map(|i| a.adherent.iter().map(|col| col[i]).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{CsvSchema, PanelDataset};

    fn d2() -> Regime {
        Regime::median_window("d2", "Y", 7, 0.0, 5.0)
    }

    fn history(values: &[f64]) -> impl Fn(i32) -> Option<f64> + '_ {
        // values[0] is the oldest of the seven, observed at time 3
        move |s| {
            let k = s - 3;
            (0..values.len() as i32).contains(&k).then(|| values[k as usize])
        }
    }

    #[test]
    fn static_rule_ignores_history() {
        let d1 = Regime::static_rule("d1", 1);
        assert_eq!(d1.prescribe(10, |_| None), Ok(1));
        assert_eq!(d1.prescribe(10, |_| Some(3.0)), Ok(1));
    }

    #[test]
    fn median_rule_on_paper_thresholds() {
        let high = [6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        assert_eq!(d2().prescribe(10, history(&high)), Ok(1));
        let mid = [1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(d2().prescribe(10, history(&mid)), Ok(0));
        let deflation = [-1.0, -2.0, 0.0, 1.0, -3.0, 0.5, -0.5];
        assert_eq!(d2().prescribe(10, history(&deflation)), Ok(1));
        // thresholds are inclusive
        let at_five = [5.0; 7];
        assert_eq!(d2().prescribe(10, history(&at_five)), Ok(1));
    }

    #[test]
    fn short_history_reports_what_was_found() {
        let values = [1.0, 2.0, 3.0];
        assert_eq!(d2().prescribe(6, history(&values)), Err(3));
    }

    fn panel(text: &str) -> PanelDataset {
        let s = CsvSchema {
            treatment_vars: vec!["A".into()],
            outcome: None,
        };
        PanelDataset::read_csv(text.as_bytes(), &s).unwrap()
    }

    #[test]
    fn adherence_is_absorbing() {
        let ds = panel("unit_id,A_1,A_2,A_3,Y_3\nu1,1,1,1,0\nu2,1,0,1,0\n");
        let d1 = Regime::static_rule("d1", 1);
        assert_eq!(adherence_indicators(&ds, &d1).unwrap(), vec![vec![1, 1, 1], vec![1, 0, 0]]);
    }

    #[test]
    fn never_treated_follow_the_zero_rule() {
        let ds = panel("unit_id,A_1,A_2,Y_2\nu1,0,0,0\nu2,1,0,1\n");
        let d3 = Regime::static_rule("d3", 0);
        assert_eq!(adherence_indicators(&ds, &d3).unwrap(), vec![vec![1, 1], vec![0, 0]]);
    }

    #[test]
    fn dynamic_rule_reads_pre_period_and_errors_when_short() {
        let ds = panel("unit_id,Y_pre_2,Y_pre_1,Y_1,A_1,Y_2,A_2,Y_3\nu1,8,9,10,1,2,1,0\nu2,1,2,3,0,2,0,0\n");
        let rule = Regime::median_window("d2", "Y", 2, 0.0, 5.0);
        assert_eq!(evaluate_regime(&rule, &ds, 0, 1).unwrap(), 1);
        assert_eq!(evaluate_regime(&rule, &ds, 1, 1).unwrap(), 0);
        // at t = 2 the window is (Y_1, Y_pre_1)
        assert_eq!(evaluate_regime(&rule, &ds, 0, 2).unwrap(), 1);
        let long = Regime::median_window("d2", "Y", 3, 0.0, 5.0);
        let err = evaluate_regime(&long, &ds, 1, 1).unwrap_err();
        match err {
            Error::InsufficientHistory { unit, time, window, .. } => {
                assert_eq!((unit.as_str(), time, window), ("u2", 1, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
