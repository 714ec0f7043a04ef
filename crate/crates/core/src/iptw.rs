//! Inverse-probability-of-treatment weighting with the treatment models of
//! the targeted estimator.

use crate::error::{Error, Result};
use crate::ltmle::{
    ate_contrast, clever_covariates, fit_g_sequence, outcome_dataset, Diagnostics, EstimateResult, EstimationOptions,
    Estimator, GFitSequence,
};
use crate::panel::{NodeRef, PanelDataset, Regime, RegimeAssignment};
use crate::stats::mean;

/// Weighted mean of `y` with influence curve.
///
/// The normalized form divides by `Σ h`; the unnormalized form by `n`.
/// Returns `(ψ, IC)`.
pub fn weighted_mean_ic(h: &[f64], y: &[f64], normalized: bool) -> Result<(f64, Vec<f64>)> {
    if h.len() != y.len() {
        return Err(Error::Mismatch("weights and outcomes differ in length".into()));
    }
    if h.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be non-negative".into()));
    }
    let total: f64 = h.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoAdherentUnits("all weights are zero".into()));
    }
    if normalized {
        let psi = h.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / total;
        let hbar = total / h.len() as f64;
        Ok((psi, h.iter().zip(y).map(|(a, b)| a * (b - psi) / hbar).collect()))
    } else {
        let hy: Vec<f64> = h.iter().zip(y).map(|(a, b)| a * b).collect();
        let psi = mean(&hy);
        Ok((psi, hy.into_iter().map(|v| v - psi).collect()))
    }
}

/// Weighted estimate of the mean of `outcome` under `regime`.
///
/// `g` must have been fitted on the outcome dataset (see
/// [`outcome_dataset`]); it is fitted here when absent.
pub fn iptw_regime_mean(
    dataset: &PanelDataset,
    outcome: &NodeRef,
    regime: &Regime,
    opts: &EstimationOptions,
    g: Option<&GFitSequence>,
    normalized: bool,
) -> Result<EstimateResult> {
    opts.check()?;
    let data = outcome_dataset(dataset, outcome, opts.lag)?;
    let owned;
    let g = match g {
        Some(g) => g,
        None => {
            owned = fit_g_sequence(&data, opts)?;
            &owned
        }
    };
    let assignment = RegimeAssignment::new(&data, regime)?;
    if assignment.positions.is_empty() {
        return Err(Error::InvalidDataset(format!("no intervention node precedes {outcome}")));
    }
    let probs = g.adherence_probabilities(&assignment, opts.g_floor);
    let cc = clever_covariates(&probs, &assignment.adherent, opts.truncation);
    let h = cc.h.last().expect("at least one intervention node");
    let y = data.column_at(data.ordering().len() - 1);
    let (psi, ic) = weighted_mean_ic(h, y, normalized).map_err(|e| match e {
        Error::NoAdherentUnits(_) => Error::NoAdherentUnits(regime.name.clone()),
        e => e,
    })?;
    let estimator = if normalized { Estimator::Iptw } else { Estimator::IptwHt };
    let mut r = EstimateResult::from_ic(estimator, &regime.name, outcome, psi, ic, data.fingerprint());
    r.diagnostics = Some(Diagnostics::from_clever(&cc));
    Ok(r)
}

pub fn iptw_ate(j: &EstimateResult, k: &EstimateResult) -> Result<EstimateResult> {
    ate_contrast(j, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_weights_give_sample_mean() {
        let (psi, ic) = weighted_mean_ic(&[1.0; 4], &[1.0, 2.0, 3.0, 6.0], true).unwrap();
        assert_eq!(psi, 3.0);
        assert_eq!(ic, vec![-2.0, -1.0, 0.0, 3.0]);
    }

    #[test]
    fn equal_weights_average() {
        assert_eq!(weighted_mean_ic(&[2.0, 2.0], &[1.0, 3.0], true).unwrap().0, 2.0);
    }

    #[test]
    fn unnormalized_form_divides_by_n() {
        assert_eq!(weighted_mean_ic(&[2.0, 0.0], &[1.0, 3.0], false).unwrap().0, 1.0);
    }

    #[test]
    fn zero_weights_are_an_error() {
        assert!(matches!(
            weighted_mean_ic(&[0.0, 0.0], &[1.0, 3.0], true),
            Err(Error::NoAdherentUnits(_))
        ));
    }
}
