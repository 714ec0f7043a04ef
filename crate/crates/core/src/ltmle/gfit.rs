use serde::Serialize;

use super::{design_matrix, EstimationOptions};
use crate::error::{Error, Result};
use crate::learners::{Family, TrainingTask};
use crate::panel::{select_covariates, ModelTarget, NodeRef, PanelDataset, RegimeAssignment};
use crate::superlearner::{CvPlan, SuperLearnerFit, WeightRow};

/// Default floor applied to each predicted adherence probability.
pub const G_FLOOR: f64 = 0.01;
/// Default truncation level of the cumulative adherence probability.
pub const TRUNCATION_LEVEL: f64 = 0.01;

/// Fitted treatment model at one intervention node.
#[derive(Debug, Clone, Serialize)]
pub struct GModel {
    pub node: NodeRef,
    pub covariates: Vec<NodeRef>,
    /// Predicted P(A_t = 1 | history) per unit.
    #[serde(skip)]
    pub p_treat: Vec<f64>,
    /// Set when every unit had the same treatment and the model is the
    /// empirical constant.
    pub degenerate: bool,
    pub weights: Vec<WeightRow>,
}

/// Treatment models for every intervention node of a dataset.
///
/// The models predict P(A_t = 1 | past) and are shared by all regimes: for
/// a deterministic rule the adherence probability is that prediction or its
/// complement, depending on the prescribed treatment.
#[derive(Debug, Clone, Serialize)]
pub struct GFitSequence {
    pub models: Vec<GModel>,
    #[serde(skip)]
    pub(crate) dataset_fingerprint: u64,
}

pub fn fit_g_sequence(dataset: &PanelDataset, opts: &EstimationOptions) -> Result<GFitSequence> {
    let ordering = dataset.ordering();
    let plan = CvPlan::new(dataset.unit_ids(), opts.folds, opts.seed)?;
    let mut models = Vec::new();
    for pos in ordering.intervention_positions() {
        let node = ordering.node(pos).clone();
        let a = dataset.column_at(pos);
        let n = a.len() as f64;
        let share = a.iter().sum::<f64>() / n;
        if share == 0.0 || share == 1.0 {
            log::warn!("treatment at {node} is constant; using the empirical probability {share}");
            models.push(GModel {
                node,
                covariates: Vec::new(),
                p_treat: vec![share; a.len()],
                degenerate: true,
                weights: Vec::new(),
            });
            continue;
        }
        let covariates: Vec<NodeRef> =
            select_covariates(&opts.strategy, ordering, ModelTarget::G { time: node.time })?
                .into_iter()
                .filter(|c| !opts.g_exclude.contains(&c.var))
                .collect();
        if covariates.is_empty() {
            return Err(Error::NoAdmissiblePredictors(format!("g at {}", node.time)));
        }
        let x = design_matrix(dataset, &covariates, None)?;
        let task = TrainingTask::unweighted(x.clone(), a.to_vec(), Family::QuasiBinomial)?;
        let sl = SuperLearnerFit::fit(
            &task,
            &opts.g_library,
            &plan,
            opts.meta,
            crate::seed::derive(opts.seed, &[0x67, pos as u64]),
        )?;
        let p_treat = sl.predict(&x)?;
        models.push(GModel {
            node,
            covariates,
            p_treat,
            degenerate: false,
            weights: sl.weight_table(),
        });
    }
    Ok(GFitSequence {
        models,
        dataset_fingerprint: dataset.fingerprint(),
    })
}

impl GFitSequence {
    /// Builds a sequence from known treatment probabilities, one vector per
    /// intervention node of `dataset`.
    pub fn from_probabilities(dataset: &PanelDataset, p_treat: Vec<Vec<f64>>) -> Result<Self> {
        let positions = dataset.ordering().intervention_positions();
        if positions.len() != p_treat.len() || p_treat.iter().any(|p| p.len() != dataset.n_units()) {
            return Err(Error::Mismatch("one probability per unit and intervention node required".into()));
        }
        Ok(GFitSequence {
            models: positions
                .iter()
                .zip(p_treat)
                .map(|(&pos, p)| GModel {
                    node: dataset.ordering().node(pos).clone(),
                    covariates: Vec::new(),
                    p_treat: p,
                    degenerate: false,
                    weights: Vec::new(),
                })
                .collect(),
            dataset_fingerprint: dataset.fingerprint(),
        })
    }

    pub(crate) fn check_matches(&self, dataset: &PanelDataset) -> Result<()> {
        if self.dataset_fingerprint != dataset.fingerprint() {
            return Err(Error::Mismatch("treatment models were fitted on a different dataset".into()));
        }
        Ok(())
    }

    /// Floored probability of following the regime at each node: `[k][i]`.
    pub fn adherence_probabilities(&self, assignment: &RegimeAssignment, floor: f64) -> Vec<Vec<f64>> {
        self.models
            .iter()
            .zip(&assignment.prescribed)
            .map(|(m, d)| {
                m.p_treat
                    .iter()
                    .zip(d)
                    .map(|(&p, &di)| if di == 1 { p } else { 1.0 - p }.max(floor))
                    .collect()
            })
            .collect()
    }
}

/// Inverse cumulative adherence probabilities of every unit at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct CleverCovariates {
    /// `cumulative[k][i]`: product of the floored probabilities up to node `k`.
    pub cumulative: Vec<Vec<f64>>,
    /// `truncated[k][i]`: the cumulative product fell below the floor.
    pub truncated: Vec<Vec<bool>>,
    /// `h[k][i] = adherent[k][i] / max(cumulative[k][i], truncation)`.
    pub h: Vec<Vec<f64>>,
}

pub fn clever_covariates(g: &[Vec<f64>], adherent: &[Vec<u8>], truncation: f64) -> CleverCovariates {
    let n = g.first().map_or(0, Vec::len);
    let mut cum = vec![1.0; n];
    let mut out = CleverCovariates {
        cumulative: Vec::with_capacity(g.len()),
        truncated: Vec::with_capacity(g.len()),
        h: Vec::with_capacity(g.len()),
    };
    for (gk, ak) in g.iter().zip(adherent) {
        for (c, v) in cum.iter_mut().zip(gk) {
            *c *= v;
        }
        out.truncated.push(cum.iter().map(|&c| c < truncation).collect());
        out.h.push(
            cum.iter()
                .zip(ak)
                .map(|(&c, &a)| f64::from(a) / c.max(truncation))
                .collect(),
        );
        out.cumulative.push(cum.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adherent_half_probabilities_give_eight() {
        let g = vec![vec![0.5]; 3];
        let c = clever_covariates(&g, &[vec![1], vec![1], vec![1]], TRUNCATION_LEVEL);
        assert_eq!(c.h[2][0], 8.0);
    }

    #[test]
    fn deviation_zeroes_later_weights() {
        let g = vec![vec![0.5]; 3];
        let c = clever_covariates(&g, &[vec![1], vec![0], vec![0]], TRUNCATION_LEVEL);
        assert!(c.h[0][0] > 0.0);
        assert_eq!((c.h[1][0], c.h[2][0]), (0.0, 0.0));
    }

    #[test]
    fn small_products_are_truncated() {
        let g = vec![vec![0.1], vec![0.1], vec![0.1]];
        let c = clever_covariates(&g, &[vec![1], vec![1], vec![1]], TRUNCATION_LEVEL);
        assert!((c.cumulative[2][0] - 0.001).abs() < 1e-15);
        assert_eq!(c.h[2][0], 100.0);
        assert!(c.truncated[2][0] && !c.truncated[0][0]);
    }
}
