use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::spec::{DgpSpec, NodeLaw};
use crate::error::{Error, Result};
use crate::panel::{NodeRef, PanelDataset, Regime, Role};
use crate::seed::SplitMix;
use crate::stats::expit;

/// A model whose intervention nodes follow a regime instead of their
/// structural equations.  Every other node keeps its definition.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionedSpec {
    base: DgpSpec,
    regime: Regime,
}

pub fn intervene_spec(spec: &DgpSpec, regime: &Regime) -> Result<InterventionedSpec> {
    regime.check()?;
    if spec.treatment_vars().is_empty() {
        return Err(Error::UnknownNode("model declares no treatment variable".into()));
    }
    if let Some(src) = regime.source_var() {
        if !spec.definitions().iter().any(|d| d.var == src) {
            return Err(Error::UnknownNode(src.to_string()));
        }
    }
    Ok(InterventionedSpec {
        base: spec.clone(),
        regime: regime.clone(),
    })
}

impl InterventionedSpec {
    pub fn base(&self) -> &DgpSpec {
        &self.base
    }

    pub fn regime(&self) -> &Regime {
        &self.regime
    }

    /// Re-intervenes on the underlying model; applying the same regime
    /// twice yields the same spec.
    pub fn intervene(&self, regime: &Regime) -> Result<InterventionedSpec> {
        intervene_spec(&self.base, regime)
    }

    pub fn simulate(&self, n: usize, seed: u64) -> Result<PanelDataset> {
        simulate(&self.base, Some(&self.regime), n, seed)
    }
}

/// Anything that can generate a panel.
pub trait Simulate {
    fn simulate_panel(&self, n: usize, seed: u64) -> Result<PanelDataset>;
}

impl Simulate for DgpSpec {
    fn simulate_panel(&self, n: usize, seed: u64) -> Result<PanelDataset> {
        simulate(self, None, n, seed)
    }
}

impl Simulate for InterventionedSpec {
    fn simulate_panel(&self, n: usize, seed: u64) -> Result<PanelDataset> {
        self.simulate(n, seed)
    }
}

pub fn simulate_panel(spec: &impl Simulate, n: usize, seed: u64) -> Result<PanelDataset> {
    spec.simulate_panel(n, seed)
}

/// Draws unit `unit` node by node up to position `upto` inclusive.
///
/// The stream for each (unit, node) pair is independent of every other, so
/// two regimes simulated with the same seed share their random numbers.
fn draw_unit(
    spec: &DgpSpec,
    regime: Option<&Regime>,
    seed: u64,
    unit: usize,
    upto: usize,
    values: &mut [f64],
) -> Result<()> {
    let ordering = spec.ordering();
    let source = regime.and_then(Regime::source_var);
    for p in 0..=upto {
        let node = ordering.node(p);
        if let (Some(r), Role::Intervention) = (regime, ordering.role(p)) {
            let prescribed = r
                .prescribe(node.time, |s| {
                    let src = source?;
                    ordering
                        .position(&NodeRef::new(src, s))
                        .filter(|&q| q < p)
                        .map(|q| values[q])
                })
                .map_err(|available| Error::InsufficientHistory {
                    unit: (unit + 1).to_string(),
                    time: node.time,
                    var: source.unwrap_or_default().to_string(),
                    window: match &r.rule {
                        crate::panel::RegimeRule::MedianWindow { window, .. } => *window,
                        crate::panel::RegimeRule::Static { .. } => 0,
                    },
                    available,
                })?;
            values[p] = f64::from(prescribed);
            continue;
        }
        values[p] = match &spec.laws()[p] {
            NodeLaw::Normal { mean, sd } => {
                let m = mean.eval(values);
                if *sd == 0.0 {
                    m
                } else {
                    let z: f64 = SplitMix::new(seed, &[unit as u64, p as u64]).sample(StandardNormal);
                    m + sd * z
                }
            }
            NodeLaw::Bernoulli { logit } => {
                let prob = expit(logit.eval(values));
                let u: f64 = SplitMix::new(seed, &[unit as u64, p as u64]).random();
                f64::from(u8::from(u < prob))
            }
        };
    }
    Ok(())
}

fn simulate(spec: &DgpSpec, regime: Option<&Regime>, n: usize, seed: u64) -> Result<PanelDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("cannot simulate zero units".into()));
    }
    let width = spec.ordering().len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut v = vec![0.0; width];
            draw_unit(spec, regime, seed, i, width - 1, &mut v).map(|_| v)
        })
        .collect::<Result<_>>()?;
    let columns = (0..width).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let ids = (1..=n).map(|i| i.to_string()).collect();
    PanelDataset::new(ids, spec.ordering().clone(), columns, Default::default())
}

/// Monte Carlo truth for the contrast of two regimes.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct McTruth {
    pub psi: f64,
    pub mc_se: f64,
    pub mean_j: f64,
    pub mean_k: f64,
    pub reps: usize,
}

pub const MIN_MC_REPS: usize = 10_000;

/// E[Y | do(j)] - E[Y | do(k)] by simulation with common random numbers.
///
/// Both arms share each replicate's random streams, so the standard error
/// is that of the paired differences.
pub fn mc_truth(
    spec: &DgpSpec,
    regime_j: &Regime,
    regime_k: &Regime,
    outcome: &NodeRef,
    reps: usize,
    seed: u64,
) -> Result<McTruth> {
    if reps < MIN_MC_REPS {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo truth needs at least {MIN_MC_REPS} replicates, got {reps}"
        )));
    }
    intervene_spec(spec, regime_j)?;
    intervene_spec(spec, regime_k)?;
    let upto = spec
        .ordering()
        .position(outcome)
        .ok_or_else(|| Error::UnknownNode(outcome.to_string()))?;

    const CHUNK: usize = 4096;
    let chunks: Vec<[f64; 4]> = (0..reps.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut v = vec![0.0; upto + 1];
            let mut acc = [0.0; 4];
            for i in c * CHUNK..((c + 1) * CHUNK).min(reps) {
                draw_unit(spec, Some(regime_j), seed, i, upto, &mut v)?;
                let yj = v[upto];
                draw_unit(spec, Some(regime_k), seed, i, upto, &mut v)?;
                let yk = v[upto];
                acc[0] += yj;
                acc[1] += yk;
                acc[2] += yj - yk;
                acc[3] += (yj - yk) * (yj - yk);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut s = [0.0; 4];
    for c in &chunks {
        for (a, b) in s.iter_mut().zip(c) {
            *a += b;
        }
    }
    let r = reps as f64;
    let mean_j = s[0] / r;
    let mean_k = s[1] / r;
    let mean_d = s[2] / r;
    let var_d = ((s[3] - r * mean_d * mean_d) / (r - 1.0)).max(0.0);
    Ok(McTruth {
        psi: mean_j - mean_k,
        mc_se: var_d.sqrt() / r.sqrt(),
        mean_j,
        mean_k,
        reps,
    })
}
