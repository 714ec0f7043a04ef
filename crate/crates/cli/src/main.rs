mod config;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ltmle_core::dgp::{intervene_spec, mc_truth, simulate_panel};
use ltmle_core::iptw::iptw_regime_mean;
use ltmle_core::ltmle::{
    ate_contrast, diagnostics_summary, estimate_regimes, fit_g_sequence, outcome_dataset, write_diagnostics_csv,
    write_ic_csv, EstimateResult, GFitSequence,
};
use ltmle_core::panel::{validate_dataset, PanelDataset};
use ltmle_core::study::{run_replications, summarize_metrics, write_metrics_csv, write_raw_csv, StudyConfig};
use ltmle_core::superlearner::WeightRow;
use serde::{Deserialize, Serialize};

use config::{EstimateConfig, SimulateConfig, TruthConfig};
use output::{config_hash, ErrorReport, OutDir, FORMAT_VERSION};

#[derive(Parser)]
#[command(name = "ltmle", version, about = "Longitudinal targeted estimation of treatment-regime effects")]
struct Cli {
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate regime means and contrasts on a panel.
    Estimate(ConfigArg),
    /// Simulate a panel from a DGP.
    Simulate(ConfigArg),
    /// Monte Carlo truth of a regime contrast.
    Truth(ConfigArg),
    /// Run a replicated simulation study.
    Replicate(ReplicateArgs),
    /// Re-emit weight diagnostics from a saved estimate.
    Diagnose(DiagnoseArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Estimate(_) => "estimate",
            Command::Simulate(_) => "simulate",
            Command::Truth(_) => "truth",
            Command::Replicate(_) => "replicate",
            Command::Diagnose(_) => "diagnose",
        }
    }
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct ReplicateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the replication count.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// An `estimate.json` written by `estimate`, or the directory holding it.
    #[arg(long)]
    run: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = ErrorReport::new(name, &e);
            let text = serde_json::to_string_pretty(&report).unwrap_or_else(|_| e.to_string());
            eprintln!("{text}");
            if let Ok(dir) = OutDir::create(&cli.out) {
                let _ = dir.write_json("error.json", &report);
            }
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let jobs = cli.jobs.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building the worker pool")?;
    pool.install(|| match &cli.command {
        Command::Estimate(a) => estimate(&a.config, cli),
        Command::Simulate(a) => simulate(&a.config, cli),
        Command::Truth(a) => truth(&a.config, cli),
        Command::Replicate(a) => replicate(a, cli),
        Command::Diagnose(a) => diagnose(&a.run, cli),
    })
}

/// Learner weights of one fitted model.
#[derive(Serialize, Deserialize)]
struct ModelWeights {
    model: String,
    regime: Option<String>,
    weights: Vec<WeightRow>,
}

#[derive(Serialize, Deserialize)]
struct EstimateOutput {
    format_version: u32,
    config_hash: String,
    outcome: String,
    n: usize,
    reference: String,
    ltmle: Vec<EstimateResult>,
    ltmle_contrasts: Vec<EstimateResult>,
    iptw: Vec<EstimateResult>,
    iptw_contrasts: Vec<EstimateResult>,
    learner_weights: Vec<ModelWeights>,
}

fn read_panel(path: &Path, cfg: &EstimateConfig) -> Result<PanelDataset> {
    let file = fs::File::open(path).with_context(|| format!("opening panel {}", path.display()))?;
    let data = PanelDataset::read_csv(file, &cfg.schema()).with_context(|| format!("reading panel {}", path.display()))?;
    validate_dataset(&data)
        .into_result()
        .with_context(|| format!("validating panel {}", path.display()))?;
    Ok(data)
}

fn contrasts(results: &[EstimateResult], reference: usize) -> Result<Vec<EstimateResult>> {
    results
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != reference)
        .map(|(_, r)| Ok(ate_contrast(r, &results[reference])?))
        .collect()
}

fn estimate(path: &Path, cli: &Cli) -> Result<()> {
    let (mut cfg, base): (EstimateConfig, _) = config::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let hash = config_hash(&cfg)?;
    let reference = cfg.reference_index()?;
    let opts = cfg.options();
    let dataset = read_panel(&base.join(&cfg.data), &cfg)?;
    let data = outcome_dataset(&dataset, &cfg.outcome, cfg.lag)?;
    let g: GFitSequence = fit_g_sequence(&data, &opts)?;
    let ltmle = estimate_regimes(&data, &cfg.outcome, &cfg.regimes, &opts, Some(&g))?;
    let ltmle_contrasts = contrasts(&ltmle, reference)?;

    let mut iptw = Vec::new();
    let mut iptw_ht = Vec::new();
    if cfg.iptw {
        for r in &cfg.regimes {
            iptw.push(iptw_regime_mean(&data, &cfg.outcome, r, &opts, Some(&g), true)?);
            if cfg.iptw_ht {
                iptw_ht.push(iptw_regime_mean(&data, &cfg.outcome, r, &opts, Some(&g), false)?);
            }
        }
    }
    let mut iptw_contrasts = if iptw.is_empty() { Vec::new() } else { contrasts(&iptw, reference)? };
    if !iptw_ht.is_empty() {
        iptw_contrasts.extend(contrasts(&iptw_ht, reference)?);
        iptw.extend(iptw_ht);
    }

    let mut learner_weights: Vec<ModelWeights> = g
        .models
        .iter()
        .map(|m| ModelWeights {
            model: format!("g {}", m.node),
            regime: None,
            weights: m.weights.clone(),
        })
        .collect();
    for r in &ltmle {
        for s in &r.steps {
            learner_weights.push(ModelWeights {
                model: format!("Q {}", s.anchor),
                regime: Some(r.regime.clone()),
                weights: s.weights.clone(),
            });
        }
    }

    let out = OutDir::create(&cli.out)?;
    let result = EstimateOutput {
        format_version: FORMAT_VERSION,
        config_hash: hash,
        outcome: cfg.outcome.to_string(),
        n: data.n_units(),
        reference: cfg.regimes[reference].name.clone(),
        ltmle,
        ltmle_contrasts,
        iptw,
        iptw_contrasts,
        learner_weights,
    };
    out.write_json("estimate.json", &result)?;
    write_diagnostics_csv(&diagnostics_summary(&result.ltmle)?, out.create_file("diagnostics.csv")?)?;
    write_weights_csv(&result.learner_weights, out.create_file("weights.csv")?)?;
    if cfg.ic_csv {
        let mut all = result.ltmle.clone();
        all.extend(result.ltmle_contrasts.iter().cloned());
        write_ic_csv(data.unit_ids(), &all, out.create_file("ic.csv")?)?;
    }
    for c in &result.ltmle_contrasts {
        println!("{}: {:.4} [{:.4}, {:.4}]", c.regime, c.psi, c.ci[0], c.ci[1]);
    }
    Ok(())
}

fn write_weights_csv(models: &[ModelWeights], out: fs::File) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["model", "regime", "learner", "screener", "weight", "cv_risk"])?;
    for m in models {
        for r in &m.weights {
            w.write_record([
                m.model.as_str(),
                m.regime.as_deref().unwrap_or(""),
                r.learner.as_str(),
                r.screener.as_str(),
                &r.weight.to_string(),
                &r.cv_risk.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_writer(out: fs::File) -> csv::Writer<fs::File> {
    csv::Writer::from_writer(out)
}

fn diagnose(run: &Path, cli: &Cli) -> Result<()> {
    let path = if run.is_dir() { run.join("estimate.json") } else { run.to_path_buf() };
    let run = path.as_path();
    let text = fs::read_to_string(run).with_context(|| format!("reading {}", run.display()))?;
    let saved: EstimateOutput = serde_json::from_str(&text).with_context(|| format!("parsing {}", run.display()))?;
    let out = OutDir::create(&cli.out)?;
    let table = diagnostics_summary(&saved.ltmle)?;
    write_diagnostics_csv(&table, out.create_file("diagnostics.csv")?)?;
    write_diagnostics_csv(&table, std::io::stdout())?;
    Ok(())
}

fn simulate(path: &Path, cli: &Cli) -> Result<()> {
    let (mut cfg, base): (SimulateConfig, _) = config::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let spec = config::load_dgp(&cfg.dgp, &base)?;
    let data = match &cfg.intervene {
        Some(r) => simulate_panel(&intervene_spec(&spec, r)?, cfg.n, cfg.seed)?,
        None => simulate_panel(&spec, cfg.n, cfg.seed)?,
    };
    let out = OutDir::create(&cli.out)?;
    data.write_csv(out.create_file("panel.csv")?)?;
    Ok(())
}

#[derive(Serialize)]
struct TruthOutput {
    format_version: u32,
    config_hash: String,
    dgp: String,
    outcome: String,
    regimes: [String; 2],
    psi_true: f64,
    mc_se: f64,
    mean_j: f64,
    mean_k: f64,
    reps: usize,
    seed: u64,
}

fn truth(path: &Path, cli: &Cli) -> Result<()> {
    let (mut cfg, base): (TruthConfig, _) = config::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let hash = config_hash(&cfg)?;
    let spec = config::load_dgp(&cfg.dgp, &base)?;
    let outcome = cfg.outcome.clone().unwrap_or_else(|| spec.outcome());
    let [j, k] = cfg.regimes();
    let t = mc_truth(&spec, &j, &k, &outcome, cfg.reps, cfg.seed)?;
    let out = OutDir::create(&cli.out)?;
    out.write_json(
        "truth.json",
        &TruthOutput {
            format_version: FORMAT_VERSION,
            config_hash: hash,
            dgp: cfg.dgp.clone(),
            outcome: outcome.to_string(),
            regimes: [j.name, k.name],
            psi_true: t.psi,
            mc_se: t.mc_se,
            mean_j: t.mean_j,
            mean_k: t.mean_k,
            reps: t.reps,
            seed: cfg.seed,
        },
    )?;
    println!("{:.6} (MC s.e. {:.6})", t.psi, t.mc_se);
    Ok(())
}

#[derive(Serialize)]
struct Provenance {
    format_version: u32,
    config_hash: String,
    study: String,
    seed: u64,
    reps: usize,
    psi_true: f64,
    versions: Versions,
    wall_time_secs: f64,
}

#[derive(Serialize)]
struct Versions {
    ltmle_cli: &'static str,
    ltmle_core: &'static str,
}

fn replicate(args: &ReplicateArgs, cli: &Cli) -> Result<()> {
    let start = Instant::now();
    let (mut cfg, base): (StudyConfig, _) = config::load(&args.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    cfg.check()?;
    let hash = config_hash(&cfg)?;
    let spec = cfg.load_dgp(&base)?;
    let psi_true = cfg.resolve_truth(&spec)?;
    let rows = run_replications(&cfg, &spec)?;
    let metrics = summarize_metrics(&rows, psi_true);
    let out = OutDir::create(&cli.out)?;
    write_raw_csv(&rows, out.create_file("raw.csv")?)?;
    write_metrics_csv(&metrics, out.create_file("metrics.csv")?)?;
    out.write_json(
        "provenance.json",
        &Provenance {
            format_version: FORMAT_VERSION,
            config_hash: hash,
            study: cfg.name.clone(),
            seed: cfg.seed,
            reps: cfg.reps,
            psi_true,
            versions: Versions {
                ltmle_cli: env!("CARGO_PKG_VERSION"),
                ltmle_core: ltmle_core::VERSION,
            },
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
    )?;
    write_metrics_csv(&metrics, std::io::stdout())?;
    Ok(())
}
