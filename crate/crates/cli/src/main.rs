use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use survcausal::cohort::{write_cohort_csv, write_longitudinal_file};
use survcausal::domain::EstimatorKind;
use survcausal::experiment::{
    compute_experiment, emit_plot_data, fit_summaries, load_records, prepare_cohort, read_results,
    run_ablation, run_experiment, write_reports, ExperimentConfig, InputSpec, ModelGrid, Stages,
};
use survcausal::synth::{generate, oracle_ate, DgpConfig};

/// Treatment effects on time to an adverse event, from survival models.
#[derive(Parser)]
#[command(name = "survcausal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic longitudinal dataset.
    Simulate(SimulateArgs),
    /// Build and trim the snapshot cohorts and write them as CSV.
    Preprocess(Common),
    /// Select and fit each model on the first repeat's training split.
    Fit(Common),
    /// Treatment-effect tables only.
    Estimate(Common),
    /// Test-split metrics only.
    Evaluate(Common),
    /// Full run with and without the risk-score features.
    Ablate(Common),
    /// Rewrite tables and plot data from a saved results.json.
    Report(ReportArgs),
    /// Metrics, effects, tables and plot data.
    Run(Common),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file with generator settings; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    /// Output CSV in the longitudinal schema.
    #[arg(long, default_value = "records.csv")]
    out: PathBuf,
    /// Also write per-subject propensities and potential RMETs here.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Print the Monte-Carlo oracle ATE with this many draws.
    #[arg(long)]
    oracle_mc: Option<usize>,
}

#[derive(Args)]
struct Common {
    /// Experiment JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Longitudinal CSV input. Without it the config's input is used.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Split seed, and generator seed for synthetic input.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated snapshot months.
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<u32>>,
    #[arg(long)]
    threshold_days: Option<u8>,
    #[arg(long)]
    no_risk_scores: bool,
    /// Comma-separated, e.g. `t_learner,matching_k5,unadjusted_km`.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    /// Comma-separated, e.g. `cox_ph,random_survival_forest`.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    horizon: Option<u32>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    oracle_mc: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)
                .with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &self.input {
            cfg.input = InputSpec::Csv { path: p.clone() };
        }
        if let Some(seed) = self.seed {
            cfg.preprocess.seed = seed;
            if let InputSpec::Synthetic(dgp) = &mut cfg.input {
                dgp.seed = seed;
            }
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(taus) = &self.taus {
            cfg.preprocess.taus = taus.clone();
        }
        if let Some(days) = self.threshold_days {
            cfg.preprocess.threshold_days = days;
        }
        if self.no_risk_scores {
            cfg.preprocess.include_risk_scores = false;
        }
        if let Some(names) = &self.estimators {
            cfg.estimators = names
                .iter()
                .map(|n| n.parse::<EstimatorKind>())
                .collect::<Result<_, _>>()?;
        }
        if let Some(names) = &self.models {
            cfg.models = names
                .iter()
                .map(|n| ModelGrid::from_name(n))
                .collect::<Result<_, _>>()?;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(r) = self.repeats {
            cfg.preprocess.n_repeats = r;
        }
        if let Some(mc) = self.oracle_mc {
            cfg.oracle_mc = mc;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut dgp = match &args.config {
        Some(p) => serde_json::from_str::<DgpConfig>(&std::fs::read_to_string(p)?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => DgpConfig::default(),
    };
    if let Some(seed) = args.seed {
        dgp.seed = seed;
    }
    if let Some(n) = args.n {
        dgp.n = n;
    }
    let data = generate(&dgp)?;
    write_longitudinal_file(&args.out, &data.records)?;
    if let Some(path) = &args.truth {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &data.truth)?;
    }
    println!("wrote {} subjects to {}", data.records.len(), args.out.display());
    if let Some(n_mc) = args.oracle_mc {
        let o = oracle_ate(&dgp, n_mc)?;
        println!("oracle ATE {:.4} (se {:.4}, {} draws)", o.ate, o.se, o.n_mc);
    }
    Ok(())
}

fn preprocess(cfg: &ExperimentConfig) -> Result<()> {
    let records = load_records(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    for &tau in &cfg.preprocess.taus {
        let (cohort, n_snapshot) = prepare_cohort(&records, tau, cfg)?;
        let path = cfg.out_dir.join(format!("cohort_{tau}.csv"));
        write_cohort_csv(BufWriter::new(File::create(&path)?), &cohort)?;
        println!(
            "tau {tau}: {n_snapshot} in snapshot, {} after trimming, {} features -> {}",
            cohort.len(),
            cohort.schema.len(),
            path.display()
        );
    }
    Ok(())
}

fn fit(cfg: &ExperimentConfig) -> Result<()> {
    let fits = fit_summaries(cfg, 0)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut ok = Vec::new();
    for f in fits {
        match f {
            Ok(s) => {
                println!(
                    "tau {} {}: {} (validation C^td {})",
                    s.tau,
                    s.model,
                    s.spec,
                    s.validation_c_td.map_or("n/a".into(), |c| format!("{c:.3}"))
                );
                ok.push(s);
            }
            Err(e) => log::warn!("fit failed: {e}"),
        }
    }
    let path = cfg.out_dir.join("fits.json");
    serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &ok)?;
    Ok(())
}

fn staged(cfg: &ExperimentConfig, stages: Stages) -> Result<()> {
    let results = compute_experiment(cfg, stages)?;
    write_reports(&results, &cfg.out_dir)?;
    if stages.effects {
        emit_plot_data(&results, &cfg.out_dir)?;
    }
    summarize(&results.taus.iter().map(|t| t.tau).collect::<Vec<_>>(), &cfg.out_dir);
    Ok(())
}

fn summarize(taus: &[u32], out: &Path) {
    println!("tables written to {} for tau {:?}", out.display(), taus);
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Preprocess(c) => preprocess(&c.config()?),
        Command::Fit(c) => fit(&c.config()?),
        Command::Estimate(c) => staged(
            &c.config()?,
            Stages {
                metrics: false,
                effects: true,
            },
        ),
        Command::Evaluate(c) => staged(
            &c.config()?,
            Stages {
                metrics: true,
                effects: false,
            },
        ),
        Command::Run(c) => {
            let cfg = c.config()?;
            let results = run_experiment(&cfg)?;
            if let Some(o) = results.oracle {
                println!("oracle ATE {:.4} (se {:.4})", o.ate, o.se);
            }
            summarize(&results.taus.iter().map(|t| t.tau).collect::<Vec<_>>(), &cfg.out_dir);
            Ok(())
        }
        Command::Ablate(c) => {
            let cfg = c.config()?;
            if !cfg.preprocess.include_risk_scores {
                bail!("ablation compares runs with and without risk scores; drop --no-risk-scores");
            }
            let res = run_ablation(&cfg)?;
            for r in &res.rows {
                println!(
                    "tau {} {} {}: full {} ablated {}",
                    r.tau,
                    r.model,
                    r.estimator,
                    r.full_mean.map_or("failed".into(), |v| format!("{v:.3}")),
                    r.ablated_mean.map_or("failed".into(), |v| format!("{v:.3}")),
                );
            }
            Ok(())
        }
        Command::Report(a) => {
            let results = read_results(&a.results)?;
            write_reports(&results, &a.out)?;
            emit_plot_data(&results, &a.out)?;
            summarize(&results.taus.iter().map(|t| t.tau).collect::<Vec<_>>(), &a.out);
            Ok(())
        }
    }
}
