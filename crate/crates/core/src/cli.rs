//! Command-line front end of the `conjbn` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::graph::{build_network, GraphError};
use crate::inference::{Backend, QueryResult};
use crate::ingest::{read_track_file, write_tracks, IngestError, TrackFormat};
use crate::pipeline::{
    evaluate_trial, load_trial, read_query_results, run, write_query_results, write_rank_artifacts, PipelineError,
    RunManifest, TrialManifest,
};
use crate::ranking::{render_report, TotalMode};
use crate::synth::{generate_trial, SynthConfig, SynthError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "conjbn", version, about = "Rank conjugation models on tracked-cell data")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and repair every trial of a manifest, reporting warnings.
    Validate(ManifestArgs),
    /// Write the edge list of every (trial, model) network.
    Build(BuildArgs),
    /// Evaluate queries and write per-trial result tables, without ranking.
    Query(RunArgs),
    /// Rank models from previously written query result tables.
    Rank(RankArgs),
    /// Generate synthetic trials with ground truth and a ready-to-run manifest.
    Synth(SynthArgs),
    /// Full pipeline: queries, rankings, exclusion log and summary.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    #[arg(long, env = "CONJBN_MANIFEST")]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub manifest: ManifestArgs,
    #[arg(long, env = "CONJBN_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub manifest: ManifestArgs,
    #[arg(long, env = "CONJBN_BACKEND", value_enum)]
    pub backend: Option<Backend>,
    #[arg(long, env = "CONJBN_JOBS")]
    pub jobs: Option<usize>,
    #[arg(long, env = "CONJBN_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, env = "CONJBN_BUDGET_SECONDS")]
    pub budget_seconds: Option<f64>,
    #[arg(long, env = "CONJBN_BUDGET_COST")]
    pub budget_cost: Option<f64>,
    #[arg(long, env = "CONJBN_TOTAL_MODE", value_enum)]
    pub total_mode: Option<TotalMode>,
}

impl RunArgs {
    /// The manifest with command-line overrides applied.
    pub fn resolve(&self) -> Result<RunManifest, CliError> {
        let mut m = RunManifest::load(&self.manifest.manifest)?;
        if let Some(b) = self.backend {
            m.backend = b;
        }
        if let Some(j) = self.jobs {
            m.jobs = Some(j);
        }
        if let Some(o) = &self.out {
            m.output_dir = o.clone();
        }
        if let Some(s) = self.budget_seconds {
            m.budgets.seconds = s;
        }
        if let Some(c) = self.budget_cost {
            m.budgets.cost = c;
        }
        if let Some(t) = self.total_mode {
            m.total_mode = t;
        }
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Query result tables written by `query` or `run`.
    #[arg(required = true)]
    pub results: Vec<PathBuf>,
    #[arg(long, env = "CONJBN_OUT", default_value = "out")]
    pub out: PathBuf,
    #[arg(long, env = "CONJBN_TOTAL_MODE", value_enum, default_value_t = TotalMode::Linear)]
    pub total_mode: TotalMode,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Simulator settings (TOML); defaults when absent.
    #[arg(long, env = "CONJBN_SYNTH_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "CONJBN_SEED")]
    pub seed: Option<u64>,
    /// Number of trials, seeded consecutively.
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, env = "CONJBN_OUT", default_value = "synth")]
    pub out: PathBuf,
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate(a) => validate(a),
        Command::Build(a) => build(a),
        Command::Query(a) => query(a),
        Command::Rank(a) => rank_results(a),
        Command::Synth(a) => synth(a),
        Command::Run(a) => {
            let m = a.resolve()?;
            let summary = run(&m)?;
            print!("{}", render_report(&summary.report));
            if summary.incalculable > 0 {
                eprintln!("warning: {} incalculable queries", summary.incalculable);
            }
            Ok(())
        }
    }
}

fn validate(a: &ManifestArgs) -> Result<(), CliError> {
    let m = RunManifest::load(&a.manifest)?;
    m.validate()?;
    let models = m.load_models()?;
    for model in &models {
        for t in &m.trials {
            model
                .validate(t.frame_interval_min)
                .map_err(|e| CliError::Usage(format!("model {}: {e}", model.name)))?;
        }
    }
    for t in &m.trials {
        let d = load_trial(t, &models)?;
        println!(
            "{}: {} frames, {} observations, {} roots, {} plasmid-loss events, {} warnings",
            t.trial_id,
            d.frame_count(),
            d.cells.len(),
            d.forest.roots.len(),
            d.loss_events.len(),
            d.warnings.len()
        );
        for w in &d.warnings {
            println!("  {w:?}");
        }
    }
    Ok(())
}

fn build(a: &BuildArgs) -> Result<(), CliError> {
    let m = RunManifest::load(&a.manifest.manifest)?;
    m.validate()?;
    let models = m.load_models()?;
    let dir = a.out.clone().unwrap_or_else(|| m.output_dir.join("graphs"));
    for t in &m.trials {
        let d = load_trial(t, &models)?;
        let tdir = dir.join(&t.trial_id);
        fs::create_dir_all(&tdir).map_err(io_err(&tdir))?;
        for model in &models {
            let net = build_network(&d, model)?;
            let path = tdir.join(format!("{}.edges", model.name));
            let mut buf = Vec::new();
            net.write_dump(&mut buf).map_err(io_err(&path))?;
            fs::write(&path, buf).map_err(io_err(&path))?;
            println!("{}: {} variables, {} edges", path.display(), net.var_count(), net.edge_count());
        }
    }
    Ok(())
}

fn query(a: &RunArgs) -> Result<(), CliError> {
    let m = a.resolve()?;
    let models = m.load_models()?;
    let dir = m.output_dir.join("queries");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let pool = thread_pool(m.jobs)?;
    for t in &m.trials {
        let d = load_trial(t, &models)?;
        let results = pool.install(|| evaluate_trial(&d, &models, m.backend, &m.budgets))?;
        let path = dir.join(format!("{}.csv", t.trial_id));
        let mut buf = Vec::new();
        write_query_results(&results, &mut buf)?;
        fs::write(&path, buf).map_err(io_err(&path))?;
        println!("{}: {} results", path.display(), results.len());
    }
    Ok(())
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Usage(e.to_string()))
}

fn rank_results(a: &RankArgs) -> Result<(), CliError> {
    let mut all: Vec<QueryResult> = Vec::new();
    for p in &a.results {
        let f = fs::File::open(p).map_err(io_err(p))?;
        all.extend(read_query_results(f)?);
    }
    let mut models: Vec<String> = Vec::new();
    for r in &all {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
    }
    let report = write_rank_artifacts(&a.out, &models, &all, a.total_mode)?;
    print!("{}", render_report(&report));
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<(), CliError> {
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            toml::from_str::<SynthConfig>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let base_id = cfg.trial_id.clone();
    let base_seed = cfg.seed;
    let mut trials = Vec::new();
    for k in 0..a.trials {
        let mut c = cfg.clone();
        c.seed = base_seed.wrapping_add(k as u64);
        if a.trials > 1 {
            c.trial_id = format!("{base_id}_{k}");
        }
        let (dataset, truth) = generate_trial(&c)?;
        let dir = a.out.join(&c.trial_id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let tracks = dir.join("tracks.csv");
        let mut buf = Vec::new();
        write_tracks(&dataset, &mut buf, TrackFormat::Csv)?;
        fs::write(&tracks, buf).map_err(io_err(&tracks))?;
        let events = dir.join("ground_truth.events");
        let mut buf = Vec::new();
        truth.write_events(&mut buf)?;
        fs::write(&events, buf).map_err(io_err(&events))?;
        // round-trip so the bundle is known to load
        read_track_file(&tracks, &c.trial_id, c.frame_interval_min)?;
        println!(
            "{}: {} frames, {} observations, {} conjugation events",
            c.trial_id,
            dataset.frame_count(),
            dataset.cells.len(),
            truth.events.len()
        );
        trials.push(TrialManifest {
            trial_id: c.trial_id.clone(),
            frame_interval_min: c.frame_interval_min,
            track_path: PathBuf::from(&c.trial_id).join("tracks.csv"),
        });
    }
    let manifest = RunManifest::new(trials);
    let path = a.out.join("manifest.toml");
    fs::write(&path, manifest.to_toml()).map_err(io_err(&path))?;
    println!("{}", path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn run_flags_parse() {
        let cli = Cli::try_parse_from([
            "conjbn",
            "run",
            "--manifest",
            "m.toml",
            "--backend",
            "factored",
            "--jobs",
            "3",
            "--budget-seconds",
            "2.5",
        ])
        .unwrap();
        let Command::Run(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.backend, Some(Backend::Factored));
        assert_eq!(a.jobs, Some(3));
        assert_eq!(a.budget_seconds, Some(2.5));
    }
}
