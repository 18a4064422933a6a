use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use tapfit::harness::plot::{emit_scatter, simulate_for_plots};
use tapfit::harness::sweep::{run_sweep_with, study_config, Study, SweepBase};
use tapfit::harness::{population, run_experiment_with, ExperimentConfig, PopulationConfig};
use tapfit::language_model::{Lexicon, LmConfig};
use tapfit::par::{map_range, Execution};
use tapfit::simulator::{run_session, Archetype};
use tapfit::{Decoder, EngineConfig, KeyboardLayout, LanguageModel};

/// Exit status for a run that finished but broke one of its own checks
/// (paired streams diverged, scatter rows lost, too many clusters).
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "tapfit",
    version,
    about = "Personalized touch decoding: simulation, experiments and demo server"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config file; each subcommand has its own schema (see configs/).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports and data files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Run on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Type prompts as synthetic users and report per-user metrics.
    Simulate,
    /// Run a paired multi-arm experiment.
    Experiment,
    /// Run one canned parameter study, or all of them.
    Sweep {
        /// history_size, decay, buckets, clusters, sigma, personalization, covariance or all
        #[arg(long, default_value = "all")]
        study: String,
    },
    /// Write touch-offset, learned-offset and cluster CSVs for plotting.
    Plotdata,
    /// Serve the HTTP API for the demo keyboard.
    DemoServe {
        #[arg(long, default_value = "127.0.0.1:8787")]
        addr: SocketAddr,
        /// Use only the N most frequent lexicon words.
        #[arg(long)]
        lexicon_size: Option<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateConfig {
    master_seed: u64,
    population: PopulationConfig,
    warmup_words: usize,
    measured_words: usize,
    lexicon_size: Option<usize>,
    engine: EngineConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            population: PopulationConfig {
                users: 20,
                archetypes: vec![Archetype::default()],
            },
            warmup_words: 300,
            measured_words: 200,
            lexicon_size: None,
            engine: EngineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PlotConfig {
    master_seed: u64,
    users: usize,
    words: usize,
    archetype: Archetype,
    lexicon_size: Option<usize>,
    engine: EngineConfig,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            users: 20,
            words: 400,
            archetype: Archetype::default(),
            lexicon_size: None,
            engine: EngineConfig::default(),
        }
    }
}

/// A run that completed but contradicts itself. Maps to [`EXIT_INVARIANT`].
#[derive(Debug)]
struct Invariant(String);

impl std::fmt::Display for Invariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invariant violated: {}", self.0)
    }
}

impl std::error::Error for Invariant {}

fn load<T: Default + for<'de> Deserialize<'de>>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let doc = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&doc).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn decoder(lexicon_size: Option<usize>) -> Arc<Decoder> {
    let lexicon = match lexicon_size {
        Some(n) => Lexicon::english().top(n),
        None => Lexicon::english(),
    };
    Arc::new(Decoder::new(
        KeyboardLayout::qwerty(),
        LanguageModel::new(lexicon, LmConfig::default()),
    ))
}

/// Harness errors that mean the run itself is inconsistent.
fn classify(e: tapfit::Error) -> anyhow::Error {
    match e {
        tapfit::Error::PairingViolation { .. } => Invariant(e.to_string()).into(),
        other => other.into(),
    }
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn simulate(cli: &Cli, exec: Execution) -> anyhow::Result<()> {
    let mut c: SimulateConfig = load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        c.master_seed = s;
    }
    c.engine.validate()?;
    if c.population.users == 0 || c.population.archetypes.is_empty() || c.measured_words == 0 {
        bail!("simulate needs at least one user, one archetype and one measured word");
    }
    let d = decoder(c.lexicon_size);
    // Reuse the experiment population so a simulate run matches the same
    // users in an experiment with this seed.
    let exp = ExperimentConfig {
        name: "simulate".into(),
        master_seed: c.master_seed,
        population: c.population.clone(),
        warmup_words: c.warmup_words,
        measured_words: c.measured_words,
        lexicon_size: c.lexicon_size,
        control: tapfit::harness::ArmConfig::new("engine", c.engine.clone()),
        arms: vec![],
    };
    let members = population(&exp, &d);
    let outs = map_range(exec, members.len(), |i| {
        let m = &members[i];
        run_session(
            &d,
            &m.user,
            &c.engine,
            &m.prompts,
            c.warmup_words,
            m.touch_seed,
        )
    });

    let mut csv = String::from("user,stream_checksum,words,avg_spatial_cost,top1_error_rate,autocorrect_good,autocorrect_bad,clusters\n");
    let (mut cost, mut err) = (0.0, 0.0);
    for (u, out) in outs.into_iter().enumerate() {
        let out = out.map_err(classify)?;
        let m = out.metrics;
        cost += m.avg_spatial_cost;
        err += m.top1_error_rate;
        writeln!(
            csv,
            "{u},{:016x},{},{:.6},{:.6},{},{},{}",
            out.checksum,
            m.words,
            m.avg_spatial_cost,
            m.top1_error_rate,
            m.autocorrect_good,
            m.autocorrect_bad,
            out.model.tree().leaf_count()
        )?;
    }
    let n = members.len() as f64;
    let summary = format!(
        "simulate (seed {}): {} users, {} measured words each\n  avg_spatial_cost  {:.6}\n  top1_error_rate   {:.6}\n",
        c.master_seed,
        members.len(),
        c.measured_words,
        cost / n,
        err / n
    );
    fs::create_dir_all(&cli.out)?;
    let files = [cli.out.join("simulate.csv"), cli.out.join("simulate.txt")];
    fs::write(&files[0], csv)?;
    fs::write(&files[1], &summary)?;
    print!("{summary}");
    print_files(&files);
    Ok(())
}

fn experiment(cli: &Cli, exec: Execution) -> anyhow::Result<()> {
    let Some(path) = cli.config.as_deref() else {
        bail!("experiment needs --config (see configs/experiment.json)");
    };
    let mut c = ExperimentConfig::from_json(
        &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
    )?;
    if let Some(s) = cli.seed {
        c.master_seed = s;
    }
    let report = run_experiment_with(&decoder(c.lexicon_size), &c, exec).map_err(classify)?;
    print!("{}", report.to_text());
    print_files(&report.write_to(&cli.out)?);
    Ok(())
}

fn sweep(cli: &Cli, exec: Execution, which: &str) -> anyhow::Result<()> {
    let mut base: SweepBase = load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        base.master_seed = s;
    }
    let studies = if which == "all" {
        Study::ALL.to_vec()
    } else {
        vec![which.parse::<Study>()?]
    };
    let d = decoder(base.lexicon_size);
    for st in studies {
        study_config(st, &base).0.validate()?;
        let r = run_sweep_with(&d, st, &base, exec).map_err(classify)?;
        print!("{}", r.to_text());
        print_files(&r.write_to(&cli.out)?);
    }
    Ok(())
}

fn plotdata(cli: &Cli, exec: Execution) -> anyhow::Result<()> {
    let mut c: PlotConfig = load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        c.master_seed = s;
    }
    c.engine.validate()?;
    c.archetype.validate()?;
    let sessions = simulate_for_plots(
        &decoder(c.lexicon_size),
        &c.archetype,
        &c.engine,
        c.users,
        c.words,
        c.master_seed,
        exec,
    )?;
    let summary = emit_scatter(&cli.out, &sessions)?;
    let recorded: usize = sessions.iter().map(|s| s.touches.len()).sum();
    if summary.touches != recorded {
        return Err(Invariant(format!(
            "{} touches recorded but {} written",
            recorded, summary.touches
        ))
        .into());
    }
    if let Some(k) = summary
        .clusters_per_user
        .iter()
        .find(|&&k| k > c.engine.clusters.k)
    {
        return Err(Invariant(format!(
            "a model has {k} clusters, above the configured {}",
            c.engine.clusters.k
        ))
        .into());
    }
    println!(
        "{} touches from {} users; grand mean offset ({:+.4}, {:+.4})",
        summary.touches, c.users, summary.grand_mean.dx, summary.grand_mean.dy
    );
    print_files(&summary.files);
    Ok(())
}

fn demo_serve(cli: &Cli, addr: SocketAddr, lexicon_size: Option<usize>) -> anyhow::Result<()> {
    let engine: EngineConfig = load(cli.config.as_deref())?;
    let state =
        tapfit_service::AppState::new(decoder(lexicon_size), tapfit::layout::QWERTY_JSON, engine)?;
    tracing_subscriber::fmt().init();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(tapfit_service::serve(addr, Arc::new(state)))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let result = match &cli.command {
        Command::Simulate => simulate(&cli, exec),
        Command::Experiment => experiment(&cli, exec),
        Command::Sweep { study } => sweep(&cli, exec, study),
        Command::Plotdata => plotdata(&cli, exec),
        Command::DemoServe { addr, lexicon_size } => demo_serve(&cli, *addr, *lexicon_size),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Invariant>() {
                ExitCode::from(EXIT_INVARIANT)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
