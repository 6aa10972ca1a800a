//! `leosim`: run one scenario per invocation and write its artefacts.
//!
//! Exit codes: 0 on success, 1 for invalid inputs (arguments, config, model
//! files), 2 when the run itself fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use leosim::analysis::mean_off_diagonal;
use leosim::config::rng_stream;
use leosim::output;
use leosim::scenario::write_topology;
use leosim::{
    cka_matrix, load_config, percentile, run_baseline, run_offline, run_online, Alignment, Baseline, ProbeSet, QNetwork,
    RunOutput, Scenario, ScenarioConfig,
};

#[derive(Debug, Parser)]
#[command(name = "leosim", version, about = "LEO constellation routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one shared model over the whole constellation.
    Offline {
        #[command(flatten)]
        common: Common,
        /// Continue training from this model instead of a fresh one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// One agent per satellite, seeded from a pretrained model or archive.
    Online {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Average each model with the one ahead in its plane.
        #[arg(long)]
        anticipation: bool,
        /// Cluster (and, if configured, global) federated averaging.
        #[arg(long)]
        fl: bool,
        /// Route with the given models without training.
        #[arg(long)]
        inference: bool,
        /// A `baseline` output directory to compare latencies against.
        #[arg(long)]
        baseline_dir: Option<PathBuf>,
    },
    /// Shortest path or Q-routing on the scenario's traffic trace.
    Baseline {
        #[command(flatten)]
        common: Common,
    },
    /// Pairwise CKA within one model archive, or between two.
    Cka {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1..=2, required = true)]
        model: Vec<PathBuf>,
        /// Write the full matrix rather than the upper triangle.
        #[arg(long)]
        full: bool,
    },
    /// Link snapshots at each position update plus the packet trace.
    Topology {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Base seed for every random stream.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// `ma-drl` for offline/online; `shortest-path` or `q-routing` for baseline.
    #[arg(long)]
    policy: Option<String>,
    /// Simulated horizon in seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    gateways: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Run(leosim::Error),
}

impl From<leosim::Error> for Failure {
    fn from(e: leosim::Error) -> Self {
        if e.is_config() {
            Failure::Input(e.to_string())
        } else {
            Failure::Run(e)
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Run(e.into())
    }
}

fn input(msg: impl Into<String>) -> Failure {
    Failure::Input(msg.into())
}

impl Common {
    fn config(&self) -> Result<ScenarioConfig, Failure> {
        let mut cfg = load_config(&self.config).map_err(|e| input(e.to_string()))?;
        if let Some(seed) = self.seed {
            cfg.seeds.set_all(seed);
        }
        if let Some(d) = self.duration {
            cfg.horizon_s = d;
        }
        if let Some(n) = self.gateways {
            cfg.gateways.count = n;
        }
        cfg.validate().map_err(|e| input(e.to_string()))?;
        for w in cfg.schedule.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(cfg)
    }

    fn scenario(&self) -> Result<Scenario, Failure> {
        Ok(Scenario::new(self.config()?)?)
    }

    fn prepare_out_dir(&self, cfg: &ScenarioConfig) -> Result<(), Failure> {
        fs::create_dir_all(&self.out_dir)?;
        cfg.echo(&self.out_dir).map_err(|e| Failure::Run(e.into()))?;
        Ok(())
    }

    fn require_drl_policy(&self) -> Result<(), Failure> {
        match self.policy.as_deref() {
            None | Some("ma-drl") => Ok(()),
            Some(p) => Err(input(format!("--policy {p} is not available here; use ma-drl or the baseline subcommand"))),
        }
    }
}

fn load_models(scn: &Scenario, path: &Path) -> Result<Vec<QNetwork>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    scn.load_models(&text).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn summarize(out: &RunOutput) {
    let m = &out.metrics;
    let lat = out.latencies();
    let p50 = percentile(&lat, 50.0).map(|v| format!("{:.3} ms", v * 1e3)).unwrap_or_else(|_| "n/a".into());
    eprintln!("{}: generated {}, delivered {}, dropped {}, median latency {p50}", out.policy, m.generated, m.deliveries.len(), m.drops.len());
}

/// Latency percentiles 1..=99 of this run against a baseline run directory.
fn write_comparison(out: &RunOutput, baseline_dir: &Path, out_dir: &Path) -> Result<(), Failure> {
    let path = baseline_dir.join("latency.csv");
    let base = output::read_latencies(&path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let ours = out.latencies();
    if base.is_empty() || ours.is_empty() {
        eprintln!("warning: no deliveries to compare");
    }
    let mut rows = Vec::new();
    for p in 1..=99 {
        let p = f64::from(p);
        if let (Ok(a), Ok(b)) = (percentile(&ours, p), percentile(&base, p)) {
            rows.push((p, a, b));
        }
    }
    output::write_comparison(&mut output::create(&out_dir.join("comparison.csv"))?, &rows)?;
    output::write_cdf(&mut output::create(&out_dir.join("baseline_cdf.csv"))?, &base)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Offline { common, model } => {
            common.require_drl_policy()?;
            let scn = common.scenario()?;
            let init = match &model {
                Some(p) => match load_models(&scn, p)?.as_slice() {
                    [one] => Some(one.clone()),
                    many => return Err(input(format!("offline training needs one model, {} holds {}", p.display(), many.len()))),
                },
                None => None,
            };
            common.prepare_out_dir(&scn.config)?;
            let (out, _) = run_offline(&scn, init)?;
            out.write(&common.out_dir)?;
            summarize(&out);
        }
        Command::Online { common, model, anticipation, fl, inference, baseline_dir } => {
            common.require_drl_policy()?;
            let scn = common.scenario()?;
            let models = load_models(&scn, &model)?;
            if models.len() != 1 && models.len() != scn.num_satellites() {
                return Err(input(format!("{} holds {} models for {} satellites", model.display(), models.len(), scn.num_satellites())));
            }
            let alignment = Alignment { anticipation, fl };
            scn.alignment_schedule(alignment)?;
            common.prepare_out_dir(&scn.config)?;
            let (out, _) = run_online(&scn, &models, !inference, alignment)?;
            out.write(&common.out_dir)?;
            if let Some(dir) = &baseline_dir {
                write_comparison(&out, dir, &common.out_dir)?;
            }
            summarize(&out);
        }
        Command::Baseline { common } => {
            let name = common.policy.as_deref().unwrap_or("shortest-path");
            let which = Baseline::parse(name).ok_or_else(|| input(format!("unknown baseline {name}; use shortest-path or q-routing")))?;
            let scn = common.scenario()?;
            common.prepare_out_dir(&scn.config)?;
            let out = run_baseline(&scn, which)?;
            out.write(&common.out_dir)?;
            summarize(&out);
        }
        Command::Cka { common, model, full } => {
            let cfg = common.config()?;
            let scn = Scenario::new(cfg)?;
            let mut nets = Vec::new();
            for p in &model {
                nets.extend(load_models(&scn, p)?);
            }
            let cfg = &scn.config;
            let mut rng = rng_stream(&cfg.seeds, "probes").map_err(|e| input(e.to_string()))?;
            let probes = ProbeSet::random(cfg.output.probe_count, &cfg.learning.state(), cfg.seeds.probes, &mut rng);
            let m = cka_matrix(&nets, &probes).map_err(|e| Failure::Run(e.into()))?;
            common.prepare_out_dir(cfg)?;
            output::write_cka(&mut output::create(&common.out_dir.join("cka.csv"))?, &m, full)?;
            eprintln!("cka: {} models, mean pairwise {:.6}", nets.len(), mean_off_diagonal(&m));
        }
        Command::Topology { common } => {
            let scn = common.scenario()?;
            common.prepare_out_dir(&scn.config)?;
            write_topology(&scn, &common.out_dir)?;
            eprintln!("topology: {} satellites, {} gateways, {} packets", scn.num_satellites(), scn.config.gateways.count, scn.packets.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
