use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use driftwatch::args::{parse_f64_list, parse_range};
use driftwatch::bounds::{read_table, write_table, BoundTable, GridSpec, DEFAULT_MC_SAMPLES};
use driftwatch::detectors::{write_trace, Method};
use driftwatch::harness::{
    build_detector, counts_csv_bytes, emit_report, emit_scores, parse_manifest, rescore_dir, run_experiment, score,
    ExperimentConfig, RunManifest, StreamSource, DEFAULT_LENGTH, DEFAULT_REPLICATES,
};
use driftwatch::power::{emit_grids, power_grid, PowerConfig, PowerGrid};
use driftwatch::stream::{generate_stream, read_stream_dir, scenario, write_stream_dir};
use driftwatch::{Error, Result};

#[derive(Parser)]
#[command(
    name = "driftwatch",
    version,
    about = "Concept-drift detection over classifier confusion rates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or query Monte-Carlo bound tables.
    #[command(subcommand)]
    Bounds(BoundsCmd),
    /// Generate a synthetic scenario stream.
    Gen(GenArgs),
    /// Power of R against P̂ after a rate shift.
    Power(PowerArgs),
    /// Run all detectors over bootstrap replicates and score them.
    Run(RunArgs),
    /// Re-score a run directory from its manifest and raw detections.
    Score(ScoreArgs),
    /// Run one detector over a stream directory written by `gen`.
    Detect(DetectArgs),
}

#[derive(Subcommand)]
enum BoundsCmd {
    Build(BuildArgs),
    Query(QueryArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long, default_value_t = 0.9)]
    eta: f64,
    /// Comma-separated significance levels.
    #[arg(long, default_value = "0.01,1e-5")]
    alphas: String,
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    mc: u64,
    /// Value of the statistic before its first update.
    #[arg(long, default_value_t = 0.5)]
    start: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    alpha: f64,
    /// Updates since the last reset.
    #[arg(long)]
    n: u64,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = DEFAULT_LENGTH)]
    length: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PowerArgs {
    /// Pre-shift rate, a list or a start:stop:step range.
    #[arg(long, default_value = "0.9")]
    p: String,
    #[arg(long, default_value = "0.1:0.8:0.1")]
    q: String,
    #[arg(long, default_value_t = 200)]
    kmax: u32,
    #[arg(long, default_value_t = 1000)]
    m: u32,
    #[arg(long, default_value_t = 0.9)]
    eta: f64,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    mc: u64,
    /// Lag for heatmap.csv; defaults to --kmax.
    #[arg(long)]
    heatmap_k: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "manifest")]
    scenario: Option<String>,
    #[arg(long, default_value = "paper-synthetic")]
    preset: String,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    replicates: u32,
    #[arg(long, default_value_t = DEFAULT_LENGTH)]
    length: u64,
    /// Comma-separated subset of LFR, NFR, DDM, DDM-OCI.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Re-run exactly the configuration recorded in a manifest.
    #[arg(long, conflicts_with_all = ["scenario", "methods"])]
    manifest: Option<PathBuf>,
    #[arg(long)]
    table: Option<PathBuf>,
    /// Also write per-step trajectories of this replicate.
    #[arg(long)]
    trace: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    stream: PathBuf,
    #[arg(long)]
    method: String,
    #[arg(long, default_value = "paper-synthetic")]
    preset: String,
    #[arg(long)]
    table: Option<PathBuf>,
    /// Write the per-step trajectory CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct PowerManifest {
    tool_version: String,
    configs: Vec<PowerConfig>,
    heatmap_k: u32,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io { .. } | Error::Json { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Bounds(BoundsCmd::Build(a)) => bounds_build(a),
        Command::Bounds(BoundsCmd::Query(a)) => bounds_query(a),
        Command::Gen(a) => gen(a),
        Command::Power(a) => power(a),
        Command::Run(a) => run(a),
        Command::Score(a) => score_dir(a),
        Command::Detect(a) => detect(a),
    }
}

fn bounds_build(a: BuildArgs) -> Result<()> {
    let alphas = parse_f64_list(&a.alphas)?;
    let table = BoundTable::build(&GridSpec::standard(&alphas), a.eta, a.start, a.mc, a.seed)?;
    write_table(&table, &a.out)?;
    println!("{}", table.fingerprint());
    Ok(())
}

fn bounds_query(a: QueryArgs) -> Result<()> {
    let table = read_table(&a.table)?;
    let b = table.lookup(a.p, a.alpha, a.n)?;
    println!("lower,upper");
    println!("{},{}", b.lower, b.upper);
    Ok(())
}

fn gen(a: GenArgs) -> Result<()> {
    let config = scenario(&a.scenario)?.config(a.length, a.seed)?;
    let stream = generate_stream(&config)?;
    write_stream_dir(&a.out, Some(&a.scenario), &config, &stream)
}

fn power(a: PowerArgs) -> Result<()> {
    let q_list = parse_range(&a.q)?;
    let configs: Vec<PowerConfig> = parse_range(&a.p)?
        .into_iter()
        .enumerate()
        .map(|(i, p)| PowerConfig {
            m: a.m,
            k_max: a.kmax,
            p,
            q_list: q_list.clone(),
            eta: a.eta,
            alpha: a.alpha,
            trials: a.trials,
            mc_samples: a.mc,
            seed: driftwatch::rng::derive_seed(a.seed, i as u64),
        })
        .collect();
    let heatmap_k = a.heatmap_k.unwrap_or(a.kmax);
    let grids: Vec<PowerGrid> = configs.iter().map(power_grid).collect::<Result<_>>()?;
    emit_grids(&a.out, &grids, heatmap_k)?;
    let manifest = PowerManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        configs,
        heatmap_k,
    };
    let path = a.out.join("power.json");
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn load_table(path: Option<&Path>) -> Result<Option<Arc<BoundTable>>> {
    path.map(|p| read_table(p).map(Arc::new)).transpose()
}

fn run(a: RunArgs) -> Result<()> {
    let config = match &a.manifest {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_manifest(&bytes)?.config
        }
        None => {
            let name = a.scenario.clone().expect("clap enforces --scenario");
            scenario(&name)?;
            let source = StreamSource::Scenario { name, length: a.length };
            let mut config = ExperimentConfig::from_preset(source, &a.preset, a.replicates, a.seed)?;
            if let Some(list) = &a.methods {
                config.methods = list.split(',').map(str::parse).collect::<Result<Vec<Method>>>()?;
            }
            config
        }
    };
    let table = load_table(a.table.as_deref())?;
    if let (Some(path), Some(t)) = (&a.manifest, &table) {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if let Some(info) = parse_manifest(&bytes)?.table {
            if info.fingerprint != t.fingerprint() {
                return Err(Error::InvalidParam(
                    "bound table differs from the one in the manifest".into(),
                ));
            }
        }
    }
    let records = run_experiment(&config, table.clone())?;
    let card = score(&records, config.bin_width, config.true_window_bins)?;
    let manifest = RunManifest::new(&config, table.as_deref());
    emit_report(&a.out, &manifest, &records, &card)?;
    if let Some(rep) = a.trace {
        write_traces(&config, table.as_ref(), rep, &a.out)?;
    }
    print!("{}", String::from_utf8_lossy(&counts_csv_bytes(&card)));
    Ok(())
}

fn write_traces(config: &ExperimentConfig, table: Option<&Arc<BoundTable>>, rep: u32, dir: &Path) -> Result<()> {
    if rep >= config.replicates {
        return Err(Error::InvalidParam(format!("trace replicate {rep} out of range")));
    }
    let stream = generate_stream(&config.source.config(config.replicate_seed(rep))?)?;
    for &m in &config.methods {
        let mut det = build_detector(m, &config.params, table)?;
        let path = dir.join(format!("trace_{}_{rep}.csv", m.name().to_ascii_lowercase()));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_trace(
            det.as_mut(),
            stream.pairs.iter().copied(),
            std::io::BufWriter::new(file),
        )?;
    }
    Ok(())
}

fn score_dir(a: ScoreArgs) -> Result<()> {
    let card = rescore_dir(&a.input)?;
    emit_scores(&a.input, &card)?;
    print!("{}", String::from_utf8_lossy(&counts_csv_bytes(&card)));
    Ok(())
}

fn detect(a: DetectArgs) -> Result<()> {
    let method: Method = a.method.parse()?;
    let params = driftwatch::harness::preset(&a.preset)?;
    let table = load_table(a.table.as_deref())?;
    let (_, pairs) = read_stream_dir(&a.stream)?;
    let mut det = build_detector(method, &params, table.as_ref())?;
    let drifts: Vec<u64> = match &a.trace {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            write_trace(det.as_mut(), pairs, std::io::BufWriter::new(file))?
                .iter()
                .filter(|r| r.status == driftwatch::detectors::Status::Drift)
                .map(|r| r.t)
                .collect()
        }
        None => pairs
            .into_iter()
            .filter_map(|(y, yhat)| {
                let o = det.step(y, yhat);
                o.is_drift().then_some(o.t)
            })
            .collect(),
    };
    println!("t");
    for t in drifts {
        println!("{t}");
    }
    Ok(())
}
