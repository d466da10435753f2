use clap::{Args, Parser, Subcommand};
use cubeswarm_bench::eval::{self, random_starts, run_episodes};
use cubeswarm_bench::render::{render, RenderFormat};
use cubeswarm_bench::spec::{Precision, TrainSpec};
use cubeswarm_bench::{
    load_policy, seed_dir, train_seed, BenchError, EvalReport, LoadedPolicy, RunManifest,
};
use cubeswarm_core::trace::{read_trace, write_trace, TraceRecord};
use cubeswarm_core::{Connectivity, EnvConfig, TargetShape};
use cubeswarm_geonet::Arch;
use cubeswarm_ppo::ActionMode;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Worker threads for evaluation; defaults to all cores.
const THREADS_VAR: &str = "CUBESWARM_THREADS";

#[derive(Parser)]
#[command(
    name = "cubeswarm",
    version,
    about = "Train and evaluate decentralised pivoting-cube controllers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network per seed.
    Train(TrainArgs),
    /// Success rate and move counts from random starts.
    Eval(EvalArgs),
    /// Repair after m random moves away from the target.
    Perturb(PerturbArgs),
    /// Chain policies: each phase drives the ensemble to its own target.
    Morph(MorphArgs),
    /// Draw a trace as SVG frames or a GIF.
    Render(RenderArgs),
    /// Re-run the command recorded in a manifest into a new directory.
    Rerun {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// TOML or JSON training spec (or a previous run's manifest.json).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in shape name or shape file.
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    arch: Option<Arch>,
    #[arg(long)]
    kernel: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    /// Comma-separated; `appendix` for the five standard seeds.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<String>,
    /// Total environment steps per seed.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    episode_steps: Option<usize>,
    #[arg(long)]
    n_envs: Option<usize>,
    /// Request or refuse mirror-paired channels.
    #[arg(long)]
    mirror: Option<bool>,
    /// Train in 64-bit floats (bit-reproducible).
    #[arg(long)]
    f64: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct PolicyArgs {
    /// Checkpoint file or training output directory.
    #[arg(long)]
    ckpt: PathBuf,
    /// Target shape; must have the checkpoint's cube count.
    #[arg(long)]
    shape: Option<String>,
    /// Step budget; defaults to the training episode budget.
    #[arg(long)]
    budget: Option<usize>,
    /// Local connectivity radius; defaults to the network's receptive radius.
    #[arg(long)]
    radius: Option<u32>,
    /// Use the full connectivity search instead of the local one.
    #[arg(long)]
    full_connectivity: bool,
    /// Take the most probable action instead of sampling.
    #[arg(long)]
    greedy: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    /// Start every episode from this shape instead of a random state.
    #[arg(long)]
    start: Option<String>,
    /// Write traces of the first N episodes.
    #[arg(long, default_value_t = 0)]
    traces: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PerturbArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    /// Random legal moves applied to the target.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    m: Vec<usize>,
    /// Repeats per perturbation size.
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MorphArgs {
    /// One checkpoint per phase, in order.
    #[arg(long, required = true, num_args = 1..)]
    ckpt: Vec<PathBuf>,
    /// Starting configuration.
    #[arg(long)]
    shape: String,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    radius: Option<u32>,
    #[arg(long)]
    greedy: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    trace: PathBuf,
    /// `svg-frames` or `gif`.
    #[arg(long, default_value = "svg-frames")]
    format: RenderFormat,
    /// Print cube indices (SVG only).
    #[arg(long)]
    labels: bool,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    if let Ok(n) = std::env::var(THREADS_VAR) {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!("error: {THREADS_VAR} must be a positive integer, got {n:?}");
                return ExitCode::from(2);
            }
        }
    }
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match run(Cli::parse().command, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command, argv: Vec<String>) -> Result<(), BenchError> {
    match command {
        Command::Train(a) => cmd_train(a, argv),
        Command::Eval(a) => cmd_eval(a, argv),
        Command::Perturb(a) => cmd_perturb(a, argv),
        Command::Morph(a) => cmd_morph(a, argv),
        Command::Render(a) => cmd_render(a, argv),
        Command::Rerun { manifest, out } => {
            let m = RunManifest::load(&manifest)?;
            let mut argv = m.argv.clone();
            match argv.iter().position(|s| s == "--out") {
                Some(i) if i + 1 < argv.len() => argv[i + 1] = out.display().to_string(),
                _ => argv.extend(["--out".to_string(), out.display().to_string()]),
            }
            let mut full = vec!["cubeswarm".to_string()];
            full.extend(argv.iter().cloned());
            let cli = Cli::try_parse_from(full)
                .map_err(|e| BenchError::Config(format!("manifest arguments: {e}")))?;
            run(cli.command, argv)
        }
    }
}

fn parse_seeds(raw: &[String]) -> Result<Vec<u64>, BenchError> {
    let mut seeds = Vec::new();
    for s in raw {
        if s == "appendix" {
            seeds.extend(cubeswarm_bench::spec::APPENDIX_SEEDS);
        } else {
            seeds.push(
                s.parse()
                    .map_err(|_| BenchError::Config(format!("bad seed {s:?}")))?,
            );
        }
    }
    Ok(seeds)
}

fn cmd_train(a: TrainArgs, argv: Vec<String>) -> Result<(), BenchError> {
    let mut spec = match &a.config {
        Some(p) => TrainSpec::load(p)?,
        None => TrainSpec::default(),
    };
    if let Some(v) = a.shape {
        spec.shape = v;
    }
    if let Some(v) = a.arch {
        spec.arch = v;
    }
    if let Some(v) = a.kernel {
        spec.kernel = v;
    }
    if let Some(v) = a.layers {
        spec.layers = v;
        spec.widths = None;
    }
    if !a.seed.is_empty() {
        spec.seeds = parse_seeds(&a.seed)?;
    }
    if let Some(v) = a.steps {
        spec.total_steps = v;
    }
    if let Some(v) = a.episode_steps {
        spec.episode_steps = v;
    }
    if let Some(v) = a.n_envs {
        spec.ppo.n_envs = v;
    }
    if a.mirror.is_some() {
        spec.mirror = a.mirror;
    }
    if a.f64 {
        spec.precision = Precision::F64;
    }
    spec.validate()?;
    let mut manifest = RunManifest::new(
        "train",
        argv,
        serde_json::to_value(&spec)?,
        spec.seeds.clone(),
    );
    manifest.write(&a.out)?;
    for &seed in &spec.seeds {
        let dir = seed_dir(&a.out, seed);
        let updates = spec.ppo_config(seed).num_updates();
        let t0 = std::time::Instant::now();
        let (_, summary) = train_seed(&spec, seed, Some(&dir), |m| {
            let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.3}"));
            eprintln!(
                "seed {seed} update {}/{updates} steps {} success {} ep_len {} kl {:.4} entropy {:.3} [{:.0}s]",
                m.update,
                m.steps,
                fmt(m.success_rate),
                fmt(m.mean_episode_length),
                m.approx_kl,
                m.entropy,
                t0.elapsed().as_secs_f64()
            );
        })?;
        println!(
            "seed {seed}: {} updates, {} steps -> {}",
            summary.updates,
            summary.steps,
            dir.display()
        );
    }
    manifest.finished_unix = Some(cubeswarm_bench::manifest::unix_now());
    manifest.write(&a.out)?;
    Ok(())
}

/// Checkpoint plus the evaluation environment the flags describe.
fn policy_env(p: &PolicyArgs) -> Result<(LoadedPolicy, EnvConfig), BenchError> {
    let policy = load_policy(&p.ckpt)?;
    let mut env = policy.env.clone();
    if let Some(s) = &p.shape {
        let target = TargetShape::resolve(s)?;
        if target.len() != env.n_cubes() {
            return Err(BenchError::Mismatch(format!(
                "{} was trained on {} cubes; shape {} has {}",
                policy.path.display(),
                env.n_cubes(),
                target.name,
                target.len()
            )));
        }
        env.target = target;
    }
    if let Some(b) = p.budget {
        env.max_steps = b;
    }
    env.connectivity = if p.full_connectivity {
        Connectivity::Full
    } else {
        Connectivity::Local(
            p.radius
                .unwrap_or(policy.net.config().receptive_radius() as u32),
        )
    };
    env.validate()?;
    Ok((policy, env))
}

fn mode(greedy: bool) -> ActionMode {
    if greedy {
        ActionMode::Greedy
    } else {
        ActionMode::Sample
    }
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<(), BenchError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(v)?)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

fn write_trace_file(path: &Path, trace: &[TraceRecord]) -> Result<(), BenchError> {
    let mut buf = Vec::new();
    write_trace(&mut buf, trace)?;
    std::fs::write(path, buf)?;
    Ok(())
}

fn policy_config(p: &PolicyArgs, env: &EnvConfig, ckpt: &Path) -> serde_json::Value {
    serde_json::json!({
        "checkpoint": ckpt,
        "env": env,
        "mode": mode(p.greedy),
        "seed": p.seed,
    })
}

fn cmd_eval(a: EvalArgs, argv: Vec<String>) -> Result<(), BenchError> {
    let (policy, env) = policy_env(&a.policy)?;
    let m = mode(a.policy.greedy);
    let mut config = policy_config(&a.policy, &env, &policy.path);
    config["episodes"] = a.episodes.into();
    let mut manifest = RunManifest::new("eval", argv, config, vec![a.policy.seed]);
    manifest.write(&a.out)?;
    let starts = match &a.start {
        Some(s) => {
            let shape = TargetShape::resolve(s)?;
            if shape.len() != env.n_cubes() {
                return Err(BenchError::Mismatch(format!(
                    "start shape has {} cubes, policy expects {}",
                    shape.len(),
                    env.n_cubes()
                )));
            }
            vec![shape.ensemble(); a.episodes]
        }
        None => random_starts(env.n_cubes(), a.episodes, a.policy.seed),
    };
    let results = run_episodes(&policy.net, &env, &starts, m, a.policy.seed, a.traces)?;
    for (i, r) in results.iter().take(a.traces).enumerate() {
        write_trace_file(&a.out.join(format!("trace_{i:05}.jsonl")), &r.trace)?;
    }
    let report = EvalReport::from_results(&results, &env, m, a.policy.seed);
    write_json(&a.out.join("report.json"), &report)?;
    println!("{}", report.summary());
    manifest.finished_unix = Some(cubeswarm_bench::manifest::unix_now());
    manifest.write(&a.out)?;
    Ok(())
}

fn cmd_perturb(a: PerturbArgs, argv: Vec<String>) -> Result<(), BenchError> {
    let (policy, env) = policy_env(&a.policy)?;
    let md = mode(a.policy.greedy);
    let mut config = policy_config(&a.policy, &env, &policy.path);
    config["m"] = serde_json::to_value(&a.m)?;
    config["episodes"] = a.episodes.into();
    let mut manifest = RunManifest::new("perturb", argv, config, vec![a.policy.seed]);
    manifest.write(&a.out)?;
    let mut reports = Vec::new();
    for &m in &a.m {
        let report = eval::perturb(&policy.net, &env, m, a.episodes, md, a.policy.seed)?;
        println!(
            "m = {m}: {} (redrawn walks: {})",
            report.summary(),
            report.resampled
        );
        reports.push(report);
    }
    write_json(&a.out.join("report.json"), &reports)?;
    manifest.finished_unix = Some(cubeswarm_bench::manifest::unix_now());
    manifest.write(&a.out)?;
    Ok(())
}

fn cmd_morph(a: MorphArgs, argv: Vec<String>) -> Result<(), BenchError> {
    let start = TargetShape::resolve(&a.shape)?;
    let mut policies = Vec::new();
    for p in &a.ckpt {
        let policy = load_policy(p)?;
        let mut env = policy.env.clone();
        if let Some(b) = a.budget {
            env.max_steps = b;
        }
        env.connectivity = Connectivity::Local(
            a.radius
                .unwrap_or(policy.net.config().receptive_radius() as u32),
        );
        if env.n_cubes() != start.len() {
            return Err(BenchError::Mismatch(format!(
                "{} controls {} cubes; start shape {} has {}",
                policy.path.display(),
                env.n_cubes(),
                start.name,
                start.len()
            )));
        }
        policies.push((policy, env));
    }
    let config = serde_json::json!({
        "checkpoints": policies.iter().map(|(p, _)| p.path.clone()).collect::<Vec<_>>(),
        "envs": policies.iter().map(|(_, e)| e).collect::<Vec<_>>(),
        "start": start.name,
        "mode": mode(a.greedy),
        "seed": a.seed,
    });
    let mut manifest = RunManifest::new("morph", argv, config, vec![a.seed]);
    manifest.write(&a.out)?;
    let phases: Vec<_> = policies.iter().map(|(p, e)| (&p.net, e.clone())).collect();
    let result = eval::morph(&phases, &start.ensemble(), mode(a.greedy), a.seed)?;
    write_trace_file(&a.out.join("trace.jsonl"), &result.trace)?;
    write_json(&a.out.join("report.json"), &result)?;
    let mut line = start.name.clone();
    for p in &result.phases {
        line += &format!(
            " -> {} ({} moves{})",
            p.target,
            p.moves,
            if p.success { "" } else { ", FAILED" }
        );
    }
    println!("{line}");
    manifest.finished_unix = Some(cubeswarm_bench::manifest::unix_now());
    manifest.write(&a.out)?;
    if result.success {
        Ok(())
    } else {
        Err(BenchError::Config(format!(
            "morph stopped in phase {}",
            result.phases.len() - 1
        )))
    }
}

fn cmd_render(a: RenderArgs, argv: Vec<String>) -> Result<(), BenchError> {
    let file = std::fs::File::open(&a.trace)?;
    let trace = read_trace(std::io::BufReader::new(file))?;
    let config = serde_json::json!({ "trace": a.trace, "format": format!("{:?}", a.format), "labels": a.labels });
    let mut manifest = RunManifest::new("render", argv, config, vec![]);
    manifest.write(&a.out)?;
    let files = render(&trace, a.format, &a.out, a.labels)?;
    println!("{} file(s) in {}", files.len(), a.out.display());
    manifest.finished_unix = Some(cubeswarm_bench::manifest::unix_now());
    manifest.write(&a.out)?;
    Ok(())
}
