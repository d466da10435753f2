//! Policy rollouts for evaluation, perturbation repair and morphing.
//!
//! Episodes are advanced in lockstep chunks so one network forward serves
//! many of them. Each episode draws from its own random stream, so results
//! do not depend on chunking or on the number of worker threads.

use crate::BenchError;
use cubeswarm_core::trace::TraceRecord;
use cubeswarm_core::{CellCoord, Connectivity, CubeEnv, Ensemble, EnvConfig, MoveCommand};
use cubeswarm_geonet::{CellBatch, PolicyValueNet};
use cubeswarm_ppo::{select_action, ActionMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const CHUNK: usize = 64;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    /// Applied pivots.
    pub moves: usize,
    pub steps: usize,
    pub final_overlap: usize,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

/// Runs one episode per start state with `net` choosing every action.
/// Traces are recorded for the first `keep_traces` episodes.
pub fn run_episodes(
    net: &PolicyValueNet<f32>,
    env_config: &EnvConfig,
    starts: &[Ensemble],
    mode: ActionMode,
    seed: u64,
    keep_traces: usize,
) -> Result<Vec<EpisodeResult>, BenchError> {
    let chunks: Vec<(usize, &[Ensemble])> = starts
        .chunks(CHUNK)
        .enumerate()
        .map(|(i, c)| (i * CHUNK, c))
        .collect();
    let results: Vec<Vec<EpisodeResult>> = chunks
        .par_iter()
        .map(|&(base, chunk)| run_chunk(net, env_config, chunk, base, mode, seed, keep_traces))
        .collect::<Result<_, _>>()?;
    Ok(results.into_iter().flatten().collect())
}

fn run_chunk(
    net: &PolicyValueNet<f32>,
    env_config: &EnvConfig,
    starts: &[Ensemble],
    base: usize,
    mode: ActionMode,
    seed: u64,
    keep_traces: usize,
) -> Result<Vec<EpisodeResult>, BenchError> {
    let mut envs = Vec::with_capacity(starts.len());
    let mut masks = Vec::with_capacity(starts.len());
    let mut out = Vec::with_capacity(starts.len());
    for (i, start) in starts.iter().enumerate() {
        let mut env = CubeEnv::new(env_config.clone())?;
        let r = env.reset_to(start.clone())?;
        let trace = if base + i < keep_traces {
            vec![TraceRecord::initial(start.coords())]
        } else {
            Vec::new()
        };
        out.push(EpisodeResult {
            success: r.info.success,
            moves: 0,
            steps: 0,
            final_overlap: r.info.overlap,
            trace,
        });
        masks.push(r.mask);
        envs.push(env);
    }
    let mut rngs: Vec<ChaCha8Rng> = (0..starts.len())
        .map(|i| stream_rng(seed, (base + i) as u64))
        .collect();
    let radius = net.config().kernel / 2;
    loop {
        let live: Vec<usize> = (0..envs.len()).filter(|&i| !envs[i].is_done()).collect();
        if live.is_empty() {
            return Ok(out);
        }
        let obs: Vec<&[CellCoord]> = live.iter().map(|&i| envs[i].ensemble().coords()).collect();
        let batch = CellBatch::from_coords(&obs, radius);
        let cache = net.forward(&batch);
        for (s, &i) in live.iter().enumerate() {
            let logits: Vec<f64> = cache
                .sample_logits(&batch, s)
                .iter()
                .map(|&v| v as f64)
                .collect();
            let (a, _) = select_action(&logits, &masks[i], mode, &mut rngs[i])?;
            let r = envs[i].step(a)?;
            let ep = &mut out[i];
            ep.steps = r.info.steps;
            ep.final_overlap = r.info.overlap;
            ep.success = r.info.success;
            let outcome = r.info.outcome.expect("step outcome");
            if outcome.is_applied() {
                ep.moves += 1;
            }
            if !ep.trace.is_empty() {
                let cmd = MoveCommand::from_action(a);
                ep.trace.push(TraceRecord::step(
                    r.info.steps,
                    cmd.cube,
                    cmd.direction,
                    &outcome,
                    envs[i].ensemble().coords(),
                ));
            }
            masks[i] = r.mask;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_episodes: usize,
    pub n_cubes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Moves of successful episodes only, in episode order.
    pub moves: Vec<usize>,
    pub mean_moves: Option<f64>,
    pub median_moves: Option<f64>,
    pub moves_per_cube: Option<f64>,
    pub budget: usize,
    pub connectivity: Connectivity,
    pub mode: ActionMode,
    pub seed: u64,
    /// Perturbation size, for repair runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<usize>,
    /// Perturbation walks redrawn because they returned to the target.
    #[serde(default)]
    pub resampled: usize,
}

impl EvalReport {
    pub fn from_results(
        results: &[EpisodeResult],
        env: &EnvConfig,
        mode: ActionMode,
        seed: u64,
    ) -> Self {
        let moves: Vec<usize> = results
            .iter()
            .filter(|r| r.success)
            .map(|r| r.moves)
            .collect();
        let n = results.len();
        let mean =
            (!moves.is_empty()).then(|| moves.iter().sum::<usize>() as f64 / moves.len() as f64);
        let n_cubes = env.n_cubes();
        Self {
            n_episodes: n,
            n_cubes,
            successes: moves.len(),
            success_rate: if n == 0 {
                0.0
            } else {
                moves.len() as f64 / n as f64
            },
            mean_moves: mean,
            median_moves: median(&moves),
            moves_per_cube: mean.map(|m| m / n_cubes as f64),
            moves,
            budget: env.max_steps,
            connectivity: env.connectivity,
            mode,
            seed,
            perturbation: None,
            resampled: 0,
        }
    }

    /// Whether the run clears a success-rate filter (both 1% and 99% appear
    /// as thresholds in reporting).
    pub fn passes(&self, min_success_rate: f64) -> bool {
        self.success_rate >= min_success_rate
    }

    pub fn summary(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}"));
        format!(
            "episodes {} | success {:.1}% | mean moves {} | median {} | moves/cube {}",
            self.n_episodes,
            100.0 * self.success_rate,
            fmt(self.mean_moves),
            fmt(self.median_moves),
            fmt(self.moves_per_cube)
        )
    }
}

fn median(v: &[usize]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_unstable();
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 {
        s[m] as f64
    } else {
        (s[m - 1] + s[m]) as f64 / 2.0
    })
}

/// Random connected starts, one per episode.
pub fn random_starts(n_cubes: usize, episodes: usize, seed: u64) -> Vec<Ensemble> {
    let mut rng = stream_rng(seed, u64::MAX);
    (0..episodes)
        .map(|_| Ensemble::random_connected(n_cubes, rng.random()))
        .collect()
}

pub fn evaluate(
    net: &PolicyValueNet<f32>,
    env: &EnvConfig,
    episodes: usize,
    mode: ActionMode,
    seed: u64,
) -> Result<EvalReport, BenchError> {
    let starts = random_starts(env.n_cubes(), episodes, seed);
    let results = run_episodes(net, env, &starts, mode, seed, 0)?;
    Ok(EvalReport::from_results(&results, env, mode, seed))
}

/// Target state disturbed by `m` uniformly random legal moves (full
/// connectivity). Walks that end on the target again are redrawn; the
/// second value counts the redraws.
pub fn perturbed_start(
    env: &EnvConfig,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Ensemble, usize), BenchError> {
    let mut check = CubeEnv::new(env.clone())?;
    let mut redraws = 0;
    loop {
        let mut e = env.target.ensemble();
        for _ in 0..m {
            let legal: Vec<usize> = e
                .legal_moves(Connectivity::Full)
                .iter()
                .enumerate()
                .filter(|(_, &l)| l)
                .map(|(a, _)| a)
                .collect();
            if legal.is_empty() {
                return Err(BenchError::Config(format!(
                    "target {} has no legal move to perturb",
                    env.target.name
                )));
            }
            let a = legal[rng.random_range(0..legal.len())];
            e.apply_move(MoveCommand::from_action(a), Connectivity::Full);
        }
        if m == 0 || !check.reset_to(e.clone())?.info.success {
            return Ok((e, redraws));
        }
        redraws += 1;
        if redraws > 10_000 {
            return Err(BenchError::Config(format!(
                "could not perturb {} away from its target",
                env.target.name
            )));
        }
    }
}

pub fn perturb(
    net: &PolicyValueNet<f32>,
    env: &EnvConfig,
    m: usize,
    repeats: usize,
    mode: ActionMode,
    seed: u64,
) -> Result<EvalReport, BenchError> {
    let mut rng = stream_rng(seed, u64::MAX - 1);
    let mut starts = Vec::with_capacity(repeats);
    let mut resampled = 0;
    for _ in 0..repeats {
        let (e, r) = perturbed_start(env, m, &mut rng)?;
        starts.push(e);
        resampled += r;
    }
    let results = run_episodes(net, env, &starts, mode, seed, 0)?;
    let mut report = EvalReport::from_results(&results, env, mode, seed);
    report.perturbation = Some(m);
    report.resampled = resampled;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub target: String,
    pub success: bool,
    pub moves: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphResult {
    pub success: bool,
    pub phases: Vec<PhaseResult>,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

/// Runs each `(policy, environment)` phase in turn from `start`, handing
/// the final state of one phase to the next. Stops at the first phase that
/// misses its target; the trace annotates every record with its phase.
pub fn morph(
    phases: &[(&PolicyValueNet<f32>, EnvConfig)],
    start: &Ensemble,
    mode: ActionMode,
    seed: u64,
) -> Result<MorphResult, BenchError> {
    let mut trace = vec![TraceRecord {
        phase: Some(0),
        ..TraceRecord::initial(start.coords())
    }];
    let mut state = start.clone();
    let mut out = Vec::new();
    for (p, (net, env)) in phases.iter().enumerate() {
        if env.n_cubes() != state.len() {
            return Err(BenchError::Mismatch(format!(
                "phase {p} targets {} cubes, the ensemble has {}",
                env.n_cubes(),
                state.len()
            )));
        }
        let r = run_episodes(
            net,
            env,
            std::slice::from_ref(&state),
            mode,
            seed.wrapping_add(p as u64),
            1,
        )?
        .remove(0);
        let offset = trace.len() - 1;
        for rec in r.trace.into_iter().skip(1) {
            trace.push(TraceRecord {
                step: rec.step + offset,
                phase: Some(p),
                ..rec
            });
        }
        state = Ensemble::new(trace.last().unwrap().coords()).expect("trace holds valid ensembles");
        out.push(PhaseResult {
            target: env.target.name.clone(),
            success: r.success,
            moves: r.moves,
            steps: r.steps,
        });
        if !r.success {
            return Ok(MorphResult {
                success: false,
                phases: out,
                trace,
            });
        }
    }
    Ok(MorphResult {
        success: true,
        phases: out,
        trace,
    })
}
