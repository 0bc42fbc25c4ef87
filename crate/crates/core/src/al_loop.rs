//! Pool-based active-learning experiment.
//!
//! Per seed: draw a pool and a labeled test set, label `initial_size` random
//! pool members, then repeat fit -> score -> select -> simulate -> extend
//! for the configured rounds, recording test RMSE after every refit.
//!
//! Every random draw comes from a ChaCha stream keyed by (seed, purpose), so
//! results do not depend on the number of worker threads or on resuming.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{self, Policy, ScoredCandidate};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::solvers::{generate_ic, simulate_with};
use crate::surrogate::{fit, read_model, rollout_frames, write_model, FittedModel, Surrogate};
use crate::types::{Candidate, CandidateId, LabeledSample, PdeParameters};

/// Magnitude standing in for predictions lost to a rollout blow-up.
pub const RMSE_CAP: f64 = 1e6;

const SELECT_STREAM: u64 = 1 << 63;

/// Candidate `id`'s private random stream.
pub fn candidate_rng(seed: u64, id: CandidateId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Seed for the selection made in `round` (0 is the initial draw).
pub fn selection_seed(seed: u64, round: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SELECT_STREAM + round as u64);
    rng.next_u64()
}

/// Draws candidate `id`: coefficients uniform over the configured ranges and
/// an IC latent from the generator prior.
pub fn make_candidate(config: &ExperimentConfig, seed: u64, id: CandidateId) -> Result<Candidate> {
    let mut rng = candidate_rng(seed, id);
    let delta: Vec<f64> = config
        .ranges()
        .iter()
        .map(|&[lo, hi]| lo + (hi - lo) * rng.gen::<f64>())
        .collect();
    let pde = PdeParameters::from_coefficients(config.family, &delta)?;
    let lambda = config.ic.sample_latent(config.family.dim(), &mut rng);
    let ic = generate_ic(&config.ic, &lambda, &config.grid, config.family)?;
    Candidate::new(id, pde, lambda, ic)
}

fn label(config: &ExperimentConfig, c: &Candidate) -> Result<LabeledSample> {
    simulate_with(c, &config.grid, &config.solver, &config.residual)
}

/// Labels candidates in parallel; failures are logged and dropped. Output
/// keeps input order.
fn label_all(config: &ExperimentConfig, cands: &[Candidate]) -> (Vec<LabeledSample>, Vec<CandidateId>) {
    let results: Vec<Result<LabeledSample>> = cands.par_iter().map(|c| label(config, c)).collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (c, r) in cands.iter().zip(results) {
        match r {
            Ok(s) => ok.push(s),
            Err(e) => {
                log::warn!("simulation of candidate {} failed: {e}", c.id);
                failed.push(c.id);
            }
        }
    }
    (ok, failed)
}

/// Pool ids are `0..P`; test ids start at `P` and continue past `P + M`
/// when test simulations fail.
pub fn build_pool(config: &ExperimentConfig, seed: u64) -> Result<(Vec<Candidate>, Vec<LabeledSample>)> {
    let p = config.pool_size as u64;
    let pool = (0..p)
        .into_par_iter()
        .map(|id| make_candidate(config, seed, id))
        .collect::<Result<Vec<_>>>()?;
    let mut test = Vec::with_capacity(config.test_size);
    let mut next = p;
    let limit = p + (config.test_size + config.max_test_retries) as u64;
    while test.len() < config.test_size {
        let want = (config.test_size - test.len()) as u64;
        if next + want > limit {
            return Err(Error::InvalidParameter(format!(
                "could not label {} test trajectories within {} retries",
                config.test_size, config.max_test_retries
            )));
        }
        let batch = (next..next + want)
            .into_par_iter()
            .map(|id| make_candidate(config, seed, id))
            .collect::<Result<Vec<_>>>()?;
        next += want;
        test.extend(label_all(config, &batch).0);
    }
    Ok((pool, test))
}

/// RMSE of autoregressive rollouts against the test trajectories over
/// frames `1..N_t`, all channels and points. Predictions are clamped to
/// `RMSE_CAP` in magnitude; frames after a blow-up count as `RMSE_CAP`.
pub fn evaluate_rmse<S: Surrogate + ?Sized>(model: &S, test: &[LabeledSample]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let per_sample: Vec<(f64, usize, bool)> = test
        .par_iter()
        .map(|s| {
            let frames = s.truth.frames();
            let out = rollout_frames(model, &s.candidate, frames.len())?;
            let mut sum = 0.0;
            let mut count = 0usize;
            for (n, truth) in frames.iter().enumerate().skip(1) {
                let pred = out
                    .frames
                    .get(n)
                    .filter(|_| out.blown_at.map_or(true, |b| n < b));
                for (i, t) in truth.values().iter().enumerate() {
                    let p = match pred {
                        Some(f) => {
                            let v = f.values()[i];
                            if v.is_finite() {
                                v.clamp(-RMSE_CAP, RMSE_CAP)
                            } else {
                                RMSE_CAP
                            }
                        }
                        None => RMSE_CAP,
                    };
                    sum += (p - t) * (p - t);
                    count += 1;
                }
            }
            Ok((sum, count, out.blown_at.is_some()))
        })
        .collect::<Result<_>>()?;
    let blown = per_sample.iter().filter(|s| s.2).count();
    if blown > 0 {
        log::warn!("{blown} test rollouts blew up; their lost frames count as {RMSE_CAP}");
    }
    let (sum, count) = per_sample.iter().fold((0.0, 0usize), |(a, n), s| (a + s.0, n + s.1));
    Ok((sum / count as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub seed: u64,
    pub round: usize,
    pub n_train: usize,
    pub rmse: f64,
    pub policy: Policy,
    pub wall_seconds: f64,
    pub selected: Vec<CandidateId>,
    pub failed: Vec<CandidateId>,
}

impl RoundMetrics {
    /// Equality ignoring wall-clock time.
    pub fn same_result(&self, other: &RoundMetrics) -> bool {
        self.seed == other.seed
            && self.round == other.round
            && self.n_train == other.n_train
            && self.rmse.to_bits() == other.rmse.to_bits()
            && self.policy == other.policy
            && self.selected == other.selected
            && self.failed == other.failed
    }

    pub fn row(&self) -> MetricsRow {
        MetricsRow {
            seed: self.seed,
            round: self.round,
            n_train: self.n_train,
            rmse: self.rmse,
            policy: self.policy,
            wall_seconds: self.wall_seconds,
        }
    }
}

/// One line of the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRow {
    pub seed: u64,
    pub round: usize,
    pub n_train: usize,
    pub rmse: f64,
    pub policy: Policy,
    pub wall_seconds: f64,
}

pub const METRICS_HEADER: [&str; 6] = ["seed", "round", "n_train", "rmse", "policy", "wall_seconds"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentState {
    pub seed: u64,
    pub policy: Policy,
    /// Completed acquisition rounds.
    pub round: usize,
    pub training: Vec<LabeledSample>,
    pub pool: Vec<Candidate>,
    pub test: Vec<LabeledSample>,
    /// Entry 0 is the initial fit; entry `r` follows round `r`.
    pub metrics: Vec<RoundMetrics>,
}

impl ExperimentState {
    /// Equality of everything except wall-clock time.
    pub fn same_result(&self, other: &ExperimentState) -> bool {
        self.seed == other.seed
            && self.policy == other.policy
            && self.round == other.round
            && self.training == other.training
            && self.pool == other.pool
            && self.test == other.test
            && self.metrics.len() == other.metrics.len()
            && self.metrics.iter().zip(&other.metrics).all(|(a, b)| a.same_result(b))
    }
}

/// Per-candidate acquisition record of one round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundScores {
    pub round: usize,
    pub scored: Vec<ScoredCandidate>,
    pub deltas: BTreeMap<CandidateId, Vec<f64>>,
    pub selected: Vec<CandidateId>,
}

/// Builds the pool and test set, labels the initial random batch and
/// records the initial test RMSE. Returns the fitted model alongside.
pub fn init_state(config: &ExperimentConfig, seed: u64) -> Result<(ExperimentState, FittedModel)> {
    let start = Instant::now();
    let (mut pool, test) = build_pool(config, seed)?;
    let ids: Vec<CandidateId> = pool.iter().map(|c| c.id).collect();
    let chosen = acquisition::select_random(&ids, config.initial_size, selection_seed(seed, 0))?;
    let picked = take(&mut pool, &chosen);
    let (training, failed) = label_all(config, &picked);
    if training.is_empty() {
        return Err(Error::Empty("initial training set"));
    }
    let model = fit(&training, &config.surrogate, None)?;
    let rmse = evaluate_rmse(&model, &test)?;
    let metrics = RoundMetrics {
        seed,
        round: 0,
        n_train: training.len(),
        rmse,
        policy: config.policy,
        wall_seconds: start.elapsed().as_secs_f64(),
        selected: chosen,
        failed,
    };
    log::info!("seed {seed}: initial n_train {} rmse {rmse:.6e}", training.len());
    Ok((
        ExperimentState {
            seed,
            policy: config.policy,
            round: 0,
            training,
            pool,
            test,
            metrics: vec![metrics],
        },
        model,
    ))
}

/// Removes the candidates with the given ids from `pool`, in `ids` order.
fn take(pool: &mut Vec<Candidate>, ids: &[CandidateId]) -> Vec<Candidate> {
    let wanted: HashSet<CandidateId> = ids.iter().copied().collect();
    let (picked, rest): (Vec<_>, Vec<_>) = std::mem::take(pool).into_iter().partition(|c| wanted.contains(&c.id));
    *pool = rest;
    ids.iter()
        .filter_map(|id| picked.iter().find(|c| c.id == *id).cloned())
        .collect()
}

/// One acquisition round. `model` must be the fit on the current training
/// set (pass `None` to refit); on return it holds the fit on the extended
/// set, trained from `model` when `warm_start` is on. On error `state` is
/// unchanged.
pub fn run_round(
    state: &mut ExperimentState,
    config: &ExperimentConfig,
    model: &mut Option<FittedModel>,
) -> Result<Option<RoundScores>> {
    let start = Instant::now();
    let round = state.round + 1;
    if state.pool.len() < config.batch_size {
        return Err(Error::BatchTooLarge {
            k: config.batch_size,
            pool: state.pool.len(),
        });
    }
    let seed = selection_seed(state.seed, round);
    let (selected, scores) = if config.policy.uses_scores() {
        let current = match model.take() {
            Some(m) => m,
            None => fit(&state.training, &config.surrogate, None)?,
        };
        let raw = acquisition::score_pool(&current, &state.pool, &config.grid, &config.residual);
        *model = Some(current);
        let raw = raw?;
        let scored = if config.normalize {
            acquisition::normalize(&raw, &state.pool, &state.training, &config.ranges())?
        } else {
            acquisition::unnormalized(&raw)
        };
        let selected = match config.policy {
            Policy::TopK => acquisition::select_topk(&scored, config.batch_size)?,
            Policy::Sbal => acquisition::select_sbal(&scored, config.batch_size, config.beta, seed)?,
            Policy::Random => unreachable!("random policy does not score"),
        };
        let deltas = state.pool.iter().map(|c| (c.id, c.pde.delta())).collect();
        (
            selected.clone(),
            Some(RoundScores {
                round,
                scored,
                deltas,
                selected,
            }),
        )
    } else {
        let ids: Vec<CandidateId> = state.pool.iter().map(|c| c.id).collect();
        (acquisition::select_random(&ids, config.batch_size, seed)?, None)
    };

    let mut pool = state.pool.clone();
    let picked = take(&mut pool, &selected);
    let (labeled, failed) = label_all(config, &picked);
    let mut training = state.training.clone();
    training.extend(labeled);
    let warm = if config.warm_start { model.as_ref() } else { None };
    let refit = fit(&training, &config.surrogate, warm)?;
    let rmse = evaluate_rmse(&refit, &state.test)?;

    state.pool = pool;
    state.training = training;
    state.round = round;
    state.metrics.push(RoundMetrics {
        seed: state.seed,
        round,
        n_train: state.training.len(),
        rmse,
        policy: config.policy,
        wall_seconds: start.elapsed().as_secs_f64(),
        selected,
        failed,
    });
    *model = Some(refit);
    log::info!(
        "seed {} round {round}: n_train {} rmse {rmse:.6e}",
        state.seed,
        state.training.len()
    );
    Ok(scores)
}

/// Checkpoint document: the state plus the config that produced it.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub state: ExperimentState,
}

/// State after `round` completed rounds; one file per round is kept.
pub fn checkpoint_path(out: &Path, seed: u64, round: usize) -> PathBuf {
    out.join("checkpoints").join(format!("seed_{seed}_round_{round}.json"))
}

/// Model fitted after `round`, saved alongside the state when `warm_start` is on.
pub fn model_checkpoint_path(out: &Path, seed: u64, round: usize) -> PathBuf {
    out.join("checkpoints").join(format!("seed_{seed}_round_{round}.model"))
}

/// Highest-round state checkpoint of `seed` under `out`, if any.
pub fn latest_checkpoint(out: &Path, seed: u64) -> Result<Option<(usize, PathBuf)>> {
    let dir = out.join("checkpoints");
    if !dir.is_dir() {
        return Ok(None);
    }
    let prefix = format!("seed_{seed}_round_");
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in fs::read_dir(&dir)? {
        let path = entry?.path();
        let round = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix(&prefix))
            .and_then(|n| n.strip_suffix(".json"))
            .and_then(|r| r.parse::<usize>().ok());
        if let Some(r) = round {
            if best.as_ref().map_or(true, |(b, _)| r > *b) {
                best = Some((r, path));
            }
        }
    }
    Ok(best)
}

fn save_model_checkpoint(path: &Path, model: &FittedModel) -> Result<()> {
    let mut bytes = Vec::new();
    write_model(&mut bytes, model)?;
    write_atomic(path, &bytes)
}

/// Writes atomically through a temporary file in the same directory.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_checkpoint(path: &Path, config: &ExperimentConfig, state: &ExperimentState) -> Result<()> {
    #[derive(Serialize)]
    struct Ref<'a> {
        config: &'a ExperimentConfig,
        state: &'a ExperimentState,
    }
    write_atomic(path, &serde_json::to_vec(&Ref { config, state })?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Whether a checkpoint written under `saved` can continue under `current`:
/// everything but the round count, seeds list, workers and output location
/// must agree.
pub fn resumable(saved: &ExperimentConfig, current: &ExperimentConfig) -> bool {
    let strip = |c: &ExperimentConfig| ExperimentConfig {
        rounds: 0,
        seeds: Vec::new(),
        workers: None,
        output_dir: None,
        ..c.clone()
    };
    strip(saved) == strip(current)
}

pub fn write_scores(path: &Path, config: &ExperimentConfig, scores: &RoundScores) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let names = config.family.coefficient_names();
    let mut header = vec!["round", "candidate_id"];
    header.extend_from_slice(names);
    header.extend_from_slice(&["raw_score", "normalizer", "normalized_score", "selected"]);
    w.write_record(&header).map_err(csv_err)?;
    let chosen: HashSet<CandidateId> = scores.selected.iter().copied().collect();
    let mut rows: Vec<&ScoredCandidate> = scores.scored.iter().collect();
    rows.sort_by_key(|s| s.id);
    for s in rows {
        let mut rec = vec![scores.round.to_string(), s.id.to_string()];
        rec.extend(scores.deltas[&s.id].iter().map(|d| d.to_string()));
        rec.push(s.raw_score.to_string());
        rec.push(s.normalizer.to_string());
        rec.push(s.normalized_score.to_string());
        rec.push(u8::from(chosen.contains(&s.id)).to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    if rows.is_empty() {
        w.write_record(METRICS_HEADER).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
    write_atomic(path, &bytes)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header != METRICS_HEADER {
        return Err(Error::Format(format!(
            "{}: expected columns {METRICS_HEADER:?}, found {header:?}",
            path.display()
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
        .collect()
}

/// Mean RMSE and normal-approximation 95% interval at one training size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub policy: Policy,
    pub n_train: usize,
    pub mean_rmse: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub n_runs: usize,
}

/// Groups rows by (policy, n_train) and reports mean +- 1.96 standard errors.
pub fn learning_curve(rows: &[MetricsRow]) -> Vec<CurvePoint> {
    let mut groups: BTreeMap<(&'static str, usize), (Policy, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.policy.name(), r.n_train))
            .or_insert_with(|| (r.policy, Vec::new()))
            .1
            .push(r.rmse);
    }
    groups
        .into_iter()
        .map(|((_, n_train), (policy, v))| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let half = if v.len() > 1 {
                let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
                1.96 * (var / n).sqrt()
            } else {
                0.0
            };
            CurvePoint {
                policy,
                n_train,
                mean_rmse: mean,
                ci95_lo: mean - half,
                ci95_hi: mean + half,
                n_runs: v.len(),
            }
        })
        .collect()
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in curve {
        w.serialize(p).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))?;
    write_atomic(path, &bytes)
}

/// Outcome of one seed.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub state: Option<ExperimentState>,
    pub error: Option<String>,
}

impl SeedRun {
    pub fn metrics(&self) -> &[RoundMetrics] {
        self.state.as_ref().map_or(&[], |s| &s.metrics)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub runs: Vec<SeedRun>,
    pub curve: Vec<CurvePoint>,
}

impl ExperimentReport {
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.runs.iter().flat_map(|r| r.metrics().iter().map(RoundMetrics::row)).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &SeedRun> {
        self.runs.iter().filter(|r| r.error.is_some())
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Continue from checkpoints found in the output directory.
    pub resume: bool,
    /// Stop each seed after this many rounds in this invocation.
    pub max_rounds_this_run: Option<usize>,
}

/// Worker count: `PREACQ_WORKERS` wins over the config; `None` means all cores.
pub fn resolve_workers(config: &ExperimentConfig) -> Result<Option<usize>> {
    match std::env::var("PREACQ_WORKERS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config("PREACQ_WORKERS", format!("expected a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(config.workers),
    }
}

fn thread_pool(config: &ExperimentConfig) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = resolve_workers(config)? {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

fn run_seed(
    config: &ExperimentConfig,
    seed: u64,
    opts: &RunOptions,
    all_rows: &mut Vec<MetricsRow>,
) -> Result<ExperimentState> {
    let out = config.output_dir.as_deref();
    let latest = match out {
        Some(o) if opts.resume => latest_checkpoint(o, seed)?,
        _ => None,
    };
    let resumed = match (out, latest) {
        (Some(o), Some((round, p))) => {
            let c = load_checkpoint(&p)?;
            if !resumable(&c.config, config) || c.state.seed != seed || c.state.round != round {
                return Err(Error::config(
                    "<checkpoint>",
                    format!("{} was written by a different configuration", p.display()),
                ));
            }
            log::info!("seed {seed}: resuming after round {round}");
            let model = if config.warm_start {
                let mp = model_checkpoint_path(o, seed, round);
                let mut f = fs::File::open(&mp)
                    .map_err(|e| Error::Format(format!("warm start needs {}: {e}", mp.display())))?;
                Some(read_model(&mut f)?)
            } else {
                None
            };
            Some((c.state, model))
        }
        _ => None,
    };
    let save = |state: &ExperimentState, model: &Option<FittedModel>| -> Result<()> {
        if let Some(o) = out {
            if config.warm_start {
                if let Some(m) = model {
                    save_model_checkpoint(&model_checkpoint_path(o, seed, state.round), m)?;
                }
            }
            save_checkpoint(&checkpoint_path(o, seed, state.round), config, state)?;
        }
        Ok(())
    };
    let (mut state, mut model) = match resumed {
        Some(r) => r,
        None => {
            let (s, m) = init_state(config, seed)?;
            let m = Some(m);
            save(&s, &m)?;
            (s, m)
        }
    };
    let flush = |state: &ExperimentState, all_rows: &[MetricsRow]| -> Result<()> {
        if let Some(o) = out {
            let mut rows = all_rows.to_vec();
            rows.extend(state.metrics.iter().map(RoundMetrics::row));
            write_metrics(&o.join("metrics.csv"), &rows)?;
        }
        Ok(())
    };
    flush(&state, all_rows)?;
    let mut done_now = 0;
    while state.round < config.rounds {
        if opts.max_rounds_this_run.is_some_and(|m| done_now >= m) {
            break;
        }
        let scores = run_round(&mut state, config, &mut model)?;
        done_now += 1;
        if let Some(o) = out {
            if let Some(s) = &scores {
                write_scores(
                    &o.join("scores").join(format!("seed_{seed}_round_{}.csv", s.round)),
                    config,
                    s,
                )?;
            }
        }
        save(&state, &model)?;
        flush(&state, all_rows)?;
    }
    all_rows.extend(state.metrics.iter().map(RoundMetrics::row));
    Ok(state)
}

/// Runs every configured seed. A failing seed is recorded and the others
/// continue. With an output directory, writes `metrics.csv`,
/// `learning_curve.csv`, per-round score dumps and per-round checkpoints.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    config.validate()?;
    let pool = thread_pool(config)?;
    pool.install(|| {
        let mut rows = Vec::new();
        let mut runs = Vec::new();
        for &seed in &config.seeds {
            match run_seed(config, seed, opts, &mut rows) {
                Ok(state) => runs.push(SeedRun {
                    seed,
                    state: Some(state),
                    error: None,
                }),
                Err(e) => {
                    log::error!("seed {seed} failed: {e}");
                    runs.push(SeedRun {
                        seed,
                        state: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
        let curve = learning_curve(&rows);
        if let Some(o) = &config.output_dir {
            write_metrics(&o.join("metrics.csv"), &rows)?;
            write_curve(&o.join("learning_curve.csv"), &curve)?;
        }
        Ok(ExperimentReport { runs, curve })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(policy: Policy, n_train: usize, rmse: f64, seed: u64) -> MetricsRow {
        MetricsRow {
            seed,
            round: 0,
            n_train,
            rmse,
            policy,
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn curve_statistics() {
        let rows = vec![
            row(Policy::Random, 8, 1.0, 0),
            row(Policy::Random, 8, 3.0, 1),
            row(Policy::TopK, 8, 2.0, 0),
        ];
        let c = learning_curve(&rows);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].policy, Policy::Random);
        assert_eq!(c[0].mean_rmse, 2.0);
        // sample sd sqrt(2), stderr 1
        assert!((c[0].ci95_hi - 3.96).abs() < 1e-12);
        assert_eq!((c[1].ci95_lo, c[1].ci95_hi), (2.0, 2.0));

        let same: Vec<_> = (0..5).map(|s| row(Policy::Sbal, 16, 0.7, s)).collect();
        let c = learning_curve(&same);
        assert_eq!(c[0].ci95_hi - c[0].ci95_lo, 0.0);
    }

    #[test]
    fn streams_are_independent() {
        let a = candidate_rng(1, 5).next_u64();
        assert_eq!(a, candidate_rng(1, 5).next_u64());
        assert_ne!(a, candidate_rng(1, 6).next_u64());
        assert_ne!(a, candidate_rng(2, 5).next_u64());
        assert_ne!(selection_seed(0, 0), selection_seed(0, 1));
    }
}
