//! Turning surrogate rollouts into a selected batch.
//!
//! Pool candidates are rolled out with the current surrogate and scored by
//! the mean absolute residual of the rollout. Scores are optionally divided
//! by the ground-truth score of the nearest labeled sample in coefficient
//! space, then a batch is picked greedily (top-k), stochastically (SBAL) or
//! uniformly at random.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::residual::{trajectory_score, ResidualConfig};
use crate::surrogate::{rollout_frames, Surrogate};
use crate::types::{Candidate, CandidateId, Grid, LabeledSample, Trajectory};

/// Smallest normalizer; guards against zero-residual training trajectories.
pub const NORMALIZER_FLOOR: f64 = 1e-12;

/// Guards `ln(0)` in the SBAL log-scores.
pub const LOG_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    #[serde(alias = "topk")]
    TopK,
    Sbal,
    Random,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::TopK => "top_k",
            Policy::Sbal => "sbal",
            Policy::Random => "random",
        }
    }

    /// Whether the policy needs surrogate scores.
    pub fn uses_scores(self) -> bool {
        !matches!(self, Policy::Random)
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top_k" | "topk" => Ok(Policy::TopK),
            "sbal" => Ok(Policy::Sbal),
            "random" => Ok(Policy::Random),
            _ => Err(Error::config("policy", format!("unknown policy {s:?}, expected top_k, sbal or random"))),
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw acquisition score of one pool member.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoolScore {
    pub id: CandidateId,
    /// Mean absolute residual of the rollout; `+inf` when it blew up.
    pub raw_score: f64,
    pub blown: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredCandidate {
    pub id: CandidateId,
    pub raw_score: f64,
    pub normalizer: f64,
    /// `raw_score / normalizer`; `+inf` only for blown rollouts.
    pub normalized_score: f64,
    pub blown: bool,
}

fn blown(id: CandidateId) -> PoolScore {
    PoolScore {
        id,
        raw_score: f64::INFINITY,
        blown: true,
    }
}

/// Scores every pool candidate by rolling out `model` and measuring the
/// residual of the rollout. Runs on the ambient rayon pool.
pub fn score_pool<S: Surrogate + ?Sized>(
    model: &S,
    pool: &[Candidate],
    grid: &Grid,
    residual: &ResidualConfig,
) -> Result<Vec<PoolScore>> {
    if pool.is_empty() {
        return Err(Error::Empty("pool"));
    }
    pool.par_iter()
        .map(|c| {
            let out = rollout_frames(model, c, grid.n_frames())?;
            if out.blown_at.is_some() {
                log::debug!("candidate {} rollout blew up at step {:?}", c.id, out.blown_at);
                return Ok(blown(c.id));
            }
            let traj = Trajectory::new(*grid, out.frames)?;
            match trajectory_score(&traj, &c.pde, residual) {
                Ok(s) if s.is_finite() => Ok(PoolScore {
                    id: c.id,
                    raw_score: s,
                    blown: false,
                }),
                // finite rollout whose residual overflows
                Ok(_) | Err(Error::NonFinite { .. }) => Ok(blown(c.id)),
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn standardize(delta: &[f64], ranges: &[[f64; 2]]) -> Vec<f64> {
    delta
        .iter()
        .zip(ranges)
        .map(|(&d, &[lo, hi])| {
            let width = if hi > lo { hi - lo } else { 1.0 };
            (d - lo) / width
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Divides each raw score by the cached truth score of the nearest training
/// sample, distance measured after min-max scaling each coefficient by
/// `ranges`. Distance ties go to the lower sample id. With an empty training
/// set scores pass through unchanged.
pub fn normalize(
    scores: &[PoolScore],
    pool: &[Candidate],
    training: &[LabeledSample],
    ranges: &[[f64; 2]],
) -> Result<Vec<ScoredCandidate>> {
    if training.is_empty() {
        log::warn!("empty training set, normalization disabled");
        return Ok(unnormalized(scores));
    }
    let anchors: Vec<(CandidateId, Vec<f64>, f64)> = training
        .iter()
        .map(|t| (t.id(), standardize(&t.candidate.pde.delta(), ranges), t.truth_score))
        .collect();
    scores
        .iter()
        .map(|s| {
            let cand = pool
                .iter()
                .find(|c| c.id == s.id)
                .ok_or_else(|| Error::InvalidParameter(format!("score for unknown candidate {}", s.id)))?;
            let x = standardize(&cand.pde.delta(), ranges);
            let mut best: Option<(f64, CandidateId, f64)> = None;
            for (id, y, truth) in &anchors {
                let d = sq_dist(&x, y);
                let better = match best {
                    None => true,
                    Some((bd, bid, _)) => d < bd || (d == bd && *id < bid),
                };
                if better {
                    best = Some((d, *id, *truth));
                }
            }
            let normalizer = best.map_or(1.0, |b| b.2).max(NORMALIZER_FLOOR);
            Ok(ScoredCandidate {
                id: s.id,
                raw_score: s.raw_score,
                normalizer,
                normalized_score: s.raw_score / normalizer,
                blown: s.blown,
            })
        })
        .collect()
}

/// Normalization bypassed: every normalizer is 1.
pub fn unnormalized(scores: &[PoolScore]) -> Vec<ScoredCandidate> {
    scores
        .iter()
        .map(|s| ScoredCandidate {
            id: s.id,
            raw_score: s.raw_score,
            normalizer: 1.0,
            normalized_score: s.raw_score,
            blown: s.blown,
        })
        .collect()
}

fn check_batch(k: usize, pool: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("batch size must be at least 1".into()));
    }
    if k > pool {
        return Err(Error::BatchTooLarge { k, pool });
    }
    Ok(())
}

/// Descending by key, ascending id on ties.
fn take_best(mut keyed: Vec<(f64, CandidateId)>, k: usize) -> Vec<CandidateId> {
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().take(k).map(|(_, id)| id).collect()
}

/// The `k` highest normalized scores, ties broken by lower id. Blown
/// rollouts rank first.
pub fn select_topk(scored: &[ScoredCandidate], k: usize) -> Result<Vec<CandidateId>> {
    check_batch(k, scored.len())?;
    let keyed = scored
        .iter()
        .map(|s| (if s.blown { f64::INFINITY } else { s.normalized_score }, s.id))
        .collect();
    Ok(take_best(keyed, k))
}

/// Samples `k` candidates without replacement with inclusion weight
/// proportional to `score^beta`, via Gumbel-perturbed log-scores. Noise is
/// drawn in ascending id order so the result does not depend on input order.
pub fn select_sbal(scored: &[ScoredCandidate], k: usize, beta: f64, seed: u64) -> Result<Vec<CandidateId>> {
    check_batch(k, scored.len())?;
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let mut order: Vec<&ScoredCandidate> = scored.iter().collect();
    order.sort_by_key(|s| s.id);
    let logs: Vec<f64> = order
        .iter()
        .map(|s| beta * s.normalized_score.max(LOG_FLOOR).ln())
        .collect();
    let top_finite = order
        .iter()
        .zip(&logs)
        .filter(|(s, l)| !s.blown && l.is_finite())
        .map(|(_, &l)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let top_finite = if top_finite.is_finite() { top_finite } else { 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keyed = order
        .iter()
        .zip(&logs)
        .map(|(s, &l)| {
            let u: f64 = rng.sample(Open01);
            let gumbel = -(-u.ln()).ln();
            let l = if s.blown || !l.is_finite() { top_finite } else { l };
            (l + gumbel, s.id)
        })
        .collect();
    Ok(take_best(keyed, k))
}

/// Uniform sample of `k` ids without replacement.
pub fn select_random(pool: &[CandidateId], k: usize, seed: u64) -> Result<Vec<CandidateId>> {
    check_batch(k, pool.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect())
}
