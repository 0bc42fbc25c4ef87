mod common;

use std::collections::HashSet;
use std::f64::consts::PI;

use common::*;
use preacq::acquisition::Policy;
use preacq::al_loop::{
    build_pool, evaluate_rmse, init_state, learning_curve, read_metrics, run_experiment, run_round, MetricsRow,
    RunOptions,
};
use preacq::config::ExperimentConfig;
use preacq::surrogate::{SpectralRidgeConfig, Surrogate, SurrogateConfig};
use preacq::types::{make_grid, Candidate, Family, Field, IcParameters, LabeledSample, PdeParameters, Trajectory};
use preacq::Result;

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(Family::Burgers1D);
    c.grid = make_grid(1, 32, 2.0 * PI, 0.05, 9).unwrap();
    c.pool_size = 12;
    c.test_size = 4;
    c.initial_size = 2;
    c.batch_size = 2;
    c.rounds = 3;
    c.seeds = vec![0, 1];
    c.workers = Some(2);
    c
}

#[test]
fn pool_contract() {
    let mut c = small_config();
    c.pool_size = 8;
    c.test_size = 2;
    c.initial_size = 2;
    c.rounds = 1;
    let (pool, test) = build_pool(&c, 3).unwrap();
    assert_eq!(pool.len(), 8);
    assert_eq!(test.len(), 2);
    let ids: HashSet<u64> = pool.iter().map(|p| p.id).chain(test.iter().map(|t| t.candidate.id)).collect();
    assert_eq!(ids.len(), 10);
    for cand in pool.iter().chain(test.iter().map(|t| &t.candidate)) {
        let nu = cand.pde.delta()[0];
        assert!((0.1..1.0).contains(&nu), "{nu}");
    }
    let (again, again_test) = build_pool(&c, 3).unwrap();
    assert_eq!(again, pool);
    assert_eq!(again_test, test);
    let (other, _) = build_pool(&c, 4).unwrap();
    assert_ne!(other, pool);
}

#[test]
fn batch_equal_to_pool_empties_it() {
    let mut c = small_config();
    c.pool_size = 6;
    c.initial_size = 2;
    c.batch_size = 4;
    c.rounds = 1;
    let (mut state, model) = init_state(&c, 0).unwrap();
    let mut model = Some(model);
    run_round(&mut state, &c, &mut model).unwrap();
    assert!(state.pool.is_empty());
    assert_eq!(state.training.len(), 6);
    assert!(run_round(&mut state, &c, &mut model).is_err());
    assert_eq!(state.round, 1);
}

#[test]
fn random_policy_ignores_the_surrogate() {
    let mut a = small_config();
    a.policy = Policy::Random;
    a.seeds = vec![5];
    let mut b = a.clone();
    b.surrogate = SurrogateConfig::SpectralRidge(SpectralRidgeConfig {
        degree: 0,
        ridge: 1e-2,
        ..Default::default()
    });
    let ra = run_experiment(&a, &RunOptions::default()).unwrap();
    let rb = run_experiment(&b, &RunOptions::default()).unwrap();
    let (sa, sb) = (ra.runs[0].state.as_ref().unwrap(), rb.runs[0].state.as_ref().unwrap());
    assert_eq!(sa.training, sb.training);
    for (x, y) in sa.metrics.iter().zip(&sb.metrics) {
        assert_eq!(x.selected, y.selected);
    }
}

#[test]
fn runs_are_deterministic_across_worker_counts() {
    for policy in [Policy::TopK, Policy::Sbal, Policy::Random] {
        let mut c = small_config();
        c.policy = policy;
        let a = run_experiment(&c, &RunOptions::default()).unwrap();
        c.workers = Some(1);
        let b = run_experiment(&c, &RunOptions::default()).unwrap();
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert!(x.state.as_ref().unwrap().same_result(y.state.as_ref().unwrap()), "{policy}");
        }
    }
}

fn resume_matches(mut c: ExperimentConfig) {
    let whole = run_experiment(&c, &RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    c.output_dir = Some(dir.path().to_path_buf());
    let partial = run_experiment(
        &c,
        &RunOptions {
            resume: false,
            max_rounds_this_run: Some(1),
        },
    )
    .unwrap();
    assert!(partial.runs.iter().all(|r| r.state.as_ref().unwrap().round == 1));
    let resumed = run_experiment(
        &c,
        &RunOptions {
            resume: true,
            max_rounds_this_run: None,
        },
    )
    .unwrap();
    for (x, y) in whole.runs.iter().zip(&resumed.runs) {
        assert!(x.state.as_ref().unwrap().same_result(y.state.as_ref().unwrap()));
    }
    let rows = read_metrics(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), c.seeds.len() * (c.rounds + 1));
    for (r, w) in rows.iter().zip(whole.rows()) {
        assert_eq!((r.seed, r.round, r.n_train), (w.seed, w.round, w.n_train));
        assert_eq!(r.rmse.to_bits(), w.rmse.to_bits());
    }
}

#[test]
fn resume_equals_uninterrupted_run() {
    let mut c = small_config();
    c.policy = Policy::Sbal;
    resume_matches(c.clone());
    c.warm_start = true;
    resume_matches(c);
}

#[test]
fn resume_rejects_a_changed_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config();
    c.seeds = vec![0];
    c.output_dir = Some(dir.path().to_path_buf());
    run_experiment(
        &c,
        &RunOptions {
            resume: false,
            max_rounds_this_run: Some(1),
        },
    )
    .unwrap();
    c.batch_size = 3;
    let r = run_experiment(
        &c,
        &RunOptions {
            resume: true,
            max_rounds_this_run: None,
        },
    )
    .unwrap();
    assert!(r.runs[0].error.as_deref().unwrap().contains("different configuration"));
}

/// Replays stored trajectories: the next frame of whichever trajectory holds `field`.
struct Oracle(Vec<Trajectory>);

impl Surrogate for Oracle {
    fn family(&self) -> Family {
        Family::Burgers1D
    }

    fn step(&self, field: &Field, _: &PdeParameters) -> Result<Field> {
        for t in &self.0 {
            if let Some(n) = t.frames().iter().position(|f| f == field) {
                return Ok(t.frames()[(n + 1).min(t.frames().len() - 1)].clone());
            }
        }
        panic!("field not in any stored trajectory")
    }
}

struct Zero;

impl Surrogate for Zero {
    fn family(&self) -> Family {
        Family::Burgers1D
    }

    fn step(&self, field: &Field, _: &PdeParameters) -> Result<Field> {
        Ok(Field::zeros(*field.grid(), field.channels()))
    }
}

/// Arbitrary deterministic nonlinear map.
struct Wobble;

impl Surrogate for Wobble {
    fn family(&self) -> Family {
        Family::Burgers1D
    }

    fn step(&self, field: &Field, pde: &PdeParameters) -> Result<Field> {
        let nu = pde.delta()[0];
        let v = field
            .values()
            .iter()
            .enumerate()
            .map(|(i, u)| 0.9 * u + 0.1 * (i as f64 * nu).sin())
            .collect();
        Field::new(*field.grid(), field.channels(), v)
    }
}

#[test]
fn rmse_against_oracles() {
    let g = burgers_grid(32, 7);
    let test = label(&random_burgers(5, (0.1, 1.0), 1.0, &g, 9), &g);
    let oracle = Oracle(test.iter().map(|s| s.truth.clone()).collect());
    assert_eq!(evaluate_rmse(&oracle, &test).unwrap(), 0.0);

    let ones = Field::new(g, 1, vec![1.0; 32]).unwrap();
    let cand = Candidate::new(0, PdeParameters::burgers(0.5).unwrap(), IcParameters(vec![0.0; 8]), ones.clone()).unwrap();
    let flat = LabeledSample::new(cand, Trajectory::new(g, vec![ones; 7]).unwrap(), 0.0).unwrap();
    assert_eq!(evaluate_rmse(&Zero, &[flat]).unwrap(), 1.0);

    let mut sum = 0.0;
    let mut count = 0usize;
    for s in &test {
        let mut u = s.candidate.ic_field.clone();
        for n in 1..s.truth.frames().len() {
            u = Wobble.step(&u, &s.candidate.pde).unwrap();
            for c in 0..u.channels() {
                for (p, t) in u.channel(c).iter().zip(s.truth.frame(n).channel(c)) {
                    sum += (p - t) * (p - t);
                    count += 1;
                }
            }
        }
    }
    let naive = (sum / count as f64).sqrt();
    let got = evaluate_rmse(&Wobble, &test).unwrap();
    assert!((got - naive).abs() <= 1e-12, "{got} vs {naive}");
}

#[test]
fn one_round_one_seed_gives_two_entries() {
    let mut c = small_config();
    c.rounds = 1;
    c.seeds = vec![2];
    let r = run_experiment(&c, &RunOptions::default()).unwrap();
    let m = r.runs[0].metrics();
    assert_eq!(m.len(), 2);
    assert_eq!((m[0].round, m[0].n_train), (0, 2));
    assert_eq!((m[1].round, m[1].n_train), (1, 4));
    assert!(m.iter().all(|x| x.rmse.is_finite() && x.rmse > 0.0));
}

fn row(seed: u64, n_train: usize, rmse: f64) -> MetricsRow {
    MetricsRow {
        seed,
        round: 0,
        n_train,
        rmse,
        policy: Policy::TopK,
        wall_seconds: 0.0,
    }
}

#[test]
fn identical_runs_have_zero_width_interval() {
    let rows: Vec<_> = (0..4).map(|s| row(s, 8, 0.25)).collect();
    let curve = learning_curve(&rows);
    assert_eq!(curve.len(), 1);
    assert_eq!(curve[0].mean_rmse, 0.25);
    assert_eq!(curve[0].ci95_lo, curve[0].ci95_hi);
    assert_eq!(curve[0].n_runs, 4);
}

#[test]
fn curve_is_the_per_seed_average() {
    let mut c = small_config();
    c.seeds = vec![0, 1, 2];
    c.rounds = 2;
    let r = run_experiment(&c, &RunOptions::default()).unwrap();
    assert_eq!(r.curve.len(), c.rounds + 1);
    for (i, p) in r.curve.iter().enumerate() {
        let vals: Vec<f64> = r.runs.iter().map(|s| s.metrics()[i].rmse).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt();
        let half = 1.96 * sd / (vals.len() as f64).sqrt();
        assert!((p.mean_rmse - mean).abs() <= 1e-15 * mean);
        assert!((p.ci95_hi - p.ci95_lo - 2.0 * half).abs() <= 1e-12 * mean.max(half));
        assert_eq!(p.n_train, c.initial_size + i * c.batch_size);
    }
}

#[test]
fn every_candidate_is_accounted_for() {
    let mut c = small_config();
    c.policy = Policy::TopK;
    let (mut state, model) = init_state(&c, 7).unwrap();
    let mut model = Some(model);
    while state.round < c.rounds {
        run_round(&mut state, &c, &mut model).unwrap();
        let failed: usize = state.metrics.iter().map(|m| m.failed.len()).sum();
        assert_eq!(state.training.len() + state.pool.len() + failed, c.pool_size);
        let selected: usize = state.metrics.iter().map(|m| m.selected.len()).sum();
        assert_eq!(selected, c.initial_size + state.round * c.batch_size);
    }
    let mut ids: Vec<u64> = state
        .training
        .iter()
        .map(|s| s.candidate.id)
        .chain(state.pool.iter().map(|p| p.id))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), state.training.len() + state.pool.len());
    for s in state.training.iter().chain(&state.test) {
        assert_eq!(s.truth.frame(0), &s.candidate.ic_field);
    }
}
