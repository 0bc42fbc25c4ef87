mod common;

use common::*;
use preacq::acquisition::{
    normalize, score_pool, select_random, select_sbal, select_topk, unnormalized, PoolScore, ScoredCandidate,
};
use preacq::residual::{pre_burgers, score, ResidualConfig};
use preacq::surrogate::SpectralRidgeModel;
use preacq::types::{Family, LabeledSample, Trajectory};
use preacq::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scored(values: &[f64]) -> Vec<ScoredCandidate> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| ScoredCandidate {
            id: i as u64,
            raw_score: v,
            normalizer: 1.0,
            normalized_score: v,
            blown: false,
        })
        .collect()
}

fn scaled(s: &[ScoredCandidate], alpha: f64) -> Vec<ScoredCandidate> {
    s.iter()
        .map(|c| ScoredCandidate {
            normalized_score: c.normalized_score * alpha,
            raw_score: c.raw_score * alpha,
            ..*c
        })
        .collect()
}

#[test]
fn sbal_matches_categorical_probability() {
    let s = scored(&[1.0, 3.0]);
    let draws = 100_000u64;
    let hits = (0..draws).filter(|&seed| select_sbal(&s, 1, 1.0, seed).unwrap()[0] == 1).count();
    let freq = hits as f64 / draws as f64;
    assert!((0.74..=0.76).contains(&freq), "P(score 3) = {freq}");
}

#[test]
fn sharp_sbal_is_topk() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for seed in 0..100u64 {
        let values: Vec<f64> = (0..12).map(|_| rng.gen_range(0.01..10.0)).collect();
        let s = scored(&values);
        let k = 1 + (seed as usize % 6);
        let mut a = select_sbal(&s, k, 1e6, seed).unwrap();
        let mut b = select_topk(&s, k).unwrap();
        a.sort();
        b.sort();
        assert_eq!(a, b, "seed {seed}");
    }
}

#[test]
fn sbal_avoids_zero_scores() {
    let s = scored(&[0.0, 0.2]);
    let hits = (0..10_000u64).filter(|&seed| select_sbal(&s, 1, 1.0, seed).unwrap()[0] == 1).count();
    assert_eq!(hits, 10_000);
}

#[test]
fn random_is_uniform() {
    let pool = [10u64, 11, 12, 13];
    let mut counts = [0usize; 4];
    let draws = 100_000u64;
    for seed in 0..draws {
        let id = select_random(&pool, 1, seed).unwrap()[0];
        counts[(id - 10) as usize] += 1;
    }
    for c in counts {
        let f = c as f64 / draws as f64;
        assert!((0.24..=0.26).contains(&f), "{counts:?}");
    }
    assert!(matches!(select_random(&pool, 5, 0), Err(Error::BatchTooLarge { .. })));
}

#[test]
fn selection_is_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..100u64 {
        let n = rng.gen_range(2..30);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
        let k = rng.gen_range(1..=n);
        let alpha = 10f64.powf(rng.gen_range(-3.0..3.0));
        let (s, t) = (scored(&values), scaled(&scored(&values), alpha));
        assert_eq!(select_topk(&s, k).unwrap(), select_topk(&t, k).unwrap());
        assert_eq!(select_sbal(&s, k, 1.0, trial).unwrap(), select_sbal(&t, k, 1.0, trial).unwrap());
    }
}

#[test]
fn selections_are_distinct_pool_members() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let values: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..1.0)).collect();
    let s = scored(&values);
    let ids: Vec<u64> = (0..40).collect();
    for seed in 0..50 {
        for pick in [
            select_topk(&s, 15).unwrap(),
            select_sbal(&s, 15, 2.0, seed).unwrap(),
            select_random(&ids, 15, seed).unwrap(),
        ] {
            let mut d = pick.clone();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), 15);
            assert!(pick.iter().all(|id| *id < 40));
        }
    }
}

fn labeled(id: u64, nu: f64, truth_score: f64) -> LabeledSample {
    let g = burgers_grid(16, 3);
    let c = burgers_candidate(id, nu, vec![0.0; 8], &g);
    let truth = Trajectory::new(g, vec![c.ic_field.clone(); 3]).unwrap();
    LabeledSample::new(c, truth, truth_score).unwrap()
}

#[test]
fn normalization_uses_nearest_member() {
    let g = burgers_grid(16, 3);
    let training = vec![labeled(100, 0.2, 2.0), labeled(101, 0.8, 4.0)];
    let pool = vec![
        burgers_candidate(0, 0.3, vec![0.0; 8], &g),
        burgers_candidate(1, 0.5, vec![0.0; 8], &g),
        burgers_candidate(2, 0.75, vec![0.0; 8], &g),
    ];
    let raw: Vec<PoolScore> = (0..3)
        .map(|i| PoolScore {
            id: i,
            raw_score: 1.0,
            blown: false,
        })
        .collect();
    let out = normalize(&raw, &pool, &training, &[[0.1, 1.0]]).unwrap();
    assert_eq!(out[0].normalized_score, 0.5);
    assert_eq!(out[2].normalizer, 4.0);

    // 0.5 sits exactly between 0.25 and 0.75; the lower id wins whatever the order
    let tied = vec![labeled(201, 0.75, 4.0), labeled(200, 0.25, 2.0)];
    let out = normalize(&raw, &pool, &tied, &[[0.0, 1.0]]).unwrap();
    assert_eq!(out[1].normalizer, 2.0);

    let zero = vec![labeled(7, 0.5, 0.0)];
    let out = normalize(&raw, &pool, &zero, &[[0.1, 1.0]]).unwrap();
    assert!(out.iter().all(|s| s.normalized_score.is_finite() && s.normalizer == 1e-12));

    let passthrough = normalize(&raw, &pool, &[], &[[0.1, 1.0]]).unwrap();
    assert_eq!(passthrough, unnormalized(&raw));
}

#[test]
fn single_member_normalization_keeps_topk() {
    let g = burgers_grid(16, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let n = 10;
        let pool: Vec<_> = (0..n)
            .map(|i| burgers_candidate(i, rng.gen_range(0.1..1.0), vec![0.0; 8], &g))
            .collect();
        let raw: Vec<PoolScore> = (0..n)
            .map(|i| PoolScore {
                id: i,
                raw_score: rng.gen_range(0.0..3.0),
                blown: false,
            })
            .collect();
        let c = rng.gen_range(0.1..5.0);
        let norm = normalize(&raw, &pool, &[labeled(50, 0.4, c)], &[[0.1, 1.0]]).unwrap();
        for (r, s) in raw.iter().zip(&norm) {
            assert_eq!(s.normalized_score, r.raw_score / c);
        }
        for k in 1..=n as usize {
            assert_eq!(select_topk(&norm, k).unwrap(), select_topk(&unnormalized(&raw), k).unwrap());
        }
    }
}

#[test]
fn identity_model_scores_constant_extension() {
    let g = burgers_grid(64, 9);
    let mut pool = random_burgers(6, (0.1, 1.0), 1.0, &g, 3);
    pool.push(burgers_candidate(99, 0.5, vec![0.0; 8], &g));
    let model = SpectralRidgeModel::identity(Family::Burgers1D, &g, 16);
    let scores = score_pool(&model, &pool, &g, &ResidualConfig::default()).unwrap();
    assert_eq!(scores.len(), pool.len());
    for (s, c) in scores.iter().zip(&pool) {
        assert_eq!(s.id, c.id);
        assert!(!s.blown);
        let frozen = Trajectory::new(g, vec![c.ic_field.clone(); g.n_frames()]).unwrap();
        let direct = score(&pre_burgers(&frozen, c.pde.delta()[0]).unwrap()).unwrap();
        assert!((s.raw_score - direct).abs() <= 1e-12 * direct.max(1.0), "{} vs {direct}", s.raw_score);
    }
    assert_eq!(scores.last().unwrap().raw_score, 0.0);
    assert!(matches!(
        score_pool(&model, &[], &g, &ResidualConfig::default()),
        Err(Error::Empty(_))
    ));
}
