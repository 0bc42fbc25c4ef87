//! Fast self-check suite behind `preacq verify`.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{select_sbal, select_topk, ScoredCandidate};
use crate::residual::{convolve_periodic, pre_burgers_with, score, StencilSpec};
use crate::solvers::{solve_burgers, solve_ns2d, SolverConfig};
use crate::surrogate::{Example, Init, StencilNetModel};
use crate::types::{make_grid, Family, Field, Grid, Trajectory, ADIABATIC_INDEX};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    /// Relative perturbation applied to the first-derivative stencil taps.
    /// Nonzero values exist to prove the suite can fail.
    pub stencil_perturbation: f64,
}

fn stencils(grid: &Grid, opts: &VerifyOptions) -> StencilSpec {
    let mut st = StencilSpec::central(grid);
    for axis in 0..2 {
        st.d_x[axis][2] *= 1.0 + opts.stencil_perturbation;
    }
    st
}

fn check(name: &'static str, f: impl FnOnce() -> (bool, String)) -> CheckResult {
    let t = Instant::now();
    let (passed, detail) = f();
    CheckResult {
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn stencil_exactness(opts: &VerifyOptions) -> (bool, String) {
    let grid = make_grid(1, 32, 2.5, 0.1, 3).expect("grid");
    let st = stencils(&grid, opts);
    let xs = grid.coords(0);
    let lin: Vec<f64> = xs.iter().map(|x| 1.5 * x - 0.25).collect();
    let quad: Vec<f64> = xs.iter().map(|x| -0.75 * x * x + x).collect();
    let mut d1 = vec![0.0; 32];
    let mut d2 = vec![0.0; 32];
    convolve_periodic(&lin, &grid, 0, &st.d_x[0], &mut d1);
    convolve_periodic(&quad, &grid, 0, &st.d_xx[0], &mut d2);
    let e1 = (1..31).map(|i| (d1[i] - 1.5).abs()).fold(0.0, f64::max);
    let e2 = (1..31).map(|i| (d2[i] + 1.5).abs()).fold(0.0, f64::max);
    (e1 < 1e-12 && e2 < 1e-10, format!("slope error {e1:.2e}, curvature error {e2:.2e}"))
}

fn burgers_mms(opts: &VerifyOptions) -> (bool, String) {
    let nu = 0.3;
    let errs: Vec<f64> = (0..4)
        .map(|l| {
            let n = 32usize << l;
            let dt = 0.1 / (1u32 << l) as f64;
            let grid = make_grid(1, n, 2.0 * PI, dt, (0.8 / dt).round() as usize + 1).expect("grid");
            let xs = grid.coords(0);
            let frames = (0..grid.n_frames())
                .map(|m| {
                    let t = m as f64 * dt;
                    Field::new(grid, 1, xs.iter().map(|x| (x - t).sin()).collect()).expect("field")
                })
                .collect();
            let traj = Trajectory::new(grid, frames).expect("trajectory");
            let r = pre_burgers_with(&traj, nu, &stencils(&grid, opts)).expect("residual");
            let mut worst: f64 = 0.0;
            for (m, f) in r.frames().iter().enumerate() {
                let t = (m + 1) as f64 * dt;
                for (i, x) in xs.iter().enumerate() {
                    let s = x - t;
                    let exact = -s.cos() + s.sin() * s.cos() + nu * s.sin();
                    worst = worst.max((f.values()[i] - exact).abs());
                }
            }
            worst
        })
        .collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    (
        ratios.iter().all(|r| (3.0..=5.0).contains(r)),
        format!("refinement ratios {ratios:.3?}"),
    )
}

fn score_oracle(opts: &VerifyOptions) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let grid = make_grid(1, rng.gen_range(8..48), 2.0 * PI, 0.05, rng.gen_range(3..8)).expect("grid");
        let frames = (0..grid.n_frames())
            .map(|_| Field::new(grid, 1, (0..grid.nx()).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("field"))
            .collect();
        let traj = Trajectory::new(grid, frames).expect("trajectory");
        let r = pre_burgers_with(&traj, 0.5, &stencils(&grid, opts)).expect("residual");
        let s = score(&r).expect("score");
        let mut sum = 0.0;
        let mut count = 0.0;
        for f in r.frames() {
            for v in f.values() {
                sum += v.abs();
                count += 1.0;
            }
        }
        worst = worst.max((s - sum / count).abs() / (sum / count).max(1.0));
    }
    (worst <= 1e-12, format!("max relative deviation {worst:.2e}"))
}

fn burgers_physics() -> (bool, String) {
    let grid = make_grid(1, 256, 2.0 * PI, 0.05, 21).expect("grid");
    let xs = grid.coords(0);
    let cfg = SolverConfig::default();
    let ic = Field::new(grid, 1, xs.iter().map(|x| 0.2 + x.sin() + 0.4 * (2.0 * x).cos()).collect()).expect("field");
    let t = solve_burgers(&ic, 0.2, &grid, &cfg).expect("solve");
    let mass = |f: &Field| f.values().iter().sum::<f64>();
    let m0 = mass(t.frame(0));
    let drift = t.frames().iter().map(|f| ((mass(f) - m0) / m0).abs()).fold(0.0, f64::max);

    let (eps, nu) = (1e-3, 0.5);
    let ic = Field::new(grid, 1, xs.iter().map(|x| eps * x.sin()).collect()).expect("field");
    let t = solve_burgers(&ic, nu, &grid, &cfg).expect("solve");
    let mut decay: f64 = 0.0;
    for (n, f) in t.frames().iter().enumerate() {
        let amp = f.values().iter().zip(&xs).map(|(u, x)| u * x.sin()).sum::<f64>() * 2.0 / xs.len() as f64;
        let expected = eps * (-nu * n as f64 * grid.dt_frame()).exp();
        decay = decay.max(((amp - expected) / expected).abs());
    }
    (
        drift < 1e-10 && decay < 1e-3,
        format!("mass drift {drift:.2e}, heat decay error {decay:.2e}"),
    )
}

fn ns_physics() -> (bool, String) {
    let grid = Grid::with_axes(2, [32, 32], [1.0, 1.0], 0.05, 5).expect("grid");
    let cfg = SolverConfig::default();
    let n = grid.n_spatial();
    let mut v = vec![0.0; 4 * n];
    let xs = grid.coords(0);
    let ys = grid.coords(1);
    for (j, y) in ys.iter().enumerate() {
        for (i, x) in xs.iter().enumerate() {
            let k = j * 32 + i;
            v[k] = 1.0 + 0.1 * (2.0 * PI * x).sin();
            v[n + k] = 0.1 * (2.0 * PI * y).cos();
            v[2 * n + k] = 0.05 * (2.0 * PI * x).sin();
            v[3 * n + k] = 1.0 + 0.05 * (2.0 * PI * (x + y)).cos();
        }
    }
    let ic = Field::new(grid, 4, v).expect("field");
    let t = solve_ns2d(&ic, 0.05, 0.05, ADIABATIC_INDEX, &grid, &cfg).expect("solve");
    let mass = |f: &Field| f.channel(0).iter().sum::<f64>();
    let m0 = mass(t.frame(0));
    let drift = t.frames().iter().map(|f| ((mass(f) - m0) / m0).abs()).fold(0.0, f64::max);

    let mut u = vec![0.0; 4 * n];
    u[..n].fill(1.2);
    u[n..2 * n].fill(0.3);
    u[2 * n..3 * n].fill(-0.2);
    u[3 * n..].fill(0.9);
    let uniform = Field::new(grid, 4, u).expect("field");
    let t = solve_ns2d(&uniform, 0.05, 0.05, ADIABATIC_INDEX, &grid, &cfg).expect("solve");
    let dev = t
        .frames()
        .iter()
        .flat_map(|f| f.values().iter().zip(uniform.values()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    (
        drift < 1e-10 && dev < 1e-10,
        format!("mass drift {drift:.2e}, uniform-state deviation {dev:.2e}"),
    )
}

fn sbal_frequency() -> (bool, String) {
    let scored = |v: &[f64]| -> Vec<ScoredCandidate> {
        v.iter()
            .enumerate()
            .map(|(i, &s)| ScoredCandidate {
                id: i as u64,
                raw_score: s,
                normalizer: 1.0,
                normalized_score: s,
                blown: false,
            })
            .collect()
    };
    let pair = scored(&[1.0, 3.0]);
    let draws = 100_000u64;
    let hits = (0..draws)
        .filter(|&seed| select_sbal(&pair, 1, 1.0, seed).expect("sbal")[0] == 1)
        .count();
    let freq = hits as f64 / draws as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut sharp_ok = true;
    for seed in 0..100 {
        let s = scored(&(0..10).map(|_| rng.gen_range(0.1..5.0)).collect::<Vec<_>>());
        let mut a = select_sbal(&s, 3, 1e6, seed).expect("sbal");
        let mut b = select_topk(&s, 3).expect("topk");
        a.sort();
        b.sort();
        sharp_ok &= a == b;
    }
    (
        (0.74..=0.76).contains(&freq) && sharp_ok,
        format!("P(larger) = {freq:.4}, beta=1e6 matches top-k: {sharp_ok}"),
    )
}

fn gradient_check() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let model = StencilNetModel::new(Family::Burgers1D, 2, 16, Init::Random, seed).expect("model");
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let data: Vec<Example> = (0..16)
            .map(|_| Example {
                input: (0..model.n_inputs()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                target: rng.gen_range(-0.5..0.5),
            })
            .collect();
        let batch: Vec<&Example> = data.iter().collect();
        let (_, grad) = model.loss_and_grad(model.params(), &batch);
        for _ in 0..10 {
            let i = rng.gen_range(0..grad.len());
            let h = 1e-5;
            let mut p = model.params().to_vec();
            p[i] += h;
            let up = model.loss(&p, &batch);
            p[i] -= 2.0 * h;
            let fd = (up - model.loss(&p, &batch)) / (2.0 * h);
            worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-300));
        }
    }
    (worst < 1e-6, format!("max relative gradient error {worst:.2e}"))
}

/// Runs every check; a check never panics the suite.
pub fn run_checks(opts: &VerifyOptions) -> Vec<CheckResult> {
    let guarded = |name: &'static str, f: &dyn Fn() -> (bool, String)| {
        check(name, || {
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
                .unwrap_or_else(|_| (false, "check panicked".into()))
        })
    };
    vec![
        guarded("stencil exactness", &|| stencil_exactness(opts)),
        guarded("burgers manufactured residual", &|| burgers_mms(opts)),
        guarded("score oracle", &|| score_oracle(opts)),
        guarded("burgers conservation and decay", &burgers_physics),
        guarded("ns conservation and uniform state", &ns_physics),
        guarded("sbal frequency", &sbal_frequency),
        guarded("stencil net gradients", &gradient_check),
    ]
}
