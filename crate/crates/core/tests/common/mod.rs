#![allow(dead_code)]

use std::f64::consts::PI;

use preacq::solvers::{generate_ic, simulate, IcGeneratorSpec, SolverConfig};
use preacq::types::{make_grid, Candidate, Family, Grid, IcParameters, LabeledSample, PdeParameters};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn burgers_grid(n: usize, frames: usize) -> Grid {
    make_grid(1, n, 2.0 * PI, 0.05, frames).unwrap()
}

pub fn burgers_candidate(id: u64, nu: f64, lambda: Vec<f64>, grid: &Grid) -> Candidate {
    let spec = IcGeneratorSpec::default();
    let lambda = IcParameters(lambda);
    let ic = generate_ic(&spec, &lambda, grid, Family::Burgers1D).unwrap();
    Candidate::new(id, PdeParameters::burgers(nu).unwrap(), lambda, ic).unwrap()
}

/// Random-prior Burgers candidates with amplitudes scaled by `amp`.
pub fn random_burgers(n: usize, nu_range: (f64, f64), amp: f64, grid: &Grid, seed: u64) -> Vec<Candidate> {
    use rand::Rng;
    let spec = IcGeneratorSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let nu = nu_range.0 + (nu_range.1 - nu_range.0) * rng.gen::<f64>();
            let mut lambda = spec.sample_latent(1, &mut rng).0;
            for (j, v) in lambda.iter_mut().enumerate() {
                if j % 2 == 0 {
                    *v *= amp;
                }
            }
            burgers_candidate(i as u64, nu, lambda, grid)
        })
        .collect()
}

pub fn label(cands: &[Candidate], grid: &Grid) -> Vec<LabeledSample> {
    cands
        .iter()
        .map(|c| simulate(c, grid, &SolverConfig::default()).unwrap())
        .collect()
}
