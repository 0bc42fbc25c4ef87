//! Truncated random Fourier series initial conditions.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Family, Field, Grid, IcParameters};

/// Lower bound enforced on density and pressure of compressible ICs.
pub const POSITIVITY_FLOOR: f64 = 0.1;

/// Generator for `a(lambda, X)`.
///
/// The latent vector is laid out axis by axis; within an axis, mode `k`
/// (1-based) owns the pair `(amplitude, phase)` at offset `2 * (k - 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcGeneratorSpec {
    pub n_modes: usize,
    pub amplitude_range: [f64; 2],
    /// Peak perturbation of the compressible state around the background.
    pub ns_perturbation: f64,
    pub ns_background_density: f64,
    pub ns_background_pressure: f64,
}

impl Default for IcGeneratorSpec {
    fn default() -> Self {
        IcGeneratorSpec {
            n_modes: 4,
            amplitude_range: [-1.0, 1.0],
            ns_perturbation: 0.1,
            ns_background_density: 1.0,
            ns_background_pressure: 1.0,
        }
    }
}

impl IcGeneratorSpec {
    pub fn latent_dim(&self, dim: usize) -> usize {
        2 * self.n_modes * dim
    }

    /// Draws a latent vector from the prior: amplitudes uniform over
    /// `amplitude_range`, phases uniform over `[0, 2pi)`.
    pub fn sample_latent<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> IcParameters {
        let [lo, hi] = self.amplitude_range;
        let mut lambda = Vec::with_capacity(self.latent_dim(dim));
        for _ in 0..dim * self.n_modes {
            lambda.push(lo + (hi - lo) * rng.gen::<f64>());
            lambda.push(2.0 * PI * rng.gen::<f64>());
        }
        IcParameters(lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::config("ic.n_modes", "must be positive"));
        }
        let [lo, hi] = self.amplitude_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::config(
                "ic.amplitude_range",
                format!("need finite lo <= hi, got [{lo}, {hi}]"),
            ));
        }
        if !(self.ns_perturbation.is_finite() && self.ns_perturbation >= 0.0) {
            return Err(Error::config("ic.ns_perturbation", "must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Sum of sinusoids along one axis from that axis' slice of the latent vector.
    fn series(&self, lambda: &[f64], axis: usize, coords: &[f64], length: f64) -> Vec<f64> {
        let base = axis * 2 * self.n_modes;
        coords
            .iter()
            .map(|&x| {
                (1..=self.n_modes)
                    .map(|k| {
                        let amp = lambda[base + 2 * (k - 1)];
                        let phase = lambda[base + 2 * (k - 1) + 1];
                        amp * (2.0 * PI * k as f64 * x / length + phase).sin()
                    })
                    .sum()
            })
            .collect()
    }
}

pub fn generate_ic(
    spec: &IcGeneratorSpec,
    lambda: &IcParameters,
    grid: &Grid,
    family: Family,
) -> Result<Field> {
    if grid.dim() != family.dim() {
        return Err(Error::Shape(format!(
            "{} needs a {}D grid",
            family.name(),
            family.dim()
        )));
    }
    let expected = spec.latent_dim(grid.dim());
    if lambda.len() != expected {
        return Err(Error::IcDimension {
            expected,
            got: lambda.len(),
        });
    }
    let lambda = lambda.as_slice();
    match family {
        Family::Burgers1D => {
            let u = spec.series(lambda, 0, &grid.coords(0), grid.lengths()[0]);
            Field::new(*grid, 1, u)
        }
        Family::CompressibleNS2D => ns_ic(spec, lambda, grid),
    }
}

fn ns_ic(spec: &IcGeneratorSpec, lambda: &[f64], grid: &Grid) -> Result<Field> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let peak = spec.n_modes as f64 * spec.amplitude_range[0].abs().max(spec.amplitude_range[1].abs());
    let scale = if peak > 0.0 { spec.ns_perturbation / peak } else { 0.0 };
    let sx: Vec<f64> = spec
        .series(lambda, 0, &grid.coords(0), grid.lengths()[0])
        .into_iter()
        .map(|v| v * scale)
        .collect();
    let sy: Vec<f64> = spec
        .series(lambda, 1, &grid.coords(1), grid.lengths()[1])
        .into_iter()
        .map(|v| v * scale)
        .collect();

    let n = nx * ny;
    let mut rho_pert = vec![0.0; n];
    let mut p_pert = vec![0.0; n];
    let mut values = vec![0.0; 4 * n];
    for j in 0..ny {
        for i in 0..nx {
            let idx = j * nx + i;
            rho_pert[idx] = 0.5 * (sx[i] + sy[j]);
            p_pert[idx] = 0.5 * (sx[i] - sy[j]);
            values[n + idx] = sy[j];
            values[2 * n + idx] = sx[i];
        }
    }
    let rho = clipped(spec.ns_background_density, &rho_pert, "density")?;
    let p = clipped(spec.ns_background_pressure, &p_pert, "pressure")?;
    values[..n].copy_from_slice(&rho);
    values[3 * n..].copy_from_slice(&p);
    Field::new(*grid, 4, values)
}

/// `background + perturbation`, with the perturbation shrunk uniformly when
/// needed so the result stays above [`POSITIVITY_FLOOR`].
fn clipped(background: f64, pert: &[f64], what: &str) -> Result<Vec<f64>> {
    let lowest = pert.iter().copied().fold(f64::INFINITY, f64::min);
    let mut shrink = 1.0;
    if background + lowest <= POSITIVITY_FLOOR && lowest < 0.0 {
        shrink = 0.99 * (background - POSITIVITY_FLOOR) / -lowest;
    }
    let out: Vec<f64> = pert.iter().map(|p| background + shrink * p).collect();
    if out.iter().any(|v| !(*v > POSITIVITY_FLOOR)) {
        return Err(Error::Positivity(format!(
            "{what} background {background} cannot stay above {POSITIVITY_FLOOR}"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::make_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn burgers_grid() -> Grid {
        make_grid(1, 256, 2.0 * PI, 0.05, 41).unwrap()
    }

    #[test]
    fn zero_latent_gives_zero_field() {
        let spec = IcGeneratorSpec::default();
        let f = generate_ic(&spec, &IcParameters(vec![0.0; 8]), &burgers_grid(), Family::Burgers1D).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_mode_is_sine() {
        let spec = IcGeneratorSpec::default();
        let mut lambda = vec![0.0; 8];
        lambda[0] = 1.0;
        let g = burgers_grid();
        let f = generate_ic(&spec, &IcParameters(lambda), &g, Family::Burgers1D).unwrap();
        let peak = f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 1e-12);
        for (x, u) in g.coords(0).iter().zip(f.values()) {
            assert!((u - x.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_latent_length_rejected() {
        let spec = IcGeneratorSpec::default();
        let err = generate_ic(&spec, &IcParameters(vec![0.0; 7]), &burgers_grid(), Family::Burgers1D);
        assert!(matches!(err, Err(Error::IcDimension { expected: 8, got: 7 })));
        let g2 = make_grid(2, 8, 1.0, 0.05, 3).unwrap();
        let err = generate_ic(&spec, &IcParameters(vec![0.0; 8]), &g2, Family::CompressibleNS2D);
        assert!(matches!(err, Err(Error::IcDimension { expected: 16, got: 8 })));
    }

    /// Direct O(N^2) DFT energy at integer wavenumber `k`.
    fn dft_energy(u: &[f64], k: usize) -> f64 {
        let n = u.len() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (j, v) in u.iter().enumerate() {
            let th = -2.0 * PI * k as f64 * j as f64 / n;
            re += v * th.cos();
            im += v * th.sin();
        }
        re * re + im * im
    }

    #[test]
    fn spectrum_is_band_limited() {
        let spec = IcGeneratorSpec::default();
        let g = burgers_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let lambda = spec.sample_latent(1, &mut rng);
            let f = generate_ic(&spec, &lambda, &g, Family::Burgers1D).unwrap();
            let total: f64 = (0..=128).map(|k| dft_energy(f.values(), k)).sum();
            let above: f64 = (5..=128).map(|k| dft_energy(f.values(), k)).sum();
            assert!(total > 1.0);
            assert!(above < 1e-20 * total, "leak {above} of {total}");
        }
    }

    #[test]
    fn ns_ic_is_positive_and_band_limited() {
        let spec = IcGeneratorSpec::default();
        let g = make_grid(2, 32, 1.0, 0.05, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lambda = spec.sample_latent(2, &mut rng);
        let f = generate_ic(&spec, &lambda, &g, Family::CompressibleNS2D).unwrap();
        assert_eq!(f.channels(), 4);
        assert!(f.channel(0).iter().all(|&r| r > POSITIVITY_FLOOR));
        assert!(f.channel(3).iter().all(|&p| p > POSITIVITY_FLOOR));
        // a row of v_y = s_x(x) carries no energy above n_modes
        let row = &f.channel(2)[..32];
        let above: f64 = (5..=16).map(|k| dft_energy(row, k)).sum();
        assert!(above < 1e-24);
        let peak = f.channel(1).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak <= 0.1 + 1e-12);
    }

    #[test]
    fn large_perturbation_is_clipped() {
        let spec = IcGeneratorSpec {
            ns_perturbation: 5.0,
            ..Default::default()
        };
        let g = make_grid(2, 16, 1.0, 0.05, 3).unwrap();
        let mut lambda = vec![0.0; 16];
        lambda[0] = 1.0;
        lambda[8] = 1.0;
        let f = generate_ic(&spec, &IcParameters(lambda), &g, Family::CompressibleNS2D).unwrap();
        assert!(f.channel(0).iter().all(|&r| r > POSITIVITY_FLOOR));
        assert!(f.channel(3).iter().all(|&p| p > POSITIVITY_FLOOR));
    }

    #[test]
    fn unrecoverable_background_errors() {
        let spec = IcGeneratorSpec {
            ns_background_density: 0.05,
            ..Default::default()
        };
        let g = make_grid(2, 8, 1.0, 0.05, 3).unwrap();
        let err = generate_ic(&spec, &IcParameters(vec![0.0; 16]), &g, Family::CompressibleNS2D);
        assert!(matches!(err, Err(Error::Positivity(_))));
    }
}
