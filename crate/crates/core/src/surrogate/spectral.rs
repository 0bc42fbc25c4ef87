//! Per-mode linear surrogate in Fourier space.
//!
//! Each retained mode `k` of each channel advances by a complex multiplier
//! `M_k(delta) = sum_j c_kj phi_j(delta)`, where `phi` holds the constant,
//! linear and quadratic monomials of the PDE coefficients. The coefficients
//! come from a ridge least-squares fit over every consecutive frame pair.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Family, Field, Grid, LabeledSample, PdeParameters};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralRidgeConfig {
    /// Retained modes per axis; `None` picks 16 in 1D and 8 in 2D.
    pub k_max: Option<usize>,
    /// Ridge strength relative to the mean per-mode data energy of a channel.
    pub ridge: f64,
    /// Highest total degree of the coefficient monomials (0, 1 or 2).
    pub degree: usize,
    /// Multipliers are shrunk onto `|M| <= max_gain` at prediction time.
    /// Both families dissipate energy, so 1 rules out spurious growth.
    pub max_gain: Option<f64>,
}

impl Default for SpectralRidgeConfig {
    fn default() -> Self {
        SpectralRidgeConfig {
            k_max: None,
            ridge: 1e-8,
            degree: 2,
            max_gain: Some(1.0),
        }
    }
}

impl SpectralRidgeConfig {
    pub fn k_max_for(&self, dim: usize) -> usize {
        self.k_max.unwrap_or(if dim == 1 { 16 } else { 8 })
    }
}

/// `[1, d_1, .., d_m, d_i d_j for i <= j]`, truncated to `degree`.
pub fn features(delta: &[f64], degree: usize) -> Vec<f64> {
    let mut phi = Vec::with_capacity(1 + delta.len() + delta.len() * (delta.len() + 1) / 2);
    phi.push(1.0);
    if degree >= 1 {
        phi.extend_from_slice(delta);
    }
    if degree >= 2 {
        for i in 0..delta.len() {
            for j in i..delta.len() {
                phi.push(delta[i] * delta[j]);
            }
        }
    }
    phi
}

/// FFT indices `0..=k` and `n-k..n` (the negative frequencies), deduplicated.
fn retained_axis(n: usize, k_max: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).filter(|&i| i <= k_max || n - i <= k_max).collect();
    idx.dedup();
    idx
}

#[derive(Clone)]
pub(crate) struct Transform {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl Transform {
    fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        Transform {
            nx: grid.nx(),
            ny: grid.ny(),
            fwd_x: planner.plan_fft_forward(grid.nx()),
            inv_x: planner.plan_fft_inverse(grid.nx()),
            fwd_y: planner.plan_fft_forward(grid.ny()),
            inv_y: planner.plan_fft_inverse(grid.ny()),
        }
    }

    fn run(&self, data: &mut [Complex64], forward: bool) {
        let (fx, fy) = if forward {
            (&self.fwd_x, &self.fwd_y)
        } else {
            (&self.inv_x, &self.inv_y)
        };
        fx.process(data);
        if self.ny > 1 {
            let mut col = vec![Complex64::new(0.0, 0.0); self.ny];
            for i in 0..self.nx {
                for j in 0..self.ny {
                    col[j] = data[j * self.nx + i];
                }
                fy.process(&mut col);
                for j in 0..self.ny {
                    data[j * self.nx + i] = col[j];
                }
            }
        }
    }

    pub(crate) fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.run(&mut data, true);
        data
    }

    pub(crate) fn inverse_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.run(&mut data, false);
        let scale = 1.0 / (self.nx * self.ny) as f64;
        data.iter().map(|c| c.re * scale).collect()
    }
}

/// Fitted spectral ridge model.
#[derive(Clone)]
pub struct SpectralRidgeModel {
    pub(crate) family: Family,
    pub(crate) grid: Grid,
    pub(crate) k_max: usize,
    pub(crate) channels: usize,
    /// Flat spectral indices of the retained modes.
    pub(crate) modes: Vec<usize>,
    pub(crate) degree: usize,
    pub(crate) n_features: usize,
    /// Layout `[channel][mode][feature]`.
    pub(crate) coeffs: Vec<Complex64>,
    /// `+inf` when uncapped.
    pub(crate) max_gain: f64,
    pub(crate) transform: Transform,
}

impl std::fmt::Debug for SpectralRidgeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralRidgeModel")
            .field("family", &self.family)
            .field("k_max", &self.k_max)
            .field("channels", &self.channels)
            .field("modes", &self.modes.len())
            .field("n_features", &self.n_features)
            .finish()
    }
}

pub(crate) fn retained_modes(grid: &Grid, k_max: usize) -> Vec<usize> {
    let xs = retained_axis(grid.nx(), k_max);
    let ys = if grid.dim() == 2 {
        retained_axis(grid.ny(), k_max)
    } else {
        vec![0]
    };
    ys.iter()
        .flat_map(|&j| xs.iter().map(move |&i| j * grid.nx() + i))
        .collect()
}

/// Solves `A x = b` for real symmetric `A` (row-major, `n x n`) and complex
/// `b` by Gaussian elimination with partial pivoting. `None` when singular.
fn solve_real_complex(mut a: Vec<f64>, mut b: Vec<Complex64>, n: usize) -> Option<Vec<Complex64>> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))
            .unwrap();
        if a[piv * n + col].abs() <= 1e-13 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                let bc = b[col];
                b[r] -= bc * f;
            }
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for k in r + 1..n {
            acc -= x[k] * a[r * n + k];
        }
        x[r] = acc / a[r * n + r];
    }
    Some(x)
}

pub fn fit_spectral_ridge(samples: &[LabeledSample], config: &SpectralRidgeConfig) -> Result<SpectralRidgeModel> {
    let first = samples.first().ok_or(Error::Empty("training set"))?;
    let family = first.candidate.family();
    let grid = *first.truth.grid();
    for s in samples {
        if s.candidate.family() != family {
            return Err(Error::FamilyMismatch {
                expected: family,
                got: s.candidate.family(),
            });
        }
        if !s.truth.grid().same_space(&grid) || s.truth.frames().len() != grid.n_frames() {
            return Err(Error::Shape("training samples live on different grids".into()));
        }
    }
    if config.degree > 2 {
        return Err(Error::InvalidParameter(format!("feature degree must be <= 2, got {}", config.degree)));
    }
    if !(config.ridge.is_finite() && config.ridge >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {}", config.ridge)));
    }
    let max_gain = config.max_gain.unwrap_or(f64::INFINITY);
    if !(max_gain > 0.0) {
        return Err(Error::InvalidParameter(format!("max_gain must be positive, got {max_gain}")));
    }

    let k_max = config.k_max_for(grid.dim());
    let modes = retained_modes(&grid, k_max);
    let channels = family.state_channels();
    let degree = config.degree;
    let n_features = features(&first.candidate.pde.delta(), degree).len();
    let transform = Transform::new(&grid);
    let nm = modes.len();
    let nf = n_features;

    // Per channel: A[mode] is nf x nf real, b[mode] is nf complex.
    let stats: Vec<(Vec<f64>, Vec<Complex64>)> = (0..channels)
        .into_par_iter()
        .map(|c| {
            let mut a = vec![0.0; nm * nf * nf];
            let mut b = vec![Complex64::new(0.0, 0.0); nm * nf];
            for s in samples {
                let phi = features(&s.candidate.pde.delta(), degree);
                let spectra: Vec<Vec<Complex64>> = s
                    .truth
                    .frames()
                    .iter()
                    .map(|f| transform.forward(f.channel(c)))
                    .collect();
                for pair in spectra.windows(2) {
                    for (m, &k) in modes.iter().enumerate() {
                        let (x, y) = (pair[0][k], pair[1][k]);
                        let e = x.norm_sqr();
                        let xy = x.conj() * y;
                        for j in 0..nf {
                            b[m * nf + j] += xy * phi[j];
                            for l in 0..nf {
                                a[(m * nf + j) * nf + l] += e * phi[j] * phi[l];
                            }
                        }
                    }
                }
            }
            (a, b)
        })
        .collect();

    let mut coeffs = vec![Complex64::new(0.0, 0.0); channels * nm * nf];
    for (c, (a, b)) in stats.into_iter().enumerate() {
        let energy: f64 = (0..nm)
            .map(|m| (0..nf).map(|j| a[(m * nf + j) * nf + j]).sum::<f64>())
            .sum::<f64>()
            / (nm * nf) as f64;
        if energy == 0.0 {
            // channel never moves away from zero; keep M = 0
            continue;
        }
        let lambda = config.ridge * energy;
        for m in 0..nm {
            let mut am = a[m * nf * nf..(m + 1) * nf * nf].to_vec();
            for j in 0..nf {
                am[j * nf + j] += lambda;
            }
            let bm = b[m * nf..(m + 1) * nf].to_vec();
            let x = match solve_real_complex(am, bm, nf) {
                Some(x) => x,
                None if lambda > 0.0 => vec![Complex64::new(0.0, 0.0); nf],
                None => return Err(Error::Singular { mode: modes[m] }),
            };
            coeffs[(c * nm + m) * nf..(c * nm + m + 1) * nf].copy_from_slice(&x);
        }
    }

    Ok(SpectralRidgeModel {
        family,
        grid,
        k_max,
        channels,
        modes,
        degree,
        n_features,
        coeffs,
        max_gain,
        transform,
    })
}

impl SpectralRidgeModel {
    pub(crate) fn from_parts(
        family: Family,
        grid: Grid,
        k_max: usize,
        degree: usize,
        max_gain: f64,
        coeffs: Vec<Complex64>,
    ) -> Result<Self> {
        let modes = retained_modes(&grid, k_max);
        let n_features = features(&vec![0.0; family.n_coefficients()], degree).len();
        let channels = family.state_channels();
        if coeffs.len() != channels * modes.len() * n_features {
            return Err(Error::Format("spectral coefficient count mismatch".into()));
        }
        if !(max_gain > 0.0) {
            return Err(Error::Format(format!("invalid gain cap {max_gain}")));
        }
        Ok(SpectralRidgeModel {
            family,
            grid,
            k_max,
            channels,
            modes,
            degree,
            n_features,
            coeffs,
            max_gain,
            transform: Transform::new(&grid),
        })
    }

    /// Predicted multiplier of retained mode number `m` in `channel`.
    pub fn multiplier(&self, channel: usize, m: usize, delta: &[f64]) -> Complex64 {
        let phi = features(delta, self.degree);
        let nf = self.n_features;
        let base = (channel * self.modes.len() + m) * nf;
        self.capped((0..nf).map(|j| self.coeffs[base + j] * phi[j]).sum())
    }

    fn capped(&self, m: Complex64) -> Complex64 {
        let r = m.norm();
        if r > self.max_gain {
            m * (self.max_gain / r)
        } else {
            m
        }
    }

    /// Upper bound on `|M|` applied at prediction time.
    pub fn max_gain(&self) -> f64 {
        self.max_gain
    }

    /// Flat spectral indices of the retained modes.
    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Identity dynamics: every retained mode has `M = 1`.
    pub fn identity(family: Family, grid: &Grid, k_max: usize) -> Self {
        let modes = retained_modes(grid, k_max);
        let degree = 0;
        let nf = features(&vec![0.0; family.n_coefficients()], degree).len();
        let channels = family.state_channels();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); channels * modes.len() * nf];
        for cm in 0..channels * modes.len() {
            coeffs[cm * nf] = Complex64::new(1.0, 0.0);
        }
        SpectralRidgeModel {
            family,
            grid: *grid,
            k_max,
            channels,
            modes,
            degree,
            n_features: nf,
            coeffs,
            max_gain: f64::INFINITY,
            transform: Transform::new(grid),
        }
    }

    pub fn step(&self, field: &Field, pde: &PdeParameters) -> Result<Field> {
        if pde.family() != self.family {
            return Err(Error::FamilyMismatch {
                expected: self.family,
                got: pde.family(),
            });
        }
        if !field.grid().same_space(&self.grid) || field.channels() != self.channels {
            return Err(Error::Shape("field does not match the fitted grid".into()));
        }
        let delta = pde.delta();
        let phi = features(&delta, self.degree);
        let nf = self.n_features;
        let nm = self.modes.len();
        let mut out = Vec::with_capacity(field.values().len());
        for c in 0..self.channels {
            let spec = self.transform.forward(field.channel(c));
            let mut next = vec![Complex64::new(0.0, 0.0); spec.len()];
            for (m, &k) in self.modes.iter().enumerate() {
                let base = (c * nm + m) * nf;
                let mult = self.capped((0..nf).map(|j| self.coeffs[base + j] * phi[j]).sum());
                next[k] = mult * spec[k];
            }
            out.extend(self.transform.inverse_real(next));
        }
        Field::new(*field.grid(), self.channels, out)
    }
}
