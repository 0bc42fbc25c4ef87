//! Physics residual error (PRE) of a discretized trajectory.
//!
//! Every derivative is a 3-tap finite-difference kernel slid over the stored
//! frames: periodic wrap in space, interior frames only in time. The residual
//! at interior frame `n` is the governing operator applied to frames
//! `n - 1, n, n + 1`; an exact solution gives zero up to truncation error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Field, Grid, PdeParameters, Trajectory};

/// Finite-difference kernels used by the residual operators.
#[derive(Clone, Debug, PartialEq)]
pub struct StencilSpec {
    /// First time derivative, taps at `n - 1, n, n + 1`.
    pub d_t: [f64; 3],
    /// First spatial derivative per axis, taps at `i - 1, i, i + 1`.
    pub d_x: [[f64; 3]; 2],
    /// Second spatial derivative per axis.
    pub d_xx: [[f64; 3]; 2],
}

impl StencilSpec {
    /// Second-order central kernels for the grid's spacing and frame step.
    pub fn central(grid: &Grid) -> Self {
        let dt = grid.dt_frame();
        let mut d_x = [[0.0; 3]; 2];
        let mut d_xx = [[0.0; 3]; 2];
        for (axis, &h) in grid.spacings().iter().enumerate() {
            d_x[axis] = [-1.0 / (2.0 * h), 0.0, 1.0 / (2.0 * h)];
            d_xx[axis] = [1.0 / (h * h), -2.0 / (h * h), 1.0 / (h * h)];
        }
        StencilSpec {
            d_t: [-1.0 / (2.0 * dt), 0.0, 1.0 / (2.0 * dt)],
            d_x,
            d_xx,
        }
    }
}

/// Sliding periodic kernel along `axis`: `out[i] = sum_j kernel[j] * u[i + j - w]`
/// with `w = kernel.len() / 2` and indices wrapped.
pub fn convolve_periodic(u: &[f64], grid: &Grid, axis: usize, kernel: &[f64], out: &mut [f64]) {
    debug_assert_eq!(kernel.len() % 2, 1);
    let (nx, ny) = (grid.nx(), grid.ny());
    let half = (kernel.len() / 2) as isize;
    let (len, stride) = if axis == 0 { (nx, 1) } else { (ny, nx) };
    let wrap = |i: isize| i.rem_euclid(len as isize) as usize;
    for j in 0..ny {
        for i in 0..nx {
            let here = j * nx + i;
            let pos = if axis == 0 { i } else { j } as isize;
            let line_start = here - pos as usize * stride;
            let mut acc = 0.0;
            for (t, &c) in kernel.iter().enumerate() {
                acc += c * u[line_start + wrap(pos + t as isize - half) * stride];
            }
            out[here] = acc;
        }
    }
}

fn apply(u: &[f64], grid: &Grid, axis: usize, kernel: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    convolve_periodic(u, grid, axis, kernel, &mut out);
    out
}

/// Temporal kernel across three consecutive frames.
fn apply_time(prev: &[f64], cur: &[f64], next: &[f64], kernel: &[f64; 3]) -> Vec<f64> {
    prev.iter()
        .zip(cur)
        .zip(next)
        .map(|((a, b), c)| kernel[0] * a + kernel[1] * b + kernel[2] * c)
        .collect()
}

/// Per-point residual on the interior frames `1..N_t-1`, one channel per equation.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualField {
    grid: Grid,
    equations: usize,
    frames: Vec<Field>,
}

impl ResidualField {
    pub fn new(grid: Grid, equations: usize, frames: Vec<Field>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Shape("residual needs at least one frame".into()));
        }
        if frames
            .iter()
            .any(|f| f.channels() != equations || !f.grid().same_space(&grid))
        {
            return Err(Error::Shape("residual frames disagree with grid/equations".into()));
        }
        Ok(ResidualField {
            grid,
            equations,
            frames,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn equations(&self) -> usize {
        self.equations
    }

    /// Entry `m` holds the residual at stored frame `m + 1`.
    pub fn frames(&self) -> &[Field] {
        &self.frames
    }

    pub fn scaled(&self, alpha: f64) -> ResidualField {
        ResidualField {
            grid: self.grid,
            equations: self.equations,
            frames: self.frames.iter().map(|f| f.scaled(alpha)).collect(),
        }
    }

    /// Writes the residual in the trajectory store layout (channels = equations).
    pub fn dump<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        crate::store::write_frames(w, &self.grid, &self.frames)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualConfig {
    /// Per-equation weights in the score; `None` means all ones.
    pub channel_weights: Option<Vec<f64>>,
}

pub fn pre_burgers(traj: &Trajectory, nu: f64) -> Result<ResidualField> {
    pre_burgers_with(traj, nu, &StencilSpec::central(traj.grid()))
}

pub fn pre_burgers_with(traj: &Trajectory, nu: f64, st: &StencilSpec) -> Result<ResidualField> {
    let grid = *traj.grid();
    if grid.dim() != 1 || traj.channels() != 1 {
        return Err(Error::Shape(format!(
            "Burgers residual needs a 1-channel 1D trajectory, got {} channels in {}D",
            traj.channels(),
            grid.dim()
        )));
    }
    let frames = traj.frames();
    let out = (1..frames.len() - 1)
        .into_par_iter()
        .map(|n| {
            let u = frames[n].values();
            let ut = apply_time(frames[n - 1].values(), u, frames[n + 1].values(), &st.d_t);
            let ux = apply(u, &grid, 0, &st.d_x[0]);
            let uxx = apply(u, &grid, 0, &st.d_xx[0]);
            let r = (0..u.len())
                .map(|i| ut[i] + u[i] * ux[i] - nu * uxx[i])
                .collect();
            Field::new(grid, 1, r)
        })
        .collect::<Result<Vec<_>>>()?;
    ResidualField::new(grid, 1, out)
}

pub fn pre_ns2d(traj: &Trajectory, eta: f64, zeta: f64, gamma: f64) -> Result<ResidualField> {
    pre_ns2d_with(traj, eta, zeta, gamma, &StencilSpec::central(traj.grid()))
}

/// Continuity and momentum residuals; the energy equation is not scored, so
/// `gamma` only enters through the caller's trajectory.
pub fn pre_ns2d_with(
    traj: &Trajectory,
    eta: f64,
    zeta: f64,
    _gamma: f64,
    st: &StencilSpec,
) -> Result<ResidualField> {
    let grid = *traj.grid();
    if grid.dim() != 2 || traj.channels() != 4 {
        return Err(Error::Shape(format!(
            "NS residual needs a 4-channel 2D trajectory, got {} channels in {}D",
            traj.channels(),
            grid.dim()
        )));
    }
    let frames = traj.frames();
    let bulk = zeta + eta / 3.0;
    let out = (1..frames.len() - 1)
        .into_par_iter()
        .map(|n| {
            let (prev, cur, next) = (&frames[n - 1], &frames[n], &frames[n + 1]);
            let dt = |c: usize| apply_time(prev.channel(c), cur.channel(c), next.channel(c), &st.d_t);
            let dx = |u: &[f64]| apply(u, &grid, 0, &st.d_x[0]);
            let dy = |u: &[f64]| apply(u, &grid, 1, &st.d_x[1]);
            let lap = |u: &[f64]| {
                let a = apply(u, &grid, 0, &st.d_xx[0]);
                let b = apply(u, &grid, 1, &st.d_xx[1]);
                a.iter().zip(&b).map(|(a, b)| a + b).collect::<Vec<_>>()
            };
            let (rho, vx, vy, p) = (cur.channel(0), cur.channel(1), cur.channel(2), cur.channel(3));
            let m = rho.len();

            let mx: Vec<f64> = rho.iter().zip(vx).map(|(r, v)| r * v).collect();
            let my: Vec<f64> = rho.iter().zip(vy).map(|(r, v)| r * v).collect();
            let (rho_t, mx_x, my_y) = (dt(0), dx(&mx), dy(&my));

            let (vx_t, vx_x, vx_y, vx_lap) = (dt(1), dx(vx), dy(vx), lap(vx));
            let (vy_t, vy_x, vy_y, vy_lap) = (dt(2), dx(vy), dy(vy), lap(vy));
            let (p_x, p_y) = (dx(p), dy(p));
            let div: Vec<f64> = vx_x.iter().zip(&vy_y).map(|(a, b)| a + b).collect();
            let (div_x, div_y) = (dx(&div), dy(&div));

            let mut r = vec![0.0; 3 * m];
            for i in 0..m {
                r[i] = rho_t[i] + mx_x[i] + my_y[i];
                r[m + i] = rho[i] * (vx_t[i] + vx[i] * vx_x[i] + vy[i] * vx_y[i]) + p_x[i]
                    - eta * vx_lap[i]
                    - bulk * div_x[i];
                r[2 * m + i] = rho[i] * (vy_t[i] + vx[i] * vy_x[i] + vy[i] * vy_y[i]) + p_y[i]
                    - eta * vy_lap[i]
                    - bulk * div_y[i];
            }
            Field::new(grid, 3, r)
        })
        .collect::<Result<Vec<_>>>()?;
    ResidualField::new(grid, 3, out)
}

/// Residual of `traj` under the PDE selected by `pde`.
pub fn pre(traj: &Trajectory, pde: &PdeParameters) -> Result<ResidualField> {
    match *pde {
        PdeParameters::Burgers { nu } => pre_burgers(traj, nu),
        PdeParameters::CompressibleNs { eta, zeta, gamma } => pre_ns2d(traj, eta, zeta, gamma),
    }
}

/// Mean absolute residual over points, interior frames and equations.
pub fn score(residual: &ResidualField) -> Result<f64> {
    score_weighted(residual, None)
}

/// Weighted mean of per-equation mean absolute residuals.
pub fn score_weighted(residual: &ResidualField, weights: Option<&[f64]>) -> Result<f64> {
    let eqs = residual.equations();
    if let Some(w) = weights {
        if w.len() != eqs || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "need {eqs} nonnegative channel weights with a positive sum"
            )));
        }
    }
    let mut per_channel = vec![0.0; eqs];
    for f in residual.frames() {
        f.check_finite()?;
        for (c, acc) in per_channel.iter_mut().enumerate() {
            *acc += f.channel(c).iter().map(|v| v.abs()).sum::<f64>();
        }
    }
    let count = (residual.frames().len() * residual.grid().n_spatial()) as f64;
    let (num, den) = match weights {
        None => (per_channel.iter().sum::<f64>(), eqs as f64),
        Some(w) => (
            per_channel.iter().zip(w).map(|(a, w)| a * w).sum::<f64>(),
            w.iter().sum::<f64>(),
        ),
    };
    Ok(num / (den * count))
}

/// Residual score of a trajectory under the given configuration.
pub fn trajectory_score(traj: &Trajectory, pde: &PdeParameters, cfg: &ResidualConfig) -> Result<f64> {
    score_weighted(&pre(traj, pde)?, cfg.channel_weights.as_deref())
}
