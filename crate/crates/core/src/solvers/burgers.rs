//! Viscous Burgers `u_t + (u^2/2)_x = nu u_xx` on a periodic line:
//! central conservative flux, central diffusion, classical RK4.

use crate::error::{Error, Result};
use crate::types::{Field, Grid, Trajectory};

use super::SolverConfig;

fn rhs(u: &[f64], nu: f64, dx: f64, out: &mut [f64]) {
    let n = u.len();
    let adv = 0.25 / dx;
    let diff = nu / (dx * dx);
    for i in 0..n {
        let up = u[if i + 1 == n { 0 } else { i + 1 }];
        let um = u[if i == 0 { n - 1 } else { i - 1 }];
        out[i] = -adv * (up * up - um * um) + diff * (up - 2.0 * u[i] + um);
    }
}

pub fn solve_burgers(ic: &Field, nu: f64, grid: &Grid, config: &SolverConfig) -> Result<Trajectory> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::InvalidParameter(format!("viscosity nu must be > 0, got {nu}")));
    }
    if grid.dim() != 1 || ic.channels() != 1 || !ic.grid().same_space(grid) {
        return Err(Error::Shape("Burgers needs a single-channel field on a 1D grid".into()));
    }
    ic.check_finite()?;
    config.validate()?;

    let n = grid.nx();
    let dx = grid.dx();
    let dt_frame = grid.dt_frame();
    let mut u = ic.values().to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut frames = Vec::with_capacity(grid.n_frames());
    frames.push(ic.clone());
    let mut steps = 0usize;

    for frame in 1..grid.n_frames() {
        let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut dt = (0.25 * dx * dx / nu).min(dt_frame);
        if umax > 0.0 {
            dt = dt.min(config.cfl * dx / umax);
        }
        let substeps = (dt_frame / dt).ceil().max(1.0) as usize;
        let dt = dt_frame / substeps as f64;
        steps += substeps;
        if steps > config.max_internal_steps {
            return Err(Error::StepCap {
                cap: config.max_internal_steps,
            });
        }
        for _ in 0..substeps {
            rhs(&u, nu, dx, &mut k1);
            for i in 0..n {
                stage[i] = u[i] + 0.5 * dt * k1[i];
            }
            rhs(&stage, nu, dx, &mut k2);
            for i in 0..n {
                stage[i] = u[i] + 0.5 * dt * k2[i];
            }
            rhs(&stage, nu, dx, &mut k3);
            for i in 0..n {
                stage[i] = u[i] + dt * k3[i];
            }
            rhs(&stage, nu, dx, &mut k4);
            for i in 0..n {
                u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { frame });
        }
        frames.push(Field::new(*grid, 1, u.clone())?);
    }
    Trajectory::new(*grid, frames)
}
