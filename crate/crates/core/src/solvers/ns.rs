//! 2D compressible Navier-Stokes on a periodic box.
//!
//! Cell-centred finite volumes on `(rho, rho vx, rho vy, E)`, Rusanov
//! inviscid fluxes, central viscous fluxes built from the Newtonian stress
//! `eta (grad v + grad v^T - 2/3 div v I) + zeta div v I`, SSP-RK2 in time.
//! No heat conduction. Frames are stored as `(rho, vx, vy, p)`.

use crate::error::{Error, Result};
use crate::types::{Field, Grid, Trajectory};

use super::SolverConfig;

#[derive(Clone, Copy)]
struct Prim {
    rho: f64,
    u: f64,
    v: f64,
    p: f64,
}

struct Workspace {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    eta: f64,
    zeta: f64,
    gamma: f64,
    prim: Vec<Prim>,
    // cell-centred velocity gradients: du/dx, du/dy, dv/dx, dv/dy
    grad: Vec<[f64; 4]>,
    fx: Vec<[f64; 4]>,
    fy: Vec<[f64; 4]>,
}

impl Workspace {
    fn new(grid: &Grid, eta: f64, zeta: f64, gamma: f64) -> Self {
        let n = grid.n_spatial();
        let zero = Prim {
            rho: 0.0,
            u: 0.0,
            v: 0.0,
            p: 0.0,
        };
        Workspace {
            nx: grid.nx(),
            ny: grid.ny(),
            dx: grid.dx(),
            dy: grid.dy(),
            eta,
            zeta,
            gamma,
            prim: vec![zero; n],
            grad: vec![[0.0; 4]; n],
            fx: vec![[0.0; 4]; n],
            fy: vec![[0.0; 4]; n],
        }
    }

    fn to_prim(&self, c: &[f64; 4]) -> Prim {
        let rho = c[0];
        let u = c[1] / rho;
        let v = c[2] / rho;
        let p = (self.gamma - 1.0) * (c[3] - 0.5 * rho * (u * u + v * v));
        Prim { rho, u, v, p }
    }

    fn to_cons(&self, q: Prim) -> [f64; 4] {
        [
            q.rho,
            q.rho * q.u,
            q.rho * q.v,
            q.p / (self.gamma - 1.0) + 0.5 * q.rho * (q.u * q.u + q.v * q.v),
        ]
    }

    fn sound(&self, q: Prim) -> f64 {
        (self.gamma * q.p / q.rho).sqrt()
    }

    /// Writes `dU/dt` into `out`. Returns the first non-positive quantity, if any.
    fn rhs(&mut self, cons: &[[f64; 4]], out: &mut [[f64; 4]]) -> Option<&'static str> {
        let (nx, ny) = (self.nx, self.ny);
        for (q, c) in self.prim.iter_mut().zip(cons) {
            let rho = c[0];
            let u = c[1] / rho;
            let v = c[2] / rho;
            *q = Prim {
                rho,
                u,
                v,
                p: (self.gamma - 1.0) * (c[3] - 0.5 * rho * (u * u + v * v)),
            };
        }
        if let Some(q) = self.prim.iter().find(|q| !(q.rho > 0.0 && q.p > 0.0)) {
            return Some(if q.rho > 0.0 { "pressure" } else { "density" });
        }

        let idx = |i: usize, j: usize| j * nx + i;
        let (hx, hy) = (0.5 / self.dx, 0.5 / self.dy);
        for j in 0..ny {
            let (jm, jp) = ((j + ny - 1) % ny, (j + 1) % ny);
            for i in 0..nx {
                let (im, ip) = ((i + nx - 1) % nx, (i + 1) % nx);
                let (e, w) = (self.prim[idx(ip, j)], self.prim[idx(im, j)]);
                let (n, s) = (self.prim[idx(i, jp)], self.prim[idx(i, jm)]);
                self.grad[idx(i, j)] = [
                    (e.u - w.u) * hx,
                    (n.u - s.u) * hy,
                    (e.v - w.v) * hx,
                    (n.v - s.v) * hy,
                ];
            }
        }

        let (eta, lam) = (self.eta, self.zeta - 2.0 * self.eta / 3.0);
        for j in 0..ny {
            let jp = (j + 1) % ny;
            for i in 0..nx {
                let ip = (i + 1) % nx;
                let here = idx(i, j);

                // face between (i, j) and (i + 1, j)
                let (l, r) = (self.prim[here], self.prim[idx(ip, j)]);
                let (cl, cr) = (self.to_cons(l), self.to_cons(r));
                let a = (l.u.abs() + self.sound(l)).max(r.u.abs() + self.sound(r));
                let flux = |q: Prim, c: &[f64; 4]| {
                    [c[1], c[1] * q.u + q.p, c[2] * q.u, (c[3] + q.p) * q.u]
                };
                let (fl, fr) = (flux(l, &cl), flux(r, &cr));
                let (gl, gr) = (self.grad[here], self.grad[idx(ip, j)]);
                let dudx = (r.u - l.u) / self.dx;
                let dvdx = (r.v - l.v) / self.dx;
                let dudy = 0.5 * (gl[1] + gr[1]);
                let dvdy = 0.5 * (gl[3] + gr[3]);
                let div = dudx + dvdy;
                let txx = 2.0 * eta * dudx + lam * div;
                let txy = eta * (dudy + dvdx);
                let (uf, vf) = (0.5 * (l.u + r.u), 0.5 * (l.v + r.v));
                let visc = [0.0, txx, txy, uf * txx + vf * txy];
                for k in 0..4 {
                    self.fx[here][k] = 0.5 * (fl[k] + fr[k]) - 0.5 * a * (cr[k] - cl[k]) - visc[k];
                }

                // face between (i, j) and (i, j + 1)
                let t = self.prim[idx(i, jp)];
                let ct = self.to_cons(t);
                let a = (l.v.abs() + self.sound(l)).max(t.v.abs() + self.sound(t));
                let gflux = |q: Prim, c: &[f64; 4]| {
                    [c[2], c[1] * q.v, c[2] * q.v + q.p, (c[3] + q.p) * q.v]
                };
                let (gb, gt) = (gflux(l, &cl), gflux(t, &ct));
                let gtop = self.grad[idx(i, jp)];
                let dudy = (t.u - l.u) / self.dy;
                let dvdy = (t.v - l.v) / self.dy;
                let dudx = 0.5 * (gl[0] + gtop[0]);
                let dvdx = 0.5 * (gl[2] + gtop[2]);
                let div = dudx + dvdy;
                let tyy = 2.0 * eta * dvdy + lam * div;
                let txy = eta * (dudy + dvdx);
                let (uf, vf) = (0.5 * (l.u + t.u), 0.5 * (l.v + t.v));
                let visc = [0.0, txy, tyy, uf * txy + vf * tyy];
                for k in 0..4 {
                    self.fy[here][k] = 0.5 * (gb[k] + gt[k]) - 0.5 * a * (ct[k] - cl[k]) - visc[k];
                }
            }
        }

        let (rdx, rdy) = (1.0 / self.dx, 1.0 / self.dy);
        for j in 0..ny {
            let jm = (j + ny - 1) % ny;
            for i in 0..nx {
                let im = (i + nx - 1) % nx;
                let here = idx(i, j);
                let (fe, fw) = (self.fx[here], self.fx[idx(im, j)]);
                let (fn_, fs) = (self.fy[here], self.fy[idx(i, jm)]);
                for k in 0..4 {
                    out[here][k] = -(fe[k] - fw[k]) * rdx - (fn_[k] - fs[k]) * rdy;
                }
            }
        }
        None
    }

    fn stable_dt(&self, cons: &[[f64; 4]], cfl: f64) -> f64 {
        let h = self.dx.min(self.dy);
        let mut speed = 0.0f64;
        let mut rho_min = f64::INFINITY;
        for c in cons {
            let q = self.to_prim(c);
            let cs = self.sound(q);
            speed = speed.max(q.u.abs() + cs).max(q.v.abs() + cs);
            rho_min = rho_min.min(q.rho);
        }
        let nu_eff = (4.0 * self.eta / 3.0 + self.zeta).max(self.eta) / rho_min;
        let dt_visc = 0.125 * h * h / nu_eff;
        let dt_adv = cfl * h / speed;
        dt_adv.min(dt_visc)
    }
}

pub fn solve_ns2d(
    ic: &Field,
    eta: f64,
    zeta: f64,
    gamma: f64,
    grid: &Grid,
    config: &SolverConfig,
) -> Result<Trajectory> {
    if !(eta > 0.0 && zeta > 0.0 && gamma > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need eta > 0, zeta > 0, gamma > 1; got {eta}, {zeta}, {gamma}"
        )));
    }
    if grid.dim() != 2 || ic.channels() != 4 || !ic.grid().same_space(grid) {
        return Err(Error::Shape("NS needs a 4-channel field on a 2D grid".into()));
    }
    ic.check_finite()?;
    config.validate()?;
    if ic.channel(0).iter().any(|&r| r <= 0.0) {
        return Err(Error::Positivity("initial density must be positive".into()));
    }
    if ic.channel(3).iter().any(|&p| p <= 0.0) {
        return Err(Error::Positivity("initial pressure must be positive".into()));
    }

    let n = grid.n_spatial();
    let mut ws = Workspace::new(grid, eta, zeta, gamma);
    let mut cons: Vec<[f64; 4]> = (0..n)
        .map(|i| {
            ws.to_cons(Prim {
                rho: ic.channel(0)[i],
                u: ic.channel(1)[i],
                v: ic.channel(2)[i],
                p: ic.channel(3)[i],
            })
        })
        .collect();
    let mut k = vec![[0.0; 4]; n];
    let mut stage = vec![[0.0; 4]; n];
    let mut frames = Vec::with_capacity(grid.n_frames());
    frames.push(ic.clone());
    let mut steps = 0usize;

    for frame in 1..grid.n_frames() {
        let dt = ws.stable_dt(&cons, config.cfl).min(grid.dt_frame());
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::BlowUp { frame });
        }
        let substeps = (grid.dt_frame() / dt).ceil().max(1.0) as usize;
        let dt = grid.dt_frame() / substeps as f64;
        for _ in 0..substeps {
            steps += 1;
            if steps > config.max_internal_steps {
                return Err(Error::StepCap {
                    cap: config.max_internal_steps,
                });
            }
            if let Some(quantity) = ws.rhs(&cons, &mut k) {
                return Err(Error::NegativeState { quantity, step: steps });
            }
            for ((s, c), d) in stage.iter_mut().zip(&cons).zip(&k) {
                for m in 0..4 {
                    s[m] = c[m] + dt * d[m];
                }
            }
            if let Some(quantity) = ws.rhs(&stage, &mut k) {
                return Err(Error::NegativeState { quantity, step: steps });
            }
            for ((c, s), d) in cons.iter_mut().zip(&stage).zip(&k) {
                for m in 0..4 {
                    c[m] = 0.5 * c[m] + 0.5 * (s[m] + dt * d[m]);
                }
            }
        }
        let mut values = vec![0.0; 4 * n];
        for (i, c) in cons.iter().enumerate() {
            let q = ws.to_prim(c);
            values[i] = q.rho;
            values[n + i] = q.u;
            values[2 * n + i] = q.v;
            values[3 * n + i] = q.p;
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { frame });
        }
        if values[..n].iter().any(|&r| r <= 0.0) {
            return Err(Error::NegativeState { quantity: "density", step: steps });
        }
        if values[3 * n..].iter().any(|&p| p <= 0.0) {
            return Err(Error::NegativeState { quantity: "pressure", step: steps });
        }
        frames.push(Field::new(*grid, 4, values)?);
    }
    Trajectory::new(*grid, frames)
}
