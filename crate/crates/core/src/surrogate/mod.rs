//! Surrogate contract: fit on labeled trajectories, advance one frame at a
//! time conditioned on the PDE coefficients, roll out autoregressively.

mod spectral;
mod stencil_net;

pub use spectral::{features, fit_spectral_ridge, SpectralRidgeConfig, SpectralRidgeModel};
pub use stencil_net::{
    fit_stencil_net, fit_stencil_net_from, Example, Init, StencilNetConfig, StencilNetModel,
};

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Candidate, Family, Field, Grid, LabeledSample, PdeParameters, Trajectory};

/// One-step dynamics model.
pub trait Surrogate: Send + Sync {
    fn family(&self) -> Family;

    /// Predicts the next stored frame from `field` under `pde`.
    fn step(&self, field: &Field, pde: &PdeParameters) -> Result<Field>;
}

impl Surrogate for SpectralRidgeModel {
    fn family(&self) -> Family {
        self.family
    }

    fn step(&self, field: &Field, pde: &PdeParameters) -> Result<Field> {
        SpectralRidgeModel::step(self, field, pde)
    }
}

impl Surrogate for StencilNetModel {
    fn family(&self) -> Family {
        self.family
    }

    fn step(&self, field: &Field, pde: &PdeParameters) -> Result<Field> {
        StencilNetModel::step(self, field, pde)
    }
}

/// Which surrogate to train, with its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurrogateConfig {
    SpectralRidge(SpectralRidgeConfig),
    StencilNet(StencilNetConfig),
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig::SpectralRidge(SpectralRidgeConfig::default())
    }
}

#[derive(Clone, Debug)]
pub enum FittedModel {
    SpectralRidge(SpectralRidgeModel),
    StencilNet(StencilNetModel),
}

impl Surrogate for FittedModel {
    fn family(&self) -> Family {
        match self {
            FittedModel::SpectralRidge(m) => m.family,
            FittedModel::StencilNet(m) => m.family,
        }
    }

    fn step(&self, field: &Field, pde: &PdeParameters) -> Result<Field> {
        match self {
            FittedModel::SpectralRidge(m) => m.step(field, pde),
            FittedModel::StencilNet(m) => m.step(field, pde),
        }
    }
}

/// Fits the configured surrogate. `warm` seeds iterative training when the
/// previous model is compatible; closed-form fits ignore it.
pub fn fit(samples: &[LabeledSample], config: &SurrogateConfig, warm: Option<&FittedModel>) -> Result<FittedModel> {
    match config {
        SurrogateConfig::SpectralRidge(c) => fit_spectral_ridge(samples, c).map(FittedModel::SpectralRidge),
        SurrogateConfig::StencilNet(c) => {
            let warm = match warm {
                Some(FittedModel::StencilNet(m)) => Some(m),
                _ => None,
            };
            fit_stencil_net_from(samples, c, warm).map(FittedModel::StencilNet)
        }
    }
}

/// Frames produced before a rollout stopped.
#[derive(Clone, Debug)]
pub struct RolloutOutcome {
    /// Frame 0 is the IC; on blow-up the last entry is the first non-finite frame.
    pub frames: Vec<Field>,
    /// Step index of the first non-finite frame, if any.
    pub blown_at: Option<usize>,
}

pub fn rollout_frames<S: Surrogate + ?Sized>(
    model: &S,
    candidate: &Candidate,
    n_frames: usize,
) -> Result<RolloutOutcome> {
    if candidate.family() != model.family() {
        return Err(Error::FamilyMismatch {
            expected: model.family(),
            got: candidate.family(),
        });
    }
    let mut frames = Vec::with_capacity(n_frames);
    frames.push(candidate.ic_field.clone());
    for step in 1..n_frames {
        let next = model.step(&frames[step - 1], &candidate.pde)?;
        let finite = next.is_finite();
        frames.push(next);
        if !finite {
            return Ok(RolloutOutcome {
                frames,
                blown_at: Some(step),
            });
        }
    }
    Ok(RolloutOutcome {
        frames,
        blown_at: None,
    })
}

/// Autoregressive rollout over `grid.n_frames()` frames starting from the
/// candidate's IC.
pub fn rollout<S: Surrogate + ?Sized>(model: &S, candidate: &Candidate, grid: &Grid) -> Result<Trajectory> {
    let out = rollout_frames(model, candidate, grid.n_frames())?;
    if let Some(step) = out.blown_at {
        return Err(Error::RolloutBlowUp { step });
    }
    Trajectory::new(*grid, out.frames)
}

const MODEL_MAGIC: &[u8; 6] = b"PREAQM";
const MODEL_VERSION: u64 = 1;

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(get_u64(r)?))
}

fn family_code(f: Family) -> u64 {
    match f {
        Family::Burgers1D => 1,
        Family::CompressibleNS2D => 2,
    }
}

fn family_from_code(c: u64) -> Result<Family> {
    match c {
        1 => Ok(Family::Burgers1D),
        2 => Ok(Family::CompressibleNS2D),
        _ => Err(Error::Format(format!("unknown family code {c}"))),
    }
}

/// Model checkpoint: magic, version, kind, a kind-specific header,
/// then the flat little-endian coefficient dump.
pub fn write_model<W: Write>(w: &mut W, model: &FittedModel) -> Result<()> {
    w.write_all(MODEL_MAGIC)?;
    put_u64(w, MODEL_VERSION)?;
    match model {
        FittedModel::SpectralRidge(m) => {
            put_u64(w, 1)?;
            put_u64(w, family_code(m.family))?;
            let g = &m.grid;
            put_u64(w, g.dim() as u64)?;
            put_u64(w, g.nx() as u64)?;
            put_u64(w, g.ny() as u64)?;
            put_f64(w, g.lengths()[0])?;
            put_f64(w, *g.lengths().last().unwrap())?;
            put_f64(w, g.dt_frame())?;
            put_u64(w, g.n_frames() as u64)?;
            put_u64(w, m.k_max as u64)?;
            put_u64(w, m.degree as u64)?;
            put_f64(w, m.max_gain)?;
            put_u64(w, m.coeffs.len() as u64)?;
            for c in &m.coeffs {
                put_f64(w, c.re)?;
                put_f64(w, c.im)?;
            }
        }
        FittedModel::StencilNet(m) => {
            put_u64(w, 2)?;
            put_u64(w, family_code(m.family))?;
            put_u64(w, m.half_width as u64)?;
            put_u64(w, m.hidden as u64)?;
            put_u64(w, m.params.len() as u64)?;
            for &p in &m.params {
                put_f64(w, p)?;
            }
            for &v in m.input_shift.iter().chain(&m.input_scale) {
                put_f64(w, v)?;
            }
            put_f64(w, m.target_scale)?;
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<FittedModel> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format("bad magic, not a model checkpoint".into()));
    }
    let version = get_u64(r)?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    match get_u64(r)? {
        1 => {
            let family = family_from_code(get_u64(r)?)?;
            let dim = get_u64(r)? as usize;
            let nx = get_u64(r)? as usize;
            let ny = get_u64(r)? as usize;
            let lx = get_f64(r)?;
            let ly = get_f64(r)?;
            let dt = get_f64(r)?;
            let frames = get_u64(r)? as usize;
            let grid = Grid::with_axes(dim, [nx, ny], [lx, ly], dt, frames)?;
            let k_max = get_u64(r)? as usize;
            let degree = get_u64(r)? as usize;
            if degree > 2 {
                return Err(Error::Format(format!("unsupported feature degree {degree}")));
            }
            let max_gain = get_f64(r)?;
            let n = get_u64(r)? as usize;
            let coeffs = (0..n)
                .map(|_| Ok(Complex64::new(get_f64(r)?, get_f64(r)?)))
                .collect::<Result<Vec<_>>>()?;
            SpectralRidgeModel::from_parts(family, grid, k_max, degree, max_gain, coeffs).map(FittedModel::SpectralRidge)
        }
        2 => {
            let family = family_from_code(get_u64(r)?)?;
            let half_width = get_u64(r)? as usize;
            let hidden = get_u64(r)? as usize;
            let n = get_u64(r)? as usize;
            let mut m = StencilNetModel::new(family, half_width, hidden, Init::Zero, 0)?;
            if n != m.params.len() {
                return Err(Error::Format("stencil net parameter count mismatch".into()));
            }
            for p in m.params.iter_mut() {
                *p = get_f64(r)?;
            }
            let d = m.n_inputs();
            let shift = (0..d).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
            let scale = (0..d).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
            let target_scale = get_f64(r)?;
            m.set_normalization(shift, scale, target_scale)
                .map_err(|e| Error::Format(format!("stencil net normalization: {e}")))?;
            Ok(FittedModel::StencilNet(m))
        }
        k => Err(Error::Format(format!("unknown model kind {k}"))),
    }
}
