//! One-hidden-layer pointwise network acting on a periodic stencil window.
//!
//! For every grid point the input is the `2w + 1` neighbouring values plus
//! the PDE coefficients; the output is the increment to the next frame.
//! Weights are shared across points, so the model is translation equivariant.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Family, Field, LabeledSample, PdeParameters};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Random,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StencilNetConfig {
    pub half_width: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub init: Init,
}

impl Default for StencilNetConfig {
    fn default() -> Self {
        StencilNetConfig {
            half_width: 2,
            hidden: 32,
            epochs: 20,
            learning_rate: 0.005,
            momentum: 0.9,
            batch_size: 128,
            seed: 0,
            init: Init::Random,
        }
    }
}

/// A training example: flattened input window plus target increment.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StencilNetModel {
    pub(crate) family: Family,
    pub(crate) half_width: usize,
    pub(crate) hidden: usize,
    pub(crate) n_delta: usize,
    /// `W1 (hidden x inputs) | b1 (hidden) | W2 (hidden) | b2`.
    pub(crate) params: Vec<f64>,
    /// Inputs enter as `(x - shift) / scale`; the output is multiplied by
    /// `target_scale`. Fixed from the first training set.
    pub(crate) input_shift: Vec<f64>,
    pub(crate) input_scale: Vec<f64>,
    pub(crate) target_scale: f64,
    /// Mean minibatch loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

impl StencilNetModel {
    pub fn new(family: Family, half_width: usize, hidden: usize, init: Init, seed: u64) -> Result<Self> {
        if family != Family::Burgers1D {
            return Err(Error::FamilyMismatch {
                expected: Family::Burgers1D,
                got: family,
            });
        }
        if hidden == 0 {
            return Err(Error::InvalidParameter("hidden width must be positive".into()));
        }
        let n_delta = family.n_coefficients();
        let inputs = 2 * half_width + 1 + n_delta;
        let n_params = hidden * inputs + 2 * hidden + 1;
        let params = match init {
            Init::Zero => vec![0.0; n_params],
            Init::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s1 = (1.0 / inputs as f64).sqrt();
                let s2 = (1.0 / hidden as f64).sqrt();
                let mut p = vec![0.0; n_params];
                for w in &mut p[..hidden * inputs] {
                    *w = s1 * (2.0 * rng.gen::<f64>() - 1.0);
                }
                let w2 = hidden * inputs + hidden;
                for w in &mut p[w2..w2 + hidden] {
                    *w = s2 * (2.0 * rng.gen::<f64>() - 1.0);
                }
                p
            }
        };
        Ok(StencilNetModel {
            family,
            half_width,
            hidden,
            n_delta,
            params,
            input_shift: vec![0.0; inputs],
            input_scale: vec![1.0; inputs],
            target_scale: 1.0,
            epoch_losses: Vec::new(),
        })
    }

    pub fn n_inputs(&self) -> usize {
        2 * self.half_width + 1 + self.n_delta
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Input and target normalization as `(shift, scale, target_scale)`.
    pub fn normalization(&self) -> (&[f64], &[f64], f64) {
        (&self.input_shift, &self.input_scale, self.target_scale)
    }

    pub fn set_normalization(&mut self, shift: Vec<f64>, scale: Vec<f64>, target_scale: f64) -> Result<()> {
        let d = self.n_inputs();
        if shift.len() != d || scale.len() != d {
            return Err(Error::Shape(format!("normalization needs {d} entries")));
        }
        if scale.iter().chain([&target_scale]).any(|s| !(s.is_finite() && *s > 0.0))
            || shift.iter().any(|s| !s.is_finite())
        {
            return Err(Error::InvalidParameter("normalization scales must be positive".into()));
        }
        self.input_shift = shift;
        self.input_scale = scale;
        self.target_scale = target_scale;
        Ok(())
    }

    /// Network output in normalized target units.
    fn forward(&self, params: &[f64], x: &[f64], hidden: &mut [f64]) -> f64 {
        let (h, d) = (self.hidden, self.n_inputs());
        let (w1, rest) = params.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let mut y = b2[0];
        for k in 0..h {
            let row = &w1[k * d..(k + 1) * d];
            let z: f64 = b1[k]
                + row
                    .iter()
                    .zip(x)
                    .zip(self.input_shift.iter().zip(&self.input_scale))
                    .map(|((w, v), (m, s))| w * (v - m) / s)
                    .sum::<f64>();
            hidden[k] = z.tanh();
            y += w2[k] * hidden[k];
        }
        y
    }

    /// Predicted increment for one raw input window.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut hidden = vec![0.0; self.hidden];
        self.target_scale * self.forward(&self.params, x, &mut hidden)
    }

    /// Mean squared error over `batch` at `params`, in units of `target_scale`.
    pub fn loss(&self, params: &[f64], batch: &[&Example]) -> f64 {
        let mut hidden = vec![0.0; self.hidden];
        batch
            .iter()
            .map(|e| {
                let r = self.forward(params, &e.input, &mut hidden) - e.target / self.target_scale;
                r * r
            })
            .sum::<f64>()
            / batch.len() as f64
    }

    /// Mean squared error and its gradient with respect to `params`.
    pub fn loss_and_grad(&self, params: &[f64], batch: &[&Example]) -> (f64, Vec<f64>) {
        let (h, d) = (self.hidden, self.n_inputs());
        let mut grad = vec![0.0; params.len()];
        let mut hidden = vec![0.0; h];
        let inv = 1.0 / batch.len() as f64;
        let w2_off = h * d + h;
        let mut loss = 0.0;
        for e in batch {
            let r = self.forward(params, &e.input, &mut hidden) - e.target / self.target_scale;
            loss += r * r;
            let dy = 2.0 * r * inv;
            grad[w2_off + h] += dy;
            for k in 0..h {
                let a = hidden[k];
                grad[w2_off + k] += dy * a;
                let dz = dy * params[w2_off + k] * (1.0 - a * a);
                grad[h * d + k] += dz;
                let row = grad[k * d..(k + 1) * d].iter_mut();
                for (g, (v, (m, s))) in row.zip(e.input.iter().zip(self.input_shift.iter().zip(&self.input_scale))) {
                    *g += dz * (v - m) / s;
                }
            }
        }
        (loss * inv, grad)
    }

    fn window_input(&self, u: &[f64], i: usize, delta: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let n = u.len() as isize;
        let w = self.half_width as isize;
        for o in -w..=w {
            out.push(u[(i as isize + o).rem_euclid(n) as usize]);
        }
        out.extend_from_slice(delta);
    }

    pub fn step(&self, field: &Field, pde: &PdeParameters) -> Result<Field> {
        if pde.family() != self.family {
            return Err(Error::FamilyMismatch {
                expected: self.family,
                got: pde.family(),
            });
        }
        if field.channels() != 1 || field.grid().dim() != 1 {
            return Err(Error::Shape("stencil net acts on 1-channel 1D fields".into()));
        }
        let u = field.values();
        let delta = pde.delta();
        let mut x = Vec::with_capacity(self.n_inputs());
        let mut hidden = vec![0.0; self.hidden];
        let next = (0..u.len())
            .map(|i| {
                self.window_input(u, i, &delta, &mut x);
                u[i] + self.target_scale * self.forward(&self.params, &x, &mut hidden)
            })
            .collect();
        Field::new(*field.grid(), 1, next)
    }

    /// One example per point per consecutive frame pair.
    pub fn examples(&self, samples: &[LabeledSample]) -> Vec<Example> {
        let mut out = Vec::new();
        let mut x = Vec::new();
        for s in samples {
            let delta = s.candidate.pde.delta();
            for pair in s.truth.frames().windows(2) {
                let (u0, u1) = (pair[0].values(), pair[1].values());
                for i in 0..u0.len() {
                    self.window_input(u0, i, &delta, &mut x);
                    out.push(Example {
                        input: x.clone(),
                        target: u1[i] - u0[i],
                    });
                }
            }
        }
        out
    }
}

/// Per-input mean and standard deviation plus the target RMS; degenerate
/// spreads fall back to 1.
fn example_moments(examples: &[Example], d: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let n = examples.len().max(1) as f64;
    let mut mean = vec![0.0; d];
    for e in examples {
        for (m, v) in mean.iter_mut().zip(&e.input) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    let mut t2 = 0.0;
    for e in examples {
        for ((s, v), m) in var.iter_mut().zip(&e.input).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
        t2 += e.target * e.target / n;
    }
    let fix = |s: f64| if s.is_finite() && s > 1e-12 { s } else { 1.0 };
    (mean, var.into_iter().map(|v| fix(v.sqrt())).collect(), fix(t2.sqrt()))
}

pub fn fit_stencil_net(samples: &[LabeledSample], config: &StencilNetConfig) -> Result<StencilNetModel> {
    fit_stencil_net_from(samples, config, None)
}

/// Trains from `warm` when given, otherwise from a fresh initialization.
pub fn fit_stencil_net_from(
    samples: &[LabeledSample],
    config: &StencilNetConfig,
    warm: Option<&StencilNetModel>,
) -> Result<StencilNetModel> {
    let first = samples.first().ok_or(Error::Empty("training set"))?;
    let family = first.candidate.family();
    if let Some(s) = samples.iter().find(|s| s.candidate.family() != family) {
        return Err(Error::FamilyMismatch {
            expected: family,
            got: s.candidate.family(),
        });
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    let warm_ok = warm.filter(|m| m.half_width == config.half_width && m.hidden == config.hidden);
    let mut model = match warm_ok {
        Some(m) => {
            let mut m = m.clone();
            m.epoch_losses.clear();
            m
        }
        _ => StencilNetModel::new(family, config.half_width, config.hidden, config.init, config.seed)?,
    };
    let examples = model.examples(samples);
    if warm_ok.is_none() {
        let (shift, scale, target_scale) = example_moments(&examples, model.n_inputs());
        model.set_normalization(shift, scale, target_scale)?;
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_57e9);
    let mut velocity = vec![0.0; model.params.len()];

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let (loss, grad) = model.loss_and_grad(&model.params, &batch);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            total += loss * batch.len() as f64;
            for ((p, v), g) in model.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = config.momentum * *v - config.learning_rate * g;
                *p += *v;
            }
        }
        let mean = total / examples.len().max(1) as f64;
        if !mean.is_finite() || model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        model.epoch_losses.push(mean);
    }
    Ok(model)
}
