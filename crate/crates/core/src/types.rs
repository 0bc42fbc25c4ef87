//! Grids, fields, trajectories, parameter vectors and dataset containers.
//!
//! Every spatial axis is periodic with `n` cells of width `length / n`, and
//! point `i` sits at `x_i = i * dx` (no duplicated endpoint). In 2D the
//! spatial index of `(ix, iy)` is `iy * nx + ix`, i.e. x varies fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adiabatic index used for every compressible run.
pub const ADIABATIC_INDEX: f64 = 5.0 / 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Grid {
    dim: usize,
    n_points: [usize; 2],
    length: [f64; 2],
    spacing: [f64; 2],
    dt_frame: f64,
    n_frames: usize,
}

/// Either one value shared by every axis or one per axis.
#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
enum PerAxis<T> {
    Same(T),
    Each([T; 2]),
}

impl<T: Copy> PerAxis<T> {
    fn expand(self) -> [T; 2] {
        match self {
            PerAxis::Same(v) => [v; 2],
            PerAxis::Each(v) => v,
        }
    }

    fn pack(dim: usize, v: [T; 2]) -> Self
    where
        T: PartialEq,
    {
        if dim == 1 || v[0] == v[1] {
            PerAxis::Same(v[0])
        } else {
            PerAxis::Each(v)
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridRepr {
    dim: usize,
    n_points: PerAxis<usize>,
    length: PerAxis<f64>,
    dt_frame: f64,
    n_frames: usize,
}

impl TryFrom<GridRepr> for Grid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        Grid::with_axes(r.dim, r.n_points.expand(), r.length.expand(), r.dt_frame, r.n_frames)
    }
}

impl From<Grid> for GridRepr {
    fn from(g: Grid) -> Self {
        GridRepr {
            dim: g.dim,
            n_points: PerAxis::pack(g.dim, g.n_points),
            length: PerAxis::pack(g.dim, g.length),
            dt_frame: g.dt_frame,
            n_frames: g.n_frames,
        }
    }
}

/// Builds a periodic grid with the same resolution and extent on every axis.
pub fn make_grid(
    dim: usize,
    n_points: usize,
    length: f64,
    dt_frame: f64,
    n_frames: usize,
) -> Result<Grid> {
    Grid::with_axes(dim, [n_points; 2], [length; 2], dt_frame, n_frames)
}

impl Grid {
    /// Builds a grid with independent per-axis sizes; only the first `dim`
    /// entries of `n_points` and `length` are used.
    pub fn with_axes(
        dim: usize,
        n_points: [usize; 2],
        length: [f64; 2],
        dt_frame: f64,
        n_frames: usize,
    ) -> Result<Grid> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if n_frames < 3 {
            return Err(Error::InvalidGrid(format!(
                "n_frames must be at least 3, got {n_frames}"
            )));
        }
        if !(dt_frame.is_finite() && dt_frame > 0.0) {
            return Err(Error::InvalidGrid(format!("dt_frame must be positive, got {dt_frame}")));
        }
        let mut n = [1usize; 2];
        let mut len = [1.0; 2];
        let mut spacing = [1.0; 2];
        for axis in 0..dim {
            if n_points[axis] == 0 {
                return Err(Error::InvalidGrid(format!("axis {axis} has zero points")));
            }
            if !(length[axis].is_finite() && length[axis] > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} length must be positive, got {}",
                    length[axis]
                )));
            }
            n[axis] = n_points[axis];
            len[axis] = length[axis];
            spacing[axis] = length[axis] / n_points[axis] as f64;
        }
        Ok(Grid {
            dim,
            n_points: n,
            length: len,
            spacing,
            dt_frame,
            n_frames,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_points(&self) -> &[usize] {
        &self.n_points[..self.dim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.length[..self.dim]
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn nx(&self) -> usize {
        self.n_points[0]
    }

    /// Points along y; 1 for a 1D grid.
    pub fn ny(&self) -> usize {
        self.n_points[1]
    }

    pub fn dx(&self) -> f64 {
        self.spacing[0]
    }

    pub fn dy(&self) -> f64 {
        self.spacing[1]
    }

    /// N_s: total number of spatial points.
    pub fn n_spatial(&self) -> usize {
        self.n_points().iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacings().iter().product()
    }

    pub fn dt_frame(&self) -> f64 {
        self.dt_frame
    }

    /// N_t: number of stored frames including the initial condition.
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn t_final(&self) -> f64 {
        (self.n_frames - 1) as f64 * self.dt_frame
    }

    /// Point coordinates along `axis`.
    pub fn coords(&self, axis: usize) -> Vec<f64> {
        (0..self.n_points[axis])
            .map(|i| i as f64 * self.spacing[axis])
            .collect()
    }

    /// Same geometry with a different frame cadence.
    pub fn with_frames(&self, dt_frame: f64, n_frames: usize) -> Result<Grid> {
        Grid::with_axes(self.dim, self.n_points, self.length, dt_frame, n_frames)
    }

    /// Same extent and frames at a different per-axis resolution.
    pub fn with_resolution(&self, n_points: usize) -> Result<Grid> {
        Grid::with_axes(
            self.dim,
            [n_points; 2],
            self.length,
            self.dt_frame,
            self.n_frames,
        )
    }

    /// True when both grids describe the same spatial discretization.
    pub fn same_space(&self, other: &Grid) -> bool {
        self.dim == other.dim && self.n_points == other.n_points && self.length == other.length
    }
}

/// Multi-channel field on a grid at a fixed time, stored channel-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field {
    grid: Grid,
    channels: usize,
    #[serde(with = "crate::serde_f64")]
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, channels: usize, values: Vec<f64>) -> Result<Field> {
        if channels == 0 {
            return Err(Error::Shape("field needs at least one channel".into()));
        }
        let expected = channels * grid.n_spatial();
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "field has {} values, expected {channels} x {} = {expected}",
                values.len(),
                grid.n_spatial()
            )));
        }
        Ok(Field {
            grid,
            channels,
            values,
        })
    }

    pub fn zeros(grid: Grid, channels: usize) -> Field {
        Field {
            grid,
            channels,
            values: vec![0.0; channels * grid.n_spatial()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid.n_spatial();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.n_spatial();
        &mut self.values[c * n..(c + 1) * n]
    }

    /// Errors with the first non-finite entry, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => {
                let n = self.grid.n_spatial();
                Err(Error::NonFinite {
                    channel: i / n,
                    point: i % n,
                })
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        Field {
            grid: self.grid,
            channels: self.channels,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Root mean square over every channel and point.
    pub l2_norm: f64,
}

pub fn field_stats(field: &Field) -> Result<FieldStats> {
    field.check_finite()?;
    let values = field.values();
    let n = values.len() as f64;
    let (mut min, mut max, mut sum, mut sq) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0.0);
    for &v in values {
        min = min.min(v);
        max = max.max(v);
        sum += v;
        sq += v * v;
    }
    Ok(FieldStats {
        min,
        max,
        mean: sum / n,
        l2_norm: (sq / n).sqrt(),
    })
}

/// Stored frames of one solution, frame 0 being the initial condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    grid: Grid,
    frames: Vec<Field>,
}

impl Trajectory {
    pub fn new(grid: Grid, frames: Vec<Field>) -> Result<Trajectory> {
        if frames.len() != grid.n_frames() {
            return Err(Error::Shape(format!(
                "trajectory has {} frames, grid declares {}",
                frames.len(),
                grid.n_frames()
            )));
        }
        let channels = frames[0].channels();
        for (i, f) in frames.iter().enumerate() {
            if !f.grid().same_space(&grid) || f.channels() != channels {
                return Err(Error::Shape(format!(
                    "frame {i} does not match the trajectory grid/channels"
                )));
            }
        }
        Ok(Trajectory { grid, frames })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn frames(&self) -> &[Field] {
        &self.frames
    }

    pub fn frame(&self, n: usize) -> &Field {
        &self.frames[n]
    }

    pub fn channels(&self) -> usize {
        self.frames[0].channels()
    }

    pub fn into_frames(self) -> Vec<Field> {
        self.frames
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "burgers1d")]
    Burgers1D,
    #[serde(rename = "ns2d")]
    CompressibleNS2D,
}

impl Family {
    pub fn dim(self) -> usize {
        match self {
            Family::Burgers1D => 1,
            Family::CompressibleNS2D => 2,
        }
    }

    /// Channels of a state field: u for Burgers, (rho, vx, vy, p) for NS.
    pub fn state_channels(self) -> usize {
        match self {
            Family::Burgers1D => 1,
            Family::CompressibleNS2D => 4,
        }
    }

    /// Length of the varied coefficient vector.
    pub fn n_coefficients(self) -> usize {
        match self {
            Family::Burgers1D => 1,
            Family::CompressibleNS2D => 2,
        }
    }

    pub fn coefficient_names(self) -> &'static [&'static str] {
        match self {
            Family::Burgers1D => &["nu"],
            Family::CompressibleNS2D => &["eta", "zeta"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Burgers1D => "burgers1d",
            Family::CompressibleNS2D => "ns2d",
        }
    }
}

/// PDE coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PdeParameters {
    Burgers { nu: f64 },
    CompressibleNs { eta: f64, zeta: f64, gamma: f64 },
}

impl PdeParameters {
    pub fn burgers(nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidParameter(format!("viscosity nu must be > 0, got {nu}")));
        }
        Ok(PdeParameters::Burgers { nu })
    }

    pub fn ns(eta: f64, zeta: f64) -> Result<Self> {
        Self::ns_with_gamma(eta, zeta, ADIABATIC_INDEX)
    }

    pub fn ns_with_gamma(eta: f64, zeta: f64, gamma: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0 && zeta.is_finite() && zeta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "viscosities must be > 0, got eta={eta}, zeta={zeta}"
            )));
        }
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must be > 1, got {gamma}")));
        }
        Ok(PdeParameters::CompressibleNs { eta, zeta, gamma })
    }

    /// Builds parameters from the varied coefficient vector.
    pub fn from_coefficients(family: Family, delta: &[f64]) -> Result<Self> {
        if delta.len() != family.n_coefficients() {
            return Err(Error::InvalidParameter(format!(
                "{} takes {} coefficients, got {}",
                family.name(),
                family.n_coefficients(),
                delta.len()
            )));
        }
        match family {
            Family::Burgers1D => Self::burgers(delta[0]),
            Family::CompressibleNS2D => Self::ns(delta[0], delta[1]),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            PdeParameters::Burgers { .. } => Family::Burgers1D,
            PdeParameters::CompressibleNs { .. } => Family::CompressibleNS2D,
        }
    }

    /// The varied coefficients: (nu) or (eta, zeta). Gamma is fixed and excluded.
    pub fn delta(&self) -> Vec<f64> {
        match *self {
            PdeParameters::Burgers { nu } => vec![nu],
            PdeParameters::CompressibleNs { eta, zeta, .. } => vec![eta, zeta],
        }
    }
}

/// Latent vector feeding the initial-condition generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IcParameters(pub Vec<f64>);

impl IcParameters {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub type CandidateId = u64;

/// A pool entry: PDE coefficients plus its materialized initial condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: CandidateId,
    pub pde: PdeParameters,
    pub ic: IcParameters,
    pub ic_field: Field,
}

impl Candidate {
    pub fn new(id: CandidateId, pde: PdeParameters, ic: IcParameters, ic_field: Field) -> Result<Self> {
        let family = pde.family();
        if ic_field.channels() != family.state_channels() || ic_field.grid().dim() != family.dim() {
            return Err(Error::Shape(format!(
                "{} candidate needs a {}-channel {}D field",
                family.name(),
                family.state_channels(),
                family.dim()
            )));
        }
        Ok(Candidate {
            id,
            pde,
            ic,
            ic_field,
        })
    }

    pub fn family(&self) -> Family {
        self.pde.family()
    }
}

/// A candidate together with its simulated ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub candidate: Candidate,
    pub truth: Trajectory,
    /// Residual score of `truth`, cached at labeling time for normalization.
    pub truth_score: f64,
}

impl LabeledSample {
    pub fn new(candidate: Candidate, truth: Trajectory, truth_score: f64) -> Result<Self> {
        if truth.frame(0) != &candidate.ic_field {
            return Err(Error::Shape(
                "ground-truth frame 0 differs from the candidate initial condition".into(),
            ));
        }
        if !(truth_score.is_finite() && truth_score >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "truth score must be finite and nonnegative, got {truth_score}"
            )));
        }
        Ok(LabeledSample {
            candidate,
            truth,
            truth_score,
        })
    }

    pub fn id(&self) -> CandidateId {
        self.candidate.id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn burgers_grid_arithmetic() {
        let g = make_grid(1, 256, 2.0 * PI, 0.05, 41).unwrap();
        assert_eq!(g.dx(), 2.0 * PI / 256.0);
        assert!((g.t_final() - 2.0).abs() < 1e-12);
        assert_eq!(g.n_spatial(), 256);
    }

    #[test]
    fn ns_grid_arithmetic() {
        let g = make_grid(2, 64, 1.0, 0.05, 21).unwrap();
        assert_eq!(g.dx(), 1.0 / 64.0);
        assert_eq!(g.dy(), 1.0 / 64.0);
        assert!((g.t_final() - 1.0).abs() < 1e-12);
        assert_eq!(g.n_spatial(), 4096);
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(make_grid(1, 256, 2.0 * PI, 0.05, 2).is_err());
        assert!(make_grid(1, 0, 1.0, 0.05, 5).is_err());
        assert!(make_grid(1, 8, -1.0, 0.05, 5).is_err());
        assert!(make_grid(1, 8, 1.0, 0.0, 5).is_err());
        assert!(make_grid(3, 8, 1.0, 0.1, 5).is_err());
    }

    #[test]
    fn spacing_times_points_is_length() {
        for n in [3usize, 7, 64, 100, 257, 1000] {
            for len in [1.0, 2.0 * PI, 0.3, 17.25] {
                let g = make_grid(2, n, len, 0.1, 3).unwrap();
                for axis in 0..2 {
                    let err = (g.spacings()[axis] * n as f64 - len).abs();
                    assert!(err < 1e-12 * len, "n={n} len={len} err={err}");
                }
            }
        }
    }

    #[test]
    fn stats_of_simple_fields() {
        let g = make_grid(1, 2, 1.0, 0.1, 3).unwrap();
        let s = field_stats(&Field::zeros(g, 1)).unwrap();
        assert_eq!((s.min, s.max, s.mean, s.l2_norm), (0.0, 0.0, 0.0, 0.0));

        let s = field_stats(&Field::new(g, 1, vec![1.0, -1.0]).unwrap()).unwrap();
        assert_eq!((s.min, s.max, s.mean, s.l2_norm), (-1.0, 1.0, 0.0, 1.0));

        let s = field_stats(&Field::new(g, 1, vec![3.0, 4.0]).unwrap()).unwrap();
        assert_eq!(s.l2_norm, 12.5f64.sqrt());
    }

    #[test]
    fn stats_names_first_non_finite_entry() {
        let g = make_grid(1, 4, 1.0, 0.1, 3).unwrap();
        let f = Field::new(g, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, f64::NAN, f64::INFINITY, 0.0]).unwrap();
        match field_stats(&f) {
            Err(Error::NonFinite { channel, point }) => assert_eq!((channel, point), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(PdeParameters::burgers(0.0).is_err());
        assert!(PdeParameters::burgers(0.1).is_ok());
        assert!(PdeParameters::ns(0.01, -1.0).is_err());
        assert!(PdeParameters::ns_with_gamma(0.01, 0.01, 1.0).is_err());
        let p = PdeParameters::ns(0.02, 0.05).unwrap();
        assert_eq!(p.delta(), vec![0.02, 0.05]);
        assert_eq!(p.family(), Family::CompressibleNS2D);
    }

    #[test]
    fn candidate_channel_count_checked() {
        let g = make_grid(1, 8, 1.0, 0.1, 3).unwrap();
        let pde = PdeParameters::burgers(0.5).unwrap();
        assert!(Candidate::new(0, pde, IcParameters(vec![]), Field::zeros(g, 4)).is_err());
        assert!(Candidate::new(0, pde, IcParameters(vec![]), Field::zeros(g, 1)).is_ok());
    }

    #[test]
    fn trajectory_frame_count_checked() {
        let g = make_grid(1, 8, 1.0, 0.1, 3).unwrap();
        assert!(Trajectory::new(g, vec![Field::zeros(g, 1); 2]).is_err());
        assert!(Trajectory::new(g, vec![Field::zeros(g, 1); 3]).is_ok());
    }

    #[test]
    fn grid_json_round_trips() {
        let square = make_grid(2, 16, 1.0, 0.05, 5).unwrap();
        let text = serde_json::to_string(&square).unwrap();
        assert!(text.contains("\"n_points\":16"));
        assert_eq!(serde_json::from_str::<Grid>(&text).unwrap(), square);

        let wide = Grid::with_axes(2, [16, 8], [2.0, 1.0], 0.05, 5).unwrap();
        let text = serde_json::to_string(&wide).unwrap();
        assert_eq!(serde_json::from_str::<Grid>(&text).unwrap(), wide);

        let bad = r#"{"dim":1,"n_points":8,"length":1.0,"dt_frame":0.1,"n_frames":2}"#;
        assert!(serde_json::from_str::<Grid>(bad).is_err());
    }
}
