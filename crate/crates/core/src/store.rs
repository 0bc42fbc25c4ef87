//! Binary trajectory store.
//!
//! Layout, all little-endian and 64 bits wide:
//!
//! ```text
//! "PREAQ1" | dim | n_points[dim] | length[dim] | dt_frame | n_frames | channels | values...
//! ```
//!
//! Values are frame-major; inside a frame they follow the in-memory
//! [`Field`] layout (channel-major, x fastest).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Field, Grid, Trajectory};

pub const MAGIC: &[u8; 6] = b"PREAQ1";

/// Decoded store contents without trajectory invariants applied, e.g. a
/// residual dump whose frame count is `N_t - 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawFrames {
    pub dim: usize,
    pub n_points: Vec<usize>,
    pub length: Vec<f64>,
    pub dt_frame: f64,
    pub channels: usize,
    pub frames: Vec<Vec<f64>>,
}

pub fn write_frames<W: Write>(w: &mut W, grid: &Grid, frames: &[Field]) -> Result<()> {
    let channels = frames.first().map_or(0, Field::channels);
    w.write_all(MAGIC)?;
    w.write_all(&(grid.dim() as u64).to_le_bytes())?;
    for &n in grid.n_points() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for &l in grid.lengths() {
        w.write_all(&l.to_le_bytes())?;
    }
    w.write_all(&grid.dt_frame().to_le_bytes())?;
    w.write_all(&(frames.len() as u64).to_le_bytes())?;
    w.write_all(&(channels as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(channels * grid.n_spatial() * 8);
    for f in frames {
        if f.channels() != channels || !f.grid().same_space(grid) {
            return Err(Error::Shape("frames disagree on grid or channel count".into()));
        }
        buf.clear();
        for v in f.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_frames<R: Read>(r: &mut R) -> Result<RawFrames> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, not a trajectory store".into()));
    }
    let dim = read_u64(r)? as usize;
    if !(1..=2).contains(&dim) {
        return Err(Error::Format(format!("unsupported dim {dim}")));
    }
    let n_points = (0..dim)
        .map(|_| read_u64(r).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let length = (0..dim).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
    let dt_frame = read_f64(r)?;
    let n_frames = read_u64(r)? as usize;
    let channels = read_u64(r)? as usize;
    let per_frame = channels
        .checked_mul(n_points.iter().product())
        .ok_or_else(|| Error::Format("frame size overflows".into()))?;
    let mut frames = Vec::with_capacity(n_frames);
    let mut buf = vec![0u8; per_frame * 8];
    for _ in 0..n_frames {
        r.read_exact(&mut buf)?;
        frames.push(
            buf.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last frame".into()));
    }
    Ok(RawFrames {
        dim,
        n_points,
        length,
        dt_frame,
        channels,
        frames,
    })
}

pub fn write_trajectory<W: Write>(w: &mut W, traj: &Trajectory) -> Result<()> {
    write_frames(w, traj.grid(), traj.frames())
}

pub fn read_trajectory<R: Read>(r: &mut R) -> Result<Trajectory> {
    let raw = read_frames(r)?;
    let mut n = [1usize; 2];
    let mut len = [1.0; 2];
    n[..raw.dim].copy_from_slice(&raw.n_points);
    len[..raw.dim].copy_from_slice(&raw.length);
    let grid = Grid::with_axes(raw.dim, n, len, raw.dt_frame, raw.frames.len())?;
    let frames = raw
        .frames
        .into_iter()
        .map(|values| Field::new(grid, raw.channels, values))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(grid, frames)
}

pub fn save_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_trajectory(&mut w, traj)?;
    w.flush()?;
    Ok(())
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    read_trajectory(&mut r)
}
