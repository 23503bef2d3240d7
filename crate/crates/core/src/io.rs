//! On-disk formats: binary field snapshots, trajectory directories and CSV.
//!
//! A snapshot is the 4-byte magic `LLGF`, then little-endian `u32` version,
//! `nx`, `ny`, `ncomp`, then `f64` `lx`, `ly`, `t`, then `ncomp·nx·ny`
//! little-endian `f64` values, component-major with `x` fastest.
//!
//! A trajectory directory holds `frame_NNNNNN.llgf` files plus `index.csv`
//! with columns `step,t,file`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fields::{Trajectory, VectorField3};
use crate::spectral::Grid;

pub const MAGIC: &[u8; 4] = b"LLGF";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 4 + 3 * 8;

#[derive(Clone, Debug, PartialEq)]
pub struct FieldSnapshot {
    pub nx: u32,
    pub ny: u32,
    pub ncomp: u32,
    pub lx: f64,
    pub ly: f64,
    pub t: f64,
    pub data: Vec<f64>,
}

impl FieldSnapshot {
    pub fn from_field(field: &VectorField3, t: f64) -> Self {
        let g = field.grid();
        FieldSnapshot {
            nx: g.nx() as u32,
            ny: g.ny() as u32,
            ncomp: 3,
            lx: g.lx(),
            ly: g.ly(),
            t,
            data: field.data().to_vec(),
        }
    }

    /// Converts back to a field on `grid`, which must match the stored geometry.
    pub fn into_field(self, grid: &Grid) -> Result<VectorField3> {
        if self.ncomp != 3
            || self.nx as usize != grid.nx()
            || self.ny as usize != grid.ny()
            || self.lx.to_bits() != grid.lx().to_bits()
            || self.ly.to_bits() != grid.ly().to_bits()
        {
            return Err(Error::Shape(format!(
                "snapshot {}x{}x{} on [{}, {}] does not match grid {}x{} on [{}, {}]",
                self.nx,
                self.ny,
                self.ncomp,
                self.lx,
                self.ly,
                grid.nx(),
                grid.ny(),
                grid.lx(),
                grid.ly()
            )));
        }
        VectorField3::from_data(grid, self.data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        for v in [FORMAT_VERSION, self.nx, self.ny, self.ncomp] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [self.lx, self.ly, self.t] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        if bytes.len() < HEADER_LEN {
            return Err(bad(format!("file too short for a header ({} bytes)", bytes.len())));
        }
        if &bytes[0..4] != MAGIC {
            return Err(bad("bad magic bytes".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let version = u32_at(4);
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let (nx, ny, ncomp) = (u32_at(8), u32_at(12), u32_at(16));
        let (lx, ly, t) = (f64_at(20), f64_at(28), f64_at(36));
        let count = (nx as usize)
            .checked_mul(ny as usize)
            .and_then(|n| n.checked_mul(ncomp as usize))
            .ok_or_else(|| bad("payload size overflows".into()))?;
        if bytes.len() != HEADER_LEN + 8 * count {
            return Err(bad(format!(
                "payload holds {} bytes, header announces {}",
                bytes.len() - HEADER_LEN,
                8 * count
            )));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(FieldSnapshot {
            nx,
            ny,
            ncomp,
            lx,
            ly,
            t,
            data,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_bytes(&bytes, path)
    }
}

pub fn write_field(path: &Path, field: &VectorField3, t: f64) -> Result<()> {
    FieldSnapshot::from_field(field, t).write(path)
}

pub fn read_field(path: &Path, grid: &Grid) -> Result<VectorField3> {
    FieldSnapshot::read(path)?.into_field(grid)
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn frame_file_name(step: usize) -> String {
    format!("frame_{step:06}.llgf")
}

/// Writes frames `0, stride, 2·stride, …` and always the last one.
pub fn write_trajectory(dir: &Path, traj: &Trajectory, stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::Invalid("snapshot stride must be at least 1".into()));
    }
    fs::create_dir_all(dir)?;
    let mut index = String::from("step,t,file\n");
    for k in 0..=traj.nt() {
        if k % stride != 0 && k != traj.nt() {
            continue;
        }
        let name = frame_file_name(k);
        write_field(&dir.join(&name), traj.frame(k), traj.time(k))?;
        index.push_str(&format!("{},{},{}\n", k, fmt_f64(traj.time(k)), name));
    }
    fs::write(dir.join("index.csv"), index)?;
    Ok(())
}

/// Frames listed in a trajectory directory's index, as `(step, t, path)`.
pub fn read_index(dir: &Path) -> Result<Vec<(usize, f64, PathBuf)>> {
    let path = dir.join("index.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let bad = |line: usize, message: &str| Error::Format {
        path: path.clone(),
        message: format!("line {line}: {message}"),
    };
    let mut lines = text.lines();
    if lines.next() != Some("step,t,file") {
        return Err(bad(1, "expected header `step,t,file`"));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(bad(i + 2, "expected three columns"));
        }
        let step = parts[0].parse().map_err(|_| bad(i + 2, "bad step"))?;
        let t = parts[1].parse().map_err(|_| bad(i + 2, "bad time"))?;
        out.push((step, t, dir.join(parts[2])));
    }
    Ok(out)
}

/// Reads a trajectory written with stride 1.
pub fn read_trajectory(dir: &Path, grid: &Grid) -> Result<Trajectory> {
    let index = read_index(dir)?;
    let mut frames = Vec::with_capacity(index.len());
    for (expect, (step, _, path)) in index.iter().enumerate() {
        if *step != expect {
            return Err(Error::Format {
                path: dir.join("index.csv"),
                message: format!("frame {expect} missing; a complete trajectory needs stride 1"),
            });
        }
        frames.push(read_field(path, grid)?);
    }
    let t_final = index.last().map(|(_, t, _)| *t).unwrap_or(0.0);
    Trajectory::new(t_final, frames)
}

/// Line-buffered CSV writer with a fixed header.
pub struct CsvWriter {
    out: std::io::BufWriter<fs::File>,
    columns: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvWriter {
            out,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, cells: &[String]) -> Result<()> {
        debug_assert_eq!(cells.len(), self.columns);
        writeln!(self.out, "{}", cells.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_is_byte_exact() {
        let g = Grid::new(1.5, 0.75, 6, 4).unwrap();
        let f = VectorField3::from_fn(&g, |x, y| [x.sin(), y * 1e-300, -x * y / 3.0]);
        let bytes = FieldSnapshot::from_field(&f, 0.1).to_bytes();
        let back = FieldSnapshot::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.into_field(&g).unwrap(), f);
    }

    #[test]
    fn rejects_bad_headers() {
        let g = Grid::unit_square(4).unwrap();
        let bytes = FieldSnapshot::from_field(&VectorField3::zeros(&g), 0.0).to_bytes();
        let p = Path::new("mem");
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(FieldSnapshot::from_bytes(&magic, p), Err(Error::Format { .. })));
        let mut version = bytes.clone();
        version[4] = 2;
        let err = FieldSnapshot::from_bytes(&version, p).unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
        assert!(FieldSnapshot::from_bytes(&bytes[..bytes.len() - 1], p).is_err());
        let other = Grid::unit_square(5).unwrap();
        let snap = FieldSnapshot::from_bytes(&bytes, p).unwrap();
        assert!(snap.into_field(&other).is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, f64::MAX, 5e-324] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
