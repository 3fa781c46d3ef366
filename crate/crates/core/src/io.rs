//! PTSF1 file format.
//!
//! Layout: magic `PTSF1\0`, little-endian u32 fields `n, P, N, K` (`K = 1`
//! for a single field), `f64 box_length`, `f64 times[K]`, then `K*N*P^n`
//! complex values as interleaved f64 (re, im), row-major within a
//! component, component-major within a slice.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, SpaceTimeField};

const MAGIC: &[u8; 6] = b"PTSF1\0";

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn write_payload(
    w: &mut impl Write,
    grid: Grid,
    components: usize,
    times: &[f64],
    slices: &[&Field],
) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, grid.dim() as u32)?;
    write_u32(w, grid.points_per_axis() as u32)?;
    write_u32(w, components as u32)?;
    write_u32(w, times.len() as u32)?;
    write_f64(w, grid.box_length())?;
    for &t in times {
        write_f64(w, t)?;
    }
    for s in slices {
        for z in s.values() {
            write_f64(w, z.re)?;
            write_f64(w, z.im)?;
        }
    }
    Ok(())
}

/// Write atomically: temp file in the same directory, then rename.
fn atomic_write(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "ptsf".into())
    ));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_field(path: impl AsRef<Path>, field: &Field, time: f64) -> Result<()> {
    atomic_write(path.as_ref(), |w| {
        write_payload(w, field.grid(), field.components(), &[time], &[field])
    })
}

pub fn write_trajectory(path: impl AsRef<Path>, traj: &SpaceTimeField) -> Result<()> {
    let slices: Vec<&Field> = traj.slices().iter().collect();
    atomic_write(path.as_ref(), |w| {
        write_payload(w, traj.grid(), traj.components(), traj.times(), &slices)
    })
}

#[derive(Debug)]
pub struct PtsfHeader {
    pub grid: Grid,
    pub components: usize,
    pub times: Vec<f64>,
}

pub fn read_header(r: &mut impl Read) -> Result<PtsfHeader> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic; not a PTSF1 file".into()));
    }
    let n = read_u32(r)? as usize;
    let p = read_u32(r)? as usize;
    let ncomp = read_u32(r)? as usize;
    let k = read_u32(r)? as usize;
    let box_length = read_f64(r)?;
    let grid = Grid::new(n, p, box_length).map_err(|e| Error::Format(e.to_string()))?;
    if ncomp == 0 || k == 0 {
        return Err(Error::Format("component or slice count is zero".into()));
    }
    let mut times = Vec::with_capacity(k);
    for _ in 0..k {
        times.push(read_f64(r)?);
    }
    Ok(PtsfHeader {
        grid,
        components: ncomp,
        times,
    })
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<SpaceTimeField> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let header = read_header(&mut r)?;
    let np = header.grid.total_points();
    let mut slices = Vec::with_capacity(header.times.len());
    for _ in 0..header.times.len() {
        let mut values = Vec::with_capacity(header.components * np);
        for _ in 0..header.components * np {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::Format("non-finite value in PTSF1 payload".into()));
            }
            values.push(Complex64::new(re, im));
        }
        slices.push(Field::from_values(header.grid, header.components, values)?);
    }
    SpaceTimeField::new(header.times, slices)
}

pub fn read_field(path: impl AsRef<Path>) -> Result<(Field, f64)> {
    let traj = read_trajectory(path)?;
    if traj.len() != 1 {
        return Err(Error::Format(format!(
            "expected a single slice, found {}",
            traj.len()
        )));
    }
    Ok((traj.slices()[0].clone(), traj.times()[0]))
}

pub fn peek_header(path: impl AsRef<Path>) -> Result<PtsfHeader> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    read_header(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn field_roundtrip() {
        let g = make_grid(1, 32, 4.0).unwrap();
        let f = Field::from_fn(g, |x| Complex64::new(x[0].sin(), x[0].cos()));
        let dir = std::env::temp_dir().join("tentlab_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f.ptsf");
        write_field(&path, &f, 0.25).unwrap();
        let (g2, t) = read_field(&path).unwrap();
        assert_eq!(t, 0.25);
        assert_eq!(g2.values(), f.values());
        assert_eq!(g2.grid(), g);
    }

    #[test]
    fn trajectory_roundtrip_bitexact() {
        let g = make_grid(2, 8, 2.0).unwrap();
        let slices: Vec<Field> = (0..3)
            .map(|k| Field::from_fn(g, |x| Complex64::new(x[0] + k as f64, x[1] - k as f64)))
            .collect();
        let traj = SpaceTimeField::new(vec![0.0, 0.5, 1.25], slices).unwrap();
        let dir = std::env::temp_dir().join("tentlab_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("traj.ptsf");
        write_trajectory(&path, &traj).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.times(), traj.times());
        for (a, b) in back.slices().iter().zip(traj.slices()) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = std::env::temp_dir().join("tentlab_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.ptsf");
        std::fs::write(&path, b"NOTPTSF_____").unwrap();
        assert!(matches!(
            read_trajectory(&path),
            Err(Error::Format(_)) | Err(Error::Io(_))
        ));
    }
}
