//! Flat little-endian binary layout for kernels and wavefunction snapshots.
//!
//! Header: `n` (u64), `L` (f64), `M` (u64), `k` (u64). Payload: row-major
//! `(re, im)` f64 pairs in index order `p_1..p_k, p'_1..p'_k`. A header with
//! `k = 0` marks a one-particle momentum array of `M^n` coefficients.

use std::io::{Read, Write};

use num_complex::Complex64 as C64;

use super::MarginalKernel;
use crate::error::{Error, Result};
use crate::spectral::GridSpec;

fn write_header<W: Write>(w: &mut W, grid: &GridSpec, k: u64) -> Result<()> {
    w.write_all(&(grid.dim() as u64).to_le_bytes())?;
    w.write_all(&grid.length().to_le_bytes())?;
    w.write_all(&(grid.points() as u64).to_le_bytes())?;
    w.write_all(&k.to_le_bytes())?;
    Ok(())
}

fn write_payload<W: Write>(w: &mut W, data: &[C64]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 16);
    for z in data {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_header<R: Read>(r: &mut R) -> Result<(GridSpec, u64)> {
    let n = read_u64(r)?;
    let length = f64::from_bits(read_u64(r)?);
    let m = read_u64(r)?;
    let k = read_u64(r)?;
    if n == 0 || n > 8 || m > 1 << 16 || k > 16 {
        return Err(Error::Format(format!("implausible header n={n} M={m} k={k}")));
    }
    Ok((GridSpec::new(n as usize, length, m as usize)?, k))
}

fn read_payload<R: Read>(r: &mut R, entries: usize) -> Result<Vec<C64>> {
    let mut buf = vec![0u8; entries * 16];
    r.read_exact(&mut buf)?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect())
}

pub fn write_kernel<W: Write>(w: &mut W, kernel: &MarginalKernel) -> Result<()> {
    write_header(w, kernel.grid(), kernel.k() as u64)?;
    write_payload(w, kernel.data())
}

pub fn read_kernel<R: Read>(r: &mut R) -> Result<MarginalKernel> {
    let (grid, k) = read_header(r)?;
    if k == 0 {
        return Err(Error::Format("header describes a wavefunction, not a kernel".into()));
    }
    let entries = crate::budget::kernel_entries(grid.sites(), k as usize);
    crate::budget::check_entries(entries, "kernel file")?;
    let data = read_payload(r, entries as usize)?;
    MarginalKernel::from_data(&grid, k as usize, data)
}

/// Write one-particle momentum coefficients with a `k = 0` header.
pub fn write_momentum_array<W: Write>(w: &mut W, grid: &GridSpec, hat: &[C64]) -> Result<()> {
    if hat.len() != grid.sites() {
        return Err(Error::DimensionMismatch {
            expected: grid.sites(),
            found: hat.len(),
        });
    }
    write_header(w, grid, 0)?;
    write_payload(w, hat)
}

pub fn read_momentum_array<R: Read>(r: &mut R) -> Result<(GridSpec, Vec<C64>)> {
    let (grid, k) = read_header(r)?;
    if k != 0 {
        return Err(Error::Format(format!("expected a wavefunction header, found k={k}")));
    }
    let data = read_payload(r, grid.sites())?;
    Ok((grid, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::random_test_kernel;

    #[test]
    fn kernel_round_trip() {
        let g = GridSpec::new(1, 3.5, 4).unwrap();
        let gam = random_test_kernel(&g, 2, 1.0, 9).unwrap();
        let mut buf = Vec::new();
        write_kernel(&mut buf, &gam).unwrap();
        assert_eq!(buf.len(), 32 + 256 * 16);
        let back = read_kernel(&mut buf.as_slice()).unwrap();
        assert_eq!(back, gam);
    }

    #[test]
    fn wavefunction_round_trip() {
        let g = GridSpec::new(2, 1.0, 4).unwrap();
        let hat: Vec<C64> = (0..16).map(|i| C64::new(i as f64, -0.5)).collect();
        let mut buf = Vec::new();
        write_momentum_array(&mut buf, &g, &hat).unwrap();
        let (g2, back) = read_momentum_array(&mut buf.as_slice()).unwrap();
        assert_eq!(g2, g);
        assert_eq!(back, hat);
        assert!(read_kernel(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn truncated_payload_rejected() {
        let g = GridSpec::new(1, 1.0, 4).unwrap();
        let gam = random_test_kernel(&g, 1, 1.0, 1).unwrap();
        let mut buf = Vec::new();
        write_kernel(&mut buf, &gam).unwrap();
        buf.pop();
        assert!(read_kernel(&mut buf.as_slice()).is_err());
    }
}
