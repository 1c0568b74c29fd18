//! Content-hashed persistence for grids of values (solved surfaces, kernel
//! tables): a small binary format plus CSV export.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ILLIQTBL";

/// FNV-1a over a canonical byte encoding; stable across runs and platforms.
pub fn content_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// A (time x space) table of values with its grids and the hash of whatever
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub params_hash: u64,
    pub t_grid: Vec<f64>,
    pub z_grid: Vec<f64>,
    /// Row-major `[t][z]`.
    pub values: Vec<f64>,
}

impl Table {
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&self.params_hash.to_le_bytes())?;
        w.write_all(&(self.t_grid.len() as u64).to_le_bytes())?;
        w.write_all(&(self.z_grid.len() as u64).to_le_bytes())?;
        for v in self.t_grid.iter().chain(&self.z_grid).chain(&self.values) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Table> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Cache(format!("{}: bad magic", path.display())));
        }
        let mut buf8 = [0u8; 8];
        let mut read_u64 = |r: &mut BufReader<File>| -> Result<u64> {
            r.read_exact(&mut buf8)?;
            Ok(u64::from_le_bytes(buf8))
        };
        let params_hash = read_u64(&mut r)?;
        let n_t = read_u64(&mut r)? as usize;
        let n_z = read_u64(&mut r)? as usize;
        let total = n_t + n_z + n_t * n_z;
        let mut data = vec![0.0f64; total];
        let mut byte = [0u8; 8];
        for v in data.iter_mut() {
            r.read_exact(&mut byte)?;
            *v = f64::from_le_bytes(byte);
        }
        let z_grid = data.split_off(n_t);
        let (z_grid, values) = {
            let mut z = z_grid;
            let vals = z.split_off(n_z);
            (z, vals)
        };
        Ok(Table {
            params_hash,
            t_grid: data,
            z_grid,
            values,
        })
    }

    /// CSV with one row per (t, z) node and a hash/profile header comment.
    pub fn write_csv(&self, path: &Path, value_name: &str, profile: &str) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "# params_hash={:016x} profile={}", self.params_hash, profile)?;
        writeln!(w, "t,zhat,{value_name}")?;
        for (i, t) in self.t_grid.iter().enumerate() {
            for (j, z) in self.z_grid.iter().enumerate() {
                writeln!(w, "{},{},{:.12e}", t, z, self.values[i * self.z_grid.len() + j])?;
            }
        }
        Ok(())
    }
}
