//! Binary dump and restore of the assembled operator store.
//!
//! The file is keyed by (mesh hash, p, p_gamma); restoring against a
//! different key fails. Only the expensive spatial factors are stored; the
//! cheap temporal matrices and tables are rebuilt on load.

use crate::assembly::{assemble, OperatorStore};
use crate::error::Error;
use crate::mesh::StaggeredMesh;
use nalgebra::DMatrix;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 11] = b"STDG-OPS 1\n";

pub fn dump_operators(
    ops: &OperatorStore,
    mesh: &StaggeredMesh,
    path: impl AsRef<Path>,
) -> Result<(), Error> {
    let mut w = Vec::new();
    w.extend_from_slice(MAGIC);
    w.extend_from_slice(&mesh.hash.to_le_bytes());
    w.extend_from_slice(&(ops.basis.p as u64).to_le_bytes());
    w.extend_from_slice(&(ops.basis.p_gamma as u64).to_le_bytes());
    w.extend_from_slice(&(ops.edges.len() as u64).to_le_bytes());
    for e in &ops.edges {
        write_mat(&mut w, &e.ms);
        write_mat(&mut w, &e.ms_inv);
        for side in 0..2 {
            for dir in 0..2 {
                write_mat(&mut w, &e.d[side][dir]);
                write_mat(&mut w, &e.q[side][dir]);
            }
        }
    }
    let tmp = path.as_ref().with_extension("ops.tmp");
    std::fs::File::create(&tmp)?.write_all(&w)?;
    std::fs::rename(&tmp, path.as_ref())?;
    Ok(())
}

/// Restore a store: the matrices come from the dump, the quadrature tables
/// are rebuilt from the mesh. Any key mismatch is an error.
pub fn restore_operators(
    mesh: &StaggeredMesh,
    path: impl AsRef<Path>,
) -> Result<OperatorStore, Error> {
    let mut bytes = Vec::new();
    std::fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    let mut r = Cursor { b: &bytes, at: 0 };
    let magic = r.take(MAGIC.len())?;
    if magic != MAGIC {
        return Err(Error::parse("bad operator dump header"));
    }
    let hash = r.u64()?;
    if hash != mesh.hash {
        return Err(Error::parse("operator dump was built for a different mesh"));
    }
    let p = r.u64()? as usize;
    let p_gamma = r.u64()? as usize;
    let n_edges = r.u64()? as usize;
    if n_edges != mesh.n_edges() {
        return Err(Error::parse("operator dump edge count mismatch"));
    }
    // Rebuild everything, then overwrite the stored matrices (checks the
    // dumped data against freshly computed shapes).
    let mut ops = assemble(mesh, p, p_gamma)?;
    for e in ops.edges.iter_mut() {
        e.ms = r.mat()?;
        e.ms_inv = r.mat()?;
        for side in 0..2 {
            for dir in 0..2 {
                e.d[side][dir] = r.mat()?;
                e.q[side][dir] = r.mat()?;
            }
        }
    }
    Ok(ops)
}

fn write_mat(w: &mut Vec<u8>, m: &DMatrix<f64>) {
    w.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    w.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for v in m.iter() {
        w.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        if self.at + n > self.b.len() {
            return Err(Error::parse("truncated operator dump"));
        }
        let s = &self.b[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64, Error> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, Error> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn mat(&mut self) -> Result<DMatrix<f64>, Error> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let mut m = DMatrix::zeros(rows, cols);
        for k in 0..rows * cols {
            let v = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
            m.as_mut_slice()[k] = v;
        }
        Ok(m)
    }
}
