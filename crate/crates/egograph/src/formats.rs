//! On-disk formats for intermediate pipeline products.
//!
//! Three little-endian binary/text formats, all deterministic byte-for-byte:
//!
//! * **`GMD1`** — a dense `f64` matrix: 4-byte magic `GMD1`, `u32` rows,
//!   `u32` cols, then `rows x cols` doubles in column-major order.
//! * **`SPC1`** — a graph spectrum: 4-byte magic `SPC1`, `u32` node count
//!   `n`, `u32` eigenpair count, the eigenvalues, then the `n x n_eig`
//!   eigenvector matrix column-major. Landmark bookkeeping (which nodes were
//!   sampled) is not persisted; a reloaded spectrum reports every node as a
//!   sample.
//! * **labels CSV** — header `segment_index,class_id`, one `index,label` row
//!   per segment with LF line endings; indices must run `0..n` contiguously.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ShapeBuilder};

use crate::error::{Error, Result};
use crate::spectrum::Spectrum;

const MATRIX_MAGIC: &[u8; 4] = b"GMD1";
const SPECTRUM_MAGIC: &[u8; 4] = b"SPC1";

fn push_matrix_column_major(out: &mut Vec<u8>, m: &Array2<f64>) {
    for col in m.columns() {
        for &v in col {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn dims_to_header(magic: &[u8; 4], a: usize, b: usize, path: &Path) -> Result<Vec<u8>> {
    let a32 = u32::try_from(a)
        .map_err(|_| Error::TooLarge(format!("{a} rows do not fit the format header")))?;
    let b32 = u32::try_from(b)
        .map_err(|_| Error::TooLarge(format!("{b} columns do not fit the format header")))?;
    let _ = path;
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&a32.to_le_bytes());
    out.extend_from_slice(&b32.to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Cursor<'a> {
        Cursor { bytes, at: 0, path }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.to_path_buf(),
                expected: self.at + n,
                found: self.bytes.len(),
            });
        }
        let slice = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.take(n * 8)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect())
    }

    fn expect_magic(&mut self, magic: &[u8; 4], kind: &str) -> Result<()> {
        let got = self.take(4).map_err(|_| Error::Parse {
            path: self.path.to_path_buf(),
            detail: format!("file too short for a {kind} header"),
        })?;
        if got != magic {
            return Err(Error::Parse {
                path: self.path.to_path_buf(),
                detail: format!("bad magic {got:?}, expected {magic:?} ({kind})"),
            });
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(Error::Parse {
                path: self.path.to_path_buf(),
                detail: format!(
                    "{} trailing bytes after the payload",
                    self.bytes.len() - self.at
                ),
            });
        }
        Ok(())
    }
}

/// Write a matrix in the `GMD1` layout.
pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = dims_to_header(MATRIX_MAGIC, m.nrows(), m.ncols(), path)?;
    out.reserve(m.len() * 8);
    push_matrix_column_major(&mut out, m);
    let mut file = fs::File::create(path).map_err(Error::io(path))?;
    file.write_all(&out).map_err(Error::io(path))?;
    Ok(())
}

/// Read a `GMD1` matrix back. Bit-exact inverse of [`write_matrix`].
pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let mut cur = Cursor::new(&bytes, path);
    cur.expect_magic(MATRIX_MAGIC, "matrix")?;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let data = cur.f64_vec(rows.checked_mul(cols).ok_or_else(|| Error::TooLarge(
        format!("{rows} x {cols} matrix overflows"),
    ))?)?;
    cur.finish()?;
    // Column-major payload: build with the `f` (column-major) shape.
    Array2::from_shape_vec((rows, cols).f(), data).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Write a spectrum in the `SPC1` layout.
pub fn write_spectrum(path: &Path, spectrum: &Spectrum) -> Result<()> {
    let mut out = dims_to_header(SPECTRUM_MAGIC, spectrum.len(), spectrum.n_eig(), path)?;
    out.reserve((spectrum.n_eig() + spectrum.len() * spectrum.n_eig()) * 8);
    for &v in spectrum.eigenvalues.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    push_matrix_column_major(&mut out, &spectrum.phi);
    let mut file = fs::File::create(path).map_err(Error::io(path))?;
    file.write_all(&out).map_err(Error::io(path))?;
    Ok(())
}

/// Read an `SPC1` spectrum. Eigenvalues and eigenvectors round-trip
/// bit-exactly; the sample bookkeeping is reconstructed as "all nodes".
pub fn read_spectrum(path: &Path) -> Result<Spectrum> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let mut cur = Cursor::new(&bytes, path);
    cur.expect_magic(SPECTRUM_MAGIC, "spectrum")?;
    let n = cur.u32()? as usize;
    let n_eig = cur.u32()? as usize;
    let eigenvalues = Array1::from_vec(cur.f64_vec(n_eig)?);
    let phi_data = cur.f64_vec(n.checked_mul(n_eig).ok_or_else(|| Error::TooLarge(
        format!("{n} x {n_eig} spectrum overflows"),
    ))?)?;
    cur.finish()?;
    let phi = Array2::from_shape_vec((n, n_eig).f(), phi_data).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    Ok(Spectrum {
        eigenvalues,
        phi,
        n_sample: n,
        sample_indices: (0..n).collect(),
    })
}

/// Write segment labels as CSV: `segment_index,class_id` header, LF rows.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 8 + 32);
    out.push_str("segment_index,class_id\n");
    for (i, &l) in labels.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    fs::write(path, out).map_err(Error::io(path))
}

/// Read a labels CSV written by [`write_labels`] (or hand-authored in the
/// same shape). Indices must be contiguous from 0; CRLF input is tolerated.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let parse_err = |detail: String| Error::Parse {
        path: path.to_path_buf(),
        detail,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == "segment_index,class_id" => {}
        other => {
            return Err(parse_err(format!(
                "expected header 'segment_index,class_id', got {other:?}"
            )))
        }
    }
    let mut labels = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let (idx_text, label_text) = line.split_once(',').ok_or_else(|| {
            parse_err(format!("line {}: expected 'index,label'", lineno + 2))
        })?;
        let idx: usize = idx_text.trim().parse().map_err(|_| {
            parse_err(format!("line {}: bad index {idx_text:?}", lineno + 2))
        })?;
        let label: usize = label_text.trim().parse().map_err(|_| {
            parse_err(format!("line {}: bad label {label_text:?}", lineno + 2))
        })?;
        if idx != labels.len() {
            return Err(parse_err(format!(
                "line {}: index {idx} out of order (expected {})",
                lineno + 2,
                labels.len()
            )));
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(parse_err("no label rows".into()));
    }
    Ok(labels)
}
