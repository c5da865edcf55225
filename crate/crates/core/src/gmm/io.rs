//! Binary model files.
//!
//! Layout (little endian): magic `CPGMM\x01`, structure tag `u8`
//! (0 full, 1 Toeplitz), `K: u32`, `dim: u32`, `K` weights, `K * dim` complex
//! means as `(re, im)` pairs, then either `K * dim * dim` complex covariance
//! entries (row-major) or `K * 2 * dim` spectral values, all `f64`. A CRC32 of
//! everything before it closes the file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{Covariances, GmmModel};
use crate::error::{Error, Result};
use crate::gauss::HermitianMatrix;

pub const MODEL_MAGIC: &[u8; 6] = b"CPGMM\x01";

const TAG_FULL: u8 = 0;
const TAG_TOEPLITZ: u8 = 1;
const MAX_ELEMENTS: u64 = 1 << 32;

fn push_f64(buf: &mut Vec<u8>, x: f64) {
    buf.extend_from_slice(&x.to_le_bytes());
}

fn push_c64(buf: &mut Vec<u8>, z: Complex64) {
    push_f64(buf, z.re);
    push_f64(buf, z.im);
}

/// Serializes `model` to bytes.
pub fn model_bytes(model: &GmmModel) -> Vec<u8> {
    let (k, dim) = (model.num_components(), model.dim());
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.push(match model.covariances() {
        Covariances::Full(_) => TAG_FULL,
        Covariances::Toeplitz(_) => TAG_TOEPLITZ,
    });
    buf.extend_from_slice(&(k as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for &w in model.weights() {
        push_f64(&mut buf, w);
    }
    for mean in model.means() {
        for &z in mean {
            push_c64(&mut buf, z);
        }
    }
    match model.covariances() {
        Covariances::Full(covs) => {
            for c in covs {
                for i in 0..dim {
                    for j in 0..dim {
                        push_c64(&mut buf, c.matrix()[(i, j)]);
                    }
                }
            }
        }
        Covariances::Toeplitz(specs) => {
            for s in specs {
                for &x in s {
                    push_f64(&mut buf, x);
                }
            }
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn write_model<W: Write>(model: &GmmModel, mut w: W) -> Result<()> {
    w.write_all(&model_bytes(model))?;
    w.flush()?;
    Ok(())
}

pub fn save_model(model: &GmmModel, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::ModelFormat(format!("truncated at byte {}", self.buf.len())));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn c64(&mut self) -> Result<Complex64> {
        Ok(Complex64::new(self.f64()?, self.f64()?))
    }
}

/// Parses a model, checking magic, checksum, sizes, and model invariants.
pub fn read_model<R: Read>(mut r: R) -> Result<GmmModel> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < MODEL_MAGIC.len() || buf[..5] != MODEL_MAGIC[..5] {
        return Err(Error::ModelFormat("not a model file".into()));
    }
    if buf[5] != MODEL_MAGIC[5] {
        return Err(Error::ModelFormat(format!("unsupported format version {}", buf[5])));
    }
    if buf.len() < MODEL_MAGIC.len() + 1 + 8 + 4 {
        return Err(Error::ModelFormat(format!("truncated at byte {}", buf.len())));
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let mut cur = Cursor { buf: body, pos: MODEL_MAGIC.len() };
    let tag = cur.take(1)?[0];
    let k = cur.u32()? as usize;
    let dim = cur.u32()? as usize;
    let per_comp = match tag {
        TAG_FULL => 2 * dim * dim,
        TAG_TOEPLITZ => 2 * dim,
        other => return Err(Error::ModelFormat(format!("unknown structure tag {other}"))),
    } as u64;
    let elements = k as u64 * (1 + 2 * dim as u64 + per_comp);
    if elements > MAX_ELEMENTS || body.len() as u64 != cur.pos as u64 + 8 * elements {
        return Err(Error::ModelFormat(format!(
            "size mismatch: header declares K={k}, dim={dim} but file has {} bytes",
            buf.len()
        )));
    }
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let weights = (0..k).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
    let means = (0..k)
        .map(|_| (0..dim).map(|_| cur.c64()).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let covariances = if tag == TAG_FULL {
        let mut covs = Vec::with_capacity(k);
        for _ in 0..k {
            let mut m = DMatrix::zeros(dim, dim);
            for i in 0..dim {
                for j in 0..dim {
                    m[(i, j)] = cur.c64()?;
                }
            }
            covs.push(HermitianMatrix::new(m)?);
        }
        Covariances::Full(covs)
    } else {
        Covariances::Toeplitz(
            (0..k)
                .map(|_| (0..2 * dim).map(|_| cur.f64()).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?,
        )
    };
    GmmModel::new(weights, means, covariances)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GmmModel> {
    read_model(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::tests::random_model;
    use crate::gmm::Structure;

    fn toeplitz_model(k: usize, dim: usize) -> GmmModel {
        let specs = (0..k)
            .map(|j| (0..2 * dim).map(|i| 1.0 + ((i * 7 + j) % 5) as f64 * 0.1).collect())
            .collect();
        let means = (0..k).map(|j| vec![Complex64::new(j as f64, -0.5); dim]).collect();
        GmmModel::new(vec![1.0 / k as f64; k], means, Covariances::Toeplitz(specs)).unwrap()
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        for model in [random_model(3, 5, 11), toeplitz_model(4, 6)] {
            let bytes = model_bytes(&model);
            let back = read_model(&bytes[..]).unwrap();
            assert_eq!(model_bytes(&back), bytes);
            assert_eq!(back.structure(), model.structure());
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gmm");
        let model = random_model(2, 3, 1);
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }

    #[test]
    fn toeplitz_files_are_smaller() {
        let (k, dim) = (128, 20);
        let full_cov = HermitianMatrix::identity(dim);
        let full = GmmModel::new(
            vec![1.0 / k as f64; k],
            vec![vec![Complex64::new(0.0, 0.0); dim]; k],
            Covariances::Full(vec![full_cov; k]),
        )
        .unwrap();
        let toep = toeplitz_model(k, dim);
        assert_eq!(toep.structure(), Structure::Toeplitz);
        let (a, b) = (model_bytes(&full).len() as f64, model_bytes(&toep).len() as f64);
        // covariance payloads are 2 dim^2 vs 2 dim values per component
        assert!(a / b > 5.0, "ratio {}", a / b);
    }

    #[test]
    fn detects_corruption() {
        let mut bytes = model_bytes(&random_model(2, 3, 2));
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(read_model(&bytes[..]), Err(Error::Checksum { .. })));
    }

    #[test]
    fn detects_truncation_and_bad_headers() {
        let bytes = model_bytes(&random_model(2, 3, 3));
        for cut in [0, 4, 10, bytes.len() - 1] {
            assert!(matches!(read_model(&bytes[..cut]), Err(Error::ModelFormat(_))), "cut {cut}");
        }
        let mut v = bytes.clone();
        v[5] = 9;
        let err = read_model(&v[..]).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
        let mut v = bytes.clone();
        v[6] = 7;
        assert!(matches!(read_model(&v[..]), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn rejects_invalid_contents_with_valid_checksum() {
        let model = random_model(2, 2, 4);
        let mut bytes = model_bytes(&model);
        bytes.truncate(bytes.len() - 4);
        // first weight -> 5.0
        bytes[15..23].copy_from_slice(&5.0f64.to_le_bytes());
        let crc = crc32fast::hash(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(read_model(&bytes[..]), Err(Error::InvalidArgument(_))));
    }
}
