//! Portable binary array files (`.dar`).
//!
//! Layout, all little-endian, no padding or compression:
//!
//! ```text
//! bytes 0-3   magic "DARR"
//! byte  4     dtype: 1 = f32, 2 = f64, 3 = complex<f32>, 4 = complex<f64>
//! byte  5     rank r (<= 3)
//! next        r unsigned 32-bit dims
//! payload     row-major elements; complex stored as interleaved (re, im)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DARR";
pub const MAX_RANK: usize = 3;

/// An array loaded from or destined for a `.dar` file.
#[derive(Clone, Debug, PartialEq)]
pub enum DarArray {
    F32(ArrayD<f32>),
    F64(ArrayD<f64>),
    C64(ArrayD<Complex<f32>>),
    C128(ArrayD<Complex<f64>>),
}

impl DarArray {
    fn dtype_code(&self) -> u8 {
        match self {
            DarArray::F32(_) => 1,
            DarArray::F64(_) => 2,
            DarArray::C64(_) => 3,
            DarArray::C128(_) => 4,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            DarArray::F32(a) => a.shape(),
            DarArray::F64(a) => a.shape(),
            DarArray::C64(a) => a.shape(),
            DarArray::C128(a) => a.shape(),
        }
    }

    fn check_finite(&self) -> Result<()> {
        let ok = match self {
            DarArray::F32(a) => a.iter().all(|v| v.is_finite()),
            DarArray::F64(a) => a.iter().all(|v| v.is_finite()),
            DarArray::C64(a) => a.iter().all(|v| v.re.is_finite() && v.im.is_finite()),
            DarArray::C128(a) => a.iter().all(|v| v.re.is_finite() && v.im.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation("array contains non-finite values"))
        }
    }
}

fn write_scalars<W: Write, T: Copy, const N: usize>(
    w: &mut W,
    iter: impl Iterator<Item = T>,
    to_bytes: impl Fn(T) -> [u8; N],
) -> Result<()> {
    for v in iter {
        w.write_all(&to_bytes(v))?;
    }
    Ok(())
}

/// Save an array to `path`, creating parent directories as needed.
pub fn save_array(path: impl AsRef<Path>, array: &DarArray) -> Result<()> {
    let path = path.as_ref();
    array.check_finite()?;
    let shape = array.shape();
    if shape.len() > MAX_RANK {
        return Err(Error::Unsupported(format!(
            "rank {} arrays not supported (max {MAX_RANK})",
            shape.len()
        )));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[array.dtype_code(), shape.len() as u8])?;
    for &d in shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    match array {
        DarArray::F32(a) => write_scalars(&mut w, a.iter().copied(), |v| v.to_le_bytes())?,
        DarArray::F64(a) => write_scalars(&mut w, a.iter().copied(), |v| v.to_le_bytes())?,
        DarArray::C64(a) => {
            for c in a.iter() {
                w.write_all(&c.re.to_le_bytes())?;
                w.write_all(&c.im.to_le_bytes())?;
            }
        }
        DarArray::C128(a) => {
            for c in a.iter() {
                w.write_all(&c.re.to_le_bytes())?;
                w.write_all(&c.im.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or_format<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::format(format!("truncated file while reading {what}")))
}

/// Load an array previously written by [`save_array`].
pub fn load_array(path: impl AsRef<Path>) -> Result<DarArray> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let mut magic = [0u8; 4];
    read_exact_or_format(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::format("bad magic bytes (not a .dar file)"));
    }
    let mut hdr = [0u8; 2];
    read_exact_or_format(&mut r, &mut hdr, "header")?;
    let (dtype, rank) = (hdr[0], hdr[1] as usize);
    if rank > MAX_RANK {
        return Err(Error::Unsupported(format!("rank {rank} above {MAX_RANK}")));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        read_exact_or_format(&mut r, &mut b, "dims")?;
        dims.push(u32::from_le_bytes(b) as usize);
    }
    let numel: usize = dims.iter().product();
    let shape = IxDyn(&dims);

    fn read_vec<R: Read, T, const N: usize>(
        r: &mut R,
        n: usize,
        from: impl Fn([u8; N]) -> T,
    ) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(n);
        let mut b = [0u8; N];
        for _ in 0..n {
            read_exact_or_format(r, &mut b, "payload")?;
            out.push(from(b));
        }
        Ok(out)
    }

    let arr = match dtype {
        1 => DarArray::F32(
            ArrayD::from_shape_vec(shape, read_vec(&mut r, numel, f32::from_le_bytes)?)
                .map_err(|e| Error::format(e.to_string()))?,
        ),
        2 => DarArray::F64(
            ArrayD::from_shape_vec(shape, read_vec(&mut r, numel, f64::from_le_bytes)?)
                .map_err(|e| Error::format(e.to_string()))?,
        ),
        3 => {
            let raw = read_vec(&mut r, 2 * numel, f32::from_le_bytes)?;
            let v: Vec<_> = raw.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
            DarArray::C64(ArrayD::from_shape_vec(shape, v).map_err(|e| Error::format(e.to_string()))?)
        }
        4 => {
            let raw = read_vec(&mut r, 2 * numel, f64::from_le_bytes)?;
            let v: Vec<_> = raw.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect();
            DarArray::C128(ArrayD::from_shape_vec(shape, v).map_err(|e| Error::format(e.to_string()))?)
        }
        other => return Err(Error::format(format!("unknown dtype code {other}"))),
    };
    Ok(arr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2, Array3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_identity_matrix() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("eye.dar");
        let eye = Array2::<f64>::eye(2).into_dyn();
        save_array(&p, &DarArray::F64(eye.clone())).unwrap();
        assert_eq!(load_array(&p).unwrap(), DarArray::F64(eye));
    }

    #[test]
    fn round_trip_complex_field_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (name, arr) in [
            (
                "c64.dar",
                DarArray::C64(
                    Array2::from_shape_fn((8, 8), |_| Complex::new(rng.gen::<f32>(), rng.gen()))
                        .into_dyn(),
                ),
            ),
            (
                "c128.dar",
                DarArray::C128(
                    Array2::from_shape_fn((8, 8), |_| Complex::new(rng.gen::<f64>(), rng.gen()))
                        .into_dyn(),
                ),
            ),
            (
                "f32.dar",
                DarArray::F32(Array3::from_shape_fn((2, 3, 4), |_| rng.gen::<f32>()).into_dyn()),
            ),
        ] {
            let p = dir.path().join(name);
            save_array(&p, &arr).unwrap();
            assert_eq!(load_array(&p).unwrap(), arr);
        }
    }

    #[test]
    fn corrupted_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.dar");
        let a = Array1::from_vec(vec![1.0f32, 2.0]).into_dyn();
        save_array(&p, &DarArray::F32(a)).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_array(&p), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trunc.dar");
        let a = Array2::<f32>::zeros((4, 4)).into_dyn();
        save_array(&p, &DarArray::F32(a)).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(load_array(&p), Err(Error::Format(_))));
    }

    #[test]
    fn header_layout_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hdr.dar");
        let a = Array2::<f32>::zeros((2, 5)).into_dyn();
        save_array(&p, &DarArray::F32(a)).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[0..4], b"DARR");
        assert_eq!(bytes[4], 1); // f32
        assert_eq!(bytes[5], 2); // rank
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 5);
        assert_eq!(bytes.len(), 14 + 4 * 10);
    }
}
