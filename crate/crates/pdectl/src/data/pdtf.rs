//! PDTF, the crate's binary tensor file format, and the bundle container
//! used for parameter checkpoints.
//!
//! A tensor file is `"PDTF0001"` (8 ASCII bytes), the rank as unsigned
//! 32-bit little-endian, each dimension as unsigned 64-bit little-endian,
//! then the payload as row-major IEEE-754 binary64 little-endian. A bundle
//! is a little-endian u64 header length, a JSON header, then the named
//! tensors back to back, each in full PDTF form.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::fields::{CenteredField, GridSpec, StaggeredField};

const MAGIC: &[u8; 8] = b"PDTF0001";

pub fn write_tensor_to(w: &mut impl Write, dims: &[u64], data: &[f64]) -> Result<()> {
    let n: u64 = dims.iter().product();
    if n != data.len() as u64 {
        return Err(Error::ShapeMismatch(format!(
            "dims {dims:?} need {n} values, got {}",
            data.len()
        )));
    }
    w.write_all(MAGIC)?;
    w.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in dims {
        w.write_all(&d.to_le_bytes())?;
    }
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor_from(r: &mut impl Read) -> Result<(Vec<u64>, Vec<f64>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {MAGIC:?}",
            magic
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let rank = u32::from_le_bytes(b4) as usize;
    if rank > 8 {
        return Err(Error::Format(format!("implausible rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    let mut b8 = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut b8)?;
        dims.push(u64::from_le_bytes(b8));
    }
    let n: u64 = dims.iter().product();
    let mut data = Vec::with_capacity(n as usize);
    for _ in 0..n {
        r.read_exact(&mut b8)?;
        data.push(f64::from_le_bytes(b8));
    }
    Ok((dims, data))
}

pub fn save_tensor(path: impl AsRef<Path>, dims: &[u64], data: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor_to(&mut w, dims, data)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<(Vec<u64>, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    read_tensor_from(&mut r)
}

pub fn save_centered(path: impl AsRef<Path>, f: &CenteredField) -> Result<()> {
    let dims: Vec<u64> = f.spec().dims().iter().map(|&d| d as u64).collect();
    save_tensor(path, &dims, f.data())
}

pub fn load_centered(path: impl AsRef<Path>, spec: &GridSpec) -> Result<CenteredField> {
    let (dims, data) = load_tensor(path)?;
    let want: Vec<u64> = spec.dims().iter().map(|&d| d as u64).collect();
    if dims != want {
        return Err(Error::ShapeMismatch(format!(
            "file dims {dims:?} do not match grid {want:?}"
        )));
    }
    CenteredField::new(spec.clone(), data)
}

/// Save one staggered component (its own face-sampled dims).
pub fn save_staggered(path_prefix: impl AsRef<Path>, v: &StaggeredField) -> Result<Vec<String>> {
    let prefix = path_prefix.as_ref();
    let mut written = Vec::new();
    for k in 0..v.spec().rank() {
        let mut dims: Vec<u64> = v.spec().dims().iter().map(|&d| d as u64).collect();
        dims[k] += 1;
        let path = prefix.with_extension(format!("c{k}.pdtf"));
        save_tensor(&path, &dims, v.component(k))?;
        written.push(path.to_string_lossy().into_owned());
    }
    Ok(written)
}

pub fn load_staggered(path_prefix: impl AsRef<Path>, spec: &GridSpec) -> Result<StaggeredField> {
    let prefix = path_prefix.as_ref();
    let mut components = Vec::new();
    for k in 0..spec.rank() {
        let path = prefix.with_extension(format!("c{k}.pdtf"));
        let (_, data) = load_tensor(&path)?;
        components.push(data);
    }
    StaggeredField::new(spec.clone(), components)
}

/// Bundle header: array names in storage order plus free-form metadata.
#[derive(serde::Serialize, serde::Deserialize)]
struct BundleHeader {
    arrays: Vec<String>,
    meta: serde_json::Value,
}

pub fn save_bundle(
    path: impl AsRef<Path>,
    named: &[(String, Vec<u64>, Vec<f64>)],
    meta: serde_json::Value,
) -> Result<()> {
    let header = BundleHeader {
        arrays: named.iter().map(|(n, _, _)| n.clone()).collect(),
        meta,
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for (_, dims, data) in named {
        write_tensor_to(&mut w, dims, data)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_bundle(
    path: impl AsRef<Path>,
) -> Result<(Vec<(String, Vec<u64>, Vec<f64>)>, serde_json::Value)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8) as usize;
    if len > 1 << 30 {
        return Err(Error::Format("implausible bundle header size".into()));
    }
    let mut header_bytes = vec![0u8; len];
    r.read_exact(&mut header_bytes)?;
    let header: BundleHeader = serde_json::from_slice(&header_bytes)?;
    let mut named = Vec::new();
    for name in header.arrays {
        let (dims, data) = read_tensor_from(&mut r)?;
        named.push((name, dims, data));
    }
    Ok((named, header.meta))
}

/// Serialize a parameter set with its metadata.
pub fn save_params(
    path: impl AsRef<Path>,
    params: &crate::nets::ParamSet,
    meta: serde_json::Value,
) -> Result<()> {
    let named: Vec<(String, Vec<u64>, Vec<f64>)> = params
        .iter()
        .map(|(k, t)| {
            (
                k.clone(),
                t.dims().iter().map(|&d| d as u64).collect(),
                t.data().to_vec(),
            )
        })
        .collect();
    save_bundle(path, &named, meta)
}

pub fn load_params(path: impl AsRef<Path>) -> Result<(crate::nets::ParamSet, serde_json::Value)> {
    let (named, meta) = load_bundle(path)?;
    let mut params = crate::nets::ParamSet::new();
    for (name, dims, data) in named {
        let dims: Vec<usize> = dims.iter().map(|&d| d as usize).collect();
        params.insert(name, Tensor::new(dims, data)?);
    }
    Ok((params, meta))
}

/// Hex-encoded SHA-256 of a file's bytes.
pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    let mut r = BufReader::new(File::open(path)?);
    let mut buf = [0u8; 8192];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::rng;
    use rand::RngExt;

    #[test]
    fn tensor_round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("pdtf_test_rt");
        std::fs::create_dir_all(&dir).unwrap();
        let mut r = rng(1);
        for dims in [vec![7u64], vec![5, 9], vec![3, 4, 6], vec![256]] {
            let n: u64 = dims.iter().product();
            let data: Vec<f64> = (0..n)
                .map(|_| f64::from_bits(r.random::<u64>() & 0x7fcf_ffff_ffff_ffff))
                .collect();
            let path = dir.join(format!("t{}.pdtf", dims.len()));
            save_tensor(&path, &dims, &data).unwrap();
            let (d2, v2) = load_tensor(&path).unwrap();
            assert_eq!(d2, dims);
            assert_eq!(
                v2.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn rejects_corrupt_magic() {
        let dir = std::env::temp_dir().join("pdtf_test_magic");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.pdtf");
        std::fs::write(&path, b"NOTPDTF0rest").unwrap();
        assert!(matches!(load_tensor(&path), Err(Error::Format(_))));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bundle_round_trip_preserves_names_and_meta() {
        let dir = std::env::temp_dir().join("pdtf_test_bundle");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ck.pdtfb");
        let named = vec![
            ("b.w".to_string(), vec![2u64, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            ("a.w".to_string(), vec![2u64], vec![-1.0, 0.5]),
        ];
        let meta = serde_json::json!({"iteration": 42});
        save_bundle(&path, &named, meta.clone()).unwrap();
        let (got, meta2) = load_bundle(&path).unwrap();
        assert_eq!(got, named);
        assert_eq!(meta2, meta);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn checksums_are_stable() {
        let dir = std::env::temp_dir().join("pdtf_test_sha");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("x.bin");
        std::fs::write(&path, b"hello world").unwrap();
        assert_eq!(
            file_sha256(&path).unwrap(),
            "b94d27b9934d3e08a52e52d7da7dabfac484efe37a5380ee9088f7ace2efcde9"
        );
        std::fs::remove_dir_all(&dir).ok();
    }
}
