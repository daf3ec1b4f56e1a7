//! Grayscale frame export: binary PGM with min-max normalization and a JSON
//! sidecar recording the normalization bounds.

use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::fields::CenteredField;

/// Write a 2D field (or a 1D field as a single row) as binary PGM. Rows run
/// top-down with the second axis increasing upward, so index (i, j) maps to
/// column i, row (height - 1 - j).
pub fn write_pgm(path: impl AsRef<Path>, f: &CenteredField) -> Result<()> {
    let (w, h) = match f.spec().rank() {
        1 => (f.spec().dims()[0], 1),
        _ => (f.spec().dims()[0], f.spec().dims()[1]),
    };
    let lo = f.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = f.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let mut bytes = Vec::with_capacity(w * h);
    for row in 0..h {
        let j = h - 1 - row;
        for i in 0..w {
            let v = if f.spec().rank() == 1 {
                f.data()[i]
            } else {
                f.at2(i, j)
            };
            let b = if range > 0.0 {
                ((v - lo) / range * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            bytes.push(b);
        }
    }
    let mut file = std::fs::File::create(path.as_ref())?;
    write!(file, "P5\n{w} {h}\n255\n")?;
    file.write_all(&bytes)?;

    let sidecar = path.as_ref().with_extension("bounds.json");
    let meta = serde_json::json!({ "min": lo, "max": hi });
    std::fs::write(sidecar, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Read back the normalization bounds of an exported frame.
pub fn read_bounds(pgm_path: impl AsRef<Path>) -> Result<(f64, f64)> {
    let sidecar = pgm_path.as_ref().with_extension("bounds.json");
    let text = std::fs::read_to_string(sidecar)?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    Ok((v["min"].as_f64().unwrap_or(0.0), v["max"].as_f64().unwrap_or(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridSpec;
    use crate::testutil::seeded_centered;

    #[test]
    fn header_is_exact_and_constant_fields_are_uniform() {
        let dir = std::env::temp_dir().join("pdectl_pgm_test");
        std::fs::create_dir_all(&dir).unwrap();
        let g = GridSpec::unit(&[6, 4]).unwrap();
        let f = CenteredField::constant(&g, 3.0);
        let path = dir.join("c.pgm");
        write_pgm(&path, &f).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header = b"P5\n6 4\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert!(bytes[header.len()..].iter().all(|&b| b == bytes[header.len()]));
        assert_eq!(bytes.len(), header.len() + 24);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn bounds_recover_field_extrema() {
        let dir = std::env::temp_dir().join("pdectl_pgm_bounds");
        std::fs::create_dir_all(&dir).unwrap();
        let g = GridSpec::unit(&[8, 8]).unwrap();
        let f = seeded_centered(&g, 9);
        let path = dir.join("r.pgm");
        write_pgm(&path, &f).unwrap();
        let (lo, hi) = read_bounds(&path).unwrap();
        let want_lo = f.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let want_hi = f.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(lo, want_lo);
        assert_eq!(hi, want_hi);
        // Pixel 255 maps back to the max, pixel 0 to the min.
        let bytes = std::fs::read(&path).unwrap();
        let data = &bytes[b"P5\n8 8\n255\n".len()..];
        assert!(data.iter().any(|&b| b == 255));
        assert!(data.iter().any(|&b| b == 0));
        std::fs::remove_dir_all(&dir).ok();
    }
}
