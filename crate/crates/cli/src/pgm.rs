//! Binary (P5) portable graymap output for activation maps.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use convnet_core::error::Result;
use convnet_core::volume::Volume;

/// Writes `pixels` (row-major, top row first) as a binary PGM with header
/// `P5 <width> <height> 255`.
pub fn write(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    assert_eq!(pixels.len(), width * height);
    let mut file = File::create(path)?;
    write!(file, "P5\n{width} {height}\n255\n")?;
    file.write_all(pixels)?;
    Ok(())
}

/// Min-max scales depth slice `d` of a volume to `[0, 255]`. A constant
/// slice maps to all zeros.
pub fn scale_slice(volume: &Volume, d: usize) -> Vec<u8> {
    let (h, w) = (volume.height(), volume.width());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for y in 0..h {
        for x in 0..w {
            let v = volume.get(x, y, d);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi <= lo {
        return vec![0; w * h];
    }
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let v = volume.get(x, y, d);
            pixels.push(((v - lo) / (hi - lo) * 255.0).round() as u8);
        }
    }
    pixels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_slice_maps_to_zero() {
        let v = Volume::new(3, 2, 1, 4.2).unwrap();
        assert_eq!(scale_slice(&v, 0), vec![0; 6]);
    }

    #[test]
    fn scaling_hits_both_endpoints() {
        let v = Volume::from_vec(1, 3, 1, vec![-1.0, 0.0, 3.0]).unwrap();
        assert_eq!(scale_slice(&v, 0), vec![0, 64, 255]);
    }

    #[test]
    fn header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        write(&path, 3, 2, &[0, 1, 2, 3, 4, 5]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(bytes.len(), "P5\n3 2\n255\n".len() + 6);
    }
}
