use std::fs;
use std::path::Path;

use super::FeatureSequence;
use crate::error::{Error, Result};

/// Binary matrix: `T` and `D` as little-endian u32, then `T·D` little-endian
/// f64 values in row-major order.
pub fn write_features(path: &Path, f: &FeatureSequence) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + f.as_slice().len() * 8);
    bytes.extend_from_slice(&(f.num_frames() as u32).to_le_bytes());
    bytes.extend_from_slice(&(f.dim() as u32).to_le_bytes());
    for v in f.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Read a matrix written by [`write_features`]. The frame shift is not
/// stored; `frame_shift_ms` is supplied by the caller.
pub fn read_features(path: &Path, frame_shift_ms: u32) -> Result<FeatureSequence> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 {
        return Err(Error::Parse(format!("{}: truncated header", path.display())));
    }
    let t = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    if bytes.len() != 8 + t * d * 8 {
        return Err(Error::Parse(format!("{}: expected {t}x{d} matrix", path.display())));
    }
    let data = bytes[8..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    FeatureSequence::new(data, d, frame_shift_ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_file_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.feats");
        let f = FeatureSequence::new(vec![1.5, -2.0, 3.25, 0.1, 0.2, 0.3], 3, 30).unwrap();
        write_features(&p, &f).unwrap();
        let raw = std::fs::read(&p).unwrap();
        assert_eq!(&raw[0..4], &2u32.to_le_bytes());
        assert_eq!(&raw[4..8], &3u32.to_le_bytes());
        assert_eq!(&raw[8..16], &1.5f64.to_le_bytes());
        assert_eq!(read_features(&p, 30).unwrap(), f);
    }
}
