//! DPM1 depth-map container: 16-byte header (magic "DPM1", u32 width,
//! u32 height, u32 reserved), then row-major float32 meters, little-endian.
//! NaN marks invalid pixels.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scanner::DepthMap;

const MAGIC: &[u8; 4] = b"DPM1";

pub fn write_depth_map(map: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(16 + map.depth.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&map.width.to_le_bytes());
    out.extend_from_slice(&map.height.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &d in &map.depth {
        out.extend_from_slice(&(d as f32).to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_depth_map(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let parse = |loc: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        location: format!("byte {loc}"),
        message: msg.to_string(),
    };
    if bytes.len() < 16 {
        return Err(parse(0, "file shorter than the 16-byte header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(parse(0, "bad magic, expected DPM1"));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let expected = 16 + (width as usize) * (height as usize) * 4;
    if bytes.len() != expected {
        return Err(parse(
            bytes.len().min(expected),
            &format!("expected {expected} bytes total, found {}", bytes.len()),
        ));
    }
    let depth = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    DepthMap::new(width, height, depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("solescan_dpm_{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_preserves_nan_pattern() {
        let map = DepthMap::new(3, 2, vec![1.0, f64::NAN, 0.5, 2.25, f64::NAN, 3.5]).unwrap();
        let p = tmp("rt.dpm");
        write_depth_map(&map, &p).unwrap();
        let back = read_depth_map(&p).unwrap();
        assert_eq!(back.width, 3);
        assert_eq!(back.height, 2);
        for (a, b) in map.depth.iter().zip(back.depth.iter()) {
            assert!(a.is_nan() == b.is_nan());
            if !a.is_nan() {
                assert_eq!(*a as f32, *b as f32);
            }
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let p = tmp("bad.dpm");
        fs::write(&p, b"NOPE____________").unwrap();
        assert!(matches!(read_depth_map(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn truncation_rejected() {
        let map = DepthMap::new(4, 4, vec![1.0; 16]).unwrap();
        let p = tmp("trunc.dpm");
        write_depth_map(&map, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_depth_map(&p), Err(Error::Parse { .. })));
    }
}
