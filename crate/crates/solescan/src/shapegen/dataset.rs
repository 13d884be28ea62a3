//! Footoid dataset generation and the on-disk layout:
//! `sample_####/mesh.ply`, `sample_####/params.txt`, `split.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::ply;
use crate::rng::Rng;
use crate::shapegen::basis::{synthesize, FootoidParams, FootoidSample, GENERATIVE_MODES, MODE_NAMES};

/// Draw `n` footoids with coefficients i.i.d. standard normal truncated
/// at +-3 (redrawn on overflow), scale fixed at 1.
pub fn sample_dataset(n: usize, seed: u64) -> Result<Vec<FootoidSample>> {
    if n == 0 {
        return Err(Error::InvalidInput("dataset size must be >= 1".into()));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let w: Vec<f64> = (0..GENERATIVE_MODES)
            .map(|_| loop {
                let g = rng.gaussian();
                if g.abs() <= 3.0 {
                    break g;
                }
            })
            .collect();
        let params = FootoidParams::new(w, 1.0)?;
        out.push(synthesize(&params)?);
    }
    Ok(out)
}

/// 80/20 split by index order: the first 80% train, the rest test.
pub fn split_80_20(n: usize) -> (Vec<usize>, Vec<usize>) {
    let n_train = (n * 8) / 10;
    ((0..n_train).collect(), (n_train..n).collect())
}

fn sample_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("sample_{i:04}"))
}

pub fn write_dataset(samples: &[FootoidSample], root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for (i, sample) in samples.iter().enumerate() {
        let dir = sample_dir(root, i);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        ply::write_mesh(
            &sample.mesh,
            dir.join("mesh.ply"),
            ply::PlyFormat::BinaryLittleEndian,
        )?;
        let mut params = String::new();
        for (name, w) in MODE_NAMES.iter().zip(sample.params.coefficients()) {
            params.push_str(&format!("w.{name}={w}\n"));
        }
        params.push_str(&format!("scale={}\n", sample.params.scale()));
        let ppath = dir.join("params.txt");
        fs::write(&ppath, params).map_err(|e| Error::io(&ppath, e))?;
    }
    let (train, test) = split_80_20(samples.len());
    let mut split = String::new();
    for i in train {
        split.push_str(&format!("train sample_{i:04}\n"));
    }
    for i in test {
        split.push_str(&format!("test sample_{i:04}\n"));
    }
    let spath = root.join("split.txt");
    fs::write(&spath, split).map_err(|e| Error::io(&spath, e))
}

/// Names of the train/test sample directories recorded in `split.txt`.
pub fn read_split(root: impl AsRef<Path>) -> Result<(Vec<String>, Vec<String>)> {
    let root = root.as_ref();
    let spath = root.join("split.txt");
    let text = fs::read_to_string(&spath).map_err(|e| Error::io(&spath, e))?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut it = line.split_whitespace();
        match (it.next(), it.next()) {
            (Some("train"), Some(name)) => train.push(name.to_string()),
            (Some("test"), Some(name)) => test.push(name.to_string()),
            _ => {
                return Err(Error::Parse {
                    path: spath,
                    location: format!("line {}", i + 1),
                    message: "expected '<train|test> <sample_dir>'".into(),
                })
            }
        }
    }
    Ok((train, test))
}

pub fn read_sample_mesh(root: impl AsRef<Path>, name: &str) -> Result<crate::geom::TriangleMesh> {
    ply::read_mesh(root.as_ref().join(name).join("mesh.ply"))
}

pub fn read_sample_params(root: impl AsRef<Path>, name: &str) -> Result<FootoidParams> {
    let path = root.as_ref().join(name).join("params.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = vec![f64::NAN; GENERATIVE_MODES];
    let mut scale = 1.0;
    for (i, line) in text.lines().enumerate() {
        let perr = |msg: String| Error::Parse {
            path: path.clone(),
            location: format!("line {}", i + 1),
            message: msg,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| perr("expected key=value".into()))?;
        let value: f64 = value.parse().map_err(|e: std::num::ParseFloatError| perr(e.to_string()))?;
        if key == "scale" {
            scale = value;
        } else if let Some(name) = key.strip_prefix("w.") {
            let k = MODE_NAMES
                .iter()
                .position(|m| *m == name)
                .ok_or_else(|| perr(format!("unknown mode '{name}'")))?;
            w[k] = value;
        } else {
            return Err(perr(format!("unknown key '{key}'")));
        }
    }
    if w.iter().any(|v| v.is_nan()) {
        return Err(Error::Parse {
            path,
            location: "end".into(),
            message: "missing coefficients".into(),
        });
    }
    FootoidParams::new(w, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_coefficient_draws() {
        let a = sample_dataset(8, 42).unwrap();
        let b = sample_dataset(8, 42).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.params.coefficients(), y.params.coefficients());
        }
        let c = sample_dataset(8, 43).unwrap();
        assert_ne!(
            a[0].params.coefficients(),
            c[0].params.coefficients()
        );
    }

    #[test]
    fn coefficients_are_roughly_centered() {
        let samples = sample_dataset(200, 7).unwrap();
        for k in 0..GENERATIVE_MODES {
            let mean: f64 = samples
                .iter()
                .map(|s| s.params.coefficients()[k])
                .sum::<f64>()
                / samples.len() as f64;
            assert!(mean.abs() < 0.2, "mode {k} mean {mean}");
        }
    }

    #[test]
    fn all_samples_are_valid_shapes() {
        for s in sample_dataset(40, 3).unwrap() {
            assert!(s.mesh.is_watertight());
            assert!(s.params.coefficients().iter().all(|w| w.abs() <= 3.0));
        }
    }

    #[test]
    fn split_follows_80_20() {
        let (train, test) = split_80_20(50);
        assert_eq!(train.len(), 40);
        assert_eq!(test.len(), 10);
    }

    #[test]
    fn dataset_round_trip() {
        let samples = sample_dataset(5, 11).unwrap();
        let root = std::env::temp_dir().join(format!("solescan_ds_{}", std::process::id()));
        let _ = fs::remove_dir_all(&root);
        write_dataset(&samples, &root).unwrap();
        let (train, test) = read_split(&root).unwrap();
        assert_eq!(train.len(), 4);
        assert_eq!(test.len(), 1);
        let mesh = read_sample_mesh(&root, &train[0]).unwrap();
        assert_eq!(mesh.vertex_count(), samples[0].mesh.vertex_count());
        let params = read_sample_params(&root, &train[0]).unwrap();
        for (a, b) in params
            .coefficients()
            .iter()
            .zip(samples[0].params.coefficients())
        {
            assert!((a - b).abs() < 1e-15);
        }
        fs::remove_dir_all(&root).ok();
    }
}
