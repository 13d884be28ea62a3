//! Layered pipeline configuration: one plain-text key=value document
//! covering every module's defaults. Unknown keys are rejected; CLI flags
//! override file values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::align::{CanonicalizeOptions, IcpParams};
use crate::completion::{CompletionConfig, TrainOptions};
use crate::error::{Error, Result};
use crate::meshing::PoissonParams;
use crate::scanner::{RigSpec, ScanNoise};
use crate::shapegen::FitOptions;

macro_rules! config_fields {
    ($(($field:ident, $key:literal, $ty:ty, $default:expr, $doc:literal)),+ $(,)?) => {
        /// Every tunable of the pipeline, with defaults.
        #[derive(Clone, Debug, PartialEq)]
        pub struct PipelineConfig {
            $(#[doc = $doc] pub $field: $ty,)+
        }

        impl Default for PipelineConfig {
            fn default() -> Self {
                PipelineConfig { $($field: $default,)+ }
            }
        }

        impl PipelineConfig {
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => {
                        self.$field = value.parse::<$ty>().map_err(|_| {
                            Error::Config(format!("bad value '{value}' for key '{key}'"))
                        })?;
                    })+
                    _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
                }
                Ok(())
            }

            /// Sorted key=value lines of the effective configuration.
            pub fn entries(&self) -> BTreeMap<String, String> {
                let mut m = BTreeMap::new();
                $(m.insert($key.to_string(), self.$field.to_string());)+
                m
            }
        }
    };
}

config_fields![
    (scan_views, "scan.views", usize, 8, "cameras per scan"),
    (scan_resolution, "scan.resolution", u32, 256, "depth image width/height"),
    (scan_radius, "scan.radius", f64, 0.6, "camera distance from the target (m)"),
    (scan_focal, "scan.focal", f64, 340.0, "focal length in pixels"),
    (scan_budget, "scan.budget", usize, 4096, "points kept per view"),
    (scan_theta_max, "scan.theta_max", f64, 90.0, "max camera angle from +z (deg)"),
    (scan_elevation_lo, "scan.elevation_lo", f64, -80.0, "min camera elevation (deg)"),
    (scan_elevation_hi, "scan.elevation_hi", f64, 80.0, "max camera elevation (deg)"),
    (noise_depth_sigma, "noise.depth_sigma", f64, 0.0, "per-pixel depth noise (m)"),
    (noise_dropout, "noise.dropout", f64, 0.0, "per-pixel dropout probability"),
    (noise_vpp_rot_deg, "noise.vpp_rot_deg", f64, 0.0, "VPP rotation noise (deg)"),
    (noise_vpp_trans, "noise.vpp_trans", f64, 0.0, "VPP translation noise (m)"),
    (align_icp_iters, "align.icp_iters", usize, 200, "max ICP iterations"),
    (align_icp_tol, "align.icp_tol", f64, 1e-8, "ICP RMS convergence tolerance (m)"),
    (align_trim, "align.trim", f64, 0.2, "ICP trim fraction"),
    (
        align_max_corr_dist,
        "align.max_corr_dist",
        f64,
        f64::INFINITY,
        "ICP correspondence distance bound (m)"
    ),
    (align_occlusion_frac, "align.occlusion_frac", f64, 0.02, "occlusion threshold fraction"),
    (align_incidence_deg, "align.incidence_deg", f64, 45.0, "landmark incidence cutoff (deg)"),
    (align_surface_samples, "align.surface_samples", usize, 50_000, "ICP target samples"),
    (completion_n_in, "completion.n_in", usize, 1024, "network input points"),
    (completion_n_scaffold, "completion.n_scaffold", usize, 128, "scaffold points"),
    (completion_n_gen_coarse, "completion.n_gen_coarse", usize, 128, "generated coarse points"),
    (completion_n_fine, "completion.n_fine", usize, 2048, "fine output points"),
    (completion_latent, "completion.latent_dim", usize, 128, "token width"),
    (completion_heads, "completion.n_heads", usize, 4, "attention heads"),
    (completion_enc_blocks, "completion.n_encoder_blocks", usize, 2, "encoder blocks"),
    (completion_refine_blocks, "completion.n_refine_blocks", usize, 2, "refinement blocks"),
    (train_epochs, "train.epochs", usize, 20, "training epochs"),
    (train_batch, "train.batch", usize, 4, "batch size"),
    (train_lr, "train.lr", f64, 1e-3, "Adam learning rate"),
    (train_lr_floor, "train.lr_floor", f64, 0.1, "cosine decay floor fraction"),
    (train_augments, "train.augments", usize, 10, "spatial transforms per mesh"),
    (train_scans, "train.scans_per_augment", usize, 5, "virtual scans per transform"),
    (train_rot_bound_deg, "train.rot_bound_deg", f64, 20.0, "augmentation rotation bound (deg)"),
    (
        train_theta_list,
        "train.theta_list",
        ThetaList,
        ThetaList(vec![60.0, 90.0, 120.0, 180.0]),
        "scan angles cycled during training (deg)"
    ),
    (mesh_resolution, "mesh.resolution", usize, 64, "poisson grid resolution"),
    (mesh_alpha, "mesh.alpha", f64, 4.0, "poisson screening weight"),
    (mesh_padding, "mesh.padding", f64, 0.1, "poisson bounding padding"),
    (mesh_normals_k, "mesh.normals_k", usize, 16, "neighbors for normal estimation"),
    (fit_steps, "fit.steps", usize, 400, "PCA fit Adam steps"),
    (fit_lr, "fit.lr", f64, 0.01, "PCA fit learning rate"),
    (fit_samples, "fit.samples", usize, 2048, "PCA fit surface samples"),
    (fit_modes, "fit.modes", usize, 8, "PCA modes"),
    (eval_gt_samples, "eval.gt_samples", usize, 16384, "surface samples when a mesh is evaluated"),
];

/// Comma-separated list of angles, parsed from config text.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaList(pub Vec<f64>);

impl std::str::FromStr for ThetaList {
    type Err = std::num::ParseFloatError;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let v = s
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(ThetaList(v))
    }
}

impl std::fmt::Display for ThetaList {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl PipelineConfig {
    /// Parse-validate a config file; every key must be known.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = PipelineConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key=value", path.display(), i + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn rig_for(&self, target: nalgebra::Point3<f64>, theta_max: f64) -> RigSpec {
        RigSpec {
            n_views: self.scan_views,
            radius: self.scan_radius,
            elevation_range_deg: (self.scan_elevation_lo, self.scan_elevation_hi),
            azimuth_range_deg: (0.0, 360.0),
            target,
            max_view_angle_deg: theta_max,
            image_width: self.scan_resolution,
            image_height: self.scan_resolution,
            focal_px: self.scan_focal,
            per_view_budget: self.scan_budget,
        }
    }

    pub fn noise_with_seed(&self, seed: u64) -> ScanNoise {
        ScanNoise {
            depth_sigma: self.noise_depth_sigma,
            dropout_rate: self.noise_dropout,
            vpp_rot_sigma_deg: self.noise_vpp_rot_deg,
            vpp_trans_sigma: self.noise_vpp_trans,
            seed,
        }
    }

    pub fn icp_params(&self) -> IcpParams {
        IcpParams {
            max_iterations: self.align_icp_iters,
            convergence_tol: self.align_icp_tol,
            trim_fraction: self.align_trim,
            max_correspondence_dist: self.align_max_corr_dist,
        }
    }

    pub fn canonicalize_options(&self, seed: u64) -> CanonicalizeOptions {
        CanonicalizeOptions {
            occlusion_frac: self.align_occlusion_frac,
            surface_samples: self.align_surface_samples,
            seed,
            max_incidence_deg: self.align_incidence_deg,
        }
    }

    pub fn completion_config(&self, seed: u64) -> CompletionConfig {
        CompletionConfig {
            n_in: self.completion_n_in,
            n_scaffold: self.completion_n_scaffold,
            n_gen_coarse: self.completion_n_gen_coarse,
            n_fine: self.completion_n_fine,
            latent_dim: self.completion_latent,
            n_heads: self.completion_heads,
            n_encoder_blocks: self.completion_enc_blocks,
            n_refine_blocks: self.completion_refine_blocks,
            seed,
        }
    }

    pub fn train_options(&self, seed: u64, deterministic: bool) -> TrainOptions {
        TrainOptions {
            epochs: self.train_epochs,
            batch_size: self.train_batch,
            lr: self.train_lr,
            lr_floor_frac: self.train_lr_floor,
            seed,
            deterministic,
            ..Default::default()
        }
    }

    pub fn poisson_params(&self) -> PoissonParams {
        PoissonParams {
            resolution: self.mesh_resolution,
            screening_alpha: self.mesh_alpha,
            padding: self.mesh_padding,
            ..Default::default()
        }
    }

    pub fn fit_options(&self, seed: u64) -> FitOptions {
        FitOptions {
            steps: self.fit_steps,
            lr: self.fit_lr,
            n_surface_samples: self.fit_samples,
            seed,
            ..Default::default()
        }
    }
}
