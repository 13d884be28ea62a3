//! Implementations behind the `solescan` binary's subcommands. The binary
//! itself is a thin argument parser; everything that does work lives here
//! so library users can drive the same pipeline.

pub mod config;

pub use config::PipelineConfig;

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Point3;

use crate::align::{canonicalize, LandmarkSet};
use crate::completion::{complete, train, CompletionModel};
use crate::error::{Error, Result};
use crate::geom::{PointCloud, TriangleMesh};
use crate::io::{
    read_checkpoint, read_cloud_or_mesh, write_checkpoint, write_cloud, write_line_chart,
    write_mesh, write_metrics_csv, MetricsRow, PlyFormat, RunManifest,
};
use crate::metrics::{chamfer, hausdorff};
use crate::meshing::{estimate_normals, poisson_reconstruct};
use crate::rng::Rng;
use crate::scanner::{
    augment, random_sim3, read_scan_bundle, virtual_scan, AugmentConfig, ScanBundle,
};
use crate::shapegen::{
    build_pca, fit_pca, read_sample_mesh, read_sample_params, read_split, sample_dataset,
    template_landmarks, template_mesh, write_dataset, FootoidSample,
};

/// Shared command context: effective configuration plus execution mode.
pub struct Ctx {
    pub config: PipelineConfig,
    pub deterministic: bool,
}

impl Ctx {
    pub fn new(config: PipelineConfig, deterministic: bool) -> Self {
        Ctx {
            config,
            deterministic,
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn manifest_for(ctx: &Ctx, command: &str, seed: Option<u64>, started: Instant) -> RunManifest {
    let mut m = RunManifest::new(command);
    m.seed = seed;
    for (k, v) in ctx.config.entries() {
        m.param(k, v);
    }
    m.param("deterministic", ctx.deterministic);
    m.duration_seconds = started.elapsed().as_secs_f64();
    m
}

/// Load a PLY as a point cloud; meshes are surface-sampled.
fn load_as_cloud(path: &Path, samples: usize, seed: u64) -> Result<PointCloud> {
    let (cloud, faces) = read_cloud_or_mesh(path)?;
    if faces.is_empty() {
        Ok(cloud)
    } else {
        let mesh = TriangleMesh::new(cloud.points, faces)?;
        Ok(mesh.sample_surface(samples, seed))
    }
}

/// `gen-dataset`: synthesize footoids and the 80/20 split.
pub fn gen_dataset(ctx: &Ctx, n: usize, seed: u64, out_dir: &Path) -> Result<()> {
    let started = Instant::now();
    if n == 0 {
        return Err(Error::InvalidInput("dataset size must be >= 1".into()));
    }
    ensure_dir(out_dir)?;
    let samples = sample_dataset(n, seed)?;
    write_dataset(&samples, out_dir)?;

    let mut manifest = manifest_for(ctx, "gen-dataset", Some(seed), started);
    manifest.param("n", n);
    manifest.outputs.push(out_dir.join("split.txt"));
    manifest.write(out_dir.join("manifest.txt"))
}

/// `scan`: virtual-scan a mesh into a bundle directory.
#[allow(clippy::too_many_arguments)]
pub fn scan(
    ctx: &Ctx,
    mesh_path: &Path,
    theta_max: Option<f64>,
    scramble_seed: Option<u64>,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let started = Instant::now();
    let mesh = crate::io::read_mesh(mesh_path)?;
    let (lo, hi) = mesh.bounding_box();
    let target = Point3::from((lo.coords + hi.coords) / 2.0);
    let theta = theta_max.unwrap_or(ctx.config.scan_theta_max);
    let spec = ctx.config.rig_for(target, theta);
    let noise = ctx.config.noise_with_seed(seed);

    let scramble = scramble_seed.map(|s| {
        let mut rng = Rng::seed_from_u64(s);
        random_sim3(
            &mut rng,
            &AugmentConfig {
                rot_bound_deg: None,
                scale_range: (0.8, 1.25),
                shift_frac: 0.5,
            },
            mesh.bounding_diagonal(),
        )
    });
    let (cloud, views) = virtual_scan(&mesh, &spec, &noise, scramble.as_ref())?;
    ensure_dir(out_dir)?;
    crate::scanner::write_scan_bundle(&ScanBundle { cloud, views }, out_dir)?;

    let mut manifest = manifest_for(ctx, "scan", Some(seed), started);
    manifest.param("theta_max", theta);
    if let Some(s) = scramble_seed {
        manifest.param("scramble_seed", s);
    }
    manifest.inputs.push(mesh_path.to_path_buf());
    manifest.outputs.push(out_dir.join("scan.ply"));
    manifest.outputs.push(out_dir.join("cameras.txt"));
    manifest.write(out_dir.join("manifest.txt"))
}

/// `canonicalize`: align a scan bundle against the template.
pub fn canonicalize_cmd(
    ctx: &Ctx,
    bundle_dir: &Path,
    template_path: Option<&Path>,
    landmarks_path: Option<&Path>,
    out_cloud: &Path,
) -> Result<()> {
    let started = Instant::now();
    let bundle = read_scan_bundle(bundle_dir)?;
    let template = match template_path {
        Some(p) => crate::io::read_mesh(p)?,
        None => template_mesh(),
    };
    let landmarks = match landmarks_path {
        Some(p) => LandmarkSet::read(p)?,
        None => template_landmarks(),
    };
    let result = canonicalize(
        &template,
        &landmarks,
        &bundle.views,
        &bundle.cloud,
        &ctx.config.icp_params(),
        &ctx.config.canonicalize_options(0),
    )
    .map_err(|e| match e {
        Error::InsufficientLandmarks { got } => Error::InsufficientLandmarks { got },
        other => other,
    })?;

    if let Some(parent) = out_cloud.parent() {
        ensure_dir(parent)?;
    }
    write_cloud(&result.aligned, out_cloud, PlyFormat::BinaryLittleEndian)?;

    // Transform report next to the aligned cloud.
    let report_path = out_cloud.with_extension("report.txt");
    let mut report = String::new();
    let h = result.composed.to_homogeneous();
    report.push_str("composed_scan_to_canonical=\n");
    for r in 0..4 {
        report.push_str(&format!(
            "  {} {} {} {}\n",
            h[(r, 0)],
            h[(r, 1)],
            h[(r, 2)],
            h[(r, 3)]
        ));
    }
    report.push_str(&format!("similarity_scale={}\n", result.similarity.scale));
    report.push_str(&format!("icp_rms={}\n", result.icp_rms));
    report.push_str(&format!("icp_iterations={}\n", result.icp_iterations));
    for (i, (res, views)) in result
        .per_landmark_residual
        .iter()
        .zip(&result.views_used_per_landmark)
        .enumerate()
    {
        report.push_str(&format!(
            "landmark.{}={} residual={res} views={views}\n",
            i, landmarks.labels[i]
        ));
    }
    std::fs::write(&report_path, report).map_err(|e| Error::io(&report_path, e))?;

    let mut manifest = manifest_for(ctx, "canonicalize", None, started);
    manifest.inputs.push(bundle_dir.join("scan.ply"));
    manifest.outputs.push(out_cloud.to_path_buf());
    manifest.outputs.push(report_path);
    manifest.write(out_cloud.with_extension("manifest.txt"))
}

/// Training pairs from a dataset directory: per train mesh, a few spatial
/// augmentations, each scanned from angles cycling through the config
/// list. Partial clouds are thinned near the network input size.
pub fn build_training_pairs(
    ctx: &Ctx,
    dataset_dir: &Path,
    seed: u64,
) -> Result<Vec<(PointCloud, TriangleMesh)>> {
    let (train_names, _) = read_split(dataset_dir)?;
    if train_names.is_empty() {
        return Err(Error::InvalidInput("dataset has no training samples".into()));
    }
    let cfg = &ctx.config;
    let thetas = &cfg.train_theta_list.0;
    let aug_cfg = AugmentConfig {
        rot_bound_deg: Some(cfg.train_rot_bound_deg),
        scale_range: (0.9, 1.12),
        shift_frac: 0.05,
    };
    let mut pairs = Vec::new();
    for (mi, name) in train_names.iter().enumerate() {
        let mesh = read_sample_mesh(dataset_dir, name)?;
        let augments = augment(&mesh, cfg.train_augments, &aug_cfg, seed ^ (mi as u64) << 8)?;
        for (ai, (_, aug_mesh)) in augments.into_iter().enumerate() {
            for si in 0..cfg.train_scans {
                let theta = thetas[(ai * cfg.train_scans + si) % thetas.len().max(1)];
                let (lo, hi) = aug_mesh.bounding_box();
                let target = Point3::from((lo.coords + hi.coords) / 2.0);
                let mut spec = cfg.rig_for(target, theta);
                // Keep training scans light: the network resamples to
                // n_in anyway.
                spec.per_view_budget =
                    (2 * cfg.completion_n_in).div_ceil(spec.n_views.max(1));
                let scan_seed = seed
                    .wrapping_mul(0x9E3779B97F4A7C15)
                    .wrapping_add(((mi * 1000 + ai * 10 + si) as u64) << 13);
                let noise = cfg.noise_with_seed(scan_seed);
                match virtual_scan(&aug_mesh, &spec, &noise, None) {
                    Ok((cloud, _)) => pairs.push((cloud, aug_mesh.clone())),
                    Err(Error::EmptyScan) => continue,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyScan);
    }
    Ok(pairs)
}

/// `train`: build pairs from the dataset and train a completion model.
pub fn train_cmd(
    ctx: &Ctx,
    dataset_dir: &Path,
    epochs_override: Option<usize>,
    seed: u64,
    model_out: &Path,
) -> Result<()> {
    let started = Instant::now();
    let pairs = build_training_pairs(ctx, dataset_dir, seed)?;
    let mut model = CompletionModel::init(&ctx.config.completion_config(seed))?;
    let mut opts = ctx.config.train_options(seed, ctx.deterministic);
    if let Some(e) = epochs_override {
        opts.epochs = e;
    }
    let report = train(&pairs, &mut model, &opts)?;

    if let Some(parent) = model_out.parent() {
        ensure_dir(parent)?;
    }
    write_checkpoint(&model.to_checkpoint(), model_out)?;

    // Loss history CSV next to the model.
    let history_path = model_out.with_extension("losses.csv");
    let rows: Vec<MetricsRow> = report
        .steps
        .iter()
        .enumerate()
        .map(|(i, (total, c, f))| {
            MetricsRow::new(format!("step_{i:05}"), *c, *f).with_extra("total", *total)
        })
        .collect();
    write_metrics_csv(&rows, &history_path)?;

    let mut manifest = manifest_for(ctx, "train", Some(seed), started);
    manifest.param("pairs", pairs.len());
    manifest.param("epochs", opts.epochs);
    manifest.param("best_epoch_loss", report.best_epoch_loss);
    manifest.inputs.push(dataset_dir.join("split.txt"));
    manifest.outputs.push(model_out.to_path_buf());
    manifest.outputs.push(history_path);
    manifest.write(model_out.with_extension("manifest.txt"))
}

/// `complete`: run the completion network on a cloud.
pub fn complete_cmd(ctx: &Ctx, model_path: &Path, cloud_path: &Path, out: &Path) -> Result<()> {
    let started = Instant::now();
    let model = CompletionModel::from_checkpoint(&read_checkpoint(model_path)?)?;
    let cloud = crate::io::read_cloud(cloud_path)?;
    let completed = complete(&model, &cloud)?;
    if let Some(parent) = out.parent() {
        ensure_dir(parent)?;
    }
    write_cloud(&completed, out, PlyFormat::BinaryLittleEndian)?;

    let mut manifest = manifest_for(ctx, "complete", None, started);
    manifest.inputs.push(model_path.to_path_buf());
    manifest.inputs.push(cloud_path.to_path_buf());
    manifest.outputs.push(out.to_path_buf());
    manifest.write(out.with_extension("manifest.txt"))
}

/// `mesh`: estimate normals when missing, then Poisson-reconstruct.
pub fn mesh_cmd(ctx: &Ctx, cloud_path: &Path, out: &Path) -> Result<()> {
    let started = Instant::now();
    let cloud = crate::io::read_cloud(cloud_path)?;
    let oriented = if cloud.normals.is_some() {
        cloud
    } else {
        estimate_normals(&cloud, ctx.config.mesh_normals_k, None)?
    };
    let output = poisson_reconstruct(&oriented, &ctx.config.poisson_params())?;
    if let Some(parent) = out.parent() {
        ensure_dir(parent)?;
    }
    write_mesh(&output.mesh, out, PlyFormat::BinaryLittleEndian)?;

    let mut manifest = manifest_for(ctx, "mesh", None, started);
    manifest.param("cg_converged", output.stats.converged);
    manifest.param("cg_iterations", output.stats.iterations);
    manifest.param("cg_residual", output.stats.relative_residual);
    manifest.inputs.push(cloud_path.to_path_buf());
    manifest.outputs.push(out.to_path_buf());
    manifest.write(out.with_extension("manifest.txt"))
}

fn ply_files_of(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map_or(false, |e| e == "ply"))
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

/// `eval`: CD (unsquared) and HD per pair, plus mean and standard
/// deviation rows.
pub fn eval_cmd(ctx: &Ctx, pred: &Path, gt: &Path, out_csv: &Path) -> Result<()> {
    let started = Instant::now();
    let pred_files = ply_files_of(pred)?;
    let gt_files = ply_files_of(gt)?;
    if pred_files.len() != gt_files.len() || pred_files.is_empty() {
        return Err(Error::InvalidInput(format!(
            "prediction/ground-truth counts differ: {} vs {}",
            pred_files.len(),
            gt_files.len()
        )));
    }
    let samples = ctx.config.eval_gt_samples;
    let mut rows = Vec::new();
    let mut cds = Vec::new();
    let mut hds = Vec::new();
    for (p, g) in pred_files.iter().zip(&gt_files) {
        let pc = load_as_cloud(p, samples, 0)?;
        let gc = load_as_cloud(g, samples, 0)?;
        let cd = chamfer(&pc, &gc, false)?.cd;
        let hd = hausdorff(&pc, &gc)?;
        let label = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "pair".into());
        rows.push(MetricsRow::new(label, cd, hd));
        cds.push(cd);
        hds.push(hd);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let std = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    };
    rows.push(MetricsRow::new("mean", mean(&cds), mean(&hds)));
    rows.push(MetricsRow::new("std", std(&cds), std(&hds)));
    if let Some(parent) = out_csv.parent() {
        ensure_dir(parent)?;
    }
    write_metrics_csv(&rows, out_csv)?;

    let mut manifest = manifest_for(ctx, "eval", None, started);
    manifest.param("pairs", pred_files.len());
    manifest.inputs.push(pred.to_path_buf());
    manifest.inputs.push(gt.to_path_buf());
    manifest.outputs.push(out_csv.to_path_buf());
    manifest.write(out_csv.with_extension("manifest.txt"))
}

/// `sweep-angle`: scan/canonicalize/complete the test split per angle and
/// chart mean CD against the viewing angle.
pub fn sweep_angle_cmd(
    ctx: &Ctx,
    model_path: &Path,
    dataset_dir: &Path,
    angles: &[f64],
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let started = Instant::now();
    if angles.is_empty() {
        return Err(Error::InvalidInput("angle list is empty".into()));
    }
    let model = CompletionModel::from_checkpoint(&read_checkpoint(model_path)?)?;
    let (_, test_names) = read_split(dataset_dir)?;
    if test_names.is_empty() {
        return Err(Error::InvalidInput("dataset has no test samples".into()));
    }
    let template = template_mesh();
    let landmarks = template_landmarks();
    ensure_dir(out_dir)?;

    let mut rows = Vec::new();
    let mut chart = Vec::new();
    for &theta in angles {
        let mut cds = Vec::new();
        let mut hds = Vec::new();
        for (ti, name) in test_names.iter().enumerate() {
            let run = || -> Result<(f64, f64)> {
                let mesh = read_sample_mesh(dataset_dir, name)?;
                let (lo, hi) = mesh.bounding_box();
                let target = Point3::from((lo.coords + hi.coords) / 2.0);
                let spec = ctx.config.rig_for(target, theta);
                // Same rig seed across angles so coverage only grows.
                let noise = ctx.config.noise_with_seed(seed ^ (ti as u64) << 4);
                let (cloud, views) = virtual_scan(&mesh, &spec, &noise, None)?;
                let aligned = canonicalize(
                    &template,
                    &landmarks,
                    &views,
                    &cloud,
                    &ctx.config.icp_params(),
                    &ctx.config.canonicalize_options(0),
                )?;
                // Completion runs in the canonical frame; evaluate against
                // the ground truth carried into that frame.
                let completed = complete(&model, &aligned.aligned)?;
                let gt_aligned = mesh
                    .transformed(&aligned.composed)
                    .sample_surface(ctx.config.eval_gt_samples, 0);
                Ok((
                    chamfer(&completed, &gt_aligned, false)?.cd,
                    hausdorff(&completed, &gt_aligned)?,
                ))
            };
            match run() {
                Ok((cd, hd)) => {
                    cds.push(cd);
                    hds.push(hd);
                }
                Err(_) => {} // failures become NaN rows below
            }
        }
        let (cd, hd) = if cds.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            (
                cds.iter().sum::<f64>() / cds.len() as f64,
                hds.iter().sum::<f64>() / hds.len() as f64,
            )
        };
        rows.push(
            MetricsRow::new(format!("theta_{theta}"), cd, hd)
                .with_extra("angle", theta)
                .with_extra("n", cds.len() as f64),
        );
        chart.push((theta, cd));
    }
    let csv_path = out_dir.join("sweep.csv");
    write_metrics_csv(&rows, &csv_path)?;
    let svg_path = out_dir.join("sweep.svg");
    write_line_chart(
        &chart,
        "max viewing angle (deg)",
        "mean chamfer distance (m)",
        "completion error vs scan coverage",
        &svg_path,
    )?;

    let mut manifest = manifest_for(ctx, "sweep-angle", Some(seed), started);
    manifest.param(
        "angles",
        angles
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest.inputs.push(model_path.to_path_buf());
    manifest.outputs.push(csv_path);
    manifest.outputs.push(svg_path);
    manifest.write(out_dir.join("manifest.txt"))
}

/// Build the PCA baseline from a dataset's training split. The mode count
/// is clamped to what the split can support (n_train - 1).
pub fn build_pca_from_dataset(
    dataset_dir: &Path,
    modes: usize,
) -> Result<crate::shapegen::PcaShapeModel> {
    let (train_names, _) = read_split(dataset_dir)?;
    let samples: Vec<FootoidSample> = train_names
        .iter()
        .map(|name| {
            Ok(FootoidSample {
                params: read_sample_params(dataset_dir, name)?,
                mesh: read_sample_mesh(dataset_dir, name)?,
            })
        })
        .collect::<Result<_>>()?;
    let modes = modes.min(samples.len().saturating_sub(1));
    build_pca(&samples, modes)
}

/// `fit-baseline`: fit the PCA model to a target cloud.
pub fn fit_baseline_cmd(
    ctx: &Ctx,
    dataset_dir: &Path,
    target_path: &Path,
    steps_override: Option<usize>,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let started = Instant::now();
    let model = build_pca_from_dataset(dataset_dir, ctx.config.fit_modes)?;
    let target = load_as_cloud(target_path, ctx.config.eval_gt_samples, 0)?;
    let mut opts = ctx.config.fit_options(seed);
    if let Some(s) = steps_override {
        opts.steps = s;
    }
    let fit = fit_pca(&model, &target, &opts)?;

    ensure_dir(out_dir)?;
    let mesh_path = out_dir.join("fitted.ply");
    let posed = fit.fitted_mesh.transformed(&fit.pose);
    write_mesh(&posed, &mesh_path, PlyFormat::BinaryLittleEndian)?;
    let fitted_samples = posed.sample_surface(ctx.config.fit_samples, 0);
    let cd = chamfer(&fitted_samples, &target, false)?.cd;
    let hd = hausdorff(&fitted_samples, &target)?;
    let csv_path = out_dir.join("fit.csv");
    write_metrics_csv(
        &[MetricsRow::new("fit", cd, hd).with_extra("final_cd", fit.final_cd)],
        &csv_path,
    )?;

    let mut manifest = manifest_for(ctx, "fit-baseline", Some(seed), started);
    manifest.param("steps", opts.steps);
    manifest.inputs.push(target_path.to_path_buf());
    manifest.outputs.push(mesh_path);
    manifest.outputs.push(csv_path);
    manifest.write(out_dir.join("manifest.txt"))
}
