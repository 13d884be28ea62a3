//! PCA statistical shape model over corresponded footoid meshes, plus the
//! Chamfer-fitting baseline.

use nalgebra::{DMatrix, DVector, Point3};

use crate::error::{Error, Result};
use crate::geom::TriangleMesh;
use crate::shapegen::basis::FootoidSample;

#[derive(Clone, Debug)]
pub struct PcaShapeModel {
    /// Mean vertex positions, length V.
    pub mean_vertices: Vec<Point3<f64>>,
    /// Face list shared by all training meshes.
    pub faces: Vec<[u32; 3]>,
    /// `m` displacement modes, each of length 3V, orthonormal as flattened
    /// vectors.
    pub basis: Vec<Vec<f64>>,
    /// Standard deviation of the training data along each mode.
    pub mode_stddevs: Vec<f64>,
}

impl PcaShapeModel {
    pub fn mode_count(&self) -> usize {
        self.basis.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.mean_vertices.len()
    }

    /// Mesh for the given mode coefficients (missing trailing coefficients
    /// are treated as zero).
    pub fn reconstruct(&self, coefficients: &[f64]) -> Result<TriangleMesh> {
        if coefficients.len() > self.mode_count() {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for a model with {} modes",
                coefficients.len(),
                self.mode_count()
            )));
        }
        let mut flat: Vec<f64> = Vec::with_capacity(self.vertex_count() * 3);
        for p in &self.mean_vertices {
            flat.extend_from_slice(&[p.x, p.y, p.z]);
        }
        for (c, mode) in coefficients.iter().zip(&self.basis) {
            for (f, m) in flat.iter_mut().zip(mode) {
                *f += c * m;
            }
        }
        let vertices = flat
            .chunks_exact(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect();
        TriangleMesh::new(vertices, self.faces.clone())
    }

    /// Least-squares coefficients for a corresponded vertex set
    /// (projection onto the orthonormal basis).
    pub fn project(&self, vertices: &[Point3<f64>]) -> Result<Vec<f64>> {
        if vertices.len() != self.vertex_count() {
            return Err(Error::CorrespondenceError(format!(
                "{} vertices vs model's {}",
                vertices.len(),
                self.vertex_count()
            )));
        }
        let mut centered: Vec<f64> = Vec::with_capacity(vertices.len() * 3);
        for (v, m) in vertices.iter().zip(&self.mean_vertices) {
            centered.extend_from_slice(&[v.x - m.x, v.y - m.y, v.z - m.z]);
        }
        Ok(self
            .basis
            .iter()
            .map(|mode| mode.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// PCA of the vertex-displacement covariance via the Gram-matrix route
/// (economy SVD); keeps the top `m` modes.
pub fn build_pca(samples: &[FootoidSample], m: usize) -> Result<PcaShapeModel> {
    let n = samples.len();
    if n < m + 1 {
        return Err(Error::InvalidInput(format!(
            "need at least {} samples for {m} modes, got {n}",
            m + 1
        )));
    }
    let first = &samples[0].mesh;
    for (i, s) in samples.iter().enumerate() {
        if s.mesh.faces != first.faces || s.mesh.vertex_count() != first.vertex_count() {
            return Err(Error::CorrespondenceError(format!(
                "sample {i} topology differs from sample 0"
            )));
        }
    }
    let v = first.vertex_count();
    let dim = 3 * v;

    let mut mean = vec![0.0f64; dim];
    let flat = |mesh: &TriangleMesh| -> Vec<f64> {
        let mut out = Vec::with_capacity(dim);
        for p in &mesh.vertices {
            out.extend_from_slice(&[p.x, p.y, p.z]);
        }
        out
    };
    let data: Vec<Vec<f64>> = samples.iter().map(|s| flat(&s.mesh)).collect();
    for row in &data {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    // Gram matrix of centered rows: G = Xc Xc^T (n x n).
    let centered: Vec<Vec<f64>> = data
        .iter()
        .map(|row| row.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
            gram[(i, j)] = dot;
            gram[(j, i)] = dot;
        }
    }
    let eig = gram.symmetric_eigen();
    // Sort eigenpairs descending.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut basis = Vec::with_capacity(m);
    let mut mode_stddevs = Vec::with_capacity(m);
    for &idx in order.iter().take(m) {
        let lambda = eig.eigenvalues[idx].max(0.0);
        let u: DVector<f64> = eig.eigenvectors.column(idx).into();
        // Mode direction: Xc^T u / sigma, normalized explicitly.
        let mut mode = vec![0.0f64; dim];
        for (i, row) in centered.iter().enumerate() {
            let ui = u[i];
            if ui != 0.0 {
                for (m, x) in mode.iter_mut().zip(row) {
                    *m += ui * x;
                }
            }
        }
        let norm: f64 = mode.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for x in mode.iter_mut() {
                *x /= norm;
            }
        }
        basis.push(mode);
        // Singular value of Xc is sqrt(lambda); stddev = sv / sqrt(n-1).
        mode_stddevs.push((lambda / (n as f64 - 1.0)).sqrt());
    }

    let mean_vertices = mean
        .chunks_exact(3)
        .map(|c| Point3::new(c[0], c[1], c[2]))
        .collect();
    Ok(PcaShapeModel {
        mean_vertices,
        faces: first.faces.clone(),
        basis,
        mode_stddevs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapegen::dataset::sample_dataset;

    #[test]
    fn spans_the_generative_family() {
        // Training shapes live in an 8-dimensional affine family; an
        // 8-mode PCA reconstructs every training sample exactly.
        let samples = sample_dataset(24, 5).unwrap();
        let model = build_pca(&samples, 8).unwrap();
        for sample in samples.iter().take(6) {
            let coeffs = model.project(&sample.mesh.vertices).unwrap();
            let rec = model.reconstruct(&coeffs).unwrap();
            let err: f64 = rec
                .vertices
                .iter()
                .zip(&sample.mesh.vertices)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "reconstruction error {err}");
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        let samples = sample_dataset(20, 6).unwrap();
        let model = build_pca(&samples, 6).unwrap();
        for i in 0..model.mode_count() {
            for j in i..model.mode_count() {
                let dot: f64 = model.basis[i]
                    .iter()
                    .zip(&model.basis[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-9, "modes {i},{j}: {dot}");
            }
        }
    }

    #[test]
    fn zero_modes_reconstructs_the_mean() {
        let samples = sample_dataset(10, 7).unwrap();
        let model = build_pca(&samples, 0).unwrap();
        let rec = model.reconstruct(&[]).unwrap();
        for (a, b) in rec.vertices.iter().zip(&model.mean_vertices) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rebuilding_from_reconstructions_is_idempotent() {
        let samples = sample_dataset(16, 8).unwrap();
        let model = build_pca(&samples, 8).unwrap();
        // Reconstruct every sample, rebuild, and compare subspaces.
        let rec_samples: Vec<FootoidSample> = samples
            .iter()
            .map(|s| {
                let coeffs = model.project(&s.mesh.vertices).unwrap();
                FootoidSample {
                    params: s.params.clone(),
                    mesh: model.reconstruct(&coeffs).unwrap(),
                }
            })
            .collect();
        let model2 = build_pca(&rec_samples, 8).unwrap();
        for (a, b) in model.mean_vertices.iter().zip(&model2.mean_vertices) {
            assert!((a - b).norm() < 1e-9);
        }
        // Modes can flip sign; compare up to sign.
        for (ma, mb) in model.basis.iter().zip(&model2.basis) {
            let dot: f64 = ma.iter().zip(mb).map(|(a, b)| a * b).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-9, "mode overlap {dot}");
        }
    }

    #[test]
    fn topology_mismatch_rejected() {
        let mut samples = sample_dataset(5, 9).unwrap();
        samples[2].mesh.faces.swap(0, 1);
        assert!(matches!(
            build_pca(&samples, 2),
            Err(Error::CorrespondenceError(_))
        ));
    }

    #[test]
    fn too_few_samples_rejected() {
        let samples = sample_dataset(4, 10).unwrap();
        assert!(build_pca(&samples, 4).is_err());
        assert!(build_pca(&samples, 3).is_ok());
    }
}
