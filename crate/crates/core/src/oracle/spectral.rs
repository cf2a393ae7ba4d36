//! Cotangent-Laplacian spectrum and biharmonic distances.
//!
//! The generalized problem `L phi = lambda M phi` (cotangent stiffness `L`,
//! lumped mass `M`) is symmetrised as `M^-1/2 L M^-1/2` and solved densely,
//! which is fine for the few-thousand-vertex meshes this crate targets.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::mesh::TriangleMesh;
use crate::{Error, Result};

const COT_MIN: f64 = 1e-6;
const COT_MAX: f64 = 1e6;
const ZERO_EIGENVALUE: f64 = 1e-9;

/// Low end of the Laplace spectrum, mass-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    /// V x m, column k is the k-th retained eigenvector.
    eigenvectors: DMatrix<f64>,
    mass: Vec<f64>,
    checksum: u64,
}

impl SpectralBasis {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn mass_diagonal(&self) -> &[f64] {
        &self.mass
    }

    pub fn mode_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.mass.len()
    }

    pub fn mesh_checksum(&self) -> u64 {
        self.checksum
    }

    /// Keeps only the first `m` modes.
    pub fn truncated(&self, m: usize) -> SpectralBasis {
        let m = m.min(self.mode_count());
        SpectralBasis {
            eigenvalues: self.eigenvalues[..m].to_vec(),
            eigenvectors: self.eigenvectors.columns(0, m).into_owned(),
            mass: self.mass.clone(),
            checksum: self.checksum,
        }
    }

    /// Largest deviation of `Phi^T M Phi` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.mode_count();
        let phi = &self.eigenvectors;
        let mut worst: f64 = 0.0;
        for a in 0..m {
            for b in a..m {
                let dot: f64 = (0..phi.nrows())
                    .map(|i| phi[(i, a)] * self.mass[i] * phi[(i, b)])
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    pub(crate) fn distances_from(&self, source: usize) -> Result<Vec<f64>> {
        let n = self.vertex_count();
        if source >= n {
            return Err(Error::IndexOutOfRange { index: source, len: n });
        }
        let scaled: Vec<f64> = self.eigenvalues.iter().map(|l| 1.0 / (l * l)).collect();
        let phi = &self.eigenvectors;
        Ok((0..n)
            .map(|y| {
                scaled
                    .iter()
                    .enumerate()
                    .map(|(k, w)| {
                        let diff = phi[(source, k)] - phi[(y, k)];
                        diff * diff * w
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect())
    }
}

/// Cotangent stiffness (positive semidefinite) and lumped mass.
pub(crate) fn cotangent_laplacian(mesh: &TriangleMesh) -> (DMatrix<f64>, Vec<f64>) {
    let n = mesh.vertex_count();
    let mut stiffness = DMatrix::<f64>::zeros(n, n);
    let mut mass = vec![0.0; n];
    let p = mesh.positions();
    for (fi, f) in mesh.faces().iter().enumerate() {
        let area = mesh.face_area(fi);
        for &v in f {
            mass[v as usize] += area / 3.0;
        }
        for corner in 0..3 {
            let k = f[corner] as usize;
            let i = f[(corner + 1) % 3] as usize;
            let j = f[(corner + 2) % 3] as usize;
            let (e1, e2) = (p[i] - p[k], p[j] - p[k]);
            let cross = e1.cross(&e2).norm();
            let cot = if cross > 0.0 { e1.dot(&e2) / cross } else { COT_MAX };
            let w = 0.5 * cot.clamp(COT_MIN, COT_MAX);
            stiffness[(i, j)] -= w;
            stiffness[(j, i)] -= w;
            stiffness[(i, i)] += w;
            stiffness[(j, j)] += w;
        }
    }
    (stiffness, mass)
}

/// The `num_modes` smallest nonconstant generalized eigenpairs.
pub fn build_spectral_basis(mesh: &TriangleMesh, num_modes: usize) -> Result<SpectralBasis> {
    let n = mesh.vertex_count();
    if num_modes == 0 {
        return Err(Error::InvalidArgument("at least one mode is required".into()));
    }
    let (stiffness, mass) = cotangent_laplacian(mesh);
    if let Some(i) = mass.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::Numeric(format!(
            "vertex {i} has zero lumped mass (not referenced by any face)"
        )));
    }
    let inv_sqrt: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let sym = DMatrix::from_fn(n, n, |r, c| stiffness[(r, c)] * inv_sqrt[r] * inv_sqrt[c]);
    let condition = {
        let (lo, hi) = mass
            .iter()
            .fold((f64::INFINITY, 0f64), |(lo, hi), &m| (lo.min(m), hi.max(m)));
        hi / lo
    };
    let eig = SymmetricEigen::try_new(sym, 1e-14, 100_000).ok_or_else(|| {
        Error::Numeric(format!(
            "symmetric eigensolver did not converge ({n}x{n}, mass ratio {condition:.3e})"
        ))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    // The first mode is the constant one; further near-zero modes belong to
    // additional connected components and are skipped as well.
    let kept: Vec<usize> = order
        .into_iter()
        .skip(1)
        .filter(|&k| eig.eigenvalues[k] > ZERO_EIGENVALUE)
        .take(num_modes)
        .collect();
    if kept.len() < num_modes {
        return Err(Error::InvalidArgument(format!(
            "requested {num_modes} modes but only {} nonconstant modes exist",
            kept.len()
        )));
    }
    let eigenvalues = kept.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(n, num_modes, |r, c| {
        eig.eigenvectors[(r, kept[c])] * inv_sqrt[r]
    });
    Ok(SpectralBasis {
        eigenvalues,
        eigenvectors,
        mass,
        checksum: mesh.checksum(),
    })
}

/// Biharmonic distances from `source` using every mode in `basis`.
pub fn biharmonic_distances(
    mesh: &TriangleMesh,
    source: usize,
    basis: &SpectralBasis,
) -> Result<Vec<f64>> {
    let checksum = mesh.checksum();
    if checksum != basis.checksum {
        return Err(Error::StaleChecksum {
            expected: checksum,
            found: basis.checksum,
        });
    }
    basis.distances_from(source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use std::f64::consts::PI;

    #[test]
    fn square_fundamental_mode() {
        // Neumann square: first nonconstant eigenvalue is pi^2.
        let mesh = shapes::grid(24, 24, 1.0, 1.0);
        let basis = build_spectral_basis(&mesh, 3).unwrap();
        let rel = (basis.eigenvalues()[0] - PI * PI).abs() / (PI * PI);
        assert!(rel < 0.1, "lambda_1 = {}", basis.eigenvalues()[0]);
        assert!(basis.eigenvalues()[0] > ZERO_EIGENVALUE);
        assert!(basis.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn orthonormal_under_mass() {
        let mesh = shapes::icosphere(2);
        let basis = build_spectral_basis(&mesh, 20).unwrap();
        assert!(basis.orthonormality_error() < 1e-5);
    }

    #[test]
    fn shape_contract_on_small_mesh() {
        let mesh = shapes::grid(4, 1, 1.0, 0.25);
        assert_eq!(mesh.vertex_count(), 10);
        let basis = build_spectral_basis(&mesh, 3).unwrap();
        assert_eq!(basis.mode_count(), 3);
        assert_eq!(basis.eigenvectors().shape(), (10, 3));
        assert!(build_spectral_basis(&mesh, 10).is_err());
    }

    #[test]
    fn biharmonic_basic_properties() {
        let mesh = shapes::icosphere(2);
        let basis = build_spectral_basis(&mesh, 30).unwrap();
        let d3 = biharmonic_distances(&mesh, 3, &basis).unwrap();
        let d40 = biharmonic_distances(&mesh, 40, &basis).unwrap();
        assert_eq!(d3[3], 0.0);
        assert_eq!(d3[40], d40[3]);
        assert!(d3.iter().enumerate().all(|(i, &d)| i == 3 || d > 0.0));
    }

    #[test]
    fn stale_basis_is_rejected() {
        let mesh = shapes::icosphere(1);
        let basis = build_spectral_basis(&mesh, 5).unwrap();
        let other = shapes::ellipsoid(1, crate::mesh::Vec3::new(1.0, 2.0, 1.0));
        assert!(matches!(
            biharmonic_distances(&other, 0, &basis),
            Err(Error::StaleChecksum { .. })
        ));
    }
}
