//! Fréchet distance between Gaussian fits of image features.
//!
//! Features are pixel moments: the image is reduced to grayscale, average-
//! pooled onto a small grid, and flattened. The distance between feature
//! clouds A and B is the 2-Wasserstein distance between their Gaussian
//! fits: `|mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2)`.
//! Matrix square roots come from a Jacobi eigendecomposition, which is
//! plenty for the small feature dimensions used here.

use crate::error::{Error, Result};
use crate::generator::ImageTensor;
use crate::scorers::GRAY_WEIGHTS;

/// Gaussian fits of both feature clouds plus their Fréchet distance.
#[derive(Debug, Clone)]
pub struct FrechetStats {
    pub feature_dim: usize,
    pub mu_a: Vec<f64>,
    pub mu_b: Vec<f64>,
    /// Row-major feature_dim x feature_dim covariance matrices.
    pub cov_a: Vec<f64>,
    pub cov_b: Vec<f64>,
    pub distance: f64,
}

// ── Jacobi eigendecomposition ───────────────────────────────────────────

/// Eigenvalues and eigenvectors of a symmetric matrix by cyclic Jacobi
/// rotations. Returns (eigenvalues, eigenvectors-as-columns). Meant for
/// small matrices (n <= 32).
pub fn jacobi_eigen(matrix: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if matrix.len() != n * n {
        return Err(Error::InvalidShape {
            op: "jacobi_eigen",
            shape: vec![matrix.len()],
            reason: format!("expected {n}x{n} entries"),
        });
    }
    const MAX_SWEEPS: usize = 64;
    const TOL: f64 = 1e-14;

    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].abs();
            }
        }
        let scale: f64 = (0..n).map(|i| a[i * n + i].abs()).sum::<f64>().max(1.0);
        if off <= TOL * scale {
            let evals: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
            return Ok((evals, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta.abs() > 1e12 {
                    0.5 / theta
                } else {
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for i in 0..n {
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = a[p * n + j];
                    let aqj = a[q * n + j];
                    a[p * n + j] = c * apj - s * aqj;
                    a[q * n + j] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }
    Err(Error::Numeric(
        "jacobi eigendecomposition did not converge".into(),
    ))
}

/// Principal square root of a symmetric PSD matrix via the Jacobi
/// eigendecomposition: `V sqrt(L) V^T`. Eigenvalues in [-1e-9, 0) are
/// clamped to 0; anything below that tolerance is a numeric error, as is
/// asymmetry beyond 1e-9.
pub fn psd_sqrt(matrix: &[f64], n: usize) -> Result<Vec<f64>> {
    if matrix.len() != n * n {
        return Err(Error::InvalidShape {
            op: "psd_sqrt",
            shape: vec![matrix.len()],
            reason: format!("expected {n}x{n} entries"),
        });
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let asym = (matrix[i * n + j] - matrix[j * n + i]).abs();
            if asym > 1e-9 {
                return Err(Error::Numeric(format!(
                    "psd_sqrt: asymmetry {asym:.3e} at ({i},{j}) exceeds 1e-9"
                )));
            }
        }
    }
    // symmetrize rounding noise before decomposing
    let mut sym = matrix.to_vec();
    for i in 0..n {
        for j in 0..n {
            sym[i * n + j] = 0.5 * (matrix[i * n + j] + matrix[j * n + i]);
        }
    }
    let (mut evals, v) = jacobi_eigen(&sym, n)?;
    for lam in evals.iter_mut() {
        if *lam < -1e-9 {
            return Err(Error::Numeric(format!(
                "psd_sqrt: negative eigenvalue {lam:.3e} beyond tolerance"
            )));
        }
        *lam = lam.max(0.0);
    }
    // V sqrt(L) V^T
    let mut out = vec![0.0; n * n];
    for p in 0..n {
        let s = evals[p].sqrt();
        if s == 0.0 {
            continue;
        }
        for i in 0..n {
            let vip = v[i * n + p] * s;
            for j in 0..n {
                out[i * n + j] += vip * v[j * n + p];
            }
        }
    }
    Ok(out)
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for p in 0..n {
            let aip = a[i * n + p];
            if aip == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aip * b[p * n + j];
            }
        }
    }
    out
}

fn trace(a: &[f64], n: usize) -> f64 {
    (0..n).map(|i| a[i * n + i]).sum()
}

// ── Gaussian fitting and the distance ───────────────────────────────────

fn fit_gaussian(features: &[Vec<f64>], dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = features.len();
    if n < dim + 1 {
        return Err(Error::Config(format!(
            "need at least {} samples for a {dim}-dim Gaussian fit, got {n}",
            dim + 1
        )));
    }
    let nf = n as f64;
    let mut mu = vec![0.0; dim];
    for f in features {
        if f.len() != dim {
            return Err(Error::ShapeMismatch {
                op: "gaussian fit",
                lhs: vec![f.len()],
                rhs: vec![dim],
            });
        }
        for (m, x) in mu.iter_mut().zip(f) {
            *m += x;
        }
    }
    for m in mu.iter_mut() {
        *m /= nf;
    }
    let mut cov = vec![0.0; dim * dim];
    for f in features {
        for i in 0..dim {
            let di = f[i] - mu[i];
            for j in 0..dim {
                cov[i * dim + j] += di * (f[j] - mu[j]);
            }
        }
    }
    for c in cov.iter_mut() {
        *c /= nf - 1.0;
    }
    Ok((mu, cov))
}

/// Fréchet distance between Gaussian fits of two feature clouds.
pub fn frechet_from_features(
    features_a: &[Vec<f64>],
    features_b: &[Vec<f64>],
    dim: usize,
) -> Result<FrechetStats> {
    let (mu_a, cov_a) = fit_gaussian(features_a, dim)?;
    let (mu_b, cov_b) = fit_gaussian(features_b, dim)?;

    let mean_term: f64 = mu_a
        .iter()
        .zip(&mu_b)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();

    let sqrt_a = psd_sqrt(&cov_a, dim)?;
    let inner = mat_mul(&sqrt_a, &mat_mul(&cov_b, &sqrt_a, dim), dim);
    let cross = psd_sqrt(&inner, dim)?;
    let distance =
        mean_term + trace(&cov_a, dim) + trace(&cov_b, dim) - 2.0 * trace(&cross, dim);
    if distance < -1e-9 {
        return Err(Error::Numeric(format!(
            "Fréchet distance {distance:.3e} below -1e-9"
        )));
    }

    Ok(FrechetStats {
        feature_dim: dim,
        mu_a,
        mu_b,
        cov_a,
        cov_b,
        distance: distance.max(0.0),
    })
}

/// Grayscale the image and average-pool it onto a `grid x grid` layout.
pub fn pooled_gray_features(image: &ImageTensor, grid: usize) -> Result<Vec<f64>> {
    let side = image.side();
    if grid == 0 || !side.is_multiple_of(grid) {
        return Err(Error::Config(format!(
            "image side {side} is not divisible by pool grid {grid}"
        )));
    }
    let cell = side / grid;
    let mut out = vec![0.0; grid * grid];
    for r in 0..side {
        for c in 0..side {
            let gray = GRAY_WEIGHTS[0] * image.at(r, c, 0)
                + GRAY_WEIGHTS[1] * image.at(r, c, 1)
                + GRAY_WEIGHTS[2] * image.at(r, c, 2);
            out[(r / cell) * grid + (c / cell)] += gray;
        }
    }
    let per_cell = (cell * cell) as f64;
    for x in out.iter_mut() {
        *x /= per_cell;
    }
    Ok(out)
}

/// Fréchet proxy over pooled-grayscale pixel-moment features.
/// `feature_dim` must be a perfect square (grid^2); the default is 16.
pub fn frechet_proxy(
    images_a: &[ImageTensor],
    images_b: &[ImageTensor],
    feature_dim: usize,
) -> Result<FrechetStats> {
    let grid = (feature_dim as f64).sqrt().round() as usize;
    if grid * grid != feature_dim {
        return Err(Error::Config(format!(
            "feature_dim {feature_dim} is not a perfect square"
        )));
    }
    let feats = |images: &[ImageTensor]| -> Result<Vec<Vec<f64>>> {
        images.iter().map(|im| pooled_gray_features(im, grid)).collect()
    };
    frechet_from_features(&feats(images_a)?, &feats(images_b)?, feature_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::rng::{domain, RandomStream};

    #[test]
    fn psd_sqrt_of_identity_and_diagonal() {
        let id = psd_sqrt(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert!((id[0] - 1.0).abs() <= 1e-12 && (id[3] - 1.0).abs() <= 1e-12);
        assert!(id[1].abs() <= 1e-12 && id[2].abs() <= 1e-12);

        let d = psd_sqrt(&[4.0, 0.0, 0.0, 9.0], 2).unwrap();
        assert!((d[0] - 2.0).abs() <= 1e-12 && (d[3] - 3.0).abs() <= 1e-12);
    }

    #[test]
    fn psd_sqrt_reconstructs_random_spd_matrix() {
        let n = 8;
        let mut s = RandomStream::new(77, domain::SYNTH);
        // A^T A + I is comfortably SPD
        let a: Vec<f64> = (0..n * n).map(|_| s.normal()).collect();
        let mut spd = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..n {
                    acc += a[p * n + i] * a[p * n + j];
                }
                spd[i * n + j] = acc + if i == j { 1.0 } else { 0.0 };
            }
        }
        let root = psd_sqrt(&spd, n).unwrap();
        let back = mat_mul(&root, &root, n);
        let frob: f64 = back
            .iter()
            .zip(&spd)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(frob <= 1e-8, "reconstruction error {frob:.3e}");
    }

    #[test]
    fn psd_sqrt_rejects_bad_inputs() {
        // asymmetric
        assert!(psd_sqrt(&[1.0, 0.5, 0.0, 1.0], 2).is_err());
        // negative eigenvalue
        assert!(psd_sqrt(&[-1.0, 0.0, 0.0, 1.0], 2).is_err());
    }

    #[test]
    fn identical_sets_have_zero_distance() {
        let mut s = RandomStream::new(5, domain::SYNTH);
        let feats: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..4).map(|_| s.normal()).collect())
            .collect();
        let f = frechet_from_features(&feats, &feats, 4).unwrap();
        assert!(f.distance <= 1e-8, "distance {}", f.distance);
    }

    #[test]
    fn equal_covariance_mean_shift_recovers_squared_norm() {
        let mut s = RandomStream::new(9, domain::SYNTH);
        let dim = 3;
        let delta = [0.8, -0.4, 0.3];
        let base: Vec<Vec<f64>> = (0..5000)
            .map(|_| (0..dim).map(|_| s.normal()).collect())
            .collect();
        let shifted: Vec<Vec<f64>> = base
            .iter()
            .map(|f| f.iter().zip(&delta).map(|(x, d)| x + d).collect())
            .collect();
        let want: f64 = delta.iter().map(|d| d * d).sum();
        let got = frechet_from_features(&base, &shifted, dim).unwrap().distance;
        assert!(
            (got - want).abs() <= 0.02 * want,
            "distance {got} vs shift {want}"
        );
    }

    #[test]
    fn one_dimensional_case_matches_scalar_formula() {
        let mut s = RandomStream::new(11, domain::SYNTH);
        let a: Vec<Vec<f64>> = (0..2000).map(|_| vec![0.3 + 0.7 * s.normal()]).collect();
        let b: Vec<Vec<f64>> = (0..2000).map(|_| vec![-0.2 + 1.3 * s.normal()]).collect();
        let f = frechet_from_features(&a, &b, 1).unwrap();
        let mean = |v: &[Vec<f64>]| v.iter().map(|x| x[0]).sum::<f64>() / v.len() as f64;
        let std = |v: &[Vec<f64>]| {
            let m = mean(v);
            (v.iter().map(|x| (x[0] - m) * (x[0] - m)).sum::<f64>() / (v.len() as f64 - 1.0))
                .sqrt()
        };
        let want = (mean(&a) - mean(&b)).powi(2) + (std(&a) - std(&b)).powi(2);
        assert!((f.distance - want).abs() <= 1e-9, "{} vs {want}", f.distance);
    }

    #[test]
    fn distance_is_symmetric() {
        let mut s = RandomStream::new(13, domain::SYNTH);
        let a: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..4).map(|_| s.normal()).collect())
            .collect();
        let b: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..4).map(|_| 0.5 * s.normal() + 0.2).collect())
            .collect();
        let ab = frechet_from_features(&a, &b, 4).unwrap().distance;
        let ba = frechet_from_features(&b, &a, 4).unwrap().distance;
        assert!((ab - ba).abs() <= 1e-9, "{ab} vs {ba}");
        assert!(ab >= 0.0);
    }

    #[test]
    fn pooled_features_average_cells() {
        // 8x8 image, grid 4: each cell is 2x2
        let side = 8;
        let mut data = Vec::new();
        for r in 0..side {
            for c in 0..side {
                let g = if r < 4 && c < 4 { 1.0 } else { 0.0 };
                data.extend_from_slice(&[g, g, g]);
            }
        }
        let img = ImageTensor::new(Tensor::new(vec![side, side, 3], data).unwrap()).unwrap();
        let f = pooled_gray_features(&img, 4).unwrap();
        assert_eq!(f.len(), 16);
        assert!((f[0] - 1.0).abs() <= 1e-12);
        assert!((f[5] - 1.0).abs() <= 1e-12);
        assert!(f[15].abs() <= 1e-12);
    }
}
