//! Dense symmetric eigendecomposition and PSD matrix square roots for
//! small matrices (feature dimension <= 16), via cyclic Jacobi rotations.
//!
//! Matrices are flat row-major `d*d` slices. Jacobi is slow asymptotically
//! but simple, robust, and exact enough at these sizes; the sweep count is
//! bounded so non-convergence surfaces as an error instead of a hang.

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues and eigenvectors of a symmetric matrix. `vectors[i*d + j]`
/// is component `i` of the eigenvector for `values[j]`.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

/// Cyclic Jacobi eigendecomposition. The input is symmetrized as
/// `(a + a^T)/2` first, so tiny accumulation asymmetry is tolerated.
pub fn sym_eigen(a: &[f64], d: usize) -> Result<SymEigen> {
    if d == 0 || a.len() != d * d {
        return Err(Error::Shape(format!(
            "sym_eigen expects a d*d matrix with d >= 1, got {} values for d={d}",
            a.len()
        )));
    }
    let mut m: Vec<f64> = (0..d * d)
        .map(|idx| {
            let (i, j) = (idx / d, idx % d);
            0.5 * (a[i * d + j] + a[j * d + i])
        })
        .collect();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }

    let frobenius: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frobenius.max(1.0);

    for _sweep in 0..MAX_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..d {
                for q in p + 1..d {
                    s += m[p * d + q] * m[p * d + q];
                }
            }
            (2.0 * s).sqrt()
        };
        if off <= tol {
            let values = (0..d).map(|i| m[i * d + i]).collect();
            return Ok(SymEigen { values, vectors: v });
        }

        for p in 0..d {
            for q in p + 1..d {
                let apq = m[p * d + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[q * d + q] - m[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                m[p * d + p] -= t * apq;
                m[q * d + q] += t * apq;
                m[p * d + q] = 0.0;
                m[q * d + p] = 0.0;
                for i in 0..d {
                    if i == p || i == q {
                        continue;
                    }
                    let aip = m[i * d + p];
                    let aiq = m[i * d + q];
                    let new_ip = aip - s * (aiq + tau * aip);
                    let new_iq = aiq + s * (aip - tau * aiq);
                    m[i * d + p] = new_ip;
                    m[p * d + i] = new_ip;
                    m[i * d + q] = new_iq;
                    m[q * d + i] = new_iq;
                }
                for i in 0..d {
                    let vip = v[i * d + p];
                    let viq = v[i * d + q];
                    v[i * d + p] = vip - s * (viq + tau * vip);
                    v[i * d + q] = viq + s * (vip - tau * viq);
                }
            }
        }
    }
    Err(Error::Numerical(format!(
        "Jacobi eigensolver did not converge within {MAX_SWEEPS} sweeps on a {d}x{d} matrix"
    )))
}

/// Square `d x d` matrix product.
pub fn matmul_sq(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for t in 0..d {
            let ait = a[i * d + t];
            for j in 0..d {
                out[i * d + j] += ait * b[t * d + j];
            }
        }
    }
    out
}

/// Symmetric PSD square root `V diag(sqrt(max(lambda, 0))) V^T`. Negative
/// eigenvalues (noise from finite samples) are clamped to zero.
pub fn sqrt_psd(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let eigen = sym_eigen(a, d)?;
    let roots: Vec<f64> = eigen.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    // V diag(r) V^T without forming diag.
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for (t, &r) in roots.iter().enumerate() {
                acc += eigen.vectors[i * d + t] * r * eigen.vectors[j * d + t];
            }
            out[i * d + j] = acc;
        }
    }
    Ok(out)
}

/// `sum_i sqrt(max(lambda_i, 0))`, the trace of the PSD square root
/// without forming the matrix.
pub fn trace_sqrt_psd(a: &[f64], d: usize) -> Result<f64> {
    let eigen = sym_eigen(a, d)?;
    Ok(eigen.values.iter().map(|&l| l.max(0.0).sqrt()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_symmetric(d: usize, seed: u64) -> Vec<f64> {
        let mut rng = Rng::new(seed);
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let x = rng.uniform_in(-2.0, 2.0);
                m[i * d + j] = x;
                m[j * d + i] = x;
            }
        }
        m
    }

    fn random_psd(d: usize, seed: u64) -> Vec<f64> {
        // C^T C is PSD for any C.
        let mut rng = Rng::new(seed);
        let c: Vec<f64> = (0..d * d).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for t in 0..d {
                    acc += c[t * d + i] * c[t * d + j];
                }
                out[i * d + j] = acc;
            }
        }
        out
    }

    #[test]
    fn identity_has_unit_eigenvalues() {
        let mut m = vec![0.0; 9];
        for i in 0..3 {
            m[i * 3 + i] = 1.0;
        }
        let eigen = sym_eigen(&m, 3).unwrap();
        for &l in &eigen.values {
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn known_two_by_two() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let eigen = sym_eigen(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        let mut values = eigen.values.clone();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((values[0] - 1.0).abs() < 1e-12);
        assert!((values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        for seed in [1, 2, 3] {
            let d = 8;
            let m = random_symmetric(d, seed);
            let eigen = sym_eigen(&m, d).unwrap();
            // V Lambda V^T == M
            for i in 0..d {
                for j in 0..d {
                    let mut acc = 0.0;
                    for t in 0..d {
                        acc +=
                            eigen.vectors[i * d + t] * eigen.values[t] * eigen.vectors[j * d + t];
                    }
                    assert!(
                        (acc - m[i * d + j]).abs() < 1e-9,
                        "seed {seed} entry ({i},{j})"
                    );
                }
            }
            // V^T V == I
            for a in 0..d {
                for b in 0..d {
                    let mut dot = 0.0;
                    for i in 0..d {
                        dot += eigen.vectors[i * d + a] * eigen.vectors[i * d + b];
                    }
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10, "seed {seed} pair ({a},{b})");
                }
            }
        }
    }

    #[test]
    fn sqrt_of_diagonal_matrix() {
        let m = vec![4.0, 0.0, 0.0, 9.0];
        let root = sqrt_psd(&m, 2).unwrap();
        assert!((root[0] - 2.0).abs() < 1e-12);
        assert!((root[3] - 3.0).abs() < 1e-12);
        assert!(root[1].abs() < 1e-12 && root[2].abs() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        for seed in [4, 5] {
            let d = 6;
            let m = random_psd(d, seed);
            let root = sqrt_psd(&m, d).unwrap();
            let squared = matmul_sq(&root, &root, d);
            for (got, want) in squared.iter().zip(&m) {
                assert!((got - want).abs() < 1e-9, "seed {seed}");
            }
        }
    }

    #[test]
    fn trace_shortcut_matches_full_root() {
        let d = 5;
        let m = random_psd(d, 6);
        let root = sqrt_psd(&m, d).unwrap();
        let full_trace: f64 = (0..d).map(|i| root[i * d + i]).sum();
        let shortcut = trace_sqrt_psd(&m, d).unwrap();
        assert!((full_trace - shortcut).abs() < 1e-10);
    }

    #[test]
    fn negative_eigenvalues_are_clamped() {
        // diag(-1, 4): the -1 branch clamps to 0, so sqrt is diag(0, 2).
        let m = vec![-1.0, 0.0, 0.0, 4.0];
        let root = sqrt_psd(&m, 2).unwrap();
        assert!(root[0].abs() < 1e-12);
        assert!((root[3] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn shape_validation() {
        assert!(sym_eigen(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(sym_eigen(&[], 0).is_err());
    }
}
