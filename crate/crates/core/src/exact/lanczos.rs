use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Required residual `||Hv - Ev||` for every returned pair.
    pub tolerance: f64,
    pub max_krylov: usize,
    pub max_restarts: usize,
    /// Problems up to this dimension are diagonalized densely.
    pub dense_limit: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tolerance: 1e-11,
            max_krylov: 120,
            max_restarts: 200,
            dense_limit: 256,
            seed: 0x5eed_1a2c,
        }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn project_out(basis: &[Vec<Complex64>], w: &mut [Complex64]) {
    for v in basis {
        let c = dot(v, w);
        axpy(-c, v, w);
    }
}

/// All eigenpairs of a Hermitian matrix, eigenvalues ascending.
pub fn dense_hermitian_eigen(m: DMatrix<Complex64>) -> Vec<(f64, Vec<Complex64>)> {
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, Vec<Complex64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &e)| (e, eig.eigenvectors.column(k).iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

fn residual(
    op: &impl Fn(&[Complex64], &mut [Complex64]),
    e: f64,
    v: &[Complex64],
    scratch: &mut [Complex64],
) -> f64 {
    op(v, scratch);
    scratch
        .iter()
        .zip(v)
        .map(|(hv, x)| (hv - e * x).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Lowest `n_eigs` eigenpairs of the Hermitian operator `op` (`y = H x`).
///
/// Eigenpairs are found one at a time by restarted Lanczos with full
/// reorthogonalization; converged vectors are locked and projected out of later
/// Krylov spaces, so degenerate levels are resolved. The start vector is a seeded
/// complex Gaussian.
pub fn lanczos_lowest(
    op: impl Fn(&[Complex64], &mut [Complex64]),
    dim: usize,
    n_eigs: usize,
    opts: &LanczosOptions,
) -> Result<Vec<(f64, Vec<Complex64>)>> {
    if n_eigs == 0 || n_eigs > dim {
        return Err(Error::InvalidDimensions(format!(
            "requested {n_eigs} eigenpairs of a {dim}-dimensional operator"
        )));
    }
    let mut scratch = vec![Complex64::default(); dim];

    if dim <= opts.dense_limit {
        let mut m = DMatrix::<Complex64>::zeros(dim, dim);
        let mut e = vec![Complex64::default(); dim];
        for j in 0..dim {
            e.fill(Complex64::default());
            e[j] = Complex64::new(1.0, 0.0);
            op(&e, &mut scratch);
            for i in 0..dim {
                m[(i, j)] = scratch[i];
            }
        }
        // symmetrize away rounding in the assembled columns
        let m = (&m + m.adjoint()).scale(0.5);
        let pairs: Vec<_> = dense_hermitian_eigen(m).into_iter().take(n_eigs).collect();
        for (e, v) in &pairs {
            let r = residual(&op, *e, v, &mut scratch);
            if r > opts.tolerance.max(1e-10) {
                return Err(Error::NoConvergence {
                    residual: r,
                    iterations: 0,
                });
            }
        }
        return Ok(pairs);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked: Vec<Vec<Complex64>> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut total_iters = 0usize;

    for _ in 0..n_eigs {
        let mut start: Vec<Complex64> = (0..dim)
            .map(|_| {
                Complex64::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                )
            })
            .collect();
        project_out(&locked, &mut start);
        project_out(&locked, &mut start);
        let mut converged = None;
        let mut last_res = f64::INFINITY;

        for _ in 0..opts.max_restarts {
            let nrm = norm(&start);
            let mut basis: Vec<Vec<Complex64>> = vec![start.iter().map(|x| x / nrm).collect()];
            let mut alphas: Vec<f64> = Vec::new();
            let mut betas: Vec<f64> = Vec::new();
            let krylov = opts.max_krylov.min(dim - locked.len()).max(1);
            loop {
                let j = basis.len() - 1;
                let mut w = vec![Complex64::default(); dim];
                op(&basis[j], &mut w);
                total_iters += 1;
                let alpha = dot(&basis[j], &w).re;
                alphas.push(alpha);
                // two passes of classical Gram-Schmidt against everything kept so far
                for _ in 0..2 {
                    project_out(&locked, &mut w);
                    project_out(&basis, &mut w);
                }
                let beta = norm(&w);
                let scale = alphas.iter().fold(1.0f64, |m, a| m.max(a.abs()));
                if basis.len() >= krylov || beta < 1e-13 * scale {
                    break;
                }
                betas.push(beta);
                basis.push(w.iter().map(|x| x / beta).collect());
            }
            let k = alphas.len();
            let mut t = DMatrix::<f64>::zeros(k, k);
            for i in 0..k {
                t[(i, i)] = alphas[i];
                if i + 1 < k {
                    t[(i, i + 1)] = betas[i];
                    t[(i + 1, i)] = betas[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let imin = eig
                .eigenvalues
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .expect("non-empty tridiagonal");
            let y = eig.eigenvectors.column(imin);
            let mut x = vec![Complex64::default(); dim];
            for (yi, v) in y.iter().zip(&basis) {
                axpy(Complex64::new(*yi, 0.0), v, &mut x);
            }
            project_out(&locked, &mut x);
            let nx = norm(&x);
            x.iter_mut().for_each(|c| *c /= nx);
            // Rayleigh quotient of the cleaned vector
            op(&x, &mut scratch);
            let rq = dot(&x, &scratch).re;
            let r = residual(&op, rq, &x, &mut scratch);
            last_res = r;
            if r <= opts.tolerance {
                converged = Some((rq, x));
                break;
            }
            start = x;
        }
        match converged {
            Some((e, v)) => {
                values.push(e);
                locked.push(v);
            }
            None => {
                return Err(Error::NoConvergence {
                    residual: last_res,
                    iterations: total_iters,
                })
            }
        }
    }

    let mut pairs: Vec<(f64, Vec<Complex64>)> = values.into_iter().zip(locked).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag_op(n: usize) -> impl Fn(&[Complex64], &mut [Complex64]) {
        // 1D Laplacian with known spectrum 2 - 2 cos(pi k / (n + 1))
        move |x, y| {
            for i in 0..n {
                let mut v = 2.0 * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < n {
                    v -= x[i + 1];
                }
                y[i] = v;
            }
        }
    }

    #[test]
    fn laplacian_lowest_modes() {
        let n = 600;
        let opts = LanczosOptions {
            tolerance: 1e-10,
            ..Default::default()
        };
        let pairs = lanczos_lowest(tridiag_op(n), n, 2, &opts).unwrap();
        for (k, (e, _)) in pairs.iter().enumerate() {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((e - exact).abs() < 1e-12, "{e} vs {exact}");
        }
    }

    #[test]
    fn dense_and_lanczos_agree() {
        let n = 300;
        let dense = lanczos_lowest(
            tridiag_op(n),
            n,
            3,
            &LanczosOptions {
                dense_limit: 1000,
                ..Default::default()
            },
        )
        .unwrap();
        let sparse = lanczos_lowest(
            tridiag_op(n),
            n,
            3,
            &LanczosOptions {
                dense_limit: 0,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in dense.iter().zip(&sparse) {
            assert!((a.0 - b.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_levels_are_all_found() {
        // two uncoupled copies of the same Laplacian: every level is doubly degenerate
        let n = 200;
        let half = tridiag_op(n);
        let op = move |x: &[Complex64], y: &mut [Complex64]| {
            let (x1, x2) = x.split_at(n);
            let (y1, y2) = y.split_at_mut(n);
            half(x1, y1);
            half(x2, y2);
        };
        let pairs = lanczos_lowest(
            op,
            2 * n,
            2,
            &LanczosOptions {
                dense_limit: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((pairs[0].0 - pairs[1].0).abs() < 1e-12);
        assert!(dot(&pairs[0].1, &pairs[1].1).norm() < 1e-10);
    }
}
