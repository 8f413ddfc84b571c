//! Matrix-free restarted GMRES.
//!
//! The pressure four-point block system and the two implicit viscous
//! five-point block systems are solved through the [`LinearOperator`] trait;
//! no global matrix is ever formed. Modified Gram-Schmidt with a single
//! reorthogonalization pass keeps the Arnoldi basis usable for the
//! nonsymmetric space-time operators, and Givens rotations update the least
//! squares problem incrementally.

use crate::error::Error;

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// y = A x
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

#[derive(Debug, Clone)]
pub struct KrylovConfig {
    /// Relative residual target (against the rhs norm).
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    /// Start from the zero vector even if an initial guess is supplied.
    pub zero_guess: bool,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 2000,
            restart: 40,
            zero_guess: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmresResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve A x = rhs. `x0` seeds the iteration unless `cfg.zero_guess` is set.
pub fn gmres(
    op: &dyn LinearOperator,
    rhs: &[f64],
    cfg: &KrylovConfig,
    x0: Option<&[f64]>,
) -> Result<GmresResult, Error> {
    gmres_flex(op, None, rhs, cfg, x0)
}

/// Flexible right-preconditioned GMRES: when `prec` is given, the update is
/// built from the preconditioned basis vectors z_j = P(v_j), so P may itself
/// be an inexact (iterative) solve that varies between applications.
pub fn gmres_flex(
    op: &dyn LinearOperator,
    prec: Option<&dyn LinearOperator>,
    rhs: &[f64],
    cfg: &KrylovConfig,
    x0: Option<&[f64]>,
) -> Result<GmresResult, Error> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(Error::solver(format!(
            "gmres dimension mismatch: operator {n}, rhs {}",
            rhs.len()
        )));
    }
    if cfg.restart == 0 || cfg.tol <= 0.0 {
        return Err(Error::solver("gmres needs restart >= 1 and tol > 0"));
    }
    let b_norm = norm(rhs);
    if b_norm == 0.0 {
        return Ok(GmresResult {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    let mut x = match x0 {
        Some(g) if !cfg.zero_guess => g.to_vec(),
        _ => vec![0.0; n],
    };

    let m = cfg.restart;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    // Preconditioned directions (flexible variant only).
    let mut zdirs: Vec<Vec<f64>> = Vec::new();
    let mut h = vec![vec![0.0f64; m]; m + 1];
    let mut cs = vec![0.0f64; m];
    let mut sn = vec![0.0f64; m];
    let mut g = vec![0.0f64; m + 1];
    let mut total_iters = 0usize;
    let mut scratch = vec![0.0f64; n];

    loop {
        // Residual of the current iterate.
        op.apply(&x, &mut scratch);
        let mut r: Vec<f64> = rhs.iter().zip(&scratch).map(|(b, ax)| b - ax).collect();
        let r_norm = norm(&r);
        if r_norm <= cfg.tol * b_norm {
            return Ok(GmresResult {
                x,
                iterations: total_iters,
                residual: r_norm / b_norm,
                converged: true,
            });
        }
        if total_iters >= cfg.max_iter {
            return Ok(GmresResult {
                x,
                iterations: total_iters,
                residual: r_norm / b_norm,
                converged: false,
            });
        }

        for v in r.iter_mut() {
            *v /= r_norm;
        }
        basis.clear();
        zdirs.clear();
        basis.push(r);
        for row in h.iter_mut() {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = r_norm;

        let mut k_used = 0;
        let mut stop = false;
        for k in 0..m {
            if total_iters >= cfg.max_iter {
                break;
            }
            total_iters += 1;
            let mut w = match prec {
                Some(p) => {
                    let mut z = vec![0.0f64; n];
                    p.apply(&basis[k], &mut z);
                    op.apply(&z, &mut scratch);
                    zdirs.push(z);
                    scratch.clone()
                }
                None => {
                    op.apply(&basis[k], &mut scratch);
                    scratch.clone()
                }
            };
            let w_norm_in = norm(&w);
            for i in 0..=k {
                let hik = dot(&w, &basis[i]);
                h[i][k] = hik;
                for (wv, bv) in w.iter_mut().zip(&basis[i]) {
                    *wv -= hik * bv;
                }
            }
            // One reorthogonalization pass if cancellation was severe.
            if norm(&w) < 1e-8 * w_norm_in {
                for i in 0..=k {
                    let corr = dot(&w, &basis[i]);
                    h[i][k] += corr;
                    for (wv, bv) in w.iter_mut().zip(&basis[i]) {
                        *wv -= corr * bv;
                    }
                }
            }
            let w_norm = norm(&w);
            h[k + 1][k] = w_norm;

            // Apply accumulated Givens rotations to the new column.
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            let col_scale = (0..=k).map(|i| h[i][k].abs()).fold(w_norm, f64::max);
            if denom <= 1e-14 * col_scale.max(1e-300) {
                // The operator is (numerically) singular along this direction;
                // keep the least squares solution of the previous columns.
                if k == 0 && w_norm == 0.0 {
                    return Err(Error::solver(
                        "gmres breakdown: zero Arnoldi norm with nonzero residual",
                    ));
                }
                stop = true;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;

            let rel = g[k + 1].abs() / b_norm;
            if rel <= cfg.tol {
                stop = true;
                break;
            }
            if w_norm == 0.0 {
                // Happy breakdown: the Krylov space is invariant; the least
                // squares solution is exact.
                stop = true;
                break;
            }
            for v in w.iter_mut() {
                *v /= w_norm;
            }
            basis.push(w);
        }

        // Solve the triangular system and update x.
        let k = k_used;
        if k > 0 {
            let mut y = vec![0.0f64; k];
            for i in (0..k).rev() {
                let mut s = g[i];
                for j in (i + 1)..k {
                    s -= h[i][j] * y[j];
                }
                y[i] = s / h[i][i];
            }
            for (j, yj) in y.iter().enumerate() {
                let dir = if prec.is_some() { &zdirs[j] } else { &basis[j] };
                for (xi, di) in x.iter_mut().zip(dir) {
                    *xi += yj * di;
                }
            }
        }
        if stop || total_iters >= cfg.max_iter {
            op.apply(&x, &mut scratch);
            let res = rhs
                .iter()
                .zip(&scratch)
                .map(|(b, ax)| (b - ax) * (b - ax))
                .sum::<f64>()
                .sqrt();
            let rel = res / b_norm;
            return Ok(GmresResult {
                x,
                iterations: total_iters,
                residual: rel,
                converged: rel <= cfg.tol * 1.000001,
            });
        }
    }
}

/// Dense operator wrapper, mostly for tests and tiny systems.
pub struct DenseOperator<'a> {
    pub a: &'a nalgebra::DMatrix<f64>,
}

impl LinearOperator for DenseOperator<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.a.nrows() {
            let mut s = 0.0;
            for j in 0..self.a.ncols() {
                s += self.a[(i, j)] * x[j];
            }
            y[i] = s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    struct Diag(Vec<f64>);
    impl LinearOperator for Diag {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..x.len() {
                y[i] = self.0[i] * x[i];
            }
        }
    }

    fn rand_stream(seed: u64) -> impl FnMut() -> f64 {
        let mut state = seed;
        move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        }
    }

    #[test]
    fn identity_converges_in_one_iteration() {
        let op = Diag(vec![1.0; 8]);
        let rhs: Vec<f64> = (0..8).map(|i| i as f64 - 3.0).collect();
        let r = gmres(&op, &rhs, &KrylovConfig::default(), None).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        for i in 0..8 {
            assert!((r.x[i] - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_two_by_two() {
        let op = Diag(vec![2.0, 1.0]);
        let r = gmres(&op, &[2.0, 1.0], &KrylovConfig::default(), None).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-12 && (r.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_zero_solution() {
        let op = Diag(vec![3.0; 5]);
        let r = gmres(&op, &[0.0; 5], &KrylovConfig::default(), None).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.x.iter().all(|&v| v == 0.0));
    }

    /// Random SPD system vs a dense LU oracle.
    #[test]
    fn random_spd_matches_dense_oracle() {
        let n = 50;
        let mut rnd = rand_stream(7);
        let b = DMatrix::from_fn(n, n, |_, _| rnd());
        let a = &b * b.transpose() + DMatrix::identity(n, n) * (n as f64);
        let rhs: Vec<f64> = (0..n).map(|_| rnd()).collect();
        let oracle = a
            .clone()
            .lu()
            .solve(&nalgebra::DVector::from_vec(rhs.clone()))
            .unwrap();
        let cfg = KrylovConfig {
            tol: 1e-12,
            ..Default::default()
        };
        let r = gmres(&DenseOperator { a: &a }, &rhs, &cfg, None).unwrap();
        assert!(r.converged);
        for i in 0..n {
            assert!((r.x[i] - oracle[i]).abs() < 1e-9, "i={i}");
        }
    }

    /// Exact termination in at most n iterations when restart >= n.
    #[test]
    fn exact_termination_small_systems() {
        for n in 2..=20 {
            let mut rnd = rand_stream(n as u64 * 13 + 1);
            let mut a = DMatrix::from_fn(n, n, |_, _| rnd());
            for i in 0..n {
                a[(i, i)] += 3.0; // keep it comfortably nonsingular
            }
            let rhs: Vec<f64> = (0..n).map(|_| rnd()).collect();
            let cfg = KrylovConfig {
                tol: 1e-11,
                restart: n,
                max_iter: n,
                ..Default::default()
            };
            let r = gmres(&DenseOperator { a: &a }, &rhs, &cfg, None).unwrap();
            assert!(r.iterations <= n);
            assert!(r.residual < 1e-8, "n={n}, residual {}", r.residual);
        }
    }

    #[test]
    fn residual_monotone_within_cycle() {
        // GMRES minimizes the residual over a growing subspace, so truncating
        // at increasing iteration counts yields a non-increasing sequence.
        let n = 30;
        let mut rnd = rand_stream(99);
        let mut a = DMatrix::from_fn(n, n, |_, _| rnd());
        for i in 0..n {
            a[(i, i)] += 4.0;
        }
        let rhs: Vec<f64> = (0..n).map(|_| rnd()).collect();
        let mut prev = f64::MAX;
        for iters in 1..=n {
            let cfg = KrylovConfig {
                tol: 1e-15,
                restart: n,
                max_iter: iters,
                ..Default::default()
            };
            let r = gmres(&DenseOperator { a: &a }, &rhs, &cfg, None).unwrap();
            assert!(r.residual <= prev * (1.0 + 1e-12), "iters={iters}");
            prev = r.residual;
        }
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let op = Diag(vec![1.0; 4]);
        assert!(gmres(&op, &[1.0; 5], &KrylovConfig::default(), None).is_err());
    }
}
