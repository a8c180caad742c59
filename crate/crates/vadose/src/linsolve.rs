//! Sparse linear solver: ILU(k)-preconditioned BiCGSTAB.
//!
//! Jacobian systems of the TPFA discretization on structured grids are
//! well handled by ILU(0); the fill level is configurable for harder
//! cases. Natural ordering is kept throughout.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::sparse::{axpy, dot, norm_l2, CsrMatrix};

#[derive(Debug, Clone, Copy)]
pub struct LinearSolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iters: usize,
    /// ILU fill level k.
    pub ilu_level: usize,
}

impl Default for LinearSolverConfig {
    fn default() -> Self {
        LinearSolverConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            max_iters: 5000,
            ilu_level: 0,
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum LinearSolveError {
    #[error("zero pivot in ILU factorization at row {row}")]
    ZeroPivot { row: usize },
    #[error("matrix has no structural diagonal entry in row {row}")]
    MissingDiagonal { row: usize },
    #[error("BiCGSTAB breakdown at iteration {iteration} ({what})")]
    Breakdown { iteration: usize, what: &'static str },
    #[error("BiCGSTAB reached the iteration limit {iterations} with residual {residual:.3e} > tolerance {tolerance:.3e}")]
    IterationLimit {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },
    #[error("dimension mismatch: matrix is {n}x{n} but rhs has length {len}")]
    DimensionMismatch { n: usize, len: usize },
}

/// Incomplete LU factors on the level-k fill pattern. The unit lower factor
/// and the upper factor share one CSR layout.
#[derive(Debug, Clone)]
pub struct IluPreconditioner {
    factor: CsrMatrix,
    diag_index: Vec<usize>,
}

const PIVOT_TINY: f64 = 1e-300;

/// Symbolic level-k fill pattern of the factorization.
fn symbolic_levels(matrix: &CsrMatrix, level: usize) -> Result<Vec<Vec<usize>>, LinearSolveError> {
    let n = matrix.n;
    let cap = level as u32;
    let mut pattern: Vec<Vec<usize>> = Vec::with_capacity(n);
    // Upper-triangular parts (col > row) of the already processed rows,
    // with their fill levels.
    let mut upper: Vec<Vec<(usize, u32)>> = Vec::with_capacity(n);

    for i in 0..n {
        let mut row: BTreeMap<usize, u32> = matrix.row_cols(i).iter().map(|&j| (j, 0)).collect();
        if !row.contains_key(&i) {
            return Err(LinearSolveError::MissingDiagonal { row: i });
        }
        let mut next = 0usize;
        while let Some((&k, &lev_ik)) = row.range(next..i).next() {
            next = k + 1;
            for &(j, lev_kj) in &upper[k] {
                let lev = lev_ik + lev_kj + 1;
                if lev <= cap {
                    row.entry(j)
                        .and_modify(|l| *l = (*l).min(lev))
                        .or_insert(lev);
                }
            }
        }
        upper.push(row.range(i + 1..).map(|(&j, &l)| (j, l)).collect());
        pattern.push(row.into_keys().collect());
    }
    Ok(pattern)
}

/// Computes the ILU(k) factorization of `matrix`.
pub fn ilu_factorize(
    matrix: &CsrMatrix,
    level: usize,
) -> Result<IluPreconditioner, LinearSolveError> {
    let n = matrix.n;
    let pattern = symbolic_levels(matrix, level)?;
    let mut factor = CsrMatrix::from_pattern(n, &pattern);
    for i in 0..n {
        for (pos, &j) in matrix.row_cols(i).iter().enumerate() {
            let idx = factor.entry_index(i, j).expect("pattern contains matrix entries");
            factor.values[idx] = matrix.row_values(i)[pos];
        }
    }
    let diag_index: Vec<usize> = (0..n)
        .map(|i| factor.entry_index(i, i).expect("diagonal present"))
        .collect();

    // IKJ elimination restricted to the pattern, with a dense scratch row.
    let mut w = vec![0.0f64; n];
    let mut marker = vec![usize::MAX; n];
    for i in 0..n {
        let (lo, hi) = (factor.row_offsets[i], factor.row_offsets[i + 1]);
        for idx in lo..hi {
            w[factor.col_indices[idx]] = factor.values[idx];
            marker[factor.col_indices[idx]] = i;
        }
        for idx in lo..hi {
            let k = factor.col_indices[idx];
            if k >= i {
                break;
            }
            let ukk = factor.values[diag_index[k]];
            if ukk.abs() < PIVOT_TINY {
                return Err(LinearSolveError::ZeroPivot { row: k });
            }
            let lik = w[k] / ukk;
            w[k] = lik;
            let (klo, khi) = (factor.row_offsets[k], factor.row_offsets[k + 1]);
            for kidx in klo..khi {
                let j = factor.col_indices[kidx];
                if j > k && marker[j] == i {
                    w[j] -= lik * factor.values[kidx];
                }
            }
        }
        if w[i].abs() < PIVOT_TINY {
            return Err(LinearSolveError::ZeroPivot { row: i });
        }
        for idx in lo..hi {
            factor.values[idx] = w[factor.col_indices[idx]];
        }
    }

    Ok(IluPreconditioner { factor, diag_index })
}

/// Factorizes with one diagonal-shift retry (`10⁻⁸·max|a_ii|`) on zero pivot.
pub fn ilu_factorize_with_retry(
    matrix: &CsrMatrix,
    level: usize,
) -> Result<(IluPreconditioner, Option<f64>), LinearSolveError> {
    match ilu_factorize(matrix, level) {
        Ok(p) => Ok((p, None)),
        Err(LinearSolveError::ZeroPivot { .. }) => {
            let shift = 1e-8 * matrix.max_abs_diag();
            let shifted = matrix.shift_diagonal(shift);
            ilu_factorize(&shifted, level).map(|p| (p, Some(shift)))
        }
        Err(e) => Err(e),
    }
}

impl IluPreconditioner {
    /// z = (LU)⁻¹ r
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.factor.n;
        debug_assert_eq!(r.len(), n);
        debug_assert_eq!(z.len(), n);
        z.copy_from_slice(r);
        // Forward solve with unit lower factor.
        for i in 0..n {
            let lo = self.factor.row_offsets[i];
            let mut acc = z[i];
            for idx in lo..self.diag_index[i] {
                acc -= self.factor.values[idx] * z[self.factor.col_indices[idx]];
            }
            z[i] = acc;
        }
        // Backward solve with upper factor.
        for i in (0..n).rev() {
            let hi = self.factor.row_offsets[i + 1];
            let mut acc = z[i];
            for idx in self.diag_index[i] + 1..hi {
                acc -= self.factor.values[idx] * z[self.factor.col_indices[idx]];
            }
            z[i] = acc / self.factor.values[self.diag_index[i]];
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True residual norm ‖b − A·x‖₂ recomputed at the returned solution.
    pub residual_norm: f64,
}

/// Solves A·x = b with preconditioned BiCGSTAB from a zero initial guess.
///
/// Convergence target: ‖b − A·x‖₂ ≤ max(rel_tol·‖b‖₂, abs_tol), verified on
/// the recomputed true residual, not the recurrence value.
pub fn bicgstab_solve(
    a: &CsrMatrix,
    b: &[f64],
    pre: &IluPreconditioner,
    config: &LinearSolverConfig,
) -> Result<LinearSolution, LinearSolveError> {
    let n = a.n;
    if b.len() != n {
        return Err(LinearSolveError::DimensionMismatch { n, len: b.len() });
    }
    let b_norm = norm_l2(b);
    let tol = (config.rel_tol * b_norm).max(config.abs_tol);
    let mut x = vec![0.0f64; n];
    if b_norm == 0.0 {
        return Ok(LinearSolution {
            x,
            iterations: 0,
            residual_norm: 0.0,
        });
    }

    let mut r = b.to_vec();
    if norm_l2(&r) <= tol {
        return Ok(LinearSolution {
            x,
            iterations: 0,
            residual_norm: norm_l2(&r),
        });
    }
    let r_hat = r.clone();
    let mut rho_prev = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0f64; n];
    let mut p = vec![0.0f64; n];
    let mut p_hat = vec![0.0f64; n];
    let mut s_hat = vec![0.0f64; n];
    let mut t = vec![0.0f64; n];

    let true_residual = |x: &[f64]| -> Vec<f64> {
        let mut ax = vec![0.0f64; n];
        a.mul_vec(x, &mut ax);
        b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect()
    };

    for iteration in 1..=config.max_iters {
        let rho = dot(&r_hat, &r);
        if rho.abs() < PIVOT_TINY {
            return Err(LinearSolveError::Breakdown {
                iteration,
                what: "rho ~ 0",
            });
        }
        if iteration == 1 {
            p.copy_from_slice(&r);
        } else {
            let beta = (rho / rho_prev) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
        pre.apply(&p, &mut p_hat);
        a.mul_vec(&p_hat, &mut v);
        let denom = dot(&r_hat, &v);
        if denom.abs() < PIVOT_TINY {
            return Err(LinearSolveError::Breakdown {
                iteration,
                what: "r_hat . v ~ 0",
            });
        }
        alpha = rho / denom;
        // s = r - alpha v
        let mut s = r.clone();
        axpy(-alpha, &v, &mut s);
        if norm_l2(&s) <= tol {
            axpy(alpha, &p_hat, &mut x);
            let rt = true_residual(&x);
            let rn = norm_l2(&rt);
            if rn <= tol {
                return Ok(LinearSolution {
                    x,
                    iterations: iteration,
                    residual_norm: rn,
                });
            }
            r = rt;
            rho_prev = rho;
            continue;
        }
        pre.apply(&s, &mut s_hat);
        a.mul_vec(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if tt.abs() < PIVOT_TINY {
            return Err(LinearSolveError::Breakdown {
                iteration,
                what: "t . t ~ 0",
            });
        }
        omega = dot(&t, &s) / tt;
        if omega.abs() < PIVOT_TINY {
            return Err(LinearSolveError::Breakdown {
                iteration,
                what: "omega ~ 0",
            });
        }
        axpy(alpha, &p_hat, &mut x);
        axpy(omega, &s_hat, &mut x);
        r = s;
        axpy(-omega, &t, &mut r);
        if norm_l2(&r) <= tol {
            let rt = true_residual(&x);
            let rn = norm_l2(&rt);
            if rn <= tol {
                return Ok(LinearSolution {
                    x,
                    iterations: iteration,
                    residual_norm: rn,
                });
            }
            r = rt;
        }
        rho_prev = rho;
    }

    let rn = norm_l2(&true_residual(&x));
    Err(LinearSolveError::IterationLimit {
        iterations: config.max_iters,
        residual: rn,
        tolerance: tol,
    })
}
