//! Newton iteration with backtracking line search.
//!
//! The update direction solves J(h)·Δh = −F(h). The first few iterations
//! take the full step unconditionally (the residual may legitimately grow
//! there); afterwards the step is scaled by the first Ω from the sequence
//! 1, γ, γ², … that strictly reduces the ℓ₂ residual norm. Convergence is
//! declared when the residual drops below `eps_rel·‖r₀‖₂` or its max norm
//! falls below `eps_abs`.

use log::{debug, trace};

use crate::linsolve::{bicgstab_solve, ilu_factorize_with_retry, LinearSolveError, LinearSolverConfig};
use crate::sparse::{axpy, norm_inf, norm_l2, SparseSystem};
use crate::state::HeadState;

/// A nonlinear system providing residual and Jacobian evaluations.
///
/// `jacobian_system` returns the Jacobian together with the right-hand side
/// −F(h), assembled from the same face pass as the residual.
pub trait NonlinearSystem {
    fn dim(&self) -> usize;
    fn residual(&self, state: &[f64]) -> Vec<f64>;
    fn jacobian_system(&self, state: &[f64]) -> SparseSystem;
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig {
    pub eps_rel: f64,
    pub eps_abs: f64,
    pub max_iterations: usize,
    /// Line-search backtracking factor γ.
    pub gamma: f64,
    /// Smallest admissible step scale; the default allows 7 refinements.
    pub omega_min: f64,
    /// Accepted-iteration index at which line search activates.
    pub line_search_start_iter: usize,
    pub use_line_search: bool,
    /// Fixed relaxation factor; disables line search when set.
    pub fixed_omega: Option<f64>,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            eps_rel: 1e-5,
            eps_abs: 1e-5,
            max_iterations: 25,
            gamma: 0.25,
            omega_min: 0.25f64.powi(7),
            line_search_start_iter: 5,
            use_line_search: true,
            fixed_omega: None,
        }
    }
}

/// Shared convergence test: ‖r‖₂ < ε_rel·‖r₀‖₂ or ‖r‖_∞ < ε_abs.
pub fn convergence_met(res_l2: f64, res_inf: f64, initial_res_l2: f64, config: &NewtonConfig) -> bool {
    res_l2 < config.eps_rel * initial_res_l2 || res_inf < config.eps_abs
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NewtonStatus {
    Converged,
    LineSearchFailed,
    MaxIterExceeded,
    LinearSolveFailed,
}

/// Per-iteration diagnostics (post-update residual norms).
#[derive(Debug, Clone)]
pub struct NewtonIterationRecord {
    pub iteration: usize,
    pub res_l2: f64,
    pub res_inf: f64,
    /// Accepted step scale (1 when line search was not active).
    pub omega: f64,
    pub linear_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub status: NewtonStatus,
    /// Last accepted state.
    pub state: HeadState,
    /// Number of accepted iterations.
    pub iterations: usize,
    pub initial_res_l2: f64,
    pub initial_res_inf: f64,
    pub records: Vec<NewtonIterationRecord>,
    pub hook_applied: bool,
    pub linear_failure: Option<LinearSolveError>,
}

impl NewtonOutcome {
    pub fn converged(&self) -> bool {
        self.status == NewtonStatus::Converged
    }

    pub fn residual_history(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.res_l2).collect()
    }

    pub fn omega_history(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.omega).collect()
    }

    pub fn final_res_l2(&self) -> f64 {
        self.records.last().map_or(self.initial_res_l2, |r| r.res_l2)
    }

    pub fn final_res_inf(&self) -> f64 {
        self.records.last().map_or(self.initial_res_inf, |r| r.res_inf)
    }
}

/// State correction applied after each accepted update.
pub type CorrectionHook<'a> = &'a (dyn Fn(&mut [f64]) + Sync);

#[derive(Debug, Clone)]
pub struct LineSearchResult {
    pub omega: f64,
    pub state: Vec<f64>,
    pub residual: Vec<f64>,
    /// Ω values evaluated, in order.
    pub tried: Vec<f64>,
}

/// Backtracks over Ω ∈ {1, γ, γ², …, ≥ omega_min} until the trial residual
/// satisfies ‖F(h + Ω·Δh)‖₂ < base_norm. Returns the accepted scale, state
/// and the already-evaluated residual; `None` when no admissible Ω works.
pub fn line_search<P: NonlinearSystem>(
    problem: &P,
    base: &[f64],
    direction: &[f64],
    base_norm_l2: f64,
    gamma: f64,
    omega_min: f64,
) -> Option<LineSearchResult> {
    let mut omega = 1.0f64;
    let mut tried = Vec::new();
    while omega >= omega_min {
        tried.push(omega);
        let mut trial = base.to_vec();
        axpy(omega, direction, &mut trial);
        let residual = problem.residual(&trial);
        let norm = norm_l2(&residual);
        if norm < base_norm_l2 {
            return Some(LineSearchResult {
                omega,
                state: trial,
                residual,
                tried,
            });
        }
        trace!("line search rejected omega = {omega:.3e} (|r| {norm:.6e} >= {base_norm_l2:.6e})");
        omega *= gamma;
    }
    None
}

/// Newton solve of `problem` starting from `initial`.
pub fn newton_solve<P: NonlinearSystem>(
    problem: &P,
    initial: &HeadState,
    config: &NewtonConfig,
    linear: &LinearSolverConfig,
    hook: Option<CorrectionHook>,
) -> NewtonOutcome {
    assert_eq!(initial.len(), problem.dim());
    let mut state = initial.clone();
    let r = problem.residual(&state);
    let initial_res_l2 = norm_l2(&r);
    let initial_res_inf = norm_inf(&r);
    let mut outcome = NewtonOutcome {
        status: NewtonStatus::MaxIterExceeded,
        state: state.clone(),
        iterations: 0,
        initial_res_l2,
        initial_res_inf,
        records: Vec::new(),
        hook_applied: false,
        linear_failure: None,
    };
    if initial_res_inf < config.eps_abs {
        outcome.status = NewtonStatus::Converged;
        return outcome;
    }

    let mut res_l2 = initial_res_l2;
    for k in 0..config.max_iterations {
        let system = problem.jacobian_system(&state);
        let pre = match ilu_factorize_with_retry(&system.matrix, linear.ilu_level) {
            Ok((pre, shift)) => {
                if let Some(s) = shift {
                    debug!("iteration {k}: ILU retried with diagonal shift {s:.3e}");
                }
                pre
            }
            Err(e) => {
                outcome.status = NewtonStatus::LinearSolveFailed;
                outcome.linear_failure = Some(e);
                return outcome;
            }
        };
        let solution = match bicgstab_solve(&system.matrix, &system.rhs, &pre, linear) {
            Ok(s) => s,
            Err(e) => {
                outcome.status = NewtonStatus::LinearSolveFailed;
                outcome.linear_failure = Some(e);
                return outcome;
            }
        };

        let line_search_active = config.use_line_search
            && config.fixed_omega.is_none()
            && k >= config.line_search_start_iter;
        let (omega, mut new_state, mut new_residual) = if line_search_active {
            match line_search(
                problem,
                &state,
                &solution.x,
                res_l2,
                config.gamma,
                config.omega_min,
            ) {
                Some(ls) => (ls.omega, ls.state, Some(ls.residual)),
                None => {
                    outcome.status = NewtonStatus::LineSearchFailed;
                    outcome.state = state;
                    return outcome;
                }
            }
        } else {
            let omega = config.fixed_omega.unwrap_or(1.0);
            let mut trial = state.as_slice().to_vec();
            axpy(omega, &solution.x, &mut trial);
            (omega, trial, None)
        };

        if let Some(hook_fn) = hook {
            hook_fn(&mut new_state);
            outcome.hook_applied = true;
            new_residual = None;
        }
        let residual = new_residual.unwrap_or_else(|| problem.residual(&new_state));
        res_l2 = norm_l2(&residual);
        let res_inf = norm_inf(&residual);
        debug!(
            "iteration {}: |r|_2 {res_l2:.6e} |r|_inf {res_inf:.6e} omega {omega} lin_iters {}",
            k + 1,
            solution.iterations
        );
        outcome.records.push(NewtonIterationRecord {
            iteration: k + 1,
            res_l2,
            res_inf,
            omega,
            linear_iterations: solution.iterations,
        });
        state = HeadState(new_state);
        outcome.state = state.clone();
        outcome.iterations = k + 1;
        if convergence_met(res_l2, res_inf, initial_res_l2, config) {
            outcome.status = NewtonStatus::Converged;
            return outcome;
        }
    }
    outcome
}

/// Least-squares estimate of the convergence order p from consecutive
/// residual norms (fits log r_{k+1} against log r_k over the last
/// `pairs` pairs above the roundoff floor).
pub fn fitted_convergence_order(residuals: &[f64], pairs: usize, floor: f64) -> Option<f64> {
    let valid: Vec<(f64, f64)> = residuals
        .windows(2)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| (w[0].ln(), w[1].ln()))
        .collect();
    if valid.len() < 2 {
        return None;
    }
    let tail = &valid[valid.len().saturating_sub(pairs)..];
    if tail.len() < 2 {
        return None;
    }
    let n = tail.len() as f64;
    let mean_x = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = tail.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = tail.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;
    use std::cell::Cell;

    /// Scalar problem F(x) = f(x) with analytic derivative.
    struct Scalar<F, D> {
        f: F,
        df: D,
        residual_calls: Cell<usize>,
    }

    impl<F: Fn(f64) -> f64, D: Fn(f64) -> f64> Scalar<F, D> {
        fn new(f: F, df: D) -> Self {
            Scalar {
                f,
                df,
                residual_calls: Cell::new(0),
            }
        }
    }

    impl<F: Fn(f64) -> f64, D: Fn(f64) -> f64> NonlinearSystem for Scalar<F, D> {
        fn dim(&self) -> usize {
            1
        }
        fn residual(&self, state: &[f64]) -> Vec<f64> {
            self.residual_calls.set(self.residual_calls.get() + 1);
            vec![(self.f)(state[0])]
        }
        fn jacobian_system(&self, state: &[f64]) -> SparseSystem {
            let mut m = CsrMatrix::from_pattern(1, &[vec![0]]);
            m.values[0] = (self.df)(state[0]);
            SparseSystem {
                matrix: m,
                rhs: vec![-(self.f)(state[0])],
            }
        }
    }

    /// Affine system A·x − b on 2 unknowns.
    struct Affine {
        a: CsrMatrix,
        b: Vec<f64>,
    }

    impl NonlinearSystem for Affine {
        fn dim(&self) -> usize {
            2
        }
        fn residual(&self, state: &[f64]) -> Vec<f64> {
            let mut ax = vec![0.0; 2];
            self.a.mul_vec(state, &mut ax);
            ax.iter().zip(&self.b).map(|(axi, bi)| axi - bi).collect()
        }
        fn jacobian_system(&self, state: &[f64]) -> SparseSystem {
            SparseSystem {
                matrix: self.a.clone(),
                rhs: self.residual(state).iter().map(|r| -r).collect(),
            }
        }
    }

    fn affine() -> Affine {
        let mut a = CsrMatrix::from_pattern(2, &[vec![0, 1], vec![0, 1]]);
        a.values = vec![3.0, 1.0, 1.0, 2.0];
        Affine {
            a,
            b: vec![5.0, 5.0],
        }
    }

    #[test]
    fn linear_problem_converges_in_one_iteration() {
        let problem = affine();
        let out = newton_solve(
            &problem,
            &HeadState::constant(2, 10.0),
            &NewtonConfig::default(),
            &LinearSolverConfig::default(),
            None,
        );
        assert!(out.converged());
        assert_eq!(out.iterations, 1);
        assert!((out.state[0] - 1.0).abs() < 1e-8);
        assert!((out.state[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn zero_initial_residual_converges_without_iterating() {
        let problem = affine();
        let out = newton_solve(
            &problem,
            &HeadState(vec![1.0, 2.0]),
            &NewtonConfig::default(),
            &LinearSolverConfig::default(),
            None,
        );
        assert!(out.converged());
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn converged_state_satisfies_tests_on_reevaluation() {
        let problem = Scalar::new(|x| x * x * x - 1.0, |x| 3.0 * x * x);
        let cfg = NewtonConfig::default();
        let out = newton_solve(
            &problem,
            &HeadState(vec![3.0]),
            &cfg,
            &LinearSolverConfig::default(),
            None,
        );
        assert!(out.converged());
        let r = problem.residual(&out.state);
        assert!(convergence_met(
            norm_l2(&r),
            norm_inf(&r),
            out.initial_res_l2,
            &cfg
        ));
    }

    #[test]
    fn line_search_matches_brute_force_on_cubic() {
        // F(x) = x^3 - 1 at x = -2: the Newton direction is 0.75.
        let problem = Scalar::new(|x| x * x * x - 1.0, |x| 3.0 * x * x);
        let base = [-2.0];
        let f0: f64 = 9.0;
        let direction = [0.75];
        let ls = line_search(&problem, &base, &direction, f0, 0.25, 0.25f64.powi(7)).unwrap();
        // Brute force over the same candidate sequence.
        let mut expected = None;
        let mut omega = 1.0;
        while omega >= 0.25f64.powi(7) {
            if ((base[0] + omega * direction[0]).powi(3) - 1.0).abs() < f0 {
                expected = Some(omega);
                break;
            }
            omega *= 0.25;
        }
        assert_eq!(Some(ls.omega), expected);
    }

    #[test]
    fn ascent_direction_fails_after_seven_refinements() {
        // F(x) = x^2 - 4 at x = 3; +5/6 points uphill.
        let problem = Scalar::new(|x| x * x - 4.0, |x| 2.0 * x);
        let out = line_search(&problem, &[3.0], &[5.0 / 6.0], 5.0, 0.25, 0.25f64.powi(7));
        assert!(out.is_none());
        // Candidates tried: 0.25^0 .. 0.25^7.
        assert_eq!(problem.residual_calls.get(), 8);
    }

    #[test]
    fn omega_sequence_is_exact_backtracking_powers() {
        // atan is shallow far out: the full Newton step from x = 1 overshoots
        // badly and the residual grows, forcing one backtrack.
        let problem = Scalar::new(|x| (5.0 * x).atan(), |x| 5.0 / (1.0 + 25.0 * x * x));
        let base = [1.0];
        let f0 = (5.0f64).atan();
        let newton_dir = -(5.0f64).atan() / (5.0 / 26.0);
        let ls = line_search(&problem, &base, &[newton_dir], f0, 0.25, 0.25f64.powi(7)).unwrap();
        assert_eq!(ls.tried, vec![1.0, 0.25]);
        assert_eq!(ls.omega, 0.25);
    }

    #[test]
    fn line_search_is_skipped_for_early_iterations() {
        // With the default start index 5, a 1-iteration solve never searches:
        // accepted residual may even grow if it did not, but on the affine
        // problem the first full step is exact.
        let problem = affine();
        let out = newton_solve(
            &problem,
            &HeadState::constant(2, -40.0),
            &NewtonConfig::default(),
            &LinearSolverConfig::default(),
            None,
        );
        assert!(out.converged());
        assert_eq!(out.omega_history(), vec![1.0]);
    }

    #[test]
    fn fixed_omega_scales_the_update() {
        let problem = affine();
        let cfg = NewtonConfig {
            fixed_omega: Some(0.5),
            max_iterations: 60,
            ..Default::default()
        };
        let initial = HeadState::constant(2, 0.0);
        let out = newton_solve(
            &problem,
            &initial,
            &cfg,
            &LinearSolverConfig::default(),
            None,
        );
        // First update must be exactly half the Newton step for an affine
        // problem: x1 = 0.5 * (solution - 0).
        assert!(out.converged());
        assert!(out.omega_history().iter().all(|&w| w == 0.5));
        assert!(out.iterations > 1);
    }

    #[test]
    fn correction_hook_is_applied_and_recorded() {
        let problem = affine();
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let hook = |state: &mut [f64]| {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            for x in state.iter_mut() {
                if !x.is_finite() {
                    *x = 0.0;
                }
            }
        };
        let out = newton_solve(
            &problem,
            &HeadState::constant(2, 7.0),
            &NewtonConfig::default(),
            &LinearSolverConfig::default(),
            Some(&hook),
        );
        assert!(out.converged());
        assert!(out.hook_applied);
        assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), out.iterations);
        assert!(out.state.all_finite());
    }

    #[test]
    fn default_outcome_reports_no_hook() {
        let problem = affine();
        let out = newton_solve(
            &problem,
            &HeadState::constant(2, 7.0),
            &NewtonConfig::default(),
            &LinearSolverConfig::default(),
            None,
        );
        assert!(!out.hook_applied);
    }

    #[test]
    fn max_iterations_is_reported() {
        // A residual that never shrinks below tolerance within the budget.
        let problem = Scalar::new(|x: f64| x.exp() + 1.0, |x| x.exp());
        let cfg = NewtonConfig {
            max_iterations: 3,
            use_line_search: false,
            ..Default::default()
        };
        let out = newton_solve(
            &problem,
            &HeadState(vec![0.0]),
            &cfg,
            &LinearSolverConfig::default(),
            None,
        );
        assert_eq!(out.status, NewtonStatus::MaxIterExceeded);
        assert_eq!(out.iterations, 3);
    }

    #[test]
    fn quadratic_convergence_order_is_observed() {
        let problem = Scalar::new(|x| x * x - 4.0, |x| 2.0 * x);
        let cfg = NewtonConfig {
            eps_rel: 1e-14,
            eps_abs: 1e-13,
            ..Default::default()
        };
        let out = newton_solve(
            &problem,
            &HeadState(vec![3.0]),
            &cfg,
            &LinearSolverConfig::default(),
            None,
        );
        assert!(out.converged());
        let p = fitted_convergence_order(&out.residual_history(), 3, 1e-13).unwrap();
        assert!(p >= 1.7, "observed order {p}");
    }
}
