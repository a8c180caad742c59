//! Nonlinearity continuation: from the linear problem at q = 0 to the full
//! Richards problem at q = 1.
//!
//! The q = 0 problem needs a single linear solve. Each following step
//! targets q + Δq with Δq = min(1 − q, 2·Δq_last), retrying with halved Δq
//! when Newton fails and giving up once Δq reaches the floor.

use log::info;

use crate::discretization::SteadyProblem;
use crate::error::Error;
use crate::linsolve::{bicgstab_solve, ilu_factorize_with_retry, LinearSolverConfig};
use crate::newton::{newton_solve, CorrectionHook, NewtonConfig, NewtonOutcome};
use crate::sparse::{norm_inf, norm_l2};
use crate::state::HeadState;

#[derive(Debug, Clone, Copy)]
pub struct ContinuationConfig {
    /// Attempts stop once Δq is not above this floor.
    pub dq_min: f64,
    pub dq_growth: f64,
    pub dq_shrink: f64,
    /// Δq_last seed, so the first step tries q = 1 directly.
    pub dq_last_init: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            dq_min: 1e-4,
            dq_growth: 2.0,
            dq_shrink: 0.5,
            dq_last_init: 1.0,
        }
    }
}

impl ContinuationConfig {
    /// Step proposal Δq = min(1 − q, growth·Δq_last); never overshoots q = 1.
    pub fn schedule_step(&self, q: f64, dq_last: f64) -> f64 {
        (1.0 - q).min(self.dq_growth * dq_last)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuationStatus {
    Solved,
    StepFloorReached,
}

/// One Newton attempt at a target q.
#[derive(Debug, Clone)]
pub struct ContinuationAttempt {
    /// Target continuation parameter of the attempt.
    pub q: f64,
    pub dq: f64,
    pub accepted: bool,
    pub newton: NewtonOutcome,
}

/// Diagnostics of the q = 0 linear solve.
#[derive(Debug, Clone, Copy)]
pub struct LinearStartRecord {
    pub iterations: usize,
    pub res_l2: f64,
    pub res_inf: f64,
}

#[derive(Debug, Clone)]
pub struct ContinuationOutcome {
    pub status: ContinuationStatus,
    /// Last accepted state (the q = 1 solution when `Solved`).
    pub state: HeadState,
    pub linear_start: LinearStartRecord,
    pub attempts: Vec<ContinuationAttempt>,
    pub successful_steps: usize,
    pub failed_steps: usize,
    pub total_newton_iterations: usize,
}

impl ContinuationOutcome {
    pub fn solved(&self) -> bool {
        self.status == ContinuationStatus::Solved
    }
}

/// The two operations the continuation loop needs from a problem.
pub trait ContinuationStepper {
    /// Solves the q = 0 linear problem with one linear solve.
    fn solve_linear(&mut self) -> Result<(HeadState, LinearStartRecord), Error>;
    /// Newton solve at continuation parameter `q` starting from `initial`.
    fn newton_at(&mut self, q: f64, initial: &HeadState) -> NewtonOutcome;
}

/// Runs the continuation loop. `Err` is returned only when the q = 0 linear
/// solve fails; Newton failures are handled by step halving and reported
/// through the outcome status.
pub fn continuation_solve<S: ContinuationStepper>(
    stepper: &mut S,
    config: &ContinuationConfig,
) -> Result<ContinuationOutcome, Error> {
    let (mut state, linear_start) = stepper.solve_linear()?;
    let mut attempts: Vec<ContinuationAttempt> = Vec::new();
    let mut q = 0.0f64;
    let mut dq_last = config.dq_last_init;

    while q < 1.0 {
        let mut dq = config.schedule_step(q, dq_last);
        let mut advanced = false;
        while dq > config.dq_min {
            let target = if dq >= 1.0 - q { 1.0 } else { q + dq };
            info!("continuation attempt: q {q:.6} -> {target:.6} (dq {dq:.6})");
            let outcome = stepper.newton_at(target, &state);
            let accepted = outcome.converged();
            if accepted {
                state = outcome.state.clone();
            }
            attempts.push(ContinuationAttempt {
                q: target,
                dq,
                accepted,
                newton: outcome,
            });
            if accepted {
                dq_last = dq;
                q = target;
                advanced = true;
                break;
            }
            dq *= config.dq_shrink;
        }
        if !advanced {
            info!("continuation stopped: no admissible dq above {}", config.dq_min);
            return Ok(finish(ContinuationStatus::StepFloorReached, state, linear_start, attempts));
        }
    }
    Ok(finish(ContinuationStatus::Solved, state, linear_start, attempts))
}

fn finish(
    status: ContinuationStatus,
    state: HeadState,
    linear_start: LinearStartRecord,
    attempts: Vec<ContinuationAttempt>,
) -> ContinuationOutcome {
    let successful_steps = attempts.iter().filter(|a| a.accepted).count();
    let failed_steps = attempts.len() - successful_steps;
    let total_newton_iterations = attempts.iter().map(|a| a.newton.iterations).sum();
    ContinuationOutcome {
        status,
        state,
        linear_start,
        attempts,
        successful_steps,
        failed_steps,
        total_newton_iterations,
    }
}

/// Continuation driver over a [`SteadyProblem`]: the q = 0 system is
/// assembled at `initial` (which also freezes the seepage switch state for
/// that single linear solve) and each step runs Newton on the problem at
/// the target q.
pub struct SteadyStepper<'a> {
    pub problem: &'a SteadyProblem,
    pub newton: NewtonConfig,
    pub linear: LinearSolverConfig,
    pub initial: HeadState,
    pub hook: Option<CorrectionHook<'a>>,
}

impl<'a> SteadyStepper<'a> {
    pub fn new(problem: &'a SteadyProblem, newton: NewtonConfig, linear: LinearSolverConfig) -> Self {
        let initial = HeadState::zeros(problem.cell_count());
        SteadyStepper {
            problem,
            newton,
            linear,
            initial,
            hook: None,
        }
    }

    pub fn with_initial(mut self, initial: HeadState) -> Self {
        assert_eq!(initial.len(), self.problem.cell_count());
        self.initial = initial;
        self
    }
}

impl ContinuationStepper for SteadyStepper<'_> {
    fn solve_linear(&mut self) -> Result<(HeadState, LinearStartRecord), Error> {
        let system = self.problem.jacobian_system(&self.initial, 0.0);
        let (pre, _) = ilu_factorize_with_retry(&system.matrix, self.linear.ilu_level)?;
        let solution = bicgstab_solve(&system.matrix, &system.rhs, &pre, &self.linear)?;
        let mut state = self.initial.clone();
        for (s, d) in state.iter_mut().zip(&solution.x) {
            *s += d;
        }
        let residual = self.problem.residual(&state, 0.0);
        Ok((
            state,
            LinearStartRecord {
                iterations: solution.iterations,
                res_l2: norm_l2(&residual),
                res_inf: norm_inf(&residual),
            },
        ))
    }

    fn newton_at(&mut self, q: f64, initial: &HeadState) -> NewtonOutcome {
        newton_solve(
            &self.problem.at_q(q),
            initial,
            &self.newton,
            &self.linear,
            self.hook,
        )
    }
}
