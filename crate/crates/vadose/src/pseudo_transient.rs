//! Pseudo-transient baseline: implicit-Euler time stepping of the transient
//! equation until the steady residual passes the steady convergence test.
//!
//! Each step solves the implicit-Euler system by Newton seeded with the
//! previous step's solution. The step size grows by 1.5× after a step whose
//! Newton iteration count stayed within `numit_inc`, and halves when Newton
//! fails (the step is retried from the unchanged old state).

use log::info;

use crate::discretization::SteadyProblem;
use crate::newton::{convergence_met, newton_solve, NewtonConfig, NewtonOutcome};
use crate::sparse::{norm_inf, norm_l2};
use crate::state::HeadState;
use crate::linsolve::LinearSolverConfig;

#[derive(Debug, Clone, Copy)]
pub struct PseudoTransientConfig {
    /// Initial time step, days.
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub dt_growth: f64,
    pub dt_shrink: f64,
    /// Step size grows only when a step converged within this many
    /// Newton iterations.
    pub numit_inc: usize,
    pub max_steps: usize,
    /// Whether in-step Newton uses line search (normally unnecessary:
    /// the previous step's solution is already a good initial guess).
    pub line_search_in_step: bool,
}

impl Default for PseudoTransientConfig {
    fn default() -> Self {
        PseudoTransientConfig {
            dt_init: 1e-2,
            dt_min: 1e-8,
            dt_max: 1e6,
            dt_growth: 1.5,
            dt_shrink: 0.5,
            numit_inc: 15,
            max_steps: 1000,
            line_search_in_step: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudoTransientStatus {
    SteadyStateReached,
    StepFloorReached,
    MaxStepsExceeded,
}

/// One attempted time step.
#[derive(Debug, Clone)]
pub struct TimeStepRecord {
    /// Index of the accepted step this attempt belongs to (1-based).
    pub step: usize,
    /// Attempt number within the step (0 = first try).
    pub attempt: usize,
    pub dt: f64,
    pub accepted: bool,
    pub newton: NewtonOutcome,
    /// Steady residual norms after an accepted step.
    pub steady_norms: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct PseudoTransientOutcome {
    pub status: PseudoTransientStatus,
    pub state: HeadState,
    pub records: Vec<TimeStepRecord>,
    pub steps_taken: usize,
    pub failed_attempts: usize,
    pub total_newton_iterations: usize,
    /// Steady residual norms at the initial state.
    pub initial_steady_l2: f64,
    pub initial_steady_inf: f64,
}

impl PseudoTransientOutcome {
    pub fn steady(&self) -> bool {
        self.status == PseudoTransientStatus::SteadyStateReached
    }
}

/// The two operations the time-stepping loop needs from a problem.
pub trait TransientStepper {
    /// Newton solve of the implicit-Euler system over `dt` from `old`.
    fn step(&mut self, old: &HeadState, dt: f64) -> NewtonOutcome;
    /// Steady residual norms (ℓ₂, ∞) of `state`.
    fn steady_norms(&mut self, state: &HeadState) -> (f64, f64);
}

/// Runs pseudo-transient stepping until the steady residual satisfies the
/// same convergence test Newton uses (relative to the steady residual of
/// the initial state).
pub fn pseudo_transient_solve<S: TransientStepper>(
    stepper: &mut S,
    initial: &HeadState,
    newton: &NewtonConfig,
    config: &PseudoTransientConfig,
) -> PseudoTransientOutcome {
    let (r0_l2, r0_inf) = stepper.steady_norms(initial);
    let mut outcome = PseudoTransientOutcome {
        status: PseudoTransientStatus::MaxStepsExceeded,
        state: initial.clone(),
        records: Vec::new(),
        steps_taken: 0,
        failed_attempts: 0,
        total_newton_iterations: 0,
        initial_steady_l2: r0_l2,
        initial_steady_inf: r0_inf,
    };
    if convergence_met(r0_l2, r0_inf, r0_l2, newton) {
        outcome.status = PseudoTransientStatus::SteadyStateReached;
        return outcome;
    }

    let mut dt = config.dt_init.clamp(config.dt_min, config.dt_max);
    let mut attempt = 0usize;
    while outcome.steps_taken < config.max_steps {
        let step_outcome = stepper.step(&outcome.state, dt);
        outcome.total_newton_iterations += step_outcome.iterations;
        if step_outcome.converged() {
            let iterations = step_outcome.iterations;
            outcome.state = step_outcome.state.clone();
            outcome.steps_taken += 1;
            let (l2, inf) = stepper.steady_norms(&outcome.state);
            info!(
                "step {} accepted: dt {dt:.3e}, {iterations} Newton iterations, steady |r|_2 {l2:.6e}",
                outcome.steps_taken
            );
            outcome.records.push(TimeStepRecord {
                step: outcome.steps_taken,
                attempt,
                dt,
                accepted: true,
                newton: step_outcome,
                steady_norms: Some((l2, inf)),
            });
            attempt = 0;
            if convergence_met(l2, inf, r0_l2, newton) {
                outcome.status = PseudoTransientStatus::SteadyStateReached;
                return outcome;
            }
            if iterations <= config.numit_inc {
                dt = (dt * config.dt_growth).min(config.dt_max);
            }
        } else {
            info!("step {} attempt {attempt} failed at dt {dt:.3e}", outcome.steps_taken + 1);
            outcome.failed_attempts += 1;
            outcome.records.push(TimeStepRecord {
                step: outcome.steps_taken + 1,
                attempt,
                dt,
                accepted: false,
                newton: step_outcome,
                steady_norms: None,
            });
            attempt += 1;
            let next = dt * config.dt_shrink;
            if next < config.dt_min {
                outcome.status = PseudoTransientStatus::StepFloorReached;
                return outcome;
            }
            dt = next;
        }
    }
    outcome
}

/// Time stepper over a [`SteadyProblem`].
pub struct RichardsStepper<'a> {
    pub problem: &'a SteadyProblem,
    pub newton: NewtonConfig,
    pub linear: LinearSolverConfig,
}

impl TransientStepper for RichardsStepper<'_> {
    fn step(&mut self, old: &HeadState, dt: f64) -> NewtonOutcome {
        let system = self.problem.transient(old.as_slice(), dt);
        newton_solve(&system, old, &self.newton, &self.linear, None)
    }

    fn steady_norms(&mut self, state: &HeadState) -> (f64, f64) {
        let r = self.problem.residual(state.as_slice(), 1.0);
        (norm_l2(&r), norm_inf(&r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newton::{NewtonIterationRecord, NewtonStatus};

    /// Scripted stepper: each entry is (converges, iterations). The steady
    /// residual becomes small only after the script is exhausted.
    struct Scripted {
        script: Vec<(bool, usize)>,
        cursor: usize,
        dts_seen: Vec<f64>,
    }

    impl Scripted {
        fn new(script: Vec<(bool, usize)>) -> Self {
            Scripted {
                script,
                cursor: 0,
                dts_seen: Vec::new(),
            }
        }
    }

    impl TransientStepper for Scripted {
        fn step(&mut self, old: &HeadState, dt: f64) -> NewtonOutcome {
            self.dts_seen.push(dt);
            let (ok, iterations) = self.script.get(self.cursor).copied().unwrap_or((true, 1));
            self.cursor += 1;
            NewtonOutcome {
                status: if ok {
                    NewtonStatus::Converged
                } else {
                    NewtonStatus::MaxIterExceeded
                },
                state: old.clone(),
                iterations,
                initial_res_l2: 1.0,
                initial_res_inf: 1.0,
                records: vec![NewtonIterationRecord {
                    iteration: 1,
                    res_l2: 0.1,
                    res_inf: 0.1,
                    omega: 1.0,
                    linear_iterations: 1,
                }],
                hook_applied: false,
                linear_failure: None,
            }
        }

        fn steady_norms(&mut self, _state: &HeadState) -> (f64, f64) {
            if self.cursor >= self.script.len() {
                (1e-12, 1e-12)
            } else {
                (1.0, 1.0)
            }
        }
    }

    fn cfg(dt_init: f64, numit_inc: usize) -> PseudoTransientConfig {
        PseudoTransientConfig {
            dt_init,
            dt_min: 1e-6,
            dt_max: 100.0,
            numit_inc,
            max_steps: 50,
            ..Default::default()
        }
    }

    #[test]
    fn already_steady_initial_state_takes_no_steps() {
        // Empty script => steady from the start (norms 1e-12 < eps_abs).
        let mut s = Scripted::new(vec![]);
        let out = pseudo_transient_solve(
            &mut s,
            &HeadState(vec![1.0]),
            &NewtonConfig::default(),
            &cfg(1.0, 15),
        );
        assert!(out.steady());
        assert_eq!(out.steps_taken, 0);
        assert!(s.dts_seen.is_empty());
    }

    #[test]
    fn dt_follows_growth_and_shrink_rules_exactly() {
        // numit_inc = 3. Script: ok(2) grow, ok(5) hold, fail halve,
        // ok(1) grow, ok(3) grow, then steady.
        let mut s = Scripted::new(vec![(true, 2), (true, 5), (false, 0), (true, 1), (true, 3)]);
        let out = pseudo_transient_solve(
            &mut s,
            &HeadState(vec![1.0]),
            &NewtonConfig::default(),
            &cfg(1.0, 3),
        );
        assert!(out.steady());
        let expected = vec![1.0, 1.5, 1.5, 0.75, 1.125];
        assert_eq!(s.dts_seen, expected);
        assert_eq!(out.steps_taken, 4);
        assert_eq!(out.failed_attempts, 1);
        assert_eq!(out.total_newton_iterations, 2 + 5 + 0 + 1 + 3);
    }

    #[test]
    fn dt_is_capped_at_dt_max() {
        let script = vec![(true, 1); 20];
        let mut s = Scripted::new(script);
        let mut config = cfg(40.0, 15);
        config.dt_max = 100.0;
        let out = pseudo_transient_solve(&mut s, &HeadState(vec![1.0]), &NewtonConfig::default(), &config);
        assert!(out.steady());
        assert!(s.dts_seen.iter().all(|&dt| dt <= 100.0));
        assert_eq!(s.dts_seen[0], 40.0);
        assert_eq!(s.dts_seen[1], 60.0);
        assert_eq!(s.dts_seen[2], 90.0);
        assert_eq!(s.dts_seen[3], 100.0);
        assert_eq!(s.dts_seen[4], 100.0);
    }

    #[test]
    fn persistent_failure_reaches_the_floor() {
        let mut s = Scripted::new(vec![(false, 0); 100]);
        let mut config = cfg(1.0, 15);
        config.dt_min = 1e-3;
        let out = pseudo_transient_solve(&mut s, &HeadState(vec![1.0]), &NewtonConfig::default(), &config);
        assert_eq!(out.status, PseudoTransientStatus::StepFloorReached);
        assert_eq!(out.steps_taken, 0);
        // dt halves from 1.0 while dt/2 >= 1e-3: 1, 0.5, ..., 2^-9.
        assert_eq!(s.dts_seen.len(), 10);
        assert!(s.dts_seen.iter().all(|&dt| dt >= 1e-3));
    }

    #[test]
    fn max_steps_is_reported() {
        let mut s = Scripted::new(vec![(true, 1); 1000]);
        let mut config = cfg(1.0, 15);
        config.max_steps = 7;
        let out = pseudo_transient_solve(&mut s, &HeadState(vec![1.0]), &NewtonConfig::default(), &config);
        assert_eq!(out.status, PseudoTransientStatus::MaxStepsExceeded);
        assert_eq!(out.steps_taken, 7);
    }
}
