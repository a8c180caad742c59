//! Convergence reporting: per-iteration CSV rows and a plain-text summary
//! in the comparison-table format (computation time, successful/failed
//! steps, total Newton iterations).

use std::fmt::Write as _;
use std::time::Duration;

use crate::continuation::ContinuationOutcome;
use crate::newton::NewtonOutcome;
use crate::pseudo_transient::PseudoTransientOutcome;

pub const CSV_HEADER: &str = "stage,step,attempt,q_or_dt,newton_iter,res_l2,res_inf,omega,lin_iters,accepted";

/// One CSV row; one row per Newton iteration (plus one for the q = 0
/// linear solve of the continuation strategy).
#[derive(Debug, Clone)]
pub struct CsvRow {
    pub stage: &'static str,
    pub step: usize,
    pub attempt: usize,
    pub q_or_dt: f64,
    pub newton_iter: usize,
    pub res_l2: f64,
    pub res_inf: f64,
    pub omega: f64,
    pub lin_iters: usize,
    pub accepted: bool,
}

impl CsvRow {
    fn format(&self) -> String {
        format!(
            "{},{},{},{:.12e},{},{:.12e},{:.12e},{:.12e},{},{}",
            self.stage,
            self.step,
            self.attempt,
            self.q_or_dt,
            self.newton_iter,
            self.res_l2,
            self.res_inf,
            self.omega,
            self.lin_iters,
            self.accepted
        )
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub strategy: String,
    pub rows: Vec<CsvRow>,
    pub successful_steps: usize,
    pub failed_steps: usize,
    pub total_newton_iterations: usize,
    pub converged: bool,
    /// Failure class name when not converged.
    pub failure: Option<String>,
    pub final_res_l2: f64,
    pub final_res_inf: f64,
    pub wall_time: Duration,
    pub hook_applied: bool,
}

impl ConvergenceReport {
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.format());
            out.push('\n');
        }
        out
    }

    /// Comparison-table style summary.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "strategy: {}", self.strategy);
        let _ = writeln!(s, "status: {}", if self.converged { "converged" } else { "failed" });
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "failure: {f}");
        }
        let _ = writeln!(s, "T_comp, s: {:.3}", self.wall_time.as_secs_f64());
        let _ = writeln!(
            s,
            "# of successful (failed) steps: {}({})",
            self.successful_steps, self.failed_steps
        );
        let _ = writeln!(s, "# of Newton iterations: {}", self.total_newton_iterations);
        let _ = writeln!(s, "final residual l2: {:.6e}", self.final_res_l2);
        let _ = writeln!(s, "final residual inf: {:.6e}", self.final_res_inf);
        if self.hook_applied {
            let _ = writeln!(s, "correction hook: active");
        }
        s
    }

    fn push_newton_rows(
        rows: &mut Vec<CsvRow>,
        stage: &'static str,
        step: usize,
        attempt: usize,
        q_or_dt: f64,
        accepted: bool,
        newton: &NewtonOutcome,
    ) {
        for rec in &newton.records {
            rows.push(CsvRow {
                stage,
                step,
                attempt,
                q_or_dt,
                newton_iter: rec.iteration,
                res_l2: rec.res_l2,
                res_inf: rec.res_inf,
                omega: rec.omega,
                lin_iters: rec.linear_iterations,
                accepted,
            });
        }
    }

    pub fn from_continuation(outcome: &ContinuationOutcome, wall_time: Duration) -> Self {
        let mut rows = Vec::new();
        rows.push(CsvRow {
            stage: "linear",
            step: 0,
            attempt: 0,
            q_or_dt: 0.0,
            newton_iter: 0,
            res_l2: outcome.linear_start.res_l2,
            res_inf: outcome.linear_start.res_inf,
            omega: 1.0,
            lin_iters: outcome.linear_start.iterations,
            accepted: true,
        });
        let mut step = 1usize;
        let mut attempt = 0usize;
        let mut hook = false;
        for a in &outcome.attempts {
            Self::push_newton_rows(&mut rows, "continuation", step, attempt, a.q, a.accepted, &a.newton);
            hook |= a.newton.hook_applied;
            if a.accepted {
                step += 1;
                attempt = 0;
            } else {
                attempt += 1;
            }
        }
        let (final_l2, final_inf) = outcome
            .attempts
            .iter()
            .filter(|a| a.accepted)
            .next_back()
            .map(|a| (a.newton.final_res_l2(), a.newton.final_res_inf()))
            .unwrap_or((outcome.linear_start.res_l2, outcome.linear_start.res_inf));
        ConvergenceReport {
            strategy: "continuation".into(),
            rows,
            successful_steps: outcome.successful_steps,
            failed_steps: outcome.failed_steps,
            total_newton_iterations: outcome.total_newton_iterations,
            converged: outcome.solved(),
            failure: (!outcome.solved()).then(|| "continuation_step_floor".into()),
            final_res_l2: final_l2,
            final_res_inf: final_inf,
            wall_time,
            hook_applied: hook,
        }
    }

    pub fn from_pseudo_transient(outcome: &PseudoTransientOutcome, wall_time: Duration) -> Self {
        use crate::pseudo_transient::PseudoTransientStatus;
        let mut rows = Vec::new();
        let mut hook = false;
        for rec in &outcome.records {
            Self::push_newton_rows(
                &mut rows,
                "pseudo_transient",
                rec.step,
                rec.attempt,
                rec.dt,
                rec.accepted,
                &rec.newton,
            );
            hook |= rec.newton.hook_applied;
        }
        let (final_l2, final_inf) = outcome
            .records
            .iter()
            .filter_map(|r| r.steady_norms)
            .next_back()
            .unwrap_or((outcome.initial_steady_l2, outcome.initial_steady_inf));
        let failure = match outcome.status {
            PseudoTransientStatus::SteadyStateReached => None,
            PseudoTransientStatus::StepFloorReached => Some("pseudo_transient_step_floor".into()),
            PseudoTransientStatus::MaxStepsExceeded => Some("pseudo_transient_max_steps".into()),
        };
        ConvergenceReport {
            strategy: "pseudo_transient".into(),
            rows,
            successful_steps: outcome.steps_taken,
            failed_steps: outcome.failed_attempts,
            total_newton_iterations: outcome.total_newton_iterations,
            converged: outcome.steady(),
            failure,
            final_res_l2: final_l2,
            final_res_inf: final_inf,
            wall_time,
            hook_applied: hook,
        }
    }

    pub fn from_newton(outcome: &NewtonOutcome, q: f64, wall_time: Duration) -> Self {
        use crate::newton::NewtonStatus;
        let mut rows = Vec::new();
        Self::push_newton_rows(&mut rows, "newton", 1, 0, q, outcome.converged(), outcome);
        let failure = match outcome.status {
            NewtonStatus::Converged => None,
            NewtonStatus::LineSearchFailed => Some("newton_line_search".into()),
            NewtonStatus::MaxIterExceeded => Some("newton_max_iterations".into()),
            NewtonStatus::LinearSolveFailed => Some("linear_solver".into()),
        };
        ConvergenceReport {
            strategy: "newton".into(),
            rows,
            successful_steps: usize::from(outcome.converged()),
            failed_steps: usize::from(!outcome.converged()),
            total_newton_iterations: outcome.iterations,
            converged: outcome.converged(),
            failure,
            final_res_l2: outcome.final_res_l2(),
            final_res_inf: outcome.final_res_inf(),
            wall_time,
            hook_applied: outcome.hook_applied,
        }
    }
}
