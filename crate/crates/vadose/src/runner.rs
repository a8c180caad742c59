//! Problem runner: dispatches a parsed configuration to the selected
//! solver strategy and writes the output files (head.vtk, convergence.csv,
//! summary.txt).

use std::fs;
use std::path::Path;
use std::time::Instant;

use log::info;

use crate::config::{ProblemConfig, Strategy};
use crate::continuation::{continuation_solve, ContinuationStepper, SteadyStepper};
use crate::discretization::SteadyProblem;
use crate::error::Error;
use crate::newton::NewtonConfig;
use crate::pseudo_transient::{pseudo_transient_solve, RichardsStepper};
use crate::report::ConvergenceReport;
use crate::state::HeadState;
use crate::vtk::write_vtk_file;

/// Exit status classes of a run.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_LINEAR_SOLVER: i32 = 2;
pub const EXIT_NEWTON: i32 = 3;
pub const EXIT_CONTINUATION_FLOOR: i32 = 4;
pub const EXIT_PSEUDO_TRANSIENT: i32 = 5;
pub const EXIT_IO: i32 = 6;

#[derive(Debug)]
pub struct RunSummary {
    pub exit_code: i32,
    pub report: ConvergenceReport,
    /// Final state, when the strategy produced one.
    pub state: Option<HeadState>,
}

/// Initial state for the nonlinear strategies: a constant head when
/// configured, otherwise the q = 0 linear solution.
fn initial_state(
    problem: &SteadyProblem,
    config: &ProblemConfig,
) -> Result<HeadState, Error> {
    if let Some(h0) = config.solver.initial_head {
        return Ok(HeadState::constant(problem.cell_count(), h0));
    }
    let mut stepper = SteadyStepper::new(
        problem,
        config.solver.newton,
        config.solver.linear,
    );
    let (state, _) = stepper.solve_linear()?;
    Ok(state)
}

/// Runs the configured strategy and writes outputs into `out_dir`.
///
/// Solver failures are reported through the summary (nonzero exit code and
/// a failure class in summary.txt); `Err` is reserved for configuration
/// and I/O problems.
pub fn run(config: &ProblemConfig, out_dir: &Path) -> Result<RunSummary, Error> {
    fs::create_dir_all(out_dir)?;
    let problem = config.build_problem()?;
    info!(
        "problem: {} cells, strategy {}, kind {}, kr scheme {}",
        problem.cell_count(),
        config.solver.strategy.name(),
        problem.kind.name(),
        problem.kr_scheme.name()
    );

    let started = Instant::now();
    let (report, state) = match config.solver.strategy {
        Strategy::Continuation => {
            let mut stepper = SteadyStepper::new(&problem, config.solver.newton, config.solver.linear);
            if let Some(h0) = config.solver.initial_head {
                stepper = stepper.with_initial(HeadState::constant(problem.cell_count(), h0));
            }
            match continuation_solve(&mut stepper, &config.solver.continuation) {
                Ok(outcome) => {
                    let report = ConvergenceReport::from_continuation(&outcome, started.elapsed());
                    (report, Some(outcome.state))
                }
                Err(e) => {
                    let report = failure_report("continuation", "linear_solver", started, &e);
                    write_outputs(out_dir, &report, None, &problem)?;
                    return Ok(RunSummary {
                        exit_code: EXIT_LINEAR_SOLVER,
                        report,
                        state: None,
                    });
                }
            }
        }
        Strategy::PseudoTransient => {
            let initial = match initial_state(&problem, config) {
                Ok(s) => s,
                Err(e) => {
                    let report = failure_report("pseudo_transient", "linear_solver", started, &e);
                    write_outputs(out_dir, &report, None, &problem)?;
                    return Ok(RunSummary {
                        exit_code: EXIT_LINEAR_SOLVER,
                        report,
                        state: None,
                    });
                }
            };
            let newton = NewtonConfig {
                use_line_search: config.solver.pseudo_transient.line_search_in_step,
                ..config.solver.newton
            };
            let mut stepper = RichardsStepper {
                problem: &problem,
                newton,
                linear: config.solver.linear,
            };
            let outcome = pseudo_transient_solve(
                &mut stepper,
                &initial,
                &config.solver.newton,
                &config.solver.pseudo_transient,
            );
            let report = ConvergenceReport::from_pseudo_transient(&outcome, started.elapsed());
            (report, Some(outcome.state))
        }
        Strategy::Newton => {
            let initial = match initial_state(&problem, config) {
                Ok(s) => s,
                Err(e) => {
                    let report = failure_report("newton", "linear_solver", started, &e);
                    write_outputs(out_dir, &report, None, &problem)?;
                    return Ok(RunSummary {
                        exit_code: EXIT_LINEAR_SOLVER,
                        report,
                        state: None,
                    });
                }
            };
            let outcome = crate::newton::newton_solve(
                &problem.at_q(1.0),
                &initial,
                &config.solver.newton,
                &config.solver.linear,
                None,
            );
            let report = ConvergenceReport::from_newton(&outcome, 1.0, started.elapsed());
            (report, Some(outcome.state))
        }
    };

    let exit_code = exit_code_for(&report);
    write_outputs(out_dir, &report, state.as_ref(), &problem)?;
    Ok(RunSummary {
        exit_code,
        report,
        state,
    })
}

fn exit_code_for(report: &ConvergenceReport) -> i32 {
    if report.converged {
        return EXIT_OK;
    }
    match report.failure.as_deref() {
        Some("linear_solver") => EXIT_LINEAR_SOLVER,
        Some("continuation_step_floor") => EXIT_CONTINUATION_FLOOR,
        Some(f) if f.starts_with("pseudo_transient") => EXIT_PSEUDO_TRANSIENT,
        Some(f) if f.starts_with("newton") => EXIT_NEWTON,
        _ => EXIT_NEWTON,
    }
}

fn failure_report(
    strategy: &str,
    failure: &str,
    started: Instant,
    error: &Error,
) -> ConvergenceReport {
    ConvergenceReport {
        strategy: strategy.into(),
        rows: Vec::new(),
        successful_steps: 0,
        failed_steps: 0,
        total_newton_iterations: 0,
        converged: false,
        failure: Some(format!("{failure}: {error}")),
        final_res_l2: f64::NAN,
        final_res_inf: f64::NAN,
        wall_time: started.elapsed(),
        hook_applied: false,
    }
}

fn write_outputs(
    out_dir: &Path,
    report: &ConvergenceReport,
    state: Option<&HeadState>,
    problem: &SteadyProblem,
) -> Result<(), Error> {
    fs::write(out_dir.join("convergence.csv"), report.csv())?;
    fs::write(out_dir.join("summary.txt"), report.summary_text())?;
    if let Some(state) = state {
        let saturation = problem.saturation_field(state);
        let water_content = problem.water_content_field(state);
        write_vtk_file(
            &out_dir.join("head.vtk"),
            &problem.mesh,
            &[
                ("head", state.as_slice()),
                ("saturation", &saturation),
                ("water_content", &water_content),
            ],
        )?;
    }
    Ok(())
}

/// Maps setup errors (bad configuration, bad mesh) to the configuration
/// exit class; used by the CLI.
pub fn exit_code_for_error(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::Mesh(_) | Error::Setup(_) => EXIT_CONFIG,
        Error::LinearSolve(_) => EXIT_LINEAR_SOLVER,
        Error::Nonlinear(_) => EXIT_NEWTON,
        Error::Io(_) => EXIT_IO,
    }
}
