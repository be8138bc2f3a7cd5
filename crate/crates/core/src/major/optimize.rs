//! Projected gradient descent on the major control path.

use crate::equilibrium::{solve_fixed_point, EquilibriumOptions, EquilibriumSolution, MajorPath};
use crate::error::{Error, Result};
use crate::grid::Grids;
use crate::major::adjoint::{evaluate_J0, solve_adjoints, AdjointBundle, AdjointOptions};
use crate::measure::JointLaw;
use crate::model::GameModel;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    /// Stop when the projected stationarity residual is at most this, sup over time.
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Step tried first at every outer iteration; halved on each rejection.
    pub step: f64,
    pub max_halvings: usize,
    pub x0_init: f64,
    /// Starting control path; zeros when absent.
    pub u0_init: Option<Vec<f64>>,
    pub equilibrium: EquilibriumOptions,
    pub adjoint: AdjointOptions,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            outer_tol: 1e-5,
            outer_max_iter: 50,
            step: 0.5,
            max_halvings: 20,
            x0_init: 0.0,
            u0_init: None,
            equilibrium: EquilibriumOptions {
                tol: 1e-9,
                ..EquilibriumOptions::default()
            },
            adjoint: AdjointOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimized {
    pub u0: Vec<f64>,
    pub x0: Vec<f64>,
    pub eq: EquilibriumSolution,
    pub bundle: AdjointBundle,
    /// `J0` at the start and after every accepted step.
    pub j0_history: Vec<f64>,
    /// Sup-norm projected residual at each accepted iterate.
    pub residual_history: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
}

impl Optimized {
    pub fn j0(&self) -> f64 {
        *self.j0_history.last().expect("history holds the baseline")
    }
}

struct Point {
    u0: Vec<f64>,
    eq: EquilibriumSolution,
    j0: f64,
}

fn evaluate<M: GameModel + ?Sized>(
    model: &M,
    omega: &JointLaw,
    grids: &Grids,
    options: &OptimizeOptions,
    u0: Vec<f64>,
    warm: Option<Vec<JointLaw>>,
) -> Result<Point> {
    let eq = solve_fixed_point(
        model,
        &MajorPath::Integrated { initial: options.x0_init },
        &u0,
        omega,
        grids,
        &options.equilibrium,
        warm,
    )?;
    if !eq.converged {
        log::warn!("inner equilibrium not converged (residual {:e})", eq.final_residual());
    }
    let j0 = evaluate_J0(model, &eq.x0, &u0, &eq.pi_path, &grids.time)?;
    Ok(Point { u0, eq, j0 })
}

/// `u − P(u − res)` sup norm: the residual with active box constraints removed.
fn projected_residual<M: GameModel + ?Sized>(model: &M, u0: &[f64], res: &[f64]) -> f64 {
    let b = model.major_box();
    u0.iter()
        .zip(res)
        .map(|(u, g)| (u - b.clamp(u - g)).abs())
        .fold(0.0, f64::max)
}

/// Minimizes `J0` over piecewise-constant major controls.
///
/// Each outer iteration solves the adjoint at the current equilibrium, steps
/// along the negative stationarity residual, projects onto the major box and
/// accepts the trial only if `J0` decreases, halving the step otherwise.
pub fn optimize_u0<M: GameModel + ?Sized>(
    model: &M,
    omega: &JointLaw,
    grids: &Grids,
    options: &OptimizeOptions,
) -> Result<Optimized> {
    if !(options.outer_tol > 0.0) || !(options.step > 0.0) {
        return Err(Error::InvalidArgument("outer tolerance and step must be positive".into()));
    }
    let steps = grids.time.steps();
    let u_init = options.u0_init.clone().unwrap_or_else(|| vec![0.0; steps]);
    if u_init.len() != steps {
        return Err(Error::InvalidArgument(format!(
            "initial control path needs {steps} entries (got {})",
            u_init.len()
        )));
    }
    let bx = model.major_box();
    let u_init = u_init.iter().map(|u| bx.clamp(*u)).collect();
    let wrap = |iteration: usize| move |e: Error| Error::Outer { iteration, source: Box::new(e) };
    let mut current = evaluate(model, omega, grids, options, u_init, None).map_err(wrap(0))?;
    let mut bundle = solve_adjoints(model, &current.eq, &options.adjoint).map_err(wrap(0))?;
    let mut j0_history = vec![current.j0];
    let mut residual_history = vec![projected_residual(model, &current.u0, &bundle.stationarity)];
    let mut converged = residual_history[0] <= options.outer_tol;
    let mut iteration = 0;
    while !converged && iteration < options.outer_max_iter {
        iteration += 1;
        let mut step = options.step;
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let trial: Vec<f64> = current
                .u0
                .iter()
                .zip(&bundle.stationarity)
                .map(|(u, g)| bx.clamp(u - step * g))
                .collect();
            let point = evaluate(model, omega, grids, options, trial, Some(current.eq.pi_path.clone()))
                .map_err(wrap(iteration))?;
            if point.j0 < current.j0 {
                accepted = Some(point);
                break;
            }
            step *= 0.5;
        }
        let Some(point) = accepted else {
            log::info!("outer iteration {iteration}: no decrease after {} halvings", options.max_halvings);
            break;
        };
        current = point;
        bundle = solve_adjoints(model, &current.eq, &options.adjoint).map_err(wrap(iteration))?;
        let res = projected_residual(model, &current.u0, &bundle.stationarity);
        log::info!("outer iteration {iteration}: J0 = {:e}, residual = {res:e}, step = {step}", current.j0);
        j0_history.push(current.j0);
        residual_history.push(res);
        converged = res <= options.outer_tol;
    }
    Ok(Optimized {
        x0: current.eq.x0.clone(),
        u0: current.u0,
        eq: current.eq,
        bundle,
        j0_history,
        residual_history,
        outer_iterations: iteration,
        converged,
    })
}
