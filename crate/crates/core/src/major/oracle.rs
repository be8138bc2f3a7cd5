//! Semi-explicit solution of the linear-quadratic benchmark.
//!
//! With the ansatz `Ψ(x, t) = ½P(t)x² + φ(t)x + s(t)` the minor HJB reduces
//! to a Riccati equation for `P`, a linear equation for `φ` driven by the
//! major path and the population means, and a quadrature for `s`. The mean
//! state `x̄` obeys a forward linear ODE, so `(x̄, φ)` is a linear two-point
//! boundary value problem solved here by shooting on `φ(0)`. Everything is
//! integrated with classical RK4 at a step `dt / refine`.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::lq::LqParams;

/// How the major control is generated inside the oracle.
#[derive(Debug, Clone, Copy)]
pub enum MajorControl<'a> {
    /// Piecewise constant, one value per interval of the coarse grid.
    Path(&'a [f64]),
    /// `u0 = θ1 + θ2·t + θ3·x0(t)`.
    Affine([f64; 3]),
    /// `u0 = −b0·P0(t)·x0(t)` with the major Riccati gain.
    RiccatiFeedback,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSetup {
    pub params: LqParams,
    pub time: TimeGrid,
    /// Initial major state.
    pub x0_init: f64,
    /// Mean and variance of the initial minor density.
    pub mean0: f64,
    pub var0: f64,
    /// RK4 substeps per coarse interval.
    pub refine: usize,
}

/// Oracle paths sampled at the coarse time nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LqOracle {
    pub t: Vec<f64>,
    /// Minor Riccati coefficient.
    pub p: Vec<f64>,
    /// Linear coefficient of the minor value function.
    pub phi: Vec<f64>,
    /// Constant term of the minor value function.
    pub s: Vec<f64>,
    /// Major Riccati coefficient of the decoupled major problem.
    pub p0: Vec<f64>,
    pub x_bar: Vec<f64>,
    pub u_bar: Vec<f64>,
    pub var: Vec<f64>,
    pub x0: Vec<f64>,
    /// Major control at each node (the value in force on `[t_n, t_{n+1})`).
    pub u0: Vec<f64>,
    pub j0: f64,
    pub j1: f64,
    /// `|φ(T)|` after shooting.
    pub shooting_residual: f64,
}

/// Backward RK4 for `Ṗ = β²P² − 2αP − 1`, `P(T) = γ`, sampled at every half
/// substep (`2·steps·refine + 1` values, index 0 at `t = 0`).
fn riccati_half_steps(alpha: f64, beta: f64, gamma: f64, horizon: f64, fine_steps: usize) -> Result<Vec<f64>> {
    let k = 2 * fine_steps;
    let dt = horizon / k as f64;
    let f = |p: f64| beta * beta * p * p - 2.0 * alpha * p - 1.0;
    let mut out = vec![0.0; k + 1];
    out[k] = gamma;
    let mut p = gamma;
    for j in (0..k).rev() {
        let k1 = f(p);
        let k2 = f(p - 0.5 * dt * k1);
        let k3 = f(p - 0.5 * dt * k2);
        let k4 = f(p - dt * k3);
        p -= dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !p.is_finite() || p.abs() > 1e12 {
            return Err(Error::InvalidParameters(format!(
                "Riccati solution blows up before t = {}",
                j as f64 * dt
            )));
        }
        out[j] = p;
    }
    Ok(out)
}

/// Minor Riccati coefficient `P` and constant `s` (from `ṡ = −a1·P`,
/// `s(T) = 0`) when the environment is frozen at zero, at the coarse nodes.
pub fn frozen_minor_value(params: &LqParams, time: &TimeGrid, refine: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let fine = time.steps() * refine;
    let p = riccati_half_steps(params.a, params.b, params.gamma1, time.horizon(), fine)?;
    let a1 = 0.5 * params.sigma1 * params.sigma1;
    let h = time.horizon() / fine as f64;
    let mut s_fine = vec![0.0; fine + 1];
    for j in (0..fine).rev() {
        // Simpson on the half-step samples is RK4 for a pure quadrature.
        let (pa, pm, pb) = (p[2 * j], p[2 * j + 1], p[2 * j + 2]);
        s_fine[j] = s_fine[j + 1] + a1 * h * (pa + 4.0 * pm + pb) / 6.0;
    }
    let pick = |v: &[f64], stride: usize| (0..=time.steps()).map(|n| v[n * stride]).collect::<Vec<_>>();
    Ok((pick(&p, 2 * refine), pick(&s_fine, refine)))
}

const DIM: usize = 7;

struct Rhs<'a> {
    q: &'a LqParams,
    control: MajorControl<'a>,
    time: TimeGrid,
}

impl Rhs<'_> {
    fn u0(&self, n: usize, t: f64, x0: f64, p0: f64) -> f64 {
        match self.control {
            MajorControl::Path(path) => path[n.min(path.len() - 1)],
            MajorControl::Affine(th) => th[0] + th[1] * t + th[2] * x0,
            MajorControl::RiccatiFeedback => -self.q.b0 * p0 * x0,
        }
    }

    /// State `(x̄, φ, x0, var, ∫s-integrand, ∫f0, ∫f1)`.
    fn eval(&self, n: usize, t: f64, y: &[f64; DIM], p: f64, p0: f64) -> [f64; DIM] {
        let q = self.q;
        let (xb, phi, x0, var) = (y[0], y[1], y[2], y[3]);
        let z = q.rho * xb + q.eta * x0;
        let ub = -q.b * (p * xb + phi);
        let u0 = self.u0(n, t, x0, p0);
        let eterm = q.c * x0 + q.d * ub + q.e * u0;
        let a1 = 0.5 * q.sigma1 * q.sigma1;
        let eu2 = q.b * q.b * (p * p * (var + xb * xb) + 2.0 * p * phi * xb + phi * phi);
        [
            q.a * xb + (q.b + q.d) * ub + q.c * x0 + q.e * u0,
            z - (q.a - q.b * q.b * p) * phi - p * eterm,
            q.a0 * x0 + q.b0 * u0 + q.c0 * xb,
            2.0 * (q.a - q.b * q.b * p) * var + q.sigma1 * q.sigma1,
            0.5 * z * z + phi * eterm - 0.5 * q.b * q.b * phi * phi + a1 * p,
            0.5 * u0 * u0 + 0.5 * (x0 - q.kappa * xb).powi(2),
            0.5 * eu2 + 0.5 * (var + (xb - z).powi(2)),
        ]
    }
}

struct Trajectory {
    nodes: Vec<[f64; DIM]>,
    u0: Vec<f64>,
}

fn integrate(rhs: &Rhs, y0: [f64; DIM], p: &[f64], p0: &[f64], refine: usize) -> Trajectory {
    let steps = rhs.time.steps();
    let h = rhs.time.dt() / refine as f64;
    let mut y = y0;
    let mut nodes = Vec::with_capacity(steps + 1);
    let mut u0 = Vec::with_capacity(steps + 1);
    nodes.push(y);
    let axpy = |y: &[f64; DIM], k: &[f64; DIM], s: f64| {
        let mut out = *y;
        for i in 0..DIM {
            out[i] += s * k[i];
        }
        out
    };
    for n in 0..steps {
        u0.push(rhs.u0(n, rhs.time.time(n), y[2], p0[2 * n * refine]));
        for j in 0..refine {
            let idx = 2 * (n * refine + j);
            let t = rhs.time.time(n) + j as f64 * h;
            let k1 = rhs.eval(n, t, &y, p[idx], p0[idx]);
            let k2 = rhs.eval(n, t + 0.5 * h, &axpy(&y, &k1, 0.5 * h), p[idx + 1], p0[idx + 1]);
            let k3 = rhs.eval(n, t + 0.5 * h, &axpy(&y, &k2, 0.5 * h), p[idx + 1], p0[idx + 1]);
            let k4 = rhs.eval(n, t + h, &axpy(&y, &k3, h), p[idx + 2], p0[idx + 2]);
            for i in 0..DIM {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        nodes.push(y);
    }
    u0.push(rhs.u0(steps, rhs.time.horizon(), y[2], p0[2 * steps * refine]));
    Trajectory { nodes, u0 }
}

pub fn solve_lq_oracle(setup: &OracleSetup, control: MajorControl) -> Result<LqOracle> {
    setup.params.validate()?;
    if setup.refine == 0 {
        return Err(Error::InvalidArgument("oracle refinement must be at least 1".into()));
    }
    if let MajorControl::Path(path) = control {
        if path.len() != setup.time.steps() {
            return Err(Error::InvalidArgument(format!(
                "major control path needs {} entries (got {})",
                setup.time.steps(),
                path.len()
            )));
        }
    }
    let q = &setup.params;
    let fine = setup.time.steps() * setup.refine;
    let horizon = setup.time.horizon();
    let p = riccati_half_steps(q.a, q.b, q.gamma1, horizon, fine)?;
    let p0 = riccati_half_steps(q.a0, q.b0, q.gamma0, horizon, fine)?;
    let rhs = Rhs {
        q,
        control,
        time: setup.time,
    };
    let start = |phi0: f64| [setup.mean0, phi0, setup.x0_init, setup.var0, 0.0, 0.0, 0.0];
    let f0 = integrate(&rhs, start(0.0), &p, &p0, setup.refine).nodes[setup.time.steps()][1];
    let f1 = integrate(&rhs, start(1.0), &p, &p0, setup.refine).nodes[setup.time.steps()][1];
    let slope = f1 - f0;
    if !(slope.abs() > 1e-300) {
        return Err(Error::InvalidParameters("shooting map is singular".into()));
    }
    let phi0 = -f0 / slope;
    let traj = integrate(&rhs, start(phi0), &p, &p0, setup.refine);
    let steps = setup.time.steps();
    let last = traj.nodes[steps];
    let stride = 2 * setup.refine;
    let p_nodes: Vec<f64> = (0..=steps).map(|n| p[n * stride]).collect();
    let col = |i: usize| traj.nodes.iter().map(|y| y[i]).collect::<Vec<f64>>();
    let x_bar = col(0);
    let phi = col(1);
    let s_int = col(4);
    let u_bar = (0..=steps).map(|n| -q.b * (p_nodes[n] * x_bar[n] + phi[n])).collect();
    let x_t = last[2];
    let var_t = last[3];
    let oracle = LqOracle {
        t: (0..=steps).map(|n| setup.time.time(n)).collect(),
        s: s_int.iter().map(|v| last[4] - v).collect(),
        p0: (0..=steps).map(|n| p0[n * stride]).collect(),
        var: col(3),
        x0: col(2),
        u0: traj.u0,
        j0: last[5] + 0.5 * q.gamma0 * x_t * x_t,
        j1: last[6] + 0.5 * q.gamma1 * (var_t + last[0] * last[0]),
        shooting_residual: last[1].abs(),
        p: p_nodes,
        phi,
        x_bar,
        u_bar,
    };
    if ![oracle.j0, oracle.j1].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameters("oracle produced non-finite costs".into()));
    }
    Ok(oracle)
}

/// Coarse-to-fine grid search of `J0` over the affine family
/// `u0 = θ1 + θ2·t + θ3·x0`. Each level evaluates a `points³` lattice and
/// shrinks the box around the winner by `shrink`.
pub fn affine_family_search(
    setup: &OracleSetup,
    center: [f64; 3],
    half_width: [f64; 3],
    points: usize,
    levels: usize,
    shrink: f64,
) -> Result<([f64; 3], f64)> {
    let points = points.max(2);
    let mut center = center;
    let mut width = half_width;
    let mut best = (center, solve_lq_oracle(setup, MajorControl::Affine(center))?.j0);
    for _ in 0..levels {
        let axis = |k: usize, j: usize| center[k] - width[k] + 2.0 * width[k] * j as f64 / (points - 1) as f64;
        for i in 0..points {
            for j in 0..points {
                for l in 0..points {
                    let th = [axis(0, i), axis(1, j), axis(2, l)];
                    let j0 = solve_lq_oracle(setup, MajorControl::Affine(th))?.j0;
                    if j0 < best.1 {
                        best = (th, j0);
                    }
                }
            }
        }
        center = best.0;
        for w in width.iter_mut() {
            *w *= shrink;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(params: LqParams, steps: usize) -> OracleSetup {
        OracleSetup {
            params,
            time: TimeGrid::new(1.0, steps).unwrap(),
            x0_init: 1.5,
            mean0: 1.0,
            var0: 0.25,
            refine: 20,
        }
    }

    #[test]
    fn scalar_riccati_has_closed_form() {
        // Ṗ = P² − 1 with P(T) = 2: P(t) = coth(T − t + atanh(1/2)).
        let p = riccati_half_steps(0.0, 1.0, 2.0, 1.0, 200).unwrap();
        let c = (0.5f64).atanh();
        let exact = 1.0 / (1.0 + c).tanh();
        assert!((p[0] - exact).abs() < 1e-10);
    }

    #[test]
    fn shooting_closes_the_boundary_condition() {
        let o = solve_lq_oracle(&setup(LqParams::default(), 100), MajorControl::Path(&vec![0.1; 100])).unwrap();
        assert!(o.shooting_residual < 1e-8);
        assert_eq!(o.x_bar[0], 1.0);
    }

    #[test]
    fn value_function_reproduces_minor_cost() {
        // E Ψ(x(0), 0) = J1 for the representative agent.
        let s = setup(LqParams::default(), 200);
        let o = solve_lq_oracle(&s, MajorControl::Affine([0.1, -0.2, -0.5])).unwrap();
        let ev = 0.5 * o.p[0] * (s.var0 + s.mean0 * s.mean0) + o.phi[0] * s.mean0 + o.s[0];
        assert!((ev - o.j1).abs() < 1e-9, "{ev} vs {}", o.j1);
    }

    #[test]
    fn decoupled_major_cost_matches_riccati_value() {
        let s = setup(LqParams::decoupled(), 200);
        let o = solve_lq_oracle(&s, MajorControl::RiccatiFeedback).unwrap();
        assert!((o.j0 - 0.5 * o.p0[0] * s.x0_init * s.x0_init).abs() < 1e-9);
    }

    #[test]
    fn riccati_feedback_beats_affine_perturbations() {
        let s = setup(LqParams::decoupled(), 100);
        let opt = solve_lq_oracle(&s, MajorControl::RiccatiFeedback).unwrap().j0;
        let g = s.params.b0 * solve_lq_oracle(&s, MajorControl::RiccatiFeedback).unwrap().p0[50];
        for th in [[0.01, 0.0, -g], [0.0, 0.02, -g], [0.0, 0.0, -g * 1.05]] {
            assert!(solve_lq_oracle(&s, MajorControl::Affine(th)).unwrap().j0 > opt);
        }
    }
}
