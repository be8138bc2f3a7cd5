//! Discrete adjoint of the equilibrium map with respect to the major control.
//!
//! The forward pipeline is: law summaries `S^n` drive the major Euler step,
//! the backward HJB sweep (value `Ψ`, feedback `û`), the forward FP sweep
//! (density `m`), and the summaries are reproduced from `(m, û)`. At a fixed
//! point `S = F(S, u0)`, so `dJ0/du0 = ∂J0/∂u0 + λᵀ∂F/∂u0` with the law
//! multiplier `λ = ∂J0/∂S + (∂F/∂S)ᵀλ`. One reverse sweep of the pipeline
//! evaluates the right-hand side; `λ` is found by Picard iteration.
//!
//! The sweep produces the costate `p` of the major state, the density
//! multiplier `q = bar(m)/h` and the value multiplier `r = bar(Ψ-equation)/h`,
//! both per unit of state. `r(·, 0) = 0` because nothing reads `Ψ^0`.

use rayon::prelude::*;

use crate::equilibrium::EquilibriumSolution;
use crate::error::{finite, Error, Result};
use crate::grid::{control_at, Grids, TimeGrid};
use crate::measure::JointLaw;
use crate::model::{feedback_sensitivity, h1_envelope, minimize_h1, GameModel, MajorPoint};
use crate::pde::{Environment, FpStepper, HjbStepper};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointOptions {
    /// Sup-norm change of `q` and `r` between sweeps.
    pub tol: f64,
    pub max_iter: usize,
    /// Mixing weight of each new multiplier sweep.
    pub damping: f64,
}

impl Default for AdjointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 500,
            damping: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointBundle {
    /// Costate, one value per time node.
    pub p: Vec<f64>,
    /// Density multiplier per `(time, node)`.
    pub q: Vec<Vec<f64>>,
    /// Value multiplier per `(time, node)`.
    pub r: Vec<Vec<f64>>,
    /// Martingale integrands; identically zero with frozen common noise.
    pub kp: Vec<f64>,
    pub kq: Vec<Vec<f64>>,
    /// Law multiplier `λ_n`, one moment vector per time node.
    pub lambda: Vec<Vec<f64>>,
    /// `∂L/∂u0_n / dt` from the last sweep.
    pub stationarity: Vec<f64>,
    pub iterations: usize,
    pub inner_residual: f64,
}

/// Pointwise derivatives at one time slice, flattened over nodes (and
/// moments, node-major).
#[derive(Debug, Clone, Default)]
struct Slice {
    phi: Vec<f64>,
    phi_u: Vec<f64>,
    v: Vec<f64>,
    g1_u1: Vec<f64>,
    g1_x0: Vec<f64>,
    g1_u0: Vec<f64>,
    g1_s: Vec<f64>,
    // H1 envelope partials (interior slices) or h1 partials (terminal).
    hx0: Vec<f64>,
    hu0: Vec<f64>,
    hs: Vec<f64>,
    // Feedback sensitivities.
    dq: Vec<f64>,
    dx0: Vec<f64>,
    du0: Vec<f64>,
    ds: Vec<f64>,
    // Major coefficients (terminal slice: h0 partials in the x0/s slots).
    f0_x0: f64,
    f0_u0: f64,
    f0_s: Vec<f64>,
    g0_x0: f64,
    g0_u0: f64,
    g0_s: Vec<f64>,
}

struct Linearization<'a> {
    eq: &'a EquilibriumSolution,
    grids: Grids,
    k: usize,
    slices: Vec<Slice>,
    fp: FpStepper,
    hjb: HjbStepper,
}

fn linearize<'a, M: GameModel + ?Sized>(model: &M, eq: &'a EquilibriumSolution) -> Result<Linearization<'a>> {
    let grids = eq.density.grids;
    let env = eq.environment(model)?;
    let steps = grids.time.steps();
    let k = model.moment_count();
    let slices = (0..=steps)
        .into_par_iter()
        .map(|n| slice_at(model, eq, &env, &grids, n, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(Linearization {
        eq,
        grids,
        k,
        slices,
        fp: FpStepper::new(model, &grids)?,
        hjb: HjbStepper::new(model, &grids)?,
    })
}

fn slice_at<M: GameModel + ?Sized>(
    model: &M,
    eq: &EquilibriumSolution,
    env: &Environment,
    grids: &Grids,
    n: usize,
    k: usize,
) -> Result<Slice> {
    let terminal = n == grids.time.steps();
    let nx = grids.state.len();
    let mut s = Slice {
        phi: Vec::with_capacity(nx * k),
        phi_u: Vec::with_capacity(nx * k),
        g1_s: Vec::with_capacity(nx * k),
        hs: Vec::with_capacity(nx * k),
        ds: Vec::with_capacity(nx * k),
        ..Slice::default()
    };
    for (i, x) in grids.state.nodes().enumerate() {
        let at = env.minor(n, x);
        let zeta = eq.value.dpsi[n][i];
        let hm = minimize_h1(model, at, zeta)?;
        let u = hm.control;
        for j in 0..k {
            let f = model.moment_feature(j, x, u);
            s.phi.push(f.value);
            s.phi_u.push(f.d_control);
        }
        let sens = feedback_sensitivity(model, at, zeta, &hm);
        s.dq.push(sens.dq);
        s.dx0.push(sens.dx0);
        s.du0.push(sens.du0);
        s.ds.extend_from_slice(&pad(&sens.dlaw, k));
        if terminal {
            s.hx0.push(model.h1_x0(at));
            s.hu0.push(model.h1_u0(at));
            s.hs.extend_from_slice(&pad(&model.h1_dlaw(at), k));
        } else {
            s.v.push(finite(model.g1(at, u), "g1", || format!("x={x}, t_index={n}"))?);
            s.g1_u1.push(model.g1_u1(at, u));
            s.g1_x0.push(model.g1_x0(at, u));
            s.g1_u0.push(model.g1_u0(at, u));
            s.g1_s.extend_from_slice(&pad(&model.g1_dlaw(at, u), k));
            let (hx0, hu0, hs) = h1_envelope(model, at, zeta, u);
            s.hx0.push(hx0);
            s.hu0.push(hu0);
            s.hs.extend_from_slice(&pad(&hs, k));
        }
    }
    let major = env.major(n);
    if terminal {
        s.f0_x0 = model.h0_x0(major);
        s.f0_s = pad(&model.h0_dlaw(major), k);
        s.g0_s = vec![0.0; k];
    } else {
        let u0 = control_at(&eq.u0, n);
        s.f0_x0 = model.f0_x0(major, u0);
        s.f0_u0 = model.f0_u0(major, u0);
        s.f0_s = pad(&model.f0_dlaw(major, u0), k);
        s.g0_x0 = model.g0_x0(major, u0);
        s.g0_u0 = model.g0_u0(major, u0);
        s.g0_s = pad(&model.g0_dlaw(major, u0), k);
    }
    let all = s
        .phi
        .iter()
        .chain(&s.phi_u)
        .chain(&s.v)
        .chain(&s.hx0)
        .chain(&s.hu0)
        .chain(&s.hs)
        .chain(&s.dq)
        .chain(&s.ds)
        .chain(&s.g1_s)
        .chain(&s.f0_s)
        .chain(&s.g0_s);
    if all.clone().any(|v| !v.is_finite()) || ![s.f0_x0, s.f0_u0, s.g0_x0, s.g0_u0].iter().all(|v| v.is_finite()) {
        return Err(Error::eval("adjoint coefficients", format!("t_index={n}")));
    }
    Ok(s)
}

fn pad(v: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for (o, x) in out.iter_mut().zip(v) {
        *o = *x;
    }
    out
}

/// Result of one reverse sweep.
struct Sweep {
    p: Vec<f64>,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    bar_s: Vec<Vec<f64>>,
    bar_u0: Vec<f64>,
}

impl Linearization<'_> {
    fn sweep(&self, lambda: &[Vec<f64>]) -> Sweep {
        let g = &self.grids;
        let (h, dt, steps, nx, k) = (g.state.spacing(), g.time.dt(), g.time.steps(), g.state.len(), self.k);
        let m = &self.eq.density.m;
        let mut bar_s = vec![vec![0.0; k]; steps + 1];
        let mut bar_x0 = vec![0.0; steps + 1];
        let mut bar_u0 = vec![0.0; steps];

        // Summaries S'^n = h·Σ m φ(x, û).
        let mut bar_m: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
        let mut bar_u: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
        for n in 0..=steps {
            let sl = &self.slices[n];
            let mut bm = vec![0.0; nx];
            let mut bu = vec![0.0; nx];
            for i in 0..nx {
                let (mut a, mut b) = (0.0, 0.0);
                for j in 0..k {
                    a += lambda[n][j] * sl.phi[i * k + j];
                    b += lambda[n][j] * sl.phi_u[i * k + j];
                }
                bm[i] = h * a;
                bu[i] = h * m[n][i] * b;
            }
            bar_m.push(bm);
            bar_u.push(bu);
        }

        // Fokker-Planck, reversed in time.
        let mut q = vec![Vec::new(); steps + 1];
        let mut acc = bar_m[steps].clone();
        for n in (0..steps).rev() {
            q[n + 1] = acc.iter().map(|v| v / h).collect();
            let sl = &self.slices[n];
            let rr = self.fp.lu().solve_transpose(&acc);
            let (back, bar_v) = self.fp.advect_adjoint(&m[n], &sl.v, &rr);
            acc = bar_m[n].iter().zip(&back).map(|(a, b)| a + b).collect();
            for i in 0..nx {
                bar_u[n][i] += bar_v[i] * sl.g1_u1[i];
                bar_x0[n] += bar_v[i] * sl.g1_x0[i];
                bar_u0[n] += bar_v[i] * sl.g1_u0[i];
                for j in 0..k {
                    bar_s[n][j] += bar_v[i] * sl.g1_s[i * k + j];
                }
            }
        }
        q[0] = acc.iter().map(|v| v / h).collect();

        // HJB, reversed in (backward) time, so forward.
        let mut r = vec![Vec::new(); steps + 1];
        let mut bar_psi = vec![0.0; nx];
        for n in 0..steps {
            let sl = &self.slices[n];
            let sigma = self.hjb.lu().solve_transpose(&bar_psi);
            let mut bar_zeta = vec![0.0; nx];
            for i in 0..nx {
                let bs = dt * sigma[i];
                let bu = bar_u[n][i];
                bar_zeta[i] = bs * sl.v[i] + bu * sl.dq[i];
                bar_x0[n] += bs * sl.hx0[i] + bu * sl.dx0[i];
                bar_u0[n] += bs * sl.hu0[i] + bu * sl.du0[i];
                for j in 0..k {
                    bar_s[n][j] += bs * sl.hs[i * k + j] + bu * sl.ds[i * k + j];
                }
            }
            let through = self.hjb.gradient().apply_transpose(&bar_zeta);
            bar_psi = sigma.iter().zip(&through).map(|(a, b)| a + b).collect();
            r[n] = sigma.iter().map(|v| v / h).collect();
        }
        {
            let sl = &self.slices[steps];
            let bz: Vec<f64> = bar_u[steps].iter().zip(&sl.dq).map(|(a, b)| a * b).collect();
            let through = self.hjb.gradient().apply_transpose(&bz);
            bar_psi.iter_mut().zip(&through).for_each(|(a, b)| *a += b);
            r[steps] = bar_psi.iter().map(|v| v / h).collect();
            for i in 0..nx {
                let (bp, bu) = (bar_psi[i], bar_u[steps][i]);
                bar_x0[steps] += bp * sl.hx0[i] + bu * sl.dx0[i];
                if steps > 0 {
                    bar_u0[steps - 1] += bp * sl.hu0[i] + bu * sl.du0[i];
                }
                for j in 0..k {
                    bar_s[steps][j] += bp * sl.hs[i * k + j] + bu * sl.ds[i * k + j];
                }
            }
        }

        // Major state and the cost itself.
        let mut p = vec![0.0; steps + 1];
        let last = &self.slices[steps];
        p[steps] = bar_x0[steps] + last.f0_x0;
        for j in 0..k {
            bar_s[steps][j] += last.f0_s[j];
        }
        for n in (0..steps).rev() {
            let sl = &self.slices[n];
            let pn = p[n + 1];
            p[n] = bar_x0[n] + dt * sl.f0_x0 + pn * (1.0 + dt * sl.g0_x0);
            bar_u0[n] += dt * (sl.f0_u0 + pn * sl.g0_u0);
            for j in 0..k {
                bar_s[n][j] += dt * (sl.f0_s[j] + pn * sl.g0_s[j]);
            }
        }
        Sweep { p, q, r, bar_s, bar_u0 }
    }
}

fn sup_change(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

/// Solves the adjoint system at an equilibrium. The major path is taken from
/// `eq`; `p` linearizes the Euler recursion of `x0` along it.
pub fn solve_adjoints<M: GameModel + ?Sized>(
    model: &M,
    eq: &EquilibriumSolution,
    options: &AdjointOptions,
) -> Result<AdjointBundle> {
    if !(options.tol > 0.0) || options.max_iter == 0 || !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!("invalid adjoint options {options:?}")));
    }
    let lin = linearize(model, eq)?;
    let steps = lin.grids.time.steps();
    let mut lambda = vec![vec![0.0; lin.k]; steps + 1];
    let mut sweep = lin.sweep(&lambda);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < options.max_iter {
        let next_lambda: Vec<Vec<f64>> = lambda
            .iter()
            .zip(&sweep.bar_s)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (1.0 - options.damping) * x + options.damping * y).collect())
            .collect();
        let next = lin.sweep(&next_lambda);
        residual = sup_change(&next.q, &sweep.q).max(sup_change(&next.r, &sweep.r));
        let lambda_change = sup_change(&next_lambda, &lambda);
        lambda = next_lambda;
        sweep = next;
        iterations += 1;
        if !residual.is_finite() {
            break;
        }
        if residual <= options.tol && lambda_change <= options.tol {
            log::debug!("adjoint converged after {iterations} sweeps");
            let nx = lin.grids.state.len();
            let dt = lin.grids.time.dt();
            return Ok(AdjointBundle {
                kp: vec![0.0; steps + 1],
                kq: vec![vec![0.0; nx]; steps + 1],
                stationarity: sweep.bar_u0.iter().map(|v| v / dt).collect(),
                p: sweep.p,
                q: sweep.q,
                r: sweep.r,
                lambda,
                iterations,
                inner_residual: residual,
            });
        }
    }
    Err(Error::AdjointNotConverged { iterations, residual })
}

/// Residual of the major stationarity condition on each control interval:
/// `f0_u0 + p·g0_u0` plus the minor reaction carried by `q` and `r`.
/// Pairs with a control perturbation `θ` as `Σ dt·res_n·θ_n`.
pub fn u0_stationarity_residual<M: GameModel + ?Sized>(
    model: &M,
    eq: &EquilibriumSolution,
    bundle: &AdjointBundle,
) -> Result<Vec<f64>> {
    let lin = linearize(model, eq)?;
    if bundle.lambda.len() != lin.grids.time.steps() + 1 {
        return Err(Error::InvalidArgument("adjoint bundle does not match the time grid".into()));
    }
    let dt = lin.grids.time.dt();
    Ok(lin.sweep(&bundle.lambda).bar_u0.iter().map(|v| v / dt).collect())
}

/// `Σ dt·res_n·θ_n`.
pub fn gradient_pairing(residual: &[f64], theta: &[f64], time: &TimeGrid) -> f64 {
    time.dt() * residual.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>()
}

/// `J0 = Σ_{n<N} dt·f0(x0_n, Π_n, u0_n) + h0(x0_N, Π_N)`.
#[allow(non_snake_case)]
pub fn evaluate_J0<M: GameModel + ?Sized>(
    model: &M,
    x0_path: &[f64],
    u0_path: &[f64],
    pi_path: &[JointLaw],
    time: &TimeGrid,
) -> Result<f64> {
    let steps = time.steps();
    if x0_path.len() != steps + 1 || pi_path.len() != steps + 1 || u0_path.len() != steps {
        return Err(Error::InvalidArgument("J0 inputs are not aligned with the time grid".into()));
    }
    let dt = time.dt();
    let mut acc = 0.0;
    for n in 0..steps {
        let s = model.summarize(&pi_path[n]);
        acc += dt * model.f0(MajorPoint::new(x0_path[n], &s), u0_path[n]);
    }
    let s = model.summarize(&pi_path[steps]);
    acc += model.h0(MajorPoint::new(x0_path[steps], &s));
    finite(acc, "J0", || "quadrature".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{solve_fixed_point, EquilibriumOptions, MajorPath};
    use crate::grid::StateGrid;
    use crate::model::catalog::ZeroCost;
    use crate::model::lq::{LqModel, LqParams};

    fn grids() -> Grids {
        Grids::new(StateGrid::new(-4.0, 4.0, 81).unwrap(), TimeGrid::new(1.0, 200).unwrap())
    }

    fn solve<M: GameModel + ?Sized>(model: &M, major: MajorPath, u0: &[f64]) -> EquilibriumSolution {
        let g = grids();
        let omega = JointLaw::gaussian(g.state, 0.5, 0.5, |_| 0.0).unwrap();
        let opts = EquilibriumOptions {
            tol: 1e-12,
            damping: 0.5,
            max_iter: 500,
        };
        solve_fixed_point(model, &major, u0, &omega, &g, &opts, None).unwrap()
    }

    fn wavy(len: usize) -> Vec<f64> {
        (0..len).map(|n| 0.2 * (0.05 * n as f64).sin()).collect()
    }

    #[test]
    fn decoupled_multipliers_vanish_and_costate_is_classical() {
        let params = LqParams::decoupled();
        let model = LqModel::new(params).unwrap();
        let u0 = wavy(200);
        let eq = solve(&model, MajorPath::Integrated { initial: 1.0 }, &u0);
        let b = solve_adjoints(&model, &eq, &AdjointOptions::default()).unwrap();
        assert!(b.q.iter().chain(&b.r).flatten().all(|v| v.abs() <= 1e-12));
        let dt = grids().time.dt();
        assert!((b.p[200] - params.gamma0 * eq.x0[200]).abs() < 1e-14);
        for n in 0..200 {
            let want = dt * eq.x0[n] + (1.0 + dt * params.a0) * b.p[n + 1];
            assert!((b.p[n] - want).abs() < 1e-12);
            assert!((b.stationarity[n] - (u0[n] + params.b0 * b.p[n + 1])).abs() < 1e-12);
        }
    }

    #[test]
    fn costless_major_has_zero_costate() {
        let model = ZeroCost(LqModel::benchmark());
        let eq = solve(&model, MajorPath::Integrated { initial: 1.0 }, &wavy(200));
        let b = solve_adjoints(&model, &eq, &AdjointOptions::default()).unwrap();
        assert!(b.p.iter().chain(&b.stationarity).all(|v| v.abs() <= 1e-12));
        assert!(b.q.iter().chain(&b.r).flatten().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn coupled_multipliers_have_expected_boundary_values() {
        let model = LqModel::benchmark();
        let eq = solve(&model, MajorPath::Integrated { initial: 1.0 }, &wavy(200));
        let b = solve_adjoints(&model, &eq, &AdjointOptions::default()).unwrap();
        assert!(b.r[0].iter().all(|v| *v == 0.0));
        assert!(b.q.iter().flatten().any(|v| v.abs() > 1e-6));
        assert!(b.kp.iter().all(|v| *v == 0.0));
        let again = u0_stationarity_residual(&model, &eq, &b).unwrap();
        assert!(again.iter().zip(&b.stationarity).all(|(a, c)| (a - c).abs() < 1e-12));
    }

    #[test]
    fn control_shift_moves_residual_by_the_shift() {
        // With the major path frozen the costate does not see u0, so the
        // residual `u0 + b0·p` shifts one-for-one.
        let model = LqModel::new(LqParams::decoupled()).unwrap();
        let x0: Vec<f64> = (0..=200).map(|n| 1.0 - 0.002 * n as f64).collect();
        let u0 = wavy(200);
        let shifted: Vec<f64> = u0.iter().map(|u| u + 0.1).collect();
        let base = solve(&model, MajorPath::Fixed(x0.clone()), &u0);
        let moved = solve(&model, MajorPath::Fixed(x0), &shifted);
        let r0 = solve_adjoints(&model, &base, &AdjointOptions::default()).unwrap().stationarity;
        let r1 = solve_adjoints(&model, &moved, &AdjointOptions::default()).unwrap().stationarity;
        assert!(r0.iter().zip(&r1).all(|(a, c)| (c - a - 0.1).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_options() {
        let model = LqModel::benchmark();
        let eq = solve(&model, MajorPath::Integrated { initial: 1.0 }, &wavy(200));
        let bad = AdjointOptions {
            damping: 0.0,
            ..AdjointOptions::default()
        };
        assert!(solve_adjoints(&model, &eq, &bad).is_err());
        let starved = AdjointOptions {
            max_iter: 1,
            tol: 1e-300,
            ..AdjointOptions::default()
        };
        assert!(matches!(
            solve_adjoints(&model, &eq, &starved),
            Err(Error::AdjointNotConverged { .. })
        ));
    }

    #[test]
    fn j0_quadrature_of_constant_cost() {
        let model = LqModel::new(LqParams::decoupled()).unwrap();
        let g = grids();
        let law = JointLaw::gaussian(g.state, 0.0, 0.5, |_| 0.0).unwrap();
        let pi = vec![law; 201];
        // x0 ≡ 0, u0 ≡ 1: ½·1 per unit time and no terminal cost.
        let j0 = evaluate_J0(&model, &vec![0.0; 201], &vec![1.0; 200], &pi, &g.time).unwrap();
        assert!((j0 - 0.5).abs() < 1e-12);
        assert!(evaluate_J0(&model, &vec![0.0; 200], &vec![1.0; 200], &pi, &g.time).is_err());
    }
}
