//! Game definition and the pointwise Hamiltonian minimizations.
//!
//! A [`GameModel`] sees the joint law only through a finite vector of
//! generalized moments `s_k = ∫ φ_k(ξ, u) Π(dξ, du)` (its [`LawSummary`]).
//! The linear derivative of any coefficient `F` is then
//! `δF/δΠ(ξ, u) = Σ_k ∂F/∂s_k · φ_k(ξ, u)` and its Lions gradient is the
//! `(ξ, u)`-gradient of that kernel. Models declare `φ_k` and `∂F/∂s_k`;
//! the solvers never differentiate measures themselves.

pub mod catalog;
pub mod checks;
pub mod lq;

use smallvec::SmallVec;

use crate::error::{finite, Error, Result};
use crate::grid::StateGrid;
use crate::measure::Measure;

/// Per-moment coefficient vector; four inline slots cover every built-in model.
pub type Moments = SmallVec<[f64; 4]>;

pub fn zero_moments(k: usize) -> Moments {
    SmallVec::from_elem(0.0, k)
}

/// Generalized moments of a joint law, as declared by the model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LawSummary {
    moments: Moments,
}

impl LawSummary {
    pub fn new(moments: Moments) -> Self {
        Self { moments }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self {
            moments: values.iter().copied().collect(),
        }
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    pub fn get(&self, k: usize) -> f64 {
        self.moments.get(k).copied().unwrap_or(0.0)
    }

    /// Copy with moment `k` shifted by `delta`.
    pub fn bumped(&self, k: usize, delta: f64) -> Self {
        let mut moments = self.moments.clone();
        moments[k] += delta;
        Self { moments }
    }
}

/// A moment feature `φ_k` and its gradient at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelValue {
    pub value: f64,
    pub d_state: f64,
    pub d_control: f64,
}

/// Closed interval of admissible controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBox {
    pub lo: f64,
    pub hi: f64,
}

impl ControlBox {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParameters(format!("control box [{lo}, {hi}] is empty or unbounded")));
        }
        Ok(Self { lo, hi })
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.lo && u <= self.hi
    }

    /// True when `u` sits away from both ends by more than a roundoff margin.
    pub fn is_interior(&self, u: f64) -> bool {
        let tol = 1e-12 * (1.0 + self.lo.abs().max(self.hi.abs()));
        u > self.lo + tol && u < self.hi - tol
    }
}

/// Arguments of the minor agent's coefficients, minus its own control.
#[derive(Debug, Clone, Copy)]
pub struct MinorPoint<'a> {
    pub x: f64,
    pub x0: f64,
    pub u0: f64,
    pub law: &'a LawSummary,
}

impl<'a> MinorPoint<'a> {
    pub fn new(x: f64, x0: f64, u0: f64, law: &'a LawSummary) -> Self {
        Self { x, x0, u0, law }
    }

    pub fn with_x(self, x: f64) -> Self {
        Self { x, ..self }
    }

    pub fn with_x0(self, x0: f64) -> Self {
        Self { x0, ..self }
    }

    pub fn with_u0(self, u0: f64) -> Self {
        Self { u0, ..self }
    }

    pub fn with_law<'b>(self, law: &'b LawSummary) -> MinorPoint<'b> {
        MinorPoint {
            x: self.x,
            x0: self.x0,
            u0: self.u0,
            law,
        }
    }
}

/// Arguments of the major player's coefficients, minus its control.
#[derive(Debug, Clone, Copy)]
pub struct MajorPoint<'a> {
    pub x0: f64,
    pub law: &'a LawSummary,
}

impl<'a> MajorPoint<'a> {
    pub fn new(x0: f64, law: &'a LawSummary) -> Self {
        Self { x0, law }
    }

    pub fn with_x0(self, x0: f64) -> Self {
        Self { x0, ..self }
    }
}

fn fd_step(v: f64) -> f64 {
    1e-5 * (1.0 + v.abs())
}

/// A major-minor game.
///
/// Required items are the coefficient values. First partials default to zero,
/// which is correct for coefficients that do not depend on the argument;
/// models with such dependence must override them. Mixed second partials of
/// `f1`, `g1` involving `u1` default to central differences of the first
/// partials. Moment gradients (`*_dlaw`) default to zero.
pub trait GameModel: Send + Sync {
    fn name(&self) -> &str {
        "custom"
    }

    fn minor_box(&self) -> ControlBox {
        ControlBox { lo: -20.0, hi: 20.0 }
    }

    fn major_box(&self) -> ControlBox {
        ControlBox { lo: -10.0, hi: 10.0 }
    }

    fn moment_count(&self) -> usize {
        0
    }

    fn moment_feature(&self, _k: usize, _x: f64, _u: f64) -> KernelValue {
        KernelValue::default()
    }

    fn summarize(&self, law: &dyn Measure) -> LawSummary {
        let k = self.moment_count();
        let mut moments = zero_moments(k);
        law.for_each_atom(&mut |x, u, w| {
            for (j, s) in moments.iter_mut().enumerate() {
                *s += w * self.moment_feature(j, x, u).value;
            }
        });
        LawSummary { moments }
    }

    // Major player.
    fn g0(&self, at: MajorPoint, u0: f64) -> f64;
    fn f0(&self, at: MajorPoint, u0: f64) -> f64;
    fn h0(&self, at: MajorPoint) -> f64;
    fn sigma0(&self, _x0: f64) -> f64 {
        0.0
    }

    // Minor agent.
    fn g1(&self, at: MinorPoint, u1: f64) -> f64;
    fn f1(&self, at: MinorPoint, u1: f64) -> f64;
    fn h1(&self, at: MinorPoint) -> f64;
    fn sigma1(&self, x: f64) -> f64;

    fn g0_x0(&self, _at: MajorPoint, _u0: f64) -> f64 {
        0.0
    }
    fn g0_u0(&self, _at: MajorPoint, _u0: f64) -> f64 {
        0.0
    }
    fn f0_x0(&self, _at: MajorPoint, _u0: f64) -> f64 {
        0.0
    }
    fn f0_u0(&self, _at: MajorPoint, _u0: f64) -> f64 {
        0.0
    }
    fn h0_x0(&self, _at: MajorPoint) -> f64 {
        0.0
    }
    fn sigma0_x0(&self, _x0: f64) -> f64 {
        0.0
    }

    fn g1_x0(&self, _at: MinorPoint, _u1: f64) -> f64 {
        0.0
    }
    fn g1_u0(&self, _at: MinorPoint, _u1: f64) -> f64 {
        0.0
    }
    fn g1_u1(&self, _at: MinorPoint, _u1: f64) -> f64 {
        0.0
    }
    fn f1_x0(&self, _at: MinorPoint, _u1: f64) -> f64 {
        0.0
    }
    fn f1_u0(&self, _at: MinorPoint, _u1: f64) -> f64 {
        0.0
    }
    fn f1_u1(&self, _at: MinorPoint, _u1: f64) -> f64 {
        0.0
    }
    fn h1_x0(&self, _at: MinorPoint) -> f64 {
        0.0
    }
    fn h1_u0(&self, _at: MinorPoint) -> f64 {
        0.0
    }
    fn sigma1_x1(&self, _x: f64) -> f64 {
        0.0
    }

    fn f1_u1u1(&self, at: MinorPoint, u1: f64) -> f64 {
        let d = fd_step(u1);
        (self.f1_u1(at, u1 + d) - self.f1_u1(at, u1 - d)) / (2.0 * d)
    }
    fn g1_u1u1(&self, at: MinorPoint, u1: f64) -> f64 {
        let d = fd_step(u1);
        (self.g1_u1(at, u1 + d) - self.g1_u1(at, u1 - d)) / (2.0 * d)
    }
    fn f1_u1x0(&self, at: MinorPoint, u1: f64) -> f64 {
        let d = fd_step(at.x0);
        (self.f1_u1(at.with_x0(at.x0 + d), u1) - self.f1_u1(at.with_x0(at.x0 - d), u1)) / (2.0 * d)
    }
    fn g1_u1x0(&self, at: MinorPoint, u1: f64) -> f64 {
        let d = fd_step(at.x0);
        (self.g1_u1(at.with_x0(at.x0 + d), u1) - self.g1_u1(at.with_x0(at.x0 - d), u1)) / (2.0 * d)
    }
    fn f1_u1u0(&self, at: MinorPoint, u1: f64) -> f64 {
        let d = fd_step(at.u0);
        (self.f1_u1(at.with_u0(at.u0 + d), u1) - self.f1_u1(at.with_u0(at.u0 - d), u1)) / (2.0 * d)
    }
    fn g1_u1u0(&self, at: MinorPoint, u1: f64) -> f64 {
        let d = fd_step(at.u0);
        (self.g1_u1(at.with_u0(at.u0 + d), u1) - self.g1_u1(at.with_u0(at.u0 - d), u1)) / (2.0 * d)
    }

    fn g0_dlaw(&self, _at: MajorPoint, _u0: f64) -> Moments {
        zero_moments(self.moment_count())
    }
    fn f0_dlaw(&self, _at: MajorPoint, _u0: f64) -> Moments {
        zero_moments(self.moment_count())
    }
    fn h0_dlaw(&self, _at: MajorPoint) -> Moments {
        zero_moments(self.moment_count())
    }
    fn g1_dlaw(&self, _at: MinorPoint, _u1: f64) -> Moments {
        zero_moments(self.moment_count())
    }
    fn f1_dlaw(&self, _at: MinorPoint, _u1: f64) -> Moments {
        zero_moments(self.moment_count())
    }
    fn h1_dlaw(&self, _at: MinorPoint) -> Moments {
        zero_moments(self.moment_count())
    }
    fn f1_u1_dlaw(&self, _at: MinorPoint, _u1: f64) -> Moments {
        zero_moments(self.moment_count())
    }
    fn g1_u1_dlaw(&self, _at: MinorPoint, _u1: f64) -> Moments {
        zero_moments(self.moment_count())
    }

    /// Minimizer of `f1 + q·g1` over `u1` when it has a closed form
    /// (before clamping to the box).
    fn h1_argmin_closed_form(&self, _at: MinorPoint, _q: f64) -> Option<f64> {
        None
    }

    /// Minimizer of `f0 + p·g0` over `u0` when it has a closed form.
    fn h0_argmin_closed_form(&self, _at: MajorPoint, _p: f64) -> Option<f64> {
        None
    }

    /// Declared global Lipschitz constant of `g1`, if any.
    fn lipschitz_g1(&self) -> Option<f64> {
        None
    }

    /// Declared constant `C` in `|f1| ≤ C(1 + |x|² + |x0|² + |u0|² + |u1|² + M2)`.
    fn growth_f1(&self) -> Option<f64> {
        None
    }
}

/// Linear-derivative kernel `Σ_k c_k φ_k(ξ, u)` with its `(ξ, u)`-gradient.
pub fn kernel<M: GameModel + ?Sized>(model: &M, coeffs: &[f64], xi: f64, u: f64) -> KernelValue {
    let mut out = KernelValue::default();
    for (k, c) in coeffs.iter().enumerate() {
        if *c != 0.0 {
            let phi = model.moment_feature(k, xi, u);
            out.value += c * phi.value;
            out.d_state += c * phi.d_state;
            out.d_control += c * phi.d_control;
        }
    }
    out
}

/// Result of a one-dimensional box-constrained minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimizer {
    pub argmin: f64,
    pub value: f64,
    pub interior: bool,
}

const PROBES: usize = 64;

/// Safeguarded scalar minimization on a box: probe the box on a uniform
/// grid, then bisect on the derivative inside the bracket around the best
/// probe. Lowest value wins; exact ties go to the smaller magnitude.
pub fn minimize_scalar(
    b: ControlBox,
    value: &dyn Fn(f64) -> f64,
    deriv: &dyn Fn(f64) -> f64,
) -> Minimizer {
    if b.lo == b.hi {
        return Minimizer {
            argmin: b.lo,
            value: value(b.lo),
            interior: false,
        };
    }
    let width = b.hi - b.lo;
    let probe = |j: usize| b.lo + width * j as f64 / PROBES as f64;
    let better = |(u, v): (f64, f64), (bu, bv): (f64, f64)| v < bv || (v == bv && u.abs() < bu.abs());
    let mut best = (probe(0), value(probe(0)));
    let mut best_j = 0;
    for j in 1..=PROBES {
        let u = probe(j);
        let cand = (u, value(u));
        if better(cand, best) {
            best = cand;
            best_j = j;
        }
    }
    let mut lo = probe(best_j.saturating_sub(1));
    let mut hi = probe((best_j + 1).min(PROBES));
    let (dlo, dhi) = (deriv(lo), deriv(hi));
    if dlo < 0.0 && dhi > 0.0 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let d = deriv(mid);
            if d == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if d < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let u = 0.5 * (lo + hi);
        let cand = (u, value(u));
        if cand.1 <= best.1 {
            best = cand;
        }
    }
    Minimizer {
        argmin: best.0,
        value: best.1,
        interior: b.is_interior(best.0),
    }
}

/// Minor Hamiltonian data at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H1Min {
    /// `û1`, a minimizer of `f1 + q·g1` over the minor box.
    pub control: f64,
    /// `H1 = f1(û1) + q·g1(û1)`.
    pub value: f64,
    /// `G1 = g1(û1)`.
    pub drift: f64,
    pub interior: bool,
}

/// `H1(x, x0, u0, Π, q) = inf_{u1 ∈ A} { f1 + q·g1 }`.
pub fn minimize_h1<M: GameModel + ?Sized>(model: &M, at: MinorPoint, q: f64) -> Result<H1Min> {
    let loc = || format!("x={}, x0={}, u0={}, q={}", at.x, at.x0, at.u0, q);
    finite(q, "dpsi", loc)?;
    let b = model.minor_box();
    let (control, interior) = match model.h1_argmin_closed_form(at, q) {
        Some(u) => {
            let u = finite(u, "h1_argmin_closed_form", loc)?;
            let c = b.clamp(u);
            (c, b.is_interior(c))
        }
        None => {
            let m = minimize_scalar(
                b,
                &|u| model.f1(at, u) + q * model.g1(at, u),
                &|u| model.f1_u1(at, u) + q * model.g1_u1(at, u),
            );
            (m.argmin, m.interior)
        }
    };
    let f = finite(model.f1(at, control), "f1", loc)?;
    let g = finite(model.g1(at, control), "g1", loc)?;
    Ok(H1Min {
        control,
        value: f + q * g,
        drift: g,
        interior,
    })
}

/// `G1(x, x0, u0, Π, q) = g1(x, x0, u0, Π, û1)`.
#[allow(non_snake_case)]
pub fn eval_G1<M: GameModel + ?Sized>(model: &M, at: MinorPoint, q: f64) -> Result<f64> {
    minimize_h1(model, at, q).map(|h| h.drift)
}

/// First-order condition `f1_u1 + q·g1_u1` at `u1`.
pub fn h1_stationarity<M: GameModel + ?Sized>(model: &M, at: MinorPoint, q: f64, u1: f64) -> f64 {
    model.f1_u1(at, u1) + q * model.g1_u1(at, u1)
}

/// Sensitivities of the optimal feedback `û1(x, x0, u0, Π, q)` to its
/// arguments, from the implicit function theorem on the first-order
/// condition. All vanish where the box constraint is active.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSensitivity {
    pub dq: f64,
    pub dx0: f64,
    pub du0: f64,
    pub dlaw: Moments,
}

pub fn feedback_sensitivity<M: GameModel + ?Sized>(
    model: &M,
    at: MinorPoint,
    q: f64,
    h: &H1Min,
) -> FeedbackSensitivity {
    let k = model.moment_count();
    let u = h.control;
    if !h.interior {
        return FeedbackSensitivity {
            dq: 0.0,
            dx0: 0.0,
            du0: 0.0,
            dlaw: zero_moments(k),
        };
    }
    let luu = model.f1_u1u1(at, u) + q * model.g1_u1u1(at, u);
    if !(luu.abs() > 1e-300) {
        return FeedbackSensitivity {
            dq: 0.0,
            dx0: 0.0,
            du0: 0.0,
            dlaw: zero_moments(k),
        };
    }
    let inv = -1.0 / luu;
    let fl = model.f1_u1_dlaw(at, u);
    let gl = model.g1_u1_dlaw(at, u);
    FeedbackSensitivity {
        dq: inv * model.g1_u1(at, u),
        dx0: inv * (model.f1_u1x0(at, u) + q * model.g1_u1x0(at, u)),
        du0: inv * (model.f1_u1u0(at, u) + q * model.g1_u1u0(at, u)),
        dlaw: fl.iter().zip(gl.iter()).map(|(f, g)| inv * (f + q * g)).collect(),
    }
}

/// Envelope partials of `H1` at the optimum: `(∂_x0 H1, ∂_u0 H1, ∂_s H1)`.
/// The `q`-partial is `G1` itself.
pub fn h1_envelope<M: GameModel + ?Sized>(model: &M, at: MinorPoint, q: f64, u1: f64) -> (f64, f64, Moments) {
    let fl = model.f1_dlaw(at, u1);
    let gl = model.g1_dlaw(at, u1);
    (
        model.f1_x0(at, u1) + q * model.g1_x0(at, u1),
        model.f1_u0(at, u1) + q * model.g1_u0(at, u1),
        fl.iter().zip(gl.iter()).map(|(f, g)| f + q * g).collect(),
    )
}

/// Classical major Hamiltonian minimization `inf_{u0} { f0 + p·g0 }`.
pub fn minimize_h0<M: GameModel + ?Sized>(model: &M, at: MajorPoint, p: f64) -> Result<Minimizer> {
    let loc = || format!("x0={}, p={}", at.x0, p);
    finite(p, "costate", loc)?;
    let b = model.major_box();
    let m = match model.h0_argmin_closed_form(at, p) {
        Some(u) => {
            let u = b.clamp(finite(u, "h0_argmin_closed_form", loc)?);
            Minimizer {
                argmin: u,
                value: model.f0(at, u) + p * model.g0(at, u),
                interior: b.is_interior(u),
            }
        }
        None => minimize_scalar(
            b,
            &|u| model.f0(at, u) + p * model.g0(at, u),
            &|u| model.f0_u0(at, u) + p * model.g0_u0(at, u),
        ),
    };
    finite(m.value, "f0 + p*g0", loc)?;
    Ok(m)
}

/// `G0(x0, Π, p) = g0(x0, Π, û0)` with `û0` from [`minimize_h0`].
#[allow(non_snake_case)]
pub fn eval_G0<M: GameModel + ?Sized>(model: &M, at: MajorPoint, p: f64) -> Result<f64> {
    let m = minimize_h0(model, at, p)?;
    finite(model.g0(at, m.argmin), "g0", || format!("x0={}, u0={}", at.x0, m.argmin))
}

/// Adjoint and value fields on the state grid at one time, as consumed by
/// the effective major Hamiltonian.
#[derive(Debug, Clone, Copy)]
pub struct EffectiveFields<'a> {
    pub grid: &'a StateGrid,
    pub q: &'a [f64],
    pub r: &'a [f64],
    pub density: &'a [f64],
    pub dpsi: &'a [f64],
}

/// Minimizes the effective major Hamiltonian
/// `f0 + p·g0 + ∫ r·H1 dx + ∫ Dq·G1·m dx` over the major box.
///
/// The minor response to `u0` enters twice: `H1` directly, and `G1` both
/// through `g1`'s explicit `u0` argument and through the feedback `û1(u0)`.
pub fn minimize_h0_effective<M: GameModel + ?Sized>(
    model: &M,
    at: MajorPoint,
    p: f64,
    fields: EffectiveFields,
) -> Result<Minimizer> {
    let n = fields.grid.len();
    if fields.q.len() != n || fields.r.len() != n || fields.density.len() != n || fields.dpsi.len() != n {
        return Err(Error::InvalidArgument("effective Hamiltonian fields must match the grid".into()));
    }
    let h = fields.grid.spacing();
    let dq = central_gradient(fields.q, h);
    let value = |u0: f64| -> Result<f64> {
        let mut acc = model.f0(at, u0) + p * model.g0(at, u0);
        for i in 0..n {
            let pt = MinorPoint::new(fields.grid.node(i), at.x0, u0, at.law);
            let hm = minimize_h1(model, pt, fields.dpsi[i])?;
            acc += h * (fields.r[i] * hm.value + dq[i] * hm.drift * fields.density[i]);
        }
        finite(acc, "effective H0", || format!("x0={}, u0={u0}", at.x0))
    };
    let deriv = |u0: f64| -> Result<f64> {
        let mut acc = model.f0_u0(at, u0) + p * model.g0_u0(at, u0);
        for i in 0..n {
            let pt = MinorPoint::new(fields.grid.node(i), at.x0, u0, at.law);
            let zeta = fields.dpsi[i];
            let hm = minimize_h1(model, pt, zeta)?;
            let (_, h_u0, _) = h1_envelope(model, pt, zeta, hm.control);
            let sens = feedback_sensitivity(model, pt, zeta, &hm);
            let g_u0 = model.g1_u0(pt, hm.control) + model.g1_u1(pt, hm.control) * sens.du0;
            acc += h * (fields.r[i] * h_u0 + dq[i] * g_u0 * fields.density[i]);
        }
        finite(acc, "effective H0 derivative", || format!("x0={}, u0={u0}", at.x0))
    };
    // Surface the first evaluation failure instead of minimizing through NaN.
    value(0.0)?;
    deriv(0.0)?;
    let m = minimize_scalar(
        model.major_box(),
        &|u| value(u).unwrap_or(f64::INFINITY),
        &|u| deriv(u).unwrap_or(f64::NAN),
    );
    finite(m.value, "effective H0", || format!("x0={}", at.x0))?;
    Ok(m)
}

/// Central differences inside, one-sided at the ends.
pub fn central_gradient(field: &[f64], h: f64) -> Vec<f64> {
    let n = field.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    out[0] = (field[1] - field[0]) / h;
    out[n - 1] = (field[n - 1] - field[n - 2]) / h;
    for i in 1..n - 1 {
        out[i] = (field[i + 1] - field[i - 1]) / (2.0 * h);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::lq::{LqModel, LqParams};

    struct Quartic;

    impl GameModel for Quartic {
        fn g0(&self, _: MajorPoint, u0: f64) -> f64 {
            u0
        }
        fn f0(&self, _: MajorPoint, _: f64) -> f64 {
            0.0
        }
        fn h0(&self, _: MajorPoint) -> f64 {
            0.0
        }
        fn g1(&self, _: MinorPoint, u1: f64) -> f64 {
            u1
        }
        fn f1(&self, _: MinorPoint, u1: f64) -> f64 {
            0.25 * u1.powi(4) + 0.5 * u1 * u1
        }
        fn h1(&self, _: MinorPoint) -> f64 {
            0.0
        }
        fn sigma1(&self, _: f64) -> f64 {
            0.0
        }
        fn g1_u1(&self, _: MinorPoint, _: f64) -> f64 {
            1.0
        }
        fn f1_u1(&self, _: MinorPoint, u1: f64) -> f64 {
            u1.powi(3) + u1
        }
        fn minor_box(&self) -> ControlBox {
            ControlBox { lo: -2.0, hi: 2.0 }
        }
    }

    fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lq_interior_minimizer() {
        let m = LqModel::new(LqParams { a: 0.0, c: 0.0, d: 0.0, ..LqParams::default() }).unwrap();
        let law = LawSummary::from_slice(&[0.0, 0.0]);
        let at = MinorPoint::new(1.0, 0.0, 0.0, &law);
        let h = minimize_h1(&m, at, 3.0).unwrap();
        assert!((h.control + 3.0).abs() < 1e-14);
        assert!(h.interior);
        assert!((eval_G1(&m, at, 3.0).unwrap() + 3.0).abs() < 1e-14);
        let z = minimize_h1(&m, at, 0.0).unwrap();
        assert_eq!(z.control, 0.0);
        assert!((z.value - m.f1(at, 0.0)).abs() < 1e-15);
    }

    #[test]
    fn drift_without_control() {
        let m = LqModel::new(LqParams { a: 0.5, c: 0.0, d: 0.0, e: 0.0, ..LqParams::default() }).unwrap();
        let law = LawSummary::from_slice(&[0.0, 0.0]);
        assert!((eval_G1(&m, MinorPoint::new(1.0, 0.3, 0.2, &law), 0.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quartic_minimizer_matches_bisection_oracle() {
        let law = LawSummary::default();
        let at = MinorPoint::new(0.0, 0.0, 0.0, &law);
        let h = minimize_h1(&Quartic, at, 1.0).unwrap();
        let root = bisect_root(|u| u * u * u + u + 1.0, -2.0, 2.0);
        assert!((h.control - root).abs() < 1e-10);
        assert!((h.control + 0.6823).abs() < 1e-4);
        assert!((h.drift - root).abs() < 1e-10);
        assert!(h1_stationarity(&Quartic, at, 1.0, h.control).abs() < 1e-8);
        for j in 0..=200 {
            let u = -2.0 + 4.0 * j as f64 / 200.0;
            assert!(h.value <= Quartic.f1(at, u) + Quartic.g1(at, u) + 1e-15);
        }
    }

    #[test]
    fn box_constraint_is_respected() {
        let law = LawSummary::default();
        let at = MinorPoint::new(0.0, 0.0, 0.0, &law);
        let h = minimize_h1(&Quartic, at, 100.0).unwrap();
        assert_eq!(h.control, -2.0);
        assert!(!h.interior);
        let s = feedback_sensitivity(&Quartic, at, 100.0, &h);
        assert_eq!(s.dq, 0.0);
    }

    #[test]
    fn nonfinite_gradient_is_rejected() {
        let law = LawSummary::default();
        let at = MinorPoint::new(0.0, 0.0, 0.0, &law);
        assert!(minimize_h1(&Quartic, at, f64::NAN).is_err());
    }

    #[test]
    fn feedback_sensitivity_matches_finite_difference() {
        let m = LqModel::benchmark();
        let law = LawSummary::from_slice(&[0.4, -0.3]);
        let at = MinorPoint::new(0.7, 1.1, -0.2, &law);
        let q = 0.9;
        let h = minimize_h1(&m, at, q).unwrap();
        let s = feedback_sensitivity(&m, at, q, &h);
        let d = 1e-6;
        let fd = (minimize_h1(&m, at, q + d).unwrap().control - minimize_h1(&m, at, q - d).unwrap().control) / (2.0 * d);
        assert!((fd - s.dq).abs() < 1e-8);
    }

    #[test]
    fn major_hamiltonian_closed_form() {
        let m = LqModel::new(LqParams { a0: 0.3, b0: 1.0, c0: 0.2, ..LqParams::default() }).unwrap();
        let law = LawSummary::from_slice(&[0.5, 0.0]);
        let at = MajorPoint::new(1.0, &law);
        assert!((minimize_h0(&m, at, 2.0).unwrap().argmin + 2.0).abs() < 1e-14);
        assert!((eval_G0(&m, at, 1.0).unwrap() + 0.6).abs() < 1e-14);
        assert!((eval_G0(&m, at, 0.0).unwrap() - 0.4).abs() < 1e-14);
    }

    #[test]
    fn effective_hamiltonian_reduces_to_classical() {
        let m = LqModel::new(LqParams { e: 0.0, ..LqParams::default() }).unwrap();
        let grid = StateGrid::new(-2.0, 2.0, 41).unwrap();
        let law = LawSummary::from_slice(&[0.0, 0.0]);
        let zeros = vec![0.0; 41];
        let dens = vec![0.25; 41];
        let fields = EffectiveFields {
            grid: &grid,
            q: &zeros,
            r: &zeros,
            density: &dens,
            dpsi: &zeros,
        };
        let u = minimize_h0_effective(&m, MajorPoint::new(0.5, &law), 2.0, fields).unwrap();
        assert!((u.argmin + 2.0).abs() < 1e-9);
    }

    #[test]
    fn effective_hamiltonian_matches_grid_search() {
        let m = LqModel::new(LqParams { e: 0.5, ..LqParams::default() }).unwrap();
        let grid = StateGrid::new(-3.0, 3.0, 61).unwrap();
        let law = LawSummary::from_slice(&[0.2, -0.1]);
        let q: Vec<f64> = grid.sample(|x| 0.4 * x);
        let r: Vec<f64> = grid.sample(|x| 0.1 * (-x * x).exp());
        let dens: Vec<f64> = grid.sample(|x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt());
        let dpsi: Vec<f64> = grid.sample(|x| 0.5 * x + 0.1);
        let fields = EffectiveFields {
            grid: &grid,
            q: &q,
            r: &r,
            density: &dens,
            dpsi: &dpsi,
        };
        let at = MajorPoint::new(0.8, &law);
        let p = 0.6;
        let got = minimize_h0_effective(&m, at, p, fields).unwrap();
        let h = grid.spacing();
        let dq = central_gradient(&q, h);
        let eval = |u0: f64| {
            let mut acc = m.f0(at, u0) + p * m.g0(at, u0);
            for i in 0..grid.len() {
                let pt = MinorPoint::new(grid.node(i), at.x0, u0, &law);
                let hm = minimize_h1(&m, pt, dpsi[i]).unwrap();
                acc += h * (r[i] * hm.value + dq[i] * hm.drift * dens[i]);
            }
            acc
        };
        // Coarse scan then a fine scan around the coarse winner.
        let b = m.major_box();
        let coarse = (0..=2000)
            .map(|j| b.lo + (b.hi - b.lo) * j as f64 / 2000.0)
            .min_by(|a, c| eval(*a).total_cmp(&eval(*c)))
            .unwrap();
        let fine = (0..=20000)
            .map(|j| coarse - 0.01 + 0.02 * j as f64 / 20000.0)
            .min_by(|a, c| eval(*a).total_cmp(&eval(*c)))
            .unwrap();
        assert!((got.argmin - fine).abs() <= 1e-6, "{} vs {}", got.argmin, fine);
    }

    #[test]
    fn gradient_of_quadratic() {
        let g = central_gradient(&[0.0, 1.0, 4.0, 9.0], 1.0);
        assert_eq!(g, vec![1.0, 2.0, 4.0, 5.0]);
    }
}
