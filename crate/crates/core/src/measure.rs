//! Joint state-control laws in feedback form, their moments and the
//! Wasserstein-2 distance between them.
//!
//! A [`JointLaw`] stores the disintegration `Π(dx, du) = m(x) dx ⊗ δ_{û(x)}(du)`
//! on a uniform grid: a density that is piecewise constant on grid cells and a
//! feedback value per cell. An [`EmpiricalJointLaw`] is a weighted particle
//! cloud `Σ w_k δ_{(x_k, u_k)}`, the lift used for Lions differentiation.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::StateGrid;

/// Anything that can be integrated against as a sum of weighted atoms.
///
/// Grid laws expose their nodes with weight `h·m_i` (midpoint rule); empirical
/// laws expose their particles.
pub trait Measure {
    fn for_each_atom(&self, f: &mut dyn FnMut(f64, f64, f64));

    fn integrate(&self, phi: &dyn Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each_atom(&mut |x, u, w| acc += w * phi(x, u));
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointLaw {
    grid: StateGrid,
    density: Vec<f64>,
    feedback: Vec<f64>,
}

impl JointLaw {
    /// Validates nonnegativity and unit mass (within 1e-9).
    pub fn new(grid: StateGrid, density: Vec<f64>, feedback: Vec<f64>) -> Result<Self> {
        if density.len() != grid.len() || feedback.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "law fields must have {} entries (density {}, feedback {})",
                grid.len(),
                density.len(),
                feedback.len()
            )));
        }
        if let Some(i) = density.iter().position(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "density must be finite and nonnegative (node {i}: {})",
                density[i]
            )));
        }
        if let Some(i) = feedback.iter().position(|u| !u.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite feedback at node {i}")));
        }
        let law = Self {
            grid,
            density,
            feedback,
        };
        let mass = law.mass();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "density quadrature must be 1 (got {mass})"
            )));
        }
        Ok(law)
    }

    /// Builds a law from unnormalized density values, rescaling to unit mass.
    pub fn normalized(grid: StateGrid, mut density: Vec<f64>, feedback: Vec<f64>) -> Result<Self> {
        let h = grid.spacing();
        let mass: f64 = density.iter().sum::<f64>() * h;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "density has no positive finite mass ({mass})"
            )));
        }
        density.iter_mut().for_each(|m| *m /= mass);
        Self::new(grid, density, feedback)
    }

    /// Discretized normal density with the given feedback map.
    pub fn gaussian(grid: StateGrid, mean: f64, std: f64, feedback: impl Fn(f64) -> f64) -> Result<Self> {
        if !(std > 0.0) {
            return Err(Error::InvalidArgument(format!("std must be positive (got {std})")));
        }
        let density = grid.sample(|x| (-0.5 * ((x - mean) / std).powi(2)).exp());
        let fb = grid.sample(feedback);
        Self::normalized(grid, density, fb)
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn feedback(&self) -> &[f64] {
        &self.feedback
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.density, self.feedback)
    }

    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.grid.spacing()
    }

    /// State marginal `μ = (pr_X)#Π` as cell weights `h·m_i`.
    pub fn state_marginal(&self) -> Vec<f64> {
        let h = self.grid.spacing();
        self.density.iter().map(|m| m * h).collect()
    }

    /// Control marginal `q = (pr_U)#Π` as an empirical law over cell controls.
    pub fn control_marginal(&self) -> Vec<(f64, f64)> {
        let h = self.grid.spacing();
        self.feedback
            .iter()
            .zip(&self.density)
            .filter(|(_, m)| **m > 0.0)
            .map(|(u, m)| (*u, m * h))
            .collect()
    }

    /// Writes `x,m,u` rows at 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x,m,u")?;
        for ((x, m), u) in self.grid.nodes().zip(&self.density).zip(&self.feedback) {
            writeln!(out, "{},{},{}", fmt17(x), fmt17(*m), fmt17(*u))?;
        }
        out.flush()?;
        Ok(())
    }
}

impl Measure for JointLaw {
    fn for_each_atom(&self, f: &mut dyn FnMut(f64, f64, f64)) {
        let h = self.grid.spacing();
        for ((x, m), u) in self.grid.nodes().zip(&self.density).zip(&self.feedback) {
            if *m != 0.0 {
                f(x, *u, h * m);
            }
        }
    }
}

/// Formats with 17 significant digits, the lossless width for f64.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub state: f64,
    pub control: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalJointLaw {
    particles: Vec<Particle>,
}

impl EmpiricalJointLaw {
    pub fn new(particles: Vec<Particle>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidArgument("empirical law needs at least one particle".into()));
        }
        for (k, p) in particles.iter().enumerate() {
            if !(p.state.is_finite() && p.control.is_finite() && p.weight.is_finite() && p.weight >= 0.0) {
                return Err(Error::InvalidArgument(format!("particle {k} is invalid: {p:?}")));
            }
        }
        let total: f64 = particles.iter().map(|p| p.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("particle weights sum to {total}, not 1")));
        }
        Ok(Self { particles })
    }

    /// Equal weights `1/n`.
    pub fn uniform(states: &[f64], controls: &[f64]) -> Result<Self> {
        if states.len() != controls.len() {
            return Err(Error::InvalidArgument("states and controls differ in length".into()));
        }
        let w = 1.0 / states.len().max(1) as f64;
        Self::new(
            states
                .iter()
                .zip(controls)
                .map(|(&x, &u)| Particle {
                    state: x,
                    control: u,
                    weight: w,
                })
                .collect(),
        )
    }

    pub fn point_mass(state: f64, control: f64) -> Self {
        Self {
            particles: vec![Particle {
                state,
                control,
                weight: 1.0,
            }],
        }
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Copy with particle `i` displaced by `(dx, du)`; weights unchanged.
    pub fn shifted(&self, i: usize, dx: f64, du: f64) -> Self {
        let mut particles = self.particles.clone();
        particles[i].state += dx;
        particles[i].control += du;
        Self { particles }
    }
}

impl Measure for EmpiricalJointLaw {
    fn for_each_atom(&self, f: &mut dyn FnMut(f64, f64, f64)) {
        for p in &self.particles {
            f(p.state, p.control, p.weight);
        }
    }
}

pub fn mean_state(law: &dyn Measure) -> f64 {
    law.integrate(&|x, _| x)
}

pub fn mean_control(law: &dyn Measure) -> f64 {
    law.integrate(&|_, u| u)
}

/// `M2(Π) = ∫ (|x|² + |u|²) dΠ`.
pub fn second_moment(law: &dyn Measure) -> f64 {
    law.integrate(&|x, u| x * x + u * u)
}

/// A piece of a monotone quantile function: over a mass interval of length
/// `mass` the state runs linearly from `x_lo` to `x_hi` with constant control.
#[derive(Debug, Clone, Copy)]
pub struct QuantileSegment {
    pub mass: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub control: f64,
}

/// Laws whose state quantile function can be listed as [`QuantileSegment`]s.
pub trait QuantileLaw {
    fn quantile_segments(&self) -> Vec<QuantileSegment>;
}

impl QuantileLaw for JointLaw {
    fn quantile_segments(&self) -> Vec<QuantileSegment> {
        let h = self.grid.spacing();
        self.grid
            .nodes()
            .zip(&self.density)
            .zip(&self.feedback)
            .filter(|((_, m), _)| **m > 0.0)
            .map(|((x, m), u)| QuantileSegment {
                mass: m * h,
                x_lo: x - 0.5 * h,
                x_hi: x + 0.5 * h,
                control: *u,
            })
            .collect()
    }
}

impl QuantileLaw for EmpiricalJointLaw {
    fn quantile_segments(&self) -> Vec<QuantileSegment> {
        let mut ps: Vec<&Particle> = self.particles.iter().filter(|p| p.weight > 0.0).collect();
        ps.sort_by(|a, b| {
            a.state
                .total_cmp(&b.state)
                .then(a.control.total_cmp(&b.control))
        });
        ps.into_iter()
            .map(|p| QuantileSegment {
                mass: p.weight,
                x_lo: p.state,
                x_hi: p.state,
                control: p.control,
            })
            .collect()
    }
}

/// Joint W2 between feedback-form laws.
///
/// The state marginals are coupled by their monotone (quantile) transport and
/// the control coordinate rides along the same map:
/// `W2² = ∫₀¹ |Q_a(s) − Q_b(s)|² + |û_a(Q_a(s)) − û_b(Q_b(s))|² ds`.
/// The product metric is the unweighted Euclidean one.
pub fn w2_1d<A, B>(a: &A, b: &B) -> f64
where
    A: QuantileLaw + ?Sized,
    B: QuantileLaw + ?Sized,
{
    w2_segments(&a.quantile_segments(), &b.quantile_segments())
}

pub fn w2_segments(a: &[QuantileSegment], b: &[QuantileSegment]) -> f64 {
    let total_a: f64 = a.iter().map(|s| s.mass).sum();
    let total_b: f64 = b.iter().map(|s| s.mass).sum();
    if a.is_empty() || b.is_empty() || !(total_a > 0.0) || !(total_b > 0.0) {
        return f64::NAN;
    }
    let (mut ia, mut ib) = (0usize, 0usize);
    // Position inside the current segments as consumed mass fractions.
    let (mut used_a, mut used_b) = (0.0f64, 0.0f64);
    let mut acc = 0.0;
    while ia < a.len() && ib < b.len() {
        let sa = &a[ia];
        let sb = &b[ib];
        let ma = sa.mass / total_a;
        let mb = sb.mass / total_b;
        let rem_a = ma - used_a;
        let rem_b = mb - used_b;
        // Segment ends closer than rounding are treated as aligned so that no
        // sub-ulp slivers pair neighbouring cells.
        let aligned = (rem_a - rem_b).abs() <= 1e-13 * ma.max(mb);
        let len = rem_a.min(rem_b).max(0.0);
        if len > 0.0 {
            let pos = |s: &QuantileSegment, m: f64, used: f64| s.x_lo + (s.x_hi - s.x_lo) * (used / m);
            let d0 = pos(sa, ma, used_a) - pos(sb, mb, used_b);
            let d1 = pos(sa, ma, used_a + len) - pos(sb, mb, used_b + len);
            let du = sa.control - sb.control;
            acc += len * ((d0 * d0 + d0 * d1 + d1 * d1) / 3.0 + du * du);
        }
        used_a += len;
        used_b += len;
        if aligned || ma - used_a <= 1e-15 * ma.max(1e-300) || rem_a <= rem_b {
            ia += 1;
            used_a = 0.0;
        }
        if aligned || mb - used_b <= 1e-15 * mb.max(1e-300) || rem_b <= rem_a {
            ib += 1;
            used_b = 0.0;
        }
    }
    acc.max(0.0).sqrt()
}

/// Central finite difference on the lift: displaces particle `i` by `±eps·dir`
/// and divides by `2·eps·w_i`, estimating `D_Π F(Π)(x_i, u_i)·dir`.
pub fn lions_fd_oracle(
    functional: &dyn Fn(&EmpiricalJointLaw) -> f64,
    emp: &EmpiricalJointLaw,
    i: usize,
    dir: (f64, f64),
    eps: f64,
) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive (got {eps})")));
    }
    let Some(p) = emp.particles.get(i) else {
        return Err(Error::InvalidArgument(format!(
            "particle index {i} out of range ({} particles)",
            emp.len()
        )));
    };
    if !(p.weight > 0.0) {
        return Err(Error::InvalidArgument(format!("particle {i} has zero weight")));
    }
    let norm = (dir.0 * dir.0 + dir.1 * dir.1).sqrt();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("direction must be nonzero".into()));
    }
    let (dx, du) = (dir.0 / norm * eps, dir.1 / norm * eps);
    let plus = functional(&emp.shifted(i, dx, du));
    let minus = functional(&emp.shifted(i, -dx, -du));
    Ok((plus - minus) / (2.0 * eps * p.weight))
}

/// Draws `n` iid particles from `law` by inverse-CDF sampling of its
/// cell-uniform state density; each particle carries its cell's feedback.
pub fn grid_to_empirical(law: &JointLaw, n: usize, seed: u64) -> Result<EmpiricalJointLaw> {
    if n == 0 {
        return Err(Error::InvalidArgument("particle count must be at least 1".into()));
    }
    let sampler = CellSampler::new(law);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = 1.0 / n as f64;
    let particles = (0..n)
        .map(|_| {
            let (x, u) = sampler.sample(rng.random::<f64>());
            Particle {
                state: x,
                control: u,
                weight: w,
            }
        })
        .collect();
    EmpiricalJointLaw::new(particles)
}

/// Inverse-CDF sampler for a cell-uniform grid density.
#[derive(Debug, Clone)]
pub struct CellSampler {
    cumulative: Vec<f64>,
    cells: Vec<(f64, f64, f64)>,
}

impl CellSampler {
    pub fn new(law: &JointLaw) -> Self {
        let segs = law.quantile_segments();
        let total: f64 = segs.iter().map(|s| s.mass).sum();
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(segs.len());
        let mut cells = Vec::with_capacity(segs.len());
        for s in &segs {
            acc += s.mass / total;
            cumulative.push(acc);
            cells.push((s.x_lo, s.x_hi, s.control));
        }
        Self { cumulative, cells }
    }

    /// Maps a uniform draw `s ∈ [0, 1)` to a `(state, control)` pair.
    pub fn sample(&self, s: f64) -> (f64, f64) {
        let k = self
            .cumulative
            .partition_point(|&c| c <= s)
            .min(self.cells.len() - 1);
        let start = if k == 0 { 0.0 } else { self.cumulative[k - 1] };
        let width = self.cumulative[k] - start;
        let frac = if width > 0.0 { ((s - start) / width).clamp(0.0, 1.0) } else { 0.5 };
        let (lo, hi, u) = self.cells[k];
        (lo + (hi - lo) * frac, u)
    }
}

/// Gaussian kernel density estimate for the state density and a
/// Nadaraya-Watson regression for the feedback field.
pub fn empirical_to_grid(emp: &EmpiricalJointLaw, grid: &StateGrid, bandwidth: f64) -> Result<JointLaw> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive (got {bandwidth})"
        )));
    }
    if emp.is_empty() {
        return Err(Error::InvalidArgument("empty particle set".into()));
    }
    let inv = 1.0 / bandwidth;
    let mut density = Vec::with_capacity(grid.len());
    let mut feedback = Vec::with_capacity(grid.len());
    for x in grid.nodes() {
        let (mut wsum, mut usum) = (0.0, 0.0);
        for p in emp.particles() {
            let z = (x - p.state) * inv;
            let k = p.weight * (-0.5 * z * z).exp();
            wsum += k;
            usum += k * p.control;
        }
        density.push(wsum);
        if wsum > 1e-300 {
            feedback.push(usum / wsum);
        } else {
            let nearest = emp
                .particles()
                .iter()
                .min_by(|a, b| (a.state - x).abs().total_cmp(&(b.state - x).abs()))
                .expect("nonempty");
            feedback.push(nearest.control);
        }
    }
    JointLaw::normalized(*grid, density, feedback)
}
