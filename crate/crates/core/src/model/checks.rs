//! Randomized consistency checks of a model's declared derivatives and bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::measure::{lions_fd_oracle, second_moment, w2_1d, EmpiricalJointLaw, Particle};
use crate::model::{kernel, GameModel, LawSummary, MajorPoint, MinorPoint, Moments};

/// Outcome of one named derivative check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    /// Largest `|fd − analytic| / (|analytic| + floor)` seen.
    pub worst_error: f64,
    pub passed: bool,
}

fn random_law(rng: &mut ChaCha8Rng, n: usize) -> EmpiricalJointLaw {
    let (mx, sx) = (rng.random_range(-1.0..1.0), rng.random_range(0.3..1.5));
    let (mu, su) = (rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0));
    let w = 1.0 / n as f64;
    let particles = (0..n)
        .map(|_| {
            let zx: f64 = rng.sample(StandardNormal);
            let zu: f64 = rng.sample(StandardNormal);
            Particle {
                state: mx + sx * zx,
                control: mu + su * zu,
                weight: w,
            }
        })
        .collect();
    EmpiricalJointLaw::new(particles).expect("weights sum to one")
}

struct Base {
    x: f64,
    x0: f64,
    u0: f64,
    u1: f64,
}

fn random_base(rng: &mut ChaCha8Rng) -> Base {
    Base {
        x: rng.random_range(-2.0..2.0),
        x0: rng.random_range(-2.0..2.0),
        u0: rng.random_range(-1.0..1.0),
        u1: rng.random_range(-1.0..1.0),
    }
}

type LawFunctional<'m> = Box<dyn Fn(&Base, &LawSummary) -> f64 + 'm>;
type LawKernel<'m> = Box<dyn Fn(&Base, &LawSummary) -> Moments + 'm>;

fn law_derivatives<'m, M: GameModel + ?Sized>(model: &'m M) -> Vec<(&'static str, LawFunctional<'m>, LawKernel<'m>)> {
    vec![
        (
            "D_law g0",
            Box::new(move |b: &Base, s: &LawSummary| model.g0(MajorPoint::new(b.x0, s), b.u0)),
            Box::new(move |b: &Base, s: &LawSummary| model.g0_dlaw(MajorPoint::new(b.x0, s), b.u0)),
        ),
        (
            "D_law f0",
            Box::new(move |b: &Base, s: &LawSummary| model.f0(MajorPoint::new(b.x0, s), b.u0)),
            Box::new(move |b: &Base, s: &LawSummary| model.f0_dlaw(MajorPoint::new(b.x0, s), b.u0)),
        ),
        (
            "D_law h0",
            Box::new(move |b: &Base, s: &LawSummary| model.h0(MajorPoint::new(b.x0, s))),
            Box::new(move |b: &Base, s: &LawSummary| model.h0_dlaw(MajorPoint::new(b.x0, s))),
        ),
        (
            "D_law g1",
            Box::new(move |b: &Base, s: &LawSummary| model.g1(MinorPoint::new(b.x, b.x0, b.u0, s), b.u1)),
            Box::new(move |b: &Base, s: &LawSummary| model.g1_dlaw(MinorPoint::new(b.x, b.x0, b.u0, s), b.u1)),
        ),
        (
            "D_law f1",
            Box::new(move |b: &Base, s: &LawSummary| model.f1(MinorPoint::new(b.x, b.x0, b.u0, s), b.u1)),
            Box::new(move |b: &Base, s: &LawSummary| model.f1_dlaw(MinorPoint::new(b.x, b.x0, b.u0, s), b.u1)),
        ),
        (
            "D_law h1",
            Box::new(move |b: &Base, s: &LawSummary| model.h1(MinorPoint::new(b.x, b.x0, b.u0, s))),
            Box::new(move |b: &Base, s: &LawSummary| model.h1_dlaw(MinorPoint::new(b.x, b.x0, b.u0, s))),
        ),
        (
            "D_law f1_u1",
            Box::new(move |b: &Base, s: &LawSummary| model.f1_u1(MinorPoint::new(b.x, b.x0, b.u0, s), b.u1)),
            Box::new(move |b: &Base, s: &LawSummary| model.f1_u1_dlaw(MinorPoint::new(b.x, b.x0, b.u0, s), b.u1)),
        ),
        (
            "D_law g1_u1",
            Box::new(move |b: &Base, s: &LawSummary| model.g1_u1(MinorPoint::new(b.x, b.x0, b.u0, s), b.u1)),
            Box::new(move |b: &Base, s: &LawSummary| model.g1_u1_dlaw(MinorPoint::new(b.x, b.x0, b.u0, s), b.u1)),
        ),
    ]
}

/// Compares every law-derivative kernel against the particle
/// finite-difference Lions oracle.
///
/// For each kernel, `trials` random base points and random `n`-particle laws
/// are drawn; at a handful of particles, both coordinate directions are
/// checked with `|fd − k| ≤ rel_tol·|k| + 1e-8`.
pub fn check_lions_kernels<M: GameModel + ?Sized>(
    model: &M,
    n: usize,
    eps: f64,
    rel_tol: f64,
    trials: usize,
    seed: u64,
) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    for (name, functional, coeffs) in law_derivatives(model) {
        let mut worst = 0.0f64;
        let mut passed = true;
        for _ in 0..trials {
            let base = random_base(&mut rng);
            let emp = random_law(&mut rng, n);
            let summary = model.summarize(&emp);
            let c = coeffs(&base, &summary);
            let f = |e: &EmpiricalJointLaw| functional(&base, &model.summarize(e));
            for _ in 0..4 {
                let i = rng.random_range(0..n);
                let p = emp.particles()[i];
                let k = kernel(model, &c, p.state, p.control);
                for (dir, analytic) in [((1.0, 0.0), k.d_state), ((0.0, 1.0), k.d_control)] {
                    let fd = lions_fd_oracle(&f, &emp, i, dir, eps).unwrap_or(f64::NAN);
                    let err = (fd - analytic).abs();
                    let bound = rel_tol * analytic.abs() + 1e-8;
                    worst = worst.max(err / (analytic.abs() + 1e-8 / rel_tol));
                    if !(err <= bound) {
                        passed = false;
                    }
                }
            }
        }
        reports.push(CheckReport {
            name,
            worst_error: worst,
            passed,
        });
    }
    reports
}

fn minor<'a>(b: &Base, s: &'a LawSummary) -> MinorPoint<'a> {
    MinorPoint::new(b.x, b.x0, b.u0, s)
}

fn fd1(f: &dyn Fn(f64) -> f64, v: f64) -> f64 {
    let h = 1e-5 * (1.0 + v.abs());
    (f(v + h) - f(v - h)) / (2.0 * h)
}

/// Checks declared first partials and moment gradients against central
/// differences of the values at random points, with tolerance
/// `|fd − d| ≤ tol·(1 + |d|)`.
pub fn check_partials<M: GameModel + ?Sized>(model: &M, trials: usize, tol: f64, seed: u64) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    type Probe<'a, M> = (&'static str, Box<dyn Fn(&M, &Base, &LawSummary) -> (f64, f64) + 'a>);
    fn mk<'a, M: GameModel + ?Sized>(
        name: &'static str,
        f: impl Fn(&M, &Base, &LawSummary) -> (f64, f64) + 'a,
    ) -> Probe<'a, M> {
        (name, Box::new(f))
    }
    let probes: Vec<Probe<M>> = vec![
        mk("g0_x0", |m: &M, b, s| {
            (fd1(&|v| m.g0(MajorPoint::new(v, s), b.u0), b.x0), m.g0_x0(MajorPoint::new(b.x0, s), b.u0))
        }),
        mk("g0_u0", |m: &M, b, s| {
            (fd1(&|v| m.g0(MajorPoint::new(b.x0, s), v), b.u0), m.g0_u0(MajorPoint::new(b.x0, s), b.u0))
        }),
        mk("f0_x0", |m: &M, b, s| {
            (fd1(&|v| m.f0(MajorPoint::new(v, s), b.u0), b.x0), m.f0_x0(MajorPoint::new(b.x0, s), b.u0))
        }),
        mk("f0_u0", |m: &M, b, s| {
            (fd1(&|v| m.f0(MajorPoint::new(b.x0, s), v), b.u0), m.f0_u0(MajorPoint::new(b.x0, s), b.u0))
        }),
        mk("h0_x0", |m: &M, b, s| (fd1(&|v| m.h0(MajorPoint::new(v, s)), b.x0), m.h0_x0(MajorPoint::new(b.x0, s)))),
        mk("sigma0_x0", |m: &M, b, _| (fd1(&|v| m.sigma0(v), b.x0), m.sigma0_x0(b.x0))),
        mk("sigma1_x1", |m: &M, b, _| (fd1(&|v| m.sigma1(v), b.x), m.sigma1_x1(b.x))),
        mk("g1_x0", |m: &M, b, s| {
            let at = minor(b, s);
            (fd1(&|v| m.g1(at.with_x0(v), b.u1), b.x0), m.g1_x0(at, b.u1))
        }),
        mk("g1_u0", |m: &M, b, s| {
            let at = minor(b, s);
            (fd1(&|v| m.g1(at.with_u0(v), b.u1), b.u0), m.g1_u0(at, b.u1))
        }),
        mk("g1_u1", |m: &M, b, s| {
            let at = minor(b, s);
            (fd1(&|v| m.g1(at, v), b.u1), m.g1_u1(at, b.u1))
        }),
        mk("f1_x0", |m: &M, b, s| {
            let at = minor(b, s);
            (fd1(&|v| m.f1(at.with_x0(v), b.u1), b.x0), m.f1_x0(at, b.u1))
        }),
        mk("f1_u0", |m: &M, b, s| {
            let at = minor(b, s);
            (fd1(&|v| m.f1(at.with_u0(v), b.u1), b.u0), m.f1_u0(at, b.u1))
        }),
        mk("f1_u1", |m: &M, b, s| {
            let at = minor(b, s);
            (fd1(&|v| m.f1(at, v), b.u1), m.f1_u1(at, b.u1))
        }),
        mk("h1_x0", |m: &M, b, s| {
            let at = minor(b, s);
            (fd1(&|v| m.h1(at.with_x0(v)), b.x0), m.h1_x0(at))
        }),
        mk("h1_u0", |m: &M, b, s| {
            let at = minor(b, s);
            (fd1(&|v| m.h1(at.with_u0(v)), b.u0), m.h1_u0(at))
        }),
        mk("f1_u1u1", |m: &M, b, s| {
            let at = minor(b, s);
            (fd1(&|v| m.f1_u1(at, v), b.u1), m.f1_u1u1(at, b.u1))
        }),
        mk("f1_u1x0", |m: &M, b, s| {
            let at = minor(b, s);
            (fd1(&|v| m.f1_u1(at.with_x0(v), b.u1), b.x0), m.f1_u1x0(at, b.u1))
        }),
        mk("f1_u1u0", |m: &M, b, s| {
            let at = minor(b, s);
            (fd1(&|v| m.f1_u1(at.with_u0(v), b.u1), b.u0), m.f1_u1u0(at, b.u1))
        }),
        mk("g1_u1u1", |m: &M, b, s| {
            let at = minor(b, s);
            (fd1(&|v| m.g1_u1(at, v), b.u1), m.g1_u1u1(at, b.u1))
        }),
        mk("g1_u1x0", |m: &M, b, s| {
            let at = minor(b, s);
            (fd1(&|v| m.g1_u1(at.with_x0(v), b.u1), b.x0), m.g1_u1x0(at, b.u1))
        }),
        mk("g1_u1u0", |m: &M, b, s| {
            let at = minor(b, s);
            (fd1(&|v| m.g1_u1(at.with_u0(v), b.u1), b.u0), m.g1_u1u0(at, b.u1))
        }),
    ];
    let mut reports: Vec<CheckReport> = probes
        .iter()
        .map(|(name, _)| CheckReport {
            name,
            worst_error: 0.0,
            passed: true,
        })
        .collect();
    let laws = law_derivatives(model);
    let mut law_reports: Vec<CheckReport> = laws
        .iter()
        .map(|(name, _, _)| CheckReport {
            name,
            worst_error: 0.0,
            passed: true,
        })
        .collect();
    let record = |r: &mut CheckReport, fd: f64, d: f64| {
        let err = (fd - d).abs() / (1.0 + d.abs());
        r.worst_error = r.worst_error.max(err);
        if !(err <= tol) {
            r.passed = false;
        }
    };
    let k = model.moment_count();
    for _ in 0..trials {
        let base = random_base(&mut rng);
        let summary: LawSummary = LawSummary::from_slice(&(0..k).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
        for ((_, probe), r) in probes.iter().zip(reports.iter_mut()) {
            let (fd, d) = probe(model, &base, &summary);
            record(r, fd, d);
        }
        for ((_, f, c), r) in laws.iter().zip(law_reports.iter_mut()) {
            let coeffs = c(&base, &summary);
            for j in 0..k {
                let s = summary.get(j);
                let fd = fd1(&|v| f(&base, &summary.bumped(j, v - s)), s);
                record(r, fd, coeffs.get(j).copied().unwrap_or(0.0));
            }
        }
    }
    reports.extend(law_reports);
    reports
}

/// Spot-checks the declared Lipschitz constant of `g1` on random argument
/// pairs, measuring the law distance in joint W2. Returns the worst ratio
/// `|Δg1| / (K·distance)`; a value above 1 is a violation. `None` if the
/// model declares no constant.
pub fn lipschitz_spot_check<M: GameModel + ?Sized>(model: &M, samples: usize, seed: u64) -> Option<f64> {
    let k = model.lipschitz_g1()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let (a, b) = (random_base(&mut rng), random_base(&mut rng));
        let (la, lb) = (random_law(&mut rng, 16), random_law(&mut rng, 16));
        let (sa, sb) = (model.summarize(&la), model.summarize(&lb));
        let ga = model.g1(MinorPoint::new(a.x, a.x0, a.u0, &sa), a.u1);
        let gb = model.g1(MinorPoint::new(b.x, b.x0, b.u0, &sb), b.u1);
        let dist = (a.x - b.x).abs() + (a.x0 - b.x0).abs() + (a.u0 - b.u0).abs() + (a.u1 - b.u1).abs() + w2_1d(&la, &lb);
        if dist > 0.0 {
            worst = worst.max((ga - gb).abs() / (k * dist));
        }
    }
    Some(worst)
}

/// Spot-checks the declared quadratic growth bound of `f1`. Returns the
/// worst ratio `|f1| / (C·(1 + |x|² + |x0|² + |u0|² + |u1|² + M2))`.
pub fn growth_spot_check<M: GameModel + ?Sized>(model: &M, samples: usize, seed: u64) -> Option<f64> {
    let c = model.growth_f1()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let mut b = random_base(&mut rng);
        let scale: f64 = rng.random_range(0.1..10.0);
        b.x *= scale;
        b.x0 *= scale;
        b.u0 *= scale;
        b.u1 *= scale;
        let law = random_law(&mut rng, 16);
        let s = model.summarize(&law);
        let f = model.f1(MinorPoint::new(b.x, b.x0, b.u0, &s), b.u1);
        let bound = c * (1.0 + b.x * b.x + b.x0 * b.x0 + b.u0 * b.u0 + b.u1 * b.u1 + second_moment(&law));
        worst = worst.max(f.abs() / bound);
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog::BrokenKernel;
    use crate::model::lq::LqModel;

    #[test]
    fn lq_kernels_match_oracle() {
        let reports = check_lions_kernels(&LqModel::benchmark(), 256, 1e-5, 1e-4, 3, 7);
        for r in &reports {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn broken_kernel_is_detected() {
        let reports = check_lions_kernels(&BrokenKernel(LqModel::benchmark()), 256, 1e-5, 1e-4, 3, 7);
        let bad: Vec<_> = reports.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        assert_eq!(bad, vec!["D_law g1"]);
    }

    #[test]
    fn lq_partials_match_differences() {
        for r in check_partials(&LqModel::benchmark(), 20, 1e-7, 3) {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn lq_bounds_hold_on_samples() {
        let m = LqModel::benchmark();
        assert!(lipschitz_spot_check(&m, 1000, 5).unwrap() <= 1.0);
        assert!(growth_spot_check(&m, 1000, 5).unwrap() <= 1.0);
    }
}
