//! N-player Monte Carlo: Euler-Maruyama for the major player and a finite
//! population of minor agents driven by the grid feedback, cost estimators
//! and the propagation-of-chaos consistency check.
//!
//! # Random streams
//!
//! Every generator is a `ChaCha8Rng` seeded with the master seed. Path `j`
//! uses stream `j << 32` for the common noise `W0`, and agent `i` of path `j`
//! uses stream `(j << 32) | (i + 1)` for its initial draw followed by its
//! Brownian increments. Streams never overlap, so results do not depend on
//! thread scheduling.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::equilibrium::EquilibriumSolution;
use crate::error::{Error, Result};
use crate::grid::{control_at, Grids};
use crate::measure::{fmt17, grid_to_empirical, w2_1d, CellSampler, EmpiricalJointLaw, JointLaw};
use crate::model::{GameModel, LawSummary, MajorPoint, MinorPoint};

/// Which law the agents see in their coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interaction {
    /// The given law path and major state path.
    MeanField,
    /// The empirical law of the simulated population; the major state is
    /// integrated alongside.
    #[default]
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_agents: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub dt_sim: f64,
    pub horizon: f64,
    pub interaction: Interaction,
    /// Store states every this many steps (the final step is always stored).
    pub record_every: usize,
}

impl SimConfig {
    pub fn new(n_agents: usize, seed: u64, dt_sim: f64, horizon: f64) -> Self {
        Self {
            n_agents,
            n_paths: 1,
            seed,
            dt_sim,
            horizon,
            interaction: Interaction::Empirical,
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<usize> {
        if self.n_agents == 0 || self.n_paths == 0 {
            return Err(Error::InvalidArgument("need at least one agent and one path".into()));
        }
        if self.n_paths > u32::MAX as usize || self.n_agents >= u32::MAX as usize {
            return Err(Error::InvalidArgument("too many agents or paths for the stream layout".into()));
        }
        if !(self.dt_sim > 0.0 && self.horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dt_sim and horizon must be positive (got {}, {})",
                self.dt_sim, self.horizon
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        let steps = (self.horizon / self.dt_sim).round();
        if (steps * self.dt_sim - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(Error::InvalidArgument(format!(
                "dt_sim {} does not divide the horizon {}",
                self.dt_sim, self.horizon
            )));
        }
        Ok(steps as usize)
    }
}

/// One common-noise scenario. States and controls are indexed
/// `[recorded step][agent]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrajectory {
    pub x0: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    /// Realized minor cost per agent.
    pub cost1: Vec<f64>,
    /// Realized major cost.
    pub cost0: f64,
}

impl PathTrajectory {
    pub fn empirical(&self, record: usize) -> Result<EmpiricalJointLaw> {
        EmpiricalJointLaw::uniform(&self.states[record], &self.controls[record])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    /// Simulation step of each recorded slice.
    pub record_steps: Vec<usize>,
    pub times: Vec<f64>,
    pub paths: Vec<PathTrajectory>,
    /// Share of feedback lookups that fell outside the grid.
    pub clamp_fraction: f64,
}

impl Trajectories {
    /// Recorded slice at simulation step `step`, if stored.
    pub fn record_at(&self, step: usize) -> Option<usize> {
        self.record_steps.iter().position(|&s| s == step)
    }

    /// Writes `agent,t,x,u` rows; agents of path `j` are numbered from `j·N`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "agent,t,x,u")?;
        for (j, p) in self.paths.iter().enumerate() {
            let n = p.cost1.len();
            for a in 0..n {
                for (r, t) in self.times.iter().enumerate() {
                    writeln!(out, "{},{},{},{}", j * n + a, fmt17(*t), fmt17(p.states[r][a]), fmt17(p.controls[r][a]))?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn stream_rng(seed: u64, path: usize, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((path as u64) << 32) | slot);
    rng
}

struct Agent {
    rng: ChaCha8Rng,
    x: f64,
    u: f64,
    cost: f64,
}

/// Euler-Maruyama simulation of `cfg.n_paths` independent populations under
/// the feedback path `feedback` (one grid slice per time node of `grids`).
///
/// Feedback is interpolated linearly between nodes and held constant beyond
/// the grid; coefficients at simulation time `t` use the grid interval
/// containing `t`, and the major state path is interpolated linearly.
/// Initial states are drawn from the density of `pi_path[0]`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_population<M: GameModel + ?Sized>(
    model: &M,
    feedback: &[Vec<f64>],
    pi_path: &[JointLaw],
    x0_path: &[f64],
    u0_path: &[f64],
    grids: &Grids,
    cfg: &SimConfig,
) -> Result<Trajectories> {
    let steps = cfg.validate()?;
    let pde_steps = grids.time.steps();
    if (cfg.horizon - grids.time.horizon()).abs() > 1e-9 * grids.time.horizon() {
        return Err(Error::InvalidArgument("simulation horizon differs from the grid horizon".into()));
    }
    if feedback.len() != pde_steps + 1 || pi_path.len() != pde_steps + 1 || x0_path.len() != pde_steps + 1 {
        return Err(Error::InvalidArgument("feedback, law and major paths need one slice per time node".into()));
    }
    if u0_path.len() != pde_steps {
        return Err(Error::InvalidArgument("major control path needs one value per interval".into()));
    }
    let dt_pde = grids.time.dt();
    let interval = |k: usize| (((k as f64) * cfg.dt_sim / dt_pde + 1e-9).floor() as usize).min(pde_steps - 1);
    let node_of = |k: usize| if k == steps { pde_steps } else { interval(k) };
    let x0_at = |k: usize| {
        let s = (k as f64 * cfg.dt_sim / dt_pde).min(pde_steps as f64);
        let i = (s.floor() as usize).min(pde_steps - 1);
        let f = s - i as f64;
        (1.0 - f) * x0_path[i] + f * x0_path[i + 1]
    };
    let summaries: Vec<LawSummary> = match cfg.interaction {
        Interaction::MeanField => pi_path.iter().map(|l| model.summarize(l)).collect(),
        Interaction::Empirical => Vec::new(),
    };
    let sampler = CellSampler::new(&pi_path[0]);
    let record_steps: Vec<usize> = (0..=steps).filter(|k| k % cfg.record_every == 0 || *k == steps).collect();
    let sqdt = cfg.dt_sim.sqrt();
    let dt = cfg.dt_sim;
    let mut lookups = 0usize;
    let mut clamps = 0usize;
    let mut paths = Vec::with_capacity(cfg.n_paths);
    for j in 0..cfg.n_paths {
        let mut rng0 = stream_rng(cfg.seed, j, 0);
        let mut agents: Vec<Agent> = (0..cfg.n_agents)
            .map(|i| {
                let mut rng = stream_rng(cfg.seed, j, i as u64 + 1);
                let (x, _) = sampler.sample(rng.random::<f64>());
                Agent { rng, x, u: 0.0, cost: 0.0 }
            })
            .collect();
        let mut x0 = x0_path[0];
        let mut cost0 = 0.0;
        let mut rec = Trajectory::default();
        for k in 0..=steps {
            let n = node_of(k);
            let u0 = control_at(u0_path, n);
            if cfg.interaction == Interaction::MeanField {
                x0 = x0_at(k);
            }
            let slice = &feedback[n];
            clamps += agents
                .par_iter_mut()
                .map(|a| {
                    let (u, outside) = grids.state.interpolate(slice, a.x);
                    a.u = u;
                    usize::from(outside)
                })
                .sum::<usize>();
            lookups += agents.len();
            let empirical;
            let law = match cfg.interaction {
                Interaction::MeanField => &summaries[n],
                Interaction::Empirical => {
                    let xs: Vec<f64> = agents.iter().map(|a| a.x).collect();
                    let us: Vec<f64> = agents.iter().map(|a| a.u).collect();
                    empirical = model.summarize(&EmpiricalJointLaw::uniform(&xs, &us)?);
                    &empirical
                }
            };
            if record_steps.binary_search(&k).is_ok() {
                rec.x0.push(x0);
                rec.states.push(agents.iter().map(|a| a.x).collect());
                rec.controls.push(agents.iter().map(|a| a.u).collect());
            }
            let major = MajorPoint::new(x0, law);
            if k == steps {
                agents.par_iter_mut().for_each(|a| a.cost += model.h1(MinorPoint::new(a.x, x0, u0, law)));
                cost0 += model.h0(major);
                break;
            }
            cost0 += dt * model.f0(major, u0);
            let bad = agents
                .par_iter_mut()
                .enumerate()
                .find_map_first(|(i, a)| {
                    let at = MinorPoint::new(a.x, x0, u0, law);
                    a.cost += dt * model.f1(at, a.u);
                    let z: f64 = a.rng.sample(StandardNormal);
                    a.x += model.g1(at, a.u) * dt + model.sigma1(a.x) * sqdt * z;
                    (!a.x.is_finite()).then_some(i)
                });
            if let Some(agent) = bad {
                return Err(Error::Simulation { step: k, path: j, agent });
            }
            if cfg.interaction == Interaction::Empirical {
                let z: f64 = rng0.sample(StandardNormal);
                x0 += model.g0(major, u0) * dt + model.sigma0(x0) * sqdt * z;
                if !x0.is_finite() {
                    return Err(Error::Simulation { step: k, path: j, agent: usize::MAX });
                }
            }
        }
        paths.push(PathTrajectory {
            x0: rec.x0,
            states: rec.states,
            controls: rec.controls,
            cost1: agents.iter().map(|a| a.cost).collect(),
            cost0,
        });
    }
    let clamp_fraction = clamps as f64 / lookups.max(1) as f64;
    if clamp_fraction > 0.01 {
        log::warn!(
            "{:.2}% of feedback lookups fell outside the grid and were clamped",
            100.0 * clamp_fraction
        );
    }
    Ok(Trajectories {
        times: record_steps.iter().map(|&k| k as f64 * dt).collect(),
        record_steps,
        paths,
        clamp_fraction,
    })
}

#[derive(Default)]
struct Trajectory {
    x0: Vec<f64>,
    states: Vec<Vec<f64>>,
    controls: Vec<Vec<f64>>,
}

/// Which cost functional to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cost {
    Major,
    Minor,
}

/// Sample mean and standard error of the realized costs: across all agents
/// for the minor cost, across common-noise paths for the major cost.
pub fn mc_cost(traj: &Trajectories, which: Cost) -> (f64, f64) {
    let samples: Vec<f64> = match which {
        Cost::Minor => traj.paths.iter().flat_map(|p| p.cost1.iter().copied()).collect(),
        Cost::Major => traj.paths.iter().map(|p| p.cost0).collect(),
    };
    mean_and_se(&samples)
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Linear-interpolated sample quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// Median and interquartile range.
pub fn median_iqr(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (quantile(&v, 0.5), quantile(&v, 0.75) - quantile(&v, 0.25))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyRow {
    pub n: usize,
    pub median_w2: f64,
    pub iqr: f64,
    pub seeds: usize,
}

/// Empirical joint law of an `N`-player population against `Π*` at `T/2` and
/// `T`, averaging the two distances per seed and summarizing across seeds.
/// Seed `s` uses master seed `base_seed + s`.
pub fn empirical_consistency<M: GameModel + ?Sized>(
    model: &M,
    eq: &EquilibriumSolution,
    n_list: &[usize],
    seeds: usize,
    base_seed: u64,
) -> Result<Vec<ConsistencyRow>> {
    let grids = eq.density.grids;
    let steps = grids.time.steps();
    if steps % 2 != 0 {
        return Err(Error::InvalidArgument("consistency check needs an even number of time steps".into()));
    }
    if seeds == 0 {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let half = steps / 2;
    n_list
        .iter()
        .map(|&n| {
            let dists = (0..seeds)
                .into_par_iter()
                .map(|s| {
                    let cfg = SimConfig {
                        record_every: half,
                        ..SimConfig::new(n, base_seed + s as u64, grids.time.dt(), grids.time.horizon())
                    };
                    let tr = simulate_population(model, &eq.value.feedback, &eq.pi_path, &eq.x0, &eq.u0, &grids, &cfg)?;
                    let p = &tr.paths[0];
                    let mut acc = 0.0;
                    for k in [half, steps] {
                        let r = tr.record_at(k).expect("recorded");
                        acc += w2_1d(&p.empirical(r)?, &eq.pi_path[k]);
                    }
                    Ok(acc / 2.0)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (median_w2, iqr) = median_iqr(&dists);
            Ok(ConsistencyRow { n, median_w2, iqr, seeds })
        })
        .collect()
}

pub fn write_consistency_csv(path: &Path, rows: &[ConsistencyRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "N,median_w2,iqr,seeds")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.n, fmt17(r.median_w2), fmt17(r.iqr), r.seeds)?;
    }
    out.flush()?;
    Ok(())
}

/// Control experiment: iid samples drawn straight from `law`. Returns the
/// median W2 per sample size and the least-squares slope of
/// `log median` against `log N`.
pub fn iid_sampling_rate(law: &JointLaw, n_list: &[usize], seeds: usize, base_seed: u64) -> Result<(Vec<ConsistencyRow>, f64)> {
    if n_list.len() < 2 || seeds == 0 {
        return Err(Error::InvalidArgument("need two sample sizes and at least one seed".into()));
    }
    let rows = n_list
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let d = (0..seeds)
                .into_par_iter()
                .map(|s| Ok(w2_1d(&grid_to_empirical(law, n, base_seed + (j * seeds + s) as u64)?, law)))
                .collect::<Result<Vec<f64>>>()?;
            let (median_w2, iqr) = median_iqr(&d);
            Ok(ConsistencyRow { n, median_w2, iqr, seeds })
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.n as f64).ln(), r.median_w2.ln())).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok((rows, sxy / sxx))
}
