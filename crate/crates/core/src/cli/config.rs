//! Run configuration and its text format.
//!
//! # Grammar
//!
//! ```text
//! file    := line*
//! line    := blank | comment | section | entry
//! comment := ws* '#' any*
//! section := ws* '[' name ']' ws* comment?
//! entry   := ws* key ws* '=' ws* value ws* comment?
//! ```
//!
//! Keys are only valid inside their section, each key may appear once, and
//! omitted keys keep their defaults. Values are plain numbers, names, or
//! comma-separated integer lists (`n_list`). [`RunConfig::to_normalized`]
//! writes every key in a fixed order; parsing that text yields the same
//! configuration and the same text again.
//!
//! ```
//! use majorminor::cli::config::RunConfig;
//!
//! let cfg = RunConfig::parse("[grid]\nnodes = 121\n[equilibrium]\ndamping = 0.3 # slower\n").unwrap();
//! assert_eq!(cfg.grid.nodes, 121);
//! let text = cfg.to_normalized();
//! assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::model::catalog::MODEL_NAMES;
use crate::model::lq::LqParams;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub name: String,
    pub params: LqParams,
    /// Initial minor law `N(mean0, std0²)` discretized on the grid.
    pub mean0: f64,
    pub std0: f64,
    pub x0_init: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub nodes: usize,
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum X0Mode {
    /// Major state held at `x0_init`.
    Fixed,
    /// Major state integrated with the law iterate.
    Integrated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumSection {
    pub tol: f64,
    pub damping: f64,
    pub max_iter: usize,
    pub x0_mode: X0Mode,
    /// Constant major control used outside the optimizer.
    pub u0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MajorSection {
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    pub step: f64,
    pub max_halvings: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSection {
    pub n_agents: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// `0` uses the grid step.
    pub dt_sim: f64,
    pub interaction: crate::simulate::Interaction,
    pub record_every: usize,
    /// Population sizes of the consistency table.
    pub n_list: Vec<usize>,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write law and value slices every this many time steps.
    pub slice_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub equilibrium: EquilibriumSection,
    pub major: MajorSection,
    pub simulation: SimulationSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSection {
                name: "lq".into(),
                params: LqParams::default(),
                mean0: 1.0,
                std0: 0.5,
                x0_init: 1.5,
            },
            grid: GridSection {
                x_min: -6.0,
                x_max: 6.0,
                nodes: 241,
                horizon: 1.0,
                steps: 1000,
            },
            equilibrium: EquilibriumSection {
                tol: 1e-6,
                damping: 0.5,
                max_iter: 200,
                x0_mode: X0Mode::Integrated,
                u0: 0.0,
            },
            major: MajorSection {
                outer_tol: 1e-5,
                outer_max_iter: 50,
                step: 0.5,
                max_halvings: 20,
                inner_tol: 1e-11,
                inner_max_iter: 500,
            },
            simulation: SimulationSection {
                n_agents: 800,
                n_paths: 1,
                seed: 42,
                dt_sim: 0.0,
                interaction: crate::simulate::Interaction::Empirical,
                record_every: 100,
                n_list: vec![50, 200, 800],
                seeds: 20,
            },
            output: OutputSection {
                dir: PathBuf::from("out"),
                slice_every: 100,
            },
        }
    }
}

const SECTIONS: [&str; 6] = ["model", "grid", "equilibrium", "major", "simulation", "output"];

fn keys(section: &str) -> Vec<&'static str> {
    match section {
        "model" => {
            let mut k = vec!["name", "mean0", "std0", "x0_init"];
            k.extend(LqParams::NAMES);
            k
        }
        "grid" => vec!["x_min", "x_max", "nodes", "horizon", "steps"],
        "equilibrium" => vec!["tol", "damping", "max_iter", "x0_mode", "u0"],
        "major" => vec!["outer_tol", "outer_max_iter", "step", "max_halvings", "inner_tol", "inner_max_iter"],
        "simulation" => vec!["n_agents", "n_paths", "seed", "dt_sim", "interaction", "record_every", "n_list", "seeds"],
        "output" => vec!["dir", "slice_every"],
        _ => Vec::new(),
    }
}

fn float(v: f64) -> String {
    format!("{v:?}")
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{v}` is not finite"))
    }
}

fn parse_uint<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("`{v}` is not a non-negative integer"))
}

impl RunConfig {
    fn get(&self, section: &str, key: &str) -> String {
        use crate::simulate::Interaction;
        match (section, key) {
            ("model", "name") => self.model.name.clone(),
            ("model", "mean0") => float(self.model.mean0),
            ("model", "std0") => float(self.model.std0),
            ("model", "x0_init") => float(self.model.x0_init),
            ("model", k) => float(self.model.params.get(k).expect("known parameter")),
            ("grid", "x_min") => float(self.grid.x_min),
            ("grid", "x_max") => float(self.grid.x_max),
            ("grid", "nodes") => self.grid.nodes.to_string(),
            ("grid", "horizon") => float(self.grid.horizon),
            ("grid", "steps") => self.grid.steps.to_string(),
            ("equilibrium", "tol") => float(self.equilibrium.tol),
            ("equilibrium", "damping") => float(self.equilibrium.damping),
            ("equilibrium", "max_iter") => self.equilibrium.max_iter.to_string(),
            ("equilibrium", "x0_mode") => match self.equilibrium.x0_mode {
                X0Mode::Fixed => "fixed".into(),
                X0Mode::Integrated => "integrated".into(),
            },
            ("equilibrium", "u0") => float(self.equilibrium.u0),
            ("major", "outer_tol") => float(self.major.outer_tol),
            ("major", "outer_max_iter") => self.major.outer_max_iter.to_string(),
            ("major", "step") => float(self.major.step),
            ("major", "max_halvings") => self.major.max_halvings.to_string(),
            ("major", "inner_tol") => float(self.major.inner_tol),
            ("major", "inner_max_iter") => self.major.inner_max_iter.to_string(),
            ("simulation", "n_agents") => self.simulation.n_agents.to_string(),
            ("simulation", "n_paths") => self.simulation.n_paths.to_string(),
            ("simulation", "seed") => self.simulation.seed.to_string(),
            ("simulation", "dt_sim") => float(self.simulation.dt_sim),
            ("simulation", "interaction") => match self.simulation.interaction {
                Interaction::MeanField => "mean-field".into(),
                Interaction::Empirical => "empirical".into(),
            },
            ("simulation", "record_every") => self.simulation.record_every.to_string(),
            ("simulation", "n_list") => self
                .simulation
                .n_list
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(","),
            ("simulation", "seeds") => self.simulation.seeds.to_string(),
            ("output", "dir") => self.output.dir.display().to_string(),
            ("output", "slice_every") => self.output.slice_every.to_string(),
            _ => unreachable!("unknown key {section}.{key}"),
        }
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> std::result::Result<(), String> {
        use crate::simulate::Interaction;
        match (section, key) {
            ("model", "name") => self.model.name = v.to_string(),
            ("model", "mean0") => self.model.mean0 = parse_f64(v)?,
            ("model", "std0") => self.model.std0 = parse_f64(v)?,
            ("model", "x0_init") => self.model.x0_init = parse_f64(v)?,
            ("model", k) => {
                let x = parse_f64(v)?;
                if !self.model.params.set(k, x) {
                    return Err(format!("unknown key `{k}` in [model]"));
                }
            }
            ("grid", "x_min") => self.grid.x_min = parse_f64(v)?,
            ("grid", "x_max") => self.grid.x_max = parse_f64(v)?,
            ("grid", "nodes") => self.grid.nodes = parse_uint(v)?,
            ("grid", "horizon") => self.grid.horizon = parse_f64(v)?,
            ("grid", "steps") => self.grid.steps = parse_uint(v)?,
            ("equilibrium", "tol") => self.equilibrium.tol = parse_f64(v)?,
            ("equilibrium", "damping") => self.equilibrium.damping = parse_f64(v)?,
            ("equilibrium", "max_iter") => self.equilibrium.max_iter = parse_uint(v)?,
            ("equilibrium", "x0_mode") => {
                self.equilibrium.x0_mode = match v {
                    "fixed" => X0Mode::Fixed,
                    "integrated" => X0Mode::Integrated,
                    _ => return Err(format!("x0_mode must be `fixed` or `integrated` (got `{v}`)")),
                }
            }
            ("equilibrium", "u0") => self.equilibrium.u0 = parse_f64(v)?,
            ("major", "outer_tol") => self.major.outer_tol = parse_f64(v)?,
            ("major", "outer_max_iter") => self.major.outer_max_iter = parse_uint(v)?,
            ("major", "step") => self.major.step = parse_f64(v)?,
            ("major", "max_halvings") => self.major.max_halvings = parse_uint(v)?,
            ("major", "inner_tol") => self.major.inner_tol = parse_f64(v)?,
            ("major", "inner_max_iter") => self.major.inner_max_iter = parse_uint(v)?,
            ("simulation", "n_agents") => self.simulation.n_agents = parse_uint(v)?,
            ("simulation", "n_paths") => self.simulation.n_paths = parse_uint(v)?,
            ("simulation", "seed") => self.simulation.seed = parse_uint(v)?,
            ("simulation", "dt_sim") => self.simulation.dt_sim = parse_f64(v)?,
            ("simulation", "interaction") => {
                self.simulation.interaction = match v {
                    "mean-field" => Interaction::MeanField,
                    "empirical" => Interaction::Empirical,
                    _ => return Err(format!("interaction must be `mean-field` or `empirical` (got `{v}`)")),
                }
            }
            ("simulation", "record_every") => self.simulation.record_every = parse_uint(v)?,
            ("simulation", "n_list") => {
                self.simulation.n_list = v
                    .split(',')
                    .map(|s| parse_uint(s.trim()))
                    .collect::<std::result::Result<Vec<usize>, String>>()?
            }
            ("simulation", "seeds") => self.simulation.seeds = parse_uint(v)?,
            ("output", "dir") => self.output.dir = PathBuf::from(v),
            ("output", "slice_every") => self.output.slice_every = parse_uint(v)?,
            _ => return Err(format!("unknown key `{key}` in [{section}]")),
        }
        Ok(())
    }

    /// Parses config text over the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section: Option<&str> = None;
        let mut seen: HashMap<(String, String), usize> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| Error::Config { line: line_no, message };
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("unterminated section header `{line}`")))?
                    .trim();
                let known = SECTIONS
                    .iter()
                    .find(|s| **s == name)
                    .ok_or_else(|| err(format!("unknown section [{name}]")))?;
                section = Some(known);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section.ok_or_else(|| err(format!("`{key}` appears before any section header")))?;
            if !keys(sec).contains(&key) {
                return Err(err(format!("unknown key `{key}` in [{sec}]")));
            }
            if value.is_empty() {
                return Err(err(format!("`{key}` has no value")));
            }
            if let Some(prev) = seen.insert((sec.to_string(), key.to_string()), line_no) {
                return Err(err(format!("`{key}` in [{sec}] already set on line {prev}")));
            }
            cfg.set(sec, key, value).map_err(|m| err(format!("{sec}.{key}: {m}")))?;
        }
        cfg.validate_with(|sec, key| seen.get(&(sec.to_string(), key.to_string())).copied().unwrap_or(0))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(|_, _| 0)
    }

    fn validate_with(&self, line_of: impl Fn(&str, &str) -> usize) -> Result<()> {
        let fail = |sec: &str, key: &str, message: String| Error::Config {
            line: line_of(sec, key),
            message: format!("{sec}.{key}: {message}"),
        };
        if !MODEL_NAMES.contains(&self.model.name.as_str()) {
            return Err(fail("model", "name", format!("unknown model (known: {})", MODEL_NAMES.join(", "))));
        }
        if self.model.params.b == 0.0 {
            return Err(fail("model", "b", "must be nonzero".into()));
        }
        if !(self.model.std0 > 0.0) {
            return Err(fail("model", "std0", "must be positive".into()));
        }
        if !(self.grid.x_max > self.grid.x_min) {
            return Err(fail("grid", "x_max", "must exceed x_min".into()));
        }
        if self.grid.nodes < 3 {
            return Err(fail("grid", "nodes", "need at least 3 nodes".into()));
        }
        if !(self.grid.horizon > 0.0) {
            return Err(fail("grid", "horizon", "must be positive".into()));
        }
        if self.grid.steps == 0 {
            return Err(fail("grid", "steps", "must be at least 1".into()));
        }
        for (sec, key, v) in [
            ("equilibrium", "tol", self.equilibrium.tol),
            ("major", "outer_tol", self.major.outer_tol),
            ("major", "inner_tol", self.major.inner_tol),
            ("major", "step", self.major.step),
        ] {
            if !(v > 0.0) {
                return Err(fail(sec, key, "must be positive".into()));
            }
        }
        if !(self.equilibrium.damping > 0.0 && self.equilibrium.damping <= 1.0) {
            return Err(fail("equilibrium", "damping", "must lie in (0, 1]".into()));
        }
        for (sec, key, v) in [
            ("equilibrium", "max_iter", self.equilibrium.max_iter),
            ("major", "inner_max_iter", self.major.inner_max_iter),
            ("simulation", "n_agents", self.simulation.n_agents),
            ("simulation", "n_paths", self.simulation.n_paths),
            ("simulation", "record_every", self.simulation.record_every),
            ("simulation", "seeds", self.simulation.seeds),
            ("output", "slice_every", self.output.slice_every),
        ] {
            if v == 0 {
                return Err(fail(sec, key, "must be at least 1".into()));
            }
        }
        if !(self.simulation.dt_sim >= 0.0) {
            return Err(fail("simulation", "dt_sim", "must be non-negative".into()));
        }
        if self.simulation.n_list.is_empty() || self.simulation.n_list.contains(&0) {
            return Err(fail("simulation", "n_list", "needs positive population sizes".into()));
        }
        Ok(())
    }

    /// Every key in canonical order; round-trips through [`RunConfig::parse`].
    pub fn to_normalized(&self) -> String {
        let mut out = String::new();
        for (i, sec) in SECTIONS.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{sec}]");
            for key in keys(sec) {
                let _ = writeln!(out, "{key} = {}", self.get(sec, key));
            }
        }
        out
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_normalized();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_normalized(), text);
    }

    #[test]
    fn comments_and_whitespace_are_ignored() {
        let cfg = RunConfig::parse("# header\n\n  [model]   # lq\n  rho=0.25   \n\t[simulation]\nn_list = 10, 20\n").unwrap();
        assert_eq!(cfg.model.params.rho, 0.25);
        assert_eq!(cfg.simulation.n_list, vec![10, 20]);
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            ("[grid]\nnodes = abc\n", 2),
            ("[nope]\n", 1),
            ("nodes = 3\n", 1),
            ("[grid]\n\nwidth = 2\n", 3),
            ("[grid]\nnodes = 3\nnodes = 4\n", 3),
            ("[grid]\nnodes = 2\n", 2),
            ("[equilibrium]\ndamping = 1.5\n", 2),
            ("[model\n", 1),
            ("[grid]\nnodes\n", 2),
        ];
        for (text, line) in cases {
            match RunConfig::parse(text) {
                Err(Error::Config { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_model_is_rejected() {
        assert!(RunConfig::parse("[model]\nname = other\n").is_err());
    }
}
