//! Run configuration: a flat `key = value` file merged with command-line
//! flags, validated before any computation starts.
//!
//! File format, one setting per line:
//!
//! ```text
//! # comment
//! n = 64
//! m = 3pi, 3pi
//! grad_tol = 1e-8
//! ```
//!
//! Keys are the long flag names with `-` replaced by `_`. Numbers may carry
//! a `pi` suffix (`4pi`, `4.5pi`, `pi`) meaning a multiple of π.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};
use std::path::PathBuf;

use serde::Serialize;

use crate::cartan::CouplingParams;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::minimizer::{MinimizeConfig, Seed};
use crate::radial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Minimize,
    Sweep,
    Bubble,
    Radial,
    Pohozaev,
    Identities,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Minimize => "minimize",
            Command::Sweep => "sweep",
            Command::Bubble => "bubble",
            Command::Radial => "radial",
            Command::Pohozaev => "pohozaev",
            Command::Identities => "identities",
        }
    }
}

/// Every recognised key, in manifest order.
pub const KEYS: &[&str] = &[
    "n",
    "rank",
    "m",
    "seed",
    "out",
    "max_iters",
    "grad_tol",
    "step",
    "divergence_energy_drop",
    "concentration_radius",
    "concentration_mass",
    "init",
    "m_grid",
    "range",
    "lambdas",
    "delta0",
    "a0",
    "r_max",
    "tol",
    "radii",
    "center",
    "input",
    "bubble_only",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub n: usize,
    pub rank: usize,
    pub couplings: Vec<f64>,
    pub seed: u64,
    pub out: PathBuf,
    pub minimize: MinimizeConfig,
    pub init: InitChoice,
    pub m_grid: usize,
    pub range: (f64, f64),
    pub lambdas: Vec<f64>,
    pub delta0: f64,
    pub a0: Vec<f64>,
    pub r_max: f64,
    pub tol: f64,
    pub radii: Vec<f64>,
    pub center: (f64, f64),
    pub input: Vec<PathBuf>,
    pub bubble_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum InitChoice {
    Zero,
    Random,
    Bubble { lambda: f64, component: usize },
}

impl InitChoice {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "random" => Ok(Self::Random),
            _ => {
                let parts: Vec<&str> = s.split(':').collect();
                match parts.as_slice() {
                    ["bubble", lambda, component] => Ok(Self::Bubble {
                        lambda: parse_real(lambda)?,
                        component: parse_int(component)?,
                    }),
                    _ => Err(invalid(format!(
                        "init must be zero, random or bubble:<lambda>:<component>, got {s:?}"
                    ))),
                }
            }
        }
    }

    fn render(self) -> String {
        match self {
            Self::Zero => "zero".into(),
            Self::Random => "random".into(),
            Self::Bubble { lambda, component } => format!("bubble:{lambda}:{component}"),
        }
    }

    pub fn seed(self) -> Option<Seed> {
        match self {
            Self::Zero => Some(Seed::Zero),
            Self::Random => None,
            Self::Bubble { lambda, component } => Some(Seed::Bubble { lambda, component }),
        }
    }
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        let couplings = match command {
            Command::Bubble => vec![5.0 * PI, 3.0 * PI],
            _ => vec![3.0 * PI, 3.0 * PI],
        };
        Self {
            command,
            n: 64,
            rank: 2,
            couplings,
            seed: 0,
            out: PathBuf::from("out"),
            minimize: MinimizeConfig::default(),
            init: InitChoice::Random,
            m_grid: 9,
            range: (PI, 5.0 * PI),
            lambdas: (2..=5).map(|k| E.powi(k)).collect(),
            delta0: crate::bubbles::DEFAULT_DELTA0,
            a0: vec![0.0, 0.0],
            r_max: 1e3,
            tol: 1e-10,
            radii: vec![0.1, 0.2],
            center: (0.5, 0.5),
            input: Vec::new(),
            bubble_only: false,
        }
    }

    /// Applies `key = value` settings in order; later settings win.
    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        for (key, value) in pairs {
            self.set(key, value.trim())?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mc = &mut self.minimize;
        match key {
            "n" => self.n = parse_int(value)?,
            "rank" => self.rank = parse_int(value)?,
            "m" => self.couplings = parse_list(value)?,
            "seed" => {
                self.seed = value.parse().map_err(|_| invalid(format!("bad seed {value:?}")))?;
                mc.seed = self.seed;
            }
            "out" => self.out = PathBuf::from(value),
            "max_iters" => mc.max_iters = parse_int(value)?,
            "grad_tol" => mc.grad_tol = parse_real(value)?,
            "step" => mc.step = parse_real(value)?,
            "divergence_energy_drop" => mc.divergence_energy_drop = parse_real(value)?,
            "concentration_radius" => mc.concentration_radius = parse_real(value)?,
            "concentration_mass" => mc.concentration_mass = parse_real(value)?,
            "init" => self.init = InitChoice::parse(value)?,
            "m_grid" => {
                let (a, b) = value
                    .split_once('x')
                    .ok_or_else(|| invalid(format!("m_grid must look like 9x9, got {value:?}")))?;
                let (a, b): (usize, usize) = (parse_int(a)?, parse_int(b)?);
                if a != b {
                    return Err(invalid("m_grid must be square".into()));
                }
                self.m_grid = a;
            }
            "range" => {
                let (a, b) = value
                    .split_once(':')
                    .ok_or_else(|| invalid(format!("range must look like 1pi:5pi, got {value:?}")))?;
                self.range = (parse_real(a)?, parse_real(b)?);
            }
            "lambdas" => self.lambdas = parse_list(value)?,
            "delta0" => self.delta0 = parse_real(value)?,
            "a0" => self.a0 = parse_list(value)?,
            "r_max" => self.r_max = parse_real(value)?,
            "tol" => self.tol = parse_real(value)?,
            "radii" => self.radii = parse_list(value)?,
            "center" => {
                let c = parse_list(value)?;
                if c.len() != 2 {
                    return Err(invalid("center needs two coordinates".into()));
                }
                self.center = (c[0], c[1]);
            }
            "input" => {
                self.input = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "bubble_only" => {
                self.bubble_only = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(invalid(format!("bubble_only must be true or false, got {value:?}"))),
                }
            }
            _ => return Err(invalid(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Checks every setting the command will use.
    pub fn validate(&self) -> Result<()> {
        let grid_used = matches!(self.command, Command::Minimize | Command::Sweep | Command::Pohozaev);
        if grid_used {
            GridSpec::new(self.n)?;
            self.minimize.validate()?;
        }
        if matches!(self.command, Command::Minimize | Command::Pohozaev | Command::Bubble) {
            let m = CouplingParams::new(self.couplings.clone())?;
            if m.rank() != self.rank {
                return Err(invalid(format!(
                    "{} couplings given for rank {}",
                    m.rank(),
                    self.rank
                )));
            }
        }
        if grid_used && self.rank != 2 {
            return Err(invalid("grid commands support rank 2".into()));
        }
        match self.command {
            Command::Minimize => {
                if let InitChoice::Bubble { lambda, component } = self.init {
                    if !(lambda > 1.0) || !(1..=2).contains(&component) {
                        return Err(invalid("bubble init needs lambda > 1 and component 1 or 2".into()));
                    }
                }
            }
            Command::Sweep => {
                if self.m_grid == 0 {
                    return Err(invalid("m_grid must be at least 1x1".into()));
                }
                if !(self.range.0 > 0.0 && self.range.1 >= self.range.0) {
                    return Err(invalid("range needs 0 < lo <= hi".into()));
                }
            }
            Command::Bubble => {
                if self.rank != 2 {
                    return Err(invalid("bubble family is rank 2".into()));
                }
                if self.lambdas.len() < 4 || self.lambdas.iter().any(|l| !(*l >= 2.0)) {
                    return Err(invalid("need at least four lambdas, each at least 2".into()));
                }
                if !(self.delta0 > 0.0 && self.delta0 < 0.5) {
                    return Err(invalid(format!("delta0 {} outside (0, 0.5)", self.delta0)));
                }
            }
            Command::Radial => {
                if self.a0.is_empty() || self.a0.iter().any(|a| !a.is_finite()) {
                    return Err(invalid("a0 must be a nonempty list of finite values".into()));
                }
                if !(self.r_max >= 10.0) {
                    return Err(invalid(format!("r_max {} must be at least 10", self.r_max)));
                }
                if !(1e-12..=1e-6).contains(&self.tol) {
                    return Err(invalid(format!("tol {} outside [1e-12, 1e-6]", self.tol)));
                }
                if radial::R0 >= self.r_max {
                    return Err(invalid("r_max too small".into()));
                }
            }
            Command::Pohozaev => {
                let h = 1.0 / self.n as f64;
                if self.radii.is_empty() || self.radii.iter().any(|r| !(*r >= 4.0 * h && *r <= 0.4)) {
                    return Err(invalid(format!("radii must lie in [4h, 0.4] with h = {h}")));
                }
                let inside = |c: f64| (0.0..1.0).contains(&c);
                if !(inside(self.center.0) && inside(self.center.1)) {
                    return Err(invalid("center outside [0,1)²".into()));
                }
                if !self.input.is_empty() && self.input.len() != self.rank {
                    return Err(invalid(format!("input needs {} field files", self.rank)));
                }
            }
            Command::Identities => {}
        }
        Ok(())
    }

    /// The resolved settings as `key = value` pairs that parse back to the
    /// same configuration.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let list = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mc = &self.minimize;
        let mut out = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            out.insert(k.to_string(), v);
        };
        put("n", self.n.to_string());
        put("rank", self.rank.to_string());
        put("m", list(&self.couplings));
        put("seed", self.seed.to_string());
        put("out", self.out.display().to_string());
        put("max_iters", mc.max_iters.to_string());
        put("grad_tol", mc.grad_tol.to_string());
        put("step", mc.step.to_string());
        put("divergence_energy_drop", mc.divergence_energy_drop.to_string());
        put("concentration_radius", mc.concentration_radius.to_string());
        put("concentration_mass", mc.concentration_mass.to_string());
        put("init", self.init.render());
        put("m_grid", format!("{0}x{0}", self.m_grid));
        put("range", format!("{}:{}", self.range.0, self.range.1));
        put("lambdas", list(&self.lambdas));
        put("delta0", self.delta0.to_string());
        put("a0", list(&self.a0));
        put("r_max", self.r_max.to_string());
        put("tol", self.tol.to_string());
        put("radii", list(&self.radii));
        put("center", format!("{},{}", self.center.0, self.center.1));
        put(
            "input",
            self.input.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
        );
        put("bubble_only", self.bubble_only.to_string());
        out
    }
}

fn invalid(msg: String) -> Error {
    Error::InvalidArgument(msg)
}

/// Parses a real number, allowing a trailing `pi` for multiples of π.
pub fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let value = if let Some(coef) = s.strip_suffix("pi") {
        let coef = coef.trim();
        let c = match coef {
            "" | "+" => 1.0,
            "-" => -1.0,
            _ => coef.parse::<f64>().map_err(|_| invalid(format!("bad number {s:?}")))?,
        };
        c * PI
    } else {
        s.parse::<f64>().map_err(|_| invalid(format!("bad number {s:?}")))?
    };
    if !value.is_finite() {
        return Err(invalid(format!("non-finite number {s:?}")));
    }
    Ok(value)
}

fn parse_int<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| invalid(format!("bad integer {s:?}")))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_real).collect()
}

/// Reads `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| invalid(format!("line {}: expected key = value", i + 1)))?;
        let key = k.trim();
        if !KEYS.contains(&key) {
            return Err(invalid(format!("line {}: unknown key {key:?}", i + 1)));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}
