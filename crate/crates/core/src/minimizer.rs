//! Preconditioned gradient descent for the functional, boundedness
//! classification and sweeps over the coupling plane.

use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bubbles::{standard_bubble_unresolved, BubbleParams, DEFAULT_DELTA0};
use crate::cartan::{CartanMatrix, CouplingParams};
use crate::error::{Error, Result};
use crate::functional::{self, grad_phi_preconditioned, phi, phi_increment, u_from_v, v_from_u, MultiField};
use crate::grid::{self, disk_offsets, pairwise_sum, GridSpec, ScalarField};

const ARMIJO: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-14;

/// Default blow-up energy drop. On a grid of spacing `h` the functional is
/// bounded below by roughly `-2(M_1 - 4π) log(1/h)`, so the drop reachable
/// from a bubble seed on a 64² grid is a few tens, not hundreds.
pub const DEFAULT_ENERGY_DROP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeConfig {
    pub max_iters: usize,
    /// Tolerance on the L² norm of the preconditioned gradient.
    pub grad_tol: f64,
    /// First trial step of each line search.
    pub step: f64,
    pub divergence_energy_drop: f64,
    pub concentration_radius: f64,
    pub concentration_mass: f64,
    pub seed: u64,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-8,
            step: 1.0,
            divergence_energy_drop: DEFAULT_ENERGY_DROP,
            concentration_radius: 0.05,
            concentration_mass: 0.9,
            seed: 0,
        }
    }
}

impl MinimizeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("step", self.step),
            ("divergence_energy_drop", self.divergence_energy_drop),
            ("concentration_radius", self.concentration_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        if !(self.concentration_mass > 0.5 && self.concentration_mass < 1.0) {
            return Err(Error::InvalidArgument("concentration_mass must lie in (0.5, 1)".into()));
        }
        if self.concentration_radius > 0.5 {
            return Err(Error::InvalidArgument("concentration_radius must be at most 0.5".into()));
        }
        Ok(())
    }
}

/// Starting point of a run, given in the `u` variables.
#[derive(Debug, Clone)]
pub enum Init {
    Field(MultiField),
    /// Smooth random field drawn from the config seed.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    Unbounded,
    Budget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub mass: f64,
    pub center: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizeReport {
    pub status: Status,
    pub energy_trace: Vec<f64>,
    /// Normalized so that `∫ e^{u_j} = 1`.
    pub final_u: MultiField,
    pub el_residuals: Vec<f64>,
    pub max_field: f64,
    pub concentration: Vec<Concentration>,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl MinimizeReport {
    pub fn initial_energy(&self) -> f64 {
        self.energy_trace[0]
    }

    pub fn final_energy(&self) -> f64 {
        *self.energy_trace.last().unwrap()
    }

    pub fn energy_drop(&self) -> f64 {
        self.initial_energy() - self.final_energy()
    }
}

/// For each component the heaviest disk of the given radius around a
/// sample point, weighing `e^{u_j}` normalized to unit mass. Equal masses
/// resolve to the centre smallest in `(x, y)` order.
pub fn detect_concentration(u: &MultiField, radius: f64) -> Result<Vec<Concentration>> {
    let spec = u.spec();
    if !(radius > 0.0 && radius <= 0.5) {
        return Err(Error::InvalidArgument(format!("radius {radius} outside (0, 0.5]")));
    }
    let n = spec.n() as isize;
    let offsets = disk_offsets(spec, radius);
    u.components()
        .iter()
        .map(|c| {
            let rho = grid::normalized_density(c);
            let vals = rho.values();
            let mut best = Concentration {
                mass: f64::NEG_INFINITY,
                center: (0.0, 0.0),
            };
            let mut buf = Vec::with_capacity(offsets.len());
            // x = j h outer, y = i h inner: lexicographic in (x, y)
            for j in 0..n {
                for i in 0..n {
                    buf.clear();
                    buf.extend(offsets.iter().map(|&(di, dj)| {
                        let ii = (i + di).rem_euclid(n) as usize;
                        let jj = (j + dj).rem_euclid(n) as usize;
                        vals[ii * n as usize + jj]
                    }));
                    let mass = spec.cell_area() * pairwise_sum(&buf);
                    if mass > best.mass {
                        best = Concentration {
                            mass,
                            center: spec.point(i as usize, j as usize),
                        };
                    }
                }
            }
            Ok(best)
        })
        .collect()
}

/// Minimizes the functional by gradient descent in the `v` variables,
/// preconditioned by `(-Δ)^-1 K^-1`, with Armijo backtracking and the
/// component means removed after every step.
///
/// The run is unbounded if it ends with the energy more than
/// `divergence_energy_drop` below its initial value and some component
/// carrying more than `concentration_mass` in a disk of radius
/// `concentration_radius`. That test takes precedence over convergence: on
/// a fixed grid a blow-up sequence ends in a converged grid-scale spike.
pub fn minimize(
    m: &CouplingParams,
    k: &CartanMatrix,
    spec: GridSpec,
    init: Init,
    config: &MinimizeConfig,
) -> Result<MinimizeReport> {
    config.validate()?;
    m.check_rank(k)?;
    let u0 = match init {
        Init::Field(u) => u,
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let comps = (0..k.rank())
                .map(|_| ScalarField::random_smooth(spec, &mut rng, 4, 0.5))
                .collect();
            MultiField::new(comps)?
        }
    };
    if u0.spec() != spec {
        return Err(Error::GridMismatch(spec.n(), u0.spec().n()));
    }
    let mut v = v_from_u(&u0, k)?.remove_means();
    let mut energy = phi(&v, m, k)?.total;
    if !energy.is_finite() {
        return Err(Error::NonFiniteEnergy {
            iteration: 0,
            trace: vec![energy],
        });
    }
    let mut trace = vec![energy];
    let mut t_prev = config.step;
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_norm;
    loop {
        let (g, pg) = grad_phi_preconditioned(&v, m, k)?;
        grad_norm = pg.l2_norm();
        // the components of g are the Euler–Lagrange residuals of u = Kv
        if grad_norm < config.grad_tol
            && g.components().iter().all(|c| grid::integral(&c.map(|x| x * x)).sqrt() < config.grad_tol)
        {
            converged = true;
            break;
        }
        if iterations >= config.max_iters {
            break;
        }
        let slope = g.inner(&pg)?;
        let mut t = config.step.min(2.0 * t_prev);
        let accepted = loop {
            let delta = pg.scale(-t).remove_means();
            let de = phi_increment(&v, &delta, m, k)?;
            if !de.is_finite() {
                let mut trace = trace.clone();
                trace.push(energy + de);
                return Err(Error::NonFiniteEnergy {
                    iteration: iterations + 1,
                    trace,
                });
            }
            if de <= -ARMIJO * t * slope {
                break Some((v.add_scaled(&delta, 1.0)?, energy + de));
            }
            t *= BACKTRACK;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some((next, e)) = accepted else {
            // no descent left at this precision
            break;
        };
        v = next;
        energy = e;
        t_prev = t;
        trace.push(energy);
        iterations += 1;
    }

    let final_u = functional::normalize(&u_from_v(&v, k)?);
    let el_residuals = functional::el_residual(&final_u, m, k)?;
    let concentration = detect_concentration(&final_u, config.concentration_radius)?;
    let dropped = energy < trace[0] - config.divergence_energy_drop;
    let status = if dropped && concentration.iter().any(|c| c.mass > config.concentration_mass) {
        Status::Unbounded
    } else if converged && el_residuals.iter().all(|r| *r < 10.0 * config.grad_tol) {
        Status::Converged
    } else {
        Status::Budget
    };
    Ok(MinimizeReport {
        status,
        energy_trace: trace,
        max_field: final_u.max(),
        final_u,
        el_residuals,
        concentration,
        iterations,
        grad_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundedness {
    Bounded,
    Unbounded,
    Inconclusive,
}

/// Initial state of one classification run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Seed {
    Zero,
    /// Bubble at scale `lambda` concentrating in component `component`
    /// (1-based), the other component carrying `-½` of it.
    Bubble { lambda: f64, component: usize },
}

/// Bubble scales tried by [`classify_boundedness`].
pub const SEED_LAMBDAS: [f64; 3] = [4.0, 16.0, 64.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: Seed,
    pub status: Status,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub max_field: f64,
    pub concentration: Vec<Concentration>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub couplings: Vec<f64>,
    pub result: Boundedness,
    pub runs: Vec<RunSummary>,
}

impl Classification {
    /// The run that decides the outcome: the unbounded one if any, else the
    /// one ending lowest.
    pub fn representative(&self) -> &RunSummary {
        self.runs
            .iter()
            .find(|r| r.status == Status::Unbounded)
            .unwrap_or_else(|| {
                self.runs
                    .iter()
                    .min_by(|a, b| a.final_energy.total_cmp(&b.final_energy))
                    .expect("at least one run")
            })
    }
}

/// Seeds used by [`classify_boundedness`]: zero, then bubbles at each scale
/// in [`SEED_LAMBDAS`] for every component direction.
pub fn classification_seeds(rank: usize) -> Vec<Seed> {
    let mut seeds = vec![Seed::Zero];
    for &lambda in &SEED_LAMBDAS {
        for component in 1..=rank {
            seeds.push(Seed::Bubble { lambda, component });
        }
    }
    seeds
}

/// Initial `u` for a seed. Bubbles are placed at the centre of the torus
/// and need not be resolved by the grid.
pub fn seed_field(seed: Seed, spec: GridSpec, rank: usize) -> Result<MultiField> {
    match seed {
        Seed::Zero => Ok(MultiField::zeros(spec, rank)),
        Seed::Bubble { lambda, component } => {
            if rank != 2 {
                return Err(Error::InvalidArgument("bubble seeds need rank 2".into()));
            }
            if !(1..=2).contains(&component) {
                return Err(Error::InvalidArgument(format!("no component {component}")));
            }
            let p = BubbleParams::new(lambda, DEFAULT_DELTA0, (0.5, 0.5))?;
            let b = standard_bubble_unresolved(&p, spec);
            if component == 1 {
                Ok(b)
            } else {
                MultiField::new(vec![b.component(1).clone(), b.component(0).clone()])
            }
        }
    }
}

/// Bounded if every seed converges, unbounded if any seed blows up,
/// inconclusive otherwise.
pub fn classify_boundedness(
    m: &CouplingParams,
    k: &CartanMatrix,
    spec: GridSpec,
    config: &MinimizeConfig,
) -> Result<Classification> {
    let mut runs = Vec::new();
    let mut result = Boundedness::Bounded;
    for seed in classification_seeds(k.rank()) {
        let init = seed_field(seed, spec, k.rank())?;
        let rep = minimize(m, k, spec, Init::Field(init), config)?;
        runs.push(RunSummary {
            seed,
            status: rep.status,
            initial_energy: rep.initial_energy(),
            final_energy: rep.final_energy(),
            max_field: rep.max_field,
            concentration: rep.concentration.clone(),
            iterations: rep.iterations,
        });
        match rep.status {
            Status::Unbounded => {
                result = Boundedness::Unbounded;
                break;
            }
            Status::Budget => result = Boundedness::Inconclusive,
            Status::Converged => {}
        }
    }
    Ok(Classification {
        couplings: m.values().to_vec(),
        result,
        runs,
    })
}

/// Classifies every coupling, in parallel, returning results in input order.
pub fn sweep(
    points: &[CouplingParams],
    k: &CartanMatrix,
    spec: GridSpec,
    config: &MinimizeConfig,
) -> Result<Vec<Classification>> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one coupling".into()));
    }
    points
        .par_iter()
        .map(|m| classify_boundedness(m, k, spec, config))
        .collect()
}

/// `n x n` couplings on `[lo, hi]²`, row-major with `M_1` varying slowest.
pub fn coupling_grid(n: usize, lo: f64, hi: f64) -> Result<Vec<CouplingParams>> {
    if n == 0 || !(lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidArgument("coupling grid needs n ≥ 1 and 0 < lo ≤ hi".into()));
    }
    let at = |i: usize| {
        if n == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .map(|(a, b)| CouplingParams::new(vec![at(a), at(b)]))
        .collect()
}

/// Region CSV with header `m1,m2,status,energy,max_field,conc1,conc2`.
pub fn write_region_csv<W: Write>(results: &[Classification], mut w: W) -> std::io::Result<()> {
    writeln!(w, "m1,m2,status,energy,max_field,conc1,conc2")?;
    for c in results {
        let r = c.representative();
        let conc = |j: usize| r.concentration.get(j).map_or(f64::NAN, |x| x.mass);
        writeln!(
            w,
            "{},{},{:?},{},{},{},{}",
            c.couplings[0],
            c.couplings.get(1).copied().unwrap_or(f64::NAN),
            c.result,
            r.final_energy,
            r.max_field,
            conc(0),
            conc(1)
        )?;
    }
    Ok(())
}

/// `true` when `M_j < 4π` for every j, the region where the functional is
/// bounded below.
pub fn below_threshold(m: &CouplingParams) -> bool {
    m.values().iter().all(|x| *x < 4.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize) -> (GridSpec, CartanMatrix) {
        (GridSpec::new(n).unwrap(), CartanMatrix::su(2).unwrap())
    }

    fn m(a: f64, b: f64) -> CouplingParams {
        CouplingParams::new(vec![a, b]).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(MinimizeConfig::default().validate().is_ok());
        let bad = MinimizeConfig {
            concentration_mass: 0.4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MinimizeConfig {
            grad_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn weak_coupling_converges_to_zero() {
        let (spec, k) = setup(32);
        let cfg = MinimizeConfig::default();
        let rep = minimize(&m(0.01, 0.01), &k, spec, Init::Random, &cfg).unwrap();
        assert_eq!(rep.status, Status::Converged);
        assert!(rep.final_energy().abs() < 1e-6);
        assert!(rep.final_u.max().abs() < 1e-6);
    }

    #[test]
    fn energy_trace_non_increasing() {
        let (spec, k) = setup(32);
        let cfg = MinimizeConfig::default();
        let rep = minimize(&m(3.0 * PI, 2.0 * PI), &k, spec, Init::Random, &cfg).unwrap();
        assert!(rep.energy_trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(rep.status, Status::Converged);
        assert!(rep.el_residuals.iter().all(|r| *r < 10.0 * cfg.grad_tol));
    }

    #[test]
    fn gauge_neutral() {
        let (spec, k) = setup(32);
        let cfg = MinimizeConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = MultiField::new(vec![
            ScalarField::random_smooth(spec, &mut rng, 3, 0.4),
            ScalarField::random_smooth(spec, &mut rng, 3, 0.4),
        ])
        .unwrap();
        let shifted = u.shift(&[1.5, -0.7]);
        let a = minimize(&m(2.0 * PI, 3.0 * PI), &k, spec, Init::Field(u), &cfg).unwrap();
        let b = minimize(&m(2.0 * PI, 3.0 * PI), &k, spec, Init::Field(shifted), &cfg).unwrap();
        let d = a.final_u.add_scaled(&b.final_u, -1.0).unwrap();
        assert!(d.max().abs() < 1e-8 && (-d.components()[0].min()).abs() < 1e-8);
        for c in d.components() {
            assert!(c.max() < 1e-8 && c.min() > -1e-8);
        }
    }

    #[test]
    fn deterministic_trace() {
        let (spec, k) = setup(32);
        let cfg = MinimizeConfig {
            seed: 11,
            ..Default::default()
        };
        let a = minimize(&m(3.0 * PI, PI), &k, spec, Init::Random, &cfg).unwrap();
        let b = minimize(&m(3.0 * PI, PI), &k, spec, Init::Random, &cfg).unwrap();
        let bits = |r: &MinimizeReport| r.energy_trace.iter().map(|e| e.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn concentration_of_uniform_density() {
        let (spec, _) = setup(64);
        let u = MultiField::zeros(spec, 2);
        let c = detect_concentration(&u, 0.25).unwrap();
        // lattice points in the disk, times h²
        let count = disk_offsets(spec, 0.25).len() as f64;
        assert!((c[0].mass - count / 4096.0).abs() < 1e-12);
        assert!((c[0].mass - PI / 16.0).abs() < 0.01);
        assert_eq!(c[0].center, (0.0, 0.0));
    }

    #[test]
    fn concentration_picks_heavier_bump() {
        let (spec, _) = setup(64);
        let bump = |cx: f64, cy: f64, w: f64| {
            move |x: f64, y: f64| {
                let d = grid::periodic_distance((x, y), (cx, cy));
                w * (-d * d / (2.0 * 0.02f64.powi(2))).exp()
            }
        };
        let (b1, b2) = (bump(0.25, 0.25, 1.0), bump(0.75, 0.5, 3.0));
        let rho = ScalarField::from_fn(spec, |x, y| b1(x, y) + b2(x, y) + 1e-12);
        let u = MultiField::new(vec![rho.map(f64::ln), ScalarField::zeros(spec)]).unwrap();
        let c = detect_concentration(&functional::normalize(&u), 0.1).unwrap();
        assert_eq!(c[0].center, (0.75, 0.5));
        // heavier bump holds 3/4 of the mass
        assert!((c[0].mass - 0.75).abs() < 1e-3);
    }

    #[test]
    fn bubble_seed_concentrates() {
        let (spec, _) = setup(64);
        let u = seed_field(Seed::Bubble { lambda: 64.0, component: 1 }, spec, 2).unwrap();
        let c = detect_concentration(&functional::normalize(&u), 0.05).unwrap();
        assert!(c[0].mass > 0.9, "{:?}", c);
        assert_eq!(c[0].center, (0.5, 0.5));
    }

    #[test]
    fn coupling_grid_layout() {
        let g = coupling_grid(3, 1.0, 3.0).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g[1].values(), &[1.0, 2.0]);
        assert_eq!(g[3].values(), &[2.0, 1.0]);
        assert_eq!(coupling_grid(1, 0.01, 0.01).unwrap()[0].values(), &[0.01, 0.01]);
    }

    #[test]
    fn bubble_seed_blows_up_above_threshold() {
        let (spec, k) = setup(64);
        let p = BubbleParams::new(8.0, DEFAULT_DELTA0, (0.5, 0.5)).unwrap();
        let init = standard_bubble_unresolved(&p, spec);
        let cfg = MinimizeConfig::default();
        let rep = minimize(&m(5.0 * PI, 3.0 * PI), &k, spec, Init::Field(init), &cfg).unwrap();
        assert_eq!(rep.status, Status::Unbounded);
        assert!(rep.concentration[0].mass > 0.9);
        assert!(rep.energy_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn classification_examples() {
        let (spec, k) = setup(64);
        let cfg = MinimizeConfig::default();
        let c = classify_boundedness(&m(3.9 * PI, 3.9 * PI), &k, spec, &cfg).unwrap();
        assert_eq!(c.result, Boundedness::Bounded);
        assert_eq!(c.runs.len(), 7);
        let c = classify_boundedness(&m(4.5 * PI, 2.0 * PI), &k, spec, &cfg).unwrap();
        assert_eq!(c.result, Boundedness::Unbounded);
        assert_eq!(c.representative().status, Status::Unbounded);
        // M = (4π, 4π) sits on the boundary; any of the three answers is accepted
        classify_boundedness(&m(4.0 * PI, 4.0 * PI), &k, spec, &cfg).unwrap();
    }

    #[test]
    fn sweep_single_points() {
        let (spec, k) = setup(32);
        let cfg = MinimizeConfig::default();
        let r = sweep(&[m(0.01, 0.01)], &k, spec, &cfg).unwrap();
        assert_eq!(r[0].result, Boundedness::Bounded);
        let r = sweep(&[m(3.0 * PI, 3.0 * PI)], &k, spec, &cfg).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].result, Boundedness::Bounded);
        let mut buf = Vec::new();
        write_region_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().contains(",Bounded,"));
        assert!(sweep(&[], &k, spec, &cfg).is_err());
    }
}
