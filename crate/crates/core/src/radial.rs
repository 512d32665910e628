//! Radially symmetric entire solutions of `-Δu_i = Σ_j a_ij e^{u_j}` on ℝ².
//!
//! After a series start at `r0` the system is integrated in `t = log r` with
//! state `(u_j, p_j = r u_j', α_j)`:
//!
//! ```text
//! u̇_j = p_j,   ṗ_j = -Σ_k a_jk e^{u_k + 2t},   α̇_j = 2π e^{u_j + 2t}.
//! ```
//!
//! The flux `-2π p_i - Σ_j a_ij α_j` is linear in the state and vanishes at
//! the start, so it is conserved by any Runge–Kutta step up to rounding.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cartan::CartanMatrix;
use crate::error::{Error, Result};

/// Radius where the series start hands over to the integrator.
pub const R0: f64 = 1e-4;
/// Abort threshold for the normalized flux defect.
pub const FLUX_ABORT: f64 = 1e-5;
/// Tails `e^{u_j} 2πR²` below this fraction of `α_j` count as converged.
pub const TAIL_FRACTION: f64 = 1e-4;

const MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSolution {
    pub a0: Vec<f64>,
    pub r_nodes: Vec<f64>,
    /// `u[j][i]` is `u_j` at `r_nodes[i]`.
    pub u: Vec<Vec<f64>>,
    pub du: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    /// Both tails below [`TAIL_FRACTION`] at the last node.
    pub converged: bool,
    /// Largest normalized flux defect over the nodes.
    pub max_flux_defect: f64,
}

impl RadialSolution {
    pub fn rank(&self) -> usize {
        self.a0.len()
    }

    pub fn r_max(&self) -> f64 {
        *self.r_nodes.last().expect("at least two nodes")
    }

    fn last(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|c| *c.last().unwrap()).collect()
    }

    /// `e^{u_j(R)} 2πR²` at the last node.
    pub fn tails(&self) -> Vec<f64> {
        let r = self.r_max();
        self.last(&self.u).iter().map(|u| u.exp() * 2.0 * PI * r * r).collect()
    }

    /// `(u, u', α)` at radius `r` by cubic Hermite interpolation in `log r`.
    pub fn state_at(&self, r: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if !(r > 0.0 && r <= self.r_max()) {
            return Err(Error::InvalidArgument(format!(
                "radius {r} outside (0, {}]",
                self.r_max()
            )));
        }
        let n = self.rank();
        let k = CartanMatrix::su(n)?;
        let i = self.r_nodes.partition_point(|&x| x < r);
        if self.r_nodes[i] == r {
            let pick = |rows: &[Vec<f64>]| rows.iter().map(|c| c[i]).collect::<Vec<_>>();
            return Ok((pick(&self.u), pick(&self.du), pick(&self.alpha)));
        }
        if i <= 1 {
            // inside the series region
            let c: Vec<f64> = (0..n)
                .map(|j| (0..n).map(|l| k.a(j, l) * self.a0[l].exp()).sum())
                .collect();
            let u = (0..n).map(|j| self.a0[j] - c[j] * r * r / 4.0).collect();
            let du = (0..n).map(|j| -c[j] * r / 2.0).collect();
            let al = (0..n).map(|j| PI * r * r * self.a0[j].exp()).collect();
            return Ok((u, du, al));
        }
        let (r0, r1) = (self.r_nodes[i - 1], self.r_nodes[i]);
        let (t0, t1) = (r0.ln(), r1.ln());
        let h = t1 - t0;
        let s = (r.ln() - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s).powi(2);
        let h10 = s * (1.0 - s).powi(2);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let herm = |y0: f64, d0: f64, y1: f64, d1: f64| h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
        let (mut u, mut p, mut al) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for j in 0..n {
            let (ua, ub) = (self.u[j][i - 1], self.u[j][i]);
            let (pa, pb) = (self.du[j][i - 1] * r0, self.du[j][i] * r1);
            let dp = |idx: usize, t: f64| -> f64 {
                -(0..n).map(|l| k.a(j, l) * (self.u[l][idx] + 2.0 * t).exp()).sum::<f64>()
            };
            u[j] = herm(ua, pa, ub, pb);
            p[j] = herm(pa, dp(i - 1, t0), pb, dp(i, t1));
            let da = |uu: f64, t: f64| 2.0 * PI * (uu + 2.0 * t).exp();
            al[j] = herm(self.alpha[j][i - 1], da(ua, t0), self.alpha[j][i], da(ub, t1));
        }
        let du = p.iter().map(|x| x / r).collect();
        Ok((u, du, al))
    }

    /// CSV with columns `r, u1.., du1.., alpha1..`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.rank();
        let mut head = vec!["r".to_string()];
        for prefix in ["u", "du", "alpha"] {
            head.extend((1..=n).map(|j| format!("{prefix}{j}")));
        }
        writeln!(w, "{}", head.join(","))?;
        for i in 0..self.r_nodes.len() {
            let mut row = vec![self.r_nodes[i]];
            for rows in [&self.u, &self.du, &self.alpha] {
                row.extend(rows.iter().map(|c| c[i]));
            }
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct System<'a> {
    k: &'a CartanMatrix,
}

impl System<'_> {
    /// State layout `[u_1..u_N, p_1..p_N, α_1..α_N]`.
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.k.rank();
        let w: Vec<f64> = (0..n).map(|j| (y[j] + 2.0 * t).exp()).collect();
        for j in 0..n {
            dy[j] = y[n + j];
            dy[n + j] = -(0..n).map(|l| self.k.a(j, l) * w[l]).sum::<f64>();
            dy[2 * n + j] = 2.0 * PI * w[j];
        }
    }

    fn flux_defect(&self, y: &[f64]) -> f64 {
        let n = self.k.rank();
        let total: f64 = y[2 * n..].iter().sum();
        (0..n)
            .map(|i| {
                let rhs: f64 = (0..n).map(|j| self.k.a(i, j) * y[2 * n + j]).sum();
                (-2.0 * PI * y[n + i] - rhs).abs()
            })
            .fold(0.0, f64::max)
            / (1.0 + total)
    }
}

/// Integrates from `u(0) = a0` out to `r_max` with local tolerance `tol`.
pub fn integrate_radial(a0: &[f64], r_max: f64, tol: f64) -> Result<RadialSolution> {
    if a0.is_empty() {
        return Err(Error::InvalidArgument("initial values must be finite and nonempty".into()));
    }
    integrate_radial_with_matrix(a0, r_max, tol, &CartanMatrix::su(a0.len())?)
}

/// As [`integrate_radial`] for an arbitrary coupling matrix of matching rank.
pub fn integrate_radial_with_matrix(a0: &[f64], r_max: f64, tol: f64, k: &CartanMatrix) -> Result<RadialSolution> {
    if a0.is_empty() || a0.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidArgument("initial values must be finite and nonempty".into()));
    }
    if !(r_max >= 10.0 && r_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("R_max = {r_max} must be at least 10")));
    }
    if !(1e-12..=1e-6).contains(&tol) {
        return Err(Error::InvalidArgument(format!("tol = {tol} outside [1e-12, 1e-6]")));
    }
    let n = a0.len();
    if k.rank() != n {
        return Err(Error::RankMismatch {
            expected: k.rank(),
            got: n,
        });
    }
    let sys = System { k };

    let c: Vec<f64> = (0..n).map(|j| (0..n).map(|l| k.a(j, l) * a0[l].exp()).sum()).collect();
    let mut y = vec![0.0; 3 * n];
    for j in 0..n {
        y[j] = a0[j] - c[j] * R0 * R0 / 4.0;
        y[n + j] = -c[j] * R0 * R0 / 2.0;
        y[2 * n + j] = PI * R0 * R0 * a0[j].exp();
    }

    let mut sol = RadialSolution {
        a0: a0.to_vec(),
        r_nodes: vec![0.0],
        u: a0.iter().map(|&a| vec![a]).collect(),
        du: vec![vec![0.0]; n],
        alpha: vec![vec![0.0]; n],
        converged: false,
        max_flux_defect: 0.0,
    };
    let t_end = r_max.ln();
    let push = |sol: &mut RadialSolution, t: f64, y: &[f64]| {
        let r = if t >= t_end { r_max } else { t.exp() };
        sol.r_nodes.push(r);
        for j in 0..n {
            sol.u[j].push(y[j]);
            sol.du[j].push(y[n + j] / r);
            sol.alpha[j].push(y[2 * n + j]);
        }
    };

    let mut t = R0.ln();
    push(&mut sol, t, &y);
    sol.max_flux_defect = sys.flux_defect(&y);

    let dim = 3 * n;
    let mut stages = vec![vec![0.0; dim]; 7];
    let mut tmp = vec![0.0; dim];
    let mut y5 = vec![0.0; dim];
    let mut h = 1e-2;
    sys.rhs(t, &y, &mut stages[0]);
    let mut steps = 0;
    while t < t_end {
        steps += 1;
        if steps > MAX_STEPS || h < 1e-12 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { radius: t.exp() });
        }
        h = h.min(t_end - t);
        for s in 1..7 {
            for d in 0..dim {
                tmp[d] = y[d] + h * (0..s).map(|m| A[s][m] * stages[m][d]).sum::<f64>();
            }
            sys.rhs(t + C[s] * h, &tmp, &mut stages[s]);
        }
        let mut err: f64 = 0.0;
        for d in 0..dim {
            y5[d] = y[d] + h * (0..7).map(|m| B5[m] * stages[m][d]).sum::<f64>();
            let y4 = y[d] + h * (0..7).map(|m| B4[m] * stages[m][d]).sum::<f64>();
            // relative control: p and α start near 1e-8
            let scale = tol * (1e-12 + y[d].abs().max(y5[d].abs()));
            err = err.max((y5[d] - y4).abs() / scale);
        }
        if !err.is_finite() {
            h *= 0.1;
            continue;
        }
        if err <= 1.0 {
            t += h;
            y.copy_from_slice(&y5);
            // FSAL: the last stage is the derivative at the new point
            stages[0] = stages[6].clone();
            push(&mut sol, t, &y);
            let defect = sys.flux_defect(&y);
            sol.max_flux_defect = sol.max_flux_defect.max(defect);
            if defect > FLUX_ABORT {
                return Err(Error::FluxViolation {
                    radius: t.exp(),
                    residual: defect,
                });
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    let alpha_end = sol.last(&sol.alpha);
    sol.converged = sol
        .tails()
        .iter()
        .zip(&alpha_end)
        .all(|(tail, a)| *tail < TAIL_FRACTION * a);
    Ok(sol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassReport {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// `α_j > 4π` for every j.
    pub alpha_above_4pi: bool,
    pub beta_above_4pi: bool,
}

/// Total masses `α_j` and decay exponents `β_j = Σ_k a_jk α_k` at `R_max`.
pub fn masses_and_exponents(sol: &RadialSolution) -> Result<MassReport> {
    let k = CartanMatrix::su(sol.rank())?;
    let alpha = sol.last(&sol.alpha);
    for (j, (tail, a)) in sol.tails().iter().zip(&alpha).enumerate() {
        if !(*tail < TAIL_FRACTION * a) {
            return Err(Error::TailTooLarge {
                r_max: sol.r_max(),
                component: j + 1,
                tail: *tail,
            });
        }
    }
    let beta = k.apply(&alpha);
    let four_pi = 4.0 * PI;
    Ok(MassReport {
        alpha_above_4pi: alpha.iter().all(|a| *a > four_pi),
        beta_above_4pi: beta.iter().all(|b| *b > four_pi),
        alpha,
        beta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeComparison {
    /// `r u_j'(R_max)`.
    pub measured: Vec<f64>,
    /// `-β_j / 2π`.
    pub predicted: Vec<f64>,
    pub relative_deviation: Vec<f64>,
}

/// Compares `r u_j'` at the last node with its limit `-β_j / 2π`.
pub fn asymptotic_slopes(sol: &RadialSolution) -> Result<SlopeComparison> {
    let masses = masses_and_exponents(sol)?;
    let r = sol.r_max();
    let measured: Vec<f64> = sol.last(&sol.du).iter().map(|d| r * d).collect();
    let predicted: Vec<f64> = masses.beta.iter().map(|b| -b / (2.0 * PI)).collect();
    let relative_deviation = measured
        .iter()
        .zip(&predicted)
        .map(|(m, p)| ((m - p) / p).abs())
        .collect();
    Ok(SlopeComparison {
        measured,
        predicted,
        relative_deviation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PohozaevBalance {
    pub r: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Pohozaev identity on the ball `B_R` for a radial solution,
///
/// ```text
/// (N+1) Σ_j (2πR² e^{u_j(R)} - 2α_j(R)) = -(N+1) πR² Σ_jk (K^-1)_jk u_j'(R) u_k'(R),
/// ```
///
/// which for N = 2 reads `6πR²(e^{u_1}+e^{u_2}) - 6(α_1+α_2) = -2πR²(u_1'²+u_2'²+u_1'u_2')`.
pub fn ball_pohozaev(sol: &RadialSolution, r: f64) -> Result<PohozaevBalance> {
    let n = sol.rank();
    let k = CartanMatrix::su(n)?;
    let (u, du, alpha) = sol.state_at(r)?;
    let scale = k.determinant();
    let lhs = scale
        * (0..n)
            .map(|j| 2.0 * PI * r * r * u[j].exp() - 2.0 * alpha[j])
            .sum::<f64>();
    let rhs = -scale * PI * r * r * k.quadratic_form_inverse(&du);
    Ok(PohozaevBalance {
        r,
        lhs,
        rhs,
        residual: lhs - rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassRelation {
    pub residual: f64,
    pub relative: f64,
}

/// `α_1² + α_2² - α_1α_2 - 4π(α_1 + α_2)`, and the same divided by
/// `4π(α_1 + α_2)`.
pub fn check_mass_relation(a1: f64, a2: f64) -> Result<MassRelation> {
    if !(a1 > 0.0 && a2 > 0.0) {
        return Err(Error::InvalidArgument("masses must be positive".into()));
    }
    let scale = 4.0 * PI * (a1 + a2);
    let residual = a1 * a1 + a2 * a2 - a1 * a2 - scale;
    Ok(MassRelation {
        residual,
        relative: residual / scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSummary {
    pub a0: Vec<f64>,
    pub r_max: f64,
    pub converged: bool,
    pub max_flux_defect: f64,
    pub masses: Option<MassReport>,
    pub slopes: Option<SlopeComparison>,
    pub mass_relation: Option<MassRelation>,
    pub pohozaev_at_r_max: Option<PohozaevBalance>,
}

/// Everything reported for one shooting parameter. A non-converged tail
/// leaves the mass fields empty rather than failing.
pub fn summarize(sol: &RadialSolution) -> Result<RadialSummary> {
    let masses = masses_and_exponents(sol).ok();
    let slopes = asymptotic_slopes(sol).ok();
    let mass_relation = match &masses {
        Some(m) if m.alpha.len() == 2 => Some(check_mass_relation(m.alpha[0], m.alpha[1])?),
        _ => None,
    };
    Ok(RadialSummary {
        a0: sol.a0.clone(),
        r_max: sol.r_max(),
        converged: sol.converged,
        max_flux_defect: sol.max_flux_defect,
        masses,
        slopes,
        mass_relation,
        pohozaev_at_r_max: Some(ball_pohozaev(sol, sol.r_max())?),
    })
}
