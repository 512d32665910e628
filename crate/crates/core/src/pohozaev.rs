//! Local Pohozaev balance on disks of the torus.
//!
//! For a normalized critical point, `-Δu_i = Σ_j a_ij M_j (e^{u_j} - 1)`.
//! Testing against `(x - c)·∇u_i` on `B_r(c)` and mixing with `K^-1` gives
//!
//! ```text
//! Σ_j M_j [2∫_B (e^{u_j} - u_j) - ∫_∂B r (e^{u_j} - u_j)]
//!     = Σ_jk (K^-1)_jk ∫_∂B r (∂_n u_j ∂_n u_k - ½ ∇u_j·∇u_k).
//! ```
//!
//! Both sides are multiplied by `det K = N + 1` so the rank-two case has
//! integer coefficients.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cartan::{CartanMatrix, CouplingParams};
use crate::error::{Error, Result};
use crate::functional::MultiField;
use crate::grid::{self, disk_area_weights, pairwise_sum, ScalarField};

/// `h · max|∇u|` above this means the gradients are not resolved.
pub const MAX_GRADIENT_STEP: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTerms {
    /// `∫_B (e^{u_j} - u_j)` per component.
    pub volume: Vec<f64>,
    /// `∫_∂B r (e^{u_j} - u_j)` per component.
    pub boundary: Vec<f64>,
    /// `∫_∂B r (∂_n u_j ∂_n u_k - ½ ∇u_j·∇u_k)`.
    pub gradient: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskBalance {
    pub center: (f64, f64),
    pub r: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub terms: BoundaryTerms,
}

/// Evaluates both sides of the balance on `B_r(center)` for normalized `u`.
pub fn disk_balance(
    u: &MultiField,
    m: &CouplingParams,
    k: &CartanMatrix,
    center: (f64, f64),
    r: f64,
) -> Result<DiskBalance> {
    m.check_rank(k)?;
    if u.rank() != k.rank() {
        return Err(Error::RankMismatch {
            expected: k.rank(),
            got: u.rank(),
        });
    }
    let spec = u.spec();
    let h = spec.h();
    if !(r >= 4.0 * h && r <= 0.4) {
        return Err(Error::InvalidArgument(format!("radius {r} outside [4h, 0.4] with h = {h}")));
    }
    for (j, c) in u.components().iter().enumerate() {
        let value = grid::log_integral_exp(c);
        if value.abs() >= 1e-8 {
            return Err(Error::NormalizeFirst { component: j, value });
        }
    }
    let n = k.rank();
    let grads: Vec<(ScalarField, ScalarField)> =
        u.components().iter().map(grid::gradient).collect::<Result<_>>()?;
    let steepest = grads
        .iter()
        .flat_map(|(gx, gy)| gx.values().iter().zip(gy.values()).map(|(a, b)| a.hypot(*b)))
        .fold(0.0, f64::max);
    if h * steepest > MAX_GRADIENT_STEP {
        return Err(Error::RefineGrid(format!(
            "h·max|∇u| = {} exceeds {MAX_GRADIENT_STEP}",
            h * steepest
        )));
    }

    let weights = disk_area_weights(spec, center, r);
    let volume: Vec<f64> = u
        .components()
        .iter()
        .map(|c| {
            let terms: Vec<f64> = c
                .values()
                .iter()
                .zip(&weights)
                .filter(|(_, w)| **w > 0.0)
                .map(|(x, w)| w * (x.exp() - x))
                .collect();
            pairwise_sum(&terms)
        })
        .collect();

    let points = 4 * (2.0 * PI * r / h).ceil() as usize;
    let dtheta = 2.0 * PI / points as f64;
    let mut boundary = vec![0.0; n];
    let mut gradient = vec![vec![0.0; n]; n];
    for q in 0..points {
        let theta = q as f64 * dtheta;
        let (nx, ny) = (theta.cos(), theta.sin());
        let (x, y) = (center.0 + r * nx, center.1 + r * ny);
        // arc length r dθ times the weight r
        let ds = r * r * dtheta;
        let mut dn = vec![0.0; n];
        let mut g = vec![(0.0, 0.0); n];
        for j in 0..n {
            let uj = u.component(j).interpolate(x, y);
            boundary[j] += ds * (uj.exp() - uj);
            g[j] = (grads[j].0.interpolate(x, y), grads[j].1.interpolate(x, y));
            dn[j] = g[j].0 * nx + g[j].1 * ny;
        }
        for a in 0..n {
            for b in 0..n {
                gradient[a][b] += ds * (dn[a] * dn[b] - 0.5 * (g[a].0 * g[b].0 + g[a].1 * g[b].1));
            }
        }
    }

    let scale = k.determinant();
    let mv = m.values();
    let lhs = scale * (0..n).map(|j| mv[j] * (2.0 * volume[j] - boundary[j])).sum::<f64>();
    let rhs = scale
        * (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .map(|(a, b)| k.inv(a, b) * gradient[a][b])
            .sum::<f64>();
    Ok(DiskBalance {
        center,
        r,
        lhs,
        rhs,
        residual: lhs - rhs,
        terms: BoundaryTerms {
            volume,
            boundary,
            gradient,
        },
    })
}

/// CSV rows `r,lhs,rhs,residual`.
pub fn write_balances_csv<W: Write>(balances: &[DiskBalance], mut w: W) -> std::io::Result<()> {
    writeln!(w, "r,lhs,rhs,residual")?;
    for b in balances {
        writeln!(w, "{},{},{},{}", b.r, b.lhs, b.rhs, b.residual)?;
    }
    Ok(())
}
