//! The Moser–Trudinger functional of the Toda system in both
//! parametrizations, its first variation and the Euler–Lagrange residual.
//!
//! Two sets of unknowns appear. `v` is the descent variable: the energy is
//! `½ Σ a_ij ∫∇v_i∇v_j + Σ a_ij M_i ∫v_j - Σ M_i log∫exp((Kv)_i)`. The
//! physical unknown is `u = K v`, in which the quadratic part uses `K^-1`
//! and the exponentials decouple.

use serde::{Deserialize, Serialize};

use crate::cartan::{CartanMatrix, CouplingParams};
use crate::error::{Error, Result};
use crate::grid::{self, GridSpec, ScalarField};

/// An ordered tuple of fields on one grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiField {
    components: Vec<ScalarField>,
}

impl MultiField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("no components".into()))?;
        for c in &components[1..] {
            first.check_same_grid(c)?;
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { components })
    }

    pub fn zeros(spec: GridSpec, rank: usize) -> Self {
        Self {
            components: vec![ScalarField::zeros(spec); rank],
        }
    }

    pub fn constant(spec: GridSpec, c: &[f64]) -> Self {
        Self {
            components: c.iter().map(|&v| ScalarField::constant(spec, v)).collect(),
        }
    }

    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn spec(&self) -> GridSpec {
        self.components[0].spec()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, j: usize) -> &ScalarField {
        &self.components[j]
    }

    pub fn into_components(self) -> Vec<ScalarField> {
        self.components
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.rank() != other.rank() {
            return Err(Error::RankMismatch {
                expected: self.rank(),
                got: other.rank(),
            });
        }
        self.components[0].check_same_grid(&other.components[0])
    }

    /// `self + scale * other`, componentwise.
    pub fn add_scaled(&self, other: &Self, scale: f64) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.add_scaled(b, scale))
                .collect::<Result<_>>()?,
        })
    }

    /// Adds the constant `c[j]` to component `j`.
    pub fn scale(&self, s: f64) -> Self {
        Self {
            components: self.components.iter().map(|c| c.scale(s)).collect(),
        }
    }

    pub fn shift(&self, c: &[f64]) -> Self {
        Self {
            components: self
                .components
                .iter()
                .zip(c)
                .map(|(f, &s)| f.shift(s))
                .collect(),
        }
    }

    /// Subtracts each component's mean.
    pub fn remove_means(&self) -> Self {
        let means: Vec<f64> = self.components.iter().map(|f| -grid::mean(f)).collect();
        self.shift(&means)
    }

    /// `Σ_j ∫ self_j other_j`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        let mut total = 0.0;
        for (a, b) in self.components.iter().zip(&other.components) {
            total += grid::integral(&a.zip_map(b, |x, y| x * y)?);
        }
        Ok(total)
    }

    pub fn l2_norm(&self) -> f64 {
        self.components
            .iter()
            .map(|f| grid::integral(&f.map(|v| v * v)))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max(&self) -> f64 {
        self.components.iter().map(|c| c.max()).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    /// `(M x)_i = Σ_j m_ij x_j` pointwise, for an `N x N` row-major matrix.
    fn mix(&self, m: impl Fn(usize, usize) -> f64) -> Self {
        let n = self.rank();
        let len = self.spec().len();
        let components = (0..n)
            .map(|i| {
                let mut out = vec![0.0; len];
                for j in 0..n {
                    let c = m(i, j);
                    if c != 0.0 {
                        for (o, v) in out.iter_mut().zip(self.components[j].values()) {
                            *o += c * v;
                        }
                    }
                }
                ScalarField::new(self.spec(), out).expect("finite combination")
            })
            .collect();
        Self { components }
    }
}

fn check_inputs(f: &MultiField, m: &CouplingParams, k: &CartanMatrix) -> Result<()> {
    m.check_rank(k)?;
    if f.rank() != k.rank() {
        return Err(Error::RankMismatch {
            expected: k.rank(),
            got: f.rank(),
        });
    }
    if !f.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// `u = K v`.
pub fn u_from_v(v: &MultiField, k: &CartanMatrix) -> Result<MultiField> {
    if v.rank() != k.rank() {
        return Err(Error::RankMismatch {
            expected: k.rank(),
            got: v.rank(),
        });
    }
    Ok(v.mix(|i, j| k.a(i, j)))
}

/// `v = K^-1 u`.
pub fn v_from_u(u: &MultiField, k: &CartanMatrix) -> Result<MultiField> {
    if u.rank() != k.rank() {
        return Err(Error::RankMismatch {
            expected: k.rank(),
            got: u.rank(),
        });
    }
    Ok(u.mix(|i, j| k.inv(i, j)))
}

/// The three groups of terms of the functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub quadratic: f64,
    pub linear: f64,
    pub entropy: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn new(quadratic: f64, linear: f64, entropy: f64) -> Self {
        Self {
            quadratic,
            linear,
            entropy,
            total: quadratic + linear + entropy,
        }
    }
}

/// Energy in the `v` parametrization.
pub fn phi(v: &MultiField, m: &CouplingParams, k: &CartanMatrix) -> Result<EnergyBreakdown> {
    check_inputs(v, m, k)?;
    let n = k.rank();
    let mv = m.values();
    let refs: Vec<&ScalarField> = v.components().iter().collect();
    let d = grid::dirichlet_matrix(&refs)?;
    let mut quadratic = 0.0;
    for i in 0..n {
        for j in 0..n {
            quadratic += 0.5 * k.a(i, j) * d[i][j];
        }
    }
    let integrals: Vec<f64> = v.components().iter().map(grid::integral).collect();
    let mut linear = 0.0;
    for i in 0..n {
        for j in 0..n {
            linear += k.a(i, j) * mv[i] * integrals[j];
        }
    }
    let u = u_from_v(v, k)?;
    let entropy = -(0..n)
        .map(|i| mv[i] * grid::log_integral_exp(u.component(i)))
        .sum::<f64>();
    Ok(EnergyBreakdown::new(quadratic, linear, entropy))
}

/// Energy in the `u` parametrization; equals `phi(K^-1 u)`.
pub fn phi_u(u: &MultiField, m: &CouplingParams, k: &CartanMatrix) -> Result<EnergyBreakdown> {
    check_inputs(u, m, k)?;
    let n = k.rank();
    let mv = m.values();
    let refs: Vec<&ScalarField> = u.components().iter().collect();
    let d = grid::dirichlet_matrix(&refs)?;
    let mut quadratic = 0.0;
    for i in 0..n {
        for j in 0..n {
            quadratic += 0.5 * k.inv(i, j) * d[i][j];
        }
    }
    let linear = (0..n).map(|i| mv[i] * grid::integral(u.component(i))).sum();
    let entropy = -(0..n)
        .map(|i| mv[i] * grid::log_integral_exp(u.component(i)))
        .sum::<f64>();
    Ok(EnergyBreakdown::new(quadratic, linear, entropy))
}

/// `phi(v + δ) - phi(v)`, assembled from the cross terms so that small
/// increments are not lost to cancellation against the totals.
pub fn phi_increment(v: &MultiField, delta: &MultiField, m: &CouplingParams, k: &CartanMatrix) -> Result<f64> {
    check_inputs(v, m, k)?;
    check_inputs(delta, m, k)?;
    let n = k.rank();
    let mv = m.values();
    let refs: Vec<&ScalarField> = v.components().iter().chain(delta.components()).collect();
    let d = grid::dirichlet_matrix(&refs)?;
    let mut quadratic = 0.0;
    for i in 0..n {
        for j in 0..n {
            quadratic += k.a(i, j) * (d[i][n + j] + 0.5 * d[n + i][n + j]);
        }
    }
    let integrals: Vec<f64> = delta.components().iter().map(grid::integral).collect();
    let mut linear = 0.0;
    for i in 0..n {
        for j in 0..n {
            linear += k.a(i, j) * mv[i] * integrals[j];
        }
    }
    let u = u_from_v(v, k)?;
    let w = u_from_v(delta, k)?;
    // log∫e^{u+w} - log∫e^u = log(1 + ∫ρ(e^w - 1))
    let entropy = -(0..n)
        .map(|i| {
            let rho = grid::normalized_density(u.component(i));
            let excess = rho.zip_map(w.component(i), |r, x| r * x.exp_m1())?;
            Ok(mv[i] * grid::integral(&excess).ln_1p())
        })
        .sum::<Result<f64>>()?;
    Ok(quadratic + linear + entropy)
}

/// `K^-1 g` before the Laplacian is undone: `-Δv_j + M_j (1 - ρ_j)`.
fn inner_gradient(v: &MultiField, m: &CouplingParams, k: &CartanMatrix) -> Result<MultiField> {
    check_inputs(v, m, k)?;
    let u = u_from_v(v, k)?;
    let components = (0..k.rank())
        .map(|j| {
            let lap = grid::laplacian(v.component(j))?;
            let rho = grid::normalized_density(u.component(j));
            let mj = m.values()[j];
            lap.zip_map(&rho, |l, r| -l + mj * (1.0 - r))
        })
        .collect::<Result<Vec<_>>>()?;
    MultiField::new(components)
}

/// L² gradient, component `k`: `Σ_j a_kj (-Δv_j + M_j (1 - ρ_j))` with
/// `ρ_j = e^{(Kv)_j} / ∫ e^{(Kv)_j}`.
pub fn grad_phi(v: &MultiField, m: &CouplingParams, k: &CartanMatrix) -> Result<MultiField> {
    u_from_v(&inner_gradient(v, m, k)?, k)
}

/// L² gradient together with its Sobolev-preconditioned form
/// `(-Δ)^{-1} K^{-1} g` on the zero-mean part, identity on the means.
pub fn grad_phi_preconditioned(
    v: &MultiField,
    m: &CouplingParams,
    k: &CartanMatrix,
) -> Result<(MultiField, MultiField)> {
    let inner = inner_gradient(v, m, k)?;
    let g = u_from_v(&inner, k)?;
    let components = inner
        .components()
        .iter()
        .map(|c| {
            let mean = grid::mean(c);
            grid::solve_poisson_zero_mean(c).shift(mean)
        })
        .collect();
    Ok((g, MultiField { components }))
}

/// Shifts each component so that `∫ e^{u_j} = 1`.
pub fn normalize(u: &MultiField) -> MultiField {
    let shifts: Vec<f64> = u.components().iter().map(|c| -grid::log_integral_exp(c)).collect();
    u.shift(&shifts)
}

/// L² norms of `-Δu_i - Σ_j a_ij M_j (e^{u_j} - 1)` for normalized `u`.
pub fn el_residual(u: &MultiField, m: &CouplingParams, k: &CartanMatrix) -> Result<Vec<f64>> {
    check_inputs(u, m, k)?;
    for (j, c) in u.components().iter().enumerate() {
        let value = grid::log_integral_exp(c);
        if value.abs() >= 1e-8 {
            return Err(Error::NormalizeFirst { component: j, value });
        }
    }
    let n = k.rank();
    let sources: Vec<ScalarField> = (0..n)
        .map(|j| {
            let mj = m.values()[j];
            u.component(j).map(|x| mj * (x.exp() - 1.0))
        })
        .collect();
    let sources = MultiField::new(sources)?;
    let mixed = u_from_v(&sources, k)?;
    (0..n)
        .map(|i| {
            let lap = grid::laplacian(u.component(i))?;
            let r = lap.zip_map(mixed.component(i), |l, s| -l - s)?;
            Ok(grid::integral(&r.map(|x| x * x)).sqrt())
        })
        .collect()
}
