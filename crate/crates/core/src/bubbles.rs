//! The concentrating rank-two family `u^λ` and the Liouville profile.
//!
//! Inside the flat disk `B_δ0` the first component is
//! `log(λ² / (1 + πλ²|x|²)²)`, frozen at its boundary value outside; the
//! second component is `-½` of the first. Its energy falls like
//! `2(4π - M_1) log λ`, so it certifies unboundedness when `M_1 > 4π`.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cartan::{CartanMatrix, CouplingParams};
use crate::error::{Error, Result};
use crate::functional::MultiField;
use crate::grid::{periodic_distance, GridSpec, ScalarField};
use crate::quadrature;

/// Default flat-disk radius.
pub const DEFAULT_DELTA0: f64 = 0.25;

/// Relative accuracy requested from the radial quadrature.
const QUAD_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub lambda: f64,
    pub delta0: f64,
    pub center: (f64, f64),
}

impl BubbleParams {
    pub fn new(lambda: f64, delta0: f64, center: (f64, f64)) -> Result<Self> {
        if !(lambda > 1.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda {lambda} must exceed 1")));
        }
        if !(delta0 > 0.0 && delta0 < 0.5) {
            return Err(Error::InvalidArgument(format!("delta0 {delta0} outside (0, 0.5)")));
        }
        let inside = |c: f64| (0.0..1.0).contains(&c);
        if !(inside(center.0) && inside(center.1)) {
            return Err(Error::InvalidArgument("center outside [0,1)²".into()));
        }
        Ok(Self {
            lambda,
            delta0,
            center,
        })
    }

    /// Bubble at `λ` with the default radius, centred on the torus.
    pub fn centred(lambda: f64) -> Result<Self> {
        Self::new(lambda, DEFAULT_DELTA0, (0.5, 0.5))
    }

    /// First component as a function of the distance to the centre.
    pub fn u1(&self, r: f64) -> f64 {
        let l2 = self.lambda * self.lambda;
        let r = r.min(self.delta0);
        l2.ln() - 2.0 * (PI * l2 * r * r).ln_1p()
    }

    pub fn u2(&self, r: f64) -> f64 {
        -0.5 * self.u1(r)
    }

    /// Radial derivative of the first component (zero outside the disk).
    pub fn du1(&self, r: f64) -> f64 {
        if r >= self.delta0 {
            return 0.0;
        }
        let l2 = self.lambda * self.lambda;
        -4.0 * PI * l2 * r / (1.0 + PI * l2 * r * r)
    }

    /// Largest admissible spacing, `1 / (4 λ √π)`.
    pub fn max_spacing(&self) -> f64 {
        1.0 / (4.0 * self.lambda * PI.sqrt())
    }
}

fn sample(p: &BubbleParams, spec: GridSpec) -> MultiField {
    let u1 = ScalarField::from_fn(spec, |x, y| p.u1(periodic_distance((x, y), p.center)));
    let u2 = u1.scale(-0.5);
    MultiField::new(vec![u1, u2]).expect("bubble samples are finite")
}

/// The pair `(u_1^λ, u_2^λ)` on the grid. Fails unless the grid resolves the
/// core, `h <= 1 / (4λ√π)`.
pub fn standard_bubble(p: &BubbleParams, spec: GridSpec) -> Result<MultiField> {
    if spec.h() > p.max_spacing() {
        return Err(Error::RefineGrid(format!(
            "h = {} exceeds 1/(4λ√π) = {} at λ = {}",
            spec.h(),
            p.max_spacing(),
            p.lambda
        )));
    }
    Ok(sample(p, spec))
}

/// As [`standard_bubble`] without the resolution check; the samples are
/// only fit for seeding, not for quantitative use.
pub fn standard_bubble_unresolved(p: &BubbleParams, spec: GridSpec) -> MultiField {
    sample(p, spec)
}

/// The seven integrals of the family plus the energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleQuantities {
    pub grad_u1_sq: f64,
    pub grad_u2_sq: f64,
    pub grad_u1_u2: f64,
    pub int_u1: f64,
    pub int_u2: f64,
    pub log_int_exp_u1: f64,
    pub log_int_exp_u2: f64,
    pub phi: f64,
}

/// Names used in reports, in the order of [`BubbleQuantities::as_array`].
pub const QUANTITY_NAMES: [&str; 8] = [
    "grad_u1_sq",
    "grad_u2_sq",
    "grad_u1_u2",
    "int_u1",
    "int_u2",
    "log_int_exp_u1",
    "log_int_exp_u2",
    "phi",
];

impl BubbleQuantities {
    pub fn as_array(&self) -> [f64; 8] {
        [
            self.grad_u1_sq,
            self.grad_u2_sq,
            self.grad_u1_u2,
            self.int_u1,
            self.int_u2,
            self.log_int_exp_u1,
            self.log_int_exp_u2,
            self.phi,
        ]
    }

    /// Energy assembled from the integrals with the rank-two quadratic form
    /// `½ Σ (K^-1)_ij ∫∇u_i∇u_j`.
    fn with_energy(mut self, m: &CouplingParams) -> Result<Self> {
        let k = CartanMatrix::su(2)?;
        m.check_rank(&k)?;
        let d = [[self.grad_u1_sq, self.grad_u1_u2], [self.grad_u1_u2, self.grad_u2_sq]];
        let mut quadratic = 0.0;
        for (i, row) in d.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                quadratic += 0.5 * k.inv(i, j) * v;
            }
        }
        let mv = m.values();
        self.phi = quadratic + mv[0] * self.int_u1 + mv[1] * self.int_u2
            - mv[0] * self.log_int_exp_u1
            - mv[1] * self.log_int_exp_u2;
        Ok(self)
    }
}

/// Evaluates the eight quantities by adaptive quadrature in the radius; the
/// plateau outside the disk contributes its constant times `1 - πδ0²`.
pub fn bubble_quantities(p: &BubbleParams, m: &CouplingParams) -> Result<BubbleQuantities> {
    if p.lambda < 2.0 {
        return Err(Error::InvalidArgument("bubble quantities need λ ≥ 2".into()));
    }
    let d = p.delta0;
    let outside = 1.0 - PI * d * d;
    // The core width is 1/λ; start the logarithmic variable well below it.
    let r_min = 1e-9 / p.lambda;
    let disk = |f: &dyn Fn(f64) -> f64| quadrature::radial_integral(f, d, r_min, 1e-14, QUAD_REL_TOL);

    let grad_u1_sq = disk(&|r| p.du1(r).powi(2))?;
    let grad_u2_sq = disk(&|r| (0.5 * p.du1(r)).powi(2))?;
    let grad_u1_u2 = disk(&|r| -0.5 * p.du1(r).powi(2))?;
    let int_u1 = disk(&|r| p.u1(r))? + outside * p.u1(d);
    let int_u2 = disk(&|r| p.u2(r))? + outside * p.u2(d);
    let e1 = disk(&|r| p.u1(r).exp())? + outside * p.u1(d).exp();
    let e2 = disk(&|r| p.u2(r).exp())? + outside * p.u2(d).exp();
    BubbleQuantities {
        grad_u1_sq,
        grad_u2_sq,
        grad_u1_u2,
        int_u1,
        int_u2,
        log_int_exp_u1: e1.ln(),
        log_int_exp_u2: e2.ln(),
        phi: 0.0,
    }
    .with_energy(m)
}

/// Least-squares line through `(log λ, value)` for one quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub quantity: String,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square deviation from the line over the points used.
    pub residual: f64,
    pub lambdas_used: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFitReport {
    pub couplings: Vec<f64>,
    pub delta0: f64,
    pub lambdas: Vec<f64>,
    pub samples: Vec<BubbleQuantities>,
    pub fits: Vec<SlopeFit>,
}

/// A fit is accepted when its RMS residual is below this fraction of the
/// change the fitted line makes across the points, or below
/// [`FIT_ABS_TOL`] outright. Rejected fits drop their smallest λ, down to
/// a two-point secant.
pub const FIT_REL_TOL: f64 = 1e-3;
pub const FIT_ABS_TOL: f64 = 1e-3;

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

fn fit_one(name: &str, lambdas: &[f64], values: &[f64]) -> SlopeFit {
    let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let mut start = 0;
    loop {
        let (slope, intercept, residual) = least_squares(&xs[start..], &values[start..]);
        let span = xs[xs.len() - 1] - xs[start];
        let accepted = residual <= FIT_ABS_TOL.max(FIT_REL_TOL * slope.abs() * span);
        if accepted || xs.len() - start <= 2 {
            return SlopeFit {
                quantity: name.to_string(),
                slope,
                intercept,
                residual,
                lambdas_used: lambdas[start..].to_vec(),
            };
        }
        // smallest λ is pre-asymptotic
        start += 1;
    }
}

/// Fits every quantity against `log λ`. Needs at least four values of
/// `λ ≥ 2` spanning a factor of at least `e²`.
pub fn fit_slopes(lambdas: &[f64], m: &CouplingParams, delta0: f64) -> Result<SlopeFitReport> {
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < 4 {
        return Err(Error::InvalidArgument("need at least four distinct λ values".into()));
    }
    if sorted[sorted.len() - 1] / sorted[0] < std::f64::consts::E.powi(2) * (1.0 - 1e-12) {
        return Err(Error::InvalidArgument("λ values must span a factor of e²".into()));
    }
    let samples = sorted
        .iter()
        .map(|&l| bubble_quantities(&BubbleParams::new(l, delta0, (0.5, 0.5))?, m))
        .collect::<Result<Vec<_>>>()?;
    let fits = QUANTITY_NAMES
        .iter()
        .enumerate()
        .map(|(q, name)| {
            let values: Vec<f64> = samples.iter().map(|s| s.as_array()[q]).collect();
            fit_one(name, &sorted, &values)
        })
        .collect();
    Ok(SlopeFitReport {
        couplings: m.values().to_vec(),
        delta0,
        lambdas: sorted,
        samples,
        fits,
    })
}

impl SlopeFitReport {
    pub fn fit(&self, name: &str) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.quantity == name)
    }

    /// CSV rows `lambda,quantity,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda,quantity,value")?;
        for (l, s) in self.lambdas.iter().zip(&self.samples) {
            for (name, v) in QUANTITY_NAMES.iter().zip(s.as_array()) {
                writeln!(w, "{l},{name},{v}")?;
            }
        }
        Ok(())
    }
}

/// `φ₀(r) = -2 log(1 + πr²)` with its first and second radial derivatives.
pub fn liouville_profile(r: f64) -> (f64, f64, f64) {
    let q = 1.0 + PI * r * r;
    let phi = -2.0 * (PI * r * r).ln_1p();
    let d1 = -4.0 * PI * r / q;
    let d2 = -4.0 * PI * (1.0 - PI * r * r) / (q * q);
    (phi, d1, d2)
}

/// `|-Δφ₀ - 8π e^{φ₀}|` at radius `r`, with `Δ = ∂_rr + ∂_r / r`.
pub fn liouville_residual(r: f64) -> f64 {
    let (phi, d1, d2) = liouville_profile(r);
    // φ₀'/r is -4π / (1 + πr²), finite at the origin
    let d1_over_r = if r == 0.0 { -4.0 * PI } else { d1 / r };
    (-(d2 + d1_over_r) - 8.0 * PI * phi.exp()).abs()
}

/// `∫_{B_R} e^{φ₀}` by radial quadrature.
pub fn liouville_mass(r_max: f64) -> Result<f64> {
    quadrature::radial_integral(|r| liouville_profile(r).0.exp(), r_max, 1e-9, 0.0, 1e-13)
}

/// `φ₀(s x) + 2 log s` about `center`, sampled on the torus.
pub fn liouville_field(spec: GridSpec, center: (f64, f64), scale: f64) -> ScalarField {
    ScalarField::from_fn(spec, |x, y| {
        let r = periodic_distance((x, y), center);
        liouville_profile(scale * r).0 + 2.0 * scale.ln()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(a: f64, b: f64) -> CouplingParams {
        CouplingParams::new(vec![a, b]).unwrap()
    }

    /// Closed-form values of the eight integrals, with `S = πλ²δ0²`.
    fn closed_form(p: &BubbleParams, cp: &CouplingParams) -> [f64; 8] {
        let (l, d) = (p.lambda, p.delta0);
        let l2 = l * l;
        let s = PI * l2 * d * d;
        let out = 1.0 - PI * d * d;
        let g11 = 16.0 * PI * (s.ln_1p() - s / (1.0 + s));
        let c1 = l2.ln() - 2.0 * s.ln_1p();
        let int_u1 = PI * d * d * l2.ln() - 2.0 / l2 * ((1.0 + s) * s.ln_1p() - s) + out * c1;
        let e1 = s / (1.0 + s) + out * l2 / (1.0 + s).powi(2);
        let e2 = (s + 0.5 * s * s) / (l2 * l) + out * (1.0 + s) / l;
        let mv = cp.values();
        let g22 = g11 / 4.0;
        let g12 = -g11 / 2.0;
        let phi = (g11 + g22 + g12) / 3.0 + mv[0] * int_u1 - mv[1] * 0.5 * int_u1
            - mv[0] * e1.ln()
            - mv[1] * e2.ln();
        [g11, g22, g12, int_u1, -0.5 * int_u1, e1.ln(), e2.ln(), phi]
    }

    #[test]
    fn profile_values() {
        let p = BubbleParams::new(1.0, 0.25, (0.5, 0.5));
        assert!(p.is_err());
        let p = BubbleParams::new(1.000001, 0.25, (0.5, 0.5)).unwrap();
        assert!(p.u1(0.0).abs() < 1e-5);
        let p = BubbleParams::centred(8.0).unwrap();
        assert!((p.u1(0.0) - 64f64.ln()).abs() < 1e-14);
        assert_eq!(p.u2(0.1), -0.5 * p.u1(0.1));
        let inside = p.u1(p.delta0 * (1.0 - 1e-14));
        assert!((inside - p.u1(0.4)).abs() < 1e-10);
    }

    #[test]
    fn grid_samples() {
        let spec = GridSpec::new(64).unwrap();
        let p = BubbleParams::centred(4.0).unwrap();
        let b = standard_bubble(&p, spec).unwrap();
        for (a, c) in b.component(0).values().iter().zip(b.component(1).values()) {
            assert_eq!(*c, -0.5 * a);
        }
        assert!((b.component(0).get(32, 32) - 16f64.ln()).abs() < 1e-14);
        let big = BubbleParams::centred(64.0).unwrap();
        assert!(matches!(standard_bubble(&big, spec), Err(Error::RefineGrid(_))));
        assert_eq!(standard_bubble_unresolved(&big, spec).rank(), 2);
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        let cp = m(5.0 * PI, 3.0 * PI);
        for l in [2.0, 7.389, 54.6, 148.4, 1000.0] {
            let p = BubbleParams::centred(l).unwrap();
            let q = bubble_quantities(&p, &cp).unwrap().as_array();
            let exact = closed_form(&p, &cp);
            for (i, (a, b)) in q.iter().zip(exact).enumerate() {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{} at λ={l}: {a} vs {b}", QUANTITY_NAMES[i]);
            }
        }
    }

    #[test]
    fn discrete_slopes_between_e3_and_e4() {
        // Exact differences from the closed forms at δ0 = 1/4; the O(1/λ²)
        // remainders are still about 1% of the leading term at λ = e³.
        let cp = m(4.0 * PI, 4.0 * PI);
        let e = std::f64::consts::E;
        let lo = bubble_quantities(&BubbleParams::centred(e.powi(3)).unwrap(), &cp).unwrap();
        let hi = bubble_quantities(&BubbleParams::centred(e.powi(4)).unwrap(), &cp).unwrap();
        let r11 = (hi.grad_u1_sq - lo.grad_u1_sq) / (32.0 * PI);
        let r12 = (hi.grad_u1_u2 - lo.grad_u1_u2) / (-16.0 * PI);
        let de1 = hi.log_int_exp_u1 - lo.log_int_exp_u1;
        assert!((r11 - 0.989_200_331_930_447).abs() < 1e-9, "{r11}");
        assert!((r12 - r11).abs() < 1e-12);
        assert!((de1 + 0.031_972_160_759_294).abs() < 1e-9, "{de1}");
        assert!((r11 - 1.0).abs() < 0.011);
        // wider disks approach the asymptotic slope
        let wide = |l: f64| BubbleParams::new(l, 0.4, (0.5, 0.5)).unwrap();
        let lo = bubble_quantities(&wide(e.powi(3)), &cp).unwrap();
        let hi = bubble_quantities(&wide(e.powi(4)), &cp).unwrap();
        assert!(((hi.grad_u1_sq - lo.grad_u1_sq) / (32.0 * PI) - 1.0).abs() < 0.01);
        assert!((hi.log_int_exp_u1 - lo.log_int_exp_u1).abs() < 0.02);
    }

    #[test]
    fn fit_requires_enough_lambdas() {
        let cp = m(PI, PI);
        assert!(fit_slopes(&[2.0, 3.0, 4.0], &cp, 0.25).is_err());
        assert!(fit_slopes(&[2.0, 3.0, 4.0, 5.0], &cp, 0.25).is_err());
        assert!(fit_slopes(&[2.0, 3.0, 4.0, 15.0], &cp, 0.25).is_ok());
    }

    #[test]
    fn energy_slope_vanishes_at_threshold() {
        let e = std::f64::consts::E;
        let lambdas: Vec<f64> = (2..=5).map(|k| e.powi(k)).collect();
        let rep = fit_slopes(&lambdas, &m(4.0 * PI, 4.0 * PI), 0.25).unwrap();
        assert!(rep.fit("phi").unwrap().slope.abs() < 0.05 * 4.0 * PI);
    }

    #[test]
    fn energy_decreases_along_family_above_threshold() {
        let cp = m(4.5 * PI, 3.0 * PI);
        // Φ rises for small λ before the logarithmic decay takes over.
        let mut prev = f64::INFINITY;
        for k in 0..30 {
            let l = 30.0 * 1.25f64.powi(k);
            let q = bubble_quantities(&BubbleParams::centred(l).unwrap(), &cp).unwrap();
            assert!(q.phi < prev);
            prev = q.phi;
        }
    }

    #[test]
    fn curved_data_drops_small_lambdas() {
        let lambdas = [2.0, 4.0, 8.0, 16.0, 32.0];
        let straight: Vec<f64> = lambdas.iter().map(|l: &f64| 3.0 * l.ln() + 1.0).collect();
        let f = fit_one("q", &lambdas, &straight);
        assert_eq!(f.lambdas_used.len(), 5);
        assert!((f.slope - 3.0).abs() < 1e-12);
        let curved: Vec<f64> = lambdas.iter().map(|l: &f64| 3.0 * l.ln() + 5.0 / (l * l)).collect();
        let f = fit_one("q", &lambdas, &curved);
        assert!(f.lambdas_used.len() < 5);
        assert!(f.lambdas_used[0] > 2.0);
        assert!((f.slope - 3.0).abs() < 0.03);
    }

    #[test]
    fn csv_has_eight_rows_per_lambda() {
        let e = std::f64::consts::E;
        let lambdas: Vec<f64> = (2..=5).map(|k| e.powi(k)).collect();
        let rep = fit_slopes(&lambdas, &m(3.0 * PI, 3.0 * PI), 0.25).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 32);
    }

    #[test]
    fn liouville_profile_properties() {
        let (phi0, d1, _) = liouville_profile(0.0);
        assert_eq!(phi0, 0.0);
        assert_eq!(d1, 0.0);
        for r in [0.01, 0.5, 3.0] {
            assert!(liouville_profile(r).0 < 0.0);
        }
        let mass = liouville_mass(1e4).unwrap();
        assert!((mass - 1.0).abs() < 1e-6);
        // closed form 1 - 1/(1 + πR²)
        let m10 = liouville_mass(10.0).unwrap();
        assert!((m10 - (1.0 - 1.0 / (1.0 + PI * 100.0))).abs() < 1e-11);
    }

    #[test]
    fn liouville_residual_matches_difference_quotients() {
        // Oracle: fourth-order central differences of the profile itself.
        let phi = |r: f64| liouville_profile(r).0;
        for i in 0..=1000 {
            let r = 0.1 * i as f64;
            assert!(liouville_residual(r) < 1e-8, "r = {r}");
            if r > 0.05 {
                let h = 1e-3 * r.max(0.1);
                let d1 = (-phi(r + 2.0 * h) + 8.0 * phi(r + h) - 8.0 * phi(r - h) + phi(r - 2.0 * h)) / (12.0 * h);
                let d2 = (-phi(r + 2.0 * h) + 16.0 * phi(r + h) - 30.0 * phi(r) + 16.0 * phi(r - h)
                    - phi(r - 2.0 * h))
                    / (12.0 * h * h);
                let fd_res = (-(d2 + d1 / r) - 8.0 * PI * phi(r).exp()).abs();
                let scale = 8.0 * PI * phi(r).exp() + (d1 / r).abs();
                assert!(fd_res < 1e-5 * scale, "r = {r}: {fd_res}");
            }
        }
    }
}
