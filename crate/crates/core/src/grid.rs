//! Periodic unit-area square torus: sampled fields, spectral calculus and
//! quadrature.
//!
//! Samples sit at `(x, y) = (j h, i h)` for row `i` and column `j`, stored
//! row-major. Fourier coefficients are normalized so that
//! `f(x) = sum_k fhat_k exp(2 pi i k.x)`; with area one, Parseval reads
//! `integral(f g) = sum_k fhat_k conj(ghat_k)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Square periodic grid of side one with `n` points per side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(
                "n must be a power of two ≥ 8".to_string(),
            ));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Quadrature weight of a single sample.
    pub fn cell_area(&self) -> f64 {
        self.h() * self.h()
    }

    pub fn area(&self) -> f64 {
        (self.n * self.n) as f64 * self.cell_area()
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinates of sample `(i, j)`.
    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        (j as f64 * self.h(), i as f64 * self.h())
    }

    /// Signed integer wave number of FFT index `idx`.
    fn wavenumber(&self, idx: usize) -> f64 {
        if idx <= self.n / 2 {
            idx as f64
        } else {
            idx as f64 - self.n as f64
        }
    }
}

/// Shortest signed displacement `a - b` on the unit circle, in `[-0.5, 0.5)`.
pub fn periodic_delta(a: f64, b: f64) -> f64 {
    let d = a - b;
    d - (d + 0.5).floor()
}

/// Distance on the unit torus.
pub fn periodic_distance(p: (f64, f64), q: (f64, f64)) -> f64 {
    periodic_delta(p.0, q.0).hypot(periodic_delta(p.1, q.1))
}

/// A real field sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                spec.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { spec, values })
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        Self {
            spec,
            values: vec![c; spec.len()],
        }
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    /// Samples `f(x, y)` at every grid point.
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = spec.n();
        let mut values = Vec::with_capacity(spec.len());
        for i in 0..n {
            for j in 0..n {
                let (x, y) = spec.point(i, j);
                values.push(f(x, y));
            }
        }
        Self { spec, values }
    }

    /// Random smooth field built from Fourier modes with `|k|_inf <= max_mode`,
    /// amplitudes decaying like `1 / (1 + |k|^2)` and scaled so the largest
    /// mode has amplitude `amplitude`. The constant mode is left out.
    pub fn random_smooth<R: Rng + ?Sized>(
        spec: GridSpec,
        rng: &mut R,
        max_mode: i32,
        amplitude: f64,
    ) -> Self {
        let mut modes = Vec::new();
        for k1 in -max_mode..=max_mode {
            for k2 in 0..=max_mode {
                if k2 == 0 && k1 <= 0 {
                    continue;
                }
                let decay = 1.0 / (1.0 + (k1 * k1 + k2 * k2) as f64);
                let a = rng.gen_range(-1.0..1.0) * decay;
                let b = rng.gen_range(-1.0..1.0) * decay;
                modes.push((k1 as f64, k2 as f64, a, b));
            }
        }
        Self::from_fn(spec, |x, y| {
            modes
                .iter()
                .map(|&(k1, k2, a, b)| {
                    let phase = 2.0 * PI * (k1 * x + k2 * y);
                    a * phase.cos() + b * phase.sin()
                })
                .sum::<f64>()
                * amplitude
        })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.spec.n + j]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite)
        }
    }

    pub(crate) fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch(self.spec.n, other.spec.n));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            spec: self.spec,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            spec: self.spec,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &Self, scale: f64) -> Result<Self> {
        self.zip_map(other, |a, b| a + scale * b)
    }

    pub fn shift(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Index `(i, j)` of the largest sample; first occurrence wins.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        (best / self.spec.n, best % self.spec.n)
    }

    /// Bilinear interpolation at an arbitrary point of the torus.
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let n = self.spec.n;
        let gx = x.rem_euclid(1.0) * n as f64;
        let gy = y.rem_euclid(1.0) * n as f64;
        let j0 = gx.floor() as usize % n;
        let i0 = gy.floor() as usize % n;
        let tx = gx - gx.floor();
        let ty = gy - gy.floor();
        let j1 = (j0 + 1) % n;
        let i1 = (i0 + 1) % n;
        (1.0 - ty) * ((1.0 - tx) * self.get(i0, j0) + tx * self.get(i0, j1))
            + ty * ((1.0 - tx) * self.get(i1, j0) + tx * self.get(i1, j1))
    }

    /// Binary container: `n` as little-endian u64, then `n * n` little-endian
    /// f64 values in row-major order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(self.spec.n as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::InvalidArgument(format!("read error: {e}"));
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf).map_err(io)?;
        let spec = GridSpec::new(u64::from_le_bytes(buf) as usize)?;
        let mut values = Vec::with_capacity(spec.len());
        for _ in 0..spec.len() {
            r.read_exact(&mut buf).map_err(io)?;
            values.push(f64::from_le_bytes(buf));
        }
        Self::new(spec, values)
    }

    /// CSV with header `x,y,value`, one row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,y,value")?;
        let n = self.spec.n;
        for i in 0..n {
            for j in 0..n {
                let (x, y) = self.spec.point(i, j);
                writeln!(w, "{x},{y},{}", self.get(i, j))?;
            }
        }
        Ok(())
    }
}

/// Pairwise summation; deterministic and accurate to `O(eps log n)`.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 64 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> Plans {
    static CACHE: OnceLock<Mutex<HashMap<usize, Plans>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

fn fft2_in_place(buf: &mut [Complex64], n: usize, fft: &Arc<dyn Fft<f64>>) {
    fft.process(buf);
    transpose(buf, n);
    fft.process(buf);
    transpose(buf, n);
}

/// Normalized Fourier coefficients of a field.
fn forward(f: &ScalarField) -> Vec<Complex64> {
    let n = f.spec.n;
    let (fwd, _) = plans(n);
    let mut buf: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_in_place(&mut buf, n, &fwd);
    let norm = 1.0 / (n * n) as f64;
    for c in &mut buf {
        *c *= norm;
    }
    buf
}

/// Real part of the synthesis from normalized coefficients.
fn inverse(spec: GridSpec, mut coeffs: Vec<Complex64>) -> Vec<f64> {
    let (_, inv) = plans(spec.n);
    fft2_in_place(&mut coeffs, spec.n, &inv);
    coeffs.into_iter().map(|c| c.re).collect()
}

/// Applies a real Fourier multiplier `m(k1, k2)`, with `k1` along x.
fn apply_multiplier(f: &ScalarField, m: impl Fn(f64, f64) -> f64) -> ScalarField {
    let spec = f.spec;
    let n = spec.n;
    let mut coeffs = forward(f);
    for i in 0..n {
        let k2 = spec.wavenumber(i);
        for j in 0..n {
            let k1 = spec.wavenumber(j);
            coeffs[i * n + j] *= m(k1, k2);
        }
    }
    ScalarField {
        spec,
        values: inverse(spec, coeffs),
    }
}

/// Spectral Laplacian with symbol `-4 pi^2 |k|^2`.
pub fn laplacian(f: &ScalarField) -> Result<ScalarField> {
    f.check_finite()?;
    let centred = f.shift(-mean(f));
    Ok(apply_multiplier(&centred, |k1, k2| {
        -4.0 * PI * PI * (k1 * k1 + k2 * k2)
    }))
}

/// Spectral gradient `(df/dx, df/dy)`. The Nyquist mode is dropped so the
/// result stays real.
pub fn gradient(f: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    f.check_finite()?;
    let spec = f.spec;
    let n = spec.n;
    let nyq = (n / 2) as f64;
    let coeffs = forward(f);
    let mut dx = coeffs.clone();
    let mut dy = coeffs;
    for i in 0..n {
        let k2 = spec.wavenumber(i);
        for j in 0..n {
            let k1 = spec.wavenumber(j);
            let idx = i * n + j;
            let sx = if k1.abs() == nyq { 0.0 } else { 2.0 * PI * k1 };
            let sy = if k2.abs() == nyq { 0.0 } else { 2.0 * PI * k2 };
            dx[idx] *= Complex64::new(0.0, sx);
            dy[idx] *= Complex64::new(0.0, sy);
        }
    }
    Ok((
        ScalarField {
            spec,
            values: inverse(spec, dx),
        },
        ScalarField {
            spec,
            values: inverse(spec, dy),
        },
    ))
}

/// `integral(grad f . grad g)` computed mode by mode.
pub fn dirichlet_pairing(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.check_same_grid(g)?;
    f.check_finite()?;
    g.check_finite()?;
    let spec = f.spec;
    let n = spec.n;
    let fh = forward(f);
    let gh = forward(g);
    let mut terms = Vec::with_capacity(spec.len());
    for i in 0..n {
        let k2 = spec.wavenumber(i);
        for j in 0..n {
            let k1 = spec.wavenumber(j);
            let idx = i * n + j;
            let w = 4.0 * PI * PI * (k1 * k1 + k2 * k2);
            terms.push(w * (fh[idx] * gh[idx].conj()).re);
        }
    }
    Ok(pairwise_sum(&terms))
}

/// All pairings `D[i][j] = ∫∇f_i·∇f_j`, transforming each field once.
pub fn dirichlet_matrix(fields: &[&ScalarField]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = fields.first() else {
        return Ok(Vec::new());
    };
    for f in fields {
        first.check_same_grid(f)?;
        f.check_finite()?;
    }
    let spec = first.spec;
    let n = spec.n;
    let weights: Vec<f64> = (0..spec.len())
        .map(|idx| {
            let k2 = spec.wavenumber(idx / n);
            let k1 = spec.wavenumber(idx % n);
            4.0 * PI * PI * (k1 * k1 + k2 * k2)
        })
        .collect();
    let hats: Vec<Vec<Complex64>> = fields.iter().map(|f| forward(f)).collect();
    let m = fields.len();
    let mut out = vec![vec![0.0; m]; m];
    let mut terms = vec![0.0; spec.len()];
    for i in 0..m {
        for j in i..m {
            for (idx, t) in terms.iter_mut().enumerate() {
                *t = weights[idx] * (hats[i][idx] * hats[j][idx].conj()).re;
            }
            let v = pairwise_sum(&terms);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Ok(out)
}

/// Solves `-Δg = f` for the zero-mean `g`; `f` must have mean zero.
pub fn inverse_laplacian(f: &ScalarField) -> Result<ScalarField> {
    f.check_finite()?;
    let m = mean(f);
    let scale = f.values.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    if m.abs() >= 1e-10 * scale {
        return Err(Error::IncompatibleSource(m));
    }
    Ok(solve_poisson_zero_mean(f))
}

/// `(-Δ)^{-1}` on the zero-mean part of `f`; the mean is discarded.
pub(crate) fn solve_poisson_zero_mean(f: &ScalarField) -> ScalarField {
    apply_multiplier(f, |k1, k2| {
        let k2sum = k1 * k1 + k2 * k2;
        if k2sum == 0.0 {
            0.0
        } else {
            1.0 / (4.0 * PI * PI * k2sum)
        }
    })
}

pub fn integral(f: &ScalarField) -> f64 {
    f.spec.cell_area() * pairwise_sum(&f.values)
}

/// Equal to [`integral`] since the torus has area one.
pub fn mean(f: &ScalarField) -> f64 {
    integral(f) / f.spec.area()
}

/// `log integral exp(f)`, shifted by the maximum so it never overflows.
pub fn log_integral_exp(f: &ScalarField) -> f64 {
    let m = f.max();
    let shifted: Vec<f64> = f.values.iter().map(|&v| (v - m).exp()).collect();
    m + (f.spec.cell_area() * pairwise_sum(&shifted)).ln()
}

/// `e^f / integral e^f`, evaluated without overflow.
pub fn normalized_density(f: &ScalarField) -> ScalarField {
    let lie = log_integral_exp(f);
    f.map(|v| (v - lie).exp())
}

/// Integral of `rho` over samples within periodic distance `r` of `center`.
pub fn disk_mass(rho: &ScalarField, center: (f64, f64), r: f64) -> Result<f64> {
    rho.check_finite()?;
    if !(r > 0.0 && r <= 0.5) {
        return Err(Error::InvalidArgument(format!("radius {r} outside (0, 0.5]")));
    }
    if rho.values.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument("negative density".to_string()));
    }
    let spec = rho.spec;
    let n = spec.n;
    let mut inside = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if periodic_distance(spec.point(i, j), center) <= r {
                inside.push(rho.get(i, j));
            }
        }
    }
    Ok(spec.cell_area() * pairwise_sum(&inside))
}

/// Sample offsets `(di, dj)` within distance `r` of a sample point.
pub(crate) fn disk_offsets(spec: GridSpec, r: f64) -> Vec<(isize, isize)> {
    let h = spec.h();
    let reach = (r / h).ceil() as isize;
    let mut out = Vec::new();
    for di in -reach..=reach {
        for dj in -reach..=reach {
            let d = ((di * di + dj * dj) as f64).sqrt() * h;
            if d <= r {
                out.push((di, dj));
            }
        }
    }
    out
}

/// Area of the intersection of the disk of radius `r` centred at the origin
/// with the rectangle `[x0, x1] x [y0, y1]`.
pub fn disk_rectangle_area(r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let q = |x: f64, y: f64| x.signum() * y.signum() * quadrant_area(r, x.abs(), y.abs());
    q(x1, y1) - q(x0, y1) - q(x1, y0) + q(x0, y0)
}

/// Area of the disk of radius `r` inside `[0, x] x [0, y]`, `x, y >= 0`.
fn quadrant_area(r: f64, x: f64, y: f64) -> f64 {
    let x = x.min(r);
    let y = y.min(r);
    if x * x + y * y <= r * r {
        return x * y;
    }
    let antideriv = |t: f64| 0.5 * (t * (r * r - t * t).max(0.0).sqrt() + r * r * (t / r).asin());
    let t_star = (r * r - y * y).max(0.0).sqrt();
    y * t_star + antideriv(x) - antideriv(t_star)
}

/// Per-sample area weights of the periodic disk `B_r(center)`, treating each
/// sample as the centre of an `h x h` cell. Weights sum to `pi r^2` up to
/// round-off.
pub fn disk_area_weights(spec: GridSpec, center: (f64, f64), r: f64) -> Vec<f64> {
    let n = spec.n;
    let h = spec.h();
    let mut w = vec![0.0; spec.len()];
    for i in 0..n {
        for j in 0..n {
            let (x, y) = spec.point(i, j);
            let dx = periodic_delta(x, center.0);
            let dy = periodic_delta(y, center.1);
            if dx.abs() - 0.5 * h > r || dy.abs() - 0.5 * h > r {
                continue;
            }
            w[i * n + j] = disk_rectangle_area(r, dx - 0.5 * h, dx + 0.5 * h, dy - 0.5 * h, dy + 0.5 * h);
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(63).is_err());
        assert!(GridSpec::new(4).is_err());
        let err = GridSpec::new(12).unwrap_err();
        assert_eq!(err.to_string(), "invalid argument: n must be a power of two ≥ 8");
        let g = grid(64);
        assert_eq!(g.area(), 1.0);
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let f = ScalarField::constant(grid(32), 7.0);
        let lap = laplacian(&f).unwrap();
        assert!(lap.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn laplacian_eigenfunction() {
        let g = grid(64);
        let f = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).sin());
        let lap = laplacian(&f).unwrap();
        let err = lap
            .values()
            .iter()
            .zip(f.values())
            .map(|(l, v)| (l + 4.0 * PI * PI * v).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn laplacian_rejects_non_finite() {
        let g = grid(8);
        let mut vals = vec![0.0; 64];
        vals[3] = f64::NAN;
        let f = ScalarField { spec: g, values: vals };
        assert_eq!(laplacian(&f).unwrap_err(), Error::NonFinite);
        assert!(ScalarField::new(g, vec![f64::INFINITY; 64]).is_err());
    }

    #[test]
    fn laplacian_matches_five_point_stencil_at_second_order() {
        // 5-point stencil oracle; the error must shrink by ~4 when h halves.
        let errs: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| {
                let g = grid(n);
                let mut rng = ChaCha8Rng::seed_from_u64(3);
                let f = ScalarField::random_smooth(g, &mut rng, 3, 1.0);
                let lap = laplacian(&f).unwrap();
                let h = g.h();
                let mut err: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let fd = (f.get((i + 1) % n, j)
                            + f.get((i + n - 1) % n, j)
                            + f.get(i, (j + 1) % n)
                            + f.get(i, (j + n - 1) % n)
                            - 4.0 * f.get(i, j))
                            / (h * h);
                        err = err.max((fd - lap.get(i, j)).abs());
                    }
                }
                err
            })
            .collect();
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
    }

    #[test]
    fn dirichlet_pairing_cases() {
        let g = grid(64);
        let s = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).sin());
        let c = ScalarField::constant(g, 3.0);
        assert!(dirichlet_pairing(&c, &s).unwrap().abs() < 1e-12);
        let d = dirichlet_pairing(&s, &s).unwrap();
        assert!((d - 2.0 * PI * PI).abs() < 1e-10);
        assert!(dirichlet_pairing(&s, &ScalarField::zeros(grid(32))).is_err());
    }

    #[test]
    fn dirichlet_pairing_is_self_adjoint() {
        let g = grid(32);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let f = ScalarField::random_smooth(g, &mut rng, 4, 1.0);
            let h = ScalarField::random_smooth(g, &mut rng, 4, 1.0);
            let d = dirichlet_pairing(&f, &h).unwrap();
            let lap_h = laplacian(&h).unwrap();
            let by_parts = -integral(&f.zip_map(&lap_h, |a, b| a * b).unwrap());
            let sym = dirichlet_pairing(&h, &f).unwrap();
            assert!((d - by_parts).abs() <= 1e-10 * d.abs().max(1.0));
            assert!((d - sym).abs() <= 1e-12 * d.abs().max(1.0));
        }
    }

    #[test]
    fn integral_cases() {
        let g = grid(64);
        assert!((integral(&ScalarField::constant(g, 3.0)) - 3.0).abs() < 1e-14);
        let s = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).sin());
        assert!(integral(&s).abs() < 1e-14);
        assert_eq!(integral(&s), mean(&s));
    }

    #[test]
    fn integral_matches_compensated_sum() {
        let g = grid(128);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = ScalarField::random_smooth(g, &mut rng, 5, 1.0).shift(2.0);
        // Kahan summation oracle.
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &v in f.values() {
            let y = v - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        let oracle = sum * g.cell_area();
        assert!((integral(&f) - oracle).abs() <= 1e-12 * oracle.abs());
    }

    #[test]
    fn log_integral_exp_cases() {
        let g = grid(64);
        let c = ScalarField::constant(g, -2.5);
        assert!((log_integral_exp(&c) + 2.5).abs() < 1e-12);

        let mut vals = vec![0.0; g.len()];
        vals[17] = 1000.0;
        let spike = ScalarField::new(g, vals).unwrap();
        let value = log_integral_exp(&spike);
        // log(h^2 (e^1000 + 4095)) = 1000 + log(h^2) + log1p(4095 e^-1000).
        let oracle = 1000.0 + g.cell_area().ln() + (4095.0 * (-1000.0f64).exp()).ln_1p();
        assert!(value.is_finite());
        assert!((value - oracle).abs() <= 1e-12 * oracle.abs());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = ScalarField::random_smooth(g, &mut rng, 3, 2.0);
        let shifted = f.shift(123.25);
        assert!((log_integral_exp(&shifted) - log_integral_exp(&f) - 123.25).abs() < 1e-12);
    }

    #[test]
    fn inverse_laplacian_cases() {
        let g = grid(64);
        let z = inverse_laplacian(&ScalarField::zeros(g)).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));

        let s = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).sin());
        let inv = inverse_laplacian(&s).unwrap();
        for (a, b) in inv.values().iter().zip(s.values()) {
            assert!((a - b / (4.0 * PI * PI)).abs() < 1e-14);
        }

        let c = ScalarField::constant(g, 1.0);
        assert!(matches!(inverse_laplacian(&c), Err(Error::IncompatibleSource(_))));
        assert_eq!(
            inverse_laplacian(&c).unwrap_err().to_string().split(" (").next(),
            Some("incompatible source")
        );
    }

    #[test]
    fn inverse_laplacian_round_trip() {
        let g = grid(32);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let f = ScalarField::random_smooth(g, &mut rng, 6, 3.0);
        let back = laplacian(&inverse_laplacian(&f).unwrap()).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a + b).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_of_plane_wave() {
        let g = grid(32);
        let f = ScalarField::from_fn(g, |x, y| (2.0 * PI * (x + 2.0 * y)).sin());
        let (fx, fy) = gradient(&f).unwrap();
        let ex = ScalarField::from_fn(g, |x, y| 2.0 * PI * (2.0 * PI * (x + 2.0 * y)).cos());
        for k in 0..g.len() {
            assert!((fx.values()[k] - ex.values()[k]).abs() < 1e-10);
            assert!((fy.values()[k] - 2.0 * ex.values()[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn disk_mass_uniform_density() {
        let g = grid(64);
        let one = ScalarField::constant(g, 1.0);
        let m = disk_mass(&one, (0.5, 0.5), 0.25).unwrap();
        // one boundary layer of cells: 2 pi r h
        assert!((m - PI / 16.0).abs() < 2.0 * PI * 0.25 * g.h(), "{m}");
        // wraps around the corner
        let m2 = disk_mass(&one, (0.0, 0.0), 0.25).unwrap();
        assert!((m - m2).abs() < 1e-14);
    }

    #[test]
    fn disk_mass_of_spike() {
        let g = grid(32);
        let mut vals = vec![0.0; g.len()];
        vals[5 * 32 + 7] = 1.0 / g.cell_area();
        let rho = ScalarField::new(g, vals).unwrap();
        let c = g.point(5, 7);
        for r in [g.h(), 0.1, 0.5] {
            assert!((disk_mass(&rho, c, r).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn disk_mass_matches_refined_quadrature() {
        // Smooth bump; oracle is the polar-coordinate integral of the
        // closed form, evaluated with a fine midpoint rule.
        let bump = |d: f64| (-(d * d) / 0.01).exp();
        let r = 0.2;
        let mut oracle = 0.0;
        let m = 20000;
        for k in 0..m {
            let s = (k as f64 + 0.5) * r / m as f64;
            oracle += bump(s) * 2.0 * PI * s * r / m as f64;
        }
        for n in [64, 256] {
            let g = grid(n);
            let rho = ScalarField::from_fn(g, |x, y| bump(periodic_distance((x, y), (0.3, 0.6))));
            let val = disk_mass(&rho, (0.3, 0.6), r).unwrap();
            assert!((val - oracle).abs() < 5.0 * g.h() * oracle, "n={n}: {val} vs {oracle}");
        }
    }

    #[test]
    fn disk_mass_errors() {
        let g = grid(8);
        let neg = ScalarField::constant(g, -1.0);
        assert!(disk_mass(&neg, (0.5, 0.5), 0.1).is_err());
        let one = ScalarField::constant(g, 1.0);
        assert!(disk_mass(&one, (0.5, 0.5), 0.0).is_err());
        assert!(disk_mass(&one, (0.5, 0.5), 0.6).is_err());
    }

    #[test]
    fn area_weights_sum_to_disk_area() {
        for (n, c, r) in [(64, (0.5, 0.5), 0.25), (32, (0.013, 0.97), 0.4), (128, (0.31, 0.2), 0.0625)] {
            let w = disk_area_weights(grid(n), c, r);
            let total: f64 = w.iter().sum();
            assert!((total - PI * r * r).abs() < 1e-12, "{total}");
            assert!(w.iter().all(|&x| (-1e-15..=grid(n).cell_area() + 1e-15).contains(&x)));
        }
    }

    #[test]
    fn rectangle_area_cases() {
        // fully inside, fully outside, half plane
        assert!((disk_rectangle_area(1.0, -0.1, 0.1, -0.1, 0.1) - 0.04).abs() < 1e-15);
        assert_eq!(disk_rectangle_area(1.0, 2.0, 3.0, 2.0, 3.0), 0.0);
        assert!((disk_rectangle_area(1.0, 0.0, 5.0, -5.0, 5.0) - PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn binary_and_csv_io() {
        let g = grid(8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = ScalarField::random_smooth(g, &mut rng, 2, 1.0);
        let mut bytes = Vec::new();
        f.write_binary(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 8 + 8 * 64);
        assert_eq!(&bytes[..8], &8u64.to_le_bytes());
        assert_eq!(&bytes[8..16], &f.values()[0].to_le_bytes());
        let back = ScalarField::read_binary(bytes.as_slice()).unwrap();
        assert_eq!(back, f);

        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().next(), Some("x,y,value"));
        assert_eq!(text.lines().count(), 65);
    }

    #[test]
    fn interpolation_is_exact_on_nodes_and_linear_between() {
        let g = grid(16);
        let f = ScalarField::from_fn(g, |x, y| x + 2.0 * y);
        assert!((f.interpolate(0.25, 0.5) - 1.25).abs() < 1e-14);
        assert!((f.interpolate(0.3, 0.4) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn periodic_delta_wraps() {
        assert!((periodic_delta(0.95, 0.05) + 0.1).abs() < 1e-15);
        assert!((periodic_delta(0.05, 0.95) - 0.1).abs() < 1e-15);
        assert!((periodic_distance((0.0, 0.0), (0.9, 0.9)) - 0.1 * 2f64.sqrt()).abs() < 1e-15);
    }
}
