//! Adaptive Gauss–Kronrod (7, 15) quadrature on finite intervals.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Integrates `f` over `[a, b]` to absolute error `abs_tol` or relative
/// error `rel_tol`, whichever is looser, by global interval bisection.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 20_000;
    let (v, e) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    let (mut total, mut err) = (v, e);
    loop {
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Quadrature { a, b, estimate: err });
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if intervals.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature { a, b, estimate: err });
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, v0, e0) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(Error::Quadrature { a, b, estimate: err });
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        total += v1 + v2 - v0;
        err += e1 + e2 - e0;
        if err < 0.0 || intervals.len() % 256 == 0 {
            // refresh running sums against drift
            total = intervals.iter().map(|iv| iv.2).sum::<f64>() + v1 + v2;
            err = intervals.iter().map(|iv| iv.3).sum::<f64>() + e1 + e2;
        }
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// `∫_0^R f(r) 2πr dr`, integrated in `t = log r` on `[r_min, R]` so
/// integrands peaked near the origin are resolved; `[0, r_min]` is taken
/// from `f(0)`.
pub fn radial_integral(
    f: impl Fn(f64) -> f64,
    r_max: f64,
    r_min: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    // contribution of [0, r_min] by the midpoint value of f
    let core = f(0.0) * std::f64::consts::PI * r_min * r_min;
    let g = |t: f64| {
        let r = t.exp();
        f(r) * two_pi * r * r
    };
    let outer = integrate(g, r_min.ln(), r_max.ln(), abs_tol, rel_tol)?;
    Ok(core + outer)
}
