//! One-dimensional quadrature: globally adaptive Gauss–Kronrod (7/15),
//! a tanh–sinh rule used as an independent cross-check, and the periodic
//! trapezoidal rule for smooth 2π-periodic integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

/// Single 15-point Kronrod panel; returns (K15 estimate, |K15 - G7|).
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        resk += WGK[j] * s;
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    (resk * half, ((resk - resg) * half).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// The panel with the largest error estimate is bisected until the summed
/// error estimate drops below `abs_tol` (or `rel_tol` times the magnitude).
/// Integrable endpoint singularities are handled because Kronrod nodes never
/// touch the endpoints.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64) -> Result<Integral> {
    integrate_rel(&mut f, a, b, abs_tol, 0.0)
}

pub fn integrate_rel<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: 0.0, abs_error: 0.0, evaluations: 0 });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("integration bounds must be finite: [{a}, {b}]")));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    const MAX_PANELS: usize = 20_000;
    let mut heap = BinaryHeap::new();
    let (v, e) = gk15(f, lo, hi);
    let mut total = v;
    let mut total_err = e;
    let mut evals = 15;
    heap.push(Panel { a: lo, b: hi, value: v, err: e });
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_PANELS {
            return Err(Error::Numerical(format!(
                "adaptive quadrature did not converge on [{lo}, {hi}]: error {total_err:e}"
            )));
        }
        let p = heap.pop().expect("heap is never empty here");
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            // Panel cannot be split further in floating point.
            heap.push(Panel { err: 0.0, ..p });
            total_err = heap.iter().map(|q| q.err).sum();
            if heap.iter().all(|q| q.err == 0.0) {
                break;
            }
            continue;
        }
        let (v1, e1) = gk15(f, p.a, mid);
        let (v2, e2) = gk15(f, mid, p.b);
        evals += 30;
        total += v1 + v2 - p.value;
        total_err += e1 + e2 - p.err;
        heap.push(Panel { a: p.a, b: mid, value: v1, err: e1 });
        heap.push(Panel { a: mid, b: p.b, value: v2, err: e2 });
        // Re-sum occasionally to stop drift in the running totals.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|q| q.value).sum();
            total_err = heap.iter().map(|q| q.err).sum();
        }
    }
    let value: f64 = heap.iter().map(|q| q.value).sum();
    let abs_error: f64 = heap.iter().map(|q| q.err).sum();
    Ok(Integral { value: sign * value, abs_error, evaluations: evals })
}

/// Tanh–sinh (double exponential) quadrature on `[a, b]`.
///
/// Step halving continues until successive estimates agree to `tol`. Nodes
/// cluster doubly-exponentially at the endpoints, so algebraic endpoint
/// singularities converge quickly. Abscissae are evaluated through their
/// distance to the nearest endpoint to avoid cancellation.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let half = 0.5 * (b - a);
    let t_max = 4.5;
    let node = |t: f64| -> (f64, f64) {
        // x = tanh(pi/2 sinh t); returns (1 - x, weight) with x >= 0 branch.
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let one_minus = 1.0 / (u.exp() * u.cosh());
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() / (u.cosh() * u.cosh());
        (one_minus, w)
    };
    let eval = |t: f64, f: &mut F| -> f64 {
        let (om, w) = node(t.abs());
        if om <= 0.0 || w == 0.0 {
            return 0.0;
        }
        let x = if t >= 0.0 { b - half * om } else { a + half * om };
        if x <= a || x >= b {
            return 0.0;
        }
        w * f(x)
    };
    let mut h = 1.0;
    let mut sum = eval(0.0, &mut f);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        let t = k as f64 * h;
        sum += eval(t, &mut f) + eval(-t, &mut f);
        k += 1;
    }
    let mut estimate = sum * h * half;
    for _level in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= t_max {
            let t = k as f64 * h;
            sum += eval(t, &mut f) + eval(-t, &mut f);
            k += 2;
        }
        let next = sum * h * half;
        if (next - estimate).abs() <= tol {
            return Ok(next);
        }
        estimate = next;
    }
    Err(Error::Numerical(format!("tanh-sinh did not reach tolerance {tol:e}")))
}

/// Average of a 2π-periodic function over `[0, 2π)` with `n` equispaced nodes.
///
/// Exact for trigonometric polynomials of degree below `n`.
pub fn periodic_mean<F: FnMut(f64) -> f64>(mut f: F, n: usize) -> f64 {
    let step = std::f64::consts::TAU / n as f64;
    (0..n).map(|k| f(k as f64 * step)).sum::<f64>() / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x * x * x - 2.0 * x + 1.0, -1.0, 2.0, 1e-13).unwrap();
        assert!((r.value - 3.75).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let r = integrate(|x| x.powf(-0.5), 0.0, 1.0, 1e-10).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9, "{}", r.value);
        let t = tanh_sinh(|x| x.powf(-0.5), 0.0, 1.0, 1e-12).unwrap();
        assert!((t - 2.0).abs() < 1e-10, "{t}");
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let a = integrate(f64::sin, 0.0, 1.0, 1e-12).unwrap().value;
        let b = integrate(f64::sin, 1.0, 0.0, 1e-12).unwrap().value;
        assert!((a + b).abs() < 1e-15);
        assert!((a - (1.0 - 1f64.cos())).abs() < 1e-13);
    }

    #[test]
    fn tanh_sinh_smooth() {
        let t = tanh_sinh(f64::exp, 0.0, 1.0, 1e-13).unwrap();
        assert!((t - (std::f64::consts::E - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn periodic_mean_exact_for_trig_polys() {
        let m = periodic_mean(|p| (p.cos() + 2.0 * p.sin()).powi(2) + 0.5, 8);
        assert!((m - 3.0).abs() < 1e-14);
    }
}
