//! Povzner-type constants, the azimuthal moment identity behind them, and
//! moment tracking along particle runs.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::geometry::{gamma, post_collision, AngularKernel};
use crate::quadrature::{integrate, periodic_mean};
use crate::stats::{linear_fit, LinearFit};
use crate::velocity::Velocity;

const TOL: f64 = 1e-10;

/// `A_p = ∫ [1 − sin^p(θ/2) − cos^p(θ/2)] β(θ) dθ` and `I = ∫ θ² β(θ) dθ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PovznerConstants {
    pub p: u32,
    pub a_p: f64,
    /// Error estimate reported by the adaptive rule for `A_p`.
    pub a_p_error: f64,
    /// Closed form `(π/2)^{2−ν}/(2−ν)`.
    pub i: f64,
    /// `I` by quadrature, kept as a consistency check on the closed form.
    pub i_quadrature: f64,
    pub evaluations: usize,
}

fn check_even(p: u32, min: u32) -> Result<()> {
    if p < min || p % 2 == 1 {
        return Err(Error::Unsupported(format!("only even p ≥ {min} are supported, got {p}")));
    }
    Ok(())
}

/// `1 − sin^p(θ/2) − cos^p(θ/2)` without cancellation at small θ.
fn povzner_weight(theta: f64, p: u32) -> f64 {
    let s2 = (0.5 * theta).sin().powi(2);
    // 1 − cos^p = −expm1((p/2) ln(1 − s²))
    let one_minus_cos_p = -(0.5 * p as f64 * (-s2).ln_1p()).exp_m1();
    one_minus_cos_p - s2.powi(p as i32 / 2)
}

pub fn povzner_constants(p: u32, kernel: &AngularKernel) -> Result<PovznerConstants> {
    check_even(p, 2)?;
    let nu = kernel.nu();
    let a = integrate(|t| povzner_weight(t, p) * kernel.beta(t), 0.0, FRAC_PI_2, TOL)?;
    let i = integrate(|t| t * t * kernel.beta(t), 0.0, FRAC_PI_2, TOL)?;
    Ok(PovznerConstants {
        p,
        a_p: if p == 2 { 0.0 } else { a.value },
        a_p_error: a.abs_error,
        i: FRAC_PI_2.powf(2.0 - nu) / (2.0 - nu),
        i_quadrature: i.value,
        evaluations: a.evaluations + i.evaluations,
    })
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// `∫ ((v+v*)·Γ(v−v*, φ))^{2i} dφ/2π`: the closed form
/// `C(2i, i) [|v|²|v*|² − (v·v*)²]^i` and an equispaced φ-quadrature
/// (exact for this trigonometric polynomial).
pub fn circle_moment_identity(v: Velocity, vs: Velocity, i: u32) -> (f64, f64) {
    let bracket = v.norm2() * vs.norm2() - v.dot(&vs).powi(2);
    let closed = binomial(2 * i, i) * bracket.max(0.0).powi(i as i32);
    let w = v + vs;
    let d = v - vs;
    let quad = periodic_mean(|phi| w.dot(&gamma(d, phi)).powi(2 * i as i32), 4 * i as usize + 8);
    (closed, quad)
}

/// Evaluation of the Povzner inequality at one pair of velocities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PovznerProbe {
    pub p: u32,
    /// Left side integrated over `θ ≥ θ_min`.
    pub lhs_truncated: f64,
    /// Left side with the `θ < θ_min` part added from the `θ²` behaviour.
    pub lhs: f64,
    /// `−A_p (|v|^p + |v*|^p)`.
    pub main: f64,
    /// `|v|^{p−2}|v*|² + |v*|^{p−2}|v|²`.
    pub cross: f64,
    /// Smallest `Ã_p ≥ 0` making the inequality hold here; `None` when
    /// `cross = 0`, in which case `slack = lhs − main` must be ≤ 0.
    pub a_tilde_needed: Option<f64>,
    pub slack: f64,
}

/// φ-average of `|v'|^p + |v*'|^p − |v|^p − |v*|^p` at deviation θ.
fn mean_gain(v: Velocity, vs: Velocity, theta: f64, p: u32) -> f64 {
    let k = p as i32 / 2;
    let before = v.norm2().powi(k) + vs.norm2().powi(k);
    periodic_mean(
        |phi| {
            let (a, b) = post_collision(v, vs, theta, phi);
            a.norm2().powi(k) + b.norm2().powi(k) - before
        },
        p as usize + 4,
    )
}

/// Left side `∫∫ (|v'|^p + |v*'|^p − |v|^p − |v*|^p) β(θ) dθ dφ/2π` by
/// quadrature above `theta_min`, compared with the right side.
pub fn povzner_inequality_probe(
    kernel: &AngularKernel,
    consts: &PovznerConstants,
    v: Velocity,
    vs: Velocity,
    theta_min: f64,
) -> Result<PovznerProbe> {
    let p = consts.p;
    check_even(p, 4)?;
    if !(theta_min > 0.0 && theta_min < FRAC_PI_2) {
        return Err(Error::Domain(format!("theta_min must lie in (0, π/2), got {theta_min}")));
    }
    let scale = (v.norm2() + vs.norm2()).powi(p as i32 / 2).max(f64::MIN_POSITIVE);
    let trunc = integrate(|t| mean_gain(v, vs, t, p) * kernel.beta(t), theta_min, FRAC_PI_2, TOL * scale)?.value;
    // The averaged gain is O(θ²) at small θ.
    let nu = kernel.nu();
    let head = mean_gain(v, vs, theta_min, p) * theta_min.powf(-nu) / (2.0 - nu);
    let lhs = trunc + head;
    let main = -consts.a_p * (v.norm2().powi(p as i32 / 2) + vs.norm2().powi(p as i32 / 2));
    let cross = v.norm().powi(p as i32 - 2) * vs.norm2() + vs.norm().powi(p as i32 - 2) * v.norm2();
    let slack = lhs - main;
    let a_tilde_needed = (cross > 0.0).then(|| (slack / (consts.i * cross)).max(0.0));
    Ok(PovznerProbe { p, lhs_truncated: trunc, lhs, main, cross, a_tilde_needed, slack })
}

/// Smallest single `Ã_p` covering a set of probe pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PovznerFit {
    pub p: u32,
    pub a_tilde: f64,
    pub pairs: usize,
    /// Largest relative slack `(lhs − main)/|main|` among pairs with `cross = 0`
    /// (should not be positive beyond quadrature error).
    pub degenerate_slack: f64,
}

pub fn povzner_fit(
    kernel: &AngularKernel,
    consts: &PovznerConstants,
    pairs: &[(Velocity, Velocity)],
    theta_min: f64,
) -> Result<PovznerFit> {
    let mut a_tilde: f64 = 0.0;
    let mut degenerate_slack = f64::NEG_INFINITY;
    for &(v, vs) in pairs {
        let probe = povzner_inequality_probe(kernel, consts, v, vs, theta_min)?;
        match probe.a_tilde_needed {
            Some(a) => a_tilde = a_tilde.max(a),
            None if probe.main != 0.0 => degenerate_slack = degenerate_slack.max(probe.slack / probe.main.abs()),
            None => {}
        }
    }
    Ok(PovznerFit { p: consts.p, a_tilde, pairs: pairs.len(), degenerate_slack })
}

/// `(1/N) Σ |v^i|^p`.
pub fn moment(velocities: &[Velocity], p: u32) -> f64 {
    let k = p as i32 / 2;
    let sum: f64 = if p % 2 == 0 {
        velocities.iter().map(|v| v.norm2().powi(k)).sum()
    } else {
        velocities.iter().map(|v| v.norm().powi(p as i32)).sum()
    };
    sum / velocities.len() as f64
}

/// Time series of one empirical moment along a run.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTrack {
    pub p: u32,
    pub series: Vec<(f64, f64)>,
    /// `ℰ = (1/N) Σ |v_0^i|²`.
    pub energy: f64,
}

/// Linear trend over the final half of a series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrendCheck {
    pub fit: LinearFit,
    /// Slope more than three standard errors above zero.
    pub upward: bool,
}

/// Fit a line to the points of `series` with `t` in the final half of its
/// time span and flag a sustained upward trend.
pub fn final_half_trend(series: &[(f64, f64)]) -> Result<TrendCheck> {
    let (t0, t1) = match (series.first(), series.last()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => return Err(Error::Domain("empty series".into())),
    };
    let mid = 0.5 * (t0 + t1);
    let (x, y): (Vec<f64>, Vec<f64>) = series.iter().filter(|(t, _)| *t >= mid).copied().unzip();
    let fit = linear_fit(&x, &y)?;
    Ok(TrendCheck { fit, upward: fit.slope > 3.0 * fit.slope_stderr })
}

impl MomentTrack {
    pub fn trend(&self) -> Result<TrendCheck> {
        final_half_trend(&self.series)
    }

    pub fn max(&self) -> f64 {
        self.series.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Observer recording several moments at each observation time.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTracker {
    tracks: Vec<MomentTrack>,
}

impl MomentTracker {
    /// `initial` fixes the energy ledger `ℰ`.
    pub fn new(ps: &[u32], initial: &[Velocity]) -> Result<Self> {
        for &p in ps {
            check_even(p, 2)?;
        }
        let energy = moment(initial, 2);
        Ok(MomentTracker { tracks: ps.iter().map(|&p| MomentTrack { p, series: vec![], energy }).collect() })
    }

    pub fn observe(&mut self, t: f64, velocities: &[Velocity]) {
        for tr in &mut self.tracks {
            tr.series.push((t, moment(velocities, tr.p)));
        }
    }

    pub fn tracks(&self) -> &[MomentTrack] {
        &self.tracks
    }

    pub fn into_tracks(self) -> Vec<MomentTrack> {
        self.tracks
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kac::{self, EventStream, InitialCondition, RunOptions};
    use crate::quadrature::tanh_sinh;
    use crate::rng::{stream, StreamRole};

    fn kernel() -> AngularKernel {
        AngularKernel::new(0.5).unwrap()
    }

    #[test]
    fn a2_vanishes_and_odd_p_rejected() {
        let c = povzner_constants(2, &kernel()).unwrap();
        assert_eq!(c.a_p, 0.0);
        assert!(povzner_weight(0.7, 2).abs() < 1e-15);
        assert!(matches!(povzner_constants(3, &kernel()), Err(Error::Unsupported(_))));
        assert!(matches!(povzner_constants(0, &kernel()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn a4_matches_reduced_integrand() {
        // 1 − sin⁴ − cos⁴ = 2 sin² cos² = sin²θ / 2
        let k = kernel();
        let c = povzner_constants(4, &k).unwrap();
        let oracle = tanh_sinh(|t| 0.5 * t.sin().powi(2) * t.powf(-1.5), 0.0, FRAC_PI_2, 1e-13).unwrap();
        assert!((c.a_p - oracle).abs() < 1e-8, "{} vs {}", c.a_p, oracle);
    }

    #[test]
    fn i_closed_form_and_monotone_a_p() {
        for nu in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let k = AngularKernel::new(nu).unwrap();
            let c = povzner_constants(4, &k).unwrap();
            assert!(c.i > 0.0 && c.i.is_finite());
            assert!((c.i - c.i_quadrature).abs() < 1e-8 * c.i);
            let mut prev = 0.0;
            for p in [4, 6, 8, 10, 12] {
                let a = povzner_constants(p, &k).unwrap().a_p;
                assert!(a > prev);
                prev = a;
            }
        }
    }

    #[test]
    fn circle_moment_examples() {
        let (c, q) = circle_moment_identity(Velocity::axis(0), Velocity::axis(1), 1);
        assert!((c - 2.0).abs() < 1e-14 && (q - 2.0).abs() < 1e-12);
        let v = Velocity::new(1.0, 2.0, -0.5);
        let (c, q) = circle_moment_identity(v, v * -3.0, 2);
        assert!(c.abs() < 1e-12 && q.abs() < 1e-10);
        let (c, q) = circle_moment_identity(Velocity::new(0.3, -1.2, 0.8), Velocity::new(2.0, 0.1, -0.4), 3);
        assert!((c - q).abs() < 1e-8 * c.max(1.0));
    }

    /// φ-average of `|v'|^p` from the binomial expansion of `(x + s w·Γ)^k`.
    fn expanded_average(v: Velocity, vs: Velocity, theta: f64, p: u32) -> f64 {
        let k = p / 2;
        let c = (1.0 - theta.cos()) / 2.0;
        let s = theta.sin() / 2.0;
        let q = v.norm2() * vs.norm2() - v.dot(&vs).powi(2);
        let side = |x: f64| {
            (0..=k / 2)
                .map(|i| binomial(k, 2 * i) * x.powi((k - 2 * i) as i32) * s.powi(2 * i as i32) * binomial(2 * i, i) * q.powi(i as i32))
                .sum::<f64>()
        };
        let x = (1.0 - c) * v.norm2() + c * vs.norm2();
        let y = (1.0 - c) * vs.norm2() + c * v.norm2();
        side(x) + side(y) - v.norm2().powi(k as i32) - vs.norm2().powi(k as i32)
    }

    #[test]
    fn mean_gain_matches_expansion() {
        let v = Velocity::new(0.4, -1.0, 0.9);
        let vs = Velocity::new(-0.7, 0.2, 0.3);
        for p in [4, 6, 8] {
            for theta in [1e-3, 0.2, 1.1, FRAC_PI_2] {
                let a = mean_gain(v, vs, theta, p);
                let b = expanded_average(v, vs, theta, p);
                assert!((a - b).abs() < 1e-12, "p={p} θ={theta}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn probe_with_resting_partner_is_tight() {
        let k = kernel();
        let c = povzner_constants(4, &k).unwrap();
        for r in [0.5, 1.0, 2.0, 4.0] {
            let pr = povzner_inequality_probe(&k, &c, Velocity::new(r, 0.0, 0.0), Velocity::ZERO, 1e-4).unwrap();
            assert!(pr.a_tilde_needed.is_none());
            assert!(pr.lhs < 0.0);
            // With v* = 0 the left side is exactly −A_p |v|^p.
            assert!((pr.lhs / pr.main - 1.0).abs() < 1e-6, "{} vs {}", pr.lhs, pr.main);
        }
        let zero = povzner_inequality_probe(&k, &c, Velocity::ZERO, Velocity::ZERO, 1e-4).unwrap();
        assert_eq!(zero.lhs, 0.0);
    }

    #[test]
    fn tracker_energy_is_constant() {
        let k = kernel();
        let mut r = stream(3, 0, StreamRole::Init);
        let mut ens = kac::init(&InitialCondition::BoltzmannSphere, 200, &mut r).unwrap();
        let mut tr = MomentTracker::new(&[2, 4], ens.velocities()).unwrap();
        tr.observe(0.0, ens.velocities());
        let mut s = EventStream::new(9, 200, 20.0, k, 0.0).unwrap();
        let opts = RunOptions { observe: (1..=10).map(|i| i as f64 * 0.2).collect(), rescale_every: None };
        kac::run(&mut ens, &mut s, 2.0, &opts, |t, e| {
            tr.observe(t, e.velocities());
            Ok(())
        })
        .unwrap();
        let m2 = &tr.tracks()[0];
        for (_, m) in &m2.series {
            assert!((m - m2.energy).abs() < 1e-12);
        }
        assert_eq!(tr.tracks()[1].series.len(), 11);
    }

    #[test]
    fn trend_flags_a_ramp() {
        let ramp: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, i as f64 + 0.01 * ((i * 37) % 5) as f64)).collect();
        assert!(final_half_trend(&ramp).unwrap().upward);
        let flat: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 1.0 + 0.01 * ((i * 37) % 5) as f64)).collect();
        assert!(!final_half_trend(&flat).unwrap().upward);
    }
}
