//! Optimal transport between post-collisional circles.

use std::f64::consts::TAU;

use crate::error::{domain, Result};
use crate::geometry::{check_cutoffs, frame, AngularKernel};
use crate::velocity::Velocity;

/// Threshold on `|d × d̃|` below which two axes are treated as parallel.
const PARALLEL_TOL: f64 = 1e-12;

/// Circle with center `b`, radius `r` and unit normal `d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub b: Velocity,
    pub r: f64,
    pub d: Velocity,
}

impl Circle {
    /// Point at angle `phi` in the frame of `d`; matches `v + a(v, v*, θ, φ)`
    /// when the circle comes from [`circle_of`].
    pub fn point(&self, phi: f64) -> Velocity {
        let f = frame(self.d);
        self.b + (f.ii * phi.cos() + f.jj * phi.sin()) * self.r
    }
}

/// The circle `C(v, v*, θ)` traced by `v'` as φ varies.
pub fn circle_of(v: Velocity, vs: Velocity, theta: f64) -> Circle {
    let diff = v - vs;
    let n = diff.norm();
    let b = (v + vs) * 0.5 + diff * (0.5 * theta.cos());
    let d = if n > 0.0 { diff / n } else { Velocity::axis(0) };
    Circle { b, r: 0.5 * theta.sin() * n, d }
}

/// Squared W₂ distance between the uniform laws on two circles.
pub fn w2_circles(c1: &Circle, c2: &Circle) -> f64 {
    let dr = c1.r - c2.r;
    c1.b.dist2(&c2.b) + dr * dr + c1.r * c2.r * (1.0 - c1.d.dot(&c2.d).abs())
}

/// `R(v, u) = |v||u| + |v·u| − 2 v·u`, always nonnegative.
pub fn r_func(v: Velocity, u: Velocity) -> f64 {
    let vu = v.dot(&u);
    (v.norm() * u.norm() + vu.abs() - 2.0 * vu).max(0.0)
}

/// Angle of the unit vector `h` (orthogonal to `x`) in the frame of `x`.
fn angle_in_frame(x: Velocity, h: Velocity) -> f64 {
    let f = frame(x);
    h.dot(&f.jj).atan2(h.dot(&f.ii))
}

fn orientation(x: &Velocity) -> f64 {
    for k in 0..3 {
        let c = x.component(k);
        if c != 0.0 {
            return c.signum();
        }
    }
    0.0
}

/// Angle coupling map: with φ uniform, `(v + a(v,v*,θ,φ), u + a(u,u*,ϑ,varphi))`
/// is an optimal coupling of the two circle-uniform laws.
///
/// The common direction `h` is the normalized `d × d̃`, or `ii(d)/|d|` when the
/// axes are parallel. `φ₁` and `φ₂` are the angles of `h` in the two frames;
/// the map is `s(φ − φ₁) + φ₂` reduced to `[0, 2π)`, where `s` compares the
/// orientations of the two frames and flips when `d·d̃ < 0`.
pub fn varphi(vdiff: Velocity, udiff: Velocity, phi: f64) -> Result<f64> {
    if vdiff.is_zero() || udiff.is_zero() {
        return domain("varphi needs nonzero relative velocities");
    }
    if vdiff == udiff {
        return Ok(phi.rem_euclid(TAU));
    }
    let d = vdiff / vdiff.norm();
    let dt = udiff / udiff.norm();
    let cross = d.cross(&dt);
    let cn = cross.norm();
    let h = if cn > PARALLEL_TOL { cross / cn } else { frame(d).ii };
    let phi1 = angle_in_frame(vdiff, h);
    let phi2 = angle_in_frame(udiff, h);
    let mut s = orientation(&vdiff) * orientation(&udiff);
    if d.dot(&dt) < 0.0 {
        s = -s;
    }
    let out = if s > 0.0 { phi + (phi2 - phi1) } else { (phi1 + phi2) - phi };
    Ok(out.rem_euclid(TAU))
}

/// Closed form of `∫ (|v + a(v,v*,θ,φ) − u − a(u,u*,ϑ,varphi)|² − |v − u|²) dφ/2π`.
pub fn phi_avg_cost(
    v: Velocity,
    vs: Velocity,
    u: Velocity,
    us: Velocity,
    theta: f64,
    vartheta: f64,
) -> f64 {
    let x = v - vs;
    let y = u - us;
    let omc_t = 2.0 * (0.5 * theta).sin().powi(2);
    let omc_vt = 2.0 * (0.5 * vartheta).sin().powi(2);
    let omc_diff = 2.0 * (0.5 * (theta - vartheta)).sin().powi(2);
    let first = -((v - u) + (vs - us)).dot(&(x * (0.5 * omc_t) - y * (0.5 * omc_vt)));
    let second = -0.25 * theta.sin() * vartheta.sin() * r_func(x, y);
    let third = 0.5 * omc_diff * x.dot(&y);
    first + second + third
}

/// The z- and φ-averaged cost of coupling a `K`-cutoff collision of `(v, v*)`
/// with an `L`-cutoff collision of `(u, u*)`, together with its upper bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZPhiCost {
    pub value: f64,
    /// `Φ_0^L (|v*−u*|² − |v−u|²) + C (|v|+|v*|+|u|)² (1+L)^{1−2/ν}`.
    pub upper_bound: f64,
}

pub fn z_phi_avg_cost(
    kernel: &AngularKernel,
    v: Velocity,
    vs: Velocity,
    u: Velocity,
    us: Velocity,
    l: f64,
    k: f64,
) -> Result<ZPhiCost> {
    check_cutoffs(l, k)?;
    let phi_0l = kernel.phi_lk(0.0, l)?;
    let phi_lk = kernel.phi_lk(l, k)?;
    let head = phi_0l * (vs.dist2(&us) - v.dist2(&u));
    let value = head + phi_lk * (v - vs).dot(&(u * 2.0 - v - vs))
        - r_func(v - vs, u - us) * kernel.sin2_integral(l)?;
    let nu = kernel.nu();
    let c = kernel.c3().powi(2) * nu / (2.0 * (2.0 - nu));
    let m = v.norm() + vs.norm() + u.norm();
    let upper_bound = head + c * m * m * (1.0 + l).powf(1.0 - 2.0 / nu);
    Ok(ZPhiCost { value, upper_bound })
}
