//! Collision kinematics for Maxwell molecules.
//!
//! Post-collisional velocities are parametrized by a deviation angle θ and an
//! azimuth φ on the circle orthogonal to the relative velocity. The azimuth is
//! measured in the frame `(x/|x|, ii(x)/|x|, jj(x)/|x|)` built by [`frame`].
//! Both `ii` and `jj` are odd and positively homogeneous, so they are
//! homogeneous for every real scaling, which is what makes the collision
//! increment antisymmetric in its two arguments.

use std::f64::consts::{FRAC_PI_2, TAU};

use crate::error::{domain, Error, Result};
use crate::quadrature;
use crate::velocity::Velocity;

/// Absolute tolerance used by every closed-form-by-quadrature constant.
pub const QUAD_TOL: f64 = 1e-10;

/// Orthogonal frame attached to a vector `x`; both legs have length `|x|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub ii: Velocity,
    pub jj: Velocity,
}

fn sign_of_first_nonzero(x: &Velocity) -> f64 {
    for k in 0..3 {
        let c = x.component(k);
        if c != 0.0 {
            return c.signum();
        }
    }
    0.0
}

/// The frame `(ii(x), jj(x))`.
///
/// The helper axis is the coordinate axis least aligned with `x` (lowest index
/// on ties). `jj` carries the sign of the first nonzero component of `x`,
/// which makes it odd; the orientation of `(x, ii, jj)` therefore flips
/// between hemispheres. `frame(0) = (0, 0)`.
pub fn frame(x: Velocity) -> Frame {
    let norm = x.norm();
    if norm == 0.0 {
        return Frame { ii: Velocity::ZERO, jj: Velocity::ZERO };
    }
    let mut axis = 0;
    let mut best = x.x.abs();
    for k in 1..3 {
        let c = x.component(k).abs();
        if c < best {
            best = c;
            axis = k;
        }
    }
    let w = x.cross(&Velocity::axis(axis));
    let ii = w * (norm / w.norm());
    let jj = (x / norm).cross(&ii) * sign_of_first_nonzero(&x);
    Frame { ii, jj }
}

/// `Γ(x, φ) = cos φ · ii(x) + sin φ · jj(x)`.
pub fn gamma(x: Velocity, phi: f64) -> Velocity {
    let f = frame(x);
    f.ii * phi.cos() + f.jj * phi.sin()
}

/// Collision increment `a(v, v*, θ, φ)`; `v' = v + a`, `v*' = v* − a`.
pub fn deflection(v: Velocity, vs: Velocity, theta: f64, phi: f64) -> Velocity {
    let diff = v - vs;
    if diff.is_zero() {
        return Velocity::ZERO;
    }
    let one_minus_cos = 2.0 * (0.5 * theta).sin().powi(2);
    diff * (-0.5 * one_minus_cos) + gamma(diff, phi) * (0.5 * theta.sin())
}

/// Post-collisional pair `(v + a, v* − a)`. Momentum and energy are conserved
/// exactly in real arithmetic.
pub fn post_collision(v: Velocity, vs: Velocity, theta: f64, phi: f64) -> (Velocity, Velocity) {
    let a = deflection(v, vs, theta, phi);
    (v + a, vs - a)
}

/// Angular cross-section `β(θ) = θ^{−1−ν}` on `(0, π/2]`, with its tail
/// function `H(θ) = ∫_θ^{π/2} β` and inverse `G = H^{−1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngularKernel {
    nu: f64,
}

impl AngularKernel {
    pub const THETA_MAX: f64 = FRAC_PI_2;

    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu < 1.0) {
            return domain(format!("nu must lie in (0, 1), got {nu}"));
        }
        Ok(AngularKernel { nu })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    #[inline]
    pub fn beta(&self, theta: f64) -> f64 {
        theta.powf(-1.0 - self.nu)
    }

    /// `(π/2)^{−ν}`.
    #[inline]
    fn offset(&self) -> f64 {
        FRAC_PI_2.powf(-self.nu)
    }

    pub fn h(&self, theta: f64) -> Result<f64> {
        if !(theta > 0.0 && theta <= FRAC_PI_2) {
            return domain(format!("H is defined on (0, π/2], got θ = {theta}"));
        }
        Ok((theta.powf(-self.nu) - self.offset()) / self.nu)
    }

    pub fn g(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return domain(format!("G is defined on [0, ∞], got z = {z}"));
        }
        Ok(self.g_unchecked(z))
    }

    /// `G(z)` without the domain check; `G(∞) = 0`.
    #[inline]
    pub fn g_unchecked(&self, z: f64) -> f64 {
        if z.is_infinite() {
            return 0.0;
        }
        (self.nu * z + self.offset()).powf(-1.0 / self.nu)
    }

    /// Lower constant `c2` in `c2 (1+z)^{−1/ν} ≤ G(z) ≤ c3 (1+z)^{−1/ν}`.
    ///
    /// `G(z)(1+z)^{1/ν} = ((1+z)/(νz + (π/2)^{−ν}))^{1/ν}` is monotone in `z`,
    /// so the extremes are its values at `z = 0` and `z → ∞`.
    pub fn c2(&self) -> f64 {
        (1.0 / self.offset()).min(1.0 / self.nu).powf(1.0 / self.nu)
    }

    pub fn c3(&self) -> f64 {
        (1.0 / self.offset()).max(1.0 / self.nu).powf(1.0 / self.nu)
    }

    /// `Φ_L^K = ∫_L^K (1 − cos G(z))/2 dz`, computed in the θ variable.
    pub fn phi_lk(&self, l: f64, k: f64) -> Result<f64> {
        check_cutoffs(l, k)?;
        if l == k {
            return Ok(0.0);
        }
        let lo = self.g_unchecked(k);
        let hi = self.g_unchecked(l);
        let nu = self.nu;
        let r = quadrature::integrate(
            |t| (0.5 * t).sin().powi(2) * t.powf(-1.0 - nu),
            lo,
            hi,
            QUAD_TOL,
        )?;
        Ok(r.value.max(0.0))
    }

    /// `∫_0^L sin² G(z) / 4 dz`.
    pub fn sin2_integral(&self, l: f64) -> Result<f64> {
        if !(l >= 0.0) {
            return domain(format!("cutoff must be nonnegative, got {l}"));
        }
        if l == 0.0 {
            return Ok(0.0);
        }
        let lo = self.g_unchecked(l);
        let nu = self.nu;
        Ok(quadrature::integrate(
            |t| 0.25 * t.sin().powi(2) * t.powf(-1.0 - nu),
            lo,
            FRAC_PI_2,
            QUAD_TOL,
        )?
        .value)
    }

    /// `I = ∫_0^{π/2} θ² β(θ) dθ`, in closed form.
    pub fn theta2_moment(&self) -> f64 {
        FRAC_PI_2.powf(2.0 - self.nu) / (2.0 - self.nu)
    }

    /// Explicit `C` in `Φ_L^∞ ≤ C (1+L)^{1−2/ν} / 2`-type tail bounds:
    /// `∫_L^∞ G²/4 dz ≤ c3²/4 · (1+L)^{1−2/ν} / (2/ν − 1)`.
    pub fn tail_bound(&self, l: f64) -> f64 {
        let c3 = self.c3();
        0.25 * c3 * c3 * (1.0 + l).powf(1.0 - 2.0 / self.nu) / (2.0 / self.nu - 1.0)
    }
}

pub(crate) fn check_cutoffs(l: f64, k: f64) -> Result<()> {
    if !(l >= 0.0) || k.is_nan() {
        return domain(format!("cutoffs must be nonnegative, got L = {l}, K = {k}"));
    }
    if l > k {
        return domain(format!("cutoffs must satisfy L ≤ K, got L = {l}, K = {k}"));
    }
    Ok(())
}

/// Particle-system cutoff `K` and nonlinear-process cutoff `L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffSpec {
    pub k: f64,
    pub l: f64,
}

impl CutoffSpec {
    pub fn new(k: f64, l: f64) -> Result<Self> {
        if !(l > 0.0) {
            return Err(Error::Domain(format!("L must be positive, got {l}")));
        }
        if !(k >= l) {
            return Err(Error::Domain(format!("coupled runs need K ≥ L, got K = {k}, L = {l}")));
        }
        Ok(CutoffSpec { k, l })
    }
}

/// Both sides of the sphere/parametrization identity for a test function,
/// restricted to deviation angles `θ ≥ theta_min`.
///
/// The first value integrates over the sphere using the textbook
/// post-collisional formula `v' = (v+v*)/2 + |v−v*|σ/2` in an orthonormal
/// frame unrelated to [`frame`]; the second integrates `Φ(v + a(v,v*,θ,φ))`
/// over `(θ, φ)`. Both carry the weight `β(θ) dθ dφ`.
pub fn sphere_vs_param_check<F: Fn(Velocity) -> f64>(
    kernel: &AngularKernel,
    v: Velocity,
    vs: Velocity,
    test_fn: F,
    theta_min: f64,
) -> Result<(f64, f64)> {
    if !(theta_min > 0.0 && theta_min < FRAC_PI_2) {
        return domain(format!("theta_min must lie in (0, π/2), got {theta_min}"));
    }
    const AZIMUTH_NODES: usize = 64;
    let base = test_fn(v);
    let diff = v - vs;
    let rel = diff.norm();
    let mid = (v + vs) * 0.5;
    let (d, e1, e2) = householder_basis(diff);

    let sphere = quadrature::integrate(
        |theta| {
            let (s, c) = theta.sin_cos();
            let ring = quadrature::periodic_mean(
                |psi| {
                    let sigma = d * c + (e1 * psi.cos() + e2 * psi.sin()) * s;
                    test_fn(mid + sigma * (0.5 * rel)) - base
                },
                AZIMUTH_NODES,
            );
            TAU * ring * kernel.beta(theta)
        },
        theta_min,
        FRAC_PI_2,
        QUAD_TOL,
    )?
    .value;

    let param = quadrature::integrate(
        |theta| {
            let ring = quadrature::periodic_mean(
                |phi| test_fn(v + deflection(v, vs, theta, phi)) - base,
                AZIMUTH_NODES,
            );
            TAU * ring * kernel.beta(theta)
        },
        theta_min,
        FRAC_PI_2,
        QUAD_TOL,
    )?
    .value;
    Ok((sphere, param))
}

/// Orthonormal basis `(d, e1, e2)` with `d = x/|x|`, built by a Householder
/// reflection; any fixed unit vector is used for `x = 0`.
fn householder_basis(x: Velocity) -> (Velocity, Velocity, Velocity) {
    let n = x.norm();
    let d = if n > 0.0 { x / n } else { Velocity::axis(2) };
    // Reflection mapping e_z to d (or to -d when d is close to -e_z).
    let s = if d.z >= 0.0 { 1.0 } else { -1.0 };
    let h = 1.0 / (1.0 + s * d.z);
    let e1 = Velocity::new(1.0 - h * d.x * d.x, -h * d.x * d.y, -s * d.x);
    let e2 = Velocity::new(-h * d.x * d.y, 1.0 - h * d.y * d.y, -s * d.y);
    (d, e1, e2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: Velocity, b: Velocity, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn frame_of_x_axis() {
        let f = frame(Velocity::new(2.0, 0.0, 0.0));
        assert_eq!(f.ii, Velocity::new(0.0, 0.0, 2.0));
        assert_eq!(f.jj, Velocity::new(0.0, -2.0, 0.0));
        let g = frame(Velocity::new(-2.0, 0.0, 0.0));
        assert_eq!(g.ii, Velocity::new(0.0, 0.0, -2.0));
        assert_eq!(g.jj, -f.jj);
    }

    #[test]
    fn frame_of_zero_is_degenerate() {
        let f = frame(Velocity::ZERO);
        assert_eq!(f.ii, Velocity::ZERO);
        assert_eq!(f.jj, Velocity::ZERO);
    }

    #[test]
    fn gamma_special_angles() {
        let x = Velocity::new(2.0, 0.0, 0.0);
        let f = frame(x);
        assert_eq!(gamma(x, 0.0), f.ii);
        assert!(close(gamma(x, PI / 2.0), f.jj, 1e-15));
        assert!(close(gamma(x, PI), Velocity::new(0.0, 0.0, -2.0), 1e-15));
        assert_eq!(gamma(Velocity::ZERO, 1.0), Velocity::ZERO);
    }

    #[test]
    fn deflection_examples() {
        let v = Velocity::new(1.0, 0.0, 0.0);
        let vs = Velocity::new(-1.0, 0.0, 0.0);
        assert_eq!(deflection(v, vs, 0.0, 1.3), Velocity::ZERO);
        assert_eq!(deflection(v, v, 1.0, 0.3), Velocity::ZERO);
        let a = deflection(v, vs, FRAC_PI_2, 0.0);
        assert!(close(a, Velocity::new(-1.0, 0.0, 1.0), 1e-15), "{a}");
        let (vp, vsp) = post_collision(v, vs, FRAC_PI_2, 0.0);
        assert!(close(vp, Velocity::new(0.0, 0.0, 1.0), 1e-15));
        assert!(close(vsp, Velocity::new(0.0, 0.0, -1.0), 1e-15));
        assert!((vp.norm2() + vsp.norm2() - 2.0).abs() < 1e-15);
        assert_eq!(post_collision(v, vs, 0.0, 2.0), (v, vs));
    }

    #[test]
    fn kernel_rejects_bad_nu() {
        assert!(AngularKernel::new(0.0).is_err());
        assert!(AngularKernel::new(1.0).is_err());
        assert!(AngularKernel::new(1.5).is_err());
        assert!(AngularKernel::new(0.5).is_ok());
    }

    #[test]
    fn h_and_g() {
        let k = AngularKernel::new(0.5).unwrap();
        assert!((k.g(0.0).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!(k.h(0.0).is_err());
        assert!(k.h(-1.0).is_err());
        assert!(k.h(2.0).is_err());
        assert!(k.g(-1.0).is_err());
        // Oracle: quadrature of ∫_1^{π/2} x^{-3/2} dx.
        let oracle = quadrature::tanh_sinh(|x| x.powf(-1.5), 1.0, FRAC_PI_2, 1e-14).unwrap();
        let h1 = k.h(1.0).unwrap();
        assert!((h1 - oracle).abs() < 1e-12);
        assert!((h1 - 0.40421).abs() < 1e-4);
        assert!((k.g(h1).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(k.g(f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn g_bounds_at_z_100() {
        let k = AngularKernel::new(0.5).unwrap();
        let z: f64 = 100.0;
        let g = k.g(z).unwrap();
        let w = (1.0 + z).powi(-2);
        assert!(k.c2() * w <= g && g <= k.c3() * w);
        assert!((k.c2() - FRAC_PI_2).abs() < 1e-12);
        assert!((k.c3() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn phi_lk_basic() {
        let k = AngularKernel::new(0.5).unwrap();
        assert_eq!(k.phi_lk(3.0, 3.0).unwrap(), 0.0);
        assert!(k.phi_lk(4.0, 3.0).is_err());
        let total = k.phi_lk(0.0, f64::INFINITY).unwrap();
        let oracle = quadrature::tanh_sinh(
            |t| (1.0 - t.cos()) / 2.0 * t.powf(-1.5),
            0.0,
            FRAC_PI_2,
            1e-10,
        )
        .unwrap();
        assert!((total - oracle).abs() < 1e-8, "{total} vs {oracle}");
        let a = k.phi_lk(0.0, 7.0).unwrap();
        let b = k.phi_lk(0.0, 2.5).unwrap();
        let c = k.phi_lk(2.5, 7.0).unwrap();
        assert!((a - b - c).abs() < 1e-10);
    }

    #[test]
    fn cutoff_spec_validation() {
        assert!(CutoffSpec::new(20.0, 10.0).is_ok());
        assert!(CutoffSpec::new(f64::INFINITY, 10.0).is_ok());
        assert!(CutoffSpec::new(5.0, 10.0).is_err());
        assert!(CutoffSpec::new(5.0, 0.0).is_err());
    }

    #[test]
    fn sphere_identity_energy_example() {
        let k = AngularKernel::new(0.5).unwrap();
        let v = Velocity::new(1.0, 0.0, 0.0);
        let vs = Velocity::ZERO;
        let tmin = 1e-3;
        let (sphere, param) = sphere_vs_param_check(&k, v, vs, |w| w.norm2(), tmin).unwrap();
        // φ-average of |v'|² − |v|² is (1 − cos θ)/2 · (|v*|² − |v|²).
        let oracle = TAU
            * quadrature::tanh_sinh(
                |t| (1.0 - t.cos()) / 2.0 * (vs.norm2() - v.norm2()) * k.beta(t),
                tmin,
                FRAC_PI_2,
                1e-13,
            )
            .unwrap();
        assert!((sphere - oracle).abs() < 1e-8, "{sphere} vs {oracle}");
        assert!((param - oracle).abs() < 1e-8, "{param} vs {oracle}");
    }

    #[test]
    fn sphere_identity_constant_function() {
        let k = AngularKernel::new(0.3).unwrap();
        let (a, b) = sphere_vs_param_check(
            &k,
            Velocity::new(0.2, -1.0, 0.4),
            Velocity::new(1.0, 0.5, 0.0),
            |_| 3.0,
            0.01,
        )
        .unwrap();
        assert_eq!(a, 0.0);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn householder_basis_is_orthonormal() {
        for x in [
            Velocity::new(0.3, -0.2, 0.9),
            Velocity::new(0.0, 0.0, -1.0),
            Velocity::new(1.0, 0.0, 0.0),
        ] {
            let (d, e1, e2) = householder_basis(x);
            for (a, b) in [(d, e1), (d, e2), (e1, e2)] {
                assert!(a.dot(&b).abs() < 1e-14);
            }
            for a in [d, e1, e2] {
                assert!((a.norm() - 1.0).abs() < 1e-14);
            }
        }
    }
}
