//! Closed-form versus oracle checks, runnable from the command line.
//!
//! The oracle functions evaluate the quantities directly from the collision
//! map by quadrature or brute force, without going through the closed forms
//! they are compared with.

use std::f64::consts::{FRAC_PI_2, TAU};

use crate::assignment::{self, CostMatrix};
use crate::circle::{circle_of, phi_avg_cost, varphi, w2_circles, z_phi_avg_cost, Circle};
use crate::error::Result;
use crate::geometry::{deflection, frame, gamma, post_collision, sphere_vs_param_check, AngularKernel};
use crate::moments::{circle_moment_identity, povzner_constants, povzner_inequality_probe};
use crate::nonlinear::{MatchingTable, RefreshPolicy};
use crate::quadrature::{integrate, periodic_mean, tanh_sinh};
use crate::rng::{self, SimRng, StreamRole};
use crate::velocity::Velocity;
use crate::wasserstein::{w2_exact, PointCloud};

/// `∫ (|v + a(v,v*,θ,φ) − u − a(u,u*,ϑ,φ̃)|² − |v−u|²) dφ/2π` with the
/// re-coupled angle `φ̃`, by the periodic trapezoidal rule.
pub fn phi_quadrature_cost(v: Velocity, vs: Velocity, u: Velocity, us: Velocity, theta: f64, vartheta: f64) -> Result<f64> {
    let (x, y) = (v - vs, u - us);
    let mut err = None;
    let value = periodic_mean(
        |phi| {
            let p = if x.is_zero() || y.is_zero() {
                phi
            } else {
                varphi(x, y, phi).unwrap_or_else(|e| {
                    err = Some(e);
                    phi
                })
            };
            (v + deflection(v, vs, theta, phi)).dist2(&(u + deflection(u, us, vartheta, p))) - v.dist2(&u)
        },
        64,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// `∫_0^K` of [`phi_quadrature_cost`] with `θ = G(z)` and `ϑ = G(z) 1_{z ≤ L}`.
pub fn z_quadrature_cost(
    kernel: &AngularKernel,
    v: Velocity,
    vs: Velocity,
    u: Velocity,
    us: Velocity,
    l: f64,
    k: f64,
) -> Result<f64> {
    let mut first_err = None;
    let mut cost = |z: f64, coupled: bool| {
        let theta = kernel.g_unchecked(z);
        let vartheta = if coupled { theta } else { 0.0 };
        phi_quadrature_cost(v, vs, u, us, theta, vartheta).unwrap_or_else(|e| {
            first_err.get_or_insert(e);
            0.0
        })
    };
    let scale = 1.0 + v.norm2() + vs.norm2() + u.norm2() + us.norm2();
    let low = integrate(|z| cost(z, true), 0.0, l, 1e-11 * scale)?.value;
    let high = integrate(|z| cost(z, false), l, k, 1e-11 * scale)?.value;
    match first_err {
        Some(e) => Err(e),
        None => Ok(low + high),
    }
}

/// Squared W₂ between uniform `n`-point discretizations of two circles.
pub fn discrete_circle_w2(c1: &Circle, c2: &Circle, n: usize) -> Result<f64> {
    let pts = |c: &Circle| -> Vec<Velocity> { (0..n).map(|k| c.point((k as f64 + 0.5) * TAU / n as f64)).collect() };
    let cost = CostMatrix::squared_distances(&pts(c1), &pts(c2))?;
    Ok(assignment::solve(&cost).total / n as f64)
}

/// `∫ ((v+v*)·Γ(v−v*, φ))^{2i} dφ/2π` by adaptive quadrature.
pub fn phi_moment_quadrature(v: Velocity, vs: Velocity, i: u32) -> Result<f64> {
    let w = v + vs;
    let d = v - vs;
    let scale = (w.norm() * d.norm()).powi(2 * i as i32).max(1e-300);
    Ok(integrate(|phi| w.dot(&gamma(d, phi)).powi(2 * i as i32), 0.0, TAU, 1e-13 * scale)?.value / TAU)
}

/// Minimum of `(1/k) Σ |a^i − b^{π(i)}|²` over all permutations.
pub fn brute_force_w2(a: &[Velocity], b: &[Velocity]) -> Result<f64> {
    let cost = CostMatrix::squared_distances(a, b)?;
    Ok(assignment::brute_force(&cost).total / a.len() as f64)
}

/// Random velocity with isotropic direction and speed spread over a decade.
pub fn random_velocity(r: &mut SimRng) -> Velocity {
    let d = rng::gaussian_velocity(r, 1.0);
    let speed = 10f64.powf(rng::uniform(r) - 0.5);
    d * (speed / d.norm())
}

/// Outcome of one self-check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst discrepancy observed, in the check's own units.
    pub worst: f64,
    pub tolerance: f64,
    /// Every number the check computed, for determinism comparisons.
    pub values: Vec<f64>,
}

impl Check {
    /// All recorded values, bit for bit.
    pub fn bits(&self) -> Vec<u64> {
        self.values.iter().map(|v| v.to_bits()).collect()
    }
}

struct Acc {
    worst: f64,
    values: Vec<f64>,
    failed: bool,
}

impl Acc {
    fn new() -> Self {
        Acc { worst: 0.0, values: vec![], failed: false }
    }

    fn gap(&mut self, a: f64, b: f64, scale: f64) {
        self.values.push(a);
        self.values.push(b);
        let d = (a - b).abs() / scale;
        if d.is_nan() {
            self.failed = true;
        }
        self.worst = self.worst.max(d);
    }

    fn finish(self, name: &'static str, tolerance: f64) -> Check {
        Check { name, passed: !self.failed && self.worst <= tolerance, worst: self.worst, tolerance, values: self.values }
    }
}

fn wrap(name: &'static str, tolerance: f64, f: impl FnOnce(&mut Acc) -> Result<()>) -> Check {
    let mut acc = Acc::new();
    match f(&mut acc) {
        Ok(()) => acc.finish(name, tolerance),
        Err(_) => Check { name, passed: false, worst: f64::INFINITY, tolerance, values: acc.values },
    }
}

/// Run every check with inputs drawn from `seed`.
pub fn run_selftest(seed: u64) -> Vec<Check> {
    let kernel = AngularKernel::new(0.5).expect("valid ν");
    let mut r = rng::stream(seed, 0, StreamRole::Custom(0x5e1f));
    let mut checks = vec![];

    checks.push(wrap("frame orthogonality and oddness", 1e-14, |acc| {
        for _ in 0..200 {
            let x = random_velocity(&mut r);
            let f = frame(x);
            let g = frame(-x);
            let n2 = x.norm2();
            for q in [f.ii.dot(&x), f.jj.dot(&x), f.ii.dot(&f.jj)] {
                acc.gap(q / n2, 0.0, 1.0);
            }
            acc.gap(f.ii.norm2() / n2, 1.0, 1.0);
            acc.gap(f.jj.norm2() / n2, 1.0, 1.0);
            let odd = g.ii == -f.ii && g.jj == -f.jj;
            acc.gap(if odd { 0.0 } else { 1.0 }, 0.0, 1.0);
        }
        Ok(())
    }));

    checks.push(wrap("collision conservation", 1e-13, |acc| {
        for _ in 0..200 {
            let v = random_velocity(&mut r);
            let vs = random_velocity(&mut r);
            let theta = FRAC_PI_2 * rng::uniform(&mut r);
            let phi = TAU * rng::uniform(&mut r);
            let (a, b) = post_collision(v, vs, theta, phi);
            let e = v.norm2() + vs.norm2();
            acc.gap((a + b - v - vs).norm(), 0.0, e.sqrt());
            acc.gap(a.norm2() + b.norm2(), e, e);
        }
        Ok(())
    }));

    checks.push(wrap("G inverts H", 1e-12, |acc| {
        for k in 1..=100 {
            let theta = FRAC_PI_2 * k as f64 / 100.0;
            acc.gap(kernel.g(kernel.h(theta)?)?, theta, theta);
        }
        Ok(())
    }));

    checks.push(wrap("sphere integral vs (θ, φ) parametrization", 1e-6, |acc| {
        for _ in 0..3 {
            let v = random_velocity(&mut r);
            let vs = random_velocity(&mut r);
            let (s, p) = sphere_vs_param_check(&kernel, v, vs, |w: Velocity| w.x * w.x + 0.3 * w.y - w.z.sin(), 1e-3)?;
            acc.gap(s, p, 1.0 + p.abs());
        }
        Ok(())
    }));

    checks.push(wrap("circle W2 vs discrete assignment", 1e-3, |acc| {
        for _ in 0..10 {
            let c1 = circle_of(random_velocity(&mut r), random_velocity(&mut r), FRAC_PI_2 * rng::uniform(&mut r));
            let c2 = circle_of(random_velocity(&mut r), random_velocity(&mut r), FRAC_PI_2 * rng::uniform(&mut r));
            let exact = w2_circles(&c1, &c2);
            acc.gap(discrete_circle_w2(&c1, &c2, 256)?, exact, exact.max(1e-3));
        }
        Ok(())
    }));

    checks.push(wrap("re-coupled angle attains circle W2", 1e-10, |acc| {
        for _ in 0..50 {
            let (v, vs, u, us) = (random_velocity(&mut r), random_velocity(&mut r), random_velocity(&mut r), random_velocity(&mut r));
            let (t, vt) = (FRAC_PI_2 * rng::uniform(&mut r), FRAC_PI_2 * rng::uniform(&mut r));
            let quad = phi_quadrature_cost(v, vs, u, us, t, vt)? + v.dist2(&u);
            let exact = w2_circles(&circle_of(v, vs, t), &circle_of(u, us, vt));
            acc.gap(quad, exact, 1.0 + exact);
        }
        Ok(())
    }));

    checks.push(wrap("φ-averaged cost closed form", 1e-10, |acc| {
        for _ in 0..50 {
            let (v, vs, u, us) = (random_velocity(&mut r), random_velocity(&mut r), random_velocity(&mut r), random_velocity(&mut r));
            let (t, vt) = (FRAC_PI_2 * rng::uniform(&mut r), FRAC_PI_2 * rng::uniform(&mut r));
            let closed = phi_avg_cost(v, vs, u, us, t, vt);
            acc.gap(closed, phi_quadrature_cost(v, vs, u, us, t, vt)?, 1.0 + closed.abs());
        }
        Ok(())
    }));

    checks.push(wrap("(z, φ)-averaged cost closed form", 1e-6, |acc| {
        for _ in 0..4 {
            let (v, vs, u, us) = (random_velocity(&mut r), random_velocity(&mut r), random_velocity(&mut r), random_velocity(&mut r));
            let l = 1.0 + 10.0 * rng::uniform(&mut r);
            let k = l * (1.0 + 3.0 * rng::uniform(&mut r));
            let closed = z_phi_avg_cost(&kernel, v, vs, u, us, l, k)?.value;
            acc.gap(closed, z_quadrature_cost(&kernel, v, vs, u, us, l, k)?, 1.0 + closed.abs());
        }
        Ok(())
    }));

    checks.push(wrap("azimuthal moment identity", 1e-8, |acc| {
        for i in 1..=3 {
            for _ in 0..5 {
                let (v, vs) = (random_velocity(&mut r), random_velocity(&mut r));
                let (closed, _) = circle_moment_identity(v, vs, i);
                acc.gap(closed, phi_moment_quadrature(v, vs, i)?, 1.0 + closed);
            }
        }
        Ok(())
    }));

    checks.push(wrap("A_4 vs reduced integrand", 1e-8, |acc| {
        let a4 = povzner_constants(4, &kernel)?.a_p;
        let reduced = tanh_sinh(|t| 0.5 * t.sin().powi(2) * kernel.beta(t), 0.0, FRAC_PI_2, 1e-13)?;
        acc.gap(a4, reduced, 1.0);
        let mut prev = 0.0;
        for p in [4, 6, 8, 10, 12] {
            let a = povzner_constants(p, &kernel)?.a_p;
            acc.gap(if a > prev { 0.0 } else { 1.0 }, 0.0, 1.0);
            prev = a;
        }
        Ok(())
    }));

    checks.push(wrap("Povzner equality with a resting partner", 1e-6, |acc| {
        let c = povzner_constants(4, &kernel)?;
        for _ in 0..3 {
            let v = random_velocity(&mut r);
            let p = povzner_inequality_probe(&kernel, &c, v, Velocity::ZERO, 1e-4)?;
            acc.gap(p.lhs / p.main, 1.0, 1.0);
        }
        Ok(())
    }));

    checks.push(wrap("exact W2 vs exhaustive permutations", 0.0, |acc| {
        for k in 1..=8 {
            for _ in 0..3 {
                let a: Vec<Velocity> = (0..k).map(|_| random_velocity(&mut r)).collect();
                let b: Vec<Velocity> = (0..k).map(|_| random_velocity(&mut r)).collect();
                let exact = w2_exact(&PointCloud::new(a.clone())?, &PointCloud::new(b.clone())?)?;
                acc.gap(exact, brute_force_w2(&a, &b)?, 1.0);
            }
        }
        Ok(())
    }));

    checks.push(wrap("partner matching vs exhaustive permutations", 0.0, |acc| {
        for n in 2..=9 {
            let u: Vec<Velocity> = (0..n).map(|_| random_velocity(&mut r)).collect();
            let atoms: Vec<Velocity> = (0..n).map(|_| random_velocity(&mut r)).collect();
            let table = MatchingTable::from_atoms(&u, atoms, RefreshPolicy { every: 1 })?;
            for i in 0..n {
                let rest: Vec<Velocity> = u.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| *x).collect();
                let restricted = table.restricted_cost(&u, i)?;
                acc.gap(restricted, brute_force_w2(&rest, &table.atoms_without(i))?, 1.0);
            }
        }
        Ok(())
    }));

    checks.push(wrap("seed tree golden values", 0.0, |acc| {
        acc.gap(rng::mix64(1) as f64, 0x5692_161D_100B_05E5u64 as f64, 1.0);
        acc.gap(rng::seed_for(42, 7, StreamRole::Init) as f64, 0xC59A_16AB_CF7B_E97Eu64 as f64, 1.0);
        Ok(())
    }));

    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_and_repeat_bitwise() {
        let a = run_selftest(1);
        for c in &a {
            assert!(c.passed, "{}: worst {} > {}", c.name, c.worst, c.tolerance);
        }
        let b = run_selftest(1);
        assert_eq!(a.iter().map(Check::bits).collect::<Vec<_>>(), b.iter().map(Check::bits).collect::<Vec<_>>());
    }

    #[test]
    fn discrete_circles_converge() {
        let c1 = Circle { b: Velocity::ZERO, r: 1.0, d: Velocity::axis(0) };
        let c2 = Circle { b: Velocity::new(0.0, 0.5, 0.0), r: 2.0, d: Velocity::axis(2) };
        let exact = w2_circles(&c1, &c2);
        let coarse = (discrete_circle_w2(&c1, &c2, 64).unwrap() - exact).abs();
        let fine = (discrete_circle_w2(&c1, &c2, 256).unwrap() - exact).abs();
        assert!(fine < coarse.max(1e-12));
    }
}
