//! Wasserstein metrology on equal-size point clouds under the normalized
//! metric `|x|_k² = (1/k) Σ |x^i|²`.

use crate::assignment::{self, CostMatrix};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng, StreamRole};
pub use crate::stats::Estimate;
use crate::velocity::Velocity;

/// Largest cloud size solved exactly unless the approximate path is enabled.
pub const DEFAULT_CAP: usize = 4096;

/// Uniformly weighted point cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Velocity>,
}

impl PointCloud {
    pub fn new(points: Vec<Velocity>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("a point cloud needs at least one point".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("point cloud contains non-finite values".into()));
        }
        Ok(PointCloud { points })
    }

    pub fn points(&self) -> &[Velocity] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Velocity> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean(&self) -> Velocity {
        mean(&self.points)
    }

    /// `(1/k) Σ |x^i|²`.
    pub fn second_moment(&self) -> f64 {
        self.points.iter().map(|p| p.norm2()).sum::<f64>() / self.len() as f64
    }
}

pub(crate) fn mean(points: &[Velocity]) -> Velocity {
    points.iter().sum::<Velocity>() / points.len() as f64
}

/// Solver options for [`w2`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct W2Options {
    pub cap: usize,
    /// Allow the entropic solver above the cap.
    pub approximate: bool,
    pub sinkhorn_epsilon: f64,
}

impl Default for W2Options {
    fn default() -> Self {
        W2Options { cap: DEFAULT_CAP, approximate: false, sinkhorn_epsilon: 1e-2 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct W2Result {
    pub value: f64,
    /// Optimal permutation (`a[i]` is matched with `b[permutation[i]]`);
    /// empty for approximate solves.
    pub permutation: Vec<usize>,
    pub approximate: bool,
}

pub fn w2(a: &[Velocity], b: &[Velocity], opts: &W2Options) -> Result<W2Result> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { expected: a.len(), got: b.len() });
    }
    let k = a.len();
    if k == 0 {
        return Err(Error::Domain("empty point clouds".into()));
    }
    let cost = CostMatrix::squared_distances(a, b)?;
    if k > opts.cap {
        if !opts.approximate {
            return Err(Error::Unsupported(format!(
                "exact W2 limited to {} points, got {k}; enable the approximate solver",
                opts.cap
            )));
        }
        let v = assignment::sinkhorn_cost(&cost, opts.sinkhorn_epsilon, 2000, 1e-9)?;
        return Ok(W2Result { value: v / k as f64, permutation: vec![], approximate: true });
    }
    let sol = assignment::solve(&cost);
    Ok(W2Result { value: sol.total / k as f64, permutation: sol.row_to_col, approximate: false })
}

/// Exact squared W₂ between two equal-size clouds.
pub fn w2_exact(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(w2(a.points(), b.points(), &W2Options::default())?.value)
}

/// Estimate of `ε_n(μ)` together with the surrogate size used.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsEstimate {
    pub estimate: Estimate,
    pub n: usize,
    /// Size `m` of the independent μ-sample standing in for μ. The estimator
    /// `E W₂²(Z̄_n, Ȳ_m)` is biased upwards: it is at least `ε_n(μ)`.
    pub surrogate_m: usize,
}

/// Squared W₂ between the empirical measure of `points` and an independent
/// `ratio·n`-sample of μ. The cloud is repeated `ratio` times so that both
/// sides have equal size.
pub fn surrogate_w2<S>(points: &[Velocity], sampler: &mut S, ratio: usize, rng: &mut SimRng) -> Result<f64>
where
    S: FnMut(&mut SimRng) -> Velocity,
{
    if ratio == 0 {
        return Err(Error::Domain("surrogate ratio must be at least 1".into()));
    }
    let m = points.len() * ratio;
    let fresh: Vec<Velocity> = (0..m).map(|_| sampler(rng)).collect();
    let repeated: Vec<Velocity> = points.iter().cycle().take(m).cloned().collect();
    Ok(w2(&repeated, &fresh, &W2Options::default())?.value)
}

/// Default surrogate ratio `m/n`.
pub const DEFAULT_SURROGATE_RATIO: usize = 16;

/// Monte-Carlo estimate of `ε_n(μ) = E W₂²(μ, Z̄_n)`.
///
/// Replica `r` draws the n-sample from stream `(seed, r, Init)` and the
/// surrogate from stream `(seed, r, Surrogate)`.
pub fn eps_n<S>(mut sampler: S, n: usize, reps: usize, ratio: usize, seed: u64) -> Result<EpsEstimate>
where
    S: FnMut(&mut SimRng) -> Velocity,
{
    if n == 0 || reps == 0 {
        return Err(Error::Domain("eps_n needs n ≥ 1 and at least one replica".into()));
    }
    let mut values = Vec::with_capacity(reps);
    for r in 0..reps as u64 {
        let mut init = rng::stream(seed, r, StreamRole::Init);
        let sample: Vec<Velocity> = (0..n).map(|_| sampler(&mut init)).collect();
        let mut sur = rng::stream(seed, r, StreamRole::Surrogate);
        values.push(surrogate_w2(&sample, &mut sampler, ratio, &mut sur)?);
    }
    Ok(EpsEstimate { estimate: Estimate::from_samples(&values), n, surrogate_m: n * ratio })
}

/// `m = k n + ℓ` with `0 ≤ ℓ ≤ n − 1`.
pub fn block_decompose(m: usize, n: usize) -> Result<(usize, usize)> {
    if n == 0 || n > m {
        return Err(Error::Domain(format!("block size must satisfy 1 ≤ n ≤ m, got n = {n}, m = {m}")));
    }
    Ok((m / n, m % n))
}

/// Both sides of the block bound
/// `½ E W₂²(X̄, μ) ≤ (kn/m)(D_n + ε_n(μ)) + (ℓ/m)(D_ℓ + ε_ℓ(μ))`,
/// where `D_j` stands for `W₂²(law^j(X), μ^{⊗j})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockBound {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub lhs: Estimate,
    pub rhs: f64,
    pub rhs_stderr: f64,
    /// `lhs ≤ rhs + 3` combined standard errors.
    pub holds: bool,
}

/// Law-level inputs of the block bound that cannot be estimated from a single
/// cloud. Callers pass upper estimates obtained from an explicit coupling
/// (zero when X is iid from μ).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LawTerms {
    pub d_n: f64,
    pub d_n_stderr: f64,
    pub d_l: f64,
    pub d_l_stderr: f64,
}

pub fn block_bound_check<X, S>(
    mut sample_x: X,
    mut mu_sampler: S,
    m: usize,
    n: usize,
    law: LawTerms,
    reps: usize,
    seed: u64,
) -> Result<BlockBound>
where
    X: FnMut(u64) -> Result<Vec<Velocity>>,
    S: FnMut(&mut SimRng) -> Velocity,
{
    let (k, l) = block_decompose(m, n)?;
    if reps < 2 {
        return Err(Error::Domain("block bound check needs at least two replicas".into()));
    }
    let mut lhs_vals = Vec::with_capacity(reps);
    for r in 0..reps as u64 {
        let x = sample_x(r)?;
        if x.len() != m {
            return Err(Error::SizeMismatch { expected: m, got: x.len() });
        }
        let mut sur = rng::stream(seed, r, StreamRole::Surrogate);
        lhs_vals.push(0.5 * surrogate_w2(&x, &mut mu_sampler, 1, &mut sur)?);
    }
    let lhs = Estimate::from_samples(&lhs_vals);
    let eps_seed = rng::split(seed, 0xB10C);
    let en = eps_n(&mut mu_sampler, n, reps, 1, eps_seed)?.estimate;
    let mut rhs = (k * n) as f64 / m as f64 * (law.d_n + en.mean);
    let mut var = ((k * n) as f64 / m as f64).powi(2) * (en.stderr.powi(2) + law.d_n_stderr.powi(2));
    if l > 0 {
        let el = eps_n(&mut mu_sampler, l, reps, 1, rng::split(eps_seed, 1))?.estimate;
        let w = l as f64 / m as f64;
        rhs += w * (law.d_l + el.mean);
        var += w * w * (el.stderr.powi(2) + law.d_l_stderr.powi(2));
    }
    let rhs_stderr = var.sqrt();
    let slack = 3.0 * (lhs.stderr.powi(2) + var).sqrt();
    Ok(BlockBound { m, n, k, l, lhs, rhs, rhs_stderr, holds: lhs.mean <= rhs + slack })
}

/// Result of projecting a cloud onto the Boltzmann sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardizedCloud {
    pub points: Vec<Velocity>,
    /// Removed mean `M`.
    pub m: Velocity,
    /// Removed scale `S`.
    pub s: f64,
    /// `(1/N) Σ |X^i − Y^i|² = (S − 1)² + |M|²`.
    pub cost: f64,
}

/// Fixed cloud on the Boltzmann sphere used when a cloud has no spread:
/// antipodal pairs along the coordinate axes, plus one equilateral triple in
/// the first coordinate plane when `n` is odd.
pub fn sphere_substitute(n: usize) -> Vec<Velocity> {
    let mut out = Vec::with_capacity(n);
    let mut pairs = n / 2;
    if n % 2 == 1 {
        if n == 1 {
            // A single point cannot have mean zero and unit energy.
            return vec![Velocity::ZERO];
        }
        let h = 3f64.sqrt() / 2.0;
        out.push(Velocity::new(1.0, 0.0, 0.0));
        out.push(Velocity::new(-0.5, h, 0.0));
        out.push(Velocity::new(-0.5, -h, 0.0));
        pairs -= 1;
    }
    for p in 0..pairs {
        let e = Velocity::axis(p % 3);
        out.push(e);
        out.push(-e);
    }
    out
}

pub fn standardize(x: &PointCloud) -> StandardizedCloud {
    let pts = x.points();
    let n = pts.len() as f64;
    let m = mean(pts);
    let s = (pts.iter().map(|p| p.dist2(&m)).sum::<f64>() / n).sqrt();
    if s > 0.0 {
        let points = pts.iter().map(|p| (*p - m) / s).collect();
        StandardizedCloud { points, m, s, cost: (s - 1.0).powi(2) + m.norm2() }
    } else {
        StandardizedCloud { points: sphere_substitute(pts.len()), m, s: 0.0, cost: 1.0 + m.norm2() }
    }
}

/// Uniform sample on the Boltzmann sphere: a standardized iid Gaussian cloud.
pub fn sample_boltzmann_sphere(n: usize, rng: &mut SimRng) -> Result<PointCloud> {
    if n < 2 {
        return Err(Error::Domain(format!("the Boltzmann sphere needs N ≥ 2, got {n}")));
    }
    let g = PointCloud::new(rng::gamma_sample(rng, n))?;
    PointCloud::new(standardize(&g).points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gamma_velocity, stream};

    fn v(x: f64, y: f64, z: f64) -> Velocity {
        Velocity::new(x, y, z)
    }

    #[test]
    fn w2_trivial_cases() {
        let a = PointCloud::new(vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0)]).unwrap();
        let b = PointCloud::new(vec![v(1.0, 0.0, 0.0), v(0.0, 0.0, 0.0)]).unwrap();
        assert_eq!(w2_exact(&a, &a).unwrap(), 0.0);
        assert_eq!(w2_exact(&a, &b).unwrap(), 0.0);
        let c = PointCloud::new(vec![v(0.0, 0.0, 0.0)]).unwrap();
        assert!(matches!(w2_exact(&a, &c), Err(Error::SizeMismatch { .. })));
        assert!(PointCloud::new(vec![]).is_err());
    }

    #[test]
    fn cap_is_enforced() {
        let a = vec![Velocity::ZERO; 5];
        let opts = W2Options { cap: 4, ..Default::default() };
        assert!(matches!(w2(&a, &a, &opts), Err(Error::Unsupported(_))));
        let approx = W2Options { cap: 4, approximate: true, ..Default::default() };
        let r = w2(&a, &a, &approx).unwrap();
        assert!(r.approximate);
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn eps_n_point_mass_and_single_sample() {
        let e = eps_n(|_| v(1.0, 2.0, 3.0), 10, 3, 4, 1).unwrap();
        assert_eq!(e.estimate.mean, 0.0);
        let e1 = eps_n(gamma_velocity, 1, 4000, 16, 2).unwrap();
        assert_eq!(e1.surrogate_m, 16);
        assert!((e1.estimate.mean - 2.0).abs() < 3.0 * e1.estimate.stderr, "{:?}", e1);
    }

    #[test]
    fn block_decomposition() {
        assert_eq!(block_decompose(7, 3).unwrap(), (2, 1));
        assert_eq!(block_decompose(9, 3).unwrap(), (3, 0));
        assert!(block_decompose(3, 4).is_err());
        assert!(block_decompose(3, 0).is_err());
    }

    #[test]
    fn block_bound_iid() {
        let m = 30;
        let b = block_bound_check(
            |r| Ok(rng::gamma_sample(&mut stream(3, r, StreamRole::Init), m)),
            gamma_velocity,
            m,
            m,
            LawTerms::default(),
            40,
            5,
        )
        .unwrap();
        assert!(b.holds, "{b:?}");
        assert_eq!((b.k, b.l), (1, 0));
    }

    #[test]
    fn standardize_examples() {
        let x = PointCloud::new(vec![v(1.0, 0.0, 0.0), v(-1.0, 0.0, 0.0)]).unwrap();
        let s = standardize(&x);
        assert_eq!(s.points, x.points());
        assert_eq!((s.m, s.s, s.cost), (Velocity::ZERO, 1.0, 0.0));
        let y = PointCloud::new(vec![v(2.0, 0.0, 0.0), v(0.0, 0.0, 0.0)]).unwrap();
        let s = standardize(&y);
        assert_eq!(s.points, vec![v(1.0, 0.0, 0.0), v(-1.0, 0.0, 0.0)]);
        assert_eq!((s.m, s.s, s.cost), (v(1.0, 0.0, 0.0), 1.0, 1.0));
    }

    #[test]
    fn standardize_degenerate_uses_sphere_cloud() {
        for n in 2..9 {
            let x = PointCloud::new(vec![v(0.5, 0.0, 0.0); n]).unwrap();
            let s = standardize(&x);
            assert_eq!(s.s, 0.0);
            assert!((s.cost - 1.25).abs() < 1e-15);
            let z = PointCloud::new(s.points.clone()).unwrap();
            assert!(z.mean().norm() < 1e-15);
            assert!((z.second_moment() - 1.0).abs() < 1e-15);
            let direct: f64 =
                x.points().iter().zip(&s.points).map(|(a, b)| a.dist2(b)).sum::<f64>() / n as f64;
            assert!((direct - s.cost).abs() < 1e-14);
        }
    }

    #[test]
    fn boltzmann_sphere_normalization() {
        let mut rng = stream(4, 0, StreamRole::Init);
        for n in [2, 3, 10, 257] {
            let c = sample_boltzmann_sphere(n, &mut rng).unwrap();
            assert!(c.mean().norm() < 1e-12);
            assert!((c.second_moment() - 1.0).abs() < 1e-12);
        }
        assert!(sample_boltzmann_sphere(1, &mut rng).is_err());
    }
}
