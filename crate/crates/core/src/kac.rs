//! Event-driven simulation of the cutoff Kac particle system.
//!
//! Collisions arrive as a Poisson process of total rate `N K / 2`. Each event
//! carries a uniform level `z ∈ [0, K]`, the deviation angle `θ = G(z)`, an
//! ordered pair of distinct particles chosen uniformly, and a uniform azimuth.

use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::circle::varphi;
use crate::error::{Error, Result};
use crate::geometry::{post_collision, AngularKernel};
use crate::rng::{self, SimRng, StreamRole};
use crate::velocity::Velocity;
use crate::wasserstein::{self, PointCloud};

use std::f64::consts::TAU;

/// Mean momentum and mean energy, `(1/N) Σ v` and `(1/N) Σ |v|²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ledger {
    pub momentum: Velocity,
    pub energy: f64,
}

impl Ledger {
    pub fn of(velocities: &[Velocity]) -> Ledger {
        let n = velocities.len() as f64;
        Ledger {
            momentum: velocities.iter().sum::<Velocity>() / n,
            energy: velocities.iter().map(|v| v.norm2()).sum::<f64>() / n,
        }
    }
}

/// Relative drift of the conserved quantities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Drift {
    /// `|P_t − P_0| / sqrt(E_0)`.
    pub momentum: f64,
    /// `|E_t − E_0| / E_0`.
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    velocities: Vec<Velocity>,
    t: f64,
    ledger: Ledger,
}

impl Ensemble {
    pub fn new(velocities: Vec<Velocity>, t: f64) -> Result<Self> {
        if velocities.len() < 2 {
            return Err(Error::Domain(format!("an ensemble needs N ≥ 2, got {}", velocities.len())));
        }
        if velocities.iter().any(|v| !v.is_finite()) || !(t >= 0.0) {
            return Err(Error::Domain("ensemble state must be finite with t ≥ 0".into()));
        }
        let ledger = Ledger::of(&velocities);
        Ok(Ensemble { velocities, t, ledger })
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn velocities(&self) -> &[Velocity] {
        &self.velocities
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn ledger(&self) -> Ledger {
        self.ledger
    }

    pub fn current(&self) -> Ledger {
        Ledger::of(&self.velocities)
    }

    pub fn drift(&self) -> Drift {
        let now = self.current();
        let scale = self.ledger.energy.max(f64::MIN_POSITIVE);
        Drift {
            momentum: (now.momentum - self.ledger.momentum).norm() / scale.sqrt(),
            energy: (now.energy - self.ledger.energy).abs() / scale,
        }
    }

    /// Mean squared distance `(1/N) Σ |v^i − w^i|²` to another ensemble.
    pub fn mean_sq_distance(&self, other: &Ensemble) -> Result<f64> {
        mean_sq_distance(&self.velocities, &other.velocities)
    }

    /// Affine correction restoring the recorded mean momentum and energy.
    pub fn rescale_to_ledger(&mut self) {
        let now = self.current();
        let s_now = (now.energy - now.momentum.norm2()).max(0.0).sqrt();
        let s_ref = (self.ledger.energy - self.ledger.momentum.norm2()).max(0.0).sqrt();
        if s_now == 0.0 {
            return;
        }
        let f = s_ref / s_now;
        for v in &mut self.velocities {
            *v = self.ledger.momentum + (*v - now.momentum) * f;
        }
    }

    pub(crate) fn velocities_mut(&mut self) -> &mut [Velocity] {
        &mut self.velocities
    }

    pub(crate) fn set_t(&mut self, t: f64) {
        self.t = t;
    }

    pub fn into_velocities(self) -> Vec<Velocity> {
        self.velocities
    }
}

pub fn mean_sq_distance(a: &[Velocity], b: &[Velocity]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { expected: a.len(), got: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x.dist2(y)).sum::<f64>() / a.len() as f64)
}

/// Single-particle law used for iid initial data; every density is scaled to
/// total variance 1 (per-coordinate variance 1/3) and mean 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Density {
    Gaussian,
    /// Isotropic multivariate Student-t with the given degrees of freedom
    /// (must exceed 2).
    StudentT(f64),
}

impl Density {
    pub fn sample(&self, rng: &mut SimRng) -> Velocity {
        match *self {
            Density::Gaussian => rng::gamma_velocity(rng),
            Density::StudentT(dof) => {
                let z = rng::gaussian_velocity(rng, 1.0);
                let mut w = 0.0;
                // χ²_dof as a sum of squares for integer dof, Gamma otherwise.
                if dof.fract() == 0.0 {
                    for _ in 0..dof as usize {
                        let g: f64 = StandardNormal.sample(rng);
                        w += g * g;
                    }
                } else {
                    w = rand_distr::Gamma::new(0.5 * dof, 2.0).expect("valid shape").sample(rng);
                }
                let scale = ((dof - 2.0) / (3.0 * dof)).sqrt();
                z * (scale * (dof / w).sqrt())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Density::Gaussian => Ok(()),
            Density::StudentT(dof) if dof > 2.0 && dof.is_finite() => Ok(()),
            Density::StudentT(dof) => {
                Err(Error::Domain(format!("Student-t needs dof > 2 for finite energy, got {dof}")))
            }
        }
    }
}

/// Initial-condition descriptor.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    Iid(Density),
    /// iid draws projected onto the Boltzmann sphere.
    IidOnSphere(Density),
    /// Uniform on the Boltzmann sphere (standardized Gaussian cloud).
    BoltzmannSphere,
    /// Half the particles at `e₁`, half at `−e₁` (odd `N`: one at the origin
    /// before standardization).
    TwoPoint,
    Explicit(Vec<Velocity>),
}

impl InitialCondition {
    /// Parse `gaussian`, `sphere`, `two-point`, `student-t:DOF`,
    /// `gaussian-sphere`, `student-t-sphere:DOF`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let dof = |rest: &str| -> Result<f64> {
            rest.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad degrees of freedom in initial condition '{s}'")))
        };
        match s {
            "gaussian" => Ok(InitialCondition::Iid(Density::Gaussian)),
            "gaussian-sphere" => Ok(InitialCondition::IidOnSphere(Density::Gaussian)),
            "sphere" => Ok(InitialCondition::BoltzmannSphere),
            "two-point" => Ok(InitialCondition::TwoPoint),
            _ => {
                if let Some(rest) = s.strip_prefix("student-t-sphere:") {
                    Ok(InitialCondition::IidOnSphere(Density::StudentT(dof(rest)?)))
                } else if let Some(rest) = s.strip_prefix("student-t:") {
                    Ok(InitialCondition::Iid(Density::StudentT(dof(rest)?)))
                } else {
                    Err(Error::Config(format!("unknown initial condition '{s}'")))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            InitialCondition::Iid(Density::Gaussian) => "gaussian".into(),
            InitialCondition::IidOnSphere(Density::Gaussian) => "gaussian-sphere".into(),
            InitialCondition::Iid(Density::StudentT(d)) => format!("student-t:{d}"),
            InitialCondition::IidOnSphere(Density::StudentT(d)) => format!("student-t-sphere:{d}"),
            InitialCondition::BoltzmannSphere => "sphere".into(),
            InitialCondition::TwoPoint => "two-point".into(),
            InitialCondition::Explicit(_) => "explicit".into(),
        }
    }
}

/// Draw an initial ensemble at `t = 0`.
pub fn init(ic: &InitialCondition, n: usize, rng: &mut SimRng) -> Result<Ensemble> {
    if n < 2 {
        return Err(Error::Domain(format!("an ensemble needs N ≥ 2, got {n}")));
    }
    let velocities = match ic {
        InitialCondition::Iid(d) => {
            d.validate()?;
            (0..n).map(|_| d.sample(rng)).collect()
        }
        InitialCondition::IidOnSphere(d) => {
            d.validate()?;
            let raw = PointCloud::new((0..n).map(|_| d.sample(rng)).collect())?;
            wasserstein::standardize(&raw).points
        }
        InitialCondition::BoltzmannSphere => wasserstein::sample_boltzmann_sphere(n, rng)?.into_points(),
        InitialCondition::TwoPoint => {
            let e = Velocity::axis(0);
            let raw: Vec<Velocity> = (0..n)
                .map(|i| if i + 1 == n && n % 2 == 1 { Velocity::ZERO } else if i % 2 == 0 { e } else { -e })
                .collect();
            wasserstein::standardize(&PointCloud::new(raw)?).points
        }
        InitialCondition::Explicit(list) => {
            if list.len() != n {
                return Err(Error::SizeMismatch { expected: n, got: list.len() });
            }
            list.clone()
        }
    };
    Ensemble::new(velocities, 0.0)
}

/// A single collision: particles `i` and `j` collide at time `t` with level
/// `z`, deviation `θ = G(z)` and azimuth `φ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionEvent {
    pub t: f64,
    pub i: usize,
    pub j: usize,
    pub z: f64,
    pub theta: f64,
    pub phi: f64,
}

/// Seeded Poisson stream of collision events for an `n`-particle system at
/// cutoff `k`.
#[derive(Clone, Debug)]
pub struct EventStream {
    rng: SimRng,
    seed: u64,
    n: usize,
    k: f64,
    rate: f64,
    kernel: AngularKernel,
    clock: f64,
    pending: Option<CollisionEvent>,
    emitted: u64,
}

impl EventStream {
    pub fn new(seed: u64, n: usize, k: f64, kernel: AngularKernel, t0: f64) -> Result<Self> {
        if !k.is_finite() {
            return Err(Error::Unsupported("the uncut system has infinite event rate; use a finite K".into()));
        }
        if !(k > 0.0) {
            return Err(Error::Domain(format!("cutoff K must be positive, got {k}")));
        }
        if n < 2 {
            return Err(Error::Domain(format!("an ensemble needs N ≥ 2, got {n}")));
        }
        Ok(EventStream {
            rng: rng::rng_from_seed(seed),
            seed,
            n,
            k,
            rate: 0.5 * n as f64 * k,
            kernel,
            clock: t0,
            pending: None,
            emitted: 0,
        })
    }

    /// Stream for replica `replicate` of a run with master seed `master`.
    pub fn for_replica(master: u64, replicate: u64, n: usize, k: f64, kernel: AngularKernel) -> Result<Self> {
        EventStream::new(rng::seed_for(master, replicate, StreamRole::Events), n, k, kernel, 0.0)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kernel(&self) -> AngularKernel {
        self.kernel
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    fn draw(&mut self) -> CollisionEvent {
        let gap: f64 = Exp1.sample(&mut self.rng);
        self.clock += gap / self.rate;
        let z = self.k * rng::uniform(&mut self.rng);
        let i = rng::index(&mut self.rng, self.n);
        let mut j = rng::index(&mut self.rng, self.n - 1);
        if j >= i {
            j += 1;
        }
        let phi = TAU * rng::uniform(&mut self.rng);
        CollisionEvent { t: self.clock, i, j, z, theta: self.kernel.g_unchecked(z), phi }
    }

    pub fn peek(&mut self) -> &CollisionEvent {
        if self.pending.is_none() {
            self.pending = Some(self.draw());
        }
        self.pending.as_ref().expect("pending event")
    }

    pub fn next_event(&mut self) -> CollisionEvent {
        self.emitted += 1;
        match self.pending.take() {
            Some(ev) => ev,
            None => self.draw(),
        }
    }

    /// Next event if it happens no later than `t`; otherwise the event stays
    /// pending for the next call.
    pub fn next_until(&mut self, t: f64) -> Option<CollisionEvent> {
        if self.peek().t <= t {
            Some(self.next_event())
        } else {
            None
        }
    }
}

impl Iterator for EventStream {
    type Item = CollisionEvent;

    fn next(&mut self) -> Option<CollisionEvent> {
        Some(self.next_event())
    }
}

fn check_pair(ev: &CollisionEvent, n: usize) -> Result<()> {
    for idx in [ev.i, ev.j] {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, len: n });
        }
    }
    if ev.i == ev.j {
        return Err(Error::Domain("a collision needs two distinct particles".into()));
    }
    Ok(())
}

/// Apply one collision in place.
pub fn step(ens: &mut Ensemble, ev: &CollisionEvent) -> Result<()> {
    check_pair(ev, ens.len())?;
    if ev.t < ens.t {
        return Err(Error::Domain(format!("event at t = {} precedes ensemble time {}", ev.t, ens.t)));
    }
    let (a, b) = post_collision(ens.velocities[ev.i], ens.velocities[ev.j], ev.theta, ev.phi);
    ens.velocities[ev.i] = a;
    ens.velocities[ev.j] = b;
    ens.t = ev.t;
    Ok(())
}

/// Options for [`run`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Sorted observation times in `[ens.t, t_end]`.
    pub observe: Vec<f64>,
    /// Restore the ledger every this many events (off when `None`).
    pub rescale_every: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunStats {
    pub events: u64,
}

fn check_observation_times(obs: &[f64], t0: f64, t_end: f64) -> Result<()> {
    if !(t_end >= t0) {
        return Err(Error::Domain(format!("t_end = {t_end} precedes the start time {t0}")));
    }
    let mut prev = t0;
    for &t in obs {
        if !(t >= prev && t <= t_end) {
            return Err(Error::Domain(format!("observation times must be sorted within [{t0}, {t_end}]")));
        }
        prev = t;
    }
    Ok(())
}

/// Advance `ens` to `t_end`, applying every event of `stream` in time order.
/// `observer` is called at each observation time with the state at that time.
pub fn run<F>(ens: &mut Ensemble, stream: &mut EventStream, t_end: f64, opts: &RunOptions, mut observer: F) -> Result<RunStats>
where
    F: FnMut(f64, &Ensemble) -> Result<()>,
{
    check_observation_times(&opts.observe, ens.t, t_end)?;
    if stream.n != ens.len() {
        return Err(Error::SizeMismatch { expected: ens.len(), got: stream.n });
    }
    let mut events = 0u64;
    let targets = opts.observe.iter().map(|&t| (t, true)).chain(std::iter::once((t_end, false)));
    for (target, notify) in targets {
        while let Some(ev) = stream.next_until(target) {
            step(ens, &ev)?;
            events += 1;
            if let Some(every) = opts.rescale_every {
                if every > 0 && events % every == 0 {
                    ens.rescale_to_ledger();
                }
            }
        }
        ens.t = target;
        if notify {
            observer(target, ens)?;
        }
    }
    Ok(RunStats { events })
}

/// Terminal states and distance series of the shared-noise pair of systems at
/// cutoffs `k1 < k2`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledCutoffRun {
    pub low: Ensemble,
    pub high: Ensemble,
    /// `(t, (1/N) Σ |V^{K1,i}_t − V^{K2,i}_t|²)` at each observation time.
    pub distance: Vec<(f64, f64)>,
    pub events: u64,
}

/// Run two copies of the system from the same state, driven by the same
/// event stream at the larger cutoff `k2` (the stream's own `K`). Events with
/// `z > k1` leave the `k1` copy untouched; otherwise it collides with the
/// re-coupled azimuth `varphi(vdiff_{K2}, vdiff_{K1}, φ)`.
pub fn run_coupled_cutoffs(
    low0: &Ensemble,
    high0: &Ensemble,
    k1: f64,
    stream: &mut EventStream,
    t_end: f64,
    observe: &[f64],
) -> Result<CoupledCutoffRun> {
    if low0.velocities != high0.velocities || low0.t != high0.t {
        return Err(Error::Domain("coupled cutoff runs must start from the same state".into()));
    }
    if !(k1 > 0.0 && k1 <= stream.k) {
        return Err(Error::Domain(format!("need 0 < K1 ≤ K2, got K1 = {k1}, K2 = {}", stream.k)));
    }
    check_observation_times(observe, low0.t, t_end)?;
    let mut low = low0.clone();
    let mut high = high0.clone();
    let mut distance = Vec::with_capacity(observe.len());
    let mut events = 0u64;
    let targets = observe.iter().map(|&t| (t, true)).chain(std::iter::once((t_end, false)));
    for (target, record) in targets {
        while let Some(ev) = stream.next_until(target) {
            check_pair(&ev, high.len())?;
            let hd = high.velocities[ev.i] - high.velocities[ev.j];
            let ld = low.velocities[ev.i] - low.velocities[ev.j];
            if ev.z <= k1 && !ld.is_zero() {
                let phi = if hd.is_zero() { ev.phi } else { varphi(hd, ld, ev.phi)? };
                step(&mut low, &CollisionEvent { phi, ..ev })?;
            }
            low.t = ev.t;
            step(&mut high, &ev)?;
            events += 1;
        }
        low.t = target;
        high.t = target;
        if record {
            distance.push((target, low.mean_sq_distance(&high)?));
        }
    }
    Ok(CoupledCutoffRun { low, high, distance, events })
}
