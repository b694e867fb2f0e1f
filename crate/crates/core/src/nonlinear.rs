//! Cutoff nonlinear processes coupled with the particle system.
//!
//! `U^i` jumps at the same instants as `V^i` (only for levels `z ≤ L`), but
//! its partner is not another particle: it is a sample `Π^i(U, j)` of the
//! reference law, optimally matched to the partner index `j`. The angle is
//! re-coupled through [`varphi`] so that the two post-collisional circles are
//! transported optimally onto each other.
//!
//! `Π` is realized with one optimal assignment `σ` between the `N` entries of
//! `U` and `N` reference atoms: `Π^i(U, j) = atom[σ(j)]`. Restricted to the
//! indices `j ≠ i`, `σ` is an optimal assignment between `x̄^i` and the atoms
//! other than `σ(i)`, so a single solve serves every `i`.

use rand_distr::{Distribution, Exp1};

use crate::assignment::{self, CostMatrix};
use crate::circle::varphi;
use crate::error::{Error, Result};
use crate::geometry::{deflection, AngularKernel};
use crate::kac::{self, CollisionEvent, Ensemble, EventStream, InitialCondition};
use crate::rng::{self, SimRng, StreamRole};
use crate::velocity::Velocity;

use std::f64::consts::TAU;

/// How reference atoms are produced.
#[derive(Clone, Debug, PartialEq)]
pub enum FlowMode {
    /// Fresh iid draws from γ; exact because γ is invariant.
    StationaryGaussian,
    /// An independent `m`-particle system at cutoff `L` standing in for
    /// `f_t^L`; approximate.
    SelfConsistent { m: usize },
    /// The current particle configuration `V` itself.
    Empirical,
    /// Self-similar BKW reference; not available.
    Bkw,
}

impl FlowMode {
    pub fn label(&self) -> String {
        match self {
            FlowMode::StationaryGaussian => "stationary-gaussian".into(),
            FlowMode::SelfConsistent { m } => format!("self-consistent:{m}"),
            FlowMode::Empirical => "empirical".into(),
            FlowMode::Bkw => "bkw".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "stationary-gaussian" => Ok(FlowMode::StationaryGaussian),
            "empirical" => Ok(FlowMode::Empirical),
            "bkw" => Ok(FlowMode::Bkw),
            other => match other.strip_prefix("self-consistent:") {
                Some(m) => m
                    .parse()
                    .map(|m| FlowMode::SelfConsistent { m })
                    .map_err(|_| Error::Config(format!("bad ensemble size in reference mode '{other}'"))),
                None => Err(Error::Config(format!("unknown reference mode '{other}'"))),
            },
        }
    }

    /// Whether the reference law is exact (as opposed to a finite-size stand-in).
    pub fn is_exact(&self) -> bool {
        matches!(self, FlowMode::StationaryGaussian)
    }
}

/// Source of reference atoms for `Π`.
#[derive(Clone, Debug)]
pub struct ReferenceFlow {
    mode: FlowMode,
    rng: SimRng,
    aux: Option<(Ensemble, EventStream)>,
}

impl ReferenceFlow {
    /// `seed` keys every random stream the flow uses; they are all distinct
    /// from the streams `seed` would key for the particle system itself.
    pub fn new(mode: FlowMode, seed: u64, ic: &InitialCondition, l: f64, kernel: AngularKernel) -> Result<Self> {
        let base = rng::split(seed, StreamRole::Reference.code());
        let rng = rng::rng_from_seed(rng::split(base, 0));
        let aux = match &mode {
            FlowMode::Bkw => {
                return Err(Error::Unsupported(
                    "the BKW reference needs a relaxation rate for the cutoff kernel, which is not available".into(),
                ))
            }
            FlowMode::SelfConsistent { m } => {
                let mut init_rng = rng::rng_from_seed(rng::split(base, 1));
                let ens = kac::init(ic, *m, &mut init_rng)?;
                let stream = EventStream::new(rng::split(base, 2), *m, l, kernel, 0.0)?;
                Some((ens, stream))
            }
            _ => None,
        };
        Ok(ReferenceFlow { mode, rng, aux })
    }

    pub fn stationary_gaussian(seed: u64) -> Self {
        let base = rng::split(seed, StreamRole::Reference.code());
        ReferenceFlow { mode: FlowMode::StationaryGaussian, rng: rng::rng_from_seed(rng::split(base, 0)), aux: None }
    }

    pub fn mode(&self) -> &FlowMode {
        &self.mode
    }

    /// `count` reference atoms at time `t`; `v` is the particle state.
    pub fn atoms(&mut self, count: usize, t: f64, v: &Ensemble) -> Result<Vec<Velocity>> {
        match &self.mode {
            FlowMode::StationaryGaussian => Ok(rng::gamma_sample(&mut self.rng, count)),
            FlowMode::Empirical => {
                if v.len() != count {
                    return Err(Error::SizeMismatch { expected: count, got: v.len() });
                }
                Ok(v.velocities().to_vec())
            }
            FlowMode::SelfConsistent { m } => {
                let m = *m;
                if m < count {
                    return Err(Error::Config(format!("self-consistent reference needs M ≥ {count}, got {m}")));
                }
                let (ens, stream) = self.aux.as_mut().expect("self-consistent state");
                if t > ens.t() {
                    kac::run(ens, stream, t, &kac::RunOptions::default(), |_, _| Ok(()))?;
                }
                let atoms = ens.velocities();
                if m == count {
                    return Ok(atoms.to_vec());
                }
                let picked = rand::seq::index::sample(&mut self.rng, m, count);
                Ok(picked.iter().map(|k| atoms[k]).collect())
            }
            FlowMode::Bkw => Err(Error::Unsupported("BKW reference".into())),
        }
    }
}

/// How often the matching is recomputed, counted in U-collision events.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RefreshPolicy {
    pub every: u64,
}

impl RefreshPolicy {
    /// `R = 1` for small systems, `R = N` otherwise.
    pub fn default_for(n: usize) -> Self {
        RefreshPolicy { every: if n <= 256 { 1 } else { n as u64 } }
    }
}

/// Optimal assignment between the U-ensemble and the current reference atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchingTable {
    atoms: Vec<Velocity>,
    sigma: Vec<usize>,
    mean_cost: f64,
    uses_since_refresh: u64,
    policy: RefreshPolicy,
    refreshes: u64,
}

impl MatchingTable {
    pub fn new(policy: RefreshPolicy) -> Result<Self> {
        if policy.every == 0 {
            return Err(Error::Config("matching refresh interval must be at least 1".into()));
        }
        Ok(MatchingTable { atoms: vec![], sigma: vec![], mean_cost: 0.0, uses_since_refresh: 0, policy, refreshes: 0 })
    }

    /// Table built directly from `u` and an explicit set of atoms.
    pub fn from_atoms(u: &[Velocity], atoms: Vec<Velocity>, policy: RefreshPolicy) -> Result<Self> {
        let mut t = MatchingTable::new(policy)?;
        t.install(u, atoms)?;
        Ok(t)
    }

    fn install(&mut self, u: &[Velocity], atoms: Vec<Velocity>) -> Result<()> {
        let cost = CostMatrix::squared_distances(u, &atoms)?;
        let sol = assignment::solve(&cost);
        self.mean_cost = sol.total / u.len() as f64;
        self.sigma = sol.row_to_col;
        self.atoms = atoms;
        self.uses_since_refresh = 0;
        self.refreshes += 1;
        Ok(())
    }

    pub fn refresh(&mut self, u: &[Velocity], flow: &mut ReferenceFlow, t: f64, v: &Ensemble) -> Result<()> {
        let atoms = flow.atoms(u.len(), t, v)?;
        self.install(u, atoms)
    }

    pub fn needs_refresh(&self) -> bool {
        self.sigma.is_empty() || self.uses_since_refresh >= self.policy.every
    }

    fn note_use(&mut self) {
        self.uses_since_refresh += 1;
    }

    pub fn refreshes(&self) -> u64 {
        self.refreshes
    }

    /// Mean squared cost of the full assignment at the last refresh.
    pub fn mean_cost(&self) -> f64 {
        self.mean_cost
    }

    pub fn atoms(&self) -> &[Velocity] {
        &self.atoms
    }

    /// `Π^i(U, j)`: the atom matched to `U^j` in the coupling seen by `U^i`.
    pub fn pi(&self, i: usize, j: usize) -> Result<Velocity> {
        let n = self.sigma.len();
        if n == 0 {
            return Err(Error::Domain("matching table has not been built".into()));
        }
        for idx in [i, j] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, len: n });
            }
        }
        if i == j {
            return Err(Error::Domain("Π^i(U, j) needs j ≠ i".into()));
        }
        Ok(self.atoms[self.sigma[j]])
    }

    /// `(1/(N−1)) Σ_{j≠i} |U^j − Π^i(U, j)|²`, the coupling cost seen by `U^i`.
    pub fn restricted_cost(&self, u: &[Velocity], i: usize) -> Result<f64> {
        let mut total = 0.0;
        for (j, uj) in u.iter().enumerate() {
            if j != i {
                total += uj.dist2(&self.pi(i, j)?);
            }
        }
        Ok(total / (u.len() - 1) as f64)
    }

    /// Reference atoms available to `U^i` (all but the one matched to `U^i`).
    pub fn atoms_without(&self, i: usize) -> Vec<Velocity> {
        let skip = self.sigma[i];
        self.atoms.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, a)| *a).collect()
    }
}

/// Joint state of the particle system `V` and the nonlinear processes `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledState {
    pub v: Ensemble,
    pub u: Ensemble,
    pub l: f64,
}

impl CoupledState {
    pub fn new(v: Ensemble, u: Ensemble, l: f64) -> Result<Self> {
        if v.len() != u.len() {
            return Err(Error::SizeMismatch { expected: v.len(), got: u.len() });
        }
        if !(l > 0.0) {
            return Err(Error::Domain(format!("L must be positive, got {l}")));
        }
        Ok(CoupledState { v, u, l })
    }

    /// `(1/N) Σ |V^i − U^i|²`.
    pub fn distance(&self) -> f64 {
        kac::mean_sq_distance(self.v.velocities(), self.u.velocities()).expect("equal sizes")
    }
}

/// One-sided jump of `U^m` produced by an event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UJump {
    pub m: usize,
    pub partner: usize,
    /// Reference sample `Π^m(U, partner)`.
    pub pi: Velocity,
    /// Pre-jump value of `U^m`.
    pub u_pre: Velocity,
    /// Angle used by `U^m`.
    pub phi: f64,
}

fn coupled_angle(vd: Velocity, ud: Velocity, phi: f64) -> Result<f64> {
    if vd.is_zero() || ud.is_zero() {
        Ok(phi)
    } else {
        varphi(vd, ud, phi)
    }
}

/// Apply one event to `(V, U)`. Returns the U-jumps (empty when `z > L`).
pub fn coupled_step(
    st: &mut CoupledState,
    ev: &CollisionEvent,
    table: &mut MatchingTable,
    flow: &mut ReferenceFlow,
) -> Result<Vec<UJump>> {
    let mut jumps = Vec::new();
    if ev.z <= st.l {
        if table.needs_refresh() {
            table.refresh(st.u.velocities(), flow, ev.t, &st.v)?;
        }
        table.note_use();
        let vs = st.v.velocities();
        let us = st.u.velocities();
        for (m, p) in [(ev.i, ev.j), (ev.j, ev.i)] {
            let pi = table.pi(m, p)?;
            let phi = coupled_angle(vs[m] - vs[p], us[m] - pi, ev.phi)?;
            jumps.push(UJump { m, partner: p, pi, u_pre: us[m], phi });
        }
    }
    kac::step(&mut st.v, ev)?;
    let u = st.u.velocities_mut();
    for jump in &jumps {
        u[jump.m] = jump.u_pre + deflection(jump.u_pre, jump.pi, ev.theta, jump.phi);
    }
    st.u.set_t(ev.t);
    Ok(jumps)
}

/// Output of [`run_coupled`].
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledRun {
    /// `(t, (1/N) Σ |V^i_t − U^i_t|²)`, starting with the initial value.
    pub distance: Vec<(f64, f64)>,
    pub state: CoupledState,
    pub events: u64,
    pub refreshes: u64,
}

fn check_observe(observe: &[f64], t0: f64, t_end: f64) -> Result<()> {
    if !(t_end >= t0) {
        return Err(Error::Domain(format!("t_end = {t_end} precedes the start time {t0}")));
    }
    let mut prev = t0;
    for &t in observe {
        if !(t >= prev && t <= t_end) {
            return Err(Error::Domain(format!("observation times must be sorted within [{t0}, {t_end}]")));
        }
        prev = t;
    }
    Ok(())
}

/// Integrate the coupled system to `t_end` along the events of `stream`
/// (whose cutoff `K` must be at least `L`).
pub fn run_coupled(
    mut st: CoupledState,
    flow: &mut ReferenceFlow,
    stream: &mut EventStream,
    policy: RefreshPolicy,
    t_end: f64,
    observe: &[f64],
) -> Result<CoupledRun> {
    if stream.k() < st.l {
        return Err(Error::Domain(format!("need K ≥ L, got K = {}, L = {}", stream.k(), st.l)));
    }
    if stream.n() != st.v.len() {
        return Err(Error::SizeMismatch { expected: st.v.len(), got: stream.n() });
    }
    check_observe(observe, st.v.t(), t_end)?;
    let mut table = MatchingTable::new(policy)?;
    let mut distance = vec![(st.v.t(), st.distance())];
    let mut events = 0;
    let targets = observe.iter().map(|&t| (t, true)).chain(std::iter::once((t_end, false)));
    for (target, record) in targets {
        while let Some(ev) = stream.next_until(target) {
            coupled_step(&mut st, &ev, &mut table, flow)?;
            events += 1;
        }
        st.v.set_t(target);
        st.u.set_t(target);
        if record {
            distance.push((target, st.distance()));
        }
    }
    Ok(CoupledRun { distance, state: st, events, refreshes: table.refreshes() })
}

/// Poisson stream of compensating collisions between tagged processes:
/// ordered pairs in `0..k`, levels uniform on `[0, L]`, total rate
/// `L k (k−1) / (2 (N−1))`.
#[derive(Clone, Debug)]
pub struct AuxStream {
    rng: SimRng,
    k: usize,
    l: f64,
    rate: f64,
    kernel: AngularKernel,
    clock: f64,
    pending: Option<CollisionEvent>,
}

impl AuxStream {
    pub fn new(seed: u64, n: usize, k: usize, l: f64, kernel: AngularKernel, t0: f64) -> Result<Self> {
        if k == 0 || k > n || n < 2 {
            return Err(Error::Domain(format!("tagged count must satisfy 1 ≤ k ≤ N, got k = {k}, N = {n}")));
        }
        let rate = l * (k * (k - 1)) as f64 / (2.0 * (n - 1) as f64);
        Ok(AuxStream { rng: rng::rng_from_seed(seed), k, l, rate, kernel, clock: t0, pending: None })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    fn draw(&mut self) -> CollisionEvent {
        let gap: f64 = Exp1.sample(&mut self.rng);
        self.clock += gap / self.rate;
        let z = self.l * rng::uniform(&mut self.rng);
        let i = rng::index(&mut self.rng, self.k);
        let mut j = rng::index(&mut self.rng, self.k - 1);
        if j >= i {
            j += 1;
        }
        let phi = TAU * rng::uniform(&mut self.rng);
        CollisionEvent { t: self.clock, i, j, z, theta: self.kernel.g_unchecked(z), phi }
    }

    /// Time of the next event (infinite when the rate is zero).
    pub fn peek_time(&mut self) -> f64 {
        if self.rate == 0.0 {
            return f64::INFINITY;
        }
        if self.pending.is_none() {
            self.pending = Some(self.draw());
        }
        self.pending.as_ref().expect("pending").t
    }

    pub fn next_until(&mut self, t: f64) -> Option<CollisionEvent> {
        if self.peek_time() <= t {
            self.pending.take()
        } else {
            None
        }
    }
}

/// Output of [`run_decoupled`]: for each tagged count `k`, the series
/// `(t, (1/k) Σ_{j<k} |U^j_t − Ũ^j_t|²)`, starting with the initial value.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoupledRun {
    pub ks: Vec<usize>,
    pub distance: Vec<Vec<(f64, f64)>>,
    /// Final `Ũ^1..Ũ^k` for each entry of `ks`.
    pub tildes: Vec<Vec<Velocity>>,
    pub coupled: CoupledRun,
    pub aux_events: u64,
}

fn tilde_jump(tilde: &mut Velocity, u_pre: Velocity, pi: Velocity, theta: f64, phi_u: f64) -> Result<()> {
    let td = *tilde - pi;
    if td.is_zero() {
        return Ok(());
    }
    let phi = coupled_angle(u_pre - pi, td, phi_u)?;
    *tilde += deflection(*tilde, pi, theta, phi);
    Ok(())
}

/// Simulate `(V, U)` together with decoupled copies `Ũ^1..Ũ^k` for every
/// `k` in `ks`, all driven by the same events.
///
/// For an event on the ordered pair `(a, b)`, the tagged copy `Ũ^a` always
/// shares the jump of `U^a`; `Ũ^b` shares the jump of `U^b` only when `a` is
/// untagged. The jumps lost that way are replaced by the independent
/// [`AuxStream`], on which `Ũ^b` jumps alone with partner `Π^b(U, a)`.
/// One auxiliary stream is drawn for the largest `k` and thinned for the
/// others, which keeps every tagged set consistent with its own rate.
#[allow(clippy::too_many_arguments)]
pub fn run_decoupled(
    mut st: CoupledState,
    flow: &mut ReferenceFlow,
    stream: &mut EventStream,
    aux_seed: u64,
    ks: &[usize],
    policy: RefreshPolicy,
    t_end: f64,
    observe: &[f64],
) -> Result<DecoupledRun> {
    let n = st.u.len();
    if stream.k() < st.l {
        return Err(Error::Domain(format!("need K ≥ L, got K = {}, L = {}", stream.k(), st.l)));
    }
    if stream.n() != n {
        return Err(Error::SizeMismatch { expected: n, got: stream.n() });
    }
    let kmax = *ks.iter().max().ok_or_else(|| Error::Domain("no tagged counts given".into()))?;
    if ks.iter().any(|&k| k == 0 || k > n) {
        return Err(Error::Domain(format!("tagged counts must lie in 1..={n}")));
    }
    check_observe(observe, st.v.t(), t_end)?;
    let mut aux = AuxStream::new(aux_seed, n, kmax, st.l, stream.kernel(), st.v.t())?;
    let mut table = MatchingTable::new(policy)?;
    let mut tildes: Vec<Vec<Velocity>> = ks.iter().map(|&k| st.u.velocities()[..k].to_vec()).collect();
    let measure = |u: &[Velocity], tildes: &[Vec<Velocity>]| -> Vec<f64> {
        tildes
            .iter()
            .map(|tl| tl.iter().zip(u).map(|(a, b)| a.dist2(b)).sum::<f64>() / tl.len() as f64)
            .collect()
    };
    let t0 = st.v.t();
    let mut distance: Vec<Vec<(f64, f64)>> =
        measure(st.u.velocities(), &tildes).into_iter().map(|d| vec![(t0, d)]).collect();
    let mut coupled_distance = vec![(t0, st.distance())];
    let mut events = 0;
    let mut aux_events = 0;
    let targets = observe.iter().map(|&t| (t, true)).chain(std::iter::once((t_end, false)));
    for (target, record) in targets {
        loop {
            let main_t = stream.peek().t;
            let aux_t = aux.peek_time();
            if main_t.min(aux_t) > target {
                break;
            }
            if main_t <= aux_t {
                let ev = stream.next_event();
                let jumps = coupled_step(&mut st, &ev, &mut table, flow)?;
                events += 1;
                if let [ja, jb] = jumps[..] {
                    for (tl, &k) in tildes.iter_mut().zip(ks) {
                        if ja.m < k {
                            tilde_jump(&mut tl[ja.m], ja.u_pre, ja.pi, ev.theta, ja.phi)?;
                        }
                        if jb.m < k && ja.m >= k {
                            tilde_jump(&mut tl[jb.m], jb.u_pre, jb.pi, ev.theta, jb.phi)?;
                        }
                    }
                }
            } else {
                let ev = aux.next_until(target).expect("aux event due");
                aux_events += 1;
                if table.needs_refresh() {
                    table.refresh(st.u.velocities(), flow, ev.t, &st.v)?;
                }
                let (a, b) = (ev.i, ev.j);
                let pi = table.pi(b, a)?;
                let vs = st.v.velocities();
                let u_pre = st.u.velocities()[b];
                let phi_u = coupled_angle(vs[b] - vs[a], u_pre - pi, ev.phi)?;
                for (tl, &k) in tildes.iter_mut().zip(ks) {
                    if a < k && b < k {
                        tilde_jump(&mut tl[b], u_pre, pi, ev.theta, phi_u)?;
                    }
                }
            }
        }
        st.v.set_t(target);
        st.u.set_t(target);
        if record {
            for (series, d) in distance.iter_mut().zip(measure(st.u.velocities(), &tildes)) {
                series.push((target, d));
            }
            coupled_distance.push((target, st.distance()));
        }
    }
    let refreshes = table.refreshes();
    Ok(DecoupledRun {
        ks: ks.to_vec(),
        distance,
        tildes,
        coupled: CoupledRun { distance: coupled_distance, state: st, events, refreshes },
        aux_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kac::Density;
    use crate::rng::stream;

    fn kernel() -> AngularKernel {
        AngularKernel::new(0.5).unwrap()
    }

    fn gaussian(n: usize, seed: u64) -> Ensemble {
        kac::init(&InitialCondition::Iid(Density::Gaussian), n, &mut stream(seed, 0, StreamRole::Init)).unwrap()
    }

    #[test]
    fn two_point_matching_example() {
        let u = vec![Velocity::ZERO, Velocity::new(10.0, 0.0, 0.0)];
        let atoms = vec![Velocity::new(9.0, 0.0, 0.0), Velocity::new(1.0, 0.0, 0.0)];
        let t = MatchingTable::from_atoms(&u, atoms, RefreshPolicy { every: 1 }).unwrap();
        assert_eq!(t.pi(1, 0).unwrap(), Velocity::new(1.0, 0.0, 0.0));
        assert_eq!(t.pi(0, 1).unwrap(), Velocity::new(9.0, 0.0, 0.0));
        assert_eq!(t.mean_cost(), 1.0);
        assert!(t.pi(0, 0).is_err());
        assert!(t.pi(0, 2).is_err());
    }

    #[test]
    fn identical_reference_gives_identity_matching() {
        let v = gaussian(12, 1);
        let t = MatchingTable::from_atoms(v.velocities(), v.velocities().to_vec(), RefreshPolicy { every: 1 }).unwrap();
        for j in 1..12 {
            assert_eq!(t.pi(0, j).unwrap(), v.velocities()[j]);
        }
        assert_eq!(t.mean_cost(), 0.0);
    }

    #[test]
    fn bkw_mode_is_unsupported() {
        let r = ReferenceFlow::new(FlowMode::Bkw, 1, &InitialCondition::BoltzmannSphere, 10.0, kernel());
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn flow_mode_labels_round_trip() {
        for m in [FlowMode::StationaryGaussian, FlowMode::Empirical, FlowMode::Bkw, FlowMode::SelfConsistent { m: 64 }] {
            assert_eq!(FlowMode::parse(&m.label()).unwrap(), m);
        }
        assert!(FlowMode::parse("nope").is_err());
    }

    #[test]
    fn self_coupling_stays_exact() {
        let v0 = gaussian(16, 2);
        let st = CoupledState::new(v0.clone(), v0.clone(), 10.0).unwrap();
        let mut flow = ReferenceFlow::new(FlowMode::Empirical, 3, &InitialCondition::BoltzmannSphere, 10.0, kernel()).unwrap();
        let mut s = EventStream::new(4, 16, 10.0, kernel(), 0.0).unwrap();
        let r = run_coupled(st, &mut flow, &mut s, RefreshPolicy { every: 1 }, 2.0, &[0.5, 1.0, 2.0]).unwrap();
        assert!(r.events > 0);
        for (_, d) in &r.distance {
            assert_eq!(*d, 0.0);
        }
        assert_eq!(r.state.v.velocities(), r.state.u.velocities());
    }

    #[test]
    fn levels_above_l_leave_u_alone() {
        let v0 = gaussian(8, 5);
        let mut st = CoupledState::new(v0.clone(), v0.clone(), 2.0).unwrap();
        let mut flow = ReferenceFlow::stationary_gaussian(1);
        let mut table = MatchingTable::new(RefreshPolicy { every: 1 }).unwrap();
        let ev = CollisionEvent { t: 0.1, i: 0, j: 3, z: 5.0, theta: kernel().g_unchecked(5.0), phi: 1.0 };
        let jumps = coupled_step(&mut st, &ev, &mut table, &mut flow).unwrap();
        assert!(jumps.is_empty());
        assert_eq!(st.u.velocities(), v0.velocities());
        assert_ne!(st.v.velocities(), v0.velocities());
    }

    #[test]
    fn run_coupled_rejects_k_below_l() {
        let v0 = gaussian(8, 6);
        let st = CoupledState::new(v0.clone(), v0, 20.0).unwrap();
        let mut flow = ReferenceFlow::stationary_gaussian(1);
        let mut s = EventStream::new(4, 8, 10.0, kernel(), 0.0).unwrap();
        assert!(run_coupled(st, &mut flow, &mut s, RefreshPolicy { every: 1 }, 1.0, &[]).is_err());
    }

    #[test]
    fn single_tagged_process_is_not_decoupled() {
        let v0 = gaussian(20, 7);
        let st = CoupledState::new(v0.clone(), v0, 10.0).unwrap();
        let mut flow = ReferenceFlow::stationary_gaussian(2);
        let mut s = EventStream::new(8, 20, 10.0, kernel(), 0.0).unwrap();
        let r = run_decoupled(st, &mut flow, &mut s, 99, &[1, 20], RefreshPolicy { every: 1 }, 3.0, &[1.0, 3.0])
            .unwrap();
        for (_, d) in &r.distance[0] {
            assert_eq!(*d, 0.0);
        }
        assert!(r.distance[1].last().unwrap().1 > 0.0);
        assert!(r.aux_events > 0);
    }

    #[test]
    fn aux_stream_rate() {
        let a = AuxStream::new(1, 1000, 100, 20.0, kernel(), 0.0).unwrap();
        assert!((a.rate() - 20.0 * 9900.0 / 1998.0).abs() < 1e-12);
        let mut b = AuxStream::new(1, 10, 1, 20.0, kernel(), 0.0).unwrap();
        assert_eq!(b.peek_time(), f64::INFINITY);
        assert!(AuxStream::new(1, 10, 11, 20.0, kernel(), 0.0).is_err());
    }
}
