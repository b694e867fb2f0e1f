//! Distributional checks of the particle system and the coupled processes.

use std::f64::consts::{FRAC_PI_2, TAU};

use kac_core::assignment::{self, CostMatrix};
use kac_core::geometry::{post_collision, AngularKernel};
use kac_core::kac::{self, Density, Ensemble, EventStream, InitialCondition};
use kac_core::nonlinear::{self, CoupledState, MatchingTable, RefreshPolicy, ReferenceFlow};
use kac_core::rng::{self, StreamRole};
use kac_core::stats::{ks_one_sample, ks_two_sample};
use kac_core::Velocity;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use statrs::distribution::{ContinuousCDF, Normal};

const LEVEL: f64 = 0.01;

fn kernel() -> AngularKernel {
    AngularKernel::new(0.5).unwrap()
}

fn gaussian_cdf() -> impl Fn(f64) -> f64 {
    let n = Normal::new(0.0, (1.0f64 / 3.0).sqrt()).unwrap();
    move |x| n.cdf(x)
}

#[test]
fn coordinates_are_exchangeable_for_symmetric_starts() {
    let ic = InitialCondition::Iid(Density::StudentT(5.0));
    let (n, reps) = (6, 1500);
    let mut first = vec![];
    let mut last = vec![];
    for r in 0..reps {
        let mut e = kac::init(&ic, n, &mut rng::stream(41, r, StreamRole::Init)).unwrap();
        let mut s = EventStream::for_replica(41, r, n, 20.0, kernel()).unwrap();
        kac::run(&mut e, &mut s, 0.5, &Default::default(), |_, _| Ok(())).unwrap();
        first.push(e.velocities()[0].x);
        last.push(e.velocities()[n - 1].x);
    }
    let ks = ks_two_sample(&first, &last);
    assert!(ks.p_value > LEVEL, "KS p = {}", ks.p_value);
}

/// Direct jump chain for two particles: total rate K, uniform ordered pair,
/// deviation angle by inverting the tail of β on [G(K), π/2].
fn direct_two_particle(v0: [Velocity; 2], k: f64, nu: f64, t_end: f64, seed: u64) -> [Velocity; 2] {
    let mut r = rng::rng_from_seed(seed);
    let mut v = v0;
    let mut t = 0.0;
    // ∫_θ^{π/2} β = (θ^{-ν} − (π/2)^{-ν}) / ν, which equals K at θ = G(K).
    let total = k;
    loop {
        let gap: f64 = Exp1.sample(&mut r);
        t += gap / total;
        if t > t_end {
            return v;
        }
        let u: f64 = r.random();
        let theta = (nu * u * total + FRAC_PI_2.powf(-nu)).powf(-1.0 / nu);
        let phi = TAU * r.random::<f64>();
        let (a, b) = if r.random::<bool>() { (0, 1) } else { (1, 0) };
        let (x, y) = post_collision(v[a], v[b], theta, phi);
        v[a] = x;
        v[b] = y;
    }
}

#[test]
fn two_particle_law_matches_a_direct_jump_chain() {
    let k = kernel();
    let start = [Velocity::new(1.0, 0.5, 0.0), Velocity::new(-1.0, -0.5, 0.2)];
    let (reps, k_cut, t_end) = (20_000, 4.0, 0.7);
    let mut ours = vec![];
    let mut direct = vec![];
    for r in 0..reps {
        let mut e = Ensemble::new(start.to_vec(), 0.0).unwrap();
        let mut s = EventStream::new(rng::split(7, r), 2, k_cut, k, 0.0).unwrap();
        kac::run(&mut e, &mut s, t_end, &Default::default(), |_, _| Ok(())).unwrap();
        ours.push(e.velocities()[0].y);
        direct.push(direct_two_particle(start, k_cut, k.nu(), t_end, rng::split(8, r))[0].y);
    }
    let ks = ks_two_sample(&ours, &direct);
    assert!(ks.p_value > LEVEL, "KS p = {}", ks.p_value);
}

struct CoupledSamples {
    u0: Vec<f64>,
    u_last: Vec<f64>,
    pair_first: Vec<f64>,
    pair_last: Vec<f64>,
}

fn coupled_samples(n: usize, reps: u64, t_end: f64) -> CoupledSamples {
    let mut out = CoupledSamples { u0: vec![], u_last: vec![], pair_first: vec![], pair_last: vec![] };
    for r in 0..reps {
        let seed = rng::split(99, r);
        let v = kac::init(&InitialCondition::Iid(Density::Gaussian), n, &mut rng::stream(seed, 0, StreamRole::Init))
            .unwrap();
        let st = CoupledState::new(v.clone(), v, 20.0).unwrap();
        let mut flow = ReferenceFlow::stationary_gaussian(seed);
        let mut stream = EventStream::for_replica(seed, 0, n, 20.0, kernel()).unwrap();
        let run = nonlinear::run_coupled(st, &mut flow, &mut stream, RefreshPolicy::default_for(n), t_end, &[])
            .unwrap();
        let (v, u) = (run.state.v.velocities(), run.state.u.velocities());
        out.u0.push(u[0].x);
        out.u_last.push(u[n - 1].z);
        out.pair_first.push((v[0] - u[0]).x);
        out.pair_last.push((v[n - 1] - u[n - 1]).x);
    }
    out
}

#[test]
fn nonlinear_processes_stay_gaussian_and_pairs_are_exchangeable() {
    let s = coupled_samples(12, 1500, 1.5);
    let cdf = gaussian_cdf();
    for xs in [&s.u0, &s.u_last] {
        let ks = ks_one_sample(xs, &cdf);
        assert!(ks.p_value > LEVEL, "U marginal KS p = {}", ks.p_value);
    }
    let ks = ks_two_sample(&s.pair_first, &s.pair_last);
    assert!(ks.p_value > LEVEL, "pair exchangeability KS p = {}", ks.p_value);
    // The coupling keeps V and U apart but not identical.
    assert!(s.pair_first.iter().any(|d| d.abs() > 1e-6));
}

#[test]
fn decoupled_copies_are_uncorrelated() {
    let (n, reps) = (10, 10_000u64);
    let mut f = Vec::with_capacity(reps as usize);
    let mut g = Vec::with_capacity(reps as usize);
    for r in 0..reps {
        let seed = rng::split(1234, r);
        let v = kac::init(&InitialCondition::Iid(Density::Gaussian), n, &mut rng::stream(seed, 0, StreamRole::Init))
            .unwrap();
        let st = CoupledState::new(v.clone(), v, 20.0).unwrap();
        let mut flow = ReferenceFlow::stationary_gaussian(seed);
        let mut stream = EventStream::for_replica(seed, 0, n, 20.0, kernel()).unwrap();
        let aux = rng::seed_for(seed, 0, StreamRole::Aux);
        let run = nonlinear::run_decoupled(st, &mut flow, &mut stream, aux, &[2], RefreshPolicy::default_for(n), 1.0, &[])
            .unwrap();
        let tl = &run.tildes[0];
        f.push((2.0 * tl[0].x).tanh());
        g.push((2.0 * tl[1].x).tanh());
    }
    let m = reps as f64;
    let mf = f.iter().sum::<f64>() / m;
    let mg = g.iter().sum::<f64>() / m;
    let prods: Vec<f64> = f.iter().zip(&g).map(|(a, b)| (a - mf) * (b - mg)).collect();
    let cov = prods.iter().sum::<f64>() / m;
    let se = (prods.iter().map(|p| (p - cov).powi(2)).sum::<f64>() / (m - 1.0)).sqrt() / m.sqrt();
    assert!(cov.abs() <= 3.0 * se, "covariance {cov} with standard error {se}");
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn restricted_matching_is_optimal_for_small_systems() {
    let mut r = rng::rng_from_seed(5);
    for n in 2..=9 {
        let u = rng::gamma_sample(&mut r, n);
        let atoms = rng::gamma_sample(&mut r, n);
        let table = MatchingTable::from_atoms(&u, atoms, RefreshPolicy { every: 1 }).unwrap();
        for i in 0..n {
            let others: Vec<Velocity> = u.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| *x).collect();
            let avail = table.atoms_without(i);
            let best = permutations(n - 1)
                .iter()
                .map(|p| others.iter().zip(p).map(|(x, &k)| x.dist2(&avail[k])).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            let ours = table.restricted_cost(&u, i).unwrap() * (n - 1) as f64;
            assert!((ours - best).abs() <= 1e-12 * best.max(1.0), "n = {n}, i = {i}: {ours} vs {best}");
            let cost = CostMatrix::squared_distances(&others, &avail).unwrap();
            assert_eq!(assignment::solve(&cost).total, assignment::brute_force(&cost).total);
        }
    }
}
