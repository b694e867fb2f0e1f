//! Replicated, seeded experiments with rate fits.
//!
//! Replica `r` of a run with master seed `s` draws all of its randomness from
//! the seed tree below `(s, r)`, so replicas are independent of each other and
//! of the order in which they are evaluated.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::AngularKernel;
use crate::io::{config_hash, Snapshot};
use crate::kac::{self, Density, EventStream, InitialCondition, RunOptions};
use crate::moments::{self, povzner_constants, povzner_fit, PovznerConstants, PovznerFit};
use crate::nonlinear::{self, CoupledState, FlowMode, RefreshPolicy, ReferenceFlow};
use crate::rng::{self, StreamRole};
use crate::stats::{self, linear_fit, Estimate, LinearFit, BOOTSTRAP_RESAMPLES};
use crate::velocity::Velocity;
use crate::wasserstein::surrogate_w2;

/// Which experiment a configuration describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ExperimentKind {
    Simulate,
    ChaosRate,
    UniformTime,
    Decoupling,
    CutoffBias,
    Coupling,
    Povzner,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Simulate,
        ExperimentKind::ChaosRate,
        ExperimentKind::UniformTime,
        ExperimentKind::Decoupling,
        ExperimentKind::CutoffBias,
        ExperimentKind::Coupling,
        ExperimentKind::Povzner,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::ChaosRate => "chaos-rate",
            ExperimentKind::UniformTime => "uniform-time",
            ExperimentKind::Decoupling => "decoupling",
            ExperimentKind::CutoffBias => "cutoff-bias",
            ExperimentKind::Coupling => "coupling",
            ExperimentKind::Povzner => "povzner",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.label() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }

    /// Sweep used when the configuration does not give one.
    pub fn default_sweep(self, n: usize) -> Vec<f64> {
        match self {
            ExperimentKind::ChaosRate => vec![64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0],
            ExperimentKind::Decoupling => {
                [1.0, 10.0, 20.0, 50.0, 100.0].into_iter().filter(|&k| k <= n as f64).collect()
            }
            ExperimentKind::CutoffBias => vec![2.0, 4.0, 8.0, 16.0],
            ExperimentKind::Povzner => vec![4.0, 6.0, 8.0],
            _ => vec![],
        }
    }
}

/// Everything that determines an experiment; together with the seed it
/// fixes every output bit.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub nu: f64,
    pub n: usize,
    /// Cutoff `K` of the particle system.
    pub k: f64,
    /// Cutoff `L` of the nonlinear processes.
    pub l: f64,
    pub t_end: f64,
    pub observe: Vec<f64>,
    pub replicates: usize,
    pub reference: FlowMode,
    /// Matching refresh interval `R`, in U-collision events.
    pub refresh: u64,
    pub seed: u64,
    pub init: InitialCondition,
    /// Swept values: `N` (chaos-rate), tagged `k` (decoupling), `K`
    /// (cutoff-bias) or `p` (povzner).
    pub sweep: Vec<f64>,
    /// Reference cutoff of the cutoff-bias experiment.
    pub k_ref: f64,
    /// Ratio `m/n` of the γ-surrogate used for W₂ against γ.
    pub surrogate_ratio: usize,
    pub moments: Vec<u32>,
    /// Smallest deviation angle resolved by the Povzner probe.
    pub theta_min: f64,
}

impl RunConfig {
    /// Configuration with documented defaults for everything but the
    /// required keys.
    pub fn new(experiment: ExperimentKind, nu: f64, n: usize, k: f64, t_end: f64, seed: u64) -> Result<Self> {
        let cfg = RunConfig {
            experiment,
            nu,
            n,
            k,
            l: k,
            t_end,
            observe: vec![t_end],
            replicates: 1,
            reference: FlowMode::StationaryGaussian,
            refresh: RefreshPolicy::default_for(n).every,
            seed,
            init: InitialCondition::Iid(Density::Gaussian),
            sweep: experiment.default_sweep(n),
            k_ref: 64.0,
            surrogate_ratio: 16,
            moments: vec![2, 4],
            theta_min: 1e-4,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn kernel(&self) -> Result<AngularKernel> {
        AngularKernel::new(self.nu).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return bad(format!("nu must lie in (0, 1), got {}", self.nu));
        }
        if self.n < 2 {
            return bad(format!("N must be at least 2, got {}", self.n));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return bad(format!("K must be positive and finite, got {}", self.k));
        }
        if !(self.l > 0.0 && self.l <= self.k) {
            return bad(format!("L must lie in (0, K], got {}", self.l));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be finite and non-negative, got {}", self.t_end));
        }
        let mut prev = 0.0;
        for &t in &self.observe {
            if !(t >= prev && t <= self.t_end) {
                return bad(format!("observe must be sorted within [0, t_end], got {t}"));
            }
            prev = t;
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.refresh == 0 {
            return bad("refresh must be at least 1".into());
        }
        if self.surrogate_ratio == 0 {
            return bad("surrogate_ratio must be at least 1".into());
        }
        if self.moments.iter().any(|&p| p < 2 || p % 2 == 1) {
            return bad("moments must be even integers ≥ 2".into());
        }
        if !(self.theta_min > 0.0 && self.theta_min < std::f64::consts::FRAC_PI_2) {
            return bad(format!("theta_min must lie in (0, π/2), got {}", self.theta_min));
        }
        if let InitialCondition::Explicit(_) = self.init {
            return bad("explicit initial data cannot be configured from text".into());
        }
        let integral = |x: f64| x >= 1.0 && x.fract() == 0.0;
        match self.experiment {
            ExperimentKind::ChaosRate if self.sweep.iter().any(|&x| !integral(x) || x < 2.0) => {
                bad("chaos-rate sweep values are ensemble sizes ≥ 2".into())
            }
            ExperimentKind::Decoupling if self.sweep.iter().any(|&x| !integral(x) || x > self.n as f64) => {
                bad(format!("decoupling sweep values are tagged counts in 1..={}", self.n))
            }
            ExperimentKind::CutoffBias if self.sweep.iter().any(|&x| !(x > 0.0 && x <= self.k_ref)) => {
                bad(format!("cutoff-bias sweep values must lie in (0, k_ref = {}]", self.k_ref))
            }
            ExperimentKind::Povzner if self.sweep.iter().any(|&x| !integral(x) || x < 4.0 || x % 2.0 != 0.0) => {
                bad("povzner sweep values are even p ≥ 4".into())
            }
            ExperimentKind::ChaosRate
            | ExperimentKind::Decoupling
            | ExperimentKind::CutoffBias
            | ExperimentKind::Povzner
                if self.sweep.is_empty() =>
            {
                bad(format!("{} needs a non-empty sweep", self.experiment.label()))
            }
            _ => Ok(()),
        }
    }

    /// Observation times with `t_end` appended when missing.
    pub fn observe_through_end(&self) -> Vec<f64> {
        let mut obs = self.observe.clone();
        if obs.last() != Some(&self.t_end) {
            obs.push(self.t_end);
        }
        obs
    }

    fn replica_ids(&self) -> Vec<u64> {
        (0..self.replicates as u64).collect()
    }
}

/// One output row; see [`crate::io::CSV_COLUMNS`] for the column order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub experiment: String,
    pub nu: f64,
    pub n: usize,
    pub k: f64,
    pub l: Option<f64>,
    /// Tagged count for the decoupling experiment.
    pub tagged: Option<usize>,
    pub t: Option<f64>,
    /// `None` for rows aggregated over replicas.
    pub replicate: Option<u64>,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub seed: u64,
    pub surrogate_m: Option<usize>,
    pub config_hash: String,
}

/// Template for the rows of one run.
#[derive(Clone, Debug)]
struct Rows {
    base: MetricsRecord,
    out: Vec<MetricsRecord>,
}

impl Rows {
    fn new(cfg: &RunConfig) -> Self {
        let hash = config_hash(cfg);
        Rows {
            base: MetricsRecord {
                run_id: format!("{}-{}", cfg.experiment.label(), &hash[..12]),
                experiment: cfg.experiment.label().into(),
                nu: cfg.nu,
                n: cfg.n,
                k: cfg.k,
                l: None,
                tagged: None,
                t: None,
                replicate: None,
                metric: String::new(),
                value: f64::NAN,
                stderr: None,
                seed: cfg.seed,
                surrogate_m: None,
                config_hash: hash,
            },
            out: vec![],
        }
    }

    fn push(&mut self, f: impl FnOnce(&mut MetricsRecord)) {
        let mut r = self.base.clone();
        f(&mut r);
        self.out.push(r);
    }
}

/// Log-log fit of replica means against a swept parameter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub abscissae: Vec<f64>,
    pub means: Vec<Estimate>,
    pub slope: f64,
    pub intercept: f64,
    /// Percentile interval of the slope over replica bootstrap resamples.
    pub ci95: (f64, f64),
    /// OLS fit of `ln mean` on `ln x` with its t-interval, for reference.
    pub ols: LinearFit,
}

/// Fit `ln E[metric] = a + slope · ln x` from per-abscissa replica samples.
/// Only abscissae with a positive mean enter the fit; at least four are needed.
pub fn rate_fit(x: &[f64], samples: &[Vec<f64>], seed: u64) -> Result<RateFit> {
    if x.len() != samples.len() {
        return Err(Error::SizeMismatch { expected: x.len(), got: samples.len() });
    }
    let mut xs = vec![];
    let mut groups = vec![];
    for (&xi, s) in x.iter().zip(samples) {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        if m > 0.0 && xi > 0.0 {
            xs.push(xi);
            groups.push(s.as_slice());
        }
    }
    if xs.len() < 4 {
        return Err(Error::Domain(format!("a rate fit needs four positive abscissae, got {}", xs.len())));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let means: Vec<Estimate> = groups
        .iter()
        .enumerate()
        .map(|(g, s)| Estimate::bootstrap(s, BOOTSTRAP_RESAMPLES, rng::split(seed, g as u64)))
        .collect::<Result<_>>()?;
    let ly: Vec<f64> = means.iter().map(|e| e.mean.ln()).collect();
    let ols = linear_fit(&lx, &ly)?;
    let mut r = rng::stream(seed, u64::MAX, StreamRole::Bootstrap);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let ly_b: Vec<f64> = groups
            .iter()
            .map(|s| (0..s.len()).map(|_| s[r.random_range(0..s.len())]).sum::<f64>() / s.len() as f64)
            .map(f64::ln)
            .collect();
        if ly_b.iter().all(|v| v.is_finite()) {
            slopes.push(stats::ols(&lx, &ly_b)?.0);
        }
    }
    Ok(RateFit {
        abscissae: xs,
        means,
        slope: ols.slope,
        intercept: ols.intercept,
        ci95: (stats::quantile(&slopes, 0.025), stats::quantile(&slopes, 0.975)),
        ols,
    })
}

/// Slope of the replica-mean series over the final half of the time span.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrendFit {
    pub slope: f64,
    /// Percentile interval over replica bootstrap resamples.
    pub ci95: (f64, f64),
}

impl TrendFit {
    pub fn contains_zero(&self) -> bool {
        self.ci95.0 <= 0.0 && 0.0 <= self.ci95.1
    }
}

/// `per_replica[r][i]` is the metric of replica `r` at `times[i]`.
pub fn final_half_trend(times: &[f64], per_replica: &[Vec<f64>], seed: u64) -> Result<TrendFit> {
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let keep: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= 0.5 * (t0 + t1)).collect();
    if keep.len() < 3 {
        return Err(Error::Domain("trend fit needs three observation times in the final half".into()));
    }
    let x: Vec<f64> = keep.iter().map(|&i| times[i]).collect();
    let series = |idx: &[usize]| -> Vec<f64> {
        keep.iter().map(|&i| idx.iter().map(|&r| per_replica[r][i]).sum::<f64>() / idx.len() as f64).collect()
    };
    let all: Vec<usize> = (0..per_replica.len()).collect();
    let slope = stats::ols(&x, &series(&all))?.0;
    let slopes = stats::bootstrap(per_replica.len(), BOOTSTRAP_RESAMPLES, seed, |idx| {
        stats::ols(&x, &series(idx)).map(|f| f.0).unwrap_or(f64::NAN)
    })?;
    Ok(TrendFit { slope, ci95: (stats::quantile(&slopes, 0.025), stats::quantile(&slopes, 0.975)) })
}

fn estimate(xs: &[f64], seed: u64) -> Result<Estimate> {
    if xs.len() < 2 {
        return Ok(Estimate::from_samples(xs));
    }
    Estimate::bootstrap(xs, BOOTSTRAP_RESAMPLES, seed)
}

fn finite_se(e: &Estimate) -> Option<f64> {
    e.stderr.is_finite().then_some(e.stderr)
}

/// Ratio of two replica means with a bootstrap percentile interval; the
/// samples must come from the same replicas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Ratio {
    pub value: f64,
    pub ci95: (f64, f64),
}

pub fn paired_ratio(num: &[f64], den: &[f64], seed: u64) -> Result<Ratio> {
    if num.len() != den.len() {
        return Err(Error::SizeMismatch { expected: num.len(), got: den.len() });
    }
    let ratio = |idx: &[usize]| idx.iter().map(|&i| num[i]).sum::<f64>() / idx.iter().map(|&i| den[i]).sum::<f64>();
    let all: Vec<usize> = (0..num.len()).collect();
    let b = stats::bootstrap(num.len(), BOOTSTRAP_RESAMPLES, seed, ratio)?;
    Ok(Ratio { value: ratio(&all), ci95: (stats::quantile(&b, 0.025), stats::quantile(&b, 0.975)) })
}

fn par_replicas<T, F>(ids: &[u64], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    ids.par_iter().map(|&r| f(r)).collect()
}

fn init_replica(cfg: &RunConfig, n: usize, master: u64, r: u64) -> Result<kac::Ensemble> {
    kac::init(&cfg.init, n, &mut rng::stream(master, r, StreamRole::Init))
}

fn gamma_surrogate(points: &[Velocity], ratio: usize, rng: &mut rng::SimRng) -> Result<f64> {
    surrogate_w2(points, &mut |r: &mut rng::SimRng| rng::gamma_velocity(r), ratio, rng)
}

/// Output of [`simulate`].
#[derive(Clone, Debug, Serialize)]
pub struct SimulateReport {
    pub times: Vec<f64>,
    /// `moments[j][i]`: replica mean of `m_{p_j}` at `times[i]`.
    pub moments: Vec<(u32, Vec<Estimate>)>,
    pub max_momentum_drift: f64,
    pub max_energy_drift: f64,
    pub events: u64,
    #[serde(skip)]
    pub per_replica: Vec<Vec<Vec<f64>>>,
    #[serde(skip)]
    pub final_state: Snapshot,
}

/// Plain runs of the particle system, recording moments and ledger drift.
pub fn simulate(cfg: &RunConfig) -> Result<SimulateReport> {
    let kernel = cfg.kernel()?;
    let obs = cfg.observe_through_end();
    let mut times = vec![0.0];
    times.extend(obs.iter().copied().filter(|&t| t > 0.0));
    struct Rep {
        moments: Vec<Vec<f64>>,
        drift: (f64, f64),
        events: u64,
        last: kac::Ensemble,
    }
    let reps = par_replicas(&cfg.replica_ids(), |r| {
        let mut ens = init_replica(cfg, cfg.n, cfg.seed, r)?;
        let mut stream = EventStream::for_replica(cfg.seed, r, cfg.n, cfg.k, kernel)?;
        let mut moments: Vec<Vec<f64>> = cfg.moments.iter().map(|&p| vec![moments::moment(ens.velocities(), p)]).collect();
        let mut drift: (f64, f64) = (0.0, 0.0);
        let opts = RunOptions { observe: times[1..].to_vec(), rescale_every: None };
        let stats = kac::run(&mut ens, &mut stream, cfg.t_end, &opts, |_, e| {
            for (series, &p) in moments.iter_mut().zip(&cfg.moments) {
                series.push(moments::moment(e.velocities(), p));
            }
            let d = e.drift();
            drift = (drift.0.max(d.momentum), drift.1.max(d.energy));
            Ok(())
        })?;
        Ok(Rep { moments, drift, events: stats.events, last: ens })
    })?;
    let moments_est = cfg
        .moments
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let est = (0..times.len())
                .map(|i| {
                    let xs: Vec<f64> = reps.iter().map(|rep| rep.moments[j][i]).collect();
                    estimate(&xs, rng::split(cfg.seed, (j * times.len() + i) as u64))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((p, est))
        })
        .collect::<Result<Vec<_>>>()?;
    let first = &reps[0].last;
    Ok(SimulateReport {
        times,
        moments: moments_est,
        max_momentum_drift: reps.iter().map(|r| r.drift.0).fold(0.0, f64::max),
        max_energy_drift: reps.iter().map(|r| r.drift.1).fold(0.0, f64::max),
        events: reps.iter().map(|r| r.events).sum(),
        per_replica: reps.iter().map(|r| r.moments.clone()).collect(),
        final_state: Snapshot {
            t: first.t(),
            seed: cfg.seed,
            k: cfg.k,
            nu: cfg.nu,
            velocities: first.velocities().to_vec(),
        },
    })
}

/// Output of [`chaos_rate`].
#[derive(Clone, Debug, Serialize)]
pub struct ChaosReport {
    pub sizes: Vec<usize>,
    pub times: Vec<f64>,
    /// `estimates[s][i]`: `E W₂²(V̄_t, γ)` at `sizes[s]`, `times[i]`.
    pub estimates: Vec<Vec<Estimate>>,
    pub fit: RateFit,
    pub surrogate_ratio: usize,
    #[serde(skip)]
    pub samples: Vec<Vec<Vec<f64>>>,
}

fn require_stationary(cfg: &RunConfig) -> Result<()> {
    if cfg.init != InitialCondition::Iid(Density::Gaussian) || cfg.reference != FlowMode::StationaryGaussian {
        return Err(Error::Config(format!(
            "{} needs the stationary configuration: init = gaussian and reference = stationary-gaussian",
            cfg.experiment.label()
        )));
    }
    Ok(())
}

/// `E W₂²(V̄_t, γ)` over a sweep of ensemble sizes, starting from `γ^{⊗N}`.
/// The fit uses the last observation time.
pub fn chaos_rate(cfg: &RunConfig) -> Result<ChaosReport> {
    require_stationary(cfg)?;
    let kernel = cfg.kernel()?;
    let times = cfg.observe_through_end();
    let sizes: Vec<usize> = cfg.sweep.iter().map(|&x| x as usize).collect();
    let mut samples = vec![];
    for &n in &sizes {
        let master = rng::split(cfg.seed, n as u64);
        let per_rep = par_replicas(&cfg.replica_ids(), |r| {
            let mut ens = init_replica(cfg, n, master, r)?;
            let mut stream = EventStream::for_replica(master, r, n, cfg.k, kernel)?;
            let mut sur = rng::stream(master, r, StreamRole::Surrogate);
            let mut values = vec![];
            let opts = RunOptions { observe: times.clone(), rescale_every: None };
            kac::run(&mut ens, &mut stream, cfg.t_end, &opts, |_, e| {
                values.push(gamma_surrogate(e.velocities(), cfg.surrogate_ratio, &mut sur)?);
                Ok(())
            })?;
            Ok(values)
        })?;
        samples.push((0..times.len()).map(|i| per_rep.iter().map(|v| v[i]).collect::<Vec<f64>>()).collect::<Vec<_>>());
    }
    let estimates = samples
        .iter()
        .enumerate()
        .map(|(s, per_t)| {
            per_t.iter().enumerate().map(|(i, xs)| estimate(xs, rng::split(cfg.seed, (s * 1000 + i) as u64))).collect()
        })
        .collect::<Result<Vec<Vec<_>>>>()?;
    let last: Vec<Vec<f64>> = samples.iter().map(|per_t| per_t[times.len() - 1].clone()).collect();
    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let fit = rate_fit(&xs, &last, cfg.seed)?;
    Ok(ChaosReport { sizes, times, estimates, fit, surrogate_ratio: cfg.surrogate_ratio, samples })
}

/// Output of [`uniform_in_time`].
#[derive(Clone, Debug, Serialize)]
pub struct UniformReport {
    pub times: Vec<f64>,
    pub estimates: Vec<Estimate>,
    pub trend: TrendFit,
    /// Mean of the metric over the final half of the span.
    pub plateau: Estimate,
    pub surrogate_ratio: usize,
    #[serde(skip)]
    pub per_replica: Vec<Vec<f64>>,
}

/// `E W₂²(V̄_t, γ)` along a long run from the configured initial data.
pub fn uniform_in_time(cfg: &RunConfig) -> Result<UniformReport> {
    let kernel = cfg.kernel()?;
    let mut times = vec![0.0];
    times.extend(cfg.observe_through_end().into_iter().filter(|&t| t > 0.0));
    let per_replica = par_replicas(&cfg.replica_ids(), |r| {
        let mut ens = init_replica(cfg, cfg.n, cfg.seed, r)?;
        let mut stream = EventStream::for_replica(cfg.seed, r, cfg.n, cfg.k, kernel)?;
        let mut sur = rng::stream(cfg.seed, r, StreamRole::Surrogate);
        let mut values = vec![gamma_surrogate(ens.velocities(), cfg.surrogate_ratio, &mut sur)?];
        let opts = RunOptions { observe: times[1..].to_vec(), rescale_every: None };
        kac::run(&mut ens, &mut stream, cfg.t_end, &opts, |_, e| {
            values.push(gamma_surrogate(e.velocities(), cfg.surrogate_ratio, &mut sur)?);
            Ok(())
        })?;
        Ok(values)
    })?;
    let estimates = (0..times.len())
        .map(|i| {
            let xs: Vec<f64> = per_replica.iter().map(|v| v[i]).collect();
            estimate(&xs, rng::split(cfg.seed, i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let trend = final_half_trend(&times, &per_replica, cfg.seed)?;
    let mid = 0.5 * (times[0] + times[times.len() - 1]);
    let plateau_samples: Vec<f64> = per_replica
        .iter()
        .map(|v| {
            let tail: Vec<f64> = times.iter().zip(v).filter(|(t, _)| **t >= mid).map(|(_, x)| *x).collect();
            tail.iter().sum::<f64>() / tail.len() as f64
        })
        .collect();
    let plateau = estimate(&plateau_samples, rng::split(cfg.seed, u64::MAX - 1))?;
    Ok(UniformReport { times, estimates, trend, plateau, surrogate_ratio: cfg.surrogate_ratio, per_replica })
}

/// Output of [`decoupling_rate`].
#[derive(Clone, Debug, Serialize)]
pub struct DecouplingReport {
    pub tagged: Vec<usize>,
    pub times: Vec<f64>,
    /// `estimates[j][i]`: `E (1/k) Σ |U^j − Ũ^j|²` for `tagged[j]` at `times[i]`.
    pub estimates: Vec<Vec<Estimate>>,
    /// Fit in `k` at the final time over the positive means.
    pub fit: Option<RateFit>,
    /// `samples[j][r]` at the final time.
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
    /// `series[j][i][r]` at every observation time.
    #[serde(skip)]
    pub series: Vec<Vec<Vec<f64>>>,
}

impl DecouplingReport {
    /// Paired ratio of the final-time means at tagged counts `a` over `b`.
    pub fn ratio(&self, a: usize, b: usize, seed: u64) -> Result<Ratio> {
        let find = |k| {
            self.tagged.iter().position(|&x| x == k).ok_or_else(|| Error::Domain(format!("k = {k} was not simulated")))
        };
        paired_ratio(&self.samples[find(a)?], &self.samples[find(b)?], seed)
    }
}

/// Distance between the coupled nonlinear processes and their decoupled
/// copies, for every tagged count in the sweep.
pub fn decoupling_rate(cfg: &RunConfig) -> Result<DecouplingReport> {
    let kernel = cfg.kernel()?;
    let tagged: Vec<usize> = cfg.sweep.iter().map(|&x| x as usize).collect();
    let mut times = vec![0.0];
    times.extend(cfg.observe_through_end().into_iter().filter(|&t| t > 0.0));
    let per_rep = par_replicas(&cfg.replica_ids(), |r| {
        let v0 = init_replica(cfg, cfg.n, cfg.seed, r)?;
        let st = CoupledState::new(v0.clone(), v0, cfg.l)?;
        let mut flow = ReferenceFlow::new(cfg.reference.clone(), rng::split(cfg.seed, r), &cfg.init, cfg.l, kernel)?;
        let mut stream = EventStream::for_replica(cfg.seed, r, cfg.n, cfg.k, kernel)?;
        let run = nonlinear::run_decoupled(
            st,
            &mut flow,
            &mut stream,
            rng::seed_for(cfg.seed, r, StreamRole::Aux),
            &tagged,
            RefreshPolicy { every: cfg.refresh },
            cfg.t_end,
            &times[1..],
        )?;
        Ok(run.distance)
    })?;
    let series: Vec<Vec<Vec<f64>>> = (0..tagged.len())
        .map(|j| (0..times.len()).map(|i| per_rep.iter().map(|d| d[j][i].1).collect()).collect())
        .collect();
    let mut estimates = vec![];
    for (j, per_t) in series.iter().enumerate() {
        let row = per_t
            .iter()
            .enumerate()
            .map(|(i, xs)| estimate(xs, rng::split(cfg.seed, (j * 1000 + i) as u64)))
            .collect::<Result<Vec<_>>>()?;
        estimates.push(row);
    }
    let samples: Vec<Vec<f64>> = series.iter().map(|per_t| per_t[times.len() - 1].clone()).collect();
    let xs: Vec<f64> = tagged.iter().map(|&k| k as f64).collect();
    let fit = if cfg.replicates >= 2 { rate_fit(&xs, &samples, cfg.seed).ok() } else { None };
    Ok(DecouplingReport { tagged, times, estimates, fit, samples, series })
}

/// Output of [`cutoff_bias`].
#[derive(Clone, Debug, Serialize)]
pub struct CutoffReport {
    pub cutoffs: Vec<f64>,
    pub k_ref: f64,
    pub times: Vec<f64>,
    /// `estimates[j][i]`: `E (1/N) Σ |V^{K_j} − V^{K_ref}|²` at `times[i]`.
    pub estimates: Vec<Vec<Estimate>>,
    /// Fit in `K` at the final time.
    pub fit: RateFit,
    #[serde(skip)]
    pub samples: Vec<Vec<Vec<f64>>>,
}

/// Distance between shared-noise systems at cutoffs `K` and `k_ref`.
pub fn cutoff_bias(cfg: &RunConfig) -> Result<CutoffReport> {
    let kernel = cfg.kernel()?;
    let times = cfg.observe_through_end();
    let per_rep = par_replicas(&cfg.replica_ids(), |r| {
        let v0 = init_replica(cfg, cfg.n, cfg.seed, r)?;
        cfg.sweep
            .iter()
            .map(|&k1| {
                let mut stream = EventStream::for_replica(cfg.seed, r, cfg.n, cfg.k_ref, kernel)?;
                let run = kac::run_coupled_cutoffs(&v0, &v0, k1, &mut stream, cfg.t_end, &times)?;
                Ok(run.distance.into_iter().map(|(_, d)| d).collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let samples: Vec<Vec<Vec<f64>>> = (0..cfg.sweep.len())
        .map(|j| (0..times.len()).map(|i| per_rep.iter().map(|d| d[j][i]).collect()).collect())
        .collect();
    let estimates = samples
        .iter()
        .enumerate()
        .map(|(j, per_t)| {
            per_t.iter().enumerate().map(|(i, xs)| estimate(xs, rng::split(cfg.seed, (j * 1000 + i) as u64))).collect()
        })
        .collect::<Result<Vec<Vec<_>>>>()?;
    let last: Vec<Vec<f64>> = samples.iter().map(|per_t| per_t[times.len() - 1].clone()).collect();
    let fit = rate_fit(&cfg.sweep, &last, cfg.seed)?;
    Ok(CutoffReport { cutoffs: cfg.sweep.clone(), k_ref: cfg.k_ref, times, estimates, fit, samples })
}

/// Output of [`coupling_distance`].
#[derive(Clone, Debug, Serialize)]
pub struct CouplingReport {
    pub times: Vec<f64>,
    /// `E (1/N) Σ |V^i_t − U^i_t|²`.
    pub distance: Vec<Estimate>,
    /// `E W₂²(Ū_t, γ)` at the final time (stationary reference only).
    pub u_to_reference: Option<Estimate>,
    pub reference: String,
    pub exact_reference: bool,
    pub refreshes: f64,
    /// `per_replica[r][i]`: distance of replica `r` at `times[i]`.
    #[serde(skip)]
    pub per_replica: Vec<Vec<f64>>,
}

/// Trajectory distance between the particle system and the coupled
/// nonlinear processes.
pub fn coupling_distance(cfg: &RunConfig) -> Result<CouplingReport> {
    let kernel = cfg.kernel()?;
    let mut times = vec![0.0];
    times.extend(cfg.observe_through_end().into_iter().filter(|&t| t > 0.0));
    let stationary = cfg.reference == FlowMode::StationaryGaussian;
    let per_rep = par_replicas(&cfg.replica_ids(), |r| {
        let v0 = init_replica(cfg, cfg.n, cfg.seed, r)?;
        let st = CoupledState::new(v0.clone(), v0, cfg.l)?;
        let mut flow = ReferenceFlow::new(cfg.reference.clone(), rng::split(cfg.seed, r), &cfg.init, cfg.l, kernel)?;
        let mut stream = EventStream::for_replica(cfg.seed, r, cfg.n, cfg.k, kernel)?;
        let run =
            nonlinear::run_coupled(st, &mut flow, &mut stream, RefreshPolicy { every: cfg.refresh }, cfg.t_end, &times[1..])?;
        let w = if stationary {
            let mut sur = rng::stream(cfg.seed, r, StreamRole::Surrogate);
            Some(gamma_surrogate(run.state.u.velocities(), cfg.surrogate_ratio, &mut sur)?)
        } else {
            None
        };
        Ok((run.distance.into_iter().map(|(_, d)| d).collect::<Vec<f64>>(), w, run.refreshes))
    })?;
    let distance = (0..times.len())
        .map(|i| {
            let xs: Vec<f64> = per_rep.iter().map(|p| p.0[i]).collect();
            estimate(&xs, rng::split(cfg.seed, i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let u_to_reference = if stationary {
        let xs: Vec<f64> = per_rep.iter().map(|p| p.1.expect("computed")).collect();
        Some(estimate(&xs, rng::split(cfg.seed, u64::MAX - 2))?)
    } else {
        None
    };
    Ok(CouplingReport {
        times,
        distance,
        u_to_reference,
        reference: cfg.reference.label(),
        exact_reference: cfg.reference.is_exact(),
        refreshes: per_rep.iter().map(|p| p.2 as f64).sum::<f64>() / per_rep.len() as f64,
        per_replica: per_rep.into_iter().map(|p| p.0).collect(),
    })
}

/// Output of [`povzner`].
#[derive(Clone, Debug, Serialize)]
pub struct PovznerReport {
    pub constants: Vec<PovznerConstantsRow>,
    pub fits: Vec<PovznerFitRow>,
    pub theta_min: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PovznerConstantsRow {
    pub p: u32,
    pub a_p: f64,
    pub a_p_error: f64,
    pub i: f64,
}

/// The fitted `Ã_p` is an empirical artifact of the probe set, not a
/// universal constant.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PovznerFitRow {
    pub p: u32,
    pub a_tilde: f64,
    pub pairs: usize,
    pub degenerate_slack: f64,
}

impl From<PovznerConstants> for PovznerConstantsRow {
    fn from(c: PovznerConstants) -> Self {
        PovznerConstantsRow { p: c.p, a_p: c.a_p, a_p_error: c.a_p_error, i: c.i }
    }
}

impl From<PovznerFit> for PovznerFitRow {
    fn from(f: PovznerFit) -> Self {
        PovznerFitRow { p: f.p, a_tilde: f.a_tilde, pairs: f.pairs, degenerate_slack: f.degenerate_slack }
    }
}

/// Random probe pairs: isotropic directions with log-uniform speeds over
/// four decades, plus a few resting partners.
pub fn povzner_pairs(count: usize, seed: u64) -> Vec<(Velocity, Velocity)> {
    let mut r = rng::stream(seed, 0, StreamRole::Init);
    let draw = |r: &mut rng::SimRng| {
        let d = rng::gaussian_velocity(r, 1.0);
        let speed = 10f64.powf(4.0 * rng::uniform(r) - 2.0);
        d * (speed / d.norm())
    };
    (0..count)
        .map(|i| {
            let v = draw(&mut r);
            let vs = if i % 50 == 0 { Velocity::ZERO } else { draw(&mut r) };
            (v, vs)
        })
        .collect()
}

/// Povzner constants and the empirical `Ã_p` over `replicates` random pairs.
pub fn povzner(cfg: &RunConfig) -> Result<PovznerReport> {
    let kernel = cfg.kernel()?;
    let pairs = povzner_pairs(cfg.replicates, cfg.seed);
    let mut constants = vec![];
    let mut fits = vec![];
    for &p in &cfg.sweep {
        let c = povzner_constants(p as u32, &kernel)?;
        fits.push(povzner_fit(&kernel, &c, &pairs, cfg.theta_min)?.into());
        constants.push(c.into());
    }
    Ok(PovznerReport { constants, fits, theta_min: cfg.theta_min })
}

/// Rows, JSON summary and optional final snapshot of a run.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub records: Vec<MetricsRecord>,
    pub summary: serde_json::Value,
    pub snapshot: Option<Snapshot>,
}

fn summary<T: Serialize>(cfg: &RunConfig, report: &T, checks: serde_json::Value) -> Result<serde_json::Value> {
    let hash = config_hash(cfg);
    Ok(serde_json::json!({
        "experiment": cfg.experiment.label(),
        "run_id": format!("{}-{}", cfg.experiment.label(), &hash[..12]),
        "config_hash": hash,
        "seed": cfg.seed,
        "report": serde_json::to_value(report).map_err(|e| Error::Numerical(e.to_string()))?,
        "checks": checks,
    }))
}

/// Run the experiment named by `cfg.experiment`.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut rows = Rows::new(cfg);
    let m = cfg.surrogate_ratio;
    let (summary, snapshot) = match cfg.experiment {
        ExperimentKind::Simulate => {
            let rep = simulate(cfg)?;
            for (r, per) in rep.per_replica.iter().enumerate() {
                for (j, &p) in cfg.moments.iter().enumerate() {
                    for (i, &t) in rep.times.iter().enumerate() {
                        rows.push(|x| {
                            x.t = Some(t);
                            x.replicate = Some(r as u64);
                            x.metric = format!("m{p}");
                            x.value = per[j][i];
                        });
                    }
                }
            }
            for (p, est) in &rep.moments {
                for (i, e) in est.iter().enumerate() {
                    rows.push(|x| {
                        x.t = Some(rep.times[i]);
                        x.metric = format!("m{p}_mean");
                        x.value = e.mean;
                        x.stderr = finite_se(e);
                    });
                }
            }
            rows.push(|x| {
                x.metric = "max_energy_drift".into();
                x.value = rep.max_energy_drift;
            });
            rows.push(|x| {
                x.metric = "max_momentum_drift".into();
                x.value = rep.max_momentum_drift;
            });
            let checks = serde_json::json!({ "energy_drift_le_1e-9": rep.max_energy_drift <= 1e-9 });
            (summary(cfg, &rep, checks)?, Some(rep.final_state.clone()))
        }
        ExperimentKind::ChaosRate => {
            let rep = chaos_rate(cfg)?;
            for (s, &n) in rep.sizes.iter().enumerate() {
                for (i, &t) in rep.times.iter().enumerate() {
                    for (r, &v) in rep.samples[s][i].iter().enumerate() {
                        rows.push(|x| {
                            x.n = n;
                            x.t = Some(t);
                            x.replicate = Some(r as u64);
                            x.metric = "w2_to_gamma".into();
                            x.value = v;
                            x.surrogate_m = Some(m * n);
                        });
                    }
                    let e = rep.estimates[s][i];
                    rows.push(|x| {
                        x.n = n;
                        x.t = Some(t);
                        x.metric = "w2_to_gamma_mean".into();
                        x.value = e.mean;
                        x.stderr = finite_se(&e);
                        x.surrogate_m = Some(m * n);
                    });
                }
            }
            rows.push(|x| {
                x.t = Some(cfg.t_end);
                x.metric = "slope_in_n".into();
                x.value = rep.fit.slope;
            });
            let checks = serde_json::json!({ "slope_upper_ci_le_-1/3": rep.fit.ci95.1 <= -1.0 / 3.0 });
            (summary(cfg, &rep, checks)?, None)
        }
        ExperimentKind::UniformTime => {
            let rep = uniform_in_time(cfg)?;
            for (r, per) in rep.per_replica.iter().enumerate() {
                for (i, &v) in per.iter().enumerate() {
                    rows.push(|x| {
                        x.t = Some(rep.times[i]);
                        x.replicate = Some(r as u64);
                        x.metric = "w2_to_gamma".into();
                        x.value = v;
                        x.surrogate_m = Some(m * cfg.n);
                    });
                }
            }
            for (i, e) in rep.estimates.iter().enumerate() {
                rows.push(|x| {
                    x.t = Some(rep.times[i]);
                    x.metric = "w2_to_gamma_mean".into();
                    x.value = e.mean;
                    x.stderr = finite_se(e);
                    x.surrogate_m = Some(m * cfg.n);
                });
            }
            rows.push(|x| {
                x.metric = "plateau".into();
                x.value = rep.plateau.mean;
                x.stderr = finite_se(&rep.plateau);
                x.surrogate_m = Some(m * cfg.n);
            });
            rows.push(|x| {
                x.metric = "final_half_slope".into();
                x.value = rep.trend.slope;
            });
            let checks = serde_json::json!({ "final_half_slope_ci_contains_0": rep.trend.contains_zero() });
            (summary(cfg, &rep, checks)?, None)
        }
        ExperimentKind::Decoupling => {
            let rep = decoupling_rate(cfg)?;
            for (j, &k) in rep.tagged.iter().enumerate() {
                for (i, &t) in rep.times.iter().enumerate() {
                    for (r, &v) in rep.series[j][i].iter().enumerate() {
                        rows.push(|x| {
                            x.l = Some(cfg.l);
                            x.tagged = Some(k);
                            x.t = Some(t);
                            x.replicate = Some(r as u64);
                            x.metric = "decoupling_distance".into();
                            x.value = v;
                        });
                    }
                    let e = rep.estimates[j][i];
                    rows.push(|x| {
                        x.l = Some(cfg.l);
                        x.tagged = Some(k);
                        x.t = Some(t);
                        x.metric = "decoupling_distance_mean".into();
                        x.value = e.mean;
                        x.stderr = finite_se(&e);
                    });
                }
            }
            let checks = serde_json::json!({
                "k1_is_zero": rep.tagged.iter().position(|&k| k == 1).map(|j| rep.samples[j].iter().all(|&d| d == 0.0)),
            });
            (summary(cfg, &rep, checks)?, None)
        }
        ExperimentKind::CutoffBias => {
            let rep = cutoff_bias(cfg)?;
            for (j, &k1) in rep.cutoffs.iter().enumerate() {
                for (i, &t) in rep.times.iter().enumerate() {
                    for (r, &v) in rep.samples[j][i].iter().enumerate() {
                        rows.push(|x| {
                            x.k = k1;
                            x.t = Some(t);
                            x.replicate = Some(r as u64);
                            x.metric = format!("cutoff_distance_vs_k{}", cfg.k_ref);
                            x.value = v;
                        });
                    }
                    let e = rep.estimates[j][i];
                    rows.push(|x| {
                        x.k = k1;
                        x.t = Some(t);
                        x.metric = format!("cutoff_distance_vs_k{}_mean", cfg.k_ref);
                        x.value = e.mean;
                        x.stderr = finite_se(&e);
                    });
                }
            }
            let target = 1.0 - 2.0 / cfg.nu;
            let checks = serde_json::json!({ "slope_within_0.5_of_target": (rep.fit.slope - target).abs() <= 0.5 });
            (summary(cfg, &rep, checks)?, None)
        }
        ExperimentKind::Coupling => {
            let rep = coupling_distance(cfg)?;
            for (r, per) in rep.per_replica.iter().enumerate() {
                for (i, &v) in per.iter().enumerate() {
                    rows.push(|x| {
                        x.l = Some(cfg.l);
                        x.t = Some(rep.times[i]);
                        x.replicate = Some(r as u64);
                        x.metric = "coupling_distance".into();
                        x.value = v;
                    });
                }
            }
            for (i, e) in rep.distance.iter().enumerate() {
                rows.push(|x| {
                    x.l = Some(cfg.l);
                    x.t = Some(rep.times[i]);
                    x.metric = "coupling_distance_mean".into();
                    x.value = e.mean;
                    x.stderr = finite_se(e);
                });
            }
            if let Some(e) = rep.u_to_reference {
                rows.push(|x| {
                    x.l = Some(cfg.l);
                    x.t = Some(cfg.t_end);
                    x.metric = "u_w2_to_gamma_mean".into();
                    x.value = e.mean;
                    x.stderr = finite_se(&e);
                    x.surrogate_m = Some(m * cfg.n);
                });
            }
            (summary(cfg, &rep, serde_json::json!({}))?, None)
        }
        ExperimentKind::Povzner => {
            let rep = povzner(cfg)?;
            for c in &rep.constants {
                rows.push(|x| {
                    x.metric = format!("A_{}", c.p);
                    x.value = c.a_p;
                    x.stderr = Some(c.a_p_error);
                });
            }
            rows.push(|x| {
                x.metric = "I".into();
                x.value = rep.constants[0].i;
            });
            for f in &rep.fits {
                rows.push(|x| {
                    x.metric = format!("A_tilde_{}_empirical", f.p);
                    x.value = f.a_tilde;
                });
            }
            let checks = serde_json::json!({
                "a_p_positive": rep.constants.iter().all(|c| c.a_p > 0.0),
                "a_tilde_finite": rep.fits.iter().all(|f| f.a_tilde.is_finite()),
            });
            (summary(cfg, &rep, checks)?, None)
        }
    };
    Ok(ExperimentOutput { records: rows.out, summary, snapshot })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ExperimentKind, n: usize, k: f64, t: f64) -> RunConfig {
        RunConfig::new(kind, 0.5, n, k, t, 11).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::new(ExperimentKind::Simulate, 1.5, 128, 20.0, 1.0, 1).is_err());
        assert!(RunConfig::new(ExperimentKind::Simulate, 0.5, 1, 20.0, 1.0, 1).is_err());
        let mut c = cfg(ExperimentKind::Decoupling, 50, 20.0, 1.0);
        assert_eq!(c.sweep, vec![1.0, 10.0, 20.0, 50.0]);
        c.sweep = vec![60.0];
        assert!(c.validate().is_err());
        let mut c = cfg(ExperimentKind::Simulate, 10, 20.0, 1.0);
        c.l = 30.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn simulate_is_deterministic() {
        let mut c = cfg(ExperimentKind::Simulate, 30, 10.0, 0.5);
        c.replicates = 3;
        c.observe = vec![0.25, 0.5];
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.snapshot, b.snapshot);
        let m2: Vec<f64> = a.records.iter().filter(|r| r.metric == "m2" && r.replicate == Some(1)).map(|r| r.value).collect();
        assert_eq!(m2.len(), 3);
        assert!(m2.iter().all(|&x| (x - m2[0]).abs() < 1e-12));
    }

    #[test]
    fn cutoff_bias_at_reference_is_zero() {
        let mut c = cfg(ExperimentKind::CutoffBias, 20, 20.0, 0.5);
        c.sweep = vec![2.0, 4.0, 8.0, 64.0];
        c.replicates = 3;
        let rep = cutoff_bias(&c);
        // The K = k_ref column is identically zero, leaving three fit points.
        assert!(rep.is_err());
        c.sweep = vec![2.0, 4.0, 8.0, 16.0];
        let rep = cutoff_bias(&c).unwrap();
        assert!(rep.estimates.iter().all(|row| row.iter().all(|e| e.mean > 0.0)));
        c.sweep = vec![64.0];
        c.replicates = 1;
        let kernel = c.kernel().unwrap();
        let v0 = init_replica(&c, 20, c.seed, 0).unwrap();
        let mut s = EventStream::for_replica(c.seed, 0, 20, 64.0, kernel).unwrap();
        let run = kac::run_coupled_cutoffs(&v0, &v0, 64.0, &mut s, 0.5, &[0.5]).unwrap();
        assert_eq!(run.distance[0].1, 0.0);
    }

    #[test]
    fn rate_fit_recovers_power_law() {
        let x = [10.0, 20.0, 40.0, 80.0];
        let samples: Vec<Vec<f64>> =
            x.iter().map(|&v: &f64| (0..20).map(|i| v.powf(-0.5) * (1.0 + 0.01 * (i % 3) as f64)).collect()).collect();
        let f = rate_fit(&x, &samples, 3).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-3);
        assert!(f.ci95.0 <= f.slope && f.slope <= f.ci95.1);
        assert!(rate_fit(&x[..3], &samples[..3], 3).is_err());
    }

    #[test]
    fn decoupling_k1_exactly_zero() {
        let mut c = cfg(ExperimentKind::Decoupling, 30, 10.0, 0.5);
        c.sweep = vec![1.0, 5.0, 10.0, 20.0, 30.0];
        c.replicates = 2;
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.summary["checks"]["k1_is_zero"], serde_json::json!(true));
    }

    #[test]
    fn chaos_rate_needs_stationary_setup() {
        let mut c = cfg(ExperimentKind::ChaosRate, 64, 20.0, 0.1);
        c.init = InitialCondition::TwoPoint;
        assert!(matches!(chaos_rate(&c), Err(Error::Config(_))));
    }

    #[test]
    fn povzner_report() {
        let mut c = cfg(ExperimentKind::Povzner, 2, 20.0, 0.0);
        c.replicates = 20;
        c.sweep = vec![4.0];
        let r = povzner(&c).unwrap();
        assert!(r.constants[0].a_p > 0.0);
        assert!(r.fits[0].a_tilde.is_finite());
        assert!(r.fits[0].degenerate_slack < 1e-6);
    }
}
