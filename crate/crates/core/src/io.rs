//! Configuration files, result tables, snapshots and atomic file output.
//!
//! Configuration is a flat `key = value` text file; `#` starts a comment.
//! Lists are comma separated. Saving always writes every key, in a fixed
//! order, with resolved defaults, so `save(load(save(c)))` is byte-identical
//! to `save(c)`.
//!
//! Snapshots come in two layouts. The text layout is
//!
//! ```text
//! # kac-snapshot v1
//! # N=<count> t=<time> seed=<u64> K=<cutoff> nu=<nu>
//! vx,vy,vz
//! <one velocity per line>
//! ```
//!
//! and the binary layout is the magic `KACSNAP1` followed by little-endian
//! `u64 N, f64 t, u64 seed, f64 K, f64 nu` and `3N` `f64` coordinates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{ExperimentKind, MetricsRecord, RunConfig};
use crate::kac::InitialCondition;
use crate::nonlinear::{FlowMode, RefreshPolicy};
use crate::velocity::Velocity;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "KAC_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "kac-out";

pub const METRICS_SCHEMA: &str = "# kac-metrics v1";
pub const CSV_COLUMNS: [&str; 15] = [
    "run_id",
    "experiment",
    "nu",
    "N",
    "K",
    "L",
    "k",
    "t",
    "replicate",
    "metric",
    "value",
    "stderr",
    "seed",
    "surrogate_m",
    "config_hash",
];

const KEYS: [&str; 17] = [
    "experiment",
    "nu",
    "N",
    "K",
    "L",
    "t_end",
    "observe",
    "replicates",
    "reference",
    "refresh",
    "seed",
    "init",
    "sweep",
    "k_ref",
    "surrogate_ratio",
    "moments",
    "theta_min",
];

const REQUIRED: [&str; 6] = ["experiment", "nu", "N", "K", "t_end", "seed"];

/// Key-value pairs of a configuration file, before defaults are applied.
pub type ConfigMap = BTreeMap<String, String>;

pub fn parse_config_map(text: &str) -> Result<ConfigMap> {
    let mut map = ConfigMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("line {}: unknown key '{key}'", lineno + 1)));
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
        }
    }
    Ok(map)
}

/// Whether `key` is a configuration key.
pub fn is_config_key(key: &str) -> bool {
    KEYS.contains(&key)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(vec![]);
    }
    v.split(',').map(|x| parse_value(key, x.trim())).collect()
}

/// Build a configuration, applying defaults for absent optional keys.
pub fn config_from_map(map: &ConfigMap) -> Result<RunConfig> {
    for key in REQUIRED {
        if !map.contains_key(key) {
            return Err(Error::Config(format!("missing required key '{key}'")));
        }
    }
    let get = |k: &str| map.get(k).map(String::as_str);
    let experiment = ExperimentKind::parse(get("experiment").expect("required"))?;
    let nu: f64 = parse_value("nu", get("nu").expect("required"))?;
    let n: usize = parse_value("N", get("N").expect("required"))?;
    let k: f64 = parse_value("K", get("K").expect("required"))?;
    let t_end: f64 = parse_value("t_end", get("t_end").expect("required"))?;
    let seed: u64 = parse_value("seed", get("seed").expect("required"))?;
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::Config(format!("nu must lie in (0, 1), got {nu}")));
    }
    let mut cfg = RunConfig {
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
        init: InitialCondition::parse("gaussian")?,
        sweep: experiment.default_sweep(n),
        k_ref: 64.0,
        surrogate_ratio: 16,
        moments: vec![2, 4],
        theta_min: 1e-4,
    };
    if let Some(v) = get("L") {
        cfg.l = parse_value("L", v)?;
    }
    if let Some(v) = get("observe") {
        cfg.observe = parse_list("observe", v)?;
    }
    if let Some(v) = get("replicates") {
        cfg.replicates = parse_value("replicates", v)?;
    }
    if let Some(v) = get("reference") {
        cfg.reference = FlowMode::parse(v)?;
    }
    if let Some(v) = get("refresh") {
        cfg.refresh = parse_value("refresh", v)?;
    }
    if let Some(v) = get("init") {
        cfg.init = InitialCondition::parse(v).map_err(|e| Error::Config(e.to_string()))?;
    }
    if let Some(v) = get("sweep") {
        cfg.sweep = parse_list("sweep", v)?;
    }
    if let Some(v) = get("k_ref") {
        cfg.k_ref = parse_value("k_ref", v)?;
    }
    if let Some(v) = get("surrogate_ratio") {
        cfg.surrogate_ratio = parse_value("surrogate_ratio", v)?;
    }
    if let Some(v) = get("moments") {
        cfg.moments = parse_list("moments", v)?;
    }
    if let Some(v) = get("theta_min") {
        cfg.theta_min = parse_value("theta_min", v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    config_from_map(&parse_config_map(text)?)
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Canonical text form: every key, fixed order, shortest round-trip numbers.
pub fn format_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    put("experiment", cfg.experiment.label().into());
    put("nu", cfg.nu.to_string());
    put("N", cfg.n.to_string());
    put("K", cfg.k.to_string());
    put("L", cfg.l.to_string());
    put("t_end", cfg.t_end.to_string());
    put("observe", join(&cfg.observe));
    put("replicates", cfg.replicates.to_string());
    put("reference", cfg.reference.label());
    put("refresh", cfg.refresh.to_string());
    put("seed", cfg.seed.to_string());
    put("init", cfg.init.label());
    put("sweep", join(&cfg.sweep));
    put("k_ref", cfg.k_ref.to_string());
    put("surrogate_ratio", cfg.surrogate_ratio.to_string());
    put("moments", join(&cfg.moments));
    put("theta_min", cfg.theta_min.to_string());
    s
}

/// Hex SHA-256 of the canonical configuration text.
pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(format_config(cfg).as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn save_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    atomic_write(path, format_config(cfg).as_bytes())
}

/// Write through a temporary file in the target directory and rename it
/// into place, so readers never see a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// `$KAC_OUT_DIR`, or `kac-out` when unset.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn opt<T: std::fmt::Display>(x: &Option<T>) -> String {
    x.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Metrics table: schema line, header, one row per record; LF endings.
pub fn format_records_csv(records: &[MetricsRecord]) -> String {
    let mut s = String::new();
    s.push_str(METRICS_SCHEMA);
    s.push('\n');
    s.push_str(&CSV_COLUMNS.join(","));
    s.push('\n');
    for r in records {
        let fields = [
            csv_field(&r.run_id),
            csv_field(&r.experiment),
            r.nu.to_string(),
            r.n.to_string(),
            r.k.to_string(),
            opt(&r.l),
            opt(&r.tagged),
            opt(&r.t),
            opt(&r.replicate),
            csv_field(&r.metric),
            r.value.to_string(),
            opt(&r.stderr),
            r.seed.to_string(),
            opt(&r.surrogate_m),
            csv_field(&r.config_hash),
        ];
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

pub fn save_results(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    if let Some(r) = records.iter().find(|r| r.config_hash.is_empty()) {
        return Err(Error::Domain(format!("record '{}' lacks provenance", r.metric)));
    }
    atomic_write(path, format_records_csv(records).as_bytes())
}

pub fn save_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

/// A list of velocities with its provenance header.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub seed: u64,
    pub k: f64,
    pub nu: f64,
    pub velocities: Vec<Velocity>,
}

const SNAP_MAGIC: &[u8; 8] = b"KACSNAP1";
const SNAP_TEXT_HEADER: &str = "# kac-snapshot v1";

impl Snapshot {
    pub fn n(&self) -> usize {
        self.velocities.len()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "{SNAP_TEXT_HEADER}\n# N={} t={} seed={} K={} nu={}\nvx,vy,vz\n",
            self.n(),
            self.t,
            self.seed,
            self.k,
            self.nu
        );
        for v in &self.velocities {
            let _ = writeln!(s, "{},{},{}", v.x, v.y, v.z);
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(48 + 24 * self.n());
        b.extend_from_slice(SNAP_MAGIC);
        b.extend_from_slice(&(self.n() as u64).to_le_bytes());
        b.extend_from_slice(&self.t.to_le_bytes());
        b.extend_from_slice(&self.seed.to_le_bytes());
        b.extend_from_slice(&self.k.to_le_bytes());
        b.extend_from_slice(&self.nu.to_le_bytes());
        for v in &self.velocities {
            for c in [v.x, v.y, v.z] {
                b.extend_from_slice(&c.to_le_bytes());
            }
        }
        b
    }

    /// Parse either layout, recognised by its first bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(SNAP_MAGIC) {
            return Self::from_binary(bytes);
        }
        let text = std::str::from_utf8(bytes).map_err(|_| Error::Format("snapshot is neither binary nor UTF-8".into()))?;
        Self::from_csv(text)
    }

    fn from_binary(bytes: &[u8]) -> Result<Self> {
        let word = |i: usize| -> Result<[u8; 8]> {
            bytes
                .get(8 + 8 * i..16 + 8 * i)
                .map(|s| s.try_into().expect("eight bytes"))
                .ok_or_else(|| Error::Format("truncated binary snapshot".into()))
        };
        let n = u64::from_le_bytes(word(0)?) as usize;
        let t = f64::from_le_bytes(word(1)?);
        let seed = u64::from_le_bytes(word(2)?);
        let k = f64::from_le_bytes(word(3)?);
        let nu = f64::from_le_bytes(word(4)?);
        let expected = 48 + 24 * n;
        if bytes.len() != expected {
            return Err(Error::Format(format!("binary snapshot should be {expected} bytes, got {}", bytes.len())));
        }
        let velocities = (0..n)
            .map(|i| {
                let c = |j: usize| f64::from_le_bytes(word(5 + 3 * i + j).expect("length checked"));
                Velocity::new(c(0), c(1), c(2))
            })
            .collect();
        Ok(Snapshot { t, seed, k, nu, velocities })
    }

    fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(SNAP_TEXT_HEADER) {
            return Err(Error::Format(format!("snapshot must start with '{SNAP_TEXT_HEADER}'")));
        }
        let meta = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| Error::Format("missing snapshot metadata line".into()))?;
        let mut fields = BTreeMap::new();
        for item in meta.split_whitespace() {
            let (k, v) = item.split_once('=').ok_or_else(|| Error::Format(format!("bad metadata item '{item}'")))?;
            fields.insert(k, v);
        }
        let field = |k: &str| -> Result<&str> {
            fields.get(k).copied().ok_or_else(|| Error::Format(format!("snapshot metadata lacks '{k}'")))
        };
        let num = |k: &str| -> Result<f64> { field(k)?.parse().map_err(|_| Error::Format(format!("bad value for '{k}'"))) };
        let n: usize = field("N")?.parse().map_err(|_| Error::Format("bad value for 'N'".into()))?;
        let seed: u64 = field("seed")?.parse().map_err(|_| Error::Format("bad value for 'seed'".into()))?;
        if lines.next().map(str::trim) != Some("vx,vy,vz") {
            return Err(Error::Format("missing column header 'vx,vy,vz'".into()));
        }
        let velocities = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let c: Vec<f64> = l
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Format(format!("bad velocity row '{l}'")))?;
                match c[..] {
                    [x, y, z] => Ok(Velocity::new(x, y, z)),
                    _ => Err(Error::Format(format!("velocity row needs three columns: '{l}'"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if velocities.len() != n {
            return Err(Error::Format(format!("header says N={n} but {} rows follow", velocities.len())));
        }
        Ok(Snapshot { t: num("t")?, seed, k: num("K")?, nu: num("nu")?, velocities })
    }
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    Snapshot::from_bytes(&std::fs::read(path)?)
}

/// Binary layout when the extension is `bin`, text otherwise.
pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    if path.extension().is_some_and(|e| e == "bin") {
        atomic_write(path, &snap.to_bytes())
    } else {
        atomic_write(path, snap.to_csv().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "nu=0.5\nN=128\nK=20\nt_end=1\nseed=1\nexperiment=simulate\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.n, 128);
        assert_eq!(c.l, 20.0);
        assert_eq!(c.observe, vec![1.0]);
        assert_eq!(c.replicates, 1);
        assert_eq!(c.refresh, 1);
        assert_eq!(c.reference, FlowMode::StationaryGaussian);
        assert_eq!(c.moments, vec![2, 4]);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(parse_config(&MINIMAL.replace("nu=0.5", "nu=1.5")), Err(Error::Config(_))));
        assert!(matches!(parse_config(&MINIMAL.replace("seed=1\n", "")), Err(Error::Config(_))));
        assert!(matches!(parse_config(&MINIMAL.replace("N=128", "N=many")), Err(Error::Config(_))));
        assert!(matches!(parse_config(&format!("{MINIMAL}colour=red\n")), Err(Error::Config(_))));
        assert!(matches!(parse_config(&format!("{MINIMAL}N=3\n")), Err(Error::Config(_))));
    }

    #[test]
    fn config_round_trip_is_byte_identical() {
        let text = "# decoupling sweep\nexperiment = decoupling\nnu = 0.3\nN = 1000\nK = 25.5\nL = 12\n\
                    t_end = 1\nobserve = 0.25,0.5,1\nreplicates = 200\nreference = self-consistent:1200\n\
                    refresh = 77\nseed = 18446744073709551615\ninit = student-t-sphere:6\nsweep = 1,10,100\n\
                    k_ref = 128\nsurrogate_ratio = 4\nmoments = 2,4,6\ntheta_min = 0.001\n";
        let a = format_config(&parse_config(text).unwrap());
        let b = format_config(&parse_config(&a).unwrap());
        assert_eq!(a, b);
        assert_eq!(config_hash(&parse_config(&a).unwrap()).len(), 64);
    }

    #[test]
    fn snapshot_layouts_round_trip() {
        let s = Snapshot {
            t: 1.25,
            seed: 7,
            k: 20.0,
            nu: 0.5,
            velocities: vec![Velocity::new(0.1, -2.0, 1e-300), Velocity::new(std::f64::consts::PI, 0.0, -0.0)],
        };
        assert_eq!(Snapshot::from_bytes(&s.to_bytes()).unwrap(), s);
        assert_eq!(Snapshot::from_bytes(s.to_csv().as_bytes()).unwrap(), s);
        assert!(Snapshot::from_bytes(&s.to_bytes()[..50]).is_err());
        assert!(Snapshot::from_bytes(b"vx,vy,vz\n1,2,3\n").is_err());
    }

    #[test]
    fn atomic_write_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("out.csv");
        let cfg = parse_config(MINIMAL).unwrap();
        let rec = MetricsRecord {
            run_id: "simulate-x".into(),
            experiment: "simulate".into(),
            nu: 0.5,
            n: 128,
            k: 20.0,
            l: None,
            tagged: None,
            t: Some(1.0),
            replicate: Some(0),
            metric: "m4".into(),
            value: 1.5,
            stderr: None,
            seed: 1,
            surrogate_m: None,
            config_hash: config_hash(&cfg),
        };
        save_results(&path, &[rec.clone()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], METRICS_SCHEMA);
        assert_eq!(lines[1].split(',').count(), CSV_COLUMNS.len());
        assert!(lines[2].starts_with("simulate-x,simulate,0.5,128,20,,,1,0,m4,1.5,,1,,"));
        assert!(!text.contains('\r'));
        let bad = MetricsRecord { config_hash: String::new(), ..rec };
        assert!(save_results(&path, &[bad]).is_err());
    }
}
