use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::BenchError;
use crate::inner::{CvSettings, StopRule, ToleranceSchedule, DEFAULT_INNER_MAX_ITERS};
use crate::model::{LipschitzMode, LossKind};
use crate::solvers::{Algorithm, BetaReference};

/// Environment variable that overrides the output root.
pub const OUTPUT_ROOT_ENV: &str = "DIPGM_OUTPUT_ROOT";

/// Raw `key = value` pairs, in file order, with their line numbers.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(BenchError::Config { line: line_no, msg: format!("expected `key = value`, got `{line}`") });
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty()
                || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
                || key.starts_with('.')
                || key.ends_with('.')
                || key.contains("..")
            {
                return Err(BenchError::Config { line: line_no, msg: format!("bad key `{key}`") });
            }
            if value.is_empty() {
                return Err(BenchError::Config { line: line_no, msg: format!("empty value for `{key}`") });
            }
            if entries.insert(key.to_string(), (line_no, value.to_string())).is_some() {
                return Err(BenchError::Config { line: line_no, msg: format!("duplicate key `{key}`") });
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, BenchError>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| key_err(key, format!("`{v}`: {e}"))),
        }
    }

    fn parse_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, BenchError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).map(|v| v.parse().map_err(|e| key_err(key, format!("`{v}`: {e}")))).transpose()
    }
}

fn key_err(key: &str, msg: impl Into<String>) -> BenchError {
    BenchError::Key { key: key.to_string(), msg: msg.into() }
}

const KNOWN_KEYS: &[&str] = &[
    "experiment.id",
    "experiment.seed",
    "experiment.repetitions",
    "output.dir",
    "algorithm",
    "graph.kind",
    "graph.n_agents",
    "graph.connectivity",
    "graph.seed",
    "graph.file",
    "data.source",
    "data.path",
    "data.n_features",
    "data.n_samples",
    "data.noise_std",
    "data.density",
    "data.label_flip",
    "data.seed",
    "loss.kind",
    "loss.l2",
    "loss.lipschitz",
    "reg.kind",
    "reg.weight",
    "reg.d",
    "step.tau",
    "step.tau_beta",
    "step.beta",
    "step.beta_reference",
    "schedule.kind",
    "schedule.eps0",
    "inner.t1",
    "inner.t2",
    "inner.max_iters",
    "inner.warm_start",
    "inner.warm_dual",
    "inner.stop",
    "inner.baseline_tol",
    "stop.max_iters",
    "stop.rel_err",
    "stop.reference_tol",
    "stop.reference_max_iters",
    "divergence_demo",
];

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Random { n_agents: usize, connectivity: f64, seed: u64 },
    Ring(usize),
    Path(usize),
    Complete(usize),
    Star(usize),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Synthetic { n_features: usize, n_samples: usize, noise_std: f64, density: f64, label_flip: f64, seed: u64 },
    Libsvm { path: PathBuf, n_features: Option<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DSource {
    RandomGaussian { rows: usize, cols: usize, seed: u64 },
    Csv(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegKind {
    None,
    L1,
    L2,
    GeneralizedLasso,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegSpec {
    pub kind: RegKind,
    pub weight: f64,
    pub d: Option<DSource>,
}

/// `τ` as written in the config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauSpec {
    /// `c/L_i`: uncoordinated.
    PerAgent(f64),
    /// `c/L_F` (or `c/L_max`): shared, `L_F = max_i L_i`.
    Shared(f64),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSpec {
    pub tau: TauSpec,
    pub tau_beta: f64,
    pub beta: Option<f64>,
    pub beta_reference: BetaReference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub seed: u64,
    pub repetitions: usize,
    pub output_dir: PathBuf,
    pub algorithms: Vec<Algorithm>,
    pub graph: GraphSpec,
    pub data: DataSpec,
    pub loss: LossKind,
    pub l2_weight: f64,
    pub lipschitz_mode: LipschitzMode,
    pub reg: RegSpec,
    pub step: StepSpec,
    pub schedules: Vec<ToleranceSchedule>,
    pub inner: CvSettings,
    pub baseline_tol: f64,
    pub max_iters: usize,
    pub rel_err_target: Option<f64>,
    pub reference_tol: f64,
    pub reference_max_iters: usize,
    pub divergence_demo: bool,
}

fn parse_bool(key: &str, v: &str) -> Result<bool, BenchError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(key_err(key, format!("expected a boolean, got `{v}`"))),
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, BenchError> {
    v.trim().parse::<f64>().map_err(|e| key_err(key, format!("`{v}`: {e}")))
}

pub fn parse_tau(v: &str) -> Result<TauSpec, BenchError> {
    let v = v.replace(' ', "");
    if let Some((num, den)) = v.split_once('/') {
        let c = parse_f64("step.tau", num)?;
        return match den {
            "L_i" | "Li" => Ok(TauSpec::PerAgent(c)),
            "L_F" | "LF" | "L_max" => Ok(TauSpec::Shared(c)),
            _ => Err(key_err("step.tau", format!("unknown denominator `{den}` (use L_i or L_F)"))),
        };
    }
    Ok(TauSpec::Value(parse_f64("step.tau", &v)?))
}

/// `random-gaussian 10x20 seed=3` or `csv path/to/d.csv`.
pub fn parse_d_source(v: &str, base: &Path) -> Result<DSource, BenchError> {
    let mut parts = v.split_whitespace();
    match parts.next() {
        Some("random-gaussian") => {
            let shape = parts.next().ok_or_else(|| key_err("reg.d", "missing shape `RxC`"))?;
            let (r, c) = shape.split_once(['x', 'X', '×']).ok_or_else(|| key_err("reg.d", format!("bad shape `{shape}`")))?;
            let rows = r.parse().map_err(|_| key_err("reg.d", format!("bad row count `{r}`")))?;
            let cols = c.parse().map_err(|_| key_err("reg.d", format!("bad column count `{c}`")))?;
            let mut seed = 0;
            for p in parts {
                match p.strip_prefix("seed=") {
                    Some(s) => seed = s.parse().map_err(|_| key_err("reg.d", format!("bad seed `{s}`")))?,
                    None => return Err(key_err("reg.d", format!("unexpected `{p}`"))),
                }
            }
            Ok(DSource::RandomGaussian { rows, cols, seed })
        }
        Some("csv") => {
            let p = parts.next().ok_or_else(|| key_err("reg.d", "missing csv path"))?;
            Ok(DSource::Csv(resolve(base, p)))
        }
        _ => Err(key_err("reg.d", format!("expected `random-gaussian RxC [seed=S]` or `csv PATH`, got `{v}`"))),
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() { p } else { base.join(p) }
}

/// `constant`, `inv_k2`, ... optionally suffixed `:eps0`.
fn parse_schedules(v: &str, default_eps0: f64) -> Result<Vec<ToleranceSchedule>, BenchError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (name, eps0) = match item.split_once(':') {
                Some((n, e)) => (n.trim(), parse_f64("schedule.kind", e)?),
                None => (item, default_eps0),
            };
            ToleranceSchedule::from_name(name, eps0).ok_or_else(|| key_err("schedule.kind", format!("unknown schedule `{name}`")))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_str_with_base(&text, base)
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn from_str_with_base(text: &str, base: &Path) -> Result<Self, BenchError> {
        let raw = RawConfig::parse(text)?;
        if let Some(k) = raw.keys().find(|k| !KNOWN_KEYS.contains(k) && !k.starts_with("schedule.eps0.")) {
            return Err(key_err(k, "unknown key"));
        }
        let seed: u64 = raw.parse_or("experiment.seed", 0)?;
        let id = raw.get("experiment.id").unwrap_or("experiment").to_string();
        if !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(key_err("experiment.id", "use letters, digits, `_` or `-`"));
        }
        let repetitions: usize = raw.parse_or("experiment.repetitions", 1)?;
        if repetitions == 0 {
            return Err(key_err("experiment.repetitions", "must be at least 1"));
        }
        let output_dir = match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(raw.get("output.dir").unwrap_or(&id)),
            None => resolve(base, raw.get("output.dir").unwrap_or("out")),
        };

        let algorithms = raw
            .get("algorithm")
            .unwrap_or("dipgm")
            .split(',')
            .map(str::trim)
            .map(|a| Algorithm::from_name(a).ok_or_else(|| key_err("algorithm", format!("unknown algorithm `{a}`"))))
            .collect::<Result<Vec<_>, _>>()?;

        let n_agents: usize = raw.parse_or("graph.n_agents", 10)?;
        let graph = match raw.get("graph.kind").unwrap_or("random") {
            "random" => GraphSpec::Random {
                n_agents,
                connectivity: raw.parse_or("graph.connectivity", 0.5)?,
                seed: raw.parse_or("graph.seed", seed)?,
            },
            "ring" => GraphSpec::Ring(n_agents),
            "path" => GraphSpec::Path(n_agents),
            "complete" => GraphSpec::Complete(n_agents),
            "star" => GraphSpec::Star(n_agents),
            "file" => {
                let p = raw.get("graph.file").ok_or_else(|| key_err("graph.file", "required when graph.kind = file"))?;
                GraphSpec::File(resolve(base, p))
            }
            other => return Err(key_err("graph.kind", format!("unknown graph kind `{other}`"))),
        };

        let data = match raw.get("data.source").unwrap_or("synthetic") {
            "synthetic" => DataSpec::Synthetic {
                n_features: raw.parse_or("data.n_features", 20)?,
                n_samples: raw.parse_or("data.n_samples", 300)?,
                noise_std: raw.parse_or("data.noise_std", 0.1)?,
                density: raw.parse_or("data.density", 0.5)?,
                label_flip: raw.parse_or("data.label_flip", 0.0)?,
                seed: raw.parse_or("data.seed", seed)?,
            },
            "libsvm" => {
                let p = raw.get("data.path").ok_or_else(|| key_err("data.path", "required when data.source = libsvm"))?;
                DataSpec::Libsvm { path: resolve(base, p), n_features: raw.parse_opt("data.n_features")? }
            }
            other => return Err(key_err("data.source", format!("unknown data source `{other}`"))),
        };

        let loss = match raw.get("loss.kind").unwrap_or("linear") {
            "linear" => LossKind::LinearRegression,
            "logistic" => LossKind::LogisticRegression,
            other => return Err(key_err("loss.kind", format!("unknown loss `{other}`"))),
        };
        let lipschitz_mode = match raw.get("loss.lipschitz").unwrap_or("exact") {
            "exact" => LipschitzMode::Exact,
            "loose" => LipschitzMode::Loose,
            other => return Err(key_err("loss.lipschitz", format!("expected exact or loose, got `{other}`"))),
        };

        let reg_kind = match raw.get("reg.kind").unwrap_or("l1") {
            "none" => RegKind::None,
            "l1" => RegKind::L1,
            "l2" | "l2norm" => RegKind::L2,
            "gl" | "generalized_lasso" => RegKind::GeneralizedLasso,
            other => return Err(key_err("reg.kind", format!("unknown regularizer `{other}`"))),
        };
        let d = raw.get("reg.d").map(|v| parse_d_source(v, base)).transpose()?;
        if reg_kind == RegKind::GeneralizedLasso && d.is_none() {
            return Err(key_err("reg.d", "required when reg.kind = gl"));
        }
        let reg = RegSpec { kind: reg_kind, weight: raw.parse_or("reg.weight", 0.01)?, d };

        let step = StepSpec {
            tau: parse_tau(raw.get("step.tau").unwrap_or("1.99/L_i"))?,
            tau_beta: raw.parse_or("step.tau_beta", 0.5)?,
            beta: raw.parse_opt("step.beta")?,
            beta_reference: match raw.get("step.beta_reference").unwrap_or("max") {
                "max" => BetaReference::MaxTau,
                "min" => BetaReference::MinTau,
                other => return Err(key_err("step.beta_reference", format!("expected max or min, got `{other}`"))),
            },
        };

        let eps0: f64 = raw.parse_or("schedule.eps0", 1e-10)?;
        let mut schedules = parse_schedules(raw.get("schedule.kind").unwrap_or("constant"), eps0)?;
        for s in schedules.iter_mut() {
            if let Some(v) = raw.parse_opt::<f64>(&format!("schedule.eps0.{}", s.name()))? {
                *s = ToleranceSchedule::from_name(s.name(), v).expect("known name");
            }
        }
        if schedules.is_empty() {
            return Err(key_err("schedule.kind", "no schedules listed"));
        }

        let inner = CvSettings {
            t1: raw.parse_opt("inner.t1")?,
            t2: raw.parse_opt("inner.t2")?,
            max_iters: raw.parse_or("inner.max_iters", DEFAULT_INNER_MAX_ITERS)?,
            warm_primal: raw.get("inner.warm_start").map(|v| parse_bool("inner.warm_start", v)).transpose()?.unwrap_or(true),
            warm_dual: raw.get("inner.warm_dual").map(|v| parse_bool("inner.warm_dual", v)).transpose()?.unwrap_or(false),
            stop: match raw.get("inner.stop").unwrap_or("step") {
                "step" => StopRule::StepNorm,
                "certified" => StopRule::Certified,
                other => return Err(key_err("inner.stop", format!("expected step or certified, got `{other}`"))),
            },
        };

        let divergence_demo = raw.get("divergence_demo").map(|v| parse_bool("divergence_demo", v)).transpose()?.unwrap_or(false);

        Ok(Self {
            id,
            seed,
            repetitions,
            output_dir,
            algorithms,
            graph,
            data,
            loss,
            l2_weight: raw.parse_or("loss.l2", 0.0)?,
            lipschitz_mode,
            reg,
            step,
            schedules,
            inner,
            baseline_tol: raw.parse_or("inner.baseline_tol", 1e-10)?,
            max_iters: raw.parse_or("stop.max_iters", 1000)?,
            rel_err_target: raw.parse_opt("stop.rel_err")?,
            reference_tol: raw.parse_or("stop.reference_tol", super::DEFAULT_REFERENCE_TOL)?,
            reference_max_iters: raw.parse_or("stop.reference_max_iters", super::DEFAULT_REFERENCE_MAX_ITERS)?,
            divergence_demo,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_defaults() {
        let cfg = ExperimentConfig::from_str_with_base("# header\nexperiment.id = demo # trailing\n", Path::new(".")).unwrap();
        assert_eq!(cfg.id, "demo");
        assert_eq!(cfg.algorithms, vec![Algorithm::Dipgm]);
        assert_eq!(cfg.step.tau, TauSpec::PerAgent(1.99));
        assert_eq!(cfg.schedules, vec![ToleranceSchedule::Constant(1e-10)]);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(ExperimentConfig::from_str_with_base("colour = red", Path::new(".")).is_err());
        let err = RawConfig::parse("a = 1\na = 2").unwrap_err();
        assert!(matches!(err, BenchError::Config { line: 2, .. }));
        assert!(matches!(RawConfig::parse("novalue").unwrap_err(), BenchError::Config { line: 1, .. }));
    }

    #[test]
    fn schedule_lists_and_overrides() {
        let cfg = ExperimentConfig::from_str_with_base(
            "schedule.kind = constant, inv_k2:1e-3, step_over_ln_k\nschedule.eps0 = 1e-8\nschedule.eps0.step_over_ln_k = 0.5\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(
            cfg.schedules,
            vec![
                ToleranceSchedule::Constant(1e-8),
                ToleranceSchedule::InvKSquared(1e-3),
                ToleranceSchedule::StepOverLnK(0.5)
            ]
        );
    }

    #[test]
    fn tau_and_d_grammar() {
        assert_eq!(parse_tau("1.95 / L_F").unwrap(), TauSpec::Shared(1.95));
        assert_eq!(parse_tau("0.01").unwrap(), TauSpec::Value(0.01));
        assert!(parse_tau("1/L_x").is_err());
        assert_eq!(
            parse_d_source("random-gaussian 10x20 seed=3", Path::new(".")).unwrap(),
            DSource::RandomGaussian { rows: 10, cols: 20, seed: 3 }
        );
        assert_eq!(parse_d_source("csv d.csv", Path::new("/tmp")).unwrap(), DSource::Csv(PathBuf::from("/tmp/d.csv")));
    }

    #[test]
    fn gl_requires_d() {
        assert!(ExperimentConfig::from_str_with_base("reg.kind = gl", Path::new(".")).is_err());
    }
}
