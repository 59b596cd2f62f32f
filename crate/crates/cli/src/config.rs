//! Experiment configuration files.
//!
//! A config is a TOML document with four sections: `[problem]` describes
//! the objective and its generator parameters, `[topology]` the tree,
//! `[algorithm]` the method and its step schedule, and `[run]` the horizon,
//! seeds, sampling stride, and engine. Unknown keys anywhere are rejected,
//! and every value is validated before any computation starts.
//!
//! `n`, `B`, and `tag` may be lists; `sweep` expands their Cartesian
//! product (tag, then n, then B, then seed — a fixed order so output is
//! deterministic), while `run` insists on scalars. Baselines ignore the
//! `B` axis entirely: a line without a tree has no branch size.

use serde::Deserialize;

use btpp_core::algorithms::{ScheduleKind, StepSizeSchedule};
use btpp_core::simulator::AlgorithmTag;
use btpp_core::topology::build_bary_tree;
use btpp_core::{Engine, ProblemSpec, RunConfig};

/// A scalar or a list of scalars; sections use this for sweepable axes.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn items(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
    fn is_list(&self) -> bool {
        matches!(self, OneOrMany::Many(_))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    problem: ProblemSection,
    topology: Option<TopologySection>,
    algorithm: AlgorithmSection,
    run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSection {
    #[serde(rename = "type")]
    kind: String,
    n: OneOrMany<usize>,
    p: usize,
    #[serde(rename = "J")]
    samples: Option<usize>,
    sigma_h: Option<f64>,
    reg_coeff: Option<f64>,
    kappa: Option<f64>,
    noise_sigma: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologySection {
    #[serde(rename = "B")]
    branch: OneOrMany<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlgorithmSection {
    tag: Option<OneOrMany<String>>,
    kind: Option<String>,
    gamma: Option<f64>,
    decay_factor: Option<f64>,
    decay_interval: Option<u64>,
    #[serde(default)]
    rescale_by_n: bool,
    value_gap: Option<f64>,
    noise_var: Option<f64>,
    smoothness: Option<f64>,
    strong_convexity: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    #[serde(rename = "T")]
    horizon: u64,
    seeds: Vec<u64>,
    stride: Option<u64>,
    engine: Option<String>,
}

/// Reads and parses a config file; parse errors keep toml's line context.
pub fn load(path: &str) -> Result<ConfigFile, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {path}: {e}"))?;
    toml::from_str(&text).map_err(|e| format!("config {path}: {e}"))
}

/// Expands a config into concrete runs. `allow_lists` distinguishes `sweep`
/// (Cartesian product) from `run` (scalars only, except the seed list).
/// `seeds_override` is the --seeds flag.
pub fn plan(
    cfg: &ConfigFile,
    allow_lists: bool,
    seeds_override: Option<Vec<u64>>,
) -> Result<Vec<RunConfig>, String> {
    let tag_axis = cfg
        .algorithm
        .tag
        .clone()
        .unwrap_or(OneOrMany::One("btpp".to_string()));

    if !allow_lists {
        if tag_axis.is_list() {
            return Err("run takes a single algorithm tag; use sweep for lists".into());
        }
        if cfg.problem.n.is_list() {
            return Err("run takes a single n; use sweep for lists".into());
        }
        if let Some(t) = &cfg.topology {
            if t.branch.is_list() {
                return Err("run takes a single B; use sweep for lists".into());
            }
        }
    }

    let tags: Vec<AlgorithmTag> = tag_axis
        .items()
        .iter()
        .map(|s| s.parse().map_err(|e: btpp_core::Error| e.to_string()))
        .collect::<Result<_, _>>()?;

    let engine: Engine = cfg
        .run
        .engine
        .as_deref()
        .unwrap_or("matrix")
        .parse()
        .map_err(|e: btpp_core::Error| e.to_string())?;

    let seeds = seeds_override.unwrap_or_else(|| cfg.run.seeds.clone());
    if seeds.is_empty() {
        return Err("seeds list is empty".into());
    }

    let needs_tree = tags.contains(&AlgorithmTag::Btpp);
    let branches: Vec<usize> = match (&cfg.topology, needs_tree) {
        (Some(t), true) => t.branch.items(),
        (Some(_), false) => {
            return Err("[topology] given but no listed algorithm runs on a tree".into())
        }
        (None, true) => return Err("the tree method needs a [topology] section with B".into()),
        (None, false) => Vec::new(),
    };

    // metric sampling every 10 iterations unless asked otherwise
    let stride = cfg.run.stride.unwrap_or(10);

    let mut runs = Vec::new();
    for &tag in &tags {
        let tree_axis: Vec<Option<usize>> = if tag == AlgorithmTag::Btpp {
            branches.iter().map(|&b| Some(b)).collect()
        } else {
            vec![None]
        };
        for n in cfg.problem.n.items() {
            let problem = problem_spec(&cfg.problem, n)?;
            for &branch in &tree_axis {
                let schedule = schedule_for(&cfg.algorithm, &cfg.run, tag, n, branch)?;
                for &seed in &seeds {
                    let rc = RunConfig {
                        algorithm: tag,
                        problem: problem.clone(),
                        branch,
                        schedule: schedule.clone(),
                        horizon: cfg.run.horizon,
                        seed,
                        stride,
                        engine,
                    };
                    rc.validate().map_err(|e| e.to_string())?;
                    runs.push(rc);
                }
            }
        }
    }
    Ok(runs)
}

fn problem_spec(p: &ProblemSection, n: usize) -> Result<ProblemSpec, String> {
    let need = |v: Option<f64>, key: &str| {
        v.ok_or_else(|| format!("[problem] {} requires `{key}`", p.kind))
    };
    match p.kind.as_str() {
        "logistic" => {
            if p.kappa.is_some() || p.noise_sigma.is_some() {
                return Err("[problem] kappa/noise_sigma do not apply to logistic".into());
            }
            let spec = ProblemSpec::Logistic {
                agents: n,
                dim: p.p,
                samples: p
                    .samples
                    .ok_or("[problem] logistic requires `J`")?,
                heterogeneity: need(p.sigma_h, "sigma_h")?,
                reg_coeff: need(p.reg_coeff, "reg_coeff")?,
                batch: 1,
            };
            spec.validate().map_err(|e| e.to_string())?;
            Ok(spec)
        }
        "quadratic" => {
            if p.samples.is_some() || p.sigma_h.is_some() || p.reg_coeff.is_some() {
                return Err("[problem] J/sigma_h/reg_coeff do not apply to quadratic".into());
            }
            let spec = ProblemSpec::Quadratic {
                agents: n,
                dim: p.p,
                condition: need(p.kappa, "kappa")?,
                noise_stddev: need(p.noise_sigma, "noise_sigma")?,
            };
            spec.validate().map_err(|e| e.to_string())?;
            Ok(spec)
        }
        other => Err(format!("[problem] unknown type `{other}`")),
    }
}

/// Builds the step schedule for one (tag, n, B) coordinate. The horizon
/// kinds derive the tree depth from the coordinate, and the γ/n rescale is
/// a fairness adjustment for the tree method only -- in a mixed sweep the
/// baselines keep the plain step.
fn schedule_for(
    a: &AlgorithmSection,
    r: &RunSection,
    tag: AlgorithmTag,
    n: usize,
    branch: Option<usize>,
) -> Result<StepSizeSchedule, String> {
    let kind = a.kind.as_deref().unwrap_or("constant");
    let reject = |field: Option<f64>, key: &str| {
        if field.is_some() {
            Err(format!("[algorithm] `{key}` does not apply to kind = {kind}"))
        } else {
            Ok(())
        }
    };
    let need = |v: Option<f64>, key: &str| {
        v.ok_or_else(|| format!("[algorithm] kind = {kind} requires `{key}`"))
    };
    let depth = || -> Result<usize, String> {
        let b = branch.ok_or("horizon-tuned schedules apply to the tree method only")?;
        Ok(build_bary_tree(n, b).map_err(|e| e.to_string())?.depth())
    };

    let schedule_kind = match kind {
        "constant" => {
            reject(a.decay_factor, "decay_factor")?;
            if a.decay_interval.is_some() {
                return Err("[algorithm] `decay_interval` does not apply to kind = constant".into());
            }
            reject(a.value_gap, "value_gap")?;
            reject(a.noise_var, "noise_var")?;
            reject(a.smoothness, "smoothness")?;
            reject(a.strong_convexity, "strong_convexity")?;
            need(a.gamma, "gamma")?;
            ScheduleKind::Constant
        }
        "decayed" => {
            reject(a.value_gap, "value_gap")?;
            reject(a.noise_var, "noise_var")?;
            reject(a.smoothness, "smoothness")?;
            reject(a.strong_convexity, "strong_convexity")?;
            need(a.gamma, "gamma")?;
            ScheduleKind::Decayed {
                factor: need(a.decay_factor, "decay_factor")?,
                interval: a
                    .decay_interval
                    .ok_or("[algorithm] kind = decayed requires `decay_interval`")?,
            }
        }
        "nonconvex_horizon" => {
            reject(a.gamma, "gamma")?;
            reject(a.decay_factor, "decay_factor")?;
            reject(a.strong_convexity, "strong_convexity")?;
            ScheduleKind::NonconvexHorizon {
                value_gap: need(a.value_gap, "value_gap")?,
                noise_var: need(a.noise_var, "noise_var")?,
                smoothness: need(a.smoothness, "smoothness")?,
                depth: depth()?,
                horizon: r.horizon,
            }
        }
        "strongly_convex_horizon" => {
            reject(a.gamma, "gamma")?;
            reject(a.decay_factor, "decay_factor")?;
            reject(a.value_gap, "value_gap")?;
            reject(a.noise_var, "noise_var")?;
            ScheduleKind::StronglyConvexHorizon {
                smoothness: need(a.smoothness, "smoothness")?,
                strong_convexity: need(a.strong_convexity, "strong_convexity")?,
                depth: depth()?,
                horizon: r.horizon,
            }
        }
        other => return Err(format!("[algorithm] unknown kind `{other}`")),
    };

    let schedule = StepSizeSchedule {
        kind: schedule_kind,
        base: a.gamma.unwrap_or(0.0),
        rescale_by_n: a.rescale_by_n && tag == AlgorithmTag::Btpp,
        agents: n,
    };
    schedule.validate().map_err(|e| e.to_string())?;
    Ok(schedule)
}

/// Parses the --seeds flag: comma-separated integers.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<u64>()
                .map_err(|_| format!("bad seed `{part}` in --seeds"))
        })
        .collect()
}
