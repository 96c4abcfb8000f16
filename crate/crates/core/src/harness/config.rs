//! Experiment configuration: one JSON document per experiment.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compressors::CompressorSpec;
use crate::error::{Error, Result};
use crate::optimizer::{make_schedule, BoundInputs, EffectiveVariance, Mode, RunConfig, Schedule};
use crate::problems::{make_counterexample, make_random_quadratic, ProblemInstance, RandomQuadraticParams};
use crate::sampling::SamplingScheme;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProblemSpec {
    Counterexample { t: f64 },
    RandomQuadratic(RandomQuadraticParams),
    /// A serialized [`ProblemInstance`].
    File { path: PathBuf },
}

impl ProblemSpec {
    pub fn build(&self, base: &Path) -> Result<ProblemInstance> {
        match self {
            ProblemSpec::Counterexample { t } => make_counterexample(*t),
            ProblemSpec::RandomQuadratic(params) => make_random_quadratic(params),
            ProblemSpec::File { path } => {
                let path = base.join(path);
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SamplingSpec {
    Full,
    BNice { b: usize },
    Independent { p: Vec<f64> },
    Explicit { table: Vec<(u32, f64)> },
    /// A text table of `bitmask probability` lines.
    ExplicitFile { path: PathBuf },
}

impl SamplingSpec {
    pub fn build(&self, n: usize, base: &Path) -> Result<SamplingScheme> {
        match self {
            SamplingSpec::Full => SamplingScheme::full(n),
            SamplingSpec::BNice { b } => SamplingScheme::b_nice(n, *b),
            SamplingSpec::Independent { p } => {
                if p.len() != n {
                    return Err(Error::param(format!("{} probabilities for {n} nodes", p.len())));
                }
                SamplingScheme::independent(p.clone())
            }
            SamplingSpec::Explicit { table } => SamplingScheme::explicit(n, table.clone()),
            SamplingSpec::ExplicitFile { path } => {
                let path = base.join(path);
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                SamplingScheme::parse_table(&text, n)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Constant { eta: f64 },
    /// `eta = factor / L_f`, with `L_f` the smoothness of `f`.
    InverseSmoothness { factor: f64 },
    /// Two-phase schedule with `a = mu` and `d = 2 delta_eff L`, where
    /// `delta_eff` comes from the compressor's nominal delta and the sampling.
    Theory,
    TwoPhase { a: f64, d: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mode: Mode,
    pub compressor: CompressorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingSpec>,
    pub schedule: ScheduleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_divergence: Option<bool>,
}

impl MethodSpec {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let mode = match self.mode {
                Mode::Plain => "",
                Mode::ErrorFeedback => "_ef",
                Mode::PartialParticipation => "_pp",
            };
            format!("{}{mode}", self.compressor)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub methods: Vec<MethodSpec>,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Iterations at which the summary reports `f_gap`. Defaults to `[0, T]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    /// Threshold for the iterations-to-target column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

pub const DEFAULT_SEEDS: [u64; 1] = [0];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Copy with every default spelled out.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.seeds = Some(self.seeds.clone().unwrap_or_else(|| DEFAULT_SEEDS.to_vec()));
        out.checkpoints = Some(self.checkpoints.clone().unwrap_or_else(|| vec![0, self.iterations]));
        for m in &mut out.methods {
            m.name = Some(m.display_name());
            m.expect_divergence = Some(m.expect_divergence.unwrap_or(false));
        }
        out
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| DEFAULT_SEEDS.to_vec())
    }

    /// Builds everything a run needs, reporting every problem found.
    pub fn prepare(&self) -> Result<PreparedExperiment> {
        let mut errors = Vec::new();
        if self.methods.is_empty() {
            errors.push("no methods configured".to_string());
        }
        if let Some(cps) = &self.checkpoints {
            for &c in cps.iter().filter(|&&c| c > self.iterations) {
                errors.push(format!("checkpoint {c} beyond iterations {}", self.iterations));
            }
        }
        if let Some(t) = self.target_gap {
            if !(t > 0.0) {
                errors.push(format!("target_gap {t} must be positive"));
            }
        }
        let problem = match self.problem.build(&self.base_dir) {
            Ok(p) => Some(p),
            Err(e) => {
                errors.push(format!("problem: {e}"));
                None
            }
        };

        let mut methods = Vec::new();
        let mut names = std::collections::HashSet::new();
        for (idx, spec) in self.methods.iter().enumerate() {
            let name = spec.display_name();
            let ctx = |msg: String| format!("method {idx} ({name}): {msg}");
            if !names.insert(name.clone()) {
                errors.push(ctx("duplicate method name".into()));
            }
            if name.is_empty() || name.contains(['/', '\\']) {
                errors.push(ctx("name must be non-empty and free of path separators".into()));
            }
            let Some(problem) = &problem else { continue };
            match prepare_method(spec, problem, self.iterations, &self.base_dir) {
                Ok(m) => methods.push(PreparedMethod { name, ..m }),
                Err(Error::Validation(list)) => errors.extend(list.into_iter().map(ctx)),
                Err(e) => errors.push(ctx(e.to_string())),
            }
        }
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }
        Ok(PreparedExperiment {
            problem: problem.expect("no errors"),
            methods,
            resolved: self.resolved(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct PreparedMethod {
    pub name: String,
    /// Run configuration with `seed` left at zero.
    pub run: RunConfig,
    pub expect_divergence: bool,
    /// Rate bound for this method, when the theory covers it: unbiased
    /// compressor, no error feedback, and the theory schedule.
    pub bound: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct PreparedExperiment {
    pub problem: ProblemInstance,
    pub methods: Vec<PreparedMethod>,
    pub resolved: ExperimentConfig,
}

fn prepare_method(spec: &MethodSpec, problem: &ProblemInstance, iterations: usize, base: &Path) -> Result<PreparedMethod> {
    let mut errors = Vec::new();
    let sampling = match &spec.sampling {
        Some(s) => match s.build(problem.n(), base) {
            Ok(s) => Some(s),
            Err(e) => {
                errors.push(format!("sampling: {e}"));
                None
            }
        },
        None => None,
    };
    let variance = effective_variance(spec, problem, sampling.as_ref());
    let consts = problem.constants();
    let schedule = match &spec.schedule {
        ScheduleSpec::Constant { eta } => Schedule::constant(*eta),
        ScheduleSpec::InverseSmoothness { factor } => Schedule::constant(factor / consts.l_f),
        ScheduleSpec::TwoPhase { a, d } => make_schedule(*a, *d, iterations),
        ScheduleSpec::Theory => match &variance {
            Ok(var) => make_schedule(consts.mu, 2.0 * var.delta_eff * consts.l, iterations),
            Err(e) => Err(Error::param(format!("theory schedule unavailable: {e}"))),
        },
    };
    let sampling_failed = spec.sampling.is_some() && sampling.is_none();
    let schedule = match schedule {
        Ok(s) => Some(s),
        Err(e) => {
            // A theory schedule can only fail downstream of a bad sampling.
            if !sampling_failed {
                errors.push(format!("schedule: {e}"));
            }
            None
        }
    };
    if sampling_failed {
        // Already reported; keep the mode/sampling check below quiet.
    } else if let Some(schedule) = &schedule {
        let run = RunConfig {
            mode: spec.mode,
            compressor: spec.compressor.clone(),
            sampling: sampling.clone(),
            schedule: schedule.clone(),
            iterations,
            seed: 0,
        };
        if let Err(e) = run.validate(problem) {
            match e {
                Error::Validation(list) => errors.extend(list),
                other => errors.push(other.to_string()),
            }
        }
    }
    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }
    let theory = matches!(spec.schedule, ScheduleSpec::Theory);
    let bound = variance.ok().filter(|_| theory).and_then(|var| {
        let inputs = BoundInputs {
            n: problem.n(),
            l: consts.l,
            mu: consts.mu,
            sigma2: problem.noise_sigma2(),
            heterogeneity: consts.heterogeneity,
            r0: problem.initial_distance_sq(),
            horizon: iterations,
        };
        crate::optimizer::theorem_bound(&var, &inputs).ok()
    });
    Ok(PreparedMethod {
        name: String::new(),
        run: RunConfig {
            mode: spec.mode,
            compressor: spec.compressor.clone(),
            sampling,
            schedule: schedule.expect("no errors"),
            iterations,
            seed: 0,
        },
        expect_divergence: spec.expect_divergence.unwrap_or(false),
        bound,
    })
}

/// `delta_n` or `(delta_S, a_S)` for an unbiased compressor without error
/// feedback, using the default ESO vector for samplings.
fn effective_variance(
    spec: &MethodSpec,
    problem: &ProblemInstance,
    sampling: Option<&SamplingScheme>,
) -> Result<EffectiveVariance> {
    if !spec.compressor.is_unbiased() {
        return Err(Error::param(format!("{} is biased", spec.compressor)));
    }
    let delta = spec.compressor.nominal_delta(problem.dim())?;
    match (spec.mode, sampling) {
        (Mode::Plain, _) => Ok(EffectiveVariance::full(delta, problem.n())),
        (Mode::PartialParticipation, Some(s)) => {
            let v = s.default_eso_vector()?;
            let (a_s, delta_s) = s.pp_variance_parameters(&v, delta)?;
            Ok(EffectiveVariance::partial(delta, a_s, delta_s))
        }
        (Mode::PartialParticipation, None) => Err(Error::param("no sampling configured")),
        (Mode::ErrorFeedback, _) => Err(Error::param("no guarantee evaluated for error feedback")),
    }
}

/// The comparison on the divergence counterexample: Top-1 without error
/// correction, Top-1 with error feedback and NU Rand-1, all at `eta = 1/L_f`
/// and all sending one coordinate per node per round.
pub fn counterexample_config(seeds: Vec<u64>, iterations: usize) -> ExperimentConfig {
    let method = |name: &str, mode, compressor, expect_divergence| MethodSpec {
        name: Some(name.to_string()),
        mode,
        compressor,
        sampling: None,
        schedule: ScheduleSpec::InverseSmoothness { factor: 1.0 },
        expect_divergence: Some(expect_divergence),
    };
    ExperimentConfig {
        problem: ProblemSpec::Counterexample { t: 1.0 },
        methods: vec![
            method("top1", Mode::Plain, CompressorSpec::TopK { k: 1 }, true),
            method("top1_ef", Mode::ErrorFeedback, CompressorSpec::TopK { k: 1 }, false),
            method("nurand1", Mode::Plain, CompressorSpec::NuRand1, false),
        ],
        iterations,
        seeds: Some(seeds),
        checkpoints: None,
        target_gap: Some(1e-6),
        output: None,
        base_dir: PathBuf::new(),
    }
}
