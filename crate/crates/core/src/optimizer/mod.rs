//! Distributed compressed SGD, with and without error feedback, and with
//! partial participation.
//!
//! The master is simulated in-process. Only uplink traffic (worker to
//! master) is counted in `bits_up`. Aggregation always sums worker
//! contributions in node order with per-node weights (`1/n` under full
//! participation, `1/(n p_i)` under a sampling), so a full sampling
//! reproduces plain runs bit for bit.

mod bounds;
mod schedule;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bounds::{delta_n, recursion_constants, theorem_bound, BoundInputs, EffectiveVariance, RecursionConstants};
pub use schedule::{make_schedule, Schedule};

use crate::compressors::{CompressedMessage, CompressorSpec};
use crate::error::{Error, Result};
use crate::problems::ProblemInstance;
use crate::rng::RngStreams;
use crate::sampling::SamplingScheme;
use crate::vector::DenseVector;

/// Runs halt once `||x||` exceeds this.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Every node compresses its gradient; no state kept between rounds.
    Plain,
    /// Every node compresses `eta g + e` and keeps the residual `e`.
    #[serde(rename = "ef")]
    ErrorFeedback,
    /// Only sampled nodes compute and transmit.
    #[serde(rename = "pp")]
    PartialParticipation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkerState {
    node_index: usize,
    error: Option<DenseVector>,
}

impl WorkerState {
    pub fn plain(node_index: usize) -> Self {
        Self {
            node_index,
            error: None,
        }
    }

    /// Error-feedback worker with `e^0 = 0`.
    pub fn error_feedback(node_index: usize, dim: usize) -> Self {
        Self {
            node_index,
            error: Some(DenseVector::zeros(dim)),
        }
    }

    pub fn for_mode(mode: Mode, n: usize, dim: usize) -> Vec<Self> {
        (0..n)
            .map(|i| match mode {
                Mode::ErrorFeedback => Self::error_feedback(i, dim),
                Mode::Plain | Mode::PartialParticipation => Self::plain(i),
            })
            .collect()
    }

    pub fn node_index(&self) -> usize {
        self.node_index
    }

    pub fn error(&self) -> Option<&DenseVector> {
        self.error.as_ref()
    }

    /// Number of `d`-vectors this worker keeps between rounds.
    pub fn persistent_vectors(&self) -> usize {
        usize::from(self.error.is_some())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub x_next: DenseVector,
    /// The aggregated update `Delta^k`.
    pub aggregate: DenseVector,
    pub bits: u64,
    /// Nodes that transmitted this round.
    pub participants: Vec<usize>,
}

fn compress_gradient(
    problem: &ProblemInstance,
    worker: &WorkerState,
    x: &DenseVector,
    compressor: &CompressorSpec,
    streams: &RngStreams,
    k: u64,
) -> Result<CompressedMessage> {
    let mut rng = streams.worker(k, worker.node_index);
    let g = problem.gradient_oracle(worker.node_index, x, &mut rng)?;
    compressor.compress(&g, &mut rng)
}

fn weighted_step(
    problem: &ProblemInstance,
    x: &DenseVector,
    workers: &[WorkerState],
    compressor: &CompressorSpec,
    eta: f64,
    contributions: &[(usize, f64)],
    streams: &RngStreams,
    k: u64,
) -> Result<StepOutcome> {
    check_stepsize(eta)?;
    let mut aggregate = vec![0.0; problem.dim()];
    let mut bits = 0;
    for &(w, weight) in contributions {
        let msg = compress_gradient(problem, &workers[w], x, compressor, streams, k)?;
        bits += msg.bit_cost();
        msg.accumulate_into(weight, &mut aggregate)?;
    }
    let aggregate = DenseVector::from_raw(aggregate);
    let mut x_next = x.clone();
    x_next.axpy(-eta, &aggregate);
    Ok(StepOutcome {
        x_next,
        aggregate,
        bits,
        participants: contributions.iter().map(|&(w, _)| workers[w].node_index).collect(),
    })
}

fn check_stepsize(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("stepsize {eta} must be positive")))
    }
}

fn check_workers(problem: &ProblemInstance, workers: &[WorkerState], want_error: bool) -> Result<()> {
    if workers.len() != problem.n() {
        return Err(Error::param(format!(
            "{} workers for a problem with {} nodes",
            workers.len(),
            problem.n()
        )));
    }
    for w in workers {
        if w.error.is_some() != want_error {
            return Err(Error::param(format!(
                "worker {} is in the wrong mode for this step",
                w.node_index
            )));
        }
        if w.node_index >= problem.n() {
            return Err(Error::param(format!("worker node index {} out of range", w.node_index)));
        }
    }
    Ok(())
}

/// `x^{k+1} = x^k - eta (1/n) sum_i C(g_i^k)`
pub fn dcsgd_step(
    problem: &ProblemInstance,
    x: &DenseVector,
    workers: &[WorkerState],
    compressor: &CompressorSpec,
    eta: f64,
    streams: &RngStreams,
    k: u64,
) -> Result<StepOutcome> {
    check_workers(problem, workers, false)?;
    let weight = 1.0 / (problem.n() as f64 * 1.0);
    let contributions: Vec<(usize, f64)> = (0..workers.len()).map(|w| (w, weight)).collect();
    weighted_step(problem, x, workers, compressor, eta, &contributions, streams, k)
}

/// `Delta_i = C(eta g_i + e_i)`, `e_i <- eta g_i + e_i - Delta_i`,
/// `x^{k+1} = x^k - (1/n) sum_i Delta_i`.
pub fn ef_step(
    problem: &ProblemInstance,
    x: &DenseVector,
    workers: &mut [WorkerState],
    compressor: &CompressorSpec,
    eta: f64,
    streams: &RngStreams,
    k: u64,
) -> Result<StepOutcome> {
    check_workers(problem, workers, true)?;
    check_stepsize(eta)?;
    let n = problem.n() as f64;
    let mut aggregate = vec![0.0; problem.dim()];
    let mut bits = 0;
    for worker in workers.iter_mut() {
        let mut rng = streams.worker(k, worker.node_index);
        let g = problem.gradient_oracle(worker.node_index, x, &mut rng)?;
        let error = worker.error.as_mut().expect("checked above");
        let mut corrected = g.scaled(eta);
        corrected.axpy(1.0, error);
        let msg = compressor.compress(&corrected, &mut rng)?;
        let sent = msg.decompress()?;
        *error = corrected.sub(&sent);
        bits += msg.bit_cost();
        msg.accumulate_into(1.0 / n, &mut aggregate)?;
    }
    let aggregate = DenseVector::from_raw(aggregate);
    let mut x_next = x.clone();
    x_next.axpy(-1.0, &aggregate);
    Ok(StepOutcome {
        x_next,
        aggregate,
        bits,
        participants: workers.iter().map(|w| w.node_index).collect(),
    })
}

/// Draws `S^k` and applies `x^{k+1} = x^k - eta sum_{i in S^k} C(g_i^k) / (n p_i)`.
pub fn pp_step(
    problem: &ProblemInstance,
    x: &DenseVector,
    workers: &[WorkerState],
    compressor: &CompressorSpec,
    scheme: &SamplingScheme,
    eta: f64,
    streams: &RngStreams,
    k: u64,
) -> Result<StepOutcome> {
    check_workers(problem, workers, false)?;
    if scheme.n() != problem.n() {
        return Err(Error::param(format!(
            "sampling over {} nodes for a problem with {}",
            scheme.n(),
            problem.n()
        )));
    }
    let p = scheme.ensure_proper()?;
    let subset = scheme.draw_subset(&mut streams.sampling(k));
    let n = problem.n() as f64;
    let contributions: Vec<(usize, f64)> = subset.iter().map(|&i| (i, 1.0 / (n * p[i]))).collect();
    weighted_step(problem, x, workers, compressor, eta, &contributions, streams, k)
}

/// Everything that determines one run besides the problem.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub compressor: CompressorSpec,
    pub sampling: Option<SamplingScheme>,
    pub schedule: Schedule,
    /// Number of updates `T`; the run visits `x^0, ..., x^T`.
    pub iterations: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self, problem: &ProblemInstance) -> Result<()> {
        let mut errors = Vec::new();
        if let Err(e) = self.compressor.validate(problem.dim()) {
            errors.push(e.to_string());
        }
        if let Err(e) = self.schedule.validate() {
            errors.push(e.to_string());
        }
        match (self.mode, &self.sampling) {
            (Mode::PartialParticipation, None) => {
                errors.push("partial participation needs a sampling".into())
            }
            (Mode::PartialParticipation, Some(s)) => {
                if s.n() != problem.n() {
                    errors.push(format!("sampling over {} nodes, problem has {}", s.n(), problem.n()));
                } else if let Err(e) = s.ensure_proper() {
                    errors.push(e.to_string());
                }
            }
            (mode, Some(_)) => errors.push(format!("{mode:?} mode does not take a sampling")),
            (_, None) => {}
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errors))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub k: usize,
    /// `f(x^k) - f*`
    pub f_gap: f64,
    /// `||x^k - x*||^2`
    pub dist2: f64,
    /// Uplink bits of the update that produced `x^k` (zero at `k = 0`).
    pub bits_up: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    /// `x^k` drawn with probability `w^k / W^T`.
    pub output_point: DenseVector,
    pub output_index: usize,
    pub final_point: DenseVector,
    pub diverged: bool,
}

impl RunRecord {
    pub const CSV_HEADER: &'static str = "k,f_gap,dist2,bits_up";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{:e},{:e},{}\n", r.k, r.f_gap, r.dist2, r.bits_up));
        }
        out
    }

    pub fn total_bits(&self) -> u64 {
        self.rows.iter().map(|r| r.bits_up).sum()
    }

    /// First `k` with `f_gap <= target`.
    pub fn first_reaching(&self, target: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.f_gap <= target).map(|r| r.k)
    }

    pub fn row(&self, k: usize) -> Option<&RunRow> {
        self.rows.get(k).filter(|r| r.k == k)
    }
}

pub fn run(problem: &ProblemInstance, config: &RunConfig) -> Result<RunRecord> {
    config.validate(problem)?;
    let streams = RngStreams::new(config.seed);
    let consts = problem.constants();
    let mut workers = WorkerState::for_mode(config.mode, problem.n(), problem.dim());

    let mut x = problem.initial_point().clone();
    let mut rows = Vec::with_capacity(config.iterations + 1);
    let mut bits_prev = 0;
    let mut total_weight = 0.0;
    let mut output = (0, x.clone());
    let mut diverged = false;

    for k in 0..=config.iterations {
        rows.push(RunRow {
            k,
            f_gap: problem.suboptimality(&x),
            dist2: x.sub(&consts.x_star).norm_sq(),
            bits_up: bits_prev,
        });
        let (eta, weight) = config.schedule.step(k);
        if weight > 0.0 {
            total_weight += weight;
            let u: f64 = streams.output(k as u64).random();
            if u < weight / total_weight {
                output = (k, x.clone());
            }
        }
        if diverged || k == config.iterations {
            break;
        }
        let kk = k as u64;
        let step = match config.mode {
            Mode::Plain => dcsgd_step(problem, &x, &workers, &config.compressor, eta, &streams, kk)?,
            Mode::ErrorFeedback => ef_step(problem, &x, &mut workers, &config.compressor, eta, &streams, kk)?,
            Mode::PartialParticipation => {
                let scheme = config.sampling.as_ref().expect("validated");
                pp_step(problem, &x, &workers, &config.compressor, scheme, eta, &streams, kk)?
            }
        };
        bits_prev = step.bits;
        x = step.x_next;
        if !x.is_finite() {
            diverged = true;
            break;
        }
        if x.norm() > DIVERGENCE_THRESHOLD {
            // Record the offending iterate, then stop.
            diverged = true;
        }
    }

    Ok(RunRecord {
        rows,
        output_point: output.1,
        output_index: output.0,
        final_point: x,
        diverged,
    })
}
