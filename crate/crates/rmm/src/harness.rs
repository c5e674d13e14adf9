//! Evaluation harness: nested crossvalidation with random hyperparameter
//! search, a wall-clock runtime benchmark, trained-model serialization, and
//! report writers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write as IoWrite};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;

use crate::error::{Error, Result};
use crate::machine::{rmm_run, RmmParams};
use crate::reservoir::{build_crj, CrjHyperparams, Dynamics, ReservoirWeights};
use crate::seed::{derive_rng, derive_seed};
use crate::ser;
use crate::tasks::{gen_shift_benchmark, TaskSample};
use crate::training::{dataset_dims, fit_readout, fit_rmm};

/// Alternating passes used whenever a reservoir memory machine is fit by the
/// harness.
pub const FIT_MAX_ITERS: usize = 10;

/// Model family evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Esn,
    Esgru,
    Rmm,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ModelKind::Esn => "esn",
            ModelKind::Esgru => "esgru",
            ModelKind::Rmm => "rmm",
        };
        f.write_str(name)
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "esn" => Ok(ModelKind::Esn),
            "esgru" => Ok(ModelKind::Esgru),
            "rmm" => Ok(ModelKind::Rmm),
            other => Err(Error::InvalidInput(format!(
                "unknown model '{other}'; valid models: esn, esgru, rmm"
            ))),
        }
    }
}

/// Root mean squared error pooled over all sequences, steps, and channels.
///
/// # Errors
///
/// Returns [`Error::DimensionMismatch`] if the two collections disagree in
/// any shape and [`Error::InvalidInput`] if they contain no values at all.
pub fn rmse(targets: &[Vec<DVector<f64>>], predictions: &[Vec<DVector<f64>>]) -> Result<f64> {
    if targets.len() != predictions.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} target sequences but {} predicted sequences",
            targets.len(),
            predictions.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (s, (ys, yhats)) in targets.iter().zip(predictions).enumerate() {
        if ys.len() != yhats.len() {
            return Err(Error::DimensionMismatch(format!(
                "sequence {} has {} target steps but {} predicted steps",
                s + 1,
                ys.len(),
                yhats.len()
            )));
        }
        for (y, yhat) in ys.iter().zip(yhats) {
            if y.len() != yhat.len() {
                return Err(Error::DimensionMismatch(format!(
                    "sequence {} mixes {} and {} channels",
                    s + 1,
                    y.len(),
                    yhat.len()
                )));
            }
            sum += (y - yhat).norm_squared();
            count += y.len();
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput("rmse needs at least one value".into()));
    }
    Ok((sum / count as f64).sqrt())
}

/// Ranges of the random hyperparameter search.
///
/// Weights are drawn uniformly, the regularization log-uniformly, and the
/// jump length and memory size uniformly over their discrete sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSpace {
    /// Reservoir units used by every drawn configuration.
    pub reservoir_size: usize,
    /// Bounds for the input weight magnitude.
    pub input_weight: (f64, f64),
    /// Bounds for the cycle weight.
    pub cycle_weight: (f64, f64),
    /// Bounds for the jump weight.
    pub jump_weight: (f64, f64),
    /// Inclusive bounds for the jump length.
    pub jump_length: (usize, usize),
    /// Bounds for the ridge regularization, sampled log-uniformly.
    pub lambda: (f64, f64),
    /// Candidate memory sizes.
    pub memory_sizes: Vec<usize>,
}

impl HyperSpace {
    /// Default search ranges for a reservoir of `reservoir_size` units.
    ///
    /// The ranges favor reservoirs whose activity survives long input gaps:
    /// strong input imprint, jump weights high enough that the jump
    /// subgraph sustains activity on its own, and jump lengths short enough
    /// to keep several jump anchors on the cycle. The regularization stays
    /// small because the head fits act as classifiers whose margins degrade
    /// under heavy shrinkage. Memory size candidates cover a two-row control
    /// register and a buffer large enough for copy-style payloads.
    pub fn for_reservoir(reservoir_size: usize) -> Self {
        let jump_max = (reservoir_size / 16).max(2);
        Self {
            reservoir_size,
            input_weight: (0.65, 0.95),
            cycle_weight: (0.0, 0.6),
            jump_weight: (0.6, 0.99),
            jump_length: (jump_max.min(4), jump_max),
            lambda: (1e-8, 1e-3),
            memory_sizes: vec![2, 16],
        }
    }

    /// Checks the ranges are ordered, compatible with the reservoir size,
    /// and non-empty.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidInput`] naming the offending range.
    pub fn validate(&self) -> Result<()> {
        if self.reservoir_size < 4 {
            return Err(Error::InvalidInput(
                "search space needs reservoir_size >= 4".into(),
            ));
        }
        let ordered = self.input_weight.0 <= self.input_weight.1
            && self.cycle_weight.0 <= self.cycle_weight.1
            && self.jump_weight.0 <= self.jump_weight.1
            && self.jump_length.0 <= self.jump_length.1
            && self.lambda.0 <= self.lambda.1;
        if !ordered {
            return Err(Error::InvalidInput(
                "search space bounds must satisfy lo <= hi".into(),
            ));
        }
        if self.jump_length.0 < 2 || self.jump_length.1 + 2 > self.reservoir_size {
            return Err(Error::InvalidInput(format!(
                "jump_length bounds must lie in {{2, ..., {}}}",
                self.reservoir_size - 2
            )));
        }
        if self.lambda.0 <= 0.0 {
            return Err(Error::InvalidInput(
                "lambda bounds must be positive for log-uniform sampling".into(),
            ));
        }
        if self.memory_sizes.is_empty() || self.memory_sizes.iter().any(|k| *k < 2) {
            return Err(Error::InvalidInput(
                "memory_sizes must contain at least one size >= 2".into(),
            ));
        }
        Ok(())
    }

    /// Draws one configuration. The draw order is fixed (input weight, cycle
    /// weight, jump weight, jump length, lambda, memory size) so the same
    /// generator state yields the same configuration for every model family.
    pub fn sample(&self, rng: &mut impl Rng) -> HyperPoint {
        let input_weight = rng.random_range(self.input_weight.0..=self.input_weight.1);
        let cycle_weight = rng.random_range(self.cycle_weight.0..=self.cycle_weight.1);
        let jump_weight = rng.random_range(self.jump_weight.0..=self.jump_weight.1);
        let jump_length = rng.random_range(self.jump_length.0..=self.jump_length.1);
        let lambda = rng
            .random_range(self.lambda.0.ln()..=self.lambda.1.ln())
            .exp();
        let memory_size = self.memory_sizes[rng.random_range(0..self.memory_sizes.len())];
        HyperPoint {
            input_weight,
            cycle_weight,
            jump_weight,
            jump_length,
            lambda,
            memory_size,
        }
    }
}

/// One drawn hyperparameter configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperPoint {
    pub input_weight: f64,
    pub cycle_weight: f64,
    pub jump_weight: f64,
    pub jump_length: usize,
    pub lambda: f64,
    pub memory_size: usize,
}

impl HyperPoint {
    /// Reservoir hyperparameters for this configuration.
    pub fn crj(&self, reservoir_size: usize, input_dim: usize) -> CrjHyperparams {
        CrjHyperparams {
            reservoir_size,
            input_dim,
            input_weight: self.input_weight,
            cycle_weight: self.cycle_weight,
            jump_weight: self.jump_weight,
            jump_length: self.jump_length,
        }
    }

    /// Fixed configuration used by the runtime benchmark.
    pub fn bench_default(reservoir_size: usize) -> Self {
        Self {
            input_weight: 0.5,
            cycle_weight: 0.9,
            jump_weight: 0.2,
            jump_length: (reservoir_size / 2).clamp(2, 7),
            lambda: 1e-6,
            memory_size: 8,
        }
    }
}

/// A trained model ready for prediction.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Reservoir construction recipe.
    pub crj: CrjHyperparams,
    /// Weights built from `crj`.
    pub weights: ReservoirWeights,
    /// Trained head applied on top of the reservoir.
    pub head: ModelHead,
}

/// Trained parameters on top of the shared reservoir.
#[derive(Debug, Clone)]
pub enum ModelHead {
    /// Linear readout of the state trajectory of `dynamics`.
    Readout {
        dynamics: Dynamics,
        readout: DMatrix<f64>,
    },
    /// Full memory machine parameters.
    Rmm { params: RmmParams },
}

impl TrainedModel {
    /// Fits a model of the given kind on `dataset`.
    ///
    /// # Errors
    ///
    /// Propagates construction and training errors.
    pub fn fit(
        kind: ModelKind,
        crj: &CrjHyperparams,
        lambda: f64,
        memory_size: usize,
        max_iters: usize,
        dataset: &[TaskSample],
    ) -> Result<Self> {
        let weights = build_crj(crj)?;
        let head = match kind {
            ModelKind::Esn | ModelKind::Esgru => {
                let dynamics = if kind == ModelKind::Esn {
                    Dynamics::Esn
                } else {
                    Dynamics::Esgru
                };
                let readout = fit_readout(&weights, dataset, lambda, dynamics)?;
                ModelHead::Readout { dynamics, readout }
            }
            ModelKind::Rmm => {
                let report = fit_rmm(&weights, dataset, lambda, memory_size, max_iters)?;
                ModelHead::Rmm {
                    params: report.final_params,
                }
            }
        };
        Ok(Self {
            crj: crj.clone(),
            weights,
            head,
        })
    }

    /// Model family of this instance.
    pub fn kind(&self) -> ModelKind {
        match &self.head {
            ModelHead::Readout {
                dynamics: Dynamics::Esn,
                ..
            } => ModelKind::Esn,
            ModelHead::Readout {
                dynamics: Dynamics::Esgru,
                ..
            } => ModelKind::Esgru,
            ModelHead::Rmm { .. } => ModelKind::Rmm,
        }
    }

    /// Predicts the target sequence for one input sequence.
    ///
    /// # Errors
    ///
    /// Propagates dimension mismatches between the inputs and the model.
    pub fn predict(&self, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        match &self.head {
            ModelHead::Readout { dynamics, readout } => {
                let states = dynamics.run(&self.weights, inputs)?;
                Ok(states.iter().map(|h| readout * h).collect())
            }
            ModelHead::Rmm { params } => {
                let (outputs, _, _) = rmm_run(&self.weights, params, inputs)?;
                Ok(outputs)
            }
        }
    }

    /// Predicts every sample and returns the pooled RMSE against the stored
    /// targets.
    ///
    /// # Errors
    ///
    /// Propagates prediction errors and shape mismatches.
    pub fn evaluate(&self, dataset: &[TaskSample]) -> Result<f64> {
        let mut targets = Vec::with_capacity(dataset.len());
        let mut predictions = Vec::with_capacity(dataset.len());
        for sample in dataset {
            predictions.push(self.predict(&sample.inputs)?);
            targets.push(sample.targets.clone());
        }
        rmse(&targets, &predictions)
    }

    /// Writes the model as JSON.
    ///
    /// # Errors
    ///
    /// Returns [`Error::Io`] or [`Error::Json`] on failure.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile::from_model(self);
        let out = File::create(path)?;
        serde_json::to_writer_pretty(BufWriter::new(out), &file)?;
        Ok(())
    }

    /// Reads a model back from JSON, rebuilding the reservoir weights from
    /// the stored hyperparameters.
    ///
    /// # Errors
    ///
    /// Returns [`Error::Io`] or [`Error::Json`] on malformed files and
    /// propagates hyperparameter validation errors.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let model: ModelFile = serde_json::from_reader(BufReader::new(file))?;
        model.into_model()
    }
}

/// On-disk model representation.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
enum ModelFile {
    Esn {
        hyperparams: CrjHyperparams,
        #[serde(with = "ser::matrix_rows")]
        readout: DMatrix<f64>,
    },
    Esgru {
        hyperparams: CrjHyperparams,
        #[serde(with = "ser::matrix_rows")]
        readout: DMatrix<f64>,
    },
    Rmm {
        hyperparams: CrjHyperparams,
        params: RmmParams,
    },
}

impl ModelFile {
    fn from_model(model: &TrainedModel) -> Self {
        match &model.head {
            ModelHead::Readout { dynamics, readout } => match dynamics {
                Dynamics::Esn => ModelFile::Esn {
                    hyperparams: model.crj.clone(),
                    readout: readout.clone(),
                },
                Dynamics::Esgru => ModelFile::Esgru {
                    hyperparams: model.crj.clone(),
                    readout: readout.clone(),
                },
            },
            ModelHead::Rmm { params } => ModelFile::Rmm {
                hyperparams: model.crj.clone(),
                params: params.clone(),
            },
        }
    }

    fn into_model(self) -> Result<TrainedModel> {
        let (crj, head) = match self {
            ModelFile::Esn {
                hyperparams,
                readout,
            } => (
                hyperparams,
                ModelHead::Readout {
                    dynamics: Dynamics::Esn,
                    readout,
                },
            ),
            ModelFile::Esgru {
                hyperparams,
                readout,
            } => (
                hyperparams,
                ModelHead::Readout {
                    dynamics: Dynamics::Esgru,
                    readout,
                },
            ),
            ModelFile::Rmm {
                hyperparams,
                params,
            } => {
                params.validate()?;
                (hyperparams, ModelHead::Rmm { params })
            }
        };
        let weights = build_crj(&crj)?;
        Ok(TrainedModel { crj, weights, head })
    }
}

/// Result of one outer crossvalidation fold.
#[derive(Debug, Clone, Serialize)]
pub struct FoldOutcome {
    /// 1-based fold index.
    pub fold: usize,
    /// Test RMSE of the refit model.
    pub rmse: f64,
    /// Wall-clock seconds spent on the fold (search, refit, evaluation).
    pub seconds: f64,
    /// Configuration selected by the inner search.
    pub hyperparams: HyperPoint,
}

/// Full crossvalidation report.
#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub model: ModelKind,
    pub task: String,
    pub folds: Vec<FoldOutcome>,
    /// Mean of the fold RMSEs.
    pub mean_rmse: f64,
    /// Population standard deviation of the fold RMSEs.
    pub std_rmse: f64,
}

/// Nested crossvalidation with random hyperparameter search.
///
/// The dataset is split into `folds` contiguous blocks of equal size. Per
/// fold, `trials` configurations are drawn from `space`; each is scored by
/// the mean RMSE of an `inner_folds`-fold crossvalidation on the training
/// portion, the best (ties: first drawn) is refit on the whole training
/// portion and evaluated on the held-out block. All draws derive from
/// `seed`, so reports are reproducible.
///
/// # Errors
///
/// Returns [`Error::InvalidInput`] if the dataset size is not divisible by
/// `folds`, if `folds < 2`, `trials < 1`, or `inner_folds` does not fit the
/// training portion, and propagates training errors.
pub fn crossvalidate(
    dataset: &[TaskSample],
    kind: ModelKind,
    space: &HyperSpace,
    folds: usize,
    trials: usize,
    inner_folds: usize,
    seed: u64,
) -> Result<CvReport> {
    let (input_dim, _) = dataset_dims(dataset)?;
    space.validate()?;
    let n = dataset.len();
    if folds < 2 {
        return Err(Error::InvalidInput(format!(
            "crossvalidation needs at least 2 folds, got {folds}"
        )));
    }
    if !n.is_multiple_of(folds) {
        return Err(Error::InvalidInput(format!(
            "dataset size {n} is not divisible by {folds} folds"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let train_size = n - n / folds;
    if inner_folds < 2 || inner_folds > train_size {
        return Err(Error::InvalidInput(format!(
            "inner_folds must lie in 2..={train_size}, got {inner_folds}"
        )));
    }

    let block = n / folds;
    let mut outcomes = Vec::with_capacity(folds);
    for fold in 0..folds {
        let started = Instant::now();
        let test_range = fold * block..(fold + 1) * block;
        let train: Vec<TaskSample> = dataset
            .iter()
            .enumerate()
            .filter(|(i, _)| !test_range.contains(i))
            .map(|(_, s)| s.clone())
            .collect();
        let test = &dataset[test_range];

        let mut best: Option<(f64, HyperPoint)> = None;
        for trial in 0..trials {
            let mut rng = derive_rng(seed, "search", (fold * trials + trial) as u64);
            let point = space.sample(&mut rng);
            let score = inner_score(&train, kind, space, &point, inner_folds, input_dim)?;
            let better = match &best {
                Some((best_score, _)) => score < *best_score,
                None => true,
            };
            if better {
                best = Some((score, point));
            }
        }
        let (_, point) = best.expect("trials >= 1 always yields a candidate");

        let model = fit_point(kind, space, &point, input_dim, &train)?;
        let fold_rmse = model.evaluate(test)?;
        outcomes.push(FoldOutcome {
            fold: fold + 1,
            rmse: fold_rmse,
            seconds: started.elapsed().as_secs_f64(),
            hyperparams: point,
        });
    }

    let values: Vec<f64> = outcomes.iter().map(|o| o.rmse).collect();
    let mean_rmse = values.iter().sum::<f64>() / values.len() as f64;
    let variance =
        values.iter().map(|v| (v - mean_rmse).powi(2)).sum::<f64>() / values.len() as f64;
    Ok(CvReport {
        model: kind,
        task: dataset[0].task.clone(),
        folds: outcomes,
        mean_rmse,
        std_rmse: variance.sqrt(),
    })
}

/// Mean validation RMSE of one configuration over an inner crossvalidation.
fn inner_score(
    train: &[TaskSample],
    kind: ModelKind,
    space: &HyperSpace,
    point: &HyperPoint,
    inner_folds: usize,
    input_dim: usize,
) -> Result<f64> {
    let blocks = split_blocks(train.len(), inner_folds);
    let mut scores = Vec::with_capacity(inner_folds);
    for range in blocks {
        let inner_train: Vec<TaskSample> = train
            .iter()
            .enumerate()
            .filter(|(i, _)| !range.contains(i))
            .map(|(_, s)| s.clone())
            .collect();
        let model = fit_point(kind, space, point, input_dim, &inner_train)?;
        scores.push(model.evaluate(&train[range])?);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Splits `len` items into `parts` contiguous ranges whose sizes differ by at
/// most one (earlier ranges take the remainder).
fn split_blocks(len: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let base = len / parts;
    let extra = len % parts;
    let mut ranges = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let size = base + usize::from(p < extra);
        ranges.push(start..start + size);
        start += size;
    }
    ranges
}

fn fit_point(
    kind: ModelKind,
    space: &HyperSpace,
    point: &HyperPoint,
    input_dim: usize,
    dataset: &[TaskSample],
) -> Result<TrainedModel> {
    let crj = point.crj(space.reservoir_size, input_dim);
    TrainedModel::fit(
        kind,
        &crj,
        point.lambda,
        point.memory_size,
        FIT_MAX_ITERS,
        dataset,
    )
}

/// One row of the runtime benchmark.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub length: usize,
    pub model: ModelKind,
    /// Mean training seconds over the repeats.
    pub train_mean: f64,
    /// Population standard deviation of the training seconds.
    pub train_std: f64,
    /// Mean prediction seconds over the repeats.
    pub pred_mean: f64,
    /// Population standard deviation of the prediction seconds.
    pub pred_std: f64,
}

/// Times training and prediction on random shift sequences of the given
/// lengths, with fixed default hyperparameters.
///
/// Per length, `repeats` fresh single-sequence datasets are drawn, the model
/// is fit on each, and both the fit and a full-sequence prediction are
/// timed.
///
/// # Errors
///
/// Returns [`Error::InvalidInput`] for empty `lengths` or zero `repeats` and
/// propagates training errors.
pub fn bench_runtime(
    kind: ModelKind,
    reservoir_size: usize,
    lengths: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if lengths.is_empty() {
        return Err(Error::InvalidInput("lengths must not be empty".into()));
    }
    if repeats == 0 {
        return Err(Error::InvalidInput("repeats must be at least 1".into()));
    }
    let point = HyperPoint::bench_default(reservoir_size);
    let mut rows = Vec::with_capacity(lengths.len());
    for (li, length) in lengths.iter().enumerate() {
        let mut train_times = Vec::with_capacity(repeats);
        let mut pred_times = Vec::with_capacity(repeats);
        for rep in 0..repeats {
            let sample_seed = derive_seed(seed, "bench", (li * repeats + rep) as u64);
            let sample = gen_shift_benchmark(sample_seed, *length, 8)?;
            let dataset = [sample];

            let crj = point.crj(reservoir_size, 8);
            let started = Instant::now();
            let model = TrainedModel::fit(
                kind,
                &crj,
                point.lambda,
                point.memory_size,
                FIT_MAX_ITERS,
                &dataset,
            )?;
            train_times.push(started.elapsed().as_secs_f64());

            let started = Instant::now();
            let _ = model.predict(&dataset[0].inputs)?;
            pred_times.push(started.elapsed().as_secs_f64());
        }
        let (train_mean, train_std) = mean_std(&train_times);
        let (pred_mean, pred_std) = mean_std(&pred_times);
        rows.push(BenchRow {
            length: *length,
            model: kind,
            train_mean,
            train_std,
            pred_mean,
            pred_std,
        });
    }
    Ok(rows)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    (mean, variance.sqrt())
}

/// Writes the per-fold results as `model,task,fold,rmse,seconds` CSV.
///
/// # Errors
///
/// Returns [`Error::Io`] on write failure.
pub fn write_results_csv(out: &mut dyn IoWrite, report: &CvReport) -> Result<()> {
    writeln!(out, "model,task,fold,rmse,seconds")?;
    for fold in &report.folds {
        writeln!(
            out,
            "{},{},{},{},{}",
            report.model, report.task, fold.fold, fold.rmse, fold.seconds
        )?;
    }
    Ok(())
}

/// Writes the whole report as pretty-printed JSON.
///
/// # Errors
///
/// Returns [`Error::Io`] or [`Error::Json`] on failure.
pub fn write_summary_json(out: &mut dyn IoWrite, report: &CvReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, report)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Writes runtime rows as
/// `length,model,train_mean,train_std,pred_mean,pred_std` CSV.
///
/// # Errors
///
/// Returns [`Error::Io`] on write failure.
pub fn write_runtimes_csv(out: &mut dyn IoWrite, rows: &[BenchRow]) -> Result<()> {
    writeln!(out, "length,model,train_mean,train_std,pred_mean,pred_std")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.length, row.model, row.train_mean, row.train_std, row.pred_mean, row.pred_std
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::gen_latch;

    fn latch_set(count: usize, max_len: usize) -> Vec<TaskSample> {
        (0..count)
            .map(|i| gen_latch(1000 + i as u64, max_len, 3).unwrap())
            .collect()
    }

    #[test]
    fn rmse_matches_hand_computation() {
        let targets = vec![vec![
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![0.0]),
        ]];
        let predictions = vec![vec![
            DVector::from_vec(vec![3.0]),
            DVector::from_vec(vec![4.0]),
        ]];
        let value = rmse(&targets, &predictions).unwrap();
        assert!((value - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((value - 3.5355339059327378).abs() < 1e-12);
    }

    #[test]
    fn rmse_pools_across_sequences_and_channels() {
        let targets = vec![
            vec![DVector::from_vec(vec![1.0, 1.0])],
            vec![DVector::from_vec(vec![1.0, 1.0])],
        ];
        let predictions = vec![
            vec![DVector::from_vec(vec![1.0, 1.0])],
            vec![DVector::from_vec(vec![2.0, 2.0])],
        ];
        // Two of four entries are off by one.
        assert!((rmse(&targets, &predictions).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rmse_rejects_shape_mismatches() {
        let a = vec![vec![DVector::from_vec(vec![1.0])]];
        let b = vec![vec![DVector::from_vec(vec![1.0, 2.0])]];
        assert!(matches!(rmse(&a, &b), Err(Error::DimensionMismatch(_))));
        assert!(matches!(rmse(&[], &[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn model_names_round_trip() {
        for kind in [ModelKind::Esn, ModelKind::Esgru, ModelKind::Rmm] {
            assert_eq!(kind.to_string().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("lstm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn sampled_points_respect_bounds() {
        let space = HyperSpace::for_reservoir(64);
        space.validate().unwrap();
        let mut rng = derive_rng(3, "space", 0);
        for _ in 0..200 {
            let p = space.sample(&mut rng);
            assert!(p.input_weight >= 0.65 && p.input_weight <= 0.95);
            assert!(p.cycle_weight >= 0.0 && p.cycle_weight <= 0.6);
            assert!(p.jump_weight >= 0.6 && p.jump_weight <= 0.99);
            assert!(p.jump_length == 4);
            assert!(p.lambda >= 1e-8 && p.lambda <= 1e-3);
            assert!([2usize, 16].contains(&p.memory_size));
            p.crj(64, 1).validate().unwrap();
        }
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let space = HyperSpace::for_reservoir(32);
        let a = space.sample(&mut derive_rng(9, "search", 5));
        let b = space.sample(&mut derive_rng(9, "search", 5));
        assert_eq!(a, b);
        let c = space.sample(&mut derive_rng(9, "search", 6));
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_spaces_are_rejected() {
        let mut space = HyperSpace::for_reservoir(32);
        space.memory_sizes.clear();
        assert!(space.validate().is_err());
        let mut space = HyperSpace::for_reservoir(32);
        space.jump_length = (2, 31);
        assert!(space.validate().is_err());
        let mut space = HyperSpace::for_reservoir(32);
        space.lambda = (0.0, 1.0);
        assert!(space.validate().is_err());
    }

    #[test]
    fn split_blocks_cover_everything_contiguously() {
        for len in [6usize, 7, 10, 13] {
            for parts in [2usize, 3, 5] {
                let blocks = split_blocks(len, parts);
                assert_eq!(blocks.len(), parts);
                let mut next = 0;
                for b in &blocks {
                    assert_eq!(b.start, next);
                    next = b.end;
                }
                assert_eq!(next, len);
                let sizes: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
                let min = sizes.iter().min().unwrap();
                let max = sizes.iter().max().unwrap();
                assert!(max - min <= 1);
            }
        }
    }

    #[test]
    fn crossvalidate_is_deterministic_and_complete() {
        let dataset = latch_set(6, 25);
        let space = HyperSpace {
            memory_sizes: vec![4, 8],
            ..HyperSpace::for_reservoir(16)
        };
        let run = |seed| crossvalidate(&dataset, ModelKind::Esn, &space, 3, 2, 2, seed).unwrap();
        let a = run(7);
        let b = run(7);
        assert_eq!(a.folds.len(), 3);
        assert_eq!(a.task, "latch");
        for (fa, fb) in a.folds.iter().zip(&b.folds) {
            assert_eq!(fa.rmse, fb.rmse);
            assert_eq!(fa.hyperparams, fb.hyperparams);
        }
        assert_eq!(a.mean_rmse, b.mean_rmse);
        assert!(a.std_rmse >= 0.0);

        let c = run(8);
        let picks_differ = a
            .folds
            .iter()
            .zip(&c.folds)
            .any(|(x, y)| x.hyperparams != y.hyperparams);
        assert!(picks_differ);
    }

    #[test]
    fn crossvalidate_rejects_bad_fold_counts() {
        let dataset = latch_set(7, 25);
        let space = HyperSpace::for_reservoir(16);
        assert!(matches!(
            crossvalidate(&dataset, ModelKind::Esn, &space, 3, 1, 2, 1),
            Err(Error::InvalidInput(_))
        ));
        let dataset = latch_set(6, 25);
        assert!(matches!(
            crossvalidate(&dataset, ModelKind::Esn, &space, 1, 1, 2, 1),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            crossvalidate(&dataset, ModelKind::Esn, &space, 3, 0, 2, 1),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            crossvalidate(&dataset, ModelKind::Esn, &space, 3, 1, 5, 1),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn trained_models_round_trip_through_files() {
        let dataset = latch_set(4, 25);
        let crj = CrjHyperparams {
            reservoir_size: 16,
            input_dim: 1,
            input_weight: 0.4,
            cycle_weight: 0.8,
            jump_weight: 0.1,
            jump_length: 3,
        };
        let dir = tempfile::tempdir().unwrap();
        for kind in [ModelKind::Esn, ModelKind::Esgru, ModelKind::Rmm] {
            let model = TrainedModel::fit(kind, &crj, 1e-6, 4, 5, &dataset).unwrap();
            let path = dir.path().join(format!("{kind}.json"));
            model.save(&path).unwrap();
            let loaded = TrainedModel::load(&path).unwrap();
            assert_eq!(loaded.kind(), kind);
            let x = &dataset[0].inputs;
            let before = model.predict(x).unwrap();
            let after = loaded.predict(x).unwrap();
            for (a, b) in before.iter().zip(&after) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn bench_rows_follow_requested_lengths() {
        let rows = bench_runtime(ModelKind::Esn, 16, &[15, 25], 2, 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].length, 15);
        assert_eq!(rows[1].length, 25);
        for row in &rows {
            assert!(row.train_mean > 0.0);
            assert!(row.pred_mean > 0.0);
            assert!(row.train_std >= 0.0);
            assert!(row.pred_std >= 0.0);
        }
    }

    #[test]
    fn csv_writers_emit_expected_headers() {
        let dataset = latch_set(4, 25);
        let space = HyperSpace {
            memory_sizes: vec![4],
            ..HyperSpace::for_reservoir(16)
        };
        let report = crossvalidate(&dataset, ModelKind::Esn, &space, 2, 1, 2, 1).unwrap();
        let mut csv = Vec::new();
        write_results_csv(&mut csv, &report).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "model,task,fold,rmse,seconds");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("esn,latch,1,"));

        let mut json = Vec::new();
        write_summary_json(&mut json, &report).unwrap();
        let value: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert_eq!(value["model"], "esn");
        assert!(value["mean_rmse"].is_number());
        assert_eq!(value["folds"].as_array().unwrap().len(), 2);

        let rows = bench_runtime(ModelKind::Esn, 16, &[10], 1, 1).unwrap();
        let mut bench_csv = Vec::new();
        write_runtimes_csv(&mut bench_csv, &rows).unwrap();
        let text = String::from_utf8(bench_csv).unwrap();
        assert!(text.starts_with("length,model,train_mean,train_std,pred_mean,pred_std\n"));
    }
}
