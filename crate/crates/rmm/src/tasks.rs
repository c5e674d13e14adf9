//! Benchmark tasks: deterministic sample builders, seeded generators, and
//! dataset JSON serialization.
//!
//! Every sample is a pair of input and target sequences of equal length.
//! Builders assemble a sample from explicit content and validate it;
//! generators draw the content from a seeded stream.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};
use crate::seed::derive_rng;
use crate::ser;
use rand::Rng;

/// One input/target sequence pair.
///
/// Serializes with `X` and `Y` as step-major matrices (one row per step) and
/// `n`/`L` as the input/output channel counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSample {
    /// Task name: `latch`, `copy`, `repeat_copy`, or `shift`.
    pub task: String,
    /// Input channels per step.
    #[serde(rename = "n")]
    pub input_dim: usize,
    /// Target channels per step.
    #[serde(rename = "L")]
    pub output_dim: usize,
    /// Input sequence, one vector per step.
    #[serde(rename = "X", with = "ser::step_rows")]
    pub inputs: Vec<DVector<f64>>,
    /// Target sequence, one vector per step.
    #[serde(rename = "Y", with = "ser::step_rows")]
    pub targets: Vec<DVector<f64>>,
    /// Content descriptors specific to the task.
    pub meta: SampleMeta,
}

/// Task-specific descriptors of a sample's content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SampleMeta {
    Latch { spikes: Vec<usize> },
    Copy { payload_len: usize },
    RepeatCopy { payload_len: usize, repeats: usize },
    Shift { length: usize },
}

impl TaskSample {
    /// Checks that the sequences match the declared dimensions.
    ///
    /// # Errors
    ///
    /// Returns [`Error::DimensionMismatch`] on any inconsistency.
    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.targets.len() {
            return Err(Error::DimensionMismatch(format!(
                "sample has {} input steps but {} target steps",
                self.inputs.len(),
                self.targets.len()
            )));
        }
        if self.inputs.is_empty() {
            return Err(Error::DimensionMismatch(
                "sample must contain at least one step".into(),
            ));
        }
        if self.inputs.iter().any(|x| x.len() != self.input_dim) {
            return Err(Error::DimensionMismatch(format!(
                "every input step must have {} channels",
                self.input_dim
            )));
        }
        if self.targets.iter().any(|y| y.len() != self.output_dim) {
            return Err(Error::DimensionMismatch(format!(
                "every target step must have {} channels",
                self.output_dim
            )));
        }
        Ok(())
    }

    /// Sequence length in steps.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Builds a latch sample of the given length: the single input channel is 1
/// exactly at the 1-based spike positions, and the single target channel
/// starts at 0 and toggles between 0 and 1 at every spike step.
///
/// # Errors
///
/// Returns [`Error::InvalidInput`] if `length` is 0 or the spikes are not
/// distinct positions in `{2, ..., length}`.
pub fn latch_sample(length: usize, spikes: &[usize]) -> Result<TaskSample> {
    if length == 0 {
        return Err(Error::InvalidInput(
            "latch length must be at least 1".into(),
        ));
    }
    let mut sorted = spikes.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput(
            "spike positions must be distinct".into(),
        ));
    }
    if sorted.iter().any(|s| *s < 2 || *s > length) {
        return Err(Error::InvalidInput(format!(
            "spike positions must lie in 2..={length}"
        )));
    }

    let mut inputs = vec![DVector::zeros(1); length];
    for s in &sorted {
        inputs[s - 1][0] = 1.0;
    }
    let mut targets = Vec::with_capacity(length);
    let mut level = 0.0;
    for t in 1..=length {
        if sorted.binary_search(&t).is_ok() {
            level = 1.0 - level;
        }
        targets.push(DVector::from_element(1, level));
    }

    Ok(TaskSample {
        task: "latch".into(),
        input_dim: 1,
        output_dim: 1,
        inputs,
        targets,
        meta: SampleMeta::Latch { spikes: sorted },
    })
}

/// Builds a copy sample: the payload rows are presented on the first `bits`
/// input channels, then an end token (value 1 on the extra last channel), and
/// the targets repeat the payload right after the end token. Length is
/// `2 * payload_len + 1`.
///
/// # Errors
///
/// Returns [`Error::InvalidInput`] for an empty or non-binary payload and
/// [`Error::DimensionMismatch`] if a payload row does not have `bits`
/// channels.
pub fn copy_sample(payload: &[DVector<f64>], bits: usize) -> Result<TaskSample> {
    let inner = assemble_recall(payload, bits, 1, 1.0)?;
    Ok(TaskSample {
        task: "copy".into(),
        meta: SampleMeta::Copy {
            payload_len: payload.len(),
        },
        ..inner
    })
}

/// Builds a repeat-copy sample: like [`copy_sample`], but the end token
/// carries `repeats / max_repeats` and the targets repeat the payload
/// `repeats` times back to back. Length is `payload_len * (1 + repeats) + 1`.
///
/// # Errors
///
/// Returns [`Error::InvalidInput`] if `repeats` is not in `1..=max_repeats`,
/// plus the payload errors of [`copy_sample`].
pub fn repeat_copy_sample(
    payload: &[DVector<f64>],
    bits: usize,
    repeats: usize,
    max_repeats: usize,
) -> Result<TaskSample> {
    if max_repeats == 0 || repeats == 0 || repeats > max_repeats {
        return Err(Error::InvalidInput(format!(
            "repeats must lie in 1..={max_repeats}, got {repeats}"
        )));
    }
    let token = repeats as f64 / max_repeats as f64;
    let inner = assemble_recall(payload, bits, repeats, token)?;
    Ok(TaskSample {
        task: "repeat_copy".into(),
        meta: SampleMeta::RepeatCopy {
            payload_len: payload.len(),
            repeats,
        },
        ..inner
    })
}

/// Shared assembly for copy-style tasks: payload presentation, end token,
/// then `repeats` copies of the payload in the targets.
fn assemble_recall(
    payload: &[DVector<f64>],
    bits: usize,
    repeats: usize,
    token_value: f64,
) -> Result<TaskSample> {
    if bits == 0 {
        return Err(Error::InvalidInput("bits must be at least 1".into()));
    }
    if payload.is_empty() {
        return Err(Error::InvalidInput("payload must not be empty".into()));
    }
    for row in payload {
        if row.len() != bits {
            return Err(Error::DimensionMismatch(format!(
                "payload row has {} channels, expected {bits}",
                row.len()
            )));
        }
        if row.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::InvalidInput("payload entries must be 0 or 1".into()));
        }
    }

    let p = payload.len();
    let n = bits + 1;
    let length = p + 1 + repeats * p;

    let mut inputs = vec![DVector::zeros(n); length];
    for (t, row) in payload.iter().enumerate() {
        inputs[t].rows_mut(0, bits).copy_from(row);
    }
    inputs[p][bits] = token_value;

    let mut targets = vec![DVector::zeros(bits); length];
    for r in 0..repeats {
        for (t, row) in payload.iter().enumerate() {
            targets[p + 1 + r * p + t].copy_from(row);
        }
    }

    Ok(TaskSample {
        task: String::new(),
        input_dim: n,
        output_dim: bits,
        inputs,
        targets,
        meta: SampleMeta::Copy { payload_len: p },
    })
}

/// Builds a shift sample: targets equal the inputs delayed by one step, with
/// a zero row first.
///
/// # Errors
///
/// Returns [`Error::InvalidInput`] for an empty row list and
/// [`Error::DimensionMismatch`] for ragged rows.
pub fn shift_sample(rows: &[DVector<f64>], bits: usize) -> Result<TaskSample> {
    if bits == 0 {
        return Err(Error::InvalidInput("bits must be at least 1".into()));
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("shift sample must not be empty".into()));
    }
    if rows.iter().any(|r| r.len() != bits) {
        return Err(Error::DimensionMismatch(format!(
            "every row must have {bits} channels"
        )));
    }
    let mut targets = Vec::with_capacity(rows.len());
    targets.push(DVector::zeros(bits));
    targets.extend(rows[..rows.len() - 1].iter().cloned());
    Ok(TaskSample {
        task: "shift".into(),
        input_dim: bits,
        output_dim: bits,
        inputs: rows.to_vec(),
        targets,
        meta: SampleMeta::Shift { length: rows.len() },
    })
}

/// Draws a latch sample: length uniform in `{min(20, max_len), ..., max_len}`
/// and `n_spikes` distinct spike positions uniform in `{2, ..., length}`.
/// Zero spikes is allowed and yields all-zero targets.
///
/// # Errors
///
/// Returns [`Error::InvalidInput`] if `max_len` is 0 or a positive spike
/// count cannot fit every drawable length (`max_len < 2 * n_spikes` or
/// `n_spikes + 1 > min(20, max_len)`).
pub fn gen_latch(seed: u64, max_len: usize, n_spikes: usize) -> Result<TaskSample> {
    if max_len == 0 {
        return Err(Error::InvalidInput("max_len must be at least 1".into()));
    }
    let min_len = 20.min(max_len);
    if n_spikes > 0 && (max_len < 2 * n_spikes || n_spikes + 1 > min_len) {
        return Err(Error::InvalidInput(format!(
            "cannot place {n_spikes} distinct spikes in sequences of length {min_len}..={max_len}"
        )));
    }
    let mut rng = derive_rng(seed, "latch", 0);
    let length = rng.random_range(min_len..=max_len);
    let mut spikes: Vec<usize> = rand::seq::index::sample(&mut rng, length - 1, n_spikes)
        .into_iter()
        .map(|i| i + 2)
        .collect();
    spikes.sort_unstable();
    latch_sample(length, &spikes)
}

/// Draws a copy sample: payload length uniform in `{1, ..., max_payload}`
/// with independent fair payload bits.
///
/// # Errors
///
/// Returns [`Error::InvalidInput`] if `max_payload` or `bits` is 0.
pub fn gen_copy(seed: u64, max_payload: usize, bits: usize) -> Result<TaskSample> {
    if max_payload == 0 {
        return Err(Error::InvalidInput("max_payload must be at least 1".into()));
    }
    let mut rng = derive_rng(seed, "copy", 0);
    let payload_len = rng.random_range(1..=max_payload);
    let payload = random_payload(&mut rng, payload_len, bits)?;
    copy_sample(&payload, bits)
}

/// Draws a repeat-copy sample: payload length uniform in
/// `{1, ..., max_payload}`, repeats uniform in `{1, ..., max_repeats}`,
/// independent fair payload bits.
///
/// # Errors
///
/// Returns [`Error::InvalidInput`] if `max_payload`, `bits`, or `max_repeats`
/// is 0.
pub fn gen_repeat_copy(
    seed: u64,
    max_payload: usize,
    bits: usize,
    max_repeats: usize,
) -> Result<TaskSample> {
    if max_payload == 0 {
        return Err(Error::InvalidInput("max_payload must be at least 1".into()));
    }
    if max_repeats == 0 {
        return Err(Error::InvalidInput("max_repeats must be at least 1".into()));
    }
    let mut rng = derive_rng(seed, "repeat_copy", 0);
    let payload_len = rng.random_range(1..=max_payload);
    let repeats = rng.random_range(1..=max_repeats);
    let payload = random_payload(&mut rng, payload_len, bits)?;
    repeat_copy_sample(&payload, bits, repeats, max_repeats)
}

/// Draws a shift sample of exactly `length` steps with independent fair bits
/// on `bits` channels.
///
/// # Errors
///
/// Returns [`Error::InvalidInput`] if `length` or `bits` is 0.
pub fn gen_shift_benchmark(seed: u64, length: usize, bits: usize) -> Result<TaskSample> {
    if length == 0 {
        return Err(Error::InvalidInput("length must be at least 1".into()));
    }
    let mut rng = derive_rng(seed, "shift", 0);
    let rows = random_payload(&mut rng, length, bits)?;
    shift_sample(&rows, bits)
}

fn random_payload(rng: &mut impl Rng, rows: usize, bits: usize) -> Result<Vec<DVector<f64>>> {
    if bits == 0 {
        return Err(Error::InvalidInput("bits must be at least 1".into()));
    }
    Ok((0..rows)
        .map(|_| DVector::from_fn(bits, |_, _| f64::from(rng.random_range(0..=1u8))))
        .collect())
}

/// Writes samples as a pretty-printed JSON array.
///
/// # Errors
///
/// Returns [`Error::Io`] or [`Error::Json`] on failure.
pub fn write_dataset(path: &Path, samples: &[TaskSample]) -> Result<()> {
    let file = File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(file), samples)?;
    Ok(())
}

/// Reads a JSON dataset and validates every sample.
///
/// # Errors
///
/// Returns [`Error::Io`] or [`Error::Json`] on malformed files and
/// [`Error::DimensionMismatch`] if a sample's sequences disagree with its
/// declared dimensions.
pub fn read_dataset(path: &Path) -> Result<Vec<TaskSample>> {
    let file = File::open(path)?;
    let samples: Vec<TaskSample> = serde_json::from_reader(BufReader::new(file))?;
    for sample in &samples {
        sample.validate()?;
    }
    Ok(samples)
}
