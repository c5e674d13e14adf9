//! Training routines: ridge regression, derivation of write and read head
//! targets from the task, and the alternating fit of a reservoir memory
//! machine.
//!
//! All parameter blocks are fit in closed form. The write head learns to
//! store the inputs that best explain later targets; the read head learns to
//! replay the cheapest alignment between memory rows and targets; the readout
//! maps reservoir state and recalled row onto the targets.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::machine::{rmm_run_with_states, write_rollout, ReadAction, RmmParams};
use crate::reservoir::{esn_run, Dynamics, ReservoirWeights};
use crate::tasks::TaskSample;

/// Stopping threshold on the improvement of the training loss between
/// alternating passes.
const LOSS_TOLERANCE: f64 = 1e-6;

/// A least-squares problem `theta * features ≈ targets` with L2 penalty
/// `lambda` on `theta`.
#[derive(Debug, Clone)]
pub struct RidgeProblem {
    /// Feature matrix, one column per observation.
    pub features: DMatrix<f64>,
    /// Target matrix with the same column count as `features`.
    pub targets: DMatrix<f64>,
    /// Regularization strength, nonnegative.
    pub lambda: f64,
}

/// Solves a ridge problem in closed form:
/// `theta = targets * features^T * (features * features^T + lambda I)^{-1}`.
///
/// # Errors
///
/// Returns [`Error::DimensionMismatch`] if the column counts disagree,
/// [`Error::InvalidInput`] for an empty problem or invalid `lambda`, and
/// [`Error::SingularSystem`] if the normal matrix cannot be inverted (always
/// solvable for `lambda > 0`).
pub fn ridge_fit(problem: &RidgeProblem) -> Result<DMatrix<f64>> {
    let f = &problem.features;
    let y = &problem.targets;
    if f.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "features have {} columns but targets have {}",
            f.ncols(),
            y.ncols()
        )));
    }
    if f.ncols() == 0 || f.nrows() == 0 {
        return Err(Error::InvalidInput(
            "ridge problem needs at least one feature row and one observation".into(),
        ));
    }
    let factor = RidgeFactor::new(f, problem.lambda)?;
    Ok(factor.solve_targets(f, y))
}

/// Cached factorization of a ridge normal matrix, reusable across target
/// matrices that share the same features and lambda.
struct RidgeFactor {
    factor: NormalFactor,
}

enum NormalFactor {
    Chol(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl RidgeFactor {
    fn new(features: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidInput(format!(
                "lambda must be a nonnegative finite number, got {lambda}"
            )));
        }
        let d = features.nrows();
        let mut normal = features * features.transpose();
        for i in 0..d {
            normal[(i, i)] += lambda;
        }
        let factor = if lambda > 0.0 {
            match normal.clone().cholesky() {
                Some(chol) => NormalFactor::Chol(chol),
                None => NormalFactor::Lu(normal.lu()),
            }
        } else {
            NormalFactor::Lu(normal.lu())
        };
        if let NormalFactor::Lu(lu) = &factor {
            if !lu.is_invertible() {
                return Err(Error::SingularSystem);
            }
        }
        Ok(Self { factor })
    }

    /// Solves `(F F^T + lambda I) X = rhs`.
    fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.factor {
            NormalFactor::Chol(chol) => chol.solve(rhs),
            NormalFactor::Lu(lu) => lu
                .solve(rhs)
                .expect("factor was checked invertible at construction"),
        }
    }

    /// Returns `theta` with `theta * features ≈ targets`.
    fn solve_targets(&self, features: &DMatrix<f64>, targets: &DMatrix<f64>) -> DMatrix<f64> {
        let rhs = features * targets.transpose();
        self.solve(&rhs).transpose()
    }
}

/// Write-head supervision derived from a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct WriteTargets {
    /// Sorted, deduplicated 1-based steps whose input should be written.
    pub tau: Vec<usize>,
    /// Per-step regression target: `+1` at steps in `tau`, `-1` elsewhere.
    pub control: Vec<f64>,
}

/// Determines which input steps are worth storing, given the current
/// memory-to-output map `readout_memory`.
///
/// For every step `t`, the best write target is the earliest step
/// `tau <= t` whose projected input `readout_memory * x_tau` is closest to
/// `y_t` in Euclidean norm. The union of these steps becomes the positive
/// class of the write-head control targets.
///
/// # Errors
///
/// Returns [`Error::DimensionMismatch`] if the sequences differ in length or
/// a vector does not match `readout_memory`'s shape.
pub fn derive_write_targets(
    inputs: &[DVector<f64>],
    targets: &[DVector<f64>],
    readout_memory: &DMatrix<f64>,
) -> Result<WriteTargets> {
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} input steps but {} target steps",
            inputs.len(),
            targets.len()
        )));
    }
    let steps = inputs.len();
    let mut projected: Vec<DVector<f64>> = Vec::with_capacity(steps);
    let mut chosen = vec![false; steps];
    for t in 0..steps {
        if inputs[t].len() != readout_memory.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "input step {} has {} channels, expected {}",
                t + 1,
                inputs[t].len(),
                readout_memory.ncols()
            )));
        }
        if targets[t].len() != readout_memory.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "target step {} has {} channels, expected {}",
                t + 1,
                targets[t].len(),
                readout_memory.nrows()
            )));
        }
        projected.push(readout_memory * &inputs[t]);
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (tau, p) in projected.iter().enumerate() {
            let dist = (p - &targets[t]).norm();
            if dist < best_dist {
                best_dist = dist;
                best = tau;
            }
        }
        chosen[best] = true;
    }
    let tau: Vec<usize> = chosen
        .iter()
        .enumerate()
        .filter_map(|(t, c)| c.then_some(t + 1))
        .collect();
    let control: Vec<f64> = chosen.iter().map(|c| if *c { 1.0 } else { -1.0 }).collect();
    Ok(WriteTargets { tau, control })
}

/// Result of aligning a memory trajectory with a target sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// Cost-to-go table with one row per memory row and one column per step
    /// plus a trailing all-zero column.
    pub table: DMatrix<f64>,
    /// Cost of the cheapest read-head trajectory.
    pub optimal_cost: f64,
    /// Actions of that trajectory, one per step.
    pub actions: Vec<ReadAction>,
    /// 1-based read positions after each action.
    pub positions: Vec<usize>,
}

/// Finds the cheapest read-head trajectory over a given memory trajectory.
///
/// `memories[t]` holds the memory contents after step `t+1`'s write. The
/// step cost of reading row `l` at step `t` is
/// `|readout_memory * memories[t].row(l) - targets[t]|`. The table is filled
/// backwards with the recurrence over the three admissible moves (stay,
/// increment with wraparound, reset to row 1); the trajectory starts at
/// row 1 and applies one action per step. Ties prefer stay, then increment,
/// then reset.
///
/// # Errors
///
/// Returns [`Error::InvalidInput`] for an empty sequence or fewer than two
/// memory rows, and [`Error::DimensionMismatch`] for inconsistent shapes.
pub fn align_memory(
    memories: &[DMatrix<f64>],
    targets: &[DVector<f64>],
    readout_memory: &DMatrix<f64>,
) -> Result<AlignmentResult> {
    if memories.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} memory snapshots but {} target steps",
            memories.len(),
            targets.len()
        )));
    }
    let steps = memories.len();
    if steps == 0 {
        return Err(Error::InvalidInput(
            "alignment needs at least one step".into(),
        ));
    }
    let rows = memories[0].nrows();
    if rows < 2 {
        return Err(Error::InvalidInput(format!(
            "alignment needs at least 2 memory rows, got {rows}"
        )));
    }
    let width = readout_memory.ncols();
    let out_dim = readout_memory.nrows();
    for (t, m) in memories.iter().enumerate() {
        if m.nrows() != rows || m.ncols() != width {
            return Err(Error::DimensionMismatch(format!(
                "memory snapshot {} has shape {}x{}, expected {rows}x{width}",
                t + 1,
                m.nrows(),
                m.ncols()
            )));
        }
        if targets[t].len() != out_dim {
            return Err(Error::DimensionMismatch(format!(
                "target step {} has {} channels, expected {out_dim}",
                t + 1,
                targets[t].len()
            )));
        }
    }

    // cost[(l, t)] = |readout_memory * memories[t].row(l)^T - targets[t]|
    let projector = readout_memory.transpose();
    let mut cost = DMatrix::zeros(rows, steps);
    for t in 0..steps {
        let projected = &memories[t] * &projector;
        for l in 0..rows {
            let mut sq = 0.0;
            for j in 0..out_dim {
                let diff = projected[(l, j)] - targets[t][j];
                sq += diff * diff;
            }
            cost[(l, t)] = sq.sqrt();
        }
    }

    let mut table: DMatrix<f64> = DMatrix::zeros(rows, steps + 1);
    for t in (0..steps).rev() {
        for l in 0..rows {
            let stay = table[(l, t + 1)];
            let increment = table[((l + 1) % rows, t + 1)];
            let reset = table[(0, t + 1)];
            table[(l, t)] = cost[(l, t)] + stay.min(increment).min(reset);
        }
    }
    let optimal_cost = table[(0, 0)].min(table[(1, 0)]);

    let mut actions = Vec::with_capacity(steps);
    let mut positions = Vec::with_capacity(steps);
    let mut pos = 1usize;
    for t in 0..steps {
        let mut best_action = ReadAction::Stay;
        let mut best_pos = pos;
        let mut best_value = f64::INFINITY;
        for action in [ReadAction::Stay, ReadAction::Increment, ReadAction::Reset] {
            let next = action.apply(pos, rows);
            let value = table[(next - 1, t)];
            if value < best_value {
                best_value = value;
                best_action = action;
                best_pos = next;
            }
        }
        actions.push(best_action);
        positions.push(best_pos);
        pos = best_pos;
    }

    Ok(AlignmentResult {
        table,
        optimal_cost,
        actions,
        positions,
    })
}

/// Outcome of the alternating fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    /// Number of accepted alternating passes.
    pub iterations: usize,
    /// Training RMSE after each accepted pass, non-increasing.
    pub loss_history: Vec<f64>,
    /// Whether the fit stopped by itself rather than by the pass limit.
    pub converged: bool,
    /// Parameters of the best pass.
    pub final_params: RmmParams,
}

/// Fits all parameter blocks of a reservoir memory machine by alternating
/// closed-form passes.
///
/// Each pass derives write targets from the current memory readout, fits the
/// write head, aligns the resulting memory trajectories with the targets,
/// fits the read head, and refits the readout on reservoir states and
/// recalled rows. Passes repeat until the training RMSE increases (the
/// previous parameters are kept), improves by less than `1e-6`, or
/// `max_iters` passes have run.
///
/// # Errors
///
/// Returns [`Error::InvalidInput`] for an empty dataset, `memory_size < 2`,
/// or `max_iters == 0`, and propagates dimension and ridge errors.
pub fn fit_rmm(
    weights: &ReservoirWeights,
    dataset: &[TaskSample],
    lambda: f64,
    memory_size: usize,
    max_iters: usize,
) -> Result<FitReport> {
    let (input_dim, output_dim) = dataset_dims(dataset)?;
    if weights.input_dim() != input_dim {
        return Err(Error::DimensionMismatch(format!(
            "reservoir expects {} input channels but the dataset has {input_dim}",
            weights.input_dim()
        )));
    }
    if memory_size < 2 {
        return Err(Error::InvalidInput(format!(
            "memory_size must be at least 2, got {memory_size}"
        )));
    }
    if max_iters == 0 {
        return Err(Error::InvalidInput("max_iters must be at least 1".into()));
    }
    let m = weights.reservoir_size();
    let n = input_dim;

    let states: Vec<Vec<DVector<f64>>> = dataset
        .iter()
        .map(|s| esn_run(weights, &s.inputs))
        .collect::<Result<_>>()?;
    let offsets = column_offsets(dataset);
    let total = offsets.last().copied().unwrap_or(0);

    // Features (x_t; h_t) and pooled targets are fixed across passes.
    let mut input_state_feats = DMatrix::zeros(n + m, total);
    let mut target_mat = DMatrix::zeros(output_dim, total);
    for (s, sample) in dataset.iter().enumerate() {
        for (t, (x, h)) in sample.inputs.iter().zip(&states[s]).enumerate() {
            let col = offsets[s] + t;
            input_state_feats.view_mut((0, col), (n, 1)).copy_from(x);
            input_state_feats.view_mut((n, col), (m, 1)).copy_from(h);
            target_mat
                .view_mut((0, col), (output_dim, 1))
                .copy_from(&sample.targets[t]);
        }
    }
    let head_factor = RidgeFactor::new(&input_state_feats, lambda)?;

    let mut readout_memory = DMatrix::identity(output_dim, n);
    let mut accepted: Option<RmmParams> = None;
    let mut loss_history: Vec<f64> = Vec::new();
    let mut converged = false;

    for _pass in 0..max_iters {
        // Write head.
        let mut write_targets = DMatrix::zeros(1, total);
        for (s, sample) in dataset.iter().enumerate() {
            let wt = derive_write_targets(&sample.inputs, &sample.targets, &readout_memory)?;
            for (t, c) in wt.control.iter().enumerate() {
                write_targets[(0, offsets[s] + t)] = *c;
            }
        }
        let theta_w = head_factor.solve_targets(&input_state_feats, &write_targets);
        let write_input = theta_w
            .view((0, 0), (1, n))
            .transpose()
            .column(0)
            .into_owned();
        let write_state = theta_w
            .view((0, n), (1, m))
            .transpose()
            .column(0)
            .into_owned();

        // Read head, supervised by the cheapest alignment under the trained
        // write head.
        let mut read_targets = DMatrix::zeros(3, total);
        for (s, sample) in dataset.iter().enumerate() {
            let memories = write_rollout(
                &write_input,
                &write_state,
                memory_size,
                &sample.inputs,
                &states[s],
            );
            let alignment = align_memory(&memories, &sample.targets, &readout_memory)?;
            for (t, action) in alignment.actions.iter().enumerate() {
                read_targets[(action.index(), offsets[s] + t)] = 1.0;
            }
        }
        let theta_r = head_factor.solve_targets(&input_state_feats, &read_targets);
        let read_input = theta_r.columns(0, n).into_owned();
        let read_state = theta_r.columns(n, m).into_owned();

        // Readout over reservoir states and the rows the trained heads recall.
        let mut candidate = RmmParams {
            write_input,
            write_state,
            read_input,
            read_state,
            readout_state: DMatrix::zeros(output_dim, m),
            readout_memory: DMatrix::zeros(output_dim, n),
            memory_size,
        };
        let mut state_recall_feats = DMatrix::zeros(m + n, total);
        for (s, sample) in dataset.iter().enumerate() {
            let (_, traces, _) = rmm_run_with_states(&candidate, &sample.inputs, &states[s])?;
            for (t, (h, trace)) in states[s].iter().zip(&traces).enumerate() {
                let col = offsets[s] + t;
                state_recall_feats.view_mut((0, col), (m, 1)).copy_from(h);
                state_recall_feats
                    .view_mut((m, col), (n, 1))
                    .copy_from(&trace.read_vector);
            }
        }
        let readout_factor = RidgeFactor::new(&state_recall_feats, lambda)?;
        let theta_o = readout_factor.solve_targets(&state_recall_feats, &target_mat);
        candidate.readout_state = theta_o.columns(0, m).into_owned();
        candidate.readout_memory = theta_o.columns(m, n).into_owned();

        let residual = &theta_o * &state_recall_feats - &target_mat;
        let loss = residual.norm() / ((output_dim * total) as f64).sqrt();
        if !loss.is_finite() {
            return Err(Error::InvalidInput(
                "training loss is not finite; increase lambda".into(),
            ));
        }

        let previous = loss_history.last().copied();
        if previous.is_some_and(|p| loss > p) {
            converged = true;
            break;
        }
        let improvement = previous.map_or(f64::INFINITY, |p| p - loss);
        readout_memory = candidate.readout_memory.clone();
        accepted = Some(candidate);
        loss_history.push(loss);
        if improvement < LOSS_TOLERANCE {
            converged = true;
            break;
        }
    }

    let final_params = accepted.expect("max_iters >= 1 guarantees one accepted pass");
    Ok(FitReport {
        iterations: loss_history.len(),
        loss_history,
        converged,
        final_params,
    })
}

/// Fits the linear readout of a baseline model on pooled reservoir states.
/// Returns the readout matrix mapping states to targets.
///
/// # Errors
///
/// Returns [`Error::InvalidInput`] for an empty dataset and propagates
/// dimension and ridge errors.
pub fn fit_readout(
    weights: &ReservoirWeights,
    dataset: &[TaskSample],
    lambda: f64,
    dynamics: Dynamics,
) -> Result<DMatrix<f64>> {
    let (input_dim, output_dim) = dataset_dims(dataset)?;
    if weights.input_dim() != input_dim {
        return Err(Error::DimensionMismatch(format!(
            "reservoir expects {} input channels but the dataset has {input_dim}",
            weights.input_dim()
        )));
    }
    let m = weights.reservoir_size();
    let offsets = column_offsets(dataset);
    let total = offsets.last().copied().unwrap_or(0);

    let mut features = DMatrix::zeros(m, total);
    let mut targets = DMatrix::zeros(output_dim, total);
    for (s, sample) in dataset.iter().enumerate() {
        let states = dynamics.run(weights, &sample.inputs)?;
        for (t, (h, y)) in states.iter().zip(&sample.targets).enumerate() {
            let col = offsets[s] + t;
            features.view_mut((0, col), (m, 1)).copy_from(h);
            targets.view_mut((0, col), (output_dim, 1)).copy_from(y);
        }
    }
    ridge_fit(&RidgeProblem {
        features,
        targets,
        lambda,
    })
}

/// Validates a dataset and returns its shared `(input_dim, output_dim)`.
pub(crate) fn dataset_dims(dataset: &[TaskSample]) -> Result<(usize, usize)> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::InvalidInput("dataset must not be empty".into()))?;
    for sample in dataset {
        sample.validate()?;
        if sample.input_dim != first.input_dim || sample.output_dim != first.output_dim {
            return Err(Error::DimensionMismatch(format!(
                "samples disagree on dimensions: {}x{} vs {}x{}",
                first.input_dim, first.output_dim, sample.input_dim, sample.output_dim
            )));
        }
    }
    Ok((first.input_dim, first.output_dim))
}

fn column_offsets(dataset: &[TaskSample]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dataset.len() + 1);
    let mut acc = 0usize;
    for sample in dataset {
        offsets.push(acc);
        acc += sample.len();
    }
    offsets.push(acc);
    offsets
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::{build_crj, CrjHyperparams};
    use crate::tasks::gen_latch;
    use rand::Rng;

    fn vecs(values: &[f64]) -> Vec<DVector<f64>> {
        values
            .iter()
            .map(|v| DVector::from_element(1, *v))
            .collect()
    }

    #[test]
    fn ridge_recovers_exact_map_on_square_system() {
        let features =
            DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 3.0, 2.0, 0.0, 1.0]);
        let theta_true = DMatrix::from_row_slice(2, 3, &[0.5, -1.0, 2.0, 1.5, 0.25, -0.75]);
        let targets = &theta_true * &features;
        let theta = ridge_fit(&RidgeProblem {
            features,
            targets,
            lambda: 0.0,
        })
        .unwrap();
        assert!((theta - theta_true).norm() < 1e-9);
    }

    #[test]
    fn ridge_residual_is_tiny_on_consistent_problems() {
        let mut rng = crate::seed::derive_rng(11, "ridge", 0);
        for _ in 0..20 {
            let d = rng.random_range(2..6);
            let cols = rng.random_range(d..20);
            let features = DMatrix::from_fn(d, cols, |_, _| rng.random_range(-1.0..1.0));
            let theta_true = DMatrix::from_fn(3, d, |_, _| rng.random_range(-1.0..1.0));
            let targets = &theta_true * &features;
            let theta = ridge_fit(&RidgeProblem {
                features: features.clone(),
                targets: targets.clone(),
                lambda: 1e-10,
            })
            .unwrap();
            let residual = (&theta * &features - &targets).norm() / (targets.ncols() as f64).sqrt();
            assert!(residual < 1e-6, "residual {residual}");
        }
    }

    #[test]
    fn ridge_with_zero_lambda_rejects_singular_features() {
        // Two identical rows make the normal matrix rank deficient.
        let features = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let targets = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let err = ridge_fit(&RidgeProblem {
            features: features.clone(),
            targets: targets.clone(),
            lambda: 0.0,
        })
        .unwrap_err();
        assert!(matches!(err, Error::SingularSystem));
        assert!(err.to_string().contains("lambda"));

        // Any positive lambda restores solvability.
        ridge_fit(&RidgeProblem {
            features,
            targets,
            lambda: 1e-8,
        })
        .unwrap();
    }

    #[test]
    fn larger_lambda_shrinks_the_solution() {
        let mut rng = crate::seed::derive_rng(12, "ridge-shrink", 0);
        let features = DMatrix::from_fn(4, 30, |_, _| rng.random_range(-1.0..1.0));
        let targets = DMatrix::from_fn(2, 30, |_, _| rng.random_range(-1.0..1.0));
        let small = ridge_fit(&RidgeProblem {
            features: features.clone(),
            targets: targets.clone(),
            lambda: 1e-8,
        })
        .unwrap();
        let large = ridge_fit(&RidgeProblem {
            features,
            targets,
            lambda: 100.0,
        })
        .unwrap();
        assert!(large.norm() < small.norm());
    }

    #[test]
    fn ridge_rejects_mismatched_columns() {
        let err = ridge_fit(&RidgeProblem {
            features: DMatrix::zeros(2, 3),
            targets: DMatrix::zeros(1, 4),
            lambda: 1.0,
        })
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn write_targets_pick_earliest_best_step() {
        let inputs = vecs(&[2.0, 5.0, 2.0, 7.0]);
        let targets = vecs(&[5.0, 2.0, 5.0, 7.0]);
        let identity = DMatrix::identity(1, 1);
        let wt = derive_write_targets(&inputs, &targets, &identity).unwrap();
        // Best per step: tau_1 = 1, tau_2 = 1, tau_3 = 2, tau_4 = 4.
        assert_eq!(wt.tau, vec![1, 2, 4]);
        assert_eq!(wt.control, vec![1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn write_targets_only_look_backwards() {
        // The best match for y_1 appears later in the sequence and must be
        // ignored; only steps up to t qualify.
        let inputs = vecs(&[1.0, 9.0]);
        let targets = vecs(&[9.0, 1.0]);
        let identity = DMatrix::identity(1, 1);
        let wt = derive_write_targets(&inputs, &targets, &identity).unwrap();
        assert_eq!(wt.tau, vec![1]);
        assert_eq!(wt.control, vec![1.0, -1.0]);
    }

    #[test]
    fn write_targets_break_ties_towards_earlier_steps() {
        let inputs = vecs(&[1.0, 1.0]);
        let targets = vecs(&[1.0, 1.0]);
        let identity = DMatrix::identity(1, 1);
        let wt = derive_write_targets(&inputs, &targets, &identity).unwrap();
        assert_eq!(wt.tau, vec![1]);
        assert_eq!(wt.control, vec![1.0, -1.0]);
    }

    #[test]
    fn alignment_matches_hand_solved_instance() {
        // Step costs: row 1 then row 2, per step: (0, 5), (3, 1).
        let memories = vec![
            DMatrix::from_row_slice(2, 1, &[0.0, 5.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 4.0]),
        ];
        let targets = vecs(&[0.0, 3.0]);
        let identity = DMatrix::identity(1, 1);
        let result = align_memory(&memories, &targets, &identity).unwrap();

        let expected_table = DMatrix::from_row_slice(2, 3, &[1.0, 3.0, 0.0, 6.0, 1.0, 0.0]);
        assert!((result.table - expected_table).norm() < 1e-12);
        assert!((result.optimal_cost - 1.0).abs() < 1e-12);
        assert_eq!(
            result.actions,
            vec![ReadAction::Stay, ReadAction::Increment]
        );
        assert_eq!(result.positions, vec![1, 2]);
    }

    #[test]
    fn alignment_rejects_single_row_memory() {
        let memories = vec![DMatrix::zeros(1, 1)];
        let targets = vecs(&[0.0]);
        let identity = DMatrix::identity(1, 1);
        assert!(matches!(
            align_memory(&memories, &targets, &identity),
            Err(Error::InvalidInput(_))
        ));
    }

    /// Exhaustive minimum over all action sequences, for cross-checking the
    /// dynamic program on small instances.
    fn brute_force_alignment(
        memories: &[DMatrix<f64>],
        targets: &[DVector<f64>],
        readout_memory: &DMatrix<f64>,
    ) -> f64 {
        let steps = memories.len();
        let rows = memories[0].nrows();
        let mut best = f64::INFINITY;
        for mut code in 0..3usize.pow(steps as u32) {
            let mut pos = 1usize;
            let mut cost = 0.0;
            for t in 0..steps {
                let action = match code % 3 {
                    0 => ReadAction::Stay,
                    1 => ReadAction::Increment,
                    _ => ReadAction::Reset,
                };
                code /= 3;
                pos = action.apply(pos, rows);
                let recalled = memories[t].row(pos - 1).transpose();
                cost += (readout_memory * recalled - &targets[t]).norm();
            }
            best = best.min(cost);
        }
        best
    }

    #[test]
    fn alignment_equals_brute_force_on_random_instances() {
        let mut rng = crate::seed::derive_rng(13, "align", 0);
        for case in 0..25 {
            let rows = rng.random_range(2..4usize);
            let steps = rng.random_range(1..6usize);
            let width = rng.random_range(1..3usize);
            let out = rng.random_range(1..3usize);
            let memories: Vec<DMatrix<f64>> = (0..steps)
                .map(|_| DMatrix::from_fn(rows, width, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let targets: Vec<DVector<f64>> = (0..steps)
                .map(|_| DVector::from_fn(out, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let readout = DMatrix::from_fn(out, width, |_, _| rng.random_range(-1.0..1.0));

            let result = align_memory(&memories, &targets, &readout).unwrap();
            let brute = brute_force_alignment(&memories, &targets, &readout);
            assert!(
                (result.optimal_cost - brute).abs() < 1e-9,
                "case {case}: dp {} vs brute force {brute}",
                result.optimal_cost
            );

            // The reported trajectory must replay its reported cost.
            let mut replay = 0.0;
            for (t, pos) in result.positions.iter().enumerate() {
                let recalled = memories[t].row(pos - 1).transpose();
                replay += (&readout * recalled - &targets[t]).norm();
            }
            assert!((replay - result.optimal_cost).abs() < 1e-9);
        }
    }

    fn small_weights(input_dim: usize) -> ReservoirWeights {
        build_crj(&CrjHyperparams {
            reservoir_size: 32,
            input_dim,
            input_weight: 0.5,
            cycle_weight: 0.9,
            jump_weight: 0.2,
            jump_length: 5,
        })
        .unwrap()
    }

    #[test]
    fn fit_on_zero_targets_converges_to_zero_parameters() {
        let weights = small_weights(1);
        let mut dataset = vec![gen_latch(3, 30, 3).unwrap(), gen_latch(4, 30, 3).unwrap()];
        for sample in &mut dataset {
            for y in &mut sample.targets {
                y.fill(0.0);
            }
        }
        let report = fit_rmm(&weights, &dataset, 1e-6, 4, 10).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 2);
        assert!(report.loss_history.iter().all(|l| *l < 1e-9));
        assert!(report.final_params.readout_state.norm() < 1e-9);
        assert!(report.final_params.readout_memory.norm() < 1e-9);
    }

    #[test]
    fn fit_loss_history_never_increases() {
        let weights = small_weights(1);
        let dataset: Vec<TaskSample> = (0..8).map(|s| gen_latch(s, 40, 3).unwrap()).collect();
        let report = fit_rmm(&weights, &dataset, 1e-6, 8, 10).unwrap();
        assert!(!report.loss_history.is_empty());
        assert_eq!(report.iterations, report.loss_history.len());
        for w in report.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "history {:?}", report.loss_history);
        }
    }

    #[test]
    fn fit_solves_small_latch_training_set() {
        let weights = build_crj(&CrjHyperparams {
            reservoir_size: 128,
            input_dim: 1,
            input_weight: 0.3,
            cycle_weight: 0.99,
            jump_weight: 0.2,
            jump_length: 7,
        })
        .unwrap();
        let dataset: Vec<TaskSample> = (0..10)
            .map(|s| gen_latch(100 + s, 40, 3).unwrap())
            .collect();
        let report = fit_rmm(&weights, &dataset, 1e-6, 8, 10).unwrap();
        let final_loss = report.loss_history.last().copied().unwrap();
        assert!(final_loss < 1e-2, "latch training loss {final_loss}");
    }

    #[test]
    fn fit_rejects_degenerate_arguments() {
        let weights = small_weights(1);
        let dataset = vec![gen_latch(1, 30, 3).unwrap()];
        assert!(matches!(
            fit_rmm(&weights, &[], 1e-6, 4, 10),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            fit_rmm(&weights, &dataset, 1e-6, 1, 10),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            fit_rmm(&weights, &dataset, 1e-6, 4, 0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn readout_fit_recovers_linear_map_of_states() {
        let weights = small_weights(2);
        let mut rng = crate::seed::derive_rng(21, "readout", 0);
        let mut dataset = Vec::new();
        let map = DMatrix::from_fn(2, 32, |_, _| rng.random_range(-1.0..1.0));
        for _ in 0..4 {
            let inputs: Vec<DVector<f64>> = (0..25)
                .map(|_| DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let states = esn_run(&weights, &inputs).unwrap();
            let targets: Vec<DVector<f64>> = states.iter().map(|h| &map * h).collect();
            dataset.push(TaskSample {
                task: "probe".into(),
                input_dim: 2,
                output_dim: 2,
                inputs,
                targets,
                meta: crate::tasks::SampleMeta::Shift { length: 25 },
            });
        }
        let readout = fit_readout(&weights, &dataset, 1e-10, Dynamics::Esn).unwrap();
        assert!((readout - map).norm() < 1e-4);
    }

    #[test]
    fn readout_fit_differs_between_dynamics() {
        let weights = small_weights(1);
        let dataset: Vec<TaskSample> = (0..4).map(|s| gen_latch(s, 30, 3).unwrap()).collect();
        let esn = fit_readout(&weights, &dataset, 1e-6, Dynamics::Esn).unwrap();
        let esgru = fit_readout(&weights, &dataset, 1e-6, Dynamics::Esgru).unwrap();
        assert!((esn - esgru).norm() > 1e-9);
    }
}
