//! Deterministic echo state reservoirs built as cycle reservoirs with jumps.
//!
//! The recurrent matrix is a directed cycle with one shared cycle weight plus
//! symmetric jump edges with one shared jump weight. The input matrix uses a
//! single magnitude whose signs follow the decimal digits of pi. Construction
//! involves no random numbers, so a hyperparameter tuple fully determines the
//! weights.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};

/// Fractional decimal digits of pi, used as a fixed pseudo-random sign source.
const PI_DIGITS: &str = include_str!("pi_digits.txt");

static SPECTRAL_WARNING_EMITTED: AtomicBool = AtomicBool::new(false);

/// Hyperparameters of a cycle reservoir with jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrjHyperparams {
    /// Number of reservoir units `m`.
    pub reservoir_size: usize,
    /// Number of input channels `n`.
    pub input_dim: usize,
    /// Magnitude of every input weight, in `(-1, 1)`.
    pub input_weight: f64,
    /// Weight of every cycle edge, in `[0, 1)`.
    pub cycle_weight: f64,
    /// Weight of every jump edge, in `[0, 1)`.
    pub jump_weight: f64,
    /// Distance between jump anchors, in `{2, ..., reservoir_size - 2}`.
    pub jump_length: usize,
}

impl CrjHyperparams {
    /// Checks every hyperparameter against its admissible range.
    ///
    /// # Errors
    ///
    /// Returns [`Error::InvalidHyperparams`] naming the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.reservoir_size == 0 {
            return Err(Error::InvalidHyperparams(
                "reservoir_size must be at least 1".into(),
            ));
        }
        if self.input_dim == 0 {
            return Err(Error::InvalidHyperparams(
                "input_dim must be at least 1".into(),
            ));
        }
        if !self.input_weight.is_finite() || self.input_weight.abs() >= 1.0 {
            return Err(Error::InvalidHyperparams(format!(
                "input_weight must lie in (-1, 1), got {}",
                self.input_weight
            )));
        }
        if !self.cycle_weight.is_finite() || !(0.0..1.0).contains(&self.cycle_weight) {
            return Err(Error::InvalidHyperparams(format!(
                "cycle_weight must lie in [0, 1), got {}",
                self.cycle_weight
            )));
        }
        if !self.jump_weight.is_finite() || !(0.0..1.0).contains(&self.jump_weight) {
            return Err(Error::InvalidHyperparams(format!(
                "jump_weight must lie in [0, 1), got {}",
                self.jump_weight
            )));
        }
        // jump_length = reservoir_size - 1 would place a jump edge on top of
        // the cycle edge that wraps from the last unit to the first, so the
        // largest admissible jump is reservoir_size - 2.
        if self.jump_length < 2 || self.jump_length + 2 > self.reservoir_size {
            return Err(Error::InvalidHyperparams(format!(
                "jump_length must lie in {{2, ..., reservoir_size - 2}}, got {} for reservoir_size {}",
                self.jump_length, self.reservoir_size
            )));
        }
        Ok(())
    }
}

/// Fixed weights of a reservoir: input matrix, recurrent matrix, and the
/// estimated spectral radius of the recurrent matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirWeights {
    /// Input-to-reservoir matrix, `reservoir_size x input_dim`.
    pub input: DMatrix<f64>,
    /// Reservoir-to-reservoir matrix, `reservoir_size x reservoir_size`.
    pub recurrent: DMatrix<f64>,
    /// Power-iteration estimate of the recurrent matrix's spectral radius.
    pub spectral_radius: f64,
}

impl ReservoirWeights {
    /// Wraps explicit matrices, estimating the spectral radius.
    ///
    /// # Errors
    ///
    /// Returns [`Error::DimensionMismatch`] if `recurrent` is not square or
    /// its side does not match the rows of `input`.
    pub fn from_parts(input: DMatrix<f64>, recurrent: DMatrix<f64>) -> Result<Self> {
        if recurrent.nrows() != recurrent.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "recurrent matrix must be square, got {}x{}",
                recurrent.nrows(),
                recurrent.ncols()
            )));
        }
        if input.nrows() != recurrent.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "input matrix has {} rows but the reservoir has {} units",
                input.nrows(),
                recurrent.nrows()
            )));
        }
        let spectral_radius = estimate_spectral_radius(&recurrent, 100);
        if spectral_radius >= 1.0 && !SPECTRAL_WARNING_EMITTED.swap(true, Ordering::Relaxed) {
            log::warn!(
                "reservoir spectral radius estimate {spectral_radius:.4} is >= 1; \
                 state trajectories may not contract"
            );
        }
        Ok(Self {
            input,
            recurrent,
            spectral_radius,
        })
    }

    /// Number of reservoir units.
    pub fn reservoir_size(&self) -> usize {
        self.recurrent.nrows()
    }

    /// Number of input channels.
    pub fn input_dim(&self) -> usize {
        self.input.ncols()
    }
}

/// Returns `count` signs in `{-1, +1}` read off the fractional decimal digits
/// of pi: digits 0 through 4 map to `-1`, digits 5 through 9 map to `+1`.
///
/// # Panics
///
/// Panics if `count` exceeds the embedded digit table (100000 digits).
pub fn pi_signs(count: usize) -> Vec<f64> {
    assert!(
        count <= PI_DIGITS.len(),
        "sign table holds {} digits but {count} were requested",
        PI_DIGITS.len()
    );
    PI_DIGITS
        .bytes()
        .take(count)
        .map(|b| if b - b'0' <= 4 { -1.0 } else { 1.0 })
        .collect()
}

/// Builds the deterministic reservoir described by `hp`.
///
/// The recurrent matrix carries cycle edges `W[(i+1) mod m][i] = cycle_weight`
/// and symmetric jump edges `W[j][j+l] = W[j+l][j] = jump_weight` for
/// `j = 0, l, 2l, ...` while `j + l <= m - 1`. Entry `(i, j)` of the input
/// matrix is `input_weight` times the sign of fractional pi digit `i*n + j`.
///
/// # Errors
///
/// Propagates [`CrjHyperparams::validate`] failures.
pub fn build_crj(hp: &CrjHyperparams) -> Result<ReservoirWeights> {
    hp.validate()?;
    let m = hp.reservoir_size;
    let n = hp.input_dim;

    let signs = pi_signs(m * n);
    let input = DMatrix::from_fn(m, n, |i, j| signs[i * n + j] * hp.input_weight);

    let mut recurrent = DMatrix::zeros(m, m);
    for i in 0..m {
        recurrent[((i + 1) % m, i)] = hp.cycle_weight;
    }
    let mut j = 0;
    while j + hp.jump_length < m {
        recurrent[(j, j + hp.jump_length)] = hp.jump_weight;
        recurrent[(j + hp.jump_length, j)] = hp.jump_weight;
        j += hp.jump_length;
    }

    ReservoirWeights::from_parts(input, recurrent)
}

/// Estimates the spectral radius of `w` with `iters` power-iteration steps
/// from a uniform start vector.
fn estimate_spectral_radius(w: &DMatrix<f64>, iters: usize) -> f64 {
    let m = w.nrows();
    if m == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(m, 1.0 / (m as f64).sqrt());
    let mut radius = 0.0;
    for _ in 0..iters {
        let next = w * &v;
        let norm = next.norm();
        if norm < 1e-300 {
            return 0.0;
        }
        radius = norm;
        v = next / norm;
    }
    radius
}

/// Recurrent update rule used by a readout-only baseline model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dynamics {
    /// Plain tanh echo state update.
    Esn,
    /// Gated update with shared reservoir weights in every gate.
    Esgru,
}

impl Dynamics {
    /// Runs the chosen update rule over `inputs`. See [`esn_run`] and
    /// [`esgru_run`].
    pub fn run(
        self,
        weights: &ReservoirWeights,
        inputs: &[DVector<f64>],
    ) -> Result<Vec<DVector<f64>>> {
        match self {
            Dynamics::Esn => esn_run(weights, inputs),
            Dynamics::Esgru => esgru_run(weights, inputs),
        }
    }
}

/// One echo state update: `tanh(U x + W h)`.
pub fn esn_step(
    weights: &ReservoirWeights,
    state: &DVector<f64>,
    input: &DVector<f64>,
) -> DVector<f64> {
    debug_assert_eq!(state.len(), weights.reservoir_size());
    debug_assert_eq!(input.len(), weights.input_dim());
    let mut pre = DVector::zeros(weights.reservoir_size());
    pre.gemv(1.0, &weights.input, input, 0.0);
    pre.gemv(1.0, &weights.recurrent, state, 1.0);
    pre.apply(|v| *v = v.tanh());
    pre
}

/// Runs the echo state recurrence from the zero state and returns the state
/// after every step, so the result has one entry per input.
///
/// # Errors
///
/// Returns [`Error::DimensionMismatch`] if any input vector's length differs
/// from the reservoir's input dimension.
pub fn esn_run(weights: &ReservoirWeights, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    check_input_dims(weights, inputs)?;
    let mut state = DVector::zeros(weights.reservoir_size());
    let mut states = Vec::with_capacity(inputs.len());
    for x in inputs {
        state = esn_step(weights, &state, x);
        states.push(state.clone());
    }
    Ok(states)
}

/// One gated update sharing the reservoir weights across gates:
/// `z = r = sigmoid(U x + W h)`, candidate `tanh(U x + W (r ⊙ h))`, and
/// `h' = (1 - z) ⊙ h + z ⊙ candidate`.
pub fn esgru_step(
    weights: &ReservoirWeights,
    state: &DVector<f64>,
    input: &DVector<f64>,
) -> DVector<f64> {
    debug_assert_eq!(state.len(), weights.reservoir_size());
    debug_assert_eq!(input.len(), weights.input_dim());
    let m = weights.reservoir_size();

    let mut drive = DVector::zeros(m);
    drive.gemv(1.0, &weights.input, input, 0.0);

    let mut gate = drive.clone();
    gate.gemv(1.0, &weights.recurrent, state, 1.0);
    gate.apply(|v| *v = sigmoid(*v));

    let gated_state = state.component_mul(&gate);
    let mut candidate = drive;
    candidate.gemv(1.0, &weights.recurrent, &gated_state, 1.0);
    candidate.apply(|v| *v = v.tanh());

    let mut next = DVector::zeros(m);
    for i in 0..m {
        next[i] = (1.0 - gate[i]) * state[i] + gate[i] * candidate[i];
    }
    next
}

/// Runs the gated recurrence from the zero state; same contract as
/// [`esn_run`].
///
/// # Errors
///
/// Returns [`Error::DimensionMismatch`] if any input vector's length differs
/// from the reservoir's input dimension.
pub fn esgru_run(weights: &ReservoirWeights, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    check_input_dims(weights, inputs)?;
    let mut state = DVector::zeros(weights.reservoir_size());
    let mut states = Vec::with_capacity(inputs.len());
    for x in inputs {
        state = esgru_step(weights, &state, x);
        states.push(state.clone());
    }
    Ok(states)
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn check_input_dims(weights: &ReservoirWeights, inputs: &[DVector<f64>]) -> Result<()> {
    let n = weights.input_dim();
    for (t, x) in inputs.iter().enumerate() {
        if x.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "input at step {} has {} channels, expected {}",
                t + 1,
                x.len(),
                n
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_hp() -> CrjHyperparams {
        CrjHyperparams {
            reservoir_size: 4,
            input_dim: 2,
            input_weight: 0.5,
            cycle_weight: 0.9,
            jump_weight: 0.3,
            jump_length: 2,
        }
    }

    #[test]
    fn pi_signs_match_leading_digits() {
        // Digits 1 4 1 5 9 2 6 5 3 5 with the 0..=4 -> -1, 5..=9 -> +1 rule.
        let expected = [-1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
        assert_eq!(pi_signs(10), expected);
    }

    #[test]
    fn pi_sign_prefixes_are_consistent() {
        let long = pi_signs(1000);
        let short = pi_signs(10);
        assert_eq!(&long[..10], &short[..]);
        assert!(long.iter().all(|s| *s == 1.0 || *s == -1.0));
    }

    #[test]
    fn crj_matrices_match_hand_construction() {
        let weights = build_crj(&small_hp()).unwrap();
        let expected_recurrent = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 0.3, 0.9, //
                0.9, 0.0, 0.0, 0.0, //
                0.3, 0.9, 0.0, 0.0, //
                0.0, 0.0, 0.9, 0.0,
            ],
        );
        let expected_input =
            DMatrix::from_row_slice(4, 2, &[-0.5, -0.5, -0.5, 0.5, 0.5, -0.5, 0.5, 0.5]);
        assert_eq!(weights.recurrent, expected_recurrent);
        assert_eq!(weights.input, expected_input);
    }

    #[test]
    fn construction_is_deterministic() {
        let a = build_crj(&small_hp()).unwrap();
        let b = build_crj(&small_hp()).unwrap();
        assert_eq!(a.input, b.input);
        assert_eq!(a.recurrent, b.recurrent);
    }

    #[test]
    fn recurrent_nonzero_count_matches_closed_form() {
        for m in 4..40 {
            for l in 2..=(m - 2) {
                let hp = CrjHyperparams {
                    reservoir_size: m,
                    input_dim: 1,
                    input_weight: 0.5,
                    cycle_weight: 0.9,
                    jump_weight: 0.3,
                    jump_length: l,
                };
                let weights = build_crj(&hp).unwrap();
                let nnz = weights.recurrent.iter().filter(|v| **v != 0.0).count();
                assert_eq!(nnz, m + 2 * ((m - 1) / l), "m={m} l={l}");
            }
        }
    }

    #[test]
    fn out_of_range_hyperparams_are_rejected() {
        let base = small_hp();
        let cases = [
            CrjHyperparams {
                input_weight: 1.0,
                ..base.clone()
            },
            CrjHyperparams {
                input_weight: f64::NAN,
                ..base.clone()
            },
            CrjHyperparams {
                cycle_weight: 1.0,
                ..base.clone()
            },
            CrjHyperparams {
                cycle_weight: -0.1,
                ..base.clone()
            },
            CrjHyperparams {
                jump_weight: 1.0,
                ..base.clone()
            },
            CrjHyperparams {
                jump_length: 1,
                ..base.clone()
            },
            CrjHyperparams {
                jump_length: 3,
                ..base.clone()
            },
            CrjHyperparams {
                jump_length: 4,
                ..base.clone()
            },
            CrjHyperparams {
                reservoir_size: 0,
                ..base.clone()
            },
            CrjHyperparams {
                input_dim: 0,
                ..base.clone()
            },
        ];
        for hp in cases {
            assert!(
                matches!(hp.validate(), Err(Error::InvalidHyperparams(_))),
                "expected rejection for {hp:?}"
            );
        }
    }

    #[test]
    fn jump_edges_never_overlap_cycle_edges() {
        // The largest admissible jump length still keeps jump anchors off the
        // wrap-around cycle edge, so every jump entry is exactly jump_weight.
        for m in [4usize, 5, 9, 16] {
            let hp = CrjHyperparams {
                reservoir_size: m,
                input_dim: 1,
                input_weight: 0.5,
                cycle_weight: 0.9,
                jump_weight: 0.3,
                jump_length: m - 2,
            };
            let weights = build_crj(&hp).unwrap();
            for v in weights.recurrent.iter() {
                assert!(*v == 0.0 || *v == 0.9 || *v == 0.3);
            }
        }
    }

    #[test]
    fn cycle_only_spectral_radius_is_cycle_weight() {
        let hp = CrjHyperparams {
            reservoir_size: 8,
            input_dim: 1,
            input_weight: 0.5,
            cycle_weight: 0.75,
            jump_weight: 0.0,
            jump_length: 3,
        };
        let weights = build_crj(&hp).unwrap();
        assert!((weights.spectral_radius - 0.75).abs() < 1e-9);
    }

    #[test]
    fn large_weights_are_kept_even_past_radius_one() {
        let hp = CrjHyperparams {
            reservoir_size: 8,
            input_dim: 1,
            input_weight: 0.5,
            cycle_weight: 0.95,
            jump_weight: 0.95,
            jump_length: 2,
        };
        let weights = build_crj(&hp).unwrap();
        assert!(weights.spectral_radius >= 1.0);
        assert_eq!(weights.recurrent[(1, 0)], 0.95);
        assert_eq!(weights.recurrent[(0, 2)], 0.95);
    }

    #[test]
    fn esn_run_matches_scalar_recurrence() {
        let weights = ReservoirWeights::from_parts(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.5),
        )
        .unwrap();
        let inputs = vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![1.0])];
        let states = esn_run(&weights, &inputs).unwrap();

        let h1 = 1.0f64.tanh();
        let h2 = (1.0 + 0.5 * h1).tanh();
        assert!((states[0][0] - h1).abs() < 1e-12);
        assert!((states[1][0] - h2).abs() < 1e-12);
        assert!((h1 - 0.761594).abs() < 1e-6);
        assert!((h2 - 0.881130).abs() < 1e-6);
    }

    #[test]
    fn esgru_run_matches_scalar_recurrence() {
        let weights = ReservoirWeights::from_parts(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.5),
        )
        .unwrap();
        let inputs = vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![0.5])];
        let states = esgru_run(&weights, &inputs).unwrap();

        let mut h = 0.0f64;
        for x in [1.0, 0.5] {
            let z = sigmoid(x + 0.5 * h);
            let cand = (x + 0.5 * (z * h)).tanh();
            h = (1.0 - z) * h + z * cand;
        }
        assert!((states[1][0] - h).abs() < 1e-12);
    }

    #[test]
    fn esgru_state_stays_bounded() {
        let weights = build_crj(&small_hp()).unwrap();
        let inputs: Vec<DVector<f64>> = (0..50)
            .map(|t| DVector::from_vec(vec![(t as f64 * 0.7).sin(), 1.0]))
            .collect();
        let states = esgru_run(&weights, &inputs).unwrap();
        for h in &states {
            assert!(h.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn run_rejects_mismatched_input_dim() {
        let weights = build_crj(&small_hp()).unwrap();
        let inputs = vec![DVector::from_vec(vec![1.0])];
        assert!(matches!(
            esn_run(&weights, &inputs),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            esgru_run(&weights, &inputs),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn from_parts_rejects_non_square_recurrent() {
        let r = ReservoirWeights::from_parts(DMatrix::zeros(2, 1), DMatrix::zeros(2, 3));
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }
}
