//! Reservoir memory machine: an echo state reservoir coupled to an external
//! memory through a write head and a three-action read head.
//!
//! Per step, the reservoir state advances first, then the write head decides
//! whether to store the current input in the next write slot, then the read
//! head moves over the memory and the addressed row joins the output. Memory
//! positions are 1-based and wrap around.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::{esn_step, ReservoirWeights};
use crate::ser;

/// Trained parameters of a reservoir memory machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmmParams {
    /// Write-head input weights, one per input channel.
    #[serde(with = "ser::vector")]
    pub write_input: DVector<f64>,
    /// Write-head reservoir weights, one per reservoir unit.
    #[serde(with = "ser::vector")]
    pub write_state: DVector<f64>,
    /// Read-head input weights, `3 x input_dim`, one row per action.
    #[serde(with = "ser::matrix_rows")]
    pub read_input: DMatrix<f64>,
    /// Read-head reservoir weights, `3 x reservoir_size`, one row per action.
    #[serde(with = "ser::matrix_rows")]
    pub read_state: DMatrix<f64>,
    /// Output weights applied to the reservoir state, `output_dim x reservoir_size`.
    #[serde(with = "ser::matrix_rows")]
    pub readout_state: DMatrix<f64>,
    /// Output weights applied to the recalled memory row, `output_dim x input_dim`.
    #[serde(with = "ser::matrix_rows")]
    pub readout_memory: DMatrix<f64>,
    /// Number of memory rows `K`.
    pub memory_size: usize,
}

impl RmmParams {
    /// All-zero parameters with the given dimensions.
    pub fn zeros(
        input_dim: usize,
        reservoir_size: usize,
        output_dim: usize,
        memory_size: usize,
    ) -> Self {
        Self {
            write_input: DVector::zeros(input_dim),
            write_state: DVector::zeros(reservoir_size),
            read_input: DMatrix::zeros(3, input_dim),
            read_state: DMatrix::zeros(3, reservoir_size),
            readout_state: DMatrix::zeros(output_dim, reservoir_size),
            readout_memory: DMatrix::zeros(output_dim, input_dim),
            memory_size,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.write_input.len()
    }

    pub fn reservoir_size(&self) -> usize {
        self.write_state.len()
    }

    pub fn output_dim(&self) -> usize {
        self.readout_state.nrows()
    }

    /// Checks that all parameter blocks agree on their shared dimensions.
    ///
    /// # Errors
    ///
    /// Returns [`Error::DimensionMismatch`] or [`Error::InvalidInput`] naming
    /// the inconsistent block.
    pub fn validate(&self) -> Result<()> {
        let n = self.input_dim();
        let m = self.reservoir_size();
        let out = self.output_dim();
        if self.memory_size == 0 {
            return Err(Error::InvalidInput("memory_size must be at least 1".into()));
        }
        let blocks = [
            ("read_input", self.read_input.shape(), (3, n)),
            ("read_state", self.read_state.shape(), (3, m)),
            ("readout_state", self.readout_state.shape(), (out, m)),
            ("readout_memory", self.readout_memory.shape(), (out, n)),
        ];
        for (name, got, want) in blocks {
            if got != want {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has shape {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        Ok(())
    }
}

/// Read-head action, ordered by tie-break preference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadAction {
    /// Keep the current read position.
    Stay,
    /// Advance one row, wrapping from the last row to the first.
    Increment,
    /// Return to the first row.
    Reset,
}

impl ReadAction {
    /// Picks the action with the largest control value; ties prefer `Stay`
    /// over `Increment` over `Reset`.
    pub fn from_controls(controls: &[f64; 3]) -> Self {
        if controls[0] >= controls[1] && controls[0] >= controls[2] {
            ReadAction::Stay
        } else if controls[1] >= controls[2] {
            ReadAction::Increment
        } else {
            ReadAction::Reset
        }
    }

    /// Applies the action to a 1-based position over `memory_size` rows.
    pub fn apply(self, position: usize, memory_size: usize) -> usize {
        match self {
            ReadAction::Stay => position,
            ReadAction::Increment => {
                if position == memory_size {
                    1
                } else {
                    position + 1
                }
            }
            ReadAction::Reset => 1,
        }
    }

    /// Index of the action's control row.
    pub fn index(self) -> usize {
        match self {
            ReadAction::Stay => 0,
            ReadAction::Increment => 1,
            ReadAction::Reset => 2,
        }
    }
}

/// Full machine state: reservoir activation, memory contents, and both head
/// positions (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct RmmState {
    pub reservoir: DVector<f64>,
    /// Memory rows, `memory_size x input_dim`.
    pub memory: DMatrix<f64>,
    pub write_pos: usize,
    pub read_pos: usize,
}

impl RmmState {
    /// Zero reservoir, zero memory, both heads on row 1.
    pub fn initial(reservoir_size: usize, input_dim: usize, memory_size: usize) -> Self {
        Self {
            reservoir: DVector::zeros(reservoir_size),
            memory: DMatrix::zeros(memory_size, input_dim),
            write_pos: 1,
            read_pos: 1,
        }
    }
}

/// Everything observable about one machine step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    /// Write-head control value; the write fires when it is strictly positive.
    pub write_control: f64,
    /// Whether the input was written to memory this step.
    pub wrote: bool,
    /// Read-head control values in action order (stay, increment, reset).
    pub read_controls: [f64; 3],
    /// Action the read head took.
    pub read_action: ReadAction,
    /// Memory row recalled after this step's write.
    pub read_vector: DVector<f64>,
    /// Model output for this step.
    pub output: DVector<f64>,
}

/// Advances the machine by one step given the already-updated reservoir state
/// `reservoir_next`, returning the new state and a trace of the step.
///
/// Order within the step: the write head stores `input` at the write position
/// (and advances, wrapping) when its control is strictly positive; the read
/// head then picks its action and reads from the memory as updated by this
/// step's write; the output combines the reservoir state and the recalled row.
///
/// # Errors
///
/// Returns [`Error::DimensionMismatch`] if `input`, `reservoir_next`, or the
/// state's memory disagree with the parameter dimensions, and
/// [`Error::InvalidInput`] if a head position is out of range.
pub fn rmm_step(
    state: &RmmState,
    input: &DVector<f64>,
    reservoir_next: &DVector<f64>,
    params: &RmmParams,
) -> Result<(RmmState, StepTrace)> {
    let n = params.input_dim();
    let m = params.reservoir_size();
    let k = params.memory_size;
    if input.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "input has {} channels, expected {n}",
            input.len()
        )));
    }
    if reservoir_next.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "reservoir state has {} units, expected {m}",
            reservoir_next.len()
        )));
    }
    if state.memory.shape() != (k, n) {
        return Err(Error::DimensionMismatch(format!(
            "memory has shape {}x{}, expected {k}x{n}",
            state.memory.nrows(),
            state.memory.ncols()
        )));
    }
    if state.write_pos == 0 || state.write_pos > k || state.read_pos == 0 || state.read_pos > k {
        return Err(Error::InvalidInput(format!(
            "head positions must lie in 1..={k}, got write {} read {}",
            state.write_pos, state.read_pos
        )));
    }

    let mut memory = state.memory.clone();
    let mut write_pos = state.write_pos;
    let write_control = params.write_input.dot(input) + params.write_state.dot(reservoir_next);
    let wrote = write_control > 0.0;
    if wrote {
        memory.row_mut(write_pos - 1).tr_copy_from(input);
        write_pos = if write_pos == k { 1 } else { write_pos + 1 };
    }

    let controls = &params.read_input * input + &params.read_state * reservoir_next;
    let read_controls = [controls[0], controls[1], controls[2]];
    let read_action = ReadAction::from_controls(&read_controls);
    let read_pos = read_action.apply(state.read_pos, k);
    let read_vector = memory.row(read_pos - 1).transpose();

    let output = &params.readout_state * reservoir_next + &params.readout_memory * &read_vector;

    let next = RmmState {
        reservoir: reservoir_next.clone(),
        memory,
        write_pos,
        read_pos,
    };
    let trace = StepTrace {
        write_control,
        wrote,
        read_controls,
        read_action,
        read_vector,
        output,
    };
    Ok((next, trace))
}

/// Per-step outputs, traces, and states from a full rollout, one entry each
/// per input.
pub type Rollout = (Vec<DVector<f64>>, Vec<StepTrace>, Vec<RmmState>);

/// Runs the machine over a whole input sequence from the initial state.
///
/// # Errors
///
/// Returns [`Error::DimensionMismatch`] if the reservoir weights and machine
/// parameters disagree, or if any input vector has the wrong length.
pub fn rmm_run(
    weights: &ReservoirWeights,
    params: &RmmParams,
    inputs: &[DVector<f64>],
) -> Result<Rollout> {
    check_compatible(weights, params)?;
    let mut reservoir = DVector::zeros(weights.reservoir_size());
    let mut reservoir_states = Vec::with_capacity(inputs.len());
    for x in inputs {
        if x.len() != weights.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} channels, expected {}",
                x.len(),
                weights.input_dim()
            )));
        }
        reservoir = esn_step(weights, &reservoir, x);
        reservoir_states.push(reservoir.clone());
    }
    rmm_run_with_states(params, inputs, &reservoir_states)
}

/// Same as [`rmm_run`] but reusing precomputed reservoir states.
pub(crate) fn rmm_run_with_states(
    params: &RmmParams,
    inputs: &[DVector<f64>],
    reservoir_states: &[DVector<f64>],
) -> Result<Rollout> {
    params.validate()?;
    debug_assert_eq!(inputs.len(), reservoir_states.len());
    let mut state = RmmState::initial(
        params.reservoir_size(),
        params.input_dim(),
        params.memory_size,
    );
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut traces = Vec::with_capacity(inputs.len());
    let mut states = Vec::with_capacity(inputs.len());
    for (x, h) in inputs.iter().zip(reservoir_states) {
        let (next, trace) = rmm_step(&state, x, h, params)?;
        outputs.push(trace.output.clone());
        traces.push(trace);
        states.push(next.clone());
        state = next;
    }
    Ok((outputs, traces, states))
}

/// Rolls out only the write head over a sequence and returns the memory
/// contents after each step's write.
pub(crate) fn write_rollout(
    write_input: &DVector<f64>,
    write_state: &DVector<f64>,
    memory_size: usize,
    inputs: &[DVector<f64>],
    reservoir_states: &[DVector<f64>],
) -> Vec<DMatrix<f64>> {
    debug_assert_eq!(inputs.len(), reservoir_states.len());
    let n = write_input.len();
    let mut memory = DMatrix::zeros(memory_size, n);
    let mut write_pos = 1usize;
    let mut snapshots = Vec::with_capacity(inputs.len());
    for (x, h) in inputs.iter().zip(reservoir_states) {
        let control = write_input.dot(x) + write_state.dot(h);
        if control > 0.0 {
            memory.row_mut(write_pos - 1).tr_copy_from(x);
            write_pos = if write_pos == memory_size {
                1
            } else {
                write_pos + 1
            };
        }
        snapshots.push(memory.clone());
    }
    snapshots
}

fn check_compatible(weights: &ReservoirWeights, params: &RmmParams) -> Result<()> {
    params.validate()?;
    if weights.input_dim() != params.input_dim()
        || weights.reservoir_size() != params.reservoir_size()
    {
        return Err(Error::DimensionMismatch(format!(
            "reservoir is {}x{} but parameters expect {}x{}",
            weights.reservoir_size(),
            weights.input_dim(),
            params.reservoir_size(),
            params.input_dim()
        )));
    }
    Ok(())
}
