//! Intruder-tracking POMDP primitives.
//!
//! States are 0-based grid positions `0..n` plus an absorbing exit state at
//! index `n`. The intruder's movement is a fixed row-stochastic matrix that
//! does not depend on which sensors are powered. Each period the controller
//! picks an [`ActionMask`] (which sensors are ON), the intruder moves, and the
//! controller receives an [`Observation`]. The single-stage cost is
//!
//! ```text
//! g(u, s') = miss(u, s') + lambda * |u|
//! ```
//!
//! where `miss` is 1 when the intruder lands on a powered-off position.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row sums must match 1 within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("transition matrix must have {expected} rows of length {expected}, got {rows}x{cols}")]
    Shape {
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("transition entry ({row}, {col}) = {value} outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("transition row {row} sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("exit state must be absorbing")]
    ExitNotAbsorbing,
    #[error("state index {index} out of range for {n} positions plus exit")]
    InvalidState { index: usize, n: usize },
    #[error("kernel must have {expected} non-negative weights with positive total")]
    InvalidKernel { expected: usize },
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("exit probability {0} outside [0, 1)")]
    InvalidExitProb(f64),
    #[error("lambda {0} outside [0, 1]")]
    InvalidLambda(f64),
    #[error("discount {0} outside (0, 1)")]
    InvalidDiscount(f64),
    #[error("action mask has length {got}, expected {expected}")]
    MaskLength { expected: usize, got: usize },
}

/// Intruder movement matrix of size `(n+1) x (n+1)`; index `n` is the exit state.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    n: usize,
    matrix: Vec<f64>,
    // Nonzero entries per row, kept for sparse propagation and sampling.
    support: Vec<Vec<(usize, f64)>>,
}

impl TransitionModel {
    /// Builds a model from dense rows, validating stochasticity and the absorbing exit.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let size = rows.len();
        if size < 2 {
            return Err(ModelError::Shape {
                expected: 2,
                rows: size,
                cols: rows.first().map_or(0, Vec::len),
            });
        }
        let n = size - 1;
        let mut matrix = Vec::with_capacity(size * size);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(ModelError::Shape {
                    expected: size,
                    rows: size,
                    cols: row.len(),
                });
            }
            for (j, &value) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) || value.is_nan() {
                    return Err(ModelError::EntryOutOfRange {
                        row: i,
                        col: j,
                        value,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() >= ROW_SUM_TOL {
                return Err(ModelError::RowSum { row: i, sum });
            }
            matrix.extend_from_slice(row);
        }
        if matrix[n * size + n] != 1.0 {
            return Err(ModelError::ExitNotAbsorbing);
        }
        let support = (0..size)
            .map(|i| {
                matrix[i * size..(i + 1) * size]
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(j, &w)| (j, w))
                    .collect()
            })
            .collect();
        Ok(Self { n, matrix, support })
    }

    /// Number of sensor positions (excluding the exit state).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Index of the absorbing exit state.
    pub fn exit_index(&self) -> usize {
        self.n
    }

    /// Total number of states, `n + 1`.
    pub fn num_states(&self) -> usize {
        self.n + 1
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.matrix[from * self.num_states() + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        let size = self.num_states();
        &self.matrix[from * size..(from + 1) * size]
    }

    /// Nonzero `(column, probability)` pairs of a row, in column order.
    pub fn row_support(&self, from: usize) -> &[(usize, f64)] {
        &self.support[from]
    }

    /// Samples the successor of `from` by inverse-CDF over the row's support.
    pub fn sample_next<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let row = &self.support[from];
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for &(j, w) in row {
            acc += w;
            if u < acc {
                return j;
            }
        }
        // Round-off left u above the final cumulative sum.
        row.last().map_or(from, |&(j, _)| j)
    }
}

/// Which sensors are powered for the next period.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionMask(Vec<bool>);

impl ActionMask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn all_off(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn all_on(n: usize) -> Self {
        Self(vec![true; n])
    }

    /// Mask of length `n` that is ON exactly at `positions`.
    ///
    /// Panics if a position is `>= n`.
    pub fn with_on<I: IntoIterator<Item = usize>>(n: usize, positions: I) -> Self {
        let mut bits = vec![false; n];
        for l in positions {
            bits[l] = true;
        }
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_on(&self, position: usize) -> bool {
        self.0.get(position).copied().unwrap_or(false)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count_on(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn on_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(l, _)| l)
    }
}

/// What the controller learns after a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observation {
    /// An ON sensor saw the intruder at this position.
    Tracked(usize),
    /// No ON sensor saw the intruder.
    Miss,
    /// The intruder left the network.
    Exited,
}

impl Observation {
    /// Observation generated when the intruder moves to `next_state` under `action`.
    pub fn observe(action: &ActionMask, next_state: usize) -> Self {
        if next_state >= action.len() {
            Observation::Exited
        } else if action.is_on(next_state) {
            Observation::Tracked(next_state)
        } else {
            Observation::Miss
        }
    }
}

/// Relaxation weight and discount used by the planners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    lambda: f64,
    discount: f64,
}

impl CostParams {
    pub fn new(lambda: f64, discount: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(ModelError::InvalidLambda(lambda));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(ModelError::InvalidDiscount(discount));
        }
        Ok(Self { lambda, discount })
    }

    /// `lambda` with the default discount of 0.9.
    pub fn with_lambda(lambda: f64) -> Result<Self, ModelError> {
        Self::new(lambda, 0.9)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }
}

/// 1 if the intruder lands on a powered-off position, 0 if it is seen or exits.
pub fn tracking_cost(action: &ActionMask, next_state: usize) -> Result<u32, ModelError> {
    let n = action.len();
    match next_state {
        s if s < n => Ok(u32::from(!action.is_on(s))),
        s if s == n => Ok(0),
        s => Err(ModelError::InvalidState { index: s, n }),
    }
}

/// Number of powered sensors.
pub fn energy_cost(action: &ActionMask) -> u32 {
    action.count_on() as u32
}

/// Tracking cost plus `lambda` times energy cost.
pub fn relaxed_cost(
    action: &ActionMask,
    next_state: usize,
    params: &CostParams,
) -> Result<f64, ModelError> {
    let miss = tracking_cost(action, next_state)?;
    Ok(f64::from(miss) + params.lambda * f64::from(energy_cost(action)))
}

/// Sensor layout and intruder mobility pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Topology {
    /// Sensors on a line; the intruder moves at most `max_step` positions per period.
    Line {
        n: usize,
        max_step: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kernel: Option<Vec<f64>>,
    },
    /// `rows x cols` grid; the intruder moves to one of its 8 neighbours.
    Grid { rows: usize, cols: usize },
}

impl Topology {
    pub fn num_positions(&self) -> usize {
        match self {
            Topology::Line { n, .. } => *n,
            Topology::Grid { rows, cols } => rows * cols,
        }
    }

    /// Centre position: `n / 2` on a line, `(rows / 2, cols / 2)` on a grid.
    pub fn center(&self) -> usize {
        match self {
            Topology::Line { n, .. } => n / 2,
            Topology::Grid { rows, cols } => (rows / 2) * cols + cols / 2,
        }
    }

    pub fn build(&self, exit_prob: f64, seed: u64) -> Result<TransitionModel, ModelError> {
        match self {
            Topology::Line {
                n,
                max_step,
                kernel,
            } => build_line_model(*n, *max_step, exit_prob, kernel.as_deref()),
            Topology::Grid { rows, cols } => build_grid_model(*rows, *cols, exit_prob, seed),
        }
    }
}

fn check_exit_prob(exit_prob: f64) -> Result<(), ModelError> {
    if (0.0..1.0).contains(&exit_prob) {
        Ok(())
    } else {
        Err(ModelError::InvalidExitProb(exit_prob))
    }
}

/// Assembles rows from per-position neighbour weights, scaling them to `1 - exit_prob`.
fn assemble(n: usize, exit_prob: f64, weights: Vec<Vec<(usize, f64)>>) -> TransitionModel {
    let mut rows = vec![vec![0.0; n + 1]; n + 1];
    for (i, neighbours) in weights.into_iter().enumerate() {
        let total: f64 = neighbours.iter().map(|&(_, w)| w).sum();
        for (j, w) in neighbours {
            rows[i][j] += (1.0 - exit_prob) * w / total;
        }
        rows[i][n] += exit_prob;
    }
    rows[n][n] = 1.0;
    TransitionModel::from_rows(rows).expect("assembled rows are stochastic")
}

/// Line of `n` sensors where the intruder moves by an offset in `-max_step..=max_step`.
///
/// `kernel[k]` weights offset `k - max_step`; the default is uniform. Offsets that
/// leave the line are dropped and the row renormalized.
pub fn build_line_model(
    n: usize,
    max_step: usize,
    exit_prob: f64,
    kernel: Option<&[f64]>,
) -> Result<TransitionModel, ModelError> {
    if max_step == 0 || n < 2 * max_step + 1 {
        return Err(ModelError::InvalidTopology(format!(
            "line needs max_step >= 1 and n >= 2*max_step+1 (n={n}, max_step={max_step})"
        )));
    }
    check_exit_prob(exit_prob)?;
    let width = 2 * max_step + 1;
    let uniform = vec![1.0; width];
    let kernel = kernel.unwrap_or(&uniform);
    if kernel.len() != width
        || kernel.iter().any(|&w| !w.is_finite() || w < 0.0)
        || kernel.iter().sum::<f64>() <= 0.0
    {
        return Err(ModelError::InvalidKernel { expected: width });
    }
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<(usize, f64)> = kernel
            .iter()
            .enumerate()
            .filter_map(|(k, &w)| {
                let j = (i + k).checked_sub(max_step)?;
                (j < n && w > 0.0).then_some((j, w))
            })
            .collect();
        if row.is_empty() {
            return Err(ModelError::InvalidKernel { expected: width });
        }
        weights.push(row);
    }
    Ok(assemble(n, exit_prob, weights))
}

/// `rows x cols` grid with seeded random weights over each cell's in-grid 8-neighbourhood.
pub fn build_grid_model(
    rows: usize,
    cols: usize,
    exit_prob: f64,
    seed: u64,
) -> Result<TransitionModel, ModelError> {
    if rows < 2 || cols < 2 {
        return Err(ModelError::InvalidTopology(format!(
            "grid needs rows, cols >= 2 (got {rows}x{cols})"
        )));
    }
    check_exit_prob(exit_prob)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rows * cols;
    let mut weights = Vec::with_capacity(n);
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            let mut row = Vec::with_capacity(8);
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r + dr, c + dc);
                    if nr >= 0 && nc >= 0 && nr < rows as isize && nc < cols as isize {
                        // Bounded away from zero so every neighbour stays reachable.
                        let w: f64 = rng.gen_range(0.05..1.0);
                        row.push((nr as usize * cols + nc as usize, w));
                    }
                }
            }
            weights.push(row);
        }
    }
    Ok(assemble(n, exit_prob, weights))
}
