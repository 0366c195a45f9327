//! Master-side decoding: peeling on the worker equations, filling grid lines
//! from the outer product code, and inactivation with a final dense solve.

mod engine;
mod support;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use engine::{Affine, DecodeState};
pub use support::{support_decode, SupportOptions};

use crate::blockgrid::{assemble_product, Block, BlockGrid, PartitionSpec};
use crate::error::{Error, Result};
use crate::flt::WorkerTask;
use crate::outer::{LineCodes, OuterProductCode};

/// Dimensions of the coded output grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub a_coded: usize,
    pub a_blocks: usize,
    pub b_coded: usize,
    pub b_blocks: usize,
}

impl GridShape {
    pub fn new(a_coded: usize, a_blocks: usize, b_coded: usize, b_blocks: usize) -> Self {
        GridShape {
            a_coded,
            a_blocks,
            b_coded,
            b_blocks,
        }
    }

    pub fn num_symbols(&self) -> usize {
        self.a_coded * self.b_coded
    }

    pub fn is_systematic(&self, k: usize) -> bool {
        k / self.b_coded < self.a_blocks && k % self.b_coded < self.b_blocks
    }

    pub fn row_redundancy(&self) -> usize {
        self.b_coded - self.b_blocks
    }

    pub fn col_redundancy(&self) -> usize {
        self.a_coded - self.a_blocks
    }
}

impl From<&PartitionSpec> for GridShape {
    fn from(spec: &PartitionSpec) -> Self {
        GridShape::new(spec.a_coded, spec.a_blocks, spec.b_coded, spec.b_blocks)
    }
}

/// Which grid lines a fill pass tries first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FillOrder {
    #[default]
    #[serde(rename = "ROWS_FIRST")]
    RowsFirst,
    #[serde(rename = "COLUMNS_FIRST")]
    ColumnsFirst,
}

/// Equations used for the final solve after inactivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SolveSystem {
    /// Leftover worker equations plus every outer parity check.
    #[default]
    #[serde(rename = "COMBINED")]
    Combined,
    /// Leftover worker equations only.
    #[serde(rename = "FLT_ONLY")]
    FltOnly,
}

/// Which symbol to inactivate when peeling and line filling stall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InactivationRule {
    /// The unknown symbol sitting in the most residual rows with exactly two
    /// unknowns, each of which then peels at once. Ties go to the symbol in
    /// the most worker rows.
    #[default]
    #[serde(rename = "DEGREE_TWO")]
    DegreeTwo,
    /// The unknown symbol appearing in the most worker rows.
    #[serde(rename = "MAX_DEGREE")]
    MaxDegree,
    /// A symbol of the residual row with fewest unknowns, so that row is
    /// one step closer to peeling. Within the row the symbol appearing in
    /// the most worker rows is taken.
    #[serde(rename = "MIN_ROW")]
    MinRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DecodeOptions {
    #[serde(default)]
    pub fill_order: FillOrder,
    #[serde(default)]
    pub system: SolveSystem,
    #[serde(default)]
    pub inactivation: InactivationRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "SUCCESS")]
    Success,
    #[default]
    #[serde(rename = "FAILURE")]
    Failure,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        self == Outcome::Success
    }
}

impl From<bool> for Outcome {
    fn from(ok: bool) -> Self {
        if ok {
            Outcome::Success
        } else {
            Outcome::Failure
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Success => "SUCCESS",
            Outcome::Failure => "FAILURE",
        })
    }
}

/// How a symbol became known.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Via {
    Peel { worker: usize },
    RowDecode { row: usize },
    ColumnDecode { col: usize },
    Inactivated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recovery {
    pub symbol: usize,
    pub via: Via,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecodeReport {
    pub outcome: Outcome,
    pub peeled: usize,
    pub product_filled: usize,
    pub inactivated: usize,
    pub edge_operations: usize,
}

impl DecodeReport {
    pub const CSV_HEADER: &'static str = "outcome,peeled,product_filled,inactivated,edge_ops";
}

impl fmt::Display for DecodeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.outcome, self.peeled, self.product_filled, self.inactivated, self.edge_operations
        )
    }
}

/// Result of a numeric decode.
#[derive(Debug, Clone)]
pub struct Decoded {
    /// `A^T B` when every systematic block was recovered.
    pub product: Option<Block>,
    pub grid: BlockGrid,
    pub report: DecodeReport,
    pub trace: Vec<Recovery>,
}

/// Builds a numeric decoding session from received worker results.
/// `results[p]` is the product returned for `tasks[p]`.
pub fn numeric_state(
    tasks: &[WorkerTask],
    results: &[Block],
    outer: Option<&OuterProductCode>,
    spec: &PartitionSpec,
    options: DecodeOptions,
) -> Result<DecodeState<f64, Block>> {
    if tasks.len() != results.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} tasks but {} results",
            tasks.len(),
            results.len()
        )));
    }
    let codes = match outer {
        Some(o) => {
            o.check_spec(spec)?;
            Some(LineCodes::from_outer(o))
        }
        None => None,
    };
    let zero = Block::zeros(spec.block_rows(), spec.block_cols());
    let mut state = DecodeState::new(GridShape::from(spec), codes, zero, options)?;
    for (task, value) in tasks.iter().zip(results) {
        if value.shape() != (spec.block_rows(), spec.block_cols()) {
            return Err(Error::ShapeMismatch(format!(
                "worker {} returned {}x{}, expected {}x{}",
                task.worker + 1,
                value.nrows(),
                value.ncols(),
                spec.block_rows(),
                spec.block_cols()
            )));
        }
        state.add_row(task.worker, &task.row_entries(spec), value.clone())?;
    }
    Ok(state)
}

fn finish(state: &DecodeState<f64, Block>, spec: &PartitionSpec) -> Result<Decoded> {
    let mut grid = BlockGrid::for_spec(spec);
    for k in 0..spec.num_symbols() {
        if let Some(v) = state.value(k) {
            if v.d.iter().all(|c| *c == 0.0) {
                grid.set(k / spec.b_coded, k % spec.b_coded, v.x.clone())?;
            }
        }
    }
    let report = state.report();
    let product = if report.outcome.is_success() {
        Some(assemble_product(&grid, spec)?)
    } else {
        None
    };
    Ok(Decoded {
        product,
        grid,
        report,
        trace: state.trace().to_vec(),
    })
}

/// Peeling alternated with outer-code line filling.
pub fn decode(tasks: &[WorkerTask], results: &[Block], outer: &OuterProductCode, spec: &PartitionSpec) -> Result<Decoded> {
    decode_with(tasks, results, Some(outer), spec, DecodeOptions::default())
}

pub fn decode_with(
    tasks: &[WorkerTask],
    results: &[Block],
    outer: Option<&OuterProductCode>,
    spec: &PartitionSpec,
    options: DecodeOptions,
) -> Result<Decoded> {
    let mut state = numeric_state(tasks, results, outer, spec, options)?;
    state.run_peeling()?;
    finish(&state, spec)
}

/// Maximum-likelihood decoding: peeling and line filling with inactivation
/// whenever both stall, then a dense solve for the inactivated symbols.
pub fn inactivation_decode(
    tasks: &[WorkerTask],
    results: &[Block],
    outer: &OuterProductCode,
    spec: &PartitionSpec,
) -> Result<Decoded> {
    inactivation_decode_with(tasks, results, Some(outer), spec, DecodeOptions::default())
}

pub fn inactivation_decode_with(
    tasks: &[WorkerTask],
    results: &[Block],
    outer: Option<&OuterProductCode>,
    spec: &PartitionSpec,
    options: DecodeOptions,
) -> Result<Decoded> {
    let mut state = numeric_state(tasks, results, outer, spec, options)?;
    state.run_inactivation()?;
    finish(&state, spec)
}

#[cfg(test)]
mod tests;
