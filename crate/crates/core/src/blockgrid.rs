//! Column-block partitioning of the input matrices and reassembly of the
//! output product grid.
//!
//! `A` is `s x r` and `B` is `s x t`. `A` is cut into `m` column blocks and
//! `B` into `n`; the outer code stretches those to `m_tilde` and `n_tilde`
//! coded blocks. The output grid `U` holds one `(r/m) x (t/n)` block per
//! pair of coded blocks. All indices in this crate are 0-based.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense real matrix block.
pub type Block = DMatrix<f64>;

/// Shape contract shared by every stage of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    /// Columns of `A`.
    #[serde(alias = "r")]
    pub a_cols: usize,
    /// Shared inner dimension (rows of `A` and `B`).
    #[serde(alias = "s")]
    pub inner: usize,
    /// Columns of `B`.
    #[serde(alias = "t")]
    pub b_cols: usize,
    /// Number of column blocks of `A`.
    #[serde(alias = "m")]
    pub a_blocks: usize,
    /// Number of column blocks of `B`.
    #[serde(alias = "n")]
    pub b_blocks: usize,
    /// Outer-coded blocks of `A` (at least `a_blocks`).
    #[serde(alias = "m_tilde")]
    pub a_coded: usize,
    /// Outer-coded blocks of `B` (at least `b_blocks`).
    #[serde(alias = "n_tilde")]
    pub b_coded: usize,
}

impl PartitionSpec {
    pub fn new(
        a_cols: usize,
        inner: usize,
        b_cols: usize,
        a_blocks: usize,
        b_blocks: usize,
        a_coded: usize,
        b_coded: usize,
    ) -> Result<Self> {
        let spec = PartitionSpec {
            a_cols,
            inner,
            b_cols,
            a_blocks,
            b_blocks,
            a_coded,
            b_coded,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A spec with unit-sized blocks, for experiments that only care about
    /// the grid shape.
    pub fn grid_only(a_blocks: usize, b_blocks: usize, a_coded: usize, b_coded: usize) -> Result<Self> {
        Self::new(a_blocks, 1, b_blocks, a_blocks, b_blocks, a_coded, b_coded)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("r", self.a_cols),
            ("s", self.inner),
            ("t", self.b_cols),
            ("m", self.a_blocks),
            ("n", self.b_blocks),
            ("m_tilde", self.a_coded),
            ("n_tilde", self.b_coded),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidPartition(format!("{name} must be positive")));
        }
        if self.a_cols % self.a_blocks != 0 {
            return Err(Error::NonDivisible {
                what: "blocks of A",
                value: self.a_cols,
                divisor: self.a_blocks,
            });
        }
        if self.b_cols % self.b_blocks != 0 {
            return Err(Error::NonDivisible {
                what: "blocks of B",
                value: self.b_cols,
                divisor: self.b_blocks,
            });
        }
        if self.a_coded < self.a_blocks || self.b_coded < self.b_blocks {
            return Err(Error::InvalidPartition(format!(
                "outer code ({},{})x({},{}) shorter than its message",
                self.a_coded, self.a_blocks, self.b_coded, self.b_blocks
            )));
        }
        Ok(())
    }

    /// Rows of one output block, `r/m`.
    pub fn block_rows(&self) -> usize {
        self.a_cols / self.a_blocks
    }

    /// Columns of one output block, `t/n`.
    pub fn block_cols(&self) -> usize {
        self.b_cols / self.b_blocks
    }

    /// Number of source symbols in the coded grid, `m_tilde * n_tilde`.
    pub fn num_symbols(&self) -> usize {
        self.a_coded * self.b_coded
    }

    /// Number of systematic source symbols, `m * n`.
    pub fn num_systematic(&self) -> usize {
        self.a_blocks * self.b_blocks
    }

    pub fn is_systematic(&self, flat: usize) -> bool {
        let (i, j) = (flat / self.b_coded, flat % self.b_coded);
        i < self.a_blocks && j < self.b_blocks
    }
}

/// Row-major position of grid cell `(i, j)` in the column order of the
/// coefficient matrix.
pub fn flat_index(i: usize, j: usize, spec: &PartitionSpec) -> Result<usize> {
    if i >= spec.a_coded || j >= spec.b_coded {
        return Err(Error::OutOfRange {
            i,
            j,
            rows: spec.a_coded,
            cols: spec.b_coded,
        });
    }
    Ok(i * spec.b_coded + j)
}

pub fn unflat_index(k: usize, spec: &PartitionSpec) -> Result<(usize, usize)> {
    if k >= spec.num_symbols() {
        return Err(Error::OutOfRange {
            i: k / spec.b_coded,
            j: k % spec.b_coded,
            rows: spec.a_coded,
            cols: spec.b_coded,
        });
    }
    Ok((k / spec.b_coded, k % spec.b_coded))
}

/// Cuts `x` into `k` equal-width column blocks, left to right.
pub fn split_columns(x: &Block, k: usize) -> Result<Vec<Block>> {
    if k == 0 || x.ncols() % k != 0 {
        return Err(Error::NonDivisible {
            what: "column split",
            value: x.ncols(),
            divisor: k,
        });
    }
    let width = x.ncols() / k;
    Ok((0..k)
        .map(|b| x.columns(b * width, width).into_owned())
        .collect())
}

/// Horizontal concatenation; the inverse of [`split_columns`].
pub fn hconcat(blocks: &[Block]) -> Result<Block> {
    let Some(first) = blocks.first() else {
        return Ok(Block::zeros(0, 0));
    };
    let rows = first.nrows();
    if blocks.iter().any(|b| b.nrows() != rows) {
        return Err(Error::ShapeMismatch("blocks differ in row count".into()));
    }
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Block::zeros(rows, total);
    let mut col = 0;
    for b in blocks {
        out.columns_mut(col, b.ncols()).copy_from(b);
        col += b.ncols();
    }
    Ok(out)
}

/// The `m_tilde x n_tilde` grid of output blocks; `None` marks an erasure.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    rows: usize,
    cols: usize,
    cells: Vec<Option<Block>>,
}

impl BlockGrid {
    pub fn erased(rows: usize, cols: usize) -> Self {
        BlockGrid {
            rows,
            cols,
            cells: vec![None; rows * cols],
        }
    }

    pub fn for_spec(spec: &PartitionSpec) -> Self {
        Self::erased(spec.a_coded, spec.b_coded)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&Block> {
        self.cells.get(i * self.cols + j).and_then(|c| c.as_ref())
    }

    /// Stores a block, rejecting shapes that differ from cells already present.
    pub fn set(&mut self, i: usize, j: usize, block: Block) -> Result<()> {
        if i >= self.rows || j >= self.cols {
            return Err(Error::OutOfRange {
                i,
                j,
                rows: self.rows,
                cols: self.cols,
            });
        }
        if let Some(existing) = self.cells.iter().flatten().next() {
            if existing.shape() != block.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "cell ({i},{j}) is {:?}, grid cells are {:?}",
                    block.shape(),
                    existing.shape()
                )));
            }
        }
        self.cells[i * self.cols + j] = Some(block);
        Ok(())
    }

    pub fn erase(&mut self, i: usize, j: usize) {
        if i < self.rows && j < self.cols {
            self.cells[i * self.cols + j] = None;
        }
    }

    pub fn is_present(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_some()
    }

    pub fn present_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}

/// Copies the systematic blocks of `grid` into the `r x t` product.
/// Parity cells (row index >= m or column index >= n) are ignored.
pub fn assemble_product(grid: &BlockGrid, spec: &PartitionSpec) -> Result<Block> {
    if grid.rows() != spec.a_coded || grid.cols() != spec.b_coded {
        return Err(Error::ShapeMismatch(format!(
            "grid is {}x{}, spec wants {}x{}",
            grid.rows(),
            grid.cols(),
            spec.a_coded,
            spec.b_coded
        )));
    }
    let (br, bc) = (spec.block_rows(), spec.block_cols());
    let mut out = Block::zeros(spec.a_cols, spec.b_cols);
    for i in 0..spec.a_blocks {
        for j in 0..spec.b_blocks {
            let block = grid.get(i, j).ok_or(Error::MissingBlock(i + 1, j + 1))?;
            if block.shape() != (br, bc) {
                return Err(Error::ShapeMismatch(format!(
                    "block ({i},{j}) is {:?}, expected {:?}",
                    block.shape(),
                    (br, bc)
                )));
            }
            out.view_mut((i * br, j * bc), (br, bc)).copy_from(block);
        }
    }
    Ok(out)
}
