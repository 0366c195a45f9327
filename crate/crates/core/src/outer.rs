//! Real-valued systematic MDS codes and the two-dimensional outer product
//! code that turns an FLT code into an FR code.
//!
//! Generators are `[I; P]` with i.i.d. Gaussian parity rows. Such a code is
//! MDS with probability one; construction verifies it on row subsets.

use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::blockgrid::{Block, PartitionSpec};
use crate::degrees::{DegreeDistribution, SplitScheme};
use crate::error::{Error, Result};
use crate::flt::{generate_tasks, CoeffMode, WorkerTask};
use crate::linalg::{self, Dense, Fp61, Scalar};

const MAX_ATTEMPTS: usize = 8;
const EXHAUSTIVE_LIMIT: usize = 12;
const RANDOM_SUBSETS: usize = 64;
const RESIDUAL_TOL: f64 = 1e-6;

/// Systematic `(n_out, k_in)` code over the reals.
#[derive(Debug, Clone, PartialEq)]
pub struct MdsCode {
    k_in: usize,
    n_out: usize,
    /// `n_out x k_in`, top `k_in` rows are the identity.
    generator: Block,
}

impl MdsCode {
    /// Builds a code from its parity rows (`(n_out - k_in) x k_in`) and
    /// verifies the MDS property.
    pub fn from_parity(k_in: usize, parity: &Block) -> Result<Self> {
        if k_in == 0 || parity.ncols() != k_in {
            return Err(Error::ShapeMismatch(format!(
                "parity is {}x{}, message length {k_in}",
                parity.nrows(),
                parity.ncols()
            )));
        }
        let n_out = k_in + parity.nrows();
        let mut generator = Block::zeros(n_out, k_in);
        generator.view_mut((0, 0), (k_in, k_in)).fill_with_identity();
        generator.view_mut((k_in, 0), (parity.nrows(), k_in)).copy_from(parity);
        let code = MdsCode { k_in, n_out, generator };
        if code.verify(&mut ChaCha8Rng::seed_from_u64(0x6d6473)) {
            Ok(code)
        } else {
            Err(Error::SingularGenerator { n_out, k_in, attempts: 1 })
        }
    }

    /// `(n, n)` identity code.
    pub fn identity(k: usize) -> Self {
        MdsCode {
            k_in: k,
            n_out: k,
            generator: Block::identity(k, k),
        }
    }

    /// A `(k_in + 1, k_in)` code whose single parity block is the plain sum.
    pub fn single_parity(k_in: usize) -> Self {
        Self::from_parity(k_in, &Block::from_element(1, k_in, 1.0)).expect("sum parity is MDS")
    }

    pub fn k_in(&self) -> usize {
        self.k_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn redundancy(&self) -> usize {
        self.n_out - self.k_in
    }

    pub fn generator(&self) -> &Block {
        &self.generator
    }

    fn rows_invertible(&self, rows: &[usize]) -> bool {
        let sub = Dense::from_fn(self.k_in, self.k_in, |i, j| self.generator[(rows[i], j)]);
        linalg::inverse(&sub).is_some()
    }

    fn verify<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        if self.n_out == self.k_in {
            return true;
        }
        if self.n_out <= EXHAUSTIVE_LIMIT {
            let mut ok = true;
            for_each_subset(self.n_out, self.k_in, &mut |rows| {
                ok = ok && self.rows_invertible(rows);
            });
            ok
        } else {
            (0..RANDOM_SUBSETS).all(|_| {
                let mut rows = sample(rng, self.n_out, self.k_in).into_vec();
                rows.sort_unstable();
                self.rows_invertible(&rows)
            })
        }
    }

    /// Writes the generator, one comma-separated row per line.
    pub fn write_generator<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for i in 0..self.n_out {
            let row: Vec<String> = (0..self.k_in).map(|j| format!("{:?}", self.generator[(i, j)])).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads a generator table; the top block must be the identity.
    pub fn read_generator<R: BufRead>(reader: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: idx + 1,
                        msg: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let k_in = rows.first().map(Vec::len).unwrap_or(0);
        if k_in == 0 || rows.len() < k_in || rows.iter().any(|r| r.len() != k_in) {
            return Err(Error::Parse {
                line: 0,
                msg: "generator rows must share a positive width and cover the identity".into(),
            });
        }
        for (i, row) in rows.iter().take(k_in).enumerate() {
            if row.iter().enumerate().any(|(j, v)| *v != if i == j { 1.0 } else { 0.0 }) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "generator is not systematic".into(),
                });
            }
        }
        let parity = Block::from_fn(rows.len() - k_in, k_in, |i, j| rows[k_in + i][j]);
        Self::from_parity(k_in, &parity)
    }

    /// Parity-check rows `[-P | I]` as a dense matrix over `f64`.
    pub fn parity_check(&self) -> Dense<f64> {
        let r = self.redundancy();
        Dense::from_fn(r, self.n_out, |i, j| {
            if j < self.k_in {
                -self.generator[(self.k_in + i, j)]
            } else if j - self.k_in == i {
                1.0
            } else {
                0.0
            }
        })
    }
}

fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Systematic Gaussian-parity `(n_out, k_in)` code, regenerated until the
/// MDS check passes.
pub fn mds_make<R: Rng + ?Sized>(k_in: usize, n_out: usize, rng: &mut R) -> Result<MdsCode> {
    if k_in == 0 || n_out < k_in {
        return Err(Error::InvalidPartition(format!("cannot build an ({n_out},{k_in}) code")));
    }
    if n_out == k_in {
        return Ok(MdsCode::identity(k_in));
    }
    for _ in 0..MAX_ATTEMPTS {
        let parity = Block::from_fn(n_out - k_in, k_in, |_, _| rng.sample(StandardNormal));
        let mut generator = Block::zeros(n_out, k_in);
        generator.view_mut((0, 0), (k_in, k_in)).fill_with_identity();
        generator.view_mut((k_in, 0), (n_out - k_in, k_in)).copy_from(&parity);
        let code = MdsCode { k_in, n_out, generator };
        if code.verify(rng) {
            return Ok(code);
        }
    }
    Err(Error::SingularGenerator {
        n_out,
        k_in,
        attempts: MAX_ATTEMPTS,
    })
}

/// Coded block `i` is `sum_j G(i, j) * blocks[j]`.
pub fn mds_encode(blocks: &[Block], code: &MdsCode) -> Result<Vec<Block>> {
    if blocks.len() != code.k_in {
        return Err(Error::ShapeMismatch(format!(
            "{} message blocks for a code of dimension {}",
            blocks.len(),
            code.k_in
        )));
    }
    let shape = blocks[0].shape();
    if blocks.iter().any(|b| b.shape() != shape) {
        return Err(Error::ShapeMismatch("message blocks differ in shape".into()));
    }
    let mut out: Vec<Block> = blocks.to_vec();
    for i in code.k_in..code.n_out {
        let mut acc = Block::zeros(shape.0, shape.1);
        for (j, b) in blocks.iter().enumerate() {
            let g = code.generator[(i, j)];
                acc.zip_apply(b, |x, y| *x += g * y);
        }
        out.push(acc);
    }
    Ok(out)
}

/// Fills erased cells from the `k_in` present cells with the smallest
/// indices. Present cells come back unchanged.
pub fn mds_erasure_decode(cells: &[Option<Block>], code: &MdsCode) -> Result<Vec<Block>> {
    if cells.len() != code.n_out {
        return Err(Error::ShapeMismatch(format!(
            "{} cells for a code of length {}",
            cells.len(),
            code.n_out
        )));
    }
    let erased = cells.iter().filter(|c| c.is_none()).count();
    if erased > code.redundancy() {
        return Err(Error::TooManyErasures {
            erased,
            capacity: code.redundancy(),
        });
    }
    if erased == 0 {
        return Ok(cells.iter().map(|c| c.clone().unwrap()).collect());
    }
    let present: Vec<usize> = (0..code.n_out).filter(|&i| cells[i].is_some()).collect();
    let basis = &present[..code.k_in];
    let sub = Dense::from_fn(code.k_in, code.k_in, |i, j| code.generator[(basis[i], j)]);
    let inv = linalg::inverse(&sub).ok_or(Error::IllConditioned(f64::INFINITY))?;
    let shape = cells[basis[0]].as_ref().unwrap().shape();
    let message: Vec<Block> = (0..code.k_in)
        .map(|l| {
            let mut acc = Block::zeros(shape.0, shape.1);
            for (c, &row) in basis.iter().enumerate() {
                let w = inv.get(l, c);
                    acc.zip_apply(cells[row].as_ref().unwrap(), |x, y| *x += w * y);
            }
            acc
        })
        .collect();
    let coded = mds_encode(&message, code)?;

    // every present cell, including the surplus ones, must agree
    let scale = present
        .iter()
        .map(|&i| cells[i].as_ref().unwrap().amax())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let residual = present
        .iter()
        .map(|&i| (&coded[i] - cells[i].as_ref().unwrap()).amax())
        .fold(0.0, f64::max)
        / scale;
    if residual > RESIDUAL_TOL {
        return Err(Error::IllConditioned(residual));
    }
    Ok(cells
        .iter()
        .zip(coded)
        .map(|(c, dec)| c.clone().unwrap_or(dec))
        .collect())
}

/// `(m_tilde, m) x (n_tilde, n)` product code: `col_code` runs down grid
/// columns (it encodes `A`), `row_code` along grid rows (it encodes `B`).
#[derive(Debug, Clone, PartialEq)]
pub struct OuterProductCode {
    pub row_code: MdsCode,
    pub col_code: MdsCode,
}

impl OuterProductCode {
    pub fn new(col_code: MdsCode, row_code: MdsCode) -> Self {
        OuterProductCode { row_code, col_code }
    }

    pub fn random<R: Rng + ?Sized>(spec: &PartitionSpec, rng: &mut R) -> Result<Self> {
        let col_code = mds_make(spec.a_blocks, spec.a_coded, rng)?;
        let row_code = mds_make(spec.b_blocks, spec.b_coded, rng)?;
        Ok(OuterProductCode { row_code, col_code })
    }

    /// Rate-one outer code: plain FLT.
    pub fn identity(spec: &PartitionSpec) -> Self {
        OuterProductCode {
            row_code: MdsCode::identity(spec.b_blocks),
            col_code: MdsCode::identity(spec.a_blocks),
        }
    }

    pub fn check_spec(&self, spec: &PartitionSpec) -> Result<()> {
        if self.col_code.k_in != spec.a_blocks
            || self.col_code.n_out != spec.a_coded
            || self.row_code.k_in != spec.b_blocks
            || self.row_code.n_out != spec.b_coded
        {
            return Err(Error::ShapeMismatch(format!(
                "outer code ({},{})x({},{}) does not match the partition",
                self.col_code.n_out, self.col_code.k_in, self.row_code.n_out, self.row_code.k_in
            )));
        }
        Ok(())
    }
}

/// Coded inputs and worker tasks of an FR code.
#[derive(Debug, Clone)]
pub struct FrEncoding {
    pub coded_a: Vec<Block>,
    pub coded_b: Vec<Block>,
    pub tasks: Vec<WorkerTask>,
}

/// Outer-encodes both inputs, then draws FLT tasks over the coded blocks.
#[allow(clippy::too_many_arguments)]
pub fn fr_encode<R: Rng + ?Sized>(
    blocks_a: &[Block],
    blocks_b: &[Block],
    outer: &OuterProductCode,
    spec: &PartitionSpec,
    dist: &DegreeDistribution,
    scheme: SplitScheme,
    workers: usize,
    mode: CoeffMode,
    rng: &mut R,
) -> Result<FrEncoding> {
    outer.check_spec(spec)?;
    let coded_a = mds_encode(blocks_a, &outer.col_code)?;
    let coded_b = mds_encode(blocks_b, &outer.row_code)?;
    let tasks = generate_tasks(spec, dist, scheme, workers, mode, rng)?;
    Ok(FrEncoding { coded_a, coded_b, tasks })
}

/// Parity-check form of one component code, over any scalar. The decoders
/// use it to fill line erasures.
#[derive(Debug, Clone)]
pub struct LineCode<S> {
    pub k_in: usize,
    pub n_out: usize,
    /// `(n_out - k_in) x n_out`
    pub check: Dense<S>,
}

impl<S: Scalar> LineCode<S> {
    pub fn redundancy(&self) -> usize {
        self.n_out - self.k_in
    }
}

impl LineCode<f64> {
    pub fn from_mds(code: &MdsCode) -> Self {
        LineCode {
            k_in: code.k_in,
            n_out: code.n_out,
            check: code.parity_check(),
        }
    }
}

impl LineCode<Fp61> {
    /// Systematic code with uniformly random nonzero parity over the prime
    /// field; MDS with overwhelming probability.
    pub fn random_fp<R: Rng + ?Sized>(k_in: usize, n_out: usize, rng: &mut R) -> Self {
        let r = n_out - k_in;
        let parity: Vec<Fp61> = (0..r * k_in).map(|_| Fp61::random_nonzero(rng)).collect();
        let check = Dense::from_fn(r, n_out, |i, j| {
            if j < k_in {
                -parity[i * k_in + j]
            } else if j - k_in == i {
                Fp61::ONE
            } else {
                Fp61::ZERO
            }
        });
        LineCode { k_in, n_out, check }
    }
}

/// Outer product code in parity-check form.
#[derive(Debug, Clone)]
pub struct LineCodes<S> {
    /// Length `m_tilde`, runs down each grid column.
    pub col: LineCode<S>,
    /// Length `n_tilde`, runs along each grid row.
    pub row: LineCode<S>,
}

impl LineCodes<f64> {
    pub fn from_outer(outer: &OuterProductCode) -> Self {
        LineCodes {
            col: LineCode::from_mds(&outer.col_code),
            row: LineCode::from_mds(&outer.row_code),
        }
    }
}

impl LineCodes<Fp61> {
    pub fn random_fp<R: Rng + ?Sized>(spec: &PartitionSpec, rng: &mut R) -> Self {
        LineCodes {
            col: LineCode::random_fp(spec.a_blocks, spec.a_coded, rng),
            row: LineCode::random_fp(spec.b_blocks, spec.b_coded, rng),
        }
    }
}
