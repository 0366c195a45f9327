use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{equilibrate, null_space, row_reduce, Dense, Payload, Scalar};
use crate::outer::{LineCode, LineCodes};

use super::{DecodeOptions, DecodeReport, FillOrder, GridShape, InactivationRule, Outcome, Recovery, SolveSystem, Via};

const UNDERFLOW: f64 = 1e-12;

/// A value known up to the inactivated symbols: `x + sum_j d[j] * Y_j`.
/// `d` is zero-padded on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<S, P> {
    pub x: P,
    pub d: Vec<S>,
}

impl<S: Scalar, P: Payload<S>> Affine<S, P> {
    pub fn constant(x: P) -> Self {
        Affine { x, d: Vec::new() }
    }

    fn has_inactive_part(&self) -> bool {
        self.d.iter().any(|c| !c.is_zero())
    }
}

impl<S: Scalar, P: Payload<S>> Payload<S> for Affine<S, P> {
    fn zeroed(&self) -> Self {
        Affine::constant(self.x.zeroed())
    }

    fn axpy(&mut self, alpha: S, other: &Self) {
        self.x.axpy(alpha, &other.x);
        if other.d.len() > self.d.len() {
            self.d.resize(other.d.len(), S::ZERO);
        }
        for (a, b) in self.d.iter_mut().zip(&other.d) {
            *a = *a + alpha * *b;
        }
    }

    fn scale(&mut self, alpha: S) {
        self.x.scale(alpha);
        for a in &mut self.d {
            *a = *a * alpha;
        }
    }
}

#[derive(Debug, Clone)]
struct Row<S, P> {
    worker: usize,
    entries: Vec<(usize, S)>,
    support: Vec<(usize, S)>,
    value: Affine<S, P>,
    consumed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Line {
    GridRow(usize),
    GridCol(usize),
}

/// Master-side decoding session over scalar `S` with block payload `P`.
///
/// Rows are worker equations `sum_k M(p, k) * U_k = value`; symbols are the
/// cells of the coded output grid. Peeling, line filling and inactivation
/// all go through [`learn`](Self::learn), which substitutes a newly known
/// symbol into every residual row that still contains it.
#[derive(Debug, Clone)]
pub struct DecodeState<S: Scalar, P: Payload<S>> {
    shape: GridShape,
    codes: Option<LineCodes<S>>,
    options: DecodeOptions,
    zero: P,
    symbols: Vec<Option<Affine<S, P>>>,
    symbol_rows: Vec<Vec<usize>>,
    rows: Vec<Row<S, P>>,
    queue: VecDeque<usize>,
    unknown_in_row: Vec<usize>,
    unknown_in_col: Vec<usize>,
    unknown_total: usize,
    systematic_unknown: usize,
    inactivated: Vec<usize>,
    report: DecodeReport,
    trace: Vec<Recovery>,
    solved: bool,
}

impl<S: Scalar, P: Payload<S>> DecodeState<S, P> {
    /// `zero` fixes the payload shape. `codes` is the outer code in
    /// parity-check form; `None` decodes the FLT graph alone.
    pub fn new(shape: GridShape, codes: Option<LineCodes<S>>, zero: P, options: DecodeOptions) -> Result<Self> {
        if let Some(c) = &codes {
            if c.col.n_out != shape.a_coded
                || c.col.k_in != shape.a_blocks
                || c.row.n_out != shape.b_coded
                || c.row.k_in != shape.b_blocks
            {
                return Err(Error::ShapeMismatch("outer code does not match the grid".into()));
            }
        }
        let n = shape.num_symbols();
        Ok(DecodeState {
            shape,
            codes,
            options,
            zero,
            symbols: vec![None; n],
            symbol_rows: vec![Vec::new(); n],
            rows: Vec::new(),
            queue: VecDeque::new(),
            unknown_in_row: vec![shape.b_coded; shape.a_coded],
            unknown_in_col: vec![shape.a_coded; shape.b_coded],
            unknown_total: n,
            systematic_unknown: shape.a_blocks * shape.b_blocks,
            inactivated: Vec::new(),
            report: DecodeReport::default(),
            trace: Vec::new(),
            solved: false,
        })
    }

    /// Adds one received worker result with its nonzero coefficient entries.
    pub fn add_row(&mut self, worker: usize, entries: &[(usize, S)], value: P) -> Result<()> {
        let mut row = Row {
            worker,
            entries: entries.iter().copied().filter(|(_, c)| !c.is_zero()).collect(),
            support: Vec::with_capacity(entries.len()),
            value: Affine::constant(value),
            consumed: false,
        };
        let p = self.rows.len();
        for &(k, c) in entries {
            if k >= self.symbols.len() {
                return Err(Error::OutOfRange {
                    i: k / self.shape.b_coded,
                    j: k % self.shape.b_coded,
                    rows: self.shape.a_coded,
                    cols: self.shape.b_coded,
                });
            }
            if c.is_zero() {
                continue;
            }
            match &self.symbols[k] {
                Some(v) => row.value.axpy(-c, v),
                None => {
                    row.support.push((k, c));
                    self.symbol_rows[k].push(p);
                }
            }
        }
        if row.support.len() == 1 {
            self.queue.push_back(p);
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn report(&self) -> DecodeReport {
        self.report
    }

    /// Order in which symbols became known (or were inactivated).
    pub fn trace(&self) -> &[Recovery] {
        &self.trace
    }

    pub fn is_known(&self, k: usize) -> bool {
        self.symbols[k].is_some()
    }

    pub fn unknown_count(&self) -> usize {
        self.unknown_total
    }

    pub fn systematic_complete(&self) -> bool {
        self.systematic_unknown == 0
    }

    /// Current affine value of a symbol.
    pub fn value(&self, k: usize) -> Option<&Affine<S, P>> {
        self.symbols[k].as_ref()
    }

    /// Flat indices still in the residual support of each unconsumed row.
    pub fn residual_rows(&self) -> impl Iterator<Item = (usize, &[(usize, S)], &Affine<S, P>)> {
        self.rows
            .iter()
            .filter(|r| !r.consumed)
            .map(|r| (r.worker, r.support.as_slice(), &r.value))
    }

    pub fn inactivated(&self) -> &[usize] {
        &self.inactivated
    }

    /// Records `k = value` and substitutes it into every residual row.
    fn learn(&mut self, k: usize, value: Affine<S, P>, via: Via) {
        debug_assert!(self.symbols[k].is_none());
        let (i, j) = (k / self.shape.b_coded, k % self.shape.b_coded);
        self.unknown_in_row[i] -= 1;
        self.unknown_in_col[j] -= 1;
        self.unknown_total -= 1;
        if i < self.shape.a_blocks && j < self.shape.b_blocks {
            self.systematic_unknown -= 1;
        }
        for &q in &self.symbol_rows[k] {
            let row = &mut self.rows[q];
            if row.consumed {
                continue;
            }
            if let Some(pos) = row.support.iter().position(|(s, _)| *s == k) {
                let (_, c) = row.support.swap_remove(pos);
                row.value.axpy(-c, &value);
                self.report.edge_operations += 1;
                if row.support.len() == 1 {
                    self.queue.push_back(q);
                }
            }
        }
        self.symbols[k] = Some(value);
        self.trace.push(Recovery { symbol: k, via });
    }

    /// Recovers one symbol from a degree-one residual row, if any.
    pub fn peel_step(&mut self) -> Result<bool> {
        while let Some(p) = self.queue.pop_front() {
            let row = &mut self.rows[p];
            if row.consumed || row.support.len() != 1 {
                continue;
            }
            let (k, c) = row.support[0];
            if c.magnitude() < UNDERFLOW {
                return Err(Error::NumericUnderflow(c.magnitude()));
            }
            row.consumed = true;
            row.support.clear();
            let mut value = std::mem::replace(&mut row.value, Affine::constant(self.zero.zeroed()));
            value.scale(c.inv());
            let worker = row.worker;
            self.report.edge_operations += 1;
            self.report.peeled += 1;
            self.learn(k, value, Via::Peel { worker });
            return Ok(true);
        }
        Ok(false)
    }

    fn line_cells(&self, line: Line) -> Vec<usize> {
        let cols = self.shape.b_coded;
        match line {
            Line::GridRow(i) => (0..cols).map(|j| i * cols + j).collect(),
            Line::GridCol(j) => (0..self.shape.a_coded).map(|i| i * cols + j).collect(),
        }
    }

    /// Fills every erased cell of one grid line from its parity checks.
    fn decode_line(&mut self, line: Line, code: &LineCode<S>) -> Result<usize> {
        let cells = self.line_cells(line);
        let erased: Vec<usize> = (0..cells.len()).filter(|&c| self.symbols[cells[c]].is_none()).collect();
        let r = code.redundancy();
        let mut h = Dense::from_fn(r, erased.len(), |t, e| code.check.get(t, erased[e]));
        let mut rhs: Vec<Affine<S, P>> = (0..r)
            .map(|t| {
                let mut acc = Affine::constant(self.zero.zeroed());
                for (c, &cell) in cells.iter().enumerate() {
                    if let Some(v) = &self.symbols[cell] {
                        acc.axpy(-code.check.get(t, c), v);
                    }
                }
                acc
            })
            .collect();
        let ech = row_reduce(&mut h, &mut rhs);
        if ech.rank() < erased.len() {
            return Err(Error::IllConditioned(f64::INFINITY));
        }
        let via = match line {
            Line::GridRow(i) => Via::RowDecode { row: i },
            Line::GridCol(j) => Via::ColumnDecode { col: j },
        };
        let mut solved: Vec<(usize, Affine<S, P>)> = ech
            .pivot_cols
            .iter()
            .zip(rhs)
            .map(|(&e, v)| (cells[erased[e]], v))
            .collect();
        solved.sort_by_key(|(k, _)| *k);
        let count = solved.len();
        for (k, v) in solved {
            self.report.product_filled += 1;
            self.learn(k, v, via);
        }
        Ok(count)
    }

    fn sweep(&mut self, rows: bool) -> Result<usize> {
        let Some(codes) = self.codes.take() else {
            return Ok(0);
        };
        let mut filled = 0;
        let result = (|| {
            if rows {
                let red = codes.row.redundancy();
                for i in 0..self.shape.a_coded {
                    let u = self.unknown_in_row[i];
                    if u > 0 && u <= red {
                        filled += self.decode_line(Line::GridRow(i), &codes.row)?;
                    }
                }
            } else {
                let red = codes.col.redundancy();
                for j in 0..self.shape.b_coded {
                    let u = self.unknown_in_col[j];
                    if u > 0 && u <= red {
                        filled += self.decode_line(Line::GridCol(j), &codes.col)?;
                    }
                }
            }
            Ok(())
        })();
        self.codes = Some(codes);
        result.map(|_| filled)
    }

    /// Repeats row and column sweeps of the outer code until neither makes
    /// progress. Returns the number of symbols filled.
    pub fn product_fill_pass(&mut self) -> Result<usize> {
        if self.codes.is_none() {
            return Ok(0);
        }
        let order = match self.options.fill_order {
            FillOrder::RowsFirst => [true, false],
            FillOrder::ColumnsFirst => [false, true],
        };
        let mut total = 0;
        loop {
            let mut progress = 0;
            for rows in order {
                progress += self.sweep(rows)?;
            }
            total += progress;
            if progress == 0 {
                return Ok(total);
            }
        }
    }

    /// Alternates peeling and outer-code filling until both stall.
    pub fn run_peeling(&mut self) -> Result<Outcome> {
        loop {
            while self.peel_step()? {}
            if self.product_fill_pass()? == 0 {
                break;
            }
        }
        self.report.outcome = Outcome::from(self.systematic_complete());
        Ok(self.report.outcome)
    }

    fn pick_inactivation(&self) -> Option<usize> {
        let most_rows = |cands: &mut dyn Iterator<Item = usize>| {
            let mut best: Option<(usize, usize)> = None;
            for k in cands {
                let deg = self.symbol_rows[k].len();
                if best.is_none_or(|(b, d)| deg > d || (deg == d && k < b)) {
                    best = Some((k, deg));
                }
            }
            best.map(|(k, _)| k)
        };
        if self.options.inactivation == InactivationRule::DegreeTwo {
            let mut best: Option<(usize, (usize, usize))> = None;
            for k in (0..self.symbols.len()).filter(|&k| self.symbols[k].is_none()) {
                let rows = &self.symbol_rows[k];
                let pairs = rows
                    .iter()
                    .filter(|&&q| !self.rows[q].consumed && self.rows[q].support.len() == 2)
                    .count();
                let score = (pairs, rows.len());
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some((k, score));
                }
            }
            return best.map(|(k, _)| k);
        }
        if self.options.inactivation == InactivationRule::MinRow {
            let row = self
                .rows
                .iter()
                .filter(|r| !r.consumed && r.support.len() >= 2)
                .min_by_key(|r| r.support.len());
            if let Some(r) = row {
                return most_rows(&mut r.support.iter().map(|(k, _)| *k));
            }
        }
        most_rows(&mut (0..self.symbols.len()).filter(|&k| self.symbols[k].is_none()))
    }

    /// Peeling with inactivation until every symbol is recovered or
    /// inactivated, then a dense solve for the inactivated symbols.
    pub fn run_inactivation(&mut self) -> Result<Outcome> {
        loop {
            while self.peel_step()? {}
            if self.product_fill_pass()? > 0 {
                continue;
            }
            let Some(k) = self.pick_inactivation() else {
                break;
            };
            let j = self.inactivated.len();
            self.inactivated.push(k);
            let mut d = vec![S::ZERO; j + 1];
            d[j] = S::ONE;
            self.report.inactivated += 1;
            self.learn(
                k,
                Affine {
                    x: self.zero.zeroed(),
                    d,
                },
                Via::Inactivated,
            );
        }
        self.solve_inactivated()
    }

    /// Largest magnitude among the terms summed into `sum c_k * d_k`; the
    /// yardstick for telling cancellation noise from a real coefficient.
    /// Per inactivated symbol, the sum of term magnitudes feeding its
    /// coefficient; cancellation noise sits far below it.
    fn term_scale(&self, terms: impl Iterator<Item = (usize, S)>) -> Vec<f64> {
        let mut scale = vec![0.0f64; self.inactivated.len()];
        for (k, c) in terms {
            if let Some(v) = &self.symbols[k] {
                for (s, x) in scale.iter_mut().zip(&v.d) {
                    *s += c.magnitude() * x.magnitude();
                }
            }
        }
        scale
    }

    /// Equations left over once every symbol is known in terms of the
    /// inactivated ones: spent worker rows plus every outer parity check.
    /// Coefficients that are pure cancellation noise are flushed to zero.
    fn leftover_equations(&self) -> Vec<Affine<S, P>> {
        let keep = |mut acc: Affine<S, P>, scale: Vec<f64>, eqs: &mut Vec<Affine<S, P>>| {
            for (c, s) in acc.d.iter_mut().zip(scale) {
                if c.negligible(s) {
                    *c = S::ZERO;
                }
            }
            if acc.has_inactive_part() {
                eqs.push(acc);
            }
        };
        let mut eqs = Vec::new();
        for r in self.rows.iter().filter(|r| !r.consumed) {
            let scale = self.term_scale(r.entries.iter().copied());
            keep(r.value.clone(), scale, &mut eqs);
        }
        if let (Some(codes), SolveSystem::Combined) = (&self.codes, self.options.system) {
            for (code, lines, is_row) in [
                (&codes.col, self.shape.b_coded, false),
                (&codes.row, self.shape.a_coded, true),
            ] {
                for idx in 0..lines {
                    let cells = self.line_cells(if is_row { Line::GridRow(idx) } else { Line::GridCol(idx) });
                    for t in 0..code.redundancy() {
                        let mut acc = Affine::constant(self.zero.zeroed());
                        for (c, &cell) in cells.iter().enumerate() {
                            let coef = code.check.get(t, c);
                            if let (Some(v), false) = (&self.symbols[cell], coef.is_zero()) {
                                acc.axpy(coef, v);
                            }
                        }
                        let scale = self.term_scale(cells.iter().enumerate().map(|(c, &cell)| (cell, code.check.get(t, c))));
                        keep(acc, scale, &mut eqs);
                    }
                }
            }
        }
        eqs
    }

    fn solve_inactivated(&mut self) -> Result<Outcome> {
        let ny = self.inactivated.len();
        if ny == 0 || self.solved {
            self.report.outcome = Outcome::from(self.systematic_complete());
            return Ok(self.report.outcome);
        }
        // every leftover equation reads x + d.Y = 0
        let eqs = self.leftover_equations();
        let mut q = Dense::from_fn(eqs.len(), ny, |i, j| eqs[i].d.get(j).copied().unwrap_or(S::ZERO));
        let mut rhs: Vec<P> = eqs
            .into_iter()
            .map(|e| {
                let mut x = e.x;
                x.scale(-S::ONE);
                x
            })
            .collect();
        let col_factor = equilibrate(&mut q, &mut rhs);
        let ech = row_reduce(&mut q, &mut rhs);
        let mut y: Vec<P> = vec![self.zero.zeroed(); ny];
        for (i, &c) in ech.pivot_cols.iter().enumerate() {
            y[c] = rhs[i].clone();
            y[c].scale(col_factor[c]);
        }
        let null: Vec<Vec<S>> = if ech.rank() < ny {
            null_space(&q, &ech)
                .into_iter()
                .map(|z| z.into_iter().zip(&col_factor).map(|(a, &f)| a * f).collect())
                .collect()
        } else {
            Vec::new()
        };

        let determined = |d: &[S]| -> bool {
            null.iter().all(|z| {
                let mut dot = S::ZERO;
                let mut scale = 0.0;
                for (a, b) in d.iter().zip(z) {
                    dot = dot + *a * *b;
                    scale += a.magnitude() * b.magnitude();
                }
                dot.negligible(scale.max(f64::MIN_POSITIVE))
            })
        };

        for k in 0..self.symbols.len() {
            let Some(v) = self.symbols[k].take() else {
                continue;
            };
            if !null.is_empty() && !determined(&v.d) {
                // stays unknown; undo the bookkeeping done when it was learned
                let (i, j) = (k / self.shape.b_coded, k % self.shape.b_coded);
                self.unknown_in_row[i] += 1;
                self.unknown_in_col[j] += 1;
                self.unknown_total += 1;
                if i < self.shape.a_blocks && j < self.shape.b_blocks {
                    self.systematic_unknown += 1;
                }
                continue;
            }
            let mut x = v.x;
            for (j, c) in v.d.iter().enumerate() {
                if !c.is_zero() {
                    x.axpy(*c, &y[j]);
                }
            }
            self.symbols[k] = Some(Affine::constant(x));
        }
        self.solved = true;
        // a rank-deficient solve fails even when the systematic part is pinned down
        self.report.outcome = Outcome::from(null.is_empty() && self.systematic_complete());
        Ok(self.report.outcome)
    }
}
