use std::collections::VecDeque;

use super::{DecodeReport, FillOrder, GridShape, InactivationRule, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SupportOptions {
    pub fill_order: FillOrder,
    pub inactivation: InactivationRule,
    /// After peeling and line filling stall, keep going with structural
    /// inactivations and report how many were needed to cover every symbol.
    pub count_inactivations: bool,
}

struct Graph {
    shape: GridShape,
    degree: Vec<usize>,
    // xor of the unresolved indices; equals the last one when degree is 1
    xor: Vec<usize>,
    offsets: Vec<usize>,
    adjacency: Vec<usize>,
    known: Vec<bool>,
    unknown_in_row: Vec<usize>,
    unknown_in_col: Vec<usize>,
    unknown_total: usize,
    systematic_unknown: usize,
    queue: VecDeque<usize>,
    report: DecodeReport,
}

impl Graph {
    fn new(rows: &[Vec<usize>], shape: GridShape) -> Self {
        let n = shape.num_symbols();
        let mut counts = vec![0usize; n + 1];
        for r in rows {
            for &k in r {
                counts[k + 1] += 1;
            }
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let mut fill = counts.clone();
        let mut adjacency = vec![0; counts[n]];
        for (p, r) in rows.iter().enumerate() {
            for &k in r {
                adjacency[fill[k]] = p;
                fill[k] += 1;
            }
        }
        let degree: Vec<usize> = rows.iter().map(Vec::len).collect();
        let xor = rows.iter().map(|r| r.iter().fold(0, |a, &k| a ^ k)).collect();
        let queue = (0..rows.len()).filter(|&p| degree[p] == 1).collect();
        Graph {
            shape,
            degree,
            xor,
            offsets: counts,
            adjacency,
            known: vec![false; n],
            unknown_in_row: vec![shape.b_coded; shape.a_coded],
            unknown_in_col: vec![shape.a_coded; shape.b_coded],
            unknown_total: n,
            systematic_unknown: shape.a_blocks * shape.b_blocks,
            queue,
            report: DecodeReport::default(),
        }
    }

    fn column_degree(&self, k: usize) -> usize {
        self.offsets[k + 1] - self.offsets[k]
    }

    fn learn(&mut self, k: usize) {
        self.known[k] = true;
        let (i, j) = (k / self.shape.b_coded, k % self.shape.b_coded);
        self.unknown_in_row[i] -= 1;
        self.unknown_in_col[j] -= 1;
        self.unknown_total -= 1;
        if self.shape.is_systematic(k) {
            self.systematic_unknown -= 1;
        }
        for &q in &self.adjacency[self.offsets[k]..self.offsets[k + 1]] {
            if self.degree[q] == 0 {
                continue;
            }
            self.degree[q] -= 1;
            self.xor[q] ^= k;
            self.report.edge_operations += 1;
            if self.degree[q] == 1 {
                self.queue.push_back(q);
            }
        }
    }

    fn peel(&mut self) {
        while let Some(p) = self.queue.pop_front() {
            if self.degree[p] != 1 {
                continue;
            }
            let k = self.xor[p];
            self.degree[p] = 0;
            self.xor[p] = 0;
            self.report.edge_operations += 1;
            self.report.peeled += 1;
            self.learn(k);
        }
    }

    fn sweep(&mut self, rows: bool) -> usize {
        let (lines, len, red) = if rows {
            (self.shape.a_coded, self.shape.b_coded, self.shape.row_redundancy())
        } else {
            (self.shape.b_coded, self.shape.a_coded, self.shape.col_redundancy())
        };
        let mut filled = 0;
        for line in 0..lines {
            let u = if rows {
                self.unknown_in_row[line]
            } else {
                self.unknown_in_col[line]
            };
            if u == 0 || u > red {
                continue;
            }
            for pos in 0..len {
                let k = if rows {
                    line * self.shape.b_coded + pos
                } else {
                    pos * self.shape.b_coded + line
                };
                if !self.known[k] {
                    self.report.product_filled += 1;
                    filled += 1;
                    self.learn(k);
                }
            }
        }
        filled
    }

    fn fill(&mut self, order: FillOrder) -> usize {
        if self.shape.row_redundancy() == 0 && self.shape.col_redundancy() == 0 {
            return 0;
        }
        let order = match order {
            FillOrder::RowsFirst => [true, false],
            FillOrder::ColumnsFirst => [false, true],
        };
        let mut total = 0;
        loop {
            let progress: usize = order.iter().map(|&rows| self.sweep(rows)).sum();
            total += progress;
            if progress == 0 {
                return total;
            }
        }
    }

    fn most_rows(&self, cands: impl Iterator<Item = usize>) -> Option<usize> {
        let mut best: Option<(usize, usize)> = None;
        for k in cands {
            let deg = self.column_degree(k);
            if best.is_none_or(|(b, d)| deg > d || (deg == d && k < b)) {
                best = Some((k, deg));
            }
        }
        best.map(|(k, _)| k)
    }

    fn pick_inactivation(&self, rule: InactivationRule, rows: &[Vec<usize>]) -> Option<usize> {
        if rule == InactivationRule::DegreeTwo {
            let mut best: Option<(usize, (usize, usize))> = None;
            for k in (0..self.known.len()).filter(|&k| !self.known[k]) {
                let adjacent = &self.adjacency[self.offsets[k]..self.offsets[k + 1]];
                let score = (adjacent.iter().filter(|&&q| self.degree[q] == 2).count(), adjacent.len());
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some((k, score));
                }
            }
            return best.map(|(k, _)| k);
        }
        if rule == InactivationRule::MinRow {
            let row = (0..self.degree.len())
                .filter(|&p| self.degree[p] >= 2)
                .min_by_key(|&p| self.degree[p]);
            if let Some(p) = row {
                return self.most_rows(rows[p].iter().copied().filter(|&k| !self.known[k]));
            }
        }
        self.most_rows((0..self.known.len()).filter(|&k| !self.known[k]))
    }
}

/// Runs the decoding schedule on supports alone: which symbols each worker
/// result touches, with coefficients assumed generic. Follows the same
/// peeling queue and line-fill order as the numeric decoder, so the counts
/// in the report match it step for step.
///
/// The outcome is that of peeling with line filling. With
/// `count_inactivations`, the report additionally carries the number of
/// structural inactivations needed to reach every symbol.
pub fn support_decode(row_supports: &[Vec<usize>], shape: GridShape, options: SupportOptions) -> DecodeReport {
    let mut g = Graph::new(row_supports, shape);
    loop {
        g.peel();
        if g.fill(options.fill_order) == 0 {
            break;
        }
    }
    let outcome = Outcome::from(g.systematic_unknown == 0);
    if options.count_inactivations {
        while g.unknown_total > 0 {
            g.peel();
            if g.fill(options.fill_order) > 0 {
                continue;
            }
            if let Some(k) = g.pick_inactivation(options.inactivation, row_supports) {
                g.report.inactivated += 1;
                g.learn(k);
            }
        }
    }
    g.report.outcome = outcome;
    g.report
}
