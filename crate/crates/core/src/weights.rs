//! Row- and column-stochastic mixing matrices aligned with a graph.

use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::DiGraph;

/// Absolute tolerance on each row or column sum.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stochasticity {
    Row,
    Column,
}

impl fmt::Display for Stochasticity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stochasticity::Row => "row-stochastic",
            Stochasticity::Column => "column-stochastic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    mode: Stochasticity,
    entries: DMatrix<f64>,
}

impl WeightMatrix {
    /// Wraps `entries` after checking nonnegativity and the stochastic sums.
    pub fn new(mode: Stochasticity, entries: DMatrix<f64>) -> Result<Self> {
        let w = Self::new_unchecked(mode, entries);
        let dev = w.sum_deviation();
        if !(dev <= STOCHASTIC_TOL) || w.entries.iter().any(|&v| v < 0.0) {
            return Err(Error::NotStochastic {
                expected: match mode {
                    Stochasticity::Row => "row-stochastic",
                    Stochasticity::Column => "column-stochastic",
                },
                deviation: dev,
            });
        }
        Ok(w)
    }

    /// Wraps `entries` without validation (for tests and custom rules that
    /// are validated later through [`validate_alignment`]).
    pub fn new_unchecked(mode: Stochasticity, entries: DMatrix<f64>) -> Self {
        assert!(entries.is_square(), "weight matrices are square");
        Self { mode, entries }
    }

    pub fn mode(&self) -> Stochasticity {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Largest `|sum - 1|` over rows (row mode) or columns (column mode).
    pub fn sum_deviation(&self) -> f64 {
        let sums: Vec<f64> = match self.mode {
            Stochasticity::Row => self.entries.row_iter().map(|r| r.sum()).collect(),
            Stochasticity::Column => self.entries.column_iter().map(|c| c.sum()).collect(),
        };
        sums.into_iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Smallest strictly positive entry.
    pub fn min_positive(&self) -> Result<f64> {
        self.entries
            .iter()
            .copied()
            .filter(|&v| v > 0.0)
            .min_by(f64::total_cmp)
            .ok_or(Error::NoPositiveEntry)
    }

    /// Row-major CSV with full round-trip precision.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.entries.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// A rule assigning aligned weights to a graph. Uniform weights are the
/// default; other rules can be plugged into [`WeightPair::with_rule`].
pub trait WeightRule {
    fn row_stochastic(&self, g: &DiGraph) -> WeightMatrix;
    fn column_stochastic(&self, g: &DiGraph) -> WeightMatrix;
}

/// Equal weights over each agent's neighbors plus itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformWeights;

impl WeightRule for UniformWeights {
    fn row_stochastic(&self, g: &DiGraph) -> WeightMatrix {
        build_row_stochastic(g)
    }

    fn column_stochastic(&self, g: &DiGraph) -> WeightMatrix {
        build_column_stochastic(g)
    }
}

/// `A[i][j] = 1 / (|N_in(i)| + 1)` for `j` in `N_in(i)` and `j = i`.
pub fn build_row_stochastic(g: &DiGraph) -> WeightMatrix {
    let n = g.n();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let w = 1.0 / (g.in_degree(i) + 1) as f64;
        a[(i, i)] = w;
        for &j in g.in_neighbors(i).expect("i < n") {
            a[(i, j)] = w;
        }
    }
    WeightMatrix::new_unchecked(Stochasticity::Row, a)
}

/// `B[j][i] = 1 / (|N_out(i)| + 1)` for `j` in `N_out(i)` and `j = i`.
pub fn build_column_stochastic(g: &DiGraph) -> WeightMatrix {
    let n = g.n();
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        let w = 1.0 / (g.out_degree(i) + 1) as f64;
        b[(i, i)] = w;
        for &j in g.out_neighbors(i).expect("i < n") {
            b[(j, i)] = w;
        }
    }
    WeightMatrix::new_unchecked(Stochasticity::Column, b)
}

#[derive(Debug, Clone)]
pub struct WeightPair {
    pub a: WeightMatrix,
    pub b: WeightMatrix,
    pub graph: DiGraph,
}

impl WeightPair {
    pub fn uniform(graph: DiGraph) -> Self {
        Self::with_rule(graph, &UniformWeights)
    }

    pub fn with_rule(graph: DiGraph, rule: &dyn WeightRule) -> Self {
        Self {
            a: rule.row_stochastic(&graph),
            b: rule.column_stochastic(&graph),
            graph,
        }
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `[A]_ij` is positive although `j` is not an in-neighbor of `i` (or
    /// zero although it is).
    RowPattern { i: usize, j: usize, value: f64 },
    /// `[B]_ji` breaks the out-neighbor pattern of column `i`.
    ColumnPattern { j: usize, i: usize, value: f64 },
    Negative {
        matrix: Stochasticity,
        i: usize,
        j: usize,
        value: f64,
    },
    SumBreach {
        matrix: Stochasticity,
        index: usize,
        sum: f64,
    },
    WrongMode {
        expected: Stochasticity,
        found: Stochasticity,
    },
    Dimension { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub violations: Vec<Violation>,
    pub min_positive_a: Option<f64>,
    pub min_positive_b: Option<f64>,
}

impl AlignmentReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the sparsity alignment, nonnegativity and stochastic sums of a
/// pair. An empty violation list means the pair is valid.
pub fn validate_alignment(pair: &WeightPair) -> AlignmentReport {
    let g = &pair.graph;
    let n = g.n();
    let mut violations = Vec::new();
    let mut report = AlignmentReport {
        violations: Vec::new(),
        min_positive_a: pair.a.min_positive().ok(),
        min_positive_b: pair.b.min_positive().ok(),
    };
    for (w, expected) in [(&pair.a, Stochasticity::Row), (&pair.b, Stochasticity::Column)] {
        if w.mode() != expected {
            violations.push(Violation::WrongMode {
                expected,
                found: w.mode(),
            });
        }
        if w.n() != n {
            violations.push(Violation::Dimension {
                expected: n,
                found: w.n(),
            });
        }
    }
    if !violations.is_empty() {
        report.violations = violations;
        return report;
    }

    for i in 0..n {
        for j in 0..n {
            let a = pair.a.get(i, j);
            let a_allowed = i == j || g.has_edge(j, i);
            if (a > 0.0) != a_allowed || (!a_allowed && a != 0.0) {
                violations.push(Violation::RowPattern { i, j, value: a });
            }
            // Column i of B: B[j][i] > 0 iff j is an out-neighbor of i or j = i.
            let b = pair.b.get(j, i);
            let b_allowed = i == j || g.has_edge(i, j);
            if (b > 0.0) != b_allowed || (!b_allowed && b != 0.0) {
                violations.push(Violation::ColumnPattern { j, i, value: b });
            }
        }
    }
    for w in [&pair.a, &pair.b] {
        for i in 0..n {
            for j in 0..n {
                let value = w.get(i, j);
                if value < 0.0 {
                    violations.push(Violation::Negative {
                        matrix: w.mode(),
                        i,
                        j,
                        value,
                    });
                }
            }
        }
    }
    for index in 0..n {
        let row_sum = pair.a.matrix().row(index).sum();
        if !((row_sum - 1.0).abs() <= STOCHASTIC_TOL) {
            violations.push(Violation::SumBreach {
                matrix: Stochasticity::Row,
                index,
                sum: row_sum,
            });
        }
        let col_sum = pair.b.matrix().column(index).sum();
        if !((col_sum - 1.0).abs() <= STOCHASTIC_TOL) {
            violations.push(Violation::SumBreach {
                matrix: Stochasticity::Column,
                index,
                sum: col_sum,
            });
        }
    }
    report.violations = violations;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphSchedule;

    #[test]
    fn single_node_is_identity() {
        let g = DiGraph::new(1, []).unwrap();
        assert_eq!(build_row_stochastic(&g).matrix()[(0, 0)], 1.0);
        assert_eq!(build_column_stochastic(&g).matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn three_cycle_has_halves() {
        let g = DiGraph::cycle(3);
        let a = build_row_stochastic(&g);
        let b = build_column_stochastic(&g);
        for i in 0..3 {
            let row: Vec<f64> = a.matrix().row(i).iter().copied().filter(|&v| v > 0.0).collect();
            assert_eq!(row, vec![0.5, 0.5]);
            let col: Vec<f64> = b.matrix().column(i).iter().copied().filter(|&v| v > 0.0).collect();
            assert_eq!(col, vec![0.5, 0.5]);
        }
        assert_eq!(a.min_positive().unwrap(), 0.5);
    }

    #[test]
    fn min_positive_matches_degree_scan() {
        let s = GraphSchedule::rotating(10, 8, 21).unwrap();
        let mut min_a = f64::INFINITY;
        let mut max_in = 0;
        for k in 0..30 {
            let g = s.generate(k).unwrap();
            max_in = max_in.max((0..10).map(|i| g.in_degree(i)).max().unwrap());
            min_a = min_a.min(build_row_stochastic(&g).min_positive().unwrap());
        }
        assert_eq!(min_a, 1.0 / (max_in + 1) as f64);
    }

    #[test]
    fn min_positive_of_zero_matrix_errors() {
        let w = WeightMatrix::new_unchecked(Stochasticity::Row, DMatrix::zeros(2, 2));
        assert!(matches!(w.min_positive(), Err(Error::NoPositiveEntry)));
    }

    #[test]
    fn checked_constructor_rejects_bad_sums() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.2, 0.7]);
        assert!(WeightMatrix::new(Stochasticity::Row, m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.3, 0.7]);
        assert!(WeightMatrix::new(Stochasticity::Row, m).is_ok());
    }

    #[test]
    fn builders_produce_valid_pairs() {
        for seed in 0..40 {
            let s = GraphSchedule::rotating(3 + (seed as usize % 8), seed as usize % 4, seed).unwrap();
            for k in 0..5 {
                let pair = WeightPair::uniform(s.generate(k).unwrap());
                let report = validate_alignment(&pair);
                assert!(report.is_valid(), "{:?}", report.violations);
                let n = pair.n() as f64;
                assert!(report.min_positive_a.unwrap() >= 1.0 / n);
                assert!(report.min_positive_b.unwrap() >= 1.0 / n);
                assert!(pair.b.sum_deviation() <= STOCHASTIC_TOL);
            }
        }
    }

    #[test]
    fn zeroed_diagonal_is_flagged() {
        let mut pair = WeightPair::uniform(DiGraph::cycle(4));
        let mut a = pair.a.matrix().clone();
        a[(2, 2)] = 0.0;
        pair.a = WeightMatrix::new_unchecked(Stochasticity::Row, a);
        let report = validate_alignment(&pair);
        assert!(report
            .violations
            .contains(&Violation::RowPattern { i: 2, j: 2, value: 0.0 }));
    }

    #[test]
    fn column_sum_breach_is_flagged() {
        let mut pair = WeightPair::uniform(DiGraph::cycle(4));
        let mut b = pair.b.matrix().clone();
        b[(1, 1)] -= 0.001;
        pair.b = WeightMatrix::new_unchecked(Stochasticity::Column, b);
        let report = validate_alignment(&pair);
        assert!(report.violations.iter().any(|v| matches!(
            v,
            Violation::SumBreach { matrix: Stochasticity::Column, index: 1, .. }
        )));
    }

    #[test]
    fn csv_export_is_row_major() {
        let mut buf = Vec::new();
        build_row_stochastic(&DiGraph::cycle(3)).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "0.5,0,0.5");
    }
}
