//! Correctness score, pass@k, neighbourhood categories and failure tables.
//!
//! Scores are exact rationals; decimal rendering happens only at report time.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::Category;

pub type Score = Ratio<u64>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoringError {
    #[error("verdict matrix for {template_id} must be at least 1x1, got {instances}x{rounds}")]
    EmptyMatrix {
        template_id: String,
        instances: usize,
        rounds: usize,
    },
    #[error("verdict matrix for {template_id} expects {expected} cells, got {got}")]
    Shape {
        template_id: String,
        expected: usize,
        got: usize,
    },
    #[error("pass@k needs 1 <= k <= {rounds}, got k={k}")]
    BadK { k: usize, rounds: usize },
    #[error("failure table over zero verdicts")]
    NoVerdicts,
}

/// Fully populated M x N grid of verdict categories for one template:
/// row `i` is an instance, column `j` a round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictMatrix {
    pub template_id: String,
    instances: usize,
    rounds: usize,
    cells: Vec<Category>,
}

impl VerdictMatrix {
    /// `cells` is row-major: instance `i`, round `j` at `i * rounds + j`.
    pub fn new(
        template_id: impl Into<String>,
        instances: usize,
        rounds: usize,
        cells: Vec<Category>,
    ) -> Result<Self, ScoringError> {
        let template_id = template_id.into();
        if instances == 0 || rounds == 0 {
            return Err(ScoringError::EmptyMatrix {
                template_id,
                instances,
                rounds,
            });
        }
        if cells.len() != instances * rounds {
            return Err(ScoringError::Shape {
                template_id,
                expected: instances * rounds,
                got: cells.len(),
            });
        }
        Ok(Self {
            template_id,
            instances,
            rounds,
            cells,
        })
    }

    /// Pass/fail grid; failures are recorded as `assertion_error`.
    pub fn from_passes(template_id: impl Into<String>, rows: &[Vec<bool>]) -> Result<Self, ScoringError> {
        let rounds = rows.first().map_or(0, Vec::len);
        let cells: Vec<Category> = rows
            .iter()
            .flat_map(|r| {
                r.iter().map(|&p| {
                    if p {
                        Category::Passed
                    } else {
                        Category::AssertionError
                    }
                })
            })
            .collect();
        Self::new(template_id, rows.len(), rounds, cells)
    }

    pub fn instances(&self) -> usize {
        self.instances
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn cell(&self, instance: usize, round: usize) -> Category {
        self.cells[instance * self.rounds + round]
    }

    pub fn cells(&self) -> &[Category] {
        &self.cells
    }

    pub fn row(&self, instance: usize) -> &[Category] {
        &self.cells[instance * self.rounds..(instance + 1) * self.rounds]
    }

    pub fn pass_counts(&self) -> Vec<usize> {
        (0..self.instances)
            .map(|i| self.row(i).iter().filter(|c| c.is_pass()).count())
            .collect()
    }

    pub fn passed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_pass()).count()
    }
}

/// Mean pass rate over all `M * N` cells.
pub fn corr_sc(matrix: &VerdictMatrix) -> Score {
    Ratio::new(
        matrix.passed_cells() as u64,
        (matrix.instances * matrix.rounds) as u64,
    )
}

/// Fraction of instances with at least one pass among their first `k` rounds.
pub fn pass_at_k(matrix: &VerdictMatrix, k: usize) -> Result<Score, ScoringError> {
    if k == 0 || k > matrix.rounds {
        return Err(ScoringError::BadK {
            k,
            rounds: matrix.rounds,
        });
    }
    let solved = (0..matrix.instances)
        .filter(|&i| matrix.row(i)[..k].iter().any(|c| c.is_pass()))
        .count();
    Ok(Ratio::new(solved as u64, matrix.instances as u64))
}

/// Result category of a whole neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighbourhoodCategory {
    PerfectFailure,
    PerfectSuccess,
    ConsistentFailure,
    RandomFailure,
}

impl NeighbourhoodCategory {
    pub const ALL: [NeighbourhoodCategory; 4] = [
        NeighbourhoodCategory::PerfectFailure,
        NeighbourhoodCategory::PerfectSuccess,
        NeighbourhoodCategory::ConsistentFailure,
        NeighbourhoodCategory::RandomFailure,
    ];

    pub fn key(self) -> &'static str {
        match self {
            NeighbourhoodCategory::PerfectFailure => "perfect_failure",
            NeighbourhoodCategory::PerfectSuccess => "perfect_success",
            NeighbourhoodCategory::ConsistentFailure => "consistent_failure",
            NeighbourhoodCategory::RandomFailure => "random_failure",
        }
    }
}

impl fmt::Display for NeighbourhoodCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Mixed neighbourhoods split on whether some instance failed in every round.
pub fn categorize(matrix: &VerdictMatrix) -> NeighbourhoodCategory {
    let passed = matrix.passed_cells();
    if passed == 0 {
        NeighbourhoodCategory::PerfectFailure
    } else if passed == matrix.cells.len() {
        NeighbourhoodCategory::PerfectSuccess
    } else if matrix.pass_counts().contains(&0) {
        NeighbourhoodCategory::ConsistentFailure
    } else {
        NeighbourhoodCategory::RandomFailure
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighbourhoodResult {
    pub template_id: String,
    pub corr_sc: Score,
    pub category: NeighbourhoodCategory,
    pub per_instance_pass_counts: Vec<usize>,
}

pub fn score(matrix: &VerdictMatrix) -> NeighbourhoodResult {
    NeighbourhoodResult {
        template_id: matrix.template_id.clone(),
        corr_sc: corr_sc(matrix),
        category: categorize(matrix),
        per_instance_pass_counts: matrix.pass_counts(),
    }
}

/// Per-category response counts for one model configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureTable {
    counts: [u64; 10],
    total: u64,
}

impl FailureTable {
    pub fn count(&self, category: Category) -> u64 {
        self.counts[category.index()]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Exact percentage in `[0, 100]`.
    pub fn percentage(&self, category: Category) -> Ratio<u64> {
        Ratio::new(self.count(category) * 100, self.total)
    }

    pub fn rows(&self) -> impl Iterator<Item = (Category, u64, Ratio<u64>)> + '_ {
        Category::ALL
            .iter()
            .map(move |&c| (c, self.count(c), self.percentage(c)))
    }
}

pub fn aggregate_failure_table(
    verdicts: impl IntoIterator<Item = Category>,
) -> Result<FailureTable, ScoringError> {
    let mut counts = [0u64; 10];
    for c in verdicts {
        counts[c.index()] += 1;
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(ScoringError::NoVerdicts);
    }
    Ok(FailureTable { counts, total })
}

/// Render a non-negative rational with `places` decimals, rounding half up.
pub fn to_decimal(value: Ratio<u64>, places: u32) -> String {
    let scale = 10u128.pow(places);
    let num = u128::from(*value.numer());
    let den = u128::from(*value.denom());
    let scaled = (2 * num * scale + den) / (2 * den);
    let int = scaled / scale;
    if places == 0 {
        return int.to_string();
    }
    let frac = scaled % scale;
    format!("{int}.{frac:0width$}", width = places as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: u64, d: u64) -> Score {
        Ratio::new(n, d)
    }

    #[test]
    fn worked_example_corr_sc_and_pass_at_5() {
        let m = VerdictMatrix::from_passes("q", &[vec![false, true, false, true, false]]).unwrap();
        assert_eq!(corr_sc(&m), r(2, 5));
        assert_eq!(to_decimal(corr_sc(&m), 4), "0.4000");
        assert_eq!(pass_at_k(&m, 5).unwrap(), r(1, 1));
        assert_eq!(pass_at_k(&m, 1).unwrap(), r(0, 1));
    }

    #[test]
    fn corr_sc_arithmetic() {
        let all = VerdictMatrix::from_passes("q", &vec![vec![true; 3]; 2]).unwrap();
        assert_eq!(corr_sc(&all), r(1, 1));
        let three = VerdictMatrix::from_passes("q", &[vec![true, true], vec![true, false]]).unwrap();
        assert_eq!(corr_sc(&three), r(3, 4));
    }

    #[test]
    fn pass_at_k_bounds() {
        let m = VerdictMatrix::from_passes("q", &[vec![false; 3]]).unwrap();
        assert_eq!(pass_at_k(&m, 3).unwrap(), r(0, 1));
        assert!(matches!(pass_at_k(&m, 0), Err(ScoringError::BadK { .. })));
        assert!(matches!(pass_at_k(&m, 4), Err(ScoringError::BadK { .. })));
    }

    #[test]
    fn category_examples() {
        let split = VerdictMatrix::from_passes("sum_of_multiples", &[vec![true; 5], vec![false; 5]]).unwrap();
        assert_eq!(categorize(&split), NeighbourhoodCategory::ConsistentFailure);
        let none = VerdictMatrix::from_passes("q", &vec![vec![false; 5]; 3]).unwrap();
        assert_eq!(categorize(&none), NeighbourhoodCategory::PerfectFailure);
        let diag = VerdictMatrix::from_passes("q", &[vec![true, false], vec![false, true]]).unwrap();
        assert_eq!(categorize(&diag), NeighbourhoodCategory::RandomFailure);
    }

    #[test]
    fn shape_validation() {
        assert!(matches!(
            VerdictMatrix::new("q", 0, 1, vec![]),
            Err(ScoringError::EmptyMatrix { .. })
        ));
        assert!(matches!(
            VerdictMatrix::new("q", 2, 2, vec![Category::Passed; 3]),
            Err(ScoringError::Shape { .. })
        ));
    }

    #[test]
    fn failure_table_arithmetic() {
        let t = aggregate_failure_table([
            Category::Passed,
            Category::AssertionError,
            Category::AssertionError,
            Category::SyntaxError,
        ])
        .unwrap();
        assert_eq!(to_decimal(t.percentage(Category::Passed), 2), "25.00");
        assert_eq!(to_decimal(t.percentage(Category::AssertionError), 2), "50.00");
        assert_eq!(to_decimal(t.percentage(Category::SyntaxError), 2), "25.00");
        assert_eq!(to_decimal(t.percentage(Category::NoFunction), 2), "0.00");
        let all = aggregate_failure_table([Category::Passed; 7]).unwrap();
        assert_eq!(to_decimal(all.percentage(Category::Passed), 2), "100.00");
        assert_eq!(aggregate_failure_table([]), Err(ScoringError::NoVerdicts));
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(to_decimal(r(59, 60), 4), "0.9833");
        assert_eq!(to_decimal(r(1, 3), 2), "0.33");
        assert_eq!(to_decimal(r(2, 3), 2), "0.67");
        assert_eq!(to_decimal(r(1, 8), 2), "0.13");
        assert_eq!(to_decimal(r(5, 1), 0), "5");
    }

    fn arb_matrix() -> impl Strategy<Value = VerdictMatrix> {
        (1usize..6, 1usize..7).prop_flat_map(|(m, n)| {
            prop::collection::vec(any::<bool>(), m * n).prop_map(move |bits| {
                let rows: Vec<Vec<bool>> = bits.chunks(n).map(<[bool]>::to_vec).collect();
                VerdictMatrix::from_passes("p", &rows).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn score_category_consistency(m in arb_matrix()) {
            let s = corr_sc(&m);
            let c = categorize(&m);
            prop_assert_eq!(s == r(1, 1), c == NeighbourhoodCategory::PerfectSuccess);
            prop_assert_eq!(s == r(0, 1), c == NeighbourhoodCategory::PerfectFailure);
            if matches!(c, NeighbourhoodCategory::ConsistentFailure | NeighbourhoodCategory::RandomFailure) {
                prop_assert!(s > r(0, 1) && s < r(1, 1));
            }
        }

        #[test]
        fn pass_at_k_monotone_and_dominates(m in arb_matrix()) {
            let mut prev = r(0, 1);
            for k in 1..=m.rounds() {
                let p = pass_at_k(&m, k).unwrap();
                prop_assert!(p >= prev);
                prev = p;
            }
            prop_assert!(prev >= corr_sc(&m));
        }

        #[test]
        fn round_permutation_invariance(m in arb_matrix(), shift in 0usize..7) {
            let n = m.rounds();
            let rotated: Vec<Category> = (0..m.instances())
                .flat_map(|i| (0..n).map(move |j| (i, (j + shift) % n)))
                .map(|(i, j)| m.cell(i, j))
                .collect();
            let p = VerdictMatrix::new("p", m.instances(), n, rotated).unwrap();
            prop_assert_eq!(corr_sc(&p), corr_sc(&m));
            prop_assert_eq!(categorize(&p), categorize(&m));
        }
    }
}
