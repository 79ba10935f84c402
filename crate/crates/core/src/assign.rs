//! Exact linear assignment (Hungarian / Kuhn-Munkres) and a brute-force oracle.

use itertools::Itertools;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Permutation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sense {
    Min,
    Max,
}

/// Square matrix of finite assignment costs (or scores, under `Max`).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    data: DMatrix<f64>,
    sense: Sense,
}

impl CostMatrix {
    pub fn new(data: DMatrix<f64>, sense: Sense) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::DimensionMismatch {
                expected: data.nrows(),
                actual: data.ncols(),
            });
        }
        if data.nrows() == 0 {
            return Err(Error::InvalidOptions("cost matrix is empty".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cost matrix"));
        }
        Ok(Self { data, sense })
    }

    pub fn from_rows(rows: &[Vec<f64>], sense: Sense) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidOptions("cost matrix must be square".into()));
        }
        Self::new(DMatrix::from_fn(m, m, |i, j| rows[i][j]), sense)
    }

    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// `Σ_i c[i][π(i)]`, summed in row order.
    pub fn objective(&self, assignment: &Permutation) -> f64 {
        assignment
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &j)| self.data[(i, j)])
            .sum()
    }
}

/// Optimal assignment; `map[i]` is the column given to row `i`.
pub fn solve_lap(c: &CostMatrix) -> (Permutation, f64) {
    let assignment = match c.sense {
        Sense::Min => hungarian_min(&c.data),
        Sense::Max => hungarian_min(&(-&c.data)),
    };
    let perm = Permutation::new(assignment).expect("hungarian yields a bijection");
    let obj = c.objective(&perm);
    (perm, obj)
}

/// Shortest augmenting path Hungarian algorithm with row/column potentials.
/// Rows are inserted in index order and the column scan keeps the first
/// minimum, so equal inputs always give equal outputs.
fn hungarian_min(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // 1-based with index 0 as the virtual root column
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    assignment
}

pub const BRUTE_FORCE_LAP_LIMIT: usize = 9;

/// Exhaustive search; ties go to the lexicographically smallest assignment.
pub fn brute_force_lap(c: &CostMatrix) -> Result<(Permutation, f64)> {
    let m = c.size();
    if m > BRUTE_FORCE_LAP_LIMIT {
        return Err(Error::TooLarge {
            size: m,
            limit: BRUTE_FORCE_LAP_LIMIT,
        });
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for cand in (0..m).permutations(m) {
        let obj: f64 = cand.iter().enumerate().map(|(i, &j)| c.data[(i, j)]).sum();
        let better = match (&best, c.sense) {
            (None, _) => true,
            (Some((_, b)), Sense::Min) => obj < *b,
            (Some((_, b)), Sense::Max) => obj > *b,
        };
        if better {
            best = Some((cand, obj));
        }
    }
    let (map, obj) = best.expect("at least one permutation");
    Ok((Permutation::new(map)?, obj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cost(rng: &mut ChaCha8Rng, m: usize, sense: Sense) -> CostMatrix {
        CostMatrix::new(
            DMatrix::from_fn(m, m, |_, _| rng.random_range(-5.0..5.0)),
            sense,
        )
        .unwrap()
    }

    #[test]
    fn three_by_three_example() {
        let c = CostMatrix::from_rows(
            &[
                vec![4.0, 1.0, 3.0],
                vec![2.0, 0.0, 5.0],
                vec![3.0, 2.0, 2.0],
            ],
            Sense::Min,
        )
        .unwrap();
        let (p, obj) = solve_lap(&c);
        assert_eq!(p.as_slice(), &[1, 0, 2]);
        assert_eq!(obj, 5.0);
        assert_eq!(brute_force_lap(&c).unwrap(), (p, 5.0));
    }

    #[test]
    fn zero_diagonal_prefers_identity() {
        let c = CostMatrix::new(
            DMatrix::from_fn(5, 5, |i, j| f64::from(u8::from(i != j))),
            Sense::Min,
        )
        .unwrap();
        let (p, obj) = solve_lap(&c);
        assert!(p.is_identity());
        assert_eq!(obj, 0.0);
    }

    #[test]
    fn single_entry() {
        let c = CostMatrix::from_rows(&[vec![3.5]], Sense::Max).unwrap();
        assert_eq!(
            brute_force_lap(&c).unwrap(),
            (Permutation::identity(1), 3.5)
        );
        assert_eq!(solve_lap(&c), (Permutation::identity(1), 3.5));
    }

    #[test]
    fn constant_matrix_ties() {
        let c = CostMatrix::new(DMatrix::from_element(4, 4, 2.0), Sense::Min).unwrap();
        let (bp, bobj) = brute_force_lap(&c).unwrap();
        assert!(bp.is_identity());
        assert_eq!(solve_lap(&c).1, bobj);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(CostMatrix::new(DMatrix::zeros(2, 3), Sense::Min).is_err());
        assert!(CostMatrix::new(DMatrix::from_element(2, 2, f64::NAN), Sense::Min).is_err());
        assert!(CostMatrix::new(DMatrix::zeros(0, 0), Sense::Min).is_err());
        let big = CostMatrix::new(DMatrix::zeros(10, 10), Sense::Min).unwrap();
        assert!(matches!(brute_force_lap(&big), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn agrees_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = rng.random_range(1..=8);
            let sense = if rng.random_bool(0.5) {
                Sense::Min
            } else {
                Sense::Max
            };
            let c = random_cost(&mut rng, m, sense);
            let (_, obj) = solve_lap(&c);
            let (_, bobj) = brute_force_lap(&c).unwrap();
            assert!((obj - bobj).abs() <= 1e-9, "{obj} vs {bobj}");
        }
    }

    #[test]
    fn max_is_negated_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let m = rng.random_range(1..=8);
            let c = random_cost(&mut rng, m, Sense::Max);
            let neg = CostMatrix::new(-c.matrix(), Sense::Min).unwrap();
            assert!((solve_lap(&c).1 + solve_lap(&neg).1).abs() <= 1e-9);
        }
    }

    proptest! {
        #[test]
        fn row_and_column_shifts(
            seed in any::<u64>(),
            m in 1usize..=8,
            shift in -10.0f64..10.0,
            which in 0usize..8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random_cost(&mut rng, m, Sense::Min);
            let k = which % m;
            let (p, obj) = solve_lap(&c);
            let mut rows = c.matrix().clone();
            rows.row_mut(k).add_scalar_mut(shift);
            let mut cols = c.matrix().clone();
            cols.column_mut(k).add_scalar_mut(shift);
            for shifted in [rows, cols] {
                let (p2, obj2) = solve_lap(&CostMatrix::new(shifted, Sense::Min).unwrap());
                prop_assert!((obj2 - obj - shift).abs() <= 1e-9);
                // continuous random costs have a unique optimum almost surely
                prop_assert_eq!(&p2, &p);
            }
            let ident: f64 = (0..m).map(|i| c.matrix()[(i, i)]).sum();
            prop_assert!(obj <= ident + 1e-12);
        }
    }
}
