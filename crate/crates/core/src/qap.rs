//! Seeded quadratic assignment: objective, Frank-Wolfe relaxation (FAQ) and an
//! exhaustive oracle.
//!
//! The objective of a permutation `q` is
//! `‖p - relabel(b, q⁻¹)‖²_F = Σ_ij (p[q i][q j] - b[i][j])²`,
//! so `q = q_star` aligns `b = apply_permutation(truth, q_star)` back onto `p`.
//!
//! With seeds first and free vertices `F` second, and `D` the relaxed
//! `F x F` block (`D[i][k] = 1` meaning free vertex `i` of `b` maps to free
//! vertex `k` of `p`), minimizing the objective is the same as maximizing
//!
//! ```text
//! f(D) = <B22 D P22, D> + <C, D>,    C = 2 B21 P21ᵀ
//! ```
//!
//! for symmetric inputs, up to the constant `‖p‖² + ‖b‖² - 2 <p11, b11>`.

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assign::{solve_lap, CostMatrix, Sense};
use crate::error::{Error, Result};
use crate::graph::{Permutation, SeedSet};

/// Tolerance on row/column sums of a relaxed iterate.
pub const DS_SUM_TOL: f64 = 1e-9;

/// Nonnegative square matrix with unit row and column sums.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublyStochastic(DMatrix<f64>);

impl DoublyStochastic {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidOptions(
                "doubly stochastic matrix must be square".into(),
            ));
        }
        if ds_violation(&m) > DS_SUM_TOL || m.iter().any(|v| *v < -1e-12 || !v.is_finite()) {
            return Err(Error::InvalidOptions(
                "matrix is not doubly stochastic".into(),
            ));
        }
        Ok(Self(m))
    }

    /// `J / m`.
    pub fn barycenter(m: usize) -> Self {
        Self(DMatrix::from_element(m, m, 1.0 / m as f64))
    }

    /// Sinkhorn-balanced matrix with uniform random entries.
    pub fn random<R: Rng>(m: usize, rng: &mut R) -> Self {
        let mut d = DMatrix::from_fn(m, m, |_, _| rng.random_range(0.5..1.5));
        for _ in 0..10_000 {
            for mut row in d.row_iter_mut() {
                let s = row.sum();
                row /= s;
            }
            for mut col in d.column_iter_mut() {
                let s = col.sum();
                col /= s;
            }
            if ds_violation(&d) <= 1e-13 {
                break;
            }
        }
        Self(d)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }
}

/// Largest deviation of a row or column sum from 1.
pub fn ds_violation(m: &DMatrix<f64>) -> f64 {
    let rows = m.row_iter().map(|r| (r.sum() - 1.0).abs());
    let cols = m.column_iter().map(|c| (c.sum() - 1.0).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub enum FaqInit {
    Barycenter,
    /// A given start on the free block.
    Given(DoublyStochastic),
    /// Midpoint of the barycenter and a random doubly stochastic matrix drawn
    /// from `rng_seed`.
    Randomized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaqOptions {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub init: FaqInit,
    pub rng_seed: u64,
}

impl Default for FaqOptions {
    fn default() -> Self {
        Self {
            max_iter: 30,
            rel_tol: 1e-6,
            init: FaqInit::Barycenter,
            rng_seed: 0,
        }
    }
}

impl FaqOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidOptions("max_iter must be at least 1".into()));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(Error::InvalidOptions("rel_tol must be positive".into()));
        }
        Ok(())
    }
}

/// One Frank-Wolfe iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaqStep {
    pub gamma: f64,
    /// Relaxed objective `f` before the step, at the endpoints of the segment
    /// and after the step.
    pub f_before: f64,
    pub f_at_one: f64,
    pub f_after: f64,
    /// Row/column sum deviation of the new iterate.
    pub ds_violation: f64,
    pub min_entry: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaqResult {
    pub permutation: Permutation,
    /// [`qap_objective`] at `permutation`.
    pub objective: f64,
    pub iterations: usize,
    /// Objective at the projection of the starting point.
    pub initial_objective: f64,
    pub steps: Vec<FaqStep>,
}

fn check_square_symmetric(m: &DMatrix<f64>, n: usize, what: &'static str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: m.nrows().max(m.ncols()),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    for i in 0..n {
        for j in 0..i {
            if m[(i, j)] != m[(j, i)] {
                return Err(Error::InvalidOptions(format!("{what} is not symmetric")));
            }
        }
    }
    Ok(())
}

/// `Σ_ij (p[q i][q j] - b[i][j])²`.
pub fn qap_objective(p: &DMatrix<f64>, b: &DMatrix<f64>, q: &Permutation) -> Result<f64> {
    let n = p.nrows();
    if p.ncols() != n || b.nrows() != n || b.ncols() != n || q.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: b.nrows().max(q.len()),
        });
    }
    Ok(objective_unchecked(p, b, q.as_slice()))
}

fn objective_unchecked(p: &DMatrix<f64>, b: &DMatrix<f64>, q: &[usize]) -> f64 {
    let n = q.len();
    let mut total = 0.0;
    for j in 0..n {
        let qj = q[j];
        for i in 0..n {
            let d = p[(q[i], qj)] - b[(i, j)];
            total += d * d;
        }
    }
    total
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Lifts a free-block assignment to a full permutation fixing the seeds.
fn embed(n: usize, free: &[usize], block: &[usize]) -> Permutation {
    let mut map: Vec<usize> = (0..n).collect();
    for (i, &k) in block.iter().enumerate() {
        map[free[i]] = free[k];
    }
    Permutation::new(map).expect("block assignment is a bijection")
}

fn project(d: &DMatrix<f64>) -> Vec<usize> {
    let cost = CostMatrix::new(d.clone(), Sense::Max).expect("finite iterate");
    solve_lap(&cost).0.into_vec()
}

fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Seeded FAQ: Frank-Wolfe over doubly stochastic free blocks, projected to a
/// permutation by a final linear assignment.
///
/// `p` and `b` must be symmetric `n x n` matrices whose seed rows are aligned.
/// The returned permutation fixes every seed and is never worse than the
/// projection of the starting point.
pub fn seeded_faq(
    p: &DMatrix<f64>,
    b: &DMatrix<f64>,
    seeds: &SeedSet,
    opts: &FaqOptions,
) -> Result<FaqResult> {
    opts.validate()?;
    let n = p.nrows();
    check_square_symmetric(p, n, "p_hat")?;
    check_square_symmetric(b, n, "b_tilde")?;
    if seeds.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: seeds.n(),
        });
    }
    if seeds.len() >= n {
        return Err(Error::InvalidSeeds(format!(
            "{} seeds leave no free vertex of {n}",
            seeds.len()
        )));
    }

    let seed_ids = seeds.ids();
    let free = seeds.complement();
    let m = free.len();

    let p22 = submatrix(p, &free, &free);
    let b22 = submatrix(b, &free, &free);
    let c = if seed_ids.is_empty() {
        DMatrix::zeros(m, m)
    } else {
        submatrix(b, &free, seed_ids) * submatrix(p, &free, seed_ids).transpose() * 2.0
    };

    let mut d = match &opts.init {
        FaqInit::Barycenter => DoublyStochastic::barycenter(m).0,
        FaqInit::Given(ds) => {
            if ds.size() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    actual: ds.size(),
                });
            }
            ds.0.clone()
        }
        FaqInit::Randomized => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
            let k = DoublyStochastic::random(m, &mut rng).0;
            (DoublyStochastic::barycenter(m).0 + k) * 0.5
        }
    };

    let initial = embed(n, &free, &project(&d));
    let initial_objective = objective_unchecked(p, b, initial.as_slice());

    let mut gd = &b22 * &d * &p22;
    let mut f = frob(&gd, &d) + frob(&c, &d);
    let mut steps = Vec::new();
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let grad = &gd * 2.0 + &c;
        let dir = project(&grad);

        // B22 S P22 where S is the permutation matrix of `dir`
        let sp = DMatrix::from_fn(m, m, |i, l| p22[(dir[i], l)]);
        let gs = &b22 * sp;
        let mut delta = -&d;
        for (i, &k) in dir.iter().enumerate() {
            delta[(i, k)] += 1.0;
        }
        let quad = frob(&(&gs - &gd), &delta);
        let lin = 2.0 * frob(&gd, &delta) + frob(&c, &delta);

        let gamma = if quad < 0.0 {
            (-lin / (2.0 * quad)).clamp(0.0, 1.0)
        } else if quad + lin >= 0.0 {
            1.0
        } else {
            0.0
        };
        let f_at_one = f + quad + lin;
        let f_new = f + quad * gamma * gamma + lin * gamma;

        if gamma > 0.0 {
            d += &delta * gamma;
            gd = &gd * (1.0 - gamma) + gs * gamma;
        }
        let min_entry = d.min();
        steps.push(FaqStep {
            gamma,
            f_before: f,
            f_at_one,
            f_after: f_new,
            ds_violation: ds_violation(&d),
            min_entry,
        });

        let change = (f_new - f).abs();
        f = f_new;
        if gamma == 0.0 || change < opts.rel_tol * f.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }

    let finish = embed(n, &free, &project(&d));
    let finish_objective = objective_unchecked(p, b, finish.as_slice());
    let (permutation, objective) = if finish_objective <= initial_objective {
        (finish, finish_objective)
    } else {
        (initial, initial_objective)
    };

    Ok(FaqResult {
        permutation,
        objective,
        iterations,
        initial_objective,
        steps,
    })
}

pub const BRUTE_FORCE_QAP_LIMIT: usize = 8;

/// Exact minimum of [`qap_objective`] over seed-fixing permutations; ties go
/// to the lexicographically smallest permutation.
pub fn brute_force_qap(
    p: &DMatrix<f64>,
    b: &DMatrix<f64>,
    seeds: &SeedSet,
) -> Result<(Permutation, f64)> {
    let n = p.nrows();
    if p.ncols() != n || b.nrows() != n || b.ncols() != n || seeds.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: b.nrows(),
        });
    }
    let free = seeds.complement();
    if free.len() > BRUTE_FORCE_QAP_LIMIT {
        return Err(Error::TooLarge {
            size: free.len(),
            limit: BRUTE_FORCE_QAP_LIMIT,
        });
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut map: Vec<usize> = (0..n).collect();
    for block in (0..free.len()).permutations(free.len()) {
        for (i, &k) in block.iter().enumerate() {
            map[free[i]] = free[k];
        }
        let obj = objective_unchecked(p, b, &map);
        if best.as_ref().is_none_or(|(_, o)| obj < *o) {
            best = Some((map.clone(), obj));
        }
    }
    let (map, obj) = best.expect("at least one permutation");
    Ok((Permutation::new(map)?, obj))
}
