//! Graph, permutation and seed primitives plus matching metrics.
//!
//! # Permutation convention
//!
//! A [`Permutation`] `q` relabels a graph so that vertex `i` of the result is
//! vertex `q.map[i]` of the original:
//!
//! ```text
//! result[i][j] = g[q.map[i]][q.map[j]]
//! ```
//!
//! Worked example with the path `0 - 1 - 2` and `q = [1, 2, 0]`: the result
//! has `result[0][1] = g[1][2] = 1`, `result[1][2] = g[2][0] = 0` and
//! `result[0][2] = g[1][0] = 1`, i.e. the path `1 - 0 - 2`. Vertex 0 of the
//! shuffled graph is the old vertex 1, the middle of the path.
//!
//! When the observed graph is `b_tilde = apply_permutation(b, q_star)`, the
//! matchers return an estimate of `q_star`: vertex `i` of `b_tilde` is matched
//! to vertex `q_hat.map[i]` of the reference graph.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simple undirected graph stored as a dense 0/1 adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    adj: Vec<u8>,
}

impl Graph {
    /// Graph with `n` vertices and no edges.
    pub fn empty(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph(
                "graph needs at least one vertex".into(),
            ));
        }
        Ok(Self {
            n,
            adj: vec![0; n * n],
        })
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut g = Self::empty(n)?;
        for i in 0..n {
            for j in 0..i {
                g.set_edge(i, j, true);
            }
        }
        Ok(g)
    }

    /// Builds a graph from undirected edges. Repeated edges are idempotent.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::empty(n)?;
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) out of range for {n} vertices"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {u}")));
            }
            g.set_edge(u, v, true);
        }
        Ok(g)
    }

    /// Validates a row-major `n * n` adjacency matrix.
    pub fn from_adjacency(n: usize, adj: Vec<u8>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph(
                "graph needs at least one vertex".into(),
            ));
        }
        if adj.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: adj.len(),
            });
        }
        for i in 0..n {
            if adj[i * n + i] != 0 {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {i}")));
            }
            for j in 0..i {
                let (a, b) = (adj[i * n + j], adj[j * n + i]);
                if a > 1 || b > 1 {
                    return Err(Error::InvalidGraph(format!("entry ({i}, {j}) is not 0/1")));
                }
                if a != b {
                    return Err(Error::InvalidGraph(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] != 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.adj[i * self.n + j]
    }

    /// Sets or clears the undirected edge `{i, j}`. Ignores `i == j`.
    pub fn set_edge(&mut self, i: usize, j: usize, present: bool) {
        if i == j {
            return;
        }
        let v = u8::from(present);
        self.adj[i * self.n + j] = v;
        self.adj[j * self.n + i] = v;
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    /// Edges as `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            ((i + 1)..self.n).filter_map(move |j| self.has_edge(i, j).then_some((i, j)))
        })
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| {
                self.adj[i * self.n..(i + 1) * self.n]
                    .iter()
                    .map(|&x| x as usize)
                    .sum()
            })
            .collect()
    }

    pub fn adjacency(&self) -> &[u8] {
        &self.adj
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| f64::from(self.get(i, j)))
    }
}

/// Bijection on `{0, .., n-1}`; `map[i]` is the image of `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
        }
    }

    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &v in &map {
            if v >= n {
                return Err(Error::InvalidPermutation(format!(
                    "image {v} out of range for {n}"
                )));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidPermutation(format!("image {v} repeated")));
            }
        }
        Ok(Self { map })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &v)| i == v)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &v) in self.map.iter().enumerate() {
            inv[v] = i;
        }
        Self { map: inv }
    }

    /// `(self ∘ other)[i] = self[other[i]]`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(Self {
            map: other.map.iter().map(|&i| self.map[i]).collect(),
        })
    }

    pub fn fixes_seeds(&self, seeds: &SeedSet) -> bool {
        seeds.ids().iter().all(|&s| self.map.get(s) == Some(&s))
    }
}

/// Vertices whose correspondence is known. Ids are strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSet {
    n: usize,
    ids: Vec<usize>,
}

impl SeedSet {
    /// Accepts ids in any order; rejects duplicates and out-of-range ids.
    pub fn new(n: usize, mut ids: Vec<usize>) -> Result<Self> {
        ids.sort_unstable();
        if let Some(&last) = ids.last() {
            if last >= n {
                return Err(Error::InvalidSeeds(format!(
                    "seed {last} out of range for {n}"
                )));
            }
        }
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidSeeds(format!("seed {} repeated", w[0])));
        }
        Ok(Self { n, ids })
    }

    /// The first `s` vertices.
    pub fn first(n: usize, s: usize) -> Result<Self> {
        Self::new(n, (0..s).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn contains(&self, v: usize) -> bool {
        self.ids.binary_search(&v).is_ok()
    }

    /// Non-seed vertices in increasing order.
    pub fn complement(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n - self.ids.len());
        let mut it = self.ids.iter().peekable();
        for v in 0..self.n {
            if it.peek() == Some(&&v) {
                it.next();
            } else {
                out.push(v);
            }
        }
        out
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Relabels `g` so that `result[i][j] = g[q[i]][q[j]]`.
pub fn apply_permutation(g: &Graph, q: &Permutation) -> Result<Graph> {
    check_len(g.n(), q.len())?;
    let n = g.n();
    let mut adj = vec![0u8; n * n];
    for i in 0..n {
        let qi = q.get(i);
        for j in 0..n {
            adj[i * n + j] = g.get(qi, q.get(j));
        }
    }
    Ok(Graph { n, adj })
}

/// Same relabeling as [`apply_permutation`] for a real matrix.
pub fn permute_matrix(m: &DMatrix<f64>, q: &Permutation) -> Result<DMatrix<f64>> {
    check_len(m.nrows(), q.len())?;
    check_len(m.ncols(), q.len())?;
    Ok(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        m[(q.get(i), q.get(j))]
    }))
}

pub fn invert_permutation(q: &Permutation) -> Permutation {
    q.inverse()
}

/// Fraction of non-seed vertices where `q_hat` disagrees with `q_star`.
pub fn matching_error(q_hat: &Permutation, q_star: &Permutation, seeds: &SeedSet) -> Result<f64> {
    check_len(q_star.len(), q_hat.len())?;
    check_len(q_star.len(), seeds.n())?;
    for &s in seeds.ids() {
        if q_hat.get(s) != s || q_star.get(s) != s {
            return Err(Error::SeedNotFixed(s));
        }
    }
    let free = q_star.len() - seeds.len();
    if free == 0 {
        return Ok(0.0);
    }
    let wrong = (0..q_star.len())
        .filter(|&i| !seeds.contains(i) && q_hat.get(i) != q_star.get(i))
        .count();
    Ok(wrong as f64 / free as f64)
}

/// Squared Frobenius distance between adjacency matrices, both triangles.
pub fn edge_disagreement(a: &Graph, b: &Graph) -> Result<usize> {
    check_len(a.n(), b.n())?;
    Ok(a.adj.iter().zip(&b.adj).filter(|(x, y)| x != y).count())
}
