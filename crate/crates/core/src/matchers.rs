//! End-to-end matching methods: the two covariate-assisted matchers and the
//! three baselines they are compared against.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assign::{solve_lap, CostMatrix, Sense};
use crate::covariates::{seed_block_rows, CovariateBundle};
use crate::error::{Error, Result};
use crate::glm::{fit_glm, predict_prob_matrix, FitOptions, GlmFit, LinkKind, ProbMatrix};
use crate::graph::{Graph, Permutation, SeedSet};
use crate::qap::{seeded_faq, FaqOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    CovQap,
    CovNeigh,
    NoCovQap,
    NoCovNeigh,
    AvgSim,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::CovQap,
        Method::CovNeigh,
        Method::NoCovQap,
        Method::NoCovNeigh,
        Method::AvgSim,
    ];

    /// Command-line spelling.
    pub fn key(self) -> &'static str {
        match self {
            Method::CovQap => "cov-qap",
            Method::CovNeigh => "cov-neigh",
            Method::NoCovQap => "no-cov-qap",
            Method::NoCovNeigh => "no-cov-neigh",
            Method::AvgSim => "avg-sim",
        }
    }

    pub fn uses_glm(self) -> bool {
        matches!(self, Method::CovQap | Method::CovNeigh)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::CovQap => "CovQAP",
            Method::CovNeigh => "CovNeigh",
            Method::NoCovQap => "NoCovQAP",
            Method::NoCovNeigh => "NoCovNeigh",
            Method::AvgSim => "AvgSim",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.key() == norm || m.to_string().to_ascii_lowercase() == norm)
            .ok_or_else(|| Error::InvalidOptions(format!("unknown method `{s}`")))
    }
}

/// Settings shared by all matchers.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    pub link: LinkKind,
    pub fit: FitOptions,
    pub faq: FaqOptions,
}

impl MatchConfig {
    pub fn new(link: LinkKind) -> Self {
        Self {
            link,
            fit: FitOptions::default(),
            faq: FaqOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub method: Method,
    /// Vertex `i` of the observed graph is matched to `permutation[i]` of the reference.
    pub permutation: Permutation,
    /// QAP objective for the QAP methods, neighborhood squared error for the
    /// LAP methods.
    pub objective: f64,
    pub fit: Option<GlmFit>,
    /// Predicted probabilities clamped into `[0, 1]`.
    pub clamped: usize,
    pub iterations: Option<usize>,
    pub wall_time: f64,
}

fn check_inputs(a: &Graph, b_tilde: &Graph, seeds: &SeedSet) -> Result<()> {
    if a.n() != b_tilde.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            actual: b_tilde.n(),
        });
    }
    if seeds.n() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            actual: seeds.n(),
        });
    }
    if seeds.len() >= a.n() {
        return Err(Error::InvalidSeeds(format!(
            "{} seeds leave no free vertex",
            seeds.len()
        )));
    }
    Ok(())
}

/// Fits the GLM on the seed block and predicts every pair.
pub fn estimate_probabilities(
    a: &Graph,
    b_tilde: &Graph,
    c: &CovariateBundle,
    seeds: &SeedSet,
    link: LinkKind,
    opts: &FitOptions,
) -> Result<(GlmFit, ProbMatrix)> {
    let d = c.design_dim();
    if seeds.len() < d {
        return Err(Error::InsufficientSeeds {
            available: seeds.len(),
            required: d,
        });
    }
    let rows = seed_block_rows(a, b_tilde, c, seeds)?;
    let fit = fit_glm(&rows, link, opts)?;
    let p_hat = predict_prob_matrix(&fit, a, c)?;
    Ok((fit, p_hat))
}

/// Matches rows of `b[F, S]` to rows of `p[F, S]` by maximizing
/// `tr(Q b[F,S] p[F,S]ᵀ)` with a linear assignment. Returns the permutation
/// and the squared error `Σ_i ‖p[q i, S] - b[i, S]‖²` over free vertices.
pub fn neighborhood_assignment(
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
    if seeds.is_empty() {
        return Err(Error::InvalidSeeds(
            "neighborhood matching needs at least one seed".into(),
        ));
    }
    if seeds.len() >= n {
        return Err(Error::InvalidSeeds(format!(
            "{} seeds leave no free vertex",
            seeds.len()
        )));
    }
    let s_ids = seeds.ids();
    let free = seeds.complement();
    let p_fs = DMatrix::from_fn(free.len(), s_ids.len(), |i, t| p[(free[i], s_ids[t])]);
    let b_fs = DMatrix::from_fn(free.len(), s_ids.len(), |i, t| b[(free[i], s_ids[t])]);
    let score = &b_fs * p_fs.transpose();
    let (block, _) = solve_lap(&CostMatrix::new(score, Sense::Max)?);

    let mut map: Vec<usize> = (0..n).collect();
    for (i, &k) in block.as_slice().iter().enumerate() {
        map[free[i]] = free[k];
    }
    let err = block
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &k)| (p_fs.row(k) - b_fs.row(i)).norm_squared())
        .sum();
    Ok((Permutation::new(map)?, err))
}

fn elapsed(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

/// Fit on seeds, predict `P̂`, then solve the seeded QAP against `b_tilde`.
pub fn cov_qap(
    a: &Graph,
    b_tilde: &Graph,
    c: &CovariateBundle,
    seeds: &SeedSet,
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    let start = Instant::now();
    check_inputs(a, b_tilde, seeds)?;
    let (fit, p_hat) = estimate_probabilities(a, b_tilde, c, seeds, cfg.link, &cfg.fit)?;
    let r = seeded_faq(p_hat.matrix(), &b_tilde.to_matrix(), seeds, &cfg.faq)?;
    Ok(MatchResult {
        method: Method::CovQap,
        permutation: r.permutation,
        objective: r.objective,
        fit: Some(fit),
        clamped: p_hat.clamped(),
        iterations: Some(r.iterations),
        wall_time: elapsed(start),
    })
}

/// Fit on seeds, predict `P̂`, then match seed neighborhoods by LAP.
pub fn cov_neigh(
    a: &Graph,
    b_tilde: &Graph,
    c: &CovariateBundle,
    seeds: &SeedSet,
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    let start = Instant::now();
    check_inputs(a, b_tilde, seeds)?;
    if seeds.is_empty() {
        return Err(Error::InvalidSeeds(
            "neighborhood matching needs at least one seed".into(),
        ));
    }
    let (fit, p_hat) = estimate_probabilities(a, b_tilde, c, seeds, cfg.link, &cfg.fit)?;
    let (permutation, objective) =
        neighborhood_assignment(p_hat.matrix(), &b_tilde.to_matrix(), seeds)?;
    Ok(MatchResult {
        method: Method::CovNeigh,
        permutation,
        objective,
        fit: Some(fit),
        clamped: p_hat.clamped(),
        iterations: None,
        wall_time: elapsed(start),
    })
}

pub fn no_cov_qap(
    a: &Graph,
    b_tilde: &Graph,
    seeds: &SeedSet,
    faq: &FaqOptions,
) -> Result<MatchResult> {
    let start = Instant::now();
    check_inputs(a, b_tilde, seeds)?;
    let r = seeded_faq(&a.to_matrix(), &b_tilde.to_matrix(), seeds, faq)?;
    Ok(MatchResult {
        method: Method::NoCovQap,
        permutation: r.permutation,
        objective: r.objective,
        fit: None,
        clamped: 0,
        iterations: Some(r.iterations),
        wall_time: elapsed(start),
    })
}

pub fn no_cov_neigh(a: &Graph, b_tilde: &Graph, seeds: &SeedSet) -> Result<MatchResult> {
    let start = Instant::now();
    check_inputs(a, b_tilde, seeds)?;
    let (permutation, objective) =
        neighborhood_assignment(&a.to_matrix(), &b_tilde.to_matrix(), seeds)?;
    Ok(MatchResult {
        method: Method::NoCovNeigh,
        permutation,
        objective,
        fit: None,
        clamped: 0,
        iterations: None,
        wall_time: elapsed(start),
    })
}

/// `(A + mean of the edge covariates) / 2`.
pub fn average_similarity(a: &Graph, c: &CovariateBundle) -> Result<DMatrix<f64>> {
    if c.edge_count() == 0 {
        return Err(Error::InvalidCovariates(
            "average similarity needs an edge covariate".into(),
        ));
    }
    if a.n() != c.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            actual: c.n(),
        });
    }
    let mut mean = DMatrix::zeros(a.n(), a.n());
    for y in c.edge_covs() {
        mean += y;
    }
    mean /= c.edge_count() as f64;
    Ok((a.to_matrix() + mean) * 0.5)
}

pub fn avg_sim(
    a: &Graph,
    b_tilde: &Graph,
    c: &CovariateBundle,
    seeds: &SeedSet,
    faq: &FaqOptions,
) -> Result<MatchResult> {
    let start = Instant::now();
    check_inputs(a, b_tilde, seeds)?;
    let m = average_similarity(a, c)?;
    let r = seeded_faq(&m, &b_tilde.to_matrix(), seeds, faq)?;
    Ok(MatchResult {
        method: Method::AvgSim,
        permutation: r.permutation,
        objective: r.objective,
        fit: None,
        clamped: 0,
        iterations: Some(r.iterations),
        wall_time: elapsed(start),
    })
}

/// Dispatches to the matcher named by `method`.
pub fn run_method(
    method: Method,
    a: &Graph,
    b_tilde: &Graph,
    c: &CovariateBundle,
    seeds: &SeedSet,
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    match method {
        Method::CovQap => cov_qap(a, b_tilde, c, seeds, cfg),
        Method::CovNeigh => cov_neigh(a, b_tilde, c, seeds, cfg),
        Method::NoCovQap => no_cov_qap(a, b_tilde, seeds, &cfg.faq),
        Method::NoCovNeigh => no_cov_neigh(a, b_tilde, seeds),
        Method::AvgSim => avg_sim(a, b_tilde, c, seeds, &cfg.faq),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{apply_permutation, matching_error};
    use crate::qap::{brute_force_qap, qap_objective};
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
        let mut g = Graph::empty(n).unwrap();
        for i in 0..n {
            for j in 0..i {
                g.set_edge(i, j, rng.random_bool(p));
            }
        }
        g
    }

    fn shuffle_free(rng: &mut ChaCha8Rng, n: usize, seeds: &SeedSet) -> Permutation {
        let free = seeds.complement();
        let mut img = free.clone();
        img.shuffle(rng);
        let mut map: Vec<usize> = (0..n).collect();
        for (f, g) in free.iter().zip(img) {
            map[*f] = g;
        }
        Permutation::new(map).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.key().parse::<Method>().unwrap(), m);
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn planted_isomorphism_recovered_by_cov_qap() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cfg = MatchConfig::new(LinkKind::Identity);
        for _ in 0..10 {
            let (n, s) = (50, 15);
            let a = random_graph(&mut rng, n, 0.3);
            let seeds = SeedSet::first(n, s).unwrap();
            let q = shuffle_free(&mut rng, n, &seeds);
            let b_tilde = apply_permutation(&a, &q).unwrap();
            let r = cov_qap(&a, &b_tilde, &CovariateBundle::none(n), &seeds, &cfg).unwrap();
            assert_eq!(matching_error(&r.permutation, &q, &seeds).unwrap(), 0.0);
            let fit = r.fit.unwrap();
            assert!(fit.theta[0].abs() < 1e-9 && (fit.theta[1] - 1.0).abs() < 1e-9);

            let nc = no_cov_qap(&a, &b_tilde, &seeds, &cfg.faq).unwrap();
            assert_eq!(matching_error(&nc.permutation, &q, &seeds).unwrap(), 0.0);
        }
    }

    #[test]
    fn too_few_seeds_for_the_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let a = random_graph(&mut rng, 10, 0.5);
        let y = random_graph(&mut rng, 10, 0.5).to_matrix();
        let c = CovariateBundle::with_edge_only(10, vec![y]).unwrap();
        let seeds = SeedSet::first(10, 2).unwrap();
        let cfg = MatchConfig::new(LinkKind::Identity);
        assert!(matches!(
            cov_qap(&a, &a, &c, &seeds, &cfg),
            Err(Error::InsufficientSeeds {
                available: 2,
                required: 3
            })
        ));
    }

    #[test]
    fn no_seeds_rejected_by_neighborhood_methods() {
        let g = Graph::complete(4).unwrap();
        let none = SeedSet::new(4, vec![]).unwrap();
        assert!(no_cov_neigh(&g, &g, &none).is_err());
        assert!(cov_neigh(
            &g,
            &g,
            &CovariateBundle::none(4),
            &none,
            &MatchConfig::new(LinkKind::Identity)
        )
        .is_err());
    }

    #[test]
    fn forced_unit_fit_reduces_cov_qap_to_no_cov_qap() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n = 30;
        let a = random_graph(&mut rng, n, 0.3);
        let b = random_graph(&mut rng, n, 0.3);
        let seeds = SeedSet::first(n, 8).unwrap();
        let fit = GlmFit::fixed(LinkKind::Identity, vec![0.0, 1.0]);
        let p_hat = predict_prob_matrix(&fit, &a, &CovariateBundle::none(n)).unwrap();
        assert_eq!(p_hat.matrix(), &a.to_matrix());
        let faq = FaqOptions::default();
        let via_p = seeded_faq(p_hat.matrix(), &b.to_matrix(), &seeds, &faq).unwrap();
        let direct = no_cov_qap(&a, &b, &seeds, &faq).unwrap();
        assert_eq!(via_p.objective, direct.objective);
        assert_eq!(via_p.permutation, direct.permutation);
    }

    #[test]
    fn avg_sim_with_copy_of_a_is_no_cov_qap() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let n = 25;
        let a = random_graph(&mut rng, n, 0.3);
        let b = random_graph(&mut rng, n, 0.3);
        let seeds = SeedSet::first(n, 6).unwrap();
        let c = CovariateBundle::with_edge_only(n, vec![a.to_matrix()]).unwrap();
        assert_eq!(average_similarity(&a, &c).unwrap(), a.to_matrix());
        let faq = FaqOptions::default();
        assert_eq!(
            avg_sim(&a, &b, &c, &seeds, &faq).unwrap().objective,
            no_cov_qap(&a, &b, &seeds, &faq).unwrap().objective
        );
        assert!(avg_sim(&a, &b, &CovariateBundle::none(n), &seeds, &faq).is_err());
    }

    #[test]
    fn avg_sim_value_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let a = random_graph(&mut rng, 12, 0.5);
        let y = random_graph(&mut rng, 12, 0.5).to_matrix();
        let m =
            average_similarity(&a, &CovariateBundle::with_edge_only(12, vec![y]).unwrap()).unwrap();
        assert!(m.iter().all(|v| [0.0, 0.5, 1.0].contains(v)));
    }

    #[test]
    fn neighborhood_with_two_free_vertices() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        for _ in 0..20 {
            let n = 12;
            let p = DMatrix::from_fn(n, n, |_, _| rng.random_range(0.0..1.0));
            let p = DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    0.0
                } else {
                    (p[(i, j)] + p[(j, i)]) / 2.0
                }
            });
            let seeds = SeedSet::first(n, n - 2).unwrap();
            let swap = rng.random_bool(0.5);
            let mut map: Vec<usize> = (0..n).collect();
            if swap {
                map.swap(n - 1, n - 2);
            }
            let q = Permutation::new(map).unwrap();
            let b = crate::graph::permute_matrix(&p, &q).unwrap();
            let (got, _) = neighborhood_assignment(&p, &b, &seeds).unwrap();
            // score both options by hand
            let score = |k0: usize, k1: usize| -> f64 {
                (0..n - 2)
                    .map(|t| b[(n - 2, t)] * p[(k0, t)] + b[(n - 1, t)] * p[(k1, t)])
                    .sum()
            };
            let keep = score(n - 2, n - 1);
            let flip = score(n - 1, n - 2);
            assert_eq!(got.as_slice()[n - 2] == n - 1, flip > keep);
            assert_eq!(got, q);
        }
    }

    #[test]
    fn neighborhood_on_empty_graph_is_well_formed() {
        let g = Graph::empty(8).unwrap();
        let seeds = SeedSet::first(8, 3).unwrap();
        let r = no_cov_neigh(&g, &g, &seeds).unwrap();
        assert!(r.permutation.fixes_seeds(&seeds));
    }

    #[test]
    fn duplicate_rows_still_give_a_permutation() {
        let n = 8;
        let p = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 0.5 });
        let b = Graph::complete(n).unwrap().to_matrix();
        let seeds = SeedSet::first(n, 3).unwrap();
        let (q, _) = neighborhood_assignment(&p, &b, &seeds).unwrap();
        assert!(q.fixes_seeds(&seeds));
    }

    #[test]
    fn unshuffled_graph_prefers_identity_when_rows_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let mut tested = 0;
        while tested < 30 {
            let n = 12;
            let a = random_graph(&mut rng, n, 0.5);
            let seeds = SeedSet::first(n, 6).unwrap();
            let free = seeds.complement();
            let rows: Vec<Vec<u8>> = free
                .iter()
                .map(|&i| (0..6).map(|t| a.get(i, t)).collect())
                .collect();
            if (0..rows.len()).any(|i| (0..i).any(|j| rows[i] == rows[j])) {
                continue;
            }
            let r = no_cov_neigh(&a, &a, &seeds).unwrap();
            assert!(r.permutation.is_identity());
            tested += 1;
        }
    }

    #[test]
    fn unit_fit_neighborhood_matches_affine_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        for _ in 0..30 {
            let n = 14;
            let a = random_graph(&mut rng, n, 0.4);
            let b = random_graph(&mut rng, n, 0.4);
            let seeds = SeedSet::first(n, 5).unwrap();
            let (t0, t1) = (rng.random_range(0.0..0.3), rng.random_range(0.1..0.7));
            let p_hat = predict_prob_matrix(
                &GlmFit::fixed(LinkKind::Identity, vec![t0, t1]),
                &a,
                &CovariateBundle::none(n),
            )
            .unwrap();
            // an intercept adds the same row-independent term to every score of a
            // given b-row, so the argmax is unchanged when unique
            let plain = neighborhood_assignment(&a.to_matrix(), &b.to_matrix(), &seeds)
                .unwrap()
                .0;
            let affine = neighborhood_assignment(p_hat.matrix(), &b.to_matrix(), &seeds)
                .unwrap()
                .0;
            let bm = b.to_matrix();
            let score = |m: &DMatrix<f64>, q: &Permutation| -> f64 {
                seeds
                    .complement()
                    .iter()
                    .map(|&i| (0..5).map(|t| bm[(i, t)] * m[(q.get(i), t)]).sum::<f64>())
                    .sum()
            };
            let am = a.to_matrix();
            // both must be optimal for the plain score; equal when the optimum is unique
            assert!((score(&am, &plain) - score(&am, &affine)).abs() < 1e-9);
        }
    }

    #[test]
    fn affine_p_hat_keeps_brute_force_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let mut checked = 0;
        while checked < 20 {
            let n = 9;
            let a = random_graph(&mut rng, n, 0.5);
            let b = random_graph(&mut rng, n, 0.5);
            let seeds = SeedSet::first(n, 2).unwrap();
            let (t0, t1) = (rng.random_range(0.0..0.3), rng.random_range(0.2..0.7));
            let p_hat = predict_prob_matrix(
                &GlmFit::fixed(LinkKind::Identity, vec![t0, t1]),
                &a,
                &CovariateBundle::none(n),
            )
            .unwrap();
            let (qa, oa) = brute_force_qap(&a.to_matrix(), &b.to_matrix(), &seeds).unwrap();
            // skip instances with tied optima
            let ties = count_optima(&a.to_matrix(), &b.to_matrix(), &seeds, oa);
            if ties != 1 {
                continue;
            }
            let (qp, _) = brute_force_qap(p_hat.matrix(), &b.to_matrix(), &seeds).unwrap();
            assert_eq!(qa, qp);
            checked += 1;
        }
    }

    fn count_optima(p: &DMatrix<f64>, b: &DMatrix<f64>, seeds: &SeedSet, best: f64) -> usize {
        use itertools::Itertools;
        let free = seeds.complement();
        let n = p.nrows();
        (0..free.len())
            .permutations(free.len())
            .filter(|block| {
                let mut map: Vec<usize> = (0..n).collect();
                for (i, &k) in block.iter().enumerate() {
                    map[free[i]] = free[k];
                }
                qap_objective(p, b, &Permutation::new(map).unwrap()).unwrap() == best
            })
            .count()
    }
}
