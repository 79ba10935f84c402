//! Synthetic data and the replication harness for method comparisons.
//!
//! Each replication draws `A ~ ER(n, p)` and a binary edge covariate
//! `Y ~ ER(n, q)`, builds `P = θ0 + θ1 A + θ2 Y` with `θ1 = ±α(1-γ)` and
//! `θ2 = αγ`, samples `B ~ Bernoulli(P)`, picks seeds and shuffles the
//! remaining vertices of `B`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariates::CovariateBundle;
use crate::error::{Error, Result};
use crate::glm::{LinkKind, ProbMatrix};
use crate::graph::{apply_permutation, matching_error, Graph, Permutation, SeedSet};
use crate::matchers::{run_method, MatchConfig, Method};
use crate::qap::FaqOptions;

/// Generator used for every stochastic operation.
pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for replication `rep` of a run seeded with `base`.
pub fn rep_rng(base: u64, rep: u64) -> SimRng {
    SimRng::seed_from_u64(base ^ splitmix64(rep))
}

/// Erdős–Rényi graph: every pair independently present with probability `p`.
pub fn gen_er<R: Rng>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!(
            "edge probability {p} outside [0, 1]"
        )));
    }
    let mut g = Graph::empty(n)?;
    for i in 1..n {
        for j in 0..i {
            if rng.random_bool(p) {
                g.set_edge(i, j, true);
            }
        }
    }
    Ok(g)
}

/// `P_ij = clamp(θ0 + θ1 A_ij + θ2 Y_ij, 0, 1)`, zero diagonal.
pub fn build_p_matrix(
    a: &Graph,
    y: &Graph,
    theta0: f64,
    theta1: f64,
    theta2: f64,
) -> Result<ProbMatrix> {
    if a.n() != y.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            actual: y.n(),
        });
    }
    let p = ProbMatrix::from_raw(a.n(), |i, j| {
        theta0 + theta1 * f64::from(a.get(i, j)) + theta2 * f64::from(y.get(i, j))
    });
    if p.clamped() > 0 {
        log::debug!(
            "clamped {} generating probabilities into [0, 1]",
            p.clamped()
        );
    }
    Ok(p)
}

/// One Bernoulli draw per unordered pair.
pub fn sample_graph<R: Rng>(p: &ProbMatrix, rng: &mut R) -> Graph {
    let n = p.n();
    let mut g = Graph::empty(n).expect("probability matrices are nonempty");
    for i in 1..n {
        for j in 0..i {
            if rng.random_bool(p.get(i, j)) {
                g.set_edge(i, j, true);
            }
        }
    }
    g
}

/// Correlated Erdős–Rényi pair: `A ~ ER(p)` and
/// `P(B_ij = 1 | A) = (1 - rho) p + rho A_ij`.
pub fn correlated_er<R: Rng>(n: usize, p: f64, rho: f64, rng: &mut R) -> Result<(Graph, Graph)> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!(
            "correlation {rho} outside [0, 1]"
        )));
    }
    let a = gen_er(n, p, rng)?;
    let probs = ProbMatrix::from_raw(n, |i, j| (1.0 - rho) * p + rho * f64::from(a.get(i, j)));
    let b = sample_graph(&probs, rng);
    Ok((a, b))
}

/// Uniformly random relabeling of the non-seed vertices of `b`.
///
/// Returns `(apply_permutation(b, q_star), q_star)`.
pub fn shuffle_nonseeds<R: Rng>(
    b: &Graph,
    seeds: &SeedSet,
    rng: &mut R,
) -> Result<(Graph, Permutation)> {
    if seeds.n() != b.n() {
        return Err(Error::DimensionMismatch {
            expected: b.n(),
            actual: seeds.n(),
        });
    }
    if seeds.len() >= b.n() {
        return Err(Error::InvalidSeeds("no free vertex to shuffle".into()));
    }
    let free = seeds.complement();
    let mut images = free.clone();
    images.shuffle(rng);
    let mut map: Vec<usize> = (0..b.n()).collect();
    for (&v, img) in free.iter().zip(images) {
        map[v] = img;
    }
    let q = Permutation::new(map)?;
    Ok((apply_permutation(b, &q)?, q))
}

/// Random seed set of size `s`.
pub fn random_seeds<R: Rng>(n: usize, s: usize, rng: &mut R) -> Result<SeedSet> {
    if s > n {
        return Err(Error::InvalidSeeds(format!(
            "{s} seeds requested from {n} vertices"
        )));
    }
    let mut labels: Vec<usize> = (0..n).collect();
    labels.shuffle(rng);
    labels.truncate(s);
    SeedSet::new(n, labels)
}

/// Direction of the network effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setup {
    /// `θ1 = α(1-γ)`: network and covariate push the same way.
    Easy,
    /// `θ1 = -α(1-γ)`: opposite effects.
    Difficult,
}

fn default_faq_max_iter() -> usize {
    FaqOptions::default().max_iter
}

fn default_faq_rel_tol() -> f64 {
    FaqOptions::default().rel_tol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub theta0: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub sign: Setup,
    pub n_seeds: usize,
    pub n_reps: usize,
    pub link: LinkKind,
    pub base_rng_seed: u64,
    #[serde(default = "default_faq_max_iter")]
    pub faq_max_iter: usize,
    #[serde(default = "default_faq_rel_tol")]
    pub faq_rel_tol: f64,
}

impl SimConfig {
    /// Desk-scale default: `n = 150`, 50 seeds, 10 replications.
    pub fn desk(sign: Setup, alpha: f64, gamma: f64) -> Self {
        Self {
            n: 150,
            p: 0.1,
            q: 0.1,
            theta0: match sign {
                Setup::Easy => 0.01,
                Setup::Difficult => 0.6,
            },
            alpha,
            gamma,
            sign,
            n_seeds: 50,
            n_reps: 10,
            link: LinkKind::Identity,
            base_rng_seed: 0,
            faq_max_iter: default_faq_max_iter(),
            faq_rel_tol: default_faq_rel_tol(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open = |x: f64| x > 0.0 && x < 1.0;
        if !open(self.p) || !open(self.q) {
            return Err(Error::InvalidConfig("p and q must lie in (0, 1)".into()));
        }
        if self.n_seeds >= self.n {
            return Err(Error::InvalidConfig("n_seeds must be below n".into()));
        }
        if self.n_reps == 0 {
            return Err(Error::InvalidConfig("n_reps must be at least 1".into()));
        }
        if ![self.theta0, self.alpha, self.gamma]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidConfig("coefficients must be finite".into()));
        }
        if self.faq_max_iter == 0 || self.faq_rel_tol.is_nan() || self.faq_rel_tol <= 0.0 {
            return Err(Error::InvalidConfig("invalid FAQ settings".into()));
        }
        Ok(())
    }

    /// `(θ0, θ1, θ2)` of the generating model.
    pub fn coefficients(&self) -> (f64, f64, f64) {
        let t1 = self.alpha * (1.0 - self.gamma);
        let t1 = match self.sign {
            Setup::Easy => t1,
            Setup::Difficult => -t1,
        };
        (self.theta0, t1, self.alpha * self.gamma)
    }

    pub fn match_config(&self) -> MatchConfig {
        let mut cfg = MatchConfig::new(self.link);
        cfg.faq.max_iter = self.faq_max_iter;
        cfg.faq.rel_tol = self.faq_rel_tol;
        cfg
    }
}

/// One simulated instance with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub a: Graph,
    pub y: Graph,
    pub p: ProbMatrix,
    pub b: Graph,
    pub b_tilde: Graph,
    pub seeds: SeedSet,
    pub q_star: Permutation,
}

impl Instance {
    pub fn covariates(&self) -> CovariateBundle {
        CovariateBundle::with_edge_only(self.a.n(), vec![self.y.to_matrix()])
            .expect("generated covariates are valid")
    }
}

pub fn generate_instance<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Result<Instance> {
    let (t0, t1, t2) = cfg.coefficients();
    let a = gen_er(cfg.n, cfg.p, rng)?;
    let y = gen_er(cfg.n, cfg.q, rng)?;
    let p = build_p_matrix(&a, &y, t0, t1, t2)?;
    let b = sample_graph(&p, rng);
    let seeds = random_seeds(cfg.n, cfg.n_seeds, rng)?;
    let (b_tilde, q_star) = shuffle_nonseeds(&b, &seeds, rng)?;
    Ok(Instance {
        a,
        y,
        p,
        b,
        b_tilde,
        seeds,
        q_star,
    })
}

/// Outcome of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub method: Method,
    pub error: f64,
    pub objective: f64,
    /// Generating probabilities clamped into `[0, 1]` in this replication.
    pub p_clamped: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_error: f64,
    /// Sample standard deviation; zero for a single replication.
    pub std_error: f64,
    pub mean_wall_time: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: SimConfig,
    pub methods: Vec<MethodSummary>,
    pub records: Vec<RepRecord>,
}

impl ExperimentSummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    /// Copy with every wall time zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.records {
            r.wall_time = 0.0;
        }
        for m in &mut out.methods {
            m.mean_wall_time = 0.0;
        }
        out
    }
}

/// Aggregates records per method. Records are ordered by `(rep, method)`
/// first, so the result does not depend on the order they were produced in.
pub fn summarize(config: &SimConfig, mut records: Vec<RepRecord>) -> ExperimentSummary {
    records.sort_by_key(|r| (r.rep, r.method));
    let mut methods: Vec<Method> = records.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let methods = methods
        .into_iter()
        .map(|m| {
            let errs: Vec<f64> = records
                .iter()
                .filter(|r| r.method == m)
                .map(|r| r.error)
                .collect();
            let times: Vec<f64> = records
                .iter()
                .filter(|r| r.method == m)
                .map(|r| r.wall_time)
                .collect();
            let k = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / k;
            let var = if errs.len() > 1 {
                errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            MethodSummary {
                method: m,
                mean_error: mean,
                std_error: var.sqrt(),
                mean_wall_time: times.iter().sum::<f64>() / k,
                reps: errs.len(),
            }
        })
        .collect();
    ExperimentSummary {
        config: config.clone(),
        methods,
        records,
    }
}

/// Runs one replication of every method.
pub fn run_replication(cfg: &SimConfig, methods: &[Method], rep: usize) -> Result<Vec<RepRecord>> {
    let mut rng = rep_rng(cfg.base_rng_seed, rep as u64);
    let inst = generate_instance(cfg, &mut rng)?;
    let covs = inst.covariates();
    let mcfg = cfg.match_config();
    methods
        .iter()
        .map(|&m| {
            let r = run_method(m, &inst.a, &inst.b_tilde, &covs, &inst.seeds, &mcfg)?;
            Ok(RepRecord {
                rep,
                method: m,
                error: matching_error(&r.permutation, &inst.q_star, &inst.seeds)?,
                objective: r.objective,
                p_clamped: inst.p.clamped(),
                wall_time: r.wall_time,
            })
        })
        .collect()
}

/// Runs `cfg.n_reps` replications in parallel and aggregates them.
pub fn run_experiment(cfg: &SimConfig, methods: &[Method]) -> Result<ExperimentSummary> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidConfig("no methods selected".into()));
    }
    let per_rep: Vec<Vec<RepRecord>> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|rep| run_replication(cfg, methods, rep))
        .collect::<Result<_>>()?;
    Ok(summarize(cfg, per_rep.into_iter().flatten().collect()))
}

/// Sequential variant, used where timings must not contend for cores.
pub fn run_experiment_sequential(cfg: &SimConfig, methods: &[Method]) -> Result<ExperimentSummary> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidConfig("no methods selected".into()));
    }
    let mut records = Vec::new();
    for rep in 0..cfg.n_reps {
        records.extend(run_replication(cfg, methods, rep)?);
    }
    Ok(summarize(cfg, records))
}

/// One row of the tidy per-replication table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TidyRow {
    pub alpha: f64,
    pub gamma: f64,
    pub sign: Setup,
    pub n: usize,
    pub n_seeds: usize,
    pub rep: usize,
    pub method: String,
    pub error: f64,
    pub objective: f64,
    pub p_clamped: usize,
}

/// Flattens summaries into tidy rows. Wall times are left out so the table
/// is a pure function of the configuration.
pub fn tidy_rows(summaries: &[ExperimentSummary]) -> Vec<TidyRow> {
    summaries
        .iter()
        .flat_map(|s| {
            s.records.iter().map(move |r| TidyRow {
                alpha: s.config.alpha,
                gamma: s.config.gamma,
                sign: s.config.sign,
                n: s.config.n,
                n_seeds: s.config.n_seeds,
                rep: r.rep,
                method: r.method.key().to_string(),
                error: r.error,
                objective: r.objective,
                p_clamped: r.p_clamped,
            })
        })
        .collect()
}

/// Writes [`tidy_rows`] as CSV with a header line.
pub fn write_tidy_csv<W: std::io::Write>(summaries: &[ExperimentSummary], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    for row in tidy_rows(summaries) {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}
