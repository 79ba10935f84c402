//! The `match`, `simulate` and `oracle` commands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use covmatch::matchers::{run_method, Method};
use covmatch::nalgebra::DMatrix;
use covmatch::simulate::{run_experiment, write_tidy_csv, ExperimentSummary};
use covmatch::{
    brute_force_lap, brute_force_qap, seeded_faq, CostMatrix, FaqOptions, LinkKind, SeedSet, Sense,
};
use serde::Serialize;

use crate::io::load_inputs;
use crate::output::{tool, write_atomic, write_json_atomic, Tool, SCHEMA_VERSION};
use crate::spec::{MatchSpec, SimulateSpec};

#[derive(Debug, Clone, Serialize)]
pub struct LabelPair {
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub converged: bool,
    pub iterations: usize,
    pub separation: bool,
    pub ridge_used: bool,
    /// Predicted probabilities clamped into `[0, 1]`.
    pub clamped_pairs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedMatch {
    #[serde(flatten)]
    pub spec: MatchSpec,
    pub n: usize,
    pub n_seeds: usize,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchDocument {
    pub schema_version: u32,
    pub tool: Tool,
    pub method: Method,
    pub link: Option<LinkKind>,
    /// One pair per vertex, ordered by position in graph A.
    pub correspondence: Vec<LabelPair>,
    pub coefficients: Option<Vec<Coefficient>>,
    pub fit: Option<FitReport>,
    pub objective: f64,
    pub faq_iterations: Option<usize>,
    pub wall_time: f64,
    pub config: ResolvedMatch,
}

/// Loads the inputs, runs the selected method and builds the output document.
pub fn run_match(spec: &MatchSpec) -> anyhow::Result<MatchDocument> {
    let data = load_inputs(&spec.files()).context("loading inputs")?;
    let cfg = spec.match_config();
    let r = run_method(
        spec.method,
        &data.a,
        &data.b,
        &data.covariates,
        &data.seeds,
        &cfg,
    )
    .with_context(|| format!("running {}", spec.method.key()))?;

    let inv = r.permutation.inverse();
    let correspondence = (0..data.a.n())
        .map(|k| LabelPair {
            a: data.labels_a.name(k).to_string(),
            b: data.labels_b.name(inv.get(k)).to_string(),
        })
        .collect();
    let (coefficients, fit) = match &r.fit {
        Some(f) => {
            let names = data.covariates.design_labels();
            let coefs = names
                .into_iter()
                .enumerate()
                .map(|(k, name)| Coefficient {
                    name,
                    estimate: f.theta[k],
                    std_error: f.std_errors.as_ref().map(|s| s[k]),
                })
                .collect();
            let report = FitReport {
                converged: f.converged,
                iterations: f.iterations,
                separation: f.separation,
                ridge_used: f.ridge_used,
                clamped_pairs: r.clamped,
            };
            (Some(coefs), Some(report))
        }
        None => (None, None),
    };
    Ok(MatchDocument {
        schema_version: SCHEMA_VERSION,
        tool: tool(),
        method: spec.method,
        link: spec.method.uses_glm().then_some(spec.link),
        correspondence,
        coefficients,
        fit,
        objective: r.objective,
        faq_iterations: r.iterations,
        wall_time: r.wall_time,
        config: ResolvedMatch {
            spec: spec.clone(),
            n: data.a.n(),
            n_seeds: data.seeds.len(),
            rng_seed: spec.faq.rng_seed,
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodMeans {
    pub method: Method,
    pub mean_error: f64,
    pub std_error: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub gamma: f64,
    /// `(θ0, θ1, θ2)` of the generating model.
    pub theta: [f64; 3],
    /// Generating probabilities clamped into `[0, 1]`, summed over replications.
    pub p_clamped: usize,
    pub methods: Vec<MethodMeans>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateDocument {
    pub schema_version: u32,
    pub tool: Tool,
    pub config: SimulateSpec,
    pub points: Vec<GridPoint>,
}

#[derive(Debug, Serialize)]
struct TimingRow {
    alpha: f64,
    gamma: f64,
    rep: usize,
    method: &'static str,
    wall_time: f64,
}

/// File names written by [`run_simulate`] inside the output directory.
pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMINGS_FILE: &str = "timings.csv";

pub struct SimulateOutputs {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub timings: Option<PathBuf>,
}

pub fn simulate(spec: &SimulateSpec) -> anyhow::Result<Vec<ExperimentSummary>> {
    let grid = spec
        .grid()
        .map_err(anyhow::Error::msg)
        .context("invalid simulation grid")?;
    grid.iter()
        .map(|cfg| {
            run_experiment(cfg, &spec.methods)
                .with_context(|| format!("simulating alpha = {}, gamma = {}", cfg.alpha, cfg.gamma))
        })
        .collect()
}

pub fn simulate_document(spec: &SimulateSpec, summaries: &[ExperimentSummary]) -> SimulateDocument {
    let points = summaries
        .iter()
        .map(|s| {
            let (t0, t1, t2) = s.config.coefficients();
            let mut clamped = 0;
            let mut last_rep = None;
            for r in &s.records {
                if last_rep != Some(r.rep) {
                    clamped += r.p_clamped;
                    last_rep = Some(r.rep);
                }
            }
            GridPoint {
                alpha: s.config.alpha,
                gamma: s.config.gamma,
                theta: [t0, t1, t2],
                p_clamped: clamped,
                methods: s
                    .methods
                    .iter()
                    .map(|m| MethodMeans {
                        method: m.method,
                        mean_error: m.mean_error,
                        std_error: m.std_error,
                        reps: m.reps,
                    })
                    .collect(),
            }
        })
        .collect();
    SimulateDocument {
        schema_version: SCHEMA_VERSION,
        tool: tool(),
        config: spec.clone(),
        points,
    }
}

/// Runs the grid and writes the tidy CSV, the JSON summary and optionally
/// the timings. Nothing is written unless every grid point succeeded.
pub fn run_simulate(
    spec: &SimulateSpec,
    out_dir: &Path,
    timings: bool,
) -> anyhow::Result<SimulateOutputs> {
    let summaries = simulate(spec)?;
    let mut csv_bytes = Vec::new();
    write_tidy_csv(&summaries, &mut csv_bytes)?;
    let doc = simulate_document(spec, &summaries);
    let timing_bytes = if timings {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &summaries {
            for r in &s.records {
                w.serialize(TimingRow {
                    alpha: s.config.alpha,
                    gamma: s.config.gamma,
                    rep: r.rep,
                    method: r.method.key(),
                    wall_time: r.wall_time,
                })?;
            }
        }
        Some(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
    } else {
        None
    };

    let records = out_dir.join(RECORDS_FILE);
    let summary = out_dir.join(SUMMARY_FILE);
    write_atomic(&records, &csv_bytes).with_context(|| format!("writing {}", records.display()))?;
    write_json_atomic(&summary, &doc).with_context(|| format!("writing {}", summary.display()))?;
    let timings = match timing_bytes {
        Some(bytes) => {
            let path = out_dir.join(TIMINGS_FILE);
            write_atomic(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
            Some(path)
        }
        None => None,
    };
    Ok(SimulateOutputs {
        records,
        summary,
        timings,
    })
}

/// Reads a dense matrix: one row per line, whitespace or comma separated.
pub fn read_matrix(path: &Path) -> anyhow::Result<DMatrix<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .with_context(|| format!("{}:{}: bad number `{t}`", path.display(), k + 1))
            })
            .collect::<anyhow::Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let m = rows.len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        bail!("{}: expected a non-empty square matrix", path.display());
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

#[derive(Debug, Serialize)]
pub struct LapOracle {
    pub sense: Sense,
    pub assignment: Vec<usize>,
    pub objective: f64,
}

pub fn lap_oracle(costs: DMatrix<f64>, sense: Sense) -> anyhow::Result<LapOracle> {
    let c = CostMatrix::new(costs, sense)?;
    let (perm, objective) = brute_force_lap(&c)?;
    Ok(LapOracle {
        sense,
        assignment: perm.into_vec(),
        objective,
    })
}

#[derive(Debug, Serialize)]
pub struct QapOracle {
    pub permutation: Vec<usize>,
    pub objective: f64,
    pub faq_permutation: Vec<usize>,
    pub faq_objective: f64,
}

pub fn qap_oracle(
    p: &DMatrix<f64>,
    b: &DMatrix<f64>,
    seeds: &[usize],
) -> anyhow::Result<QapOracle> {
    let seeds = SeedSet::new(p.nrows(), seeds.to_vec())?;
    let (perm, objective) = brute_force_qap(p, b, &seeds)?;
    let faq = seeded_faq(p, b, &seeds, &FaqOptions::default())?;
    Ok(QapOracle {
        permutation: perm.into_vec(),
        objective,
        faq_permutation: faq.permutation.into_vec(),
        faq_objective: faq.objective,
    })
}
