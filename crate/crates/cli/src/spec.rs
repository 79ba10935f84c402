//! Run configurations for the `match` and `simulate` commands, readable from
//! TOML files.

use std::path::{Path, PathBuf};

use covmatch::matchers::{MatchConfig, Method};
use covmatch::simulate::{Setup, SimConfig};
use covmatch::{FaqInit, FaqOptions, FitOptions, LinkKind, TransformKind};
use serde::{Deserialize, Serialize};

use crate::io::InputFiles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    #[default]
    Barycenter,
    Randomized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FaqSettings {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub init: InitKind,
    pub rng_seed: u64,
}

impl Default for FaqSettings {
    fn default() -> Self {
        let d = FaqOptions::default();
        Self {
            max_iter: d.max_iter,
            rel_tol: d.rel_tol,
            init: InitKind::Barycenter,
            rng_seed: d.rng_seed,
        }
    }
}

impl FaqSettings {
    pub fn options(&self) -> FaqOptions {
        FaqOptions {
            max_iter: self.max_iter,
            rel_tol: self.rel_tol,
            init: match self.init {
                InitKind::Barycenter => FaqInit::Barycenter,
                InitKind::Randomized => FaqInit::Randomized,
            },
            rng_seed: self.rng_seed,
        }
    }
}

fn default_link() -> LinkKind {
    LinkKind::Identity
}

/// Everything the `match` command needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchSpec {
    pub graph_a: PathBuf,
    pub graph_b: PathBuf,
    pub seeds: PathBuf,
    #[serde(default)]
    pub edge_covs: Vec<PathBuf>,
    #[serde(default)]
    pub node_covs: Option<PathBuf>,
    #[serde(default)]
    pub transforms: Vec<TransformKind>,
    pub method: Method,
    #[serde(default = "default_link")]
    pub link: LinkKind,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub faq: FaqSettings,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl MatchSpec {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Makes relative input paths relative to `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.graph_a);
        fix(&mut self.graph_b);
        fix(&mut self.seeds);
        self.edge_covs.iter_mut().for_each(fix);
        if let Some(p) = self.node_covs.as_mut() {
            fix(p);
        }
    }

    pub fn files(&self) -> InputFiles {
        InputFiles {
            graph_a: self.graph_a.clone(),
            graph_b: self.graph_b.clone(),
            seeds: self.seeds.clone(),
            edge_covs: self.edge_covs.clone(),
            node_covs: self.node_covs.clone(),
            transforms: self.transforms.clone(),
        }
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            link: self.link,
            fit: FitOptions {
                standardize: self.standardize,
                ..FitOptions::default()
            },
            faq: self.faq.options(),
        }
    }
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_max_iter() -> usize {
    FaqOptions::default().max_iter
}

fn default_rel_tol() -> f64 {
    FaqOptions::default().rel_tol
}

/// A simulation grid over `alphas x gammas`, each point replicated `n_reps` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub n_seeds: usize,
    pub n_reps: usize,
    pub sign: Setup,
    /// Defaults to 0.01 for the easy setup and 0.6 for the difficult one.
    #[serde(default)]
    pub theta0: Option<f64>,
    #[serde(default = "default_link")]
    pub link: LinkKind,
    pub base_rng_seed: u64,
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_max_iter")]
    pub faq_max_iter: usize,
    #[serde(default = "default_rel_tol")]
    pub faq_rel_tol: f64,
}

impl SimulateSpec {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Grid points in row-major `(alpha, gamma)` order, each validated.
    pub fn grid(&self) -> Result<Vec<SimConfig>, String> {
        if self.alphas.is_empty() || self.gammas.is_empty() {
            return Err("alphas and gammas must be non-empty".into());
        }
        if self.methods.is_empty() {
            return Err("methods must be non-empty".into());
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if let Some(v) = self.alphas.iter().chain(&self.gammas).find(|v| !unit(**v)) {
            return Err(format!("grid value {v} outside [0, 1]"));
        }
        let mut out = Vec::new();
        for &alpha in &self.alphas {
            for &gamma in &self.gammas {
                let mut cfg = SimConfig::desk(self.sign, alpha, gamma);
                cfg.n = self.n;
                cfg.p = self.p;
                cfg.q = self.q;
                cfg.n_seeds = self.n_seeds;
                cfg.n_reps = self.n_reps;
                cfg.link = self.link;
                cfg.base_rng_seed = self.base_rng_seed;
                cfg.faq_max_iter = self.faq_max_iter;
                cfg.faq_rel_tol = self.faq_rel_tol;
                if let Some(t) = self.theta0 {
                    cfg.theta0 = t;
                }
                cfg.validate().map_err(|e| e.to_string())?;
                out.push(cfg);
            }
        }
        Ok(out)
    }
}
