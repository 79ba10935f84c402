//! Text formats for graphs, covariates and seeds, and the shared label
//! dictionary that maps them onto contiguous vertex ids.
//!
//! * edge list: one `u v` pair per line, `#` starts a comment, a line with a
//!   single label declares an isolated vertex;
//! * node covariates: CSV with a header, first column is the vertex label;
//! * edge covariates: `u v value` triplets, unlisted pairs are zero;
//! * seeds: two-column CSV `label_a,label_b`, with or without a header.
//!
//! Seeds take ids `0..s` in file order in both graphs. Remaining labels get
//! the following ids in order of first appearance in their edge list.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use covmatch::nalgebra::DMatrix;
use covmatch::{CovariateBundle, Graph, SeedSet, TransformKind};
use log::warn;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InputError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown label `{label}` in {context}")]
    UnknownLabel { label: String, context: String },
    #[error("graph A has {a} vertices but graph B has {b}")]
    CountMismatch { a: usize, b: usize },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] covmatch::Error),
}

type Result<T> = std::result::Result<T, InputError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| InputError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> InputError {
    InputError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Vertex labels of one graph in id order, plus the reverse lookup.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Labels {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Labels {
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (k, name) in names.iter().enumerate() {
            if index.insert(name.clone(), k).is_some() {
                return Err(InputError::Invalid(format!("duplicate label `{name}`")));
            }
        }
        Ok(Self { names, index })
    }

    fn intern(&mut self, name: &str) -> usize {
        if let Some(&k) = self.index.get(name) {
            return k;
        }
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    fn lookup(&self, name: &str, context: &str) -> Result<usize> {
        self.id(name).ok_or_else(|| InputError::UnknownLabel {
            label: name.to_string(),
            context: context.to_string(),
        })
    }
}

/// Vertex declarations and edges of an edge-list file, by label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeList {
    /// Labels in order of first appearance.
    pub labels: Vec<String>,
    pub edges: Vec<(String, String)>,
}

pub fn parse_edge_list(path: &Path) -> Result<EdgeList> {
    let text = read(path)?;
    let mut seen = BTreeSet::new();
    let mut labels = Vec::new();
    let mut known = HashSet::new();
    let mut edges = Vec::new();
    let mut declare = |l: &str, labels: &mut Vec<String>| {
        if known.insert(l.to_string()) {
            labels.push(l.to_string());
        }
    };
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [v] => declare(v, &mut labels),
            [u, v] => {
                if u == v {
                    return Err(parse_err(path, k + 1, format!("self-loop on `{u}`")));
                }
                declare(u, &mut labels);
                declare(v, &mut labels);
                let key = if u < v {
                    (u.to_string(), v.to_string())
                } else {
                    (v.to_string(), u.to_string())
                };
                if seen.insert(key) {
                    edges.push((u.to_string(), v.to_string()));
                } else {
                    warn!(
                        "{}:{}: duplicate edge {u} {v} ignored",
                        path.display(),
                        k + 1
                    );
                }
            }
            _ => return Err(parse_err(path, k + 1, "expected one or two labels")),
        }
    }
    Ok(EdgeList { labels, edges })
}

/// Seed pairs `(label_a, label_b)` in file order.
pub fn parse_seeds(path: &Path) -> Result<Vec<(String, String)>> {
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut pairs = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, k + 1, e.to_string()))?;
        if rec.len() != 2 {
            return Err(parse_err(path, k + 1, "expected two columns"));
        }
        if k == 0 && &rec[0] == "label_a" && &rec[1] == "label_b" {
            continue;
        }
        pairs.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(pairs)
}

/// Node covariate table: column names and one row of values per label.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn parse_node_covariates(path: &Path) -> Result<NodeTable> {
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if header.len() < 2 {
        return Err(parse_err(
            path,
            1,
            "need a label column and at least one covariate",
        ));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
        let values = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| parse_err(path, line, format!("bad number `{v}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((rec[0].to_string(), values));
    }
    Ok(NodeTable { columns, rows })
}

pub fn parse_edge_covariate(path: &Path) -> Result<Vec<(String, String, f64)>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [u, v, x] = fields.as_slice() else {
            return Err(parse_err(path, k + 1, "expected `u v value`"));
        };
        let x = x
            .parse::<f64>()
            .map_err(|_| parse_err(path, k + 1, format!("bad number `{x}`")))?;
        out.push((u.to_string(), v.to_string(), x));
    }
    Ok(out)
}

/// File locations of one matching problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputFiles {
    pub graph_a: PathBuf,
    pub graph_b: PathBuf,
    pub seeds: PathBuf,
    pub edge_covs: Vec<PathBuf>,
    pub node_covs: Option<PathBuf>,
    /// One per node covariate column; missing entries default to absolute difference.
    pub transforms: Vec<TransformKind>,
}

/// A matching problem on contiguous ids, with the labels to translate back.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub labels_a: Labels,
    pub labels_b: Labels,
    pub a: Graph,
    pub b: Graph,
    pub covariates: CovariateBundle,
    pub seeds: SeedSet,
}

fn dictionary(list: &EdgeList, seeds: impl Iterator<Item = String>) -> Labels {
    let mut labels = Labels::default();
    for s in seeds {
        labels.intern(&s);
    }
    for l in &list.labels {
        labels.intern(l);
    }
    labels
}

fn build_graph(list: &EdgeList, labels: &Labels) -> Result<Graph> {
    let edges = list
        .edges
        .iter()
        .map(|(u, v)| {
            Ok((
                labels.lookup(u, "edge list")?,
                labels.lookup(v, "edge list")?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Graph::from_edges(labels.len(), edges)?)
}

pub fn load_inputs(files: &InputFiles) -> Result<Dataset> {
    let list_a = parse_edge_list(&files.graph_a)?;
    let list_b = parse_edge_list(&files.graph_b)?;
    let seed_pairs = parse_seeds(&files.seeds)?;

    let known_a = Labels::from_names(list_a.labels.clone())?;
    let known_b = Labels::from_names(list_b.labels.clone())?;
    let seeds_ctx = files.seeds.display().to_string();
    for (u, v) in &seed_pairs {
        known_a.lookup(u, &format!("{seeds_ctx} (graph A)"))?;
        known_b.lookup(v, &format!("{seeds_ctx} (graph B)"))?;
    }
    let distinct_a: BTreeSet<&str> = seed_pairs.iter().map(|p| p.0.as_str()).collect();
    let distinct_b: BTreeSet<&str> = seed_pairs.iter().map(|p| p.1.as_str()).collect();
    if distinct_a.len() != seed_pairs.len() || distinct_b.len() != seed_pairs.len() {
        return Err(InputError::Invalid(format!(
            "{seeds_ctx}: a label is seeded twice"
        )));
    }
    let labels_a = dictionary(&list_a, seed_pairs.iter().map(|p| p.0.clone()));
    let labels_b = dictionary(&list_b, seed_pairs.iter().map(|p| p.1.clone()));
    if labels_a.len() != labels_b.len() {
        return Err(InputError::CountMismatch {
            a: labels_a.len(),
            b: labels_b.len(),
        });
    }
    let n = labels_a.len();
    let a = build_graph(&list_a, &labels_a)?;
    let b = build_graph(&list_b, &labels_b)?;
    let seeds = SeedSet::first(n, seed_pairs.len())?;

    let mut edge_covs = Vec::new();
    let mut edge_names = Vec::new();
    for path in &files.edge_covs {
        let ctx = path.display().to_string();
        let mut y = DMatrix::<f64>::zeros(n, n);
        let mut set = vec![false; n * n];
        for (u, v, x) in parse_edge_covariate(path)? {
            let (i, j) = (labels_a.lookup(&u, &ctx)?, labels_a.lookup(&v, &ctx)?);
            if i == j {
                if x != 0.0 {
                    return Err(InputError::Invalid(format!(
                        "{ctx}: nonzero diagonal entry for `{u}`"
                    )));
                }
                continue;
            }
            if set[i * n + j] && y[(i, j)] != x {
                return Err(InputError::Invalid(format!(
                    "{ctx}: asymmetric or conflicting values for pair `{u}`, `{v}`"
                )));
            }
            set[i * n + j] = true;
            set[j * n + i] = true;
            y[(i, j)] = x;
            y[(j, i)] = x;
        }
        edge_covs.push(y);
        edge_names.push(
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| ctx.clone()),
        );
    }

    let (node_covs, transforms, node_names) = match &files.node_covs {
        None => (DMatrix::zeros(n, 0), Vec::new(), Vec::new()),
        Some(path) => {
            let table = parse_node_covariates(path)?;
            let ctx = path.display().to_string();
            let d = table.columns.len();
            let mut z = DMatrix::<f64>::from_element(n, d, f64::NAN);
            for (label, values) in &table.rows {
                let i = labels_a.lookup(label, &ctx)?;
                if values.len() != d {
                    return Err(InputError::Invalid(format!(
                        "{ctx}: row `{label}` has {} values, expected {d}",
                        values.len()
                    )));
                }
                for (k, v) in values.iter().enumerate() {
                    z[(i, k)] = *v;
                }
            }
            if let Some(i) = (0..n).find(|&i| z.row(i).iter().any(|v| v.is_nan())) {
                return Err(InputError::Invalid(format!(
                    "{ctx}: no covariate row for vertex `{}`",
                    labels_a.name(i)
                )));
            }
            if files.transforms.len() > d {
                return Err(InputError::Invalid(format!(
                    "{} transforms given for {d} node covariates",
                    files.transforms.len()
                )));
            }
            let mut transforms = files.transforms.clone();
            transforms.resize(d, TransformKind::AbsDiff);
            (z, transforms, table.columns)
        }
    };
    let covariates = CovariateBundle::new(n, edge_covs, node_covs, transforms)?
        .with_names(edge_names, node_names)?;
    Ok(Dataset {
        labels_a,
        labels_b,
        a,
        b,
        covariates,
        seeds,
    })
}

fn write_edge_list(path: &Path, g: &Graph, labels: &Labels) -> std::io::Result<()> {
    let mut out = String::new();
    for name in labels.names() {
        writeln!(out, "{name}").unwrap();
    }
    for (i, j) in g.edges() {
        writeln!(out, "{} {}", labels.name(i), labels.name(j)).unwrap();
    }
    fs::write(path, out)
}

/// Writes `data` in the input formats under `dir` and returns the file set.
/// Loading the result reproduces `data` exactly when its seeds are the
/// first `s` ids.
pub fn write_dataset(dir: &Path, data: &Dataset) -> std::io::Result<InputFiles> {
    fs::create_dir_all(dir)?;
    let graph_a = dir.join("graph_a.txt");
    let graph_b = dir.join("graph_b.txt");
    write_edge_list(&graph_a, &data.a, &data.labels_a)?;
    write_edge_list(&graph_b, &data.b, &data.labels_b)?;

    let seeds = dir.join("seeds.csv");
    let mut out = String::from("label_a,label_b\n");
    for &s in data.seeds.ids() {
        writeln!(out, "{},{}", data.labels_a.name(s), data.labels_b.name(s)).unwrap();
    }
    fs::write(&seeds, out)?;

    let c = &data.covariates;
    let mut edge_covs = Vec::new();
    for (k, y) in c.edge_covs().iter().enumerate() {
        let path = dir.join(format!("{}.txt", c.edge_names()[k]));
        let mut out = String::new();
        for i in 0..y.nrows() {
            for j in 0..i {
                if y[(i, j)] != 0.0 {
                    writeln!(
                        out,
                        "{} {} {}",
                        data.labels_a.name(i),
                        data.labels_a.name(j),
                        y[(i, j)]
                    )
                    .unwrap();
                }
            }
        }
        fs::write(&path, out)?;
        edge_covs.push(path);
    }

    let node_covs = if c.node_count() > 0 {
        let path = dir.join("node_covariates.csv");
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["label".to_string()];
        header.extend(c.node_names().iter().cloned());
        w.write_record(&header)?;
        let z = c.node_covs();
        for i in 0..z.nrows() {
            let mut rec = vec![data.labels_a.name(i).to_string()];
            rec.extend(z.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Some(path)
    } else {
        None
    };
    Ok(InputFiles {
        graph_a,
        graph_b,
        seeds,
        edge_covs,
        node_covs,
        transforms: c.node_transforms().to_vec(),
    })
}
