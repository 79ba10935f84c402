//! Generalized linear model of the observed graph on the reference graph and
//! covariates, fitted on the seed block and extrapolated to every pair.
//!
//! The loss over the fitting rows is
//! `L(θ) = Σ { -b_ij xᵀθ + ψ(xᵀθ) }` with `ψ' = μ`, so that
//! `∇L = Σ -(b_ij - μ(xᵀθ)) x` and `∇²L = Σ μ'(xᵀθ) x xᵀ`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariates::{CovariateBundle, DesignRow, DesignScaling};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Inverse link (mean function) of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    /// `μ(t) = t`, `ψ(t) = t²/2`.
    Identity,
    /// `μ(t) = eᵗ/(1+eᵗ)`, `ψ(t) = log(1+eᵗ)`.
    Logit,
}

impl LinkKind {
    #[inline]
    pub fn mean(self, t: f64) -> f64 {
        match self {
            LinkKind::Identity => t,
            LinkKind::Logit => {
                if t >= 0.0 {
                    1.0 / (1.0 + (-t).exp())
                } else {
                    let e = t.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Derivative of the mean function.
    #[inline]
    pub fn mean_deriv(self, t: f64) -> f64 {
        match self {
            LinkKind::Identity => 1.0,
            LinkKind::Logit => {
                let m = self.mean(t);
                m * (1.0 - m)
            }
        }
    }

    /// Cumulant function ψ.
    #[inline]
    pub fn cumulant(self, t: f64) -> f64 {
        match self {
            LinkKind::Identity => 0.5 * t * t,
            LinkKind::Logit => {
                if t > 0.0 {
                    t + (-t).exp().ln_1p()
                } else {
                    t.exp().ln_1p()
                }
            }
        }
    }
}

impl std::str::FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(Self::Identity),
            "logit" | "logistic" => Ok(Self::Logit),
            other => Err(Error::InvalidOptions(format!("unknown link `{other}`"))),
        }
    }
}

impl std::fmt::Display for LinkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LinkKind::Identity => "identity",
            LinkKind::Logit => "logit",
        })
    }
}

/// A fitting row: design vector and binary response.
pub type Observation = (DesignRow, f64);

fn check_rows(theta: &[f64], rows: &[Observation]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InsufficientSeeds {
            available: 0,
            required: theta.len(),
        });
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("coefficients"));
    }
    for (x, y) in rows {
        if x.dim() != theta.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                actual: x.dim(),
            });
        }
        if !y.is_finite() || x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design rows"));
        }
    }
    Ok(())
}

pub fn glm_loss(theta: &[f64], rows: &[Observation], link: LinkKind) -> Result<f64> {
    check_rows(theta, rows)?;
    let loss = loss_unchecked(theta, rows, link);
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    Ok(loss)
}

fn loss_unchecked(theta: &[f64], rows: &[Observation], link: LinkKind) -> f64 {
    rows.iter()
        .map(|(x, y)| {
            let eta = x.dot(theta);
            -y * eta + link.cumulant(eta)
        })
        .sum()
}

pub fn glm_gradient_hessian(
    theta: &[f64],
    rows: &[Observation],
    link: LinkKind,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_rows(theta, rows)?;
    Ok(grad_hess_unchecked(theta, rows, link))
}

fn grad_hess_unchecked(
    theta: &[f64],
    rows: &[Observation],
    link: LinkKind,
) -> (DVector<f64>, DMatrix<f64>) {
    let d = theta.len();
    let mut grad = DVector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for (x, y) in rows {
        let x = x.as_slice();
        let eta: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
        let resid = link.mean(eta) - y;
        let w = link.mean_deriv(eta);
        for a in 0..d {
            grad[a] += resid * x[a];
            let wx = w * x[a];
            for b in 0..=a {
                hess[(a, b)] += wx * x[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            hess[(b, a)] = hess[(a, b)];
        }
    }
    (grad, hess)
}

/// Reciprocal condition number below which a (scaled) Hessian counts as singular.
const RCOND_MIN: f64 = 1e-7;

/// Hessian factored after symmetric Jacobi scaling `S H S`, `S = diag(H)^-1/2`,
/// so the singularity test does not depend on covariate units.
struct ScaledFactor {
    scale: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    ridge_used: bool,
}

impl ScaledFactor {
    /// Factors `h`, retrying once with a ridge of `1e-8 * trace / d` on the
    /// scaled matrix. Fails when both attempts are numerically singular.
    fn new(h: &DMatrix<f64>) -> Option<Self> {
        let d = h.nrows();
        let diag = h.diagonal();
        if diag
            .iter()
            .any(|v| v.is_nan() || *v <= 0.0 || v.is_infinite())
        {
            return None;
        }
        let scale = diag.map(|v| 1.0 / v.sqrt());
        let hs = DMatrix::from_fn(d, d, |i, j| scale[i] * h[(i, j)] * scale[j]);
        let ridge = 1e-8 * hs.trace() / d as f64;
        for (k, shift) in [0.0, ridge].into_iter().enumerate() {
            let m = &hs + DMatrix::identity(d, d) * shift;
            let eig = m.clone().symmetric_eigenvalues();
            let (lo, hi) = (eig.min(), eig.max());
            if hi > 0.0 && lo / hi >= RCOND_MIN {
                if let Some(chol) = m.cholesky() {
                    return Some(Self {
                        scale,
                        chol,
                        ridge_used: k > 0,
                    });
                }
            }
        }
        None
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let z = self.chol.solve(&rhs.component_mul(&self.scale));
        z.component_mul(&self.scale)
    }

    fn inverse_diagonal(&self) -> DVector<f64> {
        let inv = self.chol.inverse();
        DVector::from_fn(self.scale.len(), |k, _| {
            inv[(k, k)] * self.scale[k] * self.scale[k]
        })
    }
}

/// Optimizer settings for [`fit_glm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Divide each non-intercept column by its max absolute value before fitting.
    pub standardize: bool,
    /// Bound on `‖θ‖∞` for the logistic link; reaching it flags separation.
    pub coef_cap: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iter: 100,
            standardize: false,
            coef_cap: 30.0,
        }
    }
}

/// Fitted coefficients and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub link: LinkKind,
    /// Coefficients in original design units.
    pub theta: Vec<f64>,
    /// Coefficients on standardized columns, when standardization was on.
    pub scaled_theta: Option<Vec<f64>>,
    pub loss_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub std_errors: Option<Vec<f64>>,
    pub separation: bool,
    pub ridge_used: bool,
}

impl GlmFit {
    /// A fit with fixed coefficients, e.g. to force a reduction in tests.
    pub fn fixed(link: LinkKind, theta: Vec<f64>) -> Self {
        Self {
            link,
            theta,
            scaled_theta: None,
            loss_trace: Vec::new(),
            converged: true,
            iterations: 0,
            std_errors: None,
            separation: false,
            ridge_used: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Minimizes the GLM loss over `rows`.
///
/// The identity link is solved through the normal equations. The logistic
/// link uses Newton-Raphson with step halving, starting from zero.
pub fn fit_glm(rows: &[Observation], link: LinkKind, opts: &FitOptions) -> Result<GlmFit> {
    let d = rows.first().map(|(x, _)| x.dim()).unwrap_or(0);
    if rows.len() < d.max(1) {
        return Err(Error::InsufficientSeeds {
            available: rows.len(),
            required: d.max(1),
        });
    }
    if opts.max_iter == 0
        || opts.grad_tol.is_nan()
        || opts.grad_tol <= 0.0
        || opts.coef_cap.is_nan()
        || opts.coef_cap <= 0.0
    {
        return Err(Error::InvalidOptions("fit options must be positive".into()));
    }
    check_rows(&vec![0.0; d], rows)?;

    let scaling = opts
        .standardize
        .then(|| DesignScaling::from_rows(d, rows.iter().map(|(x, _)| x)));
    let scaled: Vec<Observation>;
    let work: &[Observation] = match &scaling {
        Some(sc) => {
            scaled = rows.iter().map(|(x, y)| (sc.scale_row(x), *y)).collect();
            &scaled
        }
        None => rows,
    };

    let mut fit = match link {
        LinkKind::Identity => fit_least_squares(work, d)?,
        LinkKind::Logit => fit_logistic(work, d, opts)?,
    };

    fit.std_errors = standard_errors(work, &fit);
    if let Some(sc) = scaling {
        fit.scaled_theta = Some(fit.theta.clone());
        fit.theta = sc.unscale_coefficients(&fit.theta);
        fit.std_errors = fit.std_errors.map(|se| sc.unscale_coefficients(&se));
    }
    Ok(fit)
}

fn fit_least_squares(rows: &[Observation], d: usize) -> Result<GlmFit> {
    let zero = vec![0.0; d];
    let (grad, hess) = grad_hess_unchecked(&zero, rows, LinkKind::Identity);
    // at θ = 0 the gradient is -Xᵀy, so the normal equations read H θ = -g
    let factor = ScaledFactor::new(&hess).ok_or(Error::SingularHessian)?;
    let ridge_used = factor.ridge_used;
    let theta = factor.solve(&(-grad));
    let theta: Vec<f64> = theta.iter().copied().collect();
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::SingularHessian);
    }
    let start = loss_unchecked(&zero, rows, LinkKind::Identity);
    let end = loss_unchecked(&theta, rows, LinkKind::Identity);
    if !end.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    Ok(GlmFit {
        link: LinkKind::Identity,
        theta,
        scaled_theta: None,
        loss_trace: vec![start, end],
        converged: true,
        iterations: 1,
        std_errors: None,
        separation: false,
        ridge_used,
    })
}

fn fit_logistic(rows: &[Observation], d: usize, opts: &FitOptions) -> Result<GlmFit> {
    let link = LinkKind::Logit;
    let mut theta = vec![0.0; d];
    let mut loss = loss_unchecked(&theta, rows, link);
    let mut trace = vec![loss];
    let mut converged = false;
    let mut separation = false;
    let mut ridge_used = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let (grad, hess) = grad_hess_unchecked(&theta, rows, link);
        let factor = ScaledFactor::new(&hess);
        if iterations == 0 && factor.is_none() {
            // at θ = 0 the Hessian is XᵀX / 4; singular means collinear columns
            return Err(Error::SingularHessian);
        }
        if grad.amax() <= opts.grad_tol {
            converged = true;
            break;
        }
        let Some(factor) = factor else {
            // the Hessian only degenerates away from zero when fitted means saturate
            separation = true;
            break;
        };
        ridge_used |= factor.ridge_used;
        let step = factor.solve(&(-&grad));
        iterations += 1;

        // near the optimum the predicted decrease drops below the rounding
        // error of the summed loss, so loss comparisons stop being informative
        let predicted = -0.5 * grad.dot(&step);
        if predicted.abs() <= 1e-12 * (1.0 + loss.abs()) {
            for (t, s) in theta.iter_mut().zip(step.iter()) {
                *t += s;
            }
            loss = loss_unchecked(&theta, rows, link);
            trace.push(loss);
            continue;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(a, s)| a + t * s)
                .collect();
            let cand_loss = loss_unchecked(&cand, rows, link);
            if cand_loss.is_finite() && cand_loss <= loss {
                accepted = Some((cand, cand_loss));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_loss)) = accepted else {
            // no descent along the Newton direction; the gradient is at rounding level
            converged = grad_at(&theta, rows, link) <= opts.grad_tol.sqrt();
            break;
        };
        theta = cand;
        loss = cand_loss;
        trace.push(loss);

        if theta.iter().any(|v| v.abs() >= opts.coef_cap) {
            separation = true;
            break;
        }
    }

    if separation {
        for v in theta.iter_mut() {
            *v = v.clamp(-opts.coef_cap, opts.coef_cap);
        }
        converged = false;
        warn!(
            "logistic fit hit the coefficient cap {}; seed block looks separable",
            opts.coef_cap
        );
    } else if !converged && iterations >= opts.max_iter {
        warn!(
            "logistic fit did not converge in {} iterations",
            opts.max_iter
        );
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }

    Ok(GlmFit {
        link,
        theta,
        scaled_theta: None,
        loss_trace: trace,
        converged,
        iterations,
        std_errors: None,
        separation,
        ridge_used,
    })
}

fn grad_at(theta: &[f64], rows: &[Observation], link: LinkKind) -> f64 {
    grad_hess_unchecked(theta, rows, link).0.amax()
}

/// Square roots of the diagonal of the inverse Hessian at the fit.
///
/// For the identity link the inverse Hessian is scaled by the residual
/// variance estimate `RSS / (m - d)`.
fn standard_errors(rows: &[Observation], fit: &GlmFit) -> Option<Vec<f64>> {
    if fit.separation {
        return None;
    }
    let (_, hess) = grad_hess_unchecked(&fit.theta, rows, fit.link);
    let inv_diag = ScaledFactor::new(&hess)?.inverse_diagonal();
    let scale = match fit.link {
        LinkKind::Logit => 1.0,
        LinkKind::Identity => {
            let (m, d) = (rows.len(), fit.theta.len());
            if m <= d {
                return None;
            }
            let rss: f64 = rows
                .iter()
                .map(|(x, y)| (y - x.dot(&fit.theta)).powi(2))
                .sum();
            rss / (m - d) as f64
        }
    };
    let se: Vec<f64> = inv_diag
        .iter()
        .map(|v| (v * scale).max(0.0).sqrt())
        .collect();
    se.iter().all(|v| v.is_finite()).then_some(se)
}

/// Symmetric matrix of edge probabilities with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbMatrix {
    values: DMatrix<f64>,
    /// Unordered pairs whose raw value fell outside `[0, 1]`.
    clamped: usize,
}

impl ProbMatrix {
    /// Validates symmetry, zero diagonal and the `[0, 1]` range.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: values.ncols(),
            });
        }
        for i in 0..n {
            if values[(i, i)] != 0.0 {
                return Err(Error::InvalidOptions(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let v = values[(i, j)];
                if !(0.0..=1.0).contains(&v) || v != values[(j, i)] {
                    return Err(Error::InvalidOptions(format!(
                        "entry ({i}, {j}) is not a symmetric probability"
                    )));
                }
            }
        }
        Ok(Self { values, clamped: 0 })
    }

    /// Builds from raw lower-triangle values, clamping into `[0, 1]`.
    pub fn from_raw<F>(n: usize, mut raw: F) -> Self
    where
        F: FnMut(usize, usize) -> f64,
    {
        let mut values = DMatrix::zeros(n, n);
        let mut clamped = 0;
        for i in 0..n {
            for j in 0..i {
                let v = raw(i, j);
                let c = v.clamp(0.0, 1.0);
                if c != v {
                    clamped += 1;
                }
                values[(i, j)] = c;
                values[(j, i)] = c;
            }
        }
        Self { values, clamped }
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn clamped(&self) -> usize {
        self.clamped
    }
}

/// Applies a fit to every off-diagonal pair of `a`.
///
/// Identity-link predictions outside `[0, 1]` are clamped and counted.
pub fn predict_prob_matrix(fit: &GlmFit, a: &Graph, c: &CovariateBundle) -> Result<ProbMatrix> {
    if a.n() != c.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            actual: c.n(),
        });
    }
    if fit.dim() != c.design_dim() {
        return Err(Error::DimensionMismatch {
            expected: c.design_dim(),
            actual: fit.dim(),
        });
    }
    if fit.theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("coefficients"));
    }
    let mut row = vec![0.0; c.design_dim()];
    let p = ProbMatrix::from_raw(a.n(), |i, j| {
        c.fill_row(a, i, j, &mut row);
        let eta: f64 = row.iter().zip(&fit.theta).map(|(x, t)| x * t).sum();
        fit.link.mean(eta)
    });
    if p.clamped > 0 {
        log::debug!("clamped {} predicted probabilities into [0, 1]", p.clamped);
    }
    Ok(p)
}
