//! The GML estimator (reweighted sparse dual iterations) and the ME and
//! GML-AR configurations built from the same pieces.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqgrid::{eval_matrix, eval_scalar, EdgeSet, FrequencyGrid, MatrixTrigPoly};
use crate::linalg;
use crate::model::ArmaGraphicalModel;
use crate::moments::{LagWindow, MomentEstimates, TimeSeries};
use crate::objectives::{dual_j, ell_tilde, q_group, DualPoint, GammaWeights, ProblemData};
use crate::solver::{solve_regularized_dual, solve_sparse_dual, SolveReport, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmlConfig {
    pub lambda: f64,
    /// Prior rate `ε` of the hyperparameters.
    pub eps_prior: f64,
    /// Stop when the coefficient-norm change of `Q` falls below this.
    pub stop_eps: f64,
    /// Relative threshold on `q_jh` for declaring an edge.
    pub support_tau: f64,
    pub max_outer: usize,
    pub n_p: usize,
    pub n_q: usize,
    /// `α̂` falls back to one when the mismatch integral is below this.
    pub alpha_floor: f64,
    pub grid_points: usize,
    /// Lag window length for the periodogram; `None` means `⌈N^{1/3}⌉`.
    pub window: Option<usize>,
    pub lag_window: LagWindow,
    pub solver: SolverConfig,
}

impl Default for GmlConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            eps_prior: 1e-4,
            stop_eps: 1e-8,
            support_tau: 1e-3,
            max_outer: 50,
            n_p: 2,
            n_q: 2,
            alpha_floor: 1e-8,
            grid_points: crate::freqgrid::DEFAULT_GRID_POINTS,
            window: None,
            lag_window: LagWindow::Bartlett,
            solver: SolverConfig::default(),
        }
    }
}

impl GmlConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lambda, self.eps_prior, self.stop_eps, self.support_tau, self.alpha_floor];
        if positive.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(
                "lambda, eps_prior, stop_eps, support_tau and alpha_floor must be positive".into(),
            ));
        }
        if self.support_tau >= 1.0 {
            return Err(Error::InvalidInput("support_tau must be below 1".into()));
        }
        if self.window == Some(0) {
            return Err(Error::InvalidInput("window must be positive".into()));
        }
        FrequencyGrid::new(self.grid_points)?.validate_degree(self.n_p.max(self.n_q))?;
        self.solver.validate()
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.grid_points)
    }

    /// Moment estimates of a series with this configuration's degrees and
    /// window.
    pub fn moments(&self, y: &TimeSeries) -> Result<MomentEstimates> {
        MomentEstimates::from_series(y, self.n_q, self.n_p, self.window, &self.grid()?, self.lag_window)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// True when the ratio was unusable and one was returned instead.
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmlReport {
    pub outer_iterations: usize,
    /// `ℓ̃(p̂^(l), Q̂^(l), α̂, γ̂^(l+1))` for `l = 1, 2, ...`.
    pub ell_tilde: Vec<f64>,
    /// `‖Q̂^(l) − Q̂^(l−1)‖` for `l = 1, 2, ...`.
    pub q_changes: Vec<f64>,
    pub alpha: Option<AlphaEstimate>,
    /// Final hyperparameters as a lower triangle, row by row (`j ≥ h`).
    pub gamma: Vec<f64>,
    /// Estimated edges, 1-indexed `[j, h]` with `j ≤ h`.
    pub support: Vec<[usize; 2]>,
    pub support_tau: f64,
    pub initial: SolveReport,
    pub inner: Vec<SolveReport>,
    pub converged: bool,
}

/// `α̂ = J(p⁰,Q⁰) / ∫[log det(p⁰(Q⁰Φ̂_P)⁻¹) + tr(Q⁰Φ̂_P)/p⁰ − m]`.
pub fn estimate_alpha(x0: &DualPoint, data: &ProblemData, alpha_floor: f64) -> Result<AlphaEstimate> {
    let phi = data.require_phi_p()?;
    let grid = phi.grid;
    let pv = eval_scalar(&x0.p, &grid);
    let qv = eval_matrix(&x0.q, &grid);
    let m = x0.dim() as f64;
    let mut acc = 0.0;
    for (j, ((p, q), f)) in pv.iter().zip(&qv.values).zip(&phi.values).enumerate() {
        if !(*p > 0.0) {
            return Err(Error::Infeasible(format!("p ≤ 0 at grid index {j}")));
        }
        let ldq = linalg::hermitian_logdet(q).ok_or_else(|| Error::Infeasible(format!("Q not PD at {j}")))?;
        let ldf = linalg::hermitian_logdet(f).ok_or(Error::NotPositiveDefinite { index: j })?;
        acc += m * p.ln() - ldq - ldf + (q * f).trace().re / p - m;
    }
    let denominator = acc / grid.len() as f64;
    let numerator = dual_j(x0, data)?;
    let ratio = numerator / denominator;
    if denominator < alpha_floor || !(ratio > alpha_floor) || !ratio.is_finite() {
        warn!("alpha estimate unusable (J = {numerator:e}, mismatch = {denominator:e}); using 1");
        return Ok(AlphaEstimate { value: 1.0, numerator, denominator, fallback: true });
    }
    Ok(AlphaEstimate { value: ratio, numerator, denominator, fallback: false })
}

/// Closed-form minimizer of `ℓ̃` over the hyperparameters.
pub fn update_gamma(q: &MatrixTrigPoly, n: usize, eps_prior: f64) -> GammaWeights {
    GammaWeights::from_fn(q.dim(), |j, h| {
        let count = if j == h { n + 1 } else { 2 * n + 1 } as f64;
        count / (q_group(q, j, h) + eps_prior)
    })
}

/// Edges whose group magnitude exceeds `tau` times the largest off-diagonal
/// group magnitude. The diagonal is always present.
pub fn support_extract(q: &MatrixTrigPoly, tau: f64) -> EdgeSet {
    let m = q.dim();
    let mut e = EdgeSet::empty(m);
    let mut biggest = 0.0f64;
    for j in 0..m {
        for h in 0..j {
            biggest = biggest.max(q_group(q, j, h));
        }
    }
    if biggest == 0.0 {
        return e;
    }
    for j in 0..m {
        for h in 0..j {
            if q_group(q, j, h) > tau * biggest {
                e.insert(j, h);
            }
        }
    }
    e
}

/// Full-graph problem data for a configuration's degrees and `λ`.
pub fn problem_data(est: &MomentEstimates, cfg: &GmlConfig) -> Result<ProblemData> {
    if est.r.order() < cfg.n_q || est.c.order() < cfg.n_p {
        return Err(Error::InvalidInput(format!(
            "moments available up to n_q={}, n_p={}; configuration needs n_q={}, n_p={}",
            est.r.order(),
            est.c.order(),
            cfg.n_q,
            cfg.n_p
        )));
    }
    let m = est.r.dim();
    let mut data = ProblemData::from_estimates(est, EdgeSet::full(m), cfg.lambda)?;
    data.r = data.r.truncated(cfg.n_q);
    data.c = data.c.truncated(cfg.n_p);
    Ok(data)
}

fn finish_model(x: DualPoint, edges: EdgeSet, cfg: &GmlConfig, method: &str) -> Result<ArmaGraphicalModel> {
    let mut model = ArmaGraphicalModel::new(x.p, x.q, edges)?;
    model.lambda = Some(cfg.lambda);
    model.provenance.insert("method".into(), method.into());
    model.provenance.insert("n_p".into(), cfg.n_p.into());
    model.provenance.insert("n_q".into(), cfg.n_q.into());
    model.provenance.insert("grid_points".into(), cfg.grid_points.into());
    Ok(model)
}

fn lower_triangle(g: &GammaWeights) -> Vec<f64> {
    g.values().to_vec()
}

/// Runs the GML iterations on precomputed moments.
pub fn gml_estimate(est: &MomentEstimates, cfg: &GmlConfig) -> Result<(ArmaGraphicalModel, GmlReport)> {
    gml_estimate_named(est, cfg, "gml")
}

fn gml_estimate_named(est: &MomentEstimates, cfg: &GmlConfig, method: &str) -> Result<(ArmaGraphicalModel, GmlReport)> {
    cfg.validate()?;
    let data = problem_data(est, cfg)?;
    let (x0, initial) = solve_regularized_dual(&data, None, &cfg.solver)?;
    if cfg.max_outer == 0 {
        let support = support_extract(&x0.q, cfg.support_tau);
        let report = GmlReport {
            outer_iterations: 0,
            ell_tilde: Vec::new(),
            q_changes: Vec::new(),
            alpha: None,
            gamma: Vec::new(),
            support: one_based(&support),
            support_tau: cfg.support_tau,
            converged: initial.converged,
            initial,
            inner: Vec::new(),
        };
        return Ok((finish_model(x0, support, cfg, method)?, report));
    }

    let alpha = estimate_alpha(&x0, &data, cfg.alpha_floor)?;
    let n_obs = est.n_obs;
    let mut gamma = GammaWeights::zeros(data.dim());
    let mut prev = x0;
    let mut inner = Vec::new();
    let mut ell = Vec::new();
    let mut changes = Vec::new();
    let mut converged = false;
    let mut all_inner_converged = initial.converged;
    for l in 1..=cfg.max_outer {
        let (x, rep) = solve_sparse_dual(&data, &gamma, alpha.value, n_obs, Some(&prev), &cfg.solver)?;
        all_inner_converged &= rep.converged;
        inner.push(rep);
        gamma = update_gamma(&x.q, cfg.n_q, cfg.eps_prior);
        ell.push(ell_tilde(&x, &data, alpha.value, &gamma, cfg.eps_prior)?);
        let change = x.q.distance(&prev.q);
        changes.push(change);
        debug!("outer {l}: change {change:.3e} ell {:.12e}", ell[ell.len() - 1]);
        prev = x;
        // with γ = 0 the first pass can reproduce the start exactly (always
        // when p ≡ 1), so only a reweighted pass may end the loop
        if l >= 2 && change <= cfg.stop_eps {
            converged = true;
            break;
        }
    }
    let support = support_extract(&prev.q, cfg.support_tau);
    let report = GmlReport {
        outer_iterations: inner.len(),
        ell_tilde: ell,
        q_changes: changes,
        alpha: Some(alpha),
        gamma: lower_triangle(&gamma),
        support: one_based(&support),
        support_tau: cfg.support_tau,
        initial,
        inner,
        converged: converged && all_inner_converged,
    };
    let mut model = finish_model(prev, support, cfg, method)?;
    model.provenance.insert("alpha".into(), alpha.value.into());
    Ok((model, report))
}

/// Maximum entropy estimate: one regularized dual solve on the full graph.
pub fn me_estimate(est: &MomentEstimates, cfg: &GmlConfig) -> Result<(ArmaGraphicalModel, GmlReport)> {
    let cfg = GmlConfig { max_outer: 0, ..cfg.clone() };
    gml_estimate_named(est, &cfg, "me")
}

/// GML restricted to AR models (`p ≡ 1`).
pub fn gml_ar_estimate(est: &MomentEstimates, cfg: &GmlConfig) -> Result<(ArmaGraphicalModel, GmlReport)> {
    let cfg = GmlConfig { n_p: 0, ..cfg.clone() };
    gml_estimate_named(est, &cfg, "gml-ar")
}

/// Estimator selector shared by the CLI and the benchmark harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Me,
    Gml,
    GmlAr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Me => "me",
            Method::Gml => "gml",
            Method::GmlAr => "gml-ar",
        }
    }

    pub fn run(self, est: &MomentEstimates, cfg: &GmlConfig) -> Result<(ArmaGraphicalModel, GmlReport)> {
        match self {
            Method::Me => me_estimate(est, cfg),
            Method::Gml => gml_estimate(est, cfg),
            Method::GmlAr => gml_ar_estimate(est, cfg),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "me" => Ok(Method::Me),
            "gml" => Ok(Method::Gml),
            "gml-ar" => Ok(Method::GmlAr),
            other => Err(Error::InvalidInput(format!("unknown method '{other}' (expected me, gml or gml-ar)"))),
        }
    }
}

fn one_based(e: &EdgeSet) -> Vec<[usize; 2]> {
    let m = e.dim();
    let mut out = Vec::new();
    for j in 0..m {
        for h in j..m {
            if e.contains(j, h) {
                out.push([j + 1, h + 1]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn gamma_for_zero_groups() {
        let q = MatrixTrigPoly::new(DMatrix::zeros(2, 2), vec![DMatrix::zeros(2, 2); 2], None).unwrap();
        let g = update_gamma(&q, 2, 1e-4);
        assert!((g.get(0, 0) - 30000.0).abs() < 1e-8);
        assert!((g.get(1, 0) - 50000.0).abs() < 1e-8);
    }

    #[test]
    fn support_rules() {
        let mut q = MatrixTrigPoly::identity(3);
        assert_eq!(support_extract(&q, 1e-3), EdgeSet::empty(3));
        q.q0[(1, 0)] = 0.5;
        q.q0[(0, 1)] = 0.5;
        q.q0[(2, 1)] = 1e-5;
        q.q0[(1, 2)] = 1e-5;
        let e = support_extract(&q, 1e-3);
        assert!(e.contains(0, 1) && !e.contains(1, 2) && !e.contains(0, 2));
        let all = MatrixTrigPoly::new(DMatrix::from_element(3, 3, 1.0), vec![], None).unwrap();
        assert!(support_extract(&all, 1e-3).is_full());
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Me, Method::Gml, Method::GmlAr] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("ar".parse::<Method>().is_err());
    }

    #[test]
    fn config_defaults_validate() {
        GmlConfig::default().validate().unwrap();
        let bad = GmlConfig { support_tau: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
