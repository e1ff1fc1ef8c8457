//! Minimization of the regularized dual and of its group-sparse variant over
//! the open feasibility cone.
//!
//! The default method is a proximal Newton iteration: the exact Hessian
//! gives a quadratic model, the unpenalized `p` block is eliminated in
//! closed form and the remaining penalized problem is solved by accelerated
//! proximal gradient. Every trial step is evaluated on the grid and rejected
//! when it leaves the cone. A plain accelerated proximal-gradient method is
//! available as [`SolverMethod::FirstOrder`].

use std::time::Instant;

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqgrid::{eval_scalar, fourier_coefficient, integrate, rational_spectrum, MatrixTrigPoly, ScalarTrigPoly};
use crate::moments::cepstral_coefficients;
use crate::objectives::{DualPoint, GammaWeights, Group, Objective, ProblemData, SmoothKind, VarLayout};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    #[default]
    Newton,
    FirstOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Sup-norm tolerance on the smooth gradient, or on the unit-step
    /// proximal residual when a penalty is present.
    pub grad_tol: f64,
    pub backtrack: f64,
    pub armijo: f64,
    /// A trial step may lower `min p` over the grid to at most this fraction
    /// of the way towards zero.
    pub feas_shrink: f64,
    pub prox_inner_tol: f64,
    pub method: SolverMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-8,
            backtrack: 0.5,
            armijo: 1e-4,
            feas_shrink: 0.99,
            prox_inner_tol: 1e-10,
            method: SolverMethod::Newton,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iter > 0
            && self.grad_tol > 0.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.feas_shrink > 0.0
            && self.feas_shrink < 1.0
            && self.prox_inner_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid solver configuration: {self:?}")))
        }
    }
}

/// Signed covariance mismatch `∫e^{ikθ}[Φ̂]_{jh} − [R_k]_{jh}` (zero-based indices).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovResidual {
    pub k: usize,
    pub j: usize,
    pub h: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub objective: f64,
    /// Sup-norm of the smooth gradient at the returned point.
    pub grad_norm: f64,
    /// Sup-norm of the unit-step proximal residual (equals `grad_norm`
    /// without penalty).
    pub residual: f64,
    pub cov_residuals: Vec<CovResidual>,
    /// `∫e^{ikθ} log det Φ̂ − c_k − ε_k` for `k = 1..n_p`.
    pub cepstral_residuals: Vec<f64>,
    pub wall_time: f64,
    pub converged: bool,
}

impl SolveReport {
    /// Largest covariance residual scaled by `1 + |R_k[j,h]|`.
    pub fn max_relative_cov_residual(&self, data: &ProblemData) -> f64 {
        self.cov_residuals
            .iter()
            .map(|r| r.value.abs() / (1.0 + data.r.lags[r.k][(r.j, r.h)].abs()))
            .fold(0.0, f64::max)
    }

    pub fn max_cepstral_residual(&self) -> f64 {
        self.cepstral_residuals.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Weighted group max-abs penalty `Σ w_g max_{i∈g} |x_i|`.
#[derive(Clone, Debug)]
pub(crate) struct GroupPenalty {
    groups: Vec<(Vec<usize>, f64)>,
}

impl GroupPenalty {
    pub(crate) fn new(groups: &[Group], gamma: &GammaWeights, scale: f64) -> Self {
        let groups = groups
            .iter()
            .map(|g| (g.indices.clone(), scale * gamma.get(g.j, g.h)))
            .filter(|(idx, w)| *w > 0.0 && !idx.is_empty())
            .collect();
        Self { groups }
    }

    fn is_zero(&self) -> bool {
        self.groups.is_empty()
    }

    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        self.groups.iter().map(|(idx, w)| w * idx.iter().map(|&i| x[i].abs()).fold(0.0, f64::max)).sum()
    }

    /// In-place prox of `t · penalty`, with indices shifted down by `offset`.
    fn prox(&self, v: &mut [f64], t: f64, offset: usize) {
        let mut buf = Vec::new();
        for (idx, w) in &self.groups {
            buf.clear();
            buf.extend(idx.iter().map(|&i| v[i - offset]));
            // prox of r‖·‖∞ is v − proj onto the ℓ1 ball of radius r
            let r = t * w;
            let proj = project_l1_ball(&buf, r);
            for (&i, pz) in idx.iter().zip(proj) {
                v[i - offset] -= pz;
            }
        }
    }
}

/// Euclidean projection onto `{z : ‖z‖₁ ≤ r}`.
fn project_l1_ball(v: &[f64], r: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= r {
        return v.to_vec();
    }
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        cum += ai;
        let t = (cum - r) / (i + 1) as f64;
        if ai > t {
            theta = t;
        } else {
            break;
        }
    }
    v.iter().map(|&x| x.signum() * (x.abs() - theta).max(0.0)).collect()
}

struct Outcome {
    x: Vec<f64>,
    smooth: f64,
    penalty: f64,
    grad: Vec<f64>,
    iterations: usize,
    residual: f64,
    converged: bool,
}

/// State at an accepted point.
struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    h: f64,
    min_p: f64,
}

fn min_p(x: &[f64], layout: &VarLayout, data: &ProblemData) -> f64 {
    let p = ScalarTrigPoly::monic(x[..layout.p_len()].to_vec());
    eval_scalar(&p, &data.grid).into_iter().fold(f64::INFINITY, f64::min)
}

fn evaluate(obj: &Objective, pen: Option<&GroupPenalty>, x: Vec<f64>) -> Result<Point> {
    let mut g = vec![0.0; x.len()];
    let f = obj.eval(&x, Some(&mut g))?;
    let h = pen.map_or(0.0, |p| p.value(&x));
    let mp = min_p(&x, obj.layout(), obj.data());
    Ok(Point { x, f, g, h, min_p: mp })
}

fn prox_residual(pt: &Point, pen: Option<&GroupPenalty>) -> f64 {
    match pen {
        None => sup_norm(&pt.g),
        Some(pen) => {
            let mut z: Vec<f64> = pt.x.iter().zip(&pt.g).map(|(x, g)| x - g).collect();
            pen.prox(&mut z, 1.0, 0);
            pt.x.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        }
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Backtracking along `x + t d` on the composite objective, rejecting points
/// outside the cone or too close to its boundary.
fn line_search(
    obj: &Objective,
    pen: Option<&GroupPenalty>,
    cur: &Point,
    d: &[f64],
    cfg: &SolverConfig,
    iteration: usize,
) -> Result<Point> {
    let h_full = pen.map_or(0.0, |p| {
        let xd: Vec<f64> = cur.x.iter().zip(d).map(|(a, b)| a + b).collect();
        p.value(&xd)
    });
    let delta = dot(&cur.g, d) + h_full - cur.h;
    let f0 = cur.f + cur.h;
    let floor = (1.0 - cfg.feas_shrink) * cur.min_p;
    let mut t = 1.0;
    for _ in 0..200 {
        let xn: Vec<f64> = cur.x.iter().zip(d).map(|(a, b)| a + t * b).collect();
        match evaluate(obj, pen, xn) {
            Ok(pt) if pt.min_p >= floor => {
                let fnew = pt.f + pt.h;
                // relative slack absorbs rounding once the decrease is at machine level
                if fnew <= f0 + cfg.armijo * t * delta + 1e-15 * f0.abs() {
                    return Ok(pt);
                }
            }
            Ok(_) | Err(Error::Infeasible(_)) => {}
            Err(e) => return Err(e),
        }
        t *= cfg.backtrack;
    }
    Err(Error::LineSearch { iteration, reason: format!("no acceptable step (directional decrease {delta:e})") })
}

fn minimize(obj: &Objective, pen: Option<&GroupPenalty>, x0: Vec<f64>, cfg: &SolverConfig) -> Result<Outcome> {
    cfg.validate()?;
    let pen = pen.filter(|p| !p.is_zero());
    let mut cur = evaluate(obj, pen, x0)?;
    let mut residual = prox_residual(&cur, pen);
    let mut inner_warm: Option<Vec<f64>> = None;
    let mut it = 0;
    while it < cfg.max_iter && residual > cfg.grad_tol {
        let d = match cfg.method {
            SolverMethod::Newton => newton_direction(obj, pen, &cur, residual, cfg, &mut inner_warm)?,
            SolverMethod::FirstOrder => first_order_direction(obj, pen, &cur)?,
        };
        let noise = match cfg.method {
            SolverMethod::Newton => noise_floor_step(obj, pen, &cur, &d, cfg, residual)?,
            SolverMethod::FirstOrder => None,
        };
        let next = match noise {
            Some(p) => p,
            None => match line_search(obj, pen, &cur, &d, cfg, it) {
                Ok(p) => p,
                Err(Error::LineSearch { .. }) if cfg.method == SolverMethod::Newton => {
                    // fall back to a scaled proximal-gradient step
                    let d = first_order_direction(obj, pen, &cur)?;
                    line_search(obj, pen, &cur, &d, cfg, it)?
                }
                Err(e) => return Err(e),
            },
        };
        let progress = (cur.f + cur.h) - (next.f + next.h);
        let previous = residual;
        cur = next;
        residual = prox_residual(&cur, pen);
        it += 1;
        debug!("iter {it}: objective {:.15e} residual {residual:.3e}", cur.f + cur.h);
        if progress <= 0.0 && residual >= previous && residual > cfg.grad_tol {
            // no representable decrease left
            break;
        }
    }
    Ok(Outcome {
        converged: residual <= cfg.grad_tol,
        smooth: cur.f,
        penalty: cur.h,
        grad: cur.g,
        x: cur.x,
        iterations: it,
        residual,
    })
}

/// Full Newton step taken when the predicted decrease is below the rounding
/// level of the objective, so Armijo cannot judge it. Accepted only if it
/// stays feasible and lowers the stationarity residual.
fn noise_floor_step(
    obj: &Objective,
    pen: Option<&GroupPenalty>,
    cur: &Point,
    d: &[f64],
    cfg: &SolverConfig,
    residual: f64,
) -> Result<Option<Point>> {
    let h_full = pen.map_or(0.0, |p| {
        let xd: Vec<f64> = cur.x.iter().zip(d).map(|(a, b)| a + b).collect();
        p.value(&xd)
    });
    let delta = dot(&cur.g, d) + h_full - cur.h;
    let f0 = cur.f + cur.h;
    if delta.abs() > 1e-10 * f0.abs().max(1.0) {
        return Ok(None);
    }
    let xn: Vec<f64> = cur.x.iter().zip(d).map(|(a, b)| a + b).collect();
    match evaluate(obj, pen, xn) {
        Ok(pt) if pt.min_p >= (1.0 - cfg.feas_shrink) * cur.min_p && prox_residual(&pt, pen) < residual => Ok(Some(pt)),
        Ok(_) | Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Step of a proximal-gradient iteration with step `1/L`, `L` the largest
/// Hessian eigenvalue estimated by power iteration.
fn first_order_direction(obj: &Objective, pen: Option<&GroupPenalty>, cur: &Point) -> Result<Vec<f64>> {
    let h = obj.hessian(&cur.x)?;
    let l = spectral_bound(&h).max(1e-12);
    let mut z: Vec<f64> = cur.x.iter().zip(&cur.g).map(|(x, g)| x - g / l).collect();
    if let Some(p) = pen {
        p.prox(&mut z, 1.0 / l, 0);
    }
    Ok(z.iter().zip(&cur.x).map(|(a, b)| a - b).collect())
}

fn spectral_bound(h: &DMatrix<f64>) -> f64 {
    // Gershgorin bound: cheap and never below the largest eigenvalue
    (0..h.nrows()).map(|i| h.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn newton_direction(
    obj: &Objective,
    pen: Option<&GroupPenalty>,
    cur: &Point,
    residual: f64,
    cfg: &SolverConfig,
    warm: &mut Option<Vec<f64>>,
) -> Result<Vec<f64>> {
    let mut h = obj.hessian(&cur.x)?;
    let n = h.nrows();
    make_positive_definite(&mut h);
    let g = DVector::from_column_slice(&cur.g);
    let Some(pen) = pen else {
        let chol = h.cholesky().ok_or_else(|| Error::Infeasible("Hessian not positive definite".into()))?;
        return Ok((-chol.solve(&g)).iter().copied().collect());
    };

    // eliminate the unpenalized p block: dp = −H_pp⁻¹ (g_p + H_pq dq)
    let np = obj.layout().p_len();
    let nq = n - np;
    let hpp = h.view((0, 0), (np, np)).into_owned();
    let hpq = h.view((0, np), (np, nq)).into_owned();
    let hqq = h.view((np, np), (nq, nq)).into_owned();
    let gp = g.rows(0, np).into_owned();
    let gq = g.rows(np, nq).into_owned();
    let (hred, gred, pp_chol) = if np > 0 {
        let chol =
            hpp.clone().cholesky().ok_or_else(|| Error::Infeasible("Hessian p-block not positive definite".into()))?;
        let s = chol.solve(&hpq);
        let hred = &hqq - hpq.transpose() * &s;
        let gred = &gq - hpq.transpose() * chol.solve(&gp);
        (hred, gred, Some(chol))
    } else {
        (hqq, gq, None)
    };
    let hred = (&hred + hred.transpose()) * 0.5;
    let l = spectral_bound(&hred).max(1e-300);

    let xq = DVector::from_column_slice(&cur.x[np..]);
    let tol = (0.1 * residual.min(1.0) * residual).max(cfg.prox_inner_tol);
    let dq = fista_quadratic(&hred, &gred, &xq, pen, np, l, tol, warm.as_deref());
    *warm = Some(dq.iter().copied().collect());

    let mut d = vec![0.0; n];
    if let Some(chol) = pp_chol {
        let dp = -chol.solve(&(gp + &hpq * &dq));
        d[..np].copy_from_slice(dp.as_slice());
    }
    d[np..].copy_from_slice(dq.as_slice());
    Ok(d)
}

/// Shifts `h` by a multiple of the identity until a Cholesky factorization
/// succeeds.
fn make_positive_definite(h: &mut DMatrix<f64>) {
    let n = h.nrows();
    let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    if h.clone().cholesky().is_some() {
        return;
    }
    let mut mu = 1e-10 * scale;
    loop {
        let mut t = h.clone();
        for i in 0..n {
            t[(i, i)] += mu;
        }
        if t.clone().cholesky().is_some() {
            *h = t;
            return;
        }
        mu *= 10.0;
    }
}

/// Minimizes `gᵀd + ½ dᵀHd + pen(x + d)` over `d` by FISTA with gradient
/// restarts. Penalty indices are offset by `offset` relative to `x`.
///
/// `H` is typically very ill-conditioned, so FISTA alone stalls. Every few
/// iterations the active structure of the current iterate (zero groups and
/// entries tied at the group maximum) is frozen and the quadratic is
/// minimized exactly on it; the candidate is kept when it is consistent.
#[allow(clippy::too_many_arguments)]
fn fista_quadratic(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    x: &DVector<f64>,
    pen: &GroupPenalty,
    offset: usize,
    l: f64,
    tol: f64,
    warm: Option<&[f64]>,
) -> DVector<f64> {
    const MAX_INNER: usize = 20_000;
    const POLISH_EVERY: usize = 10;
    let n = x.len();
    let step = 1.0 / l;
    let prox_step = |d: &DVector<f64>| -> DVector<f64> {
        let grad = g + h * d;
        let mut z: Vec<f64> = (0..n).map(|i| x[i] + d[i] - step * grad[i]).collect();
        pen.prox(&mut z, step, offset);
        DVector::from_iterator(n, (0..n).map(|i| z[i] - x[i]))
    };
    let model = |d: &DVector<f64>| -> f64 {
        let xd: Vec<f64> = std::iter::repeat_n(0.0, offset).chain((0..n).map(|i| x[i] + d[i])).collect();
        g.dot(d) + 0.5 * d.dot(&(h * d)) + pen.value(&xd)
    };
    let zero = DVector::zeros(n);
    let mut d = match warm {
        Some(w) if w.len() == n => {
            let w = DVector::from_column_slice(w);
            if model(&w) < model(&zero) {
                w
            } else {
                zero
            }
        }
        _ => zero,
    };
    let mut y = d.clone();
    let mut t: f64 = 1.0;
    let mut last_structure: Option<Vec<Slot>> = None;
    for it in 0..MAX_INNER {
        let dn = prox_step(&y);
        let res = (&dn - &y).amax() * l;
        if res <= tol {
            return dn;
        }
        if it % POLISH_EVERY == POLISH_EVERY - 1 {
            let structure = active_structure(pen, offset, &(x + &dn));
            if last_structure.as_ref() != Some(&structure) {
                if let Some(c) = solve_on_structure(h, g, x, pen, offset, &structure) {
                    if (&prox_step(&c) - &c).amax() * l <= tol {
                        return c;
                    }
                    if model(&c) < model(&dn) {
                        d = c.clone();
                        y = c;
                        t = 1.0;
                        last_structure = Some(structure);
                        continue;
                    }
                }
                last_structure = Some(structure);
            }
        }
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if (&y - &dn).dot(&(&dn - &d)) > 0.0 {
            // momentum points uphill: restart
            t = 1.0;
            y = dn.clone();
        } else {
            y = &dn + (&dn - &d) * ((t - 1.0) / tn);
            t = tn;
        }
        d = dn;
    }
    d
}

/// Role of one variable in a frozen active structure.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot {
    Zero,
    Free,
    /// `z_i = sign · t_g` for the group with reduced column `col`.
    Tied {
        group: usize,
        sign: f64,
    },
}

fn active_structure(pen: &GroupPenalty, offset: usize, z: &DVector<f64>) -> Vec<Slot> {
    let mut slots = vec![Slot::Free; z.len()];
    for (gi, (idx, _)) in pen.groups.iter().enumerate() {
        let mx = idx.iter().map(|&i| z[i - offset].abs()).fold(0.0, f64::max);
        for &i in idx {
            let v = z[i - offset];
            slots[i - offset] = if mx == 0.0 {
                Slot::Zero
            } else if v.abs() >= mx * (1.0 - 1e-10) {
                Slot::Tied { group: gi, sign: v.signum() }
            } else {
                Slot::Free
            };
        }
    }
    slots
}

/// Exact minimizer of the model with the structure held fixed, or `None`
/// when the reduced system is singular or its solution violates the
/// structure.
fn solve_on_structure(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    x: &DVector<f64>,
    pen: &GroupPenalty,
    offset: usize,
    slots: &[Slot],
) -> Option<DVector<f64>> {
    let n = x.len();
    // reduced columns: one per free variable, one per nonzero group
    let mut col = vec![usize::MAX; n];
    let mut group_col = vec![usize::MAX; pen.groups.len()];
    let mut ncols = 0;
    for (i, s) in slots.iter().enumerate() {
        match *s {
            Slot::Free => {
                col[i] = ncols;
                ncols += 1;
            }
            Slot::Tied { group, .. } => {
                if group_col[group] == usize::MAX {
                    group_col[group] = ncols;
                    ncols += 1;
                }
                col[i] = group_col[group];
            }
            Slot::Zero => {}
        }
    }
    if ncols == 0 {
        return Some(-x);
    }
    // B maps reduced variables to z = x + d
    let mut b = DMatrix::zeros(n, ncols);
    for (i, s) in slots.iter().enumerate() {
        match *s {
            Slot::Free => b[(i, col[i])] = 1.0,
            Slot::Tied { sign, .. } => b[(i, col[i])] = sign,
            Slot::Zero => {}
        }
    }
    let hb = h * &b;
    let a = b.transpose() * &hb;
    let mut rhs = b.transpose() * (h * x - g);
    for (gi, (_, w)) in pen.groups.iter().enumerate() {
        if group_col[gi] != usize::MAX {
            rhs[group_col[gi]] -= w;
        }
    }
    let u = a.cholesky()?.solve(&rhs);
    let z = &b * &u;
    for (gi, (idx, _)) in pen.groups.iter().enumerate() {
        let c = group_col[gi];
        if c == usize::MAX {
            continue;
        }
        let tg = u[c];
        if !(tg > 0.0) || idx.iter().any(|&i| z[i - offset].abs() > tg) {
            return None;
        }
    }
    Some(z - x)
}

/// Default start: `p ≡ 1`, `Q_0 = (R_0 + δI)⁻¹` restricted to the mask (its
/// diagonal if the restriction is not positive definite), `Q_k = 0`.
pub fn initial_point(data: &ProblemData, n_p: usize, n_q: usize) -> Result<DualPoint> {
    let m = data.dim();
    let r0 = &data.r.lags[0];
    let delta = 1e-6 * r0.trace() / m as f64;
    let shifted = r0 + DMatrix::identity(m, m) * delta;
    let inv = shifted
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::InvalidInput("R_0 is not positive definite".into()))?;
    let mut q0 = DMatrix::from_fn(m, m, |a, b| if data.edges.contains(a, b) { inv[(a, b)] } else { 0.0 });
    if q0.clone().cholesky().is_none() {
        q0 = DMatrix::from_fn(m, m, |a, b| if a == b { 1.0 / shifted[(a, a)] } else { 0.0 });
    }
    let qk = vec![DMatrix::zeros(m, m); n_q];
    let mask = if data.edges.is_full() { None } else { Some(data.edges.clone()) };
    DualPoint::new(ScalarTrigPoly::monic(vec![0.0; n_p]), MatrixTrigPoly::new(q0, qk, mask)?)
}

fn start_vector(layout: &VarLayout, data: &ProblemData, x0: Option<&DualPoint>) -> Result<Vec<f64>> {
    let x = match x0 {
        Some(x) => x.clone(),
        None => initial_point(data, layout.n_p(), layout.n_q())?,
    };
    layout.pack(&x)
}

fn build_report(
    data: &ProblemData,
    layout: &VarLayout,
    out: &Outcome,
    reg_weight: f64,
    started: Instant,
) -> Result<(DualPoint, SolveReport)> {
    let x = layout.unpack(&out.x);
    let phi = rational_spectrum(&x.p, &x.q, &data.grid)?;
    let m = data.dim();
    let mut cov_residuals = Vec::new();
    for k in 0..=layout.n_q() {
        let z = fourier_coefficient(&phi, k as i64)?;
        for j in 0..m {
            for h in 0..m {
                if data.edges.contains(j, h) {
                    let value = z[(j, h)].re - data.r.lags[k][(j, h)];
                    cov_residuals.push(CovResidual { k, j, h, value });
                }
            }
        }
    }
    let n_p = layout.n_p();
    let cepstral_residuals = if n_p > 0 {
        let chat = cepstral_coefficients(&phi, n_p)?;
        let pv = eval_scalar(&x.p, &data.grid);
        let thetas = data.grid.thetas();
        (1..=n_p)
            .map(|k| {
                let vals: Vec<f64> = pv.iter().zip(&thetas).map(|(p, t)| (k as f64 * t).cos() / (p * p)).collect();
                let eps = reg_weight * integrate(&vals, &data.grid)?;
                Ok(chat.values[k] - data.c.values[k] - eps)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let report = SolveReport {
        iterations: out.iterations,
        objective: out.smooth + out.penalty,
        grad_norm: sup_norm(&out.grad),
        residual: out.residual,
        cov_residuals,
        cepstral_residuals,
        wall_time: started.elapsed().as_secs_f64(),
        converged: out.converged,
    };
    Ok((x, report))
}

/// Minimizes `J(p,Q) + g_λ(p)` over `p ∈ 𝔅₊ᵒ` and `Q` supported on
/// `data.edges`. The degrees are those of the data (`n_p = data.n_p()`).
pub fn solve_regularized_dual(
    data: &ProblemData,
    x0: Option<&DualPoint>,
    cfg: &SolverConfig,
) -> Result<(DualPoint, SolveReport)> {
    let started = Instant::now();
    let layout = VarLayout::for_data(data);
    let obj = Objective::new(data, layout.clone(), SmoothKind::Dual { reg_scale: 1.0 })?;
    let out = minimize(&obj, None, start_vector(&layout, data, x0)?, cfg)?;
    build_report(data, &layout, &out, data.lambda, started)
}

/// Minimizes `J(p,Q) + (2α/N)[g_λ(p) + h_W(Q)]`.
pub fn solve_sparse_dual(
    data: &ProblemData,
    gamma: &GammaWeights,
    alpha: f64,
    n_obs: usize,
    x0: Option<&DualPoint>,
    cfg: &SolverConfig,
) -> Result<(DualPoint, SolveReport)> {
    if !(alpha > 0.0) || n_obs == 0 {
        return Err(Error::InvalidInput(format!("need alpha > 0 and N > 0, got {alpha} and {n_obs}")));
    }
    if gamma.dim() != data.dim() || gamma.values().iter().any(|&g| !(g >= 0.0)) {
        return Err(Error::InvalidInput("hyperparameters must be nonnegative and match the dimension".into()));
    }
    let started = Instant::now();
    let scale = 2.0 * alpha / n_obs as f64;
    let layout = VarLayout::for_data(data);
    let obj = Objective::new(data, layout.clone(), SmoothKind::Dual { reg_scale: scale })?;
    let pen = GroupPenalty::new(&layout.groups(), gamma, scale);
    let out = minimize(&obj, Some(&pen), start_vector(&layout, data, x0)?, cfg)?;
    build_report(data, &layout, &out, scale * data.lambda, started)
}

/// Local minimizer of the likelihood-based bound: Whittle likelihood plus
/// `g_λ(p) + h_W(Q)`. The problem is not convex; the result depends on the
/// start.
pub fn solve_check(
    data: &ProblemData,
    gamma: &GammaWeights,
    x0: Option<&DualPoint>,
    cfg: &SolverConfig,
) -> Result<(DualPoint, SolveReport)> {
    let started = Instant::now();
    let layout = VarLayout::for_data(data);
    let obj = Objective::new(data, layout.clone(), SmoothKind::Check)?;
    let pen = GroupPenalty::new(&layout.groups(), gamma, 1.0);
    let out = minimize(&obj, Some(&pen), start_vector(&layout, data, x0)?, cfg)?;
    let (x, mut report) = build_report(data, &layout, &out, data.lambda, started)?;
    // stationarity of this problem is not the moment-matching condition
    report.cepstral_residuals.clear();
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_projection() {
        assert_eq!(project_l1_ball(&[0.5, -0.2], 1.0), vec![0.5, -0.2]);
        let p = project_l1_ball(&[3.0, -1.0, 0.5], 2.0);
        assert!((p.iter().map(|v| v.abs()).sum::<f64>() - 2.0).abs() < 1e-14);
        assert!((p[0] - 2.0).abs() < 1e-14 && p[1] == 0.0 && p[2] == 0.0);
        let p = project_l1_ball(&[1.0, 1.0], 1.0);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn max_norm_prox_by_moreau() {
        let groups = vec![Group { j: 1, h: 0, indices: vec![0, 1, 2] }];
        let mut gamma = GammaWeights::zeros(2);
        gamma.set(1, 0, 1.0);
        let pen = GroupPenalty::new(&groups, &gamma, 1.0);
        // prox of ‖·‖∞ clips the largest entries down to a common level
        let mut v = vec![3.0, -1.0, 0.5];
        pen.prox(&mut v, 1.0, 0);
        assert_eq!(v, vec![2.0, -1.0, 0.5]);
        let mut v = vec![0.3, -0.2, 0.1];
        pen.prox(&mut v, 1.0, 0);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { backtrack: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let json = serde_json::to_string(&SolverConfig::default()).unwrap();
        let back: SolverConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, SolverConfig::default());
        assert!(serde_json::from_str::<SolverConfig>(r#"{"max_iters": 3}"#).is_err());
    }
}
