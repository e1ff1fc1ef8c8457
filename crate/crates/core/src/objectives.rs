//! Dual function, regularizers, sparsity penalty, Whittle likelihood and the
//! two GML upper bounds, with exact gradients of the smooth parts.
//!
//! The free variables of a dual point are `p_1..p_{n_p}` and the entries of
//! `Q_0..Q_{n_q}` allowed by the mask, `Q_0` counted once per symmetric pair.
//! [`VarLayout`] fixes their order in the flat vectors the solvers work on.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::freqgrid::{EdgeSet, FrequencyGrid, MatrixTrigPoly, ScalarTrigPoly, SpectrumGrid};
use crate::linalg;
use crate::moments::{CepstralSeq, CovarianceSeq, MomentEstimates};

/// Lagrange multipliers `(p, Q)` with `p_0 = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPoint {
    pub p: ScalarTrigPoly,
    pub q: MatrixTrigPoly,
}

impl DualPoint {
    pub fn new(p: ScalarTrigPoly, q: MatrixTrigPoly) -> Result<Self> {
        if p.p0 != 1.0 {
            return Err(Error::InvalidInput("dual point requires p0 = 1".into()));
        }
        Ok(Self { p, q })
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }
}

/// Hyperparameters `γ_{jh}`, `j ≥ h`, stored as a lower triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaWeights {
    m: usize,
    values: Vec<f64>,
}

impl GammaWeights {
    pub fn zeros(m: usize) -> Self {
        Self { m, values: vec![0.0; m * (m + 1) / 2] }
    }

    pub fn constant(m: usize, value: f64) -> Self {
        Self { m, values: vec![value; m * (m + 1) / 2] }
    }

    /// Builds weights from a function of `(j, h)` with `j ≥ h`.
    pub fn from_fn(m: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut g = Self::zeros(m);
        for j in 0..m {
            for h in 0..=j {
                g.set(j, h, f(j, h));
            }
        }
        g
    }

    fn idx(j: usize, h: usize) -> usize {
        let (j, h) = if j >= h { (j, h) } else { (h, j) };
        j * (j + 1) / 2 + h
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn get(&self, j: usize, h: usize) -> f64 {
        self.values[Self::idx(j, h)]
    }

    pub fn set(&mut self, j: usize, h: usize, v: f64) {
        self.values[Self::idx(j, h)] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn all_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Moment data and settings of one extension problem.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub r: CovarianceSeq,
    pub c: CepstralSeq,
    pub edges: EdgeSet,
    pub lambda: f64,
    pub grid: FrequencyGrid,
    pub phi_p: Option<SpectrumGrid>,
    pub psi_hat: Option<CepstralSeq>,
    pub n_obs: Option<usize>,
}

impl ProblemData {
    pub fn new(r: CovarianceSeq, c: CepstralSeq, edges: EdgeSet, lambda: f64, grid: FrequencyGrid) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
        }
        if c.values.is_empty() {
            return Err(Error::InvalidInput("cepstral sequence needs c_0".into()));
        }
        if edges.dim() != r.dim() {
            return Err(Error::DimensionMismatch("edge set and covariances differ in dimension".into()));
        }
        grid.validate_degree(r.order().max(c.order()))?;
        Ok(Self { r, c, edges, lambda, grid, phi_p: None, psi_hat: None, n_obs: None })
    }

    pub fn from_estimates(est: &MomentEstimates, edges: EdgeSet, lambda: f64) -> Result<Self> {
        let mut d = Self::new(est.r.clone(), est.c.clone(), edges, lambda, est.phi_p.grid)?;
        d.phi_p = Some(est.phi_p.clone());
        d.psi_hat = Some(est.psi_hat.clone());
        d.n_obs = Some(est.n_obs);
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.r.dim()
    }

    pub fn n_q(&self) -> usize {
        self.r.order()
    }

    pub fn n_p(&self) -> usize {
        self.c.order()
    }

    /// Same data with the cepstral part dropped (`p ≡ 1`).
    pub fn without_cepstra(&self) -> Self {
        let mut d = self.clone();
        d.c = self.c.truncated(0);
        d
    }

    pub fn with_edges(&self, edges: EdgeSet) -> Self {
        let mut d = self.clone();
        d.edges = edges;
        d
    }

    pub(crate) fn require_phi_p(&self) -> Result<&SpectrumGrid> {
        self.phi_p.as_ref().ok_or_else(|| Error::InvalidInput("this objective needs the periodogram".into()))
    }

    pub(crate) fn require_n_obs(&self) -> Result<f64> {
        self.n_obs.map(|n| n as f64).ok_or_else(|| Error::InvalidInput("this objective needs the sample size".into()))
    }
}

/// One penalty group `(j, h)`, `j ≥ h`, and the flat indices of its entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Group {
    pub j: usize,
    pub h: usize,
    pub indices: Vec<usize>,
}

/// Order of the free variables in flat vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarLayout {
    m: usize,
    n_p: usize,
    n_q: usize,
    mask: EdgeSet,
    q0_entries: Vec<(usize, usize)>,
    qk_entries: Vec<(usize, usize)>,
}

impl VarLayout {
    pub fn new(m: usize, n_p: usize, n_q: usize, mask: &EdgeSet) -> Self {
        let mut q0_entries = Vec::new();
        let mut qk_entries = Vec::new();
        for a in 0..m {
            for b in 0..m {
                if mask.contains(a, b) {
                    if b >= a {
                        q0_entries.push((a, b));
                    }
                    qk_entries.push((a, b));
                }
            }
        }
        Self { m, n_p, n_q, mask: mask.clone(), q0_entries, qk_entries }
    }

    pub fn for_data(data: &ProblemData) -> Self {
        Self::new(data.dim(), data.n_p(), data.n_q(), &data.edges)
    }

    pub fn len(&self) -> usize {
        self.n_p + self.q0_entries.len() + self.n_q * self.qk_entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn mask(&self) -> &EdgeSet {
        &self.mask
    }

    fn q0_offset(&self) -> usize {
        self.n_p
    }

    fn qk_offset(&self, k: usize) -> usize {
        self.n_p + self.q0_entries.len() + (k - 1) * self.qk_entries.len()
    }

    /// Number of variables belonging to `p`.
    pub fn p_len(&self) -> usize {
        self.n_p
    }

    pub fn pack(&self, x: &DualPoint) -> Result<Vec<f64>> {
        if x.p.degree() != self.n_p || x.q.degree() != self.n_q || x.q.dim() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "dual point (n_p={}, n_q={}, m={}) does not fit layout (n_p={}, n_q={}, m={})",
                x.p.degree(),
                x.q.degree(),
                x.q.dim(),
                self.n_p,
                self.n_q,
                self.m
            )));
        }
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&x.p.coeffs);
        for &(a, b) in &self.q0_entries {
            v.push(x.q.q0[(a, b)]);
        }
        for k in 1..=self.n_q {
            for &(a, b) in &self.qk_entries {
                v.push(x.q.qk[k - 1][(a, b)]);
            }
        }
        Ok(v)
    }

    pub fn unpack(&self, v: &[f64]) -> DualPoint {
        debug_assert_eq!(v.len(), self.len());
        let m = self.m;
        let p = ScalarTrigPoly::monic(v[..self.n_p].to_vec());
        let mut q0 = DMatrix::zeros(m, m);
        let off = self.q0_offset();
        for (i, &(a, b)) in self.q0_entries.iter().enumerate() {
            q0[(a, b)] = v[off + i];
            q0[(b, a)] = v[off + i];
        }
        let qk = (1..=self.n_q)
            .map(|k| {
                let off = self.qk_offset(k);
                let mut c = DMatrix::zeros(m, m);
                for (i, &(a, b)) in self.qk_entries.iter().enumerate() {
                    c[(a, b)] = v[off + i];
                }
                c
            })
            .collect();
        let mask = if self.mask.is_full() { None } else { Some(self.mask.clone()) };
        DualPoint { p, q: MatrixTrigPoly { q0, qk, mask } }
    }

    /// Penalty groups for `j ≥ h` restricted to allowed entries. Diagonal
    /// groups hold `n_q + 1` entries, off-diagonal ones `2 n_q + 1`.
    pub fn groups(&self) -> Vec<Group> {
        let mut out = Vec::new();
        let q0_pos = |a: usize, b: usize| {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            self.q0_entries.iter().position(|&e| e == (a, b))
        };
        let qk_pos = |a: usize, b: usize| self.qk_entries.iter().position(|&e| e == (a, b));
        for j in 0..self.m {
            for h in 0..=j {
                if !self.mask.contains(j, h) {
                    continue;
                }
                let mut indices = Vec::new();
                if let Some(i) = q0_pos(h, j) {
                    indices.push(self.q0_offset() + i);
                }
                for k in 1..=self.n_q {
                    if let Some(i) = qk_pos(j, h) {
                        indices.push(self.qk_offset(k) + i);
                    }
                    if j != h {
                        if let Some(i) = qk_pos(h, j) {
                            indices.push(self.qk_offset(k) + i);
                        }
                    }
                }
                out.push(Group { j, h, indices });
            }
        }
        out
    }
}

/// Trigonometric tables on the half grid.
#[derive(Clone, Debug)]
struct HalfGrid {
    weights: Vec<f64>,
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
    index: Vec<usize>,
}

impl HalfGrid {
    fn new(grid: &FrequencyGrid, max_order: usize) -> Self {
        let hw = grid.half_weights();
        let k = grid.len();
        let index: Vec<usize> = hw.iter().map(|&(j, _)| j).collect();
        let weights = hw.iter().map(|&(_, w)| w).collect();
        let cos = (0..=max_order).map(|o| index.iter().map(|&j| grid.theta((o * j) % k).cos()).collect()).collect();
        let sin = (0..=max_order).map(|o| index.iter().map(|&j| grid.theta((o * j) % k).sin()).collect()).collect();
        Self { weights, cos, sin, index }
    }
}

/// Which smooth function an [`Objective`] evaluates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SmoothKind {
    /// `J(p,Q) + s·g_λ(p)`; `s = 1` for the regularized dual, `s = 2α/N`
    /// for the smooth part of the sparse dual.
    Dual { reg_scale: f64 },
    /// Whittle negative log-likelihood plus `g_λ(p)`.
    Check,
}

/// Smooth objective over the flat variable vector of a [`VarLayout`].
#[derive(Clone, Debug)]
pub struct Objective<'a> {
    data: &'a ProblemData,
    layout: VarLayout,
    kind: SmoothKind,
    half: HalfGrid,
    phi_half: Option<Vec<Vec<C64>>>,
    n_obs: f64,
}

impl<'a> Objective<'a> {
    pub fn new(data: &'a ProblemData, layout: VarLayout, kind: SmoothKind) -> Result<Self> {
        if layout.dim() != data.dim() {
            return Err(Error::DimensionMismatch("layout and data differ in dimension".into()));
        }
        if layout.n_q() > data.n_q() || layout.n_p() > data.n_p() {
            return Err(Error::DimensionMismatch(format!(
                "polynomial degrees (n_p={}, n_q={}) exceed the available moments (n_p={}, n_q={})",
                layout.n_p(),
                layout.n_q(),
                data.n_p(),
                data.n_q()
            )));
        }
        let half = HalfGrid::new(&data.grid, layout.n_p().max(layout.n_q()));
        let (phi_half, n_obs) = match kind {
            SmoothKind::Check => {
                let phi = data.require_phi_p()?;
                if phi.grid != data.grid {
                    return Err(Error::InvalidInput("periodogram grid differs from problem grid".into()));
                }
                let vals = half.index.iter().map(|&j| linalg::to_flat(&phi.values[j])).collect();
                (Some(vals), data.require_n_obs()?)
            }
            SmoothKind::Dual { .. } => (None, 0.0),
        };
        Ok(Self { data, layout, kind, half, phi_half, n_obs })
    }

    pub fn layout(&self) -> &VarLayout {
        &self.layout
    }

    pub fn data(&self) -> &ProblemData {
        self.data
    }

    pub fn kind(&self) -> SmoothKind {
        self.kind
    }

    /// Value and, when `grad` is given, the gradient. Returns
    /// [`Error::Infeasible`] outside the open cone.
    pub fn eval(&self, x: &[f64], mut grad: Option<&mut [f64]>) -> Result<f64> {
        let lay = &self.layout;
        if x.len() != lay.len() {
            return Err(Error::LengthMismatch { expected: lay.len(), got: x.len() });
        }
        let m = lay.m;
        let n_p = lay.n_p;
        let n_q = lay.n_q;
        let mf = m as f64;
        let lambda = self.data.lambda;

        // unpack coefficients into dense buffers
        let pc = &x[..n_p];
        let dp = lay.unpack(x);
        let qmats: Vec<&DMatrix<f64>> = (0..=n_q).map(|k| dp.q.coeff(k)).collect();

        let need_grad = grad.is_some();
        let mut gp = vec![0.0; n_p];
        // moment accumulators: Re ∫ e^{ikθ} (weight · Q⁻¹ [+ Φ̂/p]) per k
        let mut acc = vec![0.0; (n_q + 1) * m * m];

        let mut qbuf = vec![C64::new(0.0, 0.0); m * m];
        let mut work = vec![C64::new(0.0, 0.0); m * m];
        let mut qinv = vec![C64::new(0.0, 0.0); m * m];

        let mut int_main = 0.0;
        let mut int_inv_p = 0.0;

        for (i, &w) in self.half.weights.iter().enumerate() {
            let mut p = 1.0;
            for k in 1..=n_p {
                p += pc[k - 1] * self.half.cos[k][i];
            }
            if !(p > 0.0) {
                return Err(Error::Infeasible(format!("p ≤ 0 at grid index {}", self.half.index[i])));
            }
            build_q_lower(&qmats, &self.half, i, m, n_q, &mut qbuf);
            let Some(logdet_q) = linalg::cholesky_in_place(&mut qbuf, m) else {
                return Err(Error::Infeasible(format!("Q not positive definite at grid index {}", self.half.index[i])));
            };
            let logp = p.ln();
            match self.kind {
                SmoothKind::Dual { reg_scale } => {
                    int_main += w * (mf * p * logp - p * logdet_q);
                    int_inv_p += w / p;
                    if need_grad {
                        let base = mf * logp - logdet_q;
                        let reg = reg_scale * lambda / (p * p);
                        for k in 1..=n_p {
                            gp[k - 1] += w * self.half.cos[k][i] * (base - reg);
                        }
                        linalg::inverse_from_cholesky(&qbuf, m, &mut work, &mut qinv);
                        accumulate_moments(&mut acc, &qinv, w * p, &self.half, i, m, n_q);
                    }
                }
                SmoothKind::Check => {
                    let phi = &self.phi_half.as_ref().expect("checked in new")[i];
                    // tr(Q Φ̂): rebuild Q from coefficients (qbuf now holds L)
                    let tr = trace_q_phi(&qmats, &self.half, i, phi, m, n_q);
                    int_main += w * (mf * logp - logdet_q + tr / p);
                    int_inv_p += w / p;
                    if need_grad {
                        let dp_val = 0.5 * self.n_obs * (mf / p - tr / (p * p)) - lambda / (p * p);
                        for k in 1..=n_p {
                            gp[k - 1] += w * self.half.cos[k][i] * dp_val;
                        }
                        linalg::inverse_from_cholesky(&qbuf, m, &mut work, &mut qinv);
                        // acc collects Re ∫ e^{ikθ} (Q⁻¹ - Φ̂/p)
                        for (q, f) in qinv.iter_mut().zip(phi.iter()) {
                            *q -= f / p;
                        }
                        accumulate_moments(&mut acc, &qinv, w, &self.half, i, m, n_q);
                    }
                }
            }
        }

        let value = match self.kind {
            SmoothKind::Dual { reg_scale } => {
                let mut lin = 0.0;
                for (qk, rk) in qmats.iter().zip(&self.data.r.lags).take(n_q + 1) {
                    lin += qk.dot(rk);
                }
                let c = &self.data.c.values;
                lin -= c[0];
                for k in 1..=n_p {
                    lin -= pc[k - 1] * c[k];
                }
                int_main - mf + lin + reg_scale * lambda * int_inv_p
            }
            SmoothKind::Check => 0.5 * self.n_obs * int_main + lambda * int_inv_p,
        };
        if !value.is_finite() {
            return Err(Error::Infeasible("objective is not finite".into()));
        }

        if let Some(g) = grad.as_mut() {
            let (qscale, rsign) = match self.kind {
                // ∂/∂Q_k = R_k - Re∫e^{ikθ} p Q⁻¹
                SmoothKind::Dual { .. } => (-1.0, 1.0),
                // ∂/∂Q_k = -(N/2) Re∫e^{ikθ}(Q⁻¹ - Φ̂/p)
                SmoothKind::Check => (-0.5 * self.n_obs, 0.0),
            };
            for k in 1..=n_p {
                g[k - 1] = gp[k - 1]
                    - match self.kind {
                        SmoothKind::Dual { .. } => self.data.c.values[k],
                        SmoothKind::Check => 0.0,
                    };
            }
            let off0 = lay.q0_offset();
            for (idx, &(a, b)) in lay.q0_entries.iter().enumerate() {
                let r = &self.data.r.lags[0];
                let mut v = rsign * r[(a, b)] + qscale * acc[a * m + b];
                if a != b {
                    v += rsign * r[(b, a)] + qscale * acc[b * m + a];
                }
                g[off0 + idx] = v;
            }
            for k in 1..=n_q {
                let off = lay.qk_offset(k);
                let r = &self.data.r.lags[k];
                for (idx, &(a, b)) in lay.qk_entries.iter().enumerate() {
                    g[off + idx] = rsign * r[(a, b)] + qscale * acc[k * m * m + a * m + b];
                }
            }
        }
        Ok(value)
    }

    /// Dense Hessian of the smooth objective. For the check objective the
    /// matrix may be indefinite.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let lay = &self.layout;
        if x.len() != lay.len() {
            return Err(Error::LengthMismatch { expected: lay.len(), got: x.len() });
        }
        let m = lay.m;
        let mm = m * m;
        let n_p = lay.n_p;
        let n_q = lay.n_q;
        let mf = m as f64;
        let lambda = self.data.lambda;
        let dp = lay.unpack(x);
        let qmats: Vec<&DMatrix<f64>> = (0..=n_q).map(|k| dp.q.coeff(k)).collect();

        let mut hpp = DMatrix::<f64>::zeros(n_p, n_p);
        // cross[k-1][l][a*m+b] = Σ w cos(kθ) Re(X_ab e^{ilθ})
        let mut cross = vec![0.0; n_p * (n_q + 1) * mm];
        // prod[s + n_q][((x*m+y)*m+z)*m+w] = Σ w σ Re(Qi_xy Qi_zw e^{-isθ}), s ∈ [-n_q, 2n_q]
        let n_lags = 3 * n_q + 1;
        let mut prod = vec![0.0; n_lags * mm * mm];
        let mut pbuf = vec![C64::new(0.0, 0.0); mm * mm];

        let mut qbuf = vec![C64::new(0.0, 0.0); mm];
        let mut work = vec![C64::new(0.0, 0.0); mm];
        let mut qinv = vec![C64::new(0.0, 0.0); mm];
        let mut xmat = vec![C64::new(0.0, 0.0); mm];
        let kgrid = self.data.grid.len();

        for (i, &w) in self.half.weights.iter().enumerate() {
            let mut p = 1.0;
            for k in 1..=n_p {
                p += x[k - 1] * self.half.cos[k][i];
            }
            if !(p > 0.0) {
                return Err(Error::Infeasible(format!("p ≤ 0 at grid index {}", self.half.index[i])));
            }
            build_q_lower(&qmats, &self.half, i, m, n_q, &mut qbuf);
            linalg::cholesky_in_place(&mut qbuf, m).ok_or_else(|| {
                Error::Infeasible(format!("Q not positive definite at grid index {}", self.half.index[i]))
            })?;
            linalg::inverse_from_cholesky(&qbuf, m, &mut work, &mut qinv);

            let (sp, sq) = match self.kind {
                SmoothKind::Dual { reg_scale } => {
                    xmat.copy_from_slice(&qinv);
                    (mf / p + 2.0 * reg_scale * lambda / (p * p * p), p)
                }
                SmoothKind::Check => {
                    let phi = &self.phi_half.as_ref().expect("checked in new")[i];
                    let tr = trace_q_phi(&qmats, &self.half, i, phi, m, n_q);
                    let n2 = 0.5 * self.n_obs;
                    for (d, f) in xmat.iter_mut().zip(phi.iter()) {
                        *d = f * (n2 / (p * p));
                    }
                    (n2 * (2.0 * tr / (p * p * p) - mf / (p * p)) + 2.0 * lambda / (p * p * p), n2)
                }
            };
            for k in 1..=n_p {
                for l in 1..=n_p {
                    hpp[(k - 1, l - 1)] += w * self.half.cos[k][i] * self.half.cos[l][i] * sp;
                }
            }
            for k in 1..=n_p {
                let ck = w * self.half.cos[k][i];
                for l in 0..=n_q {
                    let c = self.half.cos[l][i];
                    let s = self.half.sin[l][i];
                    let block = &mut cross[((k - 1) * (n_q + 1) + l) * mm..][..mm];
                    for (dst, z) in block.iter_mut().zip(xmat.iter()) {
                        *dst += ck * (c * z.re - s * z.im);
                    }
                }
            }
            for (xy, a) in qinv.iter().enumerate() {
                let row = &mut pbuf[xy * mm..(xy + 1) * mm];
                for (dst, b) in row.iter_mut().zip(qinv.iter()) {
                    *dst = a * b;
                }
            }
            let j = self.half.index[i];
            for (li, s) in (-(n_q as i64)..=(2 * n_q as i64)).enumerate() {
                let t = self.data.grid.theta(((s.rem_euclid(kgrid as i64)) as usize * j) % kgrid);
                let (c, sn) = (w * sq * t.cos(), w * sq * t.sin());
                let block = &mut prod[li * mm * mm..(li + 1) * mm * mm];
                // Re(z e^{-isθ}) = z.re cos + z.im sin
                for (dst, z) in block.iter_mut().zip(pbuf.iter()) {
                    *dst += z.re * c + z.im * sn;
                }
            }
        }

        // variable descriptors (lag, a, b, scale) for Q entries
        let mut qvars: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(lay.len() - n_p);
        for &(a, b) in &lay.q0_entries {
            qvars.push((0, a, b, if a == b { 1.0 } else { 2.0 }));
        }
        for k in 1..=n_q {
            for &(a, b) in &lay.qk_entries {
                qvars.push((k, a, b, 1.0));
            }
        }
        let n = lay.len();
        let mut h = DMatrix::<f64>::zeros(n, n);
        h.view_mut((0, 0), (n_p, n_p)).copy_from(&hpp);
        let g = |s: i64, x: usize, y: usize, z: usize, w: usize| {
            prod[(s + n_q as i64) as usize * mm * mm + ((x * m + y) * m + z) * m + w]
        };
        for (vi, &(k, a, b, sv)) in qvars.iter().enumerate() {
            let row = n_p + vi;
            for pk in 1..=n_p {
                let v = -sv * cross[((pk - 1) * (n_q + 1) + k) * mm + a * m + b];
                h[(pk - 1, row)] = v;
                h[(row, pk - 1)] = v;
            }
            for (ui, &(l, c, d, su)) in qvars.iter().enumerate().skip(vi) {
                let (k, l) = (k as i64, l as i64);
                let v = 0.5 * sv * su * (g(k + l, d, a, b, c) + g(k - l, c, a, b, d));
                h[(row, n_p + ui)] = v;
                h[(n_p + ui, row)] = v;
            }
        }
        Ok(h)
    }
}

fn build_q_lower(qmats: &[&DMatrix<f64>], half: &HalfGrid, i: usize, m: usize, n_q: usize, out: &mut [C64]) {
    for a in 0..m {
        for b in 0..=a {
            let mut re = qmats[0][(a, b)];
            let mut im = 0.0;
            for k in 1..=n_q {
                let qab = qmats[k][(a, b)];
                let qba = qmats[k][(b, a)];
                re += 0.5 * (qab + qba) * half.cos[k][i];
                im -= 0.5 * (qab - qba) * half.sin[k][i];
            }
            out[a * m + b] = C64::new(re, im);
        }
    }
}

fn accumulate_moments(acc: &mut [f64], mat: &[C64], scale: f64, half: &HalfGrid, i: usize, m: usize, n_q: usize) {
    for k in 0..=n_q {
        let c = half.cos[k][i] * scale;
        let s = half.sin[k][i] * scale;
        let block = &mut acc[k * m * m..(k + 1) * m * m];
        for (dst, z) in block.iter_mut().zip(mat.iter()) {
            *dst += c * z.re - s * z.im;
        }
    }
}

fn trace_q_phi(qmats: &[&DMatrix<f64>], half: &HalfGrid, i: usize, phi: &[C64], m: usize, n_q: usize) -> f64 {
    // tr(Q Φ̂) = Σ_ab Q_ab Φ̂_ba; Q_ab = Q0_ab + ½Σ_k (Qk_ab e^{-ikθ} + Qk_ba e^{ikθ})
    let mut tr = 0.0;
    for a in 0..m {
        for b in 0..m {
            let mut q = C64::new(qmats[0][(a, b)], 0.0);
            for k in 1..=n_q {
                let c = half.cos[k][i];
                let s = half.sin[k][i];
                let qab = qmats[k][(a, b)];
                let qba = qmats[k][(b, a)];
                q += C64::new(0.5 * (qab + qba) * c, -0.5 * (qab - qba) * s);
            }
            tr += (q * phi[b * m + a]).re;
        }
    }
    tr
}

/// Dual function `J(p, Q)` (includes the constant `-c_0`).
pub fn dual_j(x: &DualPoint, data: &ProblemData) -> Result<f64> {
    let lay = VarLayout::new(x.dim(), x.p.degree(), x.q.degree(), &EdgeSet::full(x.dim()));
    let obj = Objective::new(data, lay.clone(), SmoothKind::Dual { reg_scale: 0.0 })?;
    obj.eval(&lay.pack(x)?, None)
}

/// Regularizer `g_λ(p) = λ ∫ 1/p`.
pub fn g_lambda(p: &ScalarTrigPoly, lambda: f64, grid: &FrequencyGrid) -> Result<f64> {
    let v = crate::freqgrid::eval_scalar(p, grid);
    if v.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Infeasible("p is not positive on the grid".into()));
    }
    Ok(lambda * v.iter().map(|x| 1.0 / x).sum::<f64>() / grid.len() as f64)
}

/// Group magnitude `q_{jh}(Q)`: the largest of `|[Q_0]_{jh}|`, `|[Q_k]_{jh}|`
/// and `|[Q_k]_{hj}|`.
pub fn q_group(q: &MatrixTrigPoly, j: usize, h: usize) -> f64 {
    let mut v = q.q0[(j, h)].abs();
    for c in &q.qk {
        v = v.max(c[(j, h)].abs()).max(c[(h, j)].abs());
    }
    v
}

/// Sparsity penalty `h_W(Q) = Σ_{j≥h} γ_{jh} q_{jh}(Q)`.
pub fn h_w(q: &MatrixTrigPoly, gamma: &GammaWeights) -> f64 {
    let m = q.dim();
    let mut s = 0.0;
    for j in 0..m {
        for h in 0..=j {
            let g = gamma.get(j, h);
            if g != 0.0 {
                s += g * q_group(q, j, h);
            }
        }
    }
    s
}

/// Itakura–Saito distance `log det(X⁻¹Y) + tr(X Y⁻¹) - m`.
pub fn itakura_saito(x: &DMatrix<C64>, y: &DMatrix<C64>) -> Result<f64> {
    let m = x.nrows();
    let ldx = linalg::hermitian_logdet(x).ok_or(Error::NotPositiveDefinite { index: 0 })?;
    let ldy = linalg::hermitian_logdet(y).ok_or(Error::NotPositiveDefinite { index: 1 })?;
    let yinv = linalg::hermitian_inverse(y).ok_or(Error::NotPositiveDefinite { index: 1 })?;
    Ok(ldy - ldx + (x * yinv).trace().re - m as f64)
}

/// Whittle negative log-likelihood `(N/2) ∫ log det(pQ⁻¹) + tr(p⁻¹ Q Φ̂_P)`.
pub fn whittle_nll(x: &DualPoint, phi_p: &SpectrumGrid, n_obs: usize) -> Result<f64> {
    let grid = phi_p.grid;
    let pv = crate::freqgrid::eval_scalar(&x.p, &grid);
    let qv = crate::freqgrid::eval_matrix(&x.q, &grid);
    let m = x.dim() as f64;
    let mut s = 0.0;
    for (j, (p, q)) in pv.iter().zip(&qv.values).enumerate() {
        if !(*p > 0.0) {
            return Err(Error::Infeasible(format!("p ≤ 0 at grid index {j}")));
        }
        let ldq = linalg::hermitian_logdet(q).ok_or_else(|| Error::Infeasible(format!("Q not PD at {j}")))?;
        s += m * p.ln() - ldq + (q * &phi_p.values[j]).trace().re / p;
    }
    Ok(0.5 * n_obs as f64 * s / grid.len() as f64)
}

/// `∫ log det Φ̂_P`.
pub(crate) fn mean_log_det(phi: &SpectrumGrid) -> Result<f64> {
    let ld = phi.log_det()?;
    Ok(ld.iter().sum::<f64>() / ld.len() as f64)
}

/// Hyperprior terms `-Σ_{j>h}(2n+1) log γ_{jh} - Σ_j (n+1) log γ_{jj} + ε Σ_{j≥h} γ_{jh}`.
pub fn gamma_prior_terms(gamma: &GammaWeights, n_q: usize, eps_prior: f64) -> Result<f64> {
    if !gamma.all_positive() {
        return Err(Error::InvalidInput("hyperparameters must be strictly positive".into()));
    }
    let m = gamma.dim();
    let mut s = 0.0;
    for j in 0..m {
        for h in 0..=j {
            let g = gamma.get(j, h);
            let count = if j == h { n_q + 1 } else { 2 * n_q + 1 } as f64;
            s += -count * g.ln() + eps_prior * g;
        }
    }
    Ok(s)
}

/// Convex upper bound `ℓ̃(yᴺ, p, Q, α, γ)` of the negative log posterior.
pub fn ell_tilde(x: &DualPoint, data: &ProblemData, alpha: f64, gamma: &GammaWeights, eps_prior: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    let n = data.require_n_obs()?;
    let phi = data.require_phi_p()?;
    let j = dual_j(x, data)?;
    let m = x.dim() as f64;
    Ok(0.5 * n * (j / alpha + mean_log_det(phi)? + m)
        + g_lambda(&x.p, data.lambda, &data.grid)?
        + h_w(&x.q, gamma)
        + gamma_prior_terms(gamma, x.q.degree(), eps_prior)?)
}

/// Likelihood-based upper bound `ℓ̌(yᴺ, p, Q, γ)`.
pub fn ell_check(x: &DualPoint, data: &ProblemData, gamma: &GammaWeights, eps_prior: f64) -> Result<f64> {
    let n = data.require_n_obs()?;
    let phi = data.require_phi_p()?;
    Ok(whittle_nll(x, phi, n as usize)?
        + g_lambda(&x.p, data.lambda, &data.grid)?
        + h_w(&x.q, gamma)
        + gamma_prior_terms(gamma, x.q.degree(), eps_prior)?)
}

/// Gradient of `J + s·g_λ` over the free variables of the data's mask
/// (`s = 1` unless given).
pub fn grad_smooth(x: &DualPoint, data: &ProblemData, reg_scale: Option<f64>) -> Result<Vec<f64>> {
    let lay = VarLayout::new(x.dim(), x.p.degree(), x.q.degree(), &data.edges);
    let obj = Objective::new(data, lay.clone(), SmoothKind::Dual { reg_scale: reg_scale.unwrap_or(1.0) })?;
    let v = lay.pack(x)?;
    let mut g = vec![0.0; v.len()];
    obj.eval(&v, Some(&mut g))?;
    Ok(g)
}
