//! Random sparse ARMA graphical models and Gaussian sample paths.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqgrid::{eval_matrix, eval_scalar, EdgeSet, FrequencyGrid, MatrixTrigPoly, ScalarTrigPoly};
use crate::linalg;
use crate::model::ArmaGraphicalModel;
use crate::moments::TimeSeries;

/// Grid used when shifting `Q_0` to positive definiteness.
const SHIFT_GRID_POINTS: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelRecipe {
    pub m: usize,
    /// Degree of `Q`; `p` gets a conjugate zero pair (degree 2) when
    /// `n ≥ 2`, a single real zero when `n = 1`.
    pub n: usize,
    /// Fraction of the `m(m−1)/2` off-diagonal pairs that carry an edge.
    pub edge_density: f64,
    /// Explicit 1-indexed edges; overrides `edge_density` when present.
    pub edges: Option<Vec<[usize; 2]>>,
    pub zero_modulus: [f64; 2],
    pub pd_margin: f64,
    /// Half-width of the uniform distribution of the `Q` coefficients.
    pub coeff_scale: f64,
    pub seed: u64,
}

impl Default for ModelRecipe {
    fn default() -> Self {
        Self {
            m: 15,
            n: 2,
            edge_density: 0.17,
            edges: None,
            zero_modulus: [0.98, 0.995],
            pd_margin: 0.05,
            coeff_scale: 1.0,
            seed: 0,
        }
    }
}

impl ModelRecipe {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidInput("m must be positive".into()));
        }
        if self.edges.is_none() && !(self.edge_density > 0.0 && self.edge_density <= 1.0) {
            return Err(Error::InvalidInput(format!("edge_density must lie in (0, 1], got {}", self.edge_density)));
        }
        let [lo, hi] = self.zero_modulus;
        if !(0.0 <= lo && lo <= hi && hi < 1.0) {
            return Err(Error::InvalidInput(format!("zero_modulus must satisfy 0 ≤ lo ≤ hi < 1, got [{lo}, {hi}]")));
        }
        if !(self.pd_margin > 0.0) || !(self.coeff_scale > 0.0) {
            return Err(Error::InvalidInput("pd_margin and coeff_scale must be positive".into()));
        }
        if let Some(edges) = &self.edges {
            for &[a, b] in edges {
                if a == 0 || b == 0 || a > self.m || b > self.m {
                    return Err(Error::InvalidInput(format!("edge [{a},{b}] out of range for m={}", self.m)));
                }
            }
        }
        Ok(())
    }
}

/// Number of off-diagonal edges a recipe asks for.
pub fn target_edge_count(m: usize, density: f64) -> usize {
    let pairs = m * (m - 1) / 2;
    ((density * pairs as f64).round() as usize).min(pairs)
}

/// `|a(e^{iθ})|²` normalized to unit constant term, for the zero pair
/// `r e^{±iφ}`. Returns `(p_1, p_2)`.
pub fn conjugate_pair_coeffs(r: f64, phi: f64) -> (f64, f64) {
    let (a0, a1, a2) = (1.0, -2.0 * r * phi.cos(), r * r);
    let c = a0 * a0 + a1 * a1 + a2 * a2;
    (2.0 * (a0 * a1 + a1 * a2) / c, 2.0 * a0 * a2 / c)
}

pub fn random_model(recipe: &ModelRecipe) -> Result<ArmaGraphicalModel> {
    recipe.validate()?;
    let m = recipe.m;
    let n = recipe.n;
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);

    let edges = match &recipe.edges {
        Some(list) => {
            let pairs: Vec<(usize, usize)> = list.iter().map(|&[a, b]| (a - 1, b - 1)).collect();
            EdgeSet::from_pairs(m, &pairs)?
        }
        None => {
            let mut pairs: Vec<(usize, usize)> = (0..m).flat_map(|j| (0..j).map(move |h| (j, h))).collect();
            let count = target_edge_count(m, recipe.edge_density);
            // partial Fisher–Yates
            for i in 0..count {
                let k = rng.random_range(i..pairs.len());
                pairs.swap(i, k);
            }
            EdgeSet::from_pairs(m, &pairs[..count])?
        }
    };

    let s = recipe.coeff_scale;
    let mut q0 = DMatrix::zeros(m, m);
    for j in 0..m {
        for h in 0..=j {
            if edges.contains(j, h) {
                let v = rng.random_range(-s..s);
                q0[(j, h)] = v;
                q0[(h, j)] = v;
            }
        }
    }
    let mut qk = Vec::with_capacity(n);
    for _ in 0..n {
        let mut c = DMatrix::zeros(m, m);
        for j in 0..m {
            for h in 0..m {
                if edges.contains(j, h) {
                    c[(j, h)] = rng.random_range(-s..s);
                }
            }
        }
        qk.push(c);
    }
    let mut q = MatrixTrigPoly::new(q0, qk, Some(edges.clone()))?;
    let lmin = eval_matrix(&q, &FrequencyGrid::new(SHIFT_GRID_POINTS)?).min_eigenvalue();
    let shift = lmin.abs() + recipe.pd_margin;
    for j in 0..m {
        q.q0[(j, j)] += shift;
    }

    let [lo, hi] = recipe.zero_modulus;
    let p = match n {
        0 => ScalarTrigPoly::one(),
        1 => {
            let r = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            ScalarTrigPoly::monic(vec![-2.0 * sign * r / (1.0 + r * r)])
        }
        _ => {
            let r = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let phi = rng.random_range(0.0..PI);
            let (p1, p2) = conjugate_pair_coeffs(r, phi);
            ScalarTrigPoly::monic(vec![p1, p2])
        }
    };
    let mut model = ArmaGraphicalModel::new(p, q, edges)?;
    model.provenance.insert("seed".into(), recipe.seed.into());
    model.provenance.insert("generator".into(), "random_model".into());
    Ok(model)
}

/// Number of frequency bins used to synthesize `n` samples.
pub fn synthesis_length(n: usize, burn_in: usize) -> usize {
    let base = 4096usize.max((8 * n).next_power_of_two());
    base.max((n + burn_in).next_power_of_two())
}

/// Gaussian sample path with spectrum `p Q⁻¹` by circulant synthesis: one
/// circular complex Gaussian vector per frequency bin with covariance
/// `Φ(θ_j)`, inverse FFT, real part scaled by `√2`.
pub fn simulate(model: &ArmaGraphicalModel, n: usize, burn_in: usize, seed: u64) -> Result<TimeSeries> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples, got {n}")));
    }
    let m = model.dim();
    let len = synthesis_length(n, burn_in);
    let grid = FrequencyGrid::new(len)?;
    let pv = eval_scalar(&model.p, &grid);
    let qv = eval_matrix(&model.q, &grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;

    // spectra[c][j]: channel c at bin j
    let mut spectra = vec![vec![C64::new(0.0, 0.0); len]; m];
    let mut buf = vec![C64::new(0.0, 0.0); m * m];
    for j in 0..len {
        let p = pv[j];
        if !(p > 0.0) {
            return Err(Error::Infeasible(format!("p ≤ 0 at synthesis bin {j}")));
        }
        buf.copy_from_slice(&linalg::to_flat(&qv.values[j]));
        linalg::cholesky_in_place(&mut buf, m)
            .ok_or_else(|| Error::Infeasible(format!("Q not positive definite at synthesis bin {j}")))?;
        // X = √p L^{-H} Z, so that X X^H has mean p Q⁻¹
        let z = DVector::from_fn(m, |_, _| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            C64::new(a, b) * scale
        });
        let mut x = z * C64::new(p.sqrt(), 0.0);
        for i in (0..m).rev() {
            let mut s = x[i];
            for k in (i + 1)..m {
                s -= buf[k * m + i].conj() * x[k];
            }
            x[i] = s / buf[i * m + i].re;
        }
        for c in 0..m {
            spectra[c][j] = x[c];
        }
    }

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(len);
    let norm = (2.0 / len as f64).sqrt();
    let mut data = DMatrix::zeros(n, m);
    for (c, s) in spectra.iter_mut().enumerate() {
        ifft.process(s);
        for t in 0..n {
            data[(t, c)] = norm * s[burn_in + t].re;
        }
    }
    TimeSeries::new(data)
}
