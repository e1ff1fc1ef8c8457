//! Frequency grids on the unit circle, scalar and matrix trigonometric
//! polynomials, and grid quadrature.
//!
//! All integrals over the circle use the normalized measure `dθ/2π` and are
//! approximated by the rectangle rule on a uniform grid of `K` points, which
//! is exact for trigonometric polynomials of degree below `K`.
//!
//! Polynomial coefficients are stored raw; the factor one half lives in
//! evaluation:
//!
//! ```text
//! p(θ) = p0 + Σ_k p_k cos(kθ)
//! Q(θ) = Q0 + ½ Σ_k (Q_k e^{-ikθ} + Q_kᵀ e^{ikθ})
//! ```

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Default number of grid points.
pub const DEFAULT_GRID_POINTS: usize = 512;

/// Tolerance on the imaginary part of moments that must be real.
pub const IMAG_TOL: f64 = 1e-10;

/// Uniform grid `θ_j = 2πj/K`, `j = 0..K-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    points: usize,
}

impl FrequencyGrid {
    pub fn new(points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidInput(format!("frequency grid needs at least 2 points, got {points}")));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn theta(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.points as f64
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.theta(j)).collect()
    }

    /// Checks `K ≥ 2·degree + 1`, the condition under which the grid
    /// integrates products of polynomials of this degree exactly.
    pub fn validate_degree(&self, degree: usize) -> Result<()> {
        let needed = 2 * degree + 1;
        if self.points < needed {
            return Err(Error::GridTooCoarse { points: self.points, needed });
        }
        Ok(())
    }

    /// Grid indices `0..=K/2` with quadrature weights for integrands that are
    /// conjugate-symmetric (`f(2π-θ) = conj f(θ)`): summing `w · Re f` over
    /// this half grid equals the full-grid average.
    pub(crate) fn half_weights(&self) -> Vec<(usize, f64)> {
        let k = self.points;
        let w = 1.0 / k as f64;
        (0..=k / 2).map(|j| if j == 0 || 2 * j == k { (j, w) } else { (j, 2.0 * w) }).collect()
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self { points: DEFAULT_GRID_POINTS }
    }
}

/// Real scalar trigonometric polynomial `p0 + Σ p_k cos(kθ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarTrigPoly {
    pub p0: f64,
    pub coeffs: Vec<f64>,
}

impl ScalarTrigPoly {
    pub fn new(p0: f64, coeffs: Vec<f64>) -> Self {
        Self { p0, coeffs }
    }

    /// Polynomial with unit constant term, the normalization used by models.
    pub fn monic(coeffs: Vec<f64>) -> Self {
        Self { p0: 1.0, coeffs }
    }

    pub fn one() -> Self {
        Self::monic(Vec::new())
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval_at(&self, theta: f64) -> f64 {
        self.p0 + self.coeffs.iter().enumerate().map(|(i, c)| c * ((i + 1) as f64 * theta).cos()).sum::<f64>()
    }
}

/// Symmetric boolean adjacency with the diagonal always present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeSet {
    m: usize,
    adj: Vec<bool>,
}

impl EdgeSet {
    /// Graph with self loops only.
    pub fn empty(m: usize) -> Self {
        let mut adj = vec![false; m * m];
        for j in 0..m {
            adj[j * m + j] = true;
        }
        Self { m, adj }
    }

    pub fn full(m: usize) -> Self {
        Self { m, adj: vec![true; m * m] }
    }

    /// Builds an edge set from zero-based pairs; each pair is added in both
    /// orientations.
    pub fn from_pairs(m: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut e = Self::empty(m);
        for &(j, h) in pairs {
            if j >= m || h >= m {
                return Err(Error::InvalidInput(format!("edge ({j},{h}) out of range for m={m}")));
            }
            e.insert(j, h);
        }
        Ok(e)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn contains(&self, j: usize, h: usize) -> bool {
        self.adj[j * self.m + h]
    }

    pub fn insert(&mut self, j: usize, h: usize) {
        self.adj[j * self.m + h] = true;
        self.adj[h * self.m + j] = true;
    }

    pub fn remove(&mut self, j: usize, h: usize) {
        if j != h {
            self.adj[j * self.m + h] = false;
            self.adj[h * self.m + j] = false;
        }
    }

    pub fn is_full(&self) -> bool {
        self.adj.iter().all(|&a| a)
    }

    /// Off-diagonal edges as pairs `(j, h)` with `j > h`.
    pub fn off_diagonal_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.m {
            for h in 0..j {
                if self.contains(j, h) {
                    out.push((j, h));
                }
            }
        }
        out
    }

    pub fn off_diagonal_count(&self) -> usize {
        self.off_diagonal_edges().len()
    }

    /// Number of `true` adjacency entries, diagonal included.
    pub fn nonzero_entries(&self) -> usize {
        self.adj.iter().filter(|&&a| a).count()
    }

    /// Applies a channel permutation: new index `perm[j]` for old index `j`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut e = Self::empty(self.m);
        for (j, h) in self.off_diagonal_edges() {
            e.insert(perm[j], perm[h]);
        }
        e
    }
}

/// Matrix trigonometric polynomial with real coefficients and an optional
/// support mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixTrigPoly {
    pub q0: DMatrix<f64>,
    pub qk: Vec<DMatrix<f64>>,
    pub mask: Option<EdgeSet>,
}

impl MatrixTrigPoly {
    pub fn new(q0: DMatrix<f64>, qk: Vec<DMatrix<f64>>, mask: Option<EdgeSet>) -> Result<Self> {
        let m = q0.nrows();
        if q0.ncols() != m {
            return Err(Error::DimensionMismatch("Q0 must be square".into()));
        }
        if qk.iter().any(|q| q.nrows() != m || q.ncols() != m) {
            return Err(Error::DimensionMismatch("all Q_k must be m×m".into()));
        }
        let asym = (&q0 - q0.transpose()).amax();
        if asym > 1e-12 * (1.0 + q0.amax()) {
            return Err(Error::InvalidInput(format!("Q0 is not symmetric (max asymmetry {asym:e})")));
        }
        if let Some(e) = &mask {
            if e.dim() != m {
                return Err(Error::DimensionMismatch("mask dimension differs from Q".into()));
            }
            for k in 0..=qk.len() {
                let c = if k == 0 { &q0 } else { &qk[k - 1] };
                for j in 0..m {
                    for h in 0..m {
                        if !e.contains(j, h) && c[(j, h)] != 0.0 {
                            return Err(Error::InvalidInput(format!(
                                "coefficient Q_{k}[{j},{h}] is nonzero outside the mask"
                            )));
                        }
                    }
                }
            }
        }
        Ok(Self { q0, qk, mask })
    }

    pub fn identity(m: usize) -> Self {
        Self { q0: DMatrix::identity(m, m), qk: Vec::new(), mask: None }
    }

    pub fn dim(&self) -> usize {
        self.q0.nrows()
    }

    pub fn degree(&self) -> usize {
        self.qk.len()
    }

    /// Coefficient `k` (0 gives `Q0`).
    pub fn coeff(&self, k: usize) -> &DMatrix<f64> {
        if k == 0 {
            &self.q0
        } else {
            &self.qk[k - 1]
        }
    }

    pub fn eval_at(&self, theta: f64) -> DMatrix<C64> {
        let m = self.dim();
        let mut out = self.q0.map(|v| C64::new(v, 0.0));
        for (i, qk) in self.qk.iter().enumerate() {
            let k = (i + 1) as f64;
            let e_neg = C64::new((k * theta).cos(), -(k * theta).sin()) * 0.5;
            let e_pos = e_neg.conj();
            for a in 0..m {
                for b in 0..m {
                    out[(a, b)] += e_neg * qk[(a, b)] + e_pos * qk[(b, a)];
                }
            }
        }
        out
    }

    /// Coefficient norm `sqrt(Σ_k tr(Q_k Q_kᵀ))`.
    pub fn coefficient_norm(&self) -> f64 {
        let mut s = self.q0.norm_squared();
        for q in &self.qk {
            s += q.norm_squared();
        }
        s.sqrt()
    }

    /// Coefficient norm of the difference of two polynomials of equal shape.
    pub fn distance(&self, other: &Self) -> f64 {
        let mut s = (&self.q0 - &other.q0).norm_squared();
        for (a, b) in self.qk.iter().zip(&other.qk) {
            s += (a - b).norm_squared();
        }
        s.sqrt()
    }

    /// Zeroes every coefficient outside `mask` and stores the mask.
    pub fn with_mask(mut self, mask: EdgeSet) -> Self {
        let m = self.dim();
        for k in 0..=self.qk.len() {
            let c = if k == 0 { &mut self.q0 } else { &mut self.qk[k - 1] };
            for j in 0..m {
                for h in 0..m {
                    if !mask.contains(j, h) {
                        c[(j, h)] = 0.0;
                    }
                }
            }
        }
        self.mask = Some(mask);
        self
    }

    /// Applies a channel permutation to every coefficient.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let m = self.dim();
        let permute = |c: &DMatrix<f64>| {
            let mut out = DMatrix::zeros(m, m);
            for j in 0..m {
                for h in 0..m {
                    out[(perm[j], perm[h])] = c[(j, h)];
                }
            }
            out
        };
        Self {
            q0: permute(&self.q0),
            qk: self.qk.iter().map(permute).collect(),
            mask: self.mask.as_ref().map(|e| e.permuted(perm)),
        }
    }
}

/// Hermitian matrix samples of a spectral density on a grid.
#[derive(Clone, Debug)]
pub struct SpectrumGrid {
    pub grid: FrequencyGrid,
    pub values: Vec<DMatrix<C64>>,
}

impl SpectrumGrid {
    pub fn new(grid: FrequencyGrid, values: Vec<DMatrix<C64>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        let m = values.first().map(|v| v.nrows()).unwrap_or(0);
        if values.iter().any(|v| v.nrows() != m || v.ncols() != m) {
            return Err(Error::DimensionMismatch("spectrum samples differ in shape".into()));
        }
        Ok(Self { grid, values })
    }

    /// Spectrum constant in frequency.
    pub fn constant(grid: FrequencyGrid, value: &DMatrix<f64>) -> Self {
        let v = value.map(|x| C64::new(x, 0.0));
        Self { grid, values: vec![v; grid.len()] }
    }

    pub fn dim(&self) -> usize {
        self.values.first().map(|v| v.nrows()).unwrap_or(0)
    }

    /// Largest deviation from Hermitian symmetry over the grid.
    pub fn hermitian_defect(&self) -> f64 {
        self.values.iter().map(|v| (v - v.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)).fold(0.0, f64::max)
    }

    /// Pointwise inverse.
    pub fn inverse(&self) -> Result<Self> {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| linalg::hermitian_inverse(v).ok_or(Error::NotPositiveDefinite { index: j }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: self.grid, values })
    }

    /// Pointwise `log det`.
    pub fn log_det(&self) -> Result<Vec<f64>> {
        self.values
            .iter()
            .enumerate()
            .map(|(j, v)| linalg::hermitian_logdet(v).ok_or(Error::NotPositiveDefinite { index: j }))
            .collect()
    }

    /// Smallest eigenvalue over the whole grid.
    pub fn min_eigenvalue(&self) -> f64 {
        self.values.iter().map(linalg::min_eigenvalue).fold(f64::INFINITY, f64::min)
    }
}

/// Values of `p` at every grid angle.
pub fn eval_scalar(p: &ScalarTrigPoly, grid: &FrequencyGrid) -> Vec<f64> {
    let k = grid.len();
    let mut out = vec![p.p0; k];
    for (i, c) in p.coeffs.iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        let order = i + 1;
        for (j, v) in out.iter_mut().enumerate() {
            // reduce the angle index modulo K to keep cos arguments small
            let idx = (order * j) % k;
            *v += c * grid.theta(idx).cos();
        }
    }
    out
}

/// Values of `Q` at every grid angle.
pub fn eval_matrix(q: &MatrixTrigPoly, grid: &FrequencyGrid) -> SpectrumGrid {
    let k = grid.len();
    let values = (0..k)
        .map(|j| {
            let m = q.dim();
            let mut out = q.q0.map(|v| C64::new(v, 0.0));
            for (i, qk) in q.qk.iter().enumerate() {
                let idx = ((i + 1) * j) % k;
                let t = grid.theta(idx);
                let e_neg = C64::new(t.cos(), -t.sin()) * 0.5;
                let e_pos = e_neg.conj();
                for a in 0..m {
                    for b in 0..m {
                        out[(a, b)] += e_neg * qk[(a, b)] + e_pos * qk[(b, a)];
                    }
                }
            }
            out
        })
        .collect();
    SpectrumGrid { grid: *grid, values }
}

/// Spectrum `p Q⁻¹` on the grid.
pub fn rational_spectrum(p: &ScalarTrigPoly, q: &MatrixTrigPoly, grid: &FrequencyGrid) -> Result<SpectrumGrid> {
    let pv = eval_scalar(p, grid);
    if let Some(j) = pv.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Infeasible(format!("p is not positive at grid index {j}")));
    }
    let qv = eval_matrix(q, grid);
    let values = qv
        .values
        .iter()
        .zip(&pv)
        .enumerate()
        .map(|(j, (qj, &pj))| {
            linalg::hermitian_inverse(qj)
                .map(|inv| inv * C64::new(pj, 0.0))
                .ok_or_else(|| Error::Infeasible(format!("Q is not positive definite at grid index {j}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumGrid { grid: *grid, values })
}

/// Grid average of real samples.
pub fn integrate(values: &[f64], grid: &FrequencyGrid) -> Result<f64> {
    check_len(values.len(), grid)?;
    Ok(values.iter().sum::<f64>() / grid.len() as f64)
}

/// Grid average of complex samples.
pub fn integrate_complex(values: &[C64], grid: &FrequencyGrid) -> Result<C64> {
    check_len(values.len(), grid)?;
    Ok(values.iter().sum::<C64>() / grid.len() as f64)
}

/// Grid average of matrix samples.
pub fn integrate_matrix(values: &[DMatrix<C64>], grid: &FrequencyGrid) -> Result<DMatrix<C64>> {
    check_len(values.len(), grid)?;
    let m = values.first().map(|v| v.nrows()).unwrap_or(0);
    let mut acc = DMatrix::<C64>::zeros(m, m);
    for v in values {
        acc += v;
    }
    Ok(acc / C64::new(grid.len() as f64, 0.0))
}

fn check_len(len: usize, grid: &FrequencyGrid) -> Result<()> {
    if len != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), got: len });
    }
    Ok(())
}

/// `∫ e^{ikθ} Φ(e^{iθ})` by grid quadrature.
pub fn fourier_coefficient(spec: &SpectrumGrid, k: i64) -> Result<DMatrix<C64>> {
    let n = spec.grid.len();
    if 2 * k.unsigned_abs() as usize >= n {
        return Err(Error::LagOutOfRange { lag: k, points: n });
    }
    let m = spec.dim();
    let mut acc = DMatrix::<C64>::zeros(m, m);
    for (j, v) in spec.values.iter().enumerate() {
        let idx = (k.rem_euclid(n as i64) as usize * j) % n;
        let t = spec.grid.theta(idx);
        acc += v * C64::new(t.cos(), t.sin());
    }
    Ok(acc / C64::new(n as f64, 0.0))
}

/// Real part of a moment matrix, rejecting imaginary parts above tolerance.
pub fn real_moment(z: &DMatrix<C64>) -> Result<DMatrix<f64>> {
    let scale = z.iter().map(|v| v.re.abs()).fold(1.0, f64::max);
    let worst = z.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if worst > IMAG_TOL * scale {
        return Err(Error::ImaginaryResidue { value: worst });
    }
    Ok(z.map(|v| v.re))
}

/// Real part of a scalar moment, rejecting imaginary parts above tolerance.
pub fn real_scalar_moment(z: C64) -> Result<f64> {
    if z.im.abs() > IMAG_TOL * z.re.abs().max(1.0) {
        return Err(Error::ImaginaryResidue { value: z.im.abs() });
    }
    Ok(z.re)
}

/// Result of a cone-membership test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeCheck {
    pub inside: bool,
    /// Smallest pointwise value (scalar) or eigenvalue (matrix).
    pub margin: f64,
}

pub fn cone_membership_scalar(p: &ScalarTrigPoly, grid: &FrequencyGrid) -> ConeCheck {
    let margin = eval_scalar(p, grid).into_iter().fold(f64::INFINITY, f64::min);
    ConeCheck { inside: margin > 0.0, margin }
}

pub fn cone_membership_matrix(q: &MatrixTrigPoly, grid: &FrequencyGrid) -> ConeCheck {
    let margin = eval_matrix(q, grid).min_eigenvalue();
    ConeCheck { inside: margin > 0.0, margin }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(k: usize) -> FrequencyGrid {
        FrequencyGrid::new(k).unwrap()
    }

    #[test]
    fn constant_scalar_is_all_ones() {
        let v = eval_scalar(&ScalarTrigPoly::one(), &grid(16));
        assert!(v.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn scalar_at_zero_and_pi() {
        let p = ScalarTrigPoly::monic(vec![1.0, 0.0]);
        let v = eval_scalar(&p, &grid(8));
        assert!((v[0] - 2.0).abs() < 1e-15);
        assert!(v[4].abs() < 1e-15);
    }

    #[test]
    fn scalar_matches_direct_cosine_sum() {
        let g = grid(8);
        let p = ScalarTrigPoly::monic(vec![0.3, -0.1]);
        let v = eval_scalar(&p, &g);
        for (j, &x) in v.iter().enumerate() {
            let t = 2.0 * PI * j as f64 / 8.0;
            let direct = 1.0 + 0.3 * t.cos() - 0.1 * (2.0 * t).cos();
            assert!((x - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_polynomial_evaluates_to_identity() {
        let s = eval_matrix(&MatrixTrigPoly::identity(3), &grid(8));
        for v in &s.values {
            assert!((v - DMatrix::<C64>::identity(3, 3)).norm() < 1e-15);
        }
    }

    #[test]
    fn scalar_matrix_reduction() {
        let q = MatrixTrigPoly::new(DMatrix::from_element(1, 1, 2.0), vec![DMatrix::from_element(1, 1, 1.0)], None)
            .unwrap();
        let g = grid(16);
        let s = eval_matrix(&q, &g);
        for (j, v) in s.values.iter().enumerate() {
            let want = 2.0 + g.theta(j).cos();
            assert!((v[(0, 0)] - C64::new(want, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn integrate_constant_and_orthogonality() {
        let g = grid(32);
        assert!((integrate(&vec![3.5; 32], &g).unwrap() - 3.5).abs() < 1e-15);
        for k in 1..32 {
            let v: Vec<f64> = (0..32).map(|j| (k as f64 * g.theta(j)).cos()).collect();
            assert!(integrate(&v, &g).unwrap().abs() < 1e-14);
        }
        assert!(integrate(&[1.0; 5], &g).is_err());
    }

    #[test]
    fn integrate_first_harmonic_of_shifted_cosine() {
        // ∫ e^{iθ}(2 + cos θ) dθ/2π = 1/2
        let g = grid(64);
        let v: Vec<C64> = (0..64)
            .map(|j| {
                let t = g.theta(j);
                C64::new(t.cos(), t.sin()) * (2.0 + t.cos())
            })
            .collect();
        let z = integrate_complex(&v, &g).unwrap();
        assert!((z - C64::new(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn fourier_of_identity() {
        let g = grid(16);
        let s = SpectrumGrid::constant(g, &DMatrix::identity(2, 2));
        let c0 = fourier_coefficient(&s, 0).unwrap();
        let c1 = fourier_coefficient(&s, 1).unwrap();
        assert!((c0 - DMatrix::<C64>::identity(2, 2)).norm() < 1e-15);
        assert!(c1.norm() < 1e-15);
        assert!(fourier_coefficient(&s, 8).is_err());
    }

    #[test]
    fn fourier_reads_back_coefficients() {
        // ∫ e^{ikθ} Q = ½ Q_k for k ≥ 1, and Q0 for k = 0
        let q0 = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.0]);
        let q1 = DMatrix::from_row_slice(2, 2, &[0.2, -0.4, 0.7, 0.1]);
        let q2 = DMatrix::from_row_slice(2, 2, &[0.05, 0.3, -0.2, 0.0]);
        let q = MatrixTrigPoly::new(q0.clone(), vec![q1.clone(), q2.clone()], None).unwrap();
        let s = eval_matrix(&q, &grid(16));
        let r0 = real_moment(&fourier_coefficient(&s, 0).unwrap()).unwrap();
        let r1 = real_moment(&fourier_coefficient(&s, 1).unwrap()).unwrap();
        let r2 = real_moment(&fourier_coefficient(&s, 2).unwrap()).unwrap();
        let rm1 = real_moment(&fourier_coefficient(&s, -1).unwrap()).unwrap();
        assert!((r0 - q0).amax() < 1e-14);
        assert!((r1 - &q1 * 0.5).amax() < 1e-14);
        assert!((r2 - q2 * 0.5).amax() < 1e-14);
        assert!((rm1 - q1.transpose() * 0.5).amax() < 1e-14);
    }

    #[test]
    fn cone_checks() {
        let g = grid(64);
        let c = cone_membership_scalar(&ScalarTrigPoly::one(), &g);
        assert!(c.inside && c.margin == 1.0);
        let c = cone_membership_scalar(&ScalarTrigPoly::monic(vec![2.0, 0.0]), &g);
        assert!(!c.inside && (c.margin + 1.0).abs() < 1e-14);
    }

    #[test]
    fn cone_rejects_large_first_coefficient() {
        // Q1 = 3·I gives Q(θ) = (1 + 3cos θ) I, negative near θ = π.
        let q = MatrixTrigPoly::new(DMatrix::identity(2, 2), vec![DMatrix::identity(2, 2) * 3.0], None).unwrap();
        let c = cone_membership_matrix(&q, &grid(256));
        assert!(!c.inside);
        assert!((c.margin + 2.0).abs() < 1e-12);
    }

    #[test]
    fn mask_violation_rejected() {
        let mask = EdgeSet::empty(2);
        let q0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0]);
        assert!(MatrixTrigPoly::new(q0, vec![], Some(mask)).is_err());
    }

    #[test]
    fn edge_set_is_symmetric_with_diagonal() {
        let e = EdgeSet::from_pairs(4, &[(0, 2), (3, 1)]).unwrap();
        for j in 0..4 {
            assert!(e.contains(j, j));
            for h in 0..4 {
                assert_eq!(e.contains(j, h), e.contains(h, j));
            }
        }
        assert_eq!(e.off_diagonal_edges(), vec![(2, 0), (3, 1)]);
    }
}
