//! ARMA graphical model `Φ = p Q⁻¹` with topology `E`, and its JSON form.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqgrid::{
    cone_membership_matrix, cone_membership_scalar, eval_matrix, eval_scalar, rational_spectrum, EdgeSet,
    FrequencyGrid, MatrixTrigPoly, ScalarTrigPoly, SpectrumGrid,
};

#[derive(Clone, Debug, PartialEq)]
pub struct ArmaGraphicalModel {
    pub p: ScalarTrigPoly,
    pub q: MatrixTrigPoly,
    pub edges: EdgeSet,
    pub lambda: Option<f64>,
    pub provenance: BTreeMap<String, serde_json::Value>,
}

impl ArmaGraphicalModel {
    pub fn new(p: ScalarTrigPoly, q: MatrixTrigPoly, edges: EdgeSet) -> Result<Self> {
        if edges.dim() != q.dim() {
            return Err(Error::DimensionMismatch("edge set and Q differ in dimension".into()));
        }
        Ok(Self { p, q, edges, lambda: None, provenance: BTreeMap::new() })
    }

    /// White noise with identity spectrum.
    pub fn white_noise(m: usize) -> Self {
        Self {
            p: ScalarTrigPoly::one(),
            q: MatrixTrigPoly::identity(m),
            edges: EdgeSet::empty(m),
            lambda: None,
            provenance: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    pub fn is_feasible(&self, grid: &FrequencyGrid) -> bool {
        cone_membership_scalar(&self.p, grid).inside && cone_membership_matrix(&self.q, grid).inside
    }

    /// `Φ = p Q⁻¹` sampled on the grid.
    pub fn spectrum(&self, grid: &FrequencyGrid) -> Result<SpectrumGrid> {
        rational_spectrum(&self.p, &self.q, grid)
    }

    /// `Φ⁻¹ = Q / p` sampled on the grid, without any matrix inversion.
    pub fn inverse_spectrum(&self, grid: &FrequencyGrid) -> Result<SpectrumGrid> {
        let pv = eval_scalar(&self.p, grid);
        if pv.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Infeasible("p is not positive on the grid".into()));
        }
        let mut qv = eval_matrix(&self.q, grid);
        for (v, p) in qv.values.iter_mut().zip(pv) {
            *v /= C64::new(p, 0.0);
        }
        Ok(qv)
    }

    pub fn to_json(&self) -> ModelJson {
        let m = self.dim();
        let flat = |c: &DMatrix<f64>| {
            let mut v = Vec::with_capacity(m * m);
            for i in 0..m {
                for j in 0..m {
                    v.push(c[(i, j)]);
                }
            }
            v
        };
        let mut edges = Vec::new();
        for j in 0..m {
            for h in j..m {
                if self.edges.contains(j, h) {
                    edges.push([j + 1, h + 1]);
                }
            }
        }
        ModelJson {
            m,
            n_p: self.p.degree(),
            n_q: self.q.degree(),
            p_coeffs: self.p.coeffs.clone(),
            q0: flat(&self.q.q0),
            qk: self.q.qk.iter().map(flat).collect(),
            edges,
            lambda: self.lambda,
            provenance: self.provenance.clone(),
        }
    }

    pub fn from_json(j: &ModelJson) -> Result<Self> {
        let m = j.m;
        let mat = |v: &[f64], what: &str| -> Result<DMatrix<f64>> {
            if v.len() != m * m {
                return Err(Error::InvalidInput(format!("{what} has {} entries, expected {}", v.len(), m * m)));
            }
            Ok(DMatrix::from_row_slice(m, m, v))
        };
        if j.p_coeffs.len() != j.n_p || j.qk.len() != j.n_q {
            return Err(Error::InvalidInput("declared degrees disagree with coefficient arrays".into()));
        }
        let q0 = mat(&j.q0, "Q0")?;
        let qk = j.qk.iter().enumerate().map(|(k, v)| mat(v, &format!("Qk[{k}]"))).collect::<Result<Vec<_>>>()?;
        let mut edges = EdgeSet::empty(m);
        for &[a, b] in &j.edges {
            if a == 0 || b == 0 || a > m || b > m {
                return Err(Error::InvalidInput(format!("edge [{a},{b}] out of range (1-indexed, m={m})")));
            }
            edges.insert(a - 1, b - 1);
        }
        let q = MatrixTrigPoly::new(q0, qk, None)?;
        Ok(Self {
            p: ScalarTrigPoly::monic(j.p_coeffs.clone()),
            q,
            edges,
            lambda: j.lambda,
            provenance: j.provenance.clone(),
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(&self.to_json())?;
        std::fs::write(path, s + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        let j: ModelJson = serde_json::from_str(&s)?;
        Self::from_json(&j)
    }
}

/// Serialized model. Matrices are row-major, edges are 1-indexed `[j, h]`
/// pairs with `j ≤ h` (diagonal included), `p_coeffs` holds `p_1..p_{n_p}`
/// (the constant term is always one).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    pub m: usize,
    pub n_p: usize,
    pub n_q: usize,
    pub p_coeffs: Vec<f64>,
    #[serde(rename = "Q0")]
    pub q0: Vec<f64>,
    #[serde(rename = "Qk")]
    pub qk: Vec<Vec<f64>>,
    pub edges: Vec<[usize; 2]>,
    pub lambda: Option<f64>,
    #[serde(default)]
    pub provenance: BTreeMap<String, serde_json::Value>,
}
