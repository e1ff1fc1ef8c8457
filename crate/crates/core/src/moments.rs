//! Covariance lags, the lag-windowed periodogram and cepstral coefficients,
//! either estimated from data or computed from a known model.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqgrid::{fourier_coefficient, real_moment, real_scalar_moment, FrequencyGrid, SpectrumGrid};
use crate::linalg;
use crate::model::ArmaGraphicalModel;

/// Multivariate time series, one row per time sample.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    data: DMatrix<f64>,
}

impl TimeSeries {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::InvalidInput(format!("time series needs N ≥ 2 samples, got {}", data.nrows())));
        }
        if data.ncols() == 0 {
            return Err(Error::InvalidInput("time series has no channels".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("time series contains non-finite values".into()));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidInput("rows differ in length".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), m, |t, j| rows[t][j]))
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Reorders channels: column `j` moves to position `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.data.clone();
        for (j, &to) in perm.iter().enumerate() {
            out.set_column(to, &self.data.column(j));
        }
        Self { data: out }
    }

    /// Reads the CSV layout `ch1,...,chm` header plus one row per sample.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Csv { line: 1, message: e.to_string() })?.clone();
        let m = headers.len();
        for (j, name) in headers.iter().enumerate() {
            if name.trim() != format!("ch{}", j + 1) {
                return Err(Error::Csv { line: 1, message: format!("expected header ch{}, found {name:?}", j + 1) });
            }
        }
        let mut values = Vec::new();
        let mut rows = 0usize;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                Error::Csv { line, message: e.to_string() }
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(rows + 2);
            if rec.len() != m {
                return Err(Error::Csv { line, message: format!("expected {m} fields, found {}", rec.len()) });
            }
            for field in rec.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Csv { line, message: format!("cannot parse {field:?} as a number") })?;
                if !v.is_finite() {
                    return Err(Error::Csv { line, message: "non-finite value".into() });
                }
                values.push(v);
            }
            rows += 1;
        }
        if rows < 2 {
            return Err(Error::Csv { line: rows + 1, message: "need at least two samples".into() });
        }
        Self::new(DMatrix::from_row_slice(rows, m, &values))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=self.dim()).map(|j| format!("ch{j}")).collect();
        w.write_record(&header).map_err(csv_io)?;
        for t in 0..self.len() {
            let row: Vec<String> = (0..self.dim()).map(|j| format!("{}", self.data[(t, j)])).collect();
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Covariance lags `R_0..R_n`; negative lags are `R_{-k} = R_kᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceSeq {
    pub lags: Vec<DMatrix<f64>>,
}

impl CovarianceSeq {
    pub fn new(lags: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(r0) = lags.first() else {
            return Err(Error::InvalidInput("covariance sequence needs at least R_0".into()));
        };
        let m = r0.nrows();
        if lags.iter().any(|r| r.nrows() != m || r.ncols() != m) {
            return Err(Error::DimensionMismatch("covariance lags differ in shape".into()));
        }
        if (r0 - r0.transpose()).amax() > 1e-10 * (1.0 + r0.amax()) {
            return Err(Error::InvalidInput("R_0 is not symmetric".into()));
        }
        Ok(Self { lags })
    }

    pub fn dim(&self) -> usize {
        self.lags[0].nrows()
    }

    /// Largest lag `n`.
    pub fn order(&self) -> usize {
        self.lags.len() - 1
    }

    pub fn lag(&self, k: i64) -> DMatrix<f64> {
        if k >= 0 {
            self.lags[k as usize].clone()
        } else {
            self.lags[(-k) as usize].transpose()
        }
    }

    pub fn truncated(&self, n: usize) -> Self {
        Self { lags: self.lags[..=n].to_vec() }
    }
}

/// Cepstral coefficients `c_0..c_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CepstralSeq {
    pub values: Vec<f64>,
}

impl CepstralSeq {
    pub fn order(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn truncated(&self, n: usize) -> Self {
        Self { values: self.values[..=n].to_vec() }
    }
}

/// Lag window used by the correlogram.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LagWindow {
    /// Triangular taper `1 - |k|/h`; keeps the estimate positive semidefinite.
    #[default]
    Bartlett,
    /// Plain truncation at `|k| < h`; may be indefinite.
    Rectangular,
}

impl LagWindow {
    fn weight(self, k: usize, h: usize) -> f64 {
        match self {
            LagWindow::Bartlett => 1.0 - k as f64 / h as f64,
            LagWindow::Rectangular => 1.0,
        }
    }
}

/// Biased sample covariances `R̂_k = (1/N) Σ_t y(t+k) y(t)ᵀ`, `k = 0..n`.
pub fn sample_covariances(y: &TimeSeries, n: usize) -> Result<CovarianceSeq> {
    let big_n = y.len();
    if n >= big_n {
        return Err(Error::InvalidInput(format!("lag count {n} must be below the series length {big_n}")));
    }
    let d = y.data();
    let m = y.dim();
    let lags = (0..=n)
        .map(|k| {
            // y(t+k) y(t)ᵀ summed: rows k.. against rows ..N-k
            let ahead = d.rows(k, big_n - k);
            let behind = d.rows(0, big_n - k);
            let mut r = ahead.transpose() * behind;
            r /= big_n as f64;
            if k == 0 {
                // exact symmetry regardless of summation order
                r = (&r + r.transpose()) * 0.5;
            }
            debug_assert_eq!(r.nrows(), m);
            r
        })
        .collect();
    CovarianceSeq::new(lags)
}

/// Default lag window length `h(N) = ⌈N^{1/3}⌉`, computed exactly for
/// perfect cubes.
pub fn default_window(n: usize) -> usize {
    let mut h = (n as f64).cbrt().floor() as usize;
    // correct floating-point error in either direction
    while h * h * h > n {
        h -= 1;
    }
    while (h + 1) * (h + 1) * (h + 1) <= n {
        h += 1;
    }
    if h * h * h == n {
        h
    } else {
        h + 1
    }
}

/// Lag-windowed periodogram with the default Bartlett window.
pub fn periodogram(y: &TimeSeries, h: usize, grid: &FrequencyGrid) -> Result<SpectrumGrid> {
    periodogram_with(y, h, grid, LagWindow::Bartlett)
}

/// `Φ̂_P(θ) = Σ_{|k|<h} w_k R̂_k e^{-iθk}` followed by an eigenvalue floor
/// `1e-8 · tr(R̂_0)/m`.
pub fn periodogram_with(y: &TimeSeries, h: usize, grid: &FrequencyGrid, window: LagWindow) -> Result<SpectrumGrid> {
    if h == 0 || h >= y.len() {
        return Err(Error::InvalidInput(format!("window length {h} must satisfy 1 ≤ h < N = {}", y.len())));
    }
    grid.validate_degree(h)?;
    let r = sample_covariances(y, h - 1)?;
    let m = y.dim();
    let floor = 1e-8 * r.lags[0].trace() / m as f64;
    if !(floor > 0.0) {
        return Err(Error::InvalidInput("series has zero variance".into()));
    }
    let k_pts = grid.len();
    // only the upper half is computed; the rest is its conjugate mirror, so
    // the floor is applied symmetrically and all moments stay real
    let half = k_pts / 2;
    let mut values: Vec<DMatrix<C64>> = (0..=half)
        .map(|j| {
            let mut v = r.lags[0].map(|x| C64::new(x, 0.0));
            for k in 1..h {
                let w = window.weight(k, h);
                let t = grid.theta((k * j) % k_pts);
                let e_neg = C64::new(t.cos(), -t.sin()) * w;
                let e_pos = e_neg.conj();
                let rk = &r.lags[k];
                for a in 0..m {
                    for b in 0..m {
                        v[(a, b)] += e_neg * rk[(a, b)] + e_pos * rk[(b, a)];
                    }
                }
            }
            floor_eigenvalues(v, floor)
        })
        .collect();
    for j in (half + 1)..k_pts {
        values.push(values[k_pts - j].map(|z| z.conj()));
    }
    SpectrumGrid::new(*grid, values)
}

fn floor_eigenvalues(v: DMatrix<C64>, floor: f64) -> DMatrix<C64> {
    let m = v.nrows();
    let shifted = &v - DMatrix::<C64>::identity(m, m) * C64::new(floor, 0.0);
    if linalg::hermitian_logdet(&shifted).is_some() {
        return v;
    }
    let eig = nalgebra::SymmetricEigen::new(v);
    let vals = eig.eigenvalues.map(|e| C64::new(e.max(floor), 0.0));
    let u = &eig.eigenvectors;
    let out = u * DMatrix::from_diagonal(&vals) * u.adjoint();
    (&out + out.adjoint()) * C64::new(0.5, 0.0)
}

/// `c_k = ∫ e^{iθk} log det Φ`, `k = 0..n`.
pub fn cepstral_coefficients(phi: &SpectrumGrid, n: usize) -> Result<CepstralSeq> {
    let k_pts = phi.grid.len();
    if 2 * n >= k_pts {
        return Err(Error::LagOutOfRange { lag: n as i64, points: k_pts });
    }
    let logdet = phi.log_det()?;
    let values = (0..=n)
        .map(|k| {
            let mut z = C64::new(0.0, 0.0);
            for (j, ld) in logdet.iter().enumerate() {
                let t = phi.grid.theta((k * j) % k_pts);
                z += C64::new(t.cos(), t.sin()) * *ld;
            }
            real_scalar_moment(z / k_pts as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CepstralSeq { values })
}

/// Covariance lags `R_0..R_n` of a spectrum by quadrature.
pub fn spectrum_covariances(phi: &SpectrumGrid, n: usize) -> Result<CovarianceSeq> {
    let lags = (0..=n)
        .map(|k| {
            let z = fourier_coefficient(phi, k as i64)?;
            let r = real_moment(&z)?;
            Ok(if k == 0 { (&r + r.transpose()) * 0.5 } else { r })
        })
        .collect::<Result<Vec<_>>>()?;
    CovarianceSeq::new(lags)
}

/// Exact covariance lags and cepstral coefficients (orders `0..=n`) of the
/// model spectrum `p Q⁻¹`.
pub fn exact_moments(
    model: &ArmaGraphicalModel,
    n: usize,
    grid: &FrequencyGrid,
) -> Result<(CovarianceSeq, CepstralSeq)> {
    let phi = model.spectrum(grid)?;
    Ok((spectrum_covariances(&phi, n)?, cepstral_coefficients(&phi, n)?))
}

/// Everything the estimators need from a data record.
#[derive(Clone, Debug)]
pub struct MomentEstimates {
    pub r: CovarianceSeq,
    pub c: CepstralSeq,
    pub phi_p: SpectrumGrid,
    /// Cepstral coefficients up to the window length, the series `ψ̂`.
    pub psi_hat: CepstralSeq,
    pub n_obs: usize,
    pub window: usize,
}

impl MomentEstimates {
    /// Sample moments: covariances up to `n_q`, cepstra up to `n_p`, all from
    /// the same lag window `h` (default `⌈N^{1/3}⌉`).
    pub fn from_series(
        y: &TimeSeries,
        n_q: usize,
        n_p: usize,
        h: Option<usize>,
        grid: &FrequencyGrid,
        window: LagWindow,
    ) -> Result<Self> {
        let h = h.unwrap_or_else(|| default_window(y.len()));
        let phi_p = periodogram_with(y, h, grid, window)?;
        let r = sample_covariances(y, n_q)?;
        let psi_hat = cepstral_coefficients(&phi_p, (h - 1).max(n_p))?;
        let c = psi_hat.truncated(n_p);
        Ok(Self { r, c, phi_p, psi_hat, n_obs: y.len(), window: h })
    }

    /// Noiseless moments of a known model; the true spectrum stands in for
    /// the periodogram and `n_obs` is the nominal sample size used to scale
    /// the likelihood.
    pub fn exact(
        model: &ArmaGraphicalModel,
        n_q: usize,
        n_p: usize,
        n_obs: usize,
        grid: &FrequencyGrid,
    ) -> Result<Self> {
        let phi = model.spectrum(grid)?;
        let r = spectrum_covariances(&phi, n_q)?;
        let psi_hat = cepstral_coefficients(&phi, n_p.max(n_q))?;
        let c = psi_hat.truncated(n_p);
        Ok(Self { r, c, phi_p: phi, psi_hat, n_obs, window: 0 })
    }
}
