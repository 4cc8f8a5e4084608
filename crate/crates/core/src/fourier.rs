//! Discrete Fourier coefficients of periodic, uniformly sampled series.
//!
//! Convention: `X_m = (1/M) sum_j x(t_j) exp(-i 2 pi m j / M)`, so a real
//! `cos(w0 t)` has `X_{+1} = X_{-1} = 1/2`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Harmonic vectors `X_m`, `m` in `[-nf, nf]`, of a vector-valued series.
#[derive(Debug, Clone, PartialEq)]
pub struct Harmonics {
    nf: usize,
    /// `dim x (2 nf + 1)`, column `m + nf` holds `X_m`.
    coeffs: DMatrix<Complex64>,
}

impl Harmonics {
    pub fn nf(&self) -> usize {
        self.nf
    }

    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    /// `X_m`, or `None` outside `[-nf, nf]`.
    pub fn vector(&self, m: i64) -> Option<DVector<Complex64>> {
        self.column_index(m).map(|c| self.coeffs.column(c).into_owned())
    }

    /// Component `row` of `X_m`; zero outside the truncation window.
    #[inline]
    pub fn coeff(&self, m: i64, row: usize) -> Complex64 {
        match self.column_index(m) {
            Some(c) => self.coeffs[(row, c)],
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// `sum_s X_a[s] * conj(Y_b[s])`; zero if either index is truncated.
    #[inline]
    pub fn dot_conj(&self, a: i64, other: &Harmonics, b: i64) -> Complex64 {
        match (self.column_index(a), other.column_index(b)) {
            (Some(ca), Some(cb)) => self
                .coeffs
                .column(ca)
                .iter()
                .zip(other.coeffs.column(cb).iter())
                .map(|(x, y)| x * y.conj())
                .sum(),
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// `sum_m ||X_m||^2`.
    pub fn power(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }

    #[inline]
    fn column_index(&self, m: i64) -> Option<usize> {
        let nf = self.nf as i64;
        (-nf..=nf).contains(&m).then(|| (m + nf) as usize)
    }
}

fn check_grid(nf: usize, grid: usize) -> Result<()> {
    if grid < 4 * nf.max(1) {
        return Err(Error::Aliasing { nf, grid });
    }
    Ok(())
}

fn full_spectrum(series: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let (dim, len) = series.shape();
    let fft = FftPlanner::new().plan_fft_forward(len);
    let mut out = DMatrix::zeros(dim, len);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    let scale = 1.0 / len as f64;
    for r in 0..dim {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = series[(r, j)];
        }
        fft.process(&mut buf);
        for (j, b) in buf.iter().enumerate() {
            out[(r, j)] = b * scale;
        }
    }
    out
}

/// Harmonics `[-nf, nf]` of a `dim x M` complex series sampled on `[0, T)`.
pub fn harmonics(series: &DMatrix<Complex64>, nf: usize) -> Result<Harmonics> {
    let len = series.ncols();
    check_grid(nf, len)?;
    let full = full_spectrum(series);
    let mut coeffs = DMatrix::zeros(series.nrows(), 2 * nf + 1);
    for m in -(nf as i64)..=nf as i64 {
        let src = m.rem_euclid(len as i64) as usize;
        coeffs.set_column((m + nf as i64) as usize, &full.column(src));
    }
    Ok(Harmonics { nf, coeffs })
}

/// Harmonics of a real `dim x M` series.
pub fn real_harmonics(series: &DMatrix<f64>, nf: usize) -> Result<Harmonics> {
    harmonics(&series.map(|v| Complex64::new(v, 0.0)), nf)
}

/// Spectral time derivative of a real periodic series with period `period`.
/// The Nyquist bin (even `M`) is dropped.
pub fn spectral_derivative(series: &DMatrix<f64>, period: f64) -> DMatrix<f64> {
    let (dim, len) = series.shape();
    let mut spec = full_spectrum(&series.map(|v| Complex64::new(v, 0.0)));
    let w0 = 2.0 * std::f64::consts::PI / period;
    for j in 0..len {
        let m = if j <= len / 2 { j as i64 } else { j as i64 - len as i64 };
        let factor = if len % 2 == 0 && j == len / 2 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, w0 * m as f64)
        };
        for r in 0..dim {
            spec[(r, j)] *= factor;
        }
    }
    let ifft = FftPlanner::new().plan_fft_inverse(len);
    let mut out = DMatrix::zeros(dim, len);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for r in 0..dim {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = spec[(r, j)];
        }
        ifft.process(&mut buf);
        for (j, b) in buf.iter().enumerate() {
            out[(r, j)] = b.re;
        }
    }
    out
}
