//! Phase, amplitude and cross-correlation spectra over an offset sweep.
//!
//! All densities are per hertz, normalized to the carrier power of the
//! observation node at harmonic `nu`, and evaluated at the angular offset
//! `omega_m = omega - nu omega0`.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise_ops::{NodeOperators, NoiseOperators};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Lin,
    Log,
}

/// Offset-frequency sweep in hertz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub start: f64,
    pub stop: f64,
    pub kind: SweepKind,
    /// Total points (lin) or points per decade (log).
    pub points: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.start > 0.0) || !self.stop.is_finite() {
            return Err(Error::Config(format!(
                "sweep start must be positive and finite, got {}..{}",
                self.start, self.stop
            )));
        }
        if !(self.stop > self.start) {
            return Err(Error::Config(format!(
                "sweep start {} must be below stop {}",
                self.start, self.stop
            )));
        }
        let min = match self.kind {
            SweepKind::Lin => 10,
            SweepKind::Log => 3,
        };
        if self.points < min {
            let what = match self.kind {
                SweepKind::Lin => "points",
                SweepKind::Log => "points per decade",
            };
            return Err(Error::Config(format!(
                "sweep needs at least {min} {what}, got {}",
                self.points
            )));
        }
        Ok(())
    }
}

/// Sweep frequencies with both endpoints included.
pub fn generate_sweep(spec: &SweepSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok(match spec.kind {
        SweepKind::Lin => {
            let n = spec.points;
            let step = (spec.stop - spec.start) / (n - 1) as f64;
            (0..n)
                .map(|i| if i + 1 == n { spec.stop } else { spec.start + step * i as f64 })
                .collect()
        }
        SweepKind::Log => {
            let per = spec.points as f64;
            let decades = (spec.stop / spec.start).log10();
            let steps = (decades * per + 1e-9).floor() as usize;
            let mut f: Vec<f64> = (0..=steps)
                .map(|i| spec.start * 10f64.powf(i as f64 / per))
                .collect();
            let last = f.last_mut().unwrap();
            if (*last - spec.stop).abs() <= 1e-9 * spec.stop {
                *last = spec.stop;
            } else {
                f.push(spec.stop);
            }
            f
        }
    })
}

/// One term of the double sums in the phase, amplitude and cross spectra:
/// `[Re th (2|mu_r| + w0^2 rho^2 c) + 2 Im th (w_m + mu_i)] /
///  [(|mu_r| + w0^2 rho^2 c / 2)^2 + (w_m + mu_i)^2]`.
#[inline]
fn kernel(theta: Complex64, mu: Complex64, rho: i64, omega_m: f64, omega0: f64, c: f64) -> f64 {
    let diff = omega0 * omega0 * (rho * rho) as f64 * c;
    let a = mu.re.abs() + 0.5 * diff;
    let b = omega_m + mu.im;
    (theta.re * (2.0 * mu.re.abs() + diff) + 2.0 * theta.im * b) / (a * a + b * b)
}

/// `sum_l sum_rho kernel(table[l][rho], mu_{l + shift})`.
fn table_sum(table: &[Vec<Complex64>], ops: &NoiseOperators, shift: usize, omega_m: f64) -> f64 {
    let nf = ops.nf as i64;
    table
        .iter()
        .enumerate()
        .map(|(l0, row)| {
            // l = l0 + 1 and the mode is l + shift (one-based)
            let mu = ops.exponents[l0 + shift];
            row.iter()
                .enumerate()
                .map(|(r, th)| kernel(*th, mu, r as i64 - nf, omega_m, ops.omega0, ops.c))
                .sum::<f64>()
        })
        .sum()
}

/// Carrier-line denominator `(w0^2 nu^2 c / 2)^2 + w_m^2`.
#[inline]
fn line_denominator(ops: &NoiseOperators, omega_m: f64) -> (f64, f64) {
    let nu = ops.nu as f64;
    let width = ops.omega0 * ops.omega0 * nu * nu * ops.c;
    (width, 0.25 * width * width + omega_m * omega_m)
}

/// Phase-noise density.
pub fn pnoise_at(omega_m: f64, ops: &NoiseOperators, node: &NodeOperators) -> f64 {
    let (width, den) = line_denominator(ops, omega_m);
    let lead = ((1.0 - node.a_b.re) * width - 2.0 * node.a_b.im * omega_m) / den;
    lead + table_sum(&node.theta, ops, 1, omega_m)
}

/// Amplitude-noise density; zero when no amplitude mode is retained.
pub fn anoise_at(omega_m: f64, ops: &NoiseOperators, node: &NodeOperators) -> f64 {
    table_sum(&node.pi, ops, ops.k, omega_m)
}

/// Signed phase-amplitude cross-correlation density.
pub fn xnoise_at(omega_m: f64, ops: &NoiseOperators, node: &NodeOperators) -> f64 {
    let (width, den) = line_denominator(ops, omega_m);
    let lead = -(node.t_u.re * width + 2.0 * node.t_u.im * omega_m) / den;
    lead + table_sum(&node.xi, ops, 1, omega_m)
}

/// Closed-form single-oscillator spectra `(L, A, R)`, written out
/// independently of the general `k` path.
pub fn reduced_single_osc(omega_m: f64, ops: &NoiseOperators, node: &NodeOperators) -> Result<(f64, f64, f64)> {
    if ops.k != 1 {
        return Err(Error::Contract(format!(
            "single-oscillator expressions need k = 1, got k = {}",
            ops.k
        )));
    }
    let w2c = ops.omega0 * ops.omega0 * ops.c;
    let nu2 = (ops.nu * ops.nu) as f64;
    let half = 0.5 * w2c * nu2;
    let line = half * half + omega_m * omega_m;
    let phase = w2c * nu2 / line;

    let mut amp = 0.0;
    let mut cross = -(node.t_u.re * w2c * nu2 + 2.0 * node.t_u.im * omega_m) / line;
    let nf = ops.nf as i64;
    for l in 1..ops.exponents.len() {
        let mu = ops.exponents[l];
        for rho in -nf..=nf {
            let idx = (rho + nf) as usize;
            let r2 = (rho * rho) as f64;
            let re = mu.re.abs() + 0.5 * w2c * r2;
            let im = omega_m + mu.im;
            let den = re * re + im * im;
            let w = node.pi[l - 1][idx];
            let e = node.xi[l - 1][idx];
            amp += (w.re * (2.0 * mu.re.abs() + w2c * r2) + 2.0 * w.im * im) / den;
            cross += (e.re * (2.0 * mu.re.abs() + w2c * r2) + 2.0 * e.im * im) / den;
        }
    }
    Ok((phase, amp, cross))
}

/// `10 log10` of a density; non-positive values map to NaN.
pub fn to_db(v: f64) -> f64 {
    if v > 0.0 { 10.0 * v.log10() } else { f64::NAN }
}

/// Swept spectra of one observation node.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumDataset {
    pub node: String,
    pub nu: usize,
    /// Offset frequencies (Hz).
    pub freqs: Vec<f64>,
    pub pnoise_dbc: Vec<f64>,
    /// `None` when no amplitude mode is retained.
    pub anoise_dbc: Option<Vec<f64>>,
    pub xnoise_signed: Vec<f64>,
    pub xnoise_db: Vec<f64>,
}

impl SpectrumDataset {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Base file stem `<node>` or `<node>.nu<nu>` for higher harmonics.
    pub fn stem(&self) -> String {
        if self.nu == 1 {
            self.node.clone()
        } else {
            format!("{}.nu{}", self.node, self.nu)
        }
    }

    /// All columns: `f_offset_hz,pnoise_dbc,anoise_dbc,xnoise_signed,xnoise_db`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "f_offset_hz,pnoise_dbc,anoise_dbc,xnoise_signed,xnoise_db")?;
        for i in 0..self.len() {
            let an = self
                .anoise_dbc
                .as_ref()
                .map(|a| format!("{:.10e}", a[i]))
                .unwrap_or_default();
            writeln!(
                w,
                "{:.10e},{:.10e},{},{:.10e},{:.10e}",
                self.freqs[i], self.pnoise_dbc[i], an, self.xnoise_signed[i], self.xnoise_db[i]
            )?;
        }
        Ok(())
    }

    /// `f_offset_hz,pnoise_dbc`.
    pub fn write_pn_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "f_offset_hz,pnoise_dbc")?;
        for (f, p) in self.freqs.iter().zip(&self.pnoise_dbc) {
            writeln!(w, "{f:.10e},{p:.10e}")?;
        }
        Ok(())
    }

    /// `f_offset_hz,anoise_dbc`; header only when no amplitude mode exists.
    pub fn write_an_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "f_offset_hz,anoise_dbc")?;
        if let Some(a) = &self.anoise_dbc {
            for (f, v) in self.freqs.iter().zip(a) {
                writeln!(w, "{f:.10e},{v:.10e}")?;
            }
        }
        Ok(())
    }

    /// `f_offset_hz,xnoise_signed,xnoise_db`.
    pub fn write_xn_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "f_offset_hz,xnoise_signed,xnoise_db")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{:.10e},{:.10e},{:.10e}",
                self.freqs[i], self.xnoise_signed[i], self.xnoise_db[i]
            )?;
        }
        Ok(())
    }
}

/// Evaluate all three spectra of every node at every sweep frequency.
pub fn assemble_datasets(ops: &NoiseOperators, freqs: &[f64]) -> Vec<SpectrumDataset> {
    let has_amp = ops.retained() > ops.k;
    ops.nodes
        .iter()
        .map(|node| {
            let rows: Vec<(f64, f64, f64)> = freqs
                .par_iter()
                .map(|f| {
                    let wm = 2.0 * std::f64::consts::PI * f;
                    (
                        pnoise_at(wm, ops, node),
                        anoise_at(wm, ops, node),
                        xnoise_at(wm, ops, node),
                    )
                })
                .collect();
            SpectrumDataset {
                node: node.node.clone(),
                nu: ops.nu,
                freqs: freqs.to_vec(),
                pnoise_dbc: rows.iter().map(|r| to_db(r.0)).collect(),
                anoise_dbc: has_amp.then(|| rows.iter().map(|r| to_db(r.1)).collect()),
                xnoise_signed: rows.iter().map(|r| r.2).collect(),
                xnoise_db: rows.iter().map(|r| to_db(r.2.abs())).collect(),
            }
        })
        .collect()
}
