//! Monte-Carlo reference: direct stochastic integration of the noisy
//! circuit and averaged periodograms.
//!
//! Only the model definition is shared with the Floquet path. The stepper,
//! spectral estimator and diffusion estimate are written out here.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::model::CircuitModel;
use crate::pss::PssSolution;

/// Default master seed.
pub const DEFAULT_SEED: u64 = 0x5EED;

/// Newton iterations per implicit step before giving up.
const NEWTON_MAX: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub n_paths: usize,
    /// Integration step (s).
    pub dt: f64,
    /// Simulated time per path (s).
    pub duration: f64,
    pub seed: u64,
    /// Periodogram segment length (s).
    pub window: f64,
    /// Recorded samples are boxcar means over this many steps.
    pub stride: usize,
}

impl McConfig {
    /// Defaults for a limit cycle of period `t0`: 32 paths of 200 periods at
    /// `t0 / 200`, 20-period segments.
    pub fn for_period(t0: f64) -> Self {
        Self {
            n_paths: 32,
            dt: t0 / 200.0,
            duration: 200.0 * t0,
            seed: DEFAULT_SEED,
            window: 20.0 * t0,
            stride: 8,
        }
    }

    pub fn validate(&self, t0: f64) -> Result<()> {
        if !(self.dt > 0.0) || self.dt > t0 / 200.0 * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "Monte-Carlo dt = {:.3e} s must be positive and at most T0/200 = {:.3e} s",
                self.dt,
                t0 / 200.0
            )));
        }
        if !(self.duration >= 50.0 * t0 * (1.0 - 1e-12)) {
            return Err(Error::Config(format!(
                "Monte-Carlo duration {:.3e} s is shorter than 50 periods ({:.3e} s)",
                self.duration,
                50.0 * t0
            )));
        }
        if self.n_paths < 8 {
            return Err(Error::Config(format!(
                "Monte-Carlo needs at least 8 paths, got {}",
                self.n_paths
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("Monte-Carlo stride must be at least 1".into()));
        }
        if !(self.window > 0.0) || self.window * 4.0 > self.duration * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "periodogram window {:.3e} s must fit at least 4 times into the duration {:.3e} s",
                self.window, self.duration
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Sample interval of the recorded series.
    pub fn record_dt(&self) -> f64 {
        self.dt * self.stride as f64
    }
}

/// One simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    /// Decimated samples per observed node.
    pub samples: Vec<Vec<f64>>,
    /// Rising crossings of each node through its limit-cycle mean (s).
    pub crossings: Vec<Vec<f64>>,
}

/// All paths of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct McRun {
    pub nodes: Vec<usize>,
    pub record_dt: f64,
    pub paths: Vec<PathRecord>,
}

impl McRun {
    /// Recorded series of node slot `slot` for every path.
    pub fn series(&self, slot: usize) -> Vec<&[f64]> {
        self.paths.iter().map(|p| p.samples[slot].as_slice()).collect()
    }

    /// Crossing times of node slot `slot` for every path.
    pub fn crossings(&self, slot: usize) -> Vec<&[f64]> {
        self.paths.iter().map(|p| p.crossings[slot].as_slice()).collect()
    }

    /// Carrier frequency from the mean crossing interval over all paths.
    pub fn carrier_frequency(&self, slot: usize) -> Option<f64> {
        let (mut span, mut count) = (0.0, 0usize);
        for c in self.crossings(slot) {
            if c.len() >= 2 {
                span += c[c.len() - 1] - c[0];
                count += c.len() - 1;
            }
        }
        (count > 0 && span > 0.0).then(|| count as f64 / span)
    }
}

/// Integrate `cfg.n_paths` noisy trajectories starting on the limit cycle.
pub fn simulate_sde(model: &dyn CircuitModel, pss: &PssSolution, cfg: &McConfig, nodes: &[usize]) -> Result<McRun> {
    cfg.validate(pss.period())?;
    let levels: Vec<Crossing> = nodes
        .iter()
        .map(|&q| {
            let row = pss.states().row(q);
            let (lo, hi) = row.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(*v), a.1.max(*v)));
            Crossing {
                level: row.iter().sum::<f64>() / row.len() as f64,
                rearm: 0.125 * (hi - lo),
            }
        })
        .collect();
    simulate_from(model, &pss.state(0), pss.amplitude(), cfg, nodes, &levels)
}

/// Rising-crossing detector for one node. After a crossing of `level` the
/// next one only counts once the node has dropped below `level - rearm`,
/// so step-scale noise cannot register spurious re-crossings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub level: f64,
    pub rearm: f64,
}

/// Stochastic integration from an arbitrary initial state. `scale` sets the
/// divergence threshold `1e6 * scale`.
pub fn simulate_from(
    model: &dyn CircuitModel,
    x0: &[f64],
    scale: f64,
    cfg: &McConfig,
    nodes: &[usize],
    levels: &[Crossing],
) -> Result<McRun> {
    let n = model.dim();
    if x0.len() != n || levels.len() != nodes.len() {
        return Err(Error::Contract("initial state or crossing levels have the wrong length".into()));
    }
    if let Some(&q) = nodes.iter().find(|&&q| q >= n) {
        return Err(Error::Contract(format!("node index {q} out of range for dimension {n}")));
    }
    let limit = 1e6 * scale.max(1.0);
    let paths = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| run_path(model, x0, limit, cfg, nodes, levels, path))
        .collect::<Result<Vec<_>>>()?;
    Ok(McRun {
        nodes: nodes.to_vec(),
        record_dt: cfg.record_dt(),
        paths,
    })
}

struct Workspace {
    q0: Vec<f64>,
    i0: Vec<f64>,
    s0: Vec<f64>,
    s1: Vec<f64>,
    q1: Vec<f64>,
    i1: Vec<f64>,
    f: Vec<f64>,
    c: DMatrix<f64>,
    g: DMatrix<f64>,
    b: DMatrix<f64>,
    jac: Vec<f64>,
    kick: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, p: usize) -> Self {
        Self {
            q0: vec![0.0; n],
            i0: vec![0.0; n],
            s0: vec![0.0; n],
            s1: vec![0.0; n],
            q1: vec![0.0; n],
            i1: vec![0.0; n],
            f: vec![0.0; n],
            c: DMatrix::zeros(n, n),
            g: DMatrix::zeros(n, n),
            b: DMatrix::zeros(n, p),
            jac: vec![0.0; n * n],
            kick: vec![0.0; n],
        }
    }
}

/// Solve the row-major system `a x = b` in place by Gaussian elimination
/// with partial pivoting; `b` receives `x`.
fn gauss_solve(a: &mut [f64], b: &mut [f64]) -> Option<()> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if !(a[piv * n + col].abs() > 0.0) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let m = a[r * n + col] / d;
            if m != 0.0 {
                for k in col..n {
                    a[r * n + k] -= m * a[col * n + k];
                }
                b[r] -= m * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let s: f64 = (col + 1..n).map(|k| a[col * n + k] * b[k]).sum();
        b[col] = (b[col] - s) / a[col * n + col];
    }
    Some(())
}

fn run_path(
    model: &dyn CircuitModel,
    x0: &[f64],
    limit: f64,
    cfg: &McConfig,
    nodes: &[usize],
    levels: &[Crossing],
    path: usize,
) -> Result<PathRecord> {
    let n = model.dim();
    let p = model.noise_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path as u64);
    let mut ws = Workspace::new(n, p);
    let steps = cfg.steps();
    let h = cfg.dt;
    let sqrt_h = h.sqrt();
    let mut x = x0.to_vec();
    let mut prev = x.clone();
    let mut next = x.clone();
    let mut samples: Vec<Vec<f64>> = nodes.iter().map(|_| Vec::with_capacity(steps / cfg.stride + 1)).collect();
    let mut crossings: Vec<Vec<f64>> = nodes.iter().map(|_| Vec::new()).collect();
    let mut acc = vec![0.0; nodes.len()];
    let mut armed: Vec<bool> = nodes.iter().zip(levels).map(|(&q, l)| x0[q] < l.level).collect();
    let mut dw = vec![0.0; p];

    for step in 0..steps {
        let t = step as f64 * h;
        for w in dw.iter_mut() {
            *w = sqrt_h * rng.sample::<f64, _>(StandardNormal);
        }
        // linear extrapolation as the Newton starting point
        for r in 0..n {
            next[r] = 2.0 * x[r] - prev[r];
        }
        em_step(model, &x, t, h, &dw, &mut ws, &mut next).map_err(|_| Error::PathDiverged { path, time: t })?;
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > limit {
            return Err(Error::PathDiverged { path, time: t + h });
        }
        for (slot, &q) in nodes.iter().enumerate() {
            let (a, b) = (x[q] - levels[slot].level, next[q] - levels[slot].level);
            if armed[slot] && a < 0.0 && b >= 0.0 {
                crossings[slot].push(t + h * (-a) / (b - a));
                armed[slot] = false;
            } else if b < -levels[slot].rearm {
                armed[slot] = true;
            }
            acc[slot] += next[q];
        }
        if (step + 1) % cfg.stride == 0 {
            for slot in 0..nodes.len() {
                samples[slot].push(acc[slot] / cfg.stride as f64);
                acc[slot] = 0.0;
            }
        }
        std::mem::swap(&mut prev, &mut x);
        std::mem::swap(&mut x, &mut next);
    }
    Ok(PathRecord { samples, crossings })
}

/// One Euler-Maruyama step with the drift treated by the trapezoidal rule:
/// `q(x1) - q(x0) + h/2 (i(x0) + i(x1) + s(t0) + s(t1)) + B(x0) dW = 0`.
/// `x1` holds the starting guess on entry.
fn em_step(
    model: &dyn CircuitModel,
    x0: &[f64],
    t: f64,
    h: f64,
    dw: &[f64],
    ws: &mut Workspace,
    x1: &mut [f64],
) -> std::result::Result<(), ()> {
    let n = x0.len();
    model.charge(x0, &mut ws.q0);
    model.current(x0, &mut ws.i0);
    ws.s0.iter_mut().for_each(|v| *v = 0.0);
    ws.s1.iter_mut().for_each(|v| *v = 0.0);
    model.source(t, &mut ws.s0);
    model.source(t + h, &mut ws.s1);
    if !dw.is_empty() {
        model.noise_matrix(x0, &mut ws.b);
    }
    for r in 0..n {
        ws.kick[r] = (0..dw.len()).map(|j| ws.b[(r, j)] * dw[j]).sum();
    }
    let scale = 1.0 + x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 0..NEWTON_MAX {
        model.charge(x1, &mut ws.q1);
        model.current(x1, &mut ws.i1);
        for r in 0..n {
            ws.f[r] = ws.q1[r] - ws.q0[r] + 0.5 * h * (ws.i0[r] + ws.i1[r] + ws.s0[r] + ws.s1[r]) + ws.kick[r];
        }
        model.capacitance(x1, &mut ws.c);
        model.conductance(x1, &mut ws.g);
        for r in 0..n {
            for k in 0..n {
                ws.jac[r * n + k] = ws.c[(r, k)] + 0.5 * h * ws.g[(r, k)];
            }
        }
        gauss_solve(&mut ws.jac, &mut ws.f).ok_or(())?;
        let mut size = 0.0f64;
        for (xr, d) in x1.iter_mut().zip(&ws.f) {
            *xr -= d;
            size = size.max(d.abs());
        }
        if !size.is_finite() {
            return Err(());
        }
        if size <= 1e-12 * scale {
            return Ok(());
        }
    }
    Err(())
}

/// Segment-averaged periodogram around a carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct McSpectrum {
    /// Signed offsets `f - f_carrier` (Hz), ascending.
    pub offsets: Vec<f64>,
    /// One-sided density relative to the carrier power (1/Hz).
    pub density: Vec<f64>,
    /// Number of segments averaged.
    pub segments: usize,
    /// Frequency resolution (Hz).
    pub resolution: f64,
}

impl McSpectrum {
    /// Mean density over bins with `lo <= offset <= hi`.
    pub fn band_mean(&self, lo: f64, hi: f64) -> Option<f64> {
        let (mut s, mut n) = (0.0, 0usize);
        for (o, d) in self.offsets.iter().zip(&self.density) {
            if *o >= lo && *o <= hi {
                s += d;
                n += 1;
            }
        }
        (n > 0).then(|| s / n as f64)
    }

    /// Fit `A / (1 + (f / g)^2)` to bins with `|offset| <= span`; returns the
    /// half width `g` (Hz) and the peak density `A`.
    pub fn lorentzian_fit(&self, span: f64) -> Option<(f64, f64)> {
        // 1/S is linear in f^2
        let pts: Vec<(f64, f64)> = self
            .offsets
            .iter()
            .zip(&self.density)
            .filter(|(o, d)| o.abs() <= span && **d > 0.0)
            .map(|(o, d)| (o * o, 1.0 / d))
            .collect();
        if pts.len() < 3 {
            return None;
        }
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (sx / m, sy / m);
        let (sxx, sxy) = pts
            .iter()
            .fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx).powi(2), a.1 + (p.0 - mx) * (p.1 - my)));
        let slope = sxy / sxx;
        let icpt = my - slope * mx;
        (slope > 0.0 && icpt > 0.0).then(|| ((icpt / slope).sqrt(), 1.0 / icpt))
    }

    /// `f_offset_hz,pnoise_dbc` rows for the upper sideband.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "f_offset_hz,pnoise_dbc")?;
        for (o, d) in self.offsets.iter().zip(&self.density) {
            if *o > 0.0 {
                writeln!(w, "{:.10e},{:.10e}", o, 10.0 * d.log10())?;
            }
        }
        Ok(())
    }
}

/// Welch estimate (Hann window, half overlap) of the density near
/// `carrier` (Hz) within `+-band`, normalized by the power between
/// `carrier / 2` and `3 carrier / 2`.
pub fn estimate_spectrum(series: &[&[f64]], dt: f64, window: usize, carrier: f64, band: f64) -> Result<McSpectrum> {
    let nyquist = 0.5 / dt;
    if !(carrier > 0.0) || !(band > 0.0) || carrier * 1.5 >= nyquist || carrier + band >= nyquist {
        return Err(Error::Config(format!(
            "carrier {carrier:.3e} Hz and band {band:.3e} Hz must lie below Nyquist {nyquist:.3e} Hz"
        )));
    }
    if window < 16 || series.is_empty() {
        return Err(Error::Config("periodogram needs at least one series and 16-sample segments".into()));
    }
    if let Some(s) = series.iter().find(|s| s.len() < 4 * window) {
        return Err(Error::Config(format!(
            "series of {} samples is shorter than 4 segments of {window}",
            s.len()
        )));
    }
    let hann: Vec<f64> = (0..window)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / window as f64).cos())
        .collect();
    let u: f64 = hann.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window);
    let hop = window / 2;
    let half = window / 2 + 1;

    let per_series: Vec<(Vec<f64>, usize)> = series
        .par_iter()
        .map(|s| {
            let mut acc = vec![0.0; half];
            let mut buf = vec![Complex::new(0.0, 0.0); window];
            let mut count = 0;
            let mut start = 0;
            while start + window <= s.len() {
                let seg = &s[start..start + window];
                let mean = seg.iter().sum::<f64>() / window as f64;
                for i in 0..window {
                    buf[i] = Complex::new((seg[i] - mean) * hann[i], 0.0);
                }
                fft.process(&mut buf);
                for (a, b) in acc.iter_mut().zip(&buf[..half]) {
                    *a += b.norm_sqr();
                }
                count += 1;
                start += hop;
            }
            (acc, count)
        })
        .collect();
    let segments: usize = per_series.iter().map(|p| p.1).sum();
    let mut psd = vec![0.0; half];
    for (acc, _) in &per_series {
        for (p, a) in psd.iter_mut().zip(acc) {
            *p += a;
        }
    }
    let df = 1.0 / (window as f64 * dt);
    for (i, p) in psd.iter_mut().enumerate() {
        let one_sided = if i == 0 || 2 * i == window { 1.0 } else { 2.0 };
        *p *= one_sided * dt / (u * segments as f64);
    }
    let power: f64 = psd
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let f = *i as f64 * df;
            f >= 0.5 * carrier && f <= 1.5 * carrier
        })
        .map(|(_, p)| p * df)
        .sum();
    if !(power > 0.0) {
        return Err(Error::Internal("no carrier power found in the recorded series".into()));
    }
    let (mut offsets, mut density) = (Vec::new(), Vec::new());
    for (i, p) in psd.iter().enumerate() {
        let off = i as f64 * df - carrier;
        if off.abs() <= band {
            offsets.push(off);
            density.push(p / power);
        }
    }
    Ok(McSpectrum {
        offsets,
        density,
        segments,
        resolution: df,
    })
}

/// Diffusion constant (s^2/s) from the growth of crossing-time jitter.
///
/// Each path's crossing sequence is detrended with the common mean period;
/// the variance of increments over `lags` crossings is regressed on the lag
/// duration and the slope returned. Samples begin after `skip` crossings.
pub fn phase_diffusion_estimate(crossings: &[&[f64]], skip: usize, lags: &[usize]) -> Result<f64> {
    let (mut span, mut count) = (0.0, 0usize);
    for c in crossings {
        if c.len() > skip + 1 {
            span += c[c.len() - 1] - c[skip];
            count += c.len() - 1 - skip;
        }
    }
    if count == 0 || lags.len() < 2 {
        return Err(Error::Config("too few crossings or lags for a diffusion estimate".into()));
    }
    let period = span / count as f64;
    let mut pts = Vec::new();
    for &lag in lags {
        let mut incs = Vec::new();
        for c in crossings {
            let mut i = skip;
            while i + lag < c.len() {
                incs.push(c[i + lag] - c[i] - lag as f64 * period);
                i += lag;
            }
        }
        if incs.len() < 2 {
            return Err(Error::Config(format!("lag {lag} leaves fewer than 2 increments")));
        }
        let m = incs.iter().sum::<f64>() / incs.len() as f64;
        let var = incs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (incs.len() - 1) as f64;
        pts.push((lag as f64 * period, var));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_vdp, LinearModel, VdpParams};
    use crate::pss::{solve_pss, PssGuess, PssOptions};

    fn vdp_pss(noise: f64) -> (crate::model::TankEnsemble, PssSolution) {
        let m = builtin_vdp(VdpParams::normalized(0.5, noise)).unwrap();
        let g = PssGuess {
            x0: vec![2.0, 0.0],
            period: 2.0 * std::f64::consts::PI,
        };
        let pss = solve_pss(&m, &g, &PssOptions::default()).unwrap();
        (m, pss)
    }

    #[test]
    fn elimination_with_pivoting() {
        let mut a = vec![0.0, 2.0, 1.0, 3.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let mut b = vec![4.0, 5.0, 6.0];
        // 2y + z = 4, 3x + y = 5, x + y + z = 6 needs a row swap
        gauss_solve(&mut a, &mut b).unwrap();
        assert!((2.0 * b[1] + b[2] - 4.0).abs() < 1e-12);
        assert!((3.0 * b[0] + b[1] - 5.0).abs() < 1e-12);
        assert!((b[0] + b[1] + b[2] - 6.0).abs() < 1e-12);
        assert!(gauss_solve(&mut [0.0; 4], &mut [1.0, 1.0]).is_none());
    }

    #[test]
    fn config_invariants() {
        let t0 = 1.0;
        let ok = McConfig::for_period(t0);
        assert!(ok.validate(t0).is_ok());
        for bad in [
            McConfig { dt: t0 / 100.0, ..ok.clone() },
            McConfig { duration: 10.0, ..ok.clone() },
            McConfig { n_paths: 4, ..ok.clone() },
            McConfig { window: 100.0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(t0), Err(Error::Config(_))));
        }
    }

    #[test]
    fn noiseless_run_follows_the_cycle() {
        let (_, pss) = vdp_pss(0.0);
        let m = builtin_vdp(VdpParams::normalized(0.5, 0.0)).unwrap();
        let t0 = pss.period();
        let cfg = McConfig {
            n_paths: 8,
            dt: t0 / 1024.0,
            duration: 50.0 * t0,
            stride: 1,
            window: 10.0 * t0,
            ..McConfig::for_period(t0)
        };
        let run = simulate_sde(&m, &pss, &cfg, &[0]).unwrap();
        let a = &run.paths[0].samples[0];
        assert!(run.paths.iter().all(|p| p.samples[0] == *a));
        // one period later the path is back on the grid state
        for j in [0usize, 256, 700] {
            let want = pss.state(j + 1)[0];
            assert!((a[1024 + j] - want).abs() < 1e-5, "{} vs {want}", a[1024 + j]);
        }
        let f = run.carrier_frequency(0).unwrap();
        assert!((f * t0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ornstein_uhlenbeck_variance() {
        let (a, sigma) = (2.0, 0.5);
        let m = LinearModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, sigma),
        )
        .unwrap();
        let cfg = McConfig {
            n_paths: 16,
            dt: 1e-3,
            duration: 400.0,
            seed: DEFAULT_SEED,
            window: 10.0,
            stride: 1,
        };
        let run = simulate_from(&m, &[0.0], 1.0, &cfg, &[0], &[Crossing { level: 0.0, rearm: 0.1 }]).unwrap();
        let mut s = 0.0;
        let mut n = 0usize;
        for p in &run.paths {
            for v in &p.samples[0][2000..] {
                s += v * v;
                n += 1;
            }
        }
        let var = s / n as f64;
        let want = sigma * sigma / (2.0 * a);
        assert!((var / want - 1.0).abs() < 0.05, "{var} vs {want}");
    }

    #[test]
    fn divergence_is_reported() {
        // unstable linear system runs away
        let m = LinearModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, -5.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let cfg = McConfig {
            n_paths: 8,
            dt: 0.01,
            duration: 40.0,
            seed: 1,
            window: 5.0,
            stride: 1,
        };
        assert!(matches!(
            simulate_from(&m, &[1.0], 1.0, &cfg, &[0], &[Crossing { level: 0.0, rearm: 0.1 }]),
            Err(Error::PathDiverged { .. })
        ));
    }

    #[test]
    fn tone_in_white_noise() {
        use rand::SeedableRng;
        let dt: f64 = 0.01;
        let (f0, amp, n0): (f64, f64, f64) = (5.0, 1.0, 1e-3);
        // one-sided density n0 -> per-sample variance n0 / (2 dt)
        let sd = (n0 / (2.0 * dt)).sqrt();
        let series: Vec<Vec<f64>> = (0..4u64)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(k);
                (0..1 << 16)
                    .map(|i| {
                        let t = i as f64 * dt;
                        amp * (2.0 * std::f64::consts::PI * f0 * t).cos()
                            + sd * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
        let sp = estimate_spectrum(&refs, dt, 4096, f0, 2.0).unwrap();
        let carrier = amp * amp / 2.0;
        let floor = sp.band_mean(0.5, 2.0).unwrap() * carrier;
        assert!((10.0 * (floor / n0).log10()).abs() < 1.0, "{floor}");
        let again = estimate_spectrum(&refs, dt, 4096, f0, 2.0).unwrap();
        assert_eq!(sp, again);
        assert!(estimate_spectrum(&refs, dt, 4096, 45.0, 10.0).is_err());
    }

    #[test]
    fn lorentzian_fit_recovers_width() {
        let g = 0.3;
        let offsets: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.05).collect();
        let density = offsets.iter().map(|f| 2.0 / (1.0 + (f / g).powi(2))).collect();
        let sp = McSpectrum {
            offsets,
            density,
            segments: 1,
            resolution: 0.05,
        };
        let (w, a) = sp.lorentzian_fit(1.0).unwrap();
        assert!((w - g).abs() < 1e-9 && (a - 2.0).abs() < 1e-9);
    }

    #[test]
    fn diffusion_of_synthetic_jitter() {
        use rand::SeedableRng;
        let (t, c): (f64, f64) = (1.0, 1e-3);
        let paths: Vec<Vec<f64>> = (0..16u64)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(k);
                let mut acc = 0.0;
                (0..2000)
                    .map(|i| {
                        acc += (c * t).sqrt() * rng.sample::<f64, _>(StandardNormal);
                        i as f64 * t + acc
                    })
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = paths.iter().map(|p| p.as_slice()).collect();
        let est = phase_diffusion_estimate(&refs, 0, &[4, 8, 16]).unwrap();
        assert!((est / c - 1.0).abs() < 0.1, "{est}");
    }
}
