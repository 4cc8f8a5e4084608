//! Circuit models in modified-nodal form.
//!
//! A model describes the noisy autonomous circuit
//!
//! ```text
//! d/dt q(x) + i(x) + s(t) + B(x) xi(t) = 0
//! ```
//!
//! where `xi` holds `p` independent unit-intensity white sources. The
//! Jacobians `C = dq/dx` and `G = di/dx` drive every linearized
//! computation downstream.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// The MNA quintuple `(q, i, s, B)` plus its Jacobians.
///
/// Implementations write into caller-provided buffers of the declared
/// size so the time-stepping loops stay allocation free.
pub trait CircuitModel: Send + Sync {
    /// State dimension `n`.
    fn dim(&self) -> usize;
    /// Number of white noise sources `p`.
    fn noise_dim(&self) -> usize;
    /// One label per state component.
    fn node_names(&self) -> &[String];

    /// Reactive contributions `q(x)`.
    fn charge(&self, x: &[f64], out: &mut [f64]);
    /// Resistive contributions `i(x)`.
    fn current(&self, x: &[f64], out: &mut [f64]);
    /// Independent sources `s(t)`.
    fn source(&self, _t: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
    /// Noise modulation matrix `B(x)`, `n x p`.
    fn noise_matrix(&self, x: &[f64], out: &mut DMatrix<f64>);
    /// `C = dq/dx`.
    fn capacitance(&self, x: &[f64], out: &mut DMatrix<f64>);
    /// `G = di/dx`.
    fn conductance(&self, x: &[f64], out: &mut DMatrix<f64>);

    /// Whether `s(t)` is constant in time.
    fn is_autonomous(&self) -> bool {
        true
    }

    fn node_index(&self, name: &str) -> Option<usize> {
        self.node_names().iter().position(|n| n == name)
    }
}

fn check_len(model: &dyn CircuitModel, x: &[f64]) -> Result<()> {
    if x.len() != model.dim() {
        return Err(Error::ModelDefinition(format!(
            "state has length {} but the model declares n = {}",
            x.len(),
            model.dim()
        )));
    }
    Ok(())
}

/// Deterministic residual `i(x) + s(t)`; the noise term is excluded.
pub fn eval_residual(model: &dyn CircuitModel, x: &[f64], t: f64) -> Result<DVector<f64>> {
    check_len(model, x)?;
    let n = model.dim();
    let mut i = DVector::zeros(n);
    let mut s = DVector::zeros(n);
    model.current(x, i.as_mut_slice());
    model.source(t, s.as_mut_slice());
    Ok(i + s)
}

/// Jacobians `(C, G)` at `x`, with a finiteness check per entry.
pub fn eval_jacobians(model: &dyn CircuitModel, x: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_len(model, x)?;
    let n = model.dim();
    let mut c = DMatrix::zeros(n, n);
    let mut g = DMatrix::zeros(n, n);
    model.capacitance(x, &mut c);
    model.conductance(x, &mut g);
    for (what, m) in [("C", &c), ("G", &g)] {
        if let Some((idx, _)) = m.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let row = idx % n;
            return Err(Error::NonFinite {
                what,
                row,
                node: model.node_names()[row].clone(),
            });
        }
    }
    Ok((c, g))
}

/// Noise matrix at `x`.
pub fn eval_noise(model: &dyn CircuitModel, x: &[f64]) -> Result<DMatrix<f64>> {
    check_len(model, x)?;
    let mut b = DMatrix::zeros(model.dim(), model.noise_dim());
    model.noise_matrix(x, &mut b);
    Ok(b)
}

/// Largest relative deviation between the analytic Jacobians and central
/// finite differences of `q` and `i` at `x`.
pub fn jacobian_fd_error(model: &dyn CircuitModel, x: &[f64]) -> Result<f64> {
    let n = model.dim();
    let (c, g) = eval_jacobians(model, x)?;
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for j in 0..n {
        let step = 1e-6 * x[j].abs().max(1.0);
        for (analytic, reactive) in [(&c, true), (&g, false)] {
            let f = |x: &[f64], out: &mut [f64]| {
                if reactive {
                    model.charge(x, out)
                } else {
                    model.current(x, out)
                }
            };
            xp[j] = x[j] + step;
            f(&xp, &mut fp);
            xp[j] = x[j] - step;
            f(&xp, &mut fm);
            xp[j] = x[j];
            let scale = analytic.amax().max(f64::MIN_POSITIVE);
            for r in 0..n {
                let fd = (fp[r] - fm[r]) / (2.0 * step);
                worst = worst.max((fd - analytic[(r, j)]).abs() / scale);
            }
        }
    }
    Ok(worst)
}

fn check_unique(names: &[String]) -> Result<()> {
    for (i, a) in names.iter().enumerate() {
        if names[..i].contains(a) {
            return Err(Error::ModelDefinition(format!("duplicate node name `{a}`")));
        }
    }
    Ok(())
}

/// Ensemble bookkeeping carried alongside a model.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMeta {
    /// Number of oscillator units (phase modes).
    pub k: usize,
    pub observation_nodes: Vec<String>,
    /// Carrier harmonic of interest.
    pub harmonic: usize,
}

impl EnsembleMeta {
    pub fn validate(&self, model: &dyn CircuitModel) -> Result<()> {
        if self.k < 1 || self.k > model.dim() {
            return Err(Error::Config(format!(
                "ensemble size k = {} must lie in [1, {}]",
                self.k,
                model.dim()
            )));
        }
        if self.harmonic < 1 {
            return Err(Error::Config("harmonic index must be >= 1".into()));
        }
        for node in &self.observation_nodes {
            if model.node_index(node).is_none() {
                return Err(Error::Config(format!(
                    "unknown observation node `{node}`; available: {}",
                    model.node_names().join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// Linear time-invariant model `q = C x`, `i = G x`, constant sources and
/// constant noise injection.
#[derive(Debug, Clone)]
pub struct LinearModel {
    c: DMatrix<f64>,
    g: DMatrix<f64>,
    s: DVector<f64>,
    b: DMatrix<f64>,
    names: Vec<String>,
}

impl LinearModel {
    pub fn new(c: DMatrix<f64>, g: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = c.nrows();
        if !c.is_square() || g.shape() != (n, n) || b.nrows() != n {
            return Err(Error::ModelDefinition(format!(
                "inconsistent shapes C {:?}, G {:?}, B {:?}",
                c.shape(),
                g.shape(),
                b.shape()
            )));
        }
        let names = (1..=n).map(|i| format!("x{i}")).collect();
        Ok(Self {
            c,
            g,
            s: DVector::zeros(n),
            b,
            names,
        })
    }

    pub fn with_source(mut self, s: DVector<f64>) -> Result<Self> {
        if s.len() != self.c.nrows() {
            return Err(Error::ModelDefinition("source length mismatch".into()));
        }
        self.s = s;
        Ok(self)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.c.nrows() {
            return Err(Error::ModelDefinition("node name count mismatch".into()));
        }
        check_unique(&names)?;
        self.names = names;
        Ok(self)
    }
}

impl CircuitModel for LinearModel {
    fn dim(&self) -> usize {
        self.c.nrows()
    }
    fn noise_dim(&self) -> usize {
        self.b.ncols()
    }
    fn node_names(&self) -> &[String] {
        &self.names
    }
    fn charge(&self, x: &[f64], out: &mut [f64]) {
        mat_vec(&self.c, x, out);
    }
    fn current(&self, x: &[f64], out: &mut [f64]) {
        mat_vec(&self.g, x, out);
    }
    fn source(&self, _t: f64, out: &mut [f64]) {
        out.copy_from_slice(self.s.as_slice());
    }
    fn noise_matrix(&self, _x: &[f64], out: &mut DMatrix<f64>) {
        out.copy_from(&self.b);
    }
    fn capacitance(&self, _x: &[f64], out: &mut DMatrix<f64>) {
        out.copy_from(&self.c);
    }
    fn conductance(&self, _x: &[f64], out: &mut DMatrix<f64>) {
        out.copy_from(&self.g);
    }
}

fn mat_vec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        *o = (0..m.ncols()).map(|c| m[(r, c)] * x[c]).sum();
    }
}

/// Parallel LC tank with a cubic negative-conductance core and a white
/// current-noise source across the tank.
///
/// Tank current balance: `C dv/dt + i_L + (G0 - g1) v + g3 v^3 + noise = 0`,
/// inductor branch: `L di_L/dt - v = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VdpParams {
    /// Tank inductance (H).
    pub inductance: f64,
    /// Tank capacitance (F).
    pub capacitance: f64,
    /// Passive tank loss (S).
    pub loss: f64,
    /// Linear negative conductance of the active core (S).
    pub g1: f64,
    /// Cubic coefficient of the active core (A/V^3).
    pub g3: f64,
    /// Two-sided intensity of the tank noise current (A^2/Hz).
    pub noise: f64,
}

impl VdpParams {
    /// `L = C = 1`, net conductance `-eps` and cubic term chosen so the
    /// limit-cycle amplitude is close to 2 (classical van der Pol).
    pub fn normalized(eps: f64, noise: f64) -> Self {
        Self {
            inductance: 1.0,
            capacitance: 1.0,
            loss: 0.0,
            g1: eps,
            g3: eps / 3.0,
            noise,
        }
    }

    /// Repository stand-in for an RF tank near 898 MHz: 1 nH, 31.4 pF,
    /// 10 mS loss, ~1 V swing and thermal-like noise of the tank loss at
    /// 300 K (two-sided `2kTG`).
    pub fn rf900() -> Self {
        let loss = 0.01;
        Self {
            inductance: 1e-9,
            capacitance: 31.4e-12,
            loss,
            g1: 0.03,
            g3: 0.02 / 0.75,
            noise: 2.0 * 1.380_649e-23 * 300.0 * loss,
        }
    }

    /// Small-signal resonance of the tank (rad/s).
    pub fn tank_omega(&self) -> f64 {
        1.0 / (self.inductance * self.capacitance).sqrt()
    }

    /// Limit-cycle amplitude predicted by first-order averaging.
    pub fn amplitude_estimate(&self) -> f64 {
        let net = self.g1 - self.loss;
        if net > 0.0 && self.g3 > 0.0 {
            2.0 * (net / (3.0 * self.g3)).sqrt()
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.inductance > 0.0) || !(self.capacitance > 0.0) {
            return Err(Error::Parameter(format!(
                "tank L and C must be positive (L = {}, C = {})",
                self.inductance, self.capacitance
            )));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Parameter(format!("noise intensity {} < 0", self.noise)));
        }
        if [self.loss, self.g1, self.g3].iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite conductance coefficient".into()));
        }
        Ok(())
    }

    fn tank_current(&self, v: f64) -> f64 {
        (self.loss - self.g1) * v + self.g3 * v * v * v
    }

    fn tank_slope(&self, v: f64) -> f64 {
        self.loss - self.g1 + 3.0 * self.g3 * v * v
    }
}

/// How oscillator units are tied together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coupling {
    /// Unit `u` injects `gm * v_u` into the tank of unit `u + 1`
    /// (a buffered, one-way chain; two units form an injection-locked pair).
    Unilateral { transconductance: f64 },
    /// Adjacent tanks joined by a resistor, closing a ring.
    BilateralRing { resistance: f64 },
}

/// Block-assembled ensemble of tank oscillators. State order is
/// `[v_1, il_1, v_2, il_2, ...]`; a single unit is the plain oscillator.
#[derive(Debug, Clone)]
pub struct TankEnsemble {
    units: Vec<VdpParams>,
    coupling: Option<Coupling>,
    names: Vec<String>,
}

impl TankEnsemble {
    pub fn units(&self) -> &[VdpParams] {
        &self.units
    }

    pub fn coupling(&self) -> Option<Coupling> {
        self.coupling
    }

    /// Tank-node index of unit `u`.
    pub fn tank_index(u: usize) -> usize {
        2 * u
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        let k = self.units.len();
        match self.coupling {
            Some(Coupling::BilateralRing { .. }) => (0..k).map(|a| (a, (a + 1) % k)).collect(),
            _ => Vec::new(),
        }
    }
}

impl CircuitModel for TankEnsemble {
    fn dim(&self) -> usize {
        2 * self.units.len()
    }
    fn noise_dim(&self) -> usize {
        self.units.len()
    }
    fn node_names(&self) -> &[String] {
        &self.names
    }
    fn charge(&self, x: &[f64], out: &mut [f64]) {
        for (u, p) in self.units.iter().enumerate() {
            out[2 * u] = p.capacitance * x[2 * u];
            out[2 * u + 1] = p.inductance * x[2 * u + 1];
        }
    }
    fn current(&self, x: &[f64], out: &mut [f64]) {
        for (u, p) in self.units.iter().enumerate() {
            let v = x[2 * u];
            out[2 * u] = x[2 * u + 1] + p.tank_current(v);
            out[2 * u + 1] = -v;
        }
        match self.coupling {
            Some(Coupling::Unilateral { transconductance }) => {
                for u in 1..self.units.len() {
                    out[2 * u] -= transconductance * x[2 * (u - 1)];
                }
            }
            Some(Coupling::BilateralRing { resistance }) => {
                let gc = 1.0 / resistance;
                for (a, b) in self.edges() {
                    let d = gc * (x[2 * a] - x[2 * b]);
                    out[2 * a] += d;
                    out[2 * b] -= d;
                }
            }
            None => {}
        }
    }
    fn noise_matrix(&self, _x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for (u, p) in self.units.iter().enumerate() {
            out[(2 * u, u)] = p.noise.sqrt();
        }
    }
    fn capacitance(&self, _x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for (u, p) in self.units.iter().enumerate() {
            out[(2 * u, 2 * u)] = p.capacitance;
            out[(2 * u + 1, 2 * u + 1)] = p.inductance;
        }
    }
    fn conductance(&self, x: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for (u, p) in self.units.iter().enumerate() {
            let (v, l) = (2 * u, 2 * u + 1);
            out[(v, v)] = p.tank_slope(x[v]);
            out[(v, l)] = 1.0;
            out[(l, v)] = -1.0;
        }
        match self.coupling {
            Some(Coupling::Unilateral { transconductance }) => {
                for u in 1..self.units.len() {
                    out[(2 * u, 2 * (u - 1))] -= transconductance;
                }
            }
            Some(Coupling::BilateralRing { resistance }) => {
                let gc = 1.0 / resistance;
                for (a, b) in self.edges() {
                    let (ia, ib) = (2 * a, 2 * b);
                    out[(ia, ia)] += gc;
                    out[(ib, ib)] += gc;
                    out[(ia, ib)] -= gc;
                    out[(ib, ia)] -= gc;
                }
            }
            None => {}
        }
    }
}

fn unit_names(k: usize) -> Vec<String> {
    (1..=k).flat_map(|u| [format!("v{u}"), format!("il{u}")]).collect()
}

/// Single free-running tank oscillator: `n = 2` (tank voltage, inductor
/// current), `p = 1`.
pub fn builtin_vdp(params: VdpParams) -> Result<TankEnsemble> {
    params.validate()?;
    Ok(TankEnsemble {
        units: vec![params],
        coupling: None,
        names: unit_names(1),
    })
}

/// Coupled ensemble of tank oscillators.
///
/// Unilateral coupling forms a chain (unit 1 drives unit 2, ...); bilateral
/// coupling closes a resistive ring and needs at least three units.
pub fn builtin_coupled_ensemble(
    units: Vec<VdpParams>,
    coupling: Coupling,
) -> Result<(TankEnsemble, EnsembleMeta)> {
    if units.len() < 2 {
        return Err(Error::Config(format!(
            "a coupled ensemble needs at least 2 units, got {}",
            units.len()
        )));
    }
    for p in &units {
        p.validate()?;
    }
    match coupling {
        Coupling::Unilateral { transconductance } if !transconductance.is_finite() => {
            return Err(Error::Parameter("non-finite transconductance".into()));
        }
        Coupling::BilateralRing { resistance } => {
            if units.len() < 3 {
                return Err(Error::Config(format!(
                    "ring coupling needs at least 3 units, got {}",
                    units.len()
                )));
            }
            if !(resistance > 0.0) {
                return Err(Error::Parameter(format!(
                    "coupling resistance must be positive, got {resistance}"
                )));
            }
        }
        _ => {}
    }
    let k = units.len();
    let model = TankEnsemble {
        units,
        coupling: Some(coupling),
        names: unit_names(k),
    };
    let meta = EnsembleMeta {
        k,
        observation_nodes: (1..=k).map(|u| format!("v{u}")).collect(),
        harmonic: 1,
    };
    Ok((model, meta))
}

/// Normalized buffer transconductance of [`builtin_ilo2`], 5% of the tank
/// admittance `omega0 C`.
pub const ILO_TRANSCONDUCTANCE: f64 = 0.05;

/// Injection-locked pair used throughout the examples: two identical
/// normalized `eps = 0.5` units joined by a unilateral buffer, with the
/// secondary carrying 100x the noise of the primary.
pub fn builtin_ilo2(noise: f64) -> Result<(TankEnsemble, EnsembleMeta)> {
    builtin_coupled_ensemble(
        vec![
            VdpParams::normalized(0.5, noise),
            VdpParams::normalized(0.5, 100.0 * noise),
        ],
        Coupling::Unilateral {
            transconductance: ILO_TRANSCONDUCTANCE,
        },
    )
}

/// Three slightly detuned units on a resistive ring. The detuning keeps
/// the two relative-phase modes apart.
pub fn builtin_ring3(noise: f64) -> Result<(TankEnsemble, EnsembleMeta)> {
    let unit = |cap: f64| VdpParams {
        capacitance: cap,
        ..VdpParams::normalized(0.5, noise)
    };
    builtin_coupled_ensemble(
        vec![unit(1.0), unit(1.01), unit(0.985)],
        Coupling::BilateralRing { resistance: 20.0 },
    )
}
