//! Phase-diffusion constant and node-normalized noise operators.
//!
//! Every operator is a sum of rank-one products
//! `U_a Lambda_b^T conj(Lambda_c) U_d^H / den`; only the `(q, q)` element
//! for the observation node is ever needed, which reduces to
//! `U_a[q] (Lambda_b . conj Lambda_c) conj(U_d[q]) / den`. Harmonic
//! indices outside `[-Nf, Nf]` contribute zero.
//!
//! Mode numbers in this module are one-based: mode 1 is the zero mode,
//! modes `2..=k` are the remaining phase modes and `k+1..=L` the retained
//! amplitude modes.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::floquet::{FloquetMode, FloquetSet};
use crate::fourier::Harmonics;

/// Powers below this are treated as a node without carrier content.
pub const DEAD_NODE_POWER: f64 = 1e-30;
/// Denominators below `RESONANCE_GUARD * omega0` are rejected.
pub const RESONANCE_GUARD: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `c = sum_m Lambda_{1,m} Lambda_{1,m}^H`.
pub fn phase_diffusion(lambda1: &Harmonics) -> Result<f64> {
    let c = lambda1.power();
    if !c.is_finite() || c < 0.0 {
        return Err(Error::Internal(format!("phase diffusion constant evaluated to {c}")));
    }
    Ok(c)
}

/// `value / |X_{s,nu}[q]|^2`.
pub fn normalize_diag(value: Complex64, q: usize, x: &Harmonics, nu: usize, node: &str) -> Result<Complex64> {
    let power = x.coeff(nu as i64, q).norm_sqr();
    if !(power >= DEAD_NODE_POWER) {
        return Err(Error::DeadNode {
            node: node.to_string(),
            nu,
            power,
        });
    }
    Ok(value / power)
}

/// Read access to the retained modes with one-based numbering.
struct Modes<'a> {
    set: &'a FloquetSet,
    omega0: f64,
}

impl<'a> Modes<'a> {
    fn new(set: &'a FloquetSet) -> Self {
        Self {
            set,
            omega0: set.omega0(),
        }
    }

    fn get(&self, i: usize) -> &'a FloquetMode {
        self.set.mode(i - 1)
    }

    fn mu(&self, i: usize) -> Complex64 {
        self.get(i).exponent
    }

    fn nf(&self) -> i64 {
        self.set.nf() as i64
    }

    /// `U_{a,pa}[q] (Lambda_{b,pb} . conj Lambda_{c,pc}) conj(U_{d,pd}[q])`.
    #[allow(clippy::too_many_arguments)]
    fn element(&self, q: usize, a: usize, pa: i64, b: usize, pb: i64, c: usize, pc: i64, d: usize, pd: i64) -> Complex64 {
        let ua = self.get(a).u_harmonics.coeff(pa, q);
        let ud = self.get(d).u_harmonics.coeff(pd, q);
        if ua == ZERO || ud == ZERO {
            return ZERO;
        }
        let lam = self.get(b).lambda_harmonics.dot_conj(pb, &self.get(c).lambda_harmonics, pc);
        ua * lam * ud.conj()
    }

    fn checked(&self, den: Complex64, mode: usize, harmonic: i64) -> Result<Complex64> {
        if den.norm() < RESONANCE_GUARD * self.omega0 {
            return Err(Error::ResonantDenominator { mode, harmonic });
        }
        Ok(den)
    }

    fn jw(&self, h: i64) -> Complex64 {
        Complex64::new(0.0, self.omega0 * h as f64)
    }

    /// `sum_{m in modes} sum_p U_{1,nu} L_{1,0}^T L*_{m,nu-p} U_{m,p}^H / (j w0 (p-nu) - mu_m^*)`
    fn carrier_sum(&self, q: usize, nu: i64, modes: std::ops::RangeInclusive<usize>) -> Result<Complex64> {
        let mut acc = ZERO;
        for m in modes {
            let mu = self.mu(m);
            for p in -self.nf()..=self.nf() {
                let den = self.checked(self.jw(p - nu) - mu.conj(), m, p)?;
                acc += self.element(q, 1, nu, 1, 0, m, nu - p, m, p) / den;
            }
        }
        Ok(acc)
    }

    /// `sum_{i in modes} sum_p U_{i,p} L_{i,rho-p}^T L*_{j,rho-nu} U_{j,nu}^H / (j w0 (nu-p) - mu_j^* - mu_i)`
    fn mode_sum(
        &self,
        q: usize,
        nu: i64,
        rho: i64,
        j: usize,
        modes: std::ops::RangeInclusive<usize>,
    ) -> Result<Complex64> {
        let muj = self.mu(j).conj();
        let mut acc = ZERO;
        for i in modes {
            let mui = self.mu(i);
            for p in -self.nf()..=self.nf() {
                let den = self.checked(self.jw(nu - p) - muj - mui, i, p)?;
                acc += self.element(q, i, p, i, rho - p, j, rho - nu, j, nu) / den;
            }
        }
        Ok(acc)
    }

    /// Zero-mode term `U_{1,rho} L_{1,0}^T L*_{j,rho-nu} U_{j,nu}^H / (j w0 (nu-rho) - mu_j^* - mu_1)`.
    fn zero_mode_term(&self, q: usize, nu: i64, rho: i64, j: usize) -> Result<Complex64> {
        let den = self.checked(self.jw(nu - rho) - self.mu(j).conj() - self.mu(1), j, rho)?;
        Ok(self.element(q, 1, rho, 1, 0, j, rho - nu, j, nu) / den)
    }
}

fn check_k(set: &FloquetSet, k: usize) -> Result<()> {
    if k == 0 || k > set.len() {
        return Err(Error::Contract(format!(
            "ensemble size k = {k} must lie in 1..={} (retained modes)",
            set.len()
        )));
    }
    Ok(())
}

fn check_rho(set: &FloquetSet, rho: i64) -> Result<()> {
    let nf = set.nf() as i64;
    if !(-nf..=nf).contains(&rho) {
        return Err(Error::Contract(format!("rho = {rho} outside [-{nf}, {nf}]")));
    }
    Ok(())
}

/// Un-normalized `(q, q)` element of `Omega^(nu)`.
pub fn omega_diag(q: usize, nu: usize, set: &FloquetSet, k: usize) -> Result<Complex64> {
    check_k(set, k)?;
    Modes::new(set).carrier_sum(q, nu as i64, 2..=k)
}

/// Un-normalized `(q, q)` element of `Theta_{l rho}^(nu)`, `1 <= l <= k-1`.
pub fn theta_diag(l: usize, rho: i64, q: usize, nu: usize, set: &FloquetSet, k: usize) -> Result<Complex64> {
    check_k(set, k)?;
    check_rho(set, rho)?;
    if l == 0 || l >= k {
        return Err(Error::Contract(format!("theta index l = {l} outside 1..={}", k.saturating_sub(1))));
    }
    let md = Modes::new(set);
    let nu = nu as i64;
    Ok(md.zero_mode_term(q, nu, rho, l + 1)? + md.mode_sum(q, nu, rho, l + 1, 2..=k)?)
}

/// Un-normalized `(q, q)` element of `Pi_{l rho}^(nu)`, `1 <= l <= L-k`.
pub fn pi_diag(l: usize, rho: i64, q: usize, nu: usize, set: &FloquetSet, k: usize) -> Result<Complex64> {
    check_k(set, k)?;
    check_rho(set, rho)?;
    let big_l = set.len();
    if l == 0 || l + k > big_l {
        return Err(Error::Contract(format!("pi index l = {l} outside 1..={}", big_l - k)));
    }
    Modes::new(set).mode_sum(q, nu as i64, rho, l + k, k + 1..=big_l)
}

/// Un-normalized `(q, q)` element of `Psi^(nu)`.
pub fn psi_diag(q: usize, nu: usize, set: &FloquetSet, k: usize) -> Result<Complex64> {
    check_k(set, k)?;
    Modes::new(set).carrier_sum(q, nu as i64, k + 1..=set.len())
}

/// Un-normalized `(q, q)` element of `Xi_{l rho}^(nu)`, `1 <= l <= L-1`.
pub fn xi_diag(l: usize, rho: i64, q: usize, nu: usize, set: &FloquetSet, k: usize) -> Result<Complex64> {
    check_k(set, k)?;
    check_rho(set, rho)?;
    let big_l = set.len();
    if l == 0 || l >= big_l {
        return Err(Error::Contract(format!("xi index l = {l} outside 1..={}", big_l - 1)));
    }
    let md = Modes::new(set);
    let nu = nu as i64;
    if l < k {
        md.mode_sum(q, nu, rho, l + 1, k + 1..=big_l)
    } else {
        Ok(md.zero_mode_term(q, nu, rho, l + 1)? + md.mode_sum(q, nu, rho, l + 1, 2..=k)?)
    }
}

/// Normalized observation-node scalar of one operator.
pub struct Observation<'a> {
    pub q: usize,
    pub node: &'a str,
    pub nu: usize,
    pub carrier: &'a Harmonics,
}

impl Observation<'_> {
    fn normalize(&self, v: Complex64) -> Result<Complex64> {
        normalize_diag(v, self.q, self.carrier, self.nu, self.node)
    }
}

/// `a + jb`.
pub fn omega_scalar(obs: &Observation, set: &FloquetSet, k: usize) -> Result<Complex64> {
    obs.normalize(omega_diag(obs.q, obs.nu, set, k)?)
}

/// `Upsilon + j Delta`.
pub fn theta_scalar(l: usize, rho: i64, obs: &Observation, set: &FloquetSet, k: usize) -> Result<Complex64> {
    obs.normalize(theta_diag(l, rho, obs.q, obs.nu, set, k)?)
}

/// `W + jT`.
pub fn pi_scalar(l: usize, rho: i64, obs: &Observation, set: &FloquetSet, k: usize) -> Result<Complex64> {
    obs.normalize(pi_diag(l, rho, obs.q, obs.nu, set, k)?)
}

/// `t + ju`.
pub fn psi_scalar(obs: &Observation, set: &FloquetSet, k: usize) -> Result<Complex64> {
    obs.normalize(psi_diag(obs.q, obs.nu, set, k)?)
}

/// `E + jZ`.
pub fn xi_scalar(l: usize, rho: i64, obs: &Observation, set: &FloquetSet, k: usize) -> Result<Complex64> {
    obs.normalize(xi_diag(l, rho, obs.q, obs.nu, set, k)?)
}

/// Operator tables of one observation node at one harmonic.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeOperators {
    pub node: String,
    pub index: usize,
    pub nu: usize,
    /// `|X_{s,nu}[q]|^2`.
    pub carrier_power: f64,
    /// `a + jb`.
    pub a_b: Complex64,
    /// `t + ju`.
    pub t_u: Complex64,
    /// `theta[l-1][rho+Nf]`, `l = 1..k-1`.
    pub theta: Vec<Vec<Complex64>>,
    /// `pi[l-1][rho+Nf]`, `l = 1..L-k`.
    pub pi: Vec<Vec<Complex64>>,
    /// `xi[l-1][rho+Nf]`, `l = 1..L-1`.
    pub xi: Vec<Vec<Complex64>>,
}

type TableFn = fn(usize, i64, &Observation, &FloquetSet, usize) -> Result<Complex64>;

fn table(f: TableFn, count: usize, obs: &Observation, set: &FloquetSet, k: usize) -> Result<Vec<Vec<Complex64>>> {
    let nf = set.nf() as i64;
    (1..=count)
        .map(|l| {
            (-nf..=nf)
                .into_par_iter()
                .map(|rho| f(l, rho, obs, set, k))
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

impl NodeOperators {
    pub fn compute(obs: &Observation, set: &FloquetSet, k: usize) -> Result<Self> {
        check_k(set, k)?;
        let big_l = set.len();
        Ok(Self {
            node: obs.node.to_string(),
            index: obs.q,
            nu: obs.nu,
            carrier_power: obs.carrier.coeff(obs.nu as i64, obs.q).norm_sqr(),
            a_b: omega_scalar(obs, set, k)?,
            t_u: psi_scalar(obs, set, k)?,
            theta: table(theta_scalar, k - 1, obs, set, k)?,
            pi: table(pi_scalar, big_l - k, obs, set, k)?,
            xi: table(xi_scalar, big_l - 1, obs, set, k)?,
        })
    }
}

/// Everything the spectra need for a set of nodes at one harmonic.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseOperators {
    pub c: f64,
    pub nu: usize,
    pub k: usize,
    pub nf: usize,
    pub omega0: f64,
    /// Retained exponents `mu_1..mu_L` with `mu_1 = 0`.
    pub exponents: Vec<Complex64>,
    pub nodes: Vec<NodeOperators>,
}

impl NoiseOperators {
    /// Assemble operators for `(index, name)` observation nodes. `carrier`
    /// holds the PSS harmonics `X_{s,m}`.
    pub fn assemble(
        set: &FloquetSet,
        carrier: &Harmonics,
        k: usize,
        nodes: &[(usize, String)],
        nu: usize,
    ) -> Result<Self> {
        let c = phase_diffusion(&set.mode(0).lambda_harmonics)?;
        let nodes = nodes
            .iter()
            .map(|(q, name)| {
                let obs = Observation {
                    q: *q,
                    node: name,
                    nu,
                    carrier,
                };
                NodeOperators::compute(&obs, set, k)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            c,
            nu,
            k,
            nf: set.nf(),
            omega0: set.omega0(),
            exponents: set.exponents(),
            nodes,
        })
    }

    pub fn retained(&self) -> usize {
        self.exponents.len()
    }

    pub fn node(&self, name: &str) -> Option<&NodeOperators> {
        self.nodes.iter().find(|n| n.node == name)
    }
}
