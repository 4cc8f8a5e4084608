//! Linear response along the limit cycle.
//!
//! The forward equation `d/dt (C y) + G y = 0` is discretized with the
//! trapezoidal rule used for the steady state:
//!
//! ```text
//! (C_{j+1} + h/2 G_{j+1}) y_{j+1} = (C_j - h/2 G_j) y_j
//! ```
//!
//! The adjoint is the exact transpose of this recursion acting on the
//! covector `w = C^T v`, so `w_j^T y_j` is conserved step by step and the
//! dual vectors stay biorthogonal to rounding error.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{eval_jacobians, eval_noise, CircuitModel};
use crate::pss::PssSolution;

/// Jacobians and cumulative propagators on the PSS grid.
#[derive(Debug, Clone)]
pub struct LinearResponse {
    period: f64,
    c: Vec<DMatrix<f64>>,
    noise: Vec<DMatrix<f64>>,
    /// `Phi(t_j, 0)`, `j = 0..=M`.
    forward: Vec<DMatrix<f64>>,
    /// `W_j` with `w_j = W_j w_M`, `j = 0..=M`.
    backward: Vec<DMatrix<f64>>,
    /// Maps `w_j` to `v_j`; the inverse of `C_j^T` (pseudo-inverse when singular).
    dual_map: Vec<DMatrix<f64>>,
}

fn solve(a: &DMatrix<f64>, rhs: &DMatrix<f64>, index: usize) -> Result<DMatrix<f64>> {
    a.clone()
        .lu()
        .solve(rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or(Error::RankDeficient { index })
}

impl LinearResponse {
    pub fn new(model: &dyn CircuitModel, pss: &PssSolution) -> Result<Self> {
        let m = pss.grid_size();
        let h = pss.step();
        let mut c = Vec::with_capacity(m);
        let mut g = Vec::with_capacity(m);
        let mut noise = Vec::with_capacity(m);
        for j in 0..m {
            let x = pss.state(j);
            let (cj, gj) = eval_jacobians(model, &x)?;
            c.push(cj);
            g.push(gj);
            noise.push(eval_noise(model, &x)?);
        }
        let lhs: Vec<DMatrix<f64>> = (0..m).map(|j| &c[j] + &g[j] * (0.5 * h)).collect();
        let rhs: Vec<DMatrix<f64>> = (0..m).map(|j| &c[j] - &g[j] * (0.5 * h)).collect();

        let (forward, backward) = rayon::join(
            || -> Result<Vec<DMatrix<f64>>> {
                let mut out = Vec::with_capacity(m + 1);
                out.push(DMatrix::identity(c[0].nrows(), c[0].nrows()));
                for j in 0..m {
                    let next = solve(&lhs[(j + 1) % m], &(&rhs[j] * &out[j]), j + 1)?;
                    out.push(next);
                }
                Ok(out)
            },
            || -> Result<Vec<DMatrix<f64>>> {
                let n = c[0].nrows();
                let mut out = vec![DMatrix::identity(n, n); m + 1];
                for j in (0..m).rev() {
                    let z = solve(&lhs[(j + 1) % m].transpose(), &out[j + 1], j + 1)?;
                    out[j] = rhs[j].transpose() * z;
                }
                Ok(out)
            },
        );
        let dual_map = c
            .iter()
            .map(|cj| {
                let ct = cj.transpose();
                match ct.clone().try_inverse() {
                    Some(inv) if inv.iter().all(|v| v.is_finite()) => inv,
                    _ => ct
                        .pseudo_inverse(1e-12 * cj.amax().max(f64::MIN_POSITIVE))
                        .unwrap_or_else(|_| DMatrix::zeros(cj.ncols(), cj.nrows())),
                }
            })
            .collect();
        Ok(Self {
            period: pss.period(),
            c,
            noise,
            forward: forward?,
            backward: backward?,
            dual_map,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.c.len()
    }

    pub fn dim(&self) -> usize {
        self.c[0].nrows()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn time(&self, j: usize) -> f64 {
        self.period * j as f64 / self.grid_size() as f64
    }

    /// `C(t_j)`, wrapping periodically.
    pub fn capacitance(&self, j: usize) -> &DMatrix<f64> {
        &self.c[j % self.grid_size()]
    }

    /// `B(x_s(t_j))`, wrapping periodically.
    pub fn noise(&self, j: usize) -> &DMatrix<f64> {
        &self.noise[j % self.grid_size()]
    }

    /// `Phi(t_j, 0)` for `j = 0..=M`.
    pub fn propagator(&self, j: usize) -> &DMatrix<f64> {
        &self.forward[j]
    }

    /// Forward monodromy `Phi(T0, 0)`.
    pub fn monodromy(&self) -> DMatrix<f64> {
        self.forward[self.grid_size()].clone()
    }

    /// Matrix taking a dual vector at `T0` to the dual vector at `t_j`.
    pub fn dual_propagator(&self, j: usize) -> DMatrix<f64> {
        &self.dual_map[j % self.grid_size()] * &self.backward[j] * self.c[0].transpose()
    }

    /// Adjoint monodromy, `v(T0) -> v(0)`.
    pub fn adjoint_monodromy(&self) -> DMatrix<f64> {
        self.dual_propagator(0)
    }
}

/// Trajectory of one linear-response solution over a period, `M + 1`
/// samples. The forward run starts from `init` at `t = 0`; the adjoint run
/// starts from `init` at `t = T0` and is reported on the same ascending grid.
pub fn integrate_lr(
    model: &dyn CircuitModel,
    pss: &PssSolution,
    init: &[f64],
    adjoint: bool,
) -> Result<Vec<DVector<f64>>> {
    if init.len() != model.dim() {
        return Err(Error::ModelDefinition(format!(
            "initial vector has length {}, model has n = {}",
            init.len(),
            model.dim()
        )));
    }
    let lr = LinearResponse::new(model, pss)?;
    let y0 = DVector::from_column_slice(init);
    Ok((0..=lr.grid_size())
        .map(|j| {
            if adjoint {
                lr.dual_propagator(j) * &y0
            } else {
                lr.propagator(j) * &y0
            }
        })
        .collect())
}

/// Forward monodromy `Phi(T0, 0)` or the adjoint monodromy `v(T0) -> v(0)`.
pub fn calc_monodromy(model: &dyn CircuitModel, pss: &PssSolution, adjoint: bool) -> Result<DMatrix<f64>> {
    let lr = LinearResponse::new(model, pss)?;
    Ok(if adjoint { lr.adjoint_monodromy() } else { lr.monodromy() })
}
