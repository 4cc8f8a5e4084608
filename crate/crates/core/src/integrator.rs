//! Fixed-step trapezoidal integration of `d/dt q(x) + i(x) + s(t) = f`.
//!
//! One step solves
//!
//! ```text
//! q(y) - q(x) + h/2 (i(y) + i(x)) + h/2 (s(t+h) + s(t)) + w = 0
//! ```
//!
//! for `y` by Newton iteration, where `w` is an optional forcing increment
//! (the stochastic term in Monte-Carlo runs). The same scheme discretizes
//! the steady state and both linear-response equations, so the discrete
//! monodromy is exactly the derivative of the discrete flow.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::CircuitModel;

/// Solve `a * x = b` in place by Gaussian elimination with partial
/// pivoting. `a` is `n x n` row-major; on return `b` holds `x`.
/// Returns `false` when a pivot vanishes.
pub(crate) fn solve_dense_in_place(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return false;
    }
    for col in 0..n {
        let (piv, pmax) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= 1e-300 || pmax <= scale * 1e-15 {
            return false;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f != 0.0 {
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[r * n + c] * b[c];
        }
        b[r] = acc / a[r * n + r];
    }
    true
}

/// Reusable buffers for trapezoidal steps of one model.
pub struct TrapezoidalStepper {
    n: usize,
    q0: Vec<f64>,
    i0: Vec<f64>,
    s0: Vec<f64>,
    s1: Vec<f64>,
    q1: Vec<f64>,
    i1: Vec<f64>,
    res: Vec<f64>,
    jac: Vec<f64>,
    c: DMatrix<f64>,
    g: DMatrix<f64>,
    /// Newton convergence threshold relative to the state magnitude.
    pub rel_tol: f64,
    pub max_newton: usize,
}

impl TrapezoidalStepper {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            q0: vec![0.0; n],
            i0: vec![0.0; n],
            s0: vec![0.0; n],
            s1: vec![0.0; n],
            q1: vec![0.0; n],
            i1: vec![0.0; n],
            res: vec![0.0; n],
            jac: vec![0.0; n * n],
            c: DMatrix::zeros(n, n),
            g: DMatrix::zeros(n, n),
            rel_tol: 1e-13,
            max_newton: 30,
        }
    }

    /// Advance from `x` at time `t` by `h`, writing the new state into `y`.
    /// `y` is used as the Newton predictor on entry.
    pub fn step(
        &mut self,
        model: &dyn CircuitModel,
        x: &[f64],
        t: f64,
        h: f64,
        forcing: Option<&[f64]>,
        y: &mut [f64],
    ) -> Result<()> {
        let n = self.n;
        model.charge(x, &mut self.q0);
        model.current(x, &mut self.i0);
        model.source(t, &mut self.s0);
        model.source(t + h, &mut self.s1);
        let xscale = x.iter().chain(y.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = self.rel_tol * xscale.max(f64::MIN_POSITIVE);
        for _ in 0..self.max_newton {
            model.charge(y, &mut self.q1);
            model.current(y, &mut self.i1);
            for r in 0..n {
                let mut v = self.q1[r] - self.q0[r]
                    + 0.5 * h * (self.i1[r] + self.i0[r] + self.s1[r] + self.s0[r]);
                if let Some(w) = forcing {
                    v += w[r];
                }
                self.res[r] = -v;
            }
            model.capacitance(y, &mut self.c);
            model.conductance(y, &mut self.g);
            for r in 0..n {
                for c in 0..n {
                    self.jac[r * n + c] = self.c[(r, c)] + 0.5 * h * self.g[(r, c)];
                }
            }
            if !solve_dense_in_place(&mut self.jac, &mut self.res, n) {
                return Err(Error::StepFailure {
                    index: 0,
                    reason: "singular Newton matrix C + h/2 G".into(),
                });
            }
            let mut dmax = 0.0f64;
            for (yr, d) in y.iter_mut().zip(&self.res) {
                *yr += d;
                dmax = dmax.max(d.abs());
            }
            if !dmax.is_finite() {
                break;
            }
            if dmax <= tol {
                return Ok(());
            }
        }
        Err(Error::StepFailure {
            index: 0,
            reason: "Newton iteration did not converge".into(),
        })
    }
}

/// Integrate `steps` trapezoidal steps of size `h` from `x0`, returning all
/// `steps + 1` states (row `j` is the state at `t0 + j h`).
pub fn integrate(
    model: &dyn CircuitModel,
    x0: &[f64],
    t0: f64,
    h: f64,
    steps: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = model.dim();
    let mut stepper = TrapezoidalStepper::new(n);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0.to_vec());
    let mut y = x0.to_vec();
    for j in 0..steps {
        let x = &out[j];
        // linear extrapolation predictor
        if j > 0 {
            for r in 0..n {
                y[r] = 2.0 * x[r] - out[j - 1][r];
            }
        } else {
            y.copy_from_slice(x);
        }
        stepper
            .step(model, x, t0 + j as f64 * h, h, None, &mut y)
            .map_err(|e| match e {
                Error::StepFailure { reason, .. } => Error::StepFailure { index: j, reason },
                other => other,
            })?;
        out.push(y.clone());
    }
    Ok(out)
}
