//! Poisson maximum likelihood over density matrices.
//!
//! The state is written `ρ = T T† / Tr(T T†)` with `T` lower triangular and a
//! real diagonal (`d²` real parameters), so every iterate is physical. The
//! likelihood is maximized by BFGS with Armijo backtracking.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::TomographyError;
use crate::channel::DensityMatrix;
use crate::linalg::{self, c, CMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleOptions {
    #[serde(default = "default_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_iters")]
    pub max_iterations: usize,
    /// Accidental coincidences per second, added to every Poisson mean.
    #[serde(default)]
    pub accidental_rate: f64,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_iters() -> usize {
    10_000
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions {
            grad_tol: default_tol(),
            max_iterations: default_iters(),
            accidental_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleResult {
    pub state: DensityMatrix,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Poisson deviance-form log-likelihood per detected count (0 = perfect fit).
    pub log_likelihood: f64,
}

/// Counts `n_s` observed for projectors `Π_s` over times `t_s`, with
/// accidental means `b_s`.
pub(crate) struct PoissonProblem {
    pub projectors: Vec<CMatrix>,
    pub counts: Vec<f64>,
    pub times: Vec<f64>,
    pub background: Vec<f64>,
    pub dim: usize,
}

struct Scaled<'a> {
    p: &'a PoissonProblem,
    /// Expected counts per unit time per unit `Tr(Π ρ)`.
    scale: f64,
    total: f64,
}

impl Scaled<'_> {
    fn lower_t(&self, x: &DVector<f64>) -> CMatrix {
        let d = self.p.dim;
        let mut t = CMatrix::zeros(d, d);
        let mut k = 0;
        for i in 0..d {
            for j in 0..=i {
                if i == j {
                    t[(i, j)] = c(x[k], 0.0);
                    k += 1;
                } else {
                    t[(i, j)] = c(x[k], x[k + 1]);
                    k += 2;
                }
            }
        }
        t
    }

    fn means(&self, rho_u: &CMatrix) -> Vec<f64> {
        self.p
            .projectors
            .iter()
            .zip(&self.p.times)
            .zip(&self.p.background)
            .map(|((pi, &t), &b)| self.scale * t * linalg::trace(&(pi * rho_u)).re + b)
            .collect()
    }

    /// Negative log-likelihood per count and its gradient.
    fn eval(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let t = self.lower_t(x);
        let rho_u = &t * t.adjoint();
        let mu = self.means(&rho_u);
        let mut value = 0.0;
        let mut m = CMatrix::zeros(self.p.dim, self.p.dim);
        for (s, (&n, &u)) in self.p.counts.iter().zip(&mu).enumerate() {
            if n > 0.0 {
                if !(u > 0.0) {
                    return (f64::INFINITY, DVector::zeros(x.len()));
                }
                value += n * (u / n).ln() - (u - n);
            } else {
                value -= u;
            }
            let w = (if n > 0.0 { n / u } else { 0.0 }) - 1.0;
            m += &self.p.projectors[s] * c(w * self.scale * self.p.times[s], 0.0);
        }
        let g = (m * &t) * c(2.0 / self.total, 0.0);
        let mut grad = DVector::zeros(x.len());
        let mut k = 0;
        for i in 0..self.p.dim {
            for j in 0..=i {
                grad[k] = -g[(i, j)].re;
                k += 1;
                if i != j {
                    grad[k] = -g[(i, j)].im;
                    k += 1;
                }
            }
        }
        (-value / self.total, grad)
    }
}

/// Lower-triangular factor of `init` (mixed slightly toward `I/d` so the
/// factorization exists).
fn initial_params(init: &CMatrix, dim: usize) -> Result<DVector<f64>, TomographyError> {
    let eps = 1e-6;
    let mixed = init.scale(1.0 - eps) + linalg::identity(dim).scale(eps / dim as f64);
    let chol = mixed
        .cholesky()
        .ok_or_else(|| TomographyError::DegenerateData("initial state not positive definite".into()))?;
    let l = chol.l();
    let mut x = DVector::zeros(dim * dim);
    let mut k = 0;
    for i in 0..dim {
        for j in 0..=i {
            x[k] = l[(i, j)].re;
            k += 1;
            if i != j {
                x[k] = l[(i, j)].im;
                k += 1;
            }
        }
    }
    Ok(x)
}

const STALL_ITERATIONS: usize = 20;

pub(crate) fn maximize(
    problem: &PoissonProblem,
    init: &CMatrix,
    options: &MleOptions,
) -> Result<MleResult, TomographyError> {
    let dim = problem.dim;
    let total: f64 = problem.counts.iter().sum();
    let signal = total - problem.background.iter().sum::<f64>();
    let weight: f64 = problem
        .projectors
        .iter()
        .zip(&problem.times)
        .map(|(p, t)| t * linalg::trace(p).re)
        .sum();
    if !(total > 0.0) || !(signal > 0.0) || !(weight > 0.0) {
        return Err(TomographyError::DegenerateData(
            "no coincidences above the accidental level".into(),
        ));
    }
    let f = Scaled {
        p: problem,
        scale: signal * dim as f64 / weight,
        total,
    };

    let mut x = initial_params(init, dim)?;
    let (mut value, mut grad) = f.eval(&x);
    if !value.is_finite() {
        return Err(TomographyError::DegenerateData("initial state has zero likelihood".into()));
    }
    let n = x.len();
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    let mut converged = false;
    // Iterations without a representable decrease. With the optimum on the
    // rank-deficient boundary the gradient only shrinks with the vanishing
    // entries of T, so a stalled objective with a small gradient also counts.
    let mut stalled = 0;
    while iterations < options.max_iterations {
        if grad.norm() < options.grad_tol || (stalled >= STALL_ITERATIONS && grad.norm() < options.grad_tol.sqrt()) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut p = -(&h * &grad);
        let mut slope = grad.dot(&p);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            p = -grad.clone();
            slope = grad.dot(&p);
        }
        let mut alpha = 1.0;
        let accepted = loop {
            let trial = &x + &p * alpha;
            let (v, g) = f.eval(&trial);
            if v.is_finite() && v <= value + 1e-4 * alpha * slope {
                break Some((trial, v, g));
            }
            // below the Armijo resolution accept any non-increase
            if alpha < 1e-10 && v.is_finite() && v <= value {
                break Some((trial, v, g));
            }
            alpha *= 0.5;
            if alpha < 1e-20 {
                break None;
            }
        };
        let Some((x_new, v_new, g_new)) = accepted else {
            if h == DMatrix::identity(n, n) {
                break;
            }
            h = DMatrix::identity(n, n);
            continue;
        };
        let s = &x_new - &x;
        let y = &g_new - &grad;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            if iterations == 1 {
                h = DMatrix::identity(n, n) * (sy / y.dot(&y));
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * ((1.0 + rho * yhy) * rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        if value - v_new <= 1e-15 * (1.0 + value.abs()) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        x = x_new;
        value = v_new;
        grad = g_new;
    }
    if !converged && grad.norm() < options.grad_tol {
        converged = true;
    }

    let t = f.lower_t(&x);
    let rho_u = &t * t.adjoint();
    let tr = linalg::trace(&rho_u).re;
    let state = DensityMatrix::new(linalg::hermitian_part(&rho_u.scale(1.0 / tr)))?;
    let result = MleResult {
        state,
        converged,
        iterations,
        grad_norm: grad.norm(),
        log_likelihood: -value,
    };
    if converged {
        Ok(result)
    } else {
        Err(TomographyError::NonConvergence {
            iterations,
            grad_norm: result.grad_norm,
            best: Box::new(result),
        })
    }
}
