//! L2-regularized logistic regression fitted by Newton's method.

use serde::{Deserialize, Serialize};

use crate::env::logistic_fn;
use crate::linalg::{dot, Mat};

const MAX_ITERS: usize = 50;
const STEP_TOL: f64 = 1e-9;

/// Linear score `intercept + coefᵀx`; the probability is `σ(score)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LogisticFit {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.intercept + dot(&self.coef, x)
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        logistic_fn(self.score(x))
    }

    /// Minimizes `Σ_i [log(1 + e^{s_i}) − y_i s_i] + (l2 / 2)‖coef‖²` with an
    /// unpenalized intercept. Targets may be fractional in `[0, 1]`.
    pub fn fit(xs: &[&[f64]], ys: &[f64], l2: f64) -> Self {
        let d = xs.first().map_or(0, |x| x.len());
        let p = d + 1;
        // params[0] is the intercept
        let mut params = vec![0.0; p];
        let mut row = vec![0.0; p];
        for _ in 0..MAX_ITERS {
            let mut grad = vec![0.0; p];
            let mut hess = Mat::zeros(p);
            for (x, &y) in xs.iter().zip(ys) {
                row[0] = 1.0;
                row[1..].copy_from_slice(x);
                let mu = logistic_fn(dot(&params, &row));
                for (g, r) in grad.iter_mut().zip(&row) {
                    *g += (mu - y) * r;
                }
                hess.add_outer(&row, mu * (1.0 - mu));
            }
            for j in 1..p {
                grad[j] += l2 * params[j];
                hess.set(j, j, hess.get(j, j) + l2);
            }
            // keeps the intercept direction invertible under perfect separation
            hess.set(0, 0, hess.get(0, 0) + 1e-8);
            let Ok(ch) = hess.cholesky() else { break };
            let step = ch.solve(&grad);
            let mut max_step: f64 = 0.0;
            for (w, s) in params.iter_mut().zip(&step) {
                *w -= s;
                max_step = max_step.max(s.abs());
            }
            if max_step < STEP_TOL || !max_step.is_finite() {
                break;
            }
        }
        Self {
            intercept: params[0],
            coef: params[1..].to_vec(),
        }
    }
}
