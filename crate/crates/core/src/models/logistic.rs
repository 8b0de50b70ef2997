use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;

const MAX_ITER: usize = 100;
const TOL: f64 = 1e-8;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// L2-regularized logistic regression on standardized inputs.
///
/// Minimizes `sum(logloss) + ||w||^2 / (2c)`; the intercept is not penalized.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    intercept: f64,
}

impl LogisticModel {
    pub fn fit(x: ArrayView2<f64>, y: &[u8], c: f64) -> Self {
        let (n, d) = x.dim();
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for (j, col) in x.columns().into_iter().enumerate() {
            let m = col.sum() / n as f64;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            mean[j] = m;
            scale[j] = if sd > 0.0 { sd } else { 1.0 };
        }
        // design matrix with a leading intercept column
        let z = DMatrix::from_fn(n, d + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                (x[[i, j - 1]] - mean[j - 1]) / scale[j - 1]
            }
        });
        let t = DVector::from_iterator(n, y.iter().map(|&l| f64::from(l)));
        let lambda = 1.0 / c;

        let objective = |beta: &DVector<f64>| -> f64 {
            let eta = &z * beta;
            let loss: f64 = eta
                .iter()
                .zip(t.iter())
                .map(|(e, ti)| softplus(*e) - ti * e)
                .sum();
            let penalty: f64 = beta.iter().skip(1).map(|b| b * b).sum::<f64>() * lambda / 2.0;
            loss + penalty
        };

        let mut beta = DVector::<f64>::zeros(d + 1);
        let mut f = objective(&beta);
        for _ in 0..MAX_ITER {
            let eta = &z * &beta;
            let p = eta.map(sigmoid);
            let mut grad = z.transpose() * (&p - &t);
            let w = p.map(|v| (v * (1.0 - v)).max(1e-12));
            let zw = DMatrix::from_fn(n, d + 1, |i, j| z[(i, j)] * w[i]);
            let mut hess = z.transpose() * zw;
            for j in 1..=d {
                grad[j] += lambda * beta[j];
                hess[(j, j)] += lambda;
            }
            let step = match solve_spd(hess, &grad) {
                Some(s) => s,
                None => break,
            };
            // backtracking line search on the penalized objective
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-10 {
                let candidate = &beta - &step * alpha;
                let fc = objective(&candidate);
                if fc <= f {
                    let improvement = f - fc;
                    beta = candidate;
                    f = fc;
                    accepted = true;
                    if improvement <= TOL * (1.0 + f.abs()) {
                        alpha = 0.0;
                    }
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted || alpha == 0.0 || grad.amax() < TOL {
                break;
            }
        }
        Self {
            mean,
            scale,
            intercept: beta[0],
            weights: beta.iter().skip(1).copied().collect(),
        }
    }

    pub fn decision_function(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| {
                self.intercept
                    + row
                        .iter()
                        .enumerate()
                        .map(|(j, v)| self.weights[j] * (v - self.mean[j]) / self.scale[j])
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
        self.decision_function(x).into_iter().map(sigmoid).collect()
    }
}

/// Cholesky solve with increasing diagonal jitter when the matrix is not
/// numerically positive definite.
fn solve_spd(h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().amax().max(1.0);
    let mut jitter = 0.0;
    for _ in 0..8 {
        let mut m = h.clone();
        for j in 0..m.nrows() {
            m[(j, j)] += jitter;
        }
        if let Some(ch) = m.cholesky() {
            return Some(ch.solve(g));
        }
        jitter = if jitter == 0.0 {
            1e-10 * scale
        } else {
            jitter * 100.0
        };
    }
    None
}
