use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Per-column z-scoring with statistics from the training data. A
/// zero-variance column maps to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    inv_sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut inv_sd = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let sd = var.sqrt();
            mean.push(m);
            // Relative threshold so that constant columns with rounding noise still count as constant.
            inv_sd.push(if sd > 1e-12 * m.abs().max(1e-300) && sd > 0.0 { 1.0 / sd } else { 0.0 });
        }
        Self { mean, inv_sd }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn transform_value(&self, j: usize, v: f64) -> f64 {
        (v - self.mean[j]) * self.inv_sd[j]
    }

    pub fn transform_row(&self, x: ArrayView1<f64>) -> Vec<f64> {
        x.iter().enumerate().map(|(j, &v)| self.transform_value(j, v)).collect()
    }

    pub fn is_constant(&self, j: usize) -> bool {
        self.inv_sd[j] == 0.0
    }
}

/// Ridge regression. Features are standardized; the intercept is the
/// training mean and is not penalized.
#[derive(Debug, Clone)]
pub struct RidgeRegression {
    scaler: Standardizer,
    intercept: f64,
    coef: Vec<f64>,
}

impl RidgeRegression {
    pub fn fit(x: ArrayView2<f64>, y: &[f64], lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidLearner(format!("ridge lambda {lambda}")));
        }
        let (n, d) = x.dim();
        let scaler = Standardizer::fit(x);
        let y_mean = y.iter().sum::<f64>() / n as f64;

        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut rhs = DVector::<f64>::zeros(d);
        let mut z = vec![0.0; d];
        for (row, &yi) in x.rows().into_iter().zip(y) {
            for (j, v) in row.iter().enumerate() {
                z[j] = scaler.transform_value(j, *v);
            }
            let yc = yi - y_mean;
            for a in 0..d {
                rhs[a] += z[a] * yc;
                for b in 0..=a {
                    gram[(a, b)] += z[a] * z[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                gram[(b, a)] = gram[(a, b)];
            }
            gram[(a, a)] += lambda;
        }
        let coef = solve_spd(gram, rhs)?;
        Ok(Self { scaler, intercept: y_mean, coef: coef.iter().copied().collect() })
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        self.intercept
            + x.iter().enumerate().map(|(j, &v)| self.coef[j] * self.scaler.transform_value(j, v)).sum::<f64>()
    }
}

/// Cholesky solve that reports near-singular systems instead of returning
/// an ill-determined solution.
fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::SingularSystem);
    }
    let chol = a.cholesky().ok_or(Error::SingularSystem)?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    // Negated so that a NaN pivot also counts as singular.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(min_pivot > 1e-12 * scale) {
        return Err(Error::SingularSystem);
    }
    Ok(chol.solve(&b))
}

/// Logistic regression with an L2 penalty `λ/2 ‖β‖²` on the standardized
/// slopes. The intercept is unpenalized.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    scaler: Standardizer,
    intercept: f64,
    coef: Vec<f64>,
    iterations: usize,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl LogisticRegression {
    pub fn fit(x: ArrayView2<f64>, y: &[f64], lambda: f64, max_iter: usize, tol: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidLearner(format!("logistic lambda {lambda}")));
        }
        if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidLearner("logistic targets must lie in [0, 1]".into()));
        }
        let (n, d) = x.dim();
        let scaler = Standardizer::fit(x);
        let p = d + 1;
        // Design with a leading intercept column.
        let mut design = vec![0.0; n * p];
        for (i, row) in x.rows().into_iter().enumerate() {
            design[i * p] = 1.0;
            for (j, v) in row.iter().enumerate() {
                design[i * p + j + 1] = scaler.transform_value(j, *v);
            }
        }
        let objective = |beta: &DVector<f64>| -> f64 {
            let mut total = 0.0;
            for i in 0..n {
                let row = &design[i * p..(i + 1) * p];
                let eta: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
                total += softplus(eta) - y[i] * eta;
            }
            total + 0.5 * lambda * beta.iter().skip(1).map(|b| b * b).sum::<f64>()
        };

        let mut beta = DVector::<f64>::zeros(p);
        let mut current = objective(&beta);
        let mut iterations = 0;
        for _ in 0..max_iter {
            let mut grad = DVector::<f64>::zeros(p);
            let mut hess = DMatrix::<f64>::zeros(p, p);
            for i in 0..n {
                let row = &design[i * p..(i + 1) * p];
                let eta: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
                let mu = sigmoid(eta);
                let w = mu * (1.0 - mu);
                let resid = mu - y[i];
                for a in 0..p {
                    grad[a] += row[a] * resid;
                    for b in 0..=a {
                        hess[(a, b)] += w * row[a] * row[b];
                    }
                }
            }
            for a in 1..p {
                grad[a] += lambda * beta[a];
                hess[(a, a)] += lambda;
            }
            for a in 0..p {
                for b in 0..a {
                    hess[(b, a)] = hess[(a, b)];
                }
            }
            if grad.norm() < tol {
                break;
            }
            iterations += 1;
            let step = match hess.cholesky() {
                Some(ch) => ch.solve(&grad),
                // Saturated fit (all weights underflowed): nothing left to gain.
                None if lambda > 0.0 || iterations > 1 => break,
                None => return Err(Error::SingularSystem),
            };
            // Converged to rounding level: the gradient criterion can be out
            // of reach when the sum over rows is large.
            if step.norm() <= 1e-12 * (1.0 + beta.norm()) {
                break;
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let candidate = &beta - &step * t;
                let value = objective(&candidate);
                if value < current {
                    beta = candidate;
                    current = value;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if lambda == 0.0 && (0..d).any(|j| scaler.is_constant(j)) {
            return Err(Error::SingularSystem);
        }
        Ok(Self { scaler, intercept: beta[0], coef: beta.iter().skip(1).copied().collect(), iterations })
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        let eta = self.intercept
            + x.iter().enumerate().map(|(j, &v)| self.coef[j] * self.scaler.transform_value(j, v)).sum::<f64>();
        sigmoid(eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn grid(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { i as f64 / n as f64 } else { ((i * 7) % 11) as f64 })
    }

    #[test]
    fn ridge_interpolates_exact_linear_data() {
        let x = grid(30);
        let y: Vec<f64> = x.rows().into_iter().map(|r| 3.0 - 2.0 * r[0] + 0.5 * r[1]).collect();
        let m = RidgeRegression::fit(x.view(), &y, 0.0).unwrap();
        for (row, yi) in x.rows().into_iter().zip(&y) {
            assert!((m.predict_row(row) - yi).abs() < 1e-8);
        }
    }

    #[test]
    fn ridge_infinite_shrinkage_gives_mean() {
        let x = grid(30);
        let y: Vec<f64> = x.rows().into_iter().map(|r| r[0] * 10.0 + r[1]).collect();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let m = RidgeRegression::fit(x.view(), &y, 1e9).unwrap();
        for row in x.rows() {
            assert!((m.predict_row(row) - mean).abs() < 1e-3);
        }
    }

    #[test]
    fn ridge_rank_deficiency_is_reported() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]];
        let y = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(RidgeRegression::fit(x.view(), &y, 0.0).unwrap_err(), Error::SingularSystem);
        assert!(RidgeRegression::fit(x.view(), &y, 1.0).is_ok());
        let constant = array![[1.0], [1.0], [1.0]];
        assert_eq!(RidgeRegression::fit(constant.view(), &[0.0, 1.0, 2.0], 0.0).unwrap_err(), Error::SingularSystem);
        let m = RidgeRegression::fit(constant.view(), &[0.0, 1.0, 2.0], 1.0).unwrap();
        assert!((m.predict_row(array![5.0].view()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_recovers_a_monotone_trend() {
        let n = 400;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 / n as f64);
        let y: Vec<f64> = (0..n).map(|i| if (i * 37) % 100 < i * 100 / n { 1.0 } else { 0.0 }).collect();
        let m = LogisticRegression::fit(x.view(), &y, 1.0, 100, 1e-8).unwrap();
        let lo = m.predict_row(array![0.05].view());
        let hi = m.predict_row(array![0.95].view());
        assert!(lo < 0.2 && hi > 0.8, "{lo} {hi}");
    }

    #[test]
    fn logistic_all_zero_targets_goes_to_zero() {
        let x = grid(20);
        let y = vec![0.0; 20];
        let m = LogisticRegression::fit(x.view(), &y, 1.0, 100, 1e-8).unwrap();
        for row in x.rows() {
            let p = m.predict_row(row);
            assert!((0.0..1e-6).contains(&p));
        }
    }

    #[test]
    fn logistic_matches_closed_form_intercept_only() {
        // Constant feature: the fit reduces to the intercept, whose optimum is logit(mean(y)).
        let x = Array2::from_elem((10, 1), 3.0);
        let y = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let m = LogisticRegression::fit(x.view(), &y, 1.0, 100, 1e-12).unwrap();
        assert!((m.predict_row(array![3.0].view()) - 0.3).abs() < 1e-10);
    }

    #[test]
    fn logistic_rejects_out_of_range_targets() {
        let x = grid(5);
        assert!(LogisticRegression::fit(x.view(), &[0.0, 2.0, 1.0, 0.0, 1.0], 1.0, 100, 1e-8).is_err());
    }
}
