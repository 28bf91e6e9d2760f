//! Unregularized reference fits: the most accurate (and least fair) models,
//! used for solver initialization, big-M derivation, and relative-loss
//! reporting.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::losses::LossKind;

/// Minimizer of the plain loss sum over w, ignoring fairness entirely.
///
/// Squared error solves the normal equations (with a vanishing ridge for
/// rank-deficient designs). Logistic runs damped Newton to gradient norm
/// 1e-10 or 100 iterations, whichever first; on separable data this returns
/// the last damped iterate.
pub fn unfair_weights(ds: &Dataset, loss: LossKind) -> Vec<f64> {
    let m = ds.m();
    let n = ds.n();
    match loss {
        LossKind::SquaredError => {
            let mut xtx = DMatrix::<f64>::zeros(n, n);
            let mut xty = DVector::<f64>::zeros(n);
            for i in 0..m {
                let row = ds.row(i);
                let y = ds.target(i);
                for a in 0..n {
                    xty[a] += row[a] * y;
                    for b in 0..n {
                        xtx[(a, b)] += row[a] * row[b];
                    }
                }
            }
            for a in 0..n {
                xtx[(a, a)] += 1e-10;
            }
            let w = xtx
                .clone()
                .cholesky()
                .map(|c| c.solve(&xty))
                .unwrap_or_else(|| xtx.lu().solve(&xty).unwrap_or_else(|| DVector::zeros(n)));
            w.iter().cloned().collect()
        }
        LossKind::Logistic => {
            let mut w = vec![0.0; n];
            let total = |w: &[f64]| -> f64 {
                let v = ds.predictions(w);
                (0..m).map(|i| loss.value(v[i], ds.target(i))).sum()
            };
            let mut f = total(&w);
            for _ in 0..100 {
                let v = ds.predictions(&w);
                let mut g = DVector::<f64>::zeros(n);
                let mut h = DMatrix::<f64>::zeros(n, n);
                for i in 0..m {
                    let row = ds.row(i);
                    let gi = loss.grad(v[i], ds.target(i));
                    let hi = loss.curvature(v[i], ds.target(i));
                    for a in 0..n {
                        g[a] += gi * row[a];
                        for b in 0..n {
                            h[(a, b)] += hi * row[a] * row[b];
                        }
                    }
                }
                if g.amax() <= 1e-10 {
                    break;
                }
                for a in 0..n {
                    h[(a, a)] += 1e-9;
                }
                let dir = match h.clone().cholesky() {
                    Some(c) => c.solve(&(-&g)),
                    None => -&g,
                };
                let mut step = 1.0;
                let slope: f64 = g.dot(&dir);
                let mut accepted = false;
                for _ in 0..40 {
                    let trial: Vec<f64> =
                        (0..n).map(|a| w[a] + step * dir[a]).collect();
                    let ft = total(&trial);
                    if ft <= f + 1e-4 * step * slope {
                        w = trial;
                        f = ft;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
            w
        }
    }
}

/// Loss sum of the unregularized reference model.
pub fn unfair_loss(ds: &Dataset, loss: LossKind) -> f64 {
    let w = unfair_weights(ds, loss);
    let v = ds.predictions(&w);
    (0..ds.m()).map(|i| loss.value(v[i], ds.target(i))).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic_regression, gen_zafar_classification};

    #[test]
    fn least_squares_is_stationary() {
        let (ds, _) = gen_synthetic_regression(6, 40, 1).unwrap();
        let w = unfair_weights(&ds, LossKind::SquaredError);
        let v = ds.predictions(&w);
        for k in 0..ds.n() {
            let g: f64 = (0..ds.m())
                .map(|i| ds.row(i)[k] * 2.0 * (v[i] - ds.target(i)))
                .sum();
            assert!(g.abs() < 1e-6, "normal equations residual {g} at {k}");
        }
    }

    #[test]
    fn logistic_fit_beats_zero() {
        let ds = gen_zafar_classification(120, 2).unwrap();
        let w = unfair_weights(&ds, LossKind::Logistic);
        let loss_fit = {
            let v = ds.predictions(&w);
            (0..ds.m())
                .map(|i| LossKind::Logistic.value(v[i], ds.target(i)))
                .sum::<f64>()
        };
        let loss_zero = ds.m() as f64 * std::f64::consts::LN_2;
        assert!(loss_fit < loss_zero);
    }
}
