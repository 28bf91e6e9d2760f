//! Loss functions, their perspectives, coefficient regularizers, and the
//! univariate minimizers used by coordinate descent.
//!
//! The perspective `h(u, z) = z L(b + u/z, y)` with the closure convention
//! `h(0, 0) = 0` is the convexification workhorse behind the strong extended
//! formulation: each epigraph row of that model is a sum of perspective terms.

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Supported convex losses. Squared error pairs with real targets, logistic
/// with labels in {-1, +1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    SquaredError,
    Logistic,
}

impl LossKind {
    /// Loss value, assuming a valid label. `ln(1 + e^{-yv})` is evaluated in
    /// log-sum-exp form so |v| up to ~1e3 neither overflows nor loses the tail.
    #[inline]
    pub fn value(self, v: f64, y: f64) -> f64 {
        match self {
            LossKind::SquaredError => {
                let d = v - y;
                d * d
            }
            LossKind::Logistic => {
                debug_assert!(y == 1.0 || y == -1.0);
                let t = y * v;
                if t >= 0.0 {
                    (-t).exp().ln_1p()
                } else {
                    -t + t.exp().ln_1p()
                }
            }
        }
    }

    /// Derivative of `value` with respect to v.
    #[inline]
    pub fn grad(self, v: f64, y: f64) -> f64 {
        match self {
            LossKind::SquaredError => 2.0 * (v - y),
            LossKind::Logistic => {
                let t = y * v;
                // -y * sigma(-t), evaluated on the stable side
                let s = if t >= 0.0 {
                    let e = (-t).exp();
                    e / (1.0 + e)
                } else {
                    1.0 / (1.0 + t.exp())
                };
                -y * s
            }
        }
    }

    /// Second derivative with respect to v.
    #[inline]
    pub fn curvature(self, v: f64, y: f64) -> f64 {
        match self {
            LossKind::SquaredError => 2.0,
            LossKind::Logistic => {
                let t = (y * v).abs();
                let e = (-t).exp();
                let s = e / (1.0 + e);
                s * (1.0 - s)
            }
        }
    }

    fn check_label(self, y: f64) -> Result<()> {
        if self == LossKind::Logistic && y != 1.0 && y != -1.0 {
            return Err(Error::InvalidLabel(y));
        }
        Ok(())
    }
}

/// Checked loss evaluation.
pub fn eval_loss(kind: LossKind, v: f64, y: f64) -> Result<f64> {
    kind.check_label(y)?;
    Ok(kind.value(v, y))
}

/// Checked loss derivative.
pub fn loss_grad(kind: LossKind, v: f64, y: f64) -> Result<f64> {
    kind.check_label(y)?;
    Ok(kind.grad(v, y))
}

/// Closed perspective of the shifted loss `g(c) = L(b + c, y)`:
/// `z g(u/z)` for z > 0, with `h(0,0) = 0` and the recession function of g in
/// direction u when z = 0 and u != 0. Squared error grows superlinearly, so
/// its recession value is infinite; the logistic recession is `max(0, -y u)`.
pub fn perspective(kind: LossKind, u: f64, z: f64, b: f64, y: f64) -> Result<f64> {
    kind.check_label(y)?;
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::PerspectiveWeight(z));
    }
    if z > 0.0 {
        return Ok(z * kind.value(b + u / z, y));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    Ok(match kind {
        LossKind::SquaredError => f64::INFINITY,
        LossKind::Logistic => (-y * u).max(0.0),
    })
}

/// Coefficient regularizers of the form `mu * sum_k r(w_k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    None,
    /// r(w) = w^2
    Ridge { mu: f64 },
    /// r(w) = |w|
    L1 { mu: f64 },
    /// r(w; d) = min_{0 <= zeta <= 1} w^2/zeta + d*zeta, with the closed form
    /// 2|w|sqrt(d) for |w| <= sqrt(d) and w^2 + d otherwise.
    ReverseHuber { mu: f64, d: f64 },
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        let mu = match *self {
            Regularizer::None => return Ok(()),
            Regularizer::Ridge { mu } | Regularizer::L1 { mu } => mu,
            Regularizer::ReverseHuber { mu, d } => {
                if d <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "reverse-Huber threshold d must be positive, got {d}"
                    )));
                }
                mu
            }
        };
        if mu < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "regularizer weight mu must be nonnegative, got {mu}"
            )));
        }
        Ok(())
    }

    /// Per-coordinate penalty r(w) without the mu factor.
    #[inline]
    fn unit(self, w: f64) -> f64 {
        match self {
            Regularizer::None => 0.0,
            Regularizer::Ridge { .. } => w * w,
            Regularizer::L1 { .. } => w.abs(),
            Regularizer::ReverseHuber { d, .. } => {
                let sd = d.sqrt();
                if w.abs() <= sd {
                    2.0 * w.abs() * sd
                } else {
                    w * w + d
                }
            }
        }
    }

    fn mu(self) -> f64 {
        match self {
            Regularizer::None => 0.0,
            Regularizer::Ridge { mu } | Regularizer::L1 { mu } => mu,
            Regularizer::ReverseHuber { mu, .. } => mu,
        }
    }

    /// Proximal map of `alpha * mu * r` applied coordinate-wise. All three
    /// penalties admit exact one-dimensional proxes; the solvers rely on this
    /// instead of subgradients for the nonsmooth cases.
    pub fn prox(self, x: f64, alpha: f64) -> f64 {
        let a = alpha * self.mu();
        if a == 0.0 {
            return x;
        }
        match self {
            Regularizer::None => x,
            Regularizer::Ridge { .. } => x / (1.0 + 2.0 * a),
            Regularizer::L1 { .. } => soft_threshold(x, a),
            Regularizer::ReverseHuber { d, .. } => {
                let sd = d.sqrt();
                let sign = if x < 0.0 { -1.0 } else { 1.0 };
                let ax = x.abs();
                // phi'(c) = c - ax + a r'(c); r is C1, so match on the region
                let linear = (ax - 2.0 * a * sd).max(0.0);
                if linear <= sd {
                    sign * linear
                } else {
                    let quad = ax / (1.0 + 2.0 * a);
                    sign * quad.max(sd)
                }
            }
        }
    }
}

#[inline]
fn soft_threshold(x: f64, a: f64) -> f64 {
    if x > a {
        x - a
    } else if x < -a {
        x + a
    } else {
        0.0
    }
}

/// Total penalty `mu * sum_k r(w_k)`.
pub fn reg_value(reg: Regularizer, w: &[f64]) -> f64 {
    let mu = reg.mu();
    if mu == 0.0 {
        return 0.0;
    }
    mu * w.iter().map(|&wk| reg.unit(wk)).sum::<f64>()
}

/// Global minimizer of `sum_i L(w_k x_ik + rest_i, y_i)` over the single
/// coordinate w_k, all other coordinates held at `w_fixed`.
///
/// Squared error has the weighted least-squares closed form. Logistic uses
/// safeguarded 1D Newton (bisection fallback on the monotone gradient) to
/// |gradient| <= 1e-10. A zero feature column leaves w_k unchanged.
pub fn univariate_loss_min(kind: LossKind, ds: &Dataset, k: usize, w_fixed: &[f64]) -> f64 {
    let m = ds.m();
    let xk = ds.column(k);
    if xk.iter().all(|&x| x == 0.0) {
        return w_fixed[k];
    }
    let rest: Vec<f64> = {
        let v = ds.predictions(w_fixed);
        (0..m).map(|i| v[i] - w_fixed[k] * xk[i]).collect()
    };
    match kind {
        LossKind::SquaredError => {
            let denom: f64 = xk.iter().map(|x| x * x).sum();
            let num: f64 = (0..m).map(|i| xk[i] * (ds.target(i) - rest[i])).sum();
            num / denom
        }
        LossKind::Logistic => {
            let grad = |wk: f64| -> f64 {
                (0..m)
                    .map(|i| xk[i] * kind.grad(wk * xk[i] + rest[i], ds.target(i)))
                    .sum()
            };
            let curv = |wk: f64| -> f64 {
                (0..m)
                    .map(|i| xk[i] * xk[i] * kind.curvature(wk * xk[i] + rest[i], ds.target(i)))
                    .sum()
            };
            // bracket the root of the monotone gradient
            let mut lo = -1.0;
            let mut hi = 1.0;
            let mut glo = grad(lo);
            let mut ghi = grad(hi);
            let mut expand = 0;
            while glo > 0.0 && expand < 22 {
                lo *= 2.0;
                glo = grad(lo);
                expand += 1;
            }
            let mut expand = 0;
            while ghi < 0.0 && expand < 22 {
                hi *= 2.0;
                ghi = grad(hi);
                expand += 1;
            }
            if glo > 0.0 {
                return lo; // gradient positive everywhere reachable
            }
            if ghi < 0.0 {
                return hi;
            }
            let mut wk = 0.0f64.clamp(lo, hi);
            for _ in 0..200 {
                let g = grad(wk);
                if g.abs() <= 1e-10 {
                    return wk;
                }
                if g > 0.0 {
                    hi = wk;
                } else {
                    lo = wk;
                }
                let h = curv(wk);
                let newton = wk - g / h;
                wk = if h > 0.0 && newton > lo && newton < hi {
                    newton
                } else {
                    0.5 * (lo + hi)
                };
            }
            wk
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;

    #[test]
    fn loss_values() {
        assert_eq!(eval_loss(LossKind::SquaredError, 0.5, 1.0).unwrap(), 0.25);
        let l = eval_loss(LossKind::Logistic, 0.0, 1.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        // extreme argument: ln(1 + e^-700) ~ e^-700, no overflow
        let tail = eval_loss(LossKind::Logistic, 700.0, 1.0).unwrap();
        let expected = (-700.0f64).exp();
        assert!(tail.is_finite());
        assert!((tail - expected).abs() <= 1e-12 * expected.max(1e-300), "{tail} vs {expected}");
        let big = eval_loss(LossKind::Logistic, -700.0, 1.0).unwrap();
        assert!((big - 700.0).abs() < 1e-12);
        assert!(eval_loss(LossKind::Logistic, 0.0, 0.5).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cases = [
            (LossKind::SquaredError, 0.5, 1.0),
            (LossKind::SquaredError, -2.3, 0.7),
            (LossKind::Logistic, 0.0, 1.0),
            (LossKind::Logistic, 1.7, -1.0),
            (LossKind::Logistic, -3.2, 1.0),
        ];
        for (kind, v, y) in cases {
            let g = loss_grad(kind, v, y).unwrap();
            let h = 1e-6;
            let fd = (kind.value(v + h, y) - kind.value(v - h, y)) / (2.0 * h);
            let denom = g.abs().max(1e-3);
            assert!(
                ((g - fd) / denom).abs() < 1e-6,
                "grad mismatch for {kind:?}: {g} vs {fd}"
            );
        }
        assert_eq!(loss_grad(LossKind::SquaredError, 0.5, 1.0).unwrap(), -1.0);
        assert_eq!(loss_grad(LossKind::Logistic, 0.0, 1.0).unwrap(), -0.5);
    }

    #[test]
    fn perspective_basics() {
        // z (u/z - y)^2 at u=2, z=0.5, y=0
        let h = perspective(LossKind::SquaredError, 2.0, 0.5, 0.0, 0.0).unwrap();
        assert!((h - 8.0).abs() < 1e-12);
        for kind in [LossKind::SquaredError, LossKind::Logistic] {
            assert_eq!(perspective(kind, 0.0, 0.0, 3.0, 1.0).unwrap(), 0.0);
            let u = 1.37;
            let at_one = perspective(kind, u, 1.0, 0.0, 1.0).unwrap();
            assert!((at_one - kind.value(u, 1.0)).abs() < 1e-14);
        }
        assert!(perspective(LossKind::SquaredError, 1.0, 0.0, 0.0, 0.0)
            .unwrap()
            .is_infinite());
        // logistic recession: flat toward the correctly-classified side
        assert_eq!(perspective(LossKind::Logistic, 2.0, 0.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(perspective(LossKind::Logistic, -2.0, 0.0, 0.0, 1.0).unwrap(), 2.0);
        assert!(perspective(LossKind::SquaredError, 0.0, 1.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn reverse_huber_closed_form() {
        let r = Regularizer::ReverseHuber { mu: 1.0, d: 4.0 };
        assert!((reg_value(r, &[1.0]) - 4.0).abs() < 1e-12);
        assert!((reg_value(r, &[3.0]) - 13.0).abs() < 1e-12);
        assert!((reg_value(Regularizer::Ridge { mu: 2.0 }, &[1.0, -2.0]) - 10.0).abs() < 1e-12);

        // closed form equals the inner minimization over zeta on a grid
        for &(w, d) in &[(0.3, 1.0), (1.7, 2.0), (-2.5, 4.0), (0.0, 0.5)] {
            let reg = Regularizer::ReverseHuber { mu: 1.0, d };
            let closed = reg_value(reg, &[w]);
            let mut best = f64::INFINITY;
            let mut zeta = 1e-9;
            while zeta <= 1.0 {
                best = best.min(w * w / zeta + d * zeta);
                zeta += 1e-5;
            }
            assert!(
                closed <= best + 1e-8 && closed >= best - 1e-4,
                "w={w} d={d}: closed={closed} grid={best}"
            );
        }
    }

    #[test]
    fn prox_matches_numeric_minimum() {
        let regs = [
            Regularizer::Ridge { mu: 0.7 },
            Regularizer::L1 { mu: 0.4 },
            Regularizer::ReverseHuber { mu: 0.9, d: 1.5 },
            Regularizer::ReverseHuber { mu: 0.2, d: 4.0 },
        ];
        for reg in regs {
            for &x in &[-3.0, -1.2, -0.1, 0.0, 0.05, 0.8, 2.5, 6.0] {
                for &alpha in &[0.1, 1.0, 3.0] {
                    let p = reg.prox(x, alpha);
                    let obj = |c: f64| 0.5 * (c - x) * (c - x) + alpha * reg_value(reg, &[c]);
                    let mut best = obj(p);
                    let mut c = -8.0;
                    while c <= 8.0 {
                        best = best.min(obj(c));
                        c += 1e-4;
                    }
                    assert!(
                        obj(p) <= best + 1e-7,
                        "prox suboptimal: reg={reg:?} x={x} alpha={alpha} p={p}"
                    );
                }
            }
        }
    }

    #[test]
    fn univariate_minimizers() {
        // squared error: mean of residual targets against a unit column
        let ds = Dataset::new(vec![1.0, 1.0], vec![1.0, 0.0], vec![true, false], 1).unwrap();
        let w = univariate_loss_min(LossKind::SquaredError, &ds, 0, &[0.0]);
        assert!((w - 0.5).abs() < 1e-12);

        // zero column: unchanged
        let ds0 = Dataset::new(vec![0.0, 0.0], vec![1.0, 0.0], vec![true, false], 1).unwrap();
        let w0 = univariate_loss_min(LossKind::SquaredError, &ds0, 0, &[0.37]);
        assert_eq!(w0, 0.37);

        // logistic: |gradient| <= 1e-10 at the returned point, grid-checked
        let ds = Dataset::new(
            vec![1.0, 2.0, -1.5, 0.5],
            vec![1.0, -1.0, 1.0, -1.0],
            vec![true, false, true, false],
            1,
        )
        .unwrap();
        let wk = univariate_loss_min(LossKind::Logistic, &ds, 0, &[0.0]);
        let obj = |w: f64| -> f64 {
            (0..4)
                .map(|i| LossKind::Logistic.value(w * ds.row(i)[0], ds.target(i)))
                .sum()
        };
        let g: f64 = (0..4)
            .map(|i| ds.row(i)[0] * LossKind::Logistic.grad(wk * ds.row(i)[0], ds.target(i)))
            .sum();
        assert!(g.abs() <= 1e-10, "gradient {g}");
        let mut best = f64::INFINITY;
        let mut w = -5.0;
        while w <= 5.0 {
            best = best.min(obj(w));
            w += 1e-4;
        }
        assert!(obj(wk) <= best + 1e-8);
    }
}
