//! Empirical fairness metrics: exact and discretized demographic-parity
//! distances, the single-threshold classification variant, and the linear and
//! convex proxies from the literature.
//!
//! All indicator metrics use the strict convention: a prediction exactly equal
//! to a threshold does not exceed it. The tie freedom used by the optimization
//! models lives in [`parity_term_lsc`], not in the reported metrics.

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Strictly increasing thresholds b_1 < ... < b_ell.
#[derive(Debug, Clone, PartialEq)]
pub struct Breakpoints {
    values: Vec<f64>,
}

impl Breakpoints {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty()
            || values.iter().any(|v| !v.is_finite())
            || values.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::BadBreakpoints);
        }
        Ok(Self { values })
    }

    pub fn single(b: f64) -> Result<Self> {
        Self::new(vec![b])
    }

    /// Equispaced grid of `count` thresholds from `lo` to `hi` inclusive;
    /// value i is exactly `lo + i * (hi - lo) / (count - 1)`.
    pub fn grid(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::BadBreakpoints);
        }
        if count == 1 {
            return Self::new(vec![lo]);
        }
        let step = (hi - lo) / (count - 1) as f64;
        Self::new((0..count).map(|i| lo + i as f64 * step).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Which reference population the protected rate is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// Protected rate vs. the whole-population rate (1/m normalization).
    Marginal,
    /// Protected rate vs. the unprotected rate (1/m0 normalization).
    Complement,
}

/// Absolute-value or one-sided rate difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sided {
    Absolute,
    OneSided,
}

/// Full parity variant: reference population and sidedness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParityVariant {
    pub comparison: Comparison,
    pub sided: Sided,
}

impl ParityVariant {
    pub const fn new(comparison: Comparison, sided: Sided) -> Self {
        Self { comparison, sided }
    }
}

/// Per-observation coefficients c_i such that the threshold-j rate difference
/// is d_j(z) = sum_i c_i z_ij. Empty groups contribute zero.
pub(crate) fn group_coefficients(ds: &Dataset, comparison: Comparison) -> Vec<f64> {
    let m = ds.m() as f64;
    let m1 = ds.m1();
    let m0 = ds.m0();
    let inv_m1 = if m1 > 0 { 1.0 / m1 as f64 } else { 0.0 };
    let inv_m0 = if m0 > 0 { 1.0 / m0 as f64 } else { 0.0 };
    (0..ds.m())
        .map(|i| match comparison {
            Comparison::Marginal => {
                (if ds.is_protected(i) { inv_m1 } else { 0.0 }) - 1.0 / m
            }
            Comparison::Complement => {
                if ds.is_protected(i) {
                    inv_m1
                } else {
                    -inv_m0
                }
            }
        })
        .collect()
}

/// Strict-inequality group rates at a single threshold: the protected rate and
/// the reference rate (marginal or complement). Empty groups report rate 0.
pub fn group_rates(v: &[f64], ds: &Dataset, b: f64, comparison: Comparison) -> (f64, f64) {
    assert_eq!(v.len(), ds.m());
    let mut protected_above = 0usize;
    let mut total_above = 0usize;
    let mut reference_above = 0usize;
    for i in 0..ds.m() {
        if v[i] > b {
            total_above += 1;
            if ds.is_protected(i) {
                protected_above += 1;
            } else {
                reference_above += 1;
            }
        }
    }
    let rate = |count: usize, denom: usize| {
        if denom > 0 {
            count as f64 / denom as f64
        } else {
            0.0
        }
    };
    let protected_rate = rate(protected_above, ds.m1());
    let reference_rate = match comparison {
        Comparison::Marginal => rate(total_above, ds.m()),
        Comparison::Complement => rate(reference_above, ds.m0()),
    };
    (protected_rate, reference_rate)
}

/// Fairness term with strict indicators, in objective semantics: Absolute
/// gives max_j |d_j|, OneSided gives max_j d_j without clamping (it can be
/// negative, rewarding one-sided overshoot exactly as the models do).
pub(crate) fn parity_term_strict(
    v: &[f64],
    ds: &Dataset,
    bks: &Breakpoints,
    variant: ParityVariant,
) -> f64 {
    let coef = group_coefficients(ds, variant.comparison);
    let mut best = f64::NEG_INFINITY;
    for &b in bks.values() {
        let d: f64 = (0..ds.m()).filter(|&i| v[i] > b).map(|i| coef[i]).sum();
        let term = match variant.sided {
            Sided::Absolute => d.abs(),
            Sided::OneSided => d,
        };
        best = best.max(term);
    }
    best
}

/// Discretized demographic-parity distance over the given thresholds.
///
/// Absolute returns max_j |d_j|; OneSided returns max(0, max_j d_j) — the
/// clamp applies to the max, not per term.
pub fn dp_ell(v: &[f64], ds: &Dataset, bks: &Breakpoints, variant: ParityVariant) -> f64 {
    let raw = parity_term_strict(v, ds, bks, variant);
    match variant.sided {
        Sided::Absolute => raw,
        Sided::OneSided => raw.max(0.0),
    }
}

/// Exact demographic-parity distance: the supremum over all real thresholds,
/// attained between consecutive distinct prediction values. Candidates are a
/// point below the minimum and the midpoints of consecutive distinct values.
pub fn dp_exact(v: &[f64], ds: &Dataset, variant: ParityVariant) -> f64 {
    assert_eq!(v.len(), ds.m());
    let coef = group_coefficients(ds, variant.comparison);
    let mut order: Vec<usize> = (0..ds.m()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());

    // start below the minimum: every prediction exceeds the threshold
    let mut d: f64 = coef.iter().sum();
    let eval = |d: f64| match variant.sided {
        Sided::Absolute => d.abs(),
        Sided::OneSided => d,
    };
    let mut best = eval(d);
    let mut pos = 0;
    while pos < order.len() {
        // move every observation sharing this value below the threshold
        let val = v[order[pos]];
        while pos < order.len() && v[order[pos]] == val {
            d -= coef[order[pos]];
            pos += 1;
        }
        best = best.max(eval(d));
    }
    best.max(0.0)
}

/// Linear proxy for the single-threshold parity distance: the absolute gap of
/// group-mean predictions, |mean_{a=0} w^T x - mean_{a=1} w^T x|.
pub fn dp1_linear_proxy(w: &[f64], ds: &Dataset) -> f64 {
    let v = ds.predictions(w);
    let mut sum1 = 0.0;
    let mut sum0 = 0.0;
    for i in 0..ds.m() {
        if ds.is_protected(i) {
            sum1 += v[i];
        } else {
            sum0 += v[i];
        }
    }
    (sum0 / ds.m0() as f64 - sum1 / ds.m1() as f64).abs()
}

/// Surrogate pair (kappa, delta) for the convex single-threshold proxy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurrogatePair {
    /// kappa(v) = max(0, v + 1), delta(v) = min(1, v).
    Hinge,
    /// kappa(v) = max(0, v)/M, delta(v) = min(0, -v)/M — the pair under which
    /// the proxy coincides with the bounded relaxation of the big-M system.
    Scaled { big_m: f64 },
}

impl SurrogatePair {
    #[inline]
    fn kappa(self, v: f64) -> f64 {
        match self {
            SurrogatePair::Hinge => (v + 1.0).max(0.0),
            SurrogatePair::Scaled { big_m } => v.max(0.0) / big_m,
        }
    }

    #[inline]
    fn delta(self, v: f64) -> f64 {
        match self {
            SurrogatePair::Hinge => v.min(1.0),
            SurrogatePair::Scaled { big_m } => (-v).min(0.0) / big_m,
        }
    }
}

/// The two constraint left-hand sides whose maximum defines the convex proxy:
/// the kappa side bounds the protected-minus-reference rate gap, the delta
/// side the reverse gap.
pub fn dp1_convex_proxy_sides(w: &[f64], ds: &Dataset, pair: SurrogatePair) -> (f64, f64) {
    let v = ds.predictions(w);
    let inv_m1 = 1.0 / ds.m1() as f64;
    let inv_m0 = 1.0 / ds.m0() as f64;
    let mut kappa_side = -1.0;
    let mut delta_side = 1.0;
    for i in 0..ds.m() {
        if ds.is_protected(i) {
            kappa_side += inv_m1 * pair.kappa(v[i]);
            delta_side += inv_m1 * pair.delta(v[i]);
        } else {
            kappa_side += inv_m0 * pair.kappa(-v[i]);
            delta_side += inv_m0 * pair.delta(-v[i]);
        }
    }
    (kappa_side, delta_side)
}

/// Convex proxy for the single-threshold parity distance: the minimal t
/// feasible for both surrogate constraints, i.e. the max of the two sides.
pub fn dp1_convex_proxy(w: &[f64], ds: &Dataset, pair: SurrogatePair) -> f64 {
    let (k, d) = dp1_convex_proxy_sides(w, ds, pair);
    k.max(d)
}

/// Closed-form minimal t of the bounded big-M indicator system at threshold 0:
/// z_i ranges over [max(0, v_i/M), 1 + min(0, v_i/M)] and the one-sided rate
/// gap d(z) is minimized by pushing each group to its favorable bound, giving
/// (1/(m1 M)) sum_{a=1} max(0, v_i) + (1/(m0 M)) sum_{a=0} max(0, -v_i) - 1.
pub fn nat_bounds_min_t(w: &[f64], ds: &Dataset, big_m: f64) -> f64 {
    let v = ds.predictions(w);
    let inv_m1 = 1.0 / ds.m1() as f64;
    let inv_m0 = 1.0 / ds.m0() as f64;
    let mut t = 0.0;
    for i in 0..ds.m() {
        if ds.is_protected(i) {
            // lower bound of the z-box for the protected group
            t += inv_m1 * (v[i] / big_m).max(0.0);
        } else {
            // upper bound 1 + min(0, v/M) for the reference group
            t -= inv_m0 * (1.0 + (v[i] / big_m).min(0.0));
        }
    }
    t
}

/// Expands a single threshold into a symmetric equispaced grid of `count`
/// thresholds spanning +- `half_width` around it.
pub fn widen_thresholds(bks: &Breakpoints, count: usize, half_width: f64) -> Result<Breakpoints> {
    if count % 2 == 0 || count == 0 {
        return Err(Error::InvalidParameter(format!(
            "threshold count must be odd, got {count}"
        )));
    }
    if half_width <= 0.0 {
        return Err(Error::InvalidParameter("half_width must be positive".into()));
    }
    if bks.len() != 1 {
        return Err(Error::InvalidParameter(
            "widen_thresholds expects a single starting threshold".into(),
        ));
    }
    let center = bks.values()[0];
    if count == 1 {
        return Breakpoints::new(vec![center]);
    }
    let half = (count - 1) / 2;
    let step = half_width / half as f64;
    let values = (0..count)
        .map(|i| center + (i as f64 - half as f64) * step)
        .collect();
    Breakpoints::new(values)
}

/// Fairness term under the lower-semicontinuous tie convention: indicators are
/// forced strictly above/below each threshold, and entries within `tie_tol`
/// of a threshold are free. Up to 12 simultaneous ties are resolved by exact
/// enumeration; beyond that, the two uniform assignments (all ties below /
/// all above) are compared, matching the adjacent-interval sweep rule.
///
/// Returns objective semantics: max_j |d_j| for Absolute, unclamped max_j d_j
/// for OneSided.
pub(crate) fn parity_term_lsc(
    v: &[f64],
    ds: &Dataset,
    bks: &Breakpoints,
    variant: ParityVariant,
    tie_tol: f64,
) -> f64 {
    let ell = bks.len();
    let coef = group_coefficients(ds, variant.comparison);
    let mut d = vec![0.0f64; ell];
    let mut ties: Vec<(usize, usize)> = Vec::new(); // (obs, threshold)
    for i in 0..ds.m() {
        for (j, &b) in bks.values().iter().enumerate() {
            if (v[i] - b).abs() <= tie_tol {
                ties.push((i, j));
            } else if v[i] > b {
                d[j] += coef[i];
            }
        }
    }
    let term = |d: &[f64]| -> f64 {
        let mut best = f64::NEG_INFINITY;
        for &dj in d {
            let t = match variant.sided {
                Sided::Absolute => dj.abs(),
                Sided::OneSided => dj,
            };
            best = best.max(t);
        }
        best
    };
    if ties.is_empty() {
        return term(&d);
    }
    if ties.len() <= 12 {
        let mut best = f64::INFINITY;
        let mut scratch = d.clone();
        for mask in 0u32..(1u32 << ties.len()) {
            scratch.copy_from_slice(&d);
            for (bit, &(i, j)) in ties.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    scratch[j] += coef[i];
                }
            }
            best = best.min(term(&scratch));
        }
        best
    } else {
        let below = term(&d);
        let mut up = d.clone();
        for &(i, j) in &ties {
            up[j] += coef[i];
        }
        below.min(term(&up))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;

    const MARGINAL_ABS: ParityVariant = ParityVariant::new(Comparison::Marginal, Sided::Absolute);

    fn four_row(a: [bool; 4]) -> Dataset {
        Dataset::new(vec![0.0; 4], vec![0.0; 4], a.to_vec(), 1).unwrap()
    }

    #[test]
    fn rates_by_enumeration() {
        let ds = four_row([true, true, false, false]);
        let (p, r) = group_rates(&[0.9, 0.2, 0.8, 0.1], &ds, 0.5, Comparison::Marginal);
        assert_eq!((p, r), (0.5, 0.5));
        let (p, r) = group_rates(&[0.9, 0.8, 0.2, 0.1], &ds, 0.5, Comparison::Marginal);
        assert_eq!((p, r), (1.0, 0.5));
        let (p, r) = group_rates(&[0.9, 0.8, 0.2, 0.1], &ds, 2.0, Comparison::Marginal);
        assert_eq!((p, r), (0.0, 0.0));
        // threshold hit exactly: strict convention, 0.5 does not exceed 0.5
        let (p, _) = group_rates(&[0.5, 0.2, 0.8, 0.1], &ds, 0.5, Comparison::Marginal);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn dp_ell_examples() {
        let ds = four_row([true, true, false, false]);
        let bks = Breakpoints::single(0.5).unwrap();
        assert_eq!(dp_ell(&[0.9, 0.8, 0.2, 0.1], &ds, &bks, MARGINAL_ABS), 0.5);
        assert_eq!(dp_ell(&[0.3; 4], &ds, &bks, MARGINAL_ABS), 0.0);

        let bks = Breakpoints::new(vec![0.15, 0.5, 0.85]).unwrap();
        let got = dp_ell(&[0.9, 0.2, 0.8, 0.1], &ds, &bks, MARGINAL_ABS);
        assert!((got - 0.25).abs() < 1e-15);
    }

    #[test]
    fn dp_exact_examples_and_dominance() {
        let ds = four_row([true, true, false, false]);
        assert_eq!(dp_exact(&[0.9, 0.8, 0.2, 0.1], &ds, MARGINAL_ABS), 0.5);
        assert_eq!(dp_exact(&[0.4; 4], &ds, MARGINAL_ABS), 0.0);
    }

    #[test]
    fn dp1_linear_examples() {
        let ds = Dataset::new(vec![2.0, -1.0], vec![1.0, -1.0], vec![true, false], 1).unwrap();
        assert_eq!(dp1_linear_proxy(&[1.0], &ds), 3.0);
        assert_eq!(dp1_linear_proxy(&[0.0], &ds), 0.0);
    }

    #[test]
    fn dp1_convex_hinge_examples() {
        let ds = Dataset::new(vec![2.0, -1.0], vec![1.0, -1.0], vec![true, false], 1).unwrap();
        // kappa(2) + kappa(1) - 1 = 4, delta(2) + delta(1) + 1 = 3
        assert_eq!(dp1_convex_proxy(&[1.0], &ds, SurrogatePair::Hinge), 4.0);
        assert_eq!(dp1_convex_proxy(&[0.0], &ds, SurrogatePair::Hinge), 1.0);
    }

    #[test]
    fn scaled_kappa_side_matches_box_minimum() {
        let ds = Dataset::new(
            vec![2.0, -1.0, 0.5, -0.3],
            vec![1.0, -1.0, 1.0, -1.0],
            vec![true, false, false, true],
            1,
        )
        .unwrap();
        for &m in &[5.0, 17.0] {
            for &wk in &[0.7, -1.3, 0.0] {
                let (kappa_side, _) =
                    dp1_convex_proxy_sides(&[wk], &ds, SurrogatePair::Scaled { big_m: m });
                let boxed = nat_bounds_min_t(&[wk], &ds, m);
                assert!(
                    (kappa_side - boxed).abs() <= 1e-12,
                    "w={wk} M={m}: {kappa_side} vs {boxed}"
                );
            }
        }
    }

    #[test]
    fn widen_examples() {
        let single = Breakpoints::single(0.0).unwrap();
        let g = widen_thresholds(&single, 5, 2.0).unwrap();
        assert_eq!(g.values(), &[-2.0, -1.0, 0.0, 1.0, 2.0]);
        let g = widen_thresholds(&single, 3, 3.0).unwrap();
        assert_eq!(g.values(), &[-3.0, 0.0, 3.0]);
        let g = widen_thresholds(&single, 1, 1.0).unwrap();
        assert_eq!(g.values(), &[0.0]);
        assert!(widen_thresholds(&single, 4, 1.0).is_err());
    }

    #[test]
    fn grid_matches_fraction_arithmetic() {
        let g = Breakpoints::grid(0.0, 1.0, 41).unwrap();
        assert_eq!(g.len(), 41);
        for (i, &b) in g.values().iter().enumerate() {
            assert_eq!(b, i as f64 * (1.0 / 40.0));
        }
    }

    #[test]
    fn lsc_tie_freedom() {
        // both predictions at the threshold: ties can equalize the groups
        let ds = four_row([true, false, true, false]);
        let bks = Breakpoints::single(0.0).unwrap();
        let v = [0.0, 0.0, -1.0, -1.0];
        assert_eq!(parity_term_lsc(&v, &ds, &bks, MARGINAL_ABS, 1e-9), 0.0);
        // strict convention sees no one above: also 0 here
        assert_eq!(parity_term_strict(&v, &ds, &bks, MARGINAL_ABS), 0.0);
        // off ties the two evaluators agree
        let v = [1.0, -1.0, 0.5, -0.5];
        assert_eq!(
            parity_term_lsc(&v, &ds, &bks, MARGINAL_ABS, 1e-9),
            parity_term_strict(&v, &ds, &bks, MARGINAL_ABS)
        );
    }
}
