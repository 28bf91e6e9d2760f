//! In-memory model IR for the natural big-M formulation and the strong
//! extended formulation, plus chain valid inequalities, big-M derivation,
//! indicator-set membership checks, and LP-format export.
//!
//! Both formulations share one [`ModelIR`]; the `kind` tag switches which
//! constraint blocks are emitted so the relaxation solver and branch-and-bound
//! consume a single structure.
//!
//! Index conventions (0-based throughout): threshold j refers to the j-th
//! breakpoint; z_{i,j} indicates prediction i exceeding threshold j; interval
//! variable p_{i,j} for j = 1..ell-1 carries the portion of prediction i
//! inside [b_{j-1}, b_j], while p_{i,0} and p_{i,ell} are the unbounded end
//! portions below the first and above the last threshold.

use std::sync::Arc;

use crate::baseline::unfair_weights;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fairness::{group_coefficients, Breakpoints, ParityVariant, Sided};
use crate::losses::{LossKind, Regularizer};

/// Fairness enters either as a penalty weight or as a hard budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FairnessMode {
    Regularized { lambda: f64 },
    Constrained { epsilon: f64 },
}

/// Full fairness specification carried by a model.
#[derive(Debug, Clone)]
pub struct FairnessSpec {
    pub mode: FairnessMode,
    pub variant: ParityVariant,
    pub breakpoints: Breakpoints,
}

impl FairnessSpec {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            FairnessMode::Regularized { lambda } if lambda < 0.0 => Err(Error::InvalidParameter(
                format!("lambda must be nonnegative, got {lambda}"),
            )),
            FairnessMode::Constrained { epsilon } if !(0.0..=1.0).contains(&epsilon) => Err(
                Error::InvalidParameter(format!("epsilon must be in [0,1], got {epsilon}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Which formulation the IR encodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    /// Natural formulation: indicators linked to predictions by big-M rows.
    Nat { big_m: f64 },
    /// Strong extended formulation with interval portions and perspective
    /// epigraph rows; logistic needs an explicit big-M on the end portions.
    Strong { logistic_big_m: Option<f64> },
}

/// Linking equality w^T x_i = b_0 - p_{i,0} + sum_j p_{i,j}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkRow {
    pub obs: usize,
}

/// Interior coupling delta_j z_{i,j} <= p_{i,j} <= delta_j z_{i,j-1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundCoupling {
    pub obs: usize,
    /// p index in 1..ell-1.
    pub j: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSide {
    /// w^T x_i - b_j <= M z_{i,j}
    Upper,
    /// w^T x_i - b_j >= -M (1 - z_{i,j})
    Lower,
}

/// One big-M indicator row of the natural formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BigMRow {
    pub obs: usize,
    pub j: usize,
    pub side: RowSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortionEnd {
    /// p_{i,0} <= M (1 - z_{i,0})
    Low,
    /// p_{i,ell} <= M z_{i,ell-1}
    High,
}

/// Big-M complementarity row on an end portion (logistic strong models only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortionBigMRow {
    pub obs: usize,
    pub end: PortionEnd,
}

/// Perspective epigraph row of observation i.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpigraphRow {
    pub obs: usize,
}

/// Fairness row sign * d_j(z) <= t (regularized) or <= epsilon (constrained).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairnessRow {
    pub j: usize,
    pub sign: f64,
}

/// Chain inequality z_{i,j+1} <= z_{i,j}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainRow {
    pub obs: usize,
    pub j: usize,
}

/// Unified in-memory model for both formulations.
#[derive(Debug, Clone)]
pub struct ModelIR {
    pub loss: LossKind,
    pub reg: Regularizer,
    pub data: Arc<Dataset>,
    pub spec: FairnessSpec,
    pub kind: ModelKind,
    pub link_rows: Vec<LinkRow>,
    pub couplings: Vec<BoundCoupling>,
    pub big_m_rows: Vec<BigMRow>,
    pub portion_big_m_rows: Vec<PortionBigMRow>,
    pub epigraph_rows: Vec<EpigraphRow>,
    pub fairness_rows: Vec<FairnessRow>,
    pub chain_rows: Vec<ChainRow>,
    /// z variables are integral in the exact problem; relaxations ignore this.
    pub integral_z: bool,
}

impl ModelIR {
    pub fn m(&self) -> usize {
        self.data.m()
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn ell(&self) -> usize {
        self.spec.breakpoints.len()
    }

    /// Width of the interval carried by interior portion j (1 <= j <= ell-1).
    pub fn delta(&self, j: usize) -> f64 {
        let b = self.spec.breakpoints.values();
        b[j] - b[j - 1]
    }

    /// Whether the model has the epigraph variable t (regularized mode).
    pub fn has_t(&self) -> bool {
        matches!(self.spec.mode, FairnessMode::Regularized { .. })
    }

    /// Per-observation coefficients of the rate differences d_j(z).
    pub fn fairness_coefficients(&self) -> Vec<f64> {
        group_coefficients(&self.data, self.spec.variant.comparison)
    }

    /// Rate differences d_j(z) for an m*ell indicator block (row-major).
    pub fn d_values(&self, z: &[f64]) -> Vec<f64> {
        let ell = self.ell();
        let coef = self.fairness_coefficients();
        let mut d = vec![0.0; ell];
        for i in 0..self.m() {
            for (j, dj) in d.iter_mut().enumerate() {
                *dj += coef[i] * z[i * ell + j];
            }
        }
        d
    }
}

fn fairness_rows_for(variant: ParityVariant, ell: usize) -> Vec<FairnessRow> {
    let mut rows = Vec::new();
    for j in 0..ell {
        rows.push(FairnessRow { j, sign: 1.0 });
        if variant.sided == Sided::Absolute {
            rows.push(FairnessRow { j, sign: -1.0 });
        }
    }
    rows
}

/// Builds the natural big-M formulation: m*ell binary indicators, big-M rows
/// linking each prediction to each threshold, and fairness rows per variant.
pub fn build_nat(
    ds: Arc<Dataset>,
    loss: LossKind,
    reg: Regularizer,
    spec: FairnessSpec,
    big_m: f64,
) -> Result<ModelIR> {
    spec.validate()?;
    reg.validate()?;
    if !(big_m > 0.0) {
        return Err(Error::NonPositiveBigM(big_m));
    }
    let m = ds.m();
    let ell = spec.breakpoints.len();
    let mut big_m_rows = Vec::with_capacity(2 * m * ell);
    for i in 0..m {
        for j in 0..ell {
            big_m_rows.push(BigMRow {
                obs: i,
                j,
                side: RowSide::Upper,
            });
            big_m_rows.push(BigMRow {
                obs: i,
                j,
                side: RowSide::Lower,
            });
        }
    }
    let fairness_rows = fairness_rows_for(spec.variant, ell);
    Ok(ModelIR {
        loss,
        reg,
        data: ds,
        spec,
        kind: ModelKind::Nat { big_m },
        link_rows: Vec::new(),
        couplings: Vec::new(),
        big_m_rows,
        portion_big_m_rows: Vec::new(),
        epigraph_rows: Vec::new(),
        fairness_rows,
        chain_rows: Vec::new(),
        integral_z: true,
    })
}

/// Builds the strong extended formulation: m*(ell+1) interval portions, one
/// linking equality and one perspective epigraph row per observation, interior
/// bound couplings, and fairness rows. Squared error needs no extra big-M
/// rows (its superlinear growth forces the end-portion complementarities);
/// logistic requires them on p_{i,0} and p_{i,ell}.
pub fn build_strong(
    ds: Arc<Dataset>,
    loss: LossKind,
    reg: Regularizer,
    spec: FairnessSpec,
    logistic_big_m: Option<f64>,
) -> Result<ModelIR> {
    spec.validate()?;
    reg.validate()?;
    if loss == LossKind::Logistic {
        match logistic_big_m {
            Some(m) if m > 0.0 => {}
            Some(m) => return Err(Error::NonPositiveBigM(m)),
            None => return Err(Error::MissingLogisticBigM),
        }
    }
    let m = ds.m();
    let ell = spec.breakpoints.len();
    let link_rows = (0..m).map(|obs| LinkRow { obs }).collect();
    let epigraph_rows = (0..m).map(|obs| EpigraphRow { obs }).collect();
    let mut couplings = Vec::with_capacity(m * ell.saturating_sub(1));
    for obs in 0..m {
        for j in 1..ell {
            couplings.push(BoundCoupling { obs, j });
        }
    }
    let portion_big_m_rows = if loss == LossKind::Logistic {
        let mut rows = Vec::with_capacity(2 * m);
        for obs in 0..m {
            rows.push(PortionBigMRow {
                obs,
                end: PortionEnd::Low,
            });
            rows.push(PortionBigMRow {
                obs,
                end: PortionEnd::High,
            });
        }
        rows
    } else {
        Vec::new()
    };
    let fairness_rows = fairness_rows_for(spec.variant, ell);
    Ok(ModelIR {
        loss,
        reg,
        data: ds,
        spec,
        kind: ModelKind::Strong { logistic_big_m },
        link_rows,
        couplings,
        big_m_rows: Vec::new(),
        portion_big_m_rows,
        epigraph_rows,
        fairness_rows,
        chain_rows: Vec::new(),
        integral_z: true,
    })
}

/// Appends the chain inequalities z_{i,j+1} <= z_{i,j} for every observation;
/// a no-op when ell = 1. These rows describe the entire convex hull of the
/// indicator-linking set.
pub fn add_chain_cuts(mut model: ModelIR) -> ModelIR {
    let ell = model.ell();
    model.chain_rows.clear();
    for obs in 0..model.m() {
        for j in 0..ell.saturating_sub(1) {
            model.chain_rows.push(ChainRow { obs, j });
        }
    }
    model
}

/// Membership test for the closed indicator-linking set: both product
/// constraints (v - b_j) z_j >= 0 and (v - b_j)(1 - z_j) <= 0 must hold for
/// every threshold. At v = b_j both indicator values are allowed.
pub fn check_barv_membership(v: f64, z: &[bool], bks: &Breakpoints) -> bool {
    assert_eq!(z.len(), bks.len());
    bks.values().iter().zip(z).all(|(&b, &zj)| {
        let diff = v - b;
        let zf = if zj { 1.0 } else { 0.0 };
        diff * zf >= 0.0 && diff * (1.0 - zf) <= 0.0
    })
}

/// Heuristic big-M: twice the largest distance between an unregularized-model
/// prediction and any threshold, plus one. This is a recorded heuristic, not
/// a validity proof; reports flag incumbents whose predictions come within 1%
/// of the boundary.
pub fn derive_big_m(ds: &Dataset, bks: &Breakpoints, loss: LossKind) -> f64 {
    let w = unfair_weights(ds, loss);
    let v = ds.predictions(&w);
    let mut worst: f64 = 0.0;
    for &vi in &v {
        for &b in bks.values() {
            worst = worst.max((vi - b).abs());
        }
    }
    2.0 * worst + 1.0
}

/// Applies a strictly increasing link function to every threshold, preserving
/// order. Fails if the image is not strictly increasing.
pub fn transform_breakpoints(
    bks: &Breakpoints,
    link: impl Fn(f64) -> f64,
) -> Result<Breakpoints> {
    let mapped: Vec<f64> = bks.values().iter().map(|&b| link(b)).collect();
    if mapped.iter().any(|v| !v.is_finite()) || mapped.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::NonMonotoneTransform);
    }
    Breakpoints::new(mapped)
}

/// The natural interval split of a prediction: p_0 = max(0, b_0 - v),
/// interior p_j = max(0, min(v, b_j) - b_{j-1}), p_ell = max(0, v - b_{ell-1}).
/// Together with the indicator pattern of v this reproduces v through the
/// linking equality and makes the epigraph row hold with equality at L(v).
pub fn natural_split(v: f64, bks: &Breakpoints) -> Vec<f64> {
    let b = bks.values();
    let ell = b.len();
    let mut p = vec![0.0; ell + 1];
    p[0] = (b[0] - v).max(0.0);
    for j in 1..ell {
        p[j] = (v.min(b[j]) - b[j - 1]).max(0.0);
    }
    p[ell] = (v - b[ell - 1]).max(0.0);
    p
}

/// Value of the perspective epigraph left-hand side for one observation of a
/// strong model, with optional smoothing added to each perspective weight.
/// With zero smoothing this is the closed perspective sum (possibly infinite).
pub fn strong_epigraph_value(
    loss: LossKind,
    y: f64,
    bks: &Breakpoints,
    z: &[f64],
    p: &[f64],
    smoothing: f64,
) -> f64 {
    let b = bks.values();
    let ell = b.len();
    debug_assert_eq!(z.len(), ell);
    debug_assert_eq!(p.len(), ell + 1);
    let mut total = 0.0;
    total += perspective_piece(loss, y, b[0], -1.0, p[0], 1.0 - z[0], smoothing);
    for j in 1..ell {
        let delta = b[j] - b[j - 1];
        let alpha = z[j - 1] - z[j];
        let u = p[j] - z[j] * delta;
        total += perspective_piece(loss, y, b[j - 1], 1.0, u, alpha, smoothing);
    }
    total += perspective_piece(loss, y, b[ell - 1], 1.0, p[ell], z[ell - 1], smoothing);
    total
}

/// One perspective term alpha * L(base + dir * u / alpha, y), closed at
/// alpha = 0 when smoothing is zero.
fn perspective_piece(
    loss: LossKind,
    y: f64,
    base: f64,
    dir: f64,
    u: f64,
    alpha: f64,
    smoothing: f64,
) -> f64 {
    let a = alpha + smoothing;
    if a > 0.0 {
        return a * loss.value(base + dir * u / a, y);
    }
    if u == 0.0 {
        return 0.0;
    }
    match loss {
        LossKind::SquaredError => f64::INFINITY,
        // recession of c -> L(base + dir*c, y) in direction u
        LossKind::Logistic => (-y * dir * u).max(0.0),
    }
}

pub mod lp;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic_regression;
    use crate::fairness::Comparison;
    use crate::losses::eval_loss;

    fn tiny_dataset() -> Arc<Dataset> {
        Arc::new(
            Dataset::new(
                vec![1.0, -1.0],
                vec![1.0, 0.0],
                vec![true, false],
                1,
            )
            .unwrap(),
        )
    }

    fn spec(variant: ParityVariant, bks: Breakpoints) -> FairnessSpec {
        FairnessSpec {
            mode: FairnessMode::Regularized { lambda: 1.0 },
            variant,
            breakpoints: bks,
        }
    }

    #[test]
    fn nat_counts() {
        let ds = tiny_dataset();
        let bks = Breakpoints::single(0.0).unwrap();
        let one_sided = ParityVariant::new(Comparison::Marginal, Sided::OneSided);
        let m = build_nat(
            ds.clone(),
            LossKind::SquaredError,
            Regularizer::None,
            spec(one_sided, bks.clone()),
            5.0,
        )
        .unwrap();
        assert_eq!(m.m() * m.ell(), 2);
        assert_eq!(m.big_m_rows.len(), 4);
        assert_eq!(m.fairness_rows.len(), 1);

        let absolute = ParityVariant::new(Comparison::Marginal, Sided::Absolute);
        let m = build_nat(
            ds,
            LossKind::SquaredError,
            Regularizer::None,
            spec(absolute, bks),
            5.0,
        )
        .unwrap();
        assert_eq!(m.fairness_rows.len(), 2);
        assert!(build_nat(
            m.data.clone(),
            LossKind::SquaredError,
            Regularizer::None,
            m.spec.clone(),
            -1.0
        )
        .is_err());
    }

    #[test]
    fn strong_counts() {
        let (ds, _) = gen_synthetic_regression(3, 4, 0).unwrap();
        let ds = Arc::new(ds);
        let bks = Breakpoints::new(vec![0.0, 0.5]).unwrap();
        let variant = ParityVariant::new(Comparison::Marginal, Sided::Absolute);
        let m = build_strong(
            ds.clone(),
            LossKind::SquaredError,
            Regularizer::None,
            spec(variant, bks.clone()),
            None,
        )
        .unwrap();
        // per observation: ell+1 portions, ell indicators, 1 link, ell-1 couplings
        assert_eq!(m.link_rows.len(), 4);
        assert_eq!(m.epigraph_rows.len(), 4);
        assert_eq!(m.couplings.len(), 4);
        assert!(m.portion_big_m_rows.is_empty());

        let err = build_strong(
            ds,
            LossKind::Logistic,
            Regularizer::None,
            spec(variant, bks),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingLogisticBigM));
    }

    #[test]
    fn chain_cut_counts_and_violation() {
        let ds = tiny_dataset();
        let bks = Breakpoints::new(vec![0.0, 0.3, 0.6]).unwrap();
        let variant = ParityVariant::new(Comparison::Marginal, Sided::Absolute);
        let m = build_nat(
            ds,
            LossKind::SquaredError,
            Regularizer::None,
            spec(variant, bks),
            5.0,
        )
        .unwrap();
        let m = add_chain_cuts(m);
        assert_eq!(m.chain_rows.len(), 4); // m=2 observations, ell-1=2 rows each
        // z = (1, 0, 1) violates z_{j+1} <= z_j at j = 1
        let z = [1.0, 0.0, 1.0];
        assert!(m
            .chain_rows
            .iter()
            .filter(|r| r.obs == 0)
            .any(|r| z[r.j + 1] > z[r.j]));
    }

    #[test]
    fn barv_membership_cases() {
        let bks = Breakpoints::single(0.5).unwrap();
        assert!(check_barv_membership(0.7, &[true], &bks));
        assert!(!check_barv_membership(0.7, &[false], &bks));
        assert!(check_barv_membership(0.5, &[false], &bks));
        assert!(check_barv_membership(0.5, &[true], &bks));
        assert!(!check_barv_membership(0.3, &[true], &bks));
        assert!(check_barv_membership(0.3, &[false], &bks));
    }

    #[test]
    fn big_m_heuristic() {
        // zero targets give a zero unregularized model, so M = 2*max|0-b|+1
        let ds = Dataset::new(vec![1.0, -1.0], vec![0.0, 0.0], vec![true, false], 1).unwrap();
        let bks = Breakpoints::single(0.0).unwrap();
        let m = derive_big_m(&ds, &bks, LossKind::SquaredError);
        assert!((m - 1.0).abs() < 1e-9);

        // farther breakpoints never decrease M
        let (ds, _) = gen_synthetic_regression(4, 12, 5).unwrap();
        let near = Breakpoints::new(vec![0.0, 0.5]).unwrap();
        let far = Breakpoints::new(vec![0.0, 0.5, 10.0]).unwrap();
        assert!(
            derive_big_m(&ds, &far, LossKind::SquaredError)
                >= derive_big_m(&ds, &near, LossKind::SquaredError)
        );
    }

    #[test]
    fn breakpoint_transform() {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let bks = Breakpoints::single(0.5).unwrap();
        let mapped = transform_breakpoints(&bks, logit).unwrap();
        assert!(mapped.values()[0].abs() < 1e-15);

        let bks = Breakpoints::new(vec![0.25, 0.5, 0.75]).unwrap();
        let mapped = transform_breakpoints(&bks, logit).unwrap();
        assert!(mapped.values().windows(2).all(|w| w[0] < w[1]));

        let id = transform_breakpoints(&bks, |b| b).unwrap();
        assert_eq!(id.values(), bks.values());

        assert!(transform_breakpoints(&bks, |b| -b).is_err());
    }

    #[test]
    fn natural_split_reproduces_loss() {
        // constructive mapping: for binary z compatible with v, the natural
        // split satisfies the linking equality and the epigraph at L(v)
        let bks = Breakpoints::new(vec![-0.5, 0.2, 1.0]).unwrap();
        for &v in &[-2.0, -0.5, 0.0, 0.2, 0.7, 1.0, 3.5] {
            let p = natural_split(v, &bks);
            let b = bks.values();
            let recon = b[0] - p[0] + p[1..].iter().sum::<f64>();
            assert!((recon - v).abs() < 1e-12, "telescope failed at v={v}");
            let z: Vec<f64> = b.iter().map(|&bj| if v > bj { 1.0 } else { 0.0 }).collect();
            for j in 1..b.len() {
                let delta = b[j] - b[j - 1];
                assert!(p[j] >= delta * z[j] - 1e-12);
                assert!(p[j] <= delta * z[j - 1] + 1e-12);
            }
            for kind in [LossKind::SquaredError, LossKind::Logistic] {
                let y = if kind == LossKind::Logistic { 1.0 } else { 0.3 };
                let phi = strong_epigraph_value(kind, y, &bks, &z, &p, 0.0);
                let want = eval_loss(kind, v, y).unwrap();
                assert!(
                    (phi - want).abs() <= 1e-12 * (1.0 + want.abs()),
                    "{kind:?} v={v}: {phi} vs {want}"
                );
            }
        }
    }
}
