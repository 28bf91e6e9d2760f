//! Coordinate descent for regularized fair regression: candidate-set
//! construction at breakpoint crossings, incremental fairness evaluation
//! along a sorted candidate sweep, and the full multi-restart algorithm.
//!
//! Updating coordinate k moves every prediction along the fixed direction
//! x_{.k}; the fairness term can only change where some prediction crosses
//! some threshold, so the coordinate minimizer lies in the crossing set or at
//! the unpenalized 1D minimizer. The sweep maintains the rate-difference
//! vector d incrementally: crossing candidate (i, j) upward adds
//! sign(x_ik) * c_i to d_j, where c_i is the observation's group coefficient.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use crate::baseline::unfair_weights;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fairness::{group_coefficients, parity_term_lsc, Breakpoints, ParityVariant, Sided};
use crate::formulations::{build_strong, derive_big_m, FairnessMode, FairnessSpec};
use crate::losses::{univariate_loss_min, LossKind, Regularizer};
use crate::relax::{solve_relaxation, SolveOptions};

/// Tolerance for recognizing a reconstructed prediction as sitting exactly on
/// a threshold. Candidate values are computed by division and re-multiplied,
/// so exact float equality cannot be relied on.
pub(crate) const TIE_TOL: f64 = 1e-9;

/// Initialization strategy for a coordinate-descent run.
#[derive(Debug, Clone)]
pub enum CdInit {
    /// Solve the strong convex relaxation first and start from its weights.
    FromRelax,
    /// Start from the unregularized loss minimizer (accurate, unfair).
    FromUnfair,
    /// Start from the trivially fair solution w = 0.
    FromZero,
    /// Start from the given weights.
    Given(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct CdOptions {
    pub init: CdInit,
    pub restarts: usize,
    pub seed: u64,
    pub max_sweeps: usize,
    /// A full sweep improving the objective by less than this terminates.
    pub tolerance: f64,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            init: CdInit::FromUnfair,
            restarts: 5,
            seed: 0,
            max_sweeps: 200,
            tolerance: 1e-10,
        }
    }
}

/// Outcome of the best restart.
#[derive(Debug, Clone)]
pub struct CdResult {
    pub w: Vec<f64>,
    pub objective: f64,
    /// Objective after every accepted coordinate update; non-increasing.
    pub trace: Vec<f64>,
    pub sweeps: usize,
    pub best_restart: usize,
    pub hit_sweep_limit: bool,
}

/// One breakpoint crossing along coordinate k, with provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub value: f64,
    pub obs: usize,
    pub threshold: usize,
}

/// All finite crossing points (b_j - sum_{p != k} w_p x_ip) / x_ik, ascending,
/// duplicates retained with their (observation, threshold) provenance. Rows
/// with x_ik = 0 contribute nothing.
pub fn candidate_set(ds: &Dataset, bks: &Breakpoints, w: &[f64], k: usize) -> Vec<Candidate> {
    let xk = ds.column(k);
    let v = ds.predictions(w);
    let mut out = Vec::new();
    for i in 0..ds.m() {
        if xk[i] == 0.0 {
            continue;
        }
        let rest = v[i] - w[k] * xk[i];
        for (j, &b) in bks.values().iter().enumerate() {
            let value = (b - rest) / xk[i];
            if value.is_finite() {
                out.push(Candidate {
                    value,
                    obs: i,
                    threshold: j,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        a.value
            .partial_cmp(&b.value)
            .unwrap()
            .then(a.obs.cmp(&b.obs))
            .then(a.threshold.cmp(&b.threshold))
    });
    out
}

/// Lower-semicontinuous fairness value of a prediction vector: indicators are
/// determined by strict position against each threshold, and tied entries are
/// chosen to minimize the max. Absolute gives max_j |d_j|; OneSided the
/// unclamped max_j d_j.
pub fn eval_r(v: &[f64], ds: &Dataset, bks: &Breakpoints, variant: ParityVariant) -> f64 {
    parity_term_lsc(v, ds, bks, variant, TIE_TOL)
}

/// Incremental fairness values along the sorted candidate sweep: one
/// (candidate value, R) pair per distinct candidate value. R at a candidate
/// enumerates the crossing entries' tie freedom against the interval d-vector
/// (up to 12 simultaneous crossings; beyond that the two adjacent intervals
/// are compared).
pub fn candidate_r_values(
    ds: &Dataset,
    bks: &Breakpoints,
    w: &[f64],
    k: usize,
    variant: ParityVariant,
) -> Vec<(f64, f64)> {
    let cands = candidate_set(ds, bks, w, k);
    let xk = ds.column(k);
    let v = ds.predictions(w);
    let rest: Vec<f64> = (0..ds.m()).map(|i| v[i] - w[k] * xk[i]).collect();
    sweep_r(ds, bks, &rest, &xk, variant, &cands).0
}

fn term_of(d: &[f64], sided: Sided) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for &dj in d {
        let t = match sided {
            Sided::Absolute => dj.abs(),
            Sided::OneSided => dj,
        };
        best = best.max(t);
    }
    best
}

/// Shared sweep: returns (per-distinct-candidate R values, interval table).
/// The interval table holds the R value on each open interval between
/// consecutive distinct candidates (length = #distinct + 1).
fn sweep_r(
    ds: &Dataset,
    bks: &Breakpoints,
    rest: &[f64],
    xk: &[f64],
    variant: ParityVariant,
    cands: &[Candidate],
) -> (Vec<(f64, f64)>, Vec<f64>) {
    let coef = group_coefficients(ds, variant.comparison);
    let ell = bks.len();
    // base indicators for w_k below every candidate
    let mut d = vec![0.0f64; ell];
    for i in 0..ds.m() {
        for (j, &b) in bks.values().iter().enumerate() {
            let z = if xk[i] > 0.0 {
                false
            } else if xk[i] < 0.0 {
                true
            } else {
                rest[i] > b
            };
            if z {
                d[j] += coef[i];
            }
        }
    }
    let mut at_candidates = Vec::new();
    let mut intervals = vec![term_of(&d, variant.sided)];
    let mut idx = 0usize;
    let mut scratch = vec![0.0f64; ell];
    while idx < cands.len() {
        let value = cands[idx].value;
        let mut end = idx;
        while end < cands.len() && cands[end].value == value {
            end += 1;
        }
        let group = &cands[idx..end];
        let deltas: Vec<(usize, f64)> = group
            .iter()
            .map(|c| (c.threshold, xk[c.obs].signum() * coef[c.obs]))
            .collect();
        let r_here = if group.len() <= 12 {
            let mut best = f64::INFINITY;
            for mask in 0u32..(1u32 << group.len()) {
                scratch.copy_from_slice(&d);
                for (bit, &(j, delta)) in deltas.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        scratch[j] += delta;
                    }
                }
                best = best.min(term_of(&scratch, variant.sided));
            }
            best
        } else {
            scratch.copy_from_slice(&d);
            for &(j, delta) in &deltas {
                scratch[j] += delta;
            }
            term_of(&d, variant.sided).min(term_of(&scratch, variant.sided))
        };
        at_candidates.push((value, r_here));
        for &(j, delta) in &deltas {
            d[j] += delta;
        }
        intervals.push(term_of(&d, variant.sided));
        idx = end;
    }
    (at_candidates, intervals)
}

/// Minimizes F(w_k) = sum_i L(w_k x_ik + rest_i, y_i) + lambda R(w_k) over
/// the candidate crossings and the unpenalized minimizer, returning the new
/// coordinate value and its objective. Ties prefer the smallest |w_k|, then
/// the smaller value.
pub fn cd_update(
    ds: &Dataset,
    bks: &Breakpoints,
    loss: LossKind,
    w: &[f64],
    k: usize,
    lambda: f64,
    variant: ParityVariant,
) -> (f64, f64) {
    let xk = ds.column(k);
    let v = ds.predictions(w);
    let rest: Vec<f64> = (0..ds.m()).map(|i| v[i] - w[k] * xk[i]).collect();
    let w_nofair = univariate_loss_min(loss, ds, k, w);

    // squared-error loss along the coordinate is a quadratic; precompute it
    let quad = if loss == LossKind::SquaredError {
        let mut a = 0.0;
        let mut b = 0.0;
        let mut c = 0.0;
        for i in 0..ds.m() {
            let r = rest[i] - ds.target(i);
            a += xk[i] * xk[i];
            b += xk[i] * r;
            c += r * r;
        }
        Some((a, b, c))
    } else {
        None
    };
    let loss_at = |wk: f64| -> f64 {
        match quad {
            Some((a, b, c)) => a * wk * wk + 2.0 * b * wk + c,
            None => (0..ds.m())
                .map(|i| loss.value(wk * xk[i] + rest[i], ds.target(i)))
                .sum(),
        }
    };

    let cands = candidate_set(ds, bks, w, k);
    let mut best_w = w_nofair;
    let mut best_f = {
        let vv: Vec<f64> = (0..ds.m()).map(|i| w_nofair * xk[i] + rest[i]).collect();
        loss_at(w_nofair) + lambda * parity_term_lsc(&vv, ds, bks, variant, TIE_TOL)
    };
    if !cands.is_empty() && lambda > 0.0 {
        let (r_values, _) = sweep_r(ds, bks, &rest, &xk, variant, &cands);
        for &(value, r) in &r_values {
            let f = loss_at(value) + lambda * r;
            let tie = (f - best_f).abs() <= 1e-12 * (1.0 + best_f.abs());
            let better = f < best_f - 1e-12 * (1.0 + best_f.abs());
            let tie_preferred = tie
                && (value.abs() < best_w.abs()
                    || (value.abs() == best_w.abs() && value < best_w));
            if better || tie_preferred {
                best_f = f;
                best_w = value;
            }
        }
    }
    (best_w, best_f)
}

/// Full coordinate descent: seeded random-permutation sweeps of `cd_update`
/// until a sweep improves the objective by less than the tolerance, best of
/// `restarts` runs (lowest objective, then lowest restart index).
pub fn cd_run(
    ds: &Dataset,
    bks: &Breakpoints,
    loss: LossKind,
    lambda: f64,
    variant: ParityVariant,
    opts: &CdOptions,
) -> Result<CdResult> {
    if lambda < 0.0 {
        return Err(Error::InvalidParameter("lambda must be nonnegative".into()));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidParameter("need at least one restart".into()));
    }
    let n = ds.n();
    let w0: Vec<f64> = match &opts.init {
        CdInit::FromUnfair => unfair_weights(ds, loss),
        CdInit::FromZero => vec![0.0; n],
        CdInit::Given(w) => {
            if w.len() != n {
                return Err(Error::InvalidParameter("given start has wrong length".into()));
            }
            w.clone()
        }
        CdInit::FromRelax => {
            let spec = FairnessSpec {
                mode: FairnessMode::Regularized { lambda },
                variant,
                breakpoints: bks.clone(),
            };
            let big_m = if loss == LossKind::Logistic {
                Some(derive_big_m(ds, bks, loss))
            } else {
                None
            };
            let data = std::sync::Arc::new(ds.clone());
            let model = build_strong(data, loss, Regularizer::None, spec, big_m)?;
            solve_relaxation(&model, &SolveOptions::default())?.w
        }
    };

    let objective = |w: &[f64]| -> f64 {
        let v = ds.predictions(w);
        let l: f64 = (0..ds.m()).map(|i| loss.value(v[i], ds.target(i))).sum();
        l + lambda * parity_term_lsc(&v, ds, bks, variant, TIE_TOL)
    };

    let mut best: Option<CdResult> = None;
    for restart in 0..opts.restarts {
        let mut rng = ChaCha12Rng::seed_from_u64(opts.seed.wrapping_add(restart as u64));
        let mut w = w0.clone();
        let mut f = objective(&w);
        let mut trace = vec![f];
        let mut sweeps = 0usize;
        let mut hit_limit = true;
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let before = f;
            for &k in &order {
                let (wk, fk) = cd_update(ds, bks, loss, &w, k, lambda, variant);
                if fk <= f {
                    w[k] = wk;
                    f = fk;
                    trace.push(f);
                }
            }
            if before - f < opts.tolerance {
                hit_limit = false;
                break;
            }
        }
        let candidate = CdResult {
            w,
            objective: f,
            trace,
            sweeps,
            best_restart: restart,
            hit_sweep_limit: hit_limit,
        };
        best = Some(match best {
            None => candidate,
            Some(cur) => {
                if candidate.objective < cur.objective {
                    candidate
                } else {
                    cur
                }
            }
        });
    }
    Ok(best.unwrap())
}
