//! Self-contained first-order solver for the continuous relaxations of both
//! model kinds, in regularized and constrained mode.
//!
//! Strong models are handled by the hull solver ([`hull`]): the portion
//! variables are minimized out exactly per observation (water-filling over
//! the interval pieces), so linking equalities and bound couplings hold by
//! construction and only the fairness epigraph rows need an augmented
//! Lagrangian. Single-factor strong models additionally collapse to one hull
//! set over the combined crossing points, where the relaxation is exact.
//!
//! Natural big-M models keep their prediction/indicator coupling rows in the
//! augmented Lagrangian, with projected-gradient inner iterations
//! (Barzilai-Borwein steps, backtracking on the merit). The fairness max
//! enters through an explicit epigraph variable t in both paths, so no
//! smoothing bias is introduced on the max itself. Everything is
//! deterministic: fixed iteration order and a deterministic initialization
//! at the unregularized model with half-integral indicators.

mod hull;

use std::time::Instant;

use crate::baseline::unfair_weights;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fairness::{
    dp1_convex_proxy, dp1_linear_proxy, parity_term_lsc, parity_term_strict, SurrogatePair,
};
use crate::formulations::{FairnessMode, ModelIR, ModelKind, RowSide};
use crate::losses::{reg_value, LossKind};

/// Solver options: iteration/time budget, target tolerance, perspective
/// smoothing, and the augmented-Lagrangian penalty schedule.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub smoothing: f64,
    pub rho0: f64,
    pub rho_growth: f64,
    pub time_limit: Option<f64>,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            tolerance: 1e-8,
            smoothing: 1e-8,
            rho0: 10.0,
            rho_growth: 10.0,
            time_limit: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    IterLimit,
    TimeLimit,
}

/// Relaxation output. `objective` is recomputed from scratch at the returned
/// point (loss/epigraph + lambda * t + regularizer), never taken from solver
/// state; `t` is the exact fairness max at the returned indicators.
#[derive(Debug, Clone)]
pub struct RelaxSolution {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub s: f64,
    pub t: f64,
    pub objective: f64,
    pub primal_residual: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

/// Internal solve result carrying the raw iterate (for warm starts) and the
/// conservative lower bound.
pub(crate) struct SolveOutput {
    pub solution: RelaxSolution,
    pub x: Vec<f64>,
    pub bound: f64,
}

pub(crate) fn solve_with_fixes(
    model: &ModelIR,
    opts: &SolveOptions,
    fixes: Option<&[Option<bool>]>,
    warm: Option<&[f64]>,
) -> Result<SolveOutput> {
    model.spec.validate()?;
    match model.kind {
        ModelKind::Strong { .. } => {
            let regularized = matches!(model.spec.mode, FairnessMode::Regularized { .. });
            if fixes.is_none() && warm.is_none() && model.n() == 1 && regularized {
                hull::solve_single_factor(model, opts)
            } else {
                hull::solve_generic(model, opts, fixes, warm)
            }
        }
        ModelKind::Nat { .. } => solve_nat(model, opts, fixes, warm),
    }
}

/// Solves the continuous relaxation of the model (integrality ignored).
pub fn solve_relaxation(model: &ModelIR, opts: &SolveOptions) -> Result<RelaxSolution> {
    Ok(solve_with_fixes(model, opts, None, None)?.solution)
}

/// Valid lower bound on the model: the relaxation objective minus the
/// residual-based slack and smoothing correction.
pub fn relaxation_bound(model: &ModelIR, opts: &SolveOptions) -> Result<f64> {
    Ok(solve_with_fixes(model, opts, None, None)?.bound)
}

// ---------------------------------------------------------------------------
// natural big-M path
// ---------------------------------------------------------------------------

struct NatLayout {
    n: usize,
    m: usize,
    ell: usize,
    has_t: bool,
    z_off: usize,
    dim: usize,
}

impl NatLayout {
    fn of(model: &ModelIR) -> Self {
        let n = model.n();
        let m = model.m();
        let ell = model.ell();
        let has_t = model.has_t();
        let z_off = n + usize::from(has_t);
        Self {
            n,
            m,
            ell,
            has_t,
            z_off,
            dim: z_off + m * ell,
        }
    }

    fn t(&self) -> usize {
        self.n
    }

    fn z(&self, i: usize, j: usize) -> usize {
        self.z_off + i * self.ell + j
    }
}

struct NatSolver<'a> {
    model: &'a ModelIR,
    layout: NatLayout,
    coef: Vec<f64>,
    big_m: f64,
    multipliers: Vec<f64>,
    rho: f64,
    fixes: Option<&'a [Option<bool>]>,
    predictions: Vec<f64>,
}

impl<'a> NatSolver<'a> {
    fn new(model: &'a ModelIR, opts: &SolveOptions, fixes: Option<&'a [Option<bool>]>) -> Self {
        let layout = NatLayout::of(model);
        let big_m = match model.kind {
            ModelKind::Nat { big_m } => big_m,
            ModelKind::Strong { .. } => unreachable!(),
        };
        let rows = model.big_m_rows.len() + model.fairness_rows.len() + model.chain_rows.len();
        NatSolver {
            model,
            coef: model.fairness_coefficients(),
            big_m,
            multipliers: vec![0.0; rows],
            rho: opts.rho0,
            fixes,
            predictions: vec![0.0; layout.m],
            layout,
        }
    }

    fn compute_predictions(&mut self, x: &[f64]) {
        for i in 0..self.layout.m {
            let row = self.model.data.row(i);
            self.predictions[i] = row.iter().zip(&x[..self.layout.n]).map(|(a, b)| a * b).sum();
        }
    }

    /// Constraint values in multiplier order: big-M rows, fairness rows,
    /// chain rows. Calls `f` with (index, violation-oriented value).
    fn for_each_row(&self, x: &[f64], mut f: impl FnMut(usize, f64, RowGrad)) {
        let l = &self.layout;
        let model = self.model;
        let bks = model.spec.breakpoints.values();
        let mut idx = 0usize;
        for row in &model.big_m_rows {
            let (i, j) = (row.obs, row.j);
            let diff = self.predictions[i] - bks[j];
            let g = match row.side {
                RowSide::Upper => diff - self.big_m * x[l.z(i, j)],
                RowSide::Lower => -diff - self.big_m * (1.0 - x[l.z(i, j)]),
            };
            f(idx, g, RowGrad::BigM(*row));
            idx += 1;
        }
        let epsilon = match model.spec.mode {
            FairnessMode::Constrained { epsilon } => Some(epsilon),
            FairnessMode::Regularized { .. } => None,
        };
        for row in &model.fairness_rows {
            let mut d = 0.0;
            for i in 0..l.m {
                d += self.coef[i] * x[l.z(i, row.j)];
            }
            let g = match epsilon {
                Some(e) => row.sign * d - e,
                None => row.sign * d - x[l.t()],
            };
            f(idx, g, RowGrad::Fairness(*row));
            idx += 1;
        }
        for row in &model.chain_rows {
            let g = x[l.z(row.obs, row.j + 1)] - x[l.z(row.obs, row.j)];
            f(idx, g, RowGrad::Chain(*row));
            idx += 1;
        }
    }

    fn al_value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.compute_predictions(x);
        let l = &self.layout;
        let model = self.model;
        let mut value = 0.0;
        for i in 0..l.m {
            let v = self.predictions[i];
            let y = model.data.target(i);
            value += model.loss.value(v, y);
            let g = model.loss.grad(v, y);
            let row = model.data.row(i);
            for k in 0..l.n {
                grad[k] += g * row[k];
            }
        }
        if l.has_t {
            if let FairnessMode::Regularized { lambda } = model.spec.mode {
                value += lambda * x[l.t()];
                grad[l.t()] += lambda;
            }
        }
        let rho = self.rho;
        let mut penalty = 0.0;
        let mut updates: Vec<(RowGrad, f64)> = Vec::new();
        {
            let mults = &self.multipliers;
            self.for_each_row(x, |idx, g, kind| {
                let phi = (mults[idx] + rho * g).max(0.0);
                penalty += (phi * phi - mults[idx] * mults[idx]) / (2.0 * rho);
                if phi > 0.0 {
                    updates.push((kind, phi));
                }
            });
        }
        for (kind, phi) in updates {
            self.apply_row_gradient(x, grad, kind, phi);
        }
        value + penalty
    }

    fn apply_row_gradient(&self, x: &[f64], grad: &mut [f64], kind: RowGrad, phi: f64) {
        let _ = x;
        let l = &self.layout;
        match kind {
            RowGrad::BigM(row) => {
                let (i, j) = (row.obs, row.j);
                let (sv, sz) = match row.side {
                    RowSide::Upper => (1.0, -self.big_m),
                    RowSide::Lower => (-1.0, self.big_m),
                };
                let xr = self.model.data.row(i);
                for k in 0..l.n {
                    grad[k] += phi * sv * xr[k];
                }
                grad[l.z(i, j)] += phi * sz;
            }
            RowGrad::Fairness(row) => {
                for i in 0..l.m {
                    if self.coef[i] != 0.0 {
                        grad[l.z(i, row.j)] += phi * row.sign * self.coef[i];
                    }
                }
                if l.has_t {
                    grad[l.t()] -= phi;
                }
            }
            RowGrad::Chain(row) => {
                grad[l.z(row.obs, row.j + 1)] += phi;
                grad[l.z(row.obs, row.j)] -= phi;
            }
        }
    }

    fn residuals(&mut self, x: &[f64]) -> (f64, f64) {
        self.compute_predictions(x);
        let mut sq = 0.0;
        let mut inf: f64 = 0.0;
        self.for_each_row(x, |_, g, _| {
            let v = g.max(0.0);
            sq += v * v;
            inf = inf.max(v);
        });
        (sq, inf)
    }

    fn update_multipliers(&mut self, x: &[f64]) {
        self.compute_predictions(x);
        let rho = self.rho;
        let mut next = self.multipliers.clone();
        self.for_each_row(x, |idx, g, _| {
            next[idx] = (next[idx] + rho * g).max(0.0);
        });
        self.multipliers = next;
    }

    fn project(&self, x: &mut [f64]) {
        let l = &self.layout;
        let chain = !self.model.chain_rows.is_empty();
        let mut row = vec![0.0; l.ell];
        for i in 0..l.m {
            for j in 0..l.ell {
                row[j] = x[l.z(i, j)];
            }
            let fixes = self.fixes.map(|f| &f[i * l.ell..(i + 1) * l.ell]);
            if chain {
                project_monotone_box(&mut row, fixes);
            } else {
                for v in row.iter_mut() {
                    *v = v.clamp(0.0, 1.0);
                }
            }
            if let Some(f) = fixes {
                for j in 0..l.ell {
                    if let Some(b) = f[j] {
                        row[j] = if b { 1.0 } else { 0.0 };
                    }
                }
            }
            for j in 0..l.ell {
                x[l.z(i, j)] = row[j];
            }
        }
    }

    fn exact_t(&self, x: &[f64]) -> f64 {
        let l = &self.layout;
        let mut best = f64::NEG_INFINITY;
        for row in &self.model.fairness_rows {
            let mut d = 0.0;
            for i in 0..l.m {
                d += self.coef[i] * x[l.z(i, row.j)];
            }
            best = best.max(row.sign * d);
        }
        best
    }

    fn exact_objective(&mut self, x: &[f64]) -> (f64, f64, f64) {
        self.compute_predictions(x);
        let l = &self.layout;
        let model = self.model;
        let s_sum: f64 = (0..l.m)
            .map(|i| model.loss.value(self.predictions[i], model.data.target(i)))
            .sum();
        let t = self.exact_t(x);
        let mut obj = s_sum + reg_value(model.reg, &x[..l.n]);
        if let FairnessMode::Regularized { lambda } = model.spec.mode {
            obj += lambda * t;
        }
        (obj, s_sum, t)
    }
}

#[derive(Clone, Copy)]
enum RowGrad {
    BigM(crate::formulations::BigMRow),
    Fairness(crate::formulations::FairnessRow),
    Chain(crate::formulations::ChainRow),
}

fn solve_nat(
    model: &ModelIR,
    opts: &SolveOptions,
    fixes: Option<&[Option<bool>]>,
    warm: Option<&[f64]>,
) -> Result<SolveOutput> {
    let start = Instant::now();
    let mut solver = NatSolver::new(model, opts, fixes);
    let layout = NatLayout::of(model);
    let mut x = match warm {
        Some(w) if w.len() == layout.dim => w.to_vec(),
        _ => {
            let mut x = vec![0.0; layout.dim];
            let w0 = unfair_weights(&model.data, model.loss);
            x[..layout.n].copy_from_slice(&w0);
            for i in 0..layout.m {
                for j in 0..layout.ell {
                    x[layout.z(i, j)] = 0.5;
                }
            }
            x
        }
    };
    solver.project(&mut x);
    if layout.has_t {
        x[layout.t()] = solver.exact_t(&x);
    }

    let mut grad = vec![0.0; layout.dim];
    let mut new_grad = vec![0.0; layout.dim];
    let mut step = 1.0;
    let mut total_iters = 0usize;
    let mut status = SolveStatus::Optimal;
    let (_, mut res_inf_prev) = solver.residuals(&x);
    let mut prev_round_obj = f64::INFINITY;
    let mut converged = false;

    'outer: for _round in 0..60 {
        let inner_cap = 4000.min(opts.max_iterations.saturating_sub(total_iters));
        if inner_cap == 0 {
            status = SolveStatus::IterLimit;
            break;
        }
        // multipliers and rho changed between rounds: refresh value and slope
        let mut merit =
            solver.al_value_grad(&x, &mut grad) + reg_value(model.reg, &x[..layout.n]);
        let mut inner = 0usize;
        while inner < inner_cap {
            inner += 1;
            total_iters += 1;
            if let Some(limit) = opts.time_limit {
                if start.elapsed().as_secs_f64() > limit {
                    status = SolveStatus::TimeLimit;
                    break 'outer;
                }
            }
            let mut accepted = false;
            for _bt in 0..60 {
                let mut trial: Vec<f64> = x
                    .iter()
                    .zip(&grad)
                    .map(|(xi, gi)| xi - step * gi)
                    .collect();
                for k in 0..layout.n {
                    trial[k] = model.reg.prox(x[k] - step * grad[k], step);
                }
                solver.project(&mut trial);
                let trial_merit = solver.al_value_grad(&trial, &mut new_grad)
                    + reg_value(model.reg, &trial[..layout.n]);
                let move_sq: f64 = trial
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if trial_merit <= merit - 1e-4 * move_sq / step.max(1e-300) {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for k in 0..layout.dim {
                        let dx = trial[k] - x[k];
                        let dg = new_grad[k] - grad[k];
                        num += dx * dx;
                        den += dx * dg;
                    }
                    x.copy_from_slice(&trial);
                    grad.copy_from_slice(&new_grad);
                    let improved = merit - trial_merit;
                    merit = trial_merit;
                    step = if den > 0.0 {
                        (num / den).clamp(1e-12, 1e10)
                    } else {
                        (step * 2.0).min(1e10)
                    };
                    accepted = true;
                    if move_sq.sqrt() <= 1e-13 * (1.0 + norm_inf(&x)) && improved.abs() < 1e-15 {
                        inner = inner_cap;
                    }
                    break;
                }
                step *= 0.25;
                if step < 1e-18 {
                    break;
                }
            }
            if !accepted {
                break;
            }
        }

        let (_, res_inf) = solver.residuals(&x);
        let (obj, _, _) = solver.exact_objective(&x);
        let obj_change = (obj - prev_round_obj).abs() / (1.0 + obj.abs());
        if res_inf <= opts.tolerance && obj_change <= opts.tolerance.max(1e-12) {
            converged = true;
            break;
        }
        prev_round_obj = obj;
        solver.update_multipliers(&x);
        if res_inf > 0.5 * res_inf_prev {
            solver.rho = (solver.rho * opts.rho_growth).min(1e12);
            step = step.min(1.0 / solver.rho);
        }
        res_inf_prev = res_inf;
        if total_iters >= opts.max_iterations {
            status = SolveStatus::IterLimit;
            break;
        }
    }
    if !converged && status == SolveStatus::Optimal {
        let (_, res_inf) = solver.residuals(&x);
        if res_inf > opts.tolerance {
            status = SolveStatus::IterLimit;
        }
    }

    let (res_sq, res_inf) = solver.residuals(&x);
    let (objective, s_sum, t_exact) = solver.exact_objective(&x);
    let mult_slack: f64 = solver.multipliers.iter().sum::<f64>() * res_inf;
    let bound = objective - (solver.rho * res_sq + mult_slack);

    let solution = RelaxSolution {
        w: x[..layout.n].to_vec(),
        z: x[layout.z_off..].to_vec(),
        p: Vec::new(),
        s: s_sum,
        t: t_exact,
        objective,
        primal_residual: res_inf,
        status,
        iterations: total_iters,
    };
    Ok(SolveOutput {
        solution,
        x,
        bound,
    })
}

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Euclidean projection onto {1 >= z_0 >= z_1 >= ... >= z_{ell-1} >= 0} with
/// optional fixed entries acting as interval separators: pool-adjacent
/// violators on each free segment, then clamping into the bounds implied by
/// the neighboring fixed values.
pub(crate) fn project_monotone_box(z: &mut [f64], fixes: Option<&[Option<bool>]>) {
    let ell = z.len();
    let fixed_at = |j: usize| -> Option<f64> {
        fixes
            .and_then(|f| f[j])
            .map(|b| if b { 1.0 } else { 0.0 })
    };
    let mut start = 0usize;
    while start < ell {
        if let Some(v) = fixed_at(start) {
            z[start] = v;
            start += 1;
            continue;
        }
        let mut end = start;
        while end < ell && fixed_at(end).is_none() {
            end += 1;
        }
        let hi = if start == 0 {
            1.0
        } else {
            fixed_at(start - 1).map_or(1.0, |v| v)
        };
        let lo = if end == ell {
            0.0
        } else {
            fixed_at(end).map_or(0.0, |v| v)
        };
        pava_non_increasing(&mut z[start..end]);
        for v in &mut z[start..end] {
            *v = v.clamp(lo.min(hi), hi.max(lo)).clamp(0.0, 1.0);
        }
        start = end;
    }
}

/// In-place isotonic regression for a non-increasing target.
pub(crate) fn pava_non_increasing(z: &mut [f64]) {
    let n = z.len();
    if n <= 1 {
        return;
    }
    // pool-adjacent-violators on the negated sequence (non-decreasing)
    let mut level: Vec<f64> = Vec::with_capacity(n);
    let mut weight: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = -z[i];
        let mut wgt = 1.0;
        while let Some(&last) = level.last() {
            if last > v {
                let lw = weight.pop().unwrap();
                let lv = level.pop().unwrap();
                v = (v * wgt + lv * lw) / (wgt + lw);
                wgt += lw;
            } else {
                break;
            }
        }
        level.push(v);
        weight.push(wgt);
    }
    let mut idx = 0usize;
    for (lv, wgt) in level.iter().zip(&weight) {
        let count = *wgt as usize;
        for _ in 0..count {
            z[idx] = -lv;
            idx += 1;
        }
    }
}

/// One row of a fixed-coordinate objective sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub w_k: f64,
    pub exact_obj: f64,
    pub strong_relax_obj: f64,
    pub linear_proxy_obj: f64,
    pub convex_proxy_obj: f64,
}

/// Sweeps one coordinate over a grid with the others held fixed, tabulating
/// the exact regularized objective, the strong-formulation inner value at
/// that w (per-observation interval enumeration with tie freedom only at
/// exact threshold hits), and the two single-threshold proxies.
pub fn sweep_objective_1d(
    ds: &Dataset,
    loss: LossKind,
    spec: &crate::formulations::FairnessSpec,
    coordinate: usize,
    fixed_w: &[f64],
    grid: &[f64],
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let lambda = match spec.mode {
        FairnessMode::Regularized { lambda } => lambda,
        FairnessMode::Constrained { .. } => {
            return Err(Error::InvalidParameter(
                "objective sweeps require regularized mode".into(),
            ));
        }
    };
    if coordinate >= ds.n() {
        return Err(Error::InvalidParameter("coordinate out of range".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    let mut w = fixed_w.to_vec();
    for &g in grid {
        w[coordinate] = g;
        let v = ds.predictions(&w);
        let loss_sum: f64 = (0..ds.m()).map(|i| loss.value(v[i], ds.target(i))).sum();
        let exact = loss_sum + lambda * parity_term_strict(&v, ds, &spec.breakpoints, spec.variant);
        let inner =
            loss_sum + lambda * parity_term_lsc(&v, ds, &spec.breakpoints, spec.variant, 0.0);
        let linear = loss_sum + lambda * dp1_linear_proxy(&w, ds);
        let convex = loss_sum + lambda * dp1_convex_proxy(&w, ds, SurrogatePair::Hinge);
        rows.push(SweepRow {
            w_k: g,
            exact_obj: exact,
            strong_relax_obj: inner,
            linear_proxy_obj: linear,
            convex_proxy_obj: convex,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic_regression;
    use crate::fairness::{Breakpoints, Comparison, ParityVariant, Sided};
    use crate::formulations::{build_nat, build_strong, derive_big_m, FairnessSpec};
    use crate::losses::Regularizer;
    use std::sync::Arc;

    fn single_factor_model(lambda: f64) -> ModelIR {
        let ds = Arc::new(
            Dataset::new(vec![1.0, -1.0], vec![1.0, 0.0], vec![true, false], 1).unwrap(),
        );
        let spec = FairnessSpec {
            mode: FairnessMode::Regularized { lambda },
            variant: ParityVariant::new(Comparison::Marginal, Sided::Absolute),
            breakpoints: Breakpoints::single(0.0).unwrap(),
        };
        build_strong(ds, LossKind::SquaredError, Regularizer::None, spec, None).unwrap()
    }

    #[test]
    fn pava_projects_onto_chain() {
        let mut z = vec![0.2, 0.9, 0.5];
        project_monotone_box(&mut z, None);
        assert!(z.windows(2).all(|w| w[0] >= w[1] - 1e-15));
        // projection of an already-feasible point is itself
        let mut z2 = vec![0.9, 0.5, 0.1];
        project_monotone_box(&mut z2, None);
        assert_eq!(z2, vec![0.9, 0.5, 0.1]);
        // fixed entries are honored and separate segments
        let mut z3 = vec![0.3, 0.8, 0.7];
        project_monotone_box(&mut z3, Some(&[None, Some(false), None]));
        assert_eq!(z3[1], 0.0);
        assert!(z3[2] <= z3[1] + 1e-15);
    }

    #[test]
    fn single_factor_exact_value() {
        // the exact optimum of this instance is 1.0 at w = 0; the
        // single-factor hull reduction must reach it
        let model = single_factor_model(2.0);
        let opts = SolveOptions {
            smoothing: 1e-10,
            ..SolveOptions::default()
        };
        let sol = solve_relaxation(&model, &opts).unwrap();
        assert!(
            (sol.objective - 1.0).abs() < 2e-4,
            "objective {} residual {} status {:?}",
            sol.objective,
            sol.primal_residual,
            sol.status
        );
        assert!(sol.primal_residual < 1e-6);
        assert!(sol.w[0].abs() < 0.05, "w = {}", sol.w[0]);
    }

    #[test]
    fn per_observation_relaxation_is_weaker_for_single_factor() {
        // with indicators fixed to nothing, the generic per-observation path
        // on this instance has optimum 3/4 < 1; the dispatch must avoid it
        // for plain solves but branch-and-bound still uses it for bounding
        let model = single_factor_model(2.0);
        let fixes = vec![None; 2];
        let out = solve_with_fixes(&model, &SolveOptions::default(), Some(&fixes), None).unwrap();
        assert!(
            (out.solution.objective - 0.75).abs() < 1e-3,
            "generic path objective {}",
            out.solution.objective
        );
        assert!(out.bound <= 1.0 + 1e-9);
    }

    #[test]
    fn lambda_zero_reduces_to_plain_regression() {
        let (ds, _) = gen_synthetic_regression(4, 12, 9).unwrap();
        let ds = Arc::new(ds);
        let spec = FairnessSpec {
            mode: FairnessMode::Regularized { lambda: 0.0 },
            variant: ParityVariant::new(Comparison::Marginal, Sided::Absolute),
            breakpoints: Breakpoints::grid(0.0, 1.0, 3).unwrap(),
        };
        let model =
            build_strong(ds.clone(), LossKind::SquaredError, Regularizer::None, spec, None)
                .unwrap();
        let sol = solve_relaxation(&model, &SolveOptions::default()).unwrap();
        let w_star = unfair_weights(&ds, LossKind::SquaredError);
        let unfair: f64 = {
            let v = ds.predictions(&w_star);
            (0..ds.m())
                .map(|i| LossKind::SquaredError.value(v[i], ds.target(i)))
                .sum()
        };
        assert!(
            (sol.objective - unfair).abs() <= 1e-5 * (1.0 + unfair),
            "{} vs {}",
            sol.objective,
            unfair
        );
    }

    #[test]
    fn nat_relaxation_weakness_small() {
        let (ds, _) = gen_synthetic_regression(4, 10, 2).unwrap();
        let ds = Arc::new(ds);
        let bks = Breakpoints::grid(0.0, 1.0, 3).unwrap();
        let big_m = 10.0 * derive_big_m(&ds, &bks, LossKind::SquaredError);
        let spec = FairnessSpec {
            mode: FairnessMode::Regularized { lambda: 0.3 },
            variant: ParityVariant::new(Comparison::Marginal, Sided::Absolute),
            breakpoints: bks,
        };
        let model = build_nat(
            ds.clone(),
            LossKind::SquaredError,
            Regularizer::None,
            spec,
            big_m,
        )
        .unwrap();
        let sol = solve_relaxation(&model, &SolveOptions::default()).unwrap();
        let unfair = crate::baseline::unfair_loss(&ds, LossKind::SquaredError);
        assert!(
            (sol.objective - unfair).abs() < 1e-5 * (1.0 + unfair),
            "{} vs {}",
            sol.objective,
            unfair
        );
    }

    #[test]
    fn strong_relaxation_dominates_nat() {
        let (ds, _) = gen_synthetic_regression(5, 14, 21).unwrap();
        let ds = Arc::new(ds);
        let bks = Breakpoints::grid(0.0, 1.0, 3).unwrap();
        let spec = FairnessSpec {
            mode: FairnessMode::Regularized { lambda: 0.2 },
            variant: ParityVariant::new(Comparison::Marginal, Sided::Absolute),
            breakpoints: bks.clone(),
        };
        let big_m = 10.0 * derive_big_m(&ds, &bks, LossKind::SquaredError);
        let nat = build_nat(
            ds.clone(),
            LossKind::SquaredError,
            Regularizer::None,
            spec.clone(),
            big_m,
        )
        .unwrap();
        let strong =
            build_strong(ds, LossKind::SquaredError, Regularizer::None, spec, None).unwrap();
        let opts = SolveOptions::default();
        let nat_bound = relaxation_bound(&nat, &opts).unwrap();
        let strong_bound = relaxation_bound(&strong, &opts).unwrap();
        assert!(
            strong_bound >= nat_bound - 1e-8,
            "strong {strong_bound} vs nat {nat_bound}"
        );
    }

    #[test]
    fn sweep_rows_are_consistent() {
        let (ds, _) = gen_synthetic_regression(2, 8, 4).unwrap();
        let spec = FairnessSpec {
            mode: FairnessMode::Regularized { lambda: 0.0 },
            variant: ParityVariant::new(Comparison::Marginal, Sided::OneSided),
            breakpoints: Breakpoints::single(0.5).unwrap(),
        };
        let grid: Vec<f64> = (0..21).map(|i| -1.0 + i as f64 * 0.1).collect();
        let rows = sweep_objective_1d(
            &ds,
            LossKind::SquaredError,
            &spec,
            0,
            &vec![0.0; ds.n()],
            &grid,
        )
        .unwrap();
        // lambda = 0: every non-proxy column coincides with the plain loss
        for row in &rows {
            assert!((row.exact_obj - row.strong_relax_obj).abs() < 1e-12);
            assert!((row.exact_obj - row.linear_proxy_obj).abs() < 1e-12);
            assert!((row.exact_obj - row.convex_proxy_obj).abs() < 1e-12);
        }
    }
}
