//! First-order solver for strong (hull-based) models.
//!
//! For fixed weights and indicators, the portion variables of the strong
//! formulation solve a small separable problem per observation: spread the
//! prediction over the interval pieces so that the loss slope is equalized
//! (water-filling over the piece intervals, weighted by the perspective
//! weights). This module performs that inner minimization exactly, which
//! eliminates the linking equalities and bound couplings from the search
//! space entirely; the outer problem over (w, t, z) is smooth, its only
//! remaining constraints are the fairness epigraph rows (handled by an
//! augmented Lagrangian) and the box/chain structure of z (handled by
//! projection).
//!
//! The same machinery covers two model layouts:
//! - the generic per-observation strong formulation (one hull block per
//!   observation over the shared breakpoints), and
//! - the single-factor reduction (one hull block over the combined crossing
//!   points b_j / x_i with the summed loss), which is exact for n = 1.

use crate::error::Result;
use crate::formulations::{FairnessMode, ModelIR, ModelKind};
use crate::losses::{reg_value, LossKind, Regularizer};
use crate::relax::{RelaxSolution, SolveOptions, SolveOutput, SolveStatus};

const BIG_ARG: f64 = 1e18;

/// Loss attached to one hull block: a single observation's loss or the sum
/// over observations of a single-factor problem.
pub(super) enum BlockLoss {
    Single { kind: LossKind, y: f64 },
    Summed { kind: LossKind, xs: Vec<f64>, ys: Vec<f64> },
}

impl BlockLoss {
    fn value(&self, s: f64) -> f64 {
        match self {
            BlockLoss::Single { kind, y } => kind.value(s, *y),
            BlockLoss::Summed { kind, xs, ys } => xs
                .iter()
                .zip(ys)
                .map(|(&x, &y)| kind.value(x * s, y))
                .sum(),
        }
    }

    fn grad(&self, s: f64) -> f64 {
        match self {
            BlockLoss::Single { kind, y } => kind.grad(s, *y),
            BlockLoss::Summed { kind, xs, ys } => xs
                .iter()
                .zip(ys)
                .map(|(&x, &y)| x * kind.grad(x * s, y))
                .sum(),
        }
    }

    /// Solves loss'(s) = theta for s, clamped to +-BIG_ARG. The slope is
    /// strictly increasing, so the solution is unique where it exists;
    /// slopes outside the attainable range clamp to the matching infinity.
    fn slope_inverse(&self, theta: f64) -> f64 {
        match self {
            BlockLoss::Single {
                kind: LossKind::SquaredError,
                y,
            } => (y + 0.5 * theta).clamp(-BIG_ARG, BIG_ARG),
            BlockLoss::Single {
                kind: LossKind::Logistic,
                y,
            } => {
                // loss'(s) = -y sigma(-y s); solve sigma(-y s) = -theta y
                let q = -theta * y;
                if q <= 0.0 {
                    return if *y > 0.0 { BIG_ARG } else { -BIG_ARG };
                }
                if q >= 1.0 {
                    return if *y > 0.0 { -BIG_ARG } else { BIG_ARG };
                }
                let minus_ys = (q / (1.0 - q)).ln();
                (-minus_ys / y).clamp(-BIG_ARG, BIG_ARG)
            }
            BlockLoss::Summed { .. } => {
                // monotone root-find on the summed slope
                let mut lo = -1.0f64;
                let mut hi = 1.0f64;
                let mut expansions = 0;
                while self.grad(lo) > theta && expansions < 80 {
                    lo *= 2.0;
                    expansions += 1;
                }
                if self.grad(lo) > theta {
                    return -BIG_ARG;
                }
                let mut expansions = 0;
                while self.grad(hi) < theta && expansions < 80 {
                    hi *= 2.0;
                    expansions += 1;
                }
                if self.grad(hi) < theta {
                    return BIG_ARG;
                }
                for _ in 0..90 {
                    let mid = 0.5 * (lo + hi);
                    if self.grad(mid) < theta {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}

/// One hull block: thresholds (non-decreasing; coincident pairs create
/// zero-width singleton pieces), the linear map from w to the block's scalar
/// argument, an optional big-M cap on the end portions (logistic models),
/// and a constant cost per piece (zero for the generic formulation; the
/// folded fairness value of the piece for the single-factor reduction).
pub(super) struct Block {
    pub thresholds: Vec<f64>,
    pub x_row: Vec<f64>,
    pub loss: BlockLoss,
    pub cap_m: Option<f64>,
    pub piece_offsets: Vec<f64>,
}

/// Linear fairness row sign * (constant + sum coef * zspace[var]) <= t | eps.
pub(super) struct FairRow {
    pub sign: f64,
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

pub(super) struct HullProblem {
    pub n: usize,
    pub blocks: Vec<Block>,
    /// start of each block's indicators inside the z-space vector
    pub z_offsets: Vec<usize>,
    /// total z-space length (block indicators plus free tie variables)
    pub z_len: usize,
    pub rows: Vec<FairRow>,
    pub mode: FairnessMode,
    pub reg: Regularizer,
    pub fixes: Option<Vec<Option<bool>>>,
    /// whether the epigraph variable t exists (false when the fairness value
    /// is folded into the piece offsets)
    pub use_t: bool,
}

impl HullProblem {
    fn has_t(&self) -> bool {
        self.use_t
    }

    fn dim(&self) -> usize {
        self.n + usize::from(self.has_t()) + self.z_len
    }

    fn z_off(&self) -> usize {
        self.n + usize::from(self.has_t())
    }
}

/// Result of one exact inner minimization: value, telescope multiplier, and
/// the optimal piece positions.
struct InnerSolve {
    value: f64,
    theta: f64,
    phi: Vec<f64>,
}

/// Piece weights a_r = alpha_r + eps for a block's indicator slice.
fn piece_weights(z: &[f64], eps: f64, out: &mut Vec<f64>) {
    let k = z.len();
    out.clear();
    out.push(1.0 - z[0] + eps);
    for r in 1..k {
        out.push(z[r - 1] - z[r] + eps);
    }
    out.push(z[k - 1] + eps);
}

/// Water-filling inner solve: positions phi_r = clamp(slope_inverse(theta))
/// with theta chosen so the portion telescope reproduces the target v.
fn inner_solve(
    block: &Block,
    z: &[f64],
    a: &[f64],
    lo: &[f64],
    hi: &[f64],
    v: f64,
    theta_warm: f64,
) -> InnerSolve {
    let b = &block.thresholds;
    let k = b.len();
    // telescope value b_0 - p_0 + sum_j p_j as a function of theta
    let telescope = |phi: &[f64]| -> f64 {
        let mut t = b[0];
        t -= a[0] * (b[0] - phi[0]); // p_0
        for r in 1..k {
            let delta = b[r] - b[r - 1];
            t += a[r] * (phi[r] - b[r - 1]) + delta * z[r];
        }
        t += a[k] * (phi[k] - b[k - 1]);
        t
    };
    let positions = |theta: f64, phi: &mut Vec<f64>| {
        let s = block.loss.slope_inverse(theta);
        phi.clear();
        for r in 0..=k {
            phi.push(s.clamp(lo[r], hi[r]));
        }
    };
    let mut phi = Vec::with_capacity(k + 1);
    // bracket theta around the warm start
    let mut t_lo = theta_warm - 1.0;
    let mut t_hi = theta_warm + 1.0;
    positions(t_lo, &mut phi);
    let mut expansions = 0;
    while telescope(&phi) > v && expansions < 130 {
        t_lo = theta_warm + (t_lo - theta_warm) * 2.0 - 1.0;
        positions(t_lo, &mut phi);
        expansions += 1;
    }
    positions(t_hi, &mut phi);
    let mut expansions = 0;
    while telescope(&phi) < v && expansions < 130 {
        t_hi = theta_warm + (t_hi - theta_warm) * 2.0 + 1.0;
        positions(t_hi, &mut phi);
        expansions += 1;
    }
    for _ in 0..100 {
        let mid = 0.5 * (t_lo + t_hi);
        positions(mid, &mut phi);
        if telescope(&phi) < v {
            t_lo = mid;
        } else {
            t_hi = mid;
        }
        if t_hi - t_lo <= 1e-14 * (1.0 + t_lo.abs().max(t_hi.abs())) {
            break;
        }
    }
    let theta = 0.5 * (t_lo + t_hi);
    positions(theta, &mut phi);
    let value = (0..=k)
        .map(|r| a[r] * (block.loss.value(phi[r]) + block.piece_offsets[r]))
        .sum();
    InnerSolve { value, theta, phi }
}

/// Objective value of the smooth part (hull epigraphs + lambda t) with
/// gradient accumulation; returns the per-block inner solves for reuse.
struct Evaluator<'a> {
    problem: &'a HullProblem,
    eps: f64,
    theta_warm: Vec<f64>,
    // scratch
    a: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(problem: &'a HullProblem, eps: f64) -> Self {
        Self {
            problem,
            eps,
            theta_warm: vec![0.0; problem.blocks.len()],
            a: Vec::new(),
            lo: Vec::new(),
            hi: Vec::new(),
        }
    }

    /// Hull value of one block at the given indicator slice and target v.
    fn block_value(&mut self, bi: usize, zs: &[f64], v: f64) -> f64 {
        let block = &self.problem.blocks[bi];
        piece_weights(zs, self.eps, &mut self.a);
        piece_intervals_fixed(block, zs, &self.a, &mut self.lo, &mut self.hi);
        let sol = inner_solve(block, zs, &self.a, &self.lo, &self.hi, v, self.theta_warm[bi]);
        self.theta_warm[bi] = sol.theta;
        sol.value
    }

    /// Sum of hull epigraph values at x, with optional gradient side effects.
    fn epigraph(&mut self, x: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let p = self.problem;
        let z_off = p.z_off();
        let mut total = 0.0;
        for (bi, block) in p.blocks.iter().enumerate() {
            let k = block.thresholds.len();
            let zs = &x[z_off + p.z_offsets[bi]..z_off + p.z_offsets[bi] + k];
            piece_weights(zs, self.eps, &mut self.a);
            piece_intervals_fixed(block, zs, &self.a, &mut self.lo, &mut self.hi);
            let v: f64 = block.x_row.iter().zip(&x[..p.n]).map(|(xr, wk)| xr * wk).sum();
            let sol = inner_solve(block, zs, &self.a, &self.lo, &self.hi, v, self.theta_warm[bi]);
            self.theta_warm[bi] = sol.theta;
            total += sol.value;
            if let Some(grad) = grad.as_deref_mut() {
                accumulate_block_gradient(p, bi, block, zs, &self.a, &sol, grad, self.eps);
            }
        }
        total
    }
}

/// Piece intervals with the interior upper ends written plainly.
fn piece_intervals_fixed(
    block: &Block,
    z: &[f64],
    a: &[f64],
    lo: &mut Vec<f64>,
    hi: &mut Vec<f64>,
) {
    let b = &block.thresholds;
    let k = b.len();
    lo.clear();
    hi.clear();
    match block.cap_m {
        Some(m) => lo.push(b[0] - m * (1.0 - z[0]) / a[0]),
        None => lo.push(-BIG_ARG),
    }
    hi.push(b[0]);
    for r in 1..k {
        let delta = b[r] - b[r - 1];
        let alpha = z[r - 1] - z[r];
        lo.push(b[r - 1]);
        hi.push(b[r - 1] + delta * alpha.max(0.0) / a[r]);
    }
    lo.push(b[k - 1]);
    match block.cap_m {
        Some(m) => hi.push(b[k - 1] + m * z[k - 1] / a[k]),
        None => hi.push(BIG_ARG),
    }
}

/// Envelope gradient of one block's hull value with respect to w (through
/// theta) and its indicator slice (through the piece weights, the portion
/// offsets, and the z-dependent interval caps).
#[allow(clippy::too_many_arguments)]
fn accumulate_block_gradient(
    problem: &HullProblem,
    block_index: usize,
    block: &Block,
    z: &[f64],
    a: &[f64],
    sol: &InnerSolve,
    grad: &mut [f64],
    eps: f64,
) {
    let b = &block.thresholds;
    let k = b.len();
    let theta = sol.theta;
    let phi = &sol.phi;
    let z_base = problem.z_off() + problem.z_offsets[block_index];

    // dH/dw through the telescope target: theta * x_row
    for (idx, xr) in block.x_row.iter().enumerate() {
        if *xr != 0.0 {
            grad[idx] += theta * xr;
        }
    }

    // loss-weight terms sum_r (da_r/dz) L(phi_r) and the portion partials
    // -theta * d(telescope)/dz at fixed phi; the telescope carries -p_0 but
    // +p_r for every later portion, so the theta terms flip sign after r = 0
    let lval: Vec<f64> = phi
        .iter()
        .zip(&block.piece_offsets)
        .map(|(&s, &off)| block.loss.value(s) + off)
        .collect();
    // piece 0: a_0 = 1 - z_0 + eps, p_0 = a_0 (b_0 - phi_0)
    grad[z_base] += -lval[0] - theta * (b[0] - phi[0]);
    for r in 1..k {
        let delta = b[r] - b[r - 1];
        // a_r = z_{r-1} - z_r + eps; p_r = a_r (phi_r - b_{r-1}) + delta z_r
        grad[z_base + r - 1] += lval[r] - theta * (phi[r] - b[r - 1]);
        grad[z_base + r] += -lval[r] + theta * (phi[r] - b[r - 1]);
        grad[z_base + r] -= theta * delta;
    }
    // last piece: a_k = z_{k-1} + eps; p_k = a_k (phi_k - b_{k-1})
    grad[z_base + k - 1] += lval[k] - theta * (phi[k] - b[k - 1]);

    // z-dependent interval ends: interior upper caps and big-M end caps
    for r in 1..k {
        let delta = b[r] - b[r - 1];
        let hi_r = b[r - 1] + delta * (z[r - 1] - z[r]).max(0.0) / a[r];
        if phi[r] >= hi_r - 1e-13 * (1.0 + hi_r.abs()) {
            let eta = a[r] * (theta - block.loss.grad(phi[r]));
            if eta > 0.0 {
                // d hi / d z_{r-1} = delta*eps/a^2, d hi / d z_r = -delta*eps/a^2
                let d = delta * eps / (a[r] * a[r]);
                grad[z_base + r - 1] -= eta * d;
                grad[z_base + r] += eta * d;
            }
        }
    }
    if let Some(m) = block.cap_m {
        let lo0 = b[0] - m * (1.0 - z[0]) / a[0];
        if phi[0] <= lo0 + 1e-13 * (1.0 + lo0.abs()) {
            let eta = a[0] * (block.loss.grad(phi[0]) - theta);
            if eta > 0.0 {
                grad[z_base] += eta * m * eps / (a[0] * a[0]);
            }
        }
        let hik = b[k - 1] + m * z[k - 1] / a[k];
        if phi[k] >= hik - 1e-13 * (1.0 + hik.abs()) {
            let eta = a[k] * (theta - block.loss.grad(phi[k]));
            if eta > 0.0 {
                grad[z_base + k - 1] -= eta * m * eps / (a[k] * a[k]);
            }
        }
    }
}

struct RunOutcome {
    x: Vec<f64>,
    objective: f64,
    s_sum: f64,
    t_exact: f64,
    residual_inf: f64,
    residual_sq: f64,
    bound: f64,
    status: SolveStatus,
    iterations: usize,
}

/// Augmented-Lagrangian loop over (w, t, z-space) with projected/proximal
/// gradient inner iterations; only the fairness rows are penalized.
fn run(problem: &HullProblem, opts: &SolveOptions, init_w: &[f64], warm: Option<&[f64]>) -> RunOutcome {
    let dim = problem.dim();
    let z_off = problem.z_off();
    let lambda = match problem.mode {
        FairnessMode::Regularized { lambda } => lambda,
        FairnessMode::Constrained { .. } => 0.0,
    };
    let epsilon = match problem.mode {
        FairnessMode::Constrained { epsilon } => Some(epsilon),
        FairnessMode::Regularized { .. } => None,
    };

    let row_value = |row: &FairRow, x: &[f64]| -> f64 {
        let mut d = row.constant;
        for &(var, coef) in &row.terms {
            d += coef * x[z_off + var];
        }
        d
    };
    let exact_t = |x: &[f64]| -> f64 {
        if problem.rows.is_empty() {
            return 0.0;
        }
        problem
            .rows
            .iter()
            .map(|row| row.sign * row_value(row, x))
            .fold(f64::NEG_INFINITY, f64::max)
    };

    let project = |x: &mut [f64]| {
        for (bi, block) in problem.blocks.iter().enumerate() {
            let k = block.thresholds.len();
            let start = z_off + problem.z_offsets[bi];
            let slice = &mut x[start..start + k];
            let fixes = problem
                .fixes
                .as_ref()
                .map(|f| &f[problem.z_offsets[bi]..problem.z_offsets[bi] + k]);
            crate::relax::project_monotone_box(slice, fixes);
            if let Some(f) = fixes {
                for (j, fj) in f.iter().enumerate() {
                    if let Some(bit) = fj {
                        slice[j] = if *bit { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        // free tie variables live after the block indicators
        let tail_start = z_off
            + problem
                .blocks
                .last()
                .map(|b| problem.z_offsets[problem.blocks.len() - 1] + b.thresholds.len())
                .unwrap_or(0);
        for v in x[tail_start..].iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    };

    let mut x = vec![0.0; dim];
    match warm {
        Some(w) if w.len() == dim => x.copy_from_slice(w),
        _ => {
            x[..problem.n].copy_from_slice(init_w);
            for v in x[z_off..].iter_mut() {
                *v = 0.5;
            }
        }
    }
    project(&mut x);
    if problem.has_t() {
        x[problem.n] = exact_t(&x);
    }

    let mut evaluator = Evaluator::new(problem, opts.smoothing);
    let mut nus = vec![0.0f64; problem.rows.len()];
    let mut rho = opts.rho0;

    let al_value_grad = |evaluator: &mut Evaluator,
                         x: &[f64],
                         grad: &mut [f64],
                         nus: &[f64],
                         rho: f64|
     -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = evaluator.epigraph(x, Some(grad));
        if problem.has_t() {
            value += lambda * x[problem.n];
            grad[problem.n] += lambda;
        }
        for (r, row) in problem.rows.iter().enumerate() {
            let d = row_value(row, x);
            let g = match epsilon {
                Some(e) => row.sign * d - e,
                None => row.sign * d - x[problem.n],
            };
            let phi = (nus[r] + rho * g).max(0.0);
            value += (phi * phi - nus[r] * nus[r]) / (2.0 * rho);
            if phi > 0.0 {
                for &(var, coef) in &row.terms {
                    grad[z_off + var] += phi * row.sign * coef;
                }
                if epsilon.is_none() {
                    grad[problem.n] -= phi;
                }
            }
        }
        value
    };
    let residuals = |x: &[f64]| -> (f64, f64) {
        let mut sq = 0.0;
        let mut inf: f64 = 0.0;
        for row in &problem.rows {
            let d = row_value(row, x);
            let g = match epsilon {
                Some(e) => row.sign * d - e,
                None => row.sign * d - x[problem.n],
            };
            let v = g.max(0.0);
            sq += v * v;
            inf = inf.max(v);
        }
        (sq, inf)
    };

    let start = std::time::Instant::now();
    let mut grad = vec![0.0; dim];
    let mut new_grad = vec![0.0; dim];
    let mut step = 1.0;
    let mut total_iters = 0usize;
    let mut status = SolveStatus::Optimal;
    let (_, mut res_prev) = residuals(&x);
    let mut prev_obj = f64::INFINITY;
    let mut converged = false;
    // exact coordinate sweeps are affordable below this work estimate
    let polish = problem.z_len * problem.blocks.len().max(1) <= 200_000;

    'outer: for _round in 0..60 {
        let cap = 4000.min(opts.max_iterations.saturating_sub(total_iters));
        if cap == 0 {
            status = SolveStatus::IterLimit;
            break;
        }
        let mut merit = al_value_grad(&mut evaluator, &x, &mut grad, &nus, rho)
            + reg_value(problem.reg, &x[..problem.n]);
        let mut inner = 0usize;
        while inner < cap {
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
                for k in 0..problem.n {
                    trial[k] = problem.reg.prox(x[k] - step * grad[k], step);
                }
                project(&mut trial);
                let tm = al_value_grad(&mut evaluator, &trial, &mut new_grad, &nus, rho)
                    + reg_value(problem.reg, &trial[..problem.n]);
                let move_sq: f64 = trial
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if tm <= merit - 1e-4 * move_sq / step.max(1e-300) {
                    let mut num = 0.0;
                    let mut den = 0.0;
                    for i in 0..dim {
                        let dx = trial[i] - x[i];
                        let dg = new_grad[i] - grad[i];
                        num += dx * dx;
                        den += dx * dg;
                    }
                    x.copy_from_slice(&trial);
                    grad.copy_from_slice(&new_grad);
                    let improved = merit - tm;
                    merit = tm;
                    step = if den > 0.0 {
                        (num / den).clamp(1e-12, 1e10)
                    } else {
                        (step * 2.0).min(1e10)
                    };
                    accepted = true;
                    if move_sq.sqrt() <= 1e-13 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())))
                        && improved.abs() < 1e-15
                    {
                        inner = cap;
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
        // exact 1D polish of each free indicator: the hull value is convex
        // along every coordinate, and the pool of stiff curvature near
        // integral corners stalls plain projected gradients
        if polish {
            coordinate_polish(problem, &mut evaluator, &mut x, &nus, rho, lambda, epsilon);
        }
        let (_, res_inf) = residuals(&x);
        let obj = evaluator.epigraph(&x, None)
            + reg_value(problem.reg, &x[..problem.n])
            + if problem.has_t() { lambda * exact_t(&x) } else { 0.0 };
        let change = (obj - prev_obj).abs() / (1.0 + obj.abs());
        if res_inf <= opts.tolerance && change <= opts.tolerance.max(1e-12) {
            converged = true;
            break;
        }
        prev_obj = obj;
        for (r, row) in problem.rows.iter().enumerate() {
            let d = row_value(row, &x);
            let g = match epsilon {
                Some(e) => row.sign * d - e,
                None => row.sign * d - x[problem.n],
            };
            nus[r] = (nus[r] + rho * g).max(0.0);
        }
        if res_inf > 0.5 * res_prev {
            rho = (rho * opts.rho_growth).min(1e12);
            step = step.min(1.0 / rho);
        }
        res_prev = res_inf;
        if total_iters >= opts.max_iterations {
            status = SolveStatus::IterLimit;
            break;
        }
    }
    if !converged && status == SolveStatus::Optimal {
        let (_, res_inf) = residuals(&x);
        if res_inf > opts.tolerance {
            status = SolveStatus::IterLimit;
        }
    }

    let (res_sq, res_inf) = residuals(&x);
    let s_sum = evaluator.epigraph(&x, None);
    let t_exact = exact_t(&x);
    let mut objective = s_sum + reg_value(problem.reg, &x[..problem.n]);
    if problem.has_t() {
        objective += lambda * t_exact;
    }

    // conservative bound: residual slack, multiplier slack, smoothing and
    // inner-bisection corrections
    let c_loss = problem
        .blocks
        .iter()
        .map(|b| {
            let off = b
                .piece_offsets
                .iter()
                .fold(0.0f64, |m, &v| m.max(v.abs()));
            b.thresholds
                .iter()
                .map(|&t| b.loss.value(t))
                .fold(0.0f64, f64::max)
                + off
        })
        .fold(0.0f64, f64::max)
        + 1.0;
    let pieces: usize = problem.blocks.iter().map(|b| b.thresholds.len() + 1).sum();
    let mult_slack: f64 = nus.iter().sum::<f64>() * res_inf;
    let theta_slack: f64 = evaluator
        .theta_warm
        .iter()
        .map(|t| t.abs() * 1e-11)
        .sum();
    let bound =
        objective - (rho * res_sq + mult_slack + pieces as f64 * opts.smoothing * c_loss + theta_slack);

    RunOutcome {
        x,
        objective,
        s_sum,
        t_exact,
        residual_inf: res_inf,
        residual_sq: res_sq,
        bound,
        status,
        iterations: total_iters,
    }
}

/// Generic per-observation strong solve (optionally with fixed indicators
/// and a warm-start vector in [w | t | z] layout).
pub(super) fn solve_generic(
    model: &ModelIR,
    opts: &SolveOptions,
    fixes: Option<&[Option<bool>]>,
    warm: Option<&[f64]>,
) -> Result<SolveOutput> {
    let ds = &model.data;
    let m = ds.m();
    let cap_m = match model.kind {
        ModelKind::Strong { logistic_big_m } => {
            if model.loss == LossKind::Logistic {
                logistic_big_m
            } else {
                None
            }
        }
        ModelKind::Nat { .. } => unreachable!("hull solver only handles strong models"),
    };
    let ell = model.ell();
    let blocks: Vec<Block> = (0..m)
        .map(|i| Block {
            thresholds: model.spec.breakpoints.values().to_vec(),
            x_row: ds.row(i).to_vec(),
            loss: BlockLoss::Single {
                kind: model.loss,
                y: ds.target(i),
            },
            cap_m,
            piece_offsets: vec![0.0; ell + 1],
        })
        .collect();
    let coef = model.fairness_coefficients();
    let rows: Vec<FairRow> = model
        .fairness_rows
        .iter()
        .map(|fr| FairRow {
            sign: fr.sign,
            constant: 0.0,
            terms: (0..m)
                .filter(|&i| coef[i] != 0.0)
                .map(|i| (i * ell + fr.j, coef[i]))
                .collect(),
        })
        .collect();
    let problem = HullProblem {
        n: ds.n(),
        blocks,
        z_offsets: (0..m).map(|i| i * ell).collect(),
        z_len: m * ell,
        rows,
        mode: model.spec.mode,
        reg: model.reg,
        fixes: fixes.map(|f| f.to_vec()),
        use_t: matches!(model.spec.mode, FairnessMode::Regularized { .. }),
    };
    let init_w = crate::baseline::unfair_weights(ds, model.loss);
    let outcome = run(&problem, opts, &init_w, warm);
    Ok(package(model, &problem, outcome, None))
}

/// Single-factor solve: the whole problem collapses to one hull block over
/// the merged crossing points b_j / x_i with the summed loss. The fairness
/// value is piecewise constant in w, so it is folded into the pieces as
/// constant costs: every crossing contributes a zero-width singleton piece
/// carrying the tie-minimized fairness value, which makes the block the
/// exact convex envelope of the one-dimensional objective. Only regularized
/// mode dispatches here.
pub(super) fn solve_single_factor(model: &ModelIR, opts: &SolveOptions) -> Result<SolveOutput> {
    let ds = &model.data;
    let m = ds.m();
    let bks = model.spec.breakpoints.values().to_vec();
    let xs = ds.column(0);
    let ys: Vec<f64> = (0..m).map(|i| ds.target(i)).collect();
    let coef = model.fairness_coefficients();
    let lambda = match model.spec.mode {
        FairnessMode::Regularized { lambda } => lambda,
        FairnessMode::Constrained { .. } => {
            unreachable!("constrained single-factor models use the generic path")
        }
    };
    let sided = model.spec.variant.sided;

    // crossings merged on exact equality; x = 0 rows contribute constants,
    // except exact ties 0 = b_j whose indicator stays free everywhere
    let mut raw: Vec<(f64, usize, usize, bool)> = Vec::new();
    let mut frees: Vec<(usize, usize)> = Vec::new();
    for i in 0..m {
        for (j, &b) in bks.iter().enumerate() {
            if xs[i] == 0.0 {
                if b == 0.0 {
                    frees.push((i, j));
                }
                continue;
            }
            raw.push((b / xs[i], i, j, xs[i] < 0.0));
        }
    }
    raw.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut taus: Vec<f64> = Vec::new();
    let mut members: Vec<Vec<(usize, usize, bool)>> = Vec::new();
    for (tau, i, j, flip) in raw {
        if taus.last() == Some(&tau) {
            members.last_mut().unwrap().push((i, j, flip));
        } else {
            taus.push(tau);
            members.push(vec![(i, j, flip)]);
        }
    }
    let k = taus.len();
    if k == 0 {
        // no crossing couples w to fairness: the generic geometry suffices
        return hull_generic_fallback(model, opts);
    }
    let ell = bks.len();

    // indicator pattern below every crossing, and the per-interval rate
    // differences; crossing group r flips its members upward
    let mut d = vec![0.0f64; ell];
    for i in 0..m {
        for (j, &b) in bks.iter().enumerate() {
            let z_below = if xs[i] > 0.0 {
                false
            } else if xs[i] < 0.0 {
                true
            } else {
                0.0 > b && !(b == 0.0)
            };
            if z_below {
                d[j] += coef[i];
            }
        }
    }
    let free_deltas: Vec<(usize, f64)> = frees.iter().map(|&(i, j)| (j, coef[i])).collect();
    let term = |d: &[f64]| -> f64 {
        let mut best = f64::NEG_INFINITY;
        for &dj in d {
            let t = match sided {
                crate::fairness::Sided::Absolute => dj.abs(),
                crate::fairness::Sided::OneSided => dj,
            };
            best = best.max(t);
        }
        best
    };
    // fairness value minimized over a set of free index-delta pairs
    let min_over_frees = |d: &[f64], extra: &[(usize, f64)]| -> f64 {
        let all: Vec<(usize, f64)> = extra.iter().chain(&free_deltas).cloned().collect();
        if all.is_empty() {
            return term(d);
        }
        if all.len() <= 12 {
            let mut best = f64::INFINITY;
            let mut scratch = d.to_vec();
            for mask in 0u32..(1u32 << all.len()) {
                scratch.copy_from_slice(d);
                for (bit, &(j, delta)) in all.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        scratch[j] += delta;
                    }
                }
                best = best.min(term(&scratch));
            }
            best
        } else {
            let mut up = d.to_vec();
            for &(j, delta) in &all {
                up[j] += delta;
            }
            term(d).min(term(&up))
        }
    };

    // refined piece structure: interval, singleton at each crossing, interval
    // thresholds duplicated so singleton pieces have zero width
    let mut thresholds = Vec::with_capacity(2 * k);
    let mut offsets = Vec::with_capacity(2 * k + 1);
    offsets.push(lambda * min_over_frees(&d, &[]));
    for r in 0..k {
        thresholds.push(taus[r]);
        thresholds.push(taus[r]);
        let deltas: Vec<(usize, f64)> = members[r]
            .iter()
            .map(|&(i, j, flip)| (j, if flip { -coef[i] } else { coef[i] }))
            .collect();
        // singleton at tau_r: crossing entries are free there
        offsets.push(lambda * min_over_frees(&d, &deltas));
        for &(j, delta) in &deltas {
            d[j] += delta;
        }
        // open interval after tau_r
        offsets.push(lambda * min_over_frees(&d, &[]));
    }

    let problem = HullProblem {
        n: 1,
        blocks: vec![Block {
            thresholds,
            x_row: vec![1.0],
            loss: BlockLoss::Summed {
                kind: model.loss,
                xs: xs.clone(),
                ys,
            },
            cap_m: None,
            piece_offsets: offsets,
        }],
        z_offsets: vec![0],
        z_len: 2 * k,
        rows: Vec::new(),
        mode: model.spec.mode,
        reg: model.reg,
        fixes: None,
        use_t: false,
    };
    let init_w = crate::baseline::unfair_weights(ds, model.loss);
    let outcome = run(&problem, opts, &init_w, None);
    Ok(package(
        model,
        &problem,
        outcome,
        Some((taus, members, frees, xs)),
    ))
}

/// Generic-path fallback used when the single-factor reduction degenerates.
fn hull_generic_fallback(model: &ModelIR, opts: &SolveOptions) -> Result<SolveOutput> {
    solve_generic(model, opts, None, None)
}

type SingleFactorMap = (
    Vec<f64>,
    Vec<Vec<(usize, usize, bool)>>,
    Vec<(usize, usize)>,
    Vec<f64>,
);

/// Builds the public solution from a run outcome, mapping single-factor
/// crossing variables back to per-observation indicators when needed.
fn package(
    model: &ModelIR,
    problem: &HullProblem,
    outcome: RunOutcome,
    single_factor: Option<SingleFactorMap>,
) -> SolveOutput {
    let ds = &model.data;
    let m = ds.m();
    let ell = model.ell();
    let z_off = problem.z_off();
    let w = outcome.x[..problem.n].to_vec();

    let z: Vec<f64> = match &single_factor {
        None => outcome.x[z_off..z_off + m * ell].to_vec(),
        Some((_taus, members, frees, xs)) => {
            let mut z = vec![0.0; m * ell];
            let bks = model.spec.breakpoints.values();
            for (r, group) in members.iter().enumerate() {
                // crossing r owns the duplicated refined thresholds (2r, 2r+1);
                // the mass strictly above the crossing is the second one
                let zeta = outcome.x[z_off + 2 * r + 1];
                for &(i, j, flip) in group {
                    z[i * ell + j] = if flip { 1.0 - zeta } else { zeta };
                }
            }
            for i in 0..m {
                if xs[i] == 0.0 {
                    for (j, &b) in bks.iter().enumerate() {
                        if 0.0 > b {
                            z[i * ell + j] = 1.0;
                        }
                    }
                }
            }
            // exact ties of zero-feature rows stay free; report them centered
            for &(i, j) in frees {
                z[i * ell + j] = 0.5;
            }
            z
        }
    };

    // reconstruct feasible portions per observation from the indicators
    let v = ds.predictions(&w);
    let bks = model.spec.breakpoints.values();
    let mut p = vec![0.0; m * (ell + 1)];
    for i in 0..m {
        let mut interior = 0.0;
        for j in 1..ell {
            let delta = bks[j] - bks[j - 1];
            let pj = delta * z[i * ell + j];
            p[i * (ell + 1) + j] = pj;
            interior += pj;
        }
        let rem = v[i] - bks[0] - interior;
        if rem >= 0.0 {
            p[i * (ell + 1) + ell] = rem;
        } else {
            p[i * (ell + 1)] = -rem;
        }
    }

    // for the single-factor reduction the epigraph sum includes the folded
    // fairness costs; split them out and report the exact fairness max at
    // the mapped indicators
    let (s_report, t_report) = match &single_factor {
        None => (outcome.s_sum, outcome.t_exact),
        Some(_) => {
            let block = &problem.blocks[0];
            let k2 = block.thresholds.len();
            let zeta = &outcome.x[z_off..z_off + k2];
            let mut a = Vec::new();
            piece_weights(zeta, 0.0, &mut a);
            let offset_part: f64 = a
                .iter()
                .zip(&block.piece_offsets)
                .map(|(ar, off)| ar * off)
                .sum();
            let coef = model.fairness_coefficients();
            let mut t = f64::NEG_INFINITY;
            for row in &model.fairness_rows {
                let mut dj = 0.0;
                for i in 0..m {
                    dj += coef[i] * z[i * ell + row.j];
                }
                t = t.max(row.sign * dj);
            }
            (outcome.s_sum - offset_part, t)
        }
    };
    let solution = RelaxSolution {
        w,
        z,
        p,
        s: s_report,
        t: t_report,
        objective: outcome.objective,
        primal_residual: outcome.residual_inf,
        status: outcome.status,
        iterations: outcome.iterations,
    };
    let _ = outcome.residual_sq;
    SolveOutput {
        solution,
        x: outcome.x,
        bound: outcome.bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn water_filling_reproduces_loss_at_integral_indicators() {
        // v strictly inside an interval with its natural pattern: the inner
        // minimum equals the plain loss value
        let block = Block {
            thresholds: vec![0.0, 0.5, 1.0],
            x_row: vec![1.0],
            loss: BlockLoss::Single {
                kind: LossKind::SquaredError,
                y: 0.3,
            },
            cap_m: None,
            piece_offsets: vec![0.0; 4],
        };
        for &(v, pattern) in &[
            (-0.7, [0.0, 0.0, 0.0]),
            (0.2, [1.0, 0.0, 0.0]),
            (0.8, [1.0, 1.0, 0.0]),
            (1.9, [1.0, 1.0, 1.0]),
        ] {
            let z = pattern.to_vec();
            let mut a = Vec::new();
            piece_weights(&z, 1e-10, &mut a);
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            piece_intervals_fixed(&block, &z, &a, &mut lo, &mut hi);
            let sol = inner_solve(&block, &z, &a, &lo, &hi, v, 0.0);
            let want = (v - 0.3) * (v - 0.3);
            assert!(
                (sol.value - want).abs() < 1e-7,
                "v={v}: {} vs {want}",
                sol.value
            );
        }
    }

    #[test]
    fn epigraph_gradient_matches_finite_differences() {
        let block = Block {
            thresholds: vec![-0.2, 0.4],
            x_row: vec![0.8, -0.5],
            loss: BlockLoss::Single {
                kind: LossKind::Logistic,
                y: 1.0,
            },
            cap_m: Some(6.0),
            piece_offsets: vec![0.0, 0.2, 0.1],
        };
        let block2 = Block {
            thresholds: vec![-0.2, 0.4],
            x_row: vec![-0.3, 0.9],
            loss: BlockLoss::Single {
                kind: LossKind::SquaredError,
                y: 0.7,
            },
            cap_m: None,
            piece_offsets: vec![0.3, 0.0, 0.05],
        };
        let problem = HullProblem {
            n: 2,
            blocks: vec![block, block2],
            z_offsets: vec![0, 2],
            z_len: 4,
            rows: vec![],
            mode: FairnessMode::Regularized { lambda: 0.0 },
            reg: Regularizer::None,
            fixes: None,
            use_t: true,
        };
        let mut evaluator = Evaluator::new(&problem, 1e-8);
        // a strictly interior point (chain-feasible, away from the boundary)
        let x = vec![0.3, -0.6, 0.0, 0.7, 0.3, 0.8, 0.25];
        let mut grad = vec![0.0; x.len()];
        evaluator.epigraph(&x, Some(&mut grad));
        let h = 1e-6;
        for idx in 0..x.len() {
            if idx == 2 {
                continue; // t slot, not part of the epigraph
            }
            let mut hix = x.clone();
            hix[idx] += h;
            let mut lox = x.clone();
            lox[idx] -= h;
            let fhi = evaluator.epigraph(&hix, None);
            let flo = evaluator.epigraph(&lox, None);
            let fd = (fhi - flo) / (2.0 * h);
            assert!(
                (grad[idx] - fd).abs() <= 1e-4 * (1.0 + fd.abs()),
                "coordinate {idx}: analytic {} vs fd {fd}",
                grad[idx]
            );
        }
    }
}
