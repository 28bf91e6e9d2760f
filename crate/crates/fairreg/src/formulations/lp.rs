//! LP-format export of model IRs.
//!
//! Squared-error models export in full: the natural formulation carries a
//! quadratic objective over auxiliary prediction variables, and the strong
//! formulation encodes each perspective term as a rotated-quadratic row
//! `q^2 <= r * alpha` over auxiliary linear definitions. Logistic export is
//! restricted to the natural kind and emits the constraint system with the
//! fairness part of the objective only (the logistic loss itself has no LP
//! encoding); a header comment flags this.
//!
//! Variable naming is deterministic: `w_k`, `z_i_j`, `p_i_j`, `s_i`, `t`,
//! plus `v_i` (natural) and `a_i_j`, `q_i_j`, `r_i_j` (strong extended
//! encoding). Output is LF-terminated ASCII.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::formulations::{FairnessMode, ModelIR, ModelKind, RowSide};
use crate::losses::{LossKind, Regularizer};

/// Writes the model to `path` in LP format.
pub fn export_lp(model: &ModelIR, path: impl AsRef<Path>) -> Result<()> {
    let text = write_lp_string(model)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Renders the model as LP-format text.
pub fn write_lp_string(model: &ModelIR) -> Result<String> {
    match (model.loss, model.kind) {
        (LossKind::SquaredError, _) => {}
        (LossKind::Logistic, ModelKind::Nat { .. }) => {}
        (LossKind::Logistic, ModelKind::Strong { .. }) => {
            return Err(Error::UnsupportedExport(
                "logistic loss with the strong formulation".into(),
            ));
        }
    }
    match model.reg {
        Regularizer::None | Regularizer::Ridge { .. } => {}
        _ => {
            return Err(Error::UnsupportedExport(
                "L1 / reverse-Huber regularizers are not exported".into(),
            ));
        }
    }
    match model.kind {
        ModelKind::Nat { big_m } => write_nat(model, big_m),
        ModelKind::Strong { .. } => write_strong(model),
    }
}

fn num(x: f64) -> String {
    // full roundtrip precision, no exponent surprises for typical magnitudes
    format!("{x:.17e}")
}

fn lambda_of(model: &ModelIR) -> Option<f64> {
    match model.spec.mode {
        FairnessMode::Regularized { lambda } => Some(lambda),
        FairnessMode::Constrained { .. } => None,
    }
}

fn push_fairness_rows(model: &ModelIR, out: &mut String, counter: &mut usize) {
    let coef = model.fairness_coefficients();
    let ell = model.ell();
    let epsilon = match model.spec.mode {
        FairnessMode::Constrained { epsilon } => Some(epsilon),
        FairnessMode::Regularized { .. } => None,
    };
    for row in &model.fairness_rows {
        let mut line = format!(" fair{counter}:");
        *counter += 1;
        for i in 0..model.m() {
            let c = row.sign * coef[i];
            if c != 0.0 {
                let _ = write!(line, " {} z_{i}_{}", signed(c), row.j);
            }
        }
        let _ = ell;
        match epsilon {
            Some(e) => {
                let _ = write!(line, " <= {}", num(e));
            }
            None => {
                let _ = write!(line, " - t <= 0");
            }
        }
        out.push_str(&line);
        out.push('\n');
    }
}

fn push_chain_rows(model: &ModelIR, out: &mut String) {
    for (idx, row) in model.chain_rows.iter().enumerate() {
        let _ = writeln!(
            out,
            " chain{idx}: z_{i}_{next} - z_{i}_{j} <= 0",
            i = row.obs,
            next = row.j + 1,
            j = row.j
        );
    }
}

fn signed(c: f64) -> String {
    if c < 0.0 {
        format!("- {}", num(-c))
    } else {
        format!("+ {}", num(c))
    }
}

fn push_binaries(model: &ModelIR, out: &mut String) {
    if !model.integral_z {
        return;
    }
    out.push_str("Binaries\n");
    let mut line = String::from(" ");
    for i in 0..model.m() {
        for j in 0..model.ell() {
            let name = format!("z_{i}_{j} ");
            if line.len() + name.len() > 78 {
                out.push_str(line.trim_end());
                out.push('\n');
                line = String::from(" ");
            }
            line.push_str(&name);
        }
    }
    if line.trim() != "" {
        out.push_str(line.trim_end());
        out.push('\n');
    }
}

fn write_nat(model: &ModelIR, big_m: f64) -> Result<String> {
    let m = model.m();
    let n = model.n();
    let b = model.spec.breakpoints.values().to_vec();
    let lambda = lambda_of(model);
    let mut out = String::new();
    out.push_str("\\ fair regression model, natural big-M formulation\n");
    if model.loss == LossKind::Logistic {
        out.push_str(
            "\\ logistic loss term omitted: not LP-representable; objective carries the fairness part only\n",
        );
    } else {
        // constant sum y_i^2 dropped from the quadratic expansion
        let c: f64 = (0..m).map(|i| model.data.target(i) * model.data.target(i)).sum();
        let _ = writeln!(out, "\\ objective offset (dropped constant): {}", num(c));
    }
    out.push_str("Minimize\n obj:");
    let mut wrote_linear = false;
    if let Some(l) = lambda {
        let _ = write!(out, " {} t", signed(l));
        wrote_linear = true;
    }
    if model.loss == LossKind::SquaredError {
        for i in 0..m {
            let y = model.data.target(i);
            if y != 0.0 {
                let _ = write!(out, " {} v_{i}", signed(-2.0 * y));
                wrote_linear = true;
            }
        }
        if !wrote_linear {
            out.push_str(" 0 v_0");
        }
        out.push_str(" + [");
        for i in 0..m {
            let _ = write!(out, " + 2 v_{i} ^ 2");
        }
        if let Regularizer::Ridge { mu } = model.reg {
            for k in 0..n {
                let _ = write!(out, " + {} w_{k} ^ 2", num(2.0 * mu));
            }
        }
        out.push_str(" ] / 2");
    } else if !wrote_linear {
        out.push_str(" 0 z_0_0");
    }
    out.push('\n');

    out.push_str("Subject To\n");
    // prediction definitions
    for i in 0..m {
        let mut line = format!(" def_v_{i}: v_{i}");
        for (k, x) in model.data.row(i).iter().enumerate() {
            if *x != 0.0 {
                let _ = write!(line, " {} w_{k}", signed(-x));
            }
        }
        line.push_str(" = 0");
        out.push_str(&line);
        out.push('\n');
    }
    for (idx, row) in model.big_m_rows.iter().enumerate() {
        let (i, j) = (row.obs, row.j);
        match row.side {
            RowSide::Upper => {
                let _ = writeln!(
                    out,
                    " bigm{idx}: v_{i} - {} z_{i}_{j} <= {}",
                    num(big_m),
                    num(b[j])
                );
            }
            RowSide::Lower => {
                let _ = writeln!(
                    out,
                    " bigm{idx}: v_{i} - {} z_{i}_{j} >= {}",
                    num(big_m),
                    num(b[j] - big_m)
                );
            }
        }
    }
    let mut counter = 0usize;
    push_fairness_rows(model, &mut out, &mut counter);
    push_chain_rows(model, &mut out);

    out.push_str("Bounds\n");
    for k in 0..n {
        let _ = writeln!(out, " w_{k} free");
    }
    for i in 0..m {
        let _ = writeln!(out, " v_{i} free");
    }
    if lambda.is_some() {
        out.push_str(" t free\n");
    }
    for i in 0..m {
        for j in 0..model.ell() {
            let _ = writeln!(out, " 0 <= z_{i}_{j} <= 1");
        }
    }
    push_binaries(model, &mut out);
    out.push_str("End\n");
    Ok(out)
}

fn write_strong(model: &ModelIR) -> Result<String> {
    let m = model.m();
    let n = model.n();
    let ell = model.ell();
    let b = model.spec.breakpoints.values().to_vec();
    let lambda = lambda_of(model);
    let mut out = String::new();
    out.push_str("\\ fair regression model, strong extended formulation\n");
    out.push_str("\\ perspective rows as rotated-quadratic constraints q^2 <= r * alpha\n");
    out.push_str("Minimize\n obj:");
    for i in 0..m {
        let _ = write!(out, " + s_{i}");
    }
    if let Some(l) = lambda {
        let _ = write!(out, " {} t", signed(l));
    }
    if let Regularizer::Ridge { mu } = model.reg {
        out.push_str(" + [");
        for k in 0..n {
            let _ = write!(out, " + {} w_{k} ^ 2", num(2.0 * mu));
        }
        out.push_str(" ] / 2");
    }
    out.push('\n');

    out.push_str("Subject To\n");
    for row in &model.link_rows {
        let i = row.obs;
        let mut line = format!(" link_{i}:");
        for (k, x) in model.data.row(i).iter().enumerate() {
            if *x != 0.0 {
                let _ = write!(line, " {} w_{k}", signed(*x));
            }
        }
        let _ = write!(line, " + p_{i}_0");
        for j in 1..=ell {
            let _ = write!(line, " - p_{i}_{j}");
        }
        let _ = write!(line, " = {}", num(b[0]));
        out.push_str(&line);
        out.push('\n');
    }
    for (idx, c) in model.couplings.iter().enumerate() {
        let (i, j) = (c.obs, c.j);
        let delta = model.delta(j);
        let _ = writeln!(
            out,
            " cpl_lo{idx}: p_{i}_{j} - {} z_{i}_{j} >= 0",
            num(delta)
        );
        let _ = writeln!(
            out,
            " cpl_hi{idx}: p_{i}_{j} - {} z_{i}_{jm} <= 0",
            num(delta),
            jm = j - 1
        );
    }
    // alpha definitions, per-piece linear q definitions, and rotated rows
    let y_shift = |i: usize, piece: usize| -> f64 {
        // base threshold of the piece minus the target
        let base = if piece == 0 { b[0] } else { b[piece - 1] };
        base - model.data.target(i)
    };
    for i in 0..m {
        let _ = writeln!(out, " adef_{i}_0: a_{i}_0 + z_{i}_0 = 1");
        for j in 1..ell {
            let _ = writeln!(out, " adef_{i}_{j}: a_{i}_{j} - z_{i}_{jm} + z_{i}_{j} = 0", jm = j - 1);
        }
        let _ = writeln!(out, " adef_{i}_{ell}: a_{i}_{ell} - z_{i}_{lm} = 0", lm = ell - 1);

        // piece 0 argument runs downward from b_0: q = a*(b_0 - y) - p_0
        let _ = writeln!(
            out,
            " qdef_{i}_0: q_{i}_0 - {} a_{i}_0 + p_{i}_0 = 0",
            num(y_shift(i, 0))
        );
        for j in 1..ell {
            let delta = model.delta(j);
            let _ = writeln!(
                out,
                " qdef_{i}_{j}: q_{i}_{j} - {} a_{i}_{j} - p_{i}_{j} + {} z_{i}_{j} = 0",
                num(y_shift(i, j)),
                num(delta)
            );
        }
        let _ = writeln!(
            out,
            " qdef_{i}_{ell}: q_{i}_{ell} - {} a_{i}_{ell} - p_{i}_{ell} = 0",
            num(y_shift(i, ell))
        );
        for j in 0..=ell {
            let _ = writeln!(out, " persp_{i}_{j}: [ q_{i}_{j} ^ 2 - r_{i}_{j} * a_{i}_{j} ] <= 0");
        }
        let mut line = format!(" sdef_{i}: s_{i}");
        for j in 0..=ell {
            let _ = write!(line, " - r_{i}_{j}");
        }
        line.push_str(" >= 0");
        out.push_str(&line);
        out.push('\n');
    }
    let mut counter = 0usize;
    push_fairness_rows(model, &mut out, &mut counter);
    push_chain_rows(model, &mut out);

    out.push_str("Bounds\n");
    for k in 0..n {
        let _ = writeln!(out, " w_{k} free");
    }
    if lambda.is_some() {
        out.push_str(" t free\n");
    }
    for i in 0..m {
        for j in 0..=ell {
            let _ = writeln!(out, " q_{i}_{j} free");
        }
        for j in 0..ell {
            let _ = writeln!(out, " 0 <= z_{i}_{j} <= 1");
        }
    }
    push_binaries(model, &mut out);
    out.push_str("End\n");
    Ok(out)
}
