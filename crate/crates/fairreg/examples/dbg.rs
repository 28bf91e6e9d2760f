use fairreg::data::gen_synthetic_regression;
use fairreg::fairness::{Breakpoints, Comparison, ParityVariant, Sided};
use fairreg::formulations::{build_strong, FairnessMode, FairnessSpec};
use fairreg::losses::{LossKind, Regularizer};
use fairreg::relax::{solve_relaxation, SolveOptions};
use std::sync::Arc;

fn main() {
    let (ds, _) = gen_synthetic_regression(4, 12, 9).unwrap();
    let ds = Arc::new(ds);
    let spec = FairnessSpec {
        mode: FairnessMode::Regularized { lambda: 0.0 },
        variant: ParityVariant::new(Comparison::Marginal, Sided::Absolute),
        breakpoints: Breakpoints::grid(0.0, 1.0, 3).unwrap(),
    };
    let model = build_strong(ds.clone(), LossKind::SquaredError, Regularizer::None, spec, None).unwrap();
    for max_it in [50_000usize, 200_000, 1_000_000] {
        let sol = solve_relaxation(&model, &SolveOptions { max_iterations: max_it, ..SolveOptions::default() }).unwrap();
        println!("iters_cap={max_it}: obj={} used={} status={:?}", sol.objective, sol.iterations, sol.status);
    }
    let w_star = fairreg::baseline::unfair_weights(&ds, LossKind::SquaredError);
    let v = ds.predictions(&w_star);
    let unfair: f64 = (0..ds.m()).map(|i| LossKind::SquaredError.value(v[i], ds.target(i))).sum();
    println!("unfair={unfair}");
    let sol = solve_relaxation(&model, &SolveOptions::default()).unwrap();
    println!("z[0..6]={:?}", &sol.z[..6]);
    println!("w={:?} w*={:?}", sol.w, w_star);
}
