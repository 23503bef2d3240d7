//! Recovering a control from the state it generated, with projected
//! gradient descent and a variational-inequality certificate.
//!
//! Run with `cargo run --release --example inverse_crime`.

use llg_control::cli::{admissible_probes, optimality_check};
use llg_control::control::{optimize, OptOptions};
use llg_control::scenario::{self, ScenarioKind, ScenarioParams};
use llg_control::{Grid, SolverConfig};

fn main() -> llg_control::Result<()> {
    let grid = Grid::unit_square(24)?;
    let nt = 128;
    let cfg = SolverConfig::new(nt);
    let params = ScenarioParams {
        seed: 3,
        ..ScenarioParams::default()
    };
    let sc = scenario::build(ScenarioKind::InverseCrime, &grid, 1.0, &cfg, &params)?;
    println!("target generated by u with ||u||^2 = {:.4}, budget {:.4}", sc.u_dagger.l2_norm_sq(), sc.spec.e_mf);

    let opts = OptOptions {
        grad_tol: 1e-4,
        ..OptOptions::default()
    };
    let out = optimize(&sc.spec, &sc.spec.zero_control(), &cfg, &opts)?;
    println!("{:>4} {:>12} {:>12} {:>10} {}", "iter", "cost", "grad norm", "step", "budget");
    for r in &out.report.iterations {
        println!(
            "{:>4} {:>12.6e} {:>12.4e} {:>10.3e} {}",
            r.iter, r.cost.total, r.grad_norm, r.step, r.budget_active
        );
    }
    println!("stopped: {}", out.report.stopping_reason.as_str());

    let err = out.u_star.plus(-1.0, &sc.u_dagger)?.l2_norm_sq().sqrt() / sc.u_dagger.l2_norm_sq().sqrt();
    println!("relative distance to the generating control {err:.3}");

    let probes = admissible_probes(&grid, 1.0, nt, sc.spec.e_mf, 3, 0)?;
    println!("{} probe controls drawn from the admissible set", probes.len());
    println!("{}", optimality_check(&grid, &out, sc.spec.e_mf, 100, 17)?);
    Ok(())
}
