//! Energy inequalities along a perturbed trajectory and the largest data
//! scale for which they keep holding.
//!
//! Run with `cargo run --release --example energy_budget`.

use llg_control::scenario::{perturbed_control, perturbed_initial};
use llg_control::state::solve_forward;
use llg_control::verify::{check_vpi_identity, energy_holds_at_scale, energy_rows, smallness_budget};
use llg_control::{Grid, SolverConfig};

fn main() -> llg_control::Result<()> {
    let grid = Grid::unit_square(32)?;
    let nt = 512;
    let cfg = SolverConfig::new(nt);
    let m0 = perturbed_initial(&grid, 1.0)?;
    let u = perturbed_control(&grid, 1.0, nt, 1.0)?;
    let run = solve_forward(&m0, &u, &cfg)?;
    let rows = energy_rows(&run.diagnostics, &u)?;

    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "t", "E1 lhs", "E1 rhs", "E2 lhs", "E2 rhs");
    for row in rows.iter().step_by(nt / 8) {
        println!(
            "{:>6.3} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e}",
            row.t, row.e1_lhs, row.e1_rhs, row.e2_lhs, row.e2_rhs
        );
    }
    // pointwise identity on the resolved initial data
    println!("{}", check_vpi_identity(&m0, 1e-10));

    for scale in [1.0, 4.0, 16.0, 50.0] {
        println!("scale {scale:>5}: inequalities hold = {}", energy_holds_at_scale(&grid, 1.0, &cfg, scale)?);
    }
    println!("{}", smallness_budget(&grid, 1.0, &cfg, 0.0, 64.0, 10)?);
    Ok(())
}
