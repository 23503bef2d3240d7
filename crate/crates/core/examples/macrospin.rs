//! Uniform magnetization precessing and relaxing in a constant field,
//! compared with the closed-form solution. Also contrasts the two
//! formulations on a small grid.
//!
//! Run with `cargo run --release --example macrospin`.

use llg_control::fields::sphere_defect;
use llg_control::scenario::macrospin_initial;
use llg_control::state::{explicit_dt_limit, solve_forward};
use llg_control::verify::oracles::macrospin_closed_form;
use llg_control::{Formulation, Grid, SolverConfig, Trajectory, VectorField3};

fn main() -> llg_control::Result<()> {
    let grid = Grid::unit_square(16)?;
    let theta0 = std::f64::consts::FRAC_PI_4;
    let t_final = 2.0;
    let m0 = macrospin_initial(&grid, theta0);
    let field = VectorField3::uniform(&grid, [0.0, 0.0, 1.0]);

    println!("{:>6} {:>12} {:>12}", "nt", "max error", "|m|-1");
    for nt in [256, 1024, 4096] {
        let u = Trajectory::constant(&field, t_final, nt)?;
        let run = solve_forward(&m0, &u, &SolverConfig::new(nt))?;
        let mut err: f64 = 0.0;
        for (k, frame) in run.trajectory.frames().iter().enumerate() {
            let exact = macrospin_closed_form(theta0, 1.0, run.trajectory.time(k));
            let m = frame.at(0);
            err = err.max((0..3).map(|c| (m[c] - exact[c]).abs()).fold(0.0, f64::max));
        }
        println!("{nt:>6} {err:>12.3e} {:>12.3e}", sphere_defect(run.trajectory.last()));
    }

    let exact = macrospin_closed_form(theta0, 1.0, t_final);
    println!("closed form at T = {t_final}: ({:.5}, {:.5}, {:.5})", exact[0], exact[1], exact[2]);

    // the explicit formulation needs a step below the diffusive limit
    let small = Grid::unit_square(8)?;
    let limit = explicit_dt_limit(&small);
    let nt = (1.0 / limit).ceil() as usize;
    let m0 = llg_control::scenario::perturbed_initial(&small, 1.0)?;
    let u = Trajectory::zeros(&small, 1.0, nt)?;
    let ep = solve_forward(&m0, &u, &SolverConfig::new(nt))?;
    let nlp = solve_forward(&m0, &u, &SolverConfig::new(nt).with_formulation(Formulation::Nlp))?;
    let gap = ep.trajectory.last().plus(-1.0, nlp.trajectory.last()).max_abs();
    println!("\n8x8 perturbed relaxation, nt = {nt} (dt limit {limit:.3e}):");
    println!("  EP sphere defect  {:.3e}", sphere_defect(ep.trajectory.last()));
    println!("  NLP sphere defect {:.3e}", sphere_defect(nlp.trajectory.last()));
    println!("  max |m_EP - m_NLP| at T: {gap:.3e}");
    Ok(())
}
