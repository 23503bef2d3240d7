//! Adjoint sweep with the state held only at checkpoints, and snapshot I/O
//! of the resulting fields.
//!
//! Run with `cargo run --release --example checkpointed_adjoint`.

use llg_control::adjoint::{solve_adjoint_from_control, StateStorage};
use llg_control::io::{read_trajectory, write_trajectory};
use llg_control::scenario::{self, perturbed_initial};
use llg_control::state::solve_forward;
use llg_control::{Grid, SolverConfig, VectorField3};

fn main() -> llg_control::Result<()> {
    let grid = Grid::unit_square(32)?;
    let nt = 400;
    let cfg = SolverConfig::new(nt);
    let mut rng = scenario::rng(21);
    let m0 = perturbed_initial(&grid, 1.0)?;
    let u = scenario::random_smooth_control(&grid, 1.0, nt, &mut rng, 0.5)?;
    let m_d = solve_forward(&m0, &scenario::random_smooth_control(&grid, 1.0, nt, &mut rng, 0.5)?, &cfg)?.trajectory;
    let m_omega = VectorField3::uniform(&grid, [0.0, 0.0, 1.0]);

    let frame_bytes = 3 * grid.len() * 8;
    let budget = 40 * frame_bytes;
    let storage = StateStorage::for_budget(grid.len(), nt, Some(budget));
    println!("{} frames of {} KiB each; budget {} KiB -> {:?}", nt + 1, frame_bytes / 1024, budget / 1024, storage);

    let (_, full) = solve_adjoint_from_control(&m0, &u, &m_d, &m_omega, &cfg, StateStorage::Full)?;
    let (_, ckpt) = solve_adjoint_from_control(&m0, &u, &m_d, &m_omega, &cfg, storage)?;
    let diff = full.plus(-1.0, &ckpt)?.max_abs();
    println!("max |phi_full - phi_checkpointed| = {diff:.3e}");

    let dir = std::env::temp_dir().join("llg_control_checkpointed_adjoint");
    let _ = std::fs::remove_dir_all(&dir);
    write_trajectory(&dir, &ckpt, 1)?;
    let back = read_trajectory(&dir, &grid)?;
    println!(
        "wrote {} adjoint frames to {}; read back identical = {}",
        back.nt() + 1,
        dir.display(),
        back == ckpt
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
