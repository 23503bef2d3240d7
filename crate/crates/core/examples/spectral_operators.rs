//! Cosine-basis transforms and spectral operators on a rectangle.
//!
//! Run with `cargo run --release --example spectral_operators`.

use llg_control::spectral::{self, SpectralField};
use llg_control::verify;
use llg_control::{Grid, VectorField3};

fn main() -> llg_control::Result<()> {
    let grid = Grid::new(2.0, 1.0, 48, 24)?;
    println!("grid {}x{} on [0,{}]x[0,{}]", grid.nx(), grid.ny(), grid.lx(), grid.ly());

    // a single cosine mode is an eigenfunction of the Neumann Laplacian
    let mode = SpectralField::cosine(&grid, 3, 2, 1.0);
    let nodal = spectral::to_nodal(&mode, &grid)?;
    let back = spectral::to_spectral(&nodal, &grid)?;
    let err = back
        .coeffs
        .iter()
        .zip(&mode.coeffs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("round trip of mode (3,2): max coefficient error {err:.2e}");

    let planes: Vec<f64> = nodal.iter().chain(&nodal).chain(&nodal).copied().collect();
    let f = VectorField3::from_data(&grid, planes)?;
    let lap = spectral::laplacian(&f);
    let lambda = (3.0 * std::f64::consts::PI / grid.lx()).powi(2) + (2.0 * std::f64::consts::PI / grid.ly()).powi(2);
    let ratio = lap.data()[5] / f.data()[5];
    println!("Laplacian eigenvalue: expected -{lambda:.6}, measured {ratio:.6}");

    let smooth = spectral::helmholtz_inverse(&f);
    println!(
        "(I - Laplacian)^-1 damps the mode by {:.6} (expected {:.6})",
        smooth.data()[5] / f.data()[5],
        1.0 / (1.0 + lambda)
    );

    println!("\nconvergence checks:");
    for check in [
        verify::check_round_trip(&grid, 1)?,
        verify::check_parseval(&grid, 2)?,
        verify::check_eigen_laplacian(&grid)?,
        verify::check_neumann_boundary(grid.lx(), grid.ly())?,
        verify::check_laplacian_fd_order(grid.lx(), grid.ly(), 3)?,
        verify::check_gradient_fd_order(grid.lx(), grid.ly(), 4)?,
    ] {
        println!("  {check}");
    }
    Ok(())
}
