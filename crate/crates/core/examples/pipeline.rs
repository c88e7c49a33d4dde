//! End-to-end library pipeline: synthesize a low-rank cube, degrade it with
//! the default blur and noise, restore it, and score the restoration.
//! This is the snippet shown in the README.
//!
//! Run with: `cargo run --release -p cpdecon-core --example pipeline`

use cpdecon_core::{degrade, psnr, reconstruct_cube, rmse, solve, synth_lowrank};
use cpdecon_core::{DegradationSpec64, Result, SolverConfig64};

fn main() -> Result<()> {
    let (clean, _truth) = synth_lowrank::<f64>(32, 32, 8, 3, 0, 2)?;
    let (observed, kernels) = degrade(&clean, &DegradationSpec64::default())?;

    let config = SolverConfig64::new(3); // rank 3, shipped defaults elsewhere
    let report = solve(&observed, &kernels, &config)?;

    let restored = reconstruct_cube(&report.final_factors);
    let (err, db) = (rmse(&clean, &restored)?, psnr(&clean, &restored, 1.0)?);
    println!("rmse {err:.4}, psnr {db:.2} dB");
    Ok(())
}
