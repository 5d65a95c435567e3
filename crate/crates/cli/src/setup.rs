//! From a validated config to the objects the experiments consume: grid,
//! rate tables, initial density, and the sup-scale weight.

use crate::config::ExperimentConfig;
use pairhop::{
    balanced_affinity, read_tensor_csv, Error, FactorizedKernel, Grid64, Kernel, KernelTables,
    Result,
};
use std::path::Path;

pub fn grid(cfg: &ExperimentConfig) -> Result<Grid64> {
    Grid64::new(cfg.grid.d, cfg.grid.m, cfg.grid.l)
}

/// `mean + amp * avg_i cos(2 pi k_i / m)` over the cell tuple. Averaging the
/// per-axis cosines keeps the profile even under the grid reflection in any
/// dimension; on a line grid this is the plain cosine bump.
pub fn cosine_bump(grid: &Grid64, mean: f64, amp: f64) -> Vec<f64> {
    let tau = std::f64::consts::TAU;
    let m = grid.cells_per_side() as f64;
    (0..grid.n_cells())
        .map(|c| {
            let sum: f64 = grid.axes(c).iter().map(|&k| (tau * k as f64 / m).cos()).sum();
            mean + amp * sum / grid.dim() as f64
        })
        .collect()
}

/// A jump or affinity profile, either inline or from a level-1 tensor file
/// on the same grid.
fn profile(
    grid: &Grid64,
    inline: &Option<Vec<f64>>,
    file: &Option<String>,
    field: &str,
) -> Result<Vec<f64>> {
    if let Some(vals) = inline {
        if vals.len() != grid.n_cells() {
            return Err(Error::config(
                field,
                format!("expected {} entries for this grid, got {}", grid.n_cells(), vals.len()),
            ));
        }
        return Ok(vals.clone());
    }
    let path = file.as_ref().expect("validated: inline or file present");
    let (file_grid, tensor) = read_tensor_csv::<f64>(Path::new(path))?;
    file_grid.same_as(grid, "kernel profile file")?;
    if tensor.level() != 1 {
        return Err(Error::config(
            field,
            format!("{path}: profile files hold level-1 tensors, got level {}", tensor.level()),
        ));
    }
    Ok(tensor.values().to_vec())
}

pub fn tables(cfg: &ExperimentConfig, grid: &Grid64) -> Result<KernelTables<f64>> {
    let k = &cfg.kernel;
    let kernel = match k.kind.as_str() {
        "constant" => Kernel::constant(*grid, k.value)?,
        "balanced-cosine" => {
            let a = cosine_bump(grid, 1.0, k.alpha);
            let b = balanced_affinity(grid, &a)?;
            Kernel::Factorized(FactorizedKernel::new(*grid, k.kappa, &a, &b)?)
        }
        "factorized" => {
            let a = profile(grid, &k.a, &k.a_file, "kernel.a")?;
            let b = profile(grid, &k.b, &k.b_file, "kernel.b")?;
            Kernel::Factorized(FactorizedKernel::new(*grid, k.kappa, &a, &b)?)
        }
        _ => unreachable!("kind was validated"),
    };
    Ok(KernelTables::build(kernel))
}

pub fn initial_density(cfg: &ExperimentConfig, grid: &Grid64) -> Result<Vec<f64>> {
    let init = &cfg.initial;
    match init.profile.as_str() {
        // lo + (hi - lo)(1 + cos)/2, pinched into [lo, hi]
        "cosine-bump" => Ok(cosine_bump(grid, (init.lo + init.hi) / 2.0, (init.hi - init.lo) / 2.0)),
        "uniform" => Ok(vec![init.hi; grid.n_cells()]),
        "values" => {
            let vals = init.values.as_ref().expect("validated: values present");
            if vals.len() != grid.n_cells() {
                return Err(Error::config(
                    "initial.values",
                    format!("expected {} entries for this grid, got {}", grid.n_cells(), vals.len()),
                ));
            }
            Ok(vals.clone())
        }
        _ => unreachable!("profile was validated"),
    }
}

/// The sup-scale weight `C`: explicit, or the max of the initial density.
pub fn resolve_c0(explicit: Option<f64>, p0: &[f64], field: &str) -> Result<f64> {
    if let Some(c) = explicit {
        return Ok(c);
    }
    let max = p0.iter().fold(0.0f64, |m, &x| x.max(m));
    if max > 0.0 {
        Ok(max)
    } else {
        Err(Error::config(field, "the initial density is zero, set the weight explicitly"))
    }
}
