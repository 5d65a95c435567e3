//! The verification suite: eight numbered checks covering operator norm
//! bounds, the weighted-scale contraction, solver-versus-oracle accuracy,
//! the duality identity, the scaling limit, chaos propagation, the kinetic
//! invariants, and the stochastic simulator. Each check builds its own
//! fixtures, runs at desk scale, and reports one pass/fail line; the
//! integration tests and the `verify` subcommand both call into here.
//!
//! Everything is seeded, so a report is reproducible down to the digits in
//! its detail string (timings aside).

use crate::correlations::{
    density_to_correlation, evolve_density, evolve_density_expm, CorrelationEvolution,
    FiniteSystemDensity,
};
use crate::error::Result;
use crate::fixtures::{
    balanced_tables, random_particle_density, random_symmetric_state, rng, smooth_density,
};
use crate::hier::{
    apply_l0, apply_l0_adjoint, apply_w, evolve_expm, level_generator_matrix, solve_hierarchy,
    step_semigroup, vlasov_convergence_study, SolveOptions,
};
use crate::kinetic::{phi_map, rhs, solve_picard, solve_rk, DensityPath, KineticConfig};
use crate::montecarlo::{estimate_correlations, run_ensemble, sample_iid_n, sample_poisson_initial};
use crate::state::{horizon, lp_exponent, rho, HierState};
use crate::tensor::LevelTensor;
use rand::prelude::*;
use std::time::Instant;

#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionReport {
    /// The one-line form the suite prints.
    pub fn line(&self) -> String {
        format!(
            "criterion {} ({}): {} [{:.2}s] {}",
            self.id,
            self.name,
            if self.passed { "pass" } else { "FAIL" },
            self.seconds,
            self.detail
        )
    }
}

fn finish(
    id: usize,
    name: &'static str,
    start: Instant,
    body: Result<(bool, String)>,
) -> CriterionReport {
    let (passed, detail) = match body {
        Ok(pair) => pair,
        Err(e) => (false, format!("errored: {e}")),
    };
    CriterionReport {
        id,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn random_symmetric_level(
    grid: &crate::grid::TorusGrid<f64>,
    n: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> LevelTensor<f64> {
    let mut t = LevelTensor::from_fn(grid, n, |_| rng.random_range(-1.0..1.0));
    t.symmetrize();
    t
}

/// Per-level operator norms against their closed-form ceilings: on random
/// symmetric tensors, the in-level operator stays under `n(n-1)/2 (c1+c2)`
/// and the level-raising operator under `n(n-1)(c3+c4)`.
pub fn criterion_1() -> CriterionReport {
    let start = Instant::now();
    let body = (|| {
        let tables = balanced_tables::<f64>(16, 1.0, 0.5)?;
        let grid = *tables.grid();
        let bounds = tables.bounds();
        let mut r = rng(101);
        let mut excess_l0 = f64::NEG_INFINITY;
        let mut excess_w = f64::NEG_INFINITY;
        for n in 2usize..=3 {
            let nn = (n * (n - 1)) as f64;
            let l0_bound = nn * bounds.a_rate();
            let w_bound = nn * bounds.b_rate();
            for _ in 0..200 {
                let g = random_symmetric_level(&grid, n, &mut r);
                let ratio = apply_l0(&tables, &g)?.norm_x(&grid) / g.norm_x(&grid);
                excess_l0 = excess_l0.max(ratio - l0_bound);
                let low = random_symmetric_level(&grid, n - 1, &mut r);
                let ratio = apply_w(&tables, &low)?.norm_x(&grid) / low.norm_x(&grid);
                excess_w = excess_w.max(ratio - w_bound);
            }
        }
        let passed = excess_l0 <= 1e-10 && excess_w <= 1e-10;
        Ok((
            passed,
            format!(
                "worst bound excess over 200 draws per level: in-level {excess_l0:.3e}, raising {excess_w:.3e} (tolerance 1e-10)"
            ),
        ))
    })();
    finish(1, "operator norm bounds", start, body)
}

/// The evolved functional never beats its initial weighted norm when
/// measured in the decayed weight `rho(t, C) = C / (1 + B C t)`.
pub fn criterion_2() -> CriterionReport {
    let start = Instant::now();
    let body = (|| {
        let tables = balanced_tables::<f64>(16, 1.0, 0.5)?;
        let grid = *tables.grid();
        let c = 1.0;
        let b = tables.bounds().b_rate();
        let t_end = 2.0 / (b * c);
        let mut r = rng(202);
        let mut g0 = random_symmetric_state(&grid, 3, &mut r);
        let scale = g0.norm_l(c);
        g0.scale(1.0 / scale);
        let opts = SolveOptions {
            eps: 1.0,
            substep_factor: 0.05,
        };
        let path = solve_hierarchy(&tables, &g0, t_end, 16, opts)?;
        let mut worst = f64::NEG_INFINITY;
        for (k, &t) in path.times().iter().enumerate() {
            let norm = path.state(k).norm_l(rho(t, c, b));
            worst = worst.max(norm);
        }
        let passed = worst <= 1.0 + 1e-6;
        Ok((
            passed,
            format!(
                "largest weighted norm along 16 snapshots out to t = {t_end:.3}: {worst:.9} (ceiling 1 + 1e-6)"
            ),
        ))
    })();
    finish(2, "weighted-scale contraction", start, body)
}

/// The marching stepper against the dense matrix exponential on one level,
/// and the discrete transpose identity of the in-level operator.
pub fn criterion_3() -> CriterionReport {
    let start = Instant::now();
    let body = (|| {
        let tables = balanced_tables::<f64>(8, 1.0, 0.5)?;
        let grid = *tables.grid();
        let mut r = rng(303);
        let t = 0.3;
        let mat = {
            let mut m = level_generator_matrix(&tables, 2)?;
            m.scale(t);
            m.expm()
        };
        let mut worst_rel = f64::NEG_INFINITY;
        for _ in 0..5 {
            let g = random_symmetric_level(&grid, 2, &mut r);
            let stepped = step_semigroup(&tables, &g, t, 0.02)?;
            let exact = mat.matvec(g.values());
            let num: f64 = stepped
                .values()
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .sum();
            let den: f64 = exact.iter().map(|x| x.abs()).sum();
            worst_rel = worst_rel.max(num / den);
        }
        let mut worst_adj = f64::NEG_INFINITY;
        for _ in 0..20 {
            let g = random_symmetric_level(&grid, 2, &mut r);
            let k = random_symmetric_level(&grid, 2, &mut r);
            let dot = |a: &LevelTensor<f64>, b: &LevelTensor<f64>| -> f64 {
                a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum()
            };
            let lhs = dot(&apply_l0(&tables, &g)?, &k);
            let rhs = dot(&g, &apply_l0_adjoint(&tables, &k)?);
            worst_adj = worst_adj.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
        }
        let passed = worst_rel <= 1e-8 && worst_adj <= 1e-12;
        Ok((
            passed,
            format!(
                "stepper vs matrix exponential relative error {worst_rel:.3e} (tol 1e-8); transpose identity defect {worst_adj:.3e} (tol 1e-12)"
            ),
        ))
    })();
    finish(3, "semigroup and transpose oracle", start, body)
}

/// `<<G_0, k_t>> = <<G_t, k_0>>` for a two-particle system: the density
/// side evolves by per-level matrix exponentials of the jump adjoint, the
/// observable side by the full two-diagonal hierarchy.
pub fn criterion_4() -> CriterionReport {
    let start = Instant::now();
    let body = (|| {
        let tables = balanced_tables::<f64>(8, 1.0, 0.5)?;
        let grid = *tables.grid();
        let b = tables.bounds().b_rate();
        let t_h = horizon(1.0, b);
        let times = [0.1, 0.5 * t_h, 0.9 * t_h];
        let mut r = rng(404);
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..20 {
            let g0 = random_symmetric_state(&grid, 2, &mut r);
            let r0 = random_particle_density(&grid, 2, &mut r)?;
            let k0 = density_to_correlation(&r0)?;
            for &t in &times {
                let k_t = density_to_correlation(&evolve_density_expm(&tables, &r0, t)?)?;
                let lhs = g0.pairing(&k_t)?;
                let g_t = evolve_expm(&tables, &g0, t, 1.0)?;
                let rhs = g_t.pairing(&k0)?;
                worst = worst.max((lhs - rhs).abs());
            }
        }
        let passed = worst <= 1e-8;
        Ok((
            passed,
            format!(
                "largest pairing mismatch over 20 random pairs x {} times: {worst:.3e} (tol 1e-8)",
                times.len()
            ),
        ))
    })();
    finish(4, "duality identity", start, body)
}

/// Distance between the eps-scaled flow and its scaling limit shrinks
/// linearly: strictly decreasing in eps, and halving eps roughly halves
/// the error once eps is small.
pub fn criterion_5() -> CriterionReport {
    let start = Instant::now();
    let body = (|| {
        let tables = balanced_tables::<f64>(16, 1.0, 0.5)?;
        let grid = *tables.grid();
        let mut r = rng(505);
        let mut g0 = random_symmetric_state(&grid, 3, &mut r);
        let scale = g0.norm_l(1.0);
        g0.scale(1.0 / scale);
        let eps_list = [1.0, 0.5, 0.25, 0.1, 0.05];
        let rows = vlasov_convergence_study(&tables, &g0, 0.1, &eps_list, 0.5, 16, 0.025)?;
        let decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
        let err_at = |eps: f64| -> f64 {
            rows.iter()
                .find(|(e, _)| (*e - eps).abs() < 1e-12)
                .map(|(_, d)| *d)
                .unwrap_or(f64::NAN)
        };
        // halvings whose smaller member sits at or below 0.25
        let ratios = [
            err_at(0.25) / err_at(0.5),
            err_at(0.05) / err_at(0.1),
        ];
        let ratios_ok = ratios.iter().all(|q| (0.3..=0.7).contains(q));
        let passed = decreasing && ratios_ok;
        let table: Vec<String> = rows
            .iter()
            .map(|(e, d)| format!("{e}:{d:.3e}"))
            .collect();
        Ok((
            passed,
            format!(
                "sup errors {}; halving ratios {:.3}, {:.3} (need [0.3, 0.7], strictly decreasing)",
                table.join(" "),
                ratios[0],
                ratios[1]
            ),
        ))
    })();
    finish(5, "scaling-limit convergence", start, body)
}

/// Product (chaotic) initial correlations stay product under the limiting
/// flow: reconstructed one- and two-point functions match the kinetic
/// density and its tensor square within solver tolerance plus the reported
/// truncation tail.
pub fn criterion_6() -> CriterionReport {
    let start = Instant::now();
    let body = (|| {
        let tables = balanced_tables::<f64>(8, 1.0, 0.5)?;
        let grid = *tables.grid();
        let p0 = smooth_density(&grid, 0.05, 0.45);
        let c0 = 0.45;
        let t = 0.25 * horizon(c0, tables.bounds().b_rate());
        let mut cfg = KineticConfig::new(c0, t);
        cfg.dt = t / 512.0;
        let (kin, _) = solve_rk(&tables, &p0, &cfg)?;
        let p_t = kin.final_density();

        let k0 = lp_exponent(&grid, &p0, 3)?;
        let ce = CorrelationEvolution::new(&tables, k0, c0)?;
        let opts = SolveOptions {
            eps: 0.0,
            substep_factor: 0.05,
        };
        let (rec1, tail1) = ce.reconstruct_k(t, 1, 64, opts)?;
        let (rec2, tail2) = ce.reconstruct_k(t, 2, 64, opts)?;

        let v = grid.n_cells();
        let mut worst1 = f64::NEG_INFINITY;
        let mut raw1 = f64::NEG_INFINITY;
        for x in 0..v {
            let target = p_t[x];
            let err = (rec1.values()[x] - target).abs();
            worst1 = worst1.max((err - tail1) / target);
            raw1 = raw1.max(err / target);
        }
        let mut worst2 = f64::NEG_INFINITY;
        let mut raw2 = f64::NEG_INFINITY;
        for x in 0..v {
            for y in 0..v {
                let target = p_t[x] * p_t[y];
                let err = (rec2.values()[rec2.flat(&[x, y])] - target).abs();
                worst2 = worst2.max((err - tail2) / target);
                raw2 = raw2.max(err / target);
            }
        }
        let passed = worst1 <= 1e-3 && worst2 <= 1e-3;
        // the a-priori tail dominates at this truncation depth; the raw
        // errors say how product-like the reconstruction actually is
        Ok((
            passed,
            format!(
                "tail-adjusted relative errors: one-point {worst1:.3e} (tail {tail1:.3e}, raw {raw1:.3e}), two-point {worst2:.3e} (tail {tail2:.3e}, raw {raw2:.3e}); tolerance 1e-3"
            ),
        ))
    })();
    finish(6, "chaos propagation", start, body)
}

/// Soft bounds, mass conservation, fixed-point versus explicit stepping,
/// the contraction factor of the integral map, and exact stationarity of
/// constants for the kinetic solver.
pub fn criterion_7() -> CriterionReport {
    let start = Instant::now();
    let body = (|| {
        let tables = balanced_tables::<f64>(16, 1.0, 0.5)?;
        let grid = *tables.grid();
        let p0 = smooth_density(&grid, 0.05, 0.45);
        let c = 0.45;
        let t_final = 0.25;
        let mut cfg = KineticConfig::new(c, t_final);
        cfg.dt = 5e-4;
        let (pic, _) = solve_picard(&tables, &p0, &cfg)?;
        let (rk, _) = solve_rk(&tables, &p0, &cfg)?;

        let bounds_ok = pic.min_value() >= -1e-10 && pic.max_value() <= c + 1e-10;
        let drift = pic.mass_drift();
        let drift_ok = drift <= 1e-8 * t_final;
        let gap = pic.sup_distance(&rk)?;
        let gap_ok = gap <= 1e-6;

        // contraction factor of the integral map on one segment
        let b = tables.bounds().b_rate();
        let ups = 0.9 / (2.0 * c * b);
        let nodes: Vec<f64> = (0..=64).map(|k| ups * k as f64 / 64.0).collect();
        let mut r = rng(707);
        let bound = 2.0 * c * b * ups;
        let mut worst_lip = f64::NEG_INFINITY;
        for _ in 0..30 {
            let v: Vec<f64> = (0..grid.n_cells()).map(|_| r.random_range(0.0..c)).collect();
            let w: Vec<f64> = (0..grid.n_cells()).map(|_| r.random_range(0.0..c)).collect();
            let vp = DensityPath::constant(grid, nodes.clone(), &v)?;
            let wp = DensityPath::constant(grid, nodes.clone(), &w)?;
            let num = phi_map(&tables, &p0, &vp)?.sup_distance(&phi_map(&tables, &p0, &wp)?)?;
            let den = vp.sup_distance(&wp)?;
            worst_lip = worst_lip.max(num / den);
        }
        let lip_ok = worst_lip <= bound * 1.05;

        // constants are equilibria: the vector field vanishes and the
        // stepper does not move them
        let flat = vec![0.3; grid.n_cells()];
        let field: f64 = rhs(&tables, &flat)?.iter().fold(0.0, |m, x| m.max(x.abs()));
        let (rk_flat, _) = solve_rk(&tables, &flat, &KineticConfig::new(0.45, 0.2))?;
        let still: f64 = rk_flat
            .values()
            .iter()
            .flat_map(|row| row.iter().map(|x| (x - 0.3).abs()))
            .fold(0.0, f64::max);
        let const_ok = field <= 1e-13 && still <= 1e-12;

        let passed = bounds_ok && drift_ok && gap_ok && lip_ok && const_ok;
        Ok((
            passed,
            format!(
                "range [{:.2e}, C+{:.2e}] ok={bounds_ok}; mass drift {drift:.2e} (budget {:.2e}); fixed-point vs stepper {gap:.2e}; contraction factor {worst_lip:.3} (cap {:.3}); constant: field {field:.2e}, drift {still:.2e}",
                pic.min_value(),
                (pic.max_value() - c).max(0.0),
                1e-8 * t_final,
                bound * 1.05
            ),
        ))
    })();
    finish(7, "kinetic invariants", start, body)
}

/// The event-driven simulator against the exact master-equation marginals
/// for three particles, plus conservation of the particle count and
/// statistical time-invariance of the homogeneous Poisson state.
pub fn criterion_8() -> CriterionReport {
    let start = Instant::now();
    let body = (|| {
        let tables = balanced_tables::<f64>(16, 1.0, 0.5)?;
        let grid = *tables.grid();
        let q = grid.normalized(&smooth_density(&grid, 0.4, 1.0))?;
        let t = 0.5;
        let replicas = 20_000;
        let seed = 2026;
        let states = run_ensemble(&tables, |r| sample_iid_n(&grid, &q, 3, r), t, replicas, seed)?;
        let conserved = states.iter().all(|s| s.n_particles() == 3);
        let est = estimate_correlations(&grid, &states, t, seed)?;

        let mut r3 = LevelTensor::from_fn(&grid, 3, |c| 6.0 * q[c[0]] * q[c[1]] * q[c[2]]);
        r3.symmetrize();
        let mut levels: Vec<LevelTensor<f64>> =
            (0..3).map(|n| LevelTensor::zeros(&grid, n)).collect();
        levels.push(r3);
        let r0 = FiniteSystemDensity::new(HierState::new(grid, levels)?)?;
        let (r_t, _) = evolve_density(&tables, &r0, t, 0.05)?;
        let k_t = density_to_correlation(&r_t)?;

        let v = grid.n_cells();
        let mut bad = 0usize;
        let mut worst_z = f64::NEG_INFINITY;
        for cell in 0..v {
            let z = (est.k1_mean[cell] - k_t.level(1).values()[cell]).abs() / est.k1_se[cell];
            worst_z = worst_z.max(z);
            if z > 3.0 {
                bad += 1;
            }
        }
        let z_ok = (v - bad) * 100 >= v * 99;

        // a spatially constant Poisson ensemble keeps its intensity
        let rho0 = 4.0;
        let flat = vec![rho0; v];
        let inv_states = run_ensemble(
            &tables,
            |r| sample_poisson_initial(&grid, &flat, r),
            t,
            4_000,
            seed + 1,
        )?;
        let inv = estimate_correlations(&grid, &inv_states, t, seed + 1)?;
        let mut inv_bad = 0usize;
        let mut inv_worst = f64::NEG_INFINITY;
        for cell in 0..v {
            let z = (inv.k1_mean[cell] - rho0).abs() / inv.k1_se[cell];
            inv_worst = inv_worst.max(z);
            if z > 3.0 {
                inv_bad += 1;
            }
        }
        let inv_ok = (v - inv_bad) * 100 >= v * 99;

        let passed = conserved && z_ok && inv_ok;
        Ok((
            passed,
            format!(
                "count conserved={conserved}; {bad}/{v} cells past 3 standard errors vs the master-equation marginal (worst z {worst_z:.2}); homogeneous invariance {inv_bad}/{v} past 3 (worst z {inv_worst:.2})"
            ),
        ))
    })();
    finish(8, "stochastic simulator vs exact marginals", start, body)
}

pub fn run_all() -> Vec<CriterionReport> {
    run_selected(&[1, 2, 3, 4, 5, 6, 7, 8])
}

pub fn run_selected(ids: &[usize]) -> Vec<CriterionReport> {
    ids.iter()
        .map(|id| match id {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(),
            other => CriterionReport {
                id: *other,
                name: "unknown criterion",
                passed: false,
                detail: "the suite has criteria 1 through 8".to_string(),
                seconds: 0.0,
            },
        })
        .collect()
}
