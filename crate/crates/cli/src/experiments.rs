//! The experiment bodies. Each takes the resolved config, writes its
//! artifacts into a content-addressed run directory, prints a short
//! summary, and reports whether every numerical check passed.

use crate::config::ExperimentConfig;
use crate::out::{self, num, quoted, Csv, RunDir};
use crate::setup;
use pairhop::fixtures;
use pairhop::{
    density_to_correlation, estimate_correlations, evolve_density_expm, evolve_expm, horizon,
    level_growth_bound, lp_exponent, rho, run_ensemble, run_selected, sample_iid_n,
    sample_poisson_initial, solve_hierarchy, solve_picard, solve_rk, vlasov_convergence_study,
    write_state_bundle, CorrelationEvolution, Error, Grid64, KernelTables, KineticConfig, Result,
    SolveOptions,
};

struct Ctx {
    grid: Grid64,
    tables: KernelTables<f64>,
    dir: RunDir,
}

fn prepare(cfg: &ExperimentConfig, experiment: &str) -> Result<Ctx> {
    let grid = setup::grid(cfg)?;
    let tables = setup::tables(cfg, &grid)?;
    let dir = out::prepare(cfg, experiment)?;
    Ok(Ctx { grid, tables, dir })
}

fn done(dir: &RunDir, passed: bool) -> Result<bool> {
    println!("wrote {}", dir.path.display());
    Ok(passed)
}

/// Relative tolerance for the structural kernel conditions.
const COND_TOL: f64 = 1e-9;

pub fn bounds(cfg: &ExperimentConfig) -> Result<bool> {
    let ctx = prepare(cfg, "bounds")?;
    let b = ctx.tables.bounds();
    let mut csv = Csv::new(
        &[
            "rate constants of the pair-jump kernel: c1 = sup a1 (total jump rate of a pair), c2 = sup a2 (total arrival rate onto a pair), c3 = sup_x int a1(x,y) dy, c4 = sup_x int a2(x,y) dy",
            "a-rate = (c1 + c2)/2 bounds the in-level generator norm by n(n-1) a-rate; b-rate = c3 + c4 bounds the level coupling by n(n-1) b-rate and drives the weight decay rho(t, C) = C/(1 + b-rate C t)",
        ],
        &["constant", "value"],
    );
    for (name, value) in [
        ("c1", b.c1),
        ("c2", b.c2),
        ("c3", b.c3),
        ("c4", b.c4),
        ("a-rate", b.a_rate()),
        ("b-rate", b.b_rate()),
    ] {
        csv.row(&[name.to_string(), num(value)]);
    }
    csv.write(&ctx.dir.path, "bounds.csv")?;

    let r = ctx.tables.check_conditions();
    let tol = r.tol(COND_TOL);
    let mut rows: Vec<(&str, f64)> = vec![
        ("symmetry", r.symmetry.magnitude),
        ("pair-exchange", r.pair_exchange.magnitude),
        ("dominance", r.dominance.magnitude),
        ("rate-exchange", r.rate_exchange.magnitude),
        ("rate-exchange-mirror", r.rate_exchange_mirror.magnitude),
    ];
    if let Some((first, second)) = &r.split {
        rows.push(("split-first", first.magnitude));
        rows.push(("split-second", second.magnitude));
    }
    let mut cond = Csv::new(
        &[
            "structural conditions of the kernel: symmetry is the departure/arrival exchange c(x1,x2,y1,y2) = c(y1,y2,x1,x2), pair-exchange the symmetry within each pair, dominance a2 <= a1, rate-exchange the one-sided bound int c(y,u1,x,u2) du <= a1(x,y) (mirror: first slots swapped), split the same pair of bounds on the halves of a product kernel",
            "excess = largest signed violation over cell tuples; the condition holds when excess <= tolerance = 1e-9 max(c1, c2)",
        ],
        &["condition", "excess", "holds"],
    );
    for (name, excess) in &rows {
        cond.row(&[name.to_string(), num(*excess), num(*excess <= tol)]);
    }
    cond.write(&ctx.dir.path, "conditions.csv")?;

    let model_ok = r.symmetric(COND_TOL) && r.pair_exchange.holds(tol) && r.dominated(COND_TOL);
    println!(
        "model conditions (symmetry, pair exchange, dominance): {}",
        if model_ok { "hold" } else { "VIOLATED" }
    );
    println!(
        "kinetic fixed-point preconditions: {}",
        if r.kinetic_ok(COND_TOL) { "hold" } else { "not satisfied" }
    );
    done(&ctx.dir, model_ok)
}

pub fn evolve_hierarchy(cfg: &ExperimentConfig) -> Result<bool> {
    let ctx = prepare(cfg, "evolve-hierarchy")?;
    let mut rng = fixtures::rng(cfg.run.seed);
    let c0 = cfg.initial.c0.unwrap_or(1.0);
    let mut g0 = fixtures::random_symmetric_state(&ctx.grid, cfg.initial.n_max, &mut rng);
    let s = g0.norm_l(c0);
    if s > 0.0 {
        g0.scale(1.0 / s);
    }
    let b_rate = ctx.tables.bounds().b_rate();
    let opts = SolveOptions { eps: cfg.run.eps, substep_factor: 0.05 };
    let path = solve_hierarchy(&ctx.tables, &g0, cfg.run.t, cfg.run.steps, opts)?;

    let norms0: Vec<f64> =
        (0..=g0.n_max()).map(|n| g0.level(n).norm_x(&ctx.grid)).collect();
    let initial = g0.norm_l(c0);
    let mut csv = Csv::new(
        &[
            "norms of a seeded random hierarchy state along the flow, one row per (snapshot, level)",
            "X_n-norm = per-level norm of G_t; bound = its a-priori ceiling sum_k (t b-rate)^(n-k) binom(n,k) (n-1)!/(k-1)! X_k-norm(0)",
            &format!("weighted-norm = sup_n X_n-norm / (n! rho^n) at rho(t, C) = C/(1 + b-rate C t) with C = {c0}; contraction-margin = its initial value minus the current one, nonnegative when the flow contracts"),
        ],
        &["t", "n", "X_n-norm", "bound", "weighted-norm", "contraction-margin"],
    );
    let mut bounds_ok = true;
    let mut contraction_ok = true;
    for (k, state) in path.states().iter().enumerate() {
        let t = path.time(k);
        let weighted = state.norm_l(rho(t, c0, b_rate));
        let margin = initial - weighted;
        if weighted > initial * (1.0 + 1e-6) {
            contraction_ok = false;
        }
        for n in 0..=g0.n_max() {
            let x_norm = state.level(n).norm_x(&ctx.grid);
            let bound = level_growth_bound(b_rate, t, &norms0, n)?;
            if x_norm > bound * (1.0 + 1e-6) {
                bounds_ok = false;
            }
            csv.row(&[num(t), num(n), num(x_norm), num(bound), num(weighted), num(margin)]);
        }
    }
    csv.write(&ctx.dir.path, "norms.csv")?;
    write_state_bundle(&ctx.dir.path.join("final-state"), path.final_state())?;

    println!(
        "level norms within their growth bounds: {}",
        if bounds_ok { "yes" } else { "NO" }
    );
    println!(
        "weighted norm never exceeds its initial value: {}",
        if contraction_ok { "yes" } else { "NO" }
    );
    done(&ctx.dir, bounds_ok && contraction_ok)
}

pub fn correlations(cfg: &ExperimentConfig) -> Result<bool> {
    let ctx = prepare(cfg, "correlations")?;
    let p0 = setup::initial_density(cfg, &ctx.grid)?;
    let c0 = setup::resolve_c0(cfg.initial.c0, &p0, "initial.c0")?;
    let k0 = lp_exponent(&ctx.grid, &p0, cfg.initial.n_max)?;
    let ev = CorrelationEvolution::new(&ctx.tables, k0, c0)?;
    let times = cfg.run.times.clone().unwrap_or_else(|| vec![cfg.run.t]);
    let opts = SolveOptions { eps: cfg.run.eps, substep_factor: 0.05 };

    let tail_note = "tail = a-priori bound on the contribution of levels above the stored depth, geometric in the weighted norms of the indicator observable and the initial correlations";
    let mut k1 = Csv::new(
        &[
            "one-point correlation k_t reconstructed by duality: value = cell average of k_t, one forward hierarchy solve per cell against a normalized indicator observable",
            tail_note,
        ],
        &["t", "cell", "value", "tail"],
    );
    let mut k2 = Csv::new(
        &[
            "two-point correlation k_t on ordered cell pairs, reconstructed like the one-point table from pair indicators",
            tail_note,
        ],
        &["t", "i", "j", "value", "tail"],
    );
    let v = ctx.grid.n_cells();
    for &t in &times {
        let (one, tail1) = ev.reconstruct_k(t, 1, cfg.run.steps, opts)?;
        for cell in 0..v {
            k1.row(&[num(t), num(cell), num(one.values()[cell]), num(tail1)]);
        }
        if cfg.initial.n_max >= 2 {
            let (two, tail2) = ev.reconstruct_k(t, 2, cfg.run.steps, opts)?;
            for i in 0..v {
                for j in 0..v {
                    k2.row(&[num(t), num(i), num(j), num(two.values()[two.flat(&[i, j])]), num(tail2)]);
                }
            }
        }
    }
    k1.write(&ctx.dir.path, "k1.csv")?;
    if cfg.initial.n_max >= 2 {
        k2.write(&ctx.dir.path, "k2.csv")?;
    } else {
        println!("skipping k2.csv: initial.n_max < 2 stores no pair level");
    }
    done(&ctx.dir, true)
}

/// Dense matrix exponentials on the top particle level cap the oracle size.
const ORACLE_DIM_CAP: usize = 1024;

pub fn verify_duality(cfg: &ExperimentConfig) -> Result<bool> {
    let ctx = prepare(cfg, "verify-duality")?;
    let n = cfg.initial.particles;
    let v = ctx.grid.n_cells();
    if v.checked_pow(n as u32).map_or(true, |d| d > ORACLE_DIM_CAP) {
        return Err(Error::precondition(
            "duality oracle",
            &format!("top-level dimension cells^particles at most {ORACLE_DIM_CAP} for the dense matrix exponential"),
            format!("{v}^{n}"),
        ));
    }
    let b_rate = ctx.tables.bounds().b_rate();
    let t_ref = horizon(1.0, b_rate);
    let times = cfg
        .run
        .times
        .clone()
        .unwrap_or_else(|| vec![0.1, 0.5 * t_ref, 0.9 * t_ref]);
    let tol = 1e-8;
    let mut rng = fixtures::rng(cfg.run.seed);
    let mut csv = Csv::new(
        &[
            "duality identity: pairing an observable's forward flow with the initial correlations equals pairing the initial observable with the evolved correlations",
            "forward = <<G0, k_t>> with k_t from the matrix-exponential density evolution; backward = <<G_t, k0>> with G_t from the matrix-exponential observable flow; pass means |forward - backward| <= 1e-8",
        ],
        &["pair", "t", "forward", "backward", "difference", "pass"],
    );
    let mut all_ok = true;
    println!("{:>4} {:>10} {:>14} {:>14} {:>10}  result", "pair", "t", "forward", "backward", "diff");
    for pair in 0..cfg.run.pairs {
        let g0 = fixtures::random_symmetric_state(&ctx.grid, n, &mut rng);
        let r0 = fixtures::random_particle_density(&ctx.grid, n, &mut rng)?;
        let k0 = density_to_correlation(&r0)?;
        for &t in &times {
            let rt = evolve_density_expm(&ctx.tables, &r0, t)?;
            let forward = g0.pairing(&density_to_correlation(&rt)?)?;
            let gt = evolve_expm(&ctx.tables, &g0, t, 1.0)?;
            let backward = gt.pairing(&k0)?;
            let diff = (forward - backward).abs();
            let ok = diff <= tol;
            all_ok &= ok;
            println!(
                "{pair:>4} {t:>10.6} {forward:>14.8} {backward:>14.8} {diff:>10.2e}  {}",
                if ok { "pass" } else { "FAIL" }
            );
            csv.row(&[num(pair), num(t), num(forward), num(backward), num(diff), num(ok)]);
        }
    }
    csv.write(&ctx.dir.path, "duality.csv")?;
    println!(
        "duality identity across {} pairs and {} times: {}",
        cfg.run.pairs,
        times.len(),
        if all_ok { "pass" } else { "FAIL" }
    );
    done(&ctx.dir, all_ok)
}

pub fn vlasov_study(cfg: &ExperimentConfig) -> Result<bool> {
    let ctx = prepare(cfg, "vlasov-study")?;
    let mut rng = fixtures::rng(cfg.run.seed);
    let mut g0 = fixtures::random_symmetric_state(&ctx.grid, cfg.initial.n_max, &mut rng);
    let s = g0.norm_l(1.0);
    if s > 0.0 {
        g0.scale(1.0 / s);
    }
    let rows = vlasov_convergence_study(
        &ctx.tables,
        &g0,
        cfg.run.t,
        &cfg.run.epsilons,
        0.5,
        cfg.run.steps,
        0.025,
    )?;
    let mut csv = Csv::new(
        &[
            "distance between the epsilon-scaled hierarchy flow and its scaling limit (in-level generator switched off), for a seeded random initial state of unit weighted norm",
            "sup-error = largest weighted-scale distance over the shared time grid, weight 0.5; ratio-to-prev = sup-error divided by the previous row's, near 0.5 under epsilon-halving when the deviation is linear in epsilon",
        ],
        &["epsilon", "sup-error", "ratio-to-prev"],
    );
    let mut prev: Option<f64> = None;
    for &(eps, err) in &rows {
        let ratio = match prev {
            Some(p) if p > 0.0 => num(err / p),
            _ => String::new(),
        };
        println!("epsilon {eps:>8}: sup error {err:.3e}");
        csv.row(&[num(eps), num(err), ratio]);
        prev = Some(err);
    }
    csv.write(&ctx.dir.path, "vlasov.csv")?;
    done(&ctx.dir, true)
}

pub fn kinetic(cfg: &ExperimentConfig) -> Result<bool> {
    let ctx = prepare(cfg, "kinetic")?;
    let p0 = setup::initial_density(cfg, &ctx.grid)?;
    let c_bound = setup::resolve_c0(cfg.run.c_bound, &p0, "run.c_bound")?;
    let mut kcfg = KineticConfig::new(c_bound, cfg.run.t);
    if let Some(dt) = cfg.run.dt {
        kcfg.dt = dt;
    }
    let path = if cfg.run.solver == "picard" {
        let (path, report) = solve_picard(&ctx.tables, &p0, &kcfg)?;
        println!(
            "picard: {} segments of length {:.4}, sweep counts {:?}",
            report.segment_iters.len(),
            report.upsilon,
            report.segment_iters
        );
        path
    } else {
        let (path, report) = solve_rk(&ctx.tables, &p0, &kcfg)?;
        println!("explicit stepper: half-step error estimate {:.3e}", report.step_error);
        path
    };

    let mut pt = Csv::new(
        &["kinetic solution p_t(cell): gain from pairs jumping in minus loss from pairs jumping out, one row per (node, cell)"],
        &["t", "cell", "value"],
    );
    let mut inv = Csv::new(
        &[&format!(
            "per-node invariants of the kinetic solution: mass = midpoint-rule integral of p_t, conserved by the symmetric kernel; min and max stay inside [0, C] with C = {c_bound}"
        )],
        &["t", "mass", "min", "max"],
    );
    let mut min_all = f64::INFINITY;
    let mut max_all = f64::NEG_INFINITY;
    for (k, row) in path.values().iter().enumerate() {
        let t = path.times()[k];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (cell, &value) in row.iter().enumerate() {
            pt.row(&[num(t), num(cell), num(value)]);
            lo = lo.min(value);
            hi = hi.max(value);
        }
        inv.row(&[num(t), num(path.mass(k)), num(lo), num(hi)]);
        min_all = min_all.min(lo);
        max_all = max_all.max(hi);
    }
    pt.write(&ctx.dir.path, "p_t.csv")?;
    inv.write(&ctx.dir.path, "invariants.csv")?;

    let range_ok = min_all >= -1e-10 && max_all <= c_bound + 1e-10;
    let drift = path.mass_drift();
    let drift_ok = drift <= 1e-8 * cfg.run.t + f64::EPSILON;
    println!(
        "solution stays in [0, C] with slack 1e-10: {} (range [{min_all:.3e}, {max_all:.6}])",
        if range_ok { "yes" } else { "NO" }
    );
    println!(
        "mass drift {:.3e} within 1e-8 t: {}",
        drift,
        if drift_ok { "yes" } else { "NO" }
    );
    done(&ctx.dir, range_ok && drift_ok)
}

pub fn mc(cfg: &ExperimentConfig) -> Result<bool> {
    let ctx = prepare(cfg, "mc")?;
    let p0 = setup::initial_density(cfg, &ctx.grid)?;
    let times = cfg.run.times.clone().unwrap_or_else(|| vec![cfg.run.t]);
    let n = cfg.initial.particles;
    let fixed = cfg.run.law == "fixed-n";
    // normalized shape for the fixed-size law; the poisson law reads p0 as
    // an intensity directly
    let q = if fixed { ctx.grid.normalized(&p0)? } else { Vec::new() };

    let mut k1 = Csv::new(
        &[
            "ensemble estimate of the one-point correlation: per replica, particle counts per cell divided by the cell measure; mean and standard error across replicas",
        ],
        &["t", "cell", "mean", "se"],
    );
    let mut k2 = Csv::new(
        &[
            "ensemble estimate of the two-point correlation on ordered cell pairs: ordered distinct-particle pairs per cell pair divided by the squared cell measure; mean and standard error across replicas",
        ],
        &["t", "i", "j", "mean", "se"],
    );
    let v = ctx.grid.n_cells();
    let mut counts_ok = true;
    for &t in &times {
        // the same seed at every snapshot time replays the same trajectories,
        // so rows at different t are consistent cuts of one ensemble
        let states = if fixed {
            run_ensemble(
                &ctx.tables,
                |r| sample_iid_n(&ctx.grid, &q, n, r),
                t,
                cfg.run.replicas,
                cfg.run.seed,
            )?
        } else {
            run_ensemble(
                &ctx.tables,
                |r| sample_poisson_initial(&ctx.grid, &p0, r),
                t,
                cfg.run.replicas,
                cfg.run.seed,
            )?
        };
        if fixed && states.iter().any(|s| s.n_particles() != n) {
            counts_ok = false;
        }
        let est = estimate_correlations(&ctx.grid, &states, t, cfg.run.seed)?;
        for cell in 0..v {
            k1.row(&[num(t), num(cell), num(est.k1_mean[cell]), num(est.k1_se[cell])]);
        }
        for i in 0..v {
            for j in 0..v {
                let idx = i * v + j;
                k2.row(&[num(t), num(i), num(j), num(est.k2_mean[idx]), num(est.k2_se[idx])]);
            }
        }
    }
    k1.write(&ctx.dir.path, "k1_mc.csv")?;
    k2.write(&ctx.dir.path, "k2_mc.csv")?;
    println!(
        "{} replicas per snapshot, law {}, seed {}",
        cfg.run.replicas, cfg.run.law, cfg.run.seed
    );
    if fixed {
        println!(
            "particle count conserved at {n} in every replica: {}",
            if counts_ok { "yes" } else { "NO" }
        );
    }
    done(&ctx.dir, counts_ok)
}

pub fn verify(cfg: &ExperimentConfig, criteria: Option<&str>) -> Result<bool> {
    let dir = out::prepare(cfg, "verify")?;
    let reports = match criteria {
        None => pairhop::run_all(),
        Some(list) => {
            let mut ids = Vec::new();
            for token in list.split(',') {
                let token = token.trim();
                ids.push(token.parse::<usize>().map_err(|_| {
                    Error::config(
                        "criteria",
                        format!("expected comma-separated criterion ids, got `{token}`"),
                    )
                })?);
            }
            run_selected(&ids)
        }
    };
    // no timing column: reruns of the same config must be byte-identical
    let mut csv = Csv::new(
        &["acceptance suite outcomes, one row per criterion; detail quotes the measured margins"],
        &["id", "name", "passed", "detail"],
    );
    for report in &reports {
        println!("{}", report.line());
        csv.row(&[
            num(report.id),
            report.name.to_string(),
            num(report.passed),
            quoted(&report.detail),
        ]);
    }
    csv.write(&dir.path, "verify.csv")?;
    let all = reports.iter().all(|r| r.passed);
    println!(
        "{}/{} criteria passed",
        reports.iter().filter(|r| r.passed).count(),
        reports.len()
    );
    done(&dir, all)
}
