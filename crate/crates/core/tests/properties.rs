//! Randomized structural properties. These complement the seeded unit
//! tests: instead of one fixture, each law here must survive arbitrary
//! grids, profiles, and states from the strategy ranges below.

use pairhop::grid::{FiniteConfig, TorusGrid};
use pairhop::kernel::{balanced_affinity, FactorizedKernel, Kernel, KernelTables};
use pairhop::ktransform::{k_inverse, k_transform};
use pairhop::state::{c_t, horizon, lp_exponent, rho, HierState};
use pairhop::tensor::LevelTensor;
use proptest::prelude::*;

fn grid(m: usize) -> TorusGrid<f64> {
    TorusGrid::line(m).unwrap()
}

/// Positive, reflection-even profile with a couple of harmonics.
fn even_profile(m: usize, a1: f64, a2: f64) -> Vec<f64> {
    (0..m)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            1.0 + a1 * th.cos() + a2 * (2.0 * th).cos()
        })
        .collect()
}

fn symmetric_state(g: &TorusGrid<f64>, n_max: usize, raw: &[f64]) -> HierState<f64> {
    let mut cursor = 0usize;
    let levels = (0..=n_max)
        .map(|n| {
            let mut t = LevelTensor::from_fn(g, n, |_| {
                let x = raw[cursor % raw.len()];
                cursor += 1;
                x
            });
            t.symmetrize();
            t
        })
        .collect();
    HierState::new(*g, levels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // convolution is commutative and reflection is an involution
    #[test]
    fn convolution_commutes(
        m in 2usize..9,
        f in proptest::collection::vec(-2.0..2.0f64, 9),
        g in proptest::collection::vec(-2.0..2.0f64, 9),
    ) {
        let grid = grid(m);
        let f = &f[..m];
        let g = &g[..m];
        let fg = grid.convolve(f, g);
        let gf = grid.convolve(g, f);
        for (a, b) in fg.iter().zip(&gf) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let rr = grid.reflect(&grid.reflect(f));
        prop_assert_eq!(&rr[..], f);
    }

    // locate is the left inverse of center, and wraps whole periods away
    #[test]
    fn locate_inverts_center(m in 2usize..17, cell_seed in 0usize..1000, shift in -3i32..4) {
        let grid = grid(m);
        let cell = cell_seed % m;
        let mut x = grid.center(cell);
        x[0] += shift as f64 * grid.side();
        prop_assert_eq!(grid.locate(&x), cell);
    }

    // the combinatorial transform and its alternating inverse cancel
    #[test]
    fn k_transform_roundtrips(
        m in 2usize..6,
        raw in proptest::collection::vec(-1.0..1.0f64, 64),
        picks in proptest::collection::vec(0usize..5, 3),
    ) {
        let g = grid(m);
        let state = symmetric_state(&g, 2, &raw);
        let mut cells: Vec<usize> = picks.iter().map(|p| p % m).collect();
        cells.sort_unstable();
        cells.dedup();
        let config = FiniteConfig::new(cells).unwrap();
        let kg = |c: &FiniteConfig| k_transform(&state, c).unwrap();
        let back = k_inverse(kg, &config).unwrap();
        let direct = pairhop::ktransform::eval_on_config(&state, &config);
        prop_assert!((back - direct).abs() <= 1e-10);
    }

    // the transform of a product state is the product of (1 + f): in
    // particular it is positive whenever f > -1
    #[test]
    fn product_state_transform_is_a_product(
        m in 2usize..6,
        f in proptest::collection::vec(-0.9..3.0f64, 5),
        picks in proptest::collection::vec(0usize..5, 3),
    ) {
        let g = grid(m);
        let f = &f[..m];
        let state = lp_exponent(&g, f, 3).unwrap();
        let mut cells: Vec<usize> = picks.iter().map(|p| p % m).collect();
        cells.sort_unstable();
        cells.dedup();
        let config = FiniteConfig::new(cells.clone()).unwrap();
        let got = k_transform(&state, &config).unwrap();
        let want: f64 = cells.iter().map(|&c| 1.0 + f[c]).product();
        prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0));
        prop_assert!(got > 0.0);
    }

    // weight bookkeeping: growing a weight to time t and decaying it back
    // is the identity, and the horizon is exactly where growth diverges
    #[test]
    fn weight_scale_roundtrips(c0 in 0.05..4.0f64, b in 0.05..4.0f64, frac in 0.01..0.95f64) {
        let t = frac * horizon(c0, b);
        let grown = c_t(t, c0, b).unwrap();
        prop_assert!((rho(t, grown, b) - c0).abs() <= 1e-12 * c0);
        prop_assert!(c_t(horizon(c0, b) * 1.01, c0, b).is_err());
    }

    // symmetrization is an idempotent projection onto permutation-invariant
    // tensors
    #[test]
    fn symmetrize_is_an_idempotent_projection(
        m in 2usize..6,
        raw in proptest::collection::vec(-1.0..1.0f64, 36),
    ) {
        let g = grid(m);
        let mut cursor = 0usize;
        let mut t = LevelTensor::from_fn(&g, 2, |_| {
            let x = raw[cursor % raw.len()];
            cursor += 1;
            x
        });
        t.symmetrize();
        let once = t.clone();
        t.symmetrize();
        for (a, b) in once.values().iter().zip(t.values()) {
            prop_assert!((a - b).abs() <= 1e-14);
        }
        for i in 0..m {
            for j in 0..m {
                let ij = once.values()[once.flat(&[i, j])];
                let ji = once.values()[once.flat(&[j, i])];
                prop_assert!((ij - ji).abs() <= 1e-14);
            }
        }
    }

    // the balanced partner construction hits the rate-exchange equality for
    // any admissible even profile, and the full condition report agrees
    #[test]
    fn balanced_partner_balances(m in 4usize..13, a1 in 0.0..0.6f64, a2 in 0.0..0.25f64) {
        let g = grid(m);
        let a = even_profile(m, a1, a2);
        let b = match balanced_affinity(&g, &a) {
            Ok(b) => b,
            // steep profiles can push the solved partner negative; that is
            // a documented refusal, not a failure of the law
            Err(_) => return Ok(()),
        };
        let fk = FactorizedKernel::new(g, 1.0, &a, &b).unwrap();
        let tables = KernelTables::build(Kernel::Factorized(fk));
        prop_assert!(tables.check_conditions().kinetic_ok(1e-9));
    }

    // pairing a product state against the normalized one-cell indicator
    // recovers the density value: the reconstruction principle at t = 0
    #[test]
    fn indicator_pairing_reads_off_the_density(
        m in 2usize..7,
        f in proptest::collection::vec(0.05..0.9f64, 6),
        pick in 0usize..6,
    ) {
        let g = grid(m);
        let f = &f[..m];
        let cell = pick % m;
        let k = lp_exponent(&g, f, 2).unwrap();
        let mut indicator = HierState::zeros(g, 2);
        let idx = indicator.level(1).flat(&[cell]);
        indicator.level_mut(1).values_mut()[idx] = 1.0 / g.cell_measure();
        let got = indicator.pairing(&k).unwrap();
        prop_assert!((got - f[cell]).abs() <= 1e-12);
    }
}
