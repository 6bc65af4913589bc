//! Cross-module invariants: oscillation algebra on random paths, operator
//! commutation under random data, oracle regularity, and the epsilon
//! monotonicity of the bound-check terms.

use pathwise::driver::{regularize_regular, Modulus};
use pathwise::harness::{bound_check, build_driver, build_scheme, DriverFamily, HarnessCfg};
use pathwise::problem::problem_by_id;
use pathwise::scheme::{apply_step, random_admissible_step, SchemeKind};
use pathwise::{Grid1D, GridFunction, PiecewisePath};
use proptest::prelude::*;

fn arb_path() -> impl Strategy<Value = PiecewisePath> {
    (2usize..12, proptest::collection::vec(-1.0f64..1.0, 12))
        .prop_map(|(n, vals)| {
            let mut pts = vec![(0.0, 0.0)];
            for k in 1..=n {
                pts.push((k as f64 / n as f64, vals[k % vals.len()]));
            }
            PiecewisePath::from_breakpoints(pts).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn osc_superadditive_and_monotone_segments(path in arb_path(), s in 0.0f64..1.0, t in 0.0f64..1.0, u in 0.0f64..1.0) {
        let mut times = [s, t, u];
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let [s, t, u] = times;
        let whole = path.osc(s, u).unwrap();
        let split = path.osc(s, t).unwrap() + path.osc(t, u).unwrap();
        prop_assert!(whole <= split + 1e-12);
    }

    #[test]
    fn osc_equals_increment_on_monotone_segments(slope in -2.0f64..2.0, a in 0.0f64..0.5, b in 0.5f64..1.0) {
        let path = PiecewisePath::linear(slope, 1.0).unwrap();
        let osc = path.osc(a, b).unwrap();
        let inc = (path.eval_scalar(b).unwrap() - path.eval_scalar(a).unwrap()).abs();
        prop_assert!((osc - inc).abs() <= 1e-12);
    }

    #[test]
    fn steps_commute_with_constants_and_shifts(
        seed in 0u64..500,
        k in -3.0f64..3.0,
        j in 1isize..31,
    ) {
        let grid = Grid1D::new(2.0, 32).unwrap();
        let problem = problem_by_id("eikonal_sawtooth").unwrap();
        let spec = build_scheme(&problem, SchemeKind::LfFirstOrder, 1.0).unwrap();
        let mut rng = pathwise::rng::seeded_rng(seed);
        use rand::Rng;
        let u = GridFunction::new(
            grid,
            (0..grid.nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let params = random_admissible_step(&spec, grid.spacing(), &mut rng);
        let stepped = apply_step(&spec, &u, params).unwrap();
        let shifted = apply_step(&spec, &u.shifted(k), params).unwrap();
        prop_assert!(shifted.sup_distance(&stepped.shifted(k)) <= 1e-12);
        let rotated = apply_step(&spec, &u.rotate(j), params).unwrap();
        prop_assert!(rotated.sup_distance(&stepped.rotate(j)) <= 1e-12);
    }
}

#[test]
fn oracle_snapshots_preserve_lipschitz_constant() {
    let problem = problem_by_id("eikonal_sawtooth").unwrap();
    let grid = Grid1D::new(2.0, 256).unwrap();
    for seed in 0..5 {
        let w = pathwise::sample_brownian(seed, 0.5, 1e-3).unwrap();
        let run = pathwise::pathwise_oracle(
            grid,
            &problem.initial,
            &w,
            &problem.hamiltonian,
            &[0.1, 0.25, 0.5],
            None,
        )
        .unwrap();
        for snap in &run.snapshots {
            assert!(
                snap.discrete_lipschitz() <= problem.initial.lipschitz_constant() + 1e-10,
                "seed {seed}: oracle snapshot Lipschitz {}",
                snap.discrete_lipschitz()
            );
        }
    }
}

#[test]
fn oracle_positive_segments_dilate_negative_erode() {
    let problem = problem_by_id("eikonal_sawtooth").unwrap();
    let grid = Grid1D::new(2.0, 128).unwrap();
    let u0 = GridFunction::sample(grid, |x| problem.initial.eval(x)).unwrap();
    let star = problem.hamiltonian.legendre().unwrap();
    for c in [0.05, 0.11, 0.2] {
        let up = pathwise::lax_oleinik_segment(&u0, c, star.as_ref()).unwrap();
        let down = pathwise::lax_oleinik_segment(&u0, -c, star.as_ref()).unwrap();
        for i in 0..grid.nodes() as isize {
            assert!(up.value(i) >= u0.value(i) - 1e-12);
            assert!(down.value(i) <= u0.value(i) + 1e-12);
        }
    }
}

#[test]
fn bound_terms_are_monotone_in_epsilon() {
    let problem = problem_by_id("eikonal_sawtooth").unwrap();
    let spec = build_scheme(&problem, SchemeKind::LfFirstOrder, 1.0).unwrap();
    let grid = Grid1D::new(2.0, 64).unwrap();
    let h = grid.spacing();
    let (partition, zeta) =
        pathwise::make_admissible_path(11, 32, spec.lambda0, h, 0.5).unwrap();
    let eps_list: Vec<f64> = (0..6).map(|k| 1e-3 * 4f64.powi(k)).collect();
    let records = bound_check(
        &problem,
        &spec,
        grid,
        &zeta,
        &partition,
        &eps_list,
        2.0,
        &HarnessCfg::default(),
        0,
    )
    .unwrap();
    for w in records.windows(2) {
        let a = &w[0];
        let b = &w[1];
        assert!(b.epsilon > a.epsilon);
        // (1/eps) sum dt^2 decreases, penalization does not decrease.
        assert!(b.sum_dt_squared / b.epsilon <= a.sum_dt_squared / a.epsilon + 1e-15);
        assert!(b.penalization >= a.penalization - 1e-12);
    }
}

#[test]
fn every_driver_family_passes_its_own_cfl() {
    let cfg = HarnessCfg {
        horizon: 0.5,
        lambda_frac: 0.9,
        dt_fine: 1e-3,
        probes: 4,
        seed_offset: 0,
    };
    let lambda0 = 1.0;
    let h = 1.0 / 128.0;
    let families = vec![
        DriverFamily::FixedPath {
            path: PiecewisePath::linear(1.0, 0.5).unwrap(),
            modulus: Modulus::lipschitz(1.0),
        },
        DriverFamily::BrownianRegular,
        DriverFamily::BrownianStopping,
        DriverFamily::RandomWalk,
    ];
    for family in &families {
        for seed in 0..4 {
            let build = build_driver(family, h, lambda0, seed, &cfg).unwrap();
            let report =
                pathwise::check_cfl(&build.path, &build.partition, h, lambda0).unwrap();
            assert!(
                report.admissible,
                "{}: seed {seed} worst ratio {}",
                family.id(),
                report.worst_ratio
            );
        }
    }
}

#[test]
fn regularized_path_converges_uniformly_to_driver() {
    // Uniform convergence as rho -> 0, quantified by the block-oscillation
    // bound: sup |W_h - W| <= max_k osc(W, kM rho, (k+1)M rho).
    let w = pathwise::sample_brownian(5, 0.5, 1e-4).unwrap();
    let mut block_oscs = Vec::new();
    for rho in [1.0 / 64.0, 1.0 / 1024.0, 1.0 / 16384.0] {
        let (_, wh) = regularize_regular(&w, rho, 0.5).unwrap();
        let dist = wh.sup_distance(&w).unwrap();
        let bt = wh.times();
        let mut worst_block = 0.0f64;
        for k in 0..bt.len() - 1 {
            worst_block = worst_block.max(w.osc(bt[k], bt[k + 1]).unwrap());
        }
        assert!(
            dist <= worst_block + 1e-12,
            "rho = {rho}: distance {dist} above block oscillation {worst_block}"
        );
        block_oscs.push(worst_block);
    }
    assert!(
        *block_oscs.last().unwrap() < 0.7 * block_oscs[0],
        "block oscillation must shrink as rho -> 0: {block_oscs:?}"
    );
}
