use bbm_core::collision::{fit_solitons, run_collision, width, ExperimentConfig, FitGuess};
use bbm_core::integrator::conserved;
use bbm_core::solitons::{phi_c_at, soliton_energy_mass};
use bbm_core::{Grid, GridFunction};
use proptest::prelude::*;

fn pair_with_wake(grid: Grid) -> GridFunction {
    GridFunction::from_fn(grid, |x| {
        let wake = 1e-4 * (0.8 * x).sin() / ((x + 140.0) / 15.0).cosh();
        phi_c_at(2.0, x + 30.0) + phi_c_at(1.3, x - 60.0) + wake
    })
}

#[test]
fn fit_does_not_depend_on_window_size() {
    let grid = Grid::periodic(200.0, 8192).unwrap();
    let u = pair_with_wake(grid);
    let guesses = [
        FitGuess { center: -29.0, reach: 5.0 },
        FitGuess { center: 61.0, reach: 8.0 },
    ];
    let narrow = fit_solitons(&u, &guesses, 10.0).unwrap();
    let wide = fit_solitons(&u, &guesses, 20.0).unwrap();
    for (a, b) in narrow.iter().zip(&wide) {
        assert!(((a.speed_est - b.speed_est) / a.speed_est).abs() < 1e-6, "{a:?} {b:?}");
        assert!((a.center - b.center).abs() < 1e-6);
    }
}

#[test]
fn collision_run_invariants() {
    let r = run_collision(&ExperimentConfig::new(2.0, 1.3)).unwrap();
    assert!(r.mass_drift < 1e-7 && r.energy_drift < 1e-7, "{} {}", r.mass_drift, r.energy_drift);
    for s in &r.residue_norms {
        assert!(s.orthogonality[2].abs() < 1e-8 && s.orthogonality[3].abs() < 1e-8, "{s:?}");
        let control = s.control_residue.unwrap();
        assert!(control.h1 < 1e-6, "control run sheds {control:?}");
    }
    assert!(r.delta_c1 > 0.0 && r.delta_c2 > 0.0);
    assert!(r.gate_passed);
    assert!(r.c1_plus > r.config.c1 && r.c2_plus < r.config.c2);
    assert!(r.trace.len() > r.config.records);
    let json = serde_json::to_string(&r).unwrap();
    let back: bbm_core::collision::CollisionReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.c2_plus, r.c2_plus);
}

#[test]
fn reruns_are_bit_identical() {
    let cfg = ExperimentConfig {
        control_run: false,
        ..ExperimentConfig::new(2.0, 1.3)
    };
    let a = run_collision(&cfg).unwrap();
    let b = run_collision(&cfg).unwrap();
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    a.write_trace_csv(&mut ca).unwrap();
    b.write_trace_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fit_recovers_any_soliton(c in 1.1f64..3.0, x0 in -20.0f64..20.0, miss in -1.0f64..1.0) {
        let grid = Grid::periodic(100.0, 4096).unwrap();
        let u = GridFunction::from_fn(grid, |x| phi_c_at(c, x - x0));
        let f = fit_solitons(&u, &[FitGuess { center: x0 + miss, reach: 2.0 * width(c) }], 10.0).unwrap();
        prop_assert!((f[0].speed_est - c).abs() < 1e-9);
        prop_assert!((f[0].center - x0).abs() < 1e-8);
        prop_assert!((f[0].speed_est - 1.0 - 2.0 * f[0].amplitude / 3.0).abs() < 1e-3);
    }

    #[test]
    fn conserved_values_match_closed_forms(c in 1.05f64..4.0) {
        let grid = Grid::periodic(150.0, 8192).unwrap();
        let u = GridFunction::from_fn(grid, |x| phi_c_at(c, x));
        let (e, n) = conserved(&u);
        let (e0, n0) = soliton_energy_mass(c);
        prop_assert!(((e - e0) / e0).abs() < 1e-9);
        prop_assert!(((n - n0) / n0).abs() < 1e-9);
    }
}
