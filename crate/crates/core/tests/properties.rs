use dislo_core::barriers::{check_exponents, least_k0, least_k1, select_exponents};
use dislo_core::harness::{energy_monotone, trend_decreasing};
use dislo_core::io::{read_snapshot, read_table_csv, write_snapshot, write_table_csv, SnapshotMeta};
use dislo_core::layer::LayerProfile;
use dislo_core::ode::{integrate, Orientation, ParticleState};
use dislo_core::potential::PotentialSpec;
use dislo_core::solver::{init_superposition, track_crossings, ExperimentConfig, SolverConfig, Stepper};
use proptest::prelude::*;
use std::f64::consts::PI;

fn ordered_centers(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, n).prop_map(|gaps| {
        let mut z = Vec::with_capacity(gaps.len());
        let mut x = -1.5;
        for g in gaps {
            x += g;
            z.push(x);
        }
        z
    })
}

fn small_stepper(eps: f64, a: f64, tol: f64) -> (ExperimentConfig, Stepper) {
    let mut cfg = ExperimentConfig::standard(eps, a, vec![-0.4, 0.4], 0.1, 0.05);
    cfg.domain.lx = 6.0;
    cfg.domain.ly = 6.0;
    cfg.grid.h_max = Some(1.0);
    let grid = cfg.build_grid().unwrap();
    let st = Stepper::new(&grid, eps, a, cfg.dt(), SolverConfig { tol, max_iter: 500 }).unwrap();
    (cfg, st)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selected_exponents_are_feasible(a in 0.1f64..5.0, delta in 0.001f64..0.5) {
        let e = select_exponents(a, delta, 1.0).unwrap();
        prop_assert!(check_exponents(&e).all_passed());
        prop_assert_eq!(e.k0, least_k0(e.b));
        prop_assert_eq!(e.k1, least_k1(a));
        prop_assert!(e.k0 == 1 || 1.0 - (e.k0 as f64) * e.b > 0.0);
        prop_assert!(e.k1 == 0 || (e.k1 as f64) * a / 2.0 <= 1.0);
    }

    #[test]
    fn potential_is_periodic(u in -5.0f64..5.0, k in -3i32..3) {
        let w = PotentialSpec::sinusoidal();
        let s = u + k as f64;
        prop_assert!((w.w(s) - w.w(u)).abs() < 1e-12);
        prop_assert!((w.dw(s) - w.dw(u)).abs() < 1e-12);
        prop_assert!(w.w(u) >= -1e-15);
    }

    #[test]
    fn csv_round_trip_is_bit_exact(rows in prop::collection::vec(prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 3), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let header: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        write_table_csv(&p, &header, &rows).unwrap();
        let (h, back) = read_table_csv(&p).unwrap();
        prop_assert_eq!(h, header);
        prop_assert_eq!(back.len(), rows.len());
        for (r, b) in rows.iter().zip(&back) {
            for (x, y) in r.iter().zip(b) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn snapshot_round_trip(values in prop::collection::vec(-1e3f64..1e3, 6)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let meta = SnapshotMeta {
            shape: vec![3, 2],
            dtype: "float64-le".into(),
            time: 0.5,
            eps: 0.1,
            a: 1.0,
            x: vec![-1.0, 0.0, 1.0],
            y: vec![0.0, 1.0],
        };
        write_snapshot(&p, &values, &meta).unwrap();
        let (v, m) = read_snapshot(&p).unwrap();
        prop_assert_eq!(v, values);
        prop_assert_eq!(m, meta);
    }

    #[test]
    fn strictly_decreasing_sequences_pass_trend(v in prop::collection::vec(1e-6f64..1.0, 2..6), scale in 0.1f64..10.0) {
        let mut v = v;
        v.sort_by(|a, b| b.total_cmp(a));
        v.dedup();
        prop_assert!(trend_decreasing(&v, 0.0).0);
        let scaled: Vec<f64> = v.iter().map(|x| x * scale).collect();
        prop_assert_eq!(trend_decreasing(&v, 0.2).0, trend_decreasing(&scaled, 0.2).0);
        let rev: Vec<f64> = v.iter().rev().copied().collect();
        if rev.len() >= 3 {
            prop_assert!(!trend_decreasing(&rev, 0.2).0);
        }
    }

    #[test]
    fn energy_monotone_accepts_non_increasing(v in prop::collection::vec(0.0f64..10.0, 2..30)) {
        let mut v = v;
        v.sort_by(|a, b| b.total_cmp(a));
        prop_assert!(energy_monotone(&v, 0.0).0);
    }

    #[test]
    fn crossings_shift_with_the_trace(centers in ordered_centers(3), steps in -40i32..40) {
        let h = 0.01;
        let xs: Vec<f64> = (0..1001).map(|k| -5.0 + k as f64 * h).collect();
        let s = steps as f64 * h;
        let eps = 0.1;
        let trace = |shift: f64| -> Vec<f64> {
            xs.iter()
                .map(|&x| centers.iter().map(|z| 0.5 + ((x - shift - z) / eps).atan() / PI).sum())
                .collect()
        };
        let c0 = track_crossings(&trace(0.0), &xs, 3).unwrap();
        let c1 = track_crossings(&trace(s), &xs, 3).unwrap();
        for (a, b) in c0.iter().zip(&c1) {
            prop_assert!((b - a - s).abs() < 1e-6, "{} {} {}", a, b, s);
        }
    }

    #[test]
    fn ode_is_translation_equivariant(centers in ordered_centers(3), c in -2.0f64..2.0) {
        let c0 = 2.0 * PI;
        let a = integrate(&ParticleState::new(centers.clone()).unwrap(), c0, 0.0, Orientation::None, 0.2, 1e-10).unwrap();
        let moved: Vec<f64> = centers.iter().map(|z| z + c).collect();
        let b = integrate(&ParticleState::new(moved).unwrap(), c0, 0.0, Orientation::None, 0.2, 1e-10).unwrap();
        for t in [0.05, 0.1, 0.2] {
            let (za, zb) = (a.positions_at(t).unwrap(), b.positions_at(t).unwrap());
            for (x, y) in za.iter().zip(&zb) {
                prop_assert!((y - x - c).abs() < 1e-6, "{}", (y - x - c).abs());
            }
        }
    }

    #[test]
    fn perturbed_systems_bracket_the_unperturbed_one(centers in ordered_centers(2), delta in 0.001f64..0.1) {
        let c0 = 2.0 * PI;
        let ic = ParticleState::new(centers).unwrap();
        let mid = integrate(&ic, c0, 0.0, Orientation::None, 0.3, 1e-10).unwrap();
        let up = integrate(&ic, c0, delta, Orientation::Sub, 0.3, 1e-10).unwrap();
        let lo = integrate(&ic, c0, delta, Orientation::Super, 0.3, 1e-10).unwrap();
        for t in [0.0, 0.1, 0.3] {
            let (m, u, l) = (mid.positions_at(t).unwrap(), up.positions_at(t).unwrap(), lo.positions_at(t).unwrap());
            for i in 0..m.len() {
                prop_assert!(l[i] < m[i] && m[i] < u[i]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn ordering_persists(eps in 0.25f64..0.35, a in 0.5f64..2.0, lift in 0.0f64..0.5) {
        let (cfg, st) = small_stepper(eps, a, 1e-10);
        let grid = cfg.build_grid().unwrap();
        let layer = LayerProfile::explicit();
        let pot = PotentialSpec::sinusoidal();
        let mut lo = init_superposition(&cfg.centers, eps, a, &layer, &grid).unwrap().values;
        let mut hi = init_superposition(&[-0.45, 0.35], eps, a, &layer, &grid).unwrap().values;
        hi.iter_mut().for_each(|v| *v += lift);
        for _ in 0..20 {
            st.advance(&mut lo, &pot).unwrap();
            st.advance(&mut hi, &pot).unwrap();
            let gap = lo.iter().zip(&hi).map(|(l, h)| l - h).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(gap <= 1e-8, "{}", gap);
        }
    }

    #[test]
    fn integer_shift_commutes_with_stepping(eps in 0.25f64..0.4, a in 0.5f64..2.0, k in -2i32..3) {
        let (cfg, st) = small_stepper(eps, a, 1e-13);
        let grid = cfg.build_grid().unwrap();
        let pot = PotentialSpec::sinusoidal();
        let mut u = init_superposition(&cfg.centers, eps, a, &LayerProfile::explicit(), &grid).unwrap().values;
        let mut v: Vec<f64> = u.iter().map(|x| x + k as f64).collect();
        let mut energy = vec![st.energy(&u, &pot)];
        for _ in 0..10 {
            st.advance(&mut u, &pot).unwrap();
            st.advance(&mut v, &pot).unwrap();
            energy.push(st.energy(&u, &pot));
        }
        let err = u.iter().zip(&v).map(|(x, y)| (y - x - k as f64).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-8, "{}", err);
        prop_assert!(energy_monotone(&energy, 1e-6).0);
    }

    #[test]
    fn config_json_round_trip(eps in 0.05f64..0.5, a in 0.1f64..4.0, t in 0.1f64..2.0) {
        let cfg = ExperimentConfig::standard(eps, a, vec![-0.5, 0.5], t, t / 4.0);
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(cfg.hash().len(), 16);
    }
}
