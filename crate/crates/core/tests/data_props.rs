use std::f64::consts::PI;

use jetsym::jetdata::{estimate_jet, JetOptions};
use jetsym::pdegen::{builtin_pde, generate, meta_for, simulate_ic, GenConfig, GridSpec, TrajectoryDataset};
use jetsym::symexpr::JetVar;
use proptest::prelude::*;

fn small(nx: usize, nt: usize) -> GridSpec {
    GridSpec { length: 20.0, nx, t_final: 0.5, nt, substeps: 1 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generation_is_deterministic_per_ic(seed in 0u64..1000, n_ics in 1usize..4) {
        let pde = builtin_pde("burgers").unwrap();
        let cfg = GenConfig { grid: small(32, 20), n_f: 5, n_ics, seed, ic_scale: 1.0 };
        let a = generate(&pde, &cfg).unwrap();
        prop_assert_eq!(&a, &generate(&pde, &cfg).unwrap());
        // each initial condition draws from its own stream
        let last = simulate_ic(&pde, &cfg, n_ics - 1).unwrap();
        prop_assert_eq!(a.ic(n_ics - 1), &last[..]);
        let more = generate(&pde, &GenConfig { n_ics: n_ics + 1, ..cfg }).unwrap();
        prop_assert_eq!(&more.data[..a.data.len()], &a.data[..]);
    }

    #[test]
    fn heat_conserves_mass(seed in 0u64..1000, scale in 0.1f64..2.0) {
        let pde = builtin_pde("heat").unwrap();
        let cfg = GenConfig { grid: small(64, 50), n_f: 10, n_ics: 1, seed, ic_scale: scale };
        let traj = simulate_ic(&pde, &cfg, 0).unwrap();
        let first: f64 = traj[..64].iter().sum();
        let last: f64 = traj[49 * 64..].iter().sum();
        let norm: f64 = traj[..64].iter().map(|v| v.abs()).sum();
        prop_assert!((last - first).abs() <= 1e-10 * norm);
    }

    #[test]
    fn jets_follow_their_initial_condition(seed in 0u64..1000) {
        let pde = builtin_pde("kdv").unwrap();
        let cfg = GenConfig { grid: small(32, 12), n_f: 3, n_ics: 3, seed, ic_scale: 1.0 };
        let traj = generate(&pde, &cfg).unwrap();
        let len = traj.meta.ic_len();
        let mut swapped = traj.clone();
        swapped.data[..len].copy_from_slice(traj.ic(2));
        swapped.data[2 * len..].copy_from_slice(traj.ic(0));
        let opts = JetOptions::new(3);
        let (a, b) = (estimate_jet(&traj, &opts).unwrap(), estimate_jet(&swapped, &opts).unwrap());
        prop_assert_eq!(a.len(), b.len());
        let per_ic = a.len() / 3;
        for i in 0..per_ic {
            prop_assert_eq!(a.row(i), b.row(2 * per_ic + i));
            prop_assert_eq!(a.row(per_ic + i), b.row(per_ic + i));
        }
    }

    #[test]
    fn central_jets_converge_at_second_order(mode in 1usize..4, amp in 0.5f64..2.0, phase in 0.0f64..PI) {
        // travelling wave u = A sin(k x − ω t + φ) with every jet known exactly
        let k = 2.0 * PI * mode as f64 / 20.0;
        let omega = 0.7;
        let errs: Vec<f64> = [(64usize, 41usize), (128, 81)]
            .iter()
            .map(|&(nx, nt)| {
                let pde = builtin_pde("heat").unwrap();
                let grid = GridSpec { length: 20.0, nx, t_final: 1.0, nt, substeps: 1 };
                let meta = meta_for(&pde, &GenConfig { grid, n_f: 0, n_ics: 1, seed: 0, ic_scale: 1.0 });
                let data = grid
                    .times()
                    .iter()
                    .flat_map(|&t| grid.axis().into_iter().map(move |x| amp * (k * x - omega * t + phase).sin()))
                    .collect();
                let ds = estimate_jet(&TrajectoryDataset { meta, data }, &JetOptions::new(2)).unwrap();
                let exact = |name: &str, t: f64, x: f64| {
                    let s = amp * (k * x - omega * t + phase).sin();
                    let c = amp * (k * x - omega * t + phase).cos();
                    match name {
                        "u_t" => -omega * c,
                        "u_x" => k * c,
                        "u_xx" => -k * k * s,
                        "u_tt" => -omega * omega * s,
                        "u_tx" => omega * k * s,
                        _ => unreachable!(),
                    }
                };
                let mut worst: f64 = 0.0;
                for i in 0..ds.len() {
                    let t = ds.value(i, &JetVar::Indep(0)).unwrap();
                    let x = ds.value(i, &JetVar::Indep(1)).unwrap();
                    for name in ["u_t", "u_x", "u_xx", "u_tt", "u_tx"] {
                        let v = ds.space.resolve(name).unwrap();
                        worst = worst.max((ds.value(i, &v).unwrap() - exact(name, t, x)).abs());
                    }
                }
                worst
            })
            .collect();
        let rate = (errs[0] / errs[1]).log2();
        prop_assert!(rate > 1.8 && rate < 2.3, "observed order {} from {:?}", rate, errs);
    }
}

#[test]
fn every_preset_is_finite_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["burgers", "heat", "kdv", "wave2d", "schrodinger2d", "rd2d"] {
        let pde = builtin_pde(name).unwrap();
        let n_f = if pde.dims == 1 { 10 } else { 2 };
        let cfg = GenConfig { grid: GridSpec { length: 20.0, nx: 24, t_final: 0.2, nt: 10, substeps: 0 }, n_f, n_ics: 2, seed: 5, ic_scale: 1.0 };
        let grid = GridSpec { substeps: pde.default_substeps(&cfg.grid), ..cfg.grid };
        let ds = generate(&pde, &GenConfig { grid, ..cfg }).unwrap();
        assert!(ds.data.iter().all(|v| v.is_finite()), "{name}");
        ds.save(dir.path(), name).unwrap();
        assert_eq!(TrajectoryDataset::load(dir.path(), name).unwrap(), ds);
    }
}
