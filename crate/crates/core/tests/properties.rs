use nalgebra::DMatrix;
use proptest::prelude::*;

use ogb_core::hankel::{build_hankel, min_data_length, SystemDims};
use ogb_core::numlin::{null_space, pinv, rank_of, solve_affine, Feasibility, RankPolicy};
use ogb_core::ogb::{BasisFunction, InputMap, OgbModel};
use ogb_core::plants::rrmse;
use ogb_core::signal::Trajectory;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |v| DMatrix::from_column_slice(rows, cols, &v))
}

fn traj(channels: usize, len: usize) -> impl Strategy<Value = Trajectory> {
    matrix(channels, len).prop_map(|m| Trajectory::with_prefix(m, "w").unwrap())
}

/// Product of a random `r x k` and `k x c` matrix: rank at most `k`.
fn low_rank() -> impl Strategy<Value = (DMatrix<f64>, usize)> {
    (1usize..7, 1usize..7, 1usize..5).prop_flat_map(|(r, c, k)| {
        (matrix(r, k), matrix(k, c)).prop_map(move |(a, b)| (a * b, k.min(r).min(c)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn concat_is_associative(a in traj(2, 3), b in traj(2, 4), c in traj(2, 2)) {
        let left = a.concat(&b).unwrap().concat(&c).unwrap();
        let right = a.concat(&b.concat(&c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn shifts_compose(w in traj(2, 12), i in 0isize..5, j in 0isize..5) {
        let twice = w.shift(i).unwrap().shift(j).unwrap();
        prop_assert_eq!(twice, w.shift(i + j).unwrap());
        let back = w.shift(-i).unwrap().shift(-j).unwrap();
        prop_assert_eq!(back, w.shift(-(i + j)).unwrap());
    }

    #[test]
    fn hankel_entries_follow_the_trajectory(w in traj(3, 10), l in 1usize..6) {
        let h = build_hankel(&w, l).unwrap();
        prop_assert_eq!(h.matrix.shape(), (3 * l, 10 - l + 1));
        for i in 0..l {
            for j in 0..h.matrix.ncols() {
                for c in 0..3 {
                    prop_assert_eq!(h.matrix[(i * 3 + c, j)], w.get(c, i + j));
                }
            }
        }
    }

    #[test]
    fn rank_is_invariant_under_transpose((m, k) in low_rank()) {
        let p = RankPolicy::default();
        let r = rank_of(&m, &p).unwrap();
        prop_assert_eq!(r, rank_of(&m.transpose(), &p).unwrap());
        prop_assert!(r <= k);
    }

    #[test]
    fn null_space_is_annihilated((m, _) in low_rank()) {
        let p = RankPolicy::default();
        let n = null_space(&m, &p).unwrap();
        prop_assert_eq!(n.ncols(), m.ncols() - rank_of(&m, &p).unwrap());
        if n.ncols() > 0 {
            prop_assert!((&m * &n).amax() < 1e-10);
            let gram = n.transpose() * &n - DMatrix::identity(n.ncols(), n.ncols());
            prop_assert!(gram.amax() < 1e-10);
        }
    }

    #[test]
    fn pinv_satisfies_penrose_identity((m, _) in low_rank()) {
        let p = pinv(&m, &RankPolicy::default()).unwrap();
        prop_assert!((&m * &p * &m - &m).amax() < 1e-9);
    }

    #[test]
    fn consistent_systems_are_feasible((m, _) in low_rank(), seed in matrix(7, 1)) {
        let g = seed.rows(0, m.ncols()).column(0).into_owned();
        let b = &m * &g;
        let out = solve_affine(&m, &b, &RankPolicy::default(), &Feasibility::default()).unwrap();
        prop_assert!(out.is_feasible());
        let set = out.solution_set();
        prop_assert!((&m * &set.offset - &b).amax() < 1e-9);
    }

    #[test]
    fn input_maps_round_trip(u in matrix(2, 8), rho in -0.9f64..0.9, which in 0usize..5) {
        let positive = u.map(|v| v.abs() + 0.1);
        let (map, u) = match which {
            0 => (InputMap::Cubic, u),
            1 => (InputMap::Log, positive),
            2 => (InputMap::Polynomial2, u),
            3 => (InputMap::Affine { gain: vec![2.0, -0.5], offset: vec![0.3, 1.0] }, u),
            _ => (InputMap::Incremental { rho }, u),
        };
        let lb = map.causal_lookback();
        let uh = map.forward(&u).unwrap();
        let prior = u.columns(0, lb).into_owned();
        let back = map.inverse(&uh, &prior).unwrap();
        prop_assert!((back - u.columns(lb, u.ncols() - lb)).amax() < 1e-9);
    }

    #[test]
    fn probing_reproduces_additional_inputs(
        u in matrix(1, 15),
        y in matrix(1, 15),
        lag in 0usize..3,
        out_lag in 1usize..3,
    ) {
        let model = OgbModel::new(
            1,
            1,
            lag,
            1,
            vec![BasisFunction::Sin { channel: 0, lag: out_lag }, BasisFunction::Constant { value: 0.7 }],
            vec![BasisFunction::output_power(0, 0, 2)],
        )
        .unwrap();
        let u = Trajectory::with_prefix(u, "u").unwrap();
        let y = Trajectory::with_prefix(y, "y").unwrap();
        let unl = model.build_unl(&u, &y, None).unwrap();
        let (phi0, phi) = model.probe_phi_matrix(y.values(), None, unl.len()).unwrap();
        let probed = phi0 + phi * u.stacked();
        prop_assert!((probed - unl.stacked()).amax() < 1e-12);
    }

    #[test]
    fn min_length_is_monotone(
        n_u in 1usize..3,
        n_nl in 0usize..4,
        order in 0usize..4,
        lookback in 0usize..3,
        horizon in 1usize..20,
        t_ini in 1usize..4,
    ) {
        let dims = SystemDims { n_u, n_y: 1, n_nl, lag: order, order, unl_lookback: lookback };
        let base = min_data_length(&dims, horizon, t_ini);
        prop_assert_eq!(base.extra, base.ogb - base.lti);
        prop_assert!(min_data_length(&dims, horizon + 1, t_ini).ogb > base.ogb);
        prop_assert!(min_data_length(&dims, horizon, t_ini + 1).ogb > base.ogb);
        let more = SystemDims { n_nl: n_nl + 1, ..dims };
        prop_assert!(min_data_length(&more, horizon, t_ini).ogb > base.ogb);
        prop_assert_eq!(min_data_length(&more, horizon, t_ini).lti, base.lti);
    }

    #[test]
    fn rrmse_is_scale_invariant(y in traj(2, 6), alpha in 0.5f64..3.0) {
        prop_assume!(y.values().norm() > 1e-3);
        prop_assert_eq!(rrmse(&y, &y).unwrap(), 0.0);
        let a = y.scaled(alpha).unwrap();
        let zero = y.scaled(0.0).unwrap();
        prop_assert!((rrmse(&zero, &y).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((rrmse(&zero, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}
