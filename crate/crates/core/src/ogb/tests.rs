use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(0.1..1.0))
}

fn lpv_like() -> OgbModel {
    let phi_b = vec![
        BasisFunction::exogenous(0, 0),
        BasisFunction::exogenous(0, 1),
    ];
    let tail = vec![BasisFunction::Monomial {
        factors: vec![Factor::exogenous(0, 1, 1), Factor::output(0, 1, 1)],
    }];
    OgbModel::new(1, 1, 1, 2, phi_b, tail).unwrap()
}

#[test]
fn kron_layout() {
    let m = OgbModel::new(
        2,
        1,
        1,
        1,
        vec![BasisFunction::output_power(0, 1, 1)],
        vec![],
    )
    .unwrap();
    assert_eq!(m.kron_len(), 4);
    // x_y = [y(t-1)] = [3], x_h(u) = [u1(t-1), u2(t-1), u1(t), u2(t)]
    let v = m.eval_phi_nl(&[3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(v.as_slice(), &[3.0, 6.0, 9.0, 12.0]);
    assert_eq!(m.describe_channel(1), "y1(t-1)*uh2(t-1)");
    assert_eq!(m.unl_lookback(), 1);
}

#[test]
fn current_output_needs_context() {
    let m = OgbModel::new(
        1,
        1,
        0,
        1,
        vec![],
        vec![BasisFunction::Sin { channel: 0, lag: 0 }],
    )
    .unwrap();
    assert!(m.eval_phi_nl(&[], &[1.0]).is_err());
    let y = DMatrix::from_row_slice(1, 2, &[0.0, 0.5]);
    let v = m
        .eval_phi_nl_in(&EvalContext::new(&y, None, 1), &[1.0])
        .unwrap();
    assert_eq!(v[0], 0.5f64.sin());
    assert!(m.channel_reads_current_output(0));
}

#[test]
fn validation() {
    let mut m = lpv_like();
    m.phi_b0.truncate(2);
    assert!(m.validate().is_err());
    assert!(lpv_like().with_selection(vec![0, 0]).is_err());
    assert!(lpv_like().with_selection(vec![9]).is_err());
    assert!(lpv_like().with_input_map(InputMap::Polynomial2).is_err());
}

#[test]
fn extended_trajectory_layout() {
    let m = lpv_like();
    let t = 12;
    let u = Trajectory::with_prefix(random(1, t, 1), "u").unwrap();
    let y = Trajectory::with_prefix(random(1, t, 2), "y").unwrap();
    let p = Trajectory::with_prefix(random(1, t, 3), "p").unwrap();
    let w = m.build_extended(&u, &y, Some(&p)).unwrap();
    assert_eq!(m.burn_in(), 1);
    assert_eq!(w.channels(), 2 + m.n_nl());
    assert_eq!(w.len(), t - 1);
    // column k is time k + 1; channel 2 is p(t) u(t-1)
    let k = 4;
    assert_eq!(w.get(0, k), u.get(0, k + 1));
    assert_eq!(w.get(2, k), p.get(0, k + 1) * u.get(0, k));
    assert_eq!(w.get(6, k), p.get(0, k) * y.get(0, k));
    assert!(m.build_unl(&u, &y, None).is_err());
}

#[test]
fn probing_reproduces_additional_inputs() {
    let m = lpv_like()
        .with_input_map(InputMap::Incremental { rho: 0.3 })
        .unwrap();
    let w = 9;
    let horizon = 5;
    let uh = random(1, w, 4);
    let y = random(1, w, 5);
    let p = random(1, w, 6);
    let (phi0, phi) = m.probe_phi_matrix(&y, Some(&p), horizon).unwrap();
    let direct = m
        .unl_from_transformed(&uh, &y, Some(&p), w - horizon)
        .unwrap();
    let stacked = DVector::from_column_slice(direct.as_slice());
    let via = phi0 + &phi * DVector::from_column_slice(uh.as_slice());
    assert!((via - stacked).amax() < 1e-14);
    let (pp, pf) = split_phi_matrix(&phi, 1, 4, 5).unwrap();
    assert_eq!((pp.ncols(), pf.ncols()), (4, 5));
    assert!(m.probe_phi_matrix(&y, Some(&p), w).is_err());
}

#[test]
fn shifted_tail_is_pruned() {
    let tail = vec![
        BasisFunction::Sin { channel: 0, lag: 1 },
        BasisFunction::Sin { channel: 0, lag: 2 },
        BasisFunction::Zero,
        BasisFunction::Cos { channel: 0, lag: 1 },
    ];
    let m = OgbModel::new(1, 1, 2, 2, vec![], tail).unwrap();
    let red = m.detect_redundancy();
    assert_eq!(
        red,
        vec![
            Redundancy::Shifted {
                channel: 1,
                of: 0,
                shift: 1
            },
            Redundancy::Zero { channel: 2 },
        ]
    );
    let (p, _) = m.prune_redundant().unwrap();
    assert_eq!(p.n_nl(), 2);
    assert_eq!(p.describe_channel(0), "sin(y1(t))");
    assert_eq!(p.describe_channel(1), "cos(y1(t))");
}

#[test]
fn kron_redundancy() {
    let m = lpv_like();
    let red = m.detect_redundancy();
    assert_eq!(
        red,
        vec![Redundancy::Shifted {
            channel: 2,
            of: 1,
            shift: 1
        }]
    );
    let (p, _) = m.prune_redundant().unwrap();
    assert_eq!(p.n_nl(), 4);
    assert!(p.detect_redundancy().is_empty());
}

#[test]
fn data_redundancy_agrees() {
    let m = lpv_like();
    let t = 20;
    let u = Trajectory::with_prefix(random(1, t, 7), "u").unwrap();
    let y = Trajectory::with_prefix(random(1, t, 8), "y").unwrap();
    let p = Trajectory::with_prefix(random(1, t, 9), "p").unwrap();
    let unl = m.build_unl(&u, &y, Some(&p)).unwrap();
    let red = detect_redundancy_in_data(&unl, 2, 1e-12);
    assert_eq!(
        red,
        vec![Redundancy::Shifted {
            channel: 2,
            of: 1,
            shift: 1
        }]
    );
}

#[test]
fn serde_round_trip() {
    let m = lpv_like().with_selection(vec![1, 0, 4]).unwrap();
    let s = serde_json::to_string(&m).unwrap();
    let back: OgbModel = serde_json::from_str(&s).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.n_nl(), 3);
}
