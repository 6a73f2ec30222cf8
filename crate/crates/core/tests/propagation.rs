use conveyance::propagator::{
    propagate_moving_frame, AbsorbingPotential, ConstantAcceleration, PropagationOptions, Side, TimeGrid,
};
use conveyance::protocols::{make_protocol, run_conveyance, ConveyanceOptions, ProtocolKind};
use conveyance::spectral::discrete_ground_state;
use conveyance::{Grid, PhysicalParams, WaveFunction};

fn quiet() -> PropagationOptions {
    PropagationOptions {
        snapshot_stride: 0,
        ..PropagationOptions::default()
    }
}

fn survival_at(psi0: &WaveFunction, a: f64, t: f64, dt: f64) -> f64 {
    let p = PhysicalParams::default();
    let tg = TimeGrid::covering(t, dt).unwrap();
    *propagate_moving_frame(psi0, &ConstantAcceleration(a), &p, &tg, &quiet())
        .unwrap()
        .p
        .last()
        .unwrap()
}

#[test]
fn crank_nicolson_is_second_order_in_time() {
    let grid = Grid::symmetric(30.0, 0.1).unwrap();
    let psi0 = discrete_ground_state(&grid, &PhysicalParams::default()).unwrap();
    let reference = survival_at(&psi0, 0.3, 5.0, 0.1 / 16.0);
    let e1 = (survival_at(&psi0, 0.3, 5.0, 0.1) - reference).abs();
    let e2 = (survival_at(&psi0, 0.3, 5.0, 0.05) - reference).abs();
    let ratio = e1 / e2;
    assert!((ratio - 4.0).abs() <= 1.0, "error ratio {ratio} ({e1:.3e} / {e2:.3e})");
}

#[test]
fn norm_is_conserved_over_ten_thousand_steps() {
    let grid = Grid::symmetric(40.0, 0.1).unwrap();
    let p = PhysicalParams::default();
    let psi0 = discrete_ground_state(&grid, &p).unwrap();
    let tg = TimeGrid::new(0.05, 10_000).unwrap();
    let traj = propagate_moving_frame(&psi0, &ConstantAcceleration(0.2), &p, &tg, &quiet()).unwrap();
    let drift = traj.norm.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max);
    assert!(drift <= 1e-8, "cumulative norm drift {drift:.2e}");
}

#[test]
fn absorber_only_removes_probability() {
    let grid = Grid::new(-60.0, 15.0, 0.05).unwrap();
    let p = PhysicalParams::default();
    let psi0 = discrete_ground_state(&grid, &p).unwrap();
    let opts = PropagationOptions {
        absorber: Some(AbsorbingPotential::new(10.0, 20.0, Side::Left).unwrap()),
        ..quiet()
    };
    let tg = TimeGrid::covering(60.0, 0.05).unwrap();
    let traj = propagate_moving_frame(&psi0, &ConstantAcceleration(0.4), &p, &tg, &opts).unwrap();
    assert!(traj.norm.windows(2).all(|w| w[1] <= w[0] + 1e-14));
    assert!(*traj.norm.last().unwrap() < 0.5);
    // survival can never exceed the remaining norm
    assert!(traj.p.iter().zip(&traj.norm).all(|(p, n)| *p <= n + 1e-12));
}

#[test]
fn untilted_ground_state_is_stationary() {
    let grid = Grid::symmetric(15.0, 0.1).unwrap();
    let psi0 = discrete_ground_state(&grid, &PhysicalParams::default()).unwrap();
    let p = survival_at(&psi0, 0.0, 50.0, 0.1);
    assert!((p - 1.0).abs() < 1e-10, "{p}");
}

#[test]
fn frames_agree_once_the_trap_stops() {
    let grid = Grid::symmetric(100.0, 0.05).unwrap();
    let opts = ConveyanceOptions {
        absorber: Some(AbsorbingPotential::new(10.0, 30.0, Side::Both).unwrap()),
        ..ConveyanceOptions::default()
    };
    for kind in [ProtocolKind::Cos, ProtocolKind::Sin] {
        let proto = make_protocol(kind, 50.0, 40.0).unwrap();
        let r = run_conveyance(&proto, &PhysicalParams::default(), &grid, &opts).unwrap();
        assert!(r.velocity.last().unwrap().abs() < 1e-12);
        assert!(
            (r.p_final - r.big_p_final).abs() < 1e-10,
            "{kind:?}: {} vs {}",
            r.p_final,
            r.big_p_final
        );
        assert!((r.x0.last().unwrap() - 50.0).abs() < 1e-9);
    }
}
