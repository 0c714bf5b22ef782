use infogeo_core::odeint::{integrate_heun, integrate_rk54, IvpProblem, Trajectory, EVENT_TOL};
use proptest::prelude::*;

fn decay(tspan: (f64, f64)) -> IvpProblem<'static> {
    IvpProblem::new(
        |_t, y: &[f64], dy: &mut [f64]| {
            dy[0] = -y[0];
            Ok(())
        },
        vec![1.0],
        tspan,
    )
    .unwrap()
}

fn oscillator(periods: f64) -> IvpProblem<'static> {
    IvpProblem::new(
        |_t, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        },
        vec![1.0, 0.0],
        (0.0, periods * 2.0 * std::f64::consts::PI),
    )
    .unwrap()
}

fn assert_increasing(traj: &Trajectory, t0: f64) {
    assert_eq!(traj.ts[0], t0);
    assert!(traj.ts.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn heun_converges_at_second_order() {
    let exact = (-1.0f64).exp();
    let err = |h: f64| (integrate_heun(&decay((0.0, 1.0)), h).unwrap().final_state()[0] - exact).abs();
    for h in [0.1, 0.05, 0.02] {
        let ratio = err(h) / err(h / 2.0);
        assert!((ratio - 4.0).abs() <= 0.6, "h={h}: ratio {ratio}");
    }
}

#[test]
fn rk54_oscillator_energy_drift() {
    let traj = integrate_rk54(&oscillator(10.0), 1e-9, 1e-12).unwrap();
    assert_increasing(&traj, 0.0);
    for y in &traj.ys {
        let energy = y[0] * y[0] + y[1] * y[1];
        assert!((energy - 1.0).abs() <= 1e-6, "energy {energy}");
    }
    let y = traj.final_state();
    assert!((y[0] - 1.0).abs() <= 1e-6 && y[1].abs() <= 1e-6);
}

#[test]
fn rk54_accepted_errors_within_tolerance() {
    let traj = integrate_rk54(&oscillator(3.0), 1e-8, 1e-10).unwrap();
    assert!(traj.stats.accepted > 0);
    assert!(traj.stats.max_accepted_error <= 1.0);
}

#[test]
fn dense_output_tracks_exact_solution() {
    let traj = integrate_rk54(&decay((0.0, 5.0)), 1e-10, 1e-12).unwrap();
    for k in 0..=50 {
        let t = 0.1 * k as f64;
        assert!((traj.sample(t).unwrap()[0] - (-t).exp()).abs() <= 1e-6);
    }
    assert!(traj.sample(6.0).is_none());
}

#[test]
fn event_stops_between_opposite_signs() {
    // y' = −y from 1 crosses 0.3 at ln(1/0.3)
    let problem = decay((0.0, 10.0)).with_event(|_t, y: &[f64]| y[0] - 0.3);
    let traj = integrate_rk54(&problem, 1e-10, 1e-12).unwrap();
    assert!(traj.terminated_by_event);
    let te = traj.event_time.unwrap();
    assert!((te - (1.0f64 / 0.3).ln()).abs() <= 1e-8);
    assert!((traj.final_state()[0] - 0.3).abs() <= EVENT_TOL);
    let n = traj.ys.len();
    assert!((traj.ys[n - 2][0] - 0.3) * (traj.ys[n - 1][0] - 0.3) <= 0.0);
}

proptest! {
    #[test]
    fn rk54_decay_any_rate(rate in 0.1..5.0f64, t_end in 0.1..5.0f64) {
        let problem = IvpProblem::new(
            move |_t, y: &[f64], dy: &mut [f64]| {
                dy[0] = -rate * y[0];
                Ok(())
            },
            vec![1.0],
            (0.0, t_end),
        )
        .unwrap();
        let traj = integrate_rk54(&problem, 1e-8, 1e-10).unwrap();
        prop_assert!((traj.final_time() - t_end).abs() <= 1e-12);
        prop_assert!((traj.final_state()[0] - (-rate * t_end).exp()).abs() <= 1e-7);
    }

    #[test]
    fn heun_times_strictly_increase(h in 0.01..0.7f64, t0 in -3.0..3.0f64) {
        let problem = IvpProblem::new(
            |t, _y: &[f64], dy: &mut [f64]| {
                dy[0] = t;
                Ok(())
            },
            vec![0.0],
            (t0, t0 + 2.0),
        )
        .unwrap();
        let traj = integrate_heun(&problem, h).unwrap();
        prop_assert_eq!(traj.ts[0], t0);
        prop_assert!(traj.ts.windows(2).all(|w| w[1] > w[0]));
        prop_assert!((traj.final_time() - (t0 + 2.0)).abs() <= 1e-12);
    }
}
