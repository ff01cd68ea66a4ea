use std::f64::consts::PI;

use airhmi_core::model::NormPos;
use airhmi_core::stabilizer::{map_to_screen, FilterParams, FilterState, ScreenGeometry};
use proptest::prelude::*;

const DT_US: u64 = 8333;
const DT: f64 = DT_US as f64 * 1e-6;

fn filter_series(params: &FilterParams, start: NormPos, input: impl Fn(usize) -> NormPos, steps: usize) -> Vec<NormPos> {
    let mut s = FilterState::new(start, 0);
    (1..=steps)
        .map(|k| s.filter_update(params, input(k), k as u64 * DT_US).unwrap())
        .collect()
}

/// Steady-state lag of the recurrence on a ramp of slope `v`: the lag `L`
/// solves L = v / (2π·fc) with fc = fc_min + β·(v + L/Δt), because the
/// speed estimate settles at (x − previous output)/Δt = v + L/Δt.
fn lag_oracle(p: &FilterParams, v: f64) -> f64 {
    let mut lag = 0.0;
    for _ in 0..200 {
        let fc = p.fc_min + p.beta * (v + lag / DT);
        lag = v / (2.0 * PI * fc);
    }
    lag
}

/// Measured raw-minus-filtered distance on a ramp from 0 after 0.9 s.
fn measured_lag(p: &FilterParams, v: f64) -> f64 {
    let steps = (0.9 / DT) as usize;
    let out = filter_series(p, NormPos::new(0.0, 0.0, 0.0), |k| {
        let x = v * k as f64 * DT;
        NormPos::new(x, x, x)
    }, steps);
    v * steps as f64 * DT - out[steps - 1].x
}

#[test]
fn constant_input_converges() {
    let p = FilterParams::default();
    for &(a, b) in &[(0.0, 0.7), (1.0, 0.0), (0.3, 0.31), (0.9, 0.1)] {
        let out = filter_series(&p, NormPos::new(a, a, a), |_| NormPos::new(b, b, b), 240);
        let last = out.last().unwrap();
        assert!((last.x - b).abs() <= 1e-4, "{a} -> {b}: {}", last.x);
    }
}

#[test]
fn ramp_lag_matches_steady_state_oracle() {
    let p = FilterParams::default();
    for v in [0.05, 0.2, 1.0] {
        let measured = measured_lag(&p, v);
        let expected = lag_oracle(&p, v);
        assert!((measured - expected).abs() <= 0.01 * expected, "v={v}: {measured} vs {expected}");
    }
}

#[test]
fn time_lag_shrinks_with_ramp_speed() {
    let p = FilterParams::default();
    let lags: Vec<f64> = [0.05, 0.2, 1.0].iter().map(|&v| measured_lag(&p, v) / v).collect();
    assert!(lags[0] > lags[1] && lags[1] > lags[2], "{lags:?}");
}

proptest! {
    #[test]
    fn step_never_overshoots(from in 0.0..1.0f64, to in 0.0..1.0f64, fc_min in 0.2..5.0f64, beta in 0.01..5.0f64) {
        let p = FilterParams { fc_min, beta, ..Default::default() };
        let out = filter_series(&p, NormPos::new(from, from, from), |_| NormPos::new(to, to, to), 360);
        let mut prev = from;
        for o in &out {
            let toward = (to - from).signum();
            prop_assert!((o.x - prev) * toward >= -1e-15, "moved away: {} -> {}", prev, o.x);
            prop_assert!((to - o.x) * toward >= -1e-15, "overshoot: {}", o.x);
            prev = o.x;
        }
    }

    #[test]
    fn filtered_stays_in_unit_cube(seq in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64), 2..200)) {
        let p = FilterParams::default();
        let mut s = FilterState::new(NormPos::new(seq[0].0, seq[0].1, seq[0].2), 0);
        for (k, &(x, y, z)) in seq.iter().enumerate().skip(1) {
            let o = s.filter_update(&p, NormPos::new(x, y, z), k as u64 * DT_US).unwrap();
            for c in [o.x, o.y, o.z] {
                prop_assert!((0.0..=1.0).contains(&c));
            }
        }
    }

    #[test]
    fn deadzone_output_is_anchor_or_input(anchor in (0.0..1.0f64, 0.0..1.0f64), moves in prop::collection::vec((-0.01..0.01f64, -0.01..0.01f64), 1..100)) {
        let p = FilterParams::default();
        let mut s = FilterState::new(NormPos::new(anchor.0, anchor.1, 0.5), 0);
        let mut pos = NormPos::new(anchor.0, anchor.1, 0.5);
        for (dx, dy) in moves {
            pos = NormPos::new((pos.x + dx).clamp(0.0, 1.0), (pos.y + dy).clamp(0.0, 1.0), 0.5);
            let before = s.deadzone_anchor;
            let gated = s.apply_deadzone(&p, pos);
            if pos.planar_distance(&before) < p.r_dead {
                prop_assert_eq!(gated, before);
            } else {
                prop_assert_eq!(gated, pos);
                prop_assert_eq!(s.deadzone_anchor, pos);
            }
        }
    }

    #[test]
    fn pixels_within_screen(x in 0.0..=1.0f64, y in 0.0..=1.0f64, w in 1u32..5000, h in 1u32..5000) {
        let (px, py) = map_to_screen(NormPos::new(x, y, 0.5), ScreenGeometry::new(w, h).unwrap());
        prop_assert!(px < w && py < h);
    }

    #[test]
    fn filter_is_deterministic(seq in prop::collection::vec(0.0..=1.0f64, 2..100)) {
        let p = FilterParams::default();
        let run = || filter_series(&p, NormPos::new(seq[0], 0.5, 0.5), |k| NormPos::new(seq[k % seq.len()], 0.5, 0.5), seq.len());
        prop_assert_eq!(run(), run());
    }
}
