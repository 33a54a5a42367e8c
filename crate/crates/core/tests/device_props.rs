use memsim::device::*;
use memsim::error::Error;
use proptest::prelude::*;

fn presets() -> Presets {
    Presets::embedded()
}

fn any_kind() -> impl Strategy<Value = DeviceKind> {
    prop_oneof![Just(DeviceKind::Carbon), Just(DeviceKind::Tungsten), Just(DeviceKind::Chromium)]
}

/// Randomised parameters around the presets.
fn params() -> impl Strategy<Value = DeviceParams> {
    (any_kind(), 0.0..2e-7f64, 1.5e-3..=2.5e-3f64, 0.11..0.2f64, 0.101..0.15f64, 40.0..250.0f64, 60.0..140.0f64, 0.0..2.0f64)
        .prop_map(|(kind, g_min, g_max, v_set, v_reset, rate_p, rate_n, window_exp)| {
            let set_jump_x = if kind == DeviceKind::Chromium { DeviceParams::chromium_jump_x(g_min, g_max) } else { 0.0 };
            DeviceParams { kind, g_min, g_max, v_set, v_reset, rate_p, rate_n, window_exp, set_jump_x }
        })
}

fn state() -> impl Strategy<Value = MemristorState> {
    (0.0..=1.0f64, any::<bool>()).prop_map(|(x, has_set)| MemristorState { x, has_set })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn generated_params_are_valid(p in params()) {
        prop_assert!(p.validate().is_ok(), "{:?}", p);
    }

    #[test]
    fn zero_volts_is_inert(p in params(), s in state(), dt in 1e-6..1.0f64) {
        let (next, i) = step(&p, &s, 0.0, dt).unwrap();
        prop_assert_eq!(i, 0.0);
        prop_assert_eq!(next, s);
    }

    #[test]
    fn sweep_passes_through_origin(p in params(), amp in 0.2..0.75f64) {
        let trace = iv_sweep(&p, amp, 1.0, 2, 1e-3).unwrap();
        let zeros: Vec<_> = trace.samples.iter().filter(|s| s.v == 0.0).collect();
        prop_assert!(zeros.len() >= 3);
        prop_assert!(zeros.iter().all(|s| s.i == 0.0));
    }

    #[test]
    fn dead_zone_is_bitwise_noop(p in params(), s in state(), f in -1.0..=1.0f64, dt in 1e-6..1.0f64) {
        let v = f * p.v_set.min(p.v_reset);
        let (next, i) = step(&p, &s, v, dt).unwrap();
        prop_assert_eq!(next.x.to_bits(), s.x.to_bits());
        prop_assert_eq!(next.has_set, s.has_set);
        prop_assert_eq!(i, conductance_of(&s, &p) * v);
    }

    #[test]
    fn state_stays_in_unit_interval(p in params(), s in state(), v in -5.0..5.0f64, dt in 1e-6..1.0f64) {
        let (next, _) = step(&p, &s, v, dt).unwrap();
        prop_assert!((0.0..=1.0).contains(&next.x));
        let g = conductance_of(&next, &p);
        prop_assert!(g >= p.g_min && g <= p.g_max * (1.0 + 1e-15));
    }

    #[test]
    fn pulses_move_state_one_way(p in params(), s in state(), amp in 0.0..5.0f64, width in 1e-3..0.05f64, r in 0.0..1000.0f64) {
        let (fwd, e1) = apply_pulse(&p, &s, &Pulse::new(amp, width, r).unwrap(), 1e-5).unwrap();
        let (rev, e2) = apply_pulse(&p, &s, &Pulse::new(-amp, width, r).unwrap(), 1e-5).unwrap();
        prop_assert!(fwd.x >= s.x);
        prop_assert!(rev.x <= s.x);
        prop_assert!(e1 >= 0.0 && e2 >= 0.0);
    }

    #[test]
    fn halving_substep_barely_moves_result(p in params(), s in state(), amp in -0.5..1.0f64, width in 1e-3..5e-3f64) {
        let pulse = Pulse::new(amp, width, 1000.0).unwrap();
        let a = apply_pulse(&p, &s, &pulse, 1e-6).unwrap().0;
        let b = apply_pulse(&p, &s, &pulse, 5e-7).unwrap().0;
        prop_assert!((a.x - b.x).abs() < 1e-4);
    }

    #[test]
    fn energy_matches_ohmic_closed_form_below_threshold(p in params(), s in state(), width in 1e-3..0.05f64, r in 0.0..1000.0f64) {
        // Sub-threshold reverse pulse: state frozen, so energy is A²·g/(1+R·g)·width.
        let amp = -0.9 * p.v_reset;
        let (next, e) = apply_pulse(&p, &s, &Pulse::new(amp, width, r).unwrap(), 1e-5).unwrap();
        prop_assert_eq!(next.x, s.x);
        let g = conductance_of(&s, &p);
        let want = amp * amp * g / (1.0 + r * g) * width;
        prop_assert!((e - want).abs() <= 1e-9 * want.max(1e-300));
    }
}

#[test]
fn presets_load_and_validate() {
    let p = presets();
    p.validate().unwrap();
    for kind in DeviceKind::ALL {
        let d = p.get(kind);
        assert_eq!(d.kind, kind);
        assert_eq!(d.g_max, G_CAP);
    }
    let cr = p.get(DeviceKind::Chromium);
    let g_jump = cr.g_min + cr.set_jump_x * (cr.g_max - cr.g_min);
    assert!((g_jump - CHROMIUM_JUMP_G).abs() < 1e-12);
}

#[test]
fn read_level_step_example() {
    // 0.1 V against a 0.3 V threshold: no motion, ohmic current.
    let p = DeviceParams { v_set: 0.3, ..presets().get(DeviceKind::Carbon) };
    let s = MemristorState::new(0.4, true).unwrap();
    let (next, i) = step(&p, &s, 0.1, 1e-3).unwrap();
    assert_eq!(next, s);
    assert_eq!(i, conductance_of(&s, &p) * 0.1);
}

#[test]
fn forward_step_follows_rate_law() {
    let p = presets().get(DeviceKind::Carbon);
    let s = MemristorState::new(0.25, true).unwrap();
    let v = 0.5;
    let dt = 1e-4;
    let (next, _) = step(&p, &s, v, dt).unwrap();
    let want = 0.25 + p.rate_p * (v - p.v_set) * (1.0 - 0.25f64).powf(p.window_exp) * dt;
    assert!((next.x - want).abs() < 1e-15);
    let (next, _) = step(&p, &s, -v, dt).unwrap();
    let want = 0.25 - p.rate_n * (v - p.v_reset) * 0.25f64.powf(p.window_exp) * dt;
    assert!((next.x - want).abs() < 1e-15);
}

#[test]
fn chromium_latch_rearms_only_after_full_reset() {
    let p = presets().get(DeviceKind::Chromium);
    let set = Pulse::new(1.0, 1e-3, 1000.0).unwrap();
    let (s, _) = apply_pulse(&p, &MemristorState::pristine(), &set, 1e-6).unwrap();
    assert!(s.has_set && conductance_of(&s, &p) >= CHROMIUM_JUMP_G);

    // A short reverse pulse does not dissolve the nucleus.
    let short = Pulse::new(-0.5, 0.01, 1000.0).unwrap();
    let (s2, _) = apply_pulse(&p, &s, &short, 1e-6).unwrap();
    assert!(s2.has_set);

    // The 200 ms reset does, and the next SET jumps again.
    let reset = Pulse::new(-0.5, 0.2, 1000.0).unwrap();
    let (s3, _) = apply_pulse(&p, &s, &reset, 1e-6).unwrap();
    assert!(s3.x <= HRS_LATCH_X && !s3.has_set);
    let (s4, _) = apply_pulse(&p, &s3, &set, 1e-6).unwrap();
    assert!(conductance_of(&s4, &p) >= CHROMIUM_JUMP_G);
}

#[test]
fn carbon_has_no_jump() {
    let p = presets().get(DeviceKind::Carbon);
    let set = Pulse::new(1.0, 1e-3, 1000.0).unwrap();
    let (s, _) = apply_pulse(&p, &MemristorState::pristine(), &set, 1e-6).unwrap();
    assert!(conductance_of(&s, &p) < CHROMIUM_JUMP_G);
}

#[test]
fn sweeps_show_pinched_hysteresis_for_every_preset() {
    let p = presets();
    for kind in DeviceKind::ALL {
        let trace = iv_sweep(&p.get(kind), 0.5, 1.0, 2, 1e-4).unwrap();
        let m = hysteresis_metrics(&trace).unwrap();
        assert!(m.lobe_area > 0.0, "{kind}");
        assert!(m.lrs_slope > m.hrs_slope, "{kind}");
        let onset = set_onset_voltage(&trace).unwrap();
        assert!(onset > p.get(kind).v_set - 1e-3 && onset < 0.5, "{kind}: {onset}");
    }
}

#[test]
fn unsafe_sweep_amplitude_is_an_error() {
    let p = presets().get(DeviceKind::Carbon);
    assert!(matches!(iv_sweep(&p, 0.9, 1.0, 1, 1e-4), Err(Error::UnsafeAmplitude(_))));
}

#[test]
fn non_finite_inputs_rejected() {
    let p = presets().get(DeviceKind::Tungsten);
    let s = MemristorState::pristine();
    assert!(step(&p, &s, f64::NAN, 1e-3).is_err());
    assert!(step(&p, &s, 0.5, f64::INFINITY).is_err());
    assert!(Pulse::new(6.0, 1e-3, 0.0).is_err());
    assert!(MemristorState::new(1.5, false).is_err());
}
