use memsim::data::{make_dataset, Task};
use memsim::device::*;
use memsim::error::Error;
use memsim::experiments::{apply_initial_state, InitialState};
use memsim::network::{Cell, CellId, CrossbarNetwork};
use memsim::onchip::*;
use memsim::trainer::{map_weights, train_reference, TargetConductances, TrainHyper, PRUNE_BELOW_S};
use proptest::prelude::*;

fn presets() -> Presets {
    Presets::embedded()
}

fn any_kind() -> impl Strategy<Value = DeviceKind> {
    prop_oneof![Just(DeviceKind::Carbon), Just(DeviceKind::Tungsten), Just(DeviceKind::Chromium)]
}

fn any_state() -> impl Strategy<Value = MemristorState> {
    prop_oneof![
        Just(MemristorState::pristine()),
        (0.0..=1.0f64, any::<bool>()).prop_map(|(x, has_set)| MemristorState { x, has_set }),
    ]
}

/// Error after each pulse of a programming run, paired with the error before it.
fn error_steps(kind: DeviceKind, start: MemristorState, target: f64, cfg: &TrainConfig) -> Vec<(f64, f64)> {
    let p = presets().get(kind);
    let mut s = start;
    if cfg.reset_enabled {
        s = apply_pulse(&p, &s, &cfg.reset_pulse, cfg.dt_sub).unwrap().0;
    }
    let mut steps = Vec::new();
    for _ in 0..cfg.max_cycles {
        let d = target - conductance_of(&s, &p);
        if d.abs() <= cfg.g_tolerance_rel * target {
            break;
        }
        s = apply_pulse(&p, &s, &cfg.pulse_for(d, target), cfg.dt_sub).unwrap().0;
        steps.push((d.abs(), (target - conductance_of(&s, &p)).abs()));
    }
    steps
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn single_pulse_overshoot_is_bounded_for_large_targets(
        kind in any_kind(), start in any_state(), target in 0.6e-3..=G_CAP, reset in any::<bool>(),
    ) {
        let cfg = TrainConfig { reset_enabled: reset, ..TrainConfig::default() };
        for (before, after) in error_steps(kind, start, target, &cfg) {
            prop_assert!(after <= 2.0 * before, "{kind}: error {before:e} -> {after:e}");
        }
    }

    #[test]
    fn programming_converges_for_every_target(
        kind in any_kind(), start in any_state(), target in PRUNE_BELOW_S..=G_CAP, reset in any::<bool>(), tol in 0.05..0.15f64,
    ) {
        let cfg = TrainConfig { reset_enabled: reset, g_tolerance_rel: tol, ..TrainConfig::default() };
        let mut cell = Cell { state: start, params: presets().get(kind) };
        let o = program_memristor(&mut cell, target, &cfg).unwrap();
        prop_assert!(o.converged);
        prop_assert!((o.final_g - target).abs() <= tol * target);
        prop_assert_eq!(o.final_g, cell.conductance());
        prop_assert!(o.cycles <= cfg.max_cycles);
    }

    #[test]
    fn looser_tolerance_never_needs_more_cycles(kind in any_kind(), target in 1e-4..=G_CAP) {
        let run = |tol: f64| {
            let cfg = TrainConfig { g_tolerance_rel: tol, ..TrainConfig::default() };
            program_memristor(&mut Cell::pristine(presets().get(kind)), target, &cfg).unwrap().cycles
        };
        prop_assert!(run(0.15) <= run(0.05));
    }
}

fn trained_targets(seed: u64) -> (TargetConductances, memsim::trainer::Biases) {
    let data = make_dataset(Task::XO, 1000, 0.1, seed).unwrap();
    let out = train_reference(&data, &TrainHyper { seed, ..TrainHyper::default() }).unwrap();
    map_weights(&out.weights, DEFAULT_V_READ).unwrap()
}

#[test]
fn report_totals_are_sums_of_cells() {
    let (t, b) = trained_targets(1);
    for kind in DeviceKind::ALL {
        let mut net = CrossbarNetwork::uniform(presets().get(kind)).unwrap();
        apply_initial_state(&mut net, InitialState::Used, 4);
        let r = program_network(&mut net, &t, &b, &TrainConfig::default()).unwrap();
        let time: f64 = r.per_cell.iter().map(|c| c.outcome.time).sum();
        let energy: f64 = r.per_cell.iter().map(|c| c.outcome.energy).sum();
        assert!((r.total_time - time).abs() <= 1e-12 * time);
        assert!((r.total_energy - energy).abs() <= 1e-12 * energy);
        assert_eq!(r.per_cell.len(), 30);
        assert!(r.converged);
        // Every cycle is one read plus one pulse; each programmed cell adds
        // the final read and, here, one reset.
        for c in r.per_cell.iter().filter(|c| c.outcome.target_g > 0.0) {
            let o = &c.outcome;
            let lo = 0.2 + (o.cycles as f64 + 1.0) * 0.05 + o.cycles as f64 * 1e-3;
            let hi = 0.2 + (o.cycles as f64 + 1.0) * 0.05 + o.cycles as f64 * 0.05;
            assert!(o.time >= lo - 1e-12 && o.time <= hi + 1e-12, "{:?}", c.id);
            assert!(o.reset_applied);
        }
    }
}

#[test]
fn skipping_reset_saves_time_and_energy() {
    let (t, b) = trained_targets(2);
    for kind in DeviceKind::ALL {
        let run = |reset: bool| {
            let mut net = CrossbarNetwork::uniform(presets().get(kind)).unwrap();
            apply_initial_state(&mut net, InitialState::Used, 7);
            let cfg = TrainConfig { reset_enabled: reset, ..TrainConfig::default() };
            program_network(&mut net, &t, &b, &cfg).unwrap()
        };
        let (on, off) = (run(true), run(false));
        assert!(off.total_time < on.total_time, "{kind}");
        assert!(off.total_energy < on.total_energy, "{kind}");
    }
}

#[test]
fn all_zero_targets_cost_nothing() {
    let zero = TargetConductances { g1: [[0.0; 3]; 9], g2: [0.0; 3] };
    let b = memsim::trainer::Biases { hidden: [0.1, 0.2, 0.3], out: -0.4 };
    let mut net = CrossbarNetwork::uniform(presets().get(DeviceKind::Carbon)).unwrap();
    let r = program_network(&mut net, &zero, &b, &TrainConfig::default()).unwrap();
    assert_eq!(r.total_cycles(), 0);
    assert_eq!(r.total_time, 0.0);
    assert_eq!(r.total_energy, 0.0);
    assert!(r.converged);
    assert_eq!(net.output_neuron.v_b, -0.4);
}

#[test]
fn identical_runs_give_identical_reports() {
    let (t, b) = trained_targets(3);
    let run = || {
        let mut net = CrossbarNetwork::uniform(presets().get(DeviceKind::Tungsten)).unwrap();
        program_network(&mut net, &t, &b, &TrainConfig::default()).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn chromium_needs_fewer_cycles_to_full_scale() {
    let cfg = TrainConfig::default();
    let cycles = |kind| program_memristor(&mut Cell::pristine(presets().get(kind)), G_CAP, &cfg).unwrap().cycles as f64;
    let ratio = cycles(DeviceKind::Carbon) / cycles(DeviceKind::Chromium);
    assert!((1.4..=2.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn non_convergent_cell_keeps_its_state() {
    let cfg = TrainConfig { max_cycles: 2, ..TrainConfig::default() };
    let mut cell = Cell::pristine(presets().get(DeviceKind::Carbon));
    match program_memristor(&mut cell, G_CAP, &cfg) {
        Err(Error::NonConvergent(o)) => {
            assert_eq!(o.cycles, 2);
            assert!(!o.converged);
            assert_eq!(o.final_g, cell.conductance());
            assert!(o.final_g > cell.params.g_min);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn inference_charges_one_read_and_one_restore_per_item() {
    let (t, b) = trained_targets(4);
    let mut net = CrossbarNetwork::uniform(presets().get(DeviceKind::Carbon)).unwrap();
    let cfg = TrainConfig::default();
    program_network(&mut net, &t, &b, &cfg).unwrap();
    let before = net.clone();
    let clean = make_dataset(Task::XO, 100, 0.0, 5).unwrap();
    let r = run_inference(&net, &clean, &cfg).unwrap();
    assert_eq!(r.total, 100);
    assert_eq!(r.read_pulses, 100);
    assert_eq!(r.restore_pulses, 100);
    assert!((r.time - 100.0 * (cfg.t_read + cfg.t_restore)).abs() < 1e-9);
    assert!((r.energy_per_item - r.energy / 100.0).abs() <= 1e-15 * r.energy);
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(net, before);
    let empty = memsim::data::Dataset { items: vec![], noise_level: 0.0, seed: 0 };
    assert!(matches!(run_inference(&net, &empty, &cfg), Err(Error::EmptyDataset)));
}

#[test]
fn programmed_cells_land_within_tolerance() {
    let (t, b) = trained_targets(6);
    let mut net = CrossbarNetwork::uniform(presets().get(DeviceKind::Chromium)).unwrap();
    let cfg = TrainConfig { g_tolerance_rel: 0.1, ..TrainConfig::default() };
    program_network(&mut net, &t, &b, &cfg).unwrap();
    for id in CellId::all() {
        let target = if id.layer == 1 { t.g1[id.row][id.col] } else { t.g2[id.row] };
        if target > 0.0 {
            assert!((net.cell(id).conductance() - target).abs() <= 0.1 * target, "{id:?}");
        }
    }
}
