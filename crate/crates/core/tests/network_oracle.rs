use memsim::data::{make_dataset, make_pattern, Glyph, Task};
use memsim::device::{DeviceKind, DeviceParams, MemristorState, Presets, DEFAULT_V_READ};
use memsim::network::*;
use memsim::trainer::{map_weights, unmap_weights, ReferenceWeights, TargetConductances, W_MAX};
use proptest::prelude::*;

/// Carbon with a zero floor so any target in [0, 2.5 mS] is representable.
fn floorless() -> DeviceParams {
    DeviceParams { g_min: 0.0, ..Presets::embedded().get(DeviceKind::Carbon) }
}

/// Writes targets straight into the cell states (no pulse programming).
fn install(t: &TargetConductances, b_hidden: [f64; 3], b_out: f64) -> CrossbarNetwork {
    let p = floorless();
    let mut net = CrossbarNetwork::uniform(p).unwrap();
    for id in CellId::all() {
        let g = if id.layer == 1 { t.g1[id.row][id.col] } else { t.g2[id.row] };
        net.cell_mut(id).state = MemristorState::new(g / (p.g_max - p.g_min), true).unwrap();
    }
    net.set_biases(b_hidden, b_out).unwrap();
    net
}

fn weights() -> impl Strategy<Value = ReferenceWeights> {
    (
        proptest::collection::vec(0.0..=W_MAX, 30),
        proptest::collection::vec(-6.0..6.0f64, 4),
    )
        .prop_map(|(ws, bs)| {
            let mut v = ws;
            v.extend(bs);
            ReferenceWeights::from_vec(&v).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn crossbar_matches_reference_forward(w in weights(), px in proptest::array::uniform9(any::<bool>())) {
        let (t, b) = map_weights(&w, DEFAULT_V_READ).unwrap();
        let net = install(&t, b.hidden, b.out);
        let pruned = unmap_weights(&t, &b, DEFAULT_V_READ);
        let (h_ref, out_ref) = pruned.forward(&px, DEFAULT_V_READ);
        let tr = forward_trace(&net, &px);
        for (h, r) in tr.hidden.iter().zip(&h_ref) {
            prop_assert!((h - r).abs() <= 1e-9);
        }
        prop_assert!((tr.output - out_ref).abs() <= 1e-9, "{} vs {}", tr.output, out_ref);
    }

    #[test]
    fn map_round_trips(w in weights()) {
        let (t, b) = map_weights(&w, DEFAULT_V_READ).unwrap();
        let back = unmap_weights(&t, &b, DEFAULT_V_READ);
        let (a, z) = (w.to_vec(), back.to_vec());
        for k in 0..30 {
            if t.g1.iter().flatten().chain(t.g2.iter()).nth(k).copied() == Some(0.0) {
                prop_assert!(a[k] < 1e-2);
                prop_assert_eq!(z[k], 0.0);
            } else {
                prop_assert!((a[k] - z[k]).abs() <= 1e-12 * a[k]);
            }
        }
        prop_assert_eq!(&a[30..], &z[30..]);
    }

    #[test]
    fn neuron_is_closed_form(i in -1e-3..1e-3f64, vb in -10.0..10.0f64) {
        let got = neuron_activation(i, &NeuronParams::new(vb).unwrap());
        let want = 1.0 / (1.0 + (-(1e4 * i + vb)).exp());
        prop_assert!(((got - want) / want).abs() <= 1e-12);
        prop_assert!(got > 0.0 && got < 1.0);
    }

    #[test]
    fn output_is_monotone_in_every_pixel(w in weights(), px in proptest::array::uniform9(any::<bool>()), k in 0usize..9) {
        // Non-negative conductances and increasing activations: lighting a
        // pixel can never lower the output.
        let (t, b) = map_weights(&w, DEFAULT_V_READ).unwrap();
        let net = install(&t, b.hidden, b.out);
        let (mut off, mut on) = (px, px);
        off[k] = false;
        on[k] = true;
        prop_assert!(forward(&net, &on) >= forward(&net, &off));
    }
}

#[test]
fn dark_image_output_closed_form() {
    let mut t = TargetConductances { g1: [[1e-3; 3]; 9], g2: [2e-5, 4e-5, 6e-5] };
    t.g1[4][1] = 2e-3;
    let (bh, bo) = ([0.3, -1.2, 2.0], -0.7);
    let net = install(&t, bh, bo);
    let z: f64 = (0..3).map(|j| 1e4 * t.g2[j] * sigmoid(bh[j])).sum();
    let want = sigmoid(z + bo);
    assert!((forward(&net, &[false; 9]) - want).abs() < 1e-13);
}

#[test]
fn column_current_is_sum_of_active_rows() {
    let col = [1e-3, 2e-3, 0.5e-3];
    let i = column_current(&col, &[true, false, true], 0.1).unwrap();
    assert!((i - 1.5e-4).abs() < 1e-18);
    assert!(column_current(&col, &[true, false], 0.1).is_err());
}

#[test]
fn reference_weights_classify_clean_glyphs() {
    // Centre-pixel detector: X lights the centre, O does not.
    let mut w = ReferenceWeights::zeros();
    w.w1[4] = [2.5, 0.0, 0.0];
    w.b_hidden = [-1.25, -10.0, -10.0];
    w.w2 = [2.5, 0.0, 0.0];
    w.b_out = -12.5;
    let (t, b) = map_weights(&w, DEFAULT_V_READ).unwrap();
    let net = install(&t, b.hidden, b.out);
    assert_eq!(classify(forward(&net, &make_pattern(Glyph::X).pixels)), Label::ClassA);
    assert_eq!(classify(forward(&net, &make_pattern(Glyph::O).pixels)), Label::ClassB);
    let data = make_dataset(Task::XO, 100, 0.0, 3).unwrap();
    assert!(data.items.iter().all(|it| classify(forward(&net, &it.pixels)) == it.label));
}
