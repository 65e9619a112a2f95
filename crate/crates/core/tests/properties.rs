use proptest::collection::vec;
use proptest::prelude::*;

use sedkit_core::augment::{or_binarized, FrameMap};
use sedkit_core::eval::{collar_f1, decode_events, median_filter_binary, CollarParams, EventList};
use sedkit_core::semisup::{ema_update, rampup, LrSchedule};

/// Per-class event lists on a 1/64 s grid (so shifts and differences are exact),
/// onsets in [0, 9) s and durations up to 3 s.
fn events(max_classes: usize) -> impl Strategy<Value = EventList> {
    (1..=max_classes).prop_flat_map(|c| {
        vec(vec((0u32..576, 1u32..192), 0..5), c).prop_map(|classes| {
            let mut ev = EventList::new(classes.len());
            for (k, list) in classes.into_iter().enumerate() {
                for (on, d) in list {
                    ev.push(k, on as f64 / 64.0, (on + d) as f64 / 64.0);
                }
            }
            ev.sort();
            ev
        })
    })
}

fn map_strategy() -> impl Strategy<Value = (FrameMap, usize)> {
    (1usize..40).prop_flat_map(|n| {
        prop_oneof![
            Just(FrameMap::identity(n)),
            (0.0f64..1.0).prop_map(move |f| FrameMap::roll(n, f)),
            (0.6f64..1.6).prop_map(move |f| FrameMap::rescale(n, f)),
        ]
        .prop_map(move |m| (m, n))
    })
}

proptest! {
    #[test]
    fn perfect_estimate_scores_one(reference in events(4)) {
        let r = collar_f1(&reference, &reference, &CollarParams::default());
        if reference.total() > 0 {
            prop_assert_eq!(r.macro_f1, 1.0);
        }
    }

    #[test]
    fn f1_invariant_under_translation(reference in events(3), estimate in events(3), quarters in -20i32..20) {
        prop_assume!(reference.n_classes() == estimate.n_classes());
        let p = CollarParams::default();
        let dt = quarters as f64 / 4.0;
        let a = collar_f1(&reference, &estimate, &p);
        let b = collar_f1(&reference.shifted(dt), &estimate.shifted(dt), &p);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn matching_is_one_to_one(reference in events(3), estimate in events(3)) {
        prop_assume!(reference.n_classes() == estimate.n_classes());
        let r = collar_f1(&reference, &estimate, &CollarParams::default());
        for (c, m) in r.per_class.iter().enumerate() {
            prop_assert!(m.tp <= reference.classes[c].len().min(estimate.classes[c].len()));
            prop_assert_eq!(m.tp + m.fn_, reference.classes[c].len());
            prop_assert_eq!(m.tp + m.fp, estimate.classes[c].len());
        }
    }

    #[test]
    fn decoded_events_tile_the_grid(bits in vec(0u8..2, 1..90), c in 1usize..4) {
        let n = bits.len() / c;
        prop_assume!(n > 0);
        let grid = &bits[..n * c];
        let ev = decode_events(grid, n, c, 0.064);
        for k in 0..c {
            let active: usize = (0..n).map(|t| grid[t * c + k] as usize).sum();
            let covered: f64 = ev.classes[k].iter().map(|e| e.duration() / 0.064).sum();
            prop_assert!((covered - active as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn median_filter_keeps_shape_and_values(bits in vec(0u8..2, 1..120), kernel in prop_oneof![Just(1usize), Just(3), Just(5), Just(7)]) {
        let out = median_filter_binary(&bits, bits.len(), 1, kernel);
        prop_assert_eq!(out.len(), bits.len());
        prop_assert!(out.iter().all(|b| *b <= 1));
        if kernel == 1 {
            prop_assert_eq!(out, bits);
        }
    }

    #[test]
    fn frame_map_adjoint((map, n) in map_strategy(), x in vec(-1.0f64..1.0, 120), y in vec(-1.0f64..1.0, 120), c in 1usize..4) {
        // <M x, y> == <x, M^T y>
        let x = &x[..n * c];
        let y = &y[..n * c];
        let mx = map.apply(x, c, 0.0);
        let mut mty = vec![0.0; n * c];
        map.adjoint_add(y, c, &mut mty);
        let lhs: f64 = mx.iter().zip(y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&mty).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn composed_maps_apply_in_order((a, n) in map_strategy(), f in 0.0f64..1.0, x in vec(0u8..2, 40)) {
        let b = FrameMap::roll(n, f);
        let x = &x[..n];
        prop_assert_eq!(a.then(&b).apply(x, 1, 0), b.apply(&a.apply(x, 1, 0), 1, 0));
    }

    #[test]
    fn or_binarized_is_monotone(x in vec(0.0f64..1.0, 1..30)) {
        let zeros = vec![0.0; x.len()];
        let ones = vec![1.0; x.len()];
        let bin: Vec<f64> = x.iter().map(|p| if *p >= 0.5 { 1.0 } else { 0.0 }).collect();
        prop_assert_eq!(or_binarized(&x, &zeros), bin);
        prop_assert_eq!(or_binarized(&x, &ones), ones);
    }

    #[test]
    fn ema_stays_between_teacher_and_student(t in vec(-3.0f64..3.0, 1..20), s in -3.0f64..3.0, alpha in 0.0f64..1.0) {
        let student = vec![s; t.len()];
        let mut teacher = t.clone();
        ema_update(&mut teacher, &student, alpha).unwrap();
        for (new, old) in teacher.iter().zip(&t) {
            prop_assert!(*new >= old.min(s) - 1e-12 && *new <= old.max(s) + 1e-12);
        }
    }

    #[test]
    fn schedules_are_bounded(epoch in 0.0f64..300.0, epochs in 1usize..300) {
        let lr = LrSchedule::scaled(epochs);
        let v = lr.at(epoch);
        prop_assert!(v > 0.0 && v <= 1e-3);
        let r = rampup(epoch, 50.0);
        prop_assert!(r > 0.0 && r <= 1.0);
        prop_assert!(rampup(epoch + 1.0, 50.0) >= r);
    }
}
