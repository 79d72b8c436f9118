use ganax::model::{expand_input, LayerKind, LayerSpec, Tensor};
use ganax::planner::{build_plan, classify_patterns, count_inconsequential_macs, interior_sparsity};
use proptest::prelude::*;

/// Counts consequential taps by scanning the expanded input of an all-ones tensor.
fn brute_force(layer: &LayerSpec) -> (u64, u64) {
    let ones = Tensor::<f32>::from_fn(&[1, layer.in_h, layer.in_w], |_| 1.0);
    let e = expand_input(&ones, layer).unwrap();
    let (mut total, mut hits) = (0u64, 0u64);
    for y in 0..layer.out_h() {
        for x in 0..layer.out_w() {
            for ky in 0..layer.k_h {
                for kx in 0..layer.k_w {
                    total += 1;
                    if e.at(&[0, y + ky, x + kx]) != 0.0 {
                        hits += 1;
                    }
                }
            }
        }
    }
    let ch = (layer.in_c * layer.out_c) as u64;
    (total * ch, hits * ch)
}

fn tconv() -> impl Strategy<Value = LayerSpec> {
    (1usize..8, 1usize..8, 1usize..7, 1usize..5, 0usize..6, 1usize..3, 1usize..3)
        .prop_filter_map("degenerate", |(h, w, k, s, p, ic, oc)| {
            let mut l = LayerSpec::square("p", LayerKind::TConv, h, k, s, p % k).with_channels(ic, oc);
            l.in_w = w;
            l.validate().ok().map(|_| l)
        })
}

proptest! {
    #[test]
    fn count_matches_expanded_scan(l in tconv()) {
        let stats = count_inconsequential_macs(&l).unwrap();
        let (total, hits) = brute_force(&l);
        prop_assert_eq!(stats.total_macs, total);
        prop_assert_eq!(stats.consequential_macs, hits);
    }

    #[test]
    fn every_row_has_exactly_one_pattern(l in tconv()) {
        let (patterns, assign) = classify_patterns(&l).unwrap();
        prop_assert_eq!(assign.len(), l.out_h());
        for (r, a) in assign.iter().enumerate() {
            let taps = ganax::planner::consequential_filter_rows(r, &l).unwrap();
            match a {
                Some(id) => prop_assert_eq!(&patterns[*id].filter_rows, &taps),
                None => prop_assert!(taps.is_empty()),
            }
        }
        for w in patterns.windows(2) {
            let key = |p: &ganax::planner::RowPattern| (p.filter_rows[0], p.filter_rows.len());
            prop_assert!(key(&w[0]) <= key(&w[1]));
        }
    }

    #[test]
    fn plan_schedules_each_nonzero_row_once(l in tconv(), pvs in 1usize..5) {
        let plan = build_plan(&l, pvs).unwrap();
        let mut seen: Vec<usize> = plan.pv_schedule.iter().flatten().flat_map(|b| b.rows.clone()).collect();
        seen.sort_unstable();
        let mut expect: Vec<usize> = (0..l.out_h()).filter(|r| plan.row_assignment[*r].is_some()).collect();
        expect.sort_unstable();
        prop_assert_eq!(seen, expect);
        prop_assert_eq!(plan.planned_interior_idle_fraction(&l), 0.0);
    }

    #[test]
    fn fraction_grows_with_stride(h in 2usize..7, k in 1usize..6) {
        let s1 = LayerSpec::square("a", LayerKind::TConv, h, k, 1, 0);
        prop_assume!(s1.validate().is_ok());
        prop_assert_eq!(count_inconsequential_macs(&s1).unwrap().inconsequential_fraction, 0.0);
        let s2 = LayerSpec::square("b", LayerKind::TConv, h, k, 2, 0);
        prop_assume!(s2.validate().is_ok());
        if k >= 2 {
            prop_assert!(count_inconsequential_macs(&s2).unwrap().inconsequential_fraction > 0.0);
        }
    }
}

#[test]
fn interior_pattern_count_equals_stride() {
    for (s, k, p) in [(2, 5, 2), (2, 4, 1), (3, 5, 2), (4, 5, 2), (4, 8, 3)] {
        let l = LayerSpec::square("i", LayerKind::TConv, 8, k, s, p);
        let plan = build_plan(&l, 16).unwrap();
        let expect = s.min(k);
        assert_eq!(plan.interior_patterns().count(), expect, "s={s} k={k}");
    }
}

#[test]
fn worked_example_fraction_and_idle() {
    let l = LayerSpec::square("worked", LayerKind::TConv, 4, 5, 2, 2);
    let f = count_inconsequential_macs(&l).unwrap().inconsequential_fraction;
    assert!(f > 0.5 && f < 0.8, "{f}");
    let plan = build_plan(&l, 16).unwrap();
    assert_eq!(plan.naive_interior_idle_fraction(5), 0.5);
    assert_eq!(plan.planned_interior_idle_fraction(&l), 0.0);
    let counts: Vec<usize> = plan.interior_patterns().map(|p| p.accum_cycles).collect();
    assert_eq!(counts, vec![3, 2]);
}

#[test]
fn interior_sparsity_of_stride_two_k4() {
    let l = LayerSpec::square("i", LayerKind::TConv, 8, 4, 2, 1);
    assert_eq!(interior_sparsity(&l).unwrap().inconsequential_fraction, 0.75);
}
