use proptest::prelude::*;

use planar_conley::integrate::flow;
use planar_conley::report::fmt_num;
use planar_conley::topology::{BoxGrid, BoxSet};
use planar_conley::*;

/// Expression source over a grammar subset that stays differentiable:
/// no `abs`, integer powers only.
fn smooth_expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        Just("y".to_string()),
        (-20i32..=20).prop_map(|k| format!("{}", k as f64 / 10.0)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (
                inner.clone(),
                inner.clone(),
                prop::sample::select(vec!["+", "-", "*", "/"])
            )
                .prop_map(|(a, b, op)| format!("({a}) {op} ({b})")),
            (inner.clone(), 0u32..4).prop_map(|(a, k)| format!("({a})^{k}")),
            (inner.clone(), prop::sample::select(vec!["sin", "cos", "exp", "sqrt"]))
                .prop_map(|(a, f)| format!("{f}({a})")),
            inner.prop_map(|a| format!("-({a})")),
        ]
    })
}

fn any_expr() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => smooth_expr(),
        1 => smooth_expr().prop_map(|s| format!("abs({s})")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parser_never_panics_on_text(s in "\\PC{0,40}") {
        let _ = parse(&s);
    }

    #[test]
    fn parser_never_panics_on_bytes(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = parse(&String::from_utf8_lossy(&bytes));
    }

    #[test]
    fn parser_never_panics_on_near_misses(s in any_expr(), cut in 0usize..64, junk in "[-+*/^()., a-z0-9]{0,3}") {
        let cut = cut.min(s.len());
        let _ = parse(&format!("{}{junk}{}", &s[..cut], &s[cut..]));
    }

    #[test]
    fn printing_round_trips(s in any_expr()) {
        let e = parse(&s).unwrap();
        let printed = e.to_string();
        let again = parse(&printed).unwrap();
        prop_assert_eq!(again.to_string(), printed);
        prop_assert_eq!(again, e);
    }

    #[test]
    fn derivatives_match_central_differences(s in smooth_expr(), x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let e = parse(&s).unwrap();
        let h = 1e-6;
        // skip points near an evaluation failure or where cancellation in
        // the difference quotient dominates
        let near_ok = (-1..=1).all(|i| (-1..=1).all(|j| {
            e.eval(x + 1e-3 * i as f64, y + 1e-3 * j as f64).map(|v| v.abs() < 1e4).unwrap_or(false)
        }));
        prop_assume!(near_ok);
        for (var, (dx, dy)) in [(Var::X, (h, 0.0)), (Var::Y, (0.0, h))] {
            let d = e.differentiate(var).unwrap();
            let Ok(sym) = d.eval(x, y) else { continue };
            let cd = (e.eval(x + dx, y + dy).unwrap() - e.eval(x - dx, y - dy).unwrap()) / (2.0 * h);
            let rel = (sym - cd).abs() / sym.abs().max(1.0);
            prop_assert!(rel < 1e-5, "{} d/{:?} at ({}, {}): {} vs {}", s, var, x, y, sym, cd);
        }
    }

    #[test]
    fn single_and_double_precision_agree(s in smooth_expr(), x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let e = parse(&s).unwrap();
        if let (Ok(a), Ok(b)) = (e.eval(x, y), e.eval(x as f32, y as f32)) {
            prop_assume!(a.abs() < 1e3);
            prop_assert!((a - b as f64).abs() < 1e-2 * a.abs().max(1.0), "{}: {} vs {}", s, a, b);
        }
    }

    #[test]
    fn compiled_tape_matches_tree(s in any_expr(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let e = parse(&s).unwrap();
        let tape = e.compile();
        match (e.eval(x, y), tape.eval(x, y)) {
            (Ok(a), Ok(b)) => prop_assert!(a == b || (a - b).abs() <= 1e-12 * a.abs().max(1.0)),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn node_flow_is_exponential_decay(x in -3.0f64..3.0, y in -3.0f64..3.0, t in 0.05f64..5.0) {
        let node = builtin("node").unwrap();
        let p0 = Point::new(x, y);
        let tr = flow(&node, p0, t, &IntegrationParams::default()).unwrap();
        prop_assert!(tr.end().dist(p0.scale((-t).exp())) < 1e-6);
        prop_assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn flows_compose(x in -2.0f64..2.0, y in -2.0f64..2.0, t1 in 0.1f64..3.0, t2 in 0.1f64..3.0) {
        let vdp = builtin("vdp").unwrap();
        let params = IntegrationParams::default();
        let whole = flow(&vdp, Point::new(x, y), t1 + t2, &params).unwrap();
        let half = flow(&vdp, Point::new(x, y), t1, &params).unwrap();
        let rest = flow(&vdp, half.end(), t2, &params).unwrap();
        prop_assert!(whole.end().dist(rest.end()) < 1e-6);
    }

    #[test]
    fn reversed_field_runs_backward(x in -2.0f64..2.0, y in -2.0f64..2.0, t in 0.1f64..2.0) {
        let radial = builtin("radial").unwrap();
        let params = IntegrationParams::default();
        let back = flow(&radial, Point::new(x, y), -t, &params).unwrap();
        let rev = flow(&radial.reversed(), Point::new(x, y), t, &params).unwrap();
        prop_assume!(back.termination == Termination::TimeBudget);
        prop_assert!(back.end().dist(rev.end()) < 1e-8);
    }

    #[test]
    fn single_precision_flow_tracks_double(x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let radial = builtin("radial").unwrap();
        let p64 = flow(&radial, Point::new(x, y), 2.0, &IntegrationParams::default()).unwrap().end();
        let params = IntegrationParamsF32 { rel_tol: 1e-6, abs_tol: 1e-7, ..Default::default() };
        let p32 = flow(&radial, PointF32::new(x as f32, y as f32), 2.0, &params).unwrap().end();
        prop_assert!((p64.x - p32.x as f64).abs() < 1e-3 && (p64.y - p32.y as f64).abs() < 1e-3);
    }

    #[test]
    fn box_set_text_round_trips(n in 4usize..20, picks in prop::collection::vec(any::<prop::sample::Index>(), 0..40)) {
        let g = BoxGrid::square(Rect::new(-1.5, -0.5, 2.0, 3.0), n).unwrap();
        let set = BoxSet::from_indices(g, picks.iter().map(|i| i.index(g.len()))).unwrap();
        let back = BoxSet::from_text(&set.to_text()).unwrap();
        prop_assert_eq!(back.to_text(), set.to_text());
        prop_assert_eq!(back.len(), set.len());
    }

    #[test]
    fn dilation_is_monotone(n in 4usize..16, picks in prop::collection::vec(any::<prop::sample::Index>(), 1..20), k in 0usize..3) {
        let g = BoxGrid::square(Rect::square(Point::zero(), 1.0), n).unwrap();
        let set = BoxSet::from_indices(g, picks.iter().map(|i| i.index(g.len()))).unwrap();
        let grown = set.dilate(k);
        prop_assert!(set.is_subset(&grown));
        prop_assert!(grown.is_subset(&set.dilate(k + 1)));
        prop_assert_eq!(set.union(&grown).len(), grown.len());
        prop_assert!(grown.difference(&set).intersection(&set).is_empty());
    }

    #[test]
    fn report_numbers_keep_six_digits(x in prop::num::f64::NORMAL) {
        let s = fmt_num(x);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs(), "{} -> {}", x, s);
        let digits = s.trim_start_matches('-').split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).collect::<String>();
        prop_assert_eq!(digits.trim_start_matches('0').len().max(6), digits.trim_start_matches('0').len());
    }
}
