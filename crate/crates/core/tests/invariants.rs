use planar_conley::classify::*;
use planar_conley::topology::complement_connected;
use planar_conley::*;

fn nk(half: f64, res: usize) -> topology::BoxSet {
    box_neighborhood(Rect::square(Point::zero(), half), res).unwrap()
}

#[test]
fn trichotomy_is_deterministic_and_exclusive() {
    let ap = AnalysisParams::default();
    for (name, half) in [("saddle", 0.5), ("node", 0.5), ("radial", 0.3), ("vdp", 0.3)] {
        let f = builtin(name).unwrap();
        let first = trichotomy(&f, &nk(half, 32), &ap).unwrap();
        let second = trichotomy(&f, &nk(half, 32), &ap).unwrap();
        assert_eq!(first.verdict, second.verdict, "{name}");
        assert_eq!(first.evidence.witness_orbits, second.evidence.witness_orbits);
        assert!(
            matches!(
                first.verdict,
                Verdict::Attractor | Verdict::Repeller | Verdict::SaddleLike
            ),
            "{name}: {}",
            first.verdict
        );
    }
}

#[test]
fn global_attractor_survives_a_fresh_basin_probe() {
    let ap = AnalysisParams::default();
    let node = builtin("node").unwrap();
    let c = classify_theorem3(&node, &nk(0.5, 32), &ap).unwrap();
    assert_eq!(c.verdict, Verdict::GlobalAttractor);
    let ev = &c.evidence;
    assert!(ev.isolated && ev.trapping_radius.is_some());
    assert!(ev.equilibria_outside.is_empty() && ev.connecting_orbit.is_some());
    let k = ev.k.as_ref().unwrap();
    let fresh = basin_probe(&node, k, ev.trapping_radius.unwrap(), 7, &ap).unwrap();
    assert_eq!((fresh.passed(), fresh.total()), (49, 49));
}

#[test]
fn saddle_is_never_an_attractor_or_repeller() {
    let ap = AnalysisParams::default();
    let saddle = builtin("saddle").unwrap();
    let n_k = nk(0.5, 32);
    let verdicts = [
        classify_theorem3(&saddle, &n_k, &ap).unwrap().verdict,
        classify_theorem4(&saddle, &n_k, Disk::new(Point::zero(), 2.0), &ap)
            .unwrap()
            .verdict,
        classify_corollary5(&saddle, &n_k, &ap).unwrap().verdict,
        trichotomy(&saddle, &n_k, &ap).unwrap().verdict,
    ];
    for v in &verdicts {
        assert!(
            !matches!(v, Verdict::Attractor | Verdict::Repeller | Verdict::GlobalAttractor),
            "{v}"
        );
    }
    assert!(matches!(
        dual_attractor(&saddle, &n_k, &ap),
        Err(Error::PreconditionNotRepeller)
    ));
}

#[test]
fn annulus_dual_has_separated_cycles_and_a_hole() {
    let ap = AnalysisParams::default();
    let d = dual_attractor(&builtin("annulus").unwrap(), &nk(0.3, 32), &ap).unwrap();
    let DualKind::Annulus { inner, outer } = &d.kind else {
        panic!("expected an annulus, got {}", d.kind.name());
    };
    assert!(inner.radius_stats.1 < outer.radius_stats.0);
    assert!(!complement_connected(&d.k_star, 1));
    // K sits in the hole of K*
    assert!(!d.k_star.contains_point(Point::zero()));
}

#[test]
fn repellers_and_attractors_have_trivial_shape() {
    let ap = AnalysisParams::default();
    for (name, half) in [("radial", 0.3), ("vdp", 0.3), ("annulus", 0.3)] {
        let c = classify_corollary5(&builtin(name).unwrap(), &nk(half, 32), &ap).unwrap();
        assert_eq!(c.verdict, Verdict::Repeller, "{name}");
        assert_eq!(c.evidence.complement_connected, Some(true), "{name}");
    }
}
