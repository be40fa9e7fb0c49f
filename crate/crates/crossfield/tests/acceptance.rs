//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured values. The suite exercises analytic oracles at desk
//! scale; heavyweight fixtures (certified section fields per flow) are
//! shared through lazy statics.

use std::sync::OnceLock;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crossfield::dynamics::{
    diam_decay, nontrivial_stable_continuum, sectional_flow, stable_point_check, stable_set,
};
use crossfield::error::Error;
use crossfield::expansivity::{
    expansive_scan, positive_expansive_check, replay_witness, ExpansivityVerdict,
};
use crossfield::flow::FlowDescriptor;
use crossfield::forms::{form_derivative, whitney_form, OneForm};
use crossfield::sections::{
    build_sections_with, build_whitney_sections, check_cross_section, section_slice, subsample,
    PipelineOptions, PipelineReport, SectionField,
};
use crossfield::space::{
    ball, field_intersect, hausdorff, net, transpose_field, CompactSample, FieldOfCompactSets,
    MetricSpace, Point,
};

const RES: f64 = 0.02;
const GOLDEN_DIR: [f64; 2] = [0.8506508083520399, 0.5257311121191336];

fn circle_flow() -> &'static FlowDescriptor {
    static F: OnceLock<FlowDescriptor> = OnceLock::new();
    F.get_or_init(|| {
        FlowDescriptor::circle_rotation(MetricSpace::circle(1.0).unwrap(), 1.0).unwrap()
    })
}

fn torus_flow() -> &'static FlowDescriptor {
    static F: OnceLock<FlowDescriptor> = OnceLock::new();
    F.get_or_init(|| {
        FlowDescriptor::torus_linear(MetricSpace::flat_torus(1.0, 1.0).unwrap(), GOLDEN_DIR)
            .unwrap()
    })
}

fn cat_flow() -> &'static FlowDescriptor {
    static F: OnceLock<FlowDescriptor> = OnceLock::new();
    F.get_or_init(|| {
        FlowDescriptor::cat_suspension(MetricSpace::cat_suspension([[2, 1], [1, 1]]).unwrap())
            .unwrap()
    })
}

fn whitney_field(flow: &FlowDescriptor) -> SectionField {
    build_whitney_sections(flow, RES, &[0.25]).unwrap()
}

fn cat_tracking() -> &'static SectionField {
    static F: OnceLock<SectionField> = OnceLock::new();
    F.get_or_init(|| whitney_field(cat_flow()))
}

fn pipeline(flow: &'static FlowDescriptor, cert_points: usize) -> (SectionField, PipelineReport) {
    let opts = PipelineOptions { cert_points, ..PipelineOptions::default() };
    build_sections_with(flow, RES, &[0.25], &opts).unwrap()
}

fn circle_pipeline() -> &'static (SectionField, PipelineReport) {
    static F: OnceLock<(SectionField, PipelineReport)> = OnceLock::new();
    F.get_or_init(|| pipeline(circle_flow(), 12))
}

fn torus_pipeline() -> &'static (SectionField, PipelineReport) {
    static F: OnceLock<(SectionField, PipelineReport)> = OnceLock::new();
    F.get_or_init(|| pipeline(torus_flow(), 12))
}

fn cat_pipeline() -> &'static (SectionField, PipelineReport) {
    static F: OnceLock<(SectionField, PipelineReport)> = OnceLock::new();
    F.get_or_init(|| pipeline(cat_flow(), 9))
}

fn random_point(rng: &mut ChaCha8Rng, flow: &FlowDescriptor) -> Point {
    match flow.space().tag() {
        crossfield::space::SpaceTag::Circle => Point::circle(rng.gen::<f64>()),
        crossfield::space::SpaceTag::Torus => Point::torus(rng.gen::<f64>(), rng.gen::<f64>()),
        _ => Point::suspension(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()),
    }
}

#[test]
fn criterion_01_whitney_form_oracle() {
    // Hand quadrature on the unit-speed rotation: the integrand for
    // y = x + 0.1 is (0.1 + s) against s, so the value is 0.1/4 and the
    // flow derivative is dist(x, y + 1/4) - dist(x, y) = 0.25.
    let flow = circle_flow();
    let w = whitney_form(flow, None, 0.25).unwrap();
    let x = Point::circle(0.0);
    let y = Point::circle(0.1);
    let value = w.value(&x, &y).unwrap();
    assert!((value - 0.025).abs() <= 1e-7, "value {value}");
    let analytic = w.derivative(&x, &y).unwrap();
    assert!((analytic - 0.25).abs() <= 1e-9, "analytic derivative {analytic}");
    let fd = form_derivative(flow, &w, &x, &y, 1e-4).unwrap();
    assert!((analytic - fd).abs() <= 1e-6, "finite difference {fd}");
    println!("criterion 01 (whitney oracle): PASS value={value:.9} derivative={analytic:.9}");
}

#[test]
fn criterion_02_time_form_additivity() {
    // |omega_z(phi_t(x)) - t - omega_z(x)| <= 1e-6 on 200 in-range triples
    // per built-in flow.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_overall = 0.0f64;
    for flow in [circle_flow(), torus_flow(), cat_flow()] {
        let w = whitney_form(flow, None, 0.25).unwrap();
        let tau = 0.0625;
        let time = OneForm::time_from_scalar(flow, w, tau, 0.9 * tau, 0.08);
        let mut done = 0;
        let mut worst = 0.0f64;
        let mut attempts = 0;
        while done < 200 {
            attempts += 1;
            assert!(attempts < 4000, "cannot find in-range triples");
            let z = random_point(&mut rng, flow);
            let frame = flow.transversal_frame(&z).unwrap();
            let mut off = [0.0f64; 3];
            for e in &frame {
                let c = (rng.gen::<f64>() - 0.5) * 0.03;
                for i in 0..3 {
                    off[i] += c * e[i];
                }
            }
            let x = flow
                .evolve(&flow.offset_point(&z, &off).unwrap(), (rng.gen::<f64>() - 0.5) * tau * 0.6)
                .unwrap();
            let a = match time.value(&z, &x) {
                Ok(v) => v,
                Err(Error::DomainEscape { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            let t = (rng.gen::<f64>() - 0.5) * 0.5 * tau;
            if (a + t).abs() > 0.8 * tau {
                continue;
            }
            let moved = flow.evolve(&x, t).unwrap();
            let b = match time.value(&z, &moved) {
                Ok(v) => v,
                Err(Error::DomainEscape { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            let defect = (b - t - a).abs();
            worst = worst.max(defect);
            assert!(defect <= 1e-6, "additivity defect {defect} on {:?}", flow.space().tag());
            done += 1;
        }
        worst_overall = worst_overall.max(worst);
    }
    println!("criterion 02 (time-form additivity): PASS worst defect {worst_overall:.2e}");
}

#[test]
fn criterion_03_antisymmetry_exact() {
    // The stage-6 form is evaluated as v(x,y) - v(y,x); the swapped sum
    // cancels exactly in floating point. 10^4 sampled pairs.
    let (field, _) = circle_pipeline();
    let form = field.form();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut done = 0;
    let mut worst = 0.0f64;
    while done < 10_000 {
        let x = Point::circle(rng.gen::<f64>());
        let y = Point::circle(x.coords()[0] + (rng.gen::<f64>() - 0.5) * 0.04);
        let (a, b) = match (form.value(&x, &y), form.value(&y, &x)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(Error::DomainEscape { .. }), _) | (_, Err(Error::DomainEscape { .. })) => continue,
            (Err(e), _) | (_, Err(e)) => panic!("{e}"),
        };
        let s = (a + b).abs();
        worst = worst.max(s);
        assert!(s <= 1e-12, "antisymmetry defect {s}");
        done += 1;
    }
    println!("criterion 03 (antisymmetry): PASS worst |omega(x,y)+omega(y,x)| = {worst:.2e}");
}

#[test]
fn criterion_04_section_certification() {
    // Pipeline output on all three built-in flows: zero cross-section
    // violations, positive monotonicity window, symmetry defect at most
    // twice the resolution (resolution 0.02).
    for (name, (field, report)) in [
        ("circle", circle_pipeline()),
        ("torus", torus_pipeline()),
        ("cat-suspension", cat_pipeline()),
    ] {
        assert!(report.eps_mono > 0.0, "{name}: eps_mono {}", report.eps_mono);
        assert!(
            report.symmetry_defect <= 2.0 * RES,
            "{name}: symmetry defect {}",
            report.symmetry_defect
        );
        // fresh spot check of the cross-section property
        let flow = field.flow();
        let domain = subsample(&net(flow.space(), flow.space().diameter() / 3.0).unwrap(), 3);
        let cs = check_cross_section(flow, field, &domain, RES).unwrap();
        assert!(cs.passed(), "{name}: violations {:?}", cs.violations);
        assert!(cs.gamma > 0.0, "{name}: gamma {}", cs.gamma);
        println!(
            "criterion 04 (section certification, {name}): PASS rho={:.4} eps_mono={:.4} defect={:.2e}",
            report.rho, report.eps_mono, report.symmetry_defect
        );
    }
}

#[test]
fn criterion_05_transpose_laws() {
    // h^TT = h within twice the matching tolerance for ball fields on all
    // three spaces, the pipeline fields, and a stable-set field; the
    // transpose distributes over intersections.
    let tol = 2.0 * RES;
    let check_double_transpose = |mk: &dyn Fn() -> FieldOfCompactSets,
                                  space: &MetricSpace,
                                  domain: &CompactSample,
                                  probes: &[Point]| {
        let ht = transpose_field(mk(), domain.clone(), tol);
        let htt = transpose_field(ht, domain.clone(), tol);
        let h = mk();
        let mut worst = 0.0f64;
        for x in probes {
            let a = h.evaluate(x).unwrap();
            let b = htt.evaluate(x).unwrap();
            worst = worst.max(hausdorff(space, &a, &b).unwrap());
        }
        worst
    };

    // ball fields
    for (flow, radius, dom_res) in [
        (circle_flow(), 0.1, 0.04),
        (torus_flow(), 0.12, 0.1),
        (cat_flow(), 0.12, 0.2),
    ] {
        let space = flow.space().clone();
        let domain = net(&space, dom_res).unwrap();
        let probes: Vec<Point> = domain.points().iter().step_by(domain.len() / 4 + 1).copied().collect();
        let mk = || FieldOfCompactSets::ball_field(space.clone(), radius, RES);
        let worst = check_double_transpose(&mk, &space, &domain, &probes);
        assert!(worst <= 2.0 * tol + 1e-9, "{:?}: ball h^TT defect {worst}", space.tag());
    }

    // pipeline fields on circle and torus
    for (field, _) in [circle_pipeline(), torus_pipeline()] {
        let space = field.flow().space().clone();
        let domain = subsample(&net(&space, 0.08).unwrap(), 60);
        let probes: Vec<Point> = domain.points().iter().step_by(domain.len() / 3 + 1).copied().collect();
        let mk = || field.as_field();
        let worst = check_double_transpose(&mk, &space, &domain, &probes);
        assert!(worst <= 2.0 * tol + 1e-9, "pipeline h^TT defect {worst}");
    }

    // stable-set field on the torus
    {
        let flow = torus_flow();
        let h = whitney_field(flow);
        let space = flow.space().clone();
        let domain = subsample(&net(&space, 0.15).unwrap(), 36);
        let probes: Vec<Point> = domain.points().iter().step_by(9).copied().collect();
        let h2 = h.clone();
        let mk = || {
            let h = h2.clone();
            let flow = flow.clone();
            FieldOfCompactSets::custom(
                space.clone(),
                RES,
                crossfield::space::Regularity::Semicontinuous,
                std::sync::Arc::new(move |x: &Point| {
                    Ok(stable_set(&flow, &h, x, 0.04, 1.5, RES)?.members)
                }),
            )
        };
        let worst = check_double_transpose(&mk, &space, &domain, &probes);
        assert!(worst <= 2.0 * tol + 1e-9, "stable-set h^TT defect {worst}");
    }

    // transpose distributes over intersection
    {
        let flow = torus_flow();
        let space = flow.space().clone();
        let domain = net(&space, 0.1).unwrap();
        let mk1 = || FieldOfCompactSets::ball_field(space.clone(), 0.1, RES);
        let mk2 = || torus_pipeline().0.with_thickness(0.12).as_field();
        let lhs = transpose_field(
            field_intersect(mk1(), mk2(), RES / 2.0).unwrap(),
            domain.clone(),
            tol,
        );
        let rhs = field_intersect(
            transpose_field(mk1(), domain.clone(), tol),
            transpose_field(mk2(), domain.clone(), tol),
            RES / 2.0,
        )
        .unwrap();
        let mut worst = 0.0f64;
        for x in domain.points().iter().step_by(domain.len() / 4 + 1) {
            let a = lhs.evaluate(x).unwrap();
            let b = rhs.evaluate(x).unwrap();
            worst = worst.max(hausdorff(&space, &a, &b).unwrap());
        }
        assert!(worst <= 3.0 * tol + 1e-9, "intersection transpose defect {worst}");
        println!("criterion 05 (transpose laws): PASS");
    }
}

#[test]
fn criterion_06_reparametrization_refinement_stability() {
    // Halving dt changes h(T) by at most 1e-6 on 50 tracked trajectories
    // per flow.
    let mut worst = 0.0f64;
    for flow in [circle_flow(), torus_flow(), cat_flow()] {
        let field = if flow.space().tag() == crossfield::space::SpaceTag::Suspension {
            cat_tracking().clone()
        } else {
            whitney_field(flow)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut pairs: Vec<(Point, Point)> = Vec::new();
        let horizon = 1.5;
        while pairs.len() < 50 {
            let x = random_point(&mut rng, flow);
            let eps = 0.08;
            let members =
                stable_set(flow, &field, &x, eps, horizon, RES).unwrap().members;
            for y in members.points().iter().take(10) {
                pairs.push((x, *y));
                if pairs.len() >= 50 {
                    break;
                }
            }
        }
        let dt = field.tau / 4.0;
        let mut tracked = 0;
        for (x, y) in &pairs {
            let slice = section_slice(&field, 0.08);
            let a = sectional_flow(flow, &slice, x, y, horizon, dt).unwrap();
            let b = sectional_flow(flow, &slice, x, y, horizon, dt / 2.0).unwrap();
            if a.tracked() && b.tracked() {
                tracked += 1;
                let d = (a.final_h() - b.final_h()).abs();
                worst = worst.max(d);
                assert!(d <= 1e-6, "h(T) moved by {d} under refinement");
            }
        }
        assert!(tracked >= 50, "only {tracked} trajectories tracked under both steps");
    }
    println!("criterion 06 (refinement stability): PASS worst |dh| = {worst:.2e}");
}

#[test]
fn criterion_07_cat_contraction_slope() {
    // Stable-set diameter decays at the rate of the gluing eigenvalue:
    // slope of log-diameter over T in [0, 6] within 5% of -log((3+sqrt 5)/2).
    let flow = cat_flow();
    let h = cat_tracking();
    let x = Point::suspension(0.31, 0.61, 0.41);
    let grid: Vec<f64> = (1..=6).map(|i| i as f64).collect();
    let curve = diam_decay(flow, h, &x, 0.2, &grid).unwrap();
    let slope = curve.log_slope.expect("decay slope");
    let expected = -((3.0 + 5.0f64.sqrt()) / 2.0).ln();
    let rel = ((slope - expected) / expected).abs();
    assert!(rel <= 0.05, "slope {slope} vs {expected} (relative error {rel})");
    println!("criterion 07 (contraction slope): PASS slope={slope:.5} expected={expected:.5}");
}

#[test]
fn criterion_08_expansivity_triptych() {
    // cat: expansive at horizon (delta 0.1, T 8, resolution 0.02)
    {
        let flow = cat_flow();
        let h = cat_tracking();
        let domain = CompactSample::new(
            flow.space(),
            vec![Point::suspension(0.31, 0.61, 0.41), Point::suspension(0.11, 0.82, 0.03)],
            0.1,
        )
        .unwrap();
        let scan = expansive_scan(flow, h, &domain, &[0.1], 8.0).unwrap();
        let ExpansivityVerdict::ExpansiveAtHorizon(d) = scan.verdict else {
            panic!("cat suspension: expected expansive, got {:?}", scan.verdict);
        };
        assert_eq!(d, 0.1);
        assert!(scan.per_delta[0].1 <= 2.0 * RES);
    }
    // torus: not expansive, with a replayable witness
    {
        let flow = torus_flow();
        let h = whitney_field(flow);
        let domain =
            CompactSample::new(flow.space(), vec![Point::torus(0.2, 0.6)], 0.1).unwrap();
        let scan = expansive_scan(flow, &h, &domain, &[0.05], 4.0).unwrap();
        let ExpansivityVerdict::NotExpansive { witness_base, witness } = scan.verdict else {
            panic!("torus: expected a witness, got {:?}", scan.verdict);
        };
        assert!(flow.space().dist(&witness_base, &witness).unwrap() > 2.0 * RES);
        assert!(replay_witness(flow, &h, &witness_base, &witness, 0.05, 4.0).unwrap());
    }
    // positive expansivity holds exactly on the circle
    {
        let checks: [(&FlowDescriptor, SectionField, bool); 3] = [
            (circle_flow(), whitney_field(circle_flow()), true),
            (torus_flow(), whitney_field(torus_flow()), false),
            (cat_flow(), cat_tracking().clone(), false),
        ];
        for (flow, h, expected) in checks {
            let domain = subsample(&net(flow.space(), flow.space().diameter() / 2.0).unwrap(), 2);
            let rep = positive_expansive_check(flow, &h, &domain, 0.1, 6.0).unwrap();
            assert_eq!(
                rep.positive_expansive_at_horizon,
                expected,
                "{:?}: worst stable diameter {}",
                flow.space().tag(),
                rep.worst_diameter
            );
            assert!(rep.consistent_with_topology);
        }
    }
    println!("criterion 08 (expansivity triptych): PASS");
}

#[test]
fn criterion_09_stable_point_dichotomy() {
    let grid = [0.02, 0.05];
    // torus: stable at every sampled point
    {
        let flow = torus_flow();
        let h = whitney_field(flow);
        for x in [Point::torus(0.1, 0.3), Point::torus(0.6, 0.8), Point::torus(0.4, 0.1)] {
            let rep = stable_point_check(flow, &h, &x, 0.1, &grid, 6.0).unwrap();
            assert!(rep.stable, "torus point {x:?} not stable");
            assert!(!rep.asymptotic, "isometric flow cannot be asymptotically stable");
        }
    }
    // cat suspension: stable nowhere
    {
        let flow = cat_flow();
        let h = cat_tracking();
        for x in [
            Point::suspension(0.31, 0.61, 0.41),
            Point::suspension(0.72, 0.15, 0.9),
            Point::suspension(0.05, 0.45, 0.2),
        ] {
            let rep = stable_point_check(flow, h, &x, 0.2, &[0.02, 0.05, 0.1], 6.0).unwrap();
            assert!(!rep.stable, "cat point {x:?} reported stable at delta {}", rep.delta_star);
        }
    }
    // circle: stable (and, per criterion 08, expansive): the trivial case
    {
        let flow = circle_flow();
        let h = whitney_field(flow);
        let rep = stable_point_check(flow, &h, &Point::circle(0.25), 0.1, &grid, 6.0).unwrap();
        assert!(rep.stable);
    }
    println!("criterion 09 (stable-point dichotomy): PASS");
}

#[test]
fn criterion_10_nontrivial_stable_continuum() {
    // On the suspension every sampled point carries a connected stable
    // component of diameter at least 0.1 (eps 0.2, T 6, resolution 0.02).
    let flow = cat_flow();
    let h = cat_tracking();
    let mut worst = f64::INFINITY;
    for x in [
        Point::suspension(0.31, 0.61, 0.41),
        Point::suspension(0.72, 0.15, 0.9),
        Point::suspension(0.05, 0.45, 0.2),
    ] {
        let rep = nontrivial_stable_continuum(flow, h, &x, 0.2, 0.1, 6.0).unwrap();
        assert!(
            rep.nontrivial,
            "component through {x:?} has diameter {} < 0.1",
            rep.diameter
        );
        worst = worst.min(rep.diameter);
    }
    println!("criterion 10 (stable continuum): PASS smallest diameter {worst:.4}");
}

#[test]
fn criterion_11_hausdorff_oracle_equivalence() {
    // The short-circuiting kernel must equal the plain O(nm) double loop
    // exactly on 100 random sample pairs of up to 500 points each.
    fn brute(space: &MetricSpace, k: &CompactSample, l: &CompactSample) -> f64 {
        let side = |from: &CompactSample, to: &CompactSample| {
            let mut worst = 0.0f64;
            for p in from.points() {
                let mut m = f64::INFINITY;
                for q in to.points() {
                    m = m.min(space.dist(p, q).unwrap());
                }
                worst = worst.max(m);
            }
            worst
        };
        side(k, l).max(side(l, k))
    }
    let space = MetricSpace::flat_torus(1.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.gen_range(1..=500);
        let m = rng.gen_range(1..=500);
        let mk = |rng: &mut ChaCha8Rng, count: usize| {
            let pts: Vec<Point> =
                (0..count).map(|_| Point::torus(rng.gen(), rng.gen())).collect();
            CompactSample::new(&space, pts, 0.01).unwrap()
        };
        let k = mk(&mut rng, n);
        let l = mk(&mut rng, m);
        let fast = hausdorff(&space, &k, &l).unwrap();
        let slow = brute(&space, &k, &l);
        assert_eq!(fast.to_bits(), slow.to_bits(), "fast {fast} vs brute {slow}");
    }
    println!("criterion 11 (hausdorff kernels agree): PASS");
}

// Criterion 12 (byte-identical manifests for repeated scenario runs) lives
// in the runner crate's acceptance suite, next to the binary it drives.

#[test]
fn supporting_invariants_ball_nesting_and_one_parameter_field() {
    // monotone nesting of balls and the endpoints of the one-parameter
    // neighborhood field, across spaces
    for flow in [circle_flow(), torus_flow(), cat_flow()] {
        let space = flow.space();
        let x = match space.tag() {
            crossfield::space::SpaceTag::Circle => Point::circle(0.2),
            crossfield::space::SpaceTag::Torus => Point::torus(0.2, 0.7),
            _ => Point::suspension(0.2, 0.7, 0.4),
        };
        let small = ball(space, &x, 0.05, RES).unwrap();
        let big = ball(space, &x, 0.11, RES).unwrap();
        let excess = crossfield::space::one_sided_excess(space, &small, &big).unwrap();
        assert!(excess <= RES + 1e-9, "{:?} nesting excess {excess}", space.tag());
        let n0 =
            crossfield::space::one_parameter_neighborhoods(space, 0.0, &x, RES).unwrap();
        assert_eq!(n0.len(), 1);
    }
    println!("supporting invariants: PASS");
}
