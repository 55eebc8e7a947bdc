use netrevive::compare::BoundaryPredicate;
use netrevive::dynamics::high_equilibrium;
use netrevive::layer_model::analytic_layers;
use netrevive::reduced::{build_reduced, find_boundary, integrate_reduced, Predictor, RayStatus};
use netrevive::{ModelSpec, NodeState};

const DT: f64 = 0.01;
const T: f64 = 60.0;

#[test]
fn every_layer_reaches_high_state() {
    let p = analytic_layers(5000, 10.0, 10.0).unwrap();
    for m in [ModelSpec::gene_normalized(), ModelSpec::mutualism_normalized()] {
        let high = high_equilibrium(&m, 10.0).unwrap();
        let s = build_reduced(&m, &p, NodeState::new(2.0, 2.0)).unwrap();
        let run = integrate_reduced(&s, DT, T, 0).unwrap();
        for (l, x) in run.final_states.iter().enumerate() {
            assert!((x.u - high.u).abs() / high.u < 0.05, "{} layer {}: {x:?}", m.name(), l + 1);
            assert!((x.v - high.v).abs() / high.v < 0.05, "{} layer {}: {x:?}", m.name(), l + 1);
        }
    }
}

#[test]
fn weak_clamp_decays() {
    let p = analytic_layers(5000, 10.0, 10.0).unwrap();
    let m = ModelSpec::gene_normalized();
    let s = build_reduced(&m, &p, NodeState::new(0.1, 0.1)).unwrap();
    let run = integrate_reduced(&s, DT, T, 0).unwrap();
    assert!(run.final_states.iter().all(|x| x.u < 0.05 && x.v < 0.05), "{:?}", run.final_states);
}

#[test]
fn boundary_separates_inactive_from_active() {
    let p = analytic_layers(5000, 10.0, 10.0).unwrap();
    let m = ModelSpec::gene_normalized();
    let curve = find_boundary(&m, &p, 3.0, 3.0, 21, 1e-3, DT, T, 10.0).unwrap();
    let pred = Predictor::new(&m, &p, DT, T, 10.0).unwrap();
    assert_eq!(curve.rays.len(), 21);
    for ray in &curve.rays {
        assert_eq!(ray.status, RayStatus::Crossing, "{ray:?}");
        let (lo, hi) = ray.crossings[0];
        assert!(hi - lo <= 1e-3);
        let r = 0.5 * (lo + hi);
        let (s, c) = ray.angle.sin_cos();
        let at = |f: f64| NodeState::new(f * r * c, f * r * s);
        assert!(!pred.predict(at(0.9)).unwrap(), "angle {}", ray.angle);
        assert!(pred.predict(at(1.1)).unwrap(), "angle {}", ray.angle);
    }
}

#[test]
fn refining_rays_keeps_shared_crossings() {
    let p = analytic_layers(5000, 10.0, 10.0).unwrap();
    let m = ModelSpec::gene_normalized();
    let coarse = find_boundary(&m, &p, 3.0, 3.0, 11, 1e-3, DT, T, 10.0).unwrap();
    let fine = find_boundary(&m, &p, 3.0, 3.0, 21, 1e-3, DT, T, 10.0).unwrap();
    for (i, ray) in coarse.rays.iter().enumerate() {
        let twin = &fine.rays[2 * i];
        assert!((twin.angle - ray.angle).abs() < 1e-12);
        let mid = |r: &netrevive::reduced::RayResult| 0.5 * (r.crossings[0].0 + r.crossings[0].1);
        assert!((mid(twin) - mid(ray)).abs() <= 2e-3, "angle {}", ray.angle);
    }
}

#[test]
fn dense_scan_agrees_with_bisection() {
    let p = analytic_layers(1000, 10.0, 10.0).unwrap();
    let m = ModelSpec::gene_normalized();
    let curve = find_boundary(&m, &p, 3.0, 3.0, 5, 1e-3, DT, T, 10.0).unwrap();
    let pred = Predictor::new(&m, &p, DT, T, 10.0).unwrap();
    for ray in &curve.rays {
        let (s, c) = ray.angle.sin_cos();
        let first = (0..=300)
            .map(|i| i as f64 * 0.01)
            .find(|&r| pred.predict(NodeState::new(r * c, r * s)).unwrap())
            .unwrap();
        let r = 0.5 * (ray.crossings[0].0 + ray.crossings[0].1);
        assert!(first >= r - 1e-3 && first - 0.01 <= r + 1e-3, "angle {}: scan {first}, bisection {r}", ray.angle);
    }
}

#[test]
fn predicate_follows_curve() {
    let p = analytic_layers(5000, 10.0, 10.0).unwrap();
    let m = ModelSpec::gene_normalized();
    let curve = find_boundary(&m, &p, 3.0, 3.0, 21, 1e-3, DT, T, 10.0).unwrap();
    let pred = BoundaryPredicate::new(&curve.points()).unwrap();
    assert!(!pred.is_active(0.0, 0.0));
    assert!(!pred.is_active(0.3, 0.3));
    assert!(pred.is_active(2.0, 2.0));
    assert!(pred.is_active(3.0, 0.0));
    assert!(pred.is_active(0.0, 3.0));
}

#[test]
fn mutualism_has_a_boundary() {
    let p = analytic_layers(5000, 10.0, 10.0).unwrap();
    let m = ModelSpec::mutualism_normalized();
    let curve = find_boundary(&m, &p, 3.0, 3.0, 11, 1e-3, DT, T, 10.0).unwrap();
    assert!(curve.curve().len() >= 2, "{:?}", curve.rays);
}
