//! Metric and comparison-geometry properties across the three chart families.

use ramified::geometry::{comparison_angle, distance, geodesic_point, Curvature, ModelPoint};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const CURVATURES: [f64; 5] = [-2.0, -1.0, 0.0, 0.5, 1.0];

fn random_point(rng: &mut ChaCha8Rng, k: Curvature) -> ModelPoint {
    // Stay inside a radius-2 disc; on the k=1 sphere that is under the
    // diameter pi, so nothing degenerates.
    let r = rng.gen_range(0.0..2.0);
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    ModelPoint::from_polar(k, r, phi).unwrap()
}

#[test]
fn distance_is_a_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kv in CURVATURES {
        let k = Curvature::new(kv).unwrap();
        for _ in 0..200 {
            let p = random_point(&mut rng, k);
            let q = random_point(&mut rng, k);
            let r = random_point(&mut rng, k);
            assert!(distance(&p, &p).unwrap().abs() < 1e-12);
            let pq = distance(&p, &q).unwrap();
            let qp = distance(&q, &p).unwrap();
            assert!((pq - qp).abs() < 1e-15, "k={kv}: asymmetric");
            assert!(pq >= 0.0);
            let pr = distance(&p, &r).unwrap();
            let rq = distance(&r, &q).unwrap();
            assert!(pq <= pr + rq + 1e-12, "k={kv}: triangle violated");
        }
    }
}

#[test]
fn geodesics_are_parameterized_by_arc_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for kv in CURVATURES {
        let k = Curvature::new(kv).unwrap();
        for _ in 0..100 {
            let p = random_point(&mut rng, k);
            let q = random_point(&mut rng, k);
            let d = distance(&p, &q).unwrap();
            let s = rng.gen_range(0.0..1.0);
            let t = rng.gen_range(0.0..1.0);
            let gs = geodesic_point(&p, &q, s).unwrap();
            let gt = geodesic_point(&p, &q, t).unwrap();
            let seg = distance(&gs, &gt).unwrap();
            assert!(
                (seg - (t - s).abs() * d).abs() < 1e-9,
                "k={kv}: segment {seg} vs {}",
                (t - s).abs() * d
            );
        }
    }
}

#[test]
fn endpoints_are_reproduced_by_the_geodesic() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for kv in CURVATURES {
        let k = Curvature::new(kv).unwrap();
        for _ in 0..50 {
            let p = random_point(&mut rng, k);
            let q = random_point(&mut rng, k);
            let g0 = geodesic_point(&p, &q, 0.0).unwrap();
            let g1 = geodesic_point(&p, &q, 1.0).unwrap();
            assert!(distance(&g0, &p).unwrap() < 1e-9);
            assert!(distance(&g1, &q).unwrap() < 1e-9);
        }
    }
}

/// Fixing the three side lengths, the comparison angle grows with the
/// curvature: thin triangles open up on the sphere and close in hyperbolic
/// planes.
#[test]
fn comparison_angle_grows_with_curvature() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..300 {
        let r1: f64 = rng.gen_range(0.3..1.2);
        let r2: f64 = rng.gen_range(0.3..1.2);
        let lo = (r1 - r2).abs() + 0.05;
        let hi = (r1 + r2 - 0.05f64).max(lo + 0.01);
        let a = rng.gen_range(lo..hi);
        let mut last = -1.0f64;
        for kv in CURVATURES {
            let k = Curvature::new(kv).unwrap();
            let angle = comparison_angle(r1, r2, a, k).unwrap();
            assert!(
                angle >= last - 1e-12,
                "angle not nondecreasing at k={kv}: {angle} < {last}"
            );
            last = angle;
        }
    }
}

#[test]
fn small_curvature_reduces_to_the_flat_chart() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for kv in [1e-6, -1e-6] {
        let k = Curvature::new(kv).unwrap();
        for _ in 0..100 {
            let r1 = rng.gen_range(0.0..2.0);
            let p1 = rng.gen_range(0.0..std::f64::consts::TAU);
            let r2 = rng.gen_range(0.0..2.0);
            let p2 = rng.gen_range(0.0..std::f64::consts::TAU);
            let a = ModelPoint::from_polar(k, r1, p1).unwrap();
            let b = ModelPoint::from_polar(k, r2, p2).unwrap();
            let fa = ModelPoint::from_polar(Curvature::flat(), r1, p1).unwrap();
            let fb = ModelPoint::from_polar(Curvature::flat(), r2, p2).unwrap();
            let curved = distance(&a, &b).unwrap();
            let flat = distance(&fa, &fb).unwrap();
            assert!(
                (curved - flat).abs() < 1e-5 * (1.0 + flat),
                "k={kv}: {curved} vs flat {flat}"
            );
        }
    }
}
