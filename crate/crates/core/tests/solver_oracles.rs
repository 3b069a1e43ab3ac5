//! Solver-level properties: bracket validity, metric structure, scaling,
//! weight comparability, curved-space angle inequalities, and an independent
//! topology-count oracle.

use ramified::bounds::k_i_lower_bound;
use ramified::geometry::{Curvature, ModelPoint};
use ramified::measures::AtomicMeasure;
use ramified::plans::j_alpha;
use ramified::solver::{enumerate_topologies, solve, SolverConfig};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

fn flat(x: f64, y: f64) -> ModelPoint {
    ModelPoint::flat(x, y).unwrap()
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize, total: f64) -> AtomicMeasure {
    let mut masses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = masses.iter().sum();
    for m in &mut masses {
        *m *= total / s;
    }
    let atoms = masses
        .into_iter()
        .map(|m| (flat(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)), m))
        .collect();
    AtomicMeasure::new(atoms).unwrap()
}

fn random_curved_measure(
    rng: &mut ChaCha8Rng,
    k: Curvature,
    n: usize,
    total: f64,
) -> AtomicMeasure {
    let mut masses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = masses.iter().sum();
    for m in &mut masses {
        *m *= total / s;
    }
    let atoms = masses
        .into_iter()
        .map(|m| {
            let r = rng.gen_range(0.3..1.4);
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            (ModelPoint::from_polar(k, r, phi).unwrap(), m)
        })
        .collect();
    AtomicMeasure::new(atoms).unwrap()
}

#[test]
fn bracket_is_valid_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let cfg = SolverConfig::default();
    for kv in [-1.0, 0.0, 0.5] {
        let k = Curvature::new(kv).unwrap();
        for _ in 0..10 {
            let a = random_curved_measure(&mut rng, k, 2, 1.0);
            let b = random_curved_measure(&mut rng, k, 2, 1.0);
            for alpha in [-0.5, 0.3, 0.8] {
                let r = solve(&a, &b, alpha, &cfg).unwrap();
                assert!(
                    r.lower_bound <= r.cost + 1e-12,
                    "k={kv} alpha={alpha}: lower {} > cost {}",
                    r.lower_bound,
                    r.cost
                );
                assert!(r.path.is_valid());
            }
        }
    }
}

#[test]
fn metric_structure_on_two_atom_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let cfg = SolverConfig::default();
    for _ in 0..30 {
        let a = random_measure(&mut rng, 2, 1.0);
        let b = random_measure(&mut rng, 2, 1.0);
        let c = random_measure(&mut rng, 2, 1.0);
        let ab = solve(&a, &b, 0.6, &cfg).unwrap().cost;
        let ac = solve(&a, &c, 0.6, &cfg).unwrap().cost;
        let cb = solve(&c, &b, 0.6, &cfg).unwrap().cost;
        assert!(ab <= ac + cb + 1e-6, "triangle: {ab} > {ac} + {cb}");

        // The best path never costs more than the best plan.
        let (j, _) = j_alpha(&a, &b, 0.6).unwrap();
        assert!(ab <= j + 1e-8, "path {ab} above plan {j}");

        // Lower alpha weighs mass harder; on probability measures the
        // distance can only grow.
        let ab_low = solve(&a, &b, 0.3, &cfg).unwrap().cost;
        assert!(ab_low >= ab - 1e-9, "monotonicity: {ab_low} < {ab}");
    }
}

#[test]
fn cost_scales_with_mass_to_the_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let cfg = SolverConfig::default();
    for _ in 0..10 {
        let a = random_measure(&mut rng, 2, 1.0);
        let b = random_measure(&mut rng, 2, 1.0);
        let lambda = rng.gen_range(0.2..5.0);
        for alpha in [0.35, 0.7] {
            let base = solve(&a, &b, alpha, &cfg).unwrap().cost;
            let scaled = solve(&a.scale(lambda).unwrap(), &b.scale(lambda).unwrap(), alpha, &cfg)
                .unwrap()
                .cost;
            assert!(
                (scaled - lambda.powf(alpha) * base).abs() <= 1e-9 * base.max(1.0),
                "alpha={alpha} lambda={lambda}: {scaled} vs {}",
                lambda.powf(alpha) * base
            );
        }
    }
}

#[test]
fn branch_weights_are_comparable_for_negative_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let cfg = SolverConfig::default();
    for alpha in [-0.5, -1.0] {
        let bound = k_i_lower_bound(alpha).unwrap();
        for _ in 0..12 {
            let a = random_measure(&mut rng, 3, 1.0);
            let b = AtomicMeasure::new(vec![(
                flat(rng.gen_range(-0.5..0.5), rng.gen_range(-4.0..-2.5)),
                1.0,
            )])
            .unwrap();
            let r = solve(&a, &b, alpha, &cfg).unwrap();
            for check in &r.angle_report {
                let w1 = r.path.edges()[check.edge_a].weight;
                let w2 = r.path.edges()[check.edge_b].weight;
                let frac = w1.min(w2) / (w1 + w2);
                assert!(
                    frac >= bound - 1e-6,
                    "alpha={alpha}: fraction {frac} below {bound}"
                );
            }
        }
    }
}

#[test]
fn curved_optima_satisfy_the_angle_inequalities() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let cfg = SolverConfig::default();
    for kv in [0.5, -1.0] {
        let k = Curvature::new(kv).unwrap();
        for _ in 0..8 {
            let a = random_curved_measure(&mut rng, k, 2, 1.0);
            let b = random_curved_measure(&mut rng, k, 1, 1.0);
            for alpha in [0.3, 0.6] {
                let r = solve(&a, &b, alpha, &cfg).unwrap();
                for check in &r.angle_report {
                    assert!(
                        check.pass,
                        "k={kv} alpha={alpha}: angle {} below bound {}",
                        check.angle, check.pair_bound
                    );
                    assert!(
                        check.lemma_pass,
                        "k={kv} alpha={alpha}: separation slack {}",
                        check.separation_slack
                    );
                }
                for check in &r.degree_report {
                    assert!(check.pass, "degree {} over bound", check.degree);
                }
            }
        }
    }
}

/// Independent count of tree shapes: decode every raw sequence over the
/// vertex alphabet, keep trees whose extra vertices have degree >= 3 and
/// whose edges never join two sources or two sinks, and deduplicate by brute
/// force over branch relabelings.
fn raw_count(m: usize, l: usize) -> usize {
    fn decode(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
        let mut degree = vec![1usize; n];
        for &s in seq {
            degree[s] += 1;
        }
        let mut edges = Vec::new();
        let mut used = vec![false; n];
        for &s in seq {
            let leaf = (0..n).find(|&v| degree[v] == 1 && !used[v]).unwrap();
            used[leaf] = true;
            degree[leaf] -= 1;
            degree[s] -= 1;
            edges.push((leaf.min(s), leaf.max(s)));
        }
        let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1 && !used[v]).collect();
        edges.push((rest[0], rest[1]));
        edges
    }

    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.is_empty() {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for (i, &x) in items.iter().enumerate() {
            let mut rest = items.to_vec();
            rest.remove(i);
            for mut tail in permutations(&rest) {
                tail.insert(0, x);
                out.push(tail);
            }
        }
        out
    }

    let t = m + l;
    let mut shapes: HashSet<Vec<(usize, usize)>> = HashSet::new();
    for b in 0..=(t - 2) {
        let n = t + b;
        let len = n - 2;
        let total = n.pow(len as u32);
        'seq: for code in 0..total {
            let mut seq = Vec::with_capacity(len);
            let mut rem = code;
            for _ in 0..len {
                seq.push(rem % n);
                rem /= n;
            }
            let edges = if n == 2 { vec![(0, 1)] } else { decode(&seq, n) };
            let mut degree = vec![0usize; n];
            for &(u, v) in &edges {
                degree[u] += 1;
                degree[v] += 1;
                if (u < m && v < m) || (m <= u && u < t && m <= v && v < t) {
                    continue 'seq;
                }
            }
            if (t..n).any(|v| degree[v] < 3) {
                continue;
            }
            // Canonical form: minimum edge list over branch relabelings.
            let branches: Vec<usize> = (t..n).collect();
            let canon = permutations(&branches)
                .into_iter()
                .map(|perm| {
                    let map = |v: usize| if v < t { v } else { perm[v - t] };
                    let mut es: Vec<(usize, usize)> = edges
                        .iter()
                        .map(|&(u, v)| {
                            let (a, b) = (map(u), map(v));
                            (a.min(b), a.max(b))
                        })
                        .collect();
                    es.sort_unstable();
                    es
                })
                .min()
                .unwrap();
            shapes.insert(canon);
        }
    }
    shapes.len()
}

#[test]
fn topology_enumeration_matches_the_raw_oracle() {
    for (m, l) in [(1usize, 1usize), (2, 1), (2, 2), (3, 1)] {
        let fast = enumerate_topologies(m, l, 7).unwrap().len();
        let slow = raw_count(m, l);
        assert_eq!(fast, slow, "(m,l)=({m},{l})");
    }
}
