//! Transport plans between atomic measures and the exact quasimetric
//!
//! ```text
//! J_alpha(a, b) = min { H_alpha(gamma) : gamma in Plan(a, b) },
//! H_alpha(gamma) = sum_ij gamma_ij^alpha d(x_i, y_j)
//! ```
//!
//! For 0 <= alpha < 1, H_alpha is concave on the transportation polytope, so
//! the minimum sits at an extreme point. Extreme points are supported on
//! spanning forests of the complete bipartite graph; enumerating the spanning
//! trees (forests arise as their degenerate zero entries) and solving the
//! margin equations on each gives the exact minimum for small instances.

use crate::error::{Error, Result};
use crate::geometry::distance;
use crate::measures::AtomicMeasure;
use rayon::prelude::*;

/// Largest `m + l` the exact enumeration accepts by default.
pub const DEFAULT_PLAN_LIMIT: usize = 12;

/// Tolerance on margin sums, scaled by total mass.
pub const MARGIN_TOLERANCE: f64 = 1e-9;

/// Entries at or below this (scaled) threshold count as off-support.
const SUPPORT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct TransportPlan {
    gamma: Vec<Vec<f64>>,
    row_margins: Vec<f64>,
    col_margins: Vec<f64>,
}

impl TransportPlan {
    /// Validating constructor: entries nonnegative (tiny negative rounding is
    /// clamped), margin sums matching the stated margins.
    pub fn new(gamma: Vec<Vec<f64>>, row_margins: Vec<f64>, col_margins: Vec<f64>) -> Result<Self> {
        let m = row_margins.len();
        let l = col_margins.len();
        if gamma.len() != m || gamma.iter().any(|row| row.len() != l) {
            return Err(Error::InvalidArgument(
                "plan matrix shape does not match margins".into(),
            ));
        }
        let total: f64 = row_margins.iter().sum();
        let tol = MARGIN_TOLERANCE * total.max(1.0);
        let mut gamma = gamma;
        for row in &mut gamma {
            for v in row {
                if !v.is_finite() || *v < -tol {
                    return Err(Error::InvalidArgument(format!("plan entry {v}")));
                }
                *v = v.max(0.0);
            }
        }
        for (i, &mi) in row_margins.iter().enumerate() {
            let s: f64 = gamma[i].iter().sum();
            if (s - mi).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "row {i} sums to {s}, margin is {mi}"
                )));
            }
        }
        for (j, &nj) in col_margins.iter().enumerate() {
            let s: f64 = gamma.iter().map(|row| row[j]).sum();
            if (s - nj).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "column {j} sums to {s}, margin is {nj}"
                )));
            }
        }
        Ok(TransportPlan {
            gamma,
            row_margins,
            col_margins,
        })
    }

    pub fn gamma(&self) -> &[Vec<f64>] {
        &self.gamma
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.gamma[i][j]
    }

    pub fn row_margins(&self) -> &[f64] {
        &self.row_margins
    }

    pub fn col_margins(&self) -> &[f64] {
        &self.col_margins
    }

    /// Index pairs carrying positive mass, in row-major order.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let tol = SUPPORT_TOLERANCE * self.total_mass().max(1.0);
        let mut out = Vec::new();
        for (i, row) in self.gamma.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > tol {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.row_margins.iter().sum()
    }
}

fn check_plan_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || !(0.0..1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha, "[0, 1)"));
    }
    Ok(())
}

/// Cost of one plan: `sum over support of gamma_ij^alpha d(x_i, y_j)`.
/// Zero entries contribute nothing, also at alpha = 0.
pub fn h_alpha(
    plan: &TransportPlan,
    a: &AtomicMeasure,
    b: &AtomicMeasure,
    alpha: f64,
) -> Result<f64> {
    check_plan_alpha(alpha)?;
    a.curvature().check_same(b.curvature())?;
    let tol = MARGIN_TOLERANCE * plan.total_mass().max(1.0);
    if plan.row_margins.len() != a.len()
        || plan.col_margins.len() != b.len()
        || plan
            .row_margins
            .iter()
            .zip(a.masses())
            .any(|(&p, q)| (p - q).abs() > tol)
        || plan
            .col_margins
            .iter()
            .zip(b.masses())
            .any(|(&p, q)| (p - q).abs() > tol)
    {
        return Err(Error::InvalidArgument(
            "plan margins do not match the measures".into(),
        ));
    }
    let mut total = 0.0;
    for (i, j) in plan.support() {
        let d = distance(&a.atoms()[i].location, &b.atoms()[j].location)?;
        total += plan.gamma[i][j].powf(alpha) * d;
    }
    Ok(total)
}

/// Union-find over at most a few dozen vertices; cloning is cheap, which the
/// include/exclude enumeration leans on.
#[derive(Clone)]
struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, v: usize) -> usize {
        let mut v = v;
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Solves the margin equations on a spanning tree by leaf peeling. Returns
/// the edge flows in the order of `tree_edges`, or `None` when any flow is
/// negative beyond rounding.
fn solve_tree_flows(
    tree_edges: &[(usize, usize)],
    row_margins: &[f64],
    col_margins: &[f64],
) -> Option<Vec<f64>> {
    let m = row_margins.len();
    let n = m + col_margins.len();
    let tol = SUPPORT_TOLERANCE * row_margins.iter().sum::<f64>().max(1.0);

    let mut need: Vec<f64> = row_margins
        .iter()
        .copied()
        .chain(col_margins.iter().copied())
        .collect();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, &(i, j)) in tree_edges.iter().enumerate() {
        adjacency[i].push(e);
        adjacency[m + j].push(e);
    }
    let mut degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let mut flows = vec![0.0f64; tree_edges.len()];
    let mut done = vec![false; tree_edges.len()];
    let mut leaves: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();

    while let Some(v) = leaves.pop() {
        let Some(&e) = adjacency[v].iter().find(|&&e| !done[e]) else {
            continue;
        };
        let (i, j) = tree_edges[e];
        let other = if v == i { m + j } else { i };
        let f = need[v];
        if f < -tol {
            return None;
        }
        flows[e] = f.max(0.0);
        need[v] = 0.0;
        need[other] -= f;
        done[e] = true;
        degree[other] -= 1;
        degree[v] -= 1;
        if degree[other] == 1 {
            leaves.push(other);
        }
    }
    Some(flows)
}

struct Candidate {
    cost: f64,
    support: Vec<(usize, usize)>,
    flows: Vec<f64>,
    edges: Vec<(usize, usize)>,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    a.cost < b.cost || (a.cost == b.cost && a.support < b.support)
}

/// Exact minimizer of H_alpha over Plan(a, b) with the default size limit.
pub fn j_alpha(a: &AtomicMeasure, b: &AtomicMeasure, alpha: f64) -> Result<(f64, TransportPlan)> {
    j_alpha_with_limit(a, b, alpha, DEFAULT_PLAN_LIMIT)
}

/// Exact minimizer of H_alpha over Plan(a, b).
///
/// Enumerates every spanning tree of the complete bipartite graph on the atom
/// sets (recursive include/exclude over the lexicographic edge list, cycles
/// cut by union-find), solves the margins on each, and keeps the cheapest
/// feasible extreme point. Ties break toward the lexicographically smallest
/// support set, so the result is deterministic under any parallel schedule.
pub fn j_alpha_with_limit(
    a: &AtomicMeasure,
    b: &AtomicMeasure,
    alpha: f64,
    limit: usize,
) -> Result<(f64, TransportPlan)> {
    check_plan_alpha(alpha)?;
    a.curvature().check_same(b.curvature())?;
    let m = a.len();
    let l = b.len();
    if m + l > limit {
        return Err(Error::SizeLimit {
            size: m + l,
            limit,
        });
    }
    let total_a = a.total_mass();
    let total_b = b.total_mass();
    if (total_a - total_b).abs() > MARGIN_TOLERANCE * total_a.max(total_b).max(1.0) {
        return Err(Error::MassMismatch(total_a, total_b));
    }

    let row_margins: Vec<f64> = a.masses().to_vec();
    let col_margins: Vec<f64> = b.masses().to_vec();
    let mut dist = vec![vec![0.0f64; l]; m];
    for i in 0..m {
        for j in 0..l {
            dist[i][j] = distance(&a.atoms()[i].location, &b.atoms()[j].location)?;
        }
    }
    let edges: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..l).map(move |j| (i, j)))
        .collect();
    let need = m + l - 1;
    let support_tol = SUPPORT_TOLERANCE * total_a.max(1.0);

    let evaluate = |tree: &[(usize, usize)]| -> Option<Candidate> {
        let flows = solve_tree_flows(tree, &row_margins, &col_margins)?;
        let mut cost = 0.0;
        let mut support: Vec<(usize, usize)> = Vec::with_capacity(need);
        for (e, &(i, j)) in tree.iter().enumerate() {
            if flows[e] > support_tol {
                cost += flows[e].powf(alpha) * dist[i][j];
                support.push((i, j));
            }
        }
        support.sort_unstable();
        Some(Candidate {
            cost,
            support,
            flows,
            edges: tree.to_vec(),
        })
    };

    // All spanning trees containing edge `first` as their smallest edge.
    let enumerate_from = |first: usize| -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        let mut dsu = Dsu::new(m + l);
        let (i0, j0) = edges[first];
        dsu.union(i0, m + j0);
        let mut chosen = vec![edges[first]];

        fn recurse(
            pos: usize,
            edges: &[(usize, usize)],
            m: usize,
            need: usize,
            dsu: &mut Dsu,
            chosen: &mut Vec<(usize, usize)>,
            best: &mut Option<Candidate>,
            evaluate: &dyn Fn(&[(usize, usize)]) -> Option<Candidate>,
        ) {
            if chosen.len() == need {
                if let Some(c) = evaluate(chosen) {
                    if best.as_ref().map_or(true, |b| better(&c, b)) {
                        *best = Some(c);
                    }
                }
                return;
            }
            if pos >= edges.len() || edges.len() - pos < need - chosen.len() {
                return;
            }
            let (i, j) = edges[pos];
            let mut with = dsu.clone();
            if with.union(i, m + j) {
                chosen.push(edges[pos]);
                recurse(pos + 1, edges, m, need, &mut with, chosen, best, evaluate);
                chosen.pop();
            }
            recurse(pos + 1, edges, m, need, dsu, chosen, best, evaluate);
        }

        recurse(
            first + 1,
            &edges,
            m,
            need,
            &mut dsu,
            &mut chosen,
            &mut best,
            &evaluate,
        );
        if need == 1 {
            // Single-edge tree (1x1 instance): the loop above never fires.
            if let Some(c) = evaluate(&chosen) {
                if best.as_ref().map_or(true, |b| better(&c, b)) {
                    best = Some(c);
                }
            }
        }
        best
    };

    let candidates: Vec<Option<Candidate>> = (0..=edges.len() - need)
        .into_par_iter()
        .map(enumerate_from)
        .collect();
    let best = candidates
        .into_iter()
        .flatten()
        .fold(None::<Candidate>, |acc, c| match acc {
            Some(b) if !better(&c, &b) => Some(b),
            _ => Some(c),
        })
        .ok_or_else(|| Error::InvalidArgument("no feasible extreme point found".into()))?;

    let mut gamma = vec![vec![0.0f64; l]; m];
    for (e, &(i, j)) in best.edges.iter().enumerate() {
        gamma[i][j] = best.flows[e];
    }
    let plan = TransportPlan::new(gamma, row_margins, col_margins)?;
    Ok((best.cost, plan))
}
