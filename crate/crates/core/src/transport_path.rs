//! Transport paths: weighted directed acyclic graphs with geodesic edges that
//! move one atomic measure onto another.
//!
//! A path is valid when it is acyclic, every edge carries positive weight, and
//! at every vertex outflow minus inflow equals the source mass placed there
//! minus the sink mass placed there (zero at interior vertices).

use crate::error::{Error, Result};
use crate::geometry::{distance, geodesic_point, Curvature, ModelPoint};
use crate::measures::{AtomicMeasure, MERGE_TOLERANCE};

/// Absolute tolerance for the vertex balance equation on unit-mass problems;
/// scaled by total mass for larger instances.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

/// Parameter-space tolerance for the bisection that clips edges on a ball
/// boundary.
const CLIP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub enum Violation {
    EdgeIndexOutOfRange { edge: usize },
    NonpositiveWeight { edge: usize, weight: f64 },
    CurvatureMismatch,
    DirectedCycle { vertices: Vec<usize> },
    MissingTerminal { sink_side: bool, atom: usize },
    BalanceViolation { vertex: usize, net: f64, expected: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EdgeIndexOutOfRange { edge } => {
                write!(f, "edge {edge} references a vertex out of range")
            }
            Violation::NonpositiveWeight { edge, weight } => {
                write!(f, "edge {edge} has nonpositive weight {weight}")
            }
            Violation::CurvatureMismatch => write!(f, "mixed curvatures in one path"),
            Violation::DirectedCycle { vertices } => {
                write!(f, "directed cycle through vertices {vertices:?}")
            }
            Violation::MissingTerminal { sink_side, atom } => {
                let side = if *sink_side { "sink" } else { "source" };
                write!(f, "{side} atom {atom} has no matching vertex")
            }
            Violation::BalanceViolation { vertex, net, expected } => write!(
                f,
                "vertex {vertex}: outflow - inflow = {net}, expected {expected}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

#[derive(Debug, Clone)]
pub struct TransportPath {
    vertices: Vec<ModelPoint>,
    edges: Vec<Edge>,
    source: AtomicMeasure,
    sink: AtomicMeasure,
}

impl TransportPath {
    pub fn new(
        vertices: Vec<ModelPoint>,
        edges: Vec<Edge>,
        source: AtomicMeasure,
        sink: AtomicMeasure,
    ) -> Self {
        TransportPath {
            vertices,
            edges,
            source,
            sink,
        }
    }

    pub fn vertices(&self) -> &[ModelPoint] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn source(&self) -> &AtomicMeasure {
        &self.source
    }

    pub fn sink(&self) -> &AtomicMeasure {
        &self.sink
    }

    pub fn curvature(&self) -> Curvature {
        self.source.curvature()
    }

    pub fn edge_length(&self, e: usize) -> Result<f64> {
        let edge = &self.edges[e];
        distance(&self.vertices[edge.tail], &self.vertices[edge.head])
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.vertices.len()];
        for e in &self.edges {
            deg[e.tail] += 1;
            deg[e.head] += 1;
        }
        deg
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    /// Checks every structural invariant and returns everything found wrong;
    /// an empty report means the path is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.vertices.len();
        let k = self.source.curvature();

        if self.sink.curvature().check_same(k).is_err()
            || self.vertices.iter().any(|v| v.curvature().check_same(k).is_err())
        {
            report.violations.push(Violation::CurvatureMismatch);
            return report;
        }

        for (i, e) in self.edges.iter().enumerate() {
            if e.tail >= n || e.head >= n {
                report.violations.push(Violation::EdgeIndexOutOfRange { edge: i });
            }
            if !e.weight.is_finite() || e.weight <= 0.0 {
                report.violations.push(Violation::NonpositiveWeight {
                    edge: i,
                    weight: e.weight,
                });
            }
        }
        if !report.is_ok() {
            return report;
        }

        // Kahn peeling; whatever survives sits on a directed cycle.
        let mut indegree = vec![0usize; n];
        for e in &self.edges {
            indegree[e.head] += 1;
        }
        let mut stack: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut removed = 0usize;
        let mut out_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            out_adj[e.tail].push(e.head);
        }
        while let Some(v) = stack.pop() {
            removed += 1;
            for &w in &out_adj[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    stack.push(w);
                }
            }
        }
        if removed < n {
            let cyclic: Vec<usize> = (0..n).filter(|&v| indegree[v] > 0).collect();
            report.violations.push(Violation::DirectedCycle { vertices: cyclic });
        }

        // Net prescribed mass per vertex: +m_i at source atoms, -n_j at sinks.
        let mut expected = vec![0.0f64; n];
        for (sink_side, measure) in [(false, &self.source), (true, &self.sink)] {
            for (ai, atom) in measure.atoms().iter().enumerate() {
                let mut best: Option<(usize, f64)> = None;
                for (vi, v) in self.vertices.iter().enumerate() {
                    let d = distance(v, &atom.location).unwrap_or(f64::INFINITY);
                    if best.map_or(true, |(_, bd)| d < bd) {
                        best = Some((vi, d));
                    }
                }
                match best {
                    Some((vi, d)) if d <= MERGE_TOLERANCE => {
                        expected[vi] += if sink_side { -atom.mass } else { atom.mass };
                    }
                    _ => report
                        .violations
                        .push(Violation::MissingTerminal { sink_side, atom: ai }),
                }
            }
        }

        let scale = self.source.total_mass().max(self.sink.total_mass()).max(1.0);
        let tol = BALANCE_TOLERANCE * scale;
        let mut net = vec![0.0f64; n];
        for e in &self.edges {
            net[e.tail] += e.weight;
            net[e.head] -= e.weight;
        }
        for v in 0..n {
            if (net[v] - expected[v]).abs() > tol {
                report.violations.push(Violation::BalanceViolation {
                    vertex: v,
                    net: net[v],
                    expected: expected[v],
                });
            }
        }
        report
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    /// Transport cost `M_alpha`: the sum over edges of `weight^alpha * length`.
    pub fn cost_alpha(&self, alpha: f64) -> Result<f64> {
        if !alpha.is_finite() || alpha > 1.0 {
            return Err(Error::AlphaOutOfRange(alpha, "(-inf, 1]"));
        }
        let report = self.validate();
        if !report.is_ok() {
            return Err(Error::InvalidTransportPath(report.summary()));
        }
        self.cost_alpha_unchecked(alpha)
    }

    pub(crate) fn cost_alpha_unchecked(&self, alpha: f64) -> Result<f64> {
        let mut total = 0.0;
        for (i, e) in self.edges.iter().enumerate() {
            total += e.weight.powf(alpha) * self.edge_length(i)?;
        }
        Ok(total)
    }

    /// Multiplies every mass in the problem by `lambda`.
    pub fn scale(&self, lambda: f64) -> Result<TransportPath> {
        let source = self.source.scale(lambda)?;
        let sink = self.sink.scale(lambda)?;
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                tail: e.tail,
                head: e.head,
                weight: e.weight * lambda,
            })
            .collect();
        Ok(TransportPath::new(self.vertices.clone(), edges, source, sink))
    }

    /// Restriction of the path to the closed ball `B(p, r0)`. Edges are clipped
    /// where they cross the boundary sphere; each crossing becomes a new
    /// boundary atom (a source where flow enters the ball, a sink where it
    /// leaves) carrying the edge weight. Returns `None` when the ball misses
    /// the path entirely.
    pub fn restrict_to_ball(&self, p: &ModelPoint, r0: f64) -> Result<Option<TransportPath>> {
        if !r0.is_finite() || r0 < 0.0 {
            return Err(Error::InvalidArgument(format!("ball radius {r0}")));
        }
        self.curvature().check_same(p.curvature())?;
        let report = self.validate();
        if !report.is_ok() {
            return Err(Error::InvalidTransportPath(report.summary()));
        }

        let inside_tol = 1e-12 * r0.max(1.0);
        let vertex_dist: Vec<f64> = self
            .vertices
            .iter()
            .map(|v| distance(v, p))
            .collect::<Result<_>>()?;
        let inside = |vi: usize| vertex_dist[vi] <= r0 + inside_tol;

        // Fragment under construction. Original vertices are mapped lazily;
        // boundary crossings are clustered against existing fragment vertices.
        let mut new_vertices: Vec<ModelPoint> = Vec::new();
        let mut vertex_map: Vec<Option<usize>> = vec![None; self.vertices.len()];
        let mut new_edges: Vec<Edge> = Vec::new();
        let mut boundary_sources: Vec<(usize, f64)> = Vec::new();
        let mut boundary_sinks: Vec<(usize, f64)> = Vec::new();

        let map_original = |vi: usize, store: &mut Vec<ModelPoint>, map: &mut Vec<Option<usize>>| {
            *map[vi].get_or_insert_with(|| {
                store.push(self.vertices[vi]);
                store.len() - 1
            })
        };
        let cluster_point = |pt: ModelPoint, store: &mut Vec<ModelPoint>| -> usize {
            for (i, v) in store.iter().enumerate() {
                if distance(v, &pt).unwrap_or(f64::INFINITY) <= MERGE_TOLERANCE {
                    return i;
                }
            }
            store.push(pt);
            store.len() - 1
        };

        for e in &self.edges {
            let u = &self.vertices[e.tail];
            let v = &self.vertices[e.head];
            let profile = EdgeDistanceProfile::new(p, u, v)?;
            for (t0, t1) in profile.inside_intervals(r0)? {
                if t1 - t0 <= CLIP_TOLERANCE {
                    continue;
                }
                let tail = if t0 <= 0.0 {
                    map_original(e.tail, &mut new_vertices, &mut vertex_map)
                } else {
                    let pt = geodesic_point(u, v, t0)?;
                    let idx = cluster_point(pt, &mut new_vertices);
                    boundary_sources.push((idx, e.weight));
                    idx
                };
                let head = if t1 >= 1.0 {
                    map_original(e.head, &mut new_vertices, &mut vertex_map)
                } else {
                    let pt = geodesic_point(u, v, t1)?;
                    let idx = cluster_point(pt, &mut new_vertices);
                    boundary_sinks.push((idx, e.weight));
                    idx
                };
                new_edges.push(Edge {
                    tail,
                    head,
                    weight: e.weight,
                });
            }
        }

        // Atoms inside the ball survive; isolated inside atoms keep a vertex.
        let mut source_atoms: Vec<(ModelPoint, f64)> = Vec::new();
        let mut sink_atoms: Vec<(ModelPoint, f64)> = Vec::new();
        for (sink_side, measure, bucket) in [
            (false, &self.source, &mut source_atoms),
            (true, &self.sink, &mut sink_atoms),
        ] {
            let _ = sink_side;
            for atom in measure.atoms() {
                if distance(&atom.location, p)? <= r0 + inside_tol {
                    let idx = cluster_point(atom.location, &mut new_vertices);
                    let _ = idx;
                    bucket.push((atom.location, atom.mass));
                }
            }
        }
        for (idx, w) in boundary_sources {
            source_atoms.push((new_vertices[idx], w));
        }
        for (idx, w) in boundary_sinks {
            sink_atoms.push((new_vertices[idx], w));
        }
        // Keep isolated inside vertices too (atom pairs that cancel locally).
        for vi in 0..self.vertices.len() {
            if inside(vi) && vertex_map[vi].is_none() {
                let has_atoms = self
                    .source
                    .atoms()
                    .iter()
                    .chain(self.sink.atoms())
                    .any(|a| {
                        distance(&a.location, &self.vertices[vi]).unwrap_or(f64::INFINITY)
                            <= MERGE_TOLERANCE
                    });
                if has_atoms {
                    vertex_map[vi] = Some(cluster_point(self.vertices[vi], &mut new_vertices));
                }
            }
        }

        if new_edges.is_empty() && source_atoms.is_empty() && sink_atoms.is_empty() {
            return Ok(None);
        }
        if source_atoms.is_empty() || sink_atoms.is_empty() {
            return Err(Error::InvalidTransportPath(
                "restriction produced a one-sided fragment".into(),
            ));
        }
        Ok(Some(TransportPath::new(
            new_vertices,
            new_edges,
            AtomicMeasure::new(source_atoms)?,
            AtomicMeasure::new(sink_atoms)?,
        )))
    }

    /// Lower bound for the cost of the restriction to `B(p, r0)`: the integral
    /// over `r in [0, r0]` of the summed `weight^alpha` of edges meeting the
    /// sphere of radius `r`, by the composite midpoint rule with `samples`
    /// intervals.
    pub fn sphere_slice_bound(
        &self,
        p: &ModelPoint,
        r0: f64,
        alpha: f64,
        samples: usize,
    ) -> Result<f64> {
        if samples < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 quadrature samples, got {samples}"
            )));
        }
        if !r0.is_finite() || r0 <= 0.0 {
            return Err(Error::InvalidArgument(format!("ball radius {r0}")));
        }
        if !alpha.is_finite() || alpha > 1.0 {
            return Err(Error::AlphaOutOfRange(alpha, "(-inf, 1]"));
        }
        self.curvature().check_same(p.curvature())?;

        let mut intervals: Vec<(f64, f64, f64)> = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            let profile =
                EdgeDistanceProfile::new(p, &self.vertices[e.tail], &self.vertices[e.head])?;
            let (dmin, dmax) = profile.distance_range()?;
            intervals.push((dmin, dmax, e.weight.powf(alpha)));
        }
        let dr = r0 / samples as f64;
        let mut total = 0.0;
        for i in 0..samples {
            let r = (i as f64 + 0.5) * dr;
            for &(dmin, dmax, wa) in &intervals {
                if dmin <= r && r <= dmax {
                    total += wa;
                }
            }
        }
        Ok(total * dr)
    }
}

/// Distance from a fixed center to the points of one geodesic edge, as a
/// function of the interpolation parameter. The profile has at most one
/// interior extremum on every model surface, which makes range queries and
/// boundary crossings exact up to bisection.
struct EdgeDistanceProfile<'a> {
    center: &'a ModelPoint,
    tail: &'a ModelPoint,
    head: &'a ModelPoint,
    /// Interior critical parameters, strictly inside (0, 1), sorted.
    interior: Vec<f64>,
}

impl<'a> EdgeDistanceProfile<'a> {
    fn new(center: &'a ModelPoint, tail: &'a ModelPoint, head: &'a ModelPoint) -> Result<Self> {
        center.curvature().check_same(tail.curvature())?;
        center.curvature().check_same(head.curvature())?;
        let kv = center.curvature().value();
        let mut interior = Vec::new();
        let open = |t: f64| t > 1e-12 && t < 1.0 - 1e-12;

        if kv == 0.0 {
            let (c, u, v) = (center.raw(), tail.raw(), head.raw());
            let ex = v[0] - u[0];
            let ey = v[1] - u[1];
            let len2 = ex * ex + ey * ey;
            if len2 > 0.0 {
                let t = ((c[0] - u[0]) * ex + (c[1] - u[1]) * ey) / len2;
                if open(t) {
                    interior.push(t);
                }
            }
        } else if kv > 0.0 {
            // <center, gamma(t)> = a cos(t w) + b sin(t w); extrema where the
            // phase hits 0 mod pi.
            let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            let (c, u, v) = (center.raw(), tail.raw(), head.raw());
            let w = dot(u, v).clamp(-1.0, 1.0).acos();
            if w > 1e-12 {
                let a = dot(c, u);
                let b = (dot(c, v) - a * w.cos()) / w.sin();
                let phase = b.atan2(a);
                for cand in [phase, phase + std::f64::consts::PI, phase - std::f64::consts::PI] {
                    let t = cand / w;
                    if open(t) {
                        interior.push(t);
                    }
                }
            }
        } else {
            let md = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] - a[2] * b[2];
            let (c, u, v) = (center.raw(), tail.raw(), head.raw());
            let s = (-md(u, v)).max(1.0).acosh();
            if s > 1e-12 {
                let a = -md(c, u);
                let b = (-md(c, v) - a * s.cosh()) / s.sinh();
                // h(t) = a cosh(t s) + b sinh(t s), convex; single minimum.
                if a > 0.0 && (b / a).abs() < 1.0 {
                    let t = (-b / a).atanh() / s;
                    if open(t) {
                        interior.push(t);
                    }
                }
            }
        }
        interior.sort_by(|x, y| x.partial_cmp(y).unwrap());
        Ok(EdgeDistanceProfile {
            center,
            tail,
            head,
            interior,
        })
    }

    fn eval(&self, t: f64) -> Result<f64> {
        let pt = geodesic_point(self.tail, self.head, t)?;
        distance(self.center, &pt)
    }

    fn distance_range(&self) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in [0.0, 1.0].iter().chain(self.interior.iter()) {
            let d = self.eval(*t)?;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        Ok((lo, hi))
    }

    /// Maximal parameter intervals where the edge lies in the closed ball of
    /// radius `r0`. Crossing parameters are found by bisection on monotone
    /// pieces.
    fn inside_intervals(&self, r0: f64) -> Result<Vec<(f64, f64)>> {
        let mut breaks = vec![0.0];
        breaks.extend_from_slice(&self.interior);
        breaks.push(1.0);

        let mut cuts = vec![0.0];
        for pair in breaks.windows(2) {
            let (mut a, mut b) = (pair[0], pair[1]);
            let fa = self.eval(a)? - r0;
            let fb = self.eval(b)? - r0;
            if (fa > 0.0) != (fb > 0.0) {
                // Monotone piece with a sign change: bisect.
                let mut sa = fa > 0.0;
                while b - a > CLIP_TOLERANCE {
                    let m = 0.5 * (a + b);
                    let fm = self.eval(m)? - r0;
                    if (fm > 0.0) == sa {
                        a = m;
                        sa = fm > 0.0;
                    } else {
                        b = m;
                    }
                }
                cuts.push(0.5 * (a + b));
            }
        }
        cuts.push(1.0);
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());

        let mut intervals: Vec<(f64, f64)> = Vec::new();
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b - a <= CLIP_TOLERANCE {
                continue;
            }
            let mid = self.eval(0.5 * (a + b))?;
            if mid <= r0 {
                match intervals.last_mut() {
                    Some(last) if (last.1 - a).abs() <= CLIP_TOLERANCE => last.1 = b,
                    _ => intervals.push((a, b)),
                }
            }
        }
        Ok(intervals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(x: f64, y: f64) -> ModelPoint {
        ModelPoint::flat(x, y).unwrap()
    }

    fn dirac(x: f64, y: f64) -> AtomicMeasure {
        AtomicMeasure::dirac(flat(x, y))
    }

    /// Symmetric Y: sources (-1, 0) and (1, 0) with mass 1/2 each, sink at
    /// (0, -2), branch vertex at (0, -h).
    fn symmetric_y(h: f64) -> TransportPath {
        let source =
            AtomicMeasure::new(vec![(flat(-1.0, 0.0), 0.5), (flat(1.0, 0.0), 0.5)]).unwrap();
        let sink = dirac(0.0, -2.0);
        TransportPath::new(
            vec![flat(-1.0, 0.0), flat(1.0, 0.0), flat(0.0, -2.0), flat(0.0, -h)],
            vec![
                Edge { tail: 0, head: 3, weight: 0.5 },
                Edge { tail: 1, head: 3, weight: 0.5 },
                Edge { tail: 3, head: 2, weight: 1.0 },
            ],
            source,
            sink,
        )
    }

    #[test]
    fn single_edge_validates() {
        let g = TransportPath::new(
            vec![flat(0.0, 0.0), flat(3.0, 4.0)],
            vec![Edge { tail: 0, head: 1, weight: 1.0 }],
            dirac(0.0, 0.0),
            dirac(3.0, 4.0),
        );
        assert!(g.validate().is_ok());
        assert_eq!(g.cost_alpha(1.0).unwrap(), 5.0);
    }

    #[test]
    fn symmetric_y_validates_and_unbalanced_weight_reported() {
        assert!(symmetric_y(0.6).validate().is_ok());

        let mut bad = symmetric_y(0.6);
        bad.edges[2].weight = 0.7;
        let report = bad.validate();
        assert!(!report.is_ok());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::BalanceViolation { vertex: 3, .. })));
    }

    #[test]
    fn directed_cycle_detected() {
        let g = TransportPath::new(
            vec![flat(0.0, 0.0), flat(1.0, 0.0), flat(2.0, 0.0)],
            vec![
                Edge { tail: 0, head: 1, weight: 1.0 },
                Edge { tail: 1, head: 2, weight: 1.0 },
                Edge { tail: 2, head: 1, weight: 1.0 },
            ],
            dirac(0.0, 0.0),
            dirac(2.0, 0.0),
        );
        let report = g.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::DirectedCycle { .. })));
    }

    #[test]
    fn cost_alpha_closed_form() {
        // One edge, weight 1/4, length 2: cost at alpha = 1/2 is 0.5 * 2 = 1.
        let g = TransportPath::new(
            vec![flat(0.0, 0.0), flat(2.0, 0.0)],
            vec![Edge { tail: 0, head: 1, weight: 0.25 }],
            AtomicMeasure::new(vec![(flat(0.0, 0.0), 0.25)]).unwrap(),
            AtomicMeasure::new(vec![(flat(2.0, 0.0), 0.25)]).unwrap(),
        );
        assert!((g.cost_alpha(0.5).unwrap() - 1.0).abs() < 1e-15);
        // At alpha = 0 the cost is total edge length.
        assert!((g.cost_alpha(0.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_y_grid_minimum_matches_stationary_height() {
        for alpha in [0.0, 0.35, 0.5, 0.8] {
            let mut best = f64::INFINITY;
            let mut h = 0.0;
            while h <= 1.95 {
                best = best.min(symmetric_y(h).cost_alpha(alpha).unwrap());
                h += 1e-4;
            }
            // Stationary height of 2 * (1/2)^a * sqrt(1 + h^2) + (2 - h).
            let q = (2.0f64).powf(alpha - 1.0);
            let h_star = q / (1.0 - q * q).sqrt();
            let analytic = symmetric_y(h_star).cost_alpha(alpha).unwrap();
            assert!(
                (best - analytic).abs() < 1e-6,
                "alpha={alpha}: grid {best} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn restriction_of_whole_path_is_identity_like() {
        let g = symmetric_y(0.6);
        let frag = g
            .restrict_to_ball(&flat(0.0, -0.5), 10.0)
            .unwrap()
            .expect("nonempty");
        assert!(frag.validate().is_ok());
        assert_eq!(frag.edges().len(), g.edges().len());
        assert!(
            (frag.cost_alpha(0.5).unwrap() - g.cost_alpha(0.5).unwrap()).abs() < 1e-12
        );
    }

    #[test]
    fn restriction_to_distant_ball_is_empty() {
        let g = symmetric_y(0.6);
        assert!(g.restrict_to_ball(&flat(50.0, 50.0), 1.0).unwrap().is_none());
    }

    #[test]
    fn radial_edge_is_clipped_at_the_sphere() {
        let g = TransportPath::new(
            vec![flat(0.0, 0.0), flat(2.0, 0.0)],
            vec![Edge { tail: 0, head: 1, weight: 1.0 }],
            dirac(0.0, 0.0),
            dirac(2.0, 0.0),
        );
        let frag = g
            .restrict_to_ball(&flat(0.0, 0.0), 1.0)
            .unwrap()
            .expect("nonempty");
        assert!(frag.validate().is_ok(), "{}", frag.validate().summary());
        assert_eq!(frag.edges().len(), 1);
        // Boundary sink at distance 1 from the center, carrying the weight.
        assert!((frag.cost_alpha(1.0).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(frag.sink().len(), 1);
        assert!((frag.sink().atoms()[0].mass - 1.0).abs() < 1e-12);
        let d = distance(&frag.sink().atoms()[0].location, &flat(0.0, 0.0)).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn midspan_ball_cuts_both_ways() {
        let g = TransportPath::new(
            vec![flat(-3.0, 0.0), flat(3.0, 0.0)],
            vec![Edge { tail: 0, head: 1, weight: 0.7 }],
            AtomicMeasure::new(vec![(flat(-3.0, 0.0), 0.7)]).unwrap(),
            AtomicMeasure::new(vec![(flat(3.0, 0.0), 0.7)]).unwrap(),
        );
        let frag = g
            .restrict_to_ball(&flat(0.0, 0.0), 1.0)
            .unwrap()
            .expect("nonempty");
        assert!(frag.validate().is_ok(), "{}", frag.validate().summary());
        // Entry becomes a boundary source, exit a boundary sink.
        assert_eq!(frag.source().len(), 1);
        assert_eq!(frag.sink().len(), 1);
        assert!((frag.cost_alpha(1.0).unwrap() - 0.7 * 2.0).abs() < 1e-9);
    }

    #[test]
    fn slice_bound_radial_edge_exact() {
        let g = TransportPath::new(
            vec![flat(0.0, 0.0), flat(2.0, 0.0)],
            vec![Edge { tail: 0, head: 1, weight: 0.25 }],
            AtomicMeasure::new(vec![(flat(0.0, 0.0), 0.25)]).unwrap(),
            AtomicMeasure::new(vec![(flat(2.0, 0.0), 0.25)]).unwrap(),
        );
        // Every sphere of radius r < 1 meets the edge: integral = w^a * r0.
        let bound = g.sphere_slice_bound(&flat(0.0, 0.0), 1.0, 0.5, 1000).unwrap();
        assert!((bound - 0.5).abs() < 1e-12);
    }

    #[test]
    fn slice_bound_disjoint_ball_is_zero() {
        let g = symmetric_y(0.6);
        let bound = g.sphere_slice_bound(&flat(40.0, 0.0), 1.0, 0.5, 100).unwrap();
        assert_eq!(bound, 0.0);
    }

    #[test]
    fn slice_bound_never_exceeds_restricted_cost() {
        let g = symmetric_y(0.6);
        let center = flat(0.2, -0.4);
        for r0 in [0.3, 0.8, 1.5] {
            let bound = g.sphere_slice_bound(&center, r0, 0.5, 20_000).unwrap();
            let frag = g.restrict_to_ball(&center, r0).unwrap().expect("nonempty");
            let cost = frag.cost_alpha(0.5).unwrap();
            assert!(
                bound <= cost + 1e-9,
                "r0={r0}: bound {bound} vs cost {cost}"
            );
        }
    }

    #[test]
    fn mass_scaling_of_cost() {
        let g = symmetric_y(0.6);
        for alpha in [-0.5, 0.0, 0.4, 1.0] {
            for lambda in [0.25, 3.0] {
                let scaled = g.scale(lambda).unwrap();
                let lhs = scaled.cost_alpha(alpha).unwrap();
                let rhs = lambda.powf(alpha) * g.cost_alpha(alpha).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
            }
        }
    }
}
