//! Nested cube collections and dimension estimation. A collection is a
//! generation-indexed tree of "cubes", each carrying a representative point,
//! a diameter inside the envelope [C1 sigma^n, C2 sigma^n], and a mass that
//! splits exactly over its children. Placing each generation's masses at the
//! representative points yields a sequence of atomic measures whose step
//! costs decide, by a ratio test, for which alpha the hierarchical scheme
//! stays summable; the infimum of 1/(1 - alpha) over those alpha brackets the
//! transport dimension.

use crate::error::{Error, Result};
use crate::geometry::{distance, ModelPoint};
use crate::measures::{AtomicMeasure, MERGE_TOLERANCE};
use crate::transport_path::{Edge, TransportPath};

/// Ratios are taken over at most this many trailing steps.
const RATIO_WINDOW: usize = 10;

/// Fewer trailing ratios than this and the verdict stays inconclusive.
const MIN_CONCLUSIVE_RATIOS: usize = 3;

/// A tail ratio must clear 1 by this margin before the series is called
/// summable or divergent.
const RATIO_MARGIN: f64 = 1e-3;

/// Slack on the diameter envelope and mass-conservation checks.
const STRUCTURE_TOLERANCE: f64 = 1e-9;

/// Hard cap on the total cube count a generator will produce.
const GENERATOR_CUBE_LIMIT: usize = 1 << 22;

#[derive(Debug, Clone)]
pub struct Cube {
    /// Index within its generation.
    pub id: usize,
    /// Index into the previous generation; `None` only in generation 0.
    pub parent: Option<usize>,
    pub point: ModelPoint,
    pub diameter: f64,
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct NestedCollection {
    sigma: f64,
    c1: f64,
    c2: f64,
    generations: Vec<Vec<Cube>>,
}

impl NestedCollection {
    pub fn new(
        sigma: f64,
        c1: f64,
        c2: f64,
        generations: Vec<Vec<Cube>>,
    ) -> Result<NestedCollection> {
        if !sigma.is_finite() || sigma <= 0.0 || sigma >= 1.0 {
            return Err(Error::ParameterOutOfRange(sigma));
        }
        if !(c1.is_finite() && c2.is_finite() && 0.0 < c1 && c1 <= c2) {
            return Err(Error::InvalidArgument(format!(
                "diameter envelope needs 0 < C1 <= C2, got {c1}, {c2}"
            )));
        }
        if generations.is_empty() || generations.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument(
                "every generation must hold at least one cube".into(),
            ));
        }
        let k = generations[0][0].point.curvature();
        let mut scale = 1.0f64;
        for (n, generation) in generations.iter().enumerate() {
            let lo = c1 * scale - STRUCTURE_TOLERANCE;
            let hi = c2 * scale + STRUCTURE_TOLERANCE;
            for (i, cube) in generation.iter().enumerate() {
                cube.point.curvature().check_same(k)?;
                if cube.id != i {
                    return Err(Error::InvalidArgument(format!(
                        "cube id {} at generation {n} position {i}",
                        cube.id
                    )));
                }
                if !cube.mass.is_finite() || cube.mass < 0.0 {
                    return Err(Error::InvalidMass {
                        index: i,
                        mass: cube.mass,
                    });
                }
                if !cube.diameter.is_finite() || cube.diameter < lo || cube.diameter > hi {
                    return Err(Error::InvalidArgument(format!(
                        "generation {n} cube {i} diameter {} outside [{lo}, {hi}]",
                        cube.diameter
                    )));
                }
                match cube.parent {
                    None if n == 0 => {}
                    Some(p) if n > 0 && p < generations[n - 1].len() => {}
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "generation {n} cube {i} has an invalid parent"
                        )));
                    }
                }
            }
            scale *= sigma;
        }
        // Parenthood must cover: each cube keeps at least one child while
        // deeper generations exist, and the child masses recompose it.
        for n in 0..generations.len() - 1 {
            let mut child_mass = vec![0.0f64; generations[n].len()];
            let mut child_count = vec![0usize; generations[n].len()];
            for cube in &generations[n + 1] {
                let p = cube.parent.expect("checked above");
                child_mass[p] += cube.mass;
                child_count[p] += 1;
            }
            for (i, cube) in generations[n].iter().enumerate() {
                if child_count[i] == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "generation {n} cube {i} has no children"
                    )));
                }
                if (child_mass[i] - cube.mass).abs()
                    > STRUCTURE_TOLERANCE * cube.mass.max(1.0)
                {
                    return Err(Error::MassMismatch(cube.mass, child_mass[i]));
                }
            }
        }
        Ok(NestedCollection {
            sigma,
            c1,
            c2,
            generations,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn generations(&self) -> &[Vec<Cube>] {
        &self.generations
    }

    pub fn generation_count(&self) -> usize {
        self.generations.len()
    }

    /// N_n, the cube count per generation.
    pub fn counts(&self) -> Vec<usize> {
        self.generations.iter().map(Vec::len).collect()
    }

    /// Dyadic intervals of [0,1] down to `depth` subdivisions: generation n
    /// holds 2^n intervals of length 2^-n carrying Lebesgue masses.
    pub fn dyadic(depth: usize) -> Result<NestedCollection> {
        check_generator_size(2, depth)?;
        let mut generations = Vec::with_capacity(depth + 1);
        for n in 0..=depth {
            let count = 1usize << n;
            let len = 0.5f64.powi(n as i32);
            let cubes = (0..count)
                .map(|i| {
                    Ok(Cube {
                        id: i,
                        parent: (n > 0).then_some(i / 2),
                        point: ModelPoint::flat((i as f64 + 0.5) * len, 0.0)?,
                        diameter: len,
                        mass: len,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            generations.push(cubes);
        }
        NestedCollection::new(0.5, 1.0, 1.0, generations)
    }

    /// Middle-thirds Cantor construction with the uniform measure.
    pub fn cantor(depth: usize) -> Result<NestedCollection> {
        NestedCollection::cantor_with_ratio(depth, 1.0 / 3.0)
    }

    /// Cantor-type construction keeping two end intervals of length
    /// `sigma * L` from each interval of length L; `sigma` in (0, 1/2].
    pub fn cantor_with_ratio(depth: usize, sigma: f64) -> Result<NestedCollection> {
        if !sigma.is_finite() || sigma <= 0.0 || sigma > 0.5 {
            return Err(Error::ParameterOutOfRange(sigma));
        }
        check_generator_size(2, depth)?;
        // Track interval starts; lengths are sigma^n for the whole generation.
        let mut starts = vec![0.0f64];
        let mut generations = Vec::with_capacity(depth + 1);
        let mut len = 1.0f64;
        for n in 0..=depth {
            let mass = 0.5f64.powi(n as i32);
            let cubes = starts
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    Ok(Cube {
                        id: i,
                        parent: (n > 0).then_some(i / 2),
                        point: ModelPoint::flat(s + len / 2.0, 0.0)?,
                        diameter: len,
                        mass,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            generations.push(cubes);
            if n < depth {
                let child_len = sigma * len;
                starts = starts
                    .iter()
                    .flat_map(|&s| [s, s + len - child_len])
                    .collect();
                len = child_len;
            }
        }
        NestedCollection::new(sigma, 1.0, 1.0, generations)
    }

    /// Sierpinski carpet on [0,1]^2: each square splits into the eight
    /// outer ninths, diameters side * sqrt(2), uniform masses.
    pub fn sierpinski(depth: usize) -> Result<NestedCollection> {
        check_generator_size(8, depth)?;
        let offsets: Vec<(f64, f64)> = (0..3)
            .flat_map(|j| (0..3).map(move |i| (i as f64, j as f64)))
            .filter(|&(i, j)| !(i == 1.0 && j == 1.0))
            .collect();
        let mut corners = vec![(0.0f64, 0.0f64)];
        let mut generations = Vec::with_capacity(depth + 1);
        let mut side = 1.0f64;
        for n in 0..=depth {
            let mass = 0.125f64.powi(n as i32);
            let cubes = corners
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| {
                    Ok(Cube {
                        id: i,
                        parent: (n > 0).then_some(i / 8),
                        point: ModelPoint::flat(x + side / 2.0, y + side / 2.0)?,
                        diameter: side * 2.0f64.sqrt(),
                        mass,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            generations.push(cubes);
            if n < depth {
                let child = side / 3.0;
                corners = corners
                    .iter()
                    .flat_map(|&(x, y)| {
                        offsets
                            .iter()
                            .map(move |&(i, j)| (x + i * child, y + j * child))
                    })
                    .collect();
                side = child;
            }
        }
        NestedCollection::new(1.0 / 3.0, 2.0f64.sqrt(), 2.0f64.sqrt(), generations)
    }

    /// One cube per generation, all at the origin: represents a Dirac mass.
    pub fn chain(depth: usize) -> Result<NestedCollection> {
        let origin = ModelPoint::flat(0.0, 0.0)?;
        let generations = (0..=depth)
            .map(|n| {
                vec![Cube {
                    id: 0,
                    parent: (n > 0).then_some(0),
                    point: origin,
                    diameter: 0.5f64.powi(n as i32),
                    mass: 1.0,
                }]
            })
            .collect();
        NestedCollection::new(0.5, 1.0, 1.0, generations)
    }

    /// Per step, the (child mass, parent-to-child distance) pairs with
    /// positive mass; everything the cost series depends on.
    fn step_skeleton(&self) -> Result<Vec<Vec<(f64, f64)>>> {
        let mut steps = Vec::with_capacity(self.generations.len().saturating_sub(1));
        for n in 0..self.generations.len() - 1 {
            let parents = &self.generations[n];
            let mut pairs = Vec::new();
            for cube in &self.generations[n + 1] {
                if cube.mass > 0.0 {
                    let p = &parents[cube.parent.expect("validated")];
                    pairs.push((cube.mass, distance(&p.point, &cube.point)?));
                }
            }
            steps.push(pairs);
        }
        Ok(steps)
    }

    /// True when no mass ever moves: every child sits on its parent's
    /// representative point, so the represented measure is already atomic.
    pub fn is_effectively_atomic(&self) -> Result<bool> {
        for step in self.step_skeleton()? {
            for (_, d) in step {
                if d > MERGE_TOLERANCE {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    fn structurally_equal(&self, other: &NestedCollection) -> bool {
        self.sigma == other.sigma
            && self.c1 == other.c1
            && self.c2 == other.c2
            && self.generations.len() == other.generations.len()
            && self
                .generations
                .iter()
                .zip(&other.generations)
                .all(|(ga, gb)| {
                    ga.len() == gb.len()
                        && ga.iter().zip(gb).all(|(a, b)| {
                            a.parent == b.parent
                                && a.diameter == b.diameter
                                && a.mass == b.mass
                                && a.point.chart_coords() == b.point.chart_coords()
                        })
                })
    }
}

fn check_generator_size(arity: usize, depth: usize) -> Result<()> {
    let mut total = 0usize;
    let mut count = 1usize;
    for _ in 0..=depth {
        total = total.saturating_add(count);
        count = count.saturating_mul(arity);
        if total > GENERATOR_CUBE_LIMIT {
            return Err(Error::SizeLimit {
                size: total,
                limit: GENERATOR_CUBE_LIMIT,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MinkowskiEstimate {
    /// Least-squares slope of log N_n against n log(1/sigma), fitted over the
    /// last half of the generations.
    pub dim: f64,
    /// log(N_n) / (n log(1/sigma)) for n >= 1, for judging convergence.
    pub per_generation: Vec<f64>,
}

pub fn minkowski_dim(f: &NestedCollection) -> Result<MinkowskiEstimate> {
    let counts = f.counts();
    if counts.len() < 3 {
        return Err(Error::InvalidArgument(
            "minkowski_dim needs at least 3 generations".into(),
        ));
    }
    let step = (1.0 / f.sigma()).ln();
    let per_generation: Vec<f64> = counts
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, &c)| (c as f64).ln() / (n as f64 * step))
        .collect();
    let start = counts.len() / 2;
    let pts: Vec<(f64, f64)> = (start..counts.len())
        .map(|n| (n as f64 * step, (counts[n] as f64).ln()))
        .collect();
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let cov: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    Ok(MinkowskiEstimate {
        dim: if var > 0.0 { cov / var } else { 0.0 },
        per_generation,
    })
}

/// First cube violating the even-concentration condition, if any.
#[derive(Debug, Clone)]
pub struct ConcentrationWitness {
    pub generation: usize,
    pub cube: usize,
    pub mass: f64,
    pub required: f64,
}

/// Checks that every cube with brothers carries at least lambda / N_n of the
/// total mass. Cubes in generation 0 count as brothers of each other.
pub fn evenly_concentrated(
    f: &NestedCollection,
    lambda: f64,
) -> Result<Option<ConcentrationWitness>> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::ParameterOutOfRange(lambda));
    }
    for (n, generation) in f.generations().iter().enumerate() {
        let required = lambda / generation.len() as f64;
        // Sibling counts decide who has brothers.
        let parent_count = if n == 0 {
            1
        } else {
            f.generations()[n - 1].len()
        };
        let mut siblings = vec![0usize; parent_count];
        for cube in generation {
            siblings[cube.parent.unwrap_or(0)] += 1;
        }
        for cube in generation {
            if siblings[cube.parent.unwrap_or(0)] > 1 && cube.mass < required {
                return Ok(Some(ConcentrationWitness {
                    generation: n,
                    cube: cube.id,
                    mass: cube.mass,
                    required,
                }));
            }
        }
    }
    Ok(None)
}

#[derive(Debug, Clone)]
pub struct AdmissibleSequence {
    /// a_n: generation n's masses placed at the representative points.
    pub measures: Vec<AtomicMeasure>,
    /// Path from a_n to a_{n+1}: direct geodesic edges parent -> child.
    pub step_paths: Vec<TransportPath>,
    /// M_alpha cost of each step path.
    pub step_costs: Vec<f64>,
    /// tail_sums[n] = sum of step_costs[n..].
    pub tail_sums: Vec<f64>,
}

/// Builds the hierarchical scheme down to `depth` generations: each step
/// routes every parent atom to its children along direct geodesics weighted
/// by the child masses. Children sitting on their parent contribute no edge.
pub fn build_admissible_sequence(
    f: &NestedCollection,
    alpha: f64,
    depth: usize,
) -> Result<AdmissibleSequence> {
    if !alpha.is_finite() || alpha >= 1.0 {
        return Err(Error::AlphaOutOfRange(alpha, "(-inf, 1)"));
    }
    if depth == 0 || depth > f.generation_count() {
        return Err(Error::InvalidArgument(format!(
            "depth {depth} outside 1..={}",
            f.generation_count()
        )));
    }
    let mut measures = Vec::with_capacity(depth);
    for generation in &f.generations()[..depth] {
        let atoms: Vec<(ModelPoint, f64)> = generation
            .iter()
            .filter(|c| c.mass > 0.0)
            .map(|c| (c.point, c.mass))
            .collect();
        measures.push(AtomicMeasure::new(atoms)?);
    }

    let mut step_paths = Vec::with_capacity(depth - 1);
    let mut step_costs = Vec::with_capacity(depth - 1);
    for n in 0..depth - 1 {
        let parents = &f.generations()[n];
        let children = &f.generations()[n + 1];
        let mut vertices: Vec<ModelPoint> = Vec::new();
        let vertex_of = |p: &ModelPoint, vertices: &mut Vec<ModelPoint>| -> Result<usize> {
            for (i, v) in vertices.iter().enumerate() {
                if distance(v, p)? <= MERGE_TOLERANCE {
                    return Ok(i);
                }
            }
            vertices.push(*p);
            Ok(vertices.len() - 1)
        };
        let mut edges: Vec<Edge> = Vec::new();
        for parent in parents.iter().filter(|c| c.mass > 0.0) {
            vertex_of(&parent.point, &mut vertices)?;
        }
        for child in children.iter().filter(|c| c.mass > 0.0) {
            let p = &parents[child.parent.expect("validated")];
            let tail = vertex_of(&p.point, &mut vertices)?;
            let head = vertex_of(&child.point, &mut vertices)?;
            if tail != head {
                edges.push(Edge {
                    tail,
                    head,
                    weight: child.mass,
                });
            }
        }
        let path = TransportPath::new(
            vertices,
            edges,
            measures[n].clone(),
            measures[n + 1].clone(),
        );
        let cost = path.cost_alpha(alpha)?;
        step_paths.push(path);
        step_costs.push(cost);
    }

    let mut tail_sums = vec![0.0f64; step_costs.len()];
    let mut acc = 0.0;
    for i in (0..step_costs.len()).rev() {
        acc += step_costs[i];
        if !acc.is_finite() {
            return Err(Error::NonFinite("step cost tail sum"));
        }
        tail_sums[i] = acc;
    }
    Ok(AdmissibleSequence {
        measures,
        step_paths,
        step_costs,
        tail_sums,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesClass {
    Summable,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct AlphaDiagnostic {
    pub alpha: f64,
    /// 1 / (1 - alpha), the dimension value this alpha testifies about.
    pub dim_value: f64,
    pub class: SeriesClass,
    pub tail_ratios: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DimensionBracket {
    pub lower: f64,
    pub upper: f64,
    pub diagnostics: Vec<AlphaDiagnostic>,
}

impl DimensionBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Step costs of the hierarchical scheme for one alpha, computed from the
/// cached skeleton; same numbers as the admissible sequence's step costs.
pub fn step_cost_series(f: &NestedCollection, alpha: f64) -> Result<Vec<f64>> {
    if !alpha.is_finite() || alpha >= 1.0 {
        return Err(Error::AlphaOutOfRange(alpha, "(-inf, 1)"));
    }
    Ok(f.step_skeleton()?
        .iter()
        .map(|pairs| pairs.iter().map(|&(m, d)| m.powf(alpha) * d).sum())
        .collect())
}

fn classify(costs: &[f64]) -> (SeriesClass, Vec<f64>) {
    if costs.is_empty() {
        return (SeriesClass::Summable, Vec::new());
    }
    let window = costs.len().saturating_sub(1).min(RATIO_WINDOW);
    if window == 0 {
        // One step only: a finite cost is trivially summable.
        return (SeriesClass::Summable, Vec::new());
    }
    let start = costs.len() - 1 - window;
    if costs[start..].iter().all(|&c| c == 0.0) {
        return (SeriesClass::Summable, Vec::new());
    }
    if costs[start..].iter().any(|&c| c == 0.0) {
        return (SeriesClass::Inconclusive, Vec::new());
    }
    let ratios: Vec<f64> = (start..costs.len() - 1)
        .map(|i| costs[i + 1] / costs[i])
        .collect();
    // A trend read off one or two ratios is noise, not evidence.
    if ratios.len() < MIN_CONCLUSIVE_RATIOS {
        return (SeriesClass::Inconclusive, ratios);
    }
    let class = if ratios.iter().all(|&r| r < 1.0 - RATIO_MARGIN) {
        SeriesClass::Summable
    } else if ratios.iter().all(|&r| r > 1.0 + RATIO_MARGIN) {
        SeriesClass::Divergent
    } else {
        SeriesClass::Inconclusive
    };
    (class, ratios)
}

/// Brackets the transport dimension: alphas whose cost series is summable
/// push the upper end down to 1/(1-alpha), divergent ones push the lower end
/// up; inconclusive alphas are reported but excluded.
pub fn transport_dim_estimate(
    f: &NestedCollection,
    alpha_grid: &[f64],
) -> Result<DimensionBracket> {
    if alpha_grid.is_empty() {
        return Err(Error::InvalidArgument("empty alpha grid".into()));
    }
    let mut diagnostics = Vec::with_capacity(alpha_grid.len());
    let mut lower = 0.0f64;
    let mut upper = f64::INFINITY;
    for &alpha in alpha_grid {
        let costs = step_cost_series(f, alpha)?;
        let (class, tail_ratios) = classify(&costs);
        let dim_value = 1.0 / (1.0 - alpha);
        match class {
            SeriesClass::Summable => upper = upper.min(dim_value),
            SeriesClass::Divergent => lower = lower.max(dim_value),
            SeriesClass::Inconclusive => {}
        }
        diagnostics.push(AlphaDiagnostic {
            alpha,
            dim_value,
            class,
            tail_ratios,
        });
    }
    Ok(DimensionBracket {
        lower,
        upper,
        diagnostics,
    })
}

/// Brackets the dimensional distance between the measures two collections
/// represent. Atomic arguments contribute zero, so against an atomic measure
/// the distance is the other side's transport dimension; between two
/// non-atomic measures only joint summability gives an upper end, and the
/// lower end stays zero because the difference may cancel.
pub fn dimensional_distance_estimate(
    f_mu: &NestedCollection,
    f_nu: &NestedCollection,
    alpha_grid: &[f64],
) -> Result<DimensionBracket> {
    if alpha_grid.is_empty() {
        return Err(Error::InvalidArgument("empty alpha grid".into()));
    }
    if f_mu.structurally_equal(f_nu) {
        return Ok(DimensionBracket {
            lower: 0.0,
            upper: 0.0,
            diagnostics: Vec::new(),
        });
    }
    let mu_atomic = f_mu.is_effectively_atomic()?;
    let nu_atomic = f_nu.is_effectively_atomic()?;
    match (mu_atomic, nu_atomic) {
        (true, true) => Ok(DimensionBracket {
            lower: 0.0,
            upper: 0.0,
            diagnostics: Vec::new(),
        }),
        (true, false) => transport_dim_estimate(f_nu, alpha_grid),
        (false, true) => transport_dim_estimate(f_mu, alpha_grid),
        (false, false) => {
            let mut diagnostics = Vec::with_capacity(alpha_grid.len());
            let mut upper = f64::INFINITY;
            for &alpha in alpha_grid {
                let (ca, _) = classify(&step_cost_series(f_mu, alpha)?);
                let (cb, _) = classify(&step_cost_series(f_nu, alpha)?);
                let joint = if ca == SeriesClass::Summable && cb == SeriesClass::Summable {
                    SeriesClass::Summable
                } else {
                    SeriesClass::Inconclusive
                };
                let dim_value = 1.0 / (1.0 - alpha);
                if joint == SeriesClass::Summable {
                    upper = upper.min(dim_value);
                }
                diagnostics.push(AlphaDiagnostic {
                    alpha,
                    dim_value,
                    class: joint,
                    tail_ratios: Vec::new(),
                });
            }
            Ok(DimensionBracket {
                lower: 0.0,
                upper,
                diagnostics,
            })
        }
    }
}
