//! The four subcommands. Each builds a plain serializable report, hands it
//! to the output module, and maps library errors onto exit codes via
//! CliError.

use crate::output::{finite_or_null, fmt_float, to_json, write_artifact};
use crate::spec::ProblemSpec;
use crate::{parse_grid, svg, CliError, CliResult};
use crate::{DimensionArgs, PlanArgs, SolveArgs, SweepArgs};
use ramified::dimension::{
    evenly_concentrated, minkowski_dim, transport_dim_estimate, NestedCollection, SeriesClass,
};
use ramified::plans::{j_alpha_with_limit, DEFAULT_PLAN_LIMIT};
use ramified::solver::SolveResult;
use ramified::{solve, AtomicMeasure, SolverConfig};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Serialize)]
struct AtomReport {
    coords: Vec<f64>,
    mass: f64,
}

#[derive(Serialize)]
struct EdgeReport {
    tail: usize,
    head: usize,
    weight: f64,
    length: f64,
}

#[derive(Serialize)]
struct AngleReport {
    vertex: usize,
    edge_a: usize,
    edge_b: usize,
    probe_radius: f64,
    chord: f64,
    angle: f64,
    pair_bound: f64,
    theta_alpha: f64,
    separation_slack: f64,
    pass: bool,
    lemma_pass: bool,
}

#[derive(Serialize)]
struct DegreeReport {
    vertex: usize,
    degree: usize,
    clearance: f64,
    bound_at_clearance: f64,
    bound_at_zero: f64,
    pass: bool,
}

#[derive(Serialize)]
struct SolveReport {
    alpha: f64,
    curvature: f64,
    cost: f64,
    lower_bound: f64,
    bracket_ok: bool,
    converged: bool,
    topologies_searched: usize,
    doubling_constant: f64,
    max_degree: usize,
    vertices: Vec<Vec<f64>>,
    edges: Vec<EdgeReport>,
    sources: Vec<AtomReport>,
    sinks: Vec<AtomReport>,
    angle_audit: Vec<AngleReport>,
    degree_audit: Vec<DegreeReport>,
}

fn atom_reports(m: &AtomicMeasure) -> Vec<AtomReport> {
    m.atoms()
        .iter()
        .map(|a| AtomReport {
            coords: a.location.chart_coords().to_vec(),
            mass: a.mass,
        })
        .collect()
}

fn bracket_ok(lower: f64, cost: f64) -> bool {
    lower <= cost + 1e-12 * cost.abs().max(1.0)
}

fn solve_report(alpha: f64, curvature: f64, r: &SolveResult) -> CliResult<SolveReport> {
    let mut edges = Vec::with_capacity(r.path.edges().len());
    for (e, edge) in r.path.edges().iter().enumerate() {
        edges.push(EdgeReport {
            tail: edge.tail,
            head: edge.head,
            weight: edge.weight,
            length: r.path.edge_length(e).map_err(CliError::from)?,
        });
    }
    Ok(SolveReport {
        alpha,
        curvature,
        cost: r.cost,
        lower_bound: r.lower_bound,
        bracket_ok: bracket_ok(r.lower_bound, r.cost),
        converged: r.converged,
        topologies_searched: r.topologies_searched,
        doubling_constant: r.doubling_constant,
        max_degree: r.path.max_degree(),
        vertices: r
            .path
            .vertices()
            .iter()
            .map(|p| p.chart_coords().to_vec())
            .collect(),
        edges,
        sources: atom_reports(r.path.source()),
        sinks: atom_reports(r.path.sink()),
        angle_audit: r
            .angle_report
            .iter()
            .map(|c| AngleReport {
                vertex: c.vertex,
                edge_a: c.edge_a,
                edge_b: c.edge_b,
                probe_radius: c.probe_radius,
                chord: c.chord,
                angle: c.angle,
                pair_bound: c.pair_bound,
                theta_alpha: c.theta_alpha,
                separation_slack: c.separation_slack,
                pass: c.pass,
                lemma_pass: c.lemma_pass,
            })
            .collect(),
        degree_audit: r
            .degree_report
            .iter()
            .map(|c| DegreeReport {
                vertex: c.vertex,
                degree: c.degree,
                clearance: c.clearance,
                bound_at_clearance: c.bound_at_clearance,
                bound_at_zero: c.bound_at_zero,
                pass: c.pass,
            })
            .collect(),
    })
}

pub fn cmd_solve(args: &SolveArgs) -> CliResult<()> {
    let spec = ProblemSpec::load(&args.spec)?;
    let alpha = args.alpha.unwrap_or(spec.alpha);
    let curvature = args.curvature.unwrap_or(spec.curvature);
    let (a, b) = spec.measures(curvature)?;
    let mut cfg = spec.solver_config();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(limit) = args.limit {
        cfg.limit = limit;
    }
    let r = solve(&a, &b, alpha, &cfg)?;
    let report = solve_report(alpha, curvature, &r)?;
    write_artifact(&args.out, &to_json(&report)?)?;
    if let Some(path) = &args.svg {
        let drawing = svg::render(&r.path).map_err(CliError::from)?;
        write_artifact(&Some(path.clone()), &drawing)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CrossCheck {
    solve_cost: f64,
    path_cost_at_most_plan: bool,
}

#[derive(Serialize)]
struct PlanReport {
    alpha: f64,
    curvature: f64,
    j_alpha: f64,
    gamma: Vec<Vec<f64>>,
    row_margins: Vec<f64>,
    col_margins: Vec<f64>,
    sources: Vec<AtomReport>,
    sinks: Vec<AtomReport>,
    /// Present when the instance is small enough to also solve for a path.
    cross_check: Option<CrossCheck>,
}

pub fn cmd_plan(args: &PlanArgs) -> CliResult<()> {
    let spec = ProblemSpec::load(&args.spec)?;
    let alpha = args.alpha.unwrap_or(spec.alpha);
    let (a, b) = spec.measures(spec.curvature)?;
    let limit = args.limit.unwrap_or(DEFAULT_PLAN_LIMIT);
    let (j, plan) = j_alpha_with_limit(&a, &b, alpha, limit)?;
    let cross_check = if a.len() + b.len() <= spec.solver.limit {
        let r = solve(&a, &b, alpha, &spec.solver_config())?;
        Some(CrossCheck {
            solve_cost: r.cost,
            path_cost_at_most_plan: r.cost <= j + 1e-8,
        })
    } else {
        None
    };
    let report = PlanReport {
        alpha,
        curvature: spec.curvature,
        j_alpha: j,
        gamma: plan.gamma().to_vec(),
        row_margins: plan.row_margins().to_vec(),
        col_margins: plan.col_margins().to_vec(),
        sources: atom_reports(&a),
        sinks: atom_reports(&b),
        cross_check,
    };
    write_artifact(&args.out, &to_json(&report)?)
}

struct SweepRow {
    index: usize,
    alpha: f64,
    curvature: f64,
    cost: f64,
    lower_bound: f64,
    converged: bool,
    min_angle: Option<f64>,
    min_pair_bound: Option<f64>,
    min_chord: Option<f64>,
    min_separation_ratio: Option<f64>,
    min_separation_slack: Option<f64>,
    max_degree: usize,
    angle_pass: bool,
    lemma_pass: bool,
    bracket_ok: bool,
}

fn sweep_row(
    spec: &ProblemSpec,
    cfg: &SolverConfig,
    index: usize,
    alpha: f64,
    curvature: f64,
) -> CliResult<SweepRow> {
    let (a, b) = spec.measures(curvature)?;
    let r = solve(&a, &b, alpha, cfg)?;
    let fold =
        |f: fn(&ramified::solver::AngleCheck) -> f64| r.angle_report.iter().map(f).reduce(f64::min);
    Ok(SweepRow {
        index,
        alpha,
        curvature,
        cost: r.cost,
        lower_bound: r.lower_bound,
        converged: r.converged,
        min_angle: fold(|c| c.angle),
        min_pair_bound: fold(|c| c.pair_bound),
        min_chord: fold(|c| c.chord),
        // Chord over probe radius: the key-lemma observable, approaching 2
        // as curvature falls.
        min_separation_ratio: fold(|c| c.chord / c.probe_radius),
        min_separation_slack: fold(|c| c.separation_slack),
        max_degree: r.path.max_degree(),
        angle_pass: r.angle_report.iter().all(|c| c.pass),
        lemma_pass: r.angle_report.iter().all(|c| c.lemma_pass),
        bracket_ok: bracket_ok(r.lower_bound, r.cost),
    })
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    enum Axis {
        Alpha,
        Curvature,
    }
    let axis = match args.axis.as_str() {
        "alpha" => Axis::Alpha,
        "curvature" | "k" => Axis::Curvature,
        other => return Err(CliError::Parse(format!("unknown sweep axis '{other}'"))),
    };
    let spec = ProblemSpec::load(&args.spec)?;
    let values = parse_grid(&args.grid)?;
    let mut cfg = spec.solver_config();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(limit) = args.limit {
        cfg.limit = limit;
    }

    // Points run in parallel; rows land in index order regardless.
    let rows: Vec<CliResult<SweepRow>> = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| match axis {
            Axis::Alpha => sweep_row(&spec, &cfg, i, v, spec.curvature),
            Axis::Curvature => sweep_row(&spec, &cfg, i, spec.alpha, v),
        })
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "index",
        "alpha",
        "curvature",
        "cost",
        "lower_bound",
        "converged",
        "min_angle",
        "min_pair_bound",
        "min_chord",
        "min_separation_ratio",
        "min_separation_slack",
        "max_degree",
        "angle_pass",
        "lemma_pass",
        "bracket_ok",
    ])
    .map_err(|e| CliError::Parse(e.to_string()))?;
    let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
    for row in rows {
        let row = row?;
        w.write_record([
            row.index.to_string(),
            fmt_float(row.alpha),
            fmt_float(row.curvature),
            fmt_float(row.cost),
            fmt_float(row.lower_bound),
            row.converged.to_string(),
            opt(row.min_angle),
            opt(row.min_pair_bound),
            opt(row.min_chord),
            opt(row.min_separation_ratio),
            opt(row.min_separation_slack),
            row.max_degree.to_string(),
            row.angle_pass.to_string(),
            row.lemma_pass.to_string(),
            row.bracket_ok.to_string(),
        ])
        .map_err(|e| CliError::Parse(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Parse(e.to_string()))?;
    write_artifact(
        &args.out,
        &String::from_utf8(bytes).expect("csv writer emits UTF-8"),
    )
}

#[derive(Serialize)]
struct MinkowskiReport {
    dim: f64,
    per_generation: Vec<f64>,
}

#[derive(Serialize)]
struct WitnessReport {
    generation: usize,
    cube: usize,
    mass: f64,
    required: f64,
}

#[derive(Serialize)]
struct ConcentrationReport {
    lambda: f64,
    holds: bool,
    witness: Option<WitnessReport>,
}

#[derive(Serialize)]
struct BracketReport {
    lower: f64,
    /// null when no alpha in the grid testified to an upper end.
    upper: Option<f64>,
    width: Option<f64>,
}

#[derive(Serialize)]
struct AlphaReport {
    alpha: f64,
    dim_value: f64,
    class: &'static str,
    tail_ratios: Vec<f64>,
}

#[derive(Serialize)]
struct DimensionReport {
    collection: String,
    depth: usize,
    sigma: f64,
    c1: f64,
    c2: f64,
    generation_counts: Vec<usize>,
    minkowski: MinkowskiReport,
    evenly_concentrated: ConcentrationReport,
    bracket: BracketReport,
    alphas: Vec<AlphaReport>,
}

pub fn cmd_dimension(args: &DimensionArgs) -> CliResult<()> {
    let f = match args.collection.as_str() {
        "cantor" => NestedCollection::cantor(args.depth),
        "dyadic" => NestedCollection::dyadic(args.depth),
        "sierpinski" => NestedCollection::sierpinski(args.depth),
        "chain" => NestedCollection::chain(args.depth),
        other => return Err(CliError::Parse(format!("unknown collection '{other}'"))),
    }
    .map_err(CliError::from)?;
    let grid = match &args.grid {
        Some(text) => parse_grid(text)?,
        None => parse_grid("-1:0:21")?,
    };
    let mink = minkowski_dim(&f).map_err(CliError::from)?;
    let witness = evenly_concentrated(&f, 1.0).map_err(CliError::from)?;
    let bracket = transport_dim_estimate(&f, &grid).map_err(CliError::from)?;
    let report = DimensionReport {
        collection: args.collection.clone(),
        depth: args.depth,
        sigma: f.sigma(),
        c1: f.c1(),
        c2: f.c2(),
        generation_counts: f.counts(),
        minkowski: MinkowskiReport {
            dim: mink.dim,
            per_generation: mink.per_generation,
        },
        evenly_concentrated: ConcentrationReport {
            lambda: 1.0,
            holds: witness.is_none(),
            witness: witness.map(|w| WitnessReport {
                generation: w.generation,
                cube: w.cube,
                mass: w.mass,
                required: w.required,
            }),
        },
        bracket: BracketReport {
            lower: bracket.lower,
            upper: finite_or_null(bracket.upper),
            width: finite_or_null(bracket.width()),
        },
        alphas: bracket
            .diagnostics
            .iter()
            .map(|d| AlphaReport {
                alpha: d.alpha,
                dim_value: d.dim_value,
                class: match d.class {
                    SeriesClass::Summable => "summable",
                    SeriesClass::Divergent => "divergent",
                    SeriesClass::Inconclusive => "inconclusive",
                },
                tail_ratios: d.tail_ratios.clone(),
            })
            .collect(),
    };
    write_artifact(&args.out, &to_json(&report)?)
}
