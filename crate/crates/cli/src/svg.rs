//! Static SVG rendering of a solved network. The plane is drawn directly,
//! the sphere through an orthographic view down the polar axis, and the
//! hyperboloid through the Poincare disk, so every curved drawing lands in
//! the unit disk. Edges are geodesic polylines; stroke width tracks weight.

use ramified::geometry::{geodesic_point, ModelPoint};
use ramified::measures::MERGE_TOLERANCE;
use ramified::{distance, Result, TransportPath};
use std::fmt::Write;

const SEGMENTS: usize = 32;

fn project(p: &ModelPoint) -> (f64, f64) {
    let k = p.curvature().value();
    let c = p.chart_coords();
    if k == 0.0 {
        (c[0], c[1])
    } else if k > 0.0 {
        let s = k.sqrt();
        (c[0] * s, c[1] * s)
    } else {
        let s = (-k).sqrt();
        (c[0] * s / (1.0 + c[2] * s), c[1] * s / (1.0 + c[2] * s))
    }
}

fn vertex_class(path: &TransportPath, v: usize) -> &'static str {
    let p = &path.vertices()[v];
    let near = |m: &ramified::AtomicMeasure| {
        m.atoms()
            .iter()
            .any(|a| distance(&a.location, p).map_or(false, |d| d <= MERGE_TOLERANCE))
    };
    if near(path.source()) {
        "#1f6fb4"
    } else if near(path.sink()) {
        "#c23b22"
    } else {
        "#444444"
    }
}

pub fn render(path: &TransportPath) -> Result<String> {
    let flat = path.curvature().is_flat();
    let mut polylines: Vec<(Vec<(f64, f64)>, f64)> = Vec::with_capacity(path.edges().len());
    for e in path.edges() {
        let a = &path.vertices()[e.tail];
        let b = &path.vertices()[e.head];
        let mut pts = Vec::with_capacity(SEGMENTS + 1);
        for i in 0..=SEGMENTS {
            pts.push(project(&geodesic_point(a, b, i as f64 / SEGMENTS as f64)?));
        }
        polylines.push((pts, e.weight));
    }
    let dots: Vec<(f64, f64)> = path.vertices().iter().map(project).collect();

    // Viewport in drawing coordinates (y still mathematical, flipped on
    // output): tight box plus margin for the plane, the unit disk otherwise.
    let (x0, y0, x1, y1) = if flat {
        let all = dots.iter().chain(polylines.iter().flat_map(|(pts, _)| pts));
        let mut bb = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for &(x, y) in all {
            bb = (bb.0.min(x), bb.1.min(y), bb.2.max(x), bb.3.max(y));
        }
        let pad = 0.15 * (bb.2 - bb.0).max(bb.3 - bb.1).max(1e-6);
        (bb.0 - pad, bb.1 - pad, bb.2 + pad, bb.3 + pad)
    } else {
        (-1.1, -1.1, 1.1, 1.1)
    };
    let span = (x1 - x0).max(y1 - y0);
    let unit = span / 240.0;
    let wmax = polylines
        .iter()
        .map(|&(_, w)| w)
        .fold(f64::MIN_POSITIVE, f64::max);

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{:.6} {:.6} {:.6} {:.6}\" width=\"640\" height=\"640\">",
        x0,
        -y1,
        x1 - x0,
        y1 - y0
    )
    .unwrap();
    if !flat {
        writeln!(
            svg,
            "  <circle cx=\"0\" cy=\"0\" r=\"1\" fill=\"none\" stroke=\"#cccccc\" stroke-width=\"{:.6}\"/>",
            0.8 * unit
        )
        .unwrap();
    }
    for (pts, w) in &polylines {
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.6},{:.6}", x, -y))
            .collect();
        writeln!(
            svg,
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"{:.6}\" stroke-linecap=\"round\"/>",
            coords.join(" "),
            unit * (0.6 + 2.4 * w / wmax)
        )
        .unwrap();
    }
    for (v, &(x, y)) in dots.iter().enumerate() {
        writeln!(
            svg,
            "  <circle cx=\"{:.6}\" cy=\"{:.6}\" r=\"{:.6}\" fill=\"{}\"/>",
            x,
            -y,
            2.2 * unit,
            vertex_class(path, v)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
