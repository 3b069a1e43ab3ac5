//! Problem spec files: JSON with a cost exponent, a curvature, two atom
//! lists, and optional solver knobs. Atoms are placed either by flat chart
//! coordinates (`coords`, curvature 0 only) or by geodesic polar coordinates
//! (`polar`, any curvature), so one spec can be re-read at several
//! curvatures.

use crate::{CliError, CliResult};
use ramified::geometry::{Curvature, ModelPoint};
use ramified::measures::AtomicMeasure;
use ramified::solver::SolverConfig;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub alpha: f64,
    #[serde(default)]
    pub curvature: f64,
    pub sources: Vec<AtomSpec>,
    pub sinks: Vec<AtomSpec>,
    #[serde(default)]
    pub solver: SolverBlock,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    #[serde(default)]
    pub coords: Option<[f64; 2]>,
    #[serde(default)]
    pub polar: Option<[f64; 2]>,
    pub mass: f64,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub limit: usize,
    pub max_sweeps: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let cfg = SolverConfig::default();
        SolverBlock {
            limit: cfg.limit,
            max_sweeps: cfg.max_sweeps,
            restarts: cfg.restarts,
            seed: cfg.seed,
        }
    }
}

impl ProblemSpec {
    pub fn load(path: &str) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("{path}: {e}")))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{path}: {e}")))
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            limit: self.solver.limit,
            max_sweeps: self.solver.max_sweeps,
            restarts: self.solver.restarts,
            seed: self.solver.seed,
        }
    }

    /// Both measures at the given curvature; errors name the offending atom.
    pub fn measures(&self, curvature: f64) -> CliResult<(AtomicMeasure, AtomicMeasure)> {
        let k = Curvature::new(curvature)?;
        let a = build_measure(&self.sources, k, "sources")?;
        let b = build_measure(&self.sinks, k, "sinks")?;
        Ok((a, b))
    }
}

fn build_measure(atoms: &[AtomSpec], k: Curvature, side: &str) -> CliResult<AtomicMeasure> {
    let mut placed = Vec::with_capacity(atoms.len());
    for (i, atom) in atoms.iter().enumerate() {
        let name = format!("{side}[{i}]");
        if !atom.mass.is_finite() || atom.mass <= 0.0 {
            return Err(CliError::Validation(format!(
                "{name}: mass must be positive and finite, got {}",
                atom.mass
            )));
        }
        let point = match (&atom.coords, &atom.polar) {
            (Some([x, y]), None) => {
                if !k.is_flat() {
                    return Err(CliError::Validation(format!(
                        "{name}: coords placement requires curvature 0; use polar"
                    )));
                }
                ModelPoint::flat(*x, *y)
                    .map_err(|e| CliError::Validation(format!("{name}: {e}")))?
            }
            (None, Some([r, phi])) => ModelPoint::from_polar(k, *r, *phi)
                .map_err(|e| CliError::Validation(format!("{name}: {e}")))?,
            _ => {
                return Err(CliError::Validation(format!(
                    "{name}: exactly one of coords or polar must be given"
                )))
            }
        };
        placed.push((point, atom.mass));
    }
    AtomicMeasure::new(placed).map_err(|e| CliError::Validation(format!("{side}: {e}")))
}
