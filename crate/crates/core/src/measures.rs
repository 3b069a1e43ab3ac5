//! Atomic (finitely supported) measures on a model surface.

use crate::error::{Error, Result};
use crate::geometry::{distance, Curvature, ModelPoint};

/// Atoms closer than this are treated as the same location and coalesced by
/// summing their masses.
pub const MERGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: ModelPoint,
    pub mass: f64,
}

/// A finite sum of positive point masses with pairwise distinct locations,
/// all on one surface.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<(ModelPoint, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let k = atoms[0].0.curvature();
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for (index, (location, mass)) in atoms.into_iter().enumerate() {
            k.check_same(location.curvature())?;
            if !mass.is_finite() || mass <= 0.0 {
                return Err(Error::InvalidMass { index, mass });
            }
            match merged
                .iter_mut()
                .find(|a| distance(&a.location, &location).unwrap_or(f64::INFINITY) <= MERGE_TOLERANCE)
            {
                Some(existing) => existing.mass += mass,
                None => merged.push(Atom { location, mass }),
            }
        }
        Ok(AtomicMeasure { atoms: merged })
    }

    /// Unit point mass.
    pub fn dirac(location: ModelPoint) -> Self {
        AtomicMeasure {
            atoms: vec![Atom { location, mass: 1.0 }],
        }
    }

    pub fn curvature(&self) -> Curvature {
        self.atoms[0].location.curvature()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least one atom
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.mass).collect()
    }

    pub fn locations(&self) -> Vec<ModelPoint> {
        self.atoms.iter().map(|a| a.location).collect()
    }

    /// Splits off the total mass: returns the probability-normalized measure
    /// together with the original total.
    pub fn normalize(&self) -> (Self, f64) {
        let total = self.total_mass();
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                location: a.location,
                mass: a.mass / total,
            })
            .collect();
        (AtomicMeasure { atoms }, total)
    }

    pub fn scale(&self, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidArgument(format!("scale factor {lambda}")));
        }
        Ok(AtomicMeasure {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    location: a.location,
                    mass: a.mass * lambda,
                })
                .collect(),
        })
    }

    /// Mass lying strictly outside the closed ball of radius `r` about `p`.
    pub fn restrict_outside_ball(&self, p: &ModelPoint, r: f64) -> Result<f64> {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidArgument(format!("ball radius {r}")));
        }
        self.curvature().check_same(p.curvature())?;
        let mut mass = 0.0;
        for a in &self.atoms {
            if distance(&a.location, p)? > r {
                mass += a.mass;
            }
        }
        Ok(mass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(x: f64, y: f64) -> ModelPoint {
        ModelPoint::flat(x, y).unwrap()
    }

    #[test]
    fn total_mass_sums_atoms() {
        let m = AtomicMeasure::new(vec![(flat(0.0, 0.0), 0.5), (flat(1.0, 0.0), 0.5)]).unwrap();
        assert_eq!(m.total_mass(), 1.0);
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn nearby_atoms_coalesce() {
        let m = AtomicMeasure::new(vec![
            (flat(0.0, 0.0), 0.25),
            (flat(0.0, 0.5e-9), 0.75),
            (flat(2.0, 0.0), 1.0),
        ])
        .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.atoms()[0].mass, 1.0);
    }

    #[test]
    fn nonpositive_mass_rejected_with_index() {
        let err = AtomicMeasure::new(vec![(flat(0.0, 0.0), 1.0), (flat(1.0, 0.0), -0.5)])
            .unwrap_err();
        match err {
            Error::InvalidMass { index, mass } => {
                assert_eq!(index, 1);
                assert_eq!(mass, -0.5);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn normalize_splits_total_and_rescales_back() {
        let m = AtomicMeasure::new(vec![(flat(0.0, 0.0), 0.3), (flat(1.0, 0.0), 1.2)]).unwrap();
        let (p, total) = m.normalize();
        assert!((total - 1.5).abs() < 1e-15);
        assert!((p.total_mass() - 1.0).abs() < 1e-15);
        let back = p.scale(total).unwrap();
        for (a, b) in back.atoms().iter().zip(m.atoms()) {
            assert!((a.mass - b.mass).abs() <= 4.0 * f64::EPSILON * b.mass);
        }
    }

    #[test]
    fn restrict_outside_ball_is_strict() {
        let m = AtomicMeasure::new(vec![
            (flat(0.0, 0.0), 0.2),
            (flat(1.0, 0.0), 0.3),
            (flat(3.0, 0.0), 0.5),
        ])
        .unwrap();
        let p = flat(0.0, 0.0);
        // Atom exactly on the boundary of the closed ball does not count.
        assert!((m.restrict_outside_ball(&p, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((m.restrict_outside_ball(&p, 0.5).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(m.restrict_outside_ball(&p, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn curvature_mixing_rejected() {
        let sphere = ModelPoint::from_polar(Curvature::new(1.0).unwrap(), 0.5, 0.0).unwrap();
        assert!(AtomicMeasure::new(vec![(flat(0.0, 0.0), 1.0), (sphere, 1.0)]).is_err());
    }
}
