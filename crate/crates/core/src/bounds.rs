//! Closed-form bounds for branching vertices of optimal transport paths:
//! the separation quantity R of a weight pair, its infimum/supremum over mass
//! splits, the universal angle bound, the mass-comparability bound for
//! negative exponents, and the Psi/Phi machinery behind the degree and
//! curvature bounds.

use crate::error::{Error, Result};
use crate::geometry::{distance, exp_map, tangent_basis, Curvature, ModelPoint};

const LN_2: f64 = std::f64::consts::LN_2;
const PI: f64 = std::f64::consts::PI;

/// Upper end of the admissible `x = r^2 k` range for `psi` and `phi`.
pub const PHI_X_MAX: f64 = PI * PI / 4.0;

/// Lower end used when inverting `phi` by bisection; `phi` is within 1e-3 of
/// its limit 2 here already.
pub const PHI_X_MIN: f64 = -1e6;

fn check_alpha_below_one(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha >= 1.0 {
        return Err(Error::AlphaOutOfRange(alpha, "(-inf, 1)"));
    }
    Ok(())
}

/// Separation quantity R of a weight pair at exponent `alpha`:
///
/// ```text
/// R^2 = ((m1^a + m2^a)^2 - (m1 + m2)^(2a)) / (m1^a * m2^a)
/// ```
///
/// Scale-invariant in the masses, so it is evaluated on the mass fractions.
/// Exact special values: sqrt(3) at alpha = 0, sqrt(2) at alpha = 1/2, and 0
/// at alpha = 1, independent of the masses.
pub fn r_of_masses(m1: f64, m2: f64, alpha: f64) -> Result<f64> {
    if !(m1.is_finite() && m1 > 0.0) {
        return Err(Error::InvalidMass { index: 0, mass: m1 });
    }
    if !(m2.is_finite() && m2 > 0.0) {
        return Err(Error::InvalidMass { index: 1, mass: m2 });
    }
    if !alpha.is_finite() || alpha > 1.0 {
        return Err(Error::AlphaOutOfRange(alpha, "(-inf, 1]"));
    }
    if alpha == 0.0 {
        return Ok(3.0f64.sqrt());
    }
    if alpha == 0.5 {
        return Ok(2.0f64.sqrt());
    }
    if alpha == 1.0 {
        return Ok(0.0);
    }
    let k1 = m1 / (m1 + m2);
    let k2 = m2 / (m1 + m2);
    let p1 = k1.powf(alpha);
    let p2 = k2.powf(alpha);
    let r2 = ((p1 + p2) * (p1 + p2) - 1.0) / (p1 * p2);
    Ok(r2.max(0.0).sqrt())
}

/// Infimum of R over all mass splits at fixed `alpha`: sqrt(2) for
/// 0 < alpha < 1/2 (boundary limit), otherwise the equal-split value
/// sqrt(4 - 4^alpha).
pub fn r_alpha(alpha: f64) -> Result<f64> {
    check_alpha_below_one(alpha)?;
    if alpha > 0.0 && alpha < 0.5 {
        Ok(2.0f64.sqrt())
    } else {
        Ok((4.0 - 4.0f64.powf(alpha)).sqrt())
    }
}

/// Supremum of R over mass splits for 0 <= alpha < 1: the equal-split value
/// sqrt(4 - 4^alpha) below 1/2, the boundary limit sqrt(2) above. Unbounded
/// for alpha < 0 over unconstrained splits, hence the domain restriction.
pub fn r_alpha_sup(alpha: f64) -> Result<f64> {
    if !alpha.is_finite() || !(0.0..1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha, "[0, 1)"));
    }
    if alpha < 0.5 {
        Ok((4.0 - 4.0f64.powf(alpha)).sqrt())
    } else {
        Ok(2.0f64.sqrt())
    }
}

/// Universal lower bound for the angle between two edges leaving (or two
/// edges entering) a common vertex of an optimal path: pi/2 for
/// 0 < alpha <= 1/2, arccos(2^(2 alpha - 1) - 1) otherwise.
pub fn theta_alpha(alpha: f64) -> Result<f64> {
    check_alpha_below_one(alpha)?;
    if alpha > 0.0 && alpha <= 0.5 {
        Ok(PI / 2.0)
    } else {
        Ok((2.0f64.powf(2.0 * alpha - 1.0) - 1.0).acos())
    }
}

/// Mass-comparability bound for alpha < 0: each of the two mass fractions at
/// a branching of an optimal path satisfies `k_i >= 1/(1 + (1+2^a)^(-1/a))`.
/// Tends to 1/2 as alpha -> -inf and vanishes as alpha -> 0-.
pub fn k_i_lower_bound(alpha: f64) -> Result<f64> {
    if !alpha.is_finite() || alpha >= 0.0 {
        return Err(Error::AlphaOutOfRange(alpha, "(-inf, 0)"));
    }
    Ok(1.0 / (1.0 + (1.0 + 2.0f64.powf(alpha)).powf(-1.0 / alpha)))
}

/// Normalized half-separation function:
///
/// ```text
/// psi(x, y) = arcsin((y/2) sin sqrt(x)) / sqrt(x)        x > 0
///           = y/2                                         x = 0
///           = arcsinh((y/2) sinh sqrt(-x)) / sqrt(-x)     x < 0
/// ```
///
/// Continuous, strictly decreasing in x on (-inf, (pi/2)^2], increasing in y
/// on (0, 2], with limit 1 as x -> -inf.
pub fn psi(x: f64, y: f64) -> Result<f64> {
    if !x.is_finite() || x > PHI_X_MAX + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "psi argument x = {x} above (pi/2)^2"
        )));
    }
    if !y.is_finite() || y <= 0.0 || y > 2.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "psi argument y = {y} outside (0, 2]"
        )));
    }
    let y = y.min(2.0);
    if x > 0.0 {
        let s = x.sqrt();
        Ok(((y / 2.0) * s.sin()).asin() / s)
    } else if x == 0.0 {
        Ok(y / 2.0)
    } else {
        let s = (-x).sqrt();
        if s > 250.0 {
            // arcsinh((y/2) sinh s) = s + ln(y/2) + O(e^(-2s)); the direct
            // form overflows long before the remainder matters.
            Ok(1.0 + (y / 2.0).ln() / s)
        } else {
            Ok(((y / 2.0) * s.sinh()).asinh() / s)
        }
    }
}

/// Covering exponent behind the degree bound:
/// `phi(x, alpha) = 1 + ln(1 + 1/psi(x, R_alpha)) / ln 2`. Strictly
/// increasing in x with limit 2 as x -> -inf.
pub fn phi(x: f64, alpha: f64) -> Result<f64> {
    let r = r_alpha(alpha)?;
    let p = psi(x, r)?;
    Ok(1.0 + (1.0 + 1.0 / p).ln() / LN_2)
}

/// Uniform upper bound for `phi(., alpha)`:
/// `1 + ln(1 + 1/C_alpha)/ln 2` with `C_alpha = (2/pi) arcsin(R_alpha/2)`.
pub fn phi_upper_bound(alpha: f64) -> Result<f64> {
    let c = (2.0 / PI) * (r_alpha(alpha)? / 2.0).asin();
    Ok(1.0 + (1.0 + 1.0 / c).ln() / LN_2)
}

/// Degree bound at a vertex with clearance radius r on a surface of curvature
/// k, evaluated at `x = r^2 k`: `2 * C_d ^ phi(x, alpha)`.
pub fn degree_bound(c_d: f64, x: f64, alpha: f64) -> Result<f64> {
    if !c_d.is_finite() || c_d < 1.0 {
        return Err(Error::InvalidArgument(format!("doubling constant {c_d}")));
    }
    Ok(2.0 * c_d.powf(phi(x, alpha)?))
}

/// Inverts the degree bound: a vertex of degree `deg` with clearance radius
/// `r` forces `k >= phi^{-1}(log_{C_d}(deg/2)) / r^2`. Returns `None` when
/// the degree carries no information (target at or below the x -> -inf limit
/// of phi), and an error when the degree exceeds what any admissible x can
/// produce.
pub fn curvature_lower_bound(
    deg: usize,
    c_d: f64,
    alpha: f64,
    r: f64,
) -> Result<Option<f64>> {
    if !c_d.is_finite() || c_d <= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "doubling constant {c_d} must exceed 1 to invert the bound"
        )));
    }
    if !r.is_finite() || r <= 0.0 {
        return Err(Error::InvalidArgument(format!("clearance radius {r}")));
    }
    if (deg as f64) < 2.0 * c_d * c_d - 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "degree {deg} below 2 C_d^2 = {}; bound not applicable",
            2.0 * c_d * c_d
        )));
    }
    let target = (deg as f64 / 2.0).ln() / c_d.ln();
    if target <= phi(PHI_X_MIN, alpha)? {
        return Ok(None);
    }
    if target > phi(PHI_X_MAX, alpha)? {
        return Err(Error::InvalidArgument(format!(
            "degree {deg} exceeds the bound at every admissible curvature"
        )));
    }
    let mut lo = PHI_X_MIN;
    let mut hi = PHI_X_MAX;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if phi(mid, alpha)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi) / (r * r)))
}

/// Everything the per-pair audits need about one branching: exponent,
/// curvature, doubling constant, probe radius and the two edge weights.
#[derive(Debug, Clone, Copy)]
pub struct BoundContext {
    alpha: f64,
    k: Curvature,
    c_d: f64,
    r: f64,
    m1: f64,
    m2: f64,
}

impl BoundContext {
    pub fn new(alpha: f64, k: Curvature, c_d: f64, r: f64, m1: f64, m2: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha > 1.0 {
            return Err(Error::AlphaOutOfRange(alpha, "(-inf, 1]"));
        }
        if !c_d.is_finite() || c_d < 1.0 {
            return Err(Error::InvalidArgument(format!("doubling constant {c_d}")));
        }
        if !r.is_finite() || r <= 0.0 || r > k.diameter() / 2.0 {
            return Err(Error::RadiusTooLarge(r, k.diameter() / 2.0));
        }
        if !(m1.is_finite() && m1 > 0.0) {
            return Err(Error::InvalidMass { index: 0, mass: m1 });
        }
        if !(m2.is_finite() && m2 > 0.0) {
            return Err(Error::InvalidMass { index: 1, mass: m2 });
        }
        Ok(BoundContext {
            alpha,
            k,
            c_d,
            r,
            m1,
            m2,
        })
    }

    pub fn k1(&self) -> f64 {
        self.m1 / (self.m1 + self.m2)
    }

    pub fn k2(&self) -> f64 {
        self.m2 / (self.m1 + self.m2)
    }

    pub fn r_value(&self) -> Result<f64> {
        r_of_masses(self.m1, self.m2, self.alpha)
    }

    /// Angle bound for this weight pair: `arccos(1 - R^2/2)`, which expands to
    /// `arccos((1 - k1^2a - k2^2a) / (2 k1^a k2^a))`.
    pub fn pair_angle_bound(&self) -> Result<f64> {
        let r = self.r_value()?;
        Ok((1.0 - r * r / 2.0).clamp(-1.0, 1.0).acos())
    }

    /// Slack of the separation inequality for the chord `a = d(A1, A2)`
    /// between the probe points at radius r: nonnegative slack means the
    /// inequality holds. Curvature picks the trigonometric form:
    /// `a >= R r` (flat), `sin(a sqrt(k)/2) >= (R/2) sin(r sqrt(k))` (sphere),
    /// `sinh(a sqrt(-k)/2) >= (R/2) sinh(r sqrt(-k))` (hyperbolic).
    pub fn separation_slack(&self, a: f64) -> Result<f64> {
        if !a.is_finite() || a < 0.0 {
            return Err(Error::InvalidArgument(format!("chord length {a}")));
        }
        let r = self.r_value()?;
        let kv = self.k.value();
        if kv == 0.0 {
            Ok(a - r * self.r)
        } else if kv > 0.0 {
            let s = kv.sqrt();
            Ok((a * s / 2.0).sin() - (r / 2.0) * (self.r * s).sin())
        } else {
            let s = (-kv).sqrt();
            Ok((a * s / 2.0).sinh() - (r / 2.0) * (self.r * s).sinh())
        }
    }

    /// Degree bound evaluated at this context's probe radius and curvature.
    pub fn degree_bound(&self) -> Result<f64> {
        degree_bound(self.c_d, self.r * self.r * self.k.value(), self.alpha)
    }
}

/// Empirical doubling constant of the region spanned by `points`: the number
/// of half-radius balls a greedy sweep needs to cover a fine net of the
/// bounding ball, maximized over two scales. Deterministic; an estimate, not
/// a certified constant.
pub fn doubling_constant_estimate(points: &[ModelPoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    let k = points[0].curvature();
    for p in points {
        k.check_same(p.curvature())?;
    }
    // Approximate 1-center: the input point whose farthest neighbor is nearest.
    let mut center = points[0];
    let mut radius = f64::INFINITY;
    for p in points {
        let far = points
            .iter()
            .map(|q| distance(p, q))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0f64, f64::max);
        if far < radius {
            radius = far;
            center = *p;
        }
    }
    let cap = 0.49 * k.diameter();
    let radius = radius.max(1e-3).min(cap);

    let (e1, e2) = tangent_basis(&center);
    let mut worst = 1.0f64;
    for scale in [radius, radius / 2.0] {
        // Polar net of the ball of radius `scale` about the center.
        let mut net = vec![center];
        let rings = 24;
        for i in 1..=rings {
            let rho = scale * i as f64 / rings as f64;
            let spokes = 6 * i;
            for j in 0..spokes {
                let ang = 2.0 * PI * j as f64 / spokes as f64;
                let v = [
                    rho * (ang.cos() * e1[0] + ang.sin() * e2[0]),
                    rho * (ang.cos() * e1[1] + ang.sin() * e2[1]),
                    rho * (ang.cos() * e1[2] + ang.sin() * e2[2]),
                ];
                net.push(exp_map(&center, &v)?);
            }
        }
        // Greedy cover by balls of half the set radius.
        let mut covered = vec![false; net.len()];
        let mut count = 0usize;
        for i in 0..net.len() {
            if covered[i] {
                continue;
            }
            count += 1;
            for j in i..net.len() {
                if !covered[j] && distance(&net[i], &net[j])? <= scale / 2.0 {
                    covered[j] = true;
                }
            }
        }
        worst = worst.max(count as f64);
    }
    Ok(worst)
}
