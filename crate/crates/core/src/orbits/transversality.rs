//! Transversality of the returned fast-fiber line to the singular vrai
//! canard, at `ε = 0`.
//!
//! The vrai canard through the folded saddle on `f⁻` lies on the leaf
//! `γ²x = μ_s − 1`. Its fast fibers on `C_r⁻` leave the switching surface
//! as `Z⁻` slip arcs from `(x_v, 0, θ)`. Each arc lands on `Σ_s`, and the
//! symmetry `S` brings the landing point back next to the saddle. The image
//! curve and the canard are compared in the `(θ, ξ)` plane of the sticking
//! region, where the canard is `ξ = μ_s − 1 + sin θ`.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};
use crate::model::{wrap_angle, xi, Params, State};
use crate::pws::{find_landing, SlipArc};

/// Onset phases this close to the ends of the `C_r⁻` window are skipped.
const END_MARGIN: f64 = 1e-6;
const SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnPoint {
    /// Onset phase on `L_out`.
    pub theta_out: f64,
    /// Phase and `ξ` of the symmetric image of the landing point.
    pub theta: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransversalityReport {
    pub gamma: f64,
    /// Image of `L_out` in the `(θ, ξ)` plane, ordered by onset phase.
    pub curve: Vec<ReturnPoint>,
    pub crossing: ReturnPoint,
    /// Angle between the image curve and the canard at the crossing, in `(−π/2, π/2]`.
    pub angle: f64,
}

/// `γ²x` on the vrai leaf.
fn leaf(p: &Params) -> f64 {
    p.mu_s - 1.0
}

/// Onset window: the part of the leaf on `C_r⁻`, `μ_d < ξ < μ_s` after the fold at `θ = π/2`.
fn window(p: &Params) -> Result<(f64, f64)> {
    let s = p.mu_d - leaf(p);
    if !(-1.0..1.0).contains(&s) {
        return Err(Error::NoIntersection("vrai canard has no repelling part".into()));
    }
    Ok((FRAC_PI_2 + END_MARGIN, PI - s.asin() - END_MARGIN))
}

/// Returns `None` when the arc does not land inside the sticking region.
fn return_point(theta_out: f64, p: &Params) -> Result<Option<ReturnPoint>> {
    let z0 = State::new(leaf(p) / p.gamma2(), 0.0, theta_out);
    let arc = SlipArc::new(z0, -1.0, p, 4.0 * TAU)?;
    let Some(l) = find_landing(&arc, 4.0 * TAU)? else {
        return Ok(None);
    };
    let xl = xi(l.state.x, l.state.theta, p);
    if l.touch || xl.abs() >= p.mu_s {
        return Ok(None);
    }
    Ok(Some(ReturnPoint {
        theta_out,
        theta: wrap_angle(l.state.theta + PI),
        xi: -xl,
    }))
}

/// Signed `ξ` distance of a return point above the canard.
fn gap(q: &ReturnPoint, p: &Params) -> f64 {
    q.xi - (leaf(p) + q.theta.sin())
}

pub fn transversality_check(gamma: f64, p: &Params) -> Result<TransversalityReport> {
    let p = p.with_gamma(gamma);
    let (a, b) = window(&p)?;
    let mut curve = Vec::with_capacity(SAMPLES + 1);
    for k in 0..=SAMPLES {
        if let Some(q) = return_point(a + (b - a) * k as f64 / SAMPLES as f64, &p)? {
            curve.push(q);
        }
    }
    let pair = curve
        .windows(2)
        .find(|w| gap(&w[0], &p) * gap(&w[1], &p) <= 0.0 && (w[1].theta_out - w[0].theta_out) < 1.5 * (b - a) / SAMPLES as f64)
        .map(|w| (w[0].theta_out, w[1].theta_out))
        .ok_or_else(|| Error::NoIntersection(format!("returned line misses the vrai canard at gamma={gamma}")))?;
    let at = |t: f64| -> Result<ReturnPoint> {
        return_point(t, &p)?.ok_or_else(|| Error::NoIntersection("return left the sticking region".into()))
    };
    let (mut lo, mut hi) = pair;
    let glo = gap(&at(lo)?, &p);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if gap(&at(mid)?, &p) * glo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let crossing = at(t)?;
    let h = 1e-6;
    let (qm, qp) = (at(t - h)?, at(t + h)?);
    let dtheta = wrap_angle(qp.theta - qm.theta + PI) - PI;
    let tangent = [dtheta, qp.xi - qm.xi];
    let canard = [1.0, crossing.theta.cos()];
    let cross = canard[0] * tangent[1] - canard[1] * tangent[0];
    let dot = canard[0] * tangent[0] + canard[1] * tangent[1];
    let mut angle = cross.atan2(dot);
    if angle > FRAC_PI_2 {
        angle -= PI;
    } else if angle <= -FRAC_PI_2 {
        angle += PI;
    }
    Ok(TransversalityReport { gamma, curve, crossing, angle })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn return_points_lie_in_the_sticking_region() {
        let p = Params::reference(5.0);
        let (a, b) = window(&p).unwrap();
        assert!(a < b);
        let q = return_point(0.5 * (a + b), &p).unwrap().unwrap();
        assert!(q.xi.abs() < p.mu_s);
    }
}
