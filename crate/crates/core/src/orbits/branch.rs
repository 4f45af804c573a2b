//! Orbit branches and the continuation of the discontinuous families `Π₀^{l,r}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Write};

use super::arclength::{continue_curve, parameter_direction, ArclengthEnd, ArclengthOptions, Verdict};
use super::floquet::FloquetData;
use super::pws::{admissibility, floquet_discontinuous, max_abs_y, onset_x, slipstick_residual, SlipStickSolution};
use crate::error::Result;
use crate::export::fmt17;
use crate::model::Params;
use crate::pws::RESONANCE_GUARD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchLabel {
    Pi0Left,
    Pi0Right,
    PiEpsLeft,
    PiEpsCenter,
    PiEpsRight,
}

impl BranchLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BranchLabel::Pi0Left => "Pi0_left",
            BranchLabel::Pi0Right => "Pi0_right",
            BranchLabel::PiEpsLeft => "PiEps_left",
            BranchLabel::PiEpsCenter => "PiEps_center",
            BranchLabel::PiEpsRight => "PiEps_right",
        }
    }
}

/// Why one end of a branch stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchEnd {
    /// `θ* → 0`.
    PureSlip,
    /// `θ0 → π/2`, the visible tangency.
    Tangency,
    /// `θ* → π`.
    StickLimit,
    Resonance,
    GammaLimit,
    /// Some other admissibility check failed.
    Inadmissible,
    StepTooSmall,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub gamma: f64,
    pub theta0: f64,
    pub theta_star: f64,
    pub x0: f64,
    pub max_abs_y: f64,
    pub floquet: Option<FloquetData>,
    pub label: BranchLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitBranch {
    pub points: Vec<BranchPoint>,
    /// Indices of points at which γ turns.
    pub folds: Vec<usize>,
    /// Termination at the first and at the last point.
    pub ends: [BranchEnd; 2],
}

impl OrbitBranch {
    pub fn gamma_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), q| (a.min(q.gamma), b.max(q.gamma)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PwsContinuation {
    pub arclength: ArclengthOptions,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Distance to `θ* = 0`, `θ* = π` and `θ0 = π/2` treated as reaching them.
    pub boundary_tol: f64,
}

impl Default for PwsContinuation {
    fn default() -> Self {
        Self {
            arclength: ArclengthOptions {
                ds: 0.01,
                ds_max: 0.5,
                ds_min: 1e-7,
                ..ArclengthOptions::default()
            },
            gamma_min: 0.05,
            gamma_max: 45.0,
            boundary_tol: 1e-3,
        }
    }
}

fn pws_system(u: &DVector<f64>, p: &Params) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (th0, ths, g) = (u[0], u[1], u[2]);
    let pg = p.with_gamma(g);
    let (r, j) = slipstick_residual(th0, ths, &pg)?;
    // ∂F/∂γ by central differences.
    let h = 1e-6 * g.max(1.0);
    let (rp, _) = slipstick_residual(th0, ths, &p.with_gamma(g + h))?;
    let (rm, _) = slipstick_residual(th0, ths, &p.with_gamma(g - h))?;
    let jg = [(rp[0] - rm[0]) / (2.0 * h), (rp[1] - rm[1]) / (2.0 * h)];
    Ok((
        DVector::from_vec(r.to_vec()),
        DMatrix::from_row_slice(2, 3, &[j[0][0], j[0][1], jg[0], j[1][0], j[1][1], jg[1]]),
    ))
}

fn judge(u: &DVector<f64>, p: &Params, o: &PwsContinuation) -> Verdict<BranchEnd> {
    let (th0, ths, g) = (u[0], u[1], u[2]);
    if ths < o.boundary_tol {
        return Verdict::Boundary(BranchEnd::PureSlip);
    }
    if PI - ths < o.boundary_tol {
        return Verdict::Boundary(BranchEnd::StickLimit);
    }
    if th0.cos() < o.boundary_tol {
        return Verdict::Boundary(BranchEnd::Tangency);
    }
    if (g - 1.0).abs() < RESONANCE_GUARD {
        return Verdict::Boundary(BranchEnd::Resonance);
    }
    if g < o.gamma_min || g > o.gamma_max {
        return Verdict::Boundary(BranchEnd::GammaLimit);
    }
    match admissibility(th0, ths, &p.with_gamma(g)) {
        Ok(a) if a.all() => Verdict::Accept,
        _ => Verdict::Boundary(BranchEnd::Inadmissible),
    }
}

fn to_point(u: &DVector<f64>, p: &Params, label: BranchLabel) -> Result<BranchPoint> {
    let pg = p.with_gamma(u[2]);
    let sol = SlipStickSolution {
        gamma: u[2],
        theta0: u[0],
        theta_star: u[1],
        x0: onset_x(u[0], &pg),
        residual: 0.0,
        iterations: 0,
        admissibility: admissibility(u[0], u[1], &pg)?,
    };
    Ok(BranchPoint {
        gamma: sol.gamma,
        theta0: sol.theta0,
        theta_star: sol.theta_star,
        x0: sol.x0,
        max_abs_y: max_abs_y(&sol, &pg)?,
        floquet: floquet_discontinuous(&sol, &pg).ok(),
        label,
    })
}

pub(crate) fn map_end<R: Copy>(e: &ArclengthEnd<R>, f: impl Fn(R) -> BranchEnd) -> BranchEnd {
    match e {
        ArclengthEnd::Boundary(r) | ArclengthEnd::Stopped(r) => f(*r),
        ArclengthEnd::StepTooSmall => BranchEnd::StepTooSmall,
        ArclengthEnd::MaxSteps => BranchEnd::MaxSteps,
    }
}

/// Continues a discontinuous slip-stick family in both directions from `seed`
/// by pseudo-arclength in `(θ0, θ*, γ)`, so that folds in γ are passed.
pub fn continue_branch_pws(seed: &SlipStickSolution, label: BranchLabel, p: &Params, o: &PwsContinuation) -> Result<OrbitBranch> {
    let u0 = DVector::from_vec(vec![seed.theta0, seed.theta_star, seed.gamma]);
    let f = |u: &DVector<f64>| pws_system(u, p);
    let back = continue_curve(f, u0.clone(), &parameter_direction(3, -1.0), &o.arclength, |u| judge(u, p, o))?;
    let fwd = continue_curve(f, u0, &parameter_direction(3, 1.0), &o.arclength, |u| judge(u, p, o))?;
    let nb = back.points.len();
    let mut us: Vec<DVector<f64>> = back.points.into_iter().rev().collect();
    us.extend(fwd.points.into_iter().skip(1));
    let mut folds: Vec<usize> = back.folds.iter().map(|&i| nb - 1 - i).collect();
    folds.extend(fwd.folds.iter().map(|&i| nb - 1 + i));
    folds.sort_unstable();
    let points = crate::par::par_map(us, |u| to_point(&u, p, label))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(OrbitBranch {
        points,
        folds,
        ends: [map_end(&back.end, |r| r), map_end(&fwd.end, |r| r)],
    })
}

/// Both discontinuous families: `Π₀^l` seeded at `gamma_left`, `Π₀^r` at `gamma_right`.
pub fn pws_branches(p: &Params, gamma_left: f64, gamma_right: f64, o: &PwsContinuation) -> Result<(OrbitBranch, OrbitBranch)> {
    let seed = |g: f64| -> Result<SlipStickSolution> {
        super::pws::find_slipstick(g, p, 24)
            .into_iter()
            .next()
            .ok_or_else(|| crate::error::Error::NoIntersection(format!("no slip-stick orbit at gamma={g}")))
    };
    let (sl, sr) = (seed(gamma_left)?, seed(gamma_right)?);
    let (l, r) = crate::par::join(
        || continue_branch_pws(&sl, BranchLabel::Pi0Left, p, o),
        || continue_branch_pws(&sr, BranchLabel::Pi0Right, p, o),
    );
    Ok((l?, r?))
}

pub const BRANCH_HEADER: &str = "gamma,theta0,theta_star,x0,maxAbsY,reLambda,imLambda,stability,branchLabel";

/// One row per orbit; `λ` is the leading nontrivial multiplier.
pub fn write_branch_csv<W: Write>(mut w: W, points: &[BranchPoint]) -> io::Result<()> {
    writeln!(w, "{BRANCH_HEADER}")?;
    for q in points {
        let (re, im, st) = match &q.floquet {
            Some(f) => (fmt17(f.leading().re), fmt17(f.leading().im), f.stability.as_str()),
            None => ("nan".into(), "nan".into(), "unknown"),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            fmt17(q.gamma),
            fmt17(q.theta0),
            fmt17(q.theta_star),
            fmt17(q.x0),
            fmt17(q.max_abs_y),
            re,
            im,
            st,
            q.label.as_str()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::find_slipstick;

    #[test]
    fn right_family_spans_pure_slip_to_large_gamma() {
        let p = Params::reference(2.0);
        let seed = find_slipstick(2.0, &p, 16)[0];
        let b = continue_branch_pws(&seed, BranchLabel::Pi0Right, &p, &PwsContinuation::default()).unwrap();
        assert_eq!(b.ends[0], BranchEnd::PureSlip);
        assert_eq!(b.ends[1], BranchEnd::GammaLimit);
        let (lo, hi) = b.gamma_range();
        assert!(lo > 1.0 && hi > 40.0);
        let first = &b.points[0];
        assert!(first.theta_star < 2e-3);
        assert!(b.points.last().unwrap().theta_star > 3.0);
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let p = Params::reference(2.0);
        let seed = find_slipstick(2.0, &p, 16)[0];
        let pt = to_point(&DVector::from_vec(vec![seed.theta0, seed.theta_star, seed.gamma]), &p, BranchLabel::Pi0Right).unwrap();
        let mut buf = Vec::new();
        write_branch_csv(&mut buf, &[pt.clone(), pt]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 3);
        assert!(s.lines().nth(1).unwrap().ends_with(",attracting,Pi0_right"));
    }
}
