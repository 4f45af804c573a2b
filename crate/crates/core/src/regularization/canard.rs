//! Singular canards of the folded saddles, maximal canards for `ε > 0`,
//! and membership in the repelling sets `Q_r±`.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use super::field::{critical_manifold_roots, desingularized, slow_rhs, CriticalClass, CriticalPoint, ManifoldBranch};
use super::phi::{RegParams, Regularizer};
use crate::error::{Error, Result};
use crate::model::{wrap_angle, xi, Params};
use crate::ode::{self, Control, OdeOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CanardKind {
    Vrai,
    Faux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentKind {
    SingularVrai,
    SingularFaux,
    MaximalForward,
    MaximalBackward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanardPoint {
    pub x: f64,
    pub yhat: f64,
    /// Unwrapped phase.
    pub theta: f64,
    pub branch: ManifoldBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanardSegment {
    pub kind: SegmentKind,
    /// Samples in the original time direction.
    pub path: Vec<CanardPoint>,
    pub saddle: CriticalPoint,
    /// Distance to the saddle after the attracting part has gone once around
    /// the θ-circle (the singular canard is periodic).
    pub closure: f64,
}

fn branch_of(yh: f64, rp: &RegParams) -> ManifoldBranch {
    let d = rp.phi.dphi(yh);
    if d.abs() < 1e-12 {
        ManifoldBranch::Fold
    } else if d > 0.0 {
        ManifoldBranch::Ca
    } else if yh > 0.0 {
        ManifoldBranch::CrPlus
    } else {
        ManifoldBranch::CrMinus
    }
}

/// Offset from the saddle along the eigenvector when starting the integration.
const SEED_OFFSET: f64 = 1e-9;

/// Follows one side of a saddle manifold of the desingularized flow.
/// Returns samples `(ŷ, θ)` and the distance to the saddle at the stopping point.
fn follow(
    saddle: &CriticalPoint,
    v: [f64; 2],
    dir_time: f64,
    p: &Params,
    rp: &RegParams,
) -> Result<(Vec<[f64; 2]>, f64)> {
    let g = saddle.gamma_big;
    let start = [saddle.yhat + SEED_OFFSET * v[0], saddle.theta + SEED_OFFSET * v[1]];
    let pp = *p;
    let rr = *rp;
    let f = move |_t: f64, u: &[f64; 2]| desingularized(u[0], u[1], g, &pp, &rr);
    let opts = OdeOptions {
        h_max: 0.05,
        ..OdeOptions::with_tol(1e-14, 1e-15)
    };
    let mut path = vec![start];
    let mut end_dist = f64::INFINITY;
    let th0 = saddle.theta;
    let ys = saddle.yhat;
    ode::integrate(f, 0.0, start, dir_time * 500.0, &opts, |st| {
        path.push(st.y1);
        let [yh, th] = st.y1;
        // The repelling part ends where C_r meets |ŷ| = 1.
        if yh.abs() >= 1.0 {
            return Control::Stop;
        }
        if (th - th0).abs() > PI {
            // Closest approach to the saddle's image one period on.
            let target = th0 + TAU * (th - th0).signum();
            for k in 0..=16 {
                let u = st.eval(st.t0 + (st.t1 - st.t0) * k as f64 / 16.0);
                end_dist = end_dist.min((u[0] - ys).hypot(u[1] - target));
            }
            // Stop where the path meets the fold line again.
            if (st.y0[0] - ys) * (yh - ys) <= 0.0 {
                if let Some((_, u)) = ode::locate_in_step(st, |_, u| u[0] - ys, 1e-14) {
                    *path.last_mut().unwrap() = u;
                }
                return Control::Stop;
            }
        }
        Control::Continue
    })?;
    Ok((path, end_dist))
}

/// Singular vrai (faux) canard through a folded saddle: the stable (unstable)
/// manifold of the saddle in the desingularized flow, reoriented to the
/// original time direction, which is reversed on `C_r±`.
pub fn singular_canard(saddle: &CriticalPoint, kind: CanardKind, p: &Params, rp: &RegParams) -> Result<CanardSegment> {
    if saddle.class != CriticalClass::FoldedSaddle {
        return Err(Error::InvalidParams(format!("{:?} is not a folded saddle", saddle.class)));
    }
    let mu = match kind {
        CanardKind::Vrai => saddle.eigenvalues[0].re.min(saddle.eigenvalues[1].re),
        CanardKind::Faux => saddle.eigenvalues[0].re.max(saddle.eigenvalues[1].re),
    };
    // (−Γ − μ) v₁ + sin θ v₂ = 0.
    let mut v = [saddle.theta.sin(), mu + saddle.gamma_big];
    let n = v[0].hypot(v[1]);
    v = [v[0] / n, v[1] / n];
    // Orient v toward the attracting branch.
    let to_ca = -saddle.yhat.signum();
    if v[0] * to_ca < 0.0 {
        v = [-v[0], -v[1]];
    }
    let dir_time = match kind {
        CanardKind::Vrai => -1.0,
        CanardKind::Faux => 1.0,
    };
    let (side_a, closure) = follow(saddle, v, dir_time, p, rp)?;
    let (side_r, _) = follow(saddle, [-v[0], -v[1]], dir_time, p, rp)?;

    let to_point = |u: &[f64; 2]| {
        let s = -p.mu_d * rp.phi.phi(u[0]);
        CanardPoint {
            x: (s - u[1].sin()) / p.gamma2(),
            yhat: u[0],
            theta: u[1],
            branch: branch_of(u[0], rp),
        }
    };
    let (first, second) = match kind {
        CanardKind::Vrai => (side_a, side_r),
        CanardKind::Faux => (side_r, side_a),
    };
    let mut path: Vec<CanardPoint> = first.iter().rev().map(to_point).collect();
    path.extend(second.iter().skip(1).map(to_point));
    Ok(CanardSegment {
        kind: match kind {
            CanardKind::Vrai => SegmentKind::SingularVrai,
            CanardKind::Faux => SegmentKind::SingularFaux,
        },
        path,
        saddle: *saddle,
        closure,
    })
}

/// Leaf of the vrai canard through the folded saddle on `f⁻` at `Γ = 0`:
/// `γ² x = μ_s − 1`.
pub fn vrai_leaf_x(p: &Params) -> f64 {
    (p.mu_s - 1.0) / p.gamma2()
}

/// Which repelling set a point of `C_r±` belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QrSide {
    Minus,
    Plus,
}

/// Membership of the critical-manifold point over `(x, θ)` on `C_r∓` in `Q_r∓`:
/// flowing backwards along the leaf `x = const`, `ξ` must reach the fold
/// value `±μ_s` (necessarily inside `Î±`) before it leaves the repelling
/// branch through `|ξ| = μ_d`.
pub fn in_q_r(x: f64, theta: f64, side: QrSide, p: &Params) -> bool {
    let (x, theta) = match side {
        QrSide::Minus => (x, theta),
        // Mirror through the symmetry S.
        QrSide::Plus => (-x, theta + PI),
    };
    let s0 = xi(x, theta, p);
    if !(s0 > p.mu_d && s0 < p.mu_s) {
        return false;
    }
    let g2x = p.gamma2() * x;
    let back = |th_hit: f64| wrap_angle(theta - th_hit);
    // ξ increasing backwards means cos θ < 0 at the hit.
    let s_fold = p.mu_s - g2x;
    if s_fold.abs() > 1.0 {
        return false;
    }
    let t_fold = back(PI - s_fold.asin());
    let s_exit = p.mu_d - g2x;
    let t_exit = if s_exit.abs() <= 1.0 {
        back(s_exit.asin())
    } else {
        f64::INFINITY
    };
    t_fold < t_exit
}

/// Maximal canard near the folded saddle on `f⁻` for `ε > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximalCanard {
    pub forward: CanardSegment,
    pub backward: CanardSegment,
    /// Matched point on the section `θ = π/2`.
    pub x: f64,
    pub yhat: f64,
    /// `|Δŷ|` between the two pieces at the section.
    pub mismatch: f64,
}

/// Slow-problem integration between phases, returning samples. `stop` may end it early.
fn slow_path(
    x0: f64,
    yh0: f64,
    th0: f64,
    th1: f64,
    p: &Params,
    rp: &RegParams,
    mut stop: impl FnMut(&[f64; 3]) -> bool,
) -> Result<Vec<[f64; 3]>> {
    let pp = *p;
    let rr = *rp;
    let f = move |_t: f64, u: &[f64; 3]| slow_rhs(u[0], u[1], u[2], &pp, &rr);
    let opts = OdeOptions {
        h_min: rp.eps * 1e-7,
        ..OdeOptions::with_tol(1e-10, 1e-12)
    };
    let mut out = vec![[x0, yh0, th0]];
    ode::integrate(f, th0, [x0, yh0, th0], th1, &opts, |st| {
        out.push(st.y1);
        if stop(&st.y1) {
            Control::Stop
        } else {
            Control::Continue
        }
    })?;
    Ok(out)
}

fn root_on(xi_val: f64, p: &Params, rp: &RegParams, want: ManifoldBranch) -> Option<f64> {
    critical_manifold_roots(xi_val, p, &rp.phi)
        .into_iter()
        .find(|r| r.branch == want)
        .map(|r| r.yhat)
}

/// Locates the maximal canard near the folded saddle on `f⁻`.
///
/// Bisection on the starting abscissa on `C_a` separates orbits that fall off
/// `C_r⁻` from those that turn back; the last turning orbit is followed to the
/// section `θ = π/2` and compared with the repelling slow manifold obtained by
/// integrating backward from `C_r⁻`.
pub fn maximal_canard(p: &Params, rp: &RegParams) -> Result<MaximalCanard> {
    let th_sec = FRAC_PI_2;
    let (th_a, th_r) = (th_sec - 0.8, th_sec + 0.8);
    let x_fs = vrai_leaf_x(p);
    let start_a = |x0: f64| {
        root_on(xi(x0, th_a, p), p, rp, ManifoldBranch::Ca)
            .ok_or_else(|| Error::NoIntersection("no attracting root at start".into()))
    };
    // Forward from C_a up to θ_r: does the orbit leave downward past C_r⁻?
    let jumps = |x0: f64| -> Result<bool> {
        let mut fell = false;
        let path = slow_path(x0, start_a(x0)?, th_a, th_r, p, rp, |q| {
            fell = q[1] < -1.2;
            fell
        })?;
        if fell {
            return Ok(true);
        }
        let q = path.last().unwrap();
        Ok(match root_on(xi(q[0], q[2], p), p, rp, ManifoldBranch::CrMinus) {
            Some(yr) => q[1] < yr,
            None => false,
        })
    };
    let (mut lo, mut hi) = (x_fs - 0.2 / p.gamma2(), x_fs + 0.2 / p.gamma2());
    if jumps(lo)? || !jumps(hi)? {
        return Err(Error::NoIntersection("maximal canard not bracketed".into()));
    }
    while hi - lo > 4.0 * f64::EPSILON * hi.abs() {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        if jumps(m)? {
            hi = m;
        } else {
            lo = m;
        }
    }
    let fw = slow_path(lo, start_a(lo)?, th_a, th_sec, p, rp, |_| false)?;
    // The backward problem is the mirror image: C_a repels in reverse time,
    // so the backward maximal canard separates orbits escaping upward.
    let start_r = |x1: f64| {
        root_on(xi(x1, th_r, p), p, rp, ManifoldBranch::CrMinus)
            .ok_or_else(|| Error::NoIntersection("no repelling root at start".into()))
    };
    let escapes = |x1: f64| -> Result<bool> {
        let mut up = false;
        slow_path(x1, start_r(x1)?, th_r, th_a, p, rp, |q| {
            up = q[1] > 1.2;
            up || q[1] < -1.2
        })?;
        Ok(up)
    };
    let (mut lo_r, mut hi_r) = (x_fs - 0.2 / p.gamma2(), x_fs + 0.2 / p.gamma2());
    if escapes(lo_r)? || !escapes(hi_r)? {
        return Err(Error::NoIntersection("backward maximal canard not bracketed".into()));
    }
    while hi_r - lo_r > 4.0 * f64::EPSILON * hi_r.abs() {
        let m = 0.5 * (lo_r + hi_r);
        if m <= lo_r || m >= hi_r {
            break;
        }
        if escapes(m)? {
            hi_r = m;
        } else {
            lo_r = m;
        }
    }
    let bw = slow_path(lo_r, start_r(lo_r)?, th_r, th_sec, p, rp, |_| false)?;
    let a = *fw.last().unwrap();
    let b = *bw.last().unwrap();
    let pt = |q: &[f64; 3]| CanardPoint {
        x: q[0],
        yhat: q[1],
        theta: q[2],
        branch: branch_of(q[1], rp),
    };
    let saddle = super::field::folded_singularities(p, rp, 0.0)?
        .into_iter()
        .find(|c| c.class == CriticalClass::FoldedSaddle && c.yhat < 0.0)
        .expect("base case has a saddle on f-");
    Ok(MaximalCanard {
        forward: CanardSegment {
            kind: SegmentKind::MaximalForward,
            path: fw.iter().map(pt).collect(),
            saddle,
            closure: f64::NAN,
        },
        backward: CanardSegment {
            kind: SegmentKind::MaximalBackward,
            path: bw.iter().rev().map(pt).collect(),
            saddle,
            closure: f64::NAN,
        },
        x: 0.5 * (a[0] + b[0]),
        yhat: 0.5 * (a[1] + b[1]),
        mismatch: (a[1] - b[1]).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularization::field::folded_singularities;

    fn setup() -> (Params, RegParams) {
        let p = Params::reference(2.0);
        let rp = RegParams::new(1e-3, 0.6, &p).unwrap();
        (p, rp)
    }

    fn saddle_minus(p: &Params, rp: &RegParams) -> CriticalPoint {
        folded_singularities(p, rp, 0.0)
            .unwrap()
            .into_iter()
            .find(|c| c.class == CriticalClass::FoldedSaddle && c.yhat < 0.0)
            .unwrap()
    }

    #[test]
    fn vrai_canard_connects_ca_to_cr_minus() {
        let (p, rp) = setup();
        let s = saddle_minus(&p, &rp);
        let c = singular_canard(&s, CanardKind::Vrai, &p, &rp).unwrap();
        let first = c.path.first().unwrap();
        let last = c.path.last().unwrap();
        // Both ends sit on fold lines: the saddle itself and |ŷ| = 1.
        assert_eq!(c.path[1].branch, ManifoldBranch::Ca);
        assert_eq!(c.path[c.path.len() - 2].branch, ManifoldBranch::CrMinus);
        assert!(last.yhat < -s.yhat.abs() && last.yhat >= -1.0 - 1e-6);
        // Original time runs forward in θ along the whole canard.
        assert!(last.theta > first.theta);
        assert!(c.closure < 1e-6, "closure {}", c.closure);
        // The canard lies on the stick leaf through the tangency.
        let x_fs = vrai_leaf_x(&p);
        for q in &c.path {
            assert!((q.x - x_fs).abs() < 1e-7, "{q:?}");
        }
        // Its repelling part ends where φ(ŷ) = −1, sin θ = μ_d − μ_s + 1.
        let th_end = PI - (p.mu_d - p.mu_s + 1.0).asin();
        assert!((last.theta - th_end).abs() < 1e-4);
    }

    #[test]
    fn faux_is_time_reversed_vrai() {
        let (p, rp) = setup();
        let s = saddle_minus(&p, &rp);
        let f = singular_canard(&s, CanardKind::Faux, &p, &rp).unwrap();
        assert_eq!(f.path[1].branch, ManifoldBranch::CrMinus);
        assert_eq!(f.path[f.path.len() - 2].branch, ManifoldBranch::Ca);
        assert!(f.closure < 1e-6, "closure {}", f.closure);
    }

    #[test]
    fn q_r_membership() {
        let p = Params::reference(2.0);
        // Leaf crossing the fold inside Î⁻ when flowed back: x slightly left of the tangent leaf.
        let x = (p.mu_s - 1.0) / p.gamma2() + 0.05 / p.gamma2();
        // On that leaf, θ with μ_d < ξ < μ_s after the backward fold hit.
        let th = 2.0;
        assert!(xi(x, th, &p) > p.mu_d && xi(x, th, &p) < p.mu_s);
        assert!(in_q_r(x, th, QrSide::Minus, &p));
        assert!(in_q_r(-x, th + PI, QrSide::Plus, &p));
        // Just past the forward fold crossing the backward flow exits through μ_d first.
        let x2 = 0.0;
        assert!(!in_q_r(x2, 1.0, QrSide::Minus, &p));
    }

    #[test]
    fn maximal_canard_near_singular_one() {
        let (p, rp) = setup();
        let m = maximal_canard(&p, &rp).unwrap();
        assert!(m.mismatch < 1e-6, "mismatch {}", m.mismatch);
        assert!((m.x - vrai_leaf_x(&p)).abs() < 1e-3, "x {}", m.x);
        assert!((m.yhat + rp.delta).abs() < 0.05, "yhat {}", m.yhat);
    }
}
