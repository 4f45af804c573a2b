//! Event detection for stick and slip arcs.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use super::slip::SlipArc;
use crate::error::{Error, Result};
use crate::model::{
    tangency, wrap_angle, xi, Branch, Params, SingularSet, State, TangencyKind, TangencyLabel,
    CLASSIFY_TOL,
};

/// Residual target when polishing `y = 0` on slip arcs.
pub const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    SlipToStickLanding,
    StickToSlipOnset,
    CrossingUp,
    CrossingDown,
    SingularHit(SingularSet),
    TangencyGraze,
    UndefinedFrictionHit,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::SlipToStickLanding => "SlipToStickLanding",
            EventKind::StickToSlipOnset => "StickToSlipOnset",
            EventKind::CrossingUp => "CrossingUp",
            EventKind::CrossingDown => "CrossingDown",
            EventKind::SingularHit(SingularSet::IPlus) => "SingularHit(IPlus)",
            EventKind::SingularHit(SingularSet::IMinus) => "SingularHit(IMinus)",
            EventKind::TangencyGraze => "TangencyGraze",
            EventKind::UndefinedFrictionHit => "UndefinedFrictionHit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub state: State,
    pub kind: EventKind,
    /// For grazes: the tangency label that decided the continuation.
    pub tangency: Option<TangencyLabel>,
}

/// Stick arc event: closed-form first time at which `|ξ(x0, θ0 + t)| = μ_s`.
///
/// Onsets happen where `ξ` reaches `μ_s` while increasing (`cos θ > 0`) or
/// `−μ_s` while decreasing. When the level is reached only tangentially
/// (`sin θ = ±1`), the stick arc touches `I∓` and the hit is singular.
pub fn next_stick_event(z0: &State, p: &Params, horizon: f64) -> Result<Event> {
    let g2x = p.gamma2() * z0.x;
    let mut best: Option<(f64, f64, EventKind)> = None;
    let mut consider = |theta_hit: f64, kind: EventKind| {
        let mut t = wrap_angle(theta_hit - z0.theta);
        // The arc's own starting point is never its next event.
        if t < 1e-12 || t > TAU - 1e-12 {
            t = if t < 1e-12 { t + TAU } else { t };
        }
        if best.is_none_or(|b| t < b.0) {
            best = Some((t, theta_hit, kind));
        }
    };
    let s_minus = p.mu_s - g2x;
    if (s_minus - 1.0).abs() <= CLASSIFY_TOL {
        consider(FRAC_PI_2, EventKind::SingularHit(SingularSet::IMinus));
    } else if s_minus.abs() < 1.0 {
        consider(s_minus.asin(), EventKind::StickToSlipOnset);
    }
    let s_plus = -p.mu_s - g2x;
    if (s_plus + 1.0).abs() <= CLASSIFY_TOL {
        consider(3.0 * FRAC_PI_2, EventKind::SingularHit(SingularSet::IPlus));
    } else if s_plus.abs() < 1.0 {
        consider(PI - s_plus.asin(), EventKind::StickToSlipOnset);
    }
    match best {
        Some((t, th, kind)) if t <= horizon => Ok(Event {
            time: t,
            state: State::new(z0.x, 0.0, th),
            kind,
            tangency: None,
        }),
        _ => Err(Error::NoEventWithinHorizon { horizon }),
    }
}

/// How a slip arc reached `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landing {
    pub t: f64,
    pub state: State,
    /// True when `y` touched zero at an extremum rather than crossing it.
    pub touch: bool,
}

/// Finds the first `t > 0` with `y(t) = 0` on a slip arc, up to `horizon`.
///
/// The arc is scanned on a grid fine relative to both the forcing period and
/// the natural period `2π/γ`; within each cell `y` has at most one extremum,
/// which is located from `y' = 0` so that tangential touches (double roots)
/// are not stepped over.
pub fn find_landing(arc: &SlipArc, horizon: f64) -> Result<Option<Landing>> {
    let sigma = arc.sigma;
    let g = |t: f64| sigma * arc.xy(t).1;
    let dg = |t: f64| sigma * arc.accel(t);
    let h = 0.1 * (1.0f64).min(1.0 / arc.p.gamma);
    let horizon = horizon.min(arc.horizon());
    let mut a = 0.0;
    let mut ga = g(0.0).max(0.0);
    let mut dga = dg(0.0);
    // Launched from y = 0 with g' = 0 (e.g. after a visible graze): the
    // curvature decides, so the first cell's extremum search must skip t = 0.
    if ga == 0.0 && dga.abs() <= 1e-9 {
        dga = sigma * arc.jerk(0.0);
    }
    while a < horizon {
        let b = (a + h).min(horizon);
        let gb = g(b);
        let dgb = dg(b);
        let mut pieces = [(a, ga), (b, gb), (b, gb)];
        let mut n = 2;
        if dga.signum() != dgb.signum() && dga != 0.0 && dgb != 0.0 {
            let m = bisect(&dg, a, b, dga)?;
            pieces = [(a, ga), (m, g(m)), (b, gb)];
            n = 3;
        }
        for w in pieces[..n].windows(2) {
            let ((u, gu), (v, gv)) = (w[0], w[1]);
            if gv <= 0.0 && (gu > 0.0 || (u == 0.0 && v > 0.0)) {
                if gu <= 0.0 {
                    // Leaving y = 0 into the wrong half-plane: immediate landing.
                    return Ok(Some(Landing {
                        t: 0.0,
                        state: arc.state(0.0),
                        touch: false,
                    }));
                }
                let t = polish(arc, u, v)?;
                return Ok(Some(finish(arc, t, false)));
            }
        }
        if n == 3 {
            let (m, gm) = pieces[1];
            // A local minimum of σy within ROOT_TOL of zero is a touch.
            if dga < 0.0 && gm.abs() <= ROOT_TOL && m > 0.0 {
                return Ok(Some(finish(arc, m, true)));
            }
        }
        a = b;
        ga = gb;
        dga = dgb;
    }
    Ok(None)
}

fn finish(arc: &SlipArc, t: f64, touch: bool) -> Landing {
    let z = arc.state(t);
    Landing {
        t,
        state: State::new(z.x, 0.0, z.theta),
        touch,
    }
}

/// Bisection on a sign change of `f` in `[a, b]` given `f(a)`'s value.
fn bisect<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, fa: f64) -> Result<f64> {
    let sa = fa.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            return Ok(m);
        }
        if f(m).signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Safeguarded Newton on `y(t) = 0` inside a bracket `[a, b]`.
fn polish(arc: &SlipArc, mut a: f64, mut b: f64) -> Result<f64> {
    let y = |t: f64| arc.xy(t).1;
    let ya = y(a);
    let sa = ya.signum();
    let mut t = 0.5 * (a + b);
    for _ in 0..100 {
        let yt = y(t);
        if yt.abs() <= ROOT_TOL * 1e-2 {
            return Ok(t);
        }
        if yt.signum() == sa {
            a = t;
        } else {
            b = t;
        }
        let dy = arc.accel(t);
        let newton = t - yt / dy;
        t = if dy != 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if b - a <= 4.0 * f64::EPSILON * b.abs().max(1.0) {
            break;
        }
    }
    if y(t).abs() <= ROOT_TOL {
        Ok(t)
    } else {
        Err(Error::RootPolish(format!(
            "|y| = {:.3e} at t = {t} after bracketing",
            y(t).abs()
        )))
    }
}

/// Classification of a slip landing on `Σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LandingClass {
    /// Passes to the other half-plane.
    Crossing,
    /// Comes to rest on `Σ_s`.
    Stick,
    /// Touches `Σ` tangentially and keeps slipping.
    GrazeContinue(TangencyLabel),
    /// Touches `Σ` tangentially and sticks.
    GrazeStick(TangencyLabel),
    /// Lands on `|ξ| = μ_s` where the friction law is undefined.
    Undefined,
}

/// Classifies a landing from `G^σ` at `z` (with `y = 0`).
pub fn classify_landing(z: &State, sigma: f64, p: &Params, touch: bool) -> LandingClass {
    // Work in the frame of a landing from G⁻; the G⁺ case is its mirror.
    let s = -sigma * xi(z.x, z.theta, p);
    if (s + p.mu_s).abs() <= CLASSIFY_TOL {
        return LandingClass::Undefined;
    }
    if s < -p.mu_s {
        return LandingClass::Crossing;
    }
    if touch || (s - p.mu_d).abs() <= CLASSIFY_TOL {
        let kind = if sigma < 0.0 {
            TangencyKind::ZMinusOnSigma
        } else {
            TangencyKind::ZPlusOnSigma
        };
        // The landing point is y = 0, ξ = ±μ_d up to polishing error; pin it
        // onto the set so the label is decided by θ alone.
        let pinned = State::new(
            (-sigma * p.mu_d - z.theta.sin()) / p.gamma2(),
            0.0,
            z.theta,
        );
        let label = tangency(&pinned, p, kind).unwrap_or(TangencyLabel::None);
        return match label {
            TangencyLabel::Visible => LandingClass::GrazeContinue(label),
            _ => LandingClass::GrazeStick(label),
        };
    }
    LandingClass::Stick
}

/// Next event on an arc of the given branch started at `z0`.
pub fn next_event(z0: &State, branch: Branch, p: &Params, horizon: f64) -> Result<Event> {
    match branch {
        Branch::Stick => next_stick_event(z0, p, horizon),
        Branch::Plus | Branch::Minus => {
            let sigma = branch.sigma();
            let arc = SlipArc::new(*z0, sigma, p, horizon)?;
            let landing = find_landing(&arc, horizon)?.ok_or(Error::NoEventWithinHorizon { horizon })?;
            let class = classify_landing(&landing.state, sigma, p, landing.touch);
            let (kind, tangency) = match class {
                LandingClass::Crossing if sigma < 0.0 => (EventKind::CrossingUp, None),
                LandingClass::Crossing => (EventKind::CrossingDown, None),
                LandingClass::Stick => (EventKind::SlipToStickLanding, None),
                LandingClass::GrazeContinue(l) | LandingClass::GrazeStick(l) => {
                    (EventKind::TangencyGraze, Some(l))
                }
                LandingClass::Undefined => (EventKind::UndefinedFrictionHit, None),
            };
            Ok(Event {
                time: landing.t,
                state: landing.state,
                kind,
                tangency,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Params {
        Params::reference(1.5)
    }

    #[test]
    fn stick_arc_inside_circle_never_escapes() {
        let p = p();
        let z0 = State::new(0.0, 0.0, 0.0);
        assert!(matches!(
            next_stick_event(&z0, &p, 100.0 * TAU),
            Err(Error::NoEventWithinHorizon { .. })
        ));
    }

    #[test]
    fn stick_arc_escape_time_is_asin() {
        let p = p();
        let z0 = State::new(0.2 / p.gamma2(), 0.0, 0.0);
        let ev = next_stick_event(&z0, &p, 10.0).unwrap();
        assert_eq!(ev.kind, EventKind::StickToSlipOnset);
        assert!((ev.time - 0.9f64.asin()).abs() < 1e-15);
        // Bisection oracle on ξ − μ_s.
        let f = |t: f64| xi(z0.x, t, &p) - p.mu_s;
        let (mut a, mut b) = (0.0, FRAC_PI_2);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if f(m) < 0.0 {
                a = m
            } else {
                b = m
            }
        }
        assert!((ev.time - a).abs() < 1e-10);
    }

    #[test]
    fn tangent_leaf_hits_i_minus() {
        let p = p();
        let z0 = State::new((p.mu_s - 1.0) / p.gamma2(), 0.0, 0.0);
        let ev = next_stick_event(&z0, &p, 10.0).unwrap();
        assert_eq!(ev.kind, EventKind::SingularHit(SingularSet::IMinus));
        assert!((ev.time - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn negative_side_onset_uses_decreasing_branch() {
        let p = p();
        let z0 = State::new(-0.2 / p.gamma2(), 0.0, 0.0);
        let ev = next_stick_event(&z0, &p, 10.0).unwrap();
        let th = ev.state.theta;
        assert!((xi(z0.x, th, &p) + p.mu_s).abs() < 1e-14);
        assert!(th.cos() < 0.0);
    }

    #[test]
    fn slip_departure_from_tangency_point_leaves_downwards() {
        // On ∂Σ_c⁻ at θ = π/2 the stick field is tangent (visible); the Z⁻
        // departure has y' = μ_d − μ_s < 0 and y'' = 0, so the arc is a
        // genuine slip and lands strictly later.
        let p = Params::reference(2.0);
        let z0 = State::new((p.mu_s - 1.0) / p.gamma2(), 0.0, FRAC_PI_2);
        let arc = SlipArc::new(z0, -1.0, &p, 50.0).unwrap();
        assert!((arc.accel(0.0) - (p.mu_d - p.mu_s)).abs() < 1e-14);
        assert!(arc.jerk(0.0).abs() < 1e-14);
        let ev = next_event(&z0, Branch::Minus, &p, 50.0).unwrap();
        assert!(ev.time > 0.5);
        assert!(ev.state.y == 0.0);
    }

    #[test]
    fn slip_landing_is_polished() {
        let p = Params::reference(2.0);
        let arc = SlipArc::new(State::new(0.0, -0.5, 0.0), -1.0, &p, 50.0).unwrap();
        let l = find_landing(&arc, 50.0).unwrap().unwrap();
        assert!(arc.xy(l.t).1.abs() <= ROOT_TOL);
        // No earlier sign change on a fine grid.
        for k in 1..1000 {
            let t = l.t * k as f64 / 1000.0;
            assert!(arc.xy(t).1 < 0.0);
        }
    }

    #[test]
    fn landing_classes() {
        let p = Params::reference(2.0);
        let at = |s: f64, th: f64| State::new((s - f64::sin(th)) / p.gamma2(), 0.0, th);
        assert_eq!(classify_landing(&at(-1.5, 1.0), -1.0, &p, false), LandingClass::Crossing);
        assert_eq!(classify_landing(&at(0.0, 1.0), -1.0, &p, false), LandingClass::Stick);
        assert_eq!(classify_landing(&at(-1.1, 1.0), -1.0, &p, false), LandingClass::Undefined);
        assert_eq!(
            classify_landing(&at(0.4, 0.3), -1.0, &p, true),
            LandingClass::GrazeContinue(TangencyLabel::Visible)
        );
        assert_eq!(
            classify_landing(&at(0.4, 2.0), -1.0, &p, true),
            LandingClass::GrazeStick(TangencyLabel::Invisible)
        );
        assert_eq!(classify_landing(&at(1.5, 1.0), 1.0, &p, false), LandingClass::Crossing);
    }
}
