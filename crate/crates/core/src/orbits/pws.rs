//! Symmetric slip-stick orbits of the discontinuous system.
//!
//! The lower half of an orbit sticks at `x0` for a phase `θ*`, reaches
//! `∂Σ_c⁻` at `θ0` with `ξ(x0, θ0) = μ_s`, and slips with `Z⁻` for `π − θ*`
//! until it lands at `(−x0, 0, θ0 + π − θ*)`. The upper half is its image
//! under the symmetry `S`.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use super::floquet::{eigen3, matmul3, FloquetData};
use crate::error::{Error, Result};
use crate::model::{symmetry, xi, Params, State};
use crate::par;
use crate::pws::{integrate_stiction, is_regular, BranchPolicy, EventKind, SlipArc, StictionOptions, Trajectory};

/// `S(x, y, θ) = (−x, −y, θ + π)`.
pub fn symmetry_map(z: &State) -> State {
    symmetry(z)
}

/// Post-hoc checks that every piece stays in its region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Admissibility {
    /// `0 < θ* < π`.
    pub stick_duration: bool,
    /// The stick arc stays strictly inside `Σ_s` before `θ0`.
    pub stick_clear: bool,
    /// `ξ` increases through `μ_s` at the onset (no tangency).
    pub onset_transversal: bool,
    /// `y < 0` strictly inside the slip arc.
    pub slip_below: bool,
    /// The landing point is a transversal landing inside `Σ_s`.
    pub landing_sticks: bool,
}

impl Admissibility {
    pub fn all(&self) -> bool {
        self.stick_duration && self.stick_clear && self.onset_transversal && self.slip_below && self.landing_sticks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipStickSolution {
    pub gamma: f64,
    pub theta0: f64,
    pub theta_star: f64,
    pub x0: f64,
    pub residual: f64,
    pub iterations: usize,
    pub admissibility: Admissibility,
}

impl SlipStickSolution {
    pub fn params(&self, p: &Params) -> Params {
        p.with_gamma(self.gamma)
    }

    pub fn admissible(&self) -> bool {
        self.admissibility.all()
    }

    /// Slip onset `z0 ∈ ∂Σ_c⁻`.
    pub fn onset(&self) -> State {
        State::new(self.x0, 0.0, self.theta0)
    }

    /// Start of the stick phase of the lower half.
    pub fn stick_start(&self) -> State {
        State::new(self.x0, 0.0, self.theta0 - self.theta_star)
    }

    pub fn slip_duration(&self) -> f64 {
        PI - self.theta_star
    }
}

pub fn onset_x(theta0: f64, p: &Params) -> f64 {
    (p.mu_s - theta0.sin()) / p.gamma2()
}

pub(crate) fn slip_arc(theta0: f64, p: &Params) -> Result<SlipArc> {
    SlipArc::closed(State::new(onset_x(theta0, p), 0.0, theta0), -1.0, p)
}

/// Residuals `(x(π−θ*) + x0, y(π−θ*))` and their Jacobian in `(θ0, θ*)`.
pub fn slipstick_residual(theta0: f64, theta_star: f64, p: &Params) -> Result<([f64; 2], [[f64; 2]; 2])> {
    let arc = slip_arc(theta0, p)?;
    let tau = PI - theta_star;
    let x0 = onset_x(theta0, p);
    let (x, y) = arc.xy(tau);
    let j = arc.jacobian(tau)?;
    let dx0 = -theta0.cos() / p.gamma2();
    let r = [x + x0, y];
    let jac = [
        [j[0][0] * dx0 + j[0][2] + dx0, -y],
        [j[1][0] * dx0 + j[1][2], -arc.accel(tau)],
    ];
    Ok((r, jac))
}

/// `sin` range over `[a, b]`.
fn sin_range(a: f64, b: f64) -> (f64, f64) {
    let (sa, sb) = (a.sin(), b.sin());
    let mut lo = sa.min(sb);
    let mut hi = sa.max(sb);
    let k_hi = ((a - FRAC_PI_2) / TAU).ceil();
    if FRAC_PI_2 + TAU * k_hi < b {
        hi = 1.0;
    }
    let k_lo = ((a - 3.0 * FRAC_PI_2) / TAU).ceil();
    if 3.0 * FRAC_PI_2 + TAU * k_lo < b {
        lo = -1.0;
    }
    (lo, hi)
}

const ADMISSIBLE_TOL: f64 = 1e-9;

/// Evaluates the admissibility flags of a candidate `(θ0, θ*)`.
pub fn admissibility(theta0: f64, theta_star: f64, p: &Params) -> Result<Admissibility> {
    let x0 = onset_x(theta0, p);
    let g2x = p.gamma2() * x0;
    let stick_duration = theta_star > 0.0 && theta_star < PI;
    // Stick phase on [θ0 − θ*, θ0): the maximum of ξ is reached only at θ0.
    let a = theta0 - theta_star;
    let (lo, hi) = sin_range(a, theta0 - ADMISSIBLE_TOL.sqrt());
    let stick_clear = stick_duration && g2x + hi < p.mu_s && g2x + lo > -p.mu_s && {
        // No interior visit of the fold line before θ0.
        let k = ((a - FRAC_PI_2) / TAU).ceil();
        FRAC_PI_2 + TAU * k >= theta0 - ADMISSIBLE_TOL
    };
    let onset_transversal = theta0.cos() > ADMISSIBLE_TOL;
    let arc = slip_arc(theta0, p)?;
    let tau = PI - theta_star;
    const N: usize = 400;
    let slip_below = stick_duration && (1..N).all(|k| arc.xy(tau * k as f64 / N as f64).1 < 0.0);
    let land_xi = xi(-x0, theta0 + tau, p);
    let landing_sticks = arc.accel(tau) > ADMISSIBLE_TOL && land_xi.abs() < p.mu_s - ADMISSIBLE_TOL;
    Ok(Admissibility {
        stick_duration,
        stick_clear,
        onset_transversal,
        slip_below,
        landing_sticks,
    })
}

/// Tolerance on the residual norm of a converged solution.
pub const SLIPSTICK_TOL: f64 = 1e-12;

/// Newton solve of the slip-stick conditions at fixed γ.
pub fn solve_slipstick(gamma: f64, guess: (f64, f64), p: &Params) -> Result<SlipStickSolution> {
    let p = p.with_gamma(gamma);
    p.validate()?;
    if p.mu_s <= 1.0 {
        return Err(Error::NoStick(p.mu_s));
    }
    let (mut th0, mut ths) = guess;
    for it in 0..60 {
        let (r, j) = slipstick_residual(th0, ths, &p)?;
        let norm = r[0].hypot(r[1]);
        if !norm.is_finite() {
            break;
        }
        if norm <= SLIPSTICK_TOL {
            return Ok(SlipStickSolution {
                gamma,
                theta0: th0,
                theta_star: ths,
                x0: onset_x(th0, &p),
                residual: norm,
                iterations: it,
                admissibility: admissibility(th0, ths, &p)?,
            });
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            return Err(Error::SingularSystem("slip-stick Jacobian".into()));
        }
        let d0 = (r[0] * j[1][1] - r[1] * j[0][1]) / det;
        let d1 = (j[0][0] * r[1] - j[1][0] * r[0]) / det;
        // Damped step, at most 0.3 rad in each unknown.
        let s = (0.3 / d0.abs().max(d1.abs())).min(1.0);
        th0 -= s * d0;
        ths -= s * d1;
    }
    Err(Error::NewtonDivergence(format!("slip-stick at gamma={gamma}")))
}

/// All distinct admissible solutions at γ reachable from a grid of guesses.
pub fn find_slipstick(gamma: f64, p: &Params, grid: usize) -> Vec<SlipStickSolution> {
    let guesses: Vec<(f64, f64)> = (0..grid)
        .flat_map(|i| {
            (0..grid).map(move |j| {
                let th0 = -FRAC_PI_2 + PI * (i as f64 + 0.5) / grid as f64;
                let ths = PI * (j as f64 + 0.5) / grid as f64;
                (th0, ths)
            })
        })
        .collect();
    let found = par::par_map(guesses, |g| solve_slipstick(gamma, g, p).ok());
    let mut out: Vec<SlipStickSolution> = Vec::new();
    for s in found.into_iter().flatten() {
        if !s.admissible() {
            continue;
        }
        let th0 = crate::model::angle_diff(s.theta0, 0.0);
        let s = SlipStickSolution { theta0: th0, ..s };
        if !out.iter().any(|o| (o.theta0 - s.theta0).abs() < 1e-7 && (o.theta_star - s.theta_star).abs() < 1e-7) {
            out.push(s);
        }
    }
    out.sort_by(|a, b| a.theta0.total_cmp(&b.theta0));
    out
}

/// One period of the orbit as a stiction solution, started in the middle of
/// the lower stick phase.
pub fn assemble_full_orbit(sol: &SlipStickSolution, p: &Params) -> Result<Trajectory> {
    if !sol.admissible() {
        return Err(Error::Inadmissible(format!("{:?}", sol.admissibility)));
    }
    let p = sol.params(p);
    let z0 = State::new(sol.x0, 0.0, sol.theta0 - 0.5 * sol.theta_star);
    let opts = StictionOptions {
        sample_dt: 0.01,
        ..StictionOptions::default()
    };
    let run = integrate_stiction(&z0, TAU, BranchPolicy::StickFirst, &p, &opts)?;
    let traj = run.branches.into_iter().next().expect("one branch");
    let end = traj.final_state();
    let err = end.distance(&z0);
    if !(err <= 1e-9) {
        return Err(Error::ClosureFailure(err));
    }
    Ok(traj)
}

/// Maximum `|y|` over the orbit (both halves are symmetric).
pub fn max_abs_y(sol: &SlipStickSolution, p: &Params) -> Result<f64> {
    let p = sol.params(p);
    let arc = slip_arc(sol.theta0, &p)?;
    let tau = sol.slip_duration();
    const N: usize = 2000;
    let (mut best, mut kb) = (0.0f64, 0usize);
    for k in 0..=N {
        let v = arc.xy(tau * k as f64 / N as f64).1.abs();
        if v > best {
            best = v;
            kb = k;
        }
    }
    // Golden-section refinement around the best sample.
    let h = tau / N as f64;
    let (mut a, mut b) = ((kb as f64 - 1.0).max(0.0) * h, ((kb + 1) as f64 * h).min(tau));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let f = |t: f64| arc.xy(t).1.abs();
    while b - a > 1e-13 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(best.max(f(0.5 * (a + b))))
}

/// Monodromy of one half period composed with `S`, from the start of the
/// lower stick phase.
///
/// Factors, right to left:
/// - sticking: `(x, θ)` is carried along and any `y` variation is removed,
///   since every nearby point of `Σ_s` sticks and forgets its past; this is
///   the structural zero multiplier;
/// - onset at `h = ξ − μ_s = 0`: saltation `I + (f_slip − f_stick) ∇hᵀ / (∇h·f_stick)`
///   with `f_stick = (0, 0, 1)` and `f_slip = (0, μ_d − μ_s, 1)`;
/// - the slip arc: closed-form fundamental matrix;
/// - landing at `h = y = 0`: saltation `I + (f_stick − f_slip) e_yᵀ / y'`,
///   which zeroes the `y` row;
/// - `DS = diag(−1, −1, 1)`.
pub fn half_monodromy(sol: &SlipStickSolution, p: &Params) -> Result<[[f64; 3]; 3]> {
    let p = sol.params(p);
    let c0 = sol.theta0.cos();
    if c0.abs() < 1e-9 {
        return Err(Error::DegenerateTransition { theta: sol.theta0 });
    }
    let arc = slip_arc(sol.theta0, &p)?;
    let tau = sol.slip_duration();
    let a_land = arc.accel(tau);
    if a_land.abs() < 1e-9 {
        return Err(Error::DegenerateTransition { theta: sol.theta0 + tau });
    }
    let stick = [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
    let jump = (p.mu_d - p.mu_s) / c0;
    let onset = [[1.0, 0.0, 0.0], [jump * p.gamma2(), 1.0, jump * c0], [0.0, 0.0, 1.0]];
    let slip = arc.jacobian(tau)?;
    let landing = [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
    let ds = [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]];
    let m = matmul3(&onset, &stick);
    let m = matmul3(&slip, &m);
    let m = matmul3(&landing, &m);
    Ok(matmul3(&ds, &m))
}

/// Floquet multipliers `{1, 0, λ}` of a slip-stick orbit.
pub fn floquet_discontinuous(sol: &SlipStickSolution, p: &Params) -> Result<FloquetData> {
    let h = half_monodromy(sol, p)?;
    let full = matmul3(&h, &h);
    Ok(FloquetData::from_multipliers(eigen3(&full)))
}

/// Runs the assembled orbit through the event detector and checks its topology.
pub fn orbit_event_counts(traj: &Trajectory) -> (usize, usize, bool) {
    (
        traj.count(EventKind::StickToSlipOnset),
        traj.count(EventKind::SlipToStickLanding),
        is_regular(traj),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn right_seed() -> SlipStickSolution {
        let p = Params::reference(2.0);
        let s = find_slipstick(2.0, &p, 12);
        assert!(!s.is_empty(), "no orbit at gamma=2");
        s[0]
    }

    #[test]
    fn symmetry_examples() {
        let z = symmetry_map(&State::new(0.0, 0.0, 0.0));
        assert_eq!((z.x, z.y), (0.0, 0.0));
        assert!((z.theta - PI).abs() < 1e-15);
    }

    #[test]
    fn residual_jacobian_matches_differences() {
        let p = Params::reference(2.0);
        let (th0, ths) = (0.4, 1.2);
        let (_, j) = slipstick_residual(th0, ths, &p).unwrap();
        let h = 1e-6;
        for (k, (d0, d1)) in [(h, 0.0), (0.0, h)].into_iter().enumerate() {
            let (rp, _) = slipstick_residual(th0 + d0, ths + d1, &p).unwrap();
            let (rm, _) = slipstick_residual(th0 - d0, ths - d1, &p).unwrap();
            for i in 0..2 {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                assert!((fd - j[i][k]).abs() < 1e-7, "J[{i}][{k}] {fd} vs {}", j[i][k]);
            }
        }
    }

    #[test]
    fn converged_orbit_closes() {
        let s = right_seed();
        let p = Params::reference(2.0);
        assert!(s.residual <= 1e-10);
        let traj = assemble_full_orbit(&s, &p).unwrap();
        let (on, land, regular) = orbit_event_counts(&traj);
        assert_eq!((on, land), (2, 2));
        assert!(regular);
    }

    #[test]
    fn upper_half_is_symmetric_image() {
        let s = right_seed();
        let p = Params::reference(2.0);
        let traj = assemble_full_orbit(&s, &p).unwrap();
        for k in 0..50 {
            let t = PI * k as f64 / 50.0;
            let a = traj.state_at(t).unwrap();
            let b = traj.state_at(t + PI).unwrap();
            assert!(symmetry_map(&a).distance(&b) < 1e-9, "t={t}");
        }
    }

    #[test]
    fn floquet_structure_and_finite_differences() {
        let s = right_seed();
        let p = Params::reference(2.0).with_gamma(s.gamma);
        let f = floquet_discontinuous(&s, &p).unwrap();
        assert!((f.multipliers[0].re - 1.0).abs() < 1e-8 && f.multipliers[0].im.abs() < 1e-8);
        assert!(f.multipliers[1].abs() < 1e-8);
        // Oracle: difference quotients of the half-period map S⁻¹∘φ_π on Σ_s.
        let z0 = s.stick_start();
        let z0 = State::new(z0.x, 0.0, z0.theta + 0.5 * s.theta_star);
        let half = |z: State| {
            let run = integrate_stiction(&z, PI, BranchPolicy::StickFirst, &p, &StictionOptions::default()).unwrap();
            let e = run.primary().final_state();
            // S⁻¹ = S up to the phase shift.
            let w = symmetry_map(&e);
            [w.x, w.theta]
        };
        let h = 1e-6;
        let mut m = [[0.0; 2]; 2];
        for (k, (dx, dth)) in [(h, 0.0), (0.0, h)].into_iter().enumerate() {
            let a = half(State::new(z0.x + dx, 0.0, z0.theta + dth));
            let b = half(State::new(z0.x - dx, 0.0, z0.theta - dth));
            m[0][k] = (a[0] - b[0]) / (2.0 * h);
            m[1][k] = crate::model::angle_diff(a[1], b[1]) / (2.0 * h);
        }
        // Nontrivial eigenvalue of the reduced 2×2 half map, squared.
        let tr = m[0][0] + m[1][1];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let disc = (tr * tr - 4.0 * det).sqrt();
        let ev = [0.5 * (tr + disc), 0.5 * (tr - disc)];
        let nu = if (ev[0] - 1.0).abs() < (ev[1] - 1.0).abs() { ev[1] } else { ev[0] };
        assert!((nu * nu - f.leading().re).abs() < 1e-5, "{} vs {}", nu * nu, f.leading().re);
    }

    #[test]
    fn inadmissible_is_flagged() {
        let p = Params::reference(2.0);
        // Onset beyond the visible tangency.
        let a = admissibility(2.0, 1.0, &p).unwrap();
        assert!(!a.onset_transversal && !a.all());
    }

    #[test]
    fn no_stick_phase_below_one() {
        let p = Params::new(2.0, 0.9, 0.4).unwrap();
        assert!(matches!(solve_slipstick(2.0, (0.3, 1.0), &p), Err(Error::NoStick(_))));
    }

    #[test]
    fn sin_range_windows() {
        assert_eq!(sin_range(0.0, PI).1, 1.0);
        let (lo, hi) = sin_range(0.1, 0.2);
        assert!((lo - 0.1f64.sin()).abs() < 1e-15 && (hi - 0.2f64.sin()).abs() < 1e-15);
        assert_eq!(sin_range(4.0, 5.0).0, -1.0);
    }
}
