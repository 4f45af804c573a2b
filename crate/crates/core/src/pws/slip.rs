//! Slip arcs: exact solutions of `Z±`, which are linear in `(x, y)`.

use crate::error::{Error, Result};
use crate::model::{Params, State};
use crate::ode::{self, Control, OdeOptions, Step};

/// Half-width of the band around `γ = 1` where the closed form (which divides
/// by `γ² − 1`) is replaced by numerical integration.
pub const RESONANCE_GUARD: f64 = 1e-3;

#[derive(Debug, Clone)]
enum Repr {
    /// `x(t) = c1 cos γt + c2 sin γt − sin(θ0 + t)/(γ² − 1) − σμ_d/γ²`.
    Closed { c1: f64, c2: f64, k: f64, q: f64 },
    /// Dense DOPRI5 output of `(x, y)` on `[0, horizon]`. Near resonance the
    /// particular solution is secular, `x_p ≈ (t/2) cos(θ0 + t)` at `γ = 1`,
    /// so no cancellation-free closed form exists inside the guard band.
    Numeric { steps: Vec<Step<2>>, horizon: f64 },
}

/// A slip arc on `Z^σ` started at `z0`.
#[derive(Debug, Clone)]
pub struct SlipArc {
    pub z0: State,
    /// `+1` on `Z⁺`, `−1` on `Z⁻`.
    pub sigma: f64,
    pub p: Params,
    repr: Repr,
}

impl SlipArc {
    /// Closed-form arc. Fails with [`Error::ResonanceGuard`] inside the guard band.
    pub fn closed(z0: State, sigma: f64, p: &Params) -> Result<Self> {
        if (p.gamma - 1.0).abs() < RESONANCE_GUARD {
            return Err(Error::ResonanceGuard { gamma: p.gamma });
        }
        let g = p.gamma;
        let k = g * g - 1.0;
        let q = sigma * p.mu_d / (g * g);
        let (s0, c0) = z0.theta.sin_cos();
        Ok(Self {
            z0,
            sigma,
            p: *p,
            repr: Repr::Closed {
                c1: z0.x + s0 / k + q,
                c2: (z0.y + c0 / k) / g,
                k,
                q,
            },
        })
    }

    /// Arc valid on `[0, horizon]`: closed form when allowed, numerical otherwise.
    pub fn new(z0: State, sigma: f64, p: &Params, horizon: f64) -> Result<Self> {
        match Self::closed(z0, sigma, p) {
            Err(Error::ResonanceGuard { .. }) => Self::numeric(z0, sigma, p, horizon),
            other => other,
        }
    }

    /// Numerically integrated arc on `[0, horizon]`.
    pub fn numeric(z0: State, sigma: f64, p: &Params, horizon: f64) -> Result<Self> {
        let pp = *p;
        let th0 = z0.theta;
        let rhs = move |t: f64, u: &[f64; 2]| {
            [u[1], -pp.gamma2() * u[0] - (th0 + t).sin() - sigma * pp.mu_d]
        };
        let mut steps = Vec::new();
        let horizon = horizon.max(1e-9);
        ode::integrate(rhs, 0.0, [z0.x, z0.y], horizon, &OdeOptions::tight(), |st| {
            steps.push(st.clone());
            Control::Continue
        })?;
        Ok(Self {
            z0,
            sigma,
            p: *p,
            repr: Repr::Numeric { steps, horizon },
        })
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self.repr, Repr::Closed { .. })
    }

    /// Largest time at which the arc can be evaluated.
    pub fn horizon(&self) -> f64 {
        match &self.repr {
            Repr::Closed { .. } => f64::INFINITY,
            Repr::Numeric { horizon, .. } => *horizon,
        }
    }

    /// `(x(t), y(t))` with the unwrapped phase `θ0 + t` implied.
    pub fn xy(&self, t: f64) -> (f64, f64) {
        match &self.repr {
            Repr::Closed { c1, c2, k, q } => {
                let g = self.p.gamma;
                let (sg, cg) = (g * t).sin_cos();
                let (sp, cp) = (self.z0.theta + t).sin_cos();
                let x = c1 * cg + c2 * sg - sp / k - q;
                let y = g * (-c1 * sg + c2 * cg) - cp / k;
                (x, y)
            }
            Repr::Numeric { steps, .. } => {
                let i = steps.partition_point(|s| s.t1 < t).min(steps.len() - 1);
                let u = if t == steps[i].t1 { steps[i].y1 } else { steps[i].eval(t) };
                (u[0], u[1])
            }
        }
    }

    pub fn state(&self, t: f64) -> State {
        let (x, y) = self.xy(t);
        State::new(x, y, self.z0.theta + t)
    }

    /// `y'(t) = −ξ − σμ_d`.
    pub fn accel(&self, t: f64) -> f64 {
        let (x, _) = self.xy(t);
        -self.p.gamma2() * x - (self.z0.theta + t).sin() - self.sigma * self.p.mu_d
    }

    /// `y''(t) = −γ² y − cos θ`.
    pub fn jerk(&self, t: f64) -> f64 {
        let (_, y) = self.xy(t);
        -self.p.gamma2() * y - (self.z0.theta + t).cos()
    }

    /// Fundamental matrix `∂(x, y, θ)(t) / ∂(x0, y0, θ0)` of the closed form.
    pub fn jacobian(&self, t: f64) -> Result<[[f64; 3]; 3]> {
        let Repr::Closed { k, .. } = &self.repr else {
            return Err(Error::ResonanceGuard { gamma: self.p.gamma });
        };
        let g = self.p.gamma;
        let (sg, cg) = (g * t).sin_cos();
        let (s0, c0) = self.z0.theta.sin_cos();
        let (sp, cp) = (self.z0.theta + t).sin_cos();
        let dc1 = c0 / k;
        let dc2 = -s0 / (k * g);
        Ok([
            [cg, sg / g, dc1 * cg + dc2 * sg - cp / k],
            [-g * sg, cg, g * (-dc1 * sg + dc2 * cg) + sp / k],
            [0.0, 0.0, 1.0],
        ])
    }
}

/// Exact state of `Z^σ` at time `t` from `z0`.
pub fn slip_flow_closed_form(z0: &State, sigma: f64, p: &Params, t: f64) -> Result<State> {
    if t < 0.0 {
        return Err(Error::BackwardTime(t));
    }
    Ok(SlipArc::closed(*z0, sigma, p)?.state(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{vector_field, Branch};

    #[test]
    fn initial_condition_is_reproduced() {
        let p = Params::reference(2.0);
        let z0 = State::new(0.2, -0.3, 1.0);
        let z = slip_flow_closed_form(&z0, -1.0, &p, 0.0).unwrap();
        assert!((z.x - z0.x).abs() < 1e-15 && (z.y - z0.y).abs() < 1e-15);
        assert_eq!(z.theta, z0.theta);
    }

    #[test]
    fn constant_forcing_equilibrium() {
        // With the harmonic term removed through c1, c2, the remainder is the
        // particular solution x = −σμ_d/γ² − sin θ/(γ² − 1).
        let p = Params::reference(3.0);
        for &sigma in &[-1.0, 1.0] {
            let th0 = 0.4;
            let k = p.gamma2() - 1.0;
            let xp = |t: f64| -(th0 + t).sin() / k - sigma * p.mu_d / p.gamma2();
            let yp = |t: f64| -(th0 + t).cos() / k;
            let arc = SlipArc::closed(State::new(xp(0.0), yp(0.0), th0), sigma, &p).unwrap();
            for &t in &[0.3, 1.7, 5.0] {
                let (x, y) = arc.xy(t);
                assert!((x - xp(t)).abs() < 1e-14 && (y - yp(t)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn guard_band_rejected_by_closed_form() {
        let p = Params::reference(1.0005);
        let z0 = State::new(0.0, 0.0, 0.0);
        assert!(matches!(
            slip_flow_closed_form(&z0, -1.0, &p, 1.0),
            Err(Error::ResonanceGuard { .. })
        ));
        let arc = SlipArc::new(z0, -1.0, &p, 10.0).unwrap();
        assert!(!arc.is_closed_form());
    }

    #[test]
    fn numeric_fallback_matches_resonant_solution() {
        // At γ = 1: x'' + x = −sin(t) + μ_d from rest at the origin has
        // x = μ_d(1 − cos t) + (t cos t − sin t)/2.
        let p = Params::reference(1.0);
        let arc = SlipArc::new(State::new(0.0, 0.0, 0.0), -1.0, &p, 8.0).unwrap();
        for &t in &[0.5f64, 3.0, 7.9] {
            let exact = p.mu_d * (1.0 - t.cos()) + 0.5 * (t * t.cos() - t.sin());
            assert!((arc.xy(t).0 - exact).abs() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn derivatives_match_vector_field() {
        let p = Params::reference(2.5);
        let arc = SlipArc::closed(State::new(0.1, 0.2, 2.0), 1.0, &p).unwrap();
        let t = 0.8;
        let h = 1e-6;
        let (x1, y1) = arc.xy(t + h);
        let (x0, y0) = arc.xy(t - h);
        let f = vector_field(&arc.state(t), &p, Branch::Plus);
        assert!(((x1 - x0) / (2.0 * h) - f.dx).abs() < 1e-8);
        assert!(((y1 - y0) / (2.0 * h) - f.dy).abs() < 1e-8);
        assert!((arc.accel(t) - f.dy).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = Params::reference(0.6);
        let z0 = State::new(0.3, -0.1, 1.1);
        let t = 2.3;
        let arc = SlipArc::closed(z0, -1.0, &p).unwrap();
        let j = arc.jacobian(t).unwrap();
        let h = 1e-6;
        for col in 0..3 {
            let mut a = z0.to_array();
            let mut b = z0.to_array();
            a[col] += h;
            b[col] -= h;
            let za = SlipArc::closed(State { x: a[0], y: a[1], theta: a[2] }, -1.0, &p).unwrap().xy(t);
            let zb = SlipArc::closed(State { x: b[0], y: b[1], theta: b[2] }, -1.0, &p).unwrap().xy(t);
            assert!(((za.0 - zb.0) / (2.0 * h) - j[0][col]).abs() < 1e-7);
            assert!(((za.1 - zb.1) / (2.0 * h) - j[1][col]).abs() < 1e-7);
        }
    }
}
