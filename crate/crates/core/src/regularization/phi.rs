//! The regularization function `φ` and its monotone negative control.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Params;

/// A smooth odd switching function with `φ(y) = sign(y)` for `|y| ≥ 1`.
pub trait Regularizer: Send + Sync {
    fn phi(&self, y: f64) -> f64;
    fn dphi(&self, y: f64) -> f64;
    fn d2phi(&self, y: f64) -> f64;
}

/// `φ(y) = a y⁷ + b y⁵ + c y³ + d y` on `[−1, 1]`, `sign(y)` outside.
///
/// The coefficients make `φ` C¹ at `±1` and place an interior maximum
/// `φ(δ) = μ_s/μ_d` so that the critical manifold reproduces the static
/// friction threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phi {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub delta: f64,
    /// `μ_s / μ_d`.
    pub peak: f64,
}

impl Regularizer for Phi {
    fn phi(&self, y: f64) -> f64 {
        if y.abs() >= 1.0 {
            return y.signum();
        }
        let y2 = y * y;
        y * (self.d + y2 * (self.c + y2 * (self.b + y2 * self.a)))
    }

    fn dphi(&self, y: f64) -> f64 {
        if y.abs() >= 1.0 {
            return 0.0;
        }
        let y2 = y * y;
        self.d + y2 * (3.0 * self.c + y2 * (5.0 * self.b + y2 * 7.0 * self.a))
    }

    fn d2phi(&self, y: f64) -> f64 {
        if y.abs() >= 1.0 {
            return 0.0;
        }
        let y2 = y * y;
        y * (6.0 * self.c + y2 * (20.0 * self.b + y2 * 42.0 * self.a))
    }
}

impl Phi {
    /// Residuals of `φ(1) = 1`, `φ'(1) = 0`, `φ(δ) = μ_s/μ_d`, `φ'(δ) = 0`,
    /// evaluated on the polynomial.
    pub fn condition_residuals(&self) -> [f64; 4] {
        let poly = |y: f64| {
            let y2 = y * y;
            y * (self.d + y2 * (self.c + y2 * (self.b + y2 * self.a)))
        };
        let dpoly = |y: f64| {
            let y2 = y * y;
            self.d + y2 * (3.0 * self.c + y2 * (5.0 * self.b + y2 * 7.0 * self.a))
        };
        [
            poly(1.0) - 1.0,
            dpoly(1.0),
            poly(self.delta) - self.peak,
            dpoly(self.delta),
        ]
    }

    /// Inverse of `φ` on the attracting branch `(−δ, δ)`, by bisection.
    pub fn inverse_attracting(&self, target: f64) -> Option<f64> {
        if target.abs() > self.peak {
            return None;
        }
        let (mut a, mut b) = (-self.delta, self.delta);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.phi(m) < target {
                a = m;
            } else {
                b = m;
            }
            if b - a <= 1e-15 {
                break;
            }
        }
        Some(0.5 * (a + b))
    }
}

/// Solves for the coefficients of `φ` and checks its shape.
pub fn build_phi(delta: f64, mu_s: f64, mu_d: f64) -> Result<Phi> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParams(format!("need 0 < delta < 1, got {delta}")));
    }
    if !(mu_d > 0.0 && mu_s > mu_d) {
        return Err(Error::InvalidParams(format!(
            "need mu_s / mu_d > 1, got mu_s = {mu_s}, mu_d = {mu_d}"
        )));
    }
    let peak = mu_s / mu_d;
    let d2 = delta * delta;
    let d3 = d2 * delta;
    let d4 = d2 * d2;
    let d5 = d4 * delta;
    let d6 = d3 * d3;
    let d7 = d6 * delta;
    let m = Matrix4::new(
        1.0, 1.0, 1.0, 1.0, //
        7.0, 5.0, 3.0, 1.0, //
        d7, d5, d3, delta, //
        7.0 * d6, 5.0 * d4, 3.0 * d2, 1.0,
    );
    let rhs = Vector4::new(1.0, 0.0, peak, 0.0);
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem(format!("phi conditions at delta = {delta}")))?;
    let phi = Phi {
        a: sol[0],
        b: sol[1],
        c: sol[2],
        d: sol[3],
        delta,
        peak,
    };
    check_shape(&phi)?;
    Ok(phi)
}

fn check_shape(phi: &Phi) -> Result<()> {
    if phi.d2phi(phi.delta) >= 0.0 {
        return Err(Error::ShapeViolation(format!(
            "phi''(delta) = {} is not negative",
            phi.d2phi(phi.delta)
        )));
    }
    const N: usize = 4000;
    for k in 1..N {
        let y = k as f64 / N as f64;
        let dp = phi.dphi(y);
        let near_delta = (y - phi.delta).abs() < 1e-9;
        if near_delta {
            continue;
        }
        if y < phi.delta && dp <= 0.0 {
            return Err(Error::ShapeViolation(format!("phi'({y}) = {dp} <= 0 on (0, delta)")));
        }
        if y > phi.delta && dp >= 0.0 {
            return Err(Error::ShapeViolation(format!("phi'({y}) = {dp} >= 0 on (delta, 1)")));
        }
    }
    Ok(())
}

/// The monotone cubic `(3y − y³)/2` of Sotomayor and Teixeira. It is C¹ at
/// `±1` but has no interior extremum, so the regularized system cannot
/// represent a static threshold above `μ_d`. Kept only as a negative control.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SotomayorTeixeira;

impl Regularizer for SotomayorTeixeira {
    fn phi(&self, y: f64) -> f64 {
        if y.abs() >= 1.0 {
            y.signum()
        } else {
            0.5 * (3.0 * y - y * y * y)
        }
    }

    fn dphi(&self, y: f64) -> f64 {
        if y.abs() >= 1.0 {
            0.0
        } else {
            1.5 * (1.0 - y * y)
        }
    }

    fn d2phi(&self, y: f64) -> f64 {
        if y.abs() >= 1.0 {
            0.0
        } else {
            -3.0 * y
        }
    }
}

/// Regularization parameters: time-scale separation `ε` and the shaped `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegParams {
    pub eps: f64,
    pub delta: f64,
    pub phi: Phi,
}

impl RegParams {
    pub fn new(eps: f64, delta: f64, p: &Params) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParams(format!("need eps > 0, got {eps}")));
        }
        Ok(Self {
            eps,
            delta,
            phi: build_phi(delta, p.mu_s, p.mu_d)?,
        })
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Phi {
        build_phi(0.6, 1.1, 0.4).unwrap()
    }

    #[test]
    fn reference_coefficients() {
        let phi = table();
        // Frozen from an independent exact rational solve of the same system.
        assert!((phi.a - 10.576601381655093).abs() < 1e-11);
        assert!((phi.b + 16.993656864872687).abs() < 1e-11);
        assert!((phi.c - 1.7575095847800926).abs() < 1e-11);
        assert!((phi.d - 5.6595458984375).abs() < 1e-11);
        assert!((phi.d2phi(0.6) + 32.54322916666667).abs() < 1e-10);
        for r in phi.condition_residuals() {
            assert!(r.abs() < 1e-12);
        }
        assert!((phi.phi(0.6) - 2.75).abs() < 1e-12);
    }

    #[test]
    fn odd_and_matched() {
        let phi = table();
        for k in 0..=50 {
            let y = -1.5 + 3.0 * k as f64 / 50.0;
            assert_eq!(phi.phi(-y), -phi.phi(y));
        }
        assert!((phi.phi(1.0 - 1e-12) - 1.0).abs() < 1e-10);
        assert_eq!(phi.phi(1.3), 1.0);
    }

    #[test]
    fn attracting_inverse() {
        let phi = table();
        let y = phi.inverse_attracting(-1.25).unwrap();
        assert!((phi.phi(y) + 1.25).abs() < 1e-12 && y.abs() < 0.6);
        assert!(phi.inverse_attracting(3.0).is_none());
    }

    #[test]
    fn bad_inputs() {
        assert!(build_phi(1.2, 1.1, 0.4).is_err());
        assert!(build_phi(0.6, 0.3, 0.4).is_err());
        // With a small δ the polynomial overshoots and φ' changes sign on (δ, 1).
        assert!(matches!(build_phi(0.05, 1.01, 1.0), Err(Error::ShapeViolation(_))));
    }

    #[test]
    fn monotone_control() {
        let st = SotomayorTeixeira;
        for k in 1..100 {
            let y = k as f64 / 100.0;
            assert!(st.dphi(y) > 0.0);
        }
        assert_eq!(st.phi(1.0), 1.0);
        assert_eq!(st.dphi(1.0), 0.0);
    }
}
