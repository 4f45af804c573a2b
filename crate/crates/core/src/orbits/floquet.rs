//! Floquet multipliers and stability labels shared by both orbit kinds.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

/// A multiplier, with `log|μ|` kept separately so that values beyond the
/// floating-point range stay usable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub re: f64,
    pub im: f64,
    pub log_abs: f64,
}

impl Multiplier {
    pub fn real(v: f64) -> Self {
        Self { re: v, im: 0.0, log_abs: v.abs().ln() }
    }

    pub fn complex(re: f64, im: f64) -> Self {
        Self { re, im, log_abs: re.hypot(im).ln() }
    }

    pub fn abs(&self) -> f64 {
        self.log_abs.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stability {
    Attracting,
    Saddle,
    Repelling,
    Degenerate,
}

impl Stability {
    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Attracting => "attracting",
            Stability::Saddle => "saddle",
            Stability::Repelling => "repelling",
            Stability::Degenerate => "degenerate",
        }
    }
}

/// `[trivial, μ₂, μ₃]`: the multiplier closest to 1 first, then the other two
/// by increasing modulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloquetData {
    pub multipliers: [Multiplier; 3],
    pub stability: Stability,
}

/// Modulus band around 1 treated as neutral.
const NEUTRAL_TOL: f64 = 1e-9;

impl FloquetData {
    pub fn from_multipliers(mut m: [Multiplier; 3]) -> Self {
        let trivial = (0..3)
            .min_by(|&a, &b| dist_to_one(&m[a]).total_cmp(&dist_to_one(&m[b])))
            .unwrap();
        m.swap(0, trivial);
        if m[1].log_abs > m[2].log_abs {
            m.swap(1, 2);
        }
        let stability = classify(m[1].log_abs, m[2].log_abs);
        Self { multipliers: m, stability }
    }

    /// Largest nontrivial multiplier.
    pub fn leading(&self) -> Multiplier {
        self.multipliers[2]
    }
}

fn dist_to_one(m: &Multiplier) -> f64 {
    if m.log_abs > 30.0 {
        return f64::INFINITY;
    }
    (m.re - 1.0).hypot(m.im)
}

fn classify(log_small: f64, log_large: f64) -> Stability {
    let tol = NEUTRAL_TOL;
    if log_large.abs() < tol || log_small.abs() < tol {
        Stability::Degenerate
    } else if log_large < 0.0 {
        Stability::Attracting
    } else if log_small > 0.0 {
        Stability::Repelling
    } else {
        Stability::Saddle
    }
}

/// Eigenvalues of a real 3×3 matrix.
pub fn eigen3(m: &[[f64; 3]; 3]) -> [Multiplier; 3] {
    let a = Matrix3::from_fn(|i, j| m[i][j]);
    let ev = a.complex_eigenvalues();
    [0, 1, 2].map(|i| {
        let c = ev[i];
        if c.im.abs() <= 1e-14 * (1.0 + c.re.abs()) {
            Multiplier::real(c.re)
        } else {
            Multiplier::complex(c.re, c.im)
        }
    })
}

pub fn matmul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_and_labels() {
        let f = FloquetData::from_multipliers([Multiplier::real(0.3), Multiplier::real(1.0), Multiplier::real(0.0)]);
        assert_eq!(f.multipliers[0].re, 1.0);
        assert_eq!(f.multipliers[1].re, 0.0);
        assert_eq!(f.leading().re, 0.3);
        assert_eq!(f.stability, Stability::Attracting);
        let s = FloquetData::from_multipliers([Multiplier::real(1.0), Multiplier::real(1e-5), Multiplier::real(-4.0)]);
        assert_eq!(s.stability, Stability::Saddle);
        let r = FloquetData::from_multipliers([Multiplier::real(2.0), Multiplier::real(1.0), Multiplier::real(3.0)]);
        assert_eq!(r.stability, Stability::Repelling);
    }

    #[test]
    fn huge_multiplier_is_not_trivial() {
        let big = Multiplier { re: f64::INFINITY, im: 0.0, log_abs: 900.0 };
        let f = FloquetData::from_multipliers([big, Multiplier::real(1.0 + 1e-7), Multiplier { re: 0.0, im: 0.0, log_abs: -900.0 }]);
        assert_eq!(f.leading().log_abs, 900.0);
        assert_eq!(f.stability, Stability::Saddle);
    }

    #[test]
    fn eigen_of_rotation_block() {
        let m = [[0.0, -2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let e = eigen3(&m);
        let mut mods: Vec<f64> = e.iter().map(|m| m.abs()).collect();
        mods.sort_by(f64::total_cmp);
        assert!((mods[0] - 1.0).abs() < 1e-12 && (mods[2] - 2.0).abs() < 1e-12);
    }
}
