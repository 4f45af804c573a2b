//! Dimensionless stiction oscillator: parameters, stiction law, strata of
//! phase space and tangency classification.
//!
//! Phase space is `(x, y, θ) ∈ ℝ² × T¹` with
//! `x' = y`, `y' = −ξ + μ(y, ξ)`, `θ' = 1` and `ξ = γ²x + sin θ`.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};

/// Absolute tolerance for "on a manifold" tests (`|y|`, `|ξ ∓ μ_s|`).
pub const CLASSIFY_TOL: f64 = 1e-10;

/// Reduces an angle to `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Physical parameters before rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionalParams {
    pub mass: f64,
    pub stiffness: f64,
    pub amplitude: f64,
    pub omega: f64,
    pub normal_force: f64,
    pub f_s: f64,
    pub f_d: f64,
    /// Velocity scale. It cancels from every dimensionless group.
    pub velocity_scale: f64,
}

/// Dimensionless model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub gamma: f64,
    pub mu_s: f64,
    pub mu_d: f64,
}

impl Params {
    pub fn new(gamma: f64, mu_s: f64, mu_d: f64) -> Result<Self> {
        let p = Self { gamma, mu_s, mu_d };
        p.validate()?;
        Ok(p)
    }

    /// Reference friction levels `μ_s = 1.1`, `μ_d = 0.4` at the given γ.
    pub fn reference(gamma: f64) -> Self {
        Self {
            gamma,
            mu_s: 1.1,
            mu_d: 0.4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.gamma, self.mu_s, self.mu_d]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.mu_s > self.mu_d && self.mu_d > 0.0) {
            return Err(Error::InvalidParams(format!(
                "need mu_s > mu_d > 0, got mu_s = {}, mu_d = {}",
                self.mu_s, self.mu_d
            )));
        }
        Ok(())
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma * self.gamma
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self { gamma, ..*self }
    }
}

/// `γ = √(κ/M)/ω`, `μ_{s,d} = N f_{s,d} / A`.
pub fn nondimensionalize(dp: &DimensionalParams) -> Result<Params> {
    let fields = [
        ("mass", dp.mass),
        ("stiffness", dp.stiffness),
        ("amplitude", dp.amplitude),
        ("omega", dp.omega),
        ("normal_force", dp.normal_force),
        ("f_s", dp.f_s),
        ("f_d", dp.f_d),
        ("velocity_scale", dp.velocity_scale),
    ];
    for (name, v) in fields {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParams(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    if dp.f_s <= dp.f_d {
        return Err(Error::InvalidParams(format!(
            "need f_s > f_d, got f_s = {}, f_d = {}",
            dp.f_s, dp.f_d
        )));
    }
    Params::new(
        (dp.stiffness / dp.mass).sqrt() / dp.omega,
        dp.normal_force * dp.f_s / dp.amplitude,
        dp.normal_force * dp.f_d / dp.amplitude,
    )
}

/// A point `(x, y, θ)` with θ kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl State {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Euclidean distance with the θ difference taken on the circle.
    pub fn distance(&self, other: &State) -> f64 {
        let dth = angle_diff(self.theta, other.theta);
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + dth * dth).sqrt()
    }
}

/// Signed difference `a − b` reduced to `(−π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// Time derivative `(x', y', θ')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateDerivative {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl StateDerivative {
    pub fn to_array(self) -> [f64; 3] {
        [self.dx, self.dy, self.dtheta]
    }
}

/// Smooth vector fields available on (the closure of) each region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    /// `Z⁺`, slipping with `y > 0`.
    Plus,
    /// `Z⁻`, slipping with `y < 0`.
    Minus,
    /// `Z_s`, sticking on `y = 0`.
    Stick,
}

impl Branch {
    /// Sign `σ` of `y` on a slip branch.
    pub fn sigma(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
            Branch::Stick => 0.0,
        }
    }
}

/// `ξ(x, θ) = γ²x + sin θ`.
pub fn xi(x: f64, theta: f64, p: &Params) -> f64 {
    p.gamma2() * x + theta.sin()
}

/// The stiction law `μ(y, ξ)`.
pub fn friction(y: f64, xi: f64, p: &Params) -> Result<f64> {
    if y != 0.0 {
        return Ok(-p.mu_d * y.signum());
    }
    let a = xi.abs();
    if a < p.mu_s {
        Ok(xi)
    } else if a > p.mu_s {
        Ok(p.mu_s * xi.signum())
    } else {
        Err(Error::UndefinedFriction { xi })
    }
}

/// Evaluates `Z⁺`, `Z⁻` or `Z_s` at `z`, irrespective of the sign of `y`.
pub fn vector_field(z: &State, p: &Params, branch: Branch) -> StateDerivative {
    match branch {
        Branch::Stick => StateDerivative {
            dx: 0.0,
            dy: 0.0,
            dtheta: 1.0,
        },
        Branch::Plus | Branch::Minus => StateDerivative {
            dx: z.y,
            dy: -xi(z.x, z.theta, p) - branch.sigma() * p.mu_d,
            dtheta: 1.0,
        },
    }
}

/// `S(x, y, θ) = (−x, −y, θ + π)`.
pub fn symmetry(z: &State) -> State {
    State::new(-z.x, -z.y, z.theta + PI)
}

/// Which of the two non-uniqueness sets a boundary point lies in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SingularSet {
    IPlus,
    IMinus,
}

impl SingularSet {
    pub fn name(self) -> &'static str {
        match self {
            SingularSet::IPlus => "I+",
            SingularSet::IMinus => "I-",
        }
    }
}

/// Stratum of phase space occupied by a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionLabel {
    GPlus,
    GMinus,
    SigmaCPlus,
    SigmaCMinus,
    SigmaS,
    /// `y = 0`, `ξ = −μ_s`.
    BoundaryCPlus { in_i_plus: bool },
    /// `y = 0`, `ξ = μ_s`.
    BoundaryCMinus { in_i_minus: bool },
}

impl RegionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::GPlus => "GPlus",
            RegionLabel::GMinus => "GMinus",
            RegionLabel::SigmaCPlus => "SigmaCPlus",
            RegionLabel::SigmaCMinus => "SigmaCMinus",
            RegionLabel::SigmaS => "SigmaS",
            RegionLabel::BoundaryCPlus { in_i_plus: false } => "BoundaryCPlus",
            RegionLabel::BoundaryCPlus { in_i_plus: true } => "BoundaryCPlus+InIPlus",
            RegionLabel::BoundaryCMinus { in_i_minus: false } => "BoundaryCMinus",
            RegionLabel::BoundaryCMinus { in_i_minus: true } => "BoundaryCMinus+InIMinus",
        }
    }

    pub fn singular_set(self) -> Option<SingularSet> {
        match self {
            RegionLabel::BoundaryCPlus { in_i_plus: true } => Some(SingularSet::IPlus),
            RegionLabel::BoundaryCMinus { in_i_minus: true } => Some(SingularSet::IMinus),
            _ => None,
        }
    }
}

/// θ-window of `I⁻` on `ξ = μ_s`: the phases where `Z_s` points back into
/// `Σ_s` (`ξ' = cos θ ≤ 0`), so that sticking and slipping on `Z⁻` are both
/// admissible continuations.
pub fn in_i_minus_window(theta: f64) -> bool {
    let th = wrap_angle(theta);
    (FRAC_PI_2 - 1e-12..=3.0 * FRAC_PI_2 + 1e-12).contains(&th)
}

/// θ-window of `I⁺` on `ξ = −μ_s`, the mirror image of [`in_i_minus_window`].
pub fn in_i_plus_window(theta: f64) -> bool {
    !in_i_minus_window(theta)
        || (wrap_angle(theta) - FRAC_PI_2).abs() <= 1e-12
        || (wrap_angle(theta) - 3.0 * FRAC_PI_2).abs() <= 1e-12
}

/// Classifies `z` with absolute tolerance `tol` on `|y|` and `|ξ ∓ μ_s|`.
pub fn classify(z: &State, p: &Params, tol: f64) -> RegionLabel {
    if z.y > tol {
        return RegionLabel::GPlus;
    }
    if z.y < -tol {
        return RegionLabel::GMinus;
    }
    let s = xi(z.x, z.theta, p);
    if (s - p.mu_s).abs() <= tol {
        RegionLabel::BoundaryCMinus {
            in_i_minus: in_i_minus_window(z.theta),
        }
    } else if (s + p.mu_s).abs() <= tol {
        RegionLabel::BoundaryCPlus {
            in_i_plus: in_i_plus_window(z.theta),
        }
    } else if s > p.mu_s {
        RegionLabel::SigmaCMinus
    } else if s < -p.mu_s {
        RegionLabel::SigmaCPlus
    } else {
        RegionLabel::SigmaS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TangencyLabel {
    Visible,
    Invisible,
    Cusp,
    None,
}

/// Which field / set pair to examine in [`tangency`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TangencyKind {
    /// `Z_s` on `∂Σ_c⁺` (`ξ = −μ_s`).
    ZsOnBoundaryCPlus,
    /// `Z_s` on `∂Σ_c⁻` (`ξ = μ_s`).
    ZsOnBoundaryCMinus,
    /// `Z⁺` on `Σ` along `ξ = −μ_d`.
    ZPlusOnSigma,
    /// `Z⁻` on `Σ` along `ξ = μ_d`.
    ZMinusOnSigma,
}

/// Tolerance for the vanishing of Lie derivatives in [`tangency`].
const LIE_TOL: f64 = 1e-9;
/// How far off the tangency set a point may be before it is rejected.
const TANGENCY_SET_TOL: f64 = 1e-8;

/// Lie derivatives `(ℒχ, ℒ²χ, ℒ³χ)` of the set-defining function `χ` along
/// the relevant field, with `χ > 0` on the side the field must stay in.
pub fn lie_derivatives(theta: f64, kind: TangencyKind) -> (f64, f64, f64) {
    let (s, c) = theta.sin_cos();
    match kind {
        // χ = μ_s − ξ; along Z_s, ξ' = cos θ.
        TangencyKind::ZsOnBoundaryCMinus => (-c, s, c),
        // χ = ξ + μ_s.
        TangencyKind::ZsOnBoundaryCPlus => (c, -s, -c),
        // χ = −y; on y = 0, ξ = μ_d: ℒχ = ξ − μ_d = 0, ℒ²χ = ξ' = cos θ
        // (x' = y = 0), ℒ³χ = −sin θ.
        TangencyKind::ZMinusOnSigma => (0.0, c, -s),
        // χ = y on ξ = −μ_d.
        TangencyKind::ZPlusOnSigma => (0.0, -c, s),
    }
}

/// Classifies the contact of a field with a boundary set at `z`.
///
/// The first nonvanishing Lie derivative decides: a nonzero first derivative
/// means transversal contact (`None`); a quadratic contact is visible when
/// `ℒ²χ > 0` (the orbit stays on the side `χ ≥ 0`) and invisible otherwise;
/// a cubic contact is a cusp.
pub fn tangency(z: &State, p: &Params, kind: TangencyKind) -> Result<TangencyLabel> {
    let s = xi(z.x, z.theta, p);
    let (set_res, needs_y) = match kind {
        TangencyKind::ZsOnBoundaryCMinus => (s - p.mu_s, false),
        TangencyKind::ZsOnBoundaryCPlus => (s + p.mu_s, false),
        TangencyKind::ZMinusOnSigma => (s - p.mu_d, true),
        TangencyKind::ZPlusOnSigma => (s + p.mu_d, true),
    };
    let residual = if needs_y || z.y != 0.0 {
        set_res.abs().max(z.y.abs())
    } else {
        set_res.abs()
    };
    if residual > TANGENCY_SET_TOL {
        return Err(Error::NotOnTangencySet { residual });
    }
    let (l1, l2, l3) = lie_derivatives(z.theta, kind);
    Ok(if l1.abs() > LIE_TOL {
        TangencyLabel::None
    } else if l2.abs() > LIE_TOL {
        if l2 > 0.0 {
            TangencyLabel::Visible
        } else {
            TangencyLabel::Invisible
        }
    } else if l3.abs() > LIE_TOL {
        TangencyLabel::Cusp
    } else {
        TangencyLabel::None
    })
}

/// Sliding classification on `Σ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlidingClass {
    Crossing,
    FilippovSliding,
    StictionOnlySliding,
    /// `|ξ|` sits on `μ_d` or `μ_s` within tolerance.
    Degenerate,
}

/// Compares the stiction sticking band `|ξ| < μ_s` with the Filippov sliding
/// band `|ξ| < μ_d` at a point of `Σ`.
pub fn filippov_sliding_region(z: &State, p: &Params) -> SlidingClass {
    let a = xi(z.x, z.theta, p).abs();
    if (a - p.mu_d).abs() <= CLASSIFY_TOL || (a - p.mu_s).abs() <= CLASSIFY_TOL {
        SlidingClass::Degenerate
    } else if a < p.mu_d {
        SlidingClass::FilippovSliding
    } else if a < p.mu_s {
        SlidingClass::StictionOnlySliding
    } else {
        SlidingClass::Crossing
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Params {
        Params::reference(2.0)
    }

    #[test]
    fn nondimensionalize_examples() {
        let dp = DimensionalParams {
            mass: 1.0,
            stiffness: 1.0,
            amplitude: 1.0,
            omega: 1.0,
            normal_force: 1.0,
            f_s: 1.0,
            f_d: 0.5,
            velocity_scale: 3.0,
        };
        let q = nondimensionalize(&dp).unwrap();
        assert_eq!(q.gamma, 1.0);
        assert_eq!(q.mu_s, 1.0);

        let dp2 = DimensionalParams {
            amplitude: 10.0,
            normal_force: 1.0,
            f_s: 11.0,
            f_d: 4.0,
            ..dp
        };
        let q2 = nondimensionalize(&dp2).unwrap();
        assert!((q2.mu_s - 1.1).abs() < 1e-15 && (q2.mu_d - 0.4).abs() < 1e-15);

        let q3 = nondimensionalize(&DimensionalParams {
            stiffness: 961.0,
            ..dp
        })
        .unwrap();
        assert_eq!(q3.gamma, 31.0);

        assert!(nondimensionalize(&DimensionalParams { mass: 0.0, ..dp }).is_err());
        assert!(nondimensionalize(&DimensionalParams { f_d: 2.0, ..dp }).is_err());
    }

    #[test]
    fn velocity_scale_cancels() {
        let dp = DimensionalParams {
            mass: 2.0,
            stiffness: 5.0,
            amplitude: 3.0,
            omega: 1.5,
            normal_force: 4.0,
            f_s: 0.9,
            f_d: 0.3,
            velocity_scale: 1.0,
        };
        let a = nondimensionalize(&dp).unwrap();
        let b = nondimensionalize(&DimensionalParams {
            velocity_scale: 123.0,
            ..dp
        })
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn xi_examples() {
        let p = p();
        assert_eq!(xi(0.0, 0.0, &p), 0.0);
        assert_eq!(xi(0.0, FRAC_PI_2, &p), 1.0);
        assert!((xi(0.1 / p.gamma2(), 0.0, &p) - 0.1).abs() < 1e-16);
    }

    #[test]
    fn friction_examples() {
        let p = p();
        assert_eq!(friction(1.0, 42.0, &p).unwrap(), -0.4);
        assert_eq!(friction(0.0, 0.5, &p).unwrap(), 0.5);
        assert_eq!(friction(0.0, 2.0, &p).unwrap(), 1.1);
        assert_eq!(friction(0.0, -2.0, &p).unwrap(), -1.1);
        assert!(matches!(
            friction(0.0, 1.1, &p),
            Err(Error::UndefinedFriction { .. })
        ));
    }

    #[test]
    fn sticking_law_cancels_forcing() {
        let p = p();
        for &s in &[-1.0, -0.3, 0.0, 0.7, 1.09] {
            assert_eq!(-s + friction(0.0, s, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn vector_field_examples() {
        let p = p();
        let z = State::new(0.0, 0.0, 0.0);
        assert_eq!(vector_field(&z, &p, Branch::Stick).to_array(), [0.0, 0.0, 1.0]);
        assert_eq!(vector_field(&z, &p, Branch::Minus).to_array(), [0.0, 0.4, 1.0]);
        assert_eq!(vector_field(&z, &p, Branch::Plus).to_array(), [0.0, -0.4, 1.0]);
    }

    #[test]
    fn classify_examples() {
        let p = p();
        assert_eq!(classify(&State::new(0.0, 0.3, 0.0), &p, CLASSIFY_TOL), RegionLabel::GPlus);
        let x_for = |s: f64, th: f64| (s - th.sin()) / p.gamma2();
        let z = State::new(x_for(1.2, 0.3), 0.0, 0.3);
        assert_eq!(classify(&z, &p, CLASSIFY_TOL), RegionLabel::SigmaCMinus);
        let z = State::new(x_for(1.1, 0.3), 0.0, 0.3);
        assert_eq!(
            classify(&z, &p, CLASSIFY_TOL),
            RegionLabel::BoundaryCMinus { in_i_minus: false }
        );
        let z = State::new(x_for(1.1, 2.0), 0.0, 2.0);
        assert_eq!(
            classify(&z, &p, CLASSIFY_TOL),
            RegionLabel::BoundaryCMinus { in_i_minus: true }
        );
        let z = State::new(x_for(-1.1, 0.3), 0.0, 0.3);
        assert_eq!(
            classify(&z, &p, CLASSIFY_TOL),
            RegionLabel::BoundaryCPlus { in_i_plus: true }
        );
        let z = State::new(x_for(0.2, 1.0), 0.0, 1.0);
        assert_eq!(classify(&z, &p, CLASSIFY_TOL), RegionLabel::SigmaS);
    }

    #[test]
    fn windows_are_symmetric_images() {
        for k in 0..400 {
            let th = k as f64 * TAU / 400.0;
            assert_eq!(in_i_minus_window(th), in_i_plus_window(th + PI));
        }
        assert!(in_i_minus_window(FRAC_PI_2) && in_i_plus_window(FRAC_PI_2));
    }

    #[test]
    fn tangency_examples() {
        let p = p();
        let on = |s: f64, th: f64| State::new((s - th.sin()) / p.gamma2(), 0.0, th);
        let k = TangencyKind::ZsOnBoundaryCMinus;
        assert_eq!(tangency(&on(1.1, FRAC_PI_2), &p, k).unwrap(), TangencyLabel::Visible);
        assert_eq!(
            tangency(&on(1.1, 3.0 * FRAC_PI_2), &p, k).unwrap(),
            TangencyLabel::Invisible
        );
        assert_eq!(tangency(&on(1.1, 0.3), &p, k).unwrap(), TangencyLabel::None);
        let k = TangencyKind::ZMinusOnSigma;
        assert_eq!(tangency(&on(0.4, PI), &p, k).unwrap(), TangencyLabel::Invisible);
        assert_eq!(tangency(&on(0.4, 0.3), &p, k).unwrap(), TangencyLabel::Visible);
        assert_eq!(tangency(&on(0.4, FRAC_PI_2), &p, k).unwrap(), TangencyLabel::Cusp);
        assert!(matches!(
            tangency(&on(0.5, 0.3), &p, k),
            Err(Error::NotOnTangencySet { .. })
        ));
    }

    #[test]
    fn sliding_bands() {
        let p = p();
        let on = |s: f64| State::new(s / p.gamma2(), 0.0, 0.0);
        assert_eq!(filippov_sliding_region(&on(0.0), &p), SlidingClass::FilippovSliding);
        assert_eq!(filippov_sliding_region(&on(0.7), &p), SlidingClass::StictionOnlySliding);
        assert_eq!(filippov_sliding_region(&on(1.2), &p), SlidingClass::Crossing);
        assert_eq!(filippov_sliding_region(&on(0.4), &p), SlidingClass::Degenerate);
    }

    #[test]
    fn symmetry_examples() {
        assert_eq!(symmetry(&State::new(0.0, 0.0, 0.0)), State::new(0.0, 0.0, PI));
        let z = State::new(0.3, -0.2, 5.0);
        let zz = symmetry(&symmetry(&z));
        assert!(zz.distance(&z) < 1e-14);
    }
}
