//! Regularized vector field, its slow/fast forms, the critical manifold and
//! the reduced flow on it.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, TAU};

use super::phi::{RegParams, Regularizer};
use crate::error::{Error, Result};
use crate::model::{xi, Params, State, StateDerivative};

/// `Z_ε`: `x' = y`, `y' = −ξ − μ_d φ(y/ε)`, `θ' = 1`.
pub fn regularized_rhs(z: &State, p: &Params, rp: &RegParams) -> StateDerivative {
    StateDerivative {
        dx: z.y,
        dy: -xi(z.x, z.theta, p) - p.mu_d * rp.phi.phi(z.y / rp.eps),
        dtheta: 1.0,
    }
}

/// Slow problem in `(x, ŷ, θ)` with `ŷ = y/ε`, time `t`.
pub fn slow_rhs(x: f64, yh: f64, theta: f64, p: &Params, rp: &RegParams) -> [f64; 3] {
    [
        rp.eps * yh,
        (-xi(x, theta, p) - p.mu_d * rp.phi.phi(yh)) / rp.eps,
        1.0,
    ]
}

/// Fast problem in `(x, ŷ, θ)`, time `τ = t/ε`. At `ε = 0` this is the layer problem.
pub fn fast_rhs(x: f64, yh: f64, theta: f64, p: &Params, rp: &RegParams) -> [f64; 3] {
    let e = rp.eps;
    [e * e * yh, -xi(x, theta, p) - p.mu_d * rp.phi.phi(yh), e]
}

/// Branches of the critical manifold `ξ + μ_d φ(ŷ) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManifoldBranch {
    /// Attracting, `φ'(ŷ) > 0`.
    Ca,
    /// Repelling with `ŷ > 0`.
    CrPlus,
    /// Repelling with `ŷ < 0`.
    CrMinus,
    /// Double root on a fold line, `φ'(ŷ) = 0`.
    Fold,
}

impl ManifoldBranch {
    pub fn name(self) -> &'static str {
        match self {
            ManifoldBranch::Ca => "C_a",
            ManifoldBranch::CrPlus => "C_r+",
            ManifoldBranch::CrMinus => "C_r-",
            ManifoldBranch::Fold => "fold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldRoot {
    pub yhat: f64,
    pub branch: ManifoldBranch,
}

/// Tolerance on `|φ(ŷ*) − target|` at an extremum for a double root.
const FOLD_TOL: f64 = 1e-12;

/// Roots of `φ(ŷ) = −ξ/μ_d` in `(−1, 1)`, labeled by the sign of `φ'`.
///
/// The interval is split at the extrema of `φ` (located from sign changes of
/// `φ'`), and each monotone piece is searched by bisection. The endpoints
/// `±1` are excluded: there `φ` is constant beyond and the manifold is not
/// normally hyperbolic.
pub fn critical_manifold_roots<R: Regularizer + ?Sized>(xi: f64, p: &Params, reg: &R) -> Vec<ManifoldRoot> {
    let target = -xi / p.mu_d;
    const N: usize = 2000;
    let grid: Vec<f64> = (0..=N).map(|k| -1.0 + 2.0 * k as f64 / N as f64).collect();
    // Breakpoints: the open endpoints and the interior extrema.
    let mut bps = vec![-1.0];
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (da, db) = (reg.dphi(a), reg.dphi(b));
        if a > -1.0 && da == 0.0 {
            bps.push(a);
        } else if da * db < 0.0 {
            bps.push(bisect(|y| reg.dphi(y), a, b));
        }
    }
    bps.push(1.0);
    bps.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut roots: Vec<ManifoldRoot> = Vec::new();
    let mut push = |y: f64, fold: bool| {
        if y <= -1.0 + 1e-12 || y >= 1.0 - 1e-12 {
            return;
        }
        if roots.iter().any(|r| (r.yhat - y).abs() < 1e-9) {
            return;
        }
        let dp = reg.dphi(y);
        let branch = if fold || dp.abs() < 1e-9 {
            ManifoldBranch::Fold
        } else if dp > 0.0 {
            ManifoldBranch::Ca
        } else if y > 0.0 {
            ManifoldBranch::CrPlus
        } else {
            ManifoldBranch::CrMinus
        };
        roots.push(ManifoldRoot { yhat: y, branch });
    };
    for (i, w) in bps.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (reg.phi(a) - target, reg.phi(b) - target);
        // Extrema touching the target are double roots.
        if i > 0 && fa.abs() <= FOLD_TOL {
            push(a, true);
            continue;
        }
        if fb.abs() <= FOLD_TOL {
            push(b, b.abs() < 1.0);
            continue;
        }
        if fa * fb < 0.0 {
            push(bisect(|y| reg.phi(y) - target, a, b), false);
        }
    }
    roots.sort_by(|a, b| a.yhat.total_cmp(&b.yhat));
    roots
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Reduced flow at `(ŷ, θ)` with `Γ = εγ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedFlow {
    /// `ŷ'` in the original time, `−(Γŷ + cos θ) / (μ_d φ'(ŷ))` (`θ' = 1`).
    pub yhat_dot: f64,
    /// Desingularized `(ŷ̇, θ̇) = (−Γŷ − cos θ, μ_d φ'(ŷ))`.
    pub desingularized: [f64; 2],
}

/// Desingularized reduced vector field.
pub fn desingularized(yh: f64, theta: f64, gamma_big: f64, p: &Params, rp: &RegParams) -> [f64; 2] {
    [-gamma_big * yh - theta.cos(), p.mu_d * rp.phi.dphi(yh)]
}

/// Both forms of the reduced flow. The original-time form is singular on the
/// fold lines `φ'(ŷ) = 0`.
pub fn reduced_flow(yh: f64, theta: f64, gamma_big: f64, p: &Params, rp: &RegParams) -> Result<ReducedFlow> {
    let des = desingularized(yh, theta, gamma_big, p, rp);
    let dphi = rp.phi.dphi(yh);
    if dphi.abs() < 1e-12 {
        return Err(Error::SingularLine { dphi });
    }
    Ok(ReducedFlow {
        yhat_dot: des[0] / (p.mu_d * dphi),
        desingularized: des,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CriticalClass {
    FoldedSaddle,
    FoldedCenter,
    FoldedFocusStable,
    FoldedNodeStable,
    /// Saddle and node coincide (`|Γδ| = 1`).
    FoldedSaddleNode,
}

/// A complex eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eig {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub yhat: f64,
    pub theta: f64,
    /// `ξ = ∓μ_s` on `f±`.
    pub xi: f64,
    pub gamma_big: f64,
    pub class: CriticalClass,
    pub eigenvalues: [Eig; 2],
    /// Jacobian of the desingularized flow.
    pub jacobian: [[f64; 2]; 2],
}

/// Jacobian of the desingularized flow, `[[−Γ, sin θ], [μ_d φ''(ŷ), 0]]`.
pub fn desingularized_jacobian(yh: f64, theta: f64, gamma_big: f64, p: &Params, rp: &RegParams) -> [[f64; 2]; 2] {
    [[-gamma_big, theta.sin()], [p.mu_d * rp.phi.d2phi(yh), 0.0]]
}

fn eig2(j: &[[f64; 2]; 2]) -> [Eig; 2] {
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [Eig { re: 0.5 * (tr + s), im: 0.0 }, Eig { re: 0.5 * (tr - s), im: 0.0 }]
    } else {
        let s = (-disc).sqrt();
        [Eig { re: 0.5 * tr, im: 0.5 * s }, Eig { re: 0.5 * tr, im: -0.5 * s }]
    }
}

/// Equilibria of the desingularized flow on the fold lines, `ŷ = ±δ`,
/// `cos θ = ∓Γδ`.
pub fn folded_singularities(p: &Params, rp: &RegParams, gamma_big: f64) -> Result<Vec<CriticalPoint>> {
    if gamma_big < 0.0 || !gamma_big.is_finite() {
        return Err(Error::InvalidParams(format!("need Gamma >= 0, got {gamma_big}")));
    }
    let delta = rp.delta;
    let c = gamma_big * delta;
    if c > 1.0 {
        return Err(Error::NoSingularities(c));
    }
    let base = c.acos();
    let mut out = Vec::with_capacity(4);
    // ŷ = −δ needs cos θ = Γδ; ŷ = δ needs cos θ = −Γδ.
    for (yh, th_pair) in [
        (-delta, [base, TAU - base]),
        (delta, [std::f64::consts::PI - base, std::f64::consts::PI + base]),
    ] {
        for th in th_pair {
            let th = crate::model::wrap_angle(th);
            if out.iter().any(|q: &CriticalPoint| q.yhat == yh && (q.theta - th).abs() < 1e-15) {
                continue;
            }
            let j = desingularized_jacobian(yh, th, gamma_big, p, rp);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let tr = j[0][0];
            let disc = tr * tr - 4.0 * det;
            let class = if 1.0 - c <= 1e-12 {
                CriticalClass::FoldedSaddleNode
            } else if det < 0.0 {
                CriticalClass::FoldedSaddle
            } else if gamma_big == 0.0 {
                CriticalClass::FoldedCenter
            } else if disc < 0.0 {
                CriticalClass::FoldedFocusStable
            } else {
                CriticalClass::FoldedNodeStable
            };
            out.push(CriticalPoint {
                yhat: yh,
                theta: th,
                xi: -yh.signum() * p.mu_s,
                gamma_big,
                class,
                eigenvalues: eig2(&j),
                jacobian: j,
            });
        }
    }
    out.sort_by(|a, b| a.yhat.total_cmp(&b.yhat).then(a.theta.total_cmp(&b.theta)));
    Ok(out)
}

/// `Γ = εγ²`.
pub fn gamma_big(p: &Params, rp: &RegParams) -> f64 {
    rp.eps * p.gamma2()
}

/// Upper bound `1/√(εδ)` on γ for folded singularities to exist.
pub fn gamma_bound(rp: &RegParams) -> f64 {
    1.0 / (rp.eps * rp.delta).sqrt()
}

/// Minimum over θ of `ŷ̇` on the line `ŷ = −δ`, by golden-section search.
fn min_yhat_dot_on_fold(gamma_big: f64, p: &Params, rp: &RegParams) -> f64 {
    let f = |th: f64| desingularized(-rp.delta, th, gamma_big, p, rp)[0];
    // The minimum of Γδ − cos θ sits near θ = 0; search a window around it.
    let (mut a, mut b) = (-FRAC_PI_2, FRAC_PI_2);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b))
}

/// Locates the saddle-node collision of folded singularities in `Γ` by
/// bisection on the existence of equilibria on `ŷ = −δ`.
pub fn saddle_node_gamma(p: &Params, rp: &RegParams, tol: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 2.0 / rp.delta);
    while hi - lo > tol {
        let m = 0.5 * (lo + hi);
        if min_yhat_dot_on_fold(m, p, rp) <= 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularization::phi::SotomayorTeixeira;
    use std::f64::consts::PI;

    fn setup() -> (Params, RegParams) {
        let p = Params::reference(2.0);
        let rp = RegParams::new(1e-3, 0.6, &p).unwrap();
        (p, rp)
    }

    #[test]
    fn coincides_with_pws_outside_layer() {
        let (p, rp) = setup();
        let z = State::new(0.1, 2.0 * rp.eps, 0.7);
        let f = regularized_rhs(&z, &p, &rp);
        let plus = crate::model::vector_field(&z, &p, crate::model::Branch::Plus);
        assert_eq!(f, plus);
        let z = State::new(0.1, -2.0 * rp.eps, 0.7);
        let minus = crate::model::vector_field(&z, &p, crate::model::Branch::Minus);
        assert_eq!(regularized_rhs(&z, &p, &rp), minus);
    }

    #[test]
    fn fast_is_scaled_slow() {
        let (p, rp) = setup();
        let (x, yh, th) = (0.05, -0.3, 1.2);
        let s = slow_rhs(x, yh, th, &p, &rp);
        let f = fast_rhs(x, yh, th, &p, &rp);
        for i in 0..3 {
            assert!((f[i] - rp.eps * s[i]).abs() < 1e-15 * (1.0 + f[i].abs()));
        }
        let layer = fast_rhs(x, yh, th, &p, &rp.with_eps(0.0));
        assert_eq!(layer[0], 0.0);
        assert_eq!(layer[2], 0.0);
    }

    #[test]
    fn root_counts() {
        let (p, rp) = setup();
        let r = critical_manifold_roots(0.0, &p, &rp.phi);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].branch, ManifoldBranch::Ca);
        assert!(r[0].yhat.abs() < 1e-13);

        let r = critical_manifold_roots(0.3, &p, &rp.phi);
        assert_eq!(r.len(), 1);

        let r = critical_manifold_roots(0.7, &p, &rp.phi);
        assert_eq!(r.iter().map(|q| q.branch).collect::<Vec<_>>(), vec![ManifoldBranch::CrMinus, ManifoldBranch::Ca]);
        let r = critical_manifold_roots(-0.7, &p, &rp.phi);
        assert_eq!(r.iter().map(|q| q.branch).collect::<Vec<_>>(), vec![ManifoldBranch::Ca, ManifoldBranch::CrPlus]);

        let r = critical_manifold_roots(1.1, &p, &rp.phi);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].branch, ManifoldBranch::Fold);
        assert!((r[0].yhat + 0.6).abs() < 1e-9);

        assert!(critical_manifold_roots(1.2, &p, &rp.phi).is_empty());
    }

    #[test]
    fn monotone_control_has_no_repelling_branch() {
        let (p, _) = setup();
        for k in 1..20 {
            let s = 0.4 + 0.7 * k as f64 / 20.0;
            assert!(critical_manifold_roots(s, &p, &SotomayorTeixeira).is_empty());
        }
        let r = critical_manifold_roots(0.2, &p, &SotomayorTeixeira);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].branch, ManifoldBranch::Ca);
    }

    #[test]
    fn reduced_flow_examples() {
        let (p, rp) = setup();
        let f = reduced_flow(0.0, FRAC_PI_2, 0.0, &p, &rp).unwrap();
        assert!(f.desingularized[0].abs() < 1e-15);
        assert!((f.desingularized[1] - p.mu_d * rp.phi.d).abs() < 1e-15);
        assert!(matches!(reduced_flow(0.6, 1.0, 0.0, &p, &rp), Err(Error::SingularLine { .. })));
        // Time is reversed where φ' < 0.
        let g = reduced_flow(-0.8, 1.0, 0.0, &p, &rp).unwrap();
        assert!(g.desingularized[1] < 0.0);
        assert_eq!(g.yhat_dot.signum(), -g.desingularized[0].signum());
    }

    #[test]
    fn base_case_singularities() {
        let (p, rp) = setup();
        let pts = folded_singularities(&p, &rp, 0.0).unwrap();
        assert_eq!(pts.len(), 4);
        let find = |yh: f64, th: f64| {
            pts.iter()
                .find(|q| (q.yhat - yh).abs() < 1e-15 && (q.theta - th).abs() < 1e-12)
                .unwrap()
                .class
        };
        assert_eq!(find(-0.6, FRAC_PI_2), CriticalClass::FoldedSaddle);
        assert_eq!(find(0.6, 3.0 * FRAC_PI_2), CriticalClass::FoldedSaddle);
        assert_eq!(find(0.6, FRAC_PI_2), CriticalClass::FoldedCenter);
        assert_eq!(find(-0.6, 3.0 * FRAC_PI_2), CriticalClass::FoldedCenter);
        let lam = (p.mu_d * rp.phi.d2phi(0.6).abs()).sqrt();
        for q in &pts {
            let e = q.eigenvalues[0];
            if q.class == CriticalClass::FoldedSaddle {
                assert!((e.re.abs() - lam).abs() < 1e-12 && e.im == 0.0);
            } else {
                assert!(e.re.abs() < 1e-15 && (e.im.abs() - lam).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn large_gamma_singularities() {
        let (p, rp) = setup();
        let pts = folded_singularities(&p, &rp, 0.5).unwrap();
        assert!(pts.iter().any(|q| q.class == CriticalClass::FoldedFocusStable));
        let pts = folded_singularities(&p, &rp, 1.666).unwrap();
        assert!(pts.iter().any(|q| q.class == CriticalClass::FoldedNodeStable));
        let pts = folded_singularities(&p, &rp, 1.0 / 0.6).unwrap();
        assert!(pts.iter().all(|q| q.class == CriticalClass::FoldedSaddleNode));
        assert!(pts.iter().any(|q| (q.theta.cos() - 1.0).abs() < 1e-12 || (q.theta - PI).abs() < 1e-12));
        assert!(matches!(folded_singularities(&p, &rp, 2.0), Err(Error::NoSingularities(_))));
    }

    #[test]
    fn collision_at_inverse_delta() {
        let (p, rp) = setup();
        let g = saddle_node_gamma(&p, &rp, 1e-9);
        assert!((g * rp.delta - 1.0).abs() < 1e-6);
        assert!((gamma_bound(&rp) - 40.824829046386306).abs() < 1e-9);
    }
}
