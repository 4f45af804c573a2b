//! Integration of the regularized system through the ε-layer, the
//! convergence study against stiction solutions, and the sticking limit cycle.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::field::regularized_rhs;
use super::phi::{RegParams, Regularizer};
use crate::error::{Error, Result};
use crate::model::{Params, State};
use crate::ode::{self, Control, OdeOptions};
use crate::par;
use crate::pws::{integrate_stiction, is_regular, BranchPolicy, StictionOptions};
use crate::stats::{fit_loglog, LineFit};

/// Smallest admissible step relative to ε.
const H_MIN_REL: f64 = 1e-4;

/// A regularized trajectory sampled at every accepted step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTrajectory {
    pub samples: Vec<(f64, State)>,
    pub rejected: usize,
}

impl RegTrajectory {
    pub fn final_state(&self) -> State {
        self.samples.last().expect("non-empty").1
    }

    /// Linear interpolation between samples (θ unwrapped).
    pub fn state_at(&self, t: f64) -> Option<State> {
        let s = &self.samples;
        if s.is_empty() || t < s[0].0 || t > s[s.len() - 1].0 {
            return None;
        }
        let i = s.partition_point(|q| q.0 < t);
        if i == 0 {
            return Some(s[0].1);
        }
        let (ta, a) = s[i - 1];
        let (tb, b) = s[i];
        let w = if tb > ta { (t - ta) / (tb - ta) } else { 1.0 };
        Some(State {
            x: a.x + w * (b.x - a.x),
            y: a.y + w * (b.y - a.y),
            theta: a.theta + w * (b.theta - a.theta),
        })
    }
}

fn stiff_opts(rp: &RegParams, tol: f64) -> OdeOptions {
    OdeOptions {
        h_min: rp.eps * H_MIN_REL,
        ..OdeOptions::with_tol(tol, tol * rp.eps.min(1.0))
    }
}

/// Integrates `Z_ε` from `z0` over `[0, T]`. θ is kept unwrapped.
///
/// Explicit Dormand–Prince with local error control: on `S_a,ε` the step
/// settles at the stability limit, of order ε, and never below `ε·1e-4`.
pub fn stiff_integrate(z0: &State, t: f64, p: &Params, rp: &RegParams, tol: f64) -> Result<RegTrajectory> {
    if !(t >= 0.0) {
        return Err(Error::BackwardTime(t));
    }
    let pp = *p;
    let rr = *rp;
    let f = move |_t: f64, u: &[f64; 3]| {
        regularized_rhs(&State { x: u[0], y: u[1], theta: u[2] }, &pp, &rr).to_array()
    };
    let mut samples = vec![(0.0, *z0)];
    let out = ode::integrate(f, 0.0, z0.to_array(), t, &stiff_opts(rp, tol), |st| {
        samples.push((st.t1, State { x: st.y1[0], y: st.y1[1], theta: st.y1[2] }));
        Control::Continue
    })
    .map_err(|e| match e {
        Error::StepFailure(msg) => Error::StepFailure(format!("regularized eps={}: {msg}", rp.eps)),
        other => other,
    })?;
    Ok(RegTrajectory {
        samples,
        rejected: out.rejected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosenessRow {
    pub eps: f64,
    /// `sup_t |(x, y)_ε(t) − (x, y)(t)|` over accepted steps.
    pub sup_distance: f64,
    pub t_at_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessStudy {
    pub rows: Vec<ClosenessRow>,
    /// Log-log fit of `d` against `ε`.
    pub fit: Option<LineFit>,
}

/// Sup-distance between regularized and stiction trajectories from the same
/// initial point, for each ε, and the convergence exponent.
pub fn closeness_study(z0: &State, t: f64, p: &Params, rp_template: &RegParams, eps: &[f64], tol: f64) -> Result<ClosenessStudy> {
    let run = integrate_stiction(z0, t, BranchPolicy::StickFirst, p, &StictionOptions::default())?;
    let traj = run.primary();
    if !is_regular(traj) {
        let ev = traj
            .events
            .iter()
            .find_map(|e| match e.kind {
                crate::pws::EventKind::SingularHit(s) => Some((s, e.time)),
                _ => None,
            })
            .expect("irregular trajectory has a singular hit");
        return Err(Error::SingularSolution { set: ev.0.name(), t: ev.1 });
    }
    let rows = par::par_map(eps.to_vec(), |e| -> Result<ClosenessRow> {
        let reg = stiff_integrate(z0, t, p, &rp_template.with_eps(e), tol)?;
        let mut best = ClosenessRow { eps: e, sup_distance: 0.0, t_at_sup: 0.0 };
        for &(ti, zr) in &reg.samples {
            let zs = traj.state_at(ti.min(traj.t_end())).expect("inside horizon");
            let d = (zr.x - zs.x).hypot(zr.y - zs.y);
            if d > best.sup_distance {
                best.sup_distance = d;
                best.t_at_sup = ti;
            }
        }
        Ok(best)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let fit = fit_loglog(
        &rows.iter().map(|r| r.eps).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.sup_distance).collect::<Vec<_>>(),
    );
    Ok(ClosenessStudy { rows, fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StickingCycle {
    pub eps: f64,
    /// Fixed point of the return map to `θ ≡ 0`.
    pub x0: f64,
    pub y0: f64,
    /// Eigenvalues of the 2×2 return-map Jacobian, largest modulus first.
    pub multipliers: [f64; 2],
    pub iterations: usize,
}

impl StickingCycle {
    /// Derivative of the return map along the slow manifold.
    pub fn slow_multiplier(&self) -> f64 {
        self.multipliers[0]
    }
}

/// One period of `Z_ε` with its variational equations, from `θ = 0`.
fn period_map(x: f64, y: f64, p: &Params, rp: &RegParams) -> Result<([f64; 2], [[f64; 2]; 2])> {
    let g2 = p.gamma2();
    let (mu_d, eps, phi) = (p.mu_d, rp.eps, rp.phi);
    let f = move |t: f64, u: &[f64; 6]| {
        let yh = u[1] / eps;
        let a = -mu_d * phi.dphi(yh) / eps;
        // Columns (u[2], u[3]) and (u[4], u[5]) of the fundamental matrix.
        [
            u[1],
            -(g2 * u[0] + t.sin()) - mu_d * phi.phi(yh),
            u[3],
            -g2 * u[2] + a * u[3],
            u[5],
            -g2 * u[4] + a * u[5],
        ]
    };
    let opts = stiff_opts(rp, 1e-12);
    let end = ode::solve(f, 0.0, [x, y, 1.0, 0.0, 0.0, 1.0], TAU, &opts)?;
    Ok(([end[0], end[1]], [[end[2], end[4]], [end[3], end[5]]]))
}

/// Attracting 2π-periodic orbit on `S_a,ε` near `(x, θ) = (0, 0)`, by Newton
/// on the return map to `θ ≡ 0`.
pub fn sticking_limit_cycle(p: &Params, rp: &RegParams) -> Result<StickingCycle> {
    if p.mu_s <= 1.0 {
        return Err(Error::NoStick(p.mu_s));
    }
    let (mut x, mut y) = (0.0, 0.0);
    for it in 1..=30 {
        let (pz, m) = period_map(x, y, p, rp)?;
        let r = [pz[0] - x, pz[1] - y];
        let a = [[m[0][0] - 1.0, m[0][1]], [m[1][0], m[1][1] - 1.0]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det.abs() < 1e-300 {
            return Err(Error::SingularSystem("return map minus identity".into()));
        }
        let dx = (r[0] * a[1][1] - r[1] * a[0][1]) / det;
        let dy = (a[0][0] * r[1] - a[1][0] * r[0]) / det;
        x -= dx;
        y -= dy;
        if !(x.is_finite() && y.is_finite()) {
            break;
        }
        if dx.abs() <= 1e-14 + 1e-10 * x.abs() && dy.abs() <= 1e-14 * rp.eps.max(1e-3) + 1e-10 * y.abs() {
            let (_, m) = period_map(x, y, p, rp)?;
            let tr = m[0][0] + m[1][1];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
            let (l1, l2) = (0.5 * (tr + disc), 0.5 * (tr - disc));
            let multipliers = if l1.abs() >= l2.abs() { [l1, l2] } else { [l2, l1] };
            return Ok(StickingCycle { eps: rp.eps, x0: x, y0: y, multipliers, iterations: it });
        }
    }
    Err(Error::NewtonDivergence(format!("sticking cycle at eps={}", rp.eps)))
}
