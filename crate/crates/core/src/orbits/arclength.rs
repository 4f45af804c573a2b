//! Pseudo-arclength continuation of `F(u, λ) = 0`, `F: ℝⁿ⁺¹ → ℝⁿ`, with the
//! parameter stored as the last component of `u`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArclengthOptions {
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_steps: usize,
    pub newton_tol: f64,
    pub newton_max: usize,
}

impl Default for ArclengthOptions {
    fn default() -> Self {
        Self {
            ds: 0.02,
            ds_min: 1e-6,
            ds_max: 0.2,
            max_steps: 2000,
            newton_tol: 1e-11,
            newton_max: 12,
        }
    }
}

/// What the caller decides about a freshly corrected point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict<R> {
    Accept,
    /// Reject the point and retry with half the step.
    Retry,
    /// Accept the point, then stop with `R`.
    Stop(R),
    /// Outside the admissible set: retry with a shorter step, then stop with `R`.
    Boundary(R),
}

#[derive(Debug, Clone)]
pub struct ArclengthRun<R> {
    pub points: Vec<DVector<f64>>,
    pub tangents: Vec<DVector<f64>>,
    /// Indices where the parameter component of the tangent changes sign.
    pub folds: Vec<usize>,
    pub end: ArclengthEnd<R>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArclengthEnd<R> {
    Boundary(R),
    Stopped(R),
    StepTooSmall,
    MaxSteps,
}

/// Null direction of the `n × (n+1)` Jacobian, oriented along `prev`.
pub fn tangent(j: &DMatrix<f64>, prev: &DVector<f64>) -> Result<DVector<f64>> {
    let n = j.nrows();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    a.view_mut((0, 0), (n, n + 1)).copy_from(j);
    a.row_mut(n).copy_from(&prev.transpose());
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let t = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("arclength tangent".into()))?;
    let norm = t.norm();
    Ok(t / norm)
}

/// Newton correction on `{F(u) = 0, t·(u − u_pred) = 0}`; returns `(u, iterations)`.
///
/// Accepts on the residual before stepping: on stiff problems a tiny
/// residual can still ask for a step that leaves the linear regime. Steps
/// that increase the residual are halved.
fn correct<F>(f: &mut F, pred: &DVector<f64>, t: &DVector<f64>, opts: &ArclengthOptions) -> Result<(DVector<f64>, usize)>
where
    F: FnMut(&DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>,
{
    let n = pred.len() - 1;
    let mut u = pred.clone();
    let (mut r, mut j) = f(&u)?;
    for it in 0..opts.newton_max {
        let arc = t.dot(&(&u - pred));
        if r.amax().max(arc.abs()) <= opts.newton_tol {
            return Ok((u, it));
        }
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n + 1)).copy_from(&j);
        a.row_mut(n).copy_from(&t.transpose());
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&r);
        rhs[n] = arc;
        let mut du = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem("arclength corrector".into()))?;
        let before = r.amax().max(arc.abs());
        let mut next = None;
        for _ in 0..6 {
            let v = &u - &du;
            if v.iter().all(|x| x.is_finite()) {
                if let Ok((rv, jv)) = f(&v) {
                    let after = rv.amax().max(t.dot(&(&v - pred)).abs());
                    if after < before {
                        next = Some((v, rv, jv));
                        break;
                    }
                }
            }
            du *= 0.5;
        }
        let Some((v, rv, jv)) = next else { break };
        let small = (&v - &u).amax() <= opts.newton_tol * (1.0 + v.amax());
        (u, r, j) = (v, rv, jv);
        if small && r.amax() <= 1e3 * opts.newton_tol {
            return Ok((u, it + 1));
        }
    }
    Err(Error::NewtonDivergence("arclength corrector".into()))
}

/// Unit vector along the parameter axis with the sign of `direction`.
pub fn parameter_direction(n1: usize, direction: f64) -> DVector<f64> {
    let mut e = DVector::zeros(n1);
    e[n1 - 1] = direction.signum();
    e
}

/// Continues from a converged `u0`, starting along the tangent that points
/// the same way as `hint`.
///
/// `f` returns `(F(u), ∂F/∂u)`; `judge` accepts or rejects each new point.
pub fn continue_curve<F, J, R>(
    mut f: F,
    u0: DVector<f64>,
    hint: &DVector<f64>,
    opts: &ArclengthOptions,
    mut judge: J,
) -> Result<ArclengthRun<R>>
where
    F: FnMut(&DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>,
    J: FnMut(&DVector<f64>) -> Verdict<R>,
{
    let n1 = u0.len();
    let (_, j0) = f(&u0)?;
    let mut t = tangent(&j0, hint)?;
    if t.dot(hint) < 0.0 {
        t = -t;
    }
    let mut points = vec![u0];
    let mut tangents = vec![t.clone()];
    let mut folds = Vec::new();
    let mut ds = opts.ds;
    let mut pending: Option<R> = None;
    let mut prev: Option<(DVector<f64>, f64)> = None;
    for _ in 0..opts.max_steps {
        let u = points.last().unwrap().clone();
        let mut pred = &u + &t * ds;
        if let Some((tp, h)) = &prev {
            pred += (&t - tp) * (0.5 * ds * ds / h);
        }
        let outcome = correct(&mut f, &pred, &t, opts);
        // A corrector that lands far from the predictor has jumped branches.
        let (un, iters) = match outcome {
            Ok(v) if (&v.0 - &u).norm() <= 2.0 * ds => v,
            _ => {
                ds *= 0.5;
                if ds < opts.ds_min {
                    return Ok(ArclengthRun { points, tangents, folds, end: ArclengthEnd::StepTooSmall });
                }
                continue;
            }
        };
        let mut stop = None;
        match judge(&un) {
            Verdict::Stop(r) => stop = Some(r),
            Verdict::Boundary(r) => {
                ds *= 0.5;
                if ds < opts.ds_min {
                    return Ok(ArclengthRun { points, tangents, folds, end: ArclengthEnd::Boundary(r) });
                }
                pending = Some(r);
                continue;
            }
            Verdict::Retry => {
                ds *= 0.5;
                if ds < opts.ds_min {
                    return Ok(ArclengthRun { points, tangents, folds, end: ArclengthEnd::StepTooSmall });
                }
                continue;
            }
            Verdict::Accept => {}
        }
        let (_, jn) = f(&un)?;
        let tn = tangent(&jn, &t)?;
        if tn[n1 - 1] * t[n1 - 1] < 0.0 {
            folds.push(points.len());
        }
        prev = Some((t.clone(), (&un - &u).norm()));
        points.push(un);
        tangents.push(tn.clone());
        t = tn;
        if let Some(r) = stop {
            return Ok(ArclengthRun { points, tangents, folds, end: ArclengthEnd::Stopped(r) });
        }
        // Near a boundary keep creeping toward it with the reduced step.
        if pending.is_none() {
            if iters <= 3 {
                ds = (ds * 1.5).min(opts.ds_max);
            } else if iters >= 6 {
                ds *= 0.7;
            }
        }
    }
    Ok(ArclengthRun { points, tangents, folds, end: ArclengthEnd::MaxSteps })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The unit circle `x² + λ² = 1` folds in λ at `λ = 1`.
    #[test]
    fn traces_circle_through_fold() {
        let f = |u: &DVector<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
            let r = DVector::from_vec(vec![u[0] * u[0] + u[1] * u[1] - 1.0]);
            let j = DMatrix::from_row_slice(1, 2, &[2.0 * u[0], 2.0 * u[1]]);
            Ok((r, j))
        };
        let opts = ArclengthOptions { ds: 0.05, ds_max: 0.1, max_steps: 200, ..Default::default() };
        let run = continue_curve(f, DVector::from_vec(vec![1.0, 0.0]), &parameter_direction(2, 1.0), &opts, |u| {
            if u[0] < -0.5 {
                Verdict::Boundary("left")
            } else {
                Verdict::Accept
            }
        })
        .unwrap();
        for u in &run.points {
            assert!((u[0].hypot(u[1]) - 1.0).abs() < 1e-10);
        }
        // λ increases to the fold at λ = 1, then decreases.
        assert_eq!(run.folds.len(), 1);
        assert_eq!(run.end, ArclengthEnd::Boundary("left"));
        assert!(run.points.last().unwrap()[0] < -0.49);
    }
}
