//! Continuation of the regularized family `Π_ε` and the checks made on it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;

use super::arclength::{continue_curve, ArclengthEnd, ArclengthOptions, Verdict};
use super::branch::{BranchEnd, BranchLabel, BranchPoint, OrbitBranch};
use super::pws::find_slipstick;
use super::shooting::{
    continuation_system, finish, max_segment_expansion, pack, remesh, resample, shoot, shoot_periodic_regularized,
    RegOrbit, Seed, SegOut, ShootingGuess, ShootingOptions,
};
use crate::error::{Error, Result};
use crate::model::Params;
use crate::regularization::RegParams;
use crate::stats::{fit_line, LineFit};

/// Largest accepted `|log|` change of `max|y|` between neighbouring points.
const MAX_AMPLITUDE_JUMP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegContinuation {
    pub arclength: ArclengthOptions,
    pub shooting: ShootingOptions,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub max_points: usize,
    /// Stop once γ has turned and come back below this value.
    pub return_gamma: Option<f64>,
    /// Remesh after this many accepted points even if not forced to.
    pub remesh_every: usize,
}

impl Default for RegContinuation {
    fn default() -> Self {
        Self {
            arclength: ArclengthOptions {
                ds: 0.05,
                ds_min: 1e-6,
                ds_max: 0.5,
                max_steps: 400,
                newton_tol: 1e-10,
                newton_max: 10,
            },
            shooting: ShootingOptions {
                rtol: 1e-9,
                ..ShootingOptions::default()
            },
            gamma_min: 0.5,
            gamma_max: 45.0,
            max_points: 400,
            return_gamma: None,
            remesh_every: 12,
        }
    }
}

/// A branch of `Π_ε` with the orbits behind each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegBranch {
    pub eps: f64,
    pub branch: OrbitBranch,
    pub orbits: Vec<RegOrbit>,
}

impl RegBranch {
    pub fn fold_gammas(&self) -> Vec<f64> {
        self.branch.folds.iter().map(|&i| self.orbits[i].gamma).collect()
    }

    /// Orbits with the given label, in continuation order.
    pub fn labelled(&self, label: BranchLabel) -> impl Iterator<Item = &RegOrbit> {
        self.branch
            .points
            .iter()
            .zip(&self.orbits)
            .filter(move |(q, _)| q.label == label)
            .map(|(_, o)| o)
    }
}

/// Label of the regular family an orbit at `gamma` is seeded on.
pub fn regular_label(gamma: f64) -> BranchLabel {
    if gamma < 1.0 {
        BranchLabel::PiEpsLeft
    } else {
        BranchLabel::PiEpsRight
    }
}

/// Points up to the first fold belong to the seed's regular family, points
/// between the first and second fold to the canard segment, the rest to the
/// other regular family.
fn segment_label(seed: BranchLabel, folds_before: usize) -> BranchLabel {
    let other = match seed {
        BranchLabel::PiEpsLeft => BranchLabel::PiEpsRight,
        _ => BranchLabel::PiEpsLeft,
    };
    match folds_before {
        0 => seed,
        1 => BranchLabel::PiEpsCenter,
        _ => other,
    }
}

fn to_point(orbit: &RegOrbit, label: BranchLabel) -> BranchPoint {
    let slip = orbit.summary.slip;
    BranchPoint {
        gamma: orbit.gamma,
        theta0: slip.map_or(f64::NAN, |s| s.theta0),
        theta_star: slip.map_or(f64::NAN, |s| s.theta_star),
        x0: slip.map_or(f64::NAN, |s| s.x0),
        max_abs_y: orbit.summary.max_abs_y,
        floquet: Some(orbit.floquet),
        label,
    }
}

#[derive(Debug, Clone, Copy)]
enum Halt {
    Remesh,
    End(BranchEnd),
}

/// Pseudo-arclength continuation of `Π_ε` from `seed` in the direction of
/// increasing (`direction > 0`) or decreasing γ. The mesh is rebuilt as the
/// orbit changes shape, so the run is a sequence of chunks joined at the
/// remeshed points.
pub fn continue_branch_regularized(seed: &RegOrbit, direction: f64, p: &Params, rp: &RegParams, o: &RegContinuation) -> Result<RegBranch> {
    let rp = rp.with_eps(seed.eps);
    let so = &o.shooting;
    let w = [seed.gamma * seed.gamma, 10.0];
    let mut orbits = vec![seed.clone()];
    let mut guess = seed.guess();
    let mut hint = {
        let mut h = DVector::zeros(2 * guess.states.len() + 1);
        h[2 * guess.states.len()] = direction.signum();
        h
    };
    let mut ds = o.arclength.ds;
    let sign = direction.signum();
    let mut extreme = seed.gamma * sign;
    let end = loop {
        let phases = guess.phases.clone();
        let cache: RefCell<Option<(DVector<f64>, ShootingGuess, Vec<SegOut>)>> = RefCell::new(None);
        let f = |u: &DVector<f64>| {
            let (r, j, g, segs) = continuation_system(&phases, u, w, p, &rp, so)?;
            *cache.borrow_mut() = Some((u.clone(), g, segs));
            Ok((r, j))
        };
        let base = orbits.len() - 1;
        let mut accepted = 0usize;
        let mut last_amp = orbits.last().unwrap().summary.max_abs_y;
        let mut chunk: Vec<RegOrbit> = Vec::new();
        let judge = |u: &DVector<f64>| -> Verdict<Halt> {
            let hit = cache.borrow().as_ref().filter(|c| c.0 == *u).map(|c| (c.1.clone(), c.2.clone()));
            let Some((g, segs)) = hit else {
                return Verdict::Retry;
            };
            let forced = max_segment_expansion(&segs) > 2.0 * so.max_expansion;
            let Ok(orbit) = finish(g, &segs, p, &rp, so) else {
                return Verdict::Retry;
            };
            // Every orbit of the family slips; losing the slip phase or a
            // sudden change of amplitude means the corrector changed family.
            let amp = orbit.summary.max_abs_y;
            if orbit.summary.slip.is_none() || (amp / last_amp).ln().abs() > MAX_AMPLITUDE_JUMP {
                return Verdict::Retry;
            }
            last_amp = amp;
            let gamma = orbit.gamma;
            chunk.push(orbit);
            accepted += 1;
            extreme = extreme.max(gamma * sign);
            let returned = o.return_gamma.is_some_and(|g| gamma * sign < extreme && (gamma - g) * sign < 0.0);
            if gamma < o.gamma_min || gamma > o.gamma_max || returned {
                Verdict::Stop(Halt::End(BranchEnd::GammaLimit))
            } else if base + accepted >= o.max_points {
                Verdict::Stop(Halt::End(BranchEnd::MaxSteps))
            } else if forced || accepted >= o.remesh_every {
                Verdict::Stop(Halt::Remesh)
            } else {
                Verdict::Accept
            }
        };
        let opts = ArclengthOptions { ds, ..o.arclength };
        let run = continue_curve(f, pack(&guess, w), &hint, &opts, judge)?;
        let n = run.points.len();
        if n >= 2 {
            ds = (&run.points[n - 1] - &run.points[n - 2]).norm().clamp(o.arclength.ds_min, o.arclength.ds_max);
        }
        orbits.extend(chunk);
        match run.end {
            ArclengthEnd::Stopped(Halt::Remesh) => {
                let last = orbits.last().unwrap();
                let prev = &orbits[orbits.len() - 2];
                let fresh = remesh(&last.guess(), p, &rp, so)?;
                let before = resample(&prev.guess(), &fresh.phases, p, &rp, so)?;
                hint = pack(&fresh, w) - pack(&before, w);
                guess = reconverge(&fresh, &hint, w, p, &rp, o)?;
            }
            ArclengthEnd::Stopped(Halt::End(e)) | ArclengthEnd::Boundary(Halt::End(e)) => break e,
            ArclengthEnd::Boundary(Halt::Remesh) => break BranchEnd::Inadmissible,
            ArclengthEnd::StepTooSmall => break BranchEnd::StepTooSmall,
            ArclengthEnd::MaxSteps => break BranchEnd::MaxSteps,
        }
    };
    // From the γ sequence rather than the tangents, which restart at each remesh.
    let folds: Vec<usize> = (1..orbits.len().saturating_sub(1))
        .filter(|&i| (orbits[i].gamma - orbits[i - 1].gamma) * (orbits[i + 1].gamma - orbits[i].gamma) < 0.0)
        .collect();
    let seed_label = regular_label(seed.gamma);
    let points = orbits
        .iter()
        .enumerate()
        .map(|(i, q)| to_point(q, segment_label(seed_label, folds.iter().filter(|&&f| f < i).count())))
        .collect();
    Ok(RegBranch {
        eps: rp.eps,
        branch: OrbitBranch { points, folds, ends: [BranchEnd::GammaLimit, end] },
        orbits,
    })
}

/// Newton on a remeshed point with γ free, bordered by the secant `hint`.
/// Interpolating onto a new mesh is not exact along expanding stretches,
/// and near a fold in γ a fixed-γ solve would be singular.
fn reconverge(guess: &ShootingGuess, hint: &DVector<f64>, w: [f64; 2], p: &Params, rp: &RegParams, o: &RegContinuation) -> Result<ShootingGuess> {
    let mut u = pack(guess, w);
    for _ in 0..o.arclength.newton_max {
        let (r, j, g, _) = continuation_system(&guess.phases, &u, w, p, rp, &o.shooting)?;
        if r.amax() <= o.shooting.newton_tol {
            return Ok(g);
        }
        let n = r.len();
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n + 1)).copy_from(&j);
        a.row_mut(n).copy_from(&hint.transpose());
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&r);
        let du = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem("remesh correction".into()))?;
        u -= du;
    }
    Err(Error::NewtonDivergence("remesh correction".into()))
}

/// The orbit with the given label at exactly `gamma`, from the two branch
/// points that bracket it.
pub fn orbit_at_gamma(branch: &RegBranch, label: BranchLabel, gamma: f64, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<RegOrbit> {
    let rp = rp.with_eps(branch.eps);
    let pts = &branch.branch.points;
    let i = (1..pts.len())
        .find(|&i| {
            pts[i - 1].label == label
                && pts[i].label == label
                && (pts[i - 1].gamma - gamma) * (pts[i].gamma - gamma) <= 0.0
        })
        .ok_or_else(|| Error::NoIntersection(format!("no {} orbit brackets gamma={gamma}", label.as_str())))?;
    let (a, b) = (&branch.orbits[i - 1], &branch.orbits[i]);
    let gb = b.guess();
    let ga = if a.phases == b.phases {
        a.guess()
    } else {
        resample(&a.guess(), &gb.phases, &p.with_gamma(a.gamma), &rp, o)?
    };
    let s = if b.gamma == a.gamma { 0.0 } else { (gamma - a.gamma) / (b.gamma - a.gamma) };
    let guess = ShootingGuess {
        gamma,
        phases: gb.phases.clone(),
        states: ga
            .states
            .iter()
            .zip(&gb.states)
            .map(|(u, v)| [u[0] + s * (v[0] - u[0]), u[1] + s * (v[1] - u[1])])
            .collect(),
    };
    shoot(&guess, &p.with_gamma(gamma), &rp, o)
}

/// Regular orbit at `gamma` seeded from the discontinuous slip-stick
/// orbits there.
pub fn seed_regularized(gamma: f64, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<RegOrbit> {
    let pg = p.with_gamma(gamma);
    let mut last = Error::NoIntersection(format!("no slip-stick orbit at gamma={gamma}"));
    for sol in find_slipstick(gamma, &pg, 24) {
        match shoot_periodic_regularized(&Seed::Pws { sol, relax_periods: 3 }, &pg, rp, o) {
            Ok(q) => return Ok(q),
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Continues from a seed at `seed_gamma` until the family labelled `label`
/// passes `gamma`, then solves for the orbit there.
pub fn orbit_on_family(
    seed_gamma: f64,
    direction: f64,
    label: BranchLabel,
    gamma: f64,
    p: &Params,
    rp: &RegParams,
    o: &RegContinuation,
) -> Result<RegOrbit> {
    let seed = seed_regularized(seed_gamma, p, rp, &o.shooting)?;
    let margin = 0.02 * gamma;
    let opts = if label == regular_label(seed_gamma) && direction > 0.0 {
        RegContinuation { gamma_max: o.gamma_max.min(gamma + margin), return_gamma: None, ..*o }
    } else if label == regular_label(seed_gamma) {
        RegContinuation { gamma_min: o.gamma_min.max(gamma - margin), return_gamma: None, ..*o }
    } else {
        RegContinuation {
            return_gamma: Some(gamma - direction.signum() * margin),
            ..*o
        }
    };
    let branch = continue_branch_regularized(&seed, direction, p, rp, &opts)?;
    orbit_at_gamma(&branch, label, gamma, p, rp, &o.shooting)
}

/// Growth of the largest multiplier with `1/ε` at fixed γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierFit {
    pub gamma: f64,
    pub eps: Vec<f64>,
    pub log_mu3: Vec<f64>,
    /// `log|μ₃|` against `1/ε`.
    pub fit: Option<LineFit>,
}

/// Fits `log|μ₃|` against `1/ε` over orbits computed at one γ.
pub fn multiplier_fit(orbits: &[RegOrbit]) -> MultiplierFit {
    let eps: Vec<f64> = orbits.iter().map(|q| q.eps).collect();
    let inv: Vec<f64> = eps.iter().map(|e| 1.0 / e).collect();
    let log_mu3: Vec<f64> = orbits.iter().map(|q| q.floquet.leading().log_abs).collect();
    MultiplierFit {
        gamma: orbits.first().map_or(f64::NAN, |q| q.gamma),
        fit: fit_line(&inv, &log_mu3),
        eps,
        log_mu3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplosionReport {
    /// Largest and smallest `max|y|` on the canard segment.
    pub center_amplitude: (f64, f64),
    /// `max|y|` of the regular orbits adjacent to the canard segment.
    pub neighbor_amplitude: Vec<f64>,
    /// Largest canard-segment amplitude over the largest neighbouring one.
    pub amplitude_ratio: f64,
    pub amplitude_bounded: bool,
    pub canard_fit: Option<MultiplierFit>,
    pub regular_fit: Option<MultiplierFit>,
    /// Canard slope positive with a good fit, and the regular one much smaller.
    pub multiplier_explodes: bool,
}

/// Checks that the canard segment grows in its multiplier but not in its
/// amplitude.
pub fn no_canard_explosion_check(branch: &RegBranch, canard_fit: Option<MultiplierFit>, regular_fit: Option<MultiplierFit>) -> Result<ExplosionReport> {
    let pts = &branch.branch.points;
    let center: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].label == BranchLabel::PiEpsCenter).collect();
    let (Some(&first), Some(&last)) = (center.first(), center.last()) else {
        return Err(Error::NoIntersection("branch has no canard segment".into()));
    };
    let mut neighbors = Vec::new();
    if first > 0 {
        neighbors.push(pts[first - 1].max_abs_y);
    }
    if last + 1 < pts.len() {
        neighbors.push(pts[last + 1].max_abs_y);
    }
    let amps: Vec<f64> = center.iter().map(|&i| pts[i].max_abs_y).collect();
    let hi = amps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = amps.iter().cloned().fold(f64::INFINITY, f64::min);
    // Only growth counts: the amplitude shrinks along the segment as the
    // canards lengthen.
    let ratio = hi / neighbors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let slope = |f: &Option<MultiplierFit>| f.as_ref().and_then(|m| m.fit).map(|l| (l.slope, l.r2));
    let multiplier_explodes = match (slope(&canard_fit), slope(&regular_fit)) {
        (Some((s, r2)), reg) => s > 0.0 && r2 > 0.9 && reg.is_none_or(|(sr, _)| sr.abs() < 0.5 * s),
        _ => false,
    };
    Ok(ExplosionReport {
        center_amplitude: (hi, lo),
        neighbor_amplitude: neighbors.clone(),
        amplitude_ratio: ratio,
        amplitude_bounded: !neighbors.is_empty() && ratio <= 2.0,
        canard_fit,
        regular_fit,
        multiplier_explodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn left_piece(eps: f64) -> (RegBranch, Params, RegParams, RegContinuation) {
        let p = Params::reference(0.5);
        let rp = RegParams::new(eps, 0.6, &p).unwrap();
        let o = RegContinuation { gamma_min: 0.05, return_gamma: Some(0.62), max_points: 1000, ..Default::default() };
        let seed = seed_regularized(0.5, &p, &rp, &o.shooting).unwrap();
        let b = continue_branch_regularized(&seed, -1.0, &p, &rp, &o).unwrap();
        (b, p, rp, o)
    }

    #[test]
    fn labels_follow_folds() {
        use BranchLabel::*;
        assert_eq!(segment_label(PiEpsLeft, 0), PiEpsLeft);
        assert_eq!(segment_label(PiEpsLeft, 1), PiEpsCenter);
        assert_eq!(segment_label(PiEpsLeft, 2), PiEpsRight);
        assert_eq!(segment_label(PiEpsRight, 2), PiEpsLeft);
    }

    #[test]
    fn left_family_folds_into_saddle_canard_orbits() {
        let (b, p, rp, o) = left_piece(2e-3);
        let folds = b.fold_gammas();
        assert_eq!(folds.len(), 1);
        assert!(folds[0] > 0.45 && folds[0] < 0.5, "{folds:?}");
        let centers: Vec<&RegOrbit> = b.labelled(BranchLabel::PiEpsCenter).collect();
        assert!(centers.len() > 5);
        let last = centers.last().unwrap();
        assert!(last.floquet.leading().log_abs > 10.0);
        assert!(last.summary.canard_expansion > 10.0);
        for q in b.labelled(BranchLabel::PiEpsLeft).take(3) {
            assert!(q.floquet.leading().log_abs < 0.0);
        }
        let q = orbit_at_gamma(&b, BranchLabel::PiEpsCenter, 0.6, &p, &rp, &o.shooting).unwrap();
        assert_eq!(q.gamma, 0.6);
        assert!(q.residual <= o.shooting.newton_tol);
        let r = no_canard_explosion_check(&b, None, None).unwrap();
        assert!(r.amplitude_bounded, "{r:?}");
        assert!(!r.multiplier_explodes);
    }

    #[test]
    fn missing_bracket_is_an_error() {
        let (b, p, rp, o) = left_piece(2e-3);
        assert!(orbit_at_gamma(&b, BranchLabel::PiEpsCenter, 5.0, &p, &rp, &o.shooting).is_err());
    }
}
