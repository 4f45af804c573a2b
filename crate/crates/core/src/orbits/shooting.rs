//! Periodic orbits of the regularized system by multiple shooting over half
//! a period, closed with the symmetry: `φ_π(z) = S(z)`.
//!
//! Segment boundaries sit at fixed phases (θ' = 1 makes the phase the time).
//! They are placed so that no segment expands perturbations by more than
//! `e^L`; on canard segments this needs many short segments, since the
//! repelling slow manifold expands at a rate of order `1/ε`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::floquet::{FloquetData, Multiplier};
use super::pws::{slip_arc, SlipStickSolution};
use crate::error::{Error, Result};
use crate::model::{wrap_angle, xi, Params};
use crate::ode::{self, Control, OdeOptions, Step};
use crate::par;
use crate::regularization::{stiff_integrate, RegParams, Regularizer};

/// Segment state: `x, y`, fundamental matrix (columns), `∂(x, y)/∂γ`,
/// `log det Φ`.
const NV: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingOptions {
    /// Largest admissible `log` expansion per segment.
    pub max_expansion: f64,
    /// Longest segment in phase.
    pub max_segment: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub rtol: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            max_expansion: 6.0,
            max_segment: PI / 8.0,
            newton_tol: 1e-10,
            newton_max: 30,
            rtol: 1e-10,
        }
    }
}

/// Phases and states at the segment starts, plus γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingGuess {
    pub gamma: f64,
    /// `m + 1` phases; the last is the first plus π.
    pub phases: Vec<f64>,
    pub states: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegOrbit {
    pub gamma: f64,
    pub eps: f64,
    pub phases: Vec<f64>,
    pub states: Vec<[f64; 2]>,
    pub floquet: FloquetData,
    pub residual: f64,
    pub iterations: usize,
    /// Log expansion of each segment.
    pub segment_expansion: Vec<f64>,
    pub summary: OrbitSummary,
    pub warnings: Vec<String>,
}

impl RegOrbit {
    pub fn guess(&self) -> ShootingGuess {
        ShootingGuess {
            gamma: self.gamma,
            phases: self.phases.clone(),
            states: self.states.clone(),
        }
    }

    pub fn segments(&self) -> usize {
        self.states.len()
    }
}

/// Shape descriptors of a regularized orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSummary {
    /// `None` for orbits that never leave the layer.
    pub slip: Option<SlipOnset>,
    pub max_abs_y: f64,
    /// Largest log expansion accumulated in one passage near the repelling
    /// branches. Of order `1/ε` on orbits with canard segments.
    pub canard_expansion: f64,
}

/// The slip onset in the terms used for discontinuous orbits: where `y`
/// leaves the layer `|y| ≤ ε` downward, and the length of the preceding
/// stay in it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipOnset {
    pub theta0: f64,
    pub theta_star: f64,
    pub x0: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SegOut {
    end: [f64; 2],
    phi: [[f64; 2]; 2],
    dgamma: [f64; 2],
    logdet: f64,
    expansion: f64,
}

fn seg_rhs(t: f64, u: &[f64; NV], p: &Params, rp: &RegParams) -> [f64; NV] {
    let eps = rp.eps;
    let yh = u[1] / eps;
    let a = -p.mu_d * rp.phi.dphi(yh) / eps;
    let g2 = p.gamma2();
    [
        u[1],
        -(g2 * u[0] + t.sin()) - p.mu_d * rp.phi.phi(yh),
        u[3],
        -g2 * u[2] + a * u[3],
        u[5],
        -g2 * u[4] + a * u[5],
        u[7],
        -g2 * u[6] + a * u[7] - 2.0 * p.gamma * u[0],
        a,
    ]
}

/// Local expansion rate `max(0, −μ_d φ'(ŷ)/ε)`. Integrated by quadrature
/// over accepted steps: as an ODE component its kink at `ŷ = ±δ` would
/// drive the step size to zero.
fn expansion_rate(y: f64, p: &Params, rp: &RegParams) -> f64 {
    (-p.mu_d * rp.phi.dphi(y / rp.eps) / rp.eps).max(0.0)
}

fn step_expansion(st: &Step<NV>, p: &Params, rp: &RegParams) -> f64 {
    let tm = 0.5 * (st.t0 + st.t1);
    let r0 = expansion_rate(st.y0[1], p, rp);
    let rm = expansion_rate(st.eval(tm)[1], p, rp);
    let r1 = expansion_rate(st.y1[1], p, rp);
    (st.t1 - st.t0) * (r0 + 4.0 * rm + r1) / 6.0
}

/// One accepted step with the accumulated expansion at both ends.
#[derive(Debug, Clone)]
struct Piece {
    step: Step<NV>,
    e0: f64,
    e1: f64,
}

fn seg_opts(rp: &RegParams, o: &ShootingOptions) -> OdeOptions {
    OdeOptions {
        h_min: rp.eps * 1e-6,
        ..OdeOptions::with_tol(o.rtol, o.rtol * rp.eps)
    }
}

fn seg_init(z: [f64; 2]) -> [f64; NV] {
    [z[0], z[1], 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]
}

fn segment(z: [f64; 2], ta: f64, tb: f64, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<SegOut> {
    let (pp, rr) = (*p, *rp);
    let mut expansion = 0.0;
    let mut u = seg_init(z);
    ode::integrate(move |t, u| seg_rhs(t, u, &pp, &rr), ta, seg_init(z), tb, &seg_opts(rp, o), |st| {
        expansion += step_expansion(st, p, rp);
        u = st.y1;
        Control::Continue
    })?;
    Ok(SegOut {
        end: [u[0], u[1]],
        phi: [[u[2], u[4]], [u[3], u[5]]],
        dgamma: [u[6], u[7]],
        logdet: u[8],
        expansion,
    })
}

/// Accepted steps of one segment, for sampling and remeshing.
fn segment_steps(z: [f64; 2], ta: f64, tb: f64, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<Vec<Piece>> {
    let (pp, rr) = (*p, *rp);
    let mut pieces = Vec::new();
    let mut e = 0.0;
    ode::integrate(move |t, u| seg_rhs(t, u, &pp, &rr), ta, seg_init(z), tb, &seg_opts(rp, o), |st| {
        let e1 = e + step_expansion(st, p, rp);
        pieces.push(Piece { step: st.clone(), e0: e, e1 });
        e = e1;
        Control::Continue
    })?;
    Ok(pieces)
}

fn evaluate(g: &ShootingGuess, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<Vec<SegOut>> {
    let pg = p.with_gamma(g.gamma);
    let jobs: Vec<usize> = (0..g.states.len()).collect();
    par::par_map(jobs, |i| segment(g.states[i], g.phases[i], g.phases[i + 1], &pg, rp, o))
        .into_iter()
        .collect()
}

/// Residual `r_i = φ(z_i) − z_{i+1}`, closed by `z_m = S z_0`, and its
/// Jacobian with respect to the states (first `2m` columns) and γ (last).
fn system(g: &ShootingGuess, segs: &[SegOut]) -> (DVector<f64>, DMatrix<f64>) {
    let m = g.states.len();
    let n = 2 * m;
    let mut r = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, n + 1);
    for (i, s) in segs.iter().enumerate() {
        let (next, sign) = if i + 1 < m { (g.states[i + 1], 1.0) } else { (g.states[0], -1.0) };
        for k in 0..2 {
            r[2 * i + k] = s.end[k] - sign * next[k];
            for l in 0..2 {
                j[(2 * i + k, 2 * i + l)] += s.phi[k][l];
            }
            let col = if i + 1 < m { 2 * (i + 1) + k } else { k };
            j[(2 * i + k, col)] -= sign;
            j[(2 * i + k, n)] = s.dgamma[k];
        }
    }
    (r, j)
}

fn flatten(states: &[[f64; 2]]) -> DVector<f64> {
    DVector::from_iterator(2 * states.len(), states.iter().flat_map(|s| s.iter().copied()))
}

fn unflatten(v: &DVector<f64>, m: usize) -> Vec<[f64; 2]> {
    (0..m).map(|i| [v[2 * i], v[2 * i + 1]]).collect()
}

/// Multipliers of the full period from the half-period factors:
/// `M = (DS Φ_{m−1}⋯Φ_0)²`, with the product renormalized as it is formed
/// and `log|det|` carried separately so that neither end overflows.
fn floquet_from(segs: &[SegOut]) -> FloquetData {
    let mut pm = [[1.0, 0.0], [0.0, 1.0]];
    let mut log_scale = 0.0;
    let mut log_det = 0.0;
    for s in segs {
        let a = s.phi;
        let q = [
            [a[0][0] * pm[0][0] + a[0][1] * pm[1][0], a[0][0] * pm[0][1] + a[0][1] * pm[1][1]],
            [a[1][0] * pm[0][0] + a[1][1] * pm[1][0], a[1][0] * pm[0][1] + a[1][1] * pm[1][1]],
        ];
        let nrm = q.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        pm = q.map(|row| row.map(|v| v / nrm));
        log_scale += nrm.ln();
        log_det += s.logdet;
    }
    // DS = −I in the (x, y) block.
    let h = pm.map(|row| row.map(|v| -v));
    let tr = h[0][0] + h[1][1];
    let det_scaled = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let disc = tr * tr - 4.0 * det_scaled;
    let (m2, m3) = if disc >= 0.0 {
        let big = 0.5 * (tr + tr.signum() * disc.sqrt());
        let log_big = log_scale + big.abs().ln();
        let log_small = log_det - log_big;
        let sign = big.signum();
        // μ = ν², so the sign is lost.
        let _ = sign;
        (mult_from_log(2.0 * log_small), mult_from_log(2.0 * log_big))
    } else {
        let arg = (-disc).sqrt().atan2(tr);
        let log_mod = 2.0 * (0.5 * log_det);
        let (s, c) = (2.0 * arg).sin_cos();
        let m = log_mod.exp().min(f64::MAX);
        let a = Multiplier { re: m * c, im: m * s, log_abs: log_mod };
        let b = Multiplier { re: m * c, im: -m * s, log_abs: log_mod };
        (a, b)
    };
    FloquetData::from_multipliers([Multiplier::real(1.0), m2, m3])
}

/// Moduli beyond the floating-point range saturate at `f64::MAX`; `log_abs`
/// keeps the true size.
fn mult_from_log(log_abs: f64) -> Multiplier {
    Multiplier { re: log_abs.exp().min(f64::MAX), im: 0.0, log_abs }
}

/// Places segment boundaries along pieces spanning `[θs, θs + π]`, with
/// expansion accumulated from `θs`.
fn place_phases(pieces: &[Piece], o: &ShootingOptions) -> Vec<f64> {
    let t0 = pieces[0].step.t0;
    let t_end = pieces.last().unwrap().step.t1;
    let mut phases = vec![t0];
    let mut last_e = 0.0;
    let mut last_t = t0;
    for q in pieces {
        let st = &q.step;
        if q.e1 - last_e > o.max_expansion || st.t1 - last_t > o.max_segment {
            // Cut inside the step where the budget runs out.
            let mut tc = if q.e1 - last_e > o.max_expansion && q.e1 > q.e0 {
                st.t0 + (st.t1 - st.t0) * ((last_e + o.max_expansion - q.e0) / (q.e1 - q.e0)).clamp(0.0, 1.0)
            } else {
                st.t1
            };
            tc = tc.min(last_t + o.max_segment).max(st.t0);
            if tc - last_t < 1e-9 {
                tc = st.t1;
            }
            if t_end - tc > 1e-9 {
                phases.push(tc);
                last_t = tc;
                last_e = q.e0 + (q.e1 - q.e0) * (tc - st.t0) / (st.t1 - st.t0);
            }
        }
    }
    phases.push(t_end);
    phases
}

/// States of the orbit through `g` at new phases, each integrated from the
/// start of the old segment containing it. Dense output would do, except
/// that its error is amplified along expanding stretches.
fn states_at(g: &ShootingGuess, phases: Vec<f64>, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<ShootingGuess> {
    let pg = p.with_gamma(g.gamma);
    let m = g.states.len();
    let jobs: Vec<f64> = phases[..phases.len() - 1].to_vec();
    let states = par::par_map(jobs, |t| -> Result<[f64; 2]> {
        let i = g.phases[1..m].partition_point(|&s| s <= t);
        if t == g.phases[i] {
            return Ok(g.states[i]);
        }
        Ok(segment(g.states[i], g.phases[i], t, &pg, rp, o)?.end)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ShootingGuess { gamma: g.gamma, phases, states })
}

/// Builds a shooting guess by integrating forward over half a period from
/// `(x, y)` at phase `theta`. Suitable for orbits without canard segments.
pub fn guess_from_state(z: [f64; 2], theta: f64, gamma: f64, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<ShootingGuess> {
    let pieces = segment_steps(z, theta, theta + PI, &p.with_gamma(gamma), rp, o)?;
    let phases = place_phases(&pieces, o);
    let whole = ShootingGuess { gamma, phases: vec![theta, theta + PI], states: vec![z] };
    states_at(&whole, phases, p, rp, o)
}

/// Pieces of all segments of a guess, each segment integrated from its own
/// start, with the expansion accumulated across segments.
fn all_pieces(g: &ShootingGuess, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<Vec<Piece>> {
    let pg = p.with_gamma(g.gamma);
    let jobs: Vec<usize> = (0..g.states.len()).collect();
    let segs = par::par_map(jobs, |i| segment_steps(g.states[i], g.phases[i], g.phases[i + 1], &pg, rp, o))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut flat = Vec::new();
    let mut acc = 0.0;
    for s in segs {
        let last = s.last().map_or(0.0, |q| q.e1);
        flat.extend(s.into_iter().map(|q| Piece { e0: q.e0 + acc, e1: q.e1 + acc, ..q }));
        acc += last;
    }
    Ok(flat)
}

/// The orbit of `g` evaluated at other phases in the same half period.
pub(crate) fn resample(g: &ShootingGuess, phases: &[f64], p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<ShootingGuess> {
    states_at(g, phases.to_vec(), p, rp, o)
}

/// New segment boundaries for the orbit, adapted to its expansion profile.
pub fn remesh(g: &ShootingGuess, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<ShootingGuess> {
    let phases = place_phases(&all_pieces(g, p, rp, o)?, o);
    states_at(g, phases, p, rp, o)
}

/// Samples of the full period: the computed half and its symmetric image.
pub fn orbit_samples(orbit: &RegOrbit, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<Vec<(f64, [f64; 2])>> {
    let pieces = all_pieces(&orbit.guess(), &p.with_gamma(orbit.gamma), &rp.with_eps(orbit.eps), o)?;
    Ok(full_samples(&pieces))
}

fn full_samples(pieces: &[Piece]) -> Vec<(f64, [f64; 2])> {
    let first = &pieces[0].step;
    let mut half = vec![(first.t0, [first.y0[0], first.y0[1]])];
    half.extend(pieces.iter().map(|q| (q.step.t1, [q.step.y1[0], q.step.y1[1]])));
    let mut full = half.clone();
    full.extend(half.iter().skip(1).map(|&(t, z)| (t + PI, [-z[0], -z[1]])));
    full
}

/// Largest expansion over one unbroken stretch of expanding steps. The half
/// period is repeated so that a stretch through its end is counted whole.
fn max_passage(pieces: &[Piece]) -> f64 {
    let mut best = 0.0f64;
    let mut run = 0.0;
    for q in pieces.iter().chain(pieces) {
        let de = q.e1 - q.e0;
        if de > 0.0 {
            run += de;
            best = best.max(run);
        } else {
            run = 0.0;
        }
    }
    best
}

fn summarize(samples: &[(f64, [f64; 2])], canard_expansion: f64, eps: f64) -> OrbitSummary {
    let max_abs_y = samples.iter().fold(0.0f64, |m, s| m.max(s.1[1].abs()));
    // Downward exit from the layer, and the preceding entry into it.
    let n = samples.len();
    let mut summary = OrbitSummary {
        slip: None,
        max_abs_y,
        canard_expansion,
    };
    let cross = |k: usize, level: f64| {
        let (ta, za) = samples[k];
        let (tb, zb) = samples[k + 1];
        let w = (za[1] - level) / (za[1] - zb[1]);
        (ta + w * (tb - ta), za[0] + w * (zb[0] - za[0]))
    };
    if let Some(k) = (0..n - 1).find(|&k| samples[k].1[1] > -eps && samples[k + 1].1[1] <= -eps) {
        let (t_exit, x_exit) = cross(k, -eps);
        // Entry: the last time before the exit that y came down through +ε,
        // searching backwards with wrap-around over the period.
        let period = 2.0 * PI;
        let entry = (0..n - 1)
            .filter(|&j| samples[j].1[1] > eps && samples[j + 1].1[1] <= eps)
            .map(|j| {
                let (t, _) = cross(j, eps);
                if t <= t_exit { t } else { t - period }
            })
            .fold(f64::NEG_INFINITY, f64::max);
        summary.slip = Some(SlipOnset {
            theta0: crate::model::angle_diff(wrap_angle(t_exit), 0.0),
            theta_star: t_exit - entry,
            x0: x_exit,
        });
    }
    summary
}

fn build_orbit(g: ShootingGuess, segs: &[SegOut], residual: f64, iterations: usize, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<RegOrbit> {
    let mut orbit = RegOrbit {
        gamma: g.gamma,
        eps: rp.eps,
        phases: g.phases,
        states: g.states,
        floquet: floquet_from(segs),
        residual,
        iterations,
        segment_expansion: segs.iter().map(|s| s.expansion).collect(),
        summary: OrbitSummary {
            slip: None,
            max_abs_y: 0.0,
            canard_expansion: 0.0,
        },
        warnings: Vec::new(),
    };
    let pieces = all_pieces(&orbit.guess(), &p.with_gamma(orbit.gamma), rp, o)?;
    orbit.summary = summarize(&full_samples(&pieces), max_passage(&pieces), rp.eps);
    Ok(orbit)
}

/// Newton on the shooting system at fixed γ.
pub fn shoot(guess: &ShootingGuess, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<RegOrbit> {
    let mut g = guess.clone();
    for _ in 0..3 {
        let m = g.states.len();
        let mut done = None;
        let mut segs = evaluate(&g, p, rp, o)?;
        for it in 0..=o.newton_max {
            let (r, j) = system(&g, &segs);
            let rn = r.amax();
            if !rn.is_finite() {
                break;
            }
            if rn <= o.newton_tol {
                done = Some((segs, rn, it));
                break;
            }
            let a = j.columns(0, 2 * m).into_owned();
            let dz = a
                .lu()
                .solve(&r)
                .ok_or_else(|| Error::SingularSystem("shooting Jacobian".into()))?;
            // Backtrack until the residual drops; full steps near a solution.
            let z = flatten(&g.states);
            let mut lam = 1.0;
            let mut next = None;
            for _ in 0..8 {
                let trial = ShootingGuess {
                    states: unflatten(&(&z - &dz * lam), m),
                    ..g.clone()
                };
                if let Ok(s) = evaluate(&trial, p, rp, o) {
                    if system(&trial, &s).0.amax() < rn {
                        next = Some((trial, s));
                        break;
                    }
                }
                lam *= 0.5;
            }
            let Some((t, s)) = next else { break };
            g = t;
            segs = s;
        }
        let Some((segs, rn, it)) = done else {
            return Err(Error::NewtonDivergence(format!("shooting at gamma={} eps={}", g.gamma, rp.eps)));
        };
        let worst = segs.iter().fold(0.0f64, |a, s| a.max(s.expansion));
        if worst > 2.0 * o.max_expansion {
            g = remesh(&g, p, rp, o)?;
            continue;
        }
        let mut orbit = build_orbit(g, &segs, rn, it, p, rp, o)?;
        if orbit.floquet.leading().log_abs > 1e8f64.ln() && orbit.segments() < 8 {
            orbit.warnings.push(format!(
                "ConditioningWarning: |mu3| = e^{:.1} with {} segments",
                orbit.floquet.leading().log_abs,
                orbit.segments()
            ));
            let finer = ShootingOptions {
                max_segment: o.max_segment.min(PI / 8.0),
                ..*o
            };
            let g2 = remesh(&orbit.guess(), p, rp, &finer)?;
            let mut again = shoot(&g2, p, rp, &finer)?;
            again.warnings.extend(orbit.warnings);
            return Ok(again);
        }
        return Ok(orbit);
    }
    Err(Error::NewtonDivergence("shooting mesh did not settle".into()))
}

/// Shooting guess read off a discontinuous orbit, with its stick phases
/// lifted onto the attracting branch of the layer.
pub fn guess_from_pws(sol: &SlipStickSolution, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<ShootingGuess> {
    let pg = p.with_gamma(sol.gamma);
    let arc = slip_arc(sol.theta0, &pg)?;
    let ts = sol.theta0 - 0.5 * sol.theta_star;
    let tau = PI - sol.theta_star;
    let cap = rp.phi.peak * (1.0 - 1e-9);
    let stick = |x: f64, t: f64| -> Result<[f64; 2]> {
        let s = (-xi(x, t, &pg) / pg.mu_d).clamp(-cap, cap);
        let yh = rp
            .phi
            .inverse_attracting(s)
            .ok_or_else(|| Error::NoIntersection("stick phase off the attracting branch".into()))?;
        Ok([x, rp.eps * yh])
    };
    let breaks = [ts, sol.theta0, sol.theta0 + tau, ts + PI];
    let mut phases = vec![ts];
    for w in breaks.windows(2) {
        let n = ((w[1] - w[0]) / o.max_segment).ceil().max(1.0) as usize;
        phases.extend((1..=n).map(|k| w[0] + (w[1] - w[0]) * k as f64 / n as f64));
    }
    phases.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let states = phases[..phases.len() - 1]
        .iter()
        .map(|&t| {
            if t < sol.theta0 {
                stick(sol.x0, t)
            } else if t < sol.theta0 + tau {
                let (x, y) = arc.xy(t - sol.theta0);
                Ok([x, y])
            } else {
                stick(-sol.x0, t)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShootingGuess { gamma: sol.gamma, phases, states })
}

/// Where a regularized orbit search starts.
#[derive(Debug, Clone)]
pub enum Seed {
    /// A discontinuous orbit. With `relax_periods > 0` the regularized
    /// system is first integrated from its stick phase for that many periods
    /// (useful for attracting orbits); otherwise its states are used as they
    /// are, which also works for saddles.
    Pws { sol: SlipStickSolution, relax_periods: usize },
    Orbit(RegOrbit),
}

/// Periodic orbit of `Z_ε` near the seed, with its multipliers.
pub fn shoot_periodic_regularized(seed: &Seed, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<RegOrbit> {
    let orbit = shoot_from(seed, p, rp, o)?;
    if matches!(seed, Seed::Pws { .. }) && orbit.summary.slip.is_none() {
        return Err(Error::NoIntersection("seed fell onto the sticking cycle".into()));
    }
    Ok(orbit)
}

fn shoot_from(seed: &Seed, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<RegOrbit> {
    match seed {
        Seed::Orbit(orbit) => {
            let g = if (orbit.eps - rp.eps).abs() > 0.0 {
                rescale_layer(&orbit.guess(), orbit.eps, rp.eps)
            } else {
                orbit.guess()
            };
            shoot(&remesh(&g, p, rp, o)?, p, rp, o)
        }
        Seed::Pws { sol, relax_periods: 0 } => shoot(&guess_from_pws(sol, p, rp, o)?, p, rp, o),
        Seed::Pws { sol, relax_periods } => {
            let pg = p.with_gamma(sol.gamma);
            let theta = sol.theta0 - 0.5 * sol.theta_star;
            let s = -xi(sol.x0, theta, &pg) / pg.mu_d;
            let yh = rp
                .phi
                .inverse_attracting(s)
                .ok_or_else(|| Error::NoIntersection("stick phase off the attracting branch".into()))?;
            let mut z = [sol.x0, rp.eps * yh];
            if *relax_periods > 0 {
                let t = 2.0 * PI * *relax_periods as f64;
                let z0 = crate::model::State { x: z[0], y: z[1], theta };
                let tr = stiff_integrate(&z0, t, &pg, rp, o.rtol)?;
                let e = tr.final_state();
                z = [e.x, e.y];
            }
            let g = guess_from_state(z, theta, sol.gamma, p, rp, o)?;
            shoot(&g, p, rp, o)
        }
    }
}

/// Rescales layer states (`|y| ≲ ε`) when moving between values of ε.
pub fn rescale_layer(g: &ShootingGuess, eps_from: f64, eps_to: f64) -> ShootingGuess {
    let mut g = g.clone();
    for s in &mut g.states {
        if s[1].abs() < 1.5 * eps_from {
            s[1] *= eps_to / eps_from;
        }
    }
    g
}

/// Natural-parameter continuation in ε at fixed γ.
pub fn continue_in_eps(orbit: &RegOrbit, eps_target: f64, p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<RegOrbit> {
    let mut cur = orbit.clone();
    let mut factor: f64 = 1.1;
    while (cur.eps - eps_target).abs() > 1e-15 * eps_target {
        let ratio = eps_target / cur.eps;
        let step = if ratio > 1.0 { ratio.min(factor) } else { ratio.max(1.0 / factor) };
        let next_eps = cur.eps * step;
        let rp_next = rp.with_eps(next_eps);
        let g = rescale_layer(&cur.guess(), cur.eps, next_eps);
        match remesh(&g, p, &rp_next, o).and_then(|g| shoot(&g, p, &rp_next, o)) {
            Ok(next) => {
                cur = next;
                factor = (factor * 1.2).min(1.3);
            }
            Err(e) => {
                factor = 1.0 + 0.5 * (factor - 1.0);
                if factor < 1.001 {
                    return Err(e);
                }
            }
        }
    }
    Ok(cur)
}

/// Residual and Jacobian for continuation, with the states scaled by `w`
/// (x and y) and γ appended.
pub(crate) fn continuation_system(
    phases: &[f64],
    u: &DVector<f64>,
    w: [f64; 2],
    p: &Params,
    rp: &RegParams,
    o: &ShootingOptions,
) -> Result<(DVector<f64>, DMatrix<f64>, ShootingGuess, Vec<SegOut>)> {
    let m = phases.len() - 1;
    let g = ShootingGuess {
        gamma: u[2 * m],
        phases: phases.to_vec(),
        states: (0..m).map(|i| [u[2 * i] / w[0], u[2 * i + 1] / w[1]]).collect(),
    };
    let segs = evaluate(&g, p, rp, o)?;
    let (r, mut j) = system(&g, &segs);
    for i in 0..m {
        j.column_mut(2 * i).scale_mut(1.0 / w[0]);
        j.column_mut(2 * i + 1).scale_mut(1.0 / w[1]);
    }
    Ok((r, j, g, segs))
}

pub(crate) fn pack(g: &ShootingGuess, w: [f64; 2]) -> DVector<f64> {
    let m = g.states.len();
    let mut u = DVector::zeros(2 * m + 1);
    for (i, s) in g.states.iter().enumerate() {
        u[2 * i] = s[0] * w[0];
        u[2 * i + 1] = s[1] * w[1];
    }
    u[2 * m] = g.gamma;
    u
}

pub(crate) fn finish(g: ShootingGuess, segs: &[SegOut], p: &Params, rp: &RegParams, o: &ShootingOptions) -> Result<RegOrbit> {
    let (r, _) = system(&g, segs);
    build_orbit(g, segs, r.amax(), 0, p, rp, o)
}

pub(crate) fn max_segment_expansion(segs: &[SegOut]) -> f64 {
    segs.iter().fold(0.0f64, |a, s| a.max(s.expansion))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbits::{find_slipstick, floquet::Stability};

    fn right_orbit(gamma: f64, eps: f64) -> (RegOrbit, SlipStickSolution) {
        let p = Params::reference(gamma);
        let rp = RegParams::new(eps, 0.6, &p).unwrap();
        let sol = find_slipstick(gamma, &p, 16)[0];
        let o = ShootingOptions::default();
        let orbit = shoot_periodic_regularized(&Seed::Pws { sol, relax_periods: 3 }, &p, &rp, &o).unwrap();
        (orbit, sol)
    }

    #[test]
    fn regular_orbit_near_discontinuous_one() {
        let (orbit, sol) = right_orbit(5.0, 1e-3);
        assert!(orbit.residual <= 1e-10);
        let f = orbit.floquet;
        assert!((f.multipliers[0].re - 1.0).abs() < 1e-6);
        assert_eq!(f.stability, Stability::Attracting);
        assert!(f.multipliers[1].log_abs < -50.0);
        let s = orbit.summary.slip.unwrap();
        assert!((s.theta0 - sol.theta0).abs() < 0.1, "{s:?} vs {sol:?}");
        assert!((s.theta_star - sol.theta_star).abs() < 0.1);
        assert!(orbit.summary.canard_expansion < 50.0);
    }

    #[test]
    fn multipliers_match_direct_monodromy() {
        let (orbit, _) = right_orbit(5.0, 2e-3);
        let p = Params::reference(5.0);
        let rp = RegParams::new(2e-3, 0.6, &p).unwrap();
        let o = ShootingOptions::default();
        // Integrate one full period in a single piece.
        let z = orbit.states[0];
        let t0 = orbit.phases[0];
        let u = ode::solve(
            |t, u| seg_rhs(t, u, &p, &rp),
            t0,
            seg_init(z),
            t0 + 2.0 * PI,
            &seg_opts(&rp, &o),
        )
        .unwrap();
        assert!((u[0] - z[0]).abs() < 1e-8 && (u[1] - z[1]).abs() < 1e-8);
        let tr = u[2] + u[5];
        let lead = orbit.floquet.leading().re;
        // The small multiplier is negligible, so the trace is the leading one.
        assert!((tr - lead).abs() < 1e-6, "{tr} vs {lead}");
    }

    #[test]
    fn layer_rescaling_only_touches_layer_states() {
        let g = ShootingGuess {
            gamma: 2.0,
            phases: vec![0.0, 1.0, PI],
            states: vec![[0.1, 1e-3], [0.2, 0.5]],
        };
        let h = rescale_layer(&g, 1e-3, 2e-3);
        assert_eq!(h.states[0][1], 2e-3);
        assert_eq!(h.states[1][1], 0.5);
    }
}
