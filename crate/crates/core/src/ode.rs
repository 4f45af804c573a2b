//! Adaptive Dormand–Prince 5(4) integrator with dense output.
//!
//! Works on fixed-size state arrays, in either time direction. Callers get
//! every accepted step (with its continuous extension) through a callback,
//! which is how trajectories are sampled and events are located.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub h_max: f64,
    /// Step sizes below this abort with [`Error::StepFailure`].
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-11,
            h0: None,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 5_000_000,
        }
    }
}

impl OdeOptions {
    pub fn tight() -> Self {
        Self {
            rtol: 1e-13,
            atol: 1e-14,
            ..Self::default()
        }
    }

    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

/// One accepted step together with its interpolant.
#[derive(Debug, Clone)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    rcont: [[f64; N]; 5],
}

impl<const N: usize> Step<N> {
    /// Fourth-order continuous extension, valid for `t` between `t0` and `t1`.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s1 = 1.0 - s;
        let r = &self.rcont;
        std::array::from_fn(|i| {
            r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i])))
        })
    }
}

/// Returned by step callbacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct Outcome<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub steps: usize,
    pub rejected: usize,
    /// True when a callback requested termination before `t_end`.
    pub stopped: bool,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        y[i] + h * acc
    })
}

fn err_norm<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], o: &OdeOptions) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        let sk = o.atol + o.rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sk;
        s += r * r;
    }
    (s / N as f64).sqrt()
}

fn initial_step<const N: usize, F>(f: &mut F, t0: f64, y0: &[f64; N], f0: &[f64; N], dir: f64, o: &OdeOptions) -> f64
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..N {
        let sk = o.atol + o.rtol * y0[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y0[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        0.01 * (dny / dnf).sqrt()
    };
    h = h.min(o.h_max);
    let y1: [f64; N] = std::array::from_fn(|i| y0[i] + dir * h * f0[i]);
    let f1 = f(t0 + dir * h, &y1);
    let mut der2 = 0.0;
    for i in 0..N {
        let sk = o.atol + o.rtol * y0[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (1e-6f64).max(h * 1e-3)
    } else {
        (0.01 / der12).powf(0.2)
    };
    (100.0 * h).min(h1).min(o.h_max)
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end` (either direction).
///
/// `on_step` sees each accepted step and may stop the integration; the
/// returned outcome then carries the end of that step.
pub fn integrate<const N: usize, F, C>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &OdeOptions,
    mut on_step: C,
) -> Result<Outcome<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    C: FnMut(&Step<N>) -> Control,
{
    let span = t_end - t0;
    if span == 0.0 {
        return Ok(Outcome {
            t: t0,
            y: y0,
            steps: 0,
            rejected: 0,
            stopped: false,
        });
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = match opts.h0 {
        Some(h0) => h0.abs().min(opts.h_max),
        None => initial_step(&mut f, t, &y, &k1, dir, opts),
    };
    let mut err_old: f64 = 1e-4;
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut last_rejected = false;

    loop {
        if steps + rejected >= opts.max_steps {
            return Err(Error::StepFailure(format!(
                "exceeded {} steps at t = {t}",
                opts.max_steps
            )));
        }
        let remaining = (t_end - t) * dir;
        let last = h >= remaining * (1.0 - 1e-14);
        if last {
            h = remaining;
        }
        let hs = dir * h;
        let k2 = f(t + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]));
        let k3 = f(t + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * hs, &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(
            t + C5 * hs,
            &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + hs,
            &axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = axpy(&y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let t_new = if last { t_end } else { t + hs };
        let k7 = f(t_new, &y_new);
        let err: [f64; N] = std::array::from_fn(|i| {
            hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        });
        let en = err_norm(&err, &y, &y_new, opts);
        if !en.is_finite() {
            rejected += 1;
            h *= 0.1;
            last_rejected = true;
            if h < opts.h_min {
                return Err(Error::StepFailure(format!("non-finite state near t = {t}")));
            }
            continue;
        }

        if en <= 1.0 {
            // PI step-size controller.
            let fac = 0.9 * en.max(1e-12).powf(-0.17) * err_old.powf(0.04);
            let mut fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            err_old = en.max(1e-4);

            let ydiff: [f64; N] = std::array::from_fn(|i| y_new[i] - y[i]);
            let bspl: [f64; N] = std::array::from_fn(|i| hs * k1[i] - ydiff[i]);
            let rcont = [
                y,
                ydiff,
                bspl,
                std::array::from_fn(|i| ydiff[i] - hs * k7[i] - bspl[i]),
                std::array::from_fn(|i| {
                    hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
                }),
            ];
            let step = Step {
                t0: t,
                t1: t_new,
                y0: y,
                y1: y_new,
                rcont,
            };
            steps += 1;
            t = t_new;
            y = y_new;
            k1 = k7;
            last_rejected = false;
            if on_step(&step) == Control::Stop {
                return Ok(Outcome {
                    t,
                    y,
                    steps,
                    rejected,
                    stopped: true,
                });
            }
            if last {
                return Ok(Outcome {
                    t,
                    y,
                    steps,
                    rejected,
                    stopped: false,
                });
            }
            h = (h * fac).min(opts.h_max);
        } else {
            rejected += 1;
            last_rejected = true;
            let fac = (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
        }
        if h < opts.h_min {
            return Err(Error::StepFailure(format!(
                "step size {h:.3e} below minimum {:.3e} at t = {t}",
                opts.h_min
            )));
        }
    }
}

/// Integrates without observing intermediate steps.
pub fn solve<const N: usize, F>(f: F, t0: f64, y0: [f64; N], t_end: f64, opts: &OdeOptions) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    integrate(f, t0, y0, t_end, opts, |_| Control::Continue).map(|o| o.y)
}

/// Integrates and samples the dense output on a uniform grid of `n + 1`
/// points spanning `[t0, t_end]`.
pub fn solve_dense<const N: usize, F>(
    f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    n: usize,
    opts: &OdeOptions,
) -> Result<Vec<(f64, [f64; N])>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let n = n.max(1);
    let grid: Vec<f64> = (0..=n)
        .map(|k| t0 + (t_end - t0) * k as f64 / n as f64)
        .collect();
    let mut out = Vec::with_capacity(n + 1);
    out.push((t0, y0));
    let mut next = 1usize;
    let dir = (t_end - t0).signum();
    integrate(f, t0, y0, t_end, opts, |st| {
        while next <= n && (grid[next] - st.t1) * dir <= 0.0 {
            let tk = grid[next];
            let yk = if next == n { st.y1 } else { st.eval(tk) };
            out.push((tk, yk));
            next += 1;
        }
        Control::Continue
    })?;
    Ok(out)
}

/// Locates a sign change of `g` inside an accepted step by bisection-safeguarded
/// secant iterations on the dense output. Returns `(t, y)` at the root.
pub fn locate_in_step<const N: usize, G>(step: &Step<N>, mut g: G, tol: f64) -> Option<(f64, [f64; N])>
where
    G: FnMut(f64, &[f64; N]) -> f64,
{
    let (mut a, mut b) = (step.t0, step.t1);
    let mut ga = g(a, &step.y0);
    let gb = g(b, &step.y1);
    if ga == 0.0 {
        return Some((a, step.y0));
    }
    if gb == 0.0 {
        return Some((b, step.y1));
    }
    if ga.signum() == gb.signum() {
        return None;
    }
    let mut gb = gb;
    for it in 0..200 {
        // Illinois-style regula falsi with periodic bisection.
        let m = if it % 3 == 2 {
            0.5 * (a + b)
        } else {
            let m = b - gb * (b - a) / (gb - ga);
            if (m - a) * (m - b) < 0.0 {
                m
            } else {
                0.5 * (a + b)
            }
        };
        let ym = step.eval(m);
        let gm = g(m, &ym);
        if gm.abs() <= tol || (b - a).abs() <= 1e-15 * (1.0 + m.abs()) {
            return Some((m, ym));
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
            gb = gm;
        }
    }
    let m = 0.5 * (a + b);
    Some((m, step.eval(m)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_accuracy() {
        let f = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let y = solve(f, 0.0, [1.0, 0.0], 10.0, &OdeOptions::tight()).unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-11);
        assert!((y[1] + 10f64.sin()).abs() < 1e-11);
    }

    #[test]
    fn backward_integration_inverts_forward() {
        let f = |t: f64, y: &[f64; 2]| [y[1], -4.0 * y[0] + t.sin()];
        let o = OdeOptions::tight();
        let y1 = solve(f, 0.0, [0.3, -0.1], 3.0, &o).unwrap();
        let y0 = solve(f, 3.0, y1, 0.0, &o).unwrap();
        assert!((y0[0] - 0.3).abs() < 1e-10 && (y0[1] + 0.1).abs() < 1e-10);
    }

    #[test]
    fn dense_output_matches_exact() {
        let f = |_t: f64, y: &[f64; 1]| [-y[0]];
        let pts = solve_dense(f, 0.0, [1.0], 2.0, 37, &OdeOptions::with_tol(1e-10, 1e-12)).unwrap();
        assert_eq!(pts.len(), 38);
        for (t, y) in pts {
            assert!((y[0] - (-t).exp()).abs() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn event_location_in_step() {
        let f = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let mut hit = None;
        integrate(f, 0.0, [1.0, 0.0], 5.0, &OdeOptions::with_tol(1e-10, 1e-12), |st| {
            if let Some(r) = locate_in_step(st, |_, y| y[0], 1e-13) {
                hit = Some(r.0);
                return Control::Stop;
            }
            Control::Continue
        })
        .unwrap();
        assert!((hit.unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn stiff_problem_respects_minimum_step() {
        let f = |_t: f64, y: &[f64; 1]| [-1e8 * y[0]];
        let o = OdeOptions {
            h_min: 1e-4,
            ..OdeOptions::default()
        };
        assert!(matches!(solve(f, 0.0, [1.0], 1.0, &o), Err(Error::StepFailure(_))));
    }
}
