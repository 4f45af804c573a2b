use serde_json::{json, Value};
use std::io::Write;

use stiction::export::fmt17;
use stiction::model::Params;
use stiction::orbits::arclength::ArclengthOptions;
use stiction::orbits::{
    continue_branch_pws, continue_branch_regularized, find_slipstick, floquet_discontinuous, max_abs_y,
    no_canard_explosion_check, orbit_at_gamma, orbit_on_family, regular_label, seed_regularized, write_branch_csv, BranchLabel,
    BranchPoint, PwsContinuation, RegBranch, RegContinuation, RegOrbit,
};
use stiction::regularization::{gamma_bound, RegParams};

use crate::config::RunConfig;
use crate::shard::{default_workers, sweep};
use crate::{create_file, to_value, CliError, Outcome};

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    /// Slip-stick orbits of the discontinuous system.
    #[arg(long, conflicts_with = "reg")]
    pub pws: bool,
    /// Periodic orbits of the regularized system.
    #[arg(long)]
    pub reg: bool,
    /// Follow the regularized family through its folds onto the canard segment.
    #[arg(long, requires = "reg")]
    pub trace_canard: bool,
    /// With `--reg` at one γ: skip the search for the coexisting canard orbit.
    #[arg(long, requires = "reg")]
    pub regular_only: bool,
    /// Solve on an evenly spaced grid of this many γ values over `--gamma-range`.
    #[arg(long, requires = "pws")]
    pub sweep: Option<usize>,
}

impl Args {
    pub fn apply(&self, c: &mut RunConfig) {
        if let Some(n) = self.sweep {
            c.sweep = Some(n);
        }
    }
}

pub fn run(a: &Args, c: &RunConfig) -> Result<Outcome, CliError> {
    match (a.pws, a.reg) {
        (true, _) => pws(c),
        (_, true) => reg(a, c),
        _ => Err(CliError::Config("choose --pws or --reg".into())),
    }
}

fn pws_label(gamma: f64) -> BranchLabel {
    if gamma < 1.0 {
        BranchLabel::Pi0Left
    } else {
        BranchLabel::Pi0Right
    }
}

const SWEEP_HEADER: &str = "gamma,theta0,theta_star,x0,maxAbsY,lambda,admissible";

fn pws(c: &RunConfig) -> Result<Outcome, CliError> {
    let p = c.params()?;
    if let (Some(n), Some([lo, hi])) = (c.sweep, c.gamma_range) {
        let grid: Vec<f64> = (0..n).map(|k| if n == 1 { lo } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 }).collect();
        let workers = c.workers.unwrap_or_else(default_workers);
        let rows = sweep(&grid, workers, &c.out, "sweep", SWEEP_HEADER, |&g| {
            let pg = p.with_gamma(g);
            let mut rows = Vec::new();
            for s in find_slipstick(g, &pg, 24) {
                let lam = floquet_discontinuous(&s, &pg).map_or(f64::NAN, |f| f.leading().re);
                rows.push(format!(
                    "{},{},{},{},{},{},{}",
                    fmt17(g),
                    fmt17(s.theta0),
                    fmt17(s.theta_star),
                    fmt17(s.x0),
                    fmt17(max_abs_y(&s, &pg)?),
                    fmt17(lam),
                    s.admissible()
                ));
            }
            Ok(rows)
        })?;
        return Ok(Outcome {
            results: json!({ "sweep": "sweep.csv", "gammas": n, "orbits": rows, "workers": workers.min(n) }),
            warnings: Vec::new(),
        });
    }
    if let Some([lo, hi]) = c.gamma_range {
        let mid = 0.5 * (lo + hi);
        let seed = find_slipstick(mid, &p, 24)
            .into_iter()
            .next()
            .ok_or_else(|| stiction::Error::NoIntersection(format!("no slip-stick orbit at gamma={mid}")))?;
        let o = PwsContinuation { gamma_min: lo, gamma_max: hi, ..PwsContinuation::default() };
        let b = continue_branch_pws(&seed, pws_label(mid), &p, &o)?;
        let mut w = create_file(&c.out, "branch.csv")?;
        write_branch_csv(&mut w, &b.points)?;
        w.flush()?;
        let (glo, ghi) = b.gamma_range();
        return Ok(Outcome {
            results: json!({
                "branch": "branch.csv",
                "label": pws_label(mid).as_str(),
                "points": b.points.len(),
                "gamma_range": [glo, ghi],
                "ends": to_value(&b.ends),
                "folds": b.folds,
            }),
            warnings: Vec::new(),
        });
    }
    let mut points = Vec::new();
    let mut warnings = Vec::new();
    for s in find_slipstick(c.gamma, &p, 24) {
        let f = floquet_discontinuous(&s, &p).ok();
        if !s.admissible() {
            warnings.push(format!("inadmissible orbit at theta0 = {}: {:?}", s.theta0, s.admissibility));
        }
        points.push(BranchPoint {
            gamma: s.gamma,
            theta0: s.theta0,
            theta_star: s.theta_star,
            x0: s.x0,
            max_abs_y: max_abs_y(&s, &p)?,
            floquet: f,
            label: pws_label(s.gamma),
        });
    }
    let mut w = create_file(&c.out, "orbits.csv")?;
    write_branch_csv(&mut w, &points)?;
    w.flush()?;
    Ok(Outcome { results: json!({ "orbits_csv": "orbits.csv", "orbits": to_value(&points) }), warnings })
}

fn orbit_json(q: &RegOrbit, label: BranchLabel) -> Value {
    json!({
        "label": label.as_str(),
        "gamma": q.gamma,
        "eps": q.eps,
        "max_abs_y": q.summary.max_abs_y,
        "canard_expansion": q.summary.canard_expansion,
        "log_abs_mu3": q.floquet.leading().log_abs,
        "stability": q.floquet.stability.as_str(),
        "segments": q.segments(),
        "residual": q.residual,
    })
}

const RIGHT_SEED: f64 = 25.0;

/// Where to start, and which way to go, to reach the canard segment at `gamma`.
fn canard_start(gamma: f64) -> (f64, f64) {
    if gamma < 1.0 {
        (0.5, -1.0)
    } else {
        (0.8 * gamma, 1.0)
    }
}

fn reg(a: &Args, c: &RunConfig) -> Result<Outcome, CliError> {
    let p = c.params()?;
    let rp = c.reg_params(&p)?;
    let o = RegContinuation::default();
    if a.trace_canard {
        trace(c, &p, &rp, &o)
    } else {
        at_gamma(a, c, &p, &rp, &o)
    }
}

/// Orbits at one γ: the regular one and the canard orbit of the connecting
/// segment.
fn at_gamma(a: &Args, c: &RunConfig, p: &Params, rp: &RegParams, o: &RegContinuation) -> Result<Outcome, CliError> {
    let g = c.gamma;
    let wide = RegContinuation {
        gamma_min: 0.05,
        max_points: 4000,
        arclength: ArclengthOptions { ds_max: 1.0, ..o.arclength },
        ..*o
    };
    let mut canard = None;
    let q = if g > RIGHT_SEED {
        // Close to the right fold a relaxed seed drops onto the sticking
        // cycle. Follow the right family up from the seed instead; past its
        // fold the same branch comes back down through g on the canard
        // segment.
        let seed = seed_regularized(RIGHT_SEED, p, rp, &o.shooting)?;
        let opts = if a.regular_only {
            RegContinuation { gamma_max: g * 1.02, ..wide }
        } else {
            RegContinuation { return_gamma: Some(g - 0.1), ..wide }
        };
        let b = continue_branch_regularized(&seed, 1.0, p, rp, &opts)?;
        if !a.regular_only {
            canard = Some(orbit_at_gamma(&b, BranchLabel::PiEpsCenter, g, p, rp, &o.shooting));
        }
        orbit_at_gamma(&b, BranchLabel::PiEpsRight, g, p, rp, &o.shooting)?
    } else {
        if !a.regular_only {
            let (sg, dir) = canard_start(g);
            canard = Some(orbit_on_family(sg, dir, BranchLabel::PiEpsCenter, g, p, rp, &wide));
        }
        seed_regularized(g, p, rp, &o.shooting)?
    };
    let mut orbits = vec![orbit_json(&q, regular_label(g))];
    let mut warnings = q.warnings.clone();
    match canard {
        Some(Ok(cq)) => {
            warnings.extend(cq.warnings.iter().cloned());
            orbits.push(orbit_json(&cq, BranchLabel::PiEpsCenter));
        }
        Some(Err(e)) => warnings.push(format!("no canard orbit at gamma = {g}: {e}")),
        None => {}
    }
    let distinct = orbits.len() == 2
        && (orbits[0]["max_abs_y"].as_f64().unwrap() - orbits[1]["max_abs_y"].as_f64().unwrap()).abs() > 1e-6;
    Ok(Outcome {
        results: json!({ "gamma": g, "orbits": orbits, "coexisting": distinct }),
        warnings,
    })
}

/// Both ends of `Π_ε`: the left family through its fold onto the canard
/// segment, and the right family through its fold back down.
fn trace(c: &RunConfig, p: &Params, rp: &RegParams, o: &RegContinuation) -> Result<Outcome, CliError> {
    let [left_top, right_bottom] = c.gamma_range.unwrap_or([0.7, 30.9]);
    let left = || -> Result<RegBranch, CliError> {
        let seed = seed_regularized(0.5, p, rp, &o.shooting)?;
        let lo = RegContinuation { gamma_min: 0.05, return_gamma: Some(left_top), max_points: 1000, ..*o };
        Ok(continue_branch_regularized(&seed, -1.0, p, rp, &lo)?)
    };
    let right = || -> Result<RegBranch, CliError> {
        let seed = seed_regularized(RIGHT_SEED, p, rp, &o.shooting)?;
        let ro = RegContinuation {
            return_gamma: Some(right_bottom),
            max_points: 4000,
            arclength: ArclengthOptions { ds_max: 1.0, ..o.arclength },
            ..*o
        };
        Ok(continue_branch_regularized(&seed, 1.0, p, rp, &ro)?)
    };
    let (l, r) = join(c, left, right);
    let (l, r) = (l?, r?);
    let mut points = l.branch.points.clone();
    points.extend(r.branch.points.iter().cloned());
    let mut w = create_file(&c.out, "pi_eps.csv")?;
    write_branch_csv(&mut w, &points)?;
    w.flush()?;
    let count = |b: &RegBranch, label: BranchLabel| b.branch.points.iter().filter(|q| q.label == label).count();
    let piece = |b: &RegBranch| -> Result<Value, CliError> {
        let check = no_canard_explosion_check(b, None, None)?;
        Ok(json!({
            "points": b.branch.points.len(),
            "left": count(b, BranchLabel::PiEpsLeft),
            "center": count(b, BranchLabel::PiEpsCenter),
            "right": count(b, BranchLabel::PiEpsRight),
            "fold_gammas": b.fold_gammas(),
            "gamma_range": b.branch.gamma_range(),
            "ends": to_value(&b.branch.ends),
            "amplitude_check": to_value(&check),
        }))
    };
    let bound = gamma_bound(rp);
    let mut warnings = Vec::new();
    if r.fold_gammas().iter().any(|&g| g >= bound) {
        warnings.push(format!("right fold at or above 1/sqrt(eps delta) = {bound}"));
    }
    Ok(Outcome {
        results: json!({
            "eps": rp.eps,
            "branch_csv": "pi_eps.csv",
            "gamma_bound": bound,
            "left_piece": piece(&l)?,
            "right_piece": piece(&r)?,
        }),
        warnings,
    })
}

#[cfg(feature = "parallel")]
fn join<A, B, RA, RB>(c: &RunConfig, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    match rayon::ThreadPoolBuilder::new().num_threads(c.workers.unwrap_or_else(default_workers)).build() {
        Ok(pool) => pool.install(|| rayon::join(a, b)),
        Err(_) => (a(), b()),
    }
}

#[cfg(not(feature = "parallel"))]
fn join<A, B, RA, RB>(_: &RunConfig, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA,
    B: FnOnce() -> RB,
{
    (a(), b())
}
