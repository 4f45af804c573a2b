use serde_json::{json, Map, Value};

use stiction::model::State;
use stiction::orbits::{
    continue_branch_regularized, multiplier_fit, no_canard_explosion_check, orbit_at_gamma, orbit_on_family,
    seed_regularized, transversality_check, BranchLabel, RegContinuation,
};
use stiction::regularization::{
    closeness_study, folded_singularities, gamma_big, gamma_bound, maximal_canard, saddle_node_gamma,
    singular_canard, CanardKind, CriticalClass, RegParams,
};

use crate::config::RunConfig;
use crate::{to_value, CliError, Outcome};

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub folded_singularities: bool,
    /// `1/√(εδ)` and the saddle-node collision of folded singularities.
    #[arg(long)]
    pub gamma_bound: bool,
    /// Singular canards of the folded saddles and the maximal canard.
    #[arg(long)]
    pub canards: bool,
    /// Returned fast-fiber line against the vrai canard, at each γ given.
    #[arg(long, value_delimiter = ',', num_args = 0.., default_missing_value = None)]
    pub transversality: Option<Vec<f64>>,
    /// Distance between stiction and regularized trajectories over `--eps`.
    #[arg(long)]
    pub closeness: bool,
    /// Multiplier growth and amplitude along the canard segment.
    #[arg(long)]
    pub explosion: bool,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub y0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: Option<f64>,
    #[arg(long = "T")]
    pub t: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub fit_eps: Option<Vec<f64>>,
    #[arg(long)]
    pub fit_gamma: Option<f64>,
}

impl Args {
    pub fn apply(&self, c: &mut RunConfig) {
        for (src, dst) in [(self.x0, &mut c.x0), (self.y0, &mut c.y0), (self.theta0, &mut c.theta0), (self.t, &mut c.t), (self.fit_gamma, &mut c.fit_gamma)] {
            if let Some(v) = src {
                *dst = v;
            }
        }
        if let Some(v) = &self.fit_eps {
            c.fit_eps = v.clone();
        }
        if let Some(v) = &self.transversality {
            if !v.is_empty() {
                c.transversality_gammas = v.clone();
            }
        }
    }
}

pub fn run(a: &Args, c: &RunConfig) -> Result<Outcome, CliError> {
    let p = c.params()?;
    let rp = c.reg_params(&p)?;
    let mut results = Map::new();
    let mut warnings = Vec::new();
    if a.folded_singularities {
        let gb = gamma_big(&p, &rp);
        let pts = folded_singularities(&p, &rp, gb)?;
        results.insert("folded_singularities".into(), json!({ "gamma_big": gb, "points": to_value(&pts) }));
    }
    if a.gamma_bound {
        results.insert(
            "gamma_bound".into(),
            json!({ "gamma_bound": gamma_bound(&rp), "saddle_node_gamma_big": saddle_node_gamma(&p, &rp, 1e-12), "inverse_delta": 1.0 / rp.delta }),
        );
    }
    if a.canards {
        results.insert("canards".into(), canards(&p, &rp, &mut warnings)?);
    }
    if a.transversality.is_some() {
        let mut reports = Vec::new();
        for &g in &c.transversality_gammas {
            let r = transversality_check(g, &p)?;
            if r.angle.abs() <= 1e-3 {
                warnings.push(format!("nearly tangent crossing at gamma = {g}"));
            }
            reports.push(json!({ "gamma": g, "crossing": to_value(&r.crossing), "angle": r.angle, "samples": r.curve.len() }));
        }
        results.insert("transversality".into(), Value::Array(reports));
    }
    if a.closeness {
        let z0 = State::new(c.x0, c.y0, c.theta0);
        let study = closeness_study(&z0, c.t, &p, &rp, &c.eps_list, c.tol)?;
        if let Some(f) = study.fit {
            if !(0.55..=0.8).contains(&f.slope) {
                warnings.push(format!("closeness exponent {} is away from 2/3", f.slope));
            }
        }
        results.insert("closeness".into(), to_value(&study));
    }
    if a.explosion {
        results.insert("explosion".into(), explosion(c, &rp)?);
    }
    if results.is_empty() {
        return Err(CliError::Config("no analysis selected".into()));
    }
    Ok(Outcome { results: Value::Object(results), warnings })
}

fn canards(p: &stiction::model::Params, rp: &RegParams, warnings: &mut Vec<String>) -> Result<Value, CliError> {
    let pts = folded_singularities(p, rp, gamma_big(p, rp))?;
    let mut singular = Vec::new();
    for s in pts.iter().filter(|q| q.class == CriticalClass::FoldedSaddle) {
        for kind in [CanardKind::Vrai, CanardKind::Faux] {
            let seg = singular_canard(s, kind, p, rp)?;
            singular.push(json!({
                "saddle": { "yhat": s.yhat, "theta": s.theta },
                "kind": to_value(&kind),
                "samples": seg.path.len(),
                "closure": seg.closure,
                "start": seg.path.first().map(to_value),
                "end": seg.path.last().map(to_value),
            }));
        }
    }
    // Far from the singular limit (εγ² not small) the slow manifolds need not
    // separate inside the search window; the singular canards still stand.
    let maximal = match maximal_canard(p, rp) {
        Ok(m) => json!({ "x": m.x, "yhat": m.yhat, "mismatch": m.mismatch }),
        Err(e) => {
            warnings.push(format!("maximal canard: {e}"));
            Value::Null
        }
    };
    Ok(json!({ "singular": singular, "maximal": maximal }))
}

/// `log|μ₃|` against `1/ε` at `fit_gamma` on the canard segment and on the
/// regular family, plus the amplitude check along the segment.
fn explosion(c: &RunConfig, rp: &RegParams) -> Result<Value, CliError> {
    let g = c.fit_gamma;
    if !(0.5..1.0).contains(&g) {
        return Err(CliError::Config(format!("fit gamma {g} must lie on the left canard segment, in [0.5, 1)")));
    }
    let p = c.params()?.with_gamma(0.5);
    let mut canard = Vec::new();
    let mut regular = Vec::new();
    let mut last = None;
    for &eps in &c.fit_eps {
        let r = rp.with_eps(eps);
        let o = RegContinuation { gamma_min: 0.05, return_gamma: Some(g + 0.02), max_points: 1000, ..Default::default() };
        let seed = seed_regularized(0.5, &p, &r, &o.shooting)?;
        let b = continue_branch_regularized(&seed, -1.0, &p, &r, &o)?;
        canard.push(orbit_at_gamma(&b, BranchLabel::PiEpsCenter, g, &p, &r, &o.shooting)?);
        regular.push(orbit_on_family(0.5, 1.0, BranchLabel::PiEpsLeft, g, &p, &r, &o)?);
        last = Some(b);
    }
    let report = no_canard_explosion_check(last.as_ref().expect("fit_eps is non-empty"), Some(multiplier_fit(&canard)), Some(multiplier_fit(&regular)))?;
    Ok(to_value(&report))
}
