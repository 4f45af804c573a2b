use serde_json::json;
use std::io::Write;

use stiction::export::{write_events_jsonl, write_samples_csv, write_trajectory_csv};
use stiction::model::State;
use stiction::pws::{integrate_stiction, EventKind, StictionOptions, Termination};
use stiction::regularization::stiff_integrate;

use crate::config::{Mode, Policy, RunConfig};
use crate::{create_file, to_value, CliError, Outcome};

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub y0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: Option<f64>,
    /// Horizon.
    #[arg(long = "T", alias = "t-final")]
    pub t: Option<f64>,
    #[arg(long, value_enum)]
    pub policy: Option<Policy>,
    #[arg(long)]
    pub sample_dt: Option<f64>,
}

impl Args {
    pub fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.mode {
            c.mode = v;
        }
        if let Some(v) = self.policy {
            c.policy = v;
        }
        for (src, dst) in [(self.x0, &mut c.x0), (self.y0, &mut c.y0), (self.theta0, &mut c.theta0), (self.t, &mut c.t), (self.sample_dt, &mut c.sample_dt)] {
            if let Some(v) = src {
                *dst = v;
            }
        }
    }
}

pub fn run(_: &Args, c: &RunConfig) -> Result<Outcome, CliError> {
    let p = c.params()?;
    let z0 = State::new(c.x0, c.y0, c.theta0);
    match c.mode {
        Mode::Pws => {
            let opts = StictionOptions { sample_dt: c.sample_dt, ..StictionOptions::default() };
            let run = integrate_stiction(&z0, c.t, c.policy.to_core(), &p, &opts)?;
            let mut warnings = Vec::new();
            let mut branches = Vec::new();
            for (k, tr) in run.branches.iter().enumerate() {
                let mut w = create_file(&c.out, &format!("trajectory_{k}.csv"))?;
                write_trajectory_csv(&mut w, tr, &p)?;
                w.flush()?;
                let mut w = create_file(&c.out, &format!("events_{k}.jsonl"))?;
                write_events_jsonl(&mut w, &tr.events)?;
                w.flush()?;
                let slips = tr.events.iter().filter(|e| e.kind == EventKind::StickToSlipOnset).count();
                warnings.extend(tr.warnings.iter().map(|s| format!("branch {k}: {s}")));
                if tr.termination == Termination::UndefinedFriction {
                    warnings.push(format!("branch {k}: stopped where the friction law is undefined"));
                }
                branches.push(json!({
                    "index": k,
                    "trajectory": format!("trajectory_{k}.csv"),
                    "events": format!("events_{k}.jsonl"),
                    "event_count": tr.events.len(),
                    "slip_onsets": slips,
                    "t_end": tr.t_end(),
                    "termination": to_value(&tr.termination),
                    "choices": to_value(&tr.choices),
                    "final_state": tr.samples.last().map(|s| to_value(&s.1)),
                }));
            }
            let manifest = json!({ "policy": c.policy.to_core().name(), "branches": branches });
            if run.is_forked() {
                let mut w = create_file(&c.out, "forks.json")?;
                writeln!(w, "{}", serde_json::to_string_pretty(&manifest).expect("json"))?;
                w.flush()?;
            }
            Ok(Outcome { results: manifest, warnings })
        }
        Mode::Reg => {
            let rp = c.reg_params(&p)?;
            let tr = stiff_integrate(&z0, c.t, &p, &rp, c.tol)?;
            let mut w = create_file(&c.out, "trajectory.csv")?;
            write_samples_csv(&mut w, &tr.samples, &p)?;
            w.flush()?;
            Ok(Outcome {
                results: json!({
                    "trajectory": "trajectory.csv",
                    "samples": tr.samples.len(),
                    "rejected_steps": tr.rejected,
                    "final_state": to_value(&tr.final_state()),
                }),
                warnings: Vec::new(),
            })
        }
    }
}
