//! Run configuration: defaults, JSON file, then command-line flags.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use stiction::model::Params;
use stiction::pws::BranchPolicy;
use stiction::regularization::RegParams;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pws,
    Reg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Stick,
    Slip,
    Enumerate,
}

impl Policy {
    pub fn to_core(self) -> BranchPolicy {
        match self {
            Policy::Stick => BranchPolicy::StickFirst,
            Policy::Slip => BranchPolicy::SlipFirst,
            Policy::Enumerate => BranchPolicy::EnumerateBoth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mu_s: f64,
    pub mu_d: f64,
    pub gamma: f64,
    pub eps: f64,
    pub delta: f64,
    pub x0: f64,
    pub y0: f64,
    pub theta0: f64,
    /// Integration horizon.
    pub t: f64,
    pub mode: Mode,
    pub policy: Policy,
    pub tol: f64,
    pub sample_dt: f64,
    pub gamma_range: Option<[f64; 2]>,
    /// Grid size of a sharded slip-stick sweep over `gamma_range`.
    pub sweep: Option<usize>,
    pub eps_list: Vec<f64>,
    /// ε values and γ for the multiplier fit on the canard segment.
    pub fit_eps: Vec<f64>,
    pub fit_gamma: f64,
    pub transversality_gammas: Vec<f64>,
    pub workers: Option<usize>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mu_s: 1.1,
            mu_d: 0.4,
            gamma: 2.0,
            eps: 1e-3,
            delta: 0.6,
            x0: 0.0,
            y0: 0.0,
            theta0: 0.0,
            t: 2.0 * TAU,
            mode: Mode::Pws,
            policy: Policy::Stick,
            tol: 1e-9,
            sample_dt: 0.01,
            gamma_range: None,
            sweep: None,
            eps_list: vec![1e-4, 3e-4, 1e-3, 3e-3],
            fit_eps: vec![2e-3, 1e-3, 5e-4],
            fit_gamma: 0.65,
            transversality_gammas: vec![5.0, 15.0],
            workers: None,
            out: PathBuf::from("."),
        }
    }
}

/// Flags shared by every subcommand. `None` keeps the file or default value.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON config file; flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps (default: number of cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub mu_s: Option<f64>,
    #[arg(long, global = true)]
    pub mu_d: Option<f64>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// ε, or a comma-separated list for ε sweeps.
    #[arg(long, global = true, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// `lo:hi`.
    #[arg(long, global = true, value_parser = parse_range)]
    pub gamma_range: Option<[f64; 2]>,
}

fn parse_range(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok([lo, hi])
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = o.$f.clone() { self.$f = v; })*};
        }
        set!(mu_s, mu_d, gamma, delta, tol, out);
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
        if let Some(r) = o.gamma_range {
            self.gamma_range = Some(r);
        }
        if let Some(e) = &o.eps {
            if let [single] = e.as_slice() {
                self.eps = *single;
            }
            self.eps_list = e.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let all_finite = [self.mu_s, self.mu_d, self.gamma, self.eps, self.delta, self.x0, self.y0, self.theta0, self.t, self.tol]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return bad("non-finite parameter".into());
        }
        if !(self.mu_d > 0.0 && self.mu_s > self.mu_d) {
            return bad(format!("need 0 < mu_d < mu_s, got mu_d = {}, mu_s = {}", self.mu_d, self.mu_s));
        }
        if self.gamma <= 0.0 {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.eps_list.is_empty() || self.fit_eps.is_empty() {
            return bad("eps lists must not be empty".into());
        }
        if !(self.eps > 0.0) || self.eps_list.iter().chain(&self.fit_eps).any(|e| !(*e > 0.0)) {
            return bad("eps must be positive".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.t < 0.0 {
            return bad(format!("horizon must be non-negative, got {}", self.t));
        }
        if !(self.tol > 0.0) || !(self.sample_dt > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if let Some([lo, hi]) = self.gamma_range {
            if !(lo > 0.0 && lo < hi) {
                return bad(format!("gamma range {lo}:{hi} is empty"));
            }
        }
        if self.workers == Some(0) || self.sweep == Some(0) {
            return bad("workers and sweep size must be at least 1".into());
        }
        Ok(())
    }

    pub fn params(&self) -> Result<Params, CliError> {
        Params::new(self.gamma, self.mu_s, self.mu_d).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn reg_params(&self, p: &Params) -> Result<RegParams, CliError> {
        RegParams::new(self.eps, self.delta, p).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let mut c: RunConfig = serde_json::from_str(r#"{"gamma": 3.0, "eps": 0.01}"#).unwrap();
        assert_eq!(c.mu_s, 1.1);
        c.apply(&Overrides { gamma: Some(5.0), ..Default::default() });
        assert_eq!(c.gamma, 5.0);
        assert_eq!(c.eps, 0.01);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"gama": 3.0}"#).is_err());
        let c = RunConfig { mu_s: 0.3, ..Default::default() };
        assert!(c.validate().is_err());
        assert_eq!(parse_range("1.05:6").unwrap(), [1.05, 6.0]);
    }
}
