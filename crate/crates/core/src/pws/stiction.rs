//! Event-driven integration of stiction solutions.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::events::{classify_landing, find_landing, next_stick_event, Event, EventKind, LandingClass};
use super::slip::SlipArc;
use crate::error::{Error, Result};
use crate::model::{classify, xi, Branch, Params, RegionLabel, SingularSet, State, CLASSIFY_TOL};
use crate::par;

/// What to do when a solution reaches `I±`, where it has two forward continuations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum BranchPolicy {
    #[default]
    StickFirst,
    SlipFirst,
    EnumerateBoth,
}

impl BranchPolicy {
    pub fn name(self) -> &'static str {
        match self {
            BranchPolicy::StickFirst => "StickFirst",
            BranchPolicy::SlipFirst => "SlipFirst",
            BranchPolicy::EnumerateBoth => "EnumerateBoth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StictionOptions {
    /// Upper bound on the integration horizon.
    pub t_max: f64,
    /// Spacing of the stored samples (arc endpoints are always stored).
    pub sample_dt: f64,
    pub max_events: usize,
    /// Cap on enumerated branches; further forks follow `StickFirst`.
    pub max_branches: usize,
}

impl Default for StictionOptions {
    fn default() -> Self {
        Self {
            t_max: 100.0 * TAU,
            sample_dt: 0.01,
            max_events: 100_000,
            max_branches: 64,
        }
    }
}

/// A smooth piece of a stiction solution.
#[derive(Debug, Clone)]
pub struct Arc {
    pub branch: Branch,
    pub t_start: f64,
    pub t_end: f64,
    pub z_start: State,
    slip: Option<SlipArc>,
}

impl Arc {
    pub fn state_at(&self, t: f64) -> State {
        let s = t - self.t_start;
        match &self.slip {
            Some(arc) => arc.state(s),
            None => State::new(self.z_start.x, 0.0, self.z_start.theta + s),
        }
    }

    pub fn z_end(&self) -> State {
        self.state_at(self.t_end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Horizon,
    /// A slip landed on `|ξ| = μ_s`, where the friction law is undefined.
    UndefinedFriction,
    MaxEvents,
}

/// The continuation taken at a singular hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForkChoice {
    pub time: f64,
    pub state: State,
    pub set: SingularSet,
    pub choice: Branch,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub arcs: Vec<Arc>,
    pub events: Vec<Event>,
    pub samples: Vec<(f64, State)>,
    pub policy: BranchPolicy,
    pub termination: Termination,
    pub choices: Vec<ForkChoice>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    fn empty(policy: BranchPolicy) -> Self {
        Self {
            arcs: Vec::new(),
            events: Vec::new(),
            samples: Vec::new(),
            policy,
            termination: Termination::Horizon,
            choices: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn t_end(&self) -> f64 {
        self.arcs.last().map_or(0.0, |a| a.t_end)
    }

    pub fn final_state(&self) -> State {
        self.arcs.last().map(Arc::z_end).expect("trajectory has at least one arc")
    }

    /// State at time `t`, or `None` outside `[0, t_end]`.
    pub fn state_at(&self, t: f64) -> Option<State> {
        if self.arcs.is_empty() || t < self.arcs[0].t_start || t > self.t_end() {
            return None;
        }
        let i = self.arcs.partition_point(|a| a.t_end < t).min(self.arcs.len() - 1);
        Some(self.arcs[i].state_at(t))
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Samples every `dt` within each arc, arc endpoints included.
    pub fn sample(&self, dt: f64) -> Vec<(f64, State)> {
        let mut out = Vec::new();
        for a in &self.arcs {
            let n = (((a.t_end - a.t_start) / dt).ceil() as usize).max(1);
            for k in 0..=n {
                if k == 0 && !out.is_empty() {
                    continue;
                }
                let t = a.t_start + (a.t_end - a.t_start) * k as f64 / n as f64;
                out.push((t, a.state_at(t)));
            }
        }
        out
    }
}

/// True iff the trajectory never touched `I±`.
pub fn is_regular(traj: &Trajectory) -> bool {
    !traj.events.iter().any(|e| matches!(e.kind, EventKind::SingularHit(_)))
}

/// All forward branches produced by one call to [`integrate_stiction`].
#[derive(Debug, Clone)]
pub struct StictionRun {
    pub branches: Vec<Trajectory>,
}

impl StictionRun {
    /// The branch that follows the first listed choice at every fork.
    pub fn primary(&self) -> &Trajectory {
        &self.branches[0]
    }

    pub fn is_forked(&self) -> bool {
        self.branches.len() > 1
    }
}

#[derive(Debug, Clone, Copy)]
enum Mode {
    Stick,
    Slip(f64),
    Fork(SingularSet),
}

struct Ctx<'a> {
    p: &'a Params,
    t_final: f64,
    policy: BranchPolicy,
    opts: &'a StictionOptions,
}

/// Integrates a stiction solution from `z0` over `[0, T]`.
///
/// With [`BranchPolicy::EnumerateBoth`] every singular hit splits the run;
/// the two continuations are integrated concurrently and all leaves are
/// returned, stick choices first.
pub fn integrate_stiction(
    z0: &State,
    t: f64,
    policy: BranchPolicy,
    p: &Params,
    opts: &StictionOptions,
) -> Result<StictionRun> {
    p.validate()?;
    if t < 0.0 {
        return Err(Error::BackwardTime(t));
    }
    if !z0.is_finite() {
        return Err(Error::InvalidParams("non-finite initial state".into()));
    }
    let mut traj = Trajectory::empty(policy);
    let t_final = if t > opts.t_max {
        traj.warnings
            .push(format!("horizon {t} clipped to t_max = {}", opts.t_max));
        opts.t_max
    } else {
        t
    };
    let ctx = Ctx {
        p,
        t_final,
        policy,
        opts,
    };
    let mut z = *z0;
    if z.y.abs() <= CLASSIFY_TOL {
        z.y = 0.0;
    }
    let mode = match classify(&z, p, CLASSIFY_TOL) {
        RegionLabel::GPlus => Mode::Slip(1.0),
        RegionLabel::GMinus => Mode::Slip(-1.0),
        RegionLabel::SigmaS => Mode::Stick,
        RegionLabel::SigmaCMinus => {
            push_event(&mut traj, 0.0, z, EventKind::CrossingDown);
            Mode::Slip(-1.0)
        }
        RegionLabel::SigmaCPlus => {
            push_event(&mut traj, 0.0, z, EventKind::CrossingUp);
            Mode::Slip(1.0)
        }
        RegionLabel::BoundaryCMinus { in_i_minus: false } => {
            push_event(&mut traj, 0.0, z, EventKind::StickToSlipOnset);
            Mode::Slip(-1.0)
        }
        RegionLabel::BoundaryCPlus { in_i_plus: false } => {
            push_event(&mut traj, 0.0, z, EventKind::StickToSlipOnset);
            Mode::Slip(1.0)
        }
        RegionLabel::BoundaryCMinus { in_i_minus: true } => {
            push_event(&mut traj, 0.0, z, EventKind::SingularHit(SingularSet::IMinus));
            Mode::Fork(SingularSet::IMinus)
        }
        RegionLabel::BoundaryCPlus { in_i_plus: true } => {
            push_event(&mut traj, 0.0, z, EventKind::SingularHit(SingularSet::IPlus));
            Mode::Fork(SingularSet::IPlus)
        }
    };
    let mut branches = advance(&ctx, traj, z, 0.0, mode, opts.max_branches.max(1))?;
    for b in &mut branches {
        b.samples = b.sample(opts.sample_dt);
    }
    Ok(StictionRun { branches })
}

fn push_event(traj: &mut Trajectory, time: f64, state: State, kind: EventKind) {
    traj.events.push(Event {
        time,
        state,
        kind,
        tangency: None,
    });
}

fn push_arc(traj: &mut Trajectory, branch: Branch, t_start: f64, t_end: f64, z: State, slip: Option<SlipArc>) {
    traj.arcs.push(Arc {
        branch,
        t_start,
        t_end,
        z_start: z,
        slip,
    });
}

/// Integrates from `(z, t)` in `mode` until the horizon. `budget` is the
/// number of branches this subtree may still produce.
fn advance(ctx: &Ctx, mut traj: Trajectory, mut z: State, mut t: f64, mut mode: Mode, budget: usize) -> Result<Vec<Trajectory>> {
    let p = ctx.p;
    loop {
        if traj.events.len() >= ctx.opts.max_events {
            traj.termination = Termination::MaxEvents;
            traj.warnings.push(format!("stopped after {} events", traj.events.len()));
            return Ok(vec![traj]);
        }
        let remaining = ctx.t_final - t;
        match mode {
            Mode::Fork(set) => {
                let slip_sigma = match set {
                    SingularSet::IMinus => -1.0,
                    SingularSet::IPlus => 1.0,
                };
                let slip_branch = if slip_sigma < 0.0 { Branch::Minus } else { Branch::Plus };
                let fork = |choice: Branch| ForkChoice {
                    time: t,
                    state: z,
                    set,
                    choice,
                };
                let enumerate = ctx.policy == BranchPolicy::EnumerateBoth && budget >= 2 && remaining > 0.0;
                if enumerate {
                    let mut a = traj.clone();
                    a.choices.push(fork(Branch::Stick));
                    let mut b = traj;
                    b.choices.push(fork(slip_branch));
                    let (ra, rb) = par::join(
                        || advance(ctx, a, z, t, Mode::Stick, budget / 2),
                        || advance(ctx, b, z, t, Mode::Slip(slip_sigma), budget - budget / 2),
                    );
                    let mut out = ra?;
                    out.extend(rb?);
                    return Ok(out);
                }
                let choice = match ctx.policy {
                    BranchPolicy::SlipFirst => slip_branch,
                    _ => Branch::Stick,
                };
                traj.choices.push(fork(choice));
                traj.warnings.push(format!(
                    "singular hit on {} at t = {t}: continued on {:?}",
                    set.name(),
                    choice
                ));
                mode = if choice == Branch::Stick {
                    Mode::Stick
                } else {
                    Mode::Slip(slip_sigma)
                };
            }
            _ if remaining <= 0.0 => {
                if traj.arcs.is_empty() {
                    let branch = match mode {
                        Mode::Slip(s) if s > 0.0 => Branch::Plus,
                        Mode::Slip(_) => Branch::Minus,
                        _ => Branch::Stick,
                    };
                    push_arc(&mut traj, branch, t, t, z, None);
                }
                return Ok(vec![traj]);
            }
            Mode::Stick => match next_stick_event(&z, p, remaining) {
                Err(Error::NoEventWithinHorizon { .. }) => {
                    push_arc(&mut traj, Branch::Stick, t, ctx.t_final, z, None);
                    return Ok(vec![traj]);
                }
                Err(e) => return Err(e),
                Ok(ev) => {
                    push_arc(&mut traj, Branch::Stick, t, t + ev.time, z, None);
                    t += ev.time;
                    z = ev.state;
                    push_event(&mut traj, t, z, ev.kind);
                    mode = match ev.kind {
                        EventKind::SingularHit(set) => Mode::Fork(set),
                        _ => Mode::Slip(if xi(z.x, z.theta, p) > 0.0 { -1.0 } else { 1.0 }),
                    };
                }
            },
            Mode::Slip(sigma) => {
                let arc = SlipArc::new(z, sigma, p, remaining)?;
                let branch = if sigma > 0.0 { Branch::Plus } else { Branch::Minus };
                let Some(l) = find_landing(&arc, remaining)? else {
                    push_arc(&mut traj, branch, t, ctx.t_final, z, Some(arc));
                    return Ok(vec![traj]);
                };
                push_arc(&mut traj, branch, t, t + l.t, z, Some(arc));
                t += l.t;
                z = l.state;
                let class = classify_landing(&z, sigma, p, l.touch);
                let (kind, tangency) = match class {
                    LandingClass::Crossing => {
                        mode = Mode::Slip(-sigma);
                        (if sigma < 0.0 { EventKind::CrossingUp } else { EventKind::CrossingDown }, None)
                    }
                    LandingClass::Stick => {
                        mode = Mode::Stick;
                        (EventKind::SlipToStickLanding, None)
                    }
                    LandingClass::GrazeContinue(label) => {
                        mode = Mode::Slip(sigma);
                        (EventKind::TangencyGraze, Some(label))
                    }
                    LandingClass::GrazeStick(label) => {
                        mode = Mode::Stick;
                        (EventKind::TangencyGraze, Some(label))
                    }
                    LandingClass::Undefined => (EventKind::UndefinedFrictionHit, None),
                };
                traj.events.push(Event {
                    time: t,
                    state: z,
                    kind,
                    tangency,
                });
                if kind == EventKind::UndefinedFrictionHit {
                    traj.termination = Termination::UndefinedFriction;
                    traj.warnings.push(format!(
                        "slip landed on |xi| = mu_s at t = {t} (x = {}, theta = {}); friction undefined, halted",
                        z.x, z.theta
                    ));
                    return Ok(vec![traj]);
                }
            }
        }
    }
}
