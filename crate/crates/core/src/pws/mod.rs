//! Discontinuous (stiction) dynamics: closed-form slip arcs, stick arcs and
//! the event-driven integrator that pieces them together.

mod events;
mod slip;
mod stiction;

pub use events::{
    classify_landing, find_landing, next_event, next_stick_event, Event, EventKind, Landing,
    LandingClass, ROOT_TOL,
};
pub use slip::{slip_flow_closed_form, SlipArc, RESONANCE_GUARD};
pub use stiction::{
    integrate_stiction, is_regular, Arc, BranchPolicy, ForkChoice, StictionOptions, StictionRun,
    Termination, Trajectory,
};
