//! Plain-text artifact writers shared by the library and the CLI.

use std::io::{self, Write};

use crate::model::{classify, Params, State, CLASSIFY_TOL};
use crate::pws::{Event, Trajectory};

/// Formats a float with 17 significant digits, enough to round-trip.
pub fn fmt17(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v:.16e}")
}

pub const TRAJECTORY_HEADER: &str = "t,x,y,theta,region_label";

/// Writes `(t, state)` rows with region labels.
pub fn write_samples_csv<W: Write>(mut w: W, samples: &[(f64, State)], p: &Params) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for (t, z) in samples {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt17(*t),
            fmt17(z.x),
            fmt17(z.y),
            fmt17(z.theta),
            classify(z, p, CLASSIFY_TOL).as_str()
        )?;
    }
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory, p: &Params) -> io::Result<()> {
    write_samples_csv(w, &traj.samples, p)
}

/// One JSON object per line: `{"t": …, "kind": …, "state": {…}}`.
pub fn write_events_jsonl<W: Write>(mut w: W, events: &[Event]) -> io::Result<()> {
    for e in events {
        let mut obj = serde_json::json!({
            "t": e.time,
            "kind": e.kind.name(),
            "state": { "x": e.state.x, "y": e.state.y, "theta": e.state.theta },
        });
        if let Some(l) = e.tangency {
            obj["tangency"] = serde_json::json!(format!("{l:?}"));
        }
        writeln!(w, "{obj}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for &v in &[0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::f64::consts::PI] {
            let s = fmt17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt17(0.0), "0");
    }
}
