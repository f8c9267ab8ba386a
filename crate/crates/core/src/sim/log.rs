use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{SrbState, STATE_DIM};

/// Controller status for one log row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    /// An MPC tick ran at this row and converged.
    Solved,
    /// An MPC tick ran and hit its iteration cap.
    MaxIterations,
    /// An MPC tick failed; the previous control was reused.
    Degraded,
    /// No tick at this row; the last control is held.
    Held,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Solved => "solved",
            RowStatus::MaxIterations => "max_iterations",
            RowStatus::Degraded => "degraded",
            RowStatus::Held => "held",
        }
    }

    pub fn is_tick(self) -> bool {
        self != RowStatus::Held
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub time: f64,
    pub state: SrbState,
    pub reference: SrbState,
    pub control: Vec<f64>,
    /// Solve time of the tick at this row, 0 on held rows.
    pub solve_ms: f64,
    pub status: RowStatus,
}

/// One row per physics step. Columns: `time`, 13 state entries
/// (`r q v omega`, `q` as `s x y z`), the same 13 for the reference,
/// `u0..u{m-1}`, `solve_ms`, `status`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub control_dim: usize,
    pub rows: Vec<LogRow>,
}

const STATE_NAMES: [&str; STATE_DIM] = [
    "r_x", "r_y", "r_z", "q_s", "q_x", "q_y", "q_z", "v_x", "v_y", "v_z", "w_x", "w_y", "w_z",
];

impl RunLog {
    pub fn new(control_dim: usize) -> Self {
        RunLog {
            control_dim,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["time".to_string()];
        h.extend(STATE_NAMES.iter().map(|s| s.to_string()));
        h.extend(STATE_NAMES.iter().map(|s| format!("ref_{s}")));
        h.extend((0..self.control_dim).map(|i| format!("u{i}")));
        h.push("solve_ms".into());
        h.push("status".into());
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        let mut rec: Vec<String> = Vec::with_capacity(30 + self.control_dim);
        for row in &self.rows {
            rec.clear();
            rec.push(format!("{:.6}", row.time));
            for v in row.state.to_vector().iter().chain(row.reference.to_vector().iter()) {
                rec.push(format!("{v:.9e}"));
            }
            rec.extend(row.control.iter().map(|v| format!("{v:.6e}")));
            rec.push(format!("{:.4}", row.solve_ms));
            rec.push(row.status.as_str().into());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> csv::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
