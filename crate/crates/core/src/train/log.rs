//! Per-iteration training log, written as CSV
//! (`iter,phase,loss,reward_mean,val_cider`; absent values left empty).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{MftError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub phase: String,
    pub loss: f64,
    pub reward_mean: Option<f64>,
    pub val_cider: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

pub const LOG_HEADER: &str = "iter,phase,loss,reward_mean,val_cider";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl TrainLog {
    pub fn push(&mut self, iter: usize, phase: &str, loss: f64, reward_mean: Option<f64>) {
        self.rows.push(LogRow {
            iter,
            phase: phase.to_string(),
            loss,
            reward_mean,
            val_cider: None,
        });
    }

    /// Attaches a validation score to the most recent row.
    pub fn mark_validation(&mut self, val_cider: f64) {
        if let Some(r) = self.rows.last_mut() {
            r.val_cider = Some(val_cider);
        }
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.rows.extend(other.rows);
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{}",
                r.iter,
                r.phase,
                r.loss,
                opt(r.reward_mean),
                opt(r.val_cider)
            );
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| MftError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut log = TrainLog::default();
        log.push(1, "xe", 2.5, None);
        log.mark_validation(0.125);
        log.push(2, "scst", 0.1, Some(0.5));
        assert_eq!(
            log.to_csv(),
            "iter,phase,loss,reward_mean,val_cider\n1,xe,2.500000,,0.125000\n2,scst,0.100000,0.500000,\n"
        );
    }
}
