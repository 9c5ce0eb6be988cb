use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOSS_CSV_HEADER: [&str; 6] = ["step", "epoch", "d_loss", "g_loss", "q_loss_real", "q_loss_fake"];

/// One critic update. The last critic update of each cycle also carries the
/// generator and classifier losses of the updates that followed it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    /// 1-based critic update count.
    pub step: u64,
    pub epoch: u64,
    pub d_loss: f64,
    pub g_loss: Option<f64>,
    pub q_loss_real: Option<f64>,
    pub q_loss_fake: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossLog {
    rows: Vec<LossRow>,
}

impl LossLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a row; steps must be strictly increasing.
    pub fn push(&mut self, row: LossRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.step <= last.step {
                return Err(Error::InvalidArgument(format!("loss step {} after step {}", row.step, last.step)));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub(crate) fn last_mut(&mut self) -> Option<&mut LossRow> {
        self.rows.last_mut()
    }

    pub fn rows(&self) -> &[LossRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows that carry a generator step.
    pub fn generator_rows(&self) -> impl Iterator<Item = &LossRow> {
        self.rows.iter().filter(|r| r.g_loss.is_some())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn export_loss_csv(log: &LossLog, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LOSS_CSV_HEADER)?;
    for r in log.rows() {
        w.write_record([
            r.step.to_string(),
            r.epoch.to_string(),
            r.d_loss.to_string(),
            opt(r.g_loss),
            opt(r.q_loss_real),
            opt(r.q_loss_fake),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_csv(path: &Path) -> Result<LossLog> {
    let malformed = |m: String| Error::Malformed { path: path.to_path_buf(), message: m };
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(LOSS_CSV_HEADER) {
        return Err(malformed("unexpected loss CSV header".into()));
    }
    let mut log = LossLog::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize| -> Result<f64> {
            field(k).parse().map_err(|_| malformed(format!("row {}: bad {}", i + 1, LOSS_CSV_HEADER[k])))
        };
        let opt_num = |k: usize| -> Result<Option<f64>> { if field(k).is_empty() { Ok(None) } else { num(k).map(Some) } };
        let int = |k: usize| -> Result<u64> {
            field(k).parse().map_err(|_| malformed(format!("row {}: bad {}", i + 1, LOSS_CSV_HEADER[k])))
        };
        log.push(LossRow {
            step: int(0)?,
            epoch: int(1)?,
            d_loss: num(2)?,
            g_loss: opt_num(3)?,
            q_loss_real: opt_num(4)?,
            q_loss_fake: opt_num(5)?,
        })?;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64) -> LossRow {
        LossRow { step, epoch: 0, d_loss: -0.1 * step as f64, g_loss: None, q_loss_real: None, q_loss_fake: None }
    }

    #[test]
    fn steps_strictly_increase() {
        let mut log = LossLog::new();
        log.push(row(1)).unwrap();
        assert!(log.push(row(1)).is_err());
        log.push(row(2)).unwrap();
    }

    #[test]
    fn empty_log_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.csv");
        export_loss_csv(&LossLog::new(), &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "step,epoch,d_loss,g_loss,q_loss_real,q_loss_fake\n");
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.csv");
        let mut log = LossLog::new();
        log.push(row(1)).unwrap();
        log.push(row(2)).unwrap();
        log.push(LossRow { g_loss: Some(0.1 + 0.2), q_loss_real: Some(1e-17), q_loss_fake: Some(2.4849066497880004), ..row(3) })
            .unwrap();
        export_loss_csv(&log, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 4);
        assert_eq!(read_loss_csv(&p).unwrap(), log);
    }
}
