//! Per-epoch metrics log, serialized as CSV with a fixed header.

use crate::error::Result;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Unweighted 3-class cross-entropy; absent for single-task runs.
    pub loss3: Option<f64>,
    pub loss10: f64,
    pub train_acc10: f64,
    pub train_acc3: Option<f64>,
    pub val_acc10: Option<f64>,
    pub val_acc3: Option<f64>,
    pub w3: f64,
    pub w10: f64,
}

/// Append-only log, one record per completed epoch.
#[derive(Debug, Clone, Default)]
pub struct MetricsLog {
    records: Vec<EpochRecord>,
}

pub const METRICS_HEADER: &str =
    "epoch,lr,loss3,loss10,train_acc10,train_acc3,val_acc10,val_acc3,w3,w10";

impl MetricsLog {
    pub fn new() -> Self {
        MetricsLog::default()
    }

    pub fn push(&mut self, record: EpochRecord) {
        debug_assert_eq!(
            record.epoch,
            self.records.len(),
            "one record per epoch, in order"
        );
        self.records.push(record);
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{:?},{},{:?},{:?},{},{},{},{:?},{:?}\n",
                r.epoch,
                r.lr,
                opt(r.loss3),
                r.loss10,
                r.train_acc10,
                opt(r.train_acc3),
                opt(r.val_acc10),
                opt(r.val_acc3),
                r.w3,
                r.w10
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_fixed_header_and_blank_optionals() {
        let mut log = MetricsLog::new();
        log.push(EpochRecord {
            epoch: 0,
            lr: 0.001,
            loss3: None,
            loss10: 2.3,
            train_acc10: 0.1,
            train_acc3: None,
            val_acc10: Some(0.12),
            val_acc3: None,
            w3: 1.0,
            w10: 5.0,
        });
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), METRICS_HEADER);
        let row = lines.next().unwrap();
        assert_eq!(row, "0,0.001,,2.3,0.1,,0.12,,1.0,5.0");
        assert!(lines.next().is_none());
    }
}
