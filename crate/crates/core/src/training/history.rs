use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of the training history.
///
/// `loss_total` is `loss_mse + w · loss_reg`, where `w` is `alpha` in stage 2
/// and the L1 weight in the L1 regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate at the first step of the epoch.
    pub lr: f64,
    pub alpha: f64,
    pub loss_total: f64,
    pub loss_mse: f64,
    pub loss_reg: f64,
    pub val_nmse_db: f64,
    pub mean_abs_codeword: f64,
}

/// Writes one JSON object per line.
pub fn write_history<W: Write>(w: &mut W, records: &[EpochRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r).map_err(|e| Error::format("history", e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_history<R: BufRead>(r: R) -> Result<Vec<EpochRecord>> {
    r.lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|line| {
            serde_json::from_str(&line?).map_err(|e| Error::format("history", e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let recs = vec![EpochRecord {
            epoch: 0,
            lr: 1e-3,
            alpha: 0.01,
            loss_total: 1.5,
            loss_mse: 1.0,
            loss_reg: 50.0,
            val_nmse_db: -3.25,
            mean_abs_codeword: 0.4,
        }];
        let mut buf = Vec::new();
        write_history(&mut buf, &recs).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 1);
        assert_eq!(read_history(buf.as_slice()).unwrap(), recs);
        assert!(read_history(&b"{oops}\n"[..]).is_err());
    }
}
