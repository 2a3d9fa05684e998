//! CSV step histories with a fixed header.

use std::io::{Read, Write};

use crate::fem::solver::StepRecord;

pub const HISTORY_HEADER: [&str; 8] =
    ["step", "load_factor", "displacement", "reaction_force", "max_sigma11", "max_kappa", "max_d", "max_phi"];

/// Formats with 17 significant digits.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_history(w: impl Write, records: &[StepRecord]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HISTORY_HEADER)?;
    for r in records {
        let values = [r.load_factor, r.displacement, r.reaction_force, r.max_sigma11, r.max_kappa, r.max_d, r.max_phi];
        let mut row = vec![r.step.to_string()];
        row.extend(values.iter().map(|&v| format_real(v)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum HistoryError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
}

pub fn read_history(r: impl Read) -> Result<Vec<StepRecord>, HistoryError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != HISTORY_HEADER {
        return Err(HistoryError::Header(header));
    }
    rdr.deserialize().map(|r| r.map_err(HistoryError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let records = vec![
            StepRecord {
                step: 1,
                load_factor: 0.1,
                displacement: 1.0 / 3.0,
                reaction_force: -2.5e-300,
                max_sigma11: std::f64::consts::PI,
                max_kappa: 0.0,
                max_d: 1.0 - 1e-16,
                max_phi: 123456.789,
            },
            StepRecord { step: 2, load_factor: 0.2, ..records_zero() },
        ];
        let mut buf = Vec::new();
        write_history(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), HISTORY_HEADER.join(","));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_history(buf.as_slice()).unwrap(), records);
    }

    fn records_zero() -> StepRecord {
        StepRecord {
            step: 0,
            load_factor: 0.0,
            displacement: 0.0,
            reaction_force: 0.0,
            max_sigma11: 0.0,
            max_kappa: 0.0,
            max_d: 0.0,
            max_phi: 0.0,
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(matches!(read_history("a,b\n1,2\n".as_bytes()), Err(HistoryError::Header(_))));
    }
}
