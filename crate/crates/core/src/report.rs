//! CSV schemas for theory curves and sweep reports.
//!
//! Files are UTF-8, comma separated, LF terminated, with a header row.
//! Floats use Rust's `{:.16e}` form (17 significant digits), which
//! round-trips every `f64` exactly; undefined values are written `NaN`.
//!
//! | schema | columns |
//! |--------|---------|
//! | theory | `estimator,n_groups,snr_db,rho,nmse_theory,nmse_floor` |
//! | sweep  | `estimator,n_groups,snr_db,rho,trials,nmse_empirical,stderr,nmse_theory,nmse_floor,seed` |

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::montecarlo::MseReport;

pub const THEORY_COLUMNS: [&str; 6] = ["estimator", "n_groups", "snr_db", "rho", "nmse_theory", "nmse_floor"];
pub const SWEEP_COLUMNS: [&str; 10] = [
    "estimator",
    "n_groups",
    "snr_db",
    "rho",
    "trials",
    "nmse_empirical",
    "stderr",
    "nmse_theory",
    "nmse_floor",
    "seed",
];

/// Closed-form curve point.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoryRow {
    pub estimator: EstimatorKind,
    pub n_groups: usize,
    pub snr_db: f64,
    pub rho: f64,
    pub nmse_theory: f64,
    pub nmse_floor: f64,
}

/// One parsed line of a sweep CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub estimator: EstimatorKind,
    pub n_groups: usize,
    pub snr_db: f64,
    pub rho: f64,
    pub trials: usize,
    pub nmse_empirical: f64,
    pub stderr: f64,
    pub nmse_theory: f64,
    pub nmse_floor: f64,
    pub seed: u64,
}

pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn write_theory<W: Write>(rows: &[TheoryRow], out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(THEORY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.estimator.name().to_string(),
            r.n_groups.to_string(),
            format_float(r.snr_db),
            format_float(r.rho),
            format_float(r.nmse_theory),
            format_float(r.nmse_floor),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep<W: Write>(report: &MseReport, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in &report.rows {
        w.write_record([
            r.estimator.name().to_string(),
            r.n_groups.to_string(),
            format_float(r.snr_db),
            format_float(r.rho),
            r.trials.to_string(),
            format_float(r.nmse_empirical),
            format_float(r.stderr),
            format_float(r.nmse_theory),
            format_float(r.nmse_floor),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn records<R: Read>(input: R, expected: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            origin: "csv".into(),
            line: 1,
            field: "header".into(),
            message: format!("expected '{}', found '{}'", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    r.records().map(|rec| rec.map_err(Error::from)).collect()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line() as usize);
    let raw = rec.get(idx).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse {
        origin: "csv".into(),
        line,
        field: name.into(),
        message: format!("cannot parse '{raw}'"),
    })
}

fn estimator(rec: &csv::StringRecord) -> Result<EstimatorKind> {
    field(rec, 0, "estimator")
}

pub fn parse_theory<R: Read>(input: R) -> Result<Vec<TheoryRow>> {
    records(input, &THEORY_COLUMNS)?
        .iter()
        .map(|rec| {
            Ok(TheoryRow {
                estimator: estimator(rec)?,
                n_groups: field(rec, 1, "n_groups")?,
                snr_db: field(rec, 2, "snr_db")?,
                rho: field(rec, 3, "rho")?,
                nmse_theory: field(rec, 4, "nmse_theory")?,
                nmse_floor: field(rec, 5, "nmse_floor")?,
            })
        })
        .collect()
}

pub fn parse_sweep<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    records(input, &SWEEP_COLUMNS)?
        .iter()
        .map(|rec| {
            Ok(SweepRecord {
                estimator: estimator(rec)?,
                n_groups: field(rec, 1, "n_groups")?,
                snr_db: field(rec, 2, "snr_db")?,
                rho: field(rec, 3, "rho")?,
                trials: field(rec, 4, "trials")?,
                nmse_empirical: field(rec, 5, "nmse_empirical")?,
                stderr: field(rec, 6, "stderr")?,
                nmse_theory: field(rec, 7, "nmse_theory")?,
                nmse_floor: field(rec, 8, "nmse_floor")?,
                seed: field(rec, 9, "seed")?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
        assert_eq!(format_float(-2.5e-300), "-2.5000000000000000e-300");
        for x in [std::f64::consts::PI, 1e-310, 123456.789, f64::MAX] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(format_float(f64::NAN), "NaN");
    }

    #[test]
    fn theory_round_trip_and_layout() {
        let rows = vec![TheoryRow {
            estimator: EstimatorKind::CorrelatedGroupingLmmse,
            n_groups: 4,
            snr_db: -10.0,
            rho: 3.25e-7,
            nmse_theory: 0.5,
            nmse_floor: f64::NAN,
        }];
        let mut buf = Vec::new();
        write_theory(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("estimator,n_groups,snr_db,rho,nmse_theory,nmse_floor\n"));
        assert!(!text.contains('\r'));
        let back = parse_theory(buf.as_slice()).unwrap();
        assert_eq!(back[0].estimator, rows[0].estimator);
        assert_eq!(back[0].rho, rows[0].rho);
        assert!(back[0].nmse_floor.is_nan());
    }

    #[test]
    fn wrong_header_is_rejected_with_location() {
        let err = parse_sweep("a,b\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let bad = "estimator,n_groups,snr_db,rho,nmse_theory,nmse_floor\nLMMSE,x,0,1,1,1\n";
        let err = parse_theory(bad.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, ref field, .. } if field == "n_groups"), "{err}");
    }
}
