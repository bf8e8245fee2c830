use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::chart::render_svg;
use super::crossover::CrossoverReport;
use super::measure::BenchRecord;
use crate::error::{Error, Result};
use crate::presets::Mode;

pub const CSV_HEADER: &str = "preset,mode,duration_s,tokens,peak_bytes,wall_s_median,wall_s_p10,wall_s_p90";

#[derive(Serialize, Deserialize)]
struct CsvRow {
    preset: String,
    mode: Mode,
    duration_s: f64,
    tokens: usize,
    peak_bytes: u64,
    wall_s_median: f64,
    wall_s_p10: f64,
    wall_s_p90: f64,
}

/// Paths written by [`emit_report`].
#[derive(Clone, Debug)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub json: PathBuf,
}

/// Floats are written in shortest round-trip form, so reading the file back
/// reproduces every numeric field bit for bit.
pub fn write_csv(path: &Path, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for r in records {
        w.serialize(CsvRow {
            preset: r.preset.clone(),
            mode: r.mode,
            duration_s: r.duration_s,
            tokens: r.tokens,
            peak_bytes: r.peak_bytes,
            wall_s_median: r.wall_s_median,
            wall_s_p10: r.wall_s_p10,
            wall_s_p90: r.wall_s_p90,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Records from a CSV written by [`write_csv`]. The seed and raw samples are
/// not stored there and come back as 0 and empty.
pub fn read_csv(path: &Path) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Usage(format!("{}: unexpected header '{header}'", path.display())));
    }
    r.deserialize::<CsvRow>()
        .map(|row| {
            let row = row?;
            Ok(BenchRecord {
                preset: row.preset,
                mode: row.mode,
                seed: 0,
                duration_s: row.duration_s,
                tokens: row.tokens,
                peak_bytes: row.peak_bytes,
                wall_s_median: row.wall_s_median,
                wall_s_p10: row.wall_s_p10,
                wall_s_p90: row.wall_s_p90,
                wall_samples: Vec::new(),
            })
        })
        .collect()
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    if !e.is_io_error() {
        return Error::Csv(e);
    }
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        _ => unreachable!("checked is_io_error"),
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    records: &'a [BenchRecord],
    comparisons: &'a [CrossoverReport],
}

/// Write `bench.csv`, `bench.svg` and `report.json` into `out_dir`,
/// creating it if needed.
pub fn emit_report(records: &[BenchRecord], comparisons: &[CrossoverReport], out_dir: &Path) -> Result<ReportFiles> {
    if records.is_empty() {
        return Err(Error::Usage("no records to report".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = ReportFiles {
        csv: out_dir.join("bench.csv"),
        svg: out_dir.join("bench.svg"),
        json: out_dir.join("report.json"),
    };
    write_csv(&files.csv, records)?;
    fs::write(&files.svg, render_svg(records)).map_err(|e| Error::io(&files.svg, e))?;
    let json = serde_json::to_string_pretty(&JsonReport { records, comparisons })?;
    fs::write(&files.json, json).map_err(|e| Error::io(&files.json, e))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::super::fit::tests::synthetic;
    use super::*;

    fn sample() -> Vec<BenchRecord> {
        let mut recs = synthetic(&[1000, 2000, 4000], |l| 1.234567890123e-7 * l * l);
        recs.extend(synthetic(&[1000, 2000, 4000], |l| 3.3e-5 * l).into_iter().map(|mut r| {
            r.preset = "other".into();
            r.mode = Mode::ArDecode;
            r.wall_s_p10 = r.wall_s_median / 3.0;
            r
        }));
        recs
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let recs = sample();
        let files = emit_report(&recs, &[], dir.path()).unwrap();
        let text = fs::read_to_string(&files.csv).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().count(), 1 + recs.len());
        let back = read_csv(&files.csv).unwrap();
        assert_eq!(back, recs);
        assert!(fs::read_to_string(&files.svg).unwrap().starts_with("<svg"));
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files.json).unwrap()).unwrap();
        assert_eq!(json["records"].as_array().unwrap().len(), recs.len());
    }

    #[test]
    fn empty_records_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&[], &[], dir.path()).unwrap_err().is_usage());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, "x").unwrap();
        let err = emit_report(&sample(), &[], &file.join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err}");
    }
}
