use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Timelike, Utc};

use super::{DataError, DetectorMeta, HourlyRecord, EVAC_COLUMNS, INCIDENT_COLUMNS};

pub const META_FILE: &str = "meta.csv";
pub const RECORDS_FILE: &str = "records.csv";

pub const META_HEADER: [&str; 6] = ["detector_id", "highway", "milepost", "lanes", "lat", "lon"];

pub const RECORDS_HEADER: [&str; 19] = [
    "detector_id",
    "timestamp_iso8601",
    "flow",
    "speed",
    INCIDENT_COLUMNS[0],
    INCIDENT_COLUMNS[1],
    INCIDENT_COLUMNS[2],
    INCIDENT_COLUMNS[3],
    INCIDENT_COLUMNS[4],
    INCIDENT_COLUMNS[5],
    INCIDENT_COLUMNS[6],
    INCIDENT_COLUMNS[7],
    EVAC_COLUMNS[0],
    EVAC_COLUMNS[1],
    EVAC_COLUMNS[2],
    EVAC_COLUMNS[3],
    EVAC_COLUMNS[4],
    EVAC_COLUMNS[5],
    EVAC_COLUMNS[6],
];

struct Ctx<'a> {
    file: &'a str,
    line: u64,
}

impl Ctx<'_> {
    fn err(&self, message: impl Into<String>) -> DataError {
        DataError::Schema { file: self.file.to_string(), line: self.line, message: message.into() }
    }

    fn number(&self, col: &str, raw: &str) -> Result<f64, DataError> {
        let v: f64 = raw.trim().parse().map_err(|_| self.err(format!("column {col}: not a number: {raw:?}")))?;
        if !v.is_finite() {
            return Err(self.err(format!("column {col}: non-finite value")));
        }
        Ok(v)
    }

    fn optional(&self, col: &str, raw: &str) -> Result<Option<f64>, DataError> {
        if raw.trim().is_empty() {
            Ok(None)
        } else {
            self.number(col, raw).map(Some)
        }
    }
}

fn check_header(file: &str, got: &csv::StringRecord, want: &[&str]) -> Result<(), DataError> {
    let got: Vec<&str> = got.iter().map(str::trim).collect();
    if got != want {
        return Err(DataError::Schema {
            file: file.to_string(),
            line: 1,
            message: format!("header must be `{}`, got `{}`", want.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn reader(path: &Path) -> Result<csv::Reader<File>, DataError> {
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(File::open(path)?))
}

fn parse_meta(path: &Path) -> Result<Vec<DetectorMeta>, DataError> {
    let file = path.display().to_string();
    let mut rdr = reader(path)?;
    check_header(&file, rdr.headers()?, &META_HEADER)?;
    let mut metas = Vec::new();
    let mut ids = HashSet::new();
    let mut positions = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let ctx = Ctx { file: &file, line: rec.position().map_or(0, |p| p.line()) };
        if rec.len() != META_HEADER.len() {
            return Err(ctx.err(format!("expected {} fields, got {}", META_HEADER.len(), rec.len())));
        }
        let detector_id = rec[0].trim().to_string();
        if detector_id.is_empty() {
            return Err(ctx.err("empty detector_id"));
        }
        let highway = rec[1].parse().map_err(|e: String| ctx.err(e))?;
        let milepost = ctx.number("milepost", &rec[2])?;
        if milepost < 0.0 {
            return Err(ctx.err("milepost must be >= 0"));
        }
        let lanes: u32 = rec[3].trim().parse().map_err(|_| ctx.err("lanes must be a positive integer"))?;
        if lanes < 1 {
            return Err(ctx.err("lanes must be >= 1"));
        }
        let lat = ctx.number("lat", &rec[4])?;
        let lon = ctx.number("lon", &rec[5])?;
        if !ids.insert(detector_id.clone()) {
            return Err(ctx.err(format!("duplicate detector_id {detector_id}")));
        }
        if !positions.insert((highway, milepost.to_bits())) {
            return Err(ctx.err(format!("duplicate position {highway} milepost {milepost}")));
        }
        metas.push(DetectorMeta { detector_id, highway, milepost, lanes, lat, lon });
    }
    Ok(metas)
}

fn parse_timestamp(ctx: &Ctx<'_>, raw: &str) -> Result<DateTime<Utc>, DataError> {
    let ts = DateTime::parse_from_rfc3339(raw.trim())
        .map_err(|e| ctx.err(format!("bad timestamp {raw:?}: {e}")))?
        .with_timezone(&Utc);
    if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
        return Err(ctx.err(format!("timestamp {raw:?} is not on an hour boundary")));
    }
    Ok(ts)
}

fn parse_records(path: &Path, known: &HashMap<&str, ()>) -> Result<Vec<HourlyRecord>, DataError> {
    let file = path.display().to_string();
    let mut rdr = reader(path)?;
    check_header(&file, rdr.headers()?, &RECORDS_HEADER)?;
    let mut out = Vec::new();
    let mut seen: HashSet<(String, i64)> = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let ctx = Ctx { file: &file, line };
        if rec.len() != RECORDS_HEADER.len() {
            return Err(ctx.err(format!("expected {} fields, got {}", RECORDS_HEADER.len(), rec.len())));
        }
        let detector_id = rec[0].trim().to_string();
        if !known.contains_key(detector_id.as_str()) {
            return Err(DataError::UnknownDetector { file, line, detector: detector_id });
        }
        let timestamp = parse_timestamp(&ctx, &rec[1])?;
        let flow = ctx.optional("flow", &rec[2])?;
        if flow.is_some_and(|f| f < 0.0) {
            return Err(ctx.err("flow must be >= 0"));
        }
        let speed = ctx.optional("speed", &rec[3])?;
        if speed.is_some_and(|s| s < 0.0) {
            return Err(ctx.err("speed must be >= 0"));
        }
        let mut incident = [0.0; 8];
        for (k, col) in INCIDENT_COLUMNS.iter().enumerate() {
            let v = ctx.optional(col, &rec[4 + k])?.unwrap_or(0.0);
            if v < 0.0 {
                return Err(ctx.err(format!("{col} must be >= 0")));
            }
            incident[k] = v;
        }
        let mut evacuation = [0.0; 7];
        for (k, col) in EVAC_COLUMNS.iter().enumerate() {
            evacuation[k] = ctx.optional(col, &rec[12 + k])?.unwrap_or(0.0);
        }
        if !seen.insert((detector_id.clone(), timestamp.timestamp())) {
            return Err(DataError::Duplicate {
                file,
                line,
                detector: detector_id,
                timestamp: format_timestamp(timestamp),
            });
        }
        out.push(HourlyRecord { detector_id, timestamp, flow, speed, incident, evacuation });
    }
    Ok(out)
}

/// Reads the detector table and the hourly records.
///
/// Records come back sorted by (detector id, timestamp).
pub fn load_csv(
    meta_path: &Path,
    records_path: &Path,
) -> Result<(Vec<DetectorMeta>, Vec<HourlyRecord>), DataError> {
    let metas = parse_meta(meta_path)?;
    let known: HashMap<&str, ()> = metas.iter().map(|m| (m.detector_id.as_str(), ())).collect();
    let mut records = parse_records(records_path, &known)?;
    records.sort_by(|a, b| a.detector_id.cmp(&b.detector_id).then(a.timestamp.cmp(&b.timestamp)));
    Ok((metas, records))
}

pub(crate) fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn fmt_num(v: f64) -> String {
    // shortest representation that round-trips
    let s = format!("{v}");
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

pub fn write_meta_csv(path: &Path, metas: &[DetectorMeta]) -> Result<(), DataError> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    writeln!(f, "{}", META_HEADER.join(","))?;
    for m in metas {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            m.detector_id,
            m.highway,
            fmt_num(m.milepost),
            m.lanes,
            fmt_num(m.lat),
            fmt_num(m.lon)
        )?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_records_csv(path: &Path, records: &[HourlyRecord]) -> Result<(), DataError> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    writeln!(f, "{}", RECORDS_HEADER.join(","))?;
    for r in records {
        let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
        write!(f, "{},{},{},{}", r.detector_id, format_timestamp(r.timestamp), opt(r.flow), opt(r.speed))?;
        for v in r.incident.iter().chain(r.evacuation.iter()) {
            write!(f, ",{}", fmt_num(*v))?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    const META: &str = "detector_id,highway,milepost,lanes,lat,lon\nA,I75,10,3,28.1,-82.4\nB,I75,12.5,3,28.2,-82.4\n";

    fn row(id: &str, ts: &str, flow: &str) -> String {
        format!("{id},{ts},{flow},60,0,0,0,0,0,0,0,0,1000,5,100,48,2,1,0\n")
    }

    fn write(dir: &Path, records: &str) -> (std::path::PathBuf, std::path::PathBuf) {
        let m = dir.join("meta.csv");
        let r = dir.join("records.csv");
        fs::write(&m, META).unwrap();
        fs::write(&r, format!("{}\n{records}", RECORDS_HEADER.join(","))).unwrap();
        (m, r)
    }

    #[test]
    fn well_formed_two_detectors() {
        let dir = tempfile::tempdir().unwrap();
        let recs = [
            row("B", "2024-10-01T01:00:00Z", "900"),
            row("A", "2024-10-01T01:00:00Z", "1000"),
            row("A", "2024-10-01T00:00:00Z", ""),
        ]
        .concat();
        let (m, r) = write(dir.path(), &recs);
        let (metas, records) = load_csv(&m, &r).unwrap();
        assert_eq!(metas.len(), 2);
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].detector_id, "A");
        assert_eq!(records[0].flow, None);
        assert_eq!(records[1].flow, Some(1000.0));
        assert_eq!(records[2].detector_id, "B");
        assert_eq!(records[2].evacuation[0], 1000.0);
    }

    #[test]
    fn negative_flow_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let recs = [row("A", "2024-10-01T00:00:00Z", "10"), row("A", "2024-10-01T01:00:00Z", "-5")].concat();
        let (m, r) = write(dir.path(), &recs);
        let err = load_csv(&m, &r).unwrap_err();
        match err {
            DataError::Schema { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("flow"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let recs = [row("A", "2024-10-01T00:00:00Z", "10"), row("A", "2024-10-01T00:00:00+00:00", "11")].concat();
        let (m, r) = write(dir.path(), &recs);
        assert!(matches!(load_csv(&m, &r), Err(DataError::Duplicate { line: 3, .. })));
    }

    #[test]
    fn unknown_detector_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (m, r) = write(dir.path(), &row("Z", "2024-10-01T00:00:00Z", "10"));
        assert!(matches!(load_csv(&m, &r), Err(DataError::UnknownDetector { .. })));
    }

    #[test]
    fn bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("meta.csv");
        fs::write(&m, "id,highway\nA,I75\n").unwrap();
        let r = dir.path().join("records.csv");
        fs::write(&r, RECORDS_HEADER.join(",")).unwrap();
        assert!(matches!(load_csv(&m, &r), Err(DataError::Schema { line: 1, .. })));
    }

    #[test]
    fn off_hour_timestamp_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (m, r) = write(dir.path(), &row("A", "2024-10-01T00:30:00Z", "10"));
        assert!(matches!(load_csv(&m, &r), Err(DataError::Schema { .. })));
    }

    #[test]
    fn write_then_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let (m, r) = write(dir.path(), &[row("A", "2024-10-01T00:00:00Z", "10.25"), row("B", "2024-10-01T00:00:00Z", "")].concat());
        let (metas, records) = load_csv(&m, &r).unwrap();
        let m2 = dir.path().join("m2.csv");
        let r2 = dir.path().join("r2.csv");
        write_meta_csv(&m2, &metas).unwrap();
        write_records_csv(&r2, &records).unwrap();
        let (metas2, records2) = load_csv(&m2, &r2).unwrap();
        assert_eq!(metas, metas2);
        assert_eq!(records, records2);
    }
}
