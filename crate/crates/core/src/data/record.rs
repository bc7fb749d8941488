use std::io::{Read, Write};
use std::path::Path;

use crate::error::{invalid_arg, Error, Result};

/// Durations at or below this many seconds count as short videos.
pub const SHORT_VIDEO_SECONDS: f64 = 18.0;

/// Slack for the full-watch test on short videos; logged times are floats.
const FULL_WATCH_TOLERANCE: f64 = 1e-6;

/// One logged impression.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub user_id: String,
    pub item_id: String,
    /// Values of the `cat_*` columns, in column order.
    pub context: Vec<String>,
    /// Values of the `num_*` columns, in column order.
    pub numeric_feats: Vec<f64>,
    pub duration_s: f64,
    pub watch_time_s: f64,
}

/// Binary interest label: a short video watched to the end, or a long video
/// watched past the short-video threshold.
pub fn interest_label(duration_s: f64, watch_time_s: f64) -> Result<bool> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(invalid_arg!("duration must be positive, got {duration_s}"));
    }
    if !(watch_time_s >= 0.0 && watch_time_s.is_finite()) {
        return Err(invalid_arg!("watch time must be non-negative, got {watch_time_s}"));
    }
    Ok(if duration_s <= SHORT_VIDEO_SECONDS {
        watch_time_s >= duration_s - FULL_WATCH_TOLERANCE
    } else {
        watch_time_s > SHORT_VIDEO_SECONDS
    })
}

/// Column names for the interaction CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub user_id: String,
    pub item_id: String,
    pub duration: String,
    pub watch_time: String,
    pub categorical_prefix: String,
    pub numeric_prefix: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            user_id: "user_id".into(),
            item_id: "item_id".into(),
            duration: "duration_s".into(),
            watch_time: "watch_time_s".into(),
            categorical_prefix: "cat_".into(),
            numeric_prefix: "num_".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRow {
    /// 1-based line number in the file.
    pub line: u64,
    pub reason: String,
}

/// Parsed interaction log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionLog {
    pub categorical_columns: Vec<String>,
    pub numeric_columns: Vec<String>,
    pub records: Vec<InteractionRecord>,
    pub skipped: Vec<SkippedRow>,
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<InteractionLog> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema).map_err(|e| match e {
        Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads the interaction CSV dialect from any reader. Lines starting with
/// `#` are treated as comments.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<InteractionLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing required column `{name}`")))
    };
    let user_col = find(&schema.user_id)?;
    let item_col = find(&schema.item_id)?;
    let dur_col = find(&schema.duration)?;
    let watch_col = find(&schema.watch_time)?;
    let mut cat_idx = vec![];
    let mut num_idx = vec![];
    let mut log = InteractionLog::default();
    for (i, h) in headers.iter().enumerate() {
        if h.starts_with(&schema.categorical_prefix) {
            cat_idx.push(i);
            log.categorical_columns.push(h.to_string());
        } else if h.starts_with(&schema.numeric_prefix) {
            num_idx.push(i);
            log.numeric_columns.push(h.to_string());
        }
    }

    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                log.skipped.push(SkippedRow {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&row, user_col, item_col, dur_col, watch_col, &cat_idx, &num_idx) {
            Ok(rec) => log.records.push(rec),
            Err(reason) => log.skipped.push(SkippedRow { line, reason }),
        }
    }
    Ok(log)
}

fn parse_row(
    row: &csv::StringRecord,
    user_col: usize,
    item_col: usize,
    dur_col: usize,
    watch_col: usize,
    cat_idx: &[usize],
    num_idx: &[usize],
) -> std::result::Result<InteractionRecord, String> {
    let field = |i: usize| row.get(i).ok_or_else(|| format!("row has no column {i}"));
    let number = |i: usize| -> std::result::Result<f64, String> {
        let raw = field(i)?.trim();
        let v: f64 = raw.parse().map_err(|_| format!("`{raw}` is not a number"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("`{raw}` is not finite"))
        }
    };
    let duration_s = number(dur_col)?;
    let watch_time_s = number(watch_col)?;
    if duration_s < 0.0 {
        return Err(format!("negative duration {duration_s}"));
    }
    if watch_time_s < 0.0 {
        return Err(format!("negative watch time {watch_time_s}"));
    }
    Ok(InteractionRecord {
        user_id: field(user_col)?.to_string(),
        item_id: field(item_col)?.to_string(),
        context: cat_idx
            .iter()
            .map(|&i| field(i).map(str::to_string))
            .collect::<std::result::Result<_, _>>()?,
        numeric_feats: num_idx.iter().map(|&i| number(i)).collect::<std::result::Result<_, _>>()?,
        duration_s,
        watch_time_s,
    })
}

/// Writes records in the interaction CSV dialect. `preamble` lines are
/// emitted first as `#` comments.
pub fn write_csv<W: Write>(
    writer: W,
    preamble: &[String],
    categorical_columns: &[String],
    numeric_columns: &[String],
    records: &[InteractionRecord],
) -> Result<()> {
    let mut writer = writer;
    for line in preamble {
        writeln!(writer, "# {line}").map_err(|e| Error::io("<csv>", e))?;
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["user_id", "item_id", "duration_s", "watch_time_s"];
    header.extend(categorical_columns.iter().map(String::as_str));
    header.extend(numeric_columns.iter().map(String::as_str));
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        if r.context.len() != categorical_columns.len() || r.numeric_feats.len() != numeric_columns.len() {
            return Err(invalid_arg!("record does not match the column layout"));
        }
        let mut row = vec![
            r.user_id.clone(),
            r.item_id.clone(),
            r.duration_s.to_string(),
            r.watch_time_s.to_string(),
        ];
        row.extend(r.context.iter().cloned());
        row.extend(r.numeric_feats.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::other(e))
}
