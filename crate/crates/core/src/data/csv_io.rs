//! CSV shard files: header `user_id,target,f0,...,f{d-1}`, one sample per row.

use std::io::{Read, Write};
use std::path::Path;

use super::DataError;
use crate::model::DatasetShard;

/// Reads every shard in the file, grouped by `user_id` in order of first
/// appearance.
pub fn load_shards(path: impl AsRef<Path>) -> Result<Vec<DatasetShard>, DataError> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| DataError::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_shards(file)
}

pub fn read_shards<R: Read>(source: R) -> Result<Vec<DatasetShard>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = reader.records();

    let header = match records.next() {
        None => return Err(DataError::Schema("file is empty".into())),
        Some(r) => r.map_err(|e| parse_error(1, e))?,
    };
    let columns: Vec<&str> = header.iter().map(str::trim).collect();
    if columns.len() < 3 || columns[0] != "user_id" || columns[1] != "target" {
        return Err(DataError::Schema(
            "header must be user_id,target,f0,...,f{d-1}".into(),
        ));
    }
    for (k, name) in columns[2..].iter().enumerate() {
        if *name != format!("f{k}") {
            return Err(DataError::Schema(format!(
                "feature column {k} is named {name:?}, expected f{k}"
            )));
        }
    }
    let d = columns.len() - 2;

    let mut groups: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for record in records {
        let record = record.map_err(|e| parse_error(0, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != d + 2 {
            return Err(DataError::Parse {
                line,
                message: format!("expected {} fields, found {}", d + 2, record.len()),
            });
        }
        let user = record[0].trim().to_string();
        let number = |k: usize| -> Result<f64, DataError> {
            let v: f64 = record[k].trim().parse().map_err(|_| DataError::Parse {
                line,
                message: format!("field {} ({:?}) is not a number", k + 1, &record[k]),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(DataError::Parse {
                    line,
                    message: format!("field {} is not finite", k + 1),
                })
            }
        };
        let target = number(1)?;
        let idx = match groups.iter().position(|g| g.0 == user) {
            Some(i) => i,
            None => {
                groups.push((user, Vec::new(), Vec::new()));
                groups.len() - 1
            }
        };
        for k in 0..d {
            let v = number(k + 2)?;
            groups[idx].1.push(v);
        }
        groups[idx].2.push(target);
    }
    if groups.is_empty() {
        return Err(DataError::Schema("file has a header but no samples".into()));
    }
    groups
        .into_iter()
        .map(|(user, inputs, targets)| {
            DatasetShard::new(user, d, inputs, targets)
                .map_err(|e| DataError::Schema(e.to_string()))
        })
        .collect()
}

fn parse_error(fallback_line: u64, e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    DataError::Parse {
        line,
        message: e.to_string(),
    }
}

/// Writes shards in the loader's format. All shards must share one feature
/// dimension.
pub fn write_shards<W: Write>(sink: W, shards: &[&DatasetShard]) -> Result<(), DataError> {
    let d = shards
        .first()
        .map(|s| s.features())
        .ok_or_else(|| DataError::Schema("no shards to write".into()))?;
    if let Some(bad) = shards.iter().find(|s| s.features() != d) {
        return Err(DataError::Schema(format!(
            "shard {} has {} features, expected {d}",
            bad.user_id,
            bad.features()
        )));
    }
    let io = |e: csv::Error| DataError::Io(e.to_string());
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    let mut header = vec!["user_id".to_string(), "target".to_string()];
    header.extend((0..d).map(|k| format!("f{k}")));
    writer.write_record(&header).map_err(io)?;
    for shard in shards {
        for i in 0..shard.len() {
            let mut row = vec![shard.user_id.clone(), shard.target(i).to_string()];
            row.extend(shard.row(i).iter().map(f64::to_string));
            writer.write_record(&row).map_err(io)?;
        }
    }
    writer.flush().map_err(|e| DataError::Io(e.to_string()))
}
