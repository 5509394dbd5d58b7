//! Feature-vector CSV files: header `domain,class,f0,f1,…`, one sample per row.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::dataset::Dataset;
use super::labels::{Label, LabelSetSpec};
use crate::numerics::Matrix;
use crate::{Error, Result};

/// Parses a CSV file into one dataset per domain present, ordered by domain.
/// Domain indices `0..S` are sources and `S` is the target.
pub fn load_csv(path: impl AsRef<Path>, spec: &LabelSetSpec) -> Result<Vec<Dataset>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, spec)
}

pub fn read_csv<R: Read>(reader: R, spec: &LabelSetSpec) -> Result<Vec<Dataset>> {
    spec.validate()?;
    let map = spec.class_map();
    let max_domain = spec.num_sources();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        None => return Err(Error::Data("empty CSV file".into())),
        Some(r) => r.map_err(|e| csv_error(1, e))?,
    };
    if header.len() < 3 || &header[0] != "domain" || &header[1] != "class" {
        return Err(Error::Parse {
            line: 1,
            message: "header must start with `domain,class` and name at least one feature".into(),
        });
    }
    let width = header.len();
    let dim = width - 2;

    let mut grouped: BTreeMap<usize, (Vec<f64>, Vec<Label>)> = BTreeMap::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(0, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let domain: usize = parse_field(&rec[0], line, "domain")?;
        if domain > max_domain {
            return Err(Error::Parse {
                line,
                message: format!("unknown domain index {domain} (expected 0..={max_domain})"),
            });
        }
        let raw: usize = parse_field(&rec[1], line, "class")?;
        let label = map.label_of(raw).ok_or_else(|| Error::Parse {
            line,
            message: format!("class {raw} is neither a source class nor an open class"),
        })?;
        if label.is_open() && domain < max_domain {
            return Err(Error::Parse {
                line,
                message: format!("open class {raw} in source domain {domain}"),
            });
        }
        let entry = grouped.entry(domain).or_default();
        for (j, field) in rec.iter().skip(2).enumerate() {
            let v: f64 = parse_field(field, line, &format!("f{j}"))?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value in f{j}"),
                });
            }
            entry.0.push(v);
        }
        entry.1.push(label);
    }
    if grouped.is_empty() {
        return Err(Error::Data("CSV file has a header but no rows".into()));
    }
    grouped
        .into_iter()
        .map(|(domain, (data, labels))| {
            let features = Matrix::from_vec(labels.len(), dim, data)?;
            Dataset::new(domain, map.num_classes(), features, labels)
        })
        .collect()
}

fn parse_field<T: std::str::FromStr>(field: &str, line: u64, name: &str) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("field `{name}`: cannot parse {field:?}"),
    })
}

fn csv_error(line: u64, e: csv::Error) -> Error {
    let line = e.position().map_or(line, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Writes datasets with raw class ids (open samples as `|C|`). Values use the
/// shortest representation that round-trips exactly.
pub fn write_csv<W: Write>(writer: W, datasets: &[&Dataset], spec: &LabelSetSpec) -> Result<()> {
    let map = spec.class_map();
    let Some(first) = datasets.first() else {
        return Err(Error::Data("nothing to write".into()));
    };
    let dim = first.input_dim();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["domain".to_string(), "class".to_string()];
    header.extend((0..dim).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(|e| csv_error(1, e))?;
    for d in datasets {
        if d.input_dim() != dim {
            return Err(Error::shape(
                "write_csv",
                format!("input dims {dim} and {}", d.input_dim()),
            ));
        }
        for (row, label) in d.features().row_iter().zip(d.labels()) {
            let mut rec = Vec::with_capacity(dim + 2);
            rec.push(d.domain_index().to_string());
            rec.push(map.file_id(*label).to_string());
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec).map_err(|e| csv_error(0, e))?;
        }
    }
    w.flush().map_err(|e| Error::Data(format!("CSV flush failed: {e}")))
}

pub fn save_csv(path: impl AsRef<Path>, datasets: &[&Dataset], spec: &LabelSetSpec) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), datasets, spec)
}
