//! Text formats read and written by the command-line tool.
//!
//! * Samples: CSV with header `x1,…,xd` and one observation per row.
//! * Gaussian parameters: a line-oriented schema
//!
//!   ```text
//!   # optional comments
//!   dim 2
//!   mean 0.0 1.0
//!   cov 1.0 0.2
//!   cov 0.2 2.0
//!   ```
//!
//!   Numbers may be separated by spaces or commas. The covariance must be
//!   symmetric and positive definite.
//! * Site bundles: an observation CSV `site,x1,x2,x3` and a reference CSV
//!   `site,mean1,mean2,mean3,b_factor`, one reference row per site.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use gw_core::inference::Site;
use gw_core::{GaussianMeasure, Matrix, SampleSet, SpdMatrix, SymMatrix, Vector};

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_number(cell: &str, source: &str, line: usize) -> CliResult<f64> {
    let cell = cell.trim();
    let v: f64 = cell
        .parse()
        .map_err(|_| CliError::parse(source, line, format!("`{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::parse(source, line, format!("`{cell}` is not finite")));
    }
    Ok(v)
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn record_line(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn csv_error(e: csv::Error, source: &str) -> CliError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    CliError::parse(source, line, e.to_string())
}

fn expect_header(header: &csv::StringRecord, expected: &[String], source: &str) -> CliResult<()> {
    let got: Vec<&str> = header.iter().collect();
    if got.len() != expected.len() || got.iter().zip(expected).any(|(a, b)| *a != b) {
        return Err(CliError::parse(
            source,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

/// Parses a samples CSV. `source` names the input in error messages.
pub fn parse_samples_csv(text: &str, source: &str) -> CliResult<SampleSet> {
    let mut reader = csv_reader(text);
    let header = reader.headers().map_err(|e| csv_error(e, source))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(CliError::parse(source, 1, "missing header row"));
    }
    let d = header.len();
    let names: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    expect_header(&header, &names, source)?;
    let mut values = Vec::new();
    let mut n = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, source))?;
        let line = record_line(&record);
        if record.len() != d {
            return Err(CliError::parse(
                source,
                line,
                format!("expected {d} fields, found {}", record.len()),
            ));
        }
        for cell in record.iter() {
            values.push(parse_number(cell, source, line)?);
        }
        n += 1;
    }
    if n == 0 {
        return Err(CliError::parse(source, 1, "no observations"));
    }
    Ok(SampleSet::new(Matrix::from_row_slice(n, d, &values))?)
}

pub fn read_samples(path: &Path) -> CliResult<SampleSet> {
    parse_samples_csv(&read_text(path)?, &path.display().to_string())
}

/// CSV text that [`parse_samples_csv`] reads back to the same values.
pub fn format_samples_csv(s: &SampleSet) -> String {
    let d = s.dim();
    let mut out = (1..=d).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    let rows = s.rows();
    for i in 0..s.n() {
        let row: Vec<String> = (0..d).map(|j| format!("{:?}", rows[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn split_numbers(rest: &str, source: &str, line: usize) -> CliResult<Vec<f64>> {
    rest.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| parse_number(t, source, line))
        .collect()
}

/// Parses the Gaussian parameter schema described in the module docs.
pub fn parse_gaussian(text: &str, source: &str) -> CliResult<GaussianMeasure> {
    let mut dim: Option<usize> = None;
    let mut mean: Option<Vec<f64>> = None;
    let mut cov: Vec<Vec<f64>> = Vec::new();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, rest) = content.split_once(char::is_whitespace).unwrap_or((content, ""));
        match key {
            "dim" => {
                if dim.is_some() {
                    return Err(CliError::parse(source, line, "repeated `dim`"));
                }
                let d: usize = rest
                    .trim()
                    .parse()
                    .map_err(|_| CliError::parse(source, line, format!("bad dimension `{}`", rest.trim())))?;
                if d == 0 || d > 1024 {
                    return Err(CliError::parse(source, line, format!("dimension {d} outside 1..=1024")));
                }
                dim = Some(d);
            }
            "mean" | "cov" => {
                let d = dim.ok_or_else(|| CliError::parse(source, line, "`dim` must come first"))?;
                let row = split_numbers(rest, source, line)?;
                if row.len() != d {
                    return Err(CliError::parse(
                        source,
                        line,
                        format!("expected {d} numbers, found {}", row.len()),
                    ));
                }
                if key == "mean" {
                    if mean.is_some() {
                        return Err(CliError::parse(source, line, "repeated `mean`"));
                    }
                    mean = Some(row);
                } else {
                    if cov.len() == d {
                        return Err(CliError::parse(source, line, format!("more than {d} `cov` rows")));
                    }
                    let i = cov.len();
                    for (j, prev) in cov.iter().enumerate() {
                        let (a, b) = (row[j], prev[i]);
                        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
                            return Err(CliError::parse(
                                source,
                                line,
                                format!("covariance not symmetric at ({}, {}): {a} vs {b}", i + 1, j + 1),
                            ));
                        }
                    }
                    cov.push(row);
                }
            }
            other => return Err(CliError::parse(source, line, format!("unknown key `{other}`"))),
        }
    }
    let end = last_line.max(1);
    let d = dim.ok_or_else(|| CliError::parse(source, end, "missing `dim`"))?;
    let mean = mean.ok_or_else(|| CliError::parse(source, end, "missing `mean`"))?;
    if cov.len() != d {
        return Err(CliError::parse(
            source,
            end,
            format!("expected {d} `cov` rows, found {}", cov.len()),
        ));
    }
    let flat: Vec<f64> = cov.into_iter().flatten().collect();
    let sym = SymMatrix::from_row_slice(d, &flat)?;
    let spd = SpdMatrix::new(sym).map_err(|e| CliError::parse(source, end, e.to_string()))?;
    Ok(GaussianMeasure::new(Vector::from_vec(mean), spd)?)
}

pub fn read_gaussian(path: &Path) -> CliResult<GaussianMeasure> {
    parse_gaussian(&read_text(path)?, &path.display().to_string())
}

/// Text that [`parse_gaussian`] reads back to the same measure.
pub fn format_gaussian(g: &GaussianMeasure) -> String {
    let d = g.dim();
    let join = |v: &mut dyn Iterator<Item = f64>| v.map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
    let mut out = format!("dim {d}\n");
    let _ = writeln!(out, "mean {}", join(&mut g.mean().iter().copied()));
    let c = g.cov().matrix();
    for i in 0..d {
        let _ = writeln!(out, "cov {}", join(&mut (0..d).map(|j| c[(i, j)])));
    }
    out
}

const SITE_DIM: usize = 3;

/// Builds the site list of a batch test from its two CSV inputs, in the
/// order of the reference file.
pub fn parse_site_bundle(observations: &str, references: &str) -> CliResult<Vec<Site>> {
    const OBS: &str = "observations";
    const REF: &str = "references";
    let mut reader = csv_reader(references);
    let header = reader.headers().map_err(|e| csv_error(e, REF))?.clone();
    let expected: Vec<String> = ["site", "mean1", "mean2", "mean3", "b_factor"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    expect_header(&header, &expected, REF)?;
    let mut order: Vec<(String, Vector, f64)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, REF))?;
        let line = record_line(&record);
        if record.len() != expected.len() {
            return Err(CliError::parse(
                REF,
                line,
                format!("expected 5 fields, found {}", record.len()),
            ));
        }
        let name = record[0].to_string();
        if name.is_empty() {
            return Err(CliError::parse(REF, line, "empty site name"));
        }
        if index.contains_key(&name) {
            return Err(CliError::parse(REF, line, format!("site `{name}` listed twice")));
        }
        let nums: Vec<f64> = (1..5)
            .map(|j| parse_number(&record[j], REF, line))
            .collect::<CliResult<_>>()?;
        if nums[3] <= 0.0 {
            return Err(CliError::parse(
                REF,
                line,
                format!("b_factor {} must be positive", nums[3]),
            ));
        }
        index.insert(name.clone(), order.len());
        order.push((name, Vector::from_column_slice(&nums[..3]), nums[3]));
    }
    if order.is_empty() {
        return Err(CliError::parse(REF, 1, "no sites"));
    }

    let mut reader = csv_reader(observations);
    let header = reader.headers().map_err(|e| csv_error(e, OBS))?.clone();
    let expected: Vec<String> = ["site", "x1", "x2", "x3"].iter().map(|s| s.to_string()).collect();
    expect_header(&header, &expected, OBS)?;
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); order.len()];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e, OBS))?;
        let line = record_line(&record);
        if record.len() != SITE_DIM + 1 {
            return Err(CliError::parse(
                OBS,
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let k = *index
            .get(&record[0])
            .ok_or_else(|| CliError::parse(OBS, line, format!("site `{}` has no reference row", &record[0])))?;
        for j in 1..=SITE_DIM {
            rows[k].push(parse_number(&record[j], OBS, line)?);
        }
    }
    order
        .into_iter()
        .zip(rows)
        .map(|((name, ref_mean, b_factor), values)| {
            if values.is_empty() {
                return Err(CliError::parse(OBS, 1, format!("site `{name}` has no observations")));
            }
            let n = values.len() / SITE_DIM;
            Ok(Site {
                name,
                samples: SampleSet::new(Matrix::from_row_slice(n, SITE_DIM, &values))?,
                ref_mean,
                b_factor,
            })
        })
        .collect()
}

pub fn read_site_bundle(observations: &Path, references: &Path) -> CliResult<Vec<Site>> {
    parse_site_bundle(&read_text(observations)?, &read_text(references)?)
}

/// Writes a bundle back in the two-file layout of [`parse_site_bundle`].
pub fn format_site_bundle(sites: &[Site]) -> (String, String) {
    let mut obs = String::from("site,x1,x2,x3\n");
    let mut refs = String::from("site,mean1,mean2,mean3,b_factor\n");
    for site in sites {
        let m = &site.ref_mean;
        let _ = writeln!(
            refs,
            "{},{:?},{:?},{:?},{:?}",
            site.name, m[0], m[1], m[2], site.b_factor
        );
        let r = site.samples.rows();
        for i in 0..site.samples.n() {
            let _ = writeln!(obs, "{},{:?},{:?},{:?}", site.name, r[(i, 0)], r[(i, 1)], r[(i, 2)]);
        }
    }
    (obs, refs)
}
