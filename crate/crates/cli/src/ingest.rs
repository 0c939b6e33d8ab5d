//! CSV ingestion: column mapping, missing-row rejection and one-hot encoding
//! of non-numeric confounders.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use shapemed::Dataset;

use crate::error::{CliError, CliResult};

/// Cell values treated as missing.
const MISSING: [&str; 3] = ["", "NA", "NaN"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub outcome: String,
    pub exposure: String,
    pub mediator: String,
    pub confounders: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// How one confounder column entered the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfounderEncoding {
    pub column: String,
    pub kind: ColumnKind,
    /// Observed levels in lexicographic order (categorical only).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub levels: Vec<String>,
    /// Reference level left out of the indicators (categorical only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dropped_level: Option<String>,
    /// Design columns produced, named `column=level` for indicators.
    pub design_columns: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub data: Dataset,
    pub rows_read: usize,
    pub rows_rejected: usize,
    pub encoding: Vec<ConfounderEncoding>,
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> CliResult<Table> {
    let shown = path.display();
    let bytes = std::fs::read(path).map_err(|e| CliError::input(format!("{shown}: {e}")))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(CliError::input(format!("{shown}: empty CSV")));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::input(format!("{shown}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::input(format!("{shown}: {e}")))?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(CliError::input(format!("{shown}: no data rows")));
    }
    Ok(Table { headers, rows })
}

fn column_index(table: &Table, name: &str, path: &Path) -> CliResult<usize> {
    let mut found = table.headers.iter().enumerate().filter(|(_, h)| *h == name);
    match (found.next(), found.next()) {
        (Some((i, _)), None) => Ok(i),
        (Some(_), Some(_)) => Err(CliError::input(format!(
            "{}: column '{name}' appears more than once",
            path.display()
        ))),
        (None, _) => Err(CliError::input(format!(
            "{}: no column named '{name}' (header: {})",
            path.display(),
            table.headers.join(",")
        ))),
    }
}

fn parse_numeric(values: &[&str], column: &str) -> CliResult<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| {
                    CliError::input(format!(
                        "column '{column}', kept row {}: '{v}' is not a number",
                        i + 1
                    ))
                })
        })
        .collect()
}

fn parse_exposure(values: &[&str], column: &str) -> CliResult<Vec<f64>> {
    let parsed: Vec<f64> = values
        .iter()
        .map(|v| match v.parse::<f64>() {
            Ok(x) if x == 0.0 || x == 1.0 => Ok(x),
            _ => Err(CliError::exposure(format!(
                "exposure column '{column}' must be coded 0/1, found '{v}'"
            ))),
        })
        .collect::<CliResult<_>>()?;
    let exposed = parsed.iter().filter(|&&a| a == 1.0).count();
    if exposed == 0 || exposed == parsed.len() {
        let level = if exposed == 0 { 0 } else { 1 };
        return Err(CliError::exposure(format!(
            "exposure column '{column}' is {level} in every row; no contrast is possible"
        )));
    }
    Ok(parsed)
}

fn encode_confounder(values: &[&str], column: &str) -> (ConfounderEncoding, Vec<Vec<f64>>) {
    let numeric: Option<Vec<f64>> = values
        .iter()
        .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect();
    if let Some(col) = numeric {
        let enc = ConfounderEncoding {
            column: column.to_string(),
            kind: ColumnKind::Numeric,
            levels: Vec::new(),
            dropped_level: None,
            design_columns: vec![column.to_string()],
        };
        return (enc, vec![col]);
    }
    let levels: Vec<String> = values
        .iter()
        .map(|v| v.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let kept = &levels[1..];
    let cols = kept
        .iter()
        .map(|level| {
            values
                .iter()
                .map(|v| if v == level { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let enc = ConfounderEncoding {
        column: column.to_string(),
        kind: ColumnKind::Categorical,
        design_columns: kept.iter().map(|l| format!("{column}={l}")).collect(),
        dropped_level: Some(levels[0].clone()),
        levels,
    };
    (enc, cols)
}

/// Read `path` and build a dataset from the mapped columns.
pub fn load_dataset(path: &Path, mapping: &ColumnMapping) -> CliResult<Ingested> {
    let table = read_table(path)?;
    let mut names = vec![&mapping.outcome, &mapping.exposure, &mapping.mediator];
    names.extend(mapping.confounders.iter());
    let mut seen = BTreeSet::new();
    for name in &names {
        if !seen.insert(name.as_str()) {
            return Err(CliError::input(format!(
                "column '{name}' is mapped more than once"
            )));
        }
    }
    let idx: Vec<usize> = names
        .iter()
        .map(|n| column_index(&table, n, path))
        .collect::<CliResult<_>>()?;

    let kept: Vec<&Vec<String>> = table
        .rows
        .iter()
        .filter(|row| idx.iter().all(|&i| !MISSING.contains(&row[i].as_str())))
        .collect();
    let rows_read = table.rows.len();
    let rows_rejected = rows_read - kept.len();
    if kept.is_empty() {
        return Err(CliError::input(format!(
            "{}: every row has a missing value in a mapped column",
            path.display()
        )));
    }
    let column = |k: usize| -> Vec<&str> { kept.iter().map(|row| row[idx[k]].as_str()).collect() };

    let outcome = parse_numeric(&column(0), &mapping.outcome)?;
    let exposure = parse_exposure(&column(1), &mapping.exposure)?;
    let mediator = parse_numeric(&column(2), &mapping.mediator)?;

    let mut encoding = Vec::new();
    let mut design_cols: Vec<Vec<f64>> = Vec::new();
    for (j, name) in mapping.confounders.iter().enumerate() {
        let (enc, cols) = encode_confounder(&column(3 + j), name);
        encoding.push(enc);
        design_cols.extend(cols);
    }
    let design_names: Vec<String> = encoding
        .iter()
        .flat_map(|e| e.design_columns.clone())
        .collect();
    let n = kept.len();
    let confounders = DMatrix::from_fn(n, design_cols.len(), |i, j| design_cols[j][i]);

    let data = Dataset::new(
        DVector::from_vec(outcome),
        DVector::from_vec(exposure),
        DVector::from_vec(mediator),
        confounders,
        design_names,
    )?;
    Ok(Ingested {
        data,
        rows_read,
        rows_rejected,
        encoding,
    })
}
