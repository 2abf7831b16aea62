//! Combined experimental/observational panel: row types, CSV ingestion,
//! overlap validation, and subgroup filtering.
//!
//! The estimators in this crate consume a two-group design: a short-run
//! experiment (group `E`, short-term outcome only in production use) and an
//! observational panel (group `O`, both outcomes). Within each group every
//! unit carries a binary treatment indicator, so the dataset splits into four
//! cells. Everything downstream is computed from these cells.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

/// Data source a unit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    /// Short-run experiment with randomized treatment.
    #[serde(rename = "E")]
    Experimental,
    /// Observational panel with self-selected treatment.
    #[serde(rename = "O")]
    Observational,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Experimental => write!(f, "E"),
            Group::Observational => write!(f, "O"),
        }
    }
}

/// One unit. `y2` is the long-term outcome and may be absent only for
/// experimental rows; observational rows must carry it. Extra categorical
/// columns from the source file are kept verbatim in `labels` for subgroup
/// filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRow {
    pub group: Group,
    pub treated: bool,
    pub y1: f64,
    pub y2: Option<f64>,
    pub labels: BTreeMap<String, String>,
}

/// A loaded dataset plus a note on where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedDataset {
    rows: Vec<ObservationRow>,
    provenance: String,
}

impl CombinedDataset {
    pub fn new(rows: Vec<ObservationRow>, provenance: impl Into<String>) -> Self {
        CombinedDataset {
            rows,
            provenance: provenance.into(),
        }
    }

    pub fn rows(&self) -> &[ObservationRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Rows of one (group, treatment) cell in dataset order.
    pub fn cell(&self, group: Group, treated: bool) -> impl Iterator<Item = &ObservationRow> {
        self.rows
            .iter()
            .filter(move |r| r.group == group && r.treated == treated)
    }

    /// Short-term outcomes of one cell, in dataset order.
    pub fn y1_values(&self, group: Group, treated: bool) -> Vec<f64> {
        self.cell(group, treated).map(|r| r.y1).collect()
    }

    /// Long-term outcomes of one cell; `None` entries are skipped by callers
    /// that tolerate absence, but most estimators require them all.
    pub fn y2_values(&self, group: Group, treated: bool) -> Vec<Option<f64>> {
        self.cell(group, treated).map(|r| r.y2).collect()
    }
}

/// Column names and group-token aliases for CSV ingestion. Matching of group
/// tokens is case-insensitive. The long-term outcome column may be missing
/// from the file entirely; its values are then absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub group_column: String,
    pub treatment_column: String,
    pub y1_column: String,
    pub y2_column: String,
    pub experimental_tokens: Vec<String>,
    pub observational_tokens: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            group_column: "g".into(),
            treatment_column: "w".into(),
            y1_column: "y1".into(),
            y2_column: "y2".into(),
            experimental_tokens: vec!["E".into()],
            observational_tokens: vec!["O".into()],
        }
    }
}

impl CsvSchema {
    fn parse_group(&self, token: &str, line: u64) -> Result<Group> {
        let t = token.trim();
        if self
            .experimental_tokens
            .iter()
            .any(|a| a.eq_ignore_ascii_case(t))
        {
            Ok(Group::Experimental)
        } else if self
            .observational_tokens
            .iter()
            .any(|a| a.eq_ignore_ascii_case(t))
        {
            Ok(Group::Observational)
        } else {
            Err(Error::BadField {
                line,
                column: self.group_column.clone(),
                msg: format!("unrecognized group token `{t}`"),
            })
        }
    }
}

fn parse_finite(raw: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::BadField {
        line,
        column: column.to_string(),
        msg: format!("`{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::BadField {
            line,
            column: column.to_string(),
            msg: format!("`{raw}` is not finite"),
        });
    }
    Ok(v)
}

/// Read a dataset from CSV. Required columns: group, treatment, short-term
/// outcome. The long-term outcome column is optional per row (empty field)
/// and may be absent from the header; observational rows must still carry a
/// value or loading fails with the offending line number. Any other column
/// is retained as a categorical label.
pub fn load_csv<R: Read>(reader: R, schema: &CsvSchema, provenance: &str) -> Result<CombinedDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);

    let g_idx = col(&schema.group_column)
        .ok_or_else(|| Error::MissingColumn(schema.group_column.clone()))?;
    let w_idx = col(&schema.treatment_column)
        .ok_or_else(|| Error::MissingColumn(schema.treatment_column.clone()))?;
    let y1_idx =
        col(&schema.y1_column).ok_or_else(|| Error::MissingColumn(schema.y1_column.clone()))?;
    let y2_idx = col(&schema.y2_column);

    let label_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != g_idx && *i != w_idx && *i != y1_idx && Some(*i) != y2_idx)
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e
                .position()
                .map(|p| p.line())
                .unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");

        let group = schema.parse_group(field(g_idx), line)?;
        let treated = match field(w_idx) {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::BadField {
                    line,
                    column: schema.treatment_column.clone(),
                    msg: format!("treatment must be 0 or 1, got `{other}`"),
                })
            }
        };
        let y1 = parse_finite(field(y1_idx), line, &schema.y1_column)?;
        let y2 = match y2_idx {
            Some(i) if !field(i).is_empty() => Some(parse_finite(field(i), line, &schema.y2_column)?),
            _ => None,
        };
        if group == Group::Observational && y2.is_none() {
            return Err(Error::MissingLongTermOutcome { line });
        }

        let labels = label_cols
            .iter()
            .map(|(i, name)| (name.clone(), field(*i).to_string()))
            .collect();

        rows.push(ObservationRow {
            group,
            treated,
            y1,
            y2,
            labels,
        });
    }

    Ok(CombinedDataset::new(rows, provenance))
}

pub fn load_csv_path(path: &std::path::Path, schema: &CsvSchema) -> Result<CombinedDataset> {
    let file = std::fs::File::open(path)?;
    load_csv(file, schema, &path.display().to_string())
}

/// Write a dataset back out with canonical group tokens and the schema's
/// column names. Loading the result reproduces the dataset row for row.
pub fn write_csv<W: Write>(d: &CombinedDataset, writer: W, schema: &CsvSchema) -> Result<()> {
    let mut label_names: Vec<String> = Vec::new();
    for row in d.rows() {
        for k in row.labels.keys() {
            if !label_names.contains(k) {
                label_names.push(k.clone());
            }
        }
    }
    label_names.sort();

    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![
        schema.group_column.clone(),
        schema.treatment_column.clone(),
        schema.y1_column.clone(),
        schema.y2_column.clone(),
    ];
    header.extend(label_names.iter().cloned());
    wtr.write_record(&header).map_err(csv_io)?;

    for row in d.rows() {
        let mut rec = vec![
            row.group.to_string(),
            if row.treated { "1" } else { "0" }.to_string(),
            format!("{}", row.y1),
            row.y2.map(|v| format!("{v}")).unwrap_or_default(),
        ];
        for name in &label_names {
            rec.push(row.labels.get(name).cloned().unwrap_or_default());
        }
        wtr.write_record(&rec).map_err(csv_io)?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Csv {
        line: 0,
        msg: e.to_string(),
    }
}

/// Row counts of the four design cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub experimental_untreated: usize,
    pub experimental_treated: usize,
    pub observational_untreated: usize,
    pub observational_treated: usize,
}

impl CellCounts {
    pub fn of(d: &CombinedDataset) -> Self {
        let mut c = CellCounts {
            experimental_untreated: 0,
            experimental_treated: 0,
            observational_untreated: 0,
            observational_treated: 0,
        };
        for r in d.rows() {
            match (r.group, r.treated) {
                (Group::Experimental, false) => c.experimental_untreated += 1,
                (Group::Experimental, true) => c.experimental_treated += 1,
                (Group::Observational, false) => c.observational_untreated += 1,
                (Group::Observational, true) => c.observational_treated += 1,
            }
        }
        c
    }

    pub fn get(&self, group: Group, treated: bool) -> usize {
        match (group, treated) {
            (Group::Experimental, false) => self.experimental_untreated,
            (Group::Experimental, true) => self.experimental_treated,
            (Group::Observational, false) => self.observational_untreated,
            (Group::Observational, true) => self.observational_treated,
        }
    }

    pub fn min(&self) -> usize {
        self.experimental_untreated
            .min(self.experimental_treated)
            .min(self.observational_untreated)
            .min(self.observational_treated)
    }
}

/// Outcome of [`validate`]. `overlap_ok` is the hard gate: every cell
/// populated and no observational row missing the long-term outcome.
/// Softer findings (an ill-posed control regression, for instance) only show
/// up in `messages`.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub cell_counts: CellCounts,
    pub missing_y2_observational: usize,
    pub overlap_ok: bool,
    pub messages: Vec<String>,
}

pub fn validate(d: &CombinedDataset) -> ValidationReport {
    let counts = CellCounts::of(d);
    let missing = d
        .rows()
        .iter()
        .filter(|r| r.group == Group::Observational && r.y2.is_none())
        .count();

    let mut messages = Vec::new();
    for (group, treated) in [
        (Group::Experimental, false),
        (Group::Experimental, true),
        (Group::Observational, false),
        (Group::Observational, true),
    ] {
        if counts.get(group, treated) == 0 {
            messages.push(format!("cell (group={group}, treated={treated}) is empty"));
        }
    }
    if missing > 0 {
        messages.push(format!(
            "{missing} observational row(s) missing long-term outcome"
        ));
    }

    let mut distinct_y1 = d.y1_values(Group::Observational, false);
    distinct_y1.sort_by(f64::total_cmp);
    distinct_y1.dedup();
    if counts.observational_untreated > 0 && distinct_y1.len() < 2 {
        messages.push(
            "observational untreated cell has fewer than 2 distinct short-term values; \
             control regression will be ill-posed"
                .to_string(),
        );
    }

    ValidationReport {
        cell_counts: counts,
        missing_y2_observational: missing,
        overlap_ok: counts.min() >= 1 && missing == 0,
        messages,
    }
}

/// Conjunction of label equalities, e.g. `site=A AND cohort=2`.
pub type SubgroupPredicate = Vec<(String, String)>;

/// Parse the CLI form `k=v[,k=v...]`.
pub fn parse_subgroup(raw: &str) -> Result<SubgroupPredicate> {
    let mut pred = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (k, v) = part.split_once('=').ok_or_else(|| {
            Error::BadConfig(format!("subgroup term `{part}` is not of the form key=value"))
        })?;
        pred.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pred)
}

/// Keep rows whose labels satisfy every term of the predicate. Label names
/// must exist on every row; referencing an unknown one is an error rather
/// than an empty result.
pub fn filter_subgroup(d: &CombinedDataset, predicate: &SubgroupPredicate) -> Result<CombinedDataset> {
    for (name, _) in predicate {
        if d.rows().iter().any(|r| !r.labels.contains_key(name)) {
            return Err(Error::UnknownLabel(name.clone()));
        }
    }
    let rows = d
        .rows()
        .iter()
        .filter(|r| {
            predicate
                .iter()
                .all(|(k, v)| r.labels.get(k).map(|x| x == v).unwrap_or(false))
        })
        .cloned()
        .collect();
    let provenance = if predicate.is_empty() {
        d.provenance().to_string()
    } else {
        let terms: Vec<String> = predicate.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{} [{}]", d.provenance(), terms.join(","))
    };
    Ok(CombinedDataset::new(rows, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d0_csv() -> &'static str {
        "g,w,y1,y2\nO,1,2,3\nO,1,4,5\nO,0,1,2\nO,0,3,4\nE,1,2,\nE,1,4,\nE,0,1,\nE,0,3,\n"
    }

    #[test]
    fn loads_mixed_observability() {
        let d = load_csv(d0_csv().as_bytes(), &CsvSchema::default(), "d0").unwrap();
        assert_eq!(d.len(), 8);
        let counts = CellCounts::of(&d);
        assert_eq!(counts.get(Group::Observational, true), 2);
        assert_eq!(counts.get(Group::Experimental, false), 2);
        assert!(d
            .cell(Group::Experimental, true)
            .all(|r| r.y2.is_none()));
        assert!(d
            .cell(Group::Observational, true)
            .all(|r| r.y2.is_some()));
    }

    #[test]
    fn observational_row_without_y2_is_rejected_with_line() {
        let csv = "g,w,y1,y2\nO,1,2,3\nO,0,1,\n";
        let err = load_csv(csv.as_bytes(), &CsvSchema::default(), "x").unwrap_err();
        match err {
            Error::MissingLongTermOutcome { line } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn group_aliases_and_case_are_accepted() {
        let mut schema = CsvSchema::default();
        schema.experimental_tokens.push("rct".into());
        let csv = "g,w,y1,y2\nRCT,1,2,\ne,0,1,\no,0,1,2\nO,1,3,4\n";
        let d = load_csv(csv.as_bytes(), &schema, "x").unwrap();
        assert_eq!(CellCounts::of(&d).get(Group::Experimental, true), 1);
        assert_eq!(CellCounts::of(&d).get(Group::Observational, false), 1);
    }

    #[test]
    fn unknown_group_token_is_an_error() {
        let csv = "g,w,y1,y2\nQ,1,2,3\n";
        let err = load_csv(csv.as_bytes(), &CsvSchema::default(), "x").unwrap_err();
        match err {
            Error::BadField { line, ref column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, "g");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn nonbinary_treatment_is_an_error() {
        let csv = "g,w,y1,y2\nO,2,2,3\n";
        assert!(load_csv(csv.as_bytes(), &CsvSchema::default(), "x").is_err());
    }

    #[test]
    fn nonfinite_outcome_is_an_error() {
        let csv = "g,w,y1,y2\nO,1,NaN,3\n";
        assert!(load_csv(csv.as_bytes(), &CsvSchema::default(), "x").is_err());
    }

    #[test]
    fn missing_required_column_is_an_error() {
        let csv = "g,y1,y2\nO,2,3\n";
        match load_csv(csv.as_bytes(), &CsvSchema::default(), "x").unwrap_err() {
            Error::MissingColumn(c) => assert_eq!(c, "w"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn extra_columns_become_labels() {
        let csv = "g,w,y1,y2,site\nO,1,2,3,A\nO,0,1,2,B\nE,1,2,,A\nE,0,1,,B\n";
        let d = load_csv(csv.as_bytes(), &CsvSchema::default(), "x").unwrap();
        assert_eq!(d.rows()[0].labels.get("site").unwrap(), "A");

        let sub = filter_subgroup(&d, &vec![("site".into(), "A".into())]).unwrap();
        assert_eq!(sub.len(), 2);
        assert!(sub.rows().iter().all(|r| r.labels["site"] == "A"));
    }

    #[test]
    fn filtering_on_unknown_label_is_an_error() {
        let d = load_csv(d0_csv().as_bytes(), &CsvSchema::default(), "x").unwrap();
        let err = filter_subgroup(&d, &vec![("site".into(), "A".into())]).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel(_)));
    }

    #[test]
    fn empty_filter_is_identity() {
        let d = load_csv(d0_csv().as_bytes(), &CsvSchema::default(), "x").unwrap();
        assert_eq!(filter_subgroup(&d, &Vec::new()).unwrap(), d);
    }

    #[test]
    fn validate_flags_empty_cells_and_passes_complete_data() {
        let d = load_csv(d0_csv().as_bytes(), &CsvSchema::default(), "x").unwrap();
        let report = validate(&d);
        assert!(report.overlap_ok);
        assert!(report.messages.is_empty());

        let empty = CombinedDataset::new(Vec::new(), "empty");
        let report = validate(&empty);
        assert!(!report.overlap_ok);
        assert_eq!(report.cell_counts.min(), 0);
        assert_eq!(report.messages.len(), 4);
    }

    #[test]
    fn csv_round_trip_is_idempotent() {
        let csv = "g,w,y1,y2,site\nO,1,2.5,3.25,A\nO,0,1,2,B\nE,1,0.1,,A\nE,0,-3,,B\n";
        let schema = CsvSchema::default();
        let d = load_csv(csv.as_bytes(), &schema, "x").unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf, &schema).unwrap();
        let d2 = load_csv(buf.as_slice(), &schema, "x").unwrap();
        assert_eq!(d.rows(), d2.rows());
    }

    #[test]
    fn subgroup_parser_handles_lists() {
        let p = parse_subgroup("site=A, cohort=2").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[1], ("cohort".into(), "2".into()));
        assert!(parse_subgroup("siteA").is_err());
    }
}
