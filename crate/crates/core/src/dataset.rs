//! Tabular sample storage and CSV ingestion.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result, SampleId, Tick};

/// Column roles for [`ingest_csv`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub timestamp: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub id: Option<String>,
    /// Explicit feature columns; every remaining column when absent.
    #[serde(default)]
    pub features: Option<Vec<String>>,
}

impl CsvSchema {
    pub fn new(timestamp: impl Into<String>) -> Self {
        Self {
            timestamp: timestamp.into(),
            label: None,
            id: None,
            features: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }
}

/// One incoming sample, before it is given a place in a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    #[serde(default)]
    pub id: Option<SampleId>,
    pub tick: Tick,
    pub values: Vec<f64>,
    #[serde(default)]
    pub label: Option<i64>,
}

/// Samples stored column-wise: one feature vector, tick, label and id per row.
///
/// Rows are kept sorted by tick. Labels are optional per row; a dataset with
/// no labelled row is treated as unlabelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "DatasetRepr", into = "DatasetRepr")]
pub struct Dataset {
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    ticks: Vec<Tick>,
    labels: Vec<Option<i64>>,
    ids: Vec<SampleId>,
    index: HashMap<SampleId, usize>,
    next_id: u64,
}

#[derive(Serialize, Deserialize)]
struct DatasetRepr {
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    ticks: Vec<Tick>,
    labels: Vec<Option<i64>>,
    ids: Vec<SampleId>,
}

impl From<DatasetRepr> for Dataset {
    fn from(r: DatasetRepr) -> Self {
        let index = r.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let next_id = r.ids.iter().map(|id| id.0 + 1).max().unwrap_or(0);
        Dataset {
            next_id,
            feature_names: r.feature_names,
            rows: r.rows,
            ticks: r.ticks,
            labels: r.labels,
            ids: r.ids,
            index,
        }
    }
}

impl From<Dataset> for DatasetRepr {
    fn from(d: Dataset) -> Self {
        DatasetRepr {
            feature_names: d.feature_names,
            rows: d.rows,
            ticks: d.ticks,
            labels: d.labels,
            ids: d.ids,
        }
    }
}

impl Dataset {
    pub fn new(feature_names: Vec<String>) -> Self {
        Self {
            feature_names,
            rows: Vec::new(),
            ticks: Vec::new(),
            labels: Vec::new(),
            ids: Vec::new(),
            index: HashMap::new(),
            next_id: 0,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn ticks(&self) -> &[Tick] {
        &self.ticks
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[Option<i64>] {
        &self.labels
    }

    pub fn has_labels(&self) -> bool {
        self.labels.iter().any(Option::is_some)
    }

    pub fn last_tick(&self) -> Option<Tick> {
        self.ticks.last().copied()
    }

    pub fn contains(&self, id: SampleId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn position(&self, id: SampleId) -> Result<usize> {
        self.index
            .get(&id)
            .copied()
            .ok_or(CoreError::UnknownSample(id))
    }

    pub fn values(&self, id: SampleId) -> Result<&[f64]> {
        Ok(&self.rows[self.position(id)?])
    }

    pub fn tick(&self, id: SampleId) -> Result<Tick> {
        Ok(self.ticks[self.position(id)?])
    }

    pub fn label(&self, id: SampleId) -> Result<Option<i64>> {
        Ok(self.labels[self.position(id)?])
    }

    /// Smallest id not used by any row.
    pub fn next_id(&self) -> SampleId {
        SampleId(self.next_id)
    }

    /// Appends one row. Ticks must not decrease and ids must be fresh.
    pub fn push(&mut self, row: Row) -> Result<SampleId> {
        if row.values.len() != self.dim() {
            return Err(CoreError::Dimension {
                expected: self.dim(),
                got: row.values.len(),
            });
        }
        if let Some(pos) = row.values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite {
                row: self.len() + 1,
                column: self.feature_names[pos].clone(),
            });
        }
        if let Some(last) = self.last_tick() {
            if row.tick < last {
                return Err(CoreError::OutOfOrder {
                    tick: row.tick,
                    end_tick: last,
                });
            }
        }
        let id = row.id.unwrap_or_else(|| self.next_id());
        if self.index.contains_key(&id) {
            return Err(CoreError::InvalidArgument(format!("duplicate sample id {id}")));
        }
        self.index.insert(id, self.rows.len());
        self.next_id = self.next_id.max(id.0 + 1);
        self.rows.push(row.values);
        self.ticks.push(row.tick);
        self.labels.push(row.label);
        self.ids.push(id);
        Ok(id)
    }

    /// Rows whose tick lies in the half-open range `(after, upto]`.
    pub fn ids_in_ticks(&self, after: Tick, upto: Tick) -> impl Iterator<Item = SampleId> + '_ {
        let start = self.ticks.partition_point(|t| *t <= after);
        let end = self.ticks.partition_point(|t| *t <= upto);
        self.ids[start..end].iter().copied()
    }

    /// Writes the dataset back out as CSV, returning the schema that reads it.
    pub fn to_csv(&self) -> (String, CsvSchema) {
        let mut w = csv::Writer::from_writer(Vec::new());
        let labelled = self.has_labels();
        let mut header = vec!["id".to_string(), "tick".to_string()];
        header.extend(self.feature_names.iter().cloned());
        if labelled {
            header.push("label".to_string());
        }
        w.write_record(&header).expect("in-memory write");
        for i in 0..self.len() {
            let mut rec = vec![self.ids[i].0.to_string(), self.ticks[i].to_string()];
            rec.extend(self.rows[i].iter().map(|v| v.to_string()));
            if labelled {
                rec.push(self.labels[i].map(|l| l.to_string()).unwrap_or_default());
            }
            w.write_record(&rec).expect("in-memory write");
        }
        let text = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
        let mut schema = CsvSchema::new("tick").with_id("id");
        schema.features = Some(self.feature_names.clone());
        if labelled {
            schema.label = Some("label".into());
        }
        (text, schema)
    }
}

/// Parses a headed CSV document into a tick-sorted [`Dataset`].
///
/// Row numbers in errors count data rows from 1 (the header is not counted).
/// Ids come from the id column when the schema names one, otherwise from the
/// original row order starting at `id_base`.
pub fn ingest_csv(text: &str, schema: &CsvSchema) -> Result<Dataset> {
    ingest_csv_from(text, schema, 0)
}

pub fn ingest_csv_from(text: &str, schema: &CsvSchema, id_base: u64) -> Result<Dataset> {
    let rows = parse_csv_rows(text, schema, id_base)?;
    let (names, mut rows) = rows;
    // stable: equal ticks keep file order
    rows.sort_by_key(|r| r.tick);
    let mut ds = Dataset::new(names);
    for row in rows {
        ds.push(row)?;
    }
    Ok(ds)
}

/// Parses CSV text into unsorted rows plus the feature column names.
pub fn parse_csv_rows(
    text: &str,
    schema: &CsvSchema,
    id_base: u64,
) -> Result<(Vec<String>, Vec<Row>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CoreError::Schema(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(CoreError::Schema("missing header row".into()));
    }
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CoreError::Schema(format!("missing column {name:?}")))
    };
    let ts_col = find(&schema.timestamp)?;
    let label_col = schema.label.as_deref().map(find).transpose()?;
    let id_col = schema.id.as_deref().map(find).transpose()?;
    let feature_cols: Vec<usize> = match &schema.features {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|c| *c != ts_col && Some(*c) != label_col && Some(*c) != id_col)
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(CoreError::Schema("no feature columns".into()));
    }
    let names = feature_cols.iter().map(|c| header[*c].clone()).collect();

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| CoreError::Parse {
            row: row_no,
            column: String::new(),
            message: e.to_string(),
        })?;
        let cell = |c: usize| record.get(c).unwrap_or("");
        let parse_err = |c: usize, msg: String| CoreError::Parse {
            row: row_no,
            column: header[c].clone(),
            message: msg,
        };
        let tick: Tick = cell(ts_col)
            .parse()
            .map_err(|_| parse_err(ts_col, format!("invalid tick {:?}", cell(ts_col))))?;
        let mut values = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let v: f64 = cell(c)
                .parse()
                .map_err(|_| parse_err(c, format!("invalid number {:?}", cell(c))))?;
            if !v.is_finite() {
                return Err(CoreError::NonFinite {
                    row: row_no,
                    column: header[c].clone(),
                });
            }
            values.push(v);
        }
        let label = match label_col {
            Some(c) if !cell(c).is_empty() => Some(
                cell(c)
                    .parse()
                    .map_err(|_| parse_err(c, format!("invalid label {:?}", cell(c))))?,
            ),
            _ => None,
        };
        let id = match id_col {
            Some(c) => SampleId(
                cell(c)
                    .parse()
                    .map_err(|_| parse_err(c, format!("invalid id {:?}", cell(c))))?,
            ),
            None => SampleId(id_base + i as u64),
        };
        rows.push(Row {
            id: Some(id),
            tick,
            values,
            label,
        });
    }
    Ok((names, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "t,f1,f2\n1,0.5,1.0\n2,0.1,0.2\n3,0.0,0.0";

    #[test]
    fn parses_small_csv() {
        let ds = ingest_csv(SMALL, &CsvSchema::new("t")).unwrap();
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.ticks(), &[1, 2, 3]);
        assert_eq!(ds.values(SampleId(0)).unwrap(), &[0.5, 1.0]);
        assert!(!ds.has_labels());
    }

    #[test]
    fn shuffled_rows_sort_to_same_dataset() {
        let shuffled = "t,f1,f2\n3,0.0,0.0\n1,0.5,1.0\n2,0.1,0.2";
        let a = ingest_csv(SMALL, &CsvSchema::new("t")).unwrap();
        let b = ingest_csv(shuffled, &CsvSchema::new("t")).unwrap();
        assert_eq!(a.rows(), b.rows());
        assert_eq!(a.ticks(), b.ticks());
    }

    #[test]
    fn equal_ticks_keep_file_order() {
        let text = "t,f\n2,1\n1,2\n2,3\n1,4";
        let ds = ingest_csv(text, &CsvSchema::new("t")).unwrap();
        let firsts: Vec<f64> = ds.rows().iter().map(|r| r[0]).collect();
        assert_eq!(firsts, vec![2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let text = "t,f1,f2\n1,0.5,1.0\n2,abc,0.2";
        match ingest_csv(text, &CsvSchema::new("t")) {
            Err(CoreError::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "f1");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_timestamp_column_is_schema_error() {
        let err = ingest_csv(SMALL, &CsvSchema::new("time")).unwrap_err();
        assert!(matches!(err, CoreError::Schema(_)));
    }

    #[test]
    fn non_finite_rejected_with_row() {
        let text = "t,f\n1,1.0\n2,NaN\n3,inf";
        match ingest_csv(text, &CsvSchema::new("t")) {
            Err(CoreError::NonFinite { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn empty_document_is_schema_error() {
        assert!(ingest_csv("", &CsvSchema::new("t")).is_err());
    }

    #[test]
    fn labels_and_ids() {
        let text = "id,t,x,y\n10,1,0.5,1\n11,2,0.25,\n";
        let schema = CsvSchema::new("t").with_label("y").with_id("id");
        let ds = ingest_csv(text, &schema).unwrap();
        assert_eq!(ds.ids(), &[SampleId(10), SampleId(11)]);
        assert_eq!(ds.labels(), &[Some(1), None]);
        assert_eq!(ds.next_id(), SampleId(12));
    }

    #[test]
    fn push_rejects_decreasing_tick() {
        let mut ds = ingest_csv(SMALL, &CsvSchema::new("t")).unwrap();
        let err = ds
            .push(Row {
                id: None,
                tick: 2,
                values: vec![0.0, 0.0],
                label: None,
            })
            .unwrap_err();
        assert!(matches!(err, CoreError::OutOfOrder { .. }));
    }

    #[test]
    fn tick_range_is_half_open() {
        let text = "t,f\n1,0\n2,0\n2,0\n3,0\n4,0";
        let ds = ingest_csv(text, &CsvSchema::new("t")).unwrap();
        let ids: Vec<_> = ds.ids_in_ticks(1, 3).collect();
        assert_eq!(ids, vec![SampleId(1), SampleId(2), SampleId(3)]);
    }

    mod roundtrip {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn csv_roundtrip_is_identity(
                rows in prop::collection::vec(
                    (0i64..50, prop::collection::vec(-1e6f64..1e6, 3), prop::option::of(0i64..4)),
                    1..40,
                )
            ) {
                let mut rows = rows;
                rows.sort_by_key(|r| r.0);
                let mut ds = Dataset::new(vec!["a".into(), "b".into(), "c".into()]);
                for (tick, values, label) in rows {
                    ds.push(Row { id: None, tick, values, label }).unwrap();
                }
                let (text, schema) = ds.to_csv();
                let back = ingest_csv(&text, &schema).unwrap();
                prop_assert_eq!(back, ds);
            }
        }
    }
}
