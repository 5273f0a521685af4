use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Labelled samples: `features` is `m × d_f`, `labels[k] ∈ [0, classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch { expected: features.nrows(), got: labels.len() });
        }
        if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::LabelOutOfRange { row: row + 1, label: l.to_string(), classes });
        }
        Ok(Dataset { features, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn sample(&self, k: usize) -> DVector<f64> {
        self.features.row(k).transpose()
    }

    pub fn label(&self, k: usize) -> usize {
        self.labels[k]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// One-hot encoding of sample `k`'s label.
    pub fn one_hot(&self, k: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.classes);
        v[self.labels[k]] = 1.0;
        v
    }

    fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(rows.iter()),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            classes: self.classes,
        }
    }
}

/// Reads a headerless CSV whose last column is an integer class label and the
/// remaining columns are real features. Lines starting with `#` are skipped.
///
/// With `classes = None` the class count is one more than the largest label.
pub fn load_dataset_csv(path: impl AsRef<Path>, classes: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse { location: path.display().to_string(), message: e.to_string() })?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let parse_err = |message: String| Error::Parse { location: format!("{} row {row}", path.display()), message };
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        if record.len() < 2 {
            return Err(parse_err(format!("expected at least one feature and a label, got {} fields", record.len())));
        }
        let (label_field, feature_fields) = (&record[record.len() - 1], record.iter().take(record.len() - 1));
        let feats = feature_fields
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(format!("feature `{f}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != feats.len() {
                return Err(parse_err(format!("expected {} features, got {}", first.len(), feats.len())));
            }
        }
        let label: usize = label_field.parse().map_err(|_| Error::LabelOutOfRange {
            row,
            label: label_field.to_string(),
            classes: classes.unwrap_or(0),
        })?;
        if let Some(c) = classes {
            if label >= c {
                return Err(Error::LabelOutOfRange { row, label: label_field.to_string(), classes: c });
            }
        }
        rows.push(feats);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Parse { location: path.display().to_string(), message: "no samples".into() });
    }
    let classes = classes.unwrap_or_else(|| labels.iter().max().unwrap() + 1);
    let d_f = rows[0].len();
    let features = DMatrix::from_row_iterator(rows.len(), d_f, rows.into_iter().flatten());
    Dataset::new(features, labels, classes)
}

/// Round-robin split: sample `k` goes to node `k mod n`.
pub fn partition_even(data: &Dataset, n: usize) -> Result<Vec<Dataset>> {
    if n == 0 {
        return Err(Error::InvalidArgument("cannot partition across zero nodes".into()));
    }
    if data.len() < n {
        return Err(Error::EmptyLocalDataset { node: data.len() });
    }
    Ok((0..n)
        .map(|i| {
            let rows: Vec<usize> = (i..data.len()).step_by(n).collect();
            data.select(&rows)
        })
        .collect())
}
