use crate::features::{FeatureVector, Fingerprint};

use super::OracleError;

/// Training rows stored sparsely (zeros dropped), all under one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Fingerprint,
    n_features: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    labels: Vec<u8>,
    weights: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(schema: Fingerprint, n_features: usize) -> Self {
        Self {
            schema,
            n_features,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            labels: Vec::new(),
            weights: None,
        }
    }

    /// Build from dense rows over an anonymous layout (see [`Fingerprint::raw`]).
    pub fn from_dense(rows: &[Vec<f64>], labels: &[u8]) -> Result<Self, OracleError> {
        if rows.len() != labels.len() {
            return Err(OracleError::LengthMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        let n = rows.first().map_or(0, Vec::len);
        let mut ds = Dataset::new(Fingerprint::raw(n), n);
        for (row, &y) in rows.iter().zip(labels) {
            ds.push(&FeatureVector::raw(row.clone()), y)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, x: &FeatureVector, label: u8) -> Result<(), OracleError> {
        self.push_inner(x, label, None)
    }

    pub fn push_weighted(
        &mut self,
        x: &FeatureVector,
        label: u8,
        weight: f64,
    ) -> Result<(), OracleError> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(OracleError::InvalidInput(format!("row weight {weight}")));
        }
        self.push_inner(x, label, Some(weight))
    }

    fn push_inner(&mut self, x: &FeatureVector, label: u8, weight: Option<f64>) -> Result<(), OracleError> {
        if x.schema != self.schema || x.values.len() != self.n_features {
            return Err(OracleError::SchemaMismatch {
                expected: self.schema,
                got: x.schema,
            });
        }
        if label > 1 {
            return Err(OracleError::InvalidInput(format!("label {label}")));
        }
        if x.values.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite);
        }
        for (j, &v) in x.values.iter().enumerate() {
            if v != 0.0 {
                self.cols.push(j as u32);
                self.vals.push(v);
            }
        }
        self.row_ptr.push(self.cols.len());
        self.labels.push(label);
        match (weight, &mut self.weights) {
            (Some(w), Some(ws)) => ws.push(w),
            (Some(w), None) => {
                let mut ws = vec![1.0; self.labels.len() - 1];
                ws.push(w);
                self.weights = Some(ws);
            }
            (None, Some(ws)) => ws.push(1.0),
            (None, None) => {}
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn schema(&self) -> Fingerprint {
        self.schema
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn has_weights(&self) -> bool {
        self.weights.is_some()
    }

    /// Non-zero `(columns, values)` of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        let (cols, vals) = self.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            out[c as usize] = v;
        }
        out
    }

    pub fn positive_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &y) in self.labels.iter().enumerate() {
            let w = self.weight(i);
            num += w * f64::from(y);
            den += w;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    pub(crate) fn dot(&self, i: usize, weights: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter()
            .zip(vals)
            .map(|(&c, &v)| weights[c as usize] * v)
            .sum()
    }
}
