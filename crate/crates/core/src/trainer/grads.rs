use std::collections::BTreeMap;

use crate::model::{GradSlices, TableId};

/// Sparse gradient: one dense row per touched `(table, row)`, plus the two
/// lambda scalars.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    rows: BTreeMap<(TableId, usize), Vec<f64>>,
    pub lambda_mod: f64,
    pub lambda_phase: f64,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `coef · slices`, summing slices that land on the same row.
    pub fn add_slices(&mut self, slices: &GradSlices, coef: f64) {
        for (table, row, values) in slices.rows() {
            self.add_row(table, row, values, coef);
        }
        self.lambda_mod += coef * slices.lambda_mod;
        self.lambda_phase += coef * slices.lambda_phase;
    }

    pub fn add_row(&mut self, table: TableId, row: usize, values: &[f64], coef: f64) {
        let acc = self
            .rows
            .entry((table, row))
            .or_insert_with(|| vec![0.0; values.len()]);
        for (a, v) in acc.iter_mut().zip(values) {
            *a += coef * v;
        }
    }

    /// Adds `other` into `self`.
    pub fn merge(&mut self, other: &Gradients) {
        for (&(table, row), values) in &other.rows {
            self.add_row(table, row, values, 1.0);
        }
        self.lambda_mod += other.lambda_mod;
        self.lambda_phase += other.lambda_phase;
    }

    pub fn scale(&mut self, factor: f64) {
        for values in self.rows.values_mut() {
            values.iter_mut().for_each(|v| *v *= factor);
        }
        self.lambda_mod *= factor;
        self.lambda_phase *= factor;
    }

    pub fn get(&self, table: TableId, row: usize) -> Option<&[f64]> {
        self.rows.get(&(table, row)).map(Vec::as_slice)
    }

    /// Touched rows in `(table, row)` order.
    pub fn iter(&self) -> impl Iterator<Item = (TableId, usize, &[f64])> {
        self.rows.iter().map(|(&(t, r), v)| (t, r, v.as_slice()))
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
