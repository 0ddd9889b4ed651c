//! Sparse Adam.
//!
//! Only rows present in the batch gradient have their moments updated;
//! untouched rows keep their moments as they were (no decay). Bias
//! correction uses the global step counter, which advances once per call.

use crate::error::{HakeError, Result};
use crate::model::{ModelParams, Table, TableId};

use super::config::TrainConfig;
use super::grads::Gradients;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    first: [Table; 5],
    second: [Table; 5],
    lambda_first: [f64; 2],
    lambda_second: [f64; 2],
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let shape = |id: TableId| {
            let t = params.table(id);
            Table::zeros(t.rows(), t.cols())
        };
        Self {
            first: TableId::ALL.map(shape),
            second: TableId::ALL.map(shape),
            lambda_first: [0.0; 2],
            lambda_second: [0.0; 2],
            step: 0,
        }
    }

    pub fn first_moment(&self, id: TableId) -> &Table {
        &self.first[id as usize]
    }

    pub fn second_moment(&self, id: TableId) -> &Table {
        &self.second[id as usize]
    }
}

#[inline]
fn adam_update(
    p: &mut f64,
    m: &mut f64,
    v: &mut f64,
    g: f64,
    lr: f64,
    c: (f64, f64, f64, f64, f64),
) {
    let (b1, b2, eps, corr1, corr2) = c;
    *m = b1 * *m + (1.0 - b1) * g;
    *v = b2 * *v + (1.0 - b2) * g * g;
    let m_hat = *m / corr1;
    let v_hat = *v / corr2;
    *p -= lr * m_hat / (v_hat.sqrt() + eps);
}

/// One Adam step over the rows in `grads` (gradients of the quantity being
/// minimised). Lambdas are only updated when `trainable_lambda` is set and
/// are kept non-negative.
pub fn adam_step(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    grads: &Gradients,
    config: &TrainConfig,
) -> Result<()> {
    for (table, row, values) in grads.iter() {
        if params.table(table).rows() <= row || values.len() != params.k() {
            return Err(HakeError::Data(format!(
                "gradient for {} row {row} does not match parameter shape",
                table.name()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HakeError::NonFiniteGradient {
                table: table.name(),
                row,
            });
        }
    }
    if config.trainable_lambda {
        for (name, g) in [("lambda_mod", grads.lambda_mod), ("lambda_phase", grads.lambda_phase)] {
            if !g.is_finite() {
                return Err(HakeError::NonFiniteGradient { table: name, row: 0 });
            }
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c = (b1, b2, config.adam_eps, 1.0 - b1.powi(t), 1.0 - b2.powi(t));
    let lr = config.lr;

    for (table, row, values) in grads.iter() {
        let idx = table as usize;
        let p = params.table_mut(table).row_mut(row);
        let m = state.first[idx].row_mut(row);
        let v = state.second[idx].row_mut(row);
        for i in 0..values.len() {
            adam_update(&mut p[i], &mut m[i], &mut v[i], values[i], lr, c);
        }
    }

    if config.trainable_lambda {
        let lambdas = [&mut params.lambda_mod, &mut params.lambda_phase];
        let gs = [grads.lambda_mod, grads.lambda_phase];
        for (i, (lam, g)) in lambdas.into_iter().zip(gs).enumerate() {
            adam_update(lam, &mut state.lambda_first[i], &mut state.lambda_second[i], g, lr, c);
            *lam = lam.max(0.0);
        }
    }
    Ok(())
}
