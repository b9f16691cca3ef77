use std::collections::BTreeSet;

use serde::Serialize;

use super::conv::{Gradient, KgeModel};
use crate::error::{Error, Result};
use crate::kg::Triple;
use crate::math::neg_log_sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Worst relative error per parameter group (`kernels`, `kernel_biases`,
    /// `out_weights`, `out_bias`, `embeddings`).
    pub groups: Vec<(String, f64)>,
    /// Number of scalar parameters compared.
    pub checked: usize,
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic BPR gradient of every scorer parameter and every
/// token row touched by the batch against central finite differences.
///
/// The model is cloned, so the caller's parameters are never modified.
pub fn grad_check(
    model: &KgeModel,
    positives: &[Triple],
    negatives: &[Triple],
    eps: f64,
) -> Result<GradCheckReport> {
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::Config(format!(
            "finite-difference step {eps} must lie in (0, 1e-2]"
        )));
    }
    if positives.len() != negatives.len() || positives.is_empty() {
        return Err(Error::Data(
            "grad_check needs a nonempty, position-paired batch".into(),
        ));
    }
    let mut work = model.clone();
    let pos: Vec<_> = positives.iter().map(|t| work.compile(t)).collect();
    let neg: Vec<_> = negatives.iter().map(|t| work.compile(t)).collect();

    let mut grad = Gradient::zeros(work.params().len());
    for (p, n) in pos.iter().zip(&neg) {
        work.pair_loss_and_grad(p, n, &mut grad);
    }

    let loss = |m: &KgeModel| -> f64 {
        pos.iter()
            .zip(&neg)
            .map(|(p, n)| neg_log_sigmoid(m.forward_compiled(p).prob - m.forward_compiled(n).prob))
            .sum()
    };

    let mut groups = Vec::new();
    let mut checked = 0;
    for (name, range) in work.layout().groups() {
        let mut worst: f64 = 0.0;
        for i in range {
            let orig = work.params()[i];
            work.params_mut()[i] = orig + eps;
            let up = loss(&work);
            work.params_mut()[i] = orig - eps;
            let down = loss(&work);
            work.params_mut()[i] = orig;
            worst = worst.max(relative_error(grad.params[i], (up - down) / (2.0 * eps)));
            checked += 1;
        }
        groups.push((name.to_string(), worst));
    }

    let touched: BTreeSet<usize> = pos
        .iter()
        .chain(&neg)
        .flat_map(|t| t.0.iter().flatten().copied())
        .collect();
    let dim = work.dim();
    let mut worst: f64 = 0.0;
    for id in touched {
        let analytic = grad
            .tokens
            .get(&id)
            .cloned()
            .unwrap_or_else(|| vec![0.0; dim]);
        for (k, &ga) in analytic.iter().enumerate() {
            let orig = work.emb.row(id)[k];
            work.emb.row_mut(id)[k] = orig + eps;
            let up = loss(&work);
            work.emb.row_mut(id)[k] = orig - eps;
            let down = loss(&work);
            work.emb.row_mut(id)[k] = orig;
            worst = worst.max(relative_error(ga, (up - down) / (2.0 * eps)));
            checked += 1;
        }
    }
    groups.push(("embeddings".to_string(), worst));

    let max_relative_error = groups.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_relative_error,
        groups,
        checked,
    })
}
