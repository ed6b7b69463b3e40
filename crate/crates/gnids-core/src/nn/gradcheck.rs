//! Central-difference gradient checking.

use crate::error::Result;
use crate::nn::params::ParameterStore;
use crate::nn::tape::{Tape, ValueId};

/// Outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `group.member[element]` of the worst coordinate.
    pub worst_param: String,
    pub checked: usize,
    /// Worst relative error per parameter group, canonical order.
    pub per_group: Vec<(String, f64)>,
}

/// Compare reverse-mode gradients against central finite differences.
///
/// `forward` must be a deterministic function of the registered parameters.
/// Per parameter group, up to `per_group` scalar coordinates are probed
/// (evenly strided, so the selection is reproducible); groups smaller than
/// that are probed exhaustively. Relative error uses
/// `|ad - fd| / max(|ad|, |fd|, 1e-6)`.
pub fn grad_check<F>(
    params: &ParameterStore,
    step: f64,
    per_group: usize,
    forward: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[ValueId]) -> Result<ValueId>,
{
    // Reverse-mode reference values.
    let mut tape = Tape::new();
    let ids = params.register_all(&mut tape);
    let loss = forward(&mut tape, &ids)?;
    tape.backward(loss)?;
    let ad_grads = params.collect_grads(&tape, &ids);

    let eval = |work: &ParameterStore| -> Result<f64> {
        let mut tape = Tape::new();
        let ids = work.register_all(&mut tape);
        let loss = forward(&mut tape, &ids)?;
        Ok(tape.value(loss).scalar_value())
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        checked: 0,
        per_group: Vec::new(),
    };

    for group in params.groups() {
        // flat coordinate list (entry index, element index) for this group
        let mut coords: Vec<(usize, usize)> = Vec::new();
        for entry in 0..params.len() {
            let name = params.name_at(entry);
            if name.split('.').next().unwrap_or(name) == group {
                for elem in 0..params.tensor_at(entry).len() {
                    coords.push((entry, elem));
                }
            }
        }
        let take = per_group.min(coords.len());
        let mut group_worst = 0.0f64;
        for j in 0..take {
            let (entry, elem) = coords[j * coords.len() / take];
            let original = work.tensor_at(entry).data()[elem];

            work.tensor_at_mut(entry).data_mut()[elem] = original + step;
            let f_plus = eval(&work)?;
            work.tensor_at_mut(entry).data_mut()[elem] = original - step;
            let f_minus = eval(&work)?;
            work.tensor_at_mut(entry).data_mut()[elem] = original;

            let fd = (f_plus - f_minus) / (2.0 * step);
            let ad = ad_grads[entry].data()[elem];
            let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-6);
            report.checked += 1;
            if rel > group_worst {
                group_worst = rel;
            }
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = format!("{}[{}]", params.name_at(entry), elem);
            }
        }
        report.per_group.push((group, group_worst));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{dense, Activation};
    use crate::nn::tensor::Tensor;

    #[test]
    fn quadratic_toy_function_is_exact_up_to_roundoff() {
        // loss = sum((w - c)^2); central differences are exact for quadratics
        let mut params = ParameterStore::new();
        params
            .push("q.w", Tensor::from_vec(&[1, 3], vec![0.7, -1.3, 2.1]).unwrap())
            .unwrap();
        let report = grad_check(&params, 1e-5, 300, |tape, ids| {
            let c = tape.leaf(Tensor::from_vec(&[1, 3], vec![0.5, 0.5, 0.5]).unwrap());
            let d = tape.sub(ids[0], c)?;
            let sq = tape.mul(d, d)?;
            let ones = tape.leaf(Tensor::from_vec(&[3, 1], vec![1.0; 3]).unwrap());
            tape.matmul(sq, ones)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn dense_relu_layer_away_from_kinks() {
        let mut params = ParameterStore::new();
        // values chosen so no preactivation sits near zero
        params
            .push(
                "layer.w",
                Tensor::from_vec(&[2, 2], vec![0.8, -0.6, 0.3, 0.9]).unwrap(),
            )
            .unwrap();
        params
            .push("layer.b", Tensor::from_vec(&[2], vec![0.2, -0.4]).unwrap())
            .unwrap();
        let report = grad_check(&params, 1e-5, 300, |tape, ids| {
            let x = tape.leaf(Tensor::from_vec(&[1, 2], vec![1.5, -2.5]).unwrap());
            let h = dense(tape, x, ids[0], ids[1], Activation::Relu)?;
            let ones = tape.leaf(Tensor::from_vec(&[2, 1], vec![1.0; 2]).unwrap());
            tape.matmul(h, ones)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}
