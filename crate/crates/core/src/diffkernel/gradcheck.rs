use serde::Serialize;

use super::{Mlp, Tensor2};
use crate::par::{self, Exec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// Location of one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamId {
    pub layer: usize,
    pub kind: ParamKind,
    pub index: usize,
}

impl std::fmt::Display for ParamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            ParamKind::Weight => "weight",
            ParamKind::Bias => "bias",
        };
        write!(f, "layer {} {kind}[{}]", self.layer, self.index)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: ParamId,
    pub analytic: f64,
    pub numeric: f64,
    pub params_checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn param_mut(net: &mut Mlp, id: ParamId) -> &mut f64 {
    let layer = &mut net.layers_mut()[id.layer];
    match id.kind {
        ParamKind::Weight => &mut layer.weight_mut().values_mut()[id.index],
        ParamKind::Bias => &mut layer.bias_mut()[id.index],
    }
}

fn param_ids(net: &Mlp) -> Vec<ParamId> {
    let mut ids = Vec::with_capacity(net.num_params());
    for (l, layer) in net.layers().iter().enumerate() {
        ids.extend((0..layer.weight().values().len()).map(|index| ParamId {
            layer: l,
            kind: ParamKind::Weight,
            index,
        }));
        ids.extend((0..layer.bias().len()).map(|index| ParamId { layer: l, kind: ParamKind::Bias, index }));
    }
    ids
}

/// Compares backprop gradients with central differences for every parameter.
///
/// `loss` maps the network's logits to `(loss, d loss / d logits)`. Dropout is
/// never applied during the check.
pub fn grad_check<L>(net: &Mlp, input: &Tensor2, loss: L, epsilon: f64, tolerance: f64) -> Result<GradCheckReport>
where
    L: Fn(&Tensor2) -> Result<(f64, Tensor2)> + Sync,
{
    grad_check_with(net, input, loss, epsilon, tolerance, Exec::default())
}

pub fn grad_check_with<L>(
    net: &Mlp,
    input: &Tensor2,
    loss: L,
    epsilon: f64,
    tolerance: f64,
    exec: Exec,
) -> Result<GradCheckReport>
where
    L: Fn(&Tensor2) -> Result<(f64, Tensor2)> + Sync,
{
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::Parameter(format!("epsilon {epsilon} outside [1e-6, 1e-3]")));
    }
    let mut analytic_net = net.clone();
    analytic_net.zero_grad();
    let (logits, cache) = analytic_net.forward_train(input, None)?;
    let (value, d_logits) = loss(&logits)?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    analytic_net.backward(&cache, &d_logits)?;

    let ids = param_ids(net);
    let eval = |net: &Mlp| -> Result<f64> {
        let logits = net.forward_eval(input, Exec::Sequential)?;
        let (v, _) = loss(&logits)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("loss is {v}")))
        }
    };
    let numeric = par::map_indices(exec, ids.len(), |k| -> Result<f64> {
        let mut probe = net.clone();
        let orig = *param_mut(&mut probe, ids[k]);
        *param_mut(&mut probe, ids[k]) = orig + epsilon;
        let plus = eval(&probe)?;
        *param_mut(&mut probe, ids[k]) = orig - epsilon;
        let minus = eval(&probe)?;
        Ok((plus - minus) / (2.0 * epsilon))
    });

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: ids[0],
        analytic: 0.0,
        numeric: 0.0,
        params_checked: ids.len(),
        tolerance,
    };
    for (id, num) in ids.iter().zip(numeric) {
        let num = num?;
        let layer = &analytic_net.layers()[id.layer];
        let ana = match id.kind {
            ParamKind::Weight => layer.weight_grad().values()[id.index],
            ParamKind::Bias => layer.bias_grad()[id.index],
        };
        let err = relative_error(ana, num);
        if err > report.max_rel_error || !err.is_finite() {
            report = GradCheckReport { max_rel_error: err, worst: *id, analytic: ana, numeric: num, ..report };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffkernel::LinearLayer;

    fn quadratic(target: Tensor2) -> impl Fn(&Tensor2) -> Result<(f64, Tensor2)> + Sync {
        move |out: &Tensor2| {
            let n = out.rows() as f64;
            let mut grad = Tensor2::zeros(out.rows(), out.cols());
            let mut l = 0.0;
            for (k, (o, t)) in out.values().iter().zip(target.values()).enumerate() {
                let r = o - t;
                l += 0.5 * r * r / n;
                grad.values_mut()[k] = r / n;
            }
            Ok((l, grad))
        }
    }

    #[test]
    fn linear_regression_toy_is_exact() {
        let net = Mlp::new(vec![LinearLayer::he(3, 1, 4).unwrap()], 0.0, 4).unwrap();
        let x = Tensor2::from_rows(&[[1.0, 2.0, -1.0], [0.5, -0.3, 2.0], [-1.5, 0.2, 0.7]]).unwrap();
        let y = Tensor2::from_rows(&[[1.0], [-2.0], [0.5]]).unwrap();
        let report = grad_check(&net, &x, quadratic(y), 1e-5, 1e-7).unwrap();
        assert!(report.max_rel_error < 1e-7, "{report:?}");
        assert_eq!(report.params_checked, 4);
    }

    #[test]
    fn stationary_point_has_zero_gradients() {
        let net = Mlp::new(vec![LinearLayer::zeros(2, 4).unwrap(), LinearLayer::zeros(4, 2).unwrap()], 0.0, 0).unwrap();
        let x = Tensor2::from_rows(&[[1.0, -1.0], [0.3, 0.2]]).unwrap();
        let report = grad_check(&net, &x, quadratic(Tensor2::zeros(2, 2)), 1e-5, 1e-4).unwrap();
        assert!(report.analytic.abs() < 1e-12 && report.numeric.abs() < 1e-12);
        assert!(report.passed());
    }

    #[test]
    fn epsilon_range_enforced() {
        let net = Mlp::he(&[2, 2], 0.0, 0).unwrap();
        let x = Tensor2::zeros(1, 2);
        assert!(grad_check(&net, &x, quadratic(Tensor2::zeros(1, 2)), 1e-2, 1e-4).is_err());
    }

    #[test]
    fn non_finite_loss_is_numeric_error() {
        let net = Mlp::he(&[2, 2], 0.0, 0).unwrap();
        let x = Tensor2::zeros(1, 2);
        let bad = |out: &Tensor2| Ok((f64::NAN, Tensor2::zeros(out.rows(), out.cols())));
        assert!(matches!(grad_check(&net, &x, bad, 1e-5, 1e-4), Err(Error::Numeric(_))));
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let net = Mlp::he(&[3, 5, 2], 0.0, 8).unwrap();
        let x = Tensor2::from_rows(&[[1.0, 0.5, -0.2], [0.1, -1.0, 0.4]]).unwrap();
        let y = Tensor2::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let q = quadratic(y);
        let corrupted = |out: &Tensor2| {
            let (l, mut g) = q(out)?;
            g.values_mut()[0] *= 1.5;
            Ok((l, g))
        };
        let report = grad_check(&net, &x, corrupted, 1e-5, 1e-4).unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn parallel_and_sequential_reports_match() {
        let net = Mlp::he(&[3, 6, 2], 0.0, 2).unwrap();
        let x = Tensor2::from_rows(&[[1.0, 0.5, -0.2], [0.1, -1.0, 0.4]]).unwrap();
        let y = Tensor2::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let a = grad_check_with(&net, &x, quadratic(y.clone()), 1e-5, 1e-4, Exec::Parallel).unwrap();
        let b = grad_check_with(&net, &x, quadratic(y), 1e-5, 1e-4, Exec::Sequential).unwrap();
        assert_eq!(a.max_rel_error.to_bits(), b.max_rel_error.to_bits());
        assert_eq!(a.worst, b.worst);
    }
}
