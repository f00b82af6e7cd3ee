//! Randomized gradient checks over small networks and both loss families.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::data::LabelMatrix;
use crate::diffkernel::{grad_check_with, GradCheckReport, Mlp, Tensor2};
use crate::losses::{ClassWeights, LossFamily};
use crate::par::Exec;
use crate::{rng, Result};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckCase {
    pub draw: usize,
    pub family: LossFamily,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub num_examples: usize,
    pub report: GradCheckReport,
}

impl GradCheckCase {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }

    pub fn summary(&self) -> String {
        format!(
            "draw {:>2} {:<5} D={} H={} C={} N={} params={:<4} max_rel_err={:.3e} worst={} {}",
            self.draw,
            self.family.to_string(),
            self.input_dim,
            self.hidden_dim,
            self.num_classes,
            self.num_examples,
            self.report.params_checked,
            self.report.max_rel_error,
            self.report.worst,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Runs `draws` random architectures per loss family. With `corrupt` set the
/// loss gradient handed to backprop is perturbed, which every case should
/// then flag.
pub fn gradcheck_suite(
    seed: u64,
    draws: usize,
    epsilon: f64,
    tolerance: f64,
    corrupt: bool,
    exec: Exec,
) -> Result<Vec<GradCheckCase>> {
    let mut cases = Vec::with_capacity(2 * draws);
    for (fi, family) in [LossFamily::BrCe, LossFamily::Pwe].into_iter().enumerate() {
        for draw in 0..draws {
            let mut r = rng::substream(seed, &[fi as u64, draw as u64]);
            let d = r.random_range(2..=6);
            let h = r.random_range(2..=8);
            let c = r.random_range(2..=5);
            let n = r.random_range(2..=6);
            let x: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut r)).collect();
            let input = Tensor2::new(n, d, x)?;
            let y: Vec<u8> = (0..n * c).map(|_| u8::from(r.random_bool(0.5))).collect();
            let labels = LabelMatrix::new(n, c, y)?;
            let weights = ClassWeights::new((0..c).map(|_| r.random_range(0.5..3.0)).collect())?;
            let net = Mlp::he(&[d, h, 2 * c], 0.5, r.random())?;
            let loss = |logits: &Tensor2| -> Result<(f64, Tensor2)> {
                let (b, mut grad) = family.evaluate(logits, &labels, &weights, Exec::Sequential)?;
                if corrupt {
                    let g = grad.get(0, 0);
                    grad.set(0, 0, 1.5 * g + 0.05);
                }
                Ok((b.total, grad))
            };
            let report = grad_check_with(&net, &input, loss, epsilon, tolerance, exec)?;
            cases.push(GradCheckCase {
                draw,
                family,
                input_dim: d,
                hidden_dim: h,
                num_classes: c,
                num_examples: n,
                report,
            });
        }
    }
    Ok(cases)
}
