use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, LabelMatrix, Split};
use crate::diffkernel::Tensor2;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoolOp {
    Xor,
    And,
    Or,
    Not,
}

impl BoolOp {
    pub fn apply(self, inputs: &[bool]) -> bool {
        match self {
            BoolOp::Xor => inputs.iter().fold(false, |a, &b| a ^ b),
            BoolOp::And => inputs.iter().all(|&b| b),
            BoolOp::Or => inputs.iter().any(|&b| b),
            BoolOp::Not => !inputs[0],
        }
    }
}

/// A class whose label is a boolean function of other labels, with noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyRule {
    pub target: usize,
    pub op: BoolOp,
    pub inputs: Vec<usize>,
    #[serde(default)]
    pub flip_rate: f64,
}

/// Recipe for a synthetic multi-label dataset.
///
/// Classes without a rule are drawn independently from their prior and leave
/// a Gaussian footprint `signal[c] * direction_c` on the features. Rule
/// targets are computed from other labels and leave no footprint, so they can
/// only be recovered through label dependencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_examples: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    pub priors: Vec<f64>,
    pub signal: Vec<f64>,
    #[serde(default)]
    pub rules: Vec<DependencyRule>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// When set, consecutive blocks of this many examples share a group
    /// (a stand-in for patients) and the split keeps groups together.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_size: Option<usize>,
    pub seed: u64,
}

fn default_test_fraction() -> f64 {
    0.2
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SynthSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn class_names(&self) -> Vec<String> {
        self.class_names.clone().unwrap_or_else(|| (0..self.num_classes).map(|c| format!("c{c}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.num_classes;
        if self.num_examples < 2 || self.feature_dim == 0 || c == 0 {
            return Err(Error::Spec("need at least 2 examples, 1 feature and 1 class".into()));
        }
        if self.priors.len() != c || self.signal.len() != c {
            return Err(Error::Spec(format!(
                "{} priors and {} signal entries for {c} classes",
                self.priors.len(),
                self.signal.len()
            )));
        }
        if let Some(names) = &self.class_names {
            if names.len() != c {
                return Err(Error::Spec(format!("{} class names for {c} classes", names.len())));
            }
            for (i, name) in names.iter().enumerate() {
                if name.is_empty() || name.contains(',') || names[..i].contains(name) || is_feature_header(name) {
                    return Err(Error::Spec(format!("invalid or duplicate class name {name:?}")));
                }
            }
        }
        if let Some(p) = self.priors.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::Spec(format!("prior {p} outside (0, 1)")));
        }
        if let Some(s) = self.signal.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::Spec(format!("signal {s} must be finite and non-negative")));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Spec(format!("test fraction {} outside (0, 1)", self.test_fraction)));
        }
        if self.group_size == Some(0) {
            return Err(Error::Spec("group size must be positive".into()));
        }
        let mut seen = vec![false; c];
        for rule in &self.rules {
            if rule.target >= c || rule.inputs.iter().any(|&i| i >= c) {
                return Err(Error::Spec(format!("rule for class {} references a class outside 0..{c}", rule.target)));
            }
            if std::mem::replace(&mut seen[rule.target], true) {
                return Err(Error::Spec(format!("class {} has more than one rule", rule.target)));
            }
            if rule.inputs.contains(&rule.target) {
                return Err(Error::Spec(format!("rule for class {} uses itself as input", rule.target)));
            }
            let arity_ok = match rule.op {
                BoolOp::Not => rule.inputs.len() == 1,
                _ => !rule.inputs.is_empty(),
            };
            if !arity_ok {
                return Err(Error::Spec(format!(
                    "rule for class {} has {} inputs for {:?}",
                    rule.target,
                    rule.inputs.len(),
                    rule.op
                )));
            }
            if !(0.0..=0.5).contains(&rule.flip_rate) {
                return Err(Error::Spec(format!("flip rate {} outside [0, 0.5]", rule.flip_rate)));
            }
        }
        self.rule_order().map(|_| ())
    }

    /// Rule indices in dependency order; errors on a cycle.
    fn rule_order(&self) -> Result<Vec<usize>> {
        let mut rule_of = vec![None; self.num_classes];
        for (i, r) in self.rules.iter().enumerate() {
            rule_of[r.target] = Some(i);
        }
        // 0 unvisited, 1 on stack, 2 done
        let mut state = vec![0u8; self.rules.len()];
        let mut order = Vec::with_capacity(self.rules.len());
        fn visit(
            i: usize,
            spec: &SynthSpec,
            rule_of: &[Option<usize>],
            state: &mut [u8],
            order: &mut Vec<usize>,
        ) -> Result<()> {
            match state[i] {
                2 => return Ok(()),
                1 => return Err(Error::Spec(format!("cyclic dependency through class {}", spec.rules[i].target))),
                _ => {}
            }
            state[i] = 1;
            for &input in &spec.rules[i].inputs {
                if let Some(j) = rule_of[input] {
                    visit(j, spec, rule_of, state, order)?;
                }
            }
            state[i] = 2;
            order.push(i);
            Ok(())
        }
        for i in 0..self.rules.len() {
            visit(i, self, &rule_of, &mut state, &mut order)?;
        }
        Ok(order)
    }

    pub fn is_rule_target(&self, class: usize) -> bool {
        self.rules.iter().any(|r| r.target == class)
    }
}

pub(crate) fn is_feature_header(name: &str) -> bool {
    name.strip_prefix("d_").is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

/// Draws the full dataset, then splits it into (train, test).
pub fn generate(spec: &SynthSpec) -> Result<(Dataset, Dataset)> {
    let full = generate_unsplit(spec)?;
    let (train_ids, test_ids) = split_ids(spec);
    Ok((full.subset(&train_ids, Split::Train), full.subset(&test_ids, Split::Test)))
}

pub(crate) fn generate_unsplit(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let (n, d, c) = (spec.num_examples, spec.feature_dim, spec.num_classes);
    let order = spec.rule_order()?;

    let mut dir_rng = rng::substream(spec.seed, &[rng::TAG_DATA, 0]);
    let directions: Vec<Vec<f64>> = (0..c)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut dir_rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();

    let mut label_rng = rng::substream(spec.seed, &[rng::TAG_DATA, 1]);
    let mut flip_rng = rng::substream(spec.seed, &[rng::TAG_DATA, 2]);
    let mut noise_rng = rng::substream(spec.seed, &[rng::TAG_DATA, 3]);
    let base: Vec<usize> = (0..c).filter(|&k| !spec.is_rule_target(k)).collect();

    let mut labels = vec![0u8; n * c];
    let mut features = vec![0.0; n * d];
    let mut bits = vec![false; c];
    for i in 0..n {
        bits.iter_mut().for_each(|b| *b = false);
        for &k in &base {
            bits[k] = label_rng.random::<f64>() < spec.priors[k];
        }
        for &r in &order {
            let rule = &spec.rules[r];
            let inputs: Vec<bool> = rule.inputs.iter().map(|&k| bits[k]).collect();
            let flip = flip_rng.random::<f64>() < rule.flip_rate;
            bits[rule.target] = rule.op.apply(&inputs) ^ flip;
        }
        let x = &mut features[i * d..(i + 1) * d];
        for v in x.iter_mut() {
            *v = StandardNormal.sample(&mut noise_rng);
        }
        for &k in &base {
            if bits[k] {
                for (v, u) in x.iter_mut().zip(&directions[k]) {
                    *v += spec.signal[k] * u;
                }
            }
        }
        for k in 0..c {
            labels[i * c + k] = bits[k] as u8;
        }
    }
    Dataset::new(Tensor2::new(n, d, features)?, LabelMatrix::new(n, c, labels)?, spec.class_names(), Split::Train)
}

fn split_ids(spec: &SynthSpec) -> (Vec<usize>, Vec<usize>) {
    let n = spec.num_examples;
    let target_test = ((n as f64 * spec.test_fraction).round() as usize).clamp(1, n - 1);
    let mut rng = rng::substream(spec.seed, &[rng::TAG_SHUFFLE]);
    let mut test = Vec::with_capacity(target_test);
    match spec.group_size {
        None => {
            let mut ids: Vec<usize> = (0..n).collect();
            ids.shuffle(&mut rng);
            test.extend_from_slice(&ids[..target_test]);
        }
        Some(g) => {
            let mut groups: Vec<usize> = (0..n.div_ceil(g)).collect();
            groups.shuffle(&mut rng);
            for grp in groups {
                if test.len() >= target_test {
                    break;
                }
                test.extend(grp * g..((grp + 1) * g).min(n));
            }
        }
    }
    test.sort_unstable();
    let mut is_test = vec![false; n];
    test.iter().for_each(|&i| is_test[i] = true);
    let train = (0..n).filter(|&i| !is_test[i]).collect();
    (train, test)
}
