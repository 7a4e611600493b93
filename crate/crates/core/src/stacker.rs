//! The meta-classifier: L2-regularized logistic regression over feature
//! vectors, standardized with statistics from the training split.
//!
//! Training runs proximal gradient descent: a gradient step on the mean
//! cross-entropy followed by the exact proximal map of the L2 penalty,
//! `w <- (w - lr * g) / (1 + lr * l2)`. The fixed point is the minimizer of
//! the penalized loss and the update stays stable for any penalty strength.

use rand::seq::SliceRandom;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;

use crate::align::ValueGroup;
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, FeatureVector};
use crate::gold::GoldStandard;
use crate::model::{normalize_fill, Key, Value};
use crate::score::{match_detections, DetectionRef, DETECTION_IOU};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    /// `None` trains full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Stop once the norm of the full objective gradient drops below this.
    pub tolerance: f64,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
            batch_size: None,
            seed: 42,
            tolerance: 1e-6,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 strength must be non-negative");
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return bad("tolerance must be non-negative");
        }
        Ok(())
    }
}

/// One distinct key-value pair presented to the meta-classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub group: ValueGroup,
    pub features: FeatureVector,
    pub label: Option<bool>,
    pub meta_confidence: Option<f64>,
}

impl Instance {
    pub fn new(group: ValueGroup, features: FeatureVector) -> Self {
        Instance {
            group,
            features,
            label: None,
            meta_confidence: None,
        }
    }

    pub fn key(&self) -> &Key {
        self.group.key()
    }

    pub fn canonical_value(&self) -> &Value {
        self.group.canonical_value()
    }
}

/// Correctness of each group's canonical value against gold.
///
/// Slot fills match on normalized string. A mention is correct when its span
/// equals a gold mention's span exactly and the key agrees with the gold
/// link (any NIL key agrees with any gold NIL cluster). Detections are
/// matched greedily by confidence to unmatched gold boxes of the same class
/// at IOU above 0.5.
pub fn label_groups(groups: &[ValueGroup], gold: &GoldStandard) -> Result<Vec<bool>> {
    if let Some(g) = groups.iter().find(|g| g.task() != gold.task()) {
        return Err(Error::TaskMismatch {
            expected: gold.task(),
            found: g.task(),
        });
    }
    Ok(match gold {
        GoldStandard::SlotFilling(_) => {
            let set = gold.fill_set();
            groups
                .iter()
                .map(|g| match (g.key(), g.canonical_value()) {
                    (Key::Slot { query, slot }, Value::Fill(fill)) => {
                        set.contains(&(query.clone(), slot.clone(), normalize_fill(fill)))
                    }
                    _ => false,
                })
                .collect()
        }
        GoldStandard::EntityLinking(mentions) => {
            let by_span: std::collections::HashMap<_, _> =
                mentions.iter().map(|m| (&m.span, m.id.as_str())).collect();
            groups
                .iter()
                .map(|g| {
                    let Some(span) = g.canonical_value().span() else {
                        return false;
                    };
                    match by_span.get(span) {
                        Some(gold_id) if g.key().is_nil() => crate::model::is_nil_id(gold_id),
                        Some(gold_id) => matches!(g.key(), Key::Entity { id } if id == gold_id),
                        None => false,
                    }
                })
                .collect()
        }
        GoldStandard::ObjectDetection(boxes) => {
            let dets: Vec<DetectionRef<'_>> = groups
                .iter()
                .map(|g| DetectionRef::from_record(g.canonical_record()).expect("detection group"))
                .collect();
            match_detections(&dets, boxes, DETECTION_IOU)
        }
    })
}

pub fn label_instances(instances: &mut [Instance], gold: &GoldStandard) -> Result<()> {
    let groups: Vec<ValueGroup> = instances.iter().map(|i| i.group.clone()).collect();
    for (inst, label) in instances.iter_mut().zip(label_groups(&groups, gold)?) {
        inst.label = Some(label);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackerModel {
    pub layout: FeatureLayout,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    pub l2: f64,
    pub seed: u64,
    /// Per-feature standardization: `(x - mean) / scale`.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        (self.weights.iter().map(|g| g * g).sum::<f64>() + self.bias * self.bias).sqrt()
    }
}

impl StackerModel {
    /// Zero weights, identity standardization.
    pub fn zeroed(layout: FeatureLayout, config: &TrainConfig) -> Self {
        let dim = layout.dim();
        StackerModel {
            layout,
            weights: vec![0.0; dim],
            bias: 0.0,
            threshold: config.threshold,
            l2: config.l2,
            seed: config.seed,
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn check_dim(&self, features: &FeatureVector) -> Result<()> {
        if features.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: features.len(),
            });
        }
        Ok(())
    }

    fn standardize(&self, features: &FeatureVector) -> Vec<f64> {
        features
            .as_slice()
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    fn logit_standardized(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn logit(&self, features: &FeatureVector) -> Result<f64> {
        self.check_dim(features)?;
        Ok(self.logit_standardized(&self.standardize(features)))
    }

    /// Meta-confidence and accept decision (`probability > threshold`).
    pub fn predict(&self, features: &FeatureVector) -> Result<(f64, bool)> {
        let p = sigmoid(self.logit(features)?);
        Ok((p, p > self.threshold))
    }

    pub fn predict_instances(&self, instances: &mut [Instance]) -> Result<()> {
        for inst in instances {
            inst.meta_confidence = Some(self.predict(&inst.features)?.0);
        }
        Ok(())
    }
}

/// Mean cross-entropy plus `(l2 / 2) * |w|^2`, and its analytic gradient
/// with respect to the weights and the bias.
pub fn loss_and_gradient(
    model: &StackerModel,
    batch: &[(&FeatureVector, bool)],
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let dim = model.dim();
    let mut loss = 0.0;
    let mut gw = vec![0.0; dim];
    let mut gb = 0.0;
    for (features, label) in batch {
        model.check_dim(features)?;
        let x = model.standardize(features);
        let z = model.logit_standardized(&x);
        let y = if *label { 1.0 } else { 0.0 };
        loss += softplus(z) - y * z;
        let residual = sigmoid(z) - y;
        for (g, xi) in gw.iter_mut().zip(&x) {
            *g += residual * xi;
        }
        gb += residual;
    }
    let n = batch.len() as f64;
    loss /= n;
    gb /= n;
    let penalty: f64 = model.weights.iter().map(|w| w * w).sum::<f64>() * model.l2 / 2.0;
    for (g, w) in gw.iter_mut().zip(&model.weights) {
        *g = *g / n + model.l2 * w;
    }
    Ok((
        loss + penalty,
        Gradient {
            weights: gw,
            bias: gb,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    /// Objective before training, then after every epoch.
    pub losses: Vec<f64>,
    pub epochs_run: usize,
    pub final_gradient_norm: f64,
}

/// Per-dimension mean and population standard deviation; constant columns
/// get scale 1.
fn standardization(rows: &[&FeatureVector], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r.as_slice()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(r.as_slice()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

pub fn train(
    instances: &[Instance],
    layout: &FeatureLayout,
    config: &TrainConfig,
) -> Result<(StackerModel, TrainLog)> {
    config.validate()?;
    let mut data: Vec<(&FeatureVector, bool)> = Vec::with_capacity(instances.len());
    for inst in instances {
        let label = inst
            .label
            .ok_or_else(|| Error::InvalidConfig("training instance without a label".into()))?;
        if inst.features.len() != layout.dim() {
            return Err(Error::DimensionMismatch {
                expected: layout.dim(),
                found: inst.features.len(),
            });
        }
        data.push((&inst.features, label));
    }
    let positives = data.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::DegenerateLabels {
            positives,
            total: data.len(),
        });
    }

    let mut model = StackerModel::zeroed(layout.clone(), config);
    let rows: Vec<&FeatureVector> = data.iter().map(|(f, _)| *f).collect();
    let (mean, scale) = standardization(&rows, layout.dim());
    model.mean = mean;
    model.scale = scale;

    let mut rng = SplitMix64::seed_from_u64(config.seed);
    let batch_size = config.batch_size.unwrap_or(data.len()).min(data.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let shrink = 1.0 / (1.0 + config.learning_rate * config.l2);

    let (loss, grad) = loss_and_gradient(&model, &data)?;
    let mut log = TrainLog {
        losses: vec![loss],
        epochs_run: 0,
        final_gradient_norm: grad.norm(),
    };
    if grad.norm() < config.tolerance {
        return Ok((model, log));
    }

    for _ in 0..config.epochs {
        if batch_size < data.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(&FeatureVector, bool)> = chunk.iter().map(|&i| data[i]).collect();
            let data_grad = data_gradient(&model, &batch)?;
            for (w, g) in model.weights.iter_mut().zip(&data_grad.weights) {
                *w = (*w - config.learning_rate * g) * shrink;
            }
            model.bias -= config.learning_rate * data_grad.bias;
        }
        let (loss, grad) = loss_and_gradient(&model, &data)?;
        log.losses.push(loss);
        log.epochs_run += 1;
        log.final_gradient_norm = grad.norm();
        if grad.norm() < config.tolerance {
            break;
        }
    }
    Ok((model, log))
}

/// Gradient of the unpenalized mean cross-entropy.
fn data_gradient(model: &StackerModel, batch: &[(&FeatureVector, bool)]) -> Result<Gradient> {
    let (_, mut g) = loss_and_gradient(model, batch)?;
    for (gw, w) in g.weights.iter_mut().zip(&model.weights) {
        *gw -= model.l2 * w;
    }
    Ok(g)
}
