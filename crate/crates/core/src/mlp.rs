//! Fully-connected ReLU feasibility classifier.
//!
//! Two output logits; the first class (z1 >= z2, ties feasible) predicts
//! membership in the secure operating region. Training is softmax
//! cross-entropy under plain SGD, with magnitude pruning milestones that
//! drive each weight matrix to a target sparsity and keep pruned entries
//! at exactly zero for the rest of the run. Inputs are standardized to
//! [0,1] per control range; the scaler ships inside the model file so the
//! MILP encoding applies the identical affine map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::encode::ActivationBounds;
use crate::error::{Error, Result};

/// Affine map taking raw controls to the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaler {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputScaler {
    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (lo, hi))| {
                let span = hi - lo;
                if span.abs() < 1e-12 {
                    0.0
                } else {
                    (x - lo) / span
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    /// Row-major (n_out x n_in).
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    /// 1 = trainable, 0 = pruned. Same shape as `w`.
    pub mask: Vec<u8>,
    pub n_in: usize,
    pub n_out: usize,
}

impl Layer {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            out.push(self.b[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }

    fn zero_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 0).count()
    }
}

/// Training provenance and held-out metrics stored with the model.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainMeta {
    pub case_fingerprint: String,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub target_sparsity: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// 101 evenly spaced quantiles of z1 - z2 over feasible training rows,
    /// the scale reference for margin-based epsilon choices.
    pub margin_quantiles: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_dims: Vec<usize>,
    pub layers: Vec<Layer>,
    pub scaler: InputScaler,
    pub meta: TrainMeta,
    /// Interval activation bounds, filled in by the encoding stage.
    #[serde(default)]
    pub bounds: Option<ActivationBounds>,
    /// Margin constant chosen for the classification constraint.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Pre-activation per hidden layer.
    pub pre: Vec<Vec<f64>>,
    /// Post-ReLU activation per hidden layer.
    pub post: Vec<Vec<f64>>,
    pub logits: [f64; 2],
}

impl ForwardTrace {
    pub fn margin(&self) -> f64 {
        self.logits[0] - self.logits[1]
    }

    pub fn predicts_feasible(&self) -> bool {
        self.logits[0] >= self.logits[1]
    }
}

impl MlpParams {
    pub fn hidden_layers(&self) -> usize {
        self.layer_dims.len() - 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 || *self.layer_dims.last().unwrap() != 2 {
            return Err(Error::InvalidModel(
                "network must end in a 2-logit output layer".into(),
            ));
        }
        if self.layers.len() != self.layer_dims.len() - 1 {
            return Err(Error::InvalidModel("layer count mismatch".into()));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.n_in != self.layer_dims[k]
                || layer.n_out != self.layer_dims[k + 1]
                || layer.w.len() != layer.n_in * layer.n_out
                || layer.b.len() != layer.n_out
                || layer.mask.len() != layer.w.len()
            {
                return Err(Error::InvalidModel(format!("layer {k} dimensions broken")));
            }
            for (w, m) in layer.w.iter().zip(&layer.mask) {
                if *m == 0 && *w != 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "layer {k}: masked weight is {w}, not zero"
                    )));
                }
            }
        }
        if self.scaler.lo.len() != self.layer_dims[0] {
            return Err(Error::InvalidModel("scaler does not match input width".into()));
        }
        Ok(())
    }

    /// Exact affine-ReLU chain on a raw control vector, returning all
    /// intermediate activations.
    pub fn forward(&self, raw: &[f64]) -> Result<ForwardTrace> {
        if raw.len() != self.layer_dims[0] {
            return Err(Error::Dimension(format!(
                "input width {} vs network {}",
                raw.len(),
                self.layer_dims[0]
            )));
        }
        let mut x = self.scaler.apply(raw);
        let mut pre = Vec::with_capacity(self.hidden_layers());
        let mut post = Vec::with_capacity(self.hidden_layers());
        let mut buf = Vec::new();
        for layer in &self.layers[..self.layers.len() - 1] {
            layer.apply(&x, &mut buf);
            pre.push(buf.clone());
            for v in &mut buf {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            post.push(buf.clone());
            std::mem::swap(&mut x, &mut buf);
        }
        let out = self.layers.last().unwrap();
        out.apply(&x, &mut buf);
        Ok(ForwardTrace {
            pre,
            post,
            logits: [buf[0], buf[1]],
        })
    }

    /// Per-layer zero fraction of the weight masks.
    pub fn sparsity(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|l| l.zero_count() as f64 / l.w.len() as f64)
            .collect()
    }

    /// Resolve an epsilon spec: either a raw value or `qX` margin quantile.
    pub fn resolve_epsilon(&self, spec: &str) -> Result<f64> {
        if let Some(q) = spec.strip_prefix('q') {
            let q: f64 = q
                .parse()
                .map_err(|_| Error::Parse(format!("bad quantile '{spec}'")))?;
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Parse(format!("quantile {q} outside [0,1]")));
            }
            let table = &self.meta.margin_quantiles;
            if table.is_empty() {
                return Err(Error::InvalidModel(
                    "model has no margin quantiles; retrain first".into(),
                ));
            }
            let pos = q * (table.len() - 1) as f64;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let v = if i + 1 < table.len() {
                table[i] * (1.0 - frac) + table[i + 1] * frac
            } else {
                table[i]
            };
            Ok(v.max(0.0))
        } else {
            let v: f64 = spec
                .parse()
                .map_err(|_| Error::Parse(format!("bad epsilon '{spec}'")))?;
            if v < 0.0 {
                return Err(Error::Parse("epsilon must be nonnegative".into()));
            }
            Ok(v)
        }
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<MlpParams> {
        let text = std::fs::read_to_string(path)?;
        let params: MlpParams = serde_json::from_str(&text)?;
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub target_sparsity: f64,
    /// (epoch, cumulative zero fraction) milestones, non-decreasing.
    pub prune_schedule: Vec<(usize, f64)>,
    pub seed: u64,
}

impl TrainConfig {
    /// Default 3x20 architecture with pruning at epoch quartiles.
    pub fn desk_scale(epochs: usize, target_sparsity: f64, seed: u64) -> Self {
        let q = |f: f64| ((epochs as f64) * f) as usize;
        TrainConfig {
            hidden: vec![20, 20, 20],
            epochs,
            batch_size: 32,
            lr_start: 0.08,
            lr_end: 0.005,
            target_sparsity,
            prune_schedule: vec![
                (q(0.25), 0.4 * target_sparsity),
                (q(0.5), 0.7 * target_sparsity),
                (q(0.75), target_sparsity),
            ],
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.target_sparsity) {
            return Err(Error::InvalidModel("sparsity must be in [0,1)".into()));
        }
        let mut last = (0usize, 0.0f64);
        for &(e, f) in &self.prune_schedule {
            if e < last.0 || f < last.1 - 1e-12 {
                return Err(Error::InvalidModel(
                    "prune schedule must be non-decreasing".into(),
                ));
            }
            last = (e, f);
        }
        if let Some(&(_, f)) = self.prune_schedule.last() {
            if (f - self.target_sparsity).abs() > 1e-9 {
                return Err(Error::InvalidModel(
                    "prune schedule must end at the target sparsity".into(),
                ));
            }
        } else if self.target_sparsity > 0.0 {
            return Err(Error::InvalidModel(
                "target sparsity needs a prune schedule".into(),
            ));
        }
        Ok(())
    }
}

/// Per-split classification metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// [feasible, infeasible]
    pub precision: [f64; 2],
    pub recall: [f64; 2],
    /// confusion[actual][predicted], classes ordered [feasible, infeasible]
    pub confusion: [[usize; 2]; 2],
}

fn init_params(dims: &[usize], scaler: InputScaler, rng: &mut ChaCha8Rng) -> MlpParams {
    let mut layers = Vec::new();
    for k in 0..dims.len() - 1 {
        let (n_in, n_out) = (dims[k], dims[k + 1]);
        let std = (2.0 / n_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let w: Vec<f64> = (0..n_in * n_out).map(|_| normal.sample(rng)).collect();
        layers.push(Layer {
            mask: vec![1; w.len()],
            w,
            b: vec![0.0; n_out],
            n_in,
            n_out,
        });
    }
    MlpParams {
        layer_dims: dims.to_vec(),
        layers,
        scaler,
        meta: TrainMeta::default(),
        bounds: None,
        epsilon: None,
    }
}

/// Softmax cross-entropy and the logit gradient for one sample.
fn loss_and_dlogits(logits: &[f64; 2], label_infeasible: bool) -> (f64, [f64; 2]) {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    let p = [e0 / z, e1 / z];
    let y = if label_infeasible { 1 } else { 0 };
    let loss = -p[y].ln();
    let mut d = [p[0], p[1]];
    d[y] -= 1.0;
    (loss, d)
}

struct BatchGrads {
    dw: Vec<Vec<f64>>,
    db: Vec<Vec<f64>>,
}

fn backprop(
    params: &MlpParams,
    x_std: &[f64],
    label_infeasible: bool,
    grads: &mut BatchGrads,
) -> f64 {
    // forward pass on pre-standardized input, keeping activations
    let n_layers = params.layers.len();
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
    acts.push(x_std.to_vec());
    let mut buf = Vec::new();
    for (k, layer) in params.layers.iter().enumerate() {
        layer.apply(acts.last().unwrap(), &mut buf);
        if k + 1 < n_layers {
            for v in &mut buf {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        acts.push(buf.clone());
    }
    let logits = [acts[n_layers][0], acts[n_layers][1]];
    let (loss, dlog) = loss_and_dlogits(&logits, label_infeasible);

    let mut delta: Vec<f64> = dlog.to_vec();
    for k in (0..n_layers).rev() {
        let layer = &params.layers[k];
        let input = &acts[k];
        for o in 0..layer.n_out {
            let d = delta[o];
            if d != 0.0 {
                grads.db[k][o] += d;
                let row = &mut grads.dw[k][o * layer.n_in..(o + 1) * layer.n_in];
                for (g, v) in row.iter_mut().zip(input) {
                    *g += d * v;
                }
            }
        }
        if k > 0 {
            let mut prev = vec![0.0; layer.n_in];
            for o in 0..layer.n_out {
                let d = delta[o];
                if d != 0.0 {
                    let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
            }
            // ReLU gate: the stored activation is already rectified
            for (p, a) in prev.iter_mut().zip(&acts[k]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
    loss
}

/// Magnitude pruning: extend each layer mask so `fraction` of its weights
/// are zero (rounded down), smallest magnitudes first, previously pruned
/// entries stay pruned.
fn prune_to(params: &mut MlpParams, fraction: f64) {
    for layer in &mut params.layers {
        let want_zero = (fraction * layer.w.len() as f64).floor() as usize;
        let have_zero = layer.zero_count();
        if want_zero <= have_zero {
            continue;
        }
        let mut live: Vec<usize> = (0..layer.w.len()).filter(|&i| layer.mask[i] == 1).collect();
        live.sort_by(|&a, &b| {
            layer.w[a]
                .abs()
                .partial_cmp(&layer.w[b].abs())
                .unwrap()
                .then(a.cmp(&b))
        });
        for &i in live.iter().take(want_zero - have_zero) {
            layer.mask[i] = 0;
            layer.w[i] = 0.0;
        }
    }
}

/// Train a classifier on the dataset's train split.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<MlpParams> {
    config.validate()?;
    let train_rows: Vec<usize> = dataset.split_indices(Split::Train);
    if train_rows.is_empty() {
        return Err(Error::Dataset("empty train split".into()));
    }
    let has = |label: bool| {
        train_rows
            .iter()
            .any(|&i| dataset.samples[i].label == label)
    };
    if !has(true) || !has(false) {
        return Err(Error::Dataset(
            "train split needs both classes; resample more".into(),
        ));
    }

    let scaler = InputScaler {
        lo: dataset.control_lo.clone(),
        hi: dataset.control_hi.clone(),
    };
    let n_in = dataset.control_labels.len();
    let mut dims = vec![n_in];
    dims.extend_from_slice(&config.hidden);
    dims.push(2);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = init_params(&dims, scaler, &mut rng);

    let x_std: Vec<Vec<f64>> = train_rows
        .iter()
        .map(|&i| params.scaler.apply(&dataset.samples[i].controls))
        .collect();
    let labels: Vec<bool> = train_rows
        .iter()
        .map(|&i| dataset.samples[i].label)
        .collect();

    let mut grads = BatchGrads {
        dw: params.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
        db: params.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
    };
    let mut order: Vec<usize> = (0..x_std.len()).collect();
    let mut schedule = config.prune_schedule.clone();
    schedule.sort_by_key(|&(e, _)| e);
    let mut next_prune = 0usize;

    for epoch in 0..config.epochs {
        while next_prune < schedule.len() && schedule[next_prune].0 <= epoch {
            prune_to(&mut params, schedule[next_prune].1);
            next_prune += 1;
        }
        let t = if config.epochs > 1 {
            epoch as f64 / (config.epochs - 1) as f64
        } else {
            0.0
        };
        let lr = config.lr_start * (config.lr_end / config.lr_start).powf(t);

        // deterministic Fisher-Yates reshuffle per epoch
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            for g in grads.dw.iter_mut().chain(grads.db.iter_mut()) {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            for &row in chunk {
                epoch_loss += backprop(&params, &x_std[row], !labels[row], &mut grads);
            }
            let scale = lr / chunk.len() as f64;
            for (k, layer) in params.layers.iter_mut().enumerate() {
                for (i, w) in layer.w.iter_mut().enumerate() {
                    if layer.mask[i] == 1 {
                        *w -= scale * grads.dw[k][i];
                    }
                }
                for (o, b) in layer.b.iter_mut().enumerate() {
                    *b -= scale * grads.db[k][o];
                }
            }
        }
        if !epoch_loss.is_finite() {
            return Err(Error::TrainDiverged(format!(
                "non-finite loss at epoch {epoch}"
            )));
        }
    }
    // run any milestones scheduled at or past the final epoch
    while next_prune < schedule.len() {
        prune_to(&mut params, schedule[next_prune].1);
        next_prune += 1;
    }

    // metadata: accuracies and the feasible-margin quantile table
    let train_metrics = evaluate(&params, dataset, Split::Train)?;
    let test_metrics = evaluate(&params, dataset, Split::Test)?;
    let mut margins: Vec<f64> = Vec::new();
    for &i in &train_rows {
        if dataset.samples[i].label {
            margins.push(params.forward(&dataset.samples[i].controls)?.margin());
        }
    }
    margins.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantiles: Vec<f64> = (0..=100)
        .map(|q| {
            let pos = q as f64 / 100.0 * (margins.len() - 1) as f64;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if i + 1 < margins.len() {
                margins[i] * (1.0 - frac) + margins[i + 1] * frac
            } else {
                margins[i]
            }
        })
        .collect();
    params.meta = TrainMeta {
        case_fingerprint: dataset.case_fingerprint.clone(),
        seed: config.seed,
        epochs: config.epochs,
        batch_size: config.batch_size,
        lr_start: config.lr_start,
        lr_end: config.lr_end,
        target_sparsity: config.target_sparsity,
        train_accuracy: train_metrics.accuracy,
        test_accuracy: test_metrics.accuracy,
        margin_quantiles: quantiles,
    };
    params.validate()?;
    Ok(params)
}

/// Metrics over one split of the dataset.
pub fn evaluate(params: &MlpParams, dataset: &Dataset, split: Split) -> Result<Metrics> {
    let rows = dataset.split_indices(split);
    if rows.is_empty() {
        return Err(Error::Dataset(format!("empty split {split:?}")));
    }
    let mut confusion = [[0usize; 2]; 2];
    for &i in &rows {
        let s = &dataset.samples[i];
        let pred_feasible = params.forward(&s.controls)?.predicts_feasible();
        let actual = if s.label { 0 } else { 1 };
        let predicted = if pred_feasible { 0 } else { 1 };
        confusion[actual][predicted] += 1;
    }
    let correct = confusion[0][0] + confusion[1][1];
    let accuracy = correct as f64 / rows.len() as f64;
    let mut precision = [0.0; 2];
    let mut recall = [0.0; 2];
    for c in 0..2 {
        let pred_c = confusion[0][c] + confusion[1][c];
        let actual_c = confusion[c][0] + confusion[c][1];
        precision[c] = if pred_c > 0 {
            confusion[c][c] as f64 / pred_c as f64
        } else {
            0.0
        };
        recall[c] = if actual_c > 0 {
            confusion[c][c] as f64 / actual_c as f64
        } else {
            0.0
        };
    }
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, LabeledSample, Provenance};

    fn toy_params(dims: &[usize]) -> MlpParams {
        let n = dims[0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        init_params(
            dims,
            InputScaler {
                lo: vec![0.0; n],
                hi: vec![1.0; n],
            },
            &mut rng,
        )
    }

    fn blobs_dataset(n_per_class: usize, seed: u64) -> Dataset {
        // two gaussian blobs separated well beyond 6 sigma
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.05).unwrap();
        let mut samples = Vec::new();
        for i in 0..2 * n_per_class {
            let feasible = i % 2 == 0;
            let center = if feasible { 0.25 } else { 0.75 };
            let controls = vec![
                center + normal.sample(&mut rng),
                center + normal.sample(&mut rng),
            ];
            samples.push(LabeledSample {
                id: i,
                controls,
                label: feasible,
                provenance: Provenance::Grid,
                split: if i % 10 < 8 { Split::Train } else { Split::Test },
            });
        }
        Dataset {
            case_fingerprint: "test".into(),
            control_labels: vec!["a".into(), "b".into()],
            control_lo: vec![0.0, 0.0],
            control_hi: vec![1.0, 1.0],
            seed,
            samples,
        }
    }

    #[test]
    fn zero_network_ties_classify_feasible() {
        let mut p = toy_params(&[2, 3, 2]);
        for l in &mut p.layers {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        let t = p.forward(&[0.3, 0.9]).unwrap();
        assert_eq!(t.logits, [0.0, 0.0]);
        assert!(t.predicts_feasible(), "tie must classify feasible");
    }

    #[test]
    fn relu_kills_negative_preactivation() {
        // 1-1-2 net: w1=[1], b1=0, w2=[[1],[-1]], b2=0, input -3
        let mut p = toy_params(&[1, 1, 2]);
        p.scaler = InputScaler {
            lo: vec![0.0],
            hi: vec![1.0],
        };
        p.layers[0].w = vec![1.0];
        p.layers[0].b = vec![0.0];
        p.layers[0].mask = vec![1];
        p.layers[1].w = vec![1.0, -1.0];
        p.layers[1].b = vec![0.0, 0.0];
        p.layers[1].mask = vec![1, 1];
        let t = p.forward(&[-3.0]).unwrap();
        assert_eq!(t.pre[0], vec![-3.0]);
        assert_eq!(t.post[0], vec![0.0]);
        assert_eq!(t.logits, [0.0, 0.0]);
    }

    #[test]
    fn forward_matches_straight_line_reimplementation() {
        // independent oracle: inline chain with no shared code path
        let p = toy_params(&[3, 4, 4, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let got = p.forward(&raw).unwrap();
            // straight-line: standardize, then per layer w x + b and relu
            let mut x: Vec<f64> = raw
                .iter()
                .zip(p.scaler.lo.iter().zip(&p.scaler.hi))
                .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
                .collect();
            for (k, layer) in p.layers.iter().enumerate() {
                let mut nxt = vec![0.0; layer.n_out];
                for o in 0..layer.n_out {
                    let mut acc = layer.b[o];
                    for i in 0..layer.n_in {
                        acc += layer.w[o * layer.n_in + i] * x[i];
                    }
                    nxt[o] = acc;
                }
                if k + 1 < p.layers.len() {
                    for v in &mut nxt {
                        *v = v.max(0.0);
                    }
                }
                x = nxt;
            }
            assert!((got.logits[0] - x[0]).abs() < 1e-12);
            assert!((got.logits[1] - x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_check_against_finite_differences() {
        let p = toy_params(&[2, 3, 2]);
        let x = [0.4, 0.7];
        let x_std = p.scaler.apply(&x);
        let mut grads = BatchGrads {
            dw: p.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            db: p.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        };
        backprop(&p, &x_std, true, &mut grads);
        let loss_of = |p: &MlpParams| {
            let t = p.forward(&x).unwrap();
            loss_and_dlogits(&t.logits, true).0
        };
        let h = 1e-6;
        for k in 0..p.layers.len() {
            for i in 0..p.layers[k].w.len() {
                let mut up = p.clone();
                up.layers[k].w[i] += h;
                let mut dn = p.clone();
                dn.layers[k].w[i] -= h;
                let fd = (loss_of(&up) - loss_of(&dn)) / (2.0 * h);
                let bp = grads.dw[k][i];
                assert!(
                    (fd - bp).abs() <= 1e-5 * (1.0 + fd.abs()),
                    "layer {k} w{i}: fd {fd} vs bp {bp}"
                );
            }
        }
    }

    #[test]
    fn blobs_reach_high_accuracy() {
        let data = blobs_dataset(200, 3);
        let mut cfg = TrainConfig::desk_scale(60, 0.0, 7);
        cfg.hidden = vec![8, 8];
        cfg.prune_schedule.clear();
        let p = train(&data, &cfg).unwrap();
        let m = evaluate(&p, &data, Split::Test).unwrap();
        assert!(m.accuracy >= 0.99, "accuracy {}", m.accuracy);
    }

    #[test]
    fn sparsity_is_exact_and_sticky() {
        let data = blobs_dataset(100, 4);
        let mut cfg = TrainConfig::desk_scale(40, 0.5, 11);
        cfg.hidden = vec![4, 4];
        let p = train(&data, &cfg).unwrap();
        for (k, layer) in p.layers.iter().enumerate() {
            let want = (0.5 * layer.w.len() as f64).floor() as usize;
            assert_eq!(layer.zero_count(), want, "layer {k}");
            for (w, m) in layer.w.iter().zip(&layer.mask) {
                if *m == 0 {
                    assert_eq!(*w, 0.0);
                }
            }
        }
        // 4x4 layer at 0.5: exactly 8 zero entries
        assert_eq!(p.layers[1].zero_count(), 8);
    }

    #[test]
    fn training_is_deterministic() {
        let data = blobs_dataset(80, 9);
        let cfg = TrainConfig {
            hidden: vec![6],
            epochs: 25,
            batch_size: 16,
            lr_start: 0.05,
            lr_end: 0.01,
            target_sparsity: 0.3,
            prune_schedule: vec![(10, 0.3)],
            seed: 42,
        };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn classification_invariant_to_common_bias_shift() {
        let p = toy_params(&[2, 5, 2]);
        let mut shifted = p.clone();
        let last = shifted.layers.len() - 1;
        shifted.layers[last].b[0] += 3.7;
        shifted.layers[last].b[1] += 3.7;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            assert_eq!(
                p.forward(&x).unwrap().predicts_feasible(),
                shifted.forward(&x).unwrap().predicts_feasible()
            );
        }
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let data = blobs_dataset(50, 21);
        let mut cfg = TrainConfig::desk_scale(80, 0.0, 3);
        cfg.hidden = vec![8];
        cfg.prune_schedule.clear();
        let p = train(&data, &cfg).unwrap();
        let m = evaluate(&p, &data, Split::Test).unwrap();
        assert!((m.accuracy - 1.0).abs() < 1e-9, "separable blobs should be perfect");

        // constant "feasible" predictor on a balanced set scores one half
        let mut constant = p.clone();
        for l in &mut constant.layers {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        let m = evaluate(&constant, &data, Split::Test).unwrap();
        assert!((m.accuracy - 0.5).abs() < 1e-9);
        assert_eq!(m.recall[0], 1.0);
        assert_eq!(m.recall[1], 0.0);
    }

    #[test]
    fn divergence_guard_reports() {
        let data = blobs_dataset(40, 2);
        let cfg = TrainConfig {
            hidden: vec![6],
            epochs: 40,
            batch_size: 8,
            lr_start: 1e9, // absurd rate forces blow-up
            lr_end: 1e9,
            target_sparsity: 0.0,
            prune_schedule: vec![],
            seed: 1,
        };
        match train(&data, &cfg) {
            Err(Error::TrainDiverged(_)) => {}
            other => panic!("expected divergence error, got {other:?}"),
        }
    }

    #[test]
    fn epsilon_resolution_raw_and_quantile() {
        let mut p = toy_params(&[2, 3, 2]);
        p.meta.margin_quantiles = (0..=100).map(|i| i as f64 / 10.0).collect();
        assert_eq!(p.resolve_epsilon("1.25").unwrap(), 1.25);
        assert!((p.resolve_epsilon("q0.5").unwrap() - 5.0).abs() < 1e-12);
        assert!((p.resolve_epsilon("q0.99").unwrap() - 9.9).abs() < 1e-9);
        assert!(p.resolve_epsilon("q2").is_err());
        assert!(p.resolve_epsilon("-1").is_err());
    }
}
