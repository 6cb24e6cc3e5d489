//! Interval activation bounds and the exact MILP encoding of the classifier.
//!
//! Each unstable hidden ReLU y = max(yhat, 0) becomes four linear rows and
//! one binary over valid pre-activation bounds [lo, hi]:
//!
//! ```text
//!   y <= yhat - lo (1 - b)      y >= yhat
//!   y <= hi b                   y >= 0        b in {0,1}
//! ```
//!
//! Neurons whose interval bound pins the ReLU's phase need no binary:
//! an always-active neuron aliases its pre-activation, an always-inactive
//! one drops out entirely. The input standardization is folded into the
//! first layer so the MILP works on raw control variables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{MilpModel, Sense};
use crate::mlp::MlpParams;

/// Valid pre-activation intervals per hidden neuron, plus output logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationBounds {
    /// hidden[k][n] = (lo, hi) of neuron n in hidden layer k.
    pub hidden: Vec<Vec<(f64, f64)>>,
    /// Interval bounds of the two output logits.
    pub output: Vec<(f64, f64)>,
}

impl ActivationBounds {
    pub fn matches(&self, params: &MlpParams) -> bool {
        self.hidden.len() == params.hidden_layers()
            && self
                .hidden
                .iter()
                .zip(&params.layer_dims[1..])
                .all(|(layer, &dim)| layer.len() == dim)
            && self.output.len() == 2
    }

    /// Count of neurons whose phase the interval pins.
    pub fn stable_count(&self) -> usize {
        self.hidden
            .iter()
            .flatten()
            .filter(|(lo, hi)| *lo >= 0.0 || *hi <= 0.0)
            .count()
    }
}

/// Layer-by-layer interval propagation over an input box in standardized
/// units with post-ReLU clamping between layers.
pub fn interval_bounds(params: &MlpParams, box_lo: &[f64], box_hi: &[f64]) -> Result<ActivationBounds> {
    params.validate()?;
    let n0 = params.layer_dims[0];
    if box_lo.len() != n0 || box_hi.len() != n0 {
        return Err(Error::Dimension("input box width mismatch".into()));
    }
    if box_lo
        .iter()
        .chain(box_hi.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::InvalidModel("input box must be finite".into()));
    }
    let mut lo = box_lo.to_vec();
    let mut hi = box_hi.to_vec();
    let mut hidden = Vec::with_capacity(params.hidden_layers());
    let mut output = Vec::new();
    for (k, layer) in params.layers.iter().enumerate() {
        let mut pre = Vec::with_capacity(layer.n_out);
        for o in 0..layer.n_out {
            let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
            let mut l = layer.b[o];
            let mut h = layer.b[o];
            for (w, (xl, xh)) in row.iter().zip(lo.iter().zip(&hi)) {
                if *w >= 0.0 {
                    l += w * xl;
                    h += w * xh;
                } else {
                    l += w * xh;
                    h += w * xl;
                }
            }
            pre.push((l, h));
        }
        if k + 1 < params.layers.len() {
            lo = pre.iter().map(|(l, _)| l.max(0.0)).collect();
            hi = pre.iter().map(|(_, h)| h.max(0.0)).collect();
            hidden.push(pre);
        } else {
            output = pre;
        }
    }
    Ok(ActivationBounds { hidden, output })
}

/// Bounds over the model's own standardized control box `[0,1]^N0`.
pub fn control_box_bounds(params: &MlpParams) -> Result<ActivationBounds> {
    let n0 = params.layer_dims[0];
    interval_bounds(params, &vec![0.0; n0], &vec![1.0; n0])
}

/// Where one hidden neuron landed in the encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuronVar {
    /// Full big-M encoding with (pre, post, binary) variables.
    Unstable {
        pre: usize,
        post: usize,
        bin: usize,
    },
    /// Always active: the post-activation aliases `pre`.
    ActiveFixed { pre: usize },
    /// Always inactive: contributes exactly zero downstream.
    InactiveFixed,
}

/// Variable layout of an encoded network.
#[derive(Debug, Clone)]
pub struct NnVarMap {
    /// Raw control variables, one per network input.
    pub controls: Vec<usize>,
    /// Hidden neuron variables, [layer][neuron].
    pub neurons: Vec<Vec<NeuronVar>>,
    /// Output logit variables (z1, z2).
    pub z: [usize; 2],
}

#[derive(Debug, Clone, Copy)]
pub struct EncodeOptions {
    /// Drop binaries for neurons whose interval pins the ReLU phase.
    pub eliminate_stable: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            eliminate_stable: true,
        }
    }
}

/// Emit the exact mixed-integer encoding of the trained network plus the
/// margin classification constraint z1 >= z2 + epsilon.
pub fn encode_milp(
    params: &MlpParams,
    bounds: &ActivationBounds,
    epsilon: f64,
    opts: EncodeOptions,
) -> Result<(MilpModel, NnVarMap)> {
    params.validate()?;
    if !bounds.matches(params) {
        return Err(Error::InvalidModel(
            "activation bounds do not match the network shape".into(),
        ));
    }
    if epsilon < 0.0 {
        return Err(Error::InvalidModel("epsilon must be nonnegative".into()));
    }
    for layer in &bounds.hidden {
        for &(lo, hi) in layer {
            if lo > hi {
                return Err(Error::InvalidModel(format!(
                    "inconsistent bound interval [{lo}, {hi}]"
                )));
            }
        }
    }

    let mut model = MilpModel::new();
    let n0 = params.layer_dims[0];
    let controls: Vec<usize> = (0..n0)
        .map(|i| model.add_var(format!("u{i}"), params.scaler.lo[i], params.scaler.hi[i]))
        .collect();

    // a linear expression over already-encoded upstream variables
    enum Upstream {
        Controls,
        Hidden(usize),
    }
    let mut neurons: Vec<Vec<NeuronVar>> = Vec::with_capacity(params.hidden_layers());

    let mut post_terms = |model: &mut MilpModel,
                          neurons: &Vec<Vec<NeuronVar>>,
                          upstream: &Upstream,
                          layer_k: usize,
                          o: usize|
     -> (Vec<(usize, f64)>, f64) {
        let layer = &params.layers[layer_k];
        let row = &layer.w[o * layer.n_in..(o + 1) * layer.n_in];
        let mask = &layer.mask[o * layer.n_in..(o + 1) * layer.n_in];
        let mut terms = Vec::new();
        let mut constant = layer.b[o];
        match upstream {
            Upstream::Controls => {
                // fold the [0,1] standardization into the first layer
                for i in 0..layer.n_in {
                    if mask[i] == 0 || row[i] == 0.0 {
                        continue;
                    }
                    let span = params.scaler.hi[i] - params.scaler.lo[i];
                    if span.abs() < 1e-12 {
                        continue; // constant input contributes nothing
                    }
                    let w_raw = row[i] / span;
                    terms.push((controls[i], w_raw));
                    constant -= w_raw * params.scaler.lo[i];
                }
            }
            Upstream::Hidden(k_prev) => {
                for i in 0..layer.n_in {
                    if mask[i] == 0 || row[i] == 0.0 {
                        continue;
                    }
                    match neurons[*k_prev][i] {
                        NeuronVar::Unstable { post, .. } => terms.push((post, row[i])),
                        NeuronVar::ActiveFixed { pre } => terms.push((pre, row[i])),
                        NeuronVar::InactiveFixed => {}
                    }
                }
            }
        }
        let _ = model;
        (terms, constant)
    };

    for k in 0..params.hidden_layers() {
        let upstream = if k == 0 {
            Upstream::Controls
        } else {
            Upstream::Hidden(k - 1)
        };
        let n_out = params.layer_dims[k + 1];
        let mut layer_vars = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let (lo, hi) = bounds.hidden[k][o];
            let inactive = opts.eliminate_stable && hi <= 0.0;
            let active = opts.eliminate_stable && lo >= 0.0 && !inactive;
            if inactive {
                layer_vars.push(NeuronVar::InactiveFixed);
                continue;
            }
            let (terms, constant) = post_terms(&mut model, &neurons, &upstream, k, o);
            let pre = model.add_var(format!("yhat_{k}_{o}"), lo, hi);
            let mut eq = terms;
            eq.push((pre, -1.0));
            model.add_constraint(format!("aff_{k}_{o}"), eq, Sense::Eq, -constant);
            if active {
                layer_vars.push(NeuronVar::ActiveFixed { pre });
                continue;
            }
            let post = model.add_var(format!("y_{k}_{o}"), 0.0, hi.max(0.0));
            let bin = model.add_binary(format!("b_{k}_{o}"));
            // y <= yhat - lo (1 - b)
            model.add_constraint(
                format!("relu_up_{k}_{o}"),
                vec![(post, 1.0), (pre, -1.0), (bin, -lo)],
                Sense::Le,
                -lo,
            );
            // y >= yhat
            model.add_constraint(
                format!("relu_lo_{k}_{o}"),
                vec![(pre, 1.0), (post, -1.0)],
                Sense::Le,
                0.0,
            );
            // y <= hi b
            model.add_constraint(
                format!("relu_cap_{k}_{o}"),
                vec![(post, 1.0), (bin, -hi.max(0.0))],
                Sense::Le,
                0.0,
            );
            layer_vars.push(NeuronVar::Unstable { pre, post, bin });
        }
        neurons.push(layer_vars);
    }

    // output logits
    let last = params.layers.len() - 1;
    let upstream = if params.hidden_layers() == 0 {
        Upstream::Controls
    } else {
        Upstream::Hidden(params.hidden_layers() - 1)
    };
    let mut z = [0usize; 2];
    for o in 0..2 {
        let (lo, hi) = bounds.output[o];
        let (terms, constant) = post_terms(&mut model, &neurons, &upstream, last, o);
        let zv = model.add_var(format!("z{}", o + 1), lo, hi);
        let mut eq = terms;
        eq.push((zv, -1.0));
        model.add_constraint(format!("out_{o}"), eq, Sense::Eq, -constant);
        z[o] = zv;
    }
    // z1 >= z2 + epsilon
    model.add_constraint(
        "classify",
        vec![(z[1], 1.0), (z[0], -1.0)],
        Sense::Le,
        -epsilon,
    );

    model.validate()?;
    Ok((
        model,
        NnVarMap {
            controls,
            neurons,
            z,
        },
    ))
}
