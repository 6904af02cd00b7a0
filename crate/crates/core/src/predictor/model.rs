use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::encoding::{quantize, serialize_request, Alphabet, QuantizedInput};
use super::layers::{
    conv1d_backward, conv1d_backward_onehot, conv1d_forward, conv1d_forward_onehot, maxpool1d,
    maxpool1d_backward, output_len, relu_backward, relu_inplace, Frames,
};
use super::ModelError;
use crate::log_model::{ApiCallRecord, OutcomeLabel};

/// Default input length for the full-size variants.
pub const DEFAULT_L0: usize = 1014;
pub const TINY_L0: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Large,
    Small,
    Tiny,
    Custom,
}

impl Variant {
    pub fn frame_size(self) -> usize {
        match self {
            Variant::Large => 1024,
            Variant::Small => 256,
            Variant::Tiny | Variant::Custom => 64,
        }
    }

    pub fn fc_size(self) -> usize {
        match self {
            Variant::Large => 2048,
            Variant::Small => 1024,
            Variant::Tiny | Variant::Custom => 128,
        }
    }

    /// Gaussian init std. Tiny uses a wider init: at 0.05 its shorter,
    /// narrower stack starts too close to zero to leave the class prior.
    pub fn init_std(self) -> f64 {
        match self {
            Variant::Large => 0.02,
            Variant::Small => 0.05,
            Variant::Tiny | Variant::Custom => 0.1,
        }
    }

    pub fn l0(self) -> usize {
        match self {
            Variant::Large | Variant::Small => DEFAULT_L0,
            Variant::Tiny | Variant::Custom => TINY_L0,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s.to_ascii_lowercase().as_str() {
            "large" => Ok(Variant::Large),
            "small" => Ok(Variant::Small),
            "tiny" => Ok(Variant::Tiny),
            other => Err(ModelError::Config(format!("unknown variant {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerCfg {
    pub in_features: usize,
    pub out_features: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Max-pool size, also used as the pool stride.
    pub pool: Option<usize>,
}

/// The six-layer stack: kernels 7, 7, 3, 3, 3, 3 with stride 1 and
/// 3-wide pooling after layers 1, 2 and 6. Maps `l0` to `(l0 - 96) / 27`.
pub fn standard_conv_stack(alphabet_len: usize, frame: usize) -> Vec<ConvLayerCfg> {
    let kernels = [7, 7, 3, 3, 3, 3];
    let pooled = [true, true, false, false, false, true];
    kernels
        .iter()
        .zip(pooled)
        .enumerate()
        .map(|(i, (&kernel, pool))| ConvLayerCfg {
            in_features: if i == 0 { alphabet_len } else { frame },
            out_features: frame,
            kernel,
            stride: 1,
            pool: pool.then_some(3),
        })
        .collect()
}

/// Closed-form frame length of the standard stack.
pub fn standard_frame_len(l0: usize) -> usize {
    (l0 - 96) / 27
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCfg {
    pub variant: Variant,
    pub alphabet: Alphabet,
    pub l0: usize,
    pub conv: Vec<ConvLayerCfg>,
    /// Hidden fully-connected sizes; the output layer has one unit per label.
    pub fc_hidden: Vec<usize>,
    pub labels: Vec<OutcomeLabel>,
    pub dropout: f64,
    pub init_std: f64,
}

impl ModelCfg {
    pub fn for_variant(variant: Variant, labels: Vec<OutcomeLabel>) -> Self {
        let alphabet = Alphabet::default();
        let frame = variant.frame_size();
        ModelCfg {
            variant,
            conv: standard_conv_stack(alphabet.len(), frame),
            alphabet,
            l0: variant.l0(),
            fc_hidden: vec![variant.fc_size(); 2],
            labels,
            dropout: 0.5,
            init_std: variant.init_std(),
        }
    }

    /// Canonical label list: `Right` first, then error codes sorted.
    pub fn canonical_labels<'a>(outcomes: impl IntoIterator<Item = &'a OutcomeLabel>) -> Vec<OutcomeLabel> {
        let mut set: std::collections::BTreeSet<OutcomeLabel> = outcomes.into_iter().cloned().collect();
        set.insert(OutcomeLabel::Right);
        // `Right` sorts before `ErrorCode(_)` by variant order.
        set.into_iter().collect()
    }

    /// Per-layer (pre-pool, post-pool) lengths through the conv stack.
    pub fn conv_lengths(&self) -> Result<Vec<(usize, usize)>, ModelError> {
        let mut len = self.l0;
        let mut out = Vec::with_capacity(self.conv.len());
        for layer in &self.conv {
            let conv = output_len(len, layer.kernel, layer.stride)?;
            let pooled = match layer.pool {
                Some(p) => output_len(conv, p, p)?,
                None => conv,
            };
            out.push((conv, pooled));
            len = pooled;
        }
        Ok(out)
    }

    /// Frame length after the last convolutional layer.
    pub fn conv_output_len(&self) -> Result<usize, ModelError> {
        Ok(self.conv_lengths()?.last().map_or(self.l0, |l| l.1))
    }

    pub fn flattened_len(&self) -> Result<usize, ModelError> {
        let frame = self.conv.last().map_or(self.alphabet.len(), |l| l.out_features);
        Ok(frame * self.conv_output_len()?)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.labels.is_empty() || !self.labels.contains(&OutcomeLabel::Right) {
            return Err(ModelError::Config("label list must contain Right".into()));
        }
        let distinct: std::collections::BTreeSet<_> = self.labels.iter().collect();
        if distinct.len() != self.labels.len() {
            return Err(ModelError::Config("duplicate labels".into()));
        }
        if self.l0 == 0 || self.conv.is_empty() {
            return Err(ModelError::Config("need l0 >= 1 and at least one conv layer".into()));
        }
        let mut features = self.alphabet.len();
        for (i, layer) in self.conv.iter().enumerate() {
            if layer.in_features != features {
                return Err(ModelError::Shape(format!(
                    "conv layer {} expects {} input features, got {features}",
                    i + 1,
                    layer.in_features
                )));
            }
            if layer.out_features == 0 || layer.kernel == 0 || layer.stride == 0 || layer.pool == Some(0) {
                return Err(ModelError::Config(format!("conv layer {} has a zero dimension", i + 1)));
            }
            features = layer.out_features;
        }
        if self.fc_hidden.contains(&0) {
            return Err(ModelError::Config("zero-width fully-connected layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config("dropout must be in [0, 1)".into()));
        }
        self.flattened_len()?;
        Ok(())
    }

    /// (input, output) sizes of the fully-connected layers.
    pub fn fc_shapes(&self) -> Result<Vec<(usize, usize)>, ModelError> {
        let mut inputs = self.flattened_len()?;
        let mut shapes = Vec::new();
        for &h in self.fc_hidden.iter().chain(std::iter::once(&self.labels.len())) {
            shapes.push((inputs, h));
            inputs = h;
        }
        Ok(shapes)
    }
}

/// Offsets of one layer's weights and biases in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamBlock {
    pub weight_offset: usize,
    pub weight_len: usize,
    pub bias_offset: usize,
    pub bias_len: usize,
}

fn layout(cfg: &ModelCfg) -> Result<Vec<ParamBlock>, ModelError> {
    let mut blocks = Vec::new();
    let mut offset = 0;
    let mut push = |weight_len: usize, bias_len: usize| {
        blocks.push(ParamBlock {
            weight_offset: offset,
            weight_len,
            bias_offset: offset + weight_len,
            bias_len,
        });
        offset += weight_len + bias_len;
    };
    for l in &cfg.conv {
        push(l.out_features * l.in_features * l.kernel, l.out_features);
    }
    for (i, o) in cfg.fc_shapes()? {
        push(o * i, o);
    }
    Ok(blocks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: OutcomeLabel,
    pub probability: f64,
    /// Probabilities in label order.
    pub probabilities: Vec<(OutcomeLabel, f64)>,
}

/// One training example: quantized input and label index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub input: QuantizedInput,
    pub label: usize,
}

struct ConvCache {
    input: Option<Frames>,
    /// Post-ReLU, pre-pool activations.
    activated: Frames,
    argmax: Option<Vec<usize>>,
}

struct Cache {
    conv: Vec<ConvCache>,
    flat: Vec<f64>,
    /// Per hidden FC layer: post-ReLU activations and the inverted-dropout
    /// scale applied to each unit (empty in eval mode).
    fc_act: Vec<Vec<f64>>,
    fc_mask: Vec<Vec<f64>>,
    probabilities: Vec<f64>,
    logits: Vec<f64>,
}

/// Six temporal conv layers followed by fully-connected layers, all
/// parameters stored in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNetModel {
    cfg: ModelCfg,
    blocks: Vec<ParamBlock>,
    params: Vec<f64>,
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl ConvNetModel {
    /// All weights and biases zero.
    pub fn zeroed(cfg: ModelCfg) -> Result<Self, ModelError> {
        cfg.validate()?;
        let blocks = layout(&cfg)?;
        let total = blocks.last().map_or(0, |b| b.bias_offset + b.bias_len);
        Ok(ConvNetModel {
            cfg,
            blocks,
            params: vec![0.0; total],
        })
    }

    /// Weights drawn from `N(0, init_std)`, biases zero.
    pub fn initialized(cfg: ModelCfg, seed: u64) -> Result<Self, ModelError> {
        let mut model = ConvNetModel::zeroed(cfg)?;
        let normal = Normal::new(0.0, model.cfg.init_std).map_err(|e| ModelError::Config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(super::STREAM_INIT);
        for b in model.blocks.clone() {
            for w in &mut model.params[b.weight_offset..b.weight_offset + b.weight_len] {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(model)
    }

    pub(crate) fn from_parts(cfg: ModelCfg, params: Vec<f64>) -> Result<Self, ModelError> {
        let mut model = ConvNetModel::zeroed(cfg)?;
        if params.len() != model.params.len() {
            return Err(ModelError::Shape(format!(
                "expected {} parameters, got {}",
                model.params.len(),
                params.len()
            )));
        }
        model.params = params;
        Ok(model)
    }

    pub fn cfg(&self) -> &ModelCfg {
        &self.cfg
    }

    pub fn labels(&self) -> &[OutcomeLabel] {
        &self.cfg.labels
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn weights(&self, layer: usize) -> (&[f64], &[f64]) {
        let b = self.blocks[layer];
        (
            &self.params[b.weight_offset..b.weight_offset + b.weight_len],
            &self.params[b.bias_offset..b.bias_offset + b.bias_len],
        )
    }

    pub fn label_index(&self, label: &OutcomeLabel) -> Result<usize, ModelError> {
        self.cfg
            .labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| ModelError::UnknownLabel(label.to_string()))
    }

    pub fn encode_text(&self, text: &str) -> QuantizedInput {
        quantize(text, &self.cfg.alphabet, self.cfg.l0)
    }

    pub fn encode(&self, record: &ApiCallRecord) -> QuantizedInput {
        self.encode_text(&serialize_request(record))
    }

    pub fn example(&self, record: &ApiCallRecord) -> Result<Example, ModelError> {
        Ok(Example {
            input: self.encode(record),
            label: self.label_index(&record.outcome)?,
        })
    }

    fn check_input(&self, input: &QuantizedInput) -> Result<(), ModelError> {
        if input.l0() != self.cfg.l0 || input.alphabet_len != self.cfg.alphabet.len() {
            return Err(ModelError::Shape(format!(
                "input is {}x{}, model expects {}x{}",
                input.alphabet_len,
                input.l0(),
                self.cfg.alphabet.len(),
                self.cfg.l0
            )));
        }
        Ok(())
    }

    fn forward_cached<R: Rng>(&self, input: &QuantizedInput, mut dropout: Option<&mut R>) -> Result<Cache, ModelError> {
        self.check_input(input)?;
        let n_conv = self.cfg.conv.len();
        let mut conv = Vec::with_capacity(n_conv);
        let mut current: Option<Frames> = None;
        for (i, layer) in self.cfg.conv.iter().enumerate() {
            let (w, b) = self.weights(i);
            let mut act = match &current {
                None => conv1d_forward_onehot(
                    &input.columns,
                    layer.in_features,
                    w,
                    b,
                    layer.out_features,
                    layer.kernel,
                    layer.stride,
                )?,
                Some(x) => conv1d_forward(x, w, b, layer.out_features, layer.kernel, layer.stride)?,
            };
            relu_inplace(&mut act.data);
            let (next, argmax) = match layer.pool {
                Some(p) => {
                    let (pooled, arg) = maxpool1d(&act, p, p)?;
                    (pooled, Some(arg))
                }
                None => (act.clone(), None),
            };
            conv.push(ConvCache {
                input: current.take(),
                activated: act,
                argmax,
            });
            current = Some(next);
        }
        let flat = current.expect("at least one conv layer").data;

        let n_fc = self.blocks.len() - n_conv;
        let mut fc_act = Vec::with_capacity(n_fc - 1);
        let mut fc_mask = Vec::with_capacity(n_fc - 1);
        let mut x = flat.clone();
        let mut logits = Vec::new();
        for j in 0..n_fc {
            let (w, b) = self.weights(n_conv + j);
            let n_in = x.len();
            let mut y: Vec<f64> = b.to_vec();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *yo += row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
            }
            if j + 1 == n_fc {
                logits = y;
                break;
            }
            relu_inplace(&mut y);
            let mut mask = Vec::new();
            if let Some(rng) = dropout.as_deref_mut() {
                let p = self.cfg.dropout;
                let keep = 1.0 / (1.0 - p);
                mask = (0..y.len()).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
                for (v, m) in y.iter_mut().zip(&mask) {
                    *v *= m;
                }
            }
            fc_act.push(y.clone());
            fc_mask.push(mask);
            x = y;
        }
        let probabilities = softmax(&logits);
        Ok(Cache {
            conv,
            flat,
            fc_act,
            fc_mask,
            probabilities,
            logits,
        })
    }

    /// Forward pass. Dropout is only active in `Mode::Train`, drawing from `rng`.
    pub fn forward<R: Rng>(&self, input: &QuantizedInput, mode: Mode, rng: &mut R) -> Result<Forward, ModelError> {
        let cache = match mode {
            Mode::Train => self.forward_cached(input, Some(rng))?,
            Mode::Eval => self.forward_cached::<R>(input, None)?,
        };
        Ok(Forward {
            logits: cache.logits,
            probabilities: cache.probabilities,
        })
    }

    pub fn forward_eval(&self, input: &QuantizedInput) -> Result<Forward, ModelError> {
        let cache = self.forward_cached::<ChaCha8Rng>(input, None)?;
        Ok(Forward {
            logits: cache.logits,
            probabilities: cache.probabilities,
        })
    }

    fn backward(&self, example: &Example, cache: &Cache, scale: f64, grad: &mut [f64]) -> Result<(), ModelError> {
        let n_conv = self.cfg.conv.len();
        let n_fc = self.blocks.len() - n_conv;

        // d loss / d logits for softmax + cross-entropy
        let mut delta: Vec<f64> = cache.probabilities.iter().map(|p| p * scale).collect();
        delta[example.label] -= scale;

        for j in (0..n_fc).rev() {
            let block = self.blocks[n_conv + j];
            let x: &[f64] = if j == 0 { &cache.flat } else { &cache.fc_act[j - 1] };
            let n_in = x.len();
            let (w, _) = self.weights(n_conv + j);
            for (o, &d) in delta.iter().enumerate() {
                grad[block.bias_offset + o] += d;
                if d != 0.0 {
                    let gw = &mut grad[block.weight_offset + o * n_in..block.weight_offset + (o + 1) * n_in];
                    for (g, xi) in gw.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            let mut dx = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (dxi, wi) in dx.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *dxi += d * wi;
                    }
                }
            }
            if j > 0 {
                let mask = &cache.fc_mask[j - 1];
                if !mask.is_empty() {
                    for (g, m) in dx.iter_mut().zip(mask) {
                        *g *= m;
                    }
                }
                relu_backward(&cache.fc_act[j - 1], &mut dx);
            }
            delta = dx;
        }

        let last = self.cfg.conv.last().expect("conv layers");
        let mut d_frames = Frames {
            features: last.out_features,
            len: delta.len() / last.out_features,
            data: delta,
        };
        for i in (0..n_conv).rev() {
            let layer = self.cfg.conv[i];
            let c = &cache.conv[i];
            let mut d_act = match &c.argmax {
                Some(arg) => maxpool1d_backward(&d_frames, arg, c.activated.len),
                None => d_frames,
            };
            relu_backward(&c.activated.data, &mut d_act.data);
            let block = self.blocks[i];
            let (w, _) = self.weights(i);
            let (gw, rest) = grad[block.weight_offset..].split_at_mut(block.weight_len);
            let gb = &mut rest[..block.bias_len];
            match &c.input {
                None => {
                    conv1d_backward_onehot(
                        &example.input.columns,
                        layer.in_features,
                        &d_act,
                        layer.kernel,
                        layer.stride,
                        gw,
                        gb,
                    );
                    d_frames = Frames::zeros(0, 0);
                }
                Some(input) => {
                    let mut d_in = Frames::zeros(input.features, input.len);
                    conv1d_backward(input, w, &d_act, layer.kernel, layer.stride, gw, gb, Some(&mut d_in));
                    d_frames = d_in;
                }
            }
        }
        Ok(())
    }

    /// Mean cross-entropy over `batch`; gradients are accumulated into
    /// `grad` (same layout as the parameters) after it is zeroed.
    pub fn loss_and_backward_into<R: Rng>(
        &self,
        batch: &[&Example],
        dropout: Option<&mut R>,
        grad: &mut [f64],
    ) -> Result<f64, ModelError> {
        self.loss_and_backward_counted(batch, dropout, grad).map(|(loss, _)| loss)
    }

    /// As [`Self::loss_and_backward_into`], also counting examples whose
    /// forward-pass argmax matched the label.
    pub fn loss_and_backward_counted<R: Rng>(
        &self,
        batch: &[&Example],
        mut dropout: Option<&mut R>,
        grad: &mut [f64],
    ) -> Result<(f64, usize), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        if grad.len() != self.params.len() {
            return Err(ModelError::Shape("gradient buffer size".into()));
        }
        grad.fill(0.0);
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut hits = 0;
        for ex in batch {
            if ex.label >= self.cfg.labels.len() {
                return Err(ModelError::UnknownLabel(format!("label index {}", ex.label)));
            }
            let cache = self.forward_cached(&ex.input, dropout.as_deref_mut())?;
            let p = &cache.probabilities;
            loss -= p[ex.label].max(f64::MIN_POSITIVE).ln() * scale;
            if p.iter().all(|&q| q <= p[ex.label]) && p.iter().position(|&q| q == p[ex.label]) == Some(ex.label) {
                hits += 1;
            }
            self.backward(ex, &cache, scale, grad)?;
        }
        Ok((loss, hits))
    }

    pub fn loss_and_backward<R: Rng>(&self, batch: &[&Example], dropout: Option<&mut R>) -> Result<(f64, Vec<f64>), ModelError> {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.loss_and_backward_into(batch, dropout, &mut grad)?;
        Ok((loss, grad))
    }

    /// Eval-mode mean cross-entropy.
    pub fn loss(&self, batch: &[&Example]) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for ex in batch {
            let f = self.forward_eval(&ex.input)?;
            let p = f
                .probabilities
                .get(ex.label)
                .ok_or_else(|| ModelError::UnknownLabel(format!("label index {}", ex.label)))?;
            total -= p.max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / batch.len().max(1) as f64)
    }

    pub fn predict_input(&self, input: &QuantizedInput) -> Result<Prediction, ModelError> {
        let f = self.forward_eval(input)?;
        // first maximum wins, so ties go to the earlier label
        let mut best = 0;
        for (i, p) in f.probabilities.iter().enumerate() {
            if *p > f.probabilities[best] {
                best = i;
            }
        }
        Ok(Prediction {
            label: self.cfg.labels[best].clone(),
            probability: f.probabilities[best],
            probabilities: self.cfg.labels.iter().cloned().zip(f.probabilities).collect(),
        })
    }

    pub fn predict(&self, record: &ApiCallRecord) -> Result<Prediction, ModelError> {
        self.predict_input(&self.encode(record))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<OutcomeLabel> {
        let mut l = vec![OutcomeLabel::Right];
        l.extend((1..n).map(|i| OutcomeLabel::ErrorCode(format!("E{i}"))));
        l
    }

    #[test]
    fn standard_stack_shape() {
        let cfg = ModelCfg::for_variant(Variant::Large, labels(3));
        let lens = cfg.conv_lengths().unwrap();
        let chain: Vec<usize> = lens.iter().flat_map(|(c, p)| [*c, *p]).collect();
        assert_eq!(chain, [1008, 336, 330, 110, 108, 108, 106, 106, 104, 104, 102, 34]);
        assert_eq!(cfg.conv_output_len().unwrap(), standard_frame_len(1014));
        assert_eq!(cfg.flattened_len().unwrap(), 1024 * 34);
        let small = ModelCfg::for_variant(Variant::Small, labels(3));
        assert_eq!(small.flattened_len().unwrap(), 256 * 34);
        assert_eq!(small.fc_shapes().unwrap(), [(256 * 34, 1024), (1024, 1024), (1024, 3)]);
        let tiny = ModelCfg::for_variant(Variant::Tiny, labels(3));
        assert_eq!(tiny.conv_output_len().unwrap(), standard_frame_len(256));
    }

    #[test]
    fn closed_form_matches_chain_when_divisible() {
        for l6 in 1..60 {
            let l0 = 96 + 27 * l6;
            let mut cfg = ModelCfg::for_variant(Variant::Tiny, labels(2));
            cfg.l0 = l0;
            assert_eq!(cfg.conv_output_len().unwrap(), l6, "l0 = {l0}");
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModelCfg::for_variant(Variant::Tiny, vec![OutcomeLabel::ErrorCode("E".into())]);
        assert!(cfg.validate().is_err());
        cfg.labels = labels(2);
        assert!(cfg.validate().is_ok());
        cfg.l0 = 100;
        assert!(matches!(cfg.validate(), Err(ModelError::Shape(_))));
        let mut cfg = ModelCfg::for_variant(Variant::Tiny, labels(2));
        cfg.conv[2].in_features = 3;
        assert!(cfg.validate().is_err());
        assert_eq!(
            ModelCfg::canonical_labels(&[OutcomeLabel::ErrorCode("b".into()), OutcomeLabel::ErrorCode("a".into())]),
            vec![OutcomeLabel::Right, OutcomeLabel::ErrorCode("a".into()), OutcomeLabel::ErrorCode("b".into())]
        );
    }

    #[test]
    fn zero_model_is_uniform_and_picks_first_label() {
        let model = ConvNetModel::zeroed(ModelCfg::for_variant(Variant::Tiny, labels(4))).unwrap();
        let input = model.encode_text("SendSms|PhoneNumbers=1");
        let f = model.forward_eval(&input).unwrap();
        assert!(f.probabilities.iter().all(|p| (p - 0.25).abs() < 1e-15));
        let ex = Example { input: input.clone(), label: 2 };
        assert!((model.loss(&[&ex]).unwrap() - 4f64.ln()).abs() < 1e-12);
        let p = model.predict_input(&input).unwrap();
        assert_eq!(p.label, OutcomeLabel::Right);
        let wrong = model.encode_text("x");
        assert!(model.forward_eval(&QuantizedInput { alphabet_len: 3, ..wrong }).is_err());
    }

    #[test]
    fn eval_is_deterministic_and_train_uses_dropout() {
        let model = ConvNetModel::initialized(ModelCfg::for_variant(Variant::Tiny, labels(3)), 7).unwrap();
        let input = model.encode_text("AddSmsSign|Remark=hello&SignName=aliyun");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = model.forward(&input, Mode::Eval, &mut rng).unwrap();
        let b = model.forward(&input, Mode::Eval, &mut rng).unwrap();
        assert_eq!(a, b);
        let s: f64 = a.probabilities.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        let t1 = model.forward(&input, Mode::Train, &mut rng).unwrap();
        let t2 = model.forward(&input, Mode::Train, &mut rng).unwrap();
        assert_ne!(t1.logits, t2.logits);
    }

    #[test]
    fn unknown_label_rejected() {
        let model = ConvNetModel::zeroed(ModelCfg::for_variant(Variant::Tiny, labels(2))).unwrap();
        let mut rec = ApiCallRecord {
            api: "A".into(),
            params: vec![],
            outcome: OutcomeLabel::ErrorCode("nope".into()),
            session_id: String::new(),
            timestamp: 0,
        };
        assert!(matches!(model.example(&rec), Err(ModelError::UnknownLabel(_))));
        rec.outcome = OutcomeLabel::Right;
        let ex = model.example(&rec).unwrap();
        let bad = Example { label: 9, ..ex };
        assert!(model.loss_and_backward::<ChaCha8Rng>(&[&bad], None).is_err());
        assert!(matches!(model.loss_and_backward::<ChaCha8Rng>(&[], None), Err(ModelError::EmptyBatch)));
    }
}
