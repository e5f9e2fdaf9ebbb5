//! The four networks: generator, classifier, discriminator, and the input
//! generator that is the trainable piece of the steering pipeline.
//!
//! All are small dense MLPs over the autodiff graph. Parameters live in a
//! [`Params`] list ordered `w0, b0, w1, b1, ...` (heads last for the input
//! generator); initialization draws weights from the seeded stream in that
//! same order, so checkpoints and fresh inits are byte-reproducible.

use crate::autodiff::{Activation, Graph, NodeId};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{validate_one_hot, Tensor};

/// Latent vector width shared by the generator and the input generator.
pub const LATENT_DIM: usize = 8;
/// Generator output side (8x8 image).
pub const GEN_SIDE: usize = 8;
/// Classifier input side (16x16 image).
pub const CLF_SIDE: usize = 16;
/// Width of the classifier's penultimate (feature) layer.
pub const FEATURE_DIM: usize = 16;
/// Default floor added to the softplus sigma head.
pub const SIGMA_MIN_DEFAULT: f64 = 1e-4;

/// Dense MLP layout: `widths[0]` inputs through `widths.last()` outputs,
/// `hidden` after every layer but the last, `output` (if any) after it.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Option<Activation>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, hidden: Activation, output: Option<Activation>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Validation(format!(
                "an MLP needs at least two widths, got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Validation(format!(
                "MLP widths must be positive, got {widths:?}"
            )));
        }
        Ok(MlpSpec {
            widths,
            hidden,
            output,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    /// Canonical parameter names and shapes: `w{i}` is `[in, out]`, `b{i}`
    /// is `[out]`.
    pub fn expected_entries(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for i in 0..self.layer_count() {
            let (fan_in, fan_out) = (self.widths[i], self.widths[i + 1]);
            out.push((format!("w{i}"), vec![fan_in, fan_out]));
            out.push((format!("b{i}"), vec![fan_out]));
        }
        out
    }
}

/// Named parameter tensors in a fixed order. The order is load-bearing:
/// optimizers and checkpoints align by position.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    entries: Vec<(String, Tensor)>,
}

impl Params {
    pub fn new() -> Self {
        Params {
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| n == &name) {
            return Err(Error::Validation(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Validation(format!("missing parameter `{name}`")))
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.entries.iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    /// Same names, new values; shapes must match position by position.
    pub fn with_tensors(&self, tensors: &[Tensor]) -> Result<Params> {
        if tensors.len() != self.entries.len() {
            return Err(Error::Validation(format!(
                "expected {} tensors, got {}",
                self.entries.len(),
                tensors.len()
            )));
        }
        let mut out = Params::new();
        for ((name, old), new_t) in self.entries.iter().zip(tensors) {
            if old.shape() != new_t.shape() {
                return Err(Error::Shape(format!(
                    "parameter `{name}` expects shape {:?}, got {:?}",
                    old.shape(),
                    new_t.shape()
                )));
            }
            out.push(name.clone(), new_t.clone())?;
        }
        Ok(out)
    }

    /// Verifies names and shapes exactly match `expected`, in order.
    pub fn check_layout(&self, expected: &[(String, Vec<usize>)]) -> Result<()> {
        if self.entries.len() != expected.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                self.entries.len()
            )));
        }
        for ((name, tensor), (want_name, want_shape)) in self.entries.iter().zip(expected) {
            if name != want_name {
                return Err(Error::Shape(format!(
                    "parameter `{name}` found where `{want_name}` was expected"
                )));
            }
            if tensor.shape() != want_shape.as_slice() {
                return Err(Error::Shape(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    tensor.shape(),
                    want_shape
                )));
            }
        }
        Ok(())
    }
}

impl Default for Params {
    fn default() -> Self {
        Params::new()
    }
}

/// Glorot-uniform initialization: each weight `w{i}` is drawn entry by
/// entry (row-major) from `U(-b, b)` with `b = sqrt(6/(fan_in+fan_out))`,
/// layers in order; biases are zero and consume no randomness.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Params {
    let mut rng = Rng::new(seed);
    let mut params = Params::new();
    init_layers_into(&mut params, spec, &mut rng, |i| {
        (format!("w{i}"), format!("b{i}"))
    });
    params
}

fn glorot_weight(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| rng.uniform_in(-bound, bound))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("weight shape is valid")
}

fn init_layers_into(
    params: &mut Params,
    spec: &MlpSpec,
    rng: &mut Rng,
    names: impl Fn(usize) -> (String, String),
) {
    for i in 0..spec.layer_count() {
        let (fan_in, fan_out) = (spec.widths[i], spec.widths[i + 1]);
        let (wname, bname) = names(i);
        params
            .push(wname, glorot_weight(rng, fan_in, fan_out))
            .expect("names are unique");
        params
            .push(bname, Tensor::zeros(vec![fan_out]))
            .expect("names are unique");
    }
}

/// Graph handles for inserted parameters, aligned with [`Params`] order.
pub struct ParamNodes {
    entries: Vec<(String, NodeId)>,
}

impl ParamNodes {
    pub fn get(&self, name: &str) -> NodeId {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .unwrap_or_else(|| panic!("parameter `{name}` was not inserted"))
    }

    /// Gradients in parameter order (zeros where nothing flowed).
    pub fn grads(&self, g: &Graph) -> Vec<Tensor> {
        self.entries.iter().map(|(_, id)| g.grad(*id)).collect()
    }
}

/// Inserts every parameter into the graph, as trainable leaves when
/// `trainable`, frozen constants otherwise.
pub fn insert_params(g: &mut Graph, params: &Params, trainable: bool) -> ParamNodes {
    let entries = params
        .entries()
        .iter()
        .map(|(name, tensor)| {
            let id = if trainable {
                g.param(tensor.clone())
            } else {
                g.constant(tensor.clone())
            };
            (name.clone(), id)
        })
        .collect();
    ParamNodes { entries }
}

/// Runs the MLP on a `[1, in]` node. Returns the `[1, out]` output node and
/// the hidden activations (one `[1, width]` node per hidden layer).
pub fn apply_mlp(
    g: &mut Graph,
    nodes: &ParamNodes,
    spec: &MlpSpec,
    x: NodeId,
) -> Result<(NodeId, Vec<NodeId>)> {
    let mut h = x;
    let mut hidden = Vec::new();
    let last = spec.layer_count() - 1;
    for i in 0..spec.layer_count() {
        let w = nodes.get(&format!("w{i}"));
        let b = nodes.get(&format!("b{i}"));
        let lin = g.matmul(h, w)?;
        let b_row = g.reshape(b, vec![1, spec.widths[i + 1]])?;
        let z = g.add(lin, b_row)?;
        h = if i < last {
            let a = g.activation(spec.hidden, z);
            hidden.push(a);
            a
        } else {
            match spec.output {
                Some(act) => g.activation(act, z),
                None => z,
            }
        };
    }
    Ok((h, hidden))
}

// ── Generator ───────────────────────────────────────────────────────────

/// Frozen-after-pretraining image generator: latent `[8]` to image `[8,8]`
/// through tanh hidden layers and a sigmoid output, so pixels live in
/// `(0, 1)` structurally.
#[derive(Clone, Debug)]
pub struct GeneratorNet {
    pub params: Params,
}

impl GeneratorNet {
    pub fn spec() -> MlpSpec {
        MlpSpec::new(
            vec![LATENT_DIM, 64, 64, GEN_SIDE * GEN_SIDE],
            Activation::Tanh,
            Some(Activation::Sigmoid),
        )
        .expect("static spec is valid")
    }

    pub fn init(seed: u64) -> Self {
        GeneratorNet {
            params: init_params(&Self::spec(), seed),
        }
    }

    pub fn from_params(params: Params) -> Result<Self> {
        params.check_layout(&Self::spec().expected_entries())?;
        Ok(GeneratorNet { params })
    }

    pub fn insert(&self, g: &mut Graph, trainable: bool) -> ParamNodes {
        insert_params(g, &self.params, trainable)
    }

    /// Graph-level forward from a latent node of shape `[8]` to an `[8, 8]`
    /// image node.
    pub fn forward_on(&self, g: &mut Graph, nodes: &ParamNodes, z: NodeId) -> Result<NodeId> {
        if g.value(z).shape() != [LATENT_DIM] {
            return Err(Error::Shape(format!(
                "generator expects a latent of shape [{LATENT_DIM}], got {:?}",
                g.value(z).shape()
            )));
        }
        let row = g.reshape(z, vec![1, LATENT_DIM])?;
        let (out, _) = apply_mlp(g, nodes, &Self::spec(), row)?;
        g.reshape(out, vec![GEN_SIDE, GEN_SIDE])
    }

    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let nodes = self.insert(&mut g, false);
        let zn = g.constant(z.clone());
        let img = self.forward_on(&mut g, &nodes, zn)?;
        Ok(g.value(img).clone())
    }
}

// ── Classifier ──────────────────────────────────────────────────────────

/// Frozen-after-pretraining classifier over 16x16 images. The penultimate
/// 16-wide activation doubles as the feature embedding used for Frechet
/// distances.
#[derive(Clone, Debug)]
pub struct ClassifierNet {
    pub params: Params,
    pub k: usize,
}

impl ClassifierNet {
    pub fn spec(k: usize) -> Result<MlpSpec> {
        if k < 2 {
            return Err(Error::Validation(format!(
                "classifier needs at least 2 classes, got {k}"
            )));
        }
        MlpSpec::new(
            vec![CLF_SIDE * CLF_SIDE, 64, FEATURE_DIM, k],
            Activation::LeakyRelu,
            None,
        )
    }

    pub fn init(k: usize, seed: u64) -> Result<Self> {
        Ok(ClassifierNet {
            params: init_params(&Self::spec(k)?, seed),
            k,
        })
    }

    pub fn from_params(params: Params, k: usize) -> Result<Self> {
        params.check_layout(&Self::spec(k)?.expected_entries())?;
        Ok(ClassifierNet { params, k })
    }

    pub fn insert(&self, g: &mut Graph, trainable: bool) -> ParamNodes {
        insert_params(g, &self.params, trainable)
    }

    /// Graph-level forward from a `[16, 16]` image node to `(logits [k],
    /// features [16])`. An `[8, 8]` input is rejected with a reminder that
    /// generator output must be upsampled first.
    pub fn forward_on(
        &self,
        g: &mut Graph,
        nodes: &ParamNodes,
        img16: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let shape = g.value(img16).shape().to_vec();
        if shape == [GEN_SIDE, GEN_SIDE] {
            return Err(Error::Shape(format!(
                "classifier takes [{CLF_SIDE}, {CLF_SIDE}] images; got [{GEN_SIDE}, {GEN_SIDE}] \
                 (nearest-upsample generator output by 2 first)"
            )));
        }
        if shape != [CLF_SIDE, CLF_SIDE] {
            return Err(Error::Shape(format!(
                "classifier takes [{CLF_SIDE}, {CLF_SIDE}] images, got {shape:?}"
            )));
        }
        let row = g.reshape(img16, vec![1, CLF_SIDE * CLF_SIDE])?;
        let spec = Self::spec(self.k)?;
        let (out, hidden) = apply_mlp(g, nodes, &spec, row)?;
        let logits = g.reshape(out, vec![self.k])?;
        let features = g.reshape(hidden[1], vec![FEATURE_DIM])?;
        Ok((logits, features))
    }

    pub fn forward(&self, img16: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let nodes = self.insert(&mut g, false);
        let x = g.constant(img16.clone());
        let (logits, features) = self.forward_on(&mut g, &nodes, x)?;
        Ok((g.value(logits).clone(), g.value(features).clone()))
    }

    /// Class prediction for a 16x16 image: argmax of the logits.
    pub fn predict(&self, img16: &Tensor) -> Result<usize> {
        let (logits, _) = self.forward(img16)?;
        Ok(argmax(logits.data()))
    }
}

/// Index of the largest value (first one on ties).
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

// ── Discriminator ───────────────────────────────────────────────────────

/// GAN discriminator over native 8x8 images, emitting one real/fake logit.
#[derive(Clone, Debug)]
pub struct DiscriminatorNet {
    pub params: Params,
}

impl DiscriminatorNet {
    pub fn spec() -> MlpSpec {
        MlpSpec::new(
            vec![GEN_SIDE * GEN_SIDE, 64, 32, 1],
            Activation::LeakyRelu,
            None,
        )
        .expect("static spec is valid")
    }

    pub fn init(seed: u64) -> Self {
        DiscriminatorNet {
            params: init_params(&Self::spec(), seed),
        }
    }

    pub fn from_params(params: Params) -> Result<Self> {
        params.check_layout(&Self::spec().expected_entries())?;
        Ok(DiscriminatorNet { params })
    }

    pub fn insert(&self, g: &mut Graph, trainable: bool) -> ParamNodes {
        insert_params(g, &self.params, trainable)
    }

    /// Graph-level forward from an `[8, 8]` image node to a scalar logit
    /// node of shape `[1]`.
    pub fn forward_on(&self, g: &mut Graph, nodes: &ParamNodes, img: NodeId) -> Result<NodeId> {
        if g.value(img).shape() != [GEN_SIDE, GEN_SIDE] {
            return Err(Error::Shape(format!(
                "discriminator takes [{GEN_SIDE}, {GEN_SIDE}] images, got {:?}",
                g.value(img).shape()
            )));
        }
        let row = g.reshape(img, vec![1, GEN_SIDE * GEN_SIDE])?;
        let (out, _) = apply_mlp(g, nodes, &Self::spec(), row)?;
        g.reshape(out, vec![1])
    }

    pub fn forward(&self, img: &Tensor) -> Result<f64> {
        let mut g = Graph::new();
        let nodes = self.insert(&mut g, false);
        let x = g.constant(img.clone());
        let logit = self.forward_on(&mut g, &nodes, x)?;
        g.value(logit).item()
    }
}

// ── Input generator ─────────────────────────────────────────────────────

/// The trainable steering network: one-hot class `[k]` to latent Gaussian
/// parameters `(mu [8], sigma [8])`. A shared tanh trunk feeds two linear
/// heads; the sigma head passes through softplus and adds `sigma_min`, so
/// `sigma > sigma_min` holds for every input and parameter setting.
#[derive(Clone, Debug)]
pub struct InputGeneratorNet {
    pub params: Params,
    pub k: usize,
    pub sigma_min: f64,
}

const IG_TRUNK_WIDTH: usize = 32;

impl InputGeneratorNet {
    fn trunk_spec(k: usize) -> Result<MlpSpec> {
        if k < 2 {
            return Err(Error::Validation(format!(
                "input generator needs at least 2 classes, got {k}"
            )));
        }
        MlpSpec::new(
            vec![k, IG_TRUNK_WIDTH, IG_TRUNK_WIDTH],
            Activation::Tanh,
            Some(Activation::Tanh),
        )
    }

    pub fn expected_entries(k: usize) -> Result<Vec<(String, Vec<usize>)>> {
        let mut entries = Self::trunk_spec(k)?.expected_entries();
        entries.push(("mu_w".into(), vec![IG_TRUNK_WIDTH, LATENT_DIM]));
        entries.push(("mu_b".into(), vec![LATENT_DIM]));
        entries.push(("sigma_w".into(), vec![IG_TRUNK_WIDTH, LATENT_DIM]));
        entries.push(("sigma_b".into(), vec![LATENT_DIM]));
        Ok(entries)
    }

    /// Weight draw order: trunk `w0`, trunk `w1`, `mu_w`, `sigma_w`;
    /// biases are zero.
    pub fn init(k: usize, sigma_min: f64, seed: u64) -> Result<Self> {
        let trunk = Self::trunk_spec(k)?;
        Self::validate_sigma_min(sigma_min)?;
        let mut rng = Rng::new(seed);
        let mut params = Params::new();
        init_layers_into(&mut params, &trunk, &mut rng, |i| {
            (format!("w{i}"), format!("b{i}"))
        });
        params
            .push("mu_w", glorot_weight(&mut rng, IG_TRUNK_WIDTH, LATENT_DIM))
            .expect("unique");
        params
            .push("mu_b", Tensor::zeros(vec![LATENT_DIM]))
            .expect("unique");
        params
            .push(
                "sigma_w",
                glorot_weight(&mut rng, IG_TRUNK_WIDTH, LATENT_DIM),
            )
            .expect("unique");
        params
            .push("sigma_b", Tensor::zeros(vec![LATENT_DIM]))
            .expect("unique");
        Ok(InputGeneratorNet {
            params,
            k,
            sigma_min,
        })
    }

    fn validate_sigma_min(sigma_min: f64) -> Result<()> {
        if !sigma_min.is_finite() || sigma_min <= 0.0 {
            return Err(Error::Validation(format!(
                "sigma_min must be a positive finite float, got {sigma_min}"
            )));
        }
        Ok(())
    }

    pub fn from_params(params: Params, k: usize, sigma_min: f64) -> Result<Self> {
        Self::validate_sigma_min(sigma_min)?;
        params.check_layout(&Self::expected_entries(k)?)?;
        Ok(InputGeneratorNet {
            params,
            k,
            sigma_min,
        })
    }

    pub fn insert(&self, g: &mut Graph, trainable: bool) -> ParamNodes {
        insert_params(g, &self.params, trainable)
    }

    /// Graph-level forward from a one-hot node of shape `[k]` to
    /// `(mu [8], sigma [8])`.
    pub fn forward_on(
        &self,
        g: &mut Graph,
        nodes: &ParamNodes,
        x: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        validate_one_hot(g.value(x))?;
        if g.value(x).shape() != [self.k] {
            return Err(Error::Shape(format!(
                "input generator expects a one-hot of shape [{}], got {:?}",
                self.k,
                g.value(x).shape()
            )));
        }
        let row = g.reshape(x, vec![1, self.k])?;
        let (trunk_out, _) = apply_mlp(g, nodes, &Self::trunk_spec(self.k)?, row)?;

        let head = |g: &mut Graph, w: NodeId, b: NodeId| -> Result<NodeId> {
            let lin = g.matmul(trunk_out, w)?;
            let b_row = g.reshape(b, vec![1, LATENT_DIM])?;
            g.add(lin, b_row)
        };
        let mu_lin = head(g, nodes.get("mu_w"), nodes.get("mu_b"))?;
        let mu = g.reshape(mu_lin, vec![LATENT_DIM])?;

        let sigma_lin = head(g, nodes.get("sigma_w"), nodes.get("sigma_b"))?;
        let sp = g.activation(Activation::Softplus, sigma_lin);
        let floored = g.add_scalar(sp, self.sigma_min);
        let sigma = g.reshape(floored, vec![LATENT_DIM])?;
        Ok((mu, sigma))
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let nodes = self.insert(&mut g, false);
        let xn = g.constant(x.clone());
        let (mu, sigma) = self.forward_on(&mut g, &nodes, xn)?;
        Ok((g.value(mu).clone(), g.value(sigma).clone()))
    }
}
