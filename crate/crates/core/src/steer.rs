//! Conditioning a frozen generator with a frozen classifier.
//!
//! The only trainable piece is the input generator: one-hot class label in,
//! latent Gaussian parameters (mu, sigma) out. A latent is sampled with the
//! reparameterization trick `z = mu + sigma * eps`, pushed through the
//! frozen generator, upsampled, and scored by the frozen classifier;
//! cross-entropy against the requested label is the training signal. An
//! optional `-lambda * mean(log sigma)` term counteracts variance collapse.

use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax, Graph, NodeId};
use crate::checkpoint::{config_hash, Checkpoint, CheckpointMeta};
use crate::error::{Error, Result};
use crate::nets::{
    argmax, ClassifierNet, GeneratorNet, InputGeneratorNet, ParamNodes, LATENT_DIM,
    SIGMA_MIN_DEFAULT,
};
use crate::optim::{Adam, AdamConfig};
use crate::rng::Rng;
use crate::tensor::{one_hot, validate_one_hot, Tensor};

/// Hyperparameters for input-generator training. An "epoch" is
/// `steps_per_epoch` batches of freshly sampled (class, eps) pairs; there
/// is no finite dataset to sweep.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConditioningConfig {
    pub epochs: u32,
    pub steps_per_epoch: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Variance-regularization weight; 0 disables the term entirely.
    pub lambda: f64,
    pub sigma_min: f64,
    pub seed: u64,
    /// Stop once the per-epoch frozen-classifier accuracy over the
    /// epoch's own training draws reaches this value. Set above 1 to
    /// always run every epoch.
    pub target_accuracy: f64,
}

impl Default for ConditioningConfig {
    fn default() -> Self {
        ConditioningConfig {
            epochs: 40,
            steps_per_epoch: 25,
            batch_size: 32,
            learning_rate: 2e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lambda: 0.0,
            sigma_min: SIGMA_MIN_DEFAULT,
            seed: 7,
            // At the default 800 draws per epoch this demands a perfect
            // epoch (799/800 falls short).
            target_accuracy: 0.999,
        }
    }
}

impl ConditioningConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.steps_per_epoch == 0 {
            return Err(Error::Config(
                "epochs and steps_per_epoch must be >= 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !self.sigma_min.is_finite() || self.sigma_min <= 0.0 {
            return Err(Error::Config(format!(
                "sigma_min must be positive, got {}",
                self.sigma_min
            )));
        }
        if !self.target_accuracy.is_finite() || self.target_accuracy <= 0.0 {
            return Err(Error::Config(format!(
                "target_accuracy must be positive, got {}",
                self.target_accuracy
            )));
        }
        self.adam().validate()
    }
}

/// One reparameterized draw: `z = mu + sigma * eps`, stored with all of
/// its ingredients.
#[derive(Clone, Debug)]
pub struct LatentSample {
    pub x: Tensor,
    pub mu: Tensor,
    pub sigma: Tensor,
    pub epsilon: Tensor,
    pub z: Tensor,
}

/// `z = mu + sigma * eps` elementwise. `sigma` must be strictly positive.
pub fn sample_latent(mu: &Tensor, sigma: &Tensor, eps: &Tensor) -> Result<Tensor> {
    if mu.shape() != sigma.shape() || mu.shape() != eps.shape() {
        return Err(Error::Shape(format!(
            "sample_latent needs matching shapes, got mu {:?}, sigma {:?}, eps {:?}",
            mu.shape(),
            sigma.shape(),
            eps.shape()
        )));
    }
    if let Some(bad) = sigma.data().iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Validation(format!(
            "sigma must be strictly positive, got {} at coordinate {bad}",
            sigma.data()[bad]
        )));
    }
    let data: Vec<f64> = mu
        .data()
        .iter()
        .zip(sigma.data())
        .zip(eps.data())
        .map(|((&m, &s), &e)| m + s * e)
        .collect();
    Tensor::new(mu.shape().to_vec(), data)
}

/// Node handles for one pipeline pass, kept so callers can read values or
/// attach losses.
pub struct PipelineNodes {
    pub mu: NodeId,
    pub sigma: NodeId,
    pub z: NodeId,
    pub image: NodeId,
    pub logits: NodeId,
}

/// Builds one full forward pass on an existing graph: input generator to
/// latent to frozen generator to 2x upsample to frozen classifier logits.
/// `x` must be a one-hot node of shape `[k]`, `eps` a node of shape `[8]`.
#[allow(clippy::too_many_arguments)]
pub fn pipeline_forward_on(
    g: &mut Graph,
    ig: &InputGeneratorNet,
    ig_nodes: &ParamNodes,
    gen: &GeneratorNet,
    gen_nodes: &ParamNodes,
    clf: &ClassifierNet,
    clf_nodes: &ParamNodes,
    x: NodeId,
    eps: NodeId,
) -> Result<PipelineNodes> {
    if g.value(eps).shape() != [LATENT_DIM] {
        return Err(Error::Shape(format!(
            "eps must have shape [{LATENT_DIM}], got {:?}",
            g.value(eps).shape()
        )));
    }
    let (mu, sigma) = ig.forward_on(g, ig_nodes, x)?;
    let scaled = g.mul(sigma, eps)?;
    let z = g.add(mu, scaled)?;
    let image = gen.forward_on(g, gen_nodes, z)?;
    let img16 = g.nearest_upsample(image, 2)?;
    let (logits, _) = clf.forward_on(g, clf_nodes, img16)?;
    Ok(PipelineNodes {
        mu,
        sigma,
        z,
        image,
        logits,
    })
}

/// Attaches the conditioning loss to a pipeline pass: cross-entropy of the
/// logits against the requested one-hot, minus
/// `lambda * mean(log sigma)`. With `lambda == 0` the returned node is the
/// cross-entropy node itself, bit for bit.
pub fn conditioning_loss_on(
    g: &mut Graph,
    pipe: &PipelineNodes,
    x_target: &Tensor,
    lambda: f64,
) -> Result<NodeId> {
    let cce = g.softmax_cce(pipe.logits, x_target)?;
    if lambda == 0.0 {
        return Ok(cce);
    }
    let log_sigma = g.log(pipe.sigma);
    let reg = g.mean(log_sigma);
    let weighted = g.scale(reg, lambda);
    g.sub(cce, weighted)
}

/// Value-level pipeline pass. Returns the latent sample, the generated
/// 8x8 image, and the classifier's softmax distribution over classes.
pub fn pipeline_forward(
    ig: &InputGeneratorNet,
    gen: &GeneratorNet,
    clf: &ClassifierNet,
    x: &Tensor,
    eps: &Tensor,
) -> Result<(LatentSample, Tensor, Tensor)> {
    let mut g = Graph::new();
    let ig_nodes = ig.insert(&mut g, false);
    let gen_nodes = gen.insert(&mut g, false);
    let clf_nodes = clf.insert(&mut g, false);
    let xn = g.constant(x.clone());
    let en = g.constant(eps.clone());
    let pipe = pipeline_forward_on(
        &mut g, ig, &ig_nodes, gen, &gen_nodes, clf, &clf_nodes, xn, en,
    )?;
    let sample = LatentSample {
        x: x.clone(),
        mu: g.value(pipe.mu).clone(),
        sigma: g.value(pipe.sigma).clone(),
        epsilon: eps.clone(),
        z: g.value(pipe.z).clone(),
    };
    let image = g.value(pipe.image).clone();
    let yhat = Tensor::from_vec(softmax(g.value(pipe.logits).data()));
    Ok((sample, image, yhat))
}

/// Value-level conditioning loss from a softmax distribution:
/// `-log yhat[class] - lambda * mean(log sigma)`.
pub fn conditioning_loss(yhat: &Tensor, x: &Tensor, sigma: &Tensor, lambda: f64) -> Result<f64> {
    if yhat.shape() != x.shape() {
        return Err(Error::Shape(format!(
            "yhat and x must match, got {:?} and {:?}",
            yhat.shape(),
            x.shape()
        )));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Validation(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let hot = validate_one_hot(x)?;
    let p = yhat.data()[hot];
    if !(p > 0.0) {
        return Err(Error::Numerical(format!(
            "predicted probability for the target class is {p}; log is undefined"
        )));
    }
    if let Some(bad) = sigma.data().iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Validation(format!(
            "sigma must be strictly positive, got {} at coordinate {bad}",
            sigma.data()[bad]
        )));
    }
    let cce = -p.ln();
    if lambda == 0.0 {
        return Ok(cce);
    }
    let mean_log_sigma = sigma.data().iter().map(|&s| s.ln()).sum::<f64>() / sigma.numel() as f64;
    Ok(cce - lambda * mean_log_sigma)
}

#[derive(Clone, Debug, Serialize)]
pub struct IgEpoch {
    pub epoch: u32,
    pub loss: f64,
    pub frozen_clf_accuracy: f64,
    /// Mean sigma per class, index = class.
    pub mean_sigma: Vec<f64>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct IgHistory {
    pub epochs: Vec<IgEpoch>,
}

impl IgHistory {
    pub fn to_csv(&self, k: usize) -> String {
        let mut out = String::from("epoch,loss,frozen_clf_accuracy");
        for c in 0..k {
            out.push_str(&format!(",mean_sigma_class{c}"));
        }
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}", e.epoch, e.loss, e.frozen_clf_accuracy));
            for s in &e.mean_sigma {
                out.push_str(&format!(",{s}"));
            }
            out.push('\n');
        }
        out
    }
}

pub struct IgOutcome {
    pub checkpoint: Checkpoint,
    pub history: IgHistory,
    pub final_accuracy: f64,
    pub epochs_run: u32,
}

/// Mean sigma per class under the current input generator.
fn class_sigmas(ig: &InputGeneratorNet) -> Result<Vec<f64>> {
    (0..ig.k)
        .map(|c| {
            let (_, sigma) = ig.forward(&one_hot(ig.k, c)?)?;
            Ok(sigma.data().iter().sum::<f64>() / sigma.numel() as f64)
        })
        .collect()
}

/// Trains the input generator against frozen generator and classifier.
/// Each step samples `batch_size` classes uniformly with fresh eps draws,
/// minimizes the mean conditioning loss with Adam, and never touches the
/// frozen parameters. Per-epoch accuracy is the fraction of the epoch's
/// own training draws whose argmax logits match the requested class;
/// training stops early once it reaches `target_accuracy`.
pub fn train_input_generator(
    cfg: &ConditioningConfig,
    gen: &GeneratorNet,
    clf: &ClassifierNet,
) -> Result<IgOutcome> {
    cfg.validate()?;
    let k = clf.k;

    // Sub-seed order: input generator init, then the training stream.
    let mut seeder = Rng::new(cfg.seed);
    let init_seed = seeder.next_u64();
    let train_seed = seeder.next_u64();

    let mut ig = InputGeneratorNet::init(k, cfg.sigma_min, init_seed)?;
    let mut adam = Adam::new(cfg.adam(), &ig.params)?;
    let mut rng = Rng::new(train_seed);
    let mut history = IgHistory::default();

    let targets: Vec<Tensor> = (0..k).map(|c| one_hot(k, c)).collect::<Result<_>>()?;
    let mut epochs_run = 0;
    let mut final_accuracy = 0.0;

    for epoch in 0..cfg.epochs {
        let mut losses = Vec::with_capacity(cfg.steps_per_epoch as usize);
        let mut hits = 0usize;
        let mut draws = 0usize;
        for step in 0..cfg.steps_per_epoch {
            let mut graph = Graph::new();
            let ig_nodes = ig.insert(&mut graph, true);
            let gen_nodes = gen.insert(&mut graph, false);
            let clf_nodes = clf.insert(&mut graph, false);

            let mut terms = Vec::with_capacity(cfg.batch_size);
            for _ in 0..cfg.batch_size {
                let class = rng.below(k);
                let xn = graph.constant(targets[class].clone());
                let en = graph.constant(Tensor::from_vec(rng.normal_vec(LATENT_DIM)));
                let pipe = pipeline_forward_on(
                    &mut graph, &ig, &ig_nodes, gen, &gen_nodes, clf, &clf_nodes, xn, en,
                )?;
                if argmax(graph.value(pipe.logits).data()) == class {
                    hits += 1;
                }
                draws += 1;
                terms.push(conditioning_loss_on(
                    &mut graph,
                    &pipe,
                    &targets[class],
                    cfg.lambda,
                )?);
            }
            let loss = graph.mean_of(&terms)?;
            let loss_value = graph.value(loss).item()?;
            if !loss_value.is_finite() {
                return Err(Error::Training {
                    epoch: epoch as usize,
                    step: step as usize,
                    message: format!("conditioning loss diverged to {loss_value}"),
                });
            }
            graph.backward(loss)?;
            adam.step(&mut ig.params, &ig_nodes.grads(&graph))?;
            losses.push(loss_value);
        }

        let accuracy = hits as f64 / draws as f64;
        history.epochs.push(IgEpoch {
            epoch,
            loss: losses.iter().sum::<f64>() / losses.len() as f64,
            frozen_clf_accuracy: accuracy,
            mean_sigma: class_sigmas(&ig)?,
        });
        epochs_run = epoch + 1;
        final_accuracy = accuracy;
        if accuracy >= cfg.target_accuracy {
            break;
        }
    }

    let hash = config_hash(cfg)?;
    Ok(IgOutcome {
        checkpoint: Checkpoint::input_generator(
            &ig,
            CheckpointMeta::new(cfg.seed, epochs_run, &hash),
        ),
        history,
        final_accuracy,
        epochs_run,
    })
}

/// Draws `n` conditional samples for class `class`: one (mu, sigma) pass,
/// then `n` fresh eps draws through the frozen generator. Deterministic in
/// `seed`.
pub fn conditional_sample(
    ig: &InputGeneratorNet,
    gen: &GeneratorNet,
    class: usize,
    n: usize,
    seed: u64,
) -> Result<Tensor> {
    if class >= ig.k {
        return Err(Error::Validation(format!(
            "class {class} is out of range for k={}",
            ig.k
        )));
    }
    if n == 0 {
        return Err(Error::Validation("need at least one sample".into()));
    }
    let (mu, sigma) = ig.forward(&one_hot(ig.k, class)?)?;
    let mut rng = Rng::new(seed);
    let mut graph = Graph::new();
    let gen_nodes = gen.insert(&mut graph, false);
    let mut out = Vec::with_capacity(n * 64);
    for _ in 0..n {
        let eps = Tensor::from_vec(rng.normal_vec(LATENT_DIM));
        let z = sample_latent(&mu, &sigma, &eps)?;
        let zn = graph.constant(z);
        let img = gen.forward_on(&mut graph, &gen_nodes, zn)?;
        out.extend_from_slice(graph.value(img).data());
    }
    Tensor::new(vec![n, 8, 8], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;

    fn tiny_nets() -> (GeneratorNet, ClassifierNet) {
        (
            GeneratorNet::init(100),
            ClassifierNet::init(4, 200).unwrap(),
        )
    }

    #[test]
    fn zero_eps_returns_mu_exactly() {
        let mu = Tensor::from_vec(vec![0.3, -1.0, 0.5, 2.0, -0.2, 0.0, 1.5, -3.0]);
        let sigma = Tensor::filled(vec![8], 0.7);
        let eps = Tensor::zeros(vec![8]);
        let z = sample_latent(&mu, &sigma, &eps).unwrap();
        assert!(z.bits_eq(&mu));
    }

    #[test]
    fn latent_arithmetic_example() {
        let mu = Tensor::filled(vec![8], 0.5);
        let sigma = Tensor::filled(vec![8], 2.0);
        let eps = Tensor::filled(vec![8], 1.0);
        let z = sample_latent(&mu, &sigma, &eps).unwrap();
        assert!(z.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn latent_preconditions() {
        let mu = Tensor::zeros(vec![8]);
        let bad_sigma = Tensor::zeros(vec![8]);
        let eps = Tensor::zeros(vec![8]);
        assert!(sample_latent(&mu, &bad_sigma, &eps).is_err());
        let short = Tensor::zeros(vec![7]);
        assert!(sample_latent(&mu, &Tensor::filled(vec![8], 1.0), &short).is_err());
    }

    #[test]
    fn reparameterization_statistics() {
        // 10k draws: per-coordinate sample mean within 4*sigma/sqrt(n) of
        // mu and sample std within 5% of sigma.
        let mu = Tensor::from_vec(vec![0.5, -1.2, 0.0, 2.0, -0.7, 1.1, 0.3, -0.4]);
        let sigma = Tensor::from_vec(vec![0.5, 1.0, 2.0, 0.1, 0.8, 1.5, 0.3, 0.9]);
        let n = 10_000;
        let mut rng = Rng::new(64);
        let mut sums = [0.0; 8];
        let mut sq_sums = [0.0; 8];
        for _ in 0..n {
            let eps = Tensor::from_vec(rng.normal_vec(8));
            let z = sample_latent(&mu, &sigma, &eps).unwrap();
            for (j, &v) in z.data().iter().enumerate() {
                sums[j] += v;
                sq_sums[j] += v * v;
            }
        }
        for j in 0..8 {
            let mean = sums[j] / n as f64;
            let var = sq_sums[j] / n as f64 - mean * mean;
            let std = var.sqrt();
            let mu_j = mu.data()[j];
            let sigma_j = sigma.data()[j];
            assert!(
                (mean - mu_j).abs() <= 4.0 * sigma_j / (n as f64).sqrt(),
                "coordinate {j}: mean {mean} vs mu {mu_j}"
            );
            assert!(
                (std / sigma_j - 1.0).abs() <= 0.05,
                "coordinate {j}: std {std} vs sigma {sigma_j}"
            );
        }
    }

    #[test]
    fn pipeline_yhat_is_normalized_and_consistent() {
        let (gen, clf) = tiny_nets();
        let ig = InputGeneratorNet::init(4, 1e-4, 300).unwrap();
        let x = one_hot(4, 1).unwrap();
        let eps = Tensor::from_vec(vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6, -0.7, 0.8]);
        let (sample, image, yhat) = pipeline_forward(&ig, &gen, &clf, &x, &eps).unwrap();
        assert!((yhat.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(image.shape(), &[8, 8]);
        // Reparameterization identity holds exactly, by construction.
        for j in 0..8 {
            let expect = sample.mu.data()[j] + sample.sigma.data()[j] * sample.epsilon.data()[j];
            assert_eq!(sample.z.data()[j].to_bits(), expect.to_bits());
        }
    }

    #[test]
    fn frozen_nets_receive_exactly_zero_gradient() {
        let (gen, clf) = tiny_nets();
        let ig = InputGeneratorNet::init(4, 1e-4, 300).unwrap();
        let x = one_hot(4, 2).unwrap();
        let eps = Tensor::from_vec(vec![0.5; 8]);

        let mut g = Graph::new();
        let ig_nodes = ig.insert(&mut g, true);
        let gen_nodes = gen.insert(&mut g, false);
        let clf_nodes = clf.insert(&mut g, false);
        let xn = g.constant(x.clone());
        let en = g.constant(eps);
        let pipe = pipeline_forward_on(
            &mut g, &ig, &ig_nodes, &gen, &gen_nodes, &clf, &clf_nodes, xn, en,
        )
        .unwrap();
        let loss = conditioning_loss_on(&mut g, &pipe, &x, 0.0).unwrap();
        g.backward(loss).unwrap();

        for t in gen_nodes.grads(&g).iter().chain(clf_nodes.grads(&g).iter()) {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
        // And the trainable side actually received signal.
        let total: f64 = ig_nodes
            .grads(&g)
            .iter()
            .flat_map(|t| t.data().iter().map(|v| v.abs()))
            .sum();
        assert!(total > 0.0);
    }

    #[test]
    fn composite_gradient_checks_out() {
        let (gen, clf) = tiny_nets();
        let ig = InputGeneratorNet::init(4, 1e-4, 301).unwrap();
        let x = one_hot(4, 0).unwrap();
        let mut rng = Rng::new(400);
        let eps = Tensor::from_vec(rng.normal_vec(8));
        let lambda = 0.05;

        let loss_at = |ps: &[Tensor]| -> Result<f64> {
            let candidate =
                InputGeneratorNet::from_params(ig.params.with_tensors(ps)?, 4, ig.sigma_min)?;
            let mut g = Graph::new();
            let ig_nodes = candidate.insert(&mut g, false);
            let gen_nodes = gen.insert(&mut g, false);
            let clf_nodes = clf.insert(&mut g, false);
            let xn = g.constant(x.clone());
            let en = g.constant(eps.clone());
            let pipe = pipeline_forward_on(
                &mut g, &candidate, &ig_nodes, &gen, &gen_nodes, &clf, &clf_nodes, xn, en,
            )?;
            let loss = conditioning_loss_on(&mut g, &pipe, &x, lambda)?;
            g.value(loss).item()
        };

        let mut g = Graph::new();
        let ig_nodes = ig.insert(&mut g, true);
        let gen_nodes = gen.insert(&mut g, false);
        let clf_nodes = clf.insert(&mut g, false);
        let xn = g.constant(x.clone());
        let en = g.constant(eps.clone());
        let pipe = pipeline_forward_on(
            &mut g, &ig, &ig_nodes, &gen, &gen_nodes, &clf, &clf_nodes, xn, en,
        )
        .unwrap();
        let loss = conditioning_loss_on(&mut g, &pipe, &x, lambda).unwrap();
        g.backward(loss).unwrap();
        let analytic = ig_nodes.grads(&g);

        let report = grad_check(loss_at, &ig.params.tensors(), &analytic, 1e-4, 1e-4).unwrap();
        assert!(report.pass, "max_rel_err = {}", report.max_rel_err);
    }

    #[test]
    fn loss_with_zero_lambda_is_the_cce_node() {
        let (gen, clf) = tiny_nets();
        let ig = InputGeneratorNet::init(4, 1e-4, 302).unwrap();
        let x = one_hot(4, 3).unwrap();
        let eps = Tensor::from_vec(vec![0.2; 8]);

        let build = |lambda: f64| -> (f64, f64) {
            let mut g = Graph::new();
            let ig_nodes = ig.insert(&mut g, false);
            let gen_nodes = gen.insert(&mut g, false);
            let clf_nodes = clf.insert(&mut g, false);
            let xn = g.constant(x.clone());
            let en = g.constant(eps.clone());
            let pipe = pipeline_forward_on(
                &mut g, &ig, &ig_nodes, &gen, &gen_nodes, &clf, &clf_nodes, xn, en,
            )
            .unwrap();
            let loss = conditioning_loss_on(&mut g, &pipe, &x, lambda).unwrap();
            let raw_cce = g.softmax_cce(pipe.logits, &x).unwrap();
            (
                g.value(loss).item().unwrap(),
                g.value(raw_cce).item().unwrap(),
            )
        };
        let (loss0, cce) = build(0.0);
        assert_eq!(loss0.to_bits(), cce.to_bits());
        let (loss_reg, cce2) = build(0.1);
        assert_ne!(loss_reg.to_bits(), cce2.to_bits());
    }

    #[test]
    fn value_level_loss_examples() {
        let uniform = Tensor::filled(vec![4], 0.25);
        let x = one_hot(4, 2).unwrap();
        let ones = Tensor::filled(vec![8], 1.0);
        let loss = conditioning_loss(&uniform, &x, &ones, 0.0).unwrap();
        assert!((loss - 4.0_f64.ln()).abs() < 1e-12);

        // Unit sigma: the regularizer contributes exactly zero.
        let with_reg = conditioning_loss(&uniform, &x, &ones, 0.1).unwrap();
        assert_eq!(with_reg.to_bits(), loss.to_bits());

        // sigma = e everywhere: mean log sigma is 1, so total = CCE - 0.1.
        let es = Tensor::filled(vec![8], std::f64::consts::E);
        let shifted = conditioning_loss(&uniform, &x, &es, 0.1).unwrap();
        assert!((shifted - (loss - 0.1)).abs() < 1e-12);

        // Domain errors.
        let bad_sigma = Tensor::filled(vec![8], -1.0);
        assert!(conditioning_loss(&uniform, &x, &bad_sigma, 0.1).is_err());
        assert!(conditioning_loss(&uniform, &x, &ones, -0.5).is_err());
    }

    #[test]
    fn conditional_sampling_is_seeded_and_validated() {
        let gen = GeneratorNet::init(100);
        let ig = InputGeneratorNet::init(4, 1e-4, 300).unwrap();
        let a = conditional_sample(&ig, &gen, 1, 3, 99).unwrap();
        let b = conditional_sample(&ig, &gen, 1, 3, 99).unwrap();
        assert!(a.bits_eq(&b));
        assert_eq!(a.shape(), &[3, 8, 8]);
        let c = conditional_sample(&ig, &gen, 1, 3, 100).unwrap();
        assert!(!a.bits_eq(&c));
        assert!(conditional_sample(&ig, &gen, 4, 3, 99).is_err());
        assert!(conditional_sample(&ig, &gen, 0, 0, 99).is_err());
    }

    #[test]
    fn training_leaves_frozen_checkpoints_byte_identical() {
        let (gen, clf) = tiny_nets();
        let gen_ckpt_before = Checkpoint::generator(&gen, CheckpointMeta::new(1, 0, "x"));
        let clf_ckpt_before = Checkpoint::classifier(&clf, CheckpointMeta::new(1, 0, "x")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let gp = dir.path().join("g.json");
        let cp = dir.path().join("c.json");
        crate::checkpoint::save_checkpoint(&gen_ckpt_before, &gp).unwrap();
        crate::checkpoint::save_checkpoint(&clf_ckpt_before, &cp).unwrap();
        let gen_bytes_before = std::fs::read(&gp).unwrap();
        let clf_bytes_before = std::fs::read(&cp).unwrap();

        let cfg = ConditioningConfig {
            epochs: 2,
            steps_per_epoch: 3,
            batch_size: 4,
            target_accuracy: 2.0,
            seed: 11,
            ..ConditioningConfig::default()
        };
        let out = train_input_generator(&cfg, &gen, &clf).unwrap();
        assert_eq!(out.epochs_run, 2);
        assert_eq!(out.history.epochs.len(), 2);

        crate::checkpoint::save_checkpoint(
            &Checkpoint::generator(&gen, CheckpointMeta::new(1, 0, "x")),
            &gp,
        )
        .unwrap();
        crate::checkpoint::save_checkpoint(
            &Checkpoint::classifier(&clf, CheckpointMeta::new(1, 0, "x")).unwrap(),
            &cp,
        )
        .unwrap();
        assert_eq!(gen_bytes_before, std::fs::read(&gp).unwrap());
        assert_eq!(clf_bytes_before, std::fs::read(&cp).unwrap());
    }

    #[test]
    fn ig_training_is_deterministic() {
        let (gen, clf) = tiny_nets();
        let cfg = ConditioningConfig {
            epochs: 2,
            steps_per_epoch: 3,
            batch_size: 4,
            target_accuracy: 2.0,
            seed: 12,
            ..ConditioningConfig::default()
        };
        let a = train_input_generator(&cfg, &gen, &clf).unwrap();
        let b = train_input_generator(&cfg, &gen, &clf).unwrap();
        for ((na, ta), (nb, tb)) in a
            .checkpoint
            .params
            .entries()
            .iter()
            .zip(b.checkpoint.params.entries())
        {
            assert_eq!(na, nb);
            assert!(ta.bits_eq(tb));
        }
        assert_eq!(a.history.to_csv(4), b.history.to_csv(4));
    }

    #[test]
    fn history_csv_has_per_class_sigma_columns() {
        let history = IgHistory {
            epochs: vec![IgEpoch {
                epoch: 0,
                loss: 1.0,
                frozen_clf_accuracy: 0.5,
                mean_sigma: vec![0.1, 0.2, 0.3, 0.4],
            }],
        };
        let csv = history.to_csv(4);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some(
                "epoch,loss,frozen_clf_accuracy,mean_sigma_class0,mean_sigma_class1,\
                 mean_sigma_class2,mean_sigma_class3"
            )
        );
        assert_eq!(lines.next(), Some("0,1,0.5,0.1,0.2,0.3,0.4"));
    }
}
