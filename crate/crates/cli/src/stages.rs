//! One function per pipeline stage. Stages communicate only through files
//! in the workdir; each writes a manifest naming its inputs and outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use condgan_core::checkpoint::{load_checkpoint, save_checkpoint, sha256_hex};
use condgan_core::data::{load_dataset, make_blocks, save_dataset, Dataset};
use condgan_core::error::{Error, Result};
use condgan_core::eval::{
    classification_report, export_grid_ppm, features, frechet_distance, latent_diagnostics,
    predict_batch, ClassReport, FdResult, LatentDiagnostics,
};
use condgan_core::nets::{ClassifierNet, GeneratorNet, InputGeneratorNet};
use condgan_core::pretrain::{train_classifier, train_gan};
use condgan_core::steer::{conditional_sample, train_input_generator};
use condgan_core::tensor::Tensor;

use crate::config::Config;
use crate::manifest::write_manifest;

pub const DATASET: &str = "dataset.lsds";
pub const GENERATOR: &str = "generator.ckpt.json";
pub const DISCRIMINATOR: &str = "discriminator.ckpt.json";
pub const GAN_HISTORY: &str = "gan_history.csv";
pub const CLASSIFIER: &str = "classifier.ckpt.json";
pub const CLASSIFIER_HISTORY: &str = "classifier_history.csv";
pub const INPUT_GENERATOR: &str = "input_generator.ckpt.json";
pub const IG_HISTORY: &str = "ig_history.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
/// Samples per class in the exported grids, 8 per row.
pub const GRID_SAMPLES: usize = 64;
pub const GRID_COLS: usize = 8;

pub fn grid_name(class: usize) -> String {
    format!("grid_class{class}.ppm")
}

/// Everything the eval stage measures, serialized as report.json.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples_per_class: usize,
    /// Scored by the same frozen classifier the conditioning trained
    /// against.
    pub same_classifier: ClassReport,
    /// Scored by an independently seeded classifier as an
    /// overfitting-to-the-frozen-classifier diagnostic.
    pub oracle_seed: u64,
    pub oracle_val_accuracy: f64,
    pub oracle_classifier: ClassReport,
    /// Classifier-feature Frechet distance, real dataset vs conditional
    /// samples pooled over classes.
    pub fd_real_vs_conditional: FdResult,
    pub latent: LatentDiagnostics,
}

fn workdir(cfg: &Config) -> Result<PathBuf> {
    let dir = cfg.paths.workdir.clone();
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Missing artifacts are user errors that name the stage that makes them.
fn require(dir: &Path, name: &str, producer: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::Validation(format!(
            "{} not found in {}; run {producer} first",
            name,
            dir.display()
        )));
    }
    Ok(path)
}

/// Stable sub-seed for a named purpose, so stages never share RNG streams
/// with training just because the base seeds coincide.
fn derive_seed(base: u64, label: &str) -> u64 {
    let digest = sha256_hex(format!("{base}:{label}").as_bytes());
    u64::from_str_radix(&digest[..16], 16).expect("sha256 hex prefix parses")
}

fn load_generator(dir: &Path) -> Result<GeneratorNet> {
    load_checkpoint(&require(dir, GENERATOR, "train-gan")?)?.into_generator()
}

fn load_classifier(dir: &Path) -> Result<ClassifierNet> {
    load_checkpoint(&require(dir, CLASSIFIER, "train-classifier")?)?.into_classifier()
}

fn load_input_generator(dir: &Path) -> Result<InputGeneratorNet> {
    load_checkpoint(&require(dir, INPUT_GENERATOR, "train-ig")?)?.into_input_generator()
}

fn load_blocks(dir: &Path) -> Result<Dataset> {
    load_dataset(&require(dir, DATASET, "gen-data")?)
}

pub fn run_gen_data(cfg: &Config) -> Result<()> {
    let started = Instant::now();
    let dir = workdir(cfg)?;
    let ds = make_blocks(
        cfg.data.n_per_class,
        cfg.data.k,
        cfg.data.noise_sd,
        cfg.data.seed,
    )?;
    save_dataset(&ds, &dir.join(DATASET))?;
    write_manifest(
        &dir,
        "gen-data",
        &cfg.semantic_hash()?,
        cfg.data.seed,
        &[],
        &[DATASET],
        started,
    )?;
    println!(
        "gen-data: {} images ({} classes) -> {}",
        ds.len(),
        ds.k,
        dir.join(DATASET).display()
    );
    Ok(())
}

pub fn run_train_gan(cfg: &Config) -> Result<()> {
    let started = Instant::now();
    let dir = workdir(cfg)?;
    let ds = load_blocks(&dir)?;
    let out = train_gan(&ds, &cfg.gan)?;
    save_checkpoint(&out.generator, &dir.join(GENERATOR))?;
    save_checkpoint(&out.discriminator, &dir.join(DISCRIMINATOR))?;
    std::fs::write(dir.join(GAN_HISTORY), out.history.to_csv())?;
    write_manifest(
        &dir,
        "train-gan",
        &cfg.semantic_hash()?,
        cfg.gan.seed,
        &[DATASET],
        &[GENERATOR, DISCRIMINATOR, GAN_HISTORY],
        started,
    )?;
    println!(
        "train-gan: frechet probe {:.4} -> {:.4}, kept epoch {} of {}",
        out.fd_initial, out.fd_final, out.best_epoch, cfg.gan.epochs
    );
    Ok(())
}

pub fn run_train_classifier(cfg: &Config) -> Result<()> {
    let started = Instant::now();
    let dir = workdir(cfg)?;
    let ds = load_blocks(&dir)?;
    let out = train_classifier(&ds, &cfg.classifier)?;
    save_checkpoint(&out.checkpoint, &dir.join(CLASSIFIER))?;
    std::fs::write(dir.join(CLASSIFIER_HISTORY), out.history.to_csv())?;
    write_manifest(
        &dir,
        "train-classifier",
        &cfg.semantic_hash()?,
        cfg.classifier.seed,
        &[DATASET],
        &[CLASSIFIER, CLASSIFIER_HISTORY],
        started,
    )?;
    println!(
        "train-classifier: validation accuracy {:.4}",
        out.val_accuracy
    );
    Ok(())
}

pub fn run_train_ig(cfg: &Config) -> Result<()> {
    let started = Instant::now();
    let dir = workdir(cfg)?;
    let gen = load_generator(&dir)?;
    let clf = load_classifier(&dir)?;
    let out = train_input_generator(&cfg.steer, &gen, &clf)?;
    save_checkpoint(&out.checkpoint, &dir.join(INPUT_GENERATOR))?;
    std::fs::write(dir.join(IG_HISTORY), out.history.to_csv(clf.k))?;
    write_manifest(
        &dir,
        "train-ig",
        &cfg.semantic_hash()?,
        cfg.steer.seed,
        &[GENERATOR, CLASSIFIER],
        &[INPUT_GENERATOR, IG_HISTORY],
        started,
    )?;
    println!(
        "train-ig: frozen-classifier accuracy {:.4} after {} epochs",
        out.final_accuracy, out.epochs_run
    );
    Ok(())
}

/// Stacks per-class conditional draws into one [k*n, 8, 8] tensor plus the
/// matching label vector. Per-class seeds are derived from the steer seed.
fn conditional_batch(
    ig: &InputGeneratorNet,
    gen: &GeneratorNet,
    n_per_class: usize,
    base_seed: u64,
    label: &str,
) -> Result<(Tensor, Vec<u8>)> {
    let mut data = Vec::with_capacity(ig.k * n_per_class * 64);
    let mut labels = Vec::with_capacity(ig.k * n_per_class);
    for class in 0..ig.k {
        let seed = derive_seed(base_seed, &format!("{label}-class-{class}"));
        let batch = conditional_sample(ig, gen, class, n_per_class, seed)?;
        data.extend_from_slice(batch.data());
        labels.extend(std::iter::repeat_n(class as u8, n_per_class));
    }
    let images = Tensor::new(vec![ig.k * n_per_class, 8, 8], data)?;
    Ok((images, labels))
}

pub fn run_sample(cfg: &Config) -> Result<()> {
    let started = Instant::now();
    let dir = workdir(cfg)?;
    let gen = load_generator(&dir)?;
    let ig = load_input_generator(&dir)?;
    let mut outputs = Vec::new();
    for class in 0..ig.k {
        let seed = derive_seed(cfg.steer.seed, &format!("grid-class-{class}"));
        let batch = conditional_sample(&ig, &gen, class, GRID_SAMPLES, seed)?;
        let name = grid_name(class);
        export_grid_ppm(&batch, GRID_COLS, &dir.join(&name))?;
        outputs.push(name);
    }
    let output_refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_manifest(
        &dir,
        "sample",
        &cfg.semantic_hash()?,
        cfg.steer.seed,
        &[GENERATOR, INPUT_GENERATOR],
        &output_refs,
        started,
    )?;
    println!(
        "sample: wrote {} grids of {} images into {}",
        ig.k,
        GRID_SAMPLES,
        dir.display()
    );
    Ok(())
}

pub fn render_report_text(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "Conditional samples: {} per class, {} classes\n\n",
        report.n_samples_per_class, report.same_classifier.k
    ));
    out.push_str("Frozen-classifier report (the classifier trained against):\n");
    out.push_str(&report.same_classifier.render_text());
    out.push_str(&format!(
        "\nOracle-classifier report (independent seed {}, val accuracy {:.4}):\n",
        report.oracle_seed, report.oracle_val_accuracy
    ));
    out.push_str(&report.oracle_classifier.render_text());
    let fd = &report.fd_real_vs_conditional;
    out.push_str(&format!(
        "\nFeature-space Frechet distance, real vs conditional: {:.6} \
         (d={}, n_real={}, n_gen={})\n",
        fd.distance, fd.feature_dim, fd.n_real, fd.n_gen
    ));
    out.push_str("\nLatent diagnostics:\n");
    for class in 0..report.latent.k {
        out.push_str(&format!(
            "  class {class}: mean sigma {:.6}\n",
            report.latent.mean_sigma[class]
        ));
    }
    out.push_str("  pairwise |mu_a - mu_b|:\n");
    for a in 0..report.latent.k {
        let row: Vec<String> = report.latent.mu_distances[a]
            .iter()
            .map(|d| format!("{d:.4}"))
            .collect();
        out.push_str(&format!("    [{}]\n", row.join(", ")));
    }
    out
}

pub fn run_eval(cfg: &Config) -> Result<()> {
    let started = Instant::now();
    let dir = workdir(cfg)?;
    let ds = load_blocks(&dir)?;
    let gen = load_generator(&dir)?;
    let clf = load_classifier(&dir)?;
    let ig = load_input_generator(&dir)?;
    if ig.k != clf.k {
        return Err(Error::Validation(format!(
            "input generator has k={} but classifier has k={}",
            ig.k, clf.k
        )));
    }

    let n = cfg.eval.n_samples_per_class;
    let (images, y_true) = conditional_batch(&ig, &gen, n, cfg.steer.seed, "eval")?;

    let y_pred = predict_batch(&clf, &images)?;
    let same_classifier = classification_report(&y_true, &y_pred, clf.k)?;

    let mut oracle_cfg = cfg.classifier;
    oracle_cfg.seed = derive_seed(cfg.classifier.seed, "oracle-classifier");
    let oracle_out = train_classifier(&ds, &oracle_cfg)?;
    let oracle = oracle_out.checkpoint.clone().into_classifier()?;
    let oracle_pred = predict_batch(&oracle, &images)?;
    let oracle_classifier = classification_report(&y_true, &oracle_pred, clf.k)?;

    let real_features = features(&clf, &ds.images)?;
    let gen_features = features(&clf, &images)?;
    let fd_real_vs_conditional = frechet_distance(&real_features, &gen_features)?;

    let latent = latent_diagnostics(&ig)?;

    let report = EvalReport {
        n_samples_per_class: n,
        same_classifier,
        oracle_seed: oracle_cfg.seed,
        oracle_val_accuracy: oracle_out.val_accuracy,
        oracle_classifier,
        fd_real_vs_conditional,
        latent,
    };
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    std::fs::write(dir.join(REPORT_JSON), json)?;
    std::fs::write(dir.join(REPORT_TEXT), render_report_text(&report))?;
    write_manifest(
        &dir,
        "eval",
        &cfg.semantic_hash()?,
        cfg.steer.seed,
        &[DATASET, GENERATOR, CLASSIFIER, INPUT_GENERATOR],
        &[REPORT_JSON, REPORT_TEXT],
        started,
    )?;
    println!(
        "eval: same-classifier accuracy {:.4}, oracle accuracy {:.4}, feature FD {:.4}",
        report.same_classifier.accuracy,
        report.oracle_classifier.accuracy,
        report.fd_real_vs_conditional.distance
    );
    Ok(())
}

/// Read-only: renders the stored report to stdout and writes nothing.
pub fn run_report(cfg: &Config) -> Result<()> {
    let dir = cfg.paths.workdir.clone();
    let path = require(&dir, REPORT_JSON, "eval")?;
    let bytes = std::fs::read(&path)?;
    let report: EvalReport = serde_json::from_slice(&bytes)?;
    print!("{}", render_report_text(&report));

    println!("\nArtifacts:");
    for stage in [
        "gen-data",
        "train-gan",
        "train-classifier",
        "train-ig",
        "sample",
        "eval",
    ] {
        let manifest_path = dir.join(format!("manifest-{stage}.json"));
        if manifest_path.is_file() {
            let m = crate::manifest::load_manifest(&manifest_path)?;
            for out in &m.outputs {
                println!("  {stage}: {} ({})", out.name, &out.sha256[..12]);
            }
        }
    }
    Ok(())
}

pub fn run_all(cfg: &Config) -> Result<()> {
    run_gen_data(cfg)?;
    run_train_gan(cfg)?;
    run_train_classifier(cfg)?;
    run_train_ig(cfg)?;
    run_sample(cfg)?;
    run_eval(cfg)?;
    run_report(cfg)
}
