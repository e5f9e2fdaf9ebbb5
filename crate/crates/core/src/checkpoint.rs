//! Model checkpoints: a JSON envelope with base64-encoded little-endian
//! f64 parameter payloads. JSON keeps the metadata inspectable with any
//! text tool; the binary payload keeps round-trips bit-exact.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;
use crate::error::{Error, Result};
use crate::nets::{
    ClassifierNet, DiscriminatorNet, GeneratorNet, InputGeneratorNet, MlpSpec, Params,
};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of a config's JSON form, recorded in checkpoint metadata and run
/// manifests so artifacts can be traced back to their settings.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Generator,
    Classifier,
    Discriminator,
    InputGenerator,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Generator => "generator",
            ModelKind::Classifier => "classifier",
            ModelKind::Discriminator => "discriminator",
            ModelKind::InputGenerator => "input_generator",
        }
    }
}

/// Architecture record stored next to the parameters so a loader can
/// validate shapes before reconstructing a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchSpec {
    Mlp {
        widths: Vec<usize>,
        hidden: Activation,
        output: Option<Activation>,
    },
    InputGenerator {
        k: usize,
        latent_dim: usize,
        trunk_width: usize,
        sigma_min: f64,
    },
}

impl ArchSpec {
    fn mlp(spec: &MlpSpec) -> Self {
        ArchSpec::Mlp {
            widths: spec.widths.clone(),
            hidden: spec.hidden,
            output: spec.output,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epochs_trained: u32,
    pub created_by: String,
    pub config_hash: String,
}

impl CheckpointMeta {
    pub fn new(seed: u64, epochs_trained: u32, config_hash: impl Into<String>) -> Self {
        CheckpointMeta {
            seed,
            epochs_trained,
            created_by: format!("condgan-core/{}", env!("CARGO_PKG_VERSION")),
            config_hash: config_hash.into(),
        }
    }
}

/// A trained model ready to serialize, or freshly loaded and not yet
/// validated against a concrete network type. The `into_*` accessors do
/// the kind and shape checking.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model_kind: ModelKind,
    pub arch: ArchSpec,
    pub params: Params,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn generator(net: &GeneratorNet, meta: CheckpointMeta) -> Self {
        Checkpoint {
            model_kind: ModelKind::Generator,
            arch: ArchSpec::mlp(&GeneratorNet::spec()),
            params: net.params.clone(),
            meta,
        }
    }

    pub fn classifier(net: &ClassifierNet, meta: CheckpointMeta) -> Result<Self> {
        Ok(Checkpoint {
            model_kind: ModelKind::Classifier,
            arch: ArchSpec::mlp(&ClassifierNet::spec(net.k)?),
            params: net.params.clone(),
            meta,
        })
    }

    pub fn discriminator(net: &DiscriminatorNet, meta: CheckpointMeta) -> Self {
        Checkpoint {
            model_kind: ModelKind::Discriminator,
            arch: ArchSpec::mlp(&DiscriminatorNet::spec()),
            params: net.params.clone(),
            meta,
        }
    }

    pub fn input_generator(net: &InputGeneratorNet, meta: CheckpointMeta) -> Self {
        Checkpoint {
            model_kind: ModelKind::InputGenerator,
            arch: ArchSpec::InputGenerator {
                k: net.k,
                latent_dim: crate::nets::LATENT_DIM,
                trunk_width: 32,
                sigma_min: net.sigma_min,
            },
            params: net.params.clone(),
            meta,
        }
    }

    fn expect_kind(&self, want: ModelKind) -> Result<()> {
        if self.model_kind != want {
            return Err(Error::Validation(format!(
                "checkpoint holds a {} where a {} was expected",
                self.model_kind.name(),
                want.name()
            )));
        }
        Ok(())
    }

    fn expect_mlp_arch(&self, want: &MlpSpec) -> Result<()> {
        match &self.arch {
            ArchSpec::Mlp {
                widths,
                hidden,
                output,
            } if widths == &want.widths && *hidden == want.hidden && *output == want.output => {
                Ok(())
            }
            other => Err(Error::Validation(format!(
                "checkpoint architecture {other:?} does not match the expected {want:?}"
            ))),
        }
    }

    pub fn into_generator(self) -> Result<GeneratorNet> {
        self.expect_kind(ModelKind::Generator)?;
        self.expect_mlp_arch(&GeneratorNet::spec())?;
        GeneratorNet::from_params(self.params)
    }

    pub fn into_classifier(self) -> Result<ClassifierNet> {
        self.expect_kind(ModelKind::Classifier)?;
        let k = match &self.arch {
            ArchSpec::Mlp { widths, .. } if widths.len() == 4 => *widths.last().unwrap(),
            other => {
                return Err(Error::Validation(format!(
                    "checkpoint architecture {other:?} is not a classifier layout"
                )))
            }
        };
        self.expect_mlp_arch(&ClassifierNet::spec(k)?)?;
        ClassifierNet::from_params(self.params, k)
    }

    pub fn into_discriminator(self) -> Result<DiscriminatorNet> {
        self.expect_kind(ModelKind::Discriminator)?;
        self.expect_mlp_arch(&DiscriminatorNet::spec())?;
        DiscriminatorNet::from_params(self.params)
    }

    pub fn into_input_generator(self) -> Result<InputGeneratorNet> {
        self.expect_kind(ModelKind::InputGenerator)?;
        match self.arch {
            ArchSpec::InputGenerator {
                k,
                latent_dim,
                trunk_width,
                sigma_min,
            } => {
                if latent_dim != crate::nets::LATENT_DIM || trunk_width != 32 {
                    return Err(Error::Validation(format!(
                        "input generator checkpoint with latent_dim={latent_dim}, \
                         trunk_width={trunk_width} is not supported (expected 8 and 32)"
                    )));
                }
                InputGeneratorNet::from_params(self.params, k, sigma_min)
            }
            other => Err(Error::Validation(format!(
                "checkpoint architecture {other:?} is not an input generator layout"
            ))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data_b64: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    model_kind: ModelKind,
    arch: ArchSpec,
    params: Vec<ParamRecord>,
    meta: CheckpointMeta,
}

fn encode_tensor(t: &Tensor) -> String {
    let mut bytes = Vec::with_capacity(t.numel() * 8);
    for &x in t.data() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode_tensor(record: &ParamRecord) -> Result<Tensor> {
    let bytes = B64.decode(&record.data_b64).map_err(|e| Error::Format {
        offset: None,
        message: format!(
            "parameter `{}` has corrupt base64 payload: {e}",
            record.name
        ),
    })?;
    let expected: usize = record.shape.iter().product::<usize>() * 8;
    if bytes.len() != expected {
        return Err(Error::Format {
            offset: None,
            message: format!(
                "parameter `{}` payload is {} bytes but shape {:?} needs {expected}",
                record.name,
                bytes.len(),
                record.shape
            ),
        });
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if let Some(bad) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::Format {
            offset: None,
            message: format!(
                "parameter `{}` value {bad} is not finite ({})",
                record.name, data[bad]
            ),
        });
    }
    Tensor::new(record.shape.clone(), data)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let file = CheckpointFile {
        format_version: CHECKPOINT_VERSION,
        model_kind: ckpt.model_kind,
        arch: ckpt.arch.clone(),
        params: ckpt
            .params
            .entries()
            .iter()
            .map(|(name, t)| ParamRecord {
                name: name.clone(),
                shape: t.shape().to_vec(),
                data_b64: encode_tensor(t),
            })
            .collect(),
        meta: ckpt.meta.clone(),
    };
    let json = serde_json::to_vec_pretty(&file)?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let file: CheckpointFile = serde_json::from_slice(&bytes)?;
    if file.format_version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            offset: None,
            message: format!(
                "unsupported checkpoint format_version {}, expected {CHECKPOINT_VERSION}",
                file.format_version
            ),
        });
    }
    let mut params = Params::new();
    for record in &file.params {
        params.push(record.name.clone(), decode_tensor(record)?)?;
    }
    Ok(Checkpoint {
        model_kind: file.model_kind,
        arch: file.arch,
        params,
        meta: file.meta,
    })
}
