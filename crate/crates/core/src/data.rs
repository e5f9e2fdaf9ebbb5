//! Synthetic labeled image data: quadrant-block archetypes plus Gaussian
//! noise, deterministic splits, and a small binary on-disk format.
//!
//! Class `k`'s archetype is an 8x8 image with background 0.1 and a 4x4
//! block of 0.9 in quadrant `k` (row-major quadrant order: top-left,
//! top-right, bottom-left, bottom-right). The classes are linearly
//! separable by construction, so a conditioning failure downstream points
//! at the training code rather than the data.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Image side length. The on-disk format records it explicitly, but every
/// producer in this crate emits 8x8.
pub const IMG_SIDE: usize = 8;
/// Pixels per image.
pub const IMG_PIXELS: usize = IMG_SIDE * IMG_SIDE;
/// Most classes the quadrant layout supports.
pub const MAX_CLASSES: usize = 4;

const MAGIC: &[u8; 4] = b"LSDS";
const FORMAT_VERSION: u32 = 1;

/// A labeled image set. `images` has shape `[N, 8, 8]` with every pixel in
/// `[0, 1]`; `labels[i] < k`; `seed` and `noise_sd` record how the data was
/// generated (splits inherit them from their parent).
#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<u8>,
    pub k: usize,
    pub seed: u64,
    pub noise_sd: f64,
}

impl Dataset {
    pub fn new(
        images: Tensor,
        labels: Vec<u8>,
        k: usize,
        seed: u64,
        noise_sd: f64,
    ) -> Result<Self> {
        let shape = images.shape();
        if shape.len() != 3 || shape[1] != IMG_SIDE || shape[2] != IMG_SIDE {
            return Err(Error::Shape(format!(
                "dataset images must have shape [N, {IMG_SIDE}, {IMG_SIDE}], got {shape:?}"
            )));
        }
        if shape[0] != labels.len() {
            return Err(Error::Validation(format!(
                "dataset has {} images but {} labels",
                shape[0],
                labels.len()
            )));
        }
        if k == 0 {
            return Err(Error::Validation("dataset needs at least one class".into()));
        }
        if let Some(bad) = labels.iter().position(|&l| (l as usize) >= k) {
            return Err(Error::Validation(format!(
                "label {} at index {bad} is out of range for k={k}",
                labels[bad]
            )));
        }
        if let Some(bad) = images
            .data()
            .iter()
            .position(|&p| !(0.0..=1.0).contains(&p))
        {
            return Err(Error::Validation(format!(
                "pixel {bad} is {} which is outside [0, 1]",
                images.data()[bad]
            )));
        }
        Ok(Dataset {
            images,
            labels,
            k,
            seed,
            noise_sd,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy of image `i` as an `[8, 8]` tensor.
    pub fn image(&self, i: usize) -> Tensor {
        let data = self.images.data()[i * IMG_PIXELS..(i + 1) * IMG_PIXELS].to_vec();
        Tensor::new(vec![IMG_SIDE, IMG_SIDE], data).expect("image slice has fixed size")
    }
}

/// Noise-free class template: background 0.1, a 4x4 block of 0.9 in
/// quadrant `k`.
pub fn archetype(k: usize) -> Result<Tensor> {
    if k >= MAX_CLASSES {
        return Err(Error::Validation(format!(
            "archetype class {k} is out of range (quadrant layout supports 0..{MAX_CLASSES})"
        )));
    }
    let mut data = vec![0.1; IMG_PIXELS];
    let row0 = if k < 2 { 0 } else { 4 };
    let col0 = if k.is_multiple_of(2) { 0 } else { 4 };
    for r in row0..row0 + 4 {
        for c in col0..col0 + 4 {
            data[r * IMG_SIDE + c] = 0.9;
        }
    }
    Tensor::new(vec![IMG_SIDE, IMG_SIDE], data)
}

/// Generates `n_per_class * k` samples, class labels interleaved
/// round-robin (`labels[i] = i mod k`). Each sample is its class archetype
/// plus i.i.d. Gaussian noise with standard deviation `noise_sd`, clamped
/// to `[0, 1]`. Same arguments, same bits.
pub fn make_blocks(n_per_class: usize, k: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::Validation(
            "make_blocks needs n_per_class >= 1".into(),
        ));
    }
    if !(2..=MAX_CLASSES).contains(&k) {
        return Err(Error::Validation(format!(
            "make_blocks supports k in [2, {MAX_CLASSES}], got {k}"
        )));
    }
    if !noise_sd.is_finite() || noise_sd < 0.0 {
        return Err(Error::Validation(format!(
            "make_blocks needs a finite noise_sd >= 0, got {noise_sd}"
        )));
    }
    let templates: Vec<Tensor> = (0..k).map(archetype).collect::<Result<_>>()?;
    let n = n_per_class * k;
    let mut rng = Rng::new(seed);
    let mut pixels = Vec::with_capacity(n * IMG_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % k;
        labels.push(label as u8);
        for &base in templates[label].data() {
            let value = base + noise_sd * rng.normal();
            pixels.push(value.clamp(0.0, 1.0));
        }
    }
    Dataset::new(
        Tensor::new(vec![n, IMG_SIDE, IMG_SIDE], pixels)?,
        labels,
        k,
        seed,
        noise_sd,
    )
}

/// Train/val/test fractions plus the seed for the assignment permutation.
#[derive(Clone, Copy, Debug)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train", self.train),
            ("val", self.val),
            ("test", self.test),
        ] {
            if !f.is_finite() || f <= 0.0 {
                return Err(Error::Validation(format!(
                    "split fraction {name} must be positive, got {f}"
                )));
            }
        }
        let total = self.train + self.val + self.test;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "split fractions must sum to 1 within 1e-9, got {total}"
            )));
        }
        Ok(())
    }
}

/// Partitions `ds` by a seeded permutation into train/val/test of sizes
/// `round(N*train)`, `round(N*val)`, and the remainder. Splits keep the
/// parent's `k`, `seed`, and `noise_sd`.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    let n = ds.len();
    let n_train = (n as f64 * spec.train).round() as usize;
    let n_val = (n as f64 * spec.val).round() as usize;
    if n_train + n_val > n {
        return Err(Error::Validation(format!(
            "split sizes {n_train}+{n_val} exceed dataset size {n}"
        )));
    }
    let n_test = n - n_train - n_val;
    for (name, size) in [("train", n_train), ("val", n_val), ("test", n_test)] {
        if size == 0 {
            return Err(Error::Validation(format!(
                "{name} split would be empty for n={n} and the given fractions"
            )));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(spec.seed);
    rng.shuffle(&mut order);

    let take = |indices: &[usize]| -> Result<Dataset> {
        let mut pixels = Vec::with_capacity(indices.len() * IMG_PIXELS);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            pixels.extend_from_slice(&ds.images.data()[i * IMG_PIXELS..(i + 1) * IMG_PIXELS]);
            labels.push(ds.labels[i]);
        }
        Dataset::new(
            Tensor::new(vec![indices.len(), IMG_SIDE, IMG_SIDE], pixels)?,
            labels,
            ds.k,
            ds.seed,
            ds.noise_sd,
        )
    };

    Ok((
        take(&order[..n_train])?,
        take(&order[n_train..n_train + n_val])?,
        take(&order[n_train + n_val..])?,
    ))
}

// ── Binary format ───────────────────────────────────────────────────────
//
// Layout (all integers and floats little-endian):
//   offset  0: magic "LSDS"
//   offset  4: u32 version (currently 1)
//   offset  8: u32 N (sample count)
//   offset 12: u32 H (8)
//   offset 16: u32 W (8)
//   offset 20: u32 K (class count)
//   offset 24: f64 noise_sd
//   offset 32: u64 seed
//   offset 40: N*H*W f64 pixels
//   then     : N u8 labels

fn format_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        offset: Some(offset),
        message: message.into(),
    }
}

/// Serializes a dataset to the binary layout above.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let n = ds.len();
    let mut bytes = Vec::with_capacity(40 + n * IMG_PIXELS * 8 + n);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(n as u32).to_le_bytes());
    bytes.extend_from_slice(&(IMG_SIDE as u32).to_le_bytes());
    bytes.extend_from_slice(&(IMG_SIDE as u32).to_le_bytes());
    bytes.extend_from_slice(&(ds.k as u32).to_le_bytes());
    bytes.extend_from_slice(&ds.noise_sd.to_le_bytes());
    bytes.extend_from_slice(&ds.seed.to_le_bytes());
    for &p in ds.images.data() {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    bytes.extend_from_slice(&ds.labels);
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a dataset back, verifying magic, version, dimensions, and exact
/// payload length. Errors carry the byte offset of the offending field.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;

    let slice = |offset: usize, len: usize, what: &str| -> Result<&[u8]> {
        bytes.get(offset..offset + len).ok_or_else(|| {
            format_err(
                offset as u64,
                format!(
                    "file truncated reading {what}: expected {} bytes, file has {}",
                    offset + len,
                    bytes.len()
                ),
            )
        })
    };
    let read_u32 = |offset: usize, what: &str| -> Result<u32> {
        Ok(u32::from_le_bytes(
            slice(offset, 4, what)?.try_into().expect("4 bytes"),
        ))
    };

    let magic = slice(0, 4, "magic")?;
    if magic != MAGIC {
        return Err(format_err(
            0,
            format!("bad magic {magic:?}, expected \"LSDS\""),
        ));
    }
    let version = read_u32(4, "version")?;
    if version != FORMAT_VERSION {
        return Err(format_err(
            4,
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let n = read_u32(8, "sample count")? as usize;
    let h = read_u32(12, "height")? as usize;
    let w = read_u32(16, "width")? as usize;
    if h != IMG_SIDE {
        return Err(format_err(
            12,
            format!("unsupported height {h}, expected {IMG_SIDE}"),
        ));
    }
    if w != IMG_SIDE {
        return Err(format_err(
            16,
            format!("unsupported width {w}, expected {IMG_SIDE}"),
        ));
    }
    let k = read_u32(20, "class count")? as usize;
    let noise_sd = f64::from_le_bytes(slice(24, 8, "noise_sd")?.try_into().expect("8 bytes"));
    let seed = u64::from_le_bytes(slice(32, 8, "seed")?.try_into().expect("8 bytes"));

    let pixel_bytes = n * IMG_PIXELS * 8;
    let expected_len = 40 + pixel_bytes + n;
    if bytes.len() != expected_len {
        let offset = bytes.len().min(expected_len) as u64;
        return Err(format_err(
            offset,
            format!(
                "payload length mismatch: expected {expected_len} bytes for {n} samples, file has {}",
                bytes.len()
            ),
        ));
    }

    let raw = slice(40, pixel_bytes, "pixels")?;
    let mut pixels = Vec::with_capacity(n * IMG_PIXELS);
    for (i, chunk) in raw.chunks_exact(8).enumerate() {
        let p = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !(0.0..=1.0).contains(&p) {
            return Err(format_err(
                (40 + i * 8) as u64,
                format!("pixel {i} is {p} which is outside [0, 1]"),
            ));
        }
        pixels.push(p);
    }
    let labels = slice(40 + pixel_bytes, n, "labels")?.to_vec();
    if let Some(bad) = labels.iter().position(|&l| (l as usize) >= k) {
        return Err(format_err(
            (40 + pixel_bytes + bad) as u64,
            format!(
                "label {} at index {bad} is out of range for k={k}",
                labels[bad]
            ),
        ));
    }

    Dataset::new(
        Tensor::new(vec![n, IMG_SIDE, IMG_SIDE], pixels)?,
        labels,
        k,
        seed,
        noise_sd,
    )
}
