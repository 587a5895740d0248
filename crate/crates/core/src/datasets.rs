//! Dataset ingestion and generation: IDX files, synthetic domain pairs with
//! controllable class imbalance, channel adapters and deterministic
//! stratified splits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Images plus class labels. Images are N×C×H×W with pixel values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledDataset {
    images: Tensor,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabelledDataset {
    pub fn new(images: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::InvalidArgument(format!(
                "images must be N×C×H×W, got shape {:?}",
                images.shape()
            )));
        }
        let n = images.shape()[0];
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != n {
            return Err(Error::CountMismatch {
                images: n,
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: class_count,
            });
        }
        if images.data().iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidArgument(
                "pixel values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Per-sample image shape as (channels, height, width).
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    /// Pixels of sample `index` as a flat C·H·W slice.
    pub fn sample_pixels(&self, index: usize) -> &[f64] {
        let stride = self.sample_stride();
        &self.images.data()[index * stride..(index + 1) * stride]
    }

    /// Copy of sample `index` as a C×H×W tensor.
    pub fn sample(&self, index: usize) -> Tensor {
        let [c, h, w] = self.image_shape();
        Tensor::new(vec![c, h, w], self.sample_pixels(index).to_vec())
            .expect("sample slice length matches image shape")
    }

    fn sample_stride(&self) -> usize {
        let [c, h, w] = self.image_shape();
        c * h * w
    }

    /// New dataset containing the given samples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let stride = self.sample_stride();
        let mut data = Vec::with_capacity(indices.len() * stride);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.sample_pixels(i));
            labels.push(self.labels[i]);
        }
        let [c, h, w] = self.image_shape();
        let images = Tensor::new(vec![indices.len(), c, h, w], data)?;
        Self::new(images, labels, self.class_count)
    }

    /// Per-class sample counts, indexed by class.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0usize; self.class_count];
        for &l in &self.labels {
            hist[l] += 1;
        }
        hist
    }
}

// ---------------------------------------------------------------------------
// IDX binary format
// ---------------------------------------------------------------------------

const IDX_DTYPE_U8: u8 = 0x08;

fn file_io(path: &Path, source: std::io::Error) -> Error {
    Error::FileIo {
        path: path.display().to_string(),
        source,
    }
}

fn read_idx_u8(path: &Path, expect_ndim: u8) -> Result<(Vec<usize>, Vec<u8>)> {
    let file = File::open(path).map_err(|e| file_io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(|e| file_io(path, e))?;
    if magic[0] != 0 || magic[1] != 0 || magic[2] != IDX_DTYPE_U8 {
        return Err(Error::IdxBadMagic {
            path: path.display().to_string(),
            found: u32::from_be_bytes(magic),
        });
    }
    let ndim = magic[3];
    if ndim != expect_ndim {
        return Err(Error::IdxDimensionMismatch {
            path: path.display().to_string(),
            detail: format!("expected {expect_ndim} dimensions, header declares {ndim}"),
        });
    }
    let mut dims = Vec::with_capacity(ndim as usize);
    for _ in 0..ndim {
        let mut b = [0u8; 4];
        reader.read_exact(&mut b).map_err(|e| file_io(path, e))?;
        dims.push(u32::from_be_bytes(b) as usize);
    }
    let expected: usize = dims.iter().product();
    let mut payload = Vec::with_capacity(expected);
    reader
        .read_to_end(&mut payload)
        .map_err(|e| file_io(path, e))?;
    if payload.len() != expected {
        return Err(Error::IdxTruncated {
            path: path.display().to_string(),
            expected,
            actual: payload.len(),
        });
    }
    Ok((dims, payload))
}

/// Load an images/labels IDX pair: images ndim 3 (N,H,W), labels ndim 1.
///
/// Pixel bytes are scaled to [0, 1] by dividing by 255; the channel axis is
/// added so images come out N×1×H×W. The class count is `max(label) + 1`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabelledDataset> {
    let (img_dims, img_bytes) = read_idx_u8(images_path, 3)?;
    let (lbl_dims, lbl_bytes) = read_idx_u8(labels_path, 1)?;
    let (n, h, w) = (img_dims[0], img_dims[1], img_dims[2]);
    if lbl_dims[0] != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: lbl_dims[0],
        });
    }
    let data: Vec<f64> = img_bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels: Vec<usize> = lbl_bytes.iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().copied().max().map_or(0, |m| m + 1);
    let images = Tensor::new(vec![n, 1, h, w], data)?;
    LabelledDataset::new(images, labels, class_count)
}

/// Write a single-channel dataset as an images/labels IDX pair.
///
/// Pixels are quantized to bytes with `round(p * 255)`; labels must fit u8.
pub fn save_idx(ds: &LabelledDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let [c, h, w] = ds.image_shape();
    if c != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            actual: c,
        });
    }
    if ds.class_count() > 256 {
        return Err(Error::InvalidArgument(
            "IDX labels are bytes; class count exceeds 256".into(),
        ));
    }
    let n = ds.len();
    let img_file = File::create(images_path).map_err(|e| file_io(images_path, e))?;
    let mut iw = BufWriter::new(img_file);
    iw.write_all(&[0, 0, IDX_DTYPE_U8, 3])
        .map_err(|e| file_io(images_path, e))?;
    for dim in [n, h, w] {
        iw.write_all(&(dim as u32).to_be_bytes())
            .map_err(|e| file_io(images_path, e))?;
    }
    let bytes: Vec<u8> = ds
        .images()
        .data()
        .iter()
        .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    iw.write_all(&bytes).map_err(|e| file_io(images_path, e))?;
    iw.flush().map_err(|e| file_io(images_path, e))?;

    let lbl_file = File::create(labels_path).map_err(|e| file_io(labels_path, e))?;
    let mut lw = BufWriter::new(lbl_file);
    lw.write_all(&[0, 0, IDX_DTYPE_U8, 1])
        .map_err(|e| file_io(labels_path, e))?;
    lw.write_all(&(n as u32).to_be_bytes())
        .map_err(|e| file_io(labels_path, e))?;
    let lbl_bytes: Vec<u8> = ds.labels().iter().map(|&l| l as u8).collect();
    lw.write_all(&lbl_bytes).map_err(|e| file_io(labels_path, e))?;
    lw.flush().map_err(|e| file_io(labels_path, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic domain pairs
// ---------------------------------------------------------------------------

/// Geometric pattern drawn for one class of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Square,
    HollowSquare,
    Circle,
    Cross,
    HorizontalStripes,
    VerticalStripes,
    Diagonal,
    Checker,
}

impl Pattern {
    pub const ALL: [Pattern; 8] = [
        Pattern::Square,
        Pattern::HollowSquare,
        Pattern::Circle,
        Pattern::Cross,
        Pattern::HorizontalStripes,
        Pattern::VerticalStripes,
        Pattern::Diagonal,
        Pattern::Checker,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Pattern::Square => "square",
            Pattern::HollowSquare => "hollow-square",
            Pattern::Circle => "circle",
            Pattern::Cross => "cross",
            Pattern::HorizontalStripes => "hstripes",
            Pattern::VerticalStripes => "vstripes",
            Pattern::Diagonal => "diagonal",
            Pattern::Checker => "checker",
        }
    }

    pub fn from_name(name: &str) -> Option<Pattern> {
        Pattern::ALL.iter().copied().find(|p| p.name() == name)
    }
}

/// Recipe for one synthetic dataset; a (primary, target) pair is produced by
/// two specs whose `domain_shift` values differ.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub class_count: usize,
    /// Per-class sample counts; imbalance is expressed directly here.
    pub samples_per_class: Vec<usize>,
    pub image_size: usize,
    pub pattern_family: Vec<Pattern>,
    pub noise_level: f64,
    /// 0 = source appearance, 1 = fully morphed appearance (shifted position,
    /// dimmer strokes, thicker features).
    pub domain_shift: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::InvalidArgument(
                "synthetic spec needs at least 2 classes".into(),
            ));
        }
        if self.samples_per_class.len() != self.class_count
            || self.samples_per_class.iter().any(|&n| n == 0)
        {
            return Err(Error::InvalidArgument(
                "samples_per_class must list one positive count per class".into(),
            ));
        }
        if self.image_size < 8 {
            return Err(Error::InvalidArgument(
                "synthetic images must be at least 8×8".into(),
            ));
        }
        if self.pattern_family.is_empty() {
            return Err(Error::InvalidArgument("pattern family is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_level) || !(0.0..=1.0).contains(&self.domain_shift) {
            return Err(Error::InvalidArgument(
                "noise_level and domain_shift must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

fn draw_pattern(
    canvas: &mut [f64],
    size: usize,
    pattern: Pattern,
    cx: i64,
    cy: i64,
    radius: i64,
    thickness: i64,
    intensity: f64,
    phase: i64,
) {
    let s = size as i64;
    let stripe = (s / 6).max(2);
    for y in 0..s {
        for x in 0..s {
            let dx = x - cx;
            let dy = y - cy;
            let on = match pattern {
                Pattern::Square => dx.abs() <= radius && dy.abs() <= radius,
                Pattern::HollowSquare => {
                    let outer = dx.abs() <= radius && dy.abs() <= radius;
                    let inner =
                        dx.abs() <= radius - thickness - 1 && dy.abs() <= radius - thickness - 1;
                    outer && !inner
                }
                Pattern::Circle => dx * dx + dy * dy <= radius * radius,
                Pattern::Cross => {
                    (dx.abs() <= thickness && dy.abs() <= radius)
                        || (dy.abs() <= thickness && dx.abs() <= radius)
                }
                Pattern::HorizontalStripes => (y + phase).rem_euclid(2 * stripe) < stripe,
                Pattern::VerticalStripes => (x + phase).rem_euclid(2 * stripe) < stripe,
                Pattern::Diagonal => (x + y + phase).rem_euclid(2 * stripe) < stripe,
                Pattern::Checker => {
                    ((x + phase) / stripe + (y + phase) / stripe).rem_euclid(2) == 0
                }
            };
            if on {
                canvas[(y * s + x) as usize] = intensity;
            }
        }
    }
}

/// Generate one synthetic dataset; a pure function of the spec.
pub fn synthesize(spec: &SyntheticSpec) -> Result<LabelledDataset> {
    spec.validate()?;
    let s = spec.image_size;
    let shift = spec.domain_shift;
    let total: usize = spec.samples_per_class.iter().sum();
    let mut data = Vec::with_capacity(total * s * s);
    let mut labels = Vec::with_capacity(total);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Appearance morph controlled by domain_shift.
    let offset = (shift * s as f64 / 5.0).round() as i64;
    let intensity = 1.0 - 0.35 * shift;
    let thickness = 1 + (shift * 1.5).round() as i64;
    let jitter = (s as i64 / 10).max(1);

    for (class, &count) in spec.samples_per_class.iter().enumerate() {
        let pattern = spec.pattern_family[class % spec.pattern_family.len()];
        for _ in 0..count {
            let mut canvas = vec![0.0f64; s * s];
            let dx = rng.gen_range(-jitter..=jitter);
            let dy = rng.gen_range(-jitter..=jitter);
            let dr = rng.gen_range(-1..=1);
            let phase = rng.gen_range(0..s as i64);
            let cx = s as i64 / 2 + dx + offset;
            let cy = s as i64 / 2 + dy + offset;
            let radius = (s as i64 / 4 + dr).max(2);
            draw_pattern(
                &mut canvas, s, pattern, cx, cy, radius, thickness, intensity, phase,
            );
            for p in &mut canvas {
                let noise = (rng.gen::<f64>() - 0.5) * spec.noise_level;
                *p = (*p + noise).clamp(0.0, 1.0);
            }
            data.extend_from_slice(&canvas);
            labels.push(class);
        }
    }
    let images = Tensor::new(vec![total, 1, s, s], data)?;
    LabelledDataset::new(images, labels, spec.class_count)
}

/// Generate a (primary, target) domain pair from two specs.
pub fn synthesize_pair(
    primary: &SyntheticSpec,
    target: &SyntheticSpec,
) -> Result<(LabelledDataset, LabelledDataset)> {
    Ok((synthesize(primary)?, synthesize(target)?))
}

// ---------------------------------------------------------------------------
// Channel adapters and resizing
// ---------------------------------------------------------------------------

/// Repeat the gray channel three times to make an RGB-like representation.
pub fn gray_to_rgb(ds: &LabelledDataset) -> Result<LabelledDataset> {
    let [c, h, w] = ds.image_shape();
    if c != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            actual: c,
        });
    }
    let n = ds.len();
    let mut data = Vec::with_capacity(n * 3 * h * w);
    for i in 0..n {
        let px = ds.sample_pixels(i);
        for _ in 0..3 {
            data.extend_from_slice(px);
        }
    }
    let images = Tensor::new(vec![n, 3, h, w], data)?;
    LabelledDataset::new(images, ds.labels().to_vec(), ds.class_count())
}

/// Collapse RGB channels to a single gray channel via the unweighted mean.
pub fn rgb_to_gray(ds: &LabelledDataset) -> Result<LabelledDataset> {
    let [c, h, w] = ds.image_shape();
    if c != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            actual: c,
        });
    }
    let n = ds.len();
    let plane = h * w;
    let mut data = Vec::with_capacity(n * plane);
    for i in 0..n {
        let px = ds.sample_pixels(i);
        for p in 0..plane {
            data.push((px[p] + px[plane + p] + px[2 * plane + p]) / 3.0);
        }
    }
    let images = Tensor::new(vec![n, 1, h, w], data)?;
    LabelledDataset::new(images, ds.labels().to_vec(), ds.class_count())
}

/// Center pad (with zeros) or crop every image to `height`×`width`.
pub fn resize_center(ds: &LabelledDataset, height: usize, width: usize) -> Result<LabelledDataset> {
    let [c, h, w] = ds.image_shape();
    if h == height && w == width {
        return Ok(ds.clone());
    }
    let n = ds.len();
    let mut data = vec![0.0f64; n * c * height * width];
    // Top-left corner of the overlap region in source and destination.
    let copy_h = h.min(height);
    let copy_w = w.min(width);
    let src_y0 = (h - copy_h) / 2;
    let src_x0 = (w - copy_w) / 2;
    let dst_y0 = (height - copy_h) / 2;
    let dst_x0 = (width - copy_w) / 2;
    for i in 0..n {
        let px = ds.sample_pixels(i);
        for ch in 0..c {
            for y in 0..copy_h {
                let src = ch * h * w + (src_y0 + y) * w + src_x0;
                let dst =
                    i * c * height * width + ch * height * width + (dst_y0 + y) * width + dst_x0;
                data[dst..dst + copy_w].copy_from_slice(&px[src..src + copy_w]);
            }
        }
    }
    let images = Tensor::new(vec![n, c, height, width], data)?;
    LabelledDataset::new(images, ds.labels().to_vec(), ds.class_count())
}

/// Concatenate two datasets with identical image shapes and class counts.
pub fn concat(a: &LabelledDataset, b: &LabelledDataset) -> Result<LabelledDataset> {
    if a.image_shape() != b.image_shape() {
        return Err(Error::InvalidArgument(format!(
            "cannot concatenate image shapes {:?} and {:?}",
            a.image_shape(),
            b.image_shape()
        )));
    }
    if a.class_count() != b.class_count() {
        return Err(Error::ClassCountMismatch {
            network: a.class_count(),
            dataset: b.class_count(),
        });
    }
    let [c, h, w] = a.image_shape();
    let mut data = Vec::with_capacity((a.len() + b.len()) * c * h * w);
    data.extend_from_slice(a.images().data());
    data.extend_from_slice(b.images().data());
    let mut labels = a.labels().to_vec();
    labels.extend_from_slice(b.labels());
    let images = Tensor::new(vec![a.len() + b.len(), c, h, w], data)?;
    LabelledDataset::new(images, labels, a.class_count())
}

// ---------------------------------------------------------------------------
// Stratified splitting
// ---------------------------------------------------------------------------

/// The three parts of a stratified split; parts allocated zero samples are
/// `None`.
#[derive(Debug, Clone)]
pub struct SplitSets {
    pub train: Option<LabelledDataset>,
    pub validation: Option<LabelledDataset>,
    pub test: Option<LabelledDataset>,
}

/// Stratified train/validation/test split.
///
/// Per-class proportions are preserved within ±1 sample (largest-remainder
/// allocation); partitions are disjoint and exhaustive, deterministic per
/// seed.
pub fn split(ds: &LabelledDataset, fractions: [f64; 3], seed: u64) -> Result<SplitSets> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|&f| f < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadFractions(fractions.to_vec()));
    }
    let parts = fractions.iter().filter(|&&f| f > 0.0).count();
    let hist = ds.class_histogram();
    for (class, &n) in hist.iter().enumerate() {
        if n > 0 && n < parts {
            return Err(Error::SplitTooSmall {
                class,
                parts,
                available: n,
            });
        }
    }

    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    for (i, &l) in ds.labels().iter().enumerate() {
        per_class[l].push(i);
    }

    let mut buckets: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (class, indices) in per_class.iter_mut().enumerate() {
        if indices.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (class as u64).wrapping_mul(0x9E37_79B9));
        indices.shuffle(&mut rng);
        let n = indices.len();
        // Largest-remainder allocation of n samples over the three parts.
        let targets: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
        let mut counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
        let mut leftover = n - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let ra = targets[a] - targets[a].floor();
            let rb = targets[b] - targets[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &part in order.iter().cycle() {
            if leftover == 0 {
                break;
            }
            if fractions[part] > 0.0 {
                counts[part] += 1;
                leftover -= 1;
            }
        }
        let mut cursor = 0;
        for part in 0..3 {
            buckets[part].extend_from_slice(&indices[cursor..cursor + counts[part]]);
            cursor += counts[part];
        }
    }

    let take = |indices: &Vec<usize>| -> Result<Option<LabelledDataset>> {
        if indices.is_empty() {
            Ok(None)
        } else {
            ds.subset(indices).map(Some)
        }
    };
    Ok(SplitSets {
        train: take(&buckets[0])?,
        validation: take(&buckets[1])?,
        test: take(&buckets[2])?,
    })
}
