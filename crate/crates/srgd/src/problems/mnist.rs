//! MNIST-format dataset handling: IDX parsing, `[0,1]` normalization,
//! digit-pair filtering, and stratified subsetting.
//!
//! Real MNIST files are read from disk when paths are supplied; nothing is
//! ever downloaded. For environments without the original files,
//! [`ensure_synthetic_corpus`] writes a synthetic corpus with the same IDX
//! encoding, image shape, and per-class counts, so every pipeline stage
//! behaves identically on either source.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::rng::RandomStream;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
const SIDE: usize = 28;

/// Pixels per image in the standard corpus.
pub const PIXELS: usize = SIDE * SIDE;

/// Per-class sample counts of the real MNIST training split.
///
/// The digit-3 and digit-8 entries must sum to 11982, the size of the
/// binary-classification training subset.
const TRAIN_CLASS_COUNTS: [usize; 10] =
    [5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949];

/// Per-class sample counts of the real MNIST test split (3 + 8 = 1984).
const TEST_CLASS_COUNTS: [usize; 10] = [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009];

/// Fraction of synthetic samples whose image is drawn from a different
/// class than their label, giving models a realistic error floor.
const LABEL_NOISE: f64 = 0.06;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("file not found: {path}")]
    FileNotFound { path: PathBuf },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad IDX data in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

/// Which half of the corpus a [`Dataset`] came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// An immutable set of normalized images with integer labels.
///
/// Pixel values lie in `[0,1]`; labels lie in `0..=9` (or `{0,1}` after a
/// digit-pair filter).
#[derive(Clone, Debug)]
pub struct Dataset {
    images: Vec<f64>,
    labels: Vec<u8>,
    pixels: usize,
    split: Split,
}

impl Dataset {
    /// Builds a dataset from pre-normalized parts.
    ///
    /// Panics if the image buffer length is not `labels.len() * pixels`,
    /// if `pixels` is zero, or if any label exceeds 9; loaders perform
    /// checked construction, so a violation here is a caller bug.
    pub fn from_parts(images: Vec<f64>, pixels: usize, labels: Vec<u8>, split: Split) -> Self {
        assert!(pixels > 0, "pixels must be positive");
        assert_eq!(images.len(), labels.len() * pixels, "image buffer size mismatch");
        assert!(labels.iter().all(|&l| l <= 9), "labels must lie in 0..=9");
        Dataset {
            images,
            labels,
            pixels,
            split,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i * self.pixels..(i + 1) * self.pixels]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn images_flat(&self) -> &[f64] {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn class_counts(&self) -> [usize; 10] {
        let mut counts = [0usize; 10];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Loads one split from a pair of IDX files.
///
/// Pixels are normalized to `[0,1]` by dividing by 255. With
/// `subset = Some((a, b))` only digits `a` and `b` are kept and relabeled
/// `a -> 0`, `b -> 1`. An empty result is reported as a format error.
pub fn load_mnist(
    images_path: &Path,
    labels_path: &Path,
    split: Split,
    subset: Option<(u8, u8)>,
) -> Result<Dataset, DatasetError> {
    let (raw, pixels) = parse_idx_images(images_path)?;
    let labels = parse_idx_labels(labels_path)?;
    let n = raw.len() / pixels.max(1);
    if labels.len() != n {
        return Err(DatasetError::Format {
            path: labels_path.to_path_buf(),
            reason: format!("{} labels for {} images", labels.len(), n),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(DatasetError::Format {
            path: labels_path.to_path_buf(),
            reason: format!("label {bad} out of range 0..=9"),
        });
    }

    let mut images = Vec::new();
    let mut kept_labels = Vec::new();
    for i in 0..n {
        let label = match subset {
            None => labels[i],
            Some((a, _)) if labels[i] == a => 0,
            Some((_, b)) if labels[i] == b => 1,
            Some(_) => continue,
        };
        images.extend(raw[i * pixels..(i + 1) * pixels].iter().map(|&p| p as f64 / 255.0));
        kept_labels.push(label);
    }
    if kept_labels.is_empty() {
        return Err(DatasetError::Format {
            path: images_path.to_path_buf(),
            reason: "no samples after loading and filtering".to_string(),
        });
    }
    Ok(Dataset::from_parts(images, pixels, kept_labels, split))
}

/// Keeps a stratified prefix of `n` samples, preserving order.
///
/// Per-class quotas follow the class frequencies (largest-remainder
/// apportionment), and within each class the earliest samples win. With
/// `n >= len` the dataset is returned unchanged.
pub fn stratified_subset(ds: &Dataset, n: usize) -> Dataset {
    if n >= ds.len() {
        return ds.clone();
    }
    let counts = ds.class_counts();
    let total = ds.len();
    let mut quota = [0usize; 10];
    let mut remainder = [(0usize, 0usize); 10];
    for c in 0..10 {
        quota[c] = n * counts[c] / total;
        remainder[c] = (n * counts[c] % total, c);
    }
    let mut deficit = n - quota.iter().sum::<usize>();
    remainder.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, c) in remainder.iter() {
        if deficit == 0 {
            break;
        }
        if counts[c] > quota[c] {
            quota[c] += 1;
            deficit -= 1;
        }
    }

    let mut taken = [0usize; 10];
    let mut images = Vec::with_capacity(n * ds.pixels);
    let mut labels = Vec::with_capacity(n);
    for i in 0..ds.len() {
        let c = ds.labels[i] as usize;
        if taken[c] < quota[c] {
            taken[c] += 1;
            images.extend_from_slice(ds.image(i));
            labels.push(ds.labels[i]);
        }
    }
    Dataset::from_parts(images, ds.pixels, labels, ds.split)
}

/// Locations of the four IDX files of a corpus directory.
#[derive(Clone, Debug)]
pub struct DataPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl DataPaths {
    /// Standard MNIST distribution filenames under `dir` (uncompressed).
    pub fn from_dir(dir: &Path) -> Self {
        DataPaths {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }

    pub fn all_present(&self) -> bool {
        [
            &self.train_images,
            &self.train_labels,
            &self.test_images,
            &self.test_labels,
        ]
        .iter()
        .all(|p| p.is_file())
    }
}

/// Returns corpus paths under `dir`, synthesizing the files on first use.
///
/// The synthetic corpus mirrors the real one structurally: 60000/10000
/// samples with the real per-class counts (so the 3-vs-8 subsets contain
/// exactly 11982 and 1984 samples), 28x28 images, mostly-zero pixels.
/// Existing files are reused as-is, so a directory holding the real MNIST
/// files works unchanged.
pub fn ensure_synthetic_corpus(dir: &Path, seed: u64) -> Result<DataPaths, DatasetError> {
    let paths = DataPaths::from_dir(dir);
    if paths.all_present() {
        return Ok(paths);
    }
    write_synthetic_corpus(dir, seed, &TRAIN_CLASS_COUNTS, &TEST_CLASS_COUNTS)?;
    Ok(paths)
}

pub(crate) fn write_synthetic_corpus(
    dir: &Path,
    seed: u64,
    train_counts: &[usize; 10],
    test_counts: &[usize; 10],
) -> Result<DataPaths, DatasetError> {
    fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let paths = DataPaths::from_dir(dir);
    let stream = RandomStream::new(seed);
    let (images, labels) = synthesize_split(train_counts, &mut stream.fork(1));
    write_idx_images(&paths.train_images, &images, labels.len())?;
    write_idx_labels(&paths.train_labels, &labels)?;
    let (images, labels) = synthesize_split(test_counts, &mut stream.fork(2));
    write_idx_images(&paths.test_images, &images, labels.len())?;
    write_idx_labels(&paths.test_labels, &labels)?;
    Ok(paths)
}

/// Renders one shuffled split of class-prototype digits.
fn synthesize_split(counts: &[usize; 10], stream: &mut RandomStream) -> (Vec<u8>, Vec<u8>) {
    let n: usize = counts.iter().sum();
    let mut labels = Vec::with_capacity(n);
    for (class, &count) in counts.iter().enumerate() {
        labels.extend(std::iter::repeat(class as u8).take(count));
    }
    labels.shuffle(stream);

    let base = stream.derive();
    let mut images = Vec::with_capacity(n * PIXELS);
    for (i, &label) in labels.iter().enumerate() {
        let mut rng = base.fork(i as u64);
        let mut source = label as usize;
        if rng.next_uniform() < LABEL_NOISE {
            let mut other = (rng.next_uniform() * 9.0) as usize;
            if other >= source {
                other += 1;
            }
            source = other;
        }
        render_digit(source, &mut rng, &mut images);
    }
    (images, labels)
}

/// Fixed per-class blob layouts: (center x, center y, radius, amplitude).
fn prototypes() -> &'static [Vec<(f64, f64, f64, f64)>; 10] {
    static PROTOTYPES: OnceLock<[Vec<(f64, f64, f64, f64)>; 10]> = OnceLock::new();
    PROTOTYPES.get_or_init(|| {
        std::array::from_fn(|class| {
            let mut rng = RandomStream::new(7000 + class as u64);
            (0..4)
                .map(|_| {
                    let cx = 6.0 + 16.0 * rng.next_uniform();
                    let cy = 6.0 + 16.0 * rng.next_uniform();
                    let sigma = 1.5 + 0.9 * rng.next_uniform();
                    let amp = 0.7 + 0.3 * rng.next_uniform();
                    (cx, cy, sigma, amp)
                })
                .collect()
        })
    })
}

/// Draws the class's Gaussian blobs with per-sample jitter; faint pixels
/// are zeroed so images stay sparse like real digit scans.
fn render_digit(class: usize, rng: &mut RandomStream, out: &mut Vec<u8>) {
    let mut canvas = [0.0f64; PIXELS];
    for &(cx, cy, sigma, amp) in &prototypes()[class] {
        let x0 = cx + 3.0 * (rng.next_uniform() - 0.5);
        let y0 = cy + 3.0 * (rng.next_uniform() - 0.5);
        let s = sigma * (0.85 + 0.3 * rng.next_uniform());
        let a = amp * (0.8 + 0.4 * rng.next_uniform());
        let reach = (3.0 * s).ceil() as isize;
        let (px, py) = (x0.round() as isize, y0.round() as isize);
        let inv = 1.0 / (2.0 * s * s);
        for gy in (py - reach).max(0)..=(py + reach).min(SIDE as isize - 1) {
            for gx in (px - reach).max(0)..=(px + reach).min(SIDE as isize - 1) {
                let d2 = (gx as f64 - x0).powi(2) + (gy as f64 - y0).powi(2);
                canvas[gy as usize * SIDE + gx as usize] += a * (-d2 * inv).exp();
            }
        }
    }
    for v in canvas {
        let v = v.min(1.0);
        out.push(if v < 0.04 { 0 } else { (v * 255.0).round() as u8 });
    }
}

fn open_reader(path: &Path) -> Result<BufReader<File>, DatasetError> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == ErrorKind::NotFound => Err(DatasetError::FileNotFound {
            path: path.to_path_buf(),
        }),
        Err(source) => Err(DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}

fn be_u32(r: &mut impl Read, path: &Path) -> Result<u32, DatasetError> {
    let mut buf = [0u8; 4];
    read_exact_or_format(r, &mut buf, path)?;
    Ok(u32::from_be_bytes(buf))
}

fn read_exact_or_format(
    r: &mut impl Read,
    buf: &mut [u8],
    path: &Path,
) -> Result<(), DatasetError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            DatasetError::Format {
                path: path.to_path_buf(),
                reason: "truncated file".to_string(),
            }
        } else {
            DatasetError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })
}

/// Returns the raw pixel bytes and the per-image pixel count.
fn parse_idx_images(path: &Path) -> Result<(Vec<u8>, usize), DatasetError> {
    let mut r = open_reader(path)?;
    let magic = be_u32(&mut r, path)?;
    if magic != IMAGES_MAGIC {
        return Err(DatasetError::Format {
            path: path.to_path_buf(),
            reason: format!("magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        });
    }
    let n = be_u32(&mut r, path)? as usize;
    let rows = be_u32(&mut r, path)? as usize;
    let cols = be_u32(&mut r, path)? as usize;
    if rows == 0 || cols == 0 {
        return Err(DatasetError::Format {
            path: path.to_path_buf(),
            reason: format!("degenerate image shape {rows}x{cols}"),
        });
    }
    let mut raw = vec![0u8; n * rows * cols];
    read_exact_or_format(&mut r, &mut raw, path)?;
    Ok((raw, rows * cols))
}

fn parse_idx_labels(path: &Path) -> Result<Vec<u8>, DatasetError> {
    let mut r = open_reader(path)?;
    let magic = be_u32(&mut r, path)?;
    if magic != LABELS_MAGIC {
        return Err(DatasetError::Format {
            path: path.to_path_buf(),
            reason: format!("magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        });
    }
    let n = be_u32(&mut r, path)? as usize;
    let mut labels = vec![0u8; n];
    read_exact_or_format(&mut r, &mut labels, path)?;
    Ok(labels)
}

fn open_writer(path: &Path) -> Result<BufWriter<File>, DatasetError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_all(w: &mut impl Write, bytes: &[u8], path: &Path) -> Result<(), DatasetError> {
    w.write_all(bytes).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_idx_images(path: &Path, data: &[u8], n: usize) -> Result<(), DatasetError> {
    assert_eq!(data.len(), n * PIXELS);
    let mut w = open_writer(path)?;
    for field in [IMAGES_MAGIC, n as u32, SIDE as u32, SIDE as u32] {
        write_all(&mut w, &field.to_be_bytes(), path)?;
    }
    write_all(&mut w, data, path)
}

pub(crate) fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<(), DatasetError> {
    let mut w = open_writer(path)?;
    for field in [LABELS_MAGIC, labels.len() as u32] {
        write_all(&mut w, &field.to_be_bytes(), path)?;
    }
    write_all(&mut w, labels, path)
}
