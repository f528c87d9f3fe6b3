//! MNIST-style datasets in the IDX container format.
//!
//! IDX files start with a big-endian magic word (`0x00000803` for images,
//! `0x00000801` for labels) followed by big-endian 32-bit dimensions and a
//! payload of unsigned bytes. Gzip-compressed files are detected by their
//! leading `1f 8b` bytes and decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoding::IntensityImage;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Maximum intensity of 8-bit IDX payloads.
pub const IDX_I_MAX: u16 = 255;

pub const MNIST_CLASSES: [&str; 10] = ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"];

pub const FASHION_CLASSES: [&str; 10] = [
    "T-shirt/top",
    "Trouser",
    "Pullover",
    "Dress",
    "Coat",
    "Sandal",
    "Shirt",
    "Sneaker",
    "Bag",
    "Ankle boot",
];

/// Reads a file, inflating it if it carries the gzip magic bytes.
pub fn read_maybe_gzip(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Header<'a> {
    dims: Vec<usize>,
    payload: &'a [u8],
}

fn parse_header(bytes: &[u8], magic: u32, ndims: usize) -> Result<Header<'_>> {
    let header_len = 4 * (1 + ndims);
    let too_short = |need: usize| {
        Error::Length(format!("IDX header needs {need} bytes, file has {}", bytes.len()))
    };
    if bytes.len() < 4 {
        return Err(too_short(header_len));
    }
    let word = |k: usize| u32::from_be_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    let observed = word(0);
    if observed != magic {
        return Err(Error::Format(format!(
            "bad IDX magic 0x{observed:08x}, expected 0x{magic:08x}"
        )));
    }
    if bytes.len() < header_len {
        return Err(too_short(header_len));
    }
    let dims: Vec<usize> = (1..=ndims).map(|k| word(k) as usize).collect();
    let expected: usize = dims.iter().product();
    let payload = &bytes[header_len..];
    if payload.len() != expected {
        return Err(Error::Length(format!(
            "IDX payload should hold {expected} bytes, found {}",
            payload.len()
        )));
    }
    Ok(Header { dims, payload })
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<IntensityImage>> {
    let header = parse_header(bytes, IMAGE_MAGIC, 3)?;
    let (rows, cols) = (header.dims[1], header.dims[2]);
    let size = rows * cols;
    if size == 0 {
        return Ok(Vec::new());
    }
    header
        .payload
        .chunks_exact(size)
        .map(|px| IntensityImage::from_u8(px, cols, rows))
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let header = parse_header(bytes, LABEL_MAGIC, 1)?;
    header
        .payload
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            if b > 9 {
                Err(Error::InputDomain(format!("label {k} is {b}, expected 0..=9")))
            } else {
                Ok(usize::from(b))
            }
        })
        .collect()
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<IntensityImage>> {
    parse_idx_images(&read_maybe_gzip(path)?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    parse_idx_labels(&read_maybe_gzip(path)?)
}

/// Serializes images to an uncompressed IDX image file. All images must share
/// one size and fit in 8 bits.
pub fn encode_idx_images(images: &[IntensityImage]) -> Result<Vec<u8>> {
    let (rows, cols) = images.first().map_or((0, 0), |img| (img.height(), img.width()));
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for word in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for img in images {
        if img.height() != rows || img.width() != cols {
            return Err(Error::Structure("IDX images must all have the same size".into()));
        }
        for &p in img.pixels() {
            let byte = u8::try_from(p)
                .map_err(|_| Error::InputDomain(format!("intensity {p} does not fit in a byte")))?;
            out.push(byte);
        }
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        out.push(u8::try_from(l).map_err(|_| Error::InputDomain(format!("label {l} does not fit in a byte")))?);
    }
    Ok(out)
}

/// Images paired with category labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: Vec<IntensityImage>,
    labels: Vec<usize>,
    num_classes: usize,
    class_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(
        images: Vec<IntensityImage>,
        labels: Vec<usize>,
        num_classes: usize,
        class_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Structure(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Config("dataset needs at least one class".into()));
        }
        if let Some(names) = &class_names {
            if names.len() != num_classes {
                return Err(Error::Structure(format!(
                    "{} class names for {num_classes} classes",
                    names.len()
                )));
            }
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InputDomain(format!("label {l} out of range for {num_classes} classes")));
        }
        if let Some(first) = images.first() {
            let dims = (first.width(), first.height(), first.i_max());
            if images.iter().any(|img| (img.width(), img.height(), img.i_max()) != dims) {
                return Err(Error::Structure("dataset images differ in size or intensity range".into()));
            }
        }
        Ok(Self { images, labels, num_classes, class_names })
    }

    pub fn images(&self) -> &[IntensityImage] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Pixels per image, or 0 for an empty dataset.
    pub fn input_size(&self) -> usize {
        self.images.first().map_or(0, IntensityImage::len)
    }

    /// The first `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
        }
    }

    /// Shuffles with `seed` and splits off `fraction` of the samples as a
    /// held-out set. Returns `(remaining, held_out)`.
    pub fn split_holdout(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Config(format!("held-out fraction {fraction} outside [0, 1)")));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let held = (self.len() as f64 * fraction).round() as usize;
        let pick = |idx: &[usize]| Self {
            images: idx.iter().map(|&k| self.images[k].clone()).collect(),
            labels: idx.iter().map(|&k| self.labels[k]).collect(),
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
        };
        Ok((pick(&order[held..]), pick(&order[..held])))
    }
}

/// Builds a ten-class dataset from IDX contents.
pub fn make_dataset(
    images: Vec<IntensityImage>,
    labels: Vec<usize>,
    class_names: Option<&[&str]>,
) -> Result<LabeledDataset> {
    let names = class_names.map(|n| n.iter().map(|s| s.to_string()).collect());
    LabeledDataset::new(images, labels, 10, names)
}

/// Loads an image file and its label file into a dataset.
pub fn load_dataset(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    class_names: Option<&[&str]>,
) -> Result<LabeledDataset> {
    make_dataset(load_idx_images(images)?, load_idx_labels(labels)?, class_names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn tiny_images(n: usize) -> Vec<IntensityImage> {
        (0..n)
            .map(|k| IntensityImage::from_u8(&[k as u8, 255, 0, 7, 9, 100], 3, 2).unwrap())
            .collect()
    }

    #[test]
    fn image_round_trip_is_byte_exact() {
        let images = tiny_images(4);
        let bytes = encode_idx_images(&images).unwrap();
        let parsed = parse_idx_images(&bytes).unwrap();
        assert_eq!(parsed, images);
        assert_eq!(encode_idx_images(&parsed).unwrap(), bytes);
        assert_eq!((parsed[0].width(), parsed[0].height()), (3, 2));
    }

    #[test]
    fn label_magic_rejected_for_images() {
        let bytes = encode_idx_labels(&[1, 2, 3]).unwrap();
        match parse_idx_images(&bytes) {
            Err(Error::Format(msg)) => assert!(msg.contains("0x00000801")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_length_error() {
        let mut bytes = encode_idx_images(&tiny_images(2)).unwrap();
        bytes.pop();
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Length(_))));
    }

    #[test]
    fn empty_label_file_is_length_error() {
        assert!(matches!(parse_idx_labels(&[]), Err(Error::Length(_))));
    }

    #[test]
    fn label_above_nine_is_domain_error() {
        let bytes = encode_idx_labels(&[3, 10]).unwrap();
        assert!(matches!(parse_idx_labels(&bytes), Err(Error::InputDomain(_))));
    }

    #[test]
    fn gzip_is_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let raw = encode_idx_labels(&[0, 9, 4, 4]).unwrap();
        let plain = dir.path().join("labels");
        let zipped = dir.path().join("labels.gz");
        fs::write(&plain, &raw).unwrap();
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&raw).unwrap();
        fs::write(&zipped, enc.finish().unwrap()).unwrap();
        assert_eq!(load_idx_labels(&plain).unwrap(), load_idx_labels(&zipped).unwrap());
        assert_eq!(load_idx_labels(&zipped).unwrap(), vec![0, 9, 4, 4]);
    }

    #[test]
    fn dataset_length_checks() {
        let ds = make_dataset(tiny_images(10), vec![1; 10], None).unwrap();
        assert_eq!(ds.len(), 10);
        assert!(matches!(make_dataset(tiny_images(10), vec![1; 9], None), Err(Error::Structure(_))));
    }

    #[test]
    fn fashion_names_attach() {
        let ds = make_dataset(tiny_images(2), vec![0, 9], Some(&FASHION_CLASSES)).unwrap();
        assert_eq!(ds.class_names().unwrap()[9], "Ankle boot");
    }

    #[test]
    fn holdout_split_partitions_samples() {
        let ds = make_dataset(tiny_images(20), (0..20).map(|k| k % 10).collect(), None).unwrap();
        let (rest, held) = ds.split_holdout(0.25, 3).unwrap();
        assert_eq!((rest.len(), held.len()), (15, 5));
        let (rest2, held2) = ds.split_holdout(0.25, 3).unwrap();
        assert_eq!((rest, held), (rest2, held2));
    }
}
