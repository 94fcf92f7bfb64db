//! BreastMNIST ingestion: NPY-in-ZIP archive loading, pixel normalization
//! and seeded batching.
//!
//! Labels follow the MedMNIST coding for BreastMNIST: 0 = malignant,
//! 1 = normal/benign.

pub mod npy;

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::models::IMAGE_SIDE;
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;
use npy::U8Array;

const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// One split with pixels already mapped to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub split: Split,
    images: Vec<f64>,
    labels: Vec<usize>,
}

impl SplitDataset {
    /// `images` holds `labels.len()` row-major 28×28 images.
    pub fn new(split: Split, images: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() * PIXELS {
            return Err(Error::Shape(format!(
                "{} pixels for {} labels of 28×28 images",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::LabelOutOfRange { label: bad, classes: 2 });
        }
        Ok(Self { split, images, labels })
    }

    fn from_raw(split: Split, images: &U8Array, labels: &U8Array) -> Result<Self> {
        Self::new(split, images.data.iter().map(|&v| normalize(v)).collect(), labels.data.iter().map(|&l| l as usize).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i * PIXELS..(i + 1) * PIXELS]
    }

    /// Stacks the selected samples into `[B, 1, 28, 28]` plus their labels.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * PIXELS);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let x = Tensor::new(&[indices.len(), 1, IMAGE_SIDE, IMAGE_SIDE], data).expect("sizes agree");
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// The first `n` samples as a new split.
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            split: self.split,
            images: self.images[..n * PIXELS].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Exchanges the two class codes, for archives coded the other way round.
    pub fn swap_labels(&mut self) {
        self.labels.iter_mut().for_each(|l| *l = 1 - *l);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Datasets {
    pub train: SplitDataset,
    pub val: SplitDataset,
    pub test: SplitDataset,
}

impl Datasets {
    pub fn get(&self, split: Split) -> &SplitDataset {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// `v / 127.5 − 1`, mapping 0 → −1 and 255 → +1.
pub fn normalize(v: u8) -> f64 {
    v as f64 / 127.5 - 1.0
}

/// Reads the six `{split}_images` / `{split}_labels` arrays of a
/// MedMNIST-style `.npz` archive.
pub fn load_archive(path: &Path) -> Result<Datasets> {
    let load_err = |msg: String| Error::Load {
        path: path.to_path_buf(),
        msg,
    };
    let file = File::open(path).map_err(|e| load_err(e.to_string()))?;
    let mut zip = zip::ZipArchive::new(file).map_err(|e| load_err(format!("not a zip archive: {e}")))?;
    let mut member = |name: String| -> Result<U8Array> {
        let mut entry = zip
            .by_name(&format!("{name}.npy"))
            .map_err(|_| load_err(format!("missing member {name}.npy")))?;
        let mut bytes = Vec::with_capacity(entry.size() as usize);
        entry
            .read_to_end(&mut bytes)
            .map_err(|e| load_err(format!("{name}.npy: {e}")))?;
        npy::parse_member(path, &name, &bytes)
    };
    let mut splits = Vec::with_capacity(3);
    for split in Split::ALL {
        let images = member(format!("{}_images", split.name()))?;
        let labels = member(format!("{}_labels", split.name()))?;
        let n = images.shape.first().copied().unwrap_or(0);
        if images.shape != [n, IMAGE_SIDE, IMAGE_SIDE] {
            return Err(load_err(format!("{}_images has shape {:?}, expected [N, 28, 28]", split.name(), images.shape)));
        }
        if labels.shape != [n, 1] && labels.shape != [n] {
            return Err(load_err(format!("{}_labels has shape {:?}, expected [{n}, 1]", split.name(), labels.shape)));
        }
        if let Some(&bad) = labels.data.iter().find(|&&l| l > 1) {
            return Err(load_err(format!("{}_labels contains class {bad}; expected a binary archive", split.name())));
        }
        splits.push(SplitDataset::from_raw(split, &images, &labels)?);
    }
    let test = splits.pop().expect("three splits");
    let val = splits.pop().expect("three splits");
    let train = splits.pop().expect("three splits");
    Ok(Datasets { train, val, test })
}

/// Sample order for one epoch, cut into batches; the last batch may be short.
/// The train split is shuffled by a generator keyed on `(seed, epoch)`;
/// validation and test keep their stored order.
pub fn batch_iter(data: &SplitDataset, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptySplit(data.split.name().into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    if data.split == Split::Train {
        order.shuffle(&mut stream(seed, Stream::Shuffle, epoch));
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

fn synth_image(rng: &mut impl Rng, label: usize) -> Vec<u8> {
    // benign: one smooth bright oval; malignant: a darker lobulated blob
    let cx = rng.gen_range(11.0..17.0);
    let cy = rng.gen_range(11.0..17.0);
    let r = rng.gen_range(5.0..8.0);
    let lobes = rng.gen_range(3..6) as f64;
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut img = Vec::with_capacity(PIXELS);
    for y in 0..IMAGE_SIDE {
        for x in 0..IMAGE_SIDE {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let d = (dx * dx + dy * dy).sqrt();
            let edge = if label == 1 {
                r
            } else {
                r * (1.0 + 0.35 * (lobes * dy.atan2(dx) + phase).sin())
            };
            let inside = if d < edge { 1.0 } else { 0.0 };
            let base = if label == 1 { 200.0 } else { 90.0 };
            let v: f64 = 40.0 + inside * (base - 40.0) + rng.gen_range(-25.0..25.0);
            img.push(v.clamp(0.0, 255.0) as u8);
        }
    }
    img
}

/// Writes a small class-structured archive in the same layout as the real
/// one. Labels alternate so every split holds both classes.
pub fn write_synthetic_archive(path: &Path, sizes: [usize; 3], seed: u64) -> Result<()> {
    let file = File::create(path)?;
    let mut zip = zip::ZipWriter::new(file);
    let options = zip::write::SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);
    for (k, (split, n)) in Split::ALL.into_iter().zip(sizes).enumerate() {
        let mut rng = stream(seed, Stream::Synthetic, k as u64);
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let images: Vec<u8> = labels.iter().flat_map(|&l| synth_image(&mut rng, l as usize)).collect();
        for (name, array) in [
            (
                "images",
                U8Array {
                    shape: vec![n, IMAGE_SIDE, IMAGE_SIDE],
                    data: images,
                },
            ),
            ("labels", U8Array { shape: vec![n, 1], data: labels }),
        ] {
            zip.start_file(format!("{}_{name}.npy", split.name()), options)
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
            zip.write_all(&npy::write(&array))?;
        }
    }
    zip.finish().map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(())
}
