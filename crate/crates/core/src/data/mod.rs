//! Environment datasets and the contextual-bandit sampler built on them.

pub mod cifar;
pub mod idx;
pub mod synthetic;

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::image::Image;

pub use cifar::{load_cifar100, to_greyscale};
pub use idx::load_idx;

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "SIGG_DATA_DIR";
/// Every tenth item of each class is held out.
pub const HELDOUT_EVERY: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: bad magic at byte offset {offset}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { path: PathBuf, offset: usize, expected: u32, found: u32 },
    #[error("{path}: truncated at byte offset {offset} ({needed} more bytes expected)")]
    Truncated { path: PathBuf, offset: usize, needed: usize },
    #[error("image file holds {images} records but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: length {len} is not a multiple of the {record}-byte record size")]
    RecordSize { path: PathBuf, len: usize, record: usize },
    #[error("dataset configuration: {0}")]
    Config(String),
    #[error("{what} not found; looked in: {}", searched.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    Missing { what: &'static str, searched: Vec<PathBuf> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub label: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    Mnist,
    Cifar100,
}

impl Source {
    pub fn label_count(self) -> u32 {
        match self {
            Source::Mnist => 10,
            Source::Cifar100 => 100,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Heldout,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub source: Source,
    /// Original dataset label ids; referent `i` is `class_subset[i]`.
    pub class_subset: Vec<u32>,
    /// Total cap across classes, 0 for no cap.
    pub max_samples: usize,
    /// Split the bandit sampler draws from.
    pub split: Split,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self { source: Source::Mnist, class_subset: (0..10).collect(), max_samples: 0, split: Split::Train }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Environment,
    Agent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BanditRound {
    pub context: Image,
    pub winning_arm: usize,
    pub source_kind: SourceKind,
}

/// Keeps items whose label is in `subset`, at most `max_samples` in total
/// with an equal share per class (earlier classes take the remainder).
pub fn select_classes(items: Vec<LabeledImage>, subset: &[u32], max_samples: usize) -> Vec<LabeledImage> {
    let k = subset.len().max(1);
    let quota: Vec<usize> = (0..k)
        .map(|i| if max_samples == 0 { usize::MAX } else { max_samples / k + usize::from(i < max_samples % k) })
        .collect();
    let mut taken = vec![0usize; k];
    items
        .into_iter()
        .filter(|it| match subset.iter().position(|&c| c == it.label) {
            Some(slot) if taken[slot] < quota[slot] => {
                taken[slot] += 1;
                true
            }
            _ => false,
        })
        .collect()
}

/// Resolved dataset files.
#[derive(Clone, Debug, PartialEq)]
pub enum DataFiles {
    Idx { images: PathBuf, labels: PathBuf },
    CifarBin(PathBuf),
}

fn first_existing(candidates: Vec<PathBuf>, what: &'static str) -> Result<PathBuf, DataError> {
    candidates.iter().find(|p| p.is_file()).cloned().ok_or(DataError::Missing { what, searched: candidates })
}

/// Finds the training files for `source` under `root` (or `root/mnist`,
/// `root/cifar-100-binary`), accepting gzipped IDX files.
pub fn locate(source: Source, root: &Path) -> Result<DataFiles, DataError> {
    match source {
        Source::Mnist => {
            let dirs = [root.to_path_buf(), root.join("mnist"), root.join("MNIST").join("raw")];
            let cands = |stem: &str| -> Vec<PathBuf> {
                dirs.iter().flat_map(|d| [d.join(stem), d.join(format!("{stem}.gz"))]).collect()
            };
            Ok(DataFiles::Idx {
                images: first_existing(cands("train-images-idx3-ubyte"), "MNIST training images")?,
                labels: first_existing(cands("train-labels-idx1-ubyte"), "MNIST training labels")?,
            })
        }
        Source::Cifar100 => {
            let cands = vec![root.join("cifar-100-binary").join("train.bin"), root.join("train.bin")];
            Ok(DataFiles::CifarBin(first_existing(cands, "CIFAR-100 train.bin")?))
        }
    }
}

pub fn download_instructions() -> String {
    format!(
        "Datasets are read from ${DATA_DIR_ENV} (or dataset.root in the run config); nothing is downloaded.\n\
         \n\
         MNIST: place train-images-idx3-ubyte[.gz] and train-labels-idx1-ubyte[.gz]\n\
         in $SIGG_DATA_DIR or $SIGG_DATA_DIR/mnist. The files are published at\n\
         https://yann.lecun.com/exdb/mnist/ and mirrored by most ML toolkits.\n\
         \n\
         CIFAR-100: download cifar-100-binary.tar.gz from\n\
         https://www.cs.toronto.edu/~kriz/cifar.html and extract it so that\n\
         $SIGG_DATA_DIR/cifar-100-binary/train.bin exists.\n"
    )
}

/// A class-filtered, split dataset whose labels are referent indices `0..K`.
#[derive(Clone, Debug)]
pub struct Dataset {
    source: Source,
    classes: Vec<u32>,
    items: Vec<LabeledImage>,
    train: Vec<Vec<usize>>,
    heldout: Vec<Vec<usize>>,
    split: Split,
    dims: (usize, usize),
}

impl Dataset {
    /// Filters `items` (original labels) down to `spec`, remaps labels to
    /// referent indices and assigns the held-out split.
    pub fn from_items(items: Vec<LabeledImage>, spec: &DatasetSpec) -> Result<Self, DataError> {
        if spec.class_subset.is_empty() {
            return Err(DataError::Config("class_subset must not be empty".into()));
        }
        let limit = spec.source.label_count();
        if let Some(bad) = spec.class_subset.iter().find(|&&c| c >= limit) {
            return Err(DataError::Config(format!("class id {bad} invalid for {:?} (must be < {limit})", spec.source)));
        }
        let mut sorted = spec.class_subset.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != spec.class_subset.len() {
            return Err(DataError::Config("class_subset contains duplicates".into()));
        }

        let selected = select_classes(items, &spec.class_subset, spec.max_samples);
        let k = spec.class_subset.len();
        let mut train = vec![Vec::new(); k];
        let mut heldout = vec![Vec::new(); k];
        let mut dims = None;
        let mut items = Vec::with_capacity(selected.len());
        for it in selected {
            let referent = spec.class_subset.iter().position(|&c| c == it.label).expect("selected");
            match dims {
                None => dims = Some(it.image.dims()),
                Some(d) if d != it.image.dims() => {
                    return Err(DataError::Config(format!("mixed image sizes {d:?} and {:?}", it.image.dims())))
                }
                _ => {}
            }
            let seen = train[referent].len() + heldout[referent].len();
            let slot = if seen % HELDOUT_EVERY == HELDOUT_EVERY - 1 { &mut heldout } else { &mut train };
            slot[referent].push(items.len());
            items.push(LabeledImage { image: it.image, label: referent as u32 });
        }
        if let Some(empty) = train.iter().position(Vec::is_empty) {
            return Err(DataError::Config(format!("class {} has no training samples", spec.class_subset[empty])));
        }
        Ok(Self {
            source: spec.source,
            classes: spec.class_subset.clone(),
            items,
            train,
            heldout,
            split: spec.split,
            dims: dims.expect("non-empty"),
        })
    }

    pub fn load(spec: &DatasetSpec, root: &Path) -> Result<Self, DataError> {
        let items = match locate(spec.source, root)? {
            DataFiles::Idx { images, labels } => load_idx(&images, &labels)?,
            DataFiles::CifarBin(path) => load_cifar100(&path, spec)?,
        };
        Self::from_items(items, spec)
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Original dataset label of each referent.
    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, idx: usize) -> &LabeledImage {
        &self.items[idx]
    }

    /// Item indices belonging to `split`, grouped by referent.
    pub fn split_indices(&self, split: Split) -> &[Vec<usize>] {
        match split {
            Split::Train => &self.train,
            Split::Heldout => &self.heldout,
        }
    }

    pub fn split_items(&self, split: Split) -> impl Iterator<Item = &LabeledImage> {
        let mut idx: Vec<usize> = self.split_indices(split).iter().flatten().copied().collect();
        idx.sort_unstable();
        idx.into_iter().map(move |i| &self.items[i])
    }

    /// Mean pixel value over the training split.
    pub fn mean_pixel(&self) -> f64 {
        let (sum, n) = self
            .train
            .iter()
            .flatten()
            .map(|&i| self.items[i].image.mean())
            .fold((0.0, 0usize), |(s, n), m| (s + m, n + 1));
        sum / n.max(1) as f64
    }

    /// Uniform referent, then a uniform image of that referent.
    pub fn sample_bandit<R: Rng + ?Sized>(&self, rng: &mut R) -> BanditRound {
        let by_class = self.split_indices(self.split);
        let arm = rng.random_range(0..by_class.len());
        let pool = if by_class[arm].is_empty() { &self.train[arm] } else { &by_class[arm] };
        let idx = pool[rng.random_range(0..pool.len())];
        BanditRound { context: self.items[idx].image.clone(), winning_arm: arm, source_kind: SourceKind::Environment }
    }
}
