//! Labelled sample sets: synthetic Gaussian blobs, the IDX container used
//! by MNIST, and label-skewed partitioning across nodes.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// A set of `(x_j, y_j)` samples stored as a feature matrix plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetShard {
    features: Array2<f64>,
    labels: Vec<usize>,
}

impl DatasetShard {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        Ok(Self { features, labels })
    }

    pub fn from_samples(dim: usize, samples: &[(Vec<f64>, usize)]) -> Result<Self> {
        let mut features = Array2::zeros((samples.len(), dim));
        for (row, (x, _)) in samples.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::LengthMismatch {
                    expected: dim,
                    actual: x.len(),
                });
            }
            features.row_mut(row).assign(&ndarray::ArrayView1::from(x.as_slice()));
        }
        Self::new(features, samples.iter().map(|(_, y)| *y).collect())
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (Vec<f64>, usize) {
        (self.features.row(i).to_vec(), self.labels[i])
    }

    /// Sub-shard made of the given row indices, in order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let features = self.features.select(ndarray::Axis(0), idx);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Self { features, labels }
    }

    /// Splits off the last `count` samples.
    pub fn split_tail(&self, count: usize) -> (Self, Self) {
        let n = self.size();
        let count = count.min(n);
        let head: Vec<usize> = (0..n - count).collect();
        let tail: Vec<usize> = (n - count..n).collect();
        (self.select(&head), self.select(&tail))
    }
}

/// Parameters of the synthetic Gaussian-blob dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub features: usize,
    pub num_classes: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Std of the class centres around the origin.
    pub class_sep: f64,
    /// Std of samples around their class centre.
    pub noise_std: f64,
}

/// Draws `(train, test)` blob sets with balanced classes.
pub fn synthetic_blobs<R: Rng + ?Sized>(spec: &BlobSpec, rng: &mut R) -> Result<(DatasetShard, DatasetShard)> {
    if spec.features == 0 || spec.num_classes == 0 {
        return Err(Error::BadConfig("blob dataset needs features and classes".into()));
    }
    let centre = Normal::new(0.0, spec.class_sep).map_err(|e| Error::BadConfig(e.to_string()))?;
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::BadConfig(e.to_string()))?;
    let centres: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| (0..spec.features).map(|_| centre.sample(rng)).collect())
        .collect();
    let draw = |count: usize, rng: &mut R| {
        let mut features = Array2::zeros((count, spec.features));
        let mut labels = Vec::with_capacity(count);
        for i in 0..count {
            let class = i % spec.num_classes;
            for (j, c) in centres[class].iter().enumerate() {
                features[[i, j]] = c + noise.sample(rng);
            }
            labels.push(class);
        }
        DatasetShard { features, labels }
    };
    let train = draw(spec.train_samples, rng);
    let test = draw(spec.test_samples, rng);
    Ok((train, test))
}

/// Splits `data` into `num_nodes` disjoint shards whose union is `data`.
///
/// Node `i`'s dominant class is `i mod num_classes`; a `skew` fraction of its
/// samples comes from that class (as far as the class has samples left) and
/// the rest is dealt from the shuffled leftover pool. `skew = 0` is IID.
pub fn partition<R: Rng + ?Sized>(
    data: &DatasetShard,
    num_nodes: usize,
    num_classes: usize,
    skew: f64,
    rng: &mut R,
) -> Result<Vec<DatasetShard>> {
    if num_nodes == 0 {
        return Err(Error::BadConfig("num_nodes must be positive".into()));
    }
    if !(0.0..=1.0).contains(&skew) {
        return Err(Error::BadConfig(format!("label skew {skew} outside [0, 1]")));
    }
    let n = data.size();
    let target: Vec<usize> = (0..num_nodes)
        .map(|i| n / num_nodes + usize::from(i < n % num_nodes))
        .collect();

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes.max(1)];
    for (i, &y) in data.labels.iter().enumerate() {
        if y >= by_class.len() {
            return Err(Error::BadConfig(format!("label {y} outside [0, {num_classes})")));
        }
        by_class[y].push(i);
    }
    for class in &mut by_class {
        class.shuffle(rng);
    }

    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
    for (node, want) in target.iter().enumerate() {
        let dominant = &mut by_class[node % num_classes.max(1)];
        let take = ((skew * *want as f64).round() as usize).min(dominant.len());
        assigned[node].extend(dominant.drain(..take));
    }
    let mut pool: Vec<usize> = by_class.into_iter().flatten().collect();
    pool.shuffle(rng);
    let mut pool = pool.into_iter();
    for (node, want) in target.iter().enumerate() {
        while assigned[node].len() < *want {
            match pool.next() {
                Some(i) => assigned[node].push(i),
                None => break,
            }
        }
    }

    assigned
        .into_iter()
        .enumerate()
        .map(|(node, mut idx)| {
            if idx.is_empty() {
                return Err(Error::EmptyDataset { node });
            }
            idx.sort_unstable();
            Ok(data.select(&idx))
        })
        .collect()
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile(format!("{what}: header ends at byte {}", bytes.len())))
}

/// Decodes an IDX image/label pair from memory. Pixels are scaled to `[0, 1]`.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<DatasetShard> {
    let magic = read_be_u32(images, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let count = read_be_u32(images, 4, "images")? as usize;
    let rows = read_be_u32(images, 8, "images")? as usize;
    let cols = read_be_u32(images, 12, "images")? as usize;

    let magic = read_be_u32(labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            found: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let label_count = read_be_u32(labels, 4, "labels")? as usize;
    if label_count != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }

    let pixels = rows * cols;
    let body = &images[16..];
    if body.len() < count * pixels {
        return Err(Error::TruncatedFile(format!(
            "images: need {} pixel bytes, have {}",
            count * pixels,
            body.len()
        )));
    }
    let label_body = &labels[8..];
    if label_body.len() < count {
        return Err(Error::TruncatedFile(format!(
            "labels: need {count} bytes, have {}",
            label_body.len()
        )));
    }
    let features = Array2::from_shape_fn((count, pixels), |(i, j)| f64::from(body[i * pixels + j]) / 255.0);
    let labels = label_body[..count].iter().map(|&b| usize::from(b)).collect();
    DatasetShard::new(features, labels)
}

/// Reads an IDX image/label file pair from disk.
pub fn load_idx_dataset(images_path: &Path, labels_path: &Path) -> Result<DatasetShard> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx(&images, &labels)
}
