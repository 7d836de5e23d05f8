//! IDX ingestion, split serialization and partitioning into local batches.

use std::ops::Range;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::objective::{LocalObjective, LogisticLocal};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Labelled samples with uniform feature dimension and labels in `{+1, -1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPart {
    dim: usize,
    /// Row-major, `len() * dim` values.
    features: Vec<f64>,
    labels: Vec<f64>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: DatasetPart,
    pub test: DatasetPart,
}

impl DatasetPart {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<f64>, source: String) -> Result<Self> {
        if features.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * labels.len(),
                actual: features.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::Format(format!("label {bad} is not +1/-1")));
        }
        Ok(Self {
            dim,
            features,
            labels,
            source,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, j: usize) -> &[f64] {
        &self.features[j * self.dim..(j + 1) * self.dim]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Samples `range` as a row-per-sample matrix.
    pub fn matrix(&self, range: Range<usize>) -> DMatrix<f64> {
        let rows = range.len();
        DMatrix::from_row_slice(rows, self.dim, &self.features[range.start * self.dim..range.end * self.dim])
    }

    /// First `limit` samples.
    pub fn truncated(mut self, limit: usize) -> Self {
        let keep = limit.min(self.len());
        self.labels.truncate(keep);
        self.features.truncate(keep * self.dim);
        self
    }

    /// Samples `range`, keeping the source descriptor annotated.
    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            dim: self.dim,
            features: self.features[range.start * self.dim..range.end * self.dim].to_vec(),
            labels: self.labels[range.clone()].to_vec(),
            source: format!("{}[{}..{}]", self.source, range.start, range.end),
        }
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim && !self.is_empty() && !other.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Self {
            dim: if self.is_empty() { other.dim } else { self.dim },
            features,
            labels,
            source: format!("{} + {}", self.source, other.source),
        })
    }

    /// One logistic local objective per agent over the partition blocks.
    pub fn local_objectives(&self, n: usize, lambda: f64) -> Result<Vec<LocalObjective>> {
        partition(self.len(), n)?
            .into_iter()
            .map(|r| {
                let labels = self.labels[r.clone()].to_vec();
                LogisticLocal::new(self.matrix(r), labels, lambda).map(LocalObjective::Logistic)
            })
            .collect()
    }

    /// CSV with a `label` column followed by `f0..f{dim-1}`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["label".to_string()];
        header.extend((0..self.dim).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        let mut row = Vec::with_capacity(self.dim + 1);
        for j in 0..self.len() {
            row.clear();
            row.push(self.labels[j].to_string());
            row.extend(self.sample(j).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(Path::new("<csv>"), e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R, source: String) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let dim = r.headers()?.len().saturating_sub(1);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number {s:?} in split CSV")))
            };
            labels.push(parse(&rec[0])?);
            for v in rec.iter().skip(1) {
                features.push(parse(v)?);
            }
        }
        Self::new(dim, features, labels, source)
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            offset: bytes.len(),
        })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parsed IDX image file: `count` images of `rows x cols` bytes.
struct IdxImages {
    count: usize,
    pixels: usize,
    data: Vec<u8>,
}

fn parse_images(path: &Path) -> Result<IdxImages> {
    let bytes = read_file(path)?;
    let magic = read_u32(&bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let count = read_u32(&bytes, 4, path)? as usize;
    let rows = read_u32(&bytes, 8, path)? as usize;
    let cols = read_u32(&bytes, 12, path)? as usize;
    let pixels = rows * cols;
    let need = 16 + count * pixels;
    if bytes.len() < need {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            offset: bytes.len(),
        });
    }
    Ok(IdxImages {
        count,
        pixels,
        data: bytes[16..need].to_vec(),
    })
}

fn parse_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    let magic = read_u32(&bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
            expected: LABELS_MAGIC,
        });
    }
    let count = read_u32(&bytes, 4, path)? as usize;
    if bytes.len() < 8 + count {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            offset: bytes.len(),
        });
    }
    let labels = bytes[8..8 + count].to_vec();
    if let Some((j, d)) = labels.iter().enumerate().find(|(_, &d)| d > 9) {
        return Err(Error::Format(format!(
            "{}: label {d} at offset {} is not a digit",
            path.display(),
            8 + j
        )));
    }
    Ok(labels)
}

/// Count of labels equal to either digit, straight from the label file.
pub fn count_digits(labels_path: &Path, digits: [u8; 2]) -> Result<usize> {
    Ok(parse_labels(labels_path)?
        .iter()
        .filter(|d| digits.contains(d))
        .count())
}

/// Loads the samples labelled `digit_pos` (+1) or `digit_neg` (-1) in file
/// order, pixels divided by `scale`, truncated to `limit`.
pub fn ingest_mnist(
    images_path: &Path,
    labels_path: &Path,
    digit_pos: u8,
    digit_neg: u8,
    limit: Option<usize>,
    scale: f64,
) -> Result<DatasetPart> {
    if digit_pos > 9 || digit_neg > 9 {
        return Err(Error::Format(format!(
            "digits must be in 0..=9, got {digit_pos} and {digit_neg}"
        )));
    }
    if digit_pos == digit_neg {
        return Err(Error::Format("positive and negative digits coincide".into()));
    }
    if !(scale > 0.0) {
        return Err(Error::Format(format!("feature scale must be positive, got {scale}")));
    }
    let images = parse_images(images_path)?;
    let labels = parse_labels(labels_path)?;
    if images.count != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: images.count,
            actual: labels.len(),
        });
    }
    let limit = limit.unwrap_or(usize::MAX);
    let mut features = Vec::new();
    let mut ys = Vec::new();
    for (j, &d) in labels.iter().enumerate() {
        if ys.len() >= limit {
            break;
        }
        let y = if d == digit_pos {
            1.0
        } else if d == digit_neg {
            -1.0
        } else {
            continue;
        };
        ys.push(y);
        let px = &images.data[j * images.pixels..(j + 1) * images.pixels];
        features.extend(px.iter().map(|&b| b as f64 / scale));
    }
    DatasetPart::new(
        images.pixels,
        features,
        ys,
        format!("{} ({digit_pos} vs {digit_neg})", images_path.display()),
    )
}

/// Paths of the four IDX files of a split.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

/// Train/test split from IDX files. With `pooled`, both files are
/// concatenated in order and the first `train_limit` samples form the
/// training part, the next `test_limit` the test part.
pub fn load_split(
    paths: &IdxPaths,
    digits: (u8, u8),
    train_limit: Option<usize>,
    test_limit: Option<usize>,
    pooled: bool,
    scale: f64,
) -> Result<DatasetSplit> {
    let (pos, neg) = digits;
    if pooled {
        let train = ingest_mnist(&paths.train_images, &paths.train_labels, pos, neg, None, scale)?;
        let test = ingest_mnist(&paths.test_images, &paths.test_labels, pos, neg, None, scale)?;
        let pool = train.concat(&test)?;
        let n_train = train_limit.unwrap_or(train.len()).min(pool.len());
        let n_test = test_limit
            .unwrap_or(pool.len() - n_train)
            .min(pool.len() - n_train);
        if train_limit.is_some_and(|l| l > n_train) || test_limit.is_some_and(|l| l > n_test) {
            return Err(Error::Format(format!(
                "pool of {} samples cannot supply {:?} train + {:?} test",
                pool.len(),
                train_limit,
                test_limit
            )));
        }
        Ok(DatasetSplit {
            train: pool.slice(0..n_train),
            test: pool.slice(n_train..n_train + n_test),
        })
    } else {
        Ok(DatasetSplit {
            train: ingest_mnist(&paths.train_images, &paths.train_labels, pos, neg, train_limit, scale)?,
            test: ingest_mnist(&paths.test_images, &paths.test_labels, pos, neg, test_limit, scale)?,
        })
    }
}

/// Contiguous blocks in order; the first `len % n` blocks get one extra
/// sample.
pub fn partition(len: usize, n: usize) -> Result<Vec<Range<usize>>> {
    if len == 0 {
        return Err(Error::EmptyDataset);
    }
    if n == 0 {
        return Err(Error::Config("partition needs n >= 1".into()));
    }
    if n > len {
        return Err(Error::Config(format!("cannot split {len} samples over {n} agents")));
    }
    let base = len / n;
    let rem = len % n;
    let mut start = 0;
    Ok((0..n)
        .map(|i| {
            let size = base + usize::from(i < rem);
            let r = start..start + size;
            start += size;
            r
        })
        .collect())
}
