//! IDX reader and writer for MNIST-style image and label files.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};

use crate::error::{invalid, Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Clone, Debug, PartialEq)]
pub struct MnistDataset {
    /// One row per image, pixels scaled to `[0, 1]`.
    pub images: Array2<f64>,
    pub labels: Vec<usize>,
    pub rows: usize,
    pub cols: usize,
}

impl MnistDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// First `n` examples (all of them if `n` is larger).
    pub fn head(&self, n: usize) -> MnistDataset {
        let n = n.min(self.len());
        MnistDataset {
            images: self.images.slice(ndarray::s![..n, ..]).to_owned(),
            labels: self.labels[..n].to_vec(),
            rows: self.rows,
            cols: self.cols,
        }
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn read_header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>> {
    let header = 4 + 4 * dims;
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: header,
            found: bytes.len(),
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::WrongMagic {
            path: path.to_path_buf(),
            expected: magic,
            found,
        });
    }
    if bytes.len() < header {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: header,
            found: bytes.len(),
        });
    }
    let shape: Vec<usize> = (0..dims).map(|i| be_u32(bytes, 4 + 4 * i) as usize).collect();
    let expected = header + shape.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(shape)
}

pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<MnistDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let ib = fs::read(ip)?;
    let lb = fs::read(lp)?;
    let ishape = read_header(ip, &ib, IMAGE_MAGIC, 3)?;
    let lshape = read_header(lp, &lb, LABEL_MAGIC, 1)?;
    let (n, rows, cols) = (ishape[0], ishape[1], ishape[2]);
    if n != lshape[0] {
        return Err(Error::CountMismatch {
            images: n,
            labels: lshape[0],
        });
    }
    let pixels = &ib[16..16 + n * rows * cols];
    let images = Array2::from_shape_vec(
        (n, rows * cols),
        pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    )
    .expect("sizes agree");
    Ok(MnistDataset {
        images,
        labels: lb[8..8 + n].iter().map(|&l| l as usize).collect(),
        rows,
        cols,
    })
}

/// Paths of the four canonical files inside `dir`.
pub fn canonical_paths(dir: impl AsRef<Path>) -> [PathBuf; 4] {
    let d = dir.as_ref();
    [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS].map(|f| d.join(f))
}

/// Train and test splits from a directory holding the canonical file names.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(MnistDataset, MnistDataset)> {
    let [ti, tl, vi, vl] = canonical_paths(dir);
    Ok((load_mnist_idx(ti, tl)?, load_mnist_idx(vi, vl)?))
}

/// Writes raw pixels and labels in IDX form.
pub fn write_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    pixels: ArrayView2<u8>,
    rows: usize,
    cols: usize,
    labels: &[u8],
) -> Result<()> {
    if pixels.ncols() != rows * cols {
        return Err(invalid(format!(
            "image width {} is not {rows}x{cols}",
            pixels.ncols()
        )));
    }
    if pixels.nrows() != labels.len() {
        return Err(Error::CountMismatch {
            images: pixels.nrows(),
            labels: labels.len(),
        });
    }
    let mut ib = Vec::with_capacity(16 + pixels.len());
    ib.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    for d in [pixels.nrows(), rows, cols] {
        ib.extend_from_slice(&(d as u32).to_be_bytes());
    }
    ib.extend(pixels.iter().copied());
    let mut lb = Vec::with_capacity(8 + labels.len());
    lb.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lb.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lb.extend_from_slice(labels);
    fs::write(images_path, ib)?;
    fs::write(labels_path, lb)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
        // Two 2x3 images written byte by byte.
        let mut ib = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 3];
        ib.extend_from_slice(&[0, 255, 51, 102, 153, 204]);
        ib.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let lb = vec![0, 0, 8, 1, 0, 0, 0, 2, 7, 3];
        let (i, l) = (dir.join("img"), dir.join("lbl"));
        fs::write(&i, ib).unwrap();
        fs::write(&l, lb).unwrap();
        (i, l)
    }

    #[test]
    fn hand_built_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = fixture(dir.path());
        let ds = load_mnist_idx(&i, &l).unwrap();
        assert_eq!((ds.len(), ds.rows, ds.cols), (2, 2, 3));
        assert_eq!(ds.labels, vec![7, 3]);
        let row0: Vec<f64> = ds.images.row(0).to_vec();
        assert_eq!(row0, vec![0.0, 1.0, 0.2, 0.4, 0.6, 0.8]);
        assert_eq!(ds.images[(1, 5)], 6.0 / 255.0);
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = fixture(dir.path());
        // Labels passed as images.
        assert!(matches!(
            load_mnist_idx(&l, &l),
            Err(Error::WrongMagic { found: LABEL_MAGIC, .. })
        ));
        let mut bytes = fs::read(&i).unwrap();
        bytes.pop();
        let short = dir.path().join("short");
        fs::write(&short, &bytes).unwrap();
        assert!(matches!(load_mnist_idx(&short, &l), Err(Error::Truncated { .. })));
        let one = dir.path().join("one");
        fs::write(&one, [0, 0, 8, 1, 0, 0, 0, 1, 7]).unwrap();
        assert!(matches!(
            load_mnist_idx(&i, &one),
            Err(Error::CountMismatch { images: 2, labels: 1 })
        ));
    }

    #[test]
    fn writer_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pixels = Array2::from_shape_fn((5, 12), |(r, c)| (r * 37 + c * 11) as u8);
        let labels = [0u8, 9, 4, 4, 1];
        let (i, l) = (dir.path().join("i"), dir.path().join("l"));
        write_mnist_idx(&i, &l, pixels.view(), 3, 4, &labels).unwrap();
        let ds = load_mnist_idx(&i, &l).unwrap();
        let back = ds.images.mapv(|p| (p * 255.0).round() as u8);
        assert_eq!(back, pixels);
        assert_eq!(ds.labels, labels.iter().map(|&x| x as usize).collect::<Vec<_>>());
        assert_eq!(ds.head(2).len(), 2);
    }
}
