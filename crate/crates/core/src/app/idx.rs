//! MNIST IDX files.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{parse_err, Error, Result};
use crate::train::Sample;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, name: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| parse_err(format!("{name} offset {offset}"), "file truncated"))
}

fn check_magic(bytes: &[u8], want: u32, name: &str) -> Result<()> {
    let magic = read_u32(bytes, 0, name)?;
    if magic != want {
        return Err(parse_err(
            format!("{name} offset 0"),
            format!("bad magic 0x{magic:08x}, expected 0x{want:08x}"),
        ));
    }
    Ok(())
}

/// Images as rows of intensities in [0,1], plus `(rows, cols)`.
pub fn parse_idx_images(bytes: &[u8], name: &str) -> Result<(Vec<Vec<f64>>, usize, usize)> {
    check_magic(bytes, IMAGES_MAGIC, name)?;
    let n = read_u32(bytes, 4, name)? as usize;
    let rows = read_u32(bytes, 8, name)? as usize;
    let cols = read_u32(bytes, 12, name)? as usize;
    let size = rows * cols;
    let need = 16 + n * size;
    if bytes.len() < need {
        return Err(parse_err(
            format!("{name} offset {}", bytes.len()),
            format!("file truncated: {n} images need {need} bytes"),
        ));
    }
    let images = (0..n)
        .map(|i| {
            bytes[16 + i * size..16 + (i + 1) * size]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect()
        })
        .collect();
    Ok((images, rows, cols))
}

pub fn parse_idx_labels(bytes: &[u8], name: &str) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC, name)?;
    let n = read_u32(bytes, 4, name)? as usize;
    if bytes.len() < 8 + n {
        return Err(parse_err(
            format!("{name} offset {}", bytes.len()),
            format!("file truncated: {n} labels need {} bytes", 8 + n),
        ));
    }
    Ok(bytes[8..8 + n].to_vec())
}

pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<Sample>> {
    let name = |p: &Path| p.display().to_string();
    let (images, _, _) = parse_idx_images(&std::fs::read(images_path)?, &name(images_path))?;
    let labels = parse_idx_labels(&std::fs::read(labels_path)?, &name(labels_path))?;
    if images.len() != labels.len() {
        return Err(Error::Domain(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(pixels, label)| Sample {
            pixels,
            label: label as usize,
        })
        .collect())
}

/// Train and test sets from the standard file names in `dir`.
pub fn load_mnist_dir(dir: &Path) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let f = |n: &str| -> PathBuf { dir.join(n) };
    let train = load_mnist_idx(&f("train-images-idx3-ubyte"), &f("train-labels-idx1-ubyte"))?;
    let test = load_mnist_idx(&f("t10k-images-idx3-ubyte"), &f("t10k-labels-idx1-ubyte"))?;
    Ok((train, test))
}

pub fn shuffle(samples: &mut [Sample], seed: u64) {
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
}

/// The first `n` samples after a seeded shuffle; all of them if `n` is larger.
pub fn subset(samples: &[Sample], n: usize, seed: u64) -> Vec<Sample> {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(n);
    idx.into_iter().map(|i| samples[i].clone()).collect()
}

/// Split off the first `n_train` samples.
pub fn split(mut samples: Vec<Sample>, n_train: usize) -> (Vec<Sample>, Vec<Sample>) {
    let rest = samples.split_off(n_train.min(samples.len()));
    (samples, rest)
}

pub fn write_idx(images_path: &Path, labels_path: &Path, samples: &[Sample], rows: usize, cols: usize) -> Result<()> {
    let mut img = Vec::with_capacity(16 + samples.len() * rows * cols);
    for v in [IMAGES_MAGIC, samples.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    for s in samples {
        if s.pixels.len() != rows * cols {
            return Err(Error::Domain("sample size does not match rows x cols".into()));
        }
        img.extend(s.pixels.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    let mut lab = Vec::with_capacity(8 + samples.len());
    for v in [LABELS_MAGIC, samples.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend(samples.iter().map(|s| s.label as u8));
    std::fs::write(images_path, img)?;
    std::fs::write(labels_path, lab)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend_from_slice(&d.to_be_bytes());
        }
        v
    }

    #[test]
    fn one_blank_image() {
        let mut img = header(IMAGES_MAGIC, &[1, 28, 28]);
        img.extend(vec![0u8; 784]);
        let mut lab = header(LABELS_MAGIC, &[1]);
        lab.push(7);
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        std::fs::write(&ip, img).unwrap();
        std::fs::write(&lp, lab).unwrap();
        let s = load_mnist_idx(&ip, &lp).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].label, 7);
        assert!(s[0].pixels.iter().all(|&p| p == 0.0));
        assert_eq!(s[0].pixels.len(), 784);
    }

    #[test]
    fn wrong_magic() {
        let err = parse_idx_labels(&header(0x0000_0802, &[0]), "x").unwrap_err();
        assert!(err.to_string().contains("offset 0"));
        assert!(parse_idx_images(&header(LABELS_MAGIC, &[0, 1, 1]), "x").is_err());
    }

    #[test]
    fn truncation_reports_offset() {
        let mut img = header(IMAGES_MAGIC, &[2, 2, 2]);
        img.extend([1, 2, 3]);
        let err = parse_idx_images(&img, "imgs").unwrap_err();
        assert!(err.to_string().contains("imgs offset 19"), "{err}");
        let err = parse_idx_images(&IMAGES_MAGIC.to_be_bytes()[..3], "imgs").unwrap_err();
        assert!(err.to_string().contains("offset 0"));
    }

    #[test]
    fn pixels_scale_to_unit_interval() {
        let mut img = header(IMAGES_MAGIC, &[1, 1, 2]);
        img.extend([0, 255]);
        let (x, r, c) = parse_idx_images(&img, "x").unwrap();
        assert_eq!((r, c), (1, 2));
        assert_eq!(x[0], vec![0.0, 1.0]);
    }

    #[test]
    fn write_then_read() {
        let samples: Vec<Sample> = (0..5)
            .map(|i| Sample {
                pixels: vec![i as f64 / 4.0; 4],
                label: i,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_idx(&ip, &lp, &samples, 2, 2).unwrap();
        let back = load_mnist_idx(&ip, &lp).unwrap();
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.label, b.label);
            for (x, y) in a.pixels.iter().zip(&b.pixels) {
                assert!((x - y).abs() <= 0.5 / 255.0);
            }
        }
    }

    #[test]
    fn subset_is_deterministic() {
        let samples: Vec<Sample> = (0..50)
            .map(|i| Sample {
                pixels: vec![i as f64],
                label: i % 10,
            })
            .collect();
        let a = subset(&samples, 10, 3);
        assert_eq!(a, subset(&samples, 10, 3));
        assert_ne!(a, subset(&samples, 10, 4));
        assert_eq!(subset(&samples, 100, 3).len(), 50);
        let (tr, te) = split(samples, 40);
        assert_eq!((tr.len(), te.len()), (40, 10));
    }

    #[test]
    fn desk_subset_when_present() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-desk");
        if !dir.exists() {
            return;
        }
        let (train, test) = load_mnist_dir(&dir).unwrap();
        assert_eq!(train.len(), 2000);
        assert_eq!(test.len(), 1000);
        assert!(train.iter().chain(&test).all(|s| s.label < 10 && s.pixels.len() == 784));
    }
}
