//! Decoding class-labelled image directories.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use log::warn;
use rayon::prelude::*;

use super::Sample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Samples plus ingestion diagnostics.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub samples: Vec<Sample>,
    /// Sorted subdirectory names; a sample's label indexes this list.
    pub class_names: Vec<String>,
    /// Files that could not be decoded and were skipped.
    pub skipped: usize,
}

impl LoadedDataset {
    pub fn class_counts(&self) -> Vec<usize> {
        super::class_counts(&self.samples, self.class_names.len())
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// Loads `<root>/<class>/*` as single-channel `size × size` images in `[0, 1]`.
///
/// Class indices follow sorted subdirectory-name order. Every regular file is
/// offered to the decoder; undecodable ones are skipped with a warning and
/// counted. A class directory without any decodable image is an error.
pub fn load_dataset(root: &Path, size: usize) -> Result<LoadedDataset> {
    if size == 0 {
        return Err(Error::Config("image size must be positive".into()));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.is_empty() {
        return Err(Error::Dataset(format!("{} contains no class subdirectories", root.display())));
    }
    let mut class_names = Vec::new();
    let mut jobs = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        class_names.push(dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
        for path in sorted_entries(dir)? {
            if path.is_file() {
                jobs.push((label, path));
            }
        }
    }
    let decoded: Vec<Option<Sample>> = jobs
        .par_iter()
        .map(|(label, path)| match image::open(path) {
            Ok(img) => {
                let image = resize_bilinear(&img.to_luma8(), size);
                Some(Sample { image, label: *label, source: path.to_string_lossy().into_owned() })
            }
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                None
            }
        })
        .collect();
    let skipped = decoded.iter().filter(|s| s.is_none()).count();
    let samples: Vec<Sample> = decoded.into_iter().flatten().collect();
    let data = LoadedDataset { samples, class_names, skipped };
    for (name, count) in data.class_names.iter().zip(data.class_counts()) {
        if count == 0 {
            return Err(Error::Dataset(format!("class `{name}` has no readable images")));
        }
    }
    Ok(data)
}

/// Bilinear resize of an 8-bit image to `size × size` (pixel-centre
/// alignment, edge clamp), scaled to `[0, 1]`. Returns `[1, size, size]`.
pub fn resize_bilinear(img: &GrayImage, size: usize) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let px = |x: usize, y: usize| img.get_pixel(x as u32, y as u32)[0] as f64 / 255.0;
    let axis = |dst: usize, src_len: usize| -> (usize, usize, f64) {
        let pos = ((dst as f64 + 0.5) * src_len as f64 / size as f64 - 0.5).clamp(0.0, (src_len - 1) as f64);
        let i0 = pos.floor() as usize;
        (i0, (i0 + 1).min(src_len - 1), pos - i0 as f64)
    };
    let mut data = Vec::with_capacity(size * size);
    for oy in 0..size {
        let (y0, y1, fy) = axis(oy, h);
        for ox in 0..size {
            let (x0, x1, fx) = axis(ox, w);
            let top = px(x0, y0) * (1.0 - fx) + px(x1, y0) * fx;
            let bottom = px(x0, y1) * (1.0 - fx) + px(x1, y1) * fx;
            data.push((top * (1.0 - fy) + bottom * fy) as f32);
        }
    }
    Tensor::from_parts(&[1, size, size], data).expect("size*size values")
}

/// Writes a `[1, H, W]` (or `[H, W]`) image in `[0, 1]` as an 8-bit PNG.
pub fn save_png(image: &Tensor<f32>, path: &Path) -> Result<()> {
    let shape = image.shape();
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let mut out = GrayImage::new(w as u32, h as u32);
    for (i, v) in image.data().iter().enumerate() {
        let byte = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        out.put_pixel((i % w) as u32, (i / w) as u32, Luma([byte]));
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    out.save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_two_by_two_stays_white() {
        let img = GrayImage::from_pixel(2, 2, Luma([255]));
        assert_eq!(resize_bilinear(&img, 2).data(), &[1.0; 4]);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = GrayImage::from_fn(5, 3, |x, y| Luma([(x * 40 + y * 7) as u8]));
        let up = resize_bilinear(&GrayImage::from_pixel(3, 7, Luma([51])), 16);
        assert!(up.data().iter().all(|&v| (v - 0.2).abs() < 1e-6));
        let same = resize_bilinear(&GrayImage::from_fn(4, 4, |x, y| Luma([(x * 50 + y) as u8])), 4);
        for y in 0..4 {
            for x in 0..4 {
                assert!((same.at(&[0, y, x]) - (x * 50 + y) as f32 / 255.0).abs() < 1e-6);
            }
        }
        let down = resize_bilinear(&img, 2);
        assert!(down.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
