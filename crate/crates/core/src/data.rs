//! Image loading, band masking, masked-input assembly, and deterministic
//! shuffled batching.

use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4, Axis};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

/// Ground-truth frames and generator outputs are (3, H, W) arrays with
/// intensities in [0, 1].
pub type Image = Array3<f32>;

/// Binary band mask: 1 on the outer band to be hallucinated, 0 on the
/// preserved centered square.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub data: Array3<f32>,
    pub outer: usize,
    pub inner: usize,
}

impl Mask {
    /// Mask that is 1 on the complement of a centered `inner`×`inner`
    /// square inside an `outer`×`outer` frame.
    pub fn band(outer: usize, inner: usize) -> Result<Mask> {
        Mask::band_with_margin(outer, inner, 0)
    }

    /// Like [`Mask::band`], but the ones additionally extend `margin`
    /// pixels inward past the band boundary. `margin = 0` reproduces the
    /// plain band.
    pub fn band_with_margin(outer: usize, inner: usize, margin: usize) -> Result<Mask> {
        if inner > outer {
            return Err(Error::InvalidGeometry {
                outer,
                inner,
                reason: "inner exceeds outer".into(),
            });
        }
        if (outer - inner) % 2 != 0 {
            return Err(Error::InvalidGeometry {
                outer,
                inner,
                reason: "outer - inner must be even".into(),
            });
        }
        if 2 * margin > inner {
            return Err(Error::InvalidGeometry {
                outer,
                inner,
                reason: format!("margin {margin} exceeds half the inner square"),
            });
        }
        let hole = inner - 2 * margin;
        let off = (outer - hole) / 2;
        let mut data = Array3::<f32>::ones((1, outer, outer));
        for y in off..off + hole {
            for x in off..off + hole {
                data[[0, y, x]] = 0.0;
            }
        }
        Ok(Mask { data, outer, inner })
    }

    pub fn ones_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1.0).count()
    }
}

/// Decode, bilinear-resize the shorter side to `target_size`, center-crop,
/// and scale to [0, 1]. Grayscale sources are replicated to 3 channels.
pub fn load_image(path: &Path, target_size: usize) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::InvalidInput(format!(
            "{}: zero-dimension image",
            path.display()
        )));
    }
    let t = target_size as u32;
    let short = w.min(h);
    let (nw, nh) = if short == t {
        (w, h)
    } else {
        let scale = t as f64 / short as f64;
        (
            ((w as f64 * scale).round() as u32).max(t),
            ((h as f64 * scale).round() as u32).max(t),
        )
    };
    let resized = if (nw, nh) == (w, h) {
        rgb
    } else {
        image::imageops::resize(&rgb, nw, nh, image::imageops::FilterType::Triangle)
    };
    let x0 = (nw - t) / 2;
    let y0 = (nh - t) / 2;
    let mut out = Array3::<f32>::zeros((3, target_size, target_size));
    for y in 0..target_size {
        for x in 0..target_size {
            let p = resized.get_pixel(x0 + x as u32, y0 + y as u32);
            for c in 0..3 {
                out[[c, y, x]] = p.0[c] as f32 / 255.0;
            }
        }
    }
    Ok(out)
}

/// Quantize to 8-bit and write a PNG. Round-tripping through
/// [`load_image`] changes no intensity by more than 1/255.
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    let (c, h, w) = img.dim();
    if c != 3 {
        return Err(Error::shape("save_image", "3xHxW", format!("{c}x{h}x{w}")));
    }
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [0, 1, 2].map(|ch| {
                (img[[ch, y, x]].clamp(0.0, 1.0) * 255.0).round() as u8
            });
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn check_image_mask(context: &str, gt: &Image, mask: &Mask) -> Result<()> {
    let (c, h, w) = gt.dim();
    if c != 3 || h != mask.outer || w != mask.outer {
        return Err(Error::shape(
            context,
            format!("3x{0}x{0}", mask.outer),
            format!("{c}x{h}x{w}"),
        ));
    }
    Ok(())
}

/// Generator input: RGB with the band zeroed, plus the mask as channel 4.
pub fn make_masked_input(gt: &Image, mask: &Mask) -> Result<Array3<f32>> {
    check_image_mask("make_masked_input", gt, mask)?;
    let n = mask.outer;
    let mut out = Array3::<f32>::zeros((4, n, n));
    for y in 0..n {
        for x in 0..n {
            let m = mask.data[[0, y, x]];
            for c in 0..3 {
                out[[c, y, x]] = gt[[c, y, x]] * (1.0 - m);
            }
            out[[3, y, x]] = m;
        }
    }
    Ok(out)
}

/// The ϵ×x operand of the averaged discriminator: elementwise product with
/// the mask broadcast across channels.
pub fn local_crop(x: &Image, mask: &Mask) -> Result<Image> {
    check_image_mask("local_crop", x, mask)?;
    let mut out = x.clone();
    for c in 0..3 {
        let mut plane = out.index_axis_mut(Axis(0), c);
        plane.zip_mut_with(&mask.data.index_axis(Axis(0), 0), |v, &m| *v *= m);
    }
    Ok(out)
}

/// Batched [`local_crop`] over (N, 3, H, W).
pub fn local_crop_batch(x: &Array4<f32>, mask: &Mask) -> Result<Array4<f32>> {
    let (_, c, h, w) = x.dim();
    if c != 3 || h != mask.outer || w != mask.outer {
        return Err(Error::shape(
            "local_crop_batch",
            format!("Nx3x{0}x{0}", mask.outer),
            format!("Nx{c}x{h}x{w}"),
        ));
    }
    let mut out = x.clone();
    let mplane = mask.data.index_axis(Axis(0), 0);
    for mut img in out.axis_iter_mut(Axis(0)) {
        for mut plane in img.axis_iter_mut(Axis(0)) {
            plane.zip_mut_with(&mplane, |v, &m| *v *= m);
        }
    }
    Ok(out)
}

/// With `paste` on, keep the ground truth on the preserved interior and
/// the generated content on the band; off returns the generation as-is.
pub fn composite_paste(generated: &Image, gt: &Image, mask: &Mask, paste: bool) -> Result<Image> {
    check_image_mask("composite_paste(generated)", generated, mask)?;
    check_image_mask("composite_paste(gt)", gt, mask)?;
    if !paste {
        return Ok(generated.clone());
    }
    let n = mask.outer;
    let mut out = generated.clone();
    for y in 0..n {
        for x in 0..n {
            if mask.data[[0, y, x]] == 0.0 {
                for c in 0..3 {
                    out[[c, y, x]] = gt[[c, y, x]];
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

/// Ordered file listing backing one dataset split. Ordering is the sorted
/// recursive directory walk, so it is stable given identical contents.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub paths: Vec<PathBuf>,
    pub split: Split,
}

impl DatasetManifest {
    pub fn scan(root: &Path, split: Split) -> Result<DatasetManifest> {
        let mut paths = Vec::new();
        for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(|e| {
                Error::io(root, e.into_io_error().unwrap_or_else(|| std::io::Error::other("walk error")))
            })?;
            if !entry.file_type().is_file() {
                continue;
            }
            let p = entry.path();
            match p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
                Some(ext) if matches!(ext.as_str(), "png" | "jpg" | "jpeg") => {
                    paths.push(p.to_path_buf());
                }
                _ => {}
            }
        }
        paths.sort();
        Ok(DatasetManifest {
            root: root.to_path_buf(),
            paths,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Shuffle order for one epoch; a pure function of (seed, epoch).
pub fn shuffled_indices(n: usize, seed: u64, epoch: u32) -> Vec<usize> {
    let stream = seed
        ^ (epoch as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ 0x5348_5546_464C_4531;
    let mut rng = ChaCha20Rng::seed_from_u64(stream);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        idx.swap(i, j);
    }
    idx
}

/// One training batch: masked inputs, ground truths, and their paths.
pub struct Batch {
    pub masked: Array4<f32>,
    pub gt: Array4<f32>,
    pub paths: Vec<PathBuf>,
}

/// Lazy batch sequence over one epoch. Every sample is yielded exactly
/// once; the last partial batch is kept.
pub struct BatchIter<'a> {
    manifest: &'a DatasetManifest,
    mask: Mask,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

pub fn iterate_batches<'a>(
    manifest: &'a DatasetManifest,
    mask: &Mask,
    batch_size: usize,
    seed: u64,
    epoch: u32,
) -> Result<BatchIter<'a>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if manifest.is_empty() {
        return Err(Error::Config(format!(
            "dataset manifest at {} is empty",
            manifest.root.display()
        )));
    }
    Ok(BatchIter {
        manifest,
        mask: mask.clone(),
        order: shuffled_indices(manifest.len(), seed, epoch),
        batch_size,
        cursor: 0,
    })
}

impl BatchIter<'_> {
    pub fn mask(&self) -> &Mask {
        &self.mask
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.cursor).div_ceil(self.batch_size);
        (left, Some(left))
    }

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let ids = &self.order[self.cursor..end];
        self.cursor = end;
        let n = ids.len();
        let sz = self.mask.outer;
        let mut masked = Array4::<f32>::zeros((n, 4, sz, sz));
        let mut gt = Array4::<f32>::zeros((n, 3, sz, sz));
        let mut paths = Vec::with_capacity(n);
        for (bi, &i) in ids.iter().enumerate() {
            let path = &self.manifest.paths[i];
            let img = match load_image(path, sz) {
                Ok(img) => img,
                Err(e) => return Some(Err(e)),
            };
            let mi = match make_masked_input(&img, &self.mask) {
                Ok(mi) => mi,
                Err(e) => return Some(Err(e)),
            };
            masked.index_axis_mut(Axis(0), bi).assign(&mi);
            gt.index_axis_mut(Axis(0), bi).assign(&img);
            paths.push(path.clone());
        }
        Some(Ok(Batch { masked, gt, paths }))
    }
}
