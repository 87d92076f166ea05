//! 8-bit PNG output of normalized tiles.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `[-1, 1]` to `0..=255`.
pub fn to_byte(v: f32) -> u8 {
    (((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) as u8
}

fn save_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other}", path.display())),
    }
}

/// Write a `[3, H, W]` or `[1, 3, H, W]` image.
pub fn write_rgb_png(image: &Tensor, path: &Path) -> Result<()> {
    let (h, w) = match image.shape() {
        [3, h, w] | [1, 3, h, w] => (*h, *w),
        other => return Err(Error::Shape(format!("expected an RGB image, got {other:?}"))),
    };
    let d = image.data();
    let plane = h * w;
    let buf = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let k = y as usize * w + x as usize;
        Rgb([to_byte(d[k]), to_byte(d[plane + k]), to_byte(d[2 * plane + k])])
    });
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| save_error(path, e))
}

/// Write a single-channel `[1, H, W]` / `[H, W]` / `[1, 1, H, W]` image.
pub fn write_gray_png(image: &Tensor, path: &Path) -> Result<()> {
    let (h, w) = match image.shape() {
        [h, w] | [1, h, w] | [1, 1, h, w] => (*h, *w),
        other => return Err(Error::Shape(format!("expected a one-channel image, got {other:?}"))),
    };
    let d = image.data();
    let buf = ImageBuffer::from_fn(w as u32, h as u32, |x, y| Luma([to_byte(d[y as usize * w + x as usize])]));
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| save_error(path, e))
}
