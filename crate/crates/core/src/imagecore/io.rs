use std::path::Path;

use image::{DynamicImage, ExtendedColorType, ImageFormat, ImageReader};

use super::{BinaryMask, Image, ProbabilityMap, Trimap};
use crate::error::{Error, Result};

/// Bit depth used when writing probability maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbabilityDepth {
    #[default]
    Eight,
    Sixteen,
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader.with_guessed_format().map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| match e {
        image::ImageError::IoError(source) => Error::io(path, source),
        image::ImageError::Unsupported(u) => Error::Unsupported {
            path: path.to_path_buf(),
            cause: u.to_string(),
        },
        other => Error::Decode {
            path: path.to_path_buf(),
            cause: other.to_string(),
        },
    })
}

enum Samples {
    Eight(Vec<u8>),
    Sixteen(Vec<u16>),
}

/// Decodes to an `HxWxC` sample buffer, rejecting float formats.
fn samples(path: &Path, img: DynamicImage) -> Result<(usize, usize, usize, Samples)> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let out = match img {
        DynamicImage::ImageLuma8(b) => (1, Samples::Eight(b.into_raw())),
        DynamicImage::ImageLumaA8(b) => (2, Samples::Eight(b.into_raw())),
        DynamicImage::ImageRgb8(b) => (3, Samples::Eight(b.into_raw())),
        DynamicImage::ImageRgba8(b) => (4, Samples::Eight(b.into_raw())),
        DynamicImage::ImageLuma16(b) => (1, Samples::Sixteen(b.into_raw())),
        DynamicImage::ImageLumaA16(b) => (2, Samples::Sixteen(b.into_raw())),
        DynamicImage::ImageRgb16(b) => (3, Samples::Sixteen(b.into_raw())),
        DynamicImage::ImageRgba16(b) => (4, Samples::Sixteen(b.into_raw())),
        other => {
            return Err(Error::Unsupported {
                path: path.to_path_buf(),
                cause: format!("sample format {:?}", other.color()),
            })
        }
    };
    if h == 0 || w == 0 {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            cause: "zero-sized image".into(),
        });
    }
    Ok((h, w, out.0, out.1))
}

fn color_channels(channels: usize) -> usize {
    // Gray(+alpha) has one color channel, RGB(+alpha) three.
    if channels <= 2 {
        1
    } else {
        3
    }
}

/// Loads an 8- or 16-bit PNG (gray or RGB, alpha dropped) as an RGB image.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let (h, w, ch, s) = samples(path, decode(path)?)?;
    let colors = color_channels(ch);
    let mut data = Vec::with_capacity(h * w * 3);
    let mut push = |px: &[f32]| {
        if colors == 1 {
            data.extend_from_slice(&[px[0], px[0], px[0]]);
        } else {
            data.extend_from_slice(&px[..3]);
        }
    };
    match s {
        Samples::Eight(v) => {
            for px in v.chunks_exact(ch) {
                let f: Vec<f32> = px.iter().map(|&b| b as f32 / 255.0).collect();
                push(&f);
            }
        }
        Samples::Sixteen(v) => {
            for px in v.chunks_exact(ch) {
                let f: Vec<f32> = px.iter().map(|&b| b as f32 / 65535.0).collect();
                push(&f);
            }
        }
    }
    Image::new(h, w, data)
}

/// Single effective channel as values in `0..=max`, plus `max`.
fn single_channel(path: &Path) -> Result<(usize, usize, Vec<u32>, u32)> {
    let (h, w, ch, s) = samples(path, decode(path)?)?;
    let colors = color_channels(ch);
    let (raw, max): (Vec<u32>, u32) = match s {
        Samples::Eight(v) => (v.into_iter().map(u32::from).collect(), 255),
        Samples::Sixteen(v) => (v.into_iter().map(u32::from).collect(), 65535),
    };
    let mut out = Vec::with_capacity(h * w);
    for px in raw.chunks_exact(ch) {
        if colors == 3 && !(px[0] == px[1] && px[1] == px[2]) {
            return Err(Error::Unsupported {
                path: path.to_path_buf(),
                cause: "multi-channel map with unequal channels".into(),
            });
        }
        out.push(px[0]);
    }
    Ok((h, w, out, max))
}

/// Loads a ground-truth mask; a pixel is foreground iff its intensity is at
/// least 128/255 of full scale.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let (h, w, v, max) = single_channel(path)?;
    // v / max >= 128 / 255, in integers
    let data = v
        .into_iter()
        .map(|x| u8::from(x as u64 * 255 >= 128 * max as u64))
        .collect();
    BinaryMask::new(h, w, data)
}

/// Loads a gray PNG as probabilities (`value / full scale`).
pub fn load_probability(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    let path = path.as_ref();
    let (h, w, v, max) = single_channel(path)?;
    let data = v.into_iter().map(|x| x as f32 / max as f32).collect();
    ProbabilityMap::new(h, w, data)
}

/// Loads a trimap PNG; every byte must be 0, 128 or 255.
pub fn load_trimap(path: impl AsRef<Path>) -> Result<Trimap> {
    let path = path.as_ref();
    let (h, w, v, max) = single_channel(path)?;
    if max != 255 {
        return Err(Error::Unsupported {
            path: path.to_path_buf(),
            cause: "trimaps must be 8-bit".into(),
        });
    }
    Trimap::new(h, w, v.into_iter().map(|x| x as u8).collect()).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        cause: e.to_string(),
    })
}

fn write_png(
    path: &Path,
    bytes: &[u8],
    h: usize,
    w: usize,
    color: ExtendedColorType,
) -> Result<()> {
    image::save_buffer_with_format(path, bytes, w as u32, h as u32, color, ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(source) => Error::io(path, source),
            other => Error::Encode {
                path: path.to_path_buf(),
                cause: other.to_string(),
            },
        })
}

/// Writes an 8-bit grayscale PNG whose bytes are exactly the trimap values.
pub fn save_trimap(t: &Trimap, path: impl AsRef<Path>) -> Result<()> {
    write_png(path.as_ref(), t.data(), t.height(), t.width(), ExtendedColorType::L8)
}

/// Writes a mask as 0/255 bytes.
pub fn save_mask(m: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = m.data().iter().map(|&v| v * 255).collect();
    write_png(path.as_ref(), &bytes, m.height(), m.width(), ExtendedColorType::L8)
}

/// Writes probabilities rounded to the nearest representable level.
pub fn save_probability(
    q: &ProbabilityMap,
    path: impl AsRef<Path>,
    depth: ProbabilityDepth,
) -> Result<()> {
    let path = path.as_ref();
    match depth {
        ProbabilityDepth::Eight => {
            let bytes: Vec<u8> = q
                .data()
                .iter()
                .map(|&v| (v as f64 * 255.0).round() as u8)
                .collect();
            write_png(path, &bytes, q.height(), q.width(), ExtendedColorType::L8)
        }
        ProbabilityDepth::Sixteen => {
            let words: Vec<u16> = q
                .data()
                .iter()
                .map(|&v| (v as f64 * 65535.0).round() as u16)
                .collect();
            let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
                image::ImageBuffer::from_raw(q.width() as u32, q.height() as u32, words)
                    .expect("buffer length matches dimensions");
            buf.save_with_format(path, ImageFormat::Png)
                .map_err(|e| match e {
                    image::ImageError::IoError(source) => Error::io(path, source),
                    other => Error::Encode {
                        path: path.to_path_buf(),
                        cause: other.to_string(),
                    },
                })
        }
    }
}

/// Writes an 8-bit RGB PNG.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v as f64 * 255.0).round() as u8)
        .collect();
    write_png(
        path.as_ref(),
        &bytes,
        img.height(),
        img.width(),
        ExtendedColorType::Rgb8,
    )
}
