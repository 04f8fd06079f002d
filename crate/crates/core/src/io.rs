//! Raster file I/O for images and masks (PNG and binary PGM).
//!
//! Masks are stored as 8-bit single-channel rasters: background 0, foreground
//! 255. On read, any value `>= 128` is foreground.

use std::fs::File;
use std::io::{BufWriter, ErrorKind};
use std::path::{Path, PathBuf};

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};
use thiserror::Error;

use crate::grid::{BinaryMask, GrayImage, Image};

/// Threshold at or above which a stored mask value is foreground.
pub const MASK_THRESHOLD: u8 = 128;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("cannot decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("unsupported raster format for {path}: {message}")]
    UnsupportedFormat { path: PathBuf, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RasterError {
    fn unsupported(path: &Path, message: impl Into<String>) -> Self {
        Self::UnsupportedFormat {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Container {
    Png,
    Pgm,
}

fn container_for(path: &Path) -> Result<Container, RasterError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => Ok(Container::Png),
        Some("pgm") => Ok(Container::Pgm),
        _ => Err(RasterError::unsupported(
            path,
            "expected a .png or .pgm extension",
        )),
    }
}

fn decode(path: &Path) -> Result<DynamicImage, RasterError> {
    let reader = ImageReader::open(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => RasterError::FileNotFound(path.to_path_buf()),
        _ => RasterError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    let reader = reader.with_guessed_format().map_err(|e| RasterError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => {
            return Err(RasterError::unsupported(
                path,
                format!("{other:?} is not PNG or PGM"),
            ))
        }
        None => return Err(RasterError::unsupported(path, "unrecognized file signature")),
    }
    reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => RasterError::unsupported(path, u.to_string()),
        // The file opened fine, so read failures here mean a truncated raster.
        other => RasterError::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

/// Reads an 8-bit single-channel raster as a mask (`>= 128` is foreground).
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask, RasterError> {
    let path = path.as_ref();
    let gray = match decode(path)? {
        DynamicImage::ImageLuma8(buf) => buf,
        other => {
            return Err(RasterError::unsupported(
                path,
                format!(
                    "mask must be 8-bit single-channel, found {:?}",
                    other.color()
                ),
            ))
        }
    };
    let (w, h) = gray.dimensions();
    let pixels = gray.into_raw().into_iter().map(|v| v >= MASK_THRESHOLD).collect();
    BinaryMask::from_pixels(w as usize, h as usize, pixels)
        .ok_or_else(|| RasterError::Decode {
            path: path.to_path_buf(),
            message: "empty raster".into(),
        })
}

/// Writes a mask as 0/255 8-bit grayscale; container chosen by extension.
pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let bytes: Vec<u8> = mask.pixels().iter().map(|&v| if v { 255 } else { 0 }).collect();
    write_raw(path.as_ref(), &bytes, mask.width(), mask.height(), ExtendedColorType::L8)
}

/// Reads a PNG or PGM as RGB. Grayscale sources are replicated across
/// channels and alpha is dropped.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image, RasterError> {
    let path = path.as_ref();
    let rgb = match decode(path)? {
        img @ (DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_)) => img.into_rgb8(),
        other => {
            return Err(RasterError::unsupported(
                path,
                format!("expected 8-bit grayscale or RGB, found {:?}", other.color()),
            ))
        }
    };
    let (w, h) = rgb.dimensions();
    let pixels = rgb.pixels().map(|p| p.0).collect();
    Image::from_pixels(w as usize, h as usize, pixels).ok_or_else(|| RasterError::Decode {
        path: path.to_path_buf(),
        message: "empty raster".into(),
    })
}

/// Reads a PNG or PGM and converts it to luma.
pub fn read_gray(path: impl AsRef<Path>) -> Result<GrayImage, RasterError> {
    Ok(crate::grid::to_luma(&read_image(path)?))
}

/// Writes an RGB image as PNG. A `.pgm` destination stores the luma channel.
pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let path = path.as_ref();
    match container_for(path)? {
        Container::Png => {
            let bytes: Vec<u8> = image.pixels().iter().flatten().copied().collect();
            write_raw(path, &bytes, image.width(), image.height(), ExtendedColorType::Rgb8)
        }
        Container::Pgm => write_gray(&crate::grid::to_luma(image), path),
    }
}

pub fn write_gray(gray: &GrayImage, path: impl AsRef<Path>) -> Result<(), RasterError> {
    write_raw(
        path.as_ref(),
        gray.pixels(),
        gray.width(),
        gray.height(),
        ExtendedColorType::L8,
    )
}

fn write_raw(
    path: &Path,
    bytes: &[u8],
    width: usize,
    height: usize,
    color: ExtendedColorType,
) -> Result<(), RasterError> {
    let container = container_for(path)?;
    let io_err = |source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    let result = match container {
        Container::Png => PngEncoder::new(&mut out).write_image(
            bytes,
            width as u32,
            height as u32,
            color,
        ),
        Container::Pgm => {
            if color != ExtendedColorType::L8 {
                return Err(RasterError::unsupported(path, "PGM holds one channel only"));
            }
            PnmEncoder::new(&mut out)
                .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
                .write_image(bytes, width as u32, height as u32, color)
        }
    };
    result.map_err(|e| match e {
        image::ImageError::IoError(source) => io_err(source),
        other => RasterError::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    std::io::Write::flush(&mut out).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_pgm(path: &Path, w: usize, h: usize, data: &[u8]) {
        let mut f = File::create(path).unwrap();
        write!(f, "P5\n{w} {h}\n255\n").unwrap();
        f.write_all(data).unwrap();
    }

    #[test]
    fn threshold_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        write_pgm(&p, 4, 1, &[0, 127, 128, 255]);
        let m = read_mask(&p).unwrap();
        assert_eq!(m.pixels(), &[false, false, true, true]);
    }

    #[test]
    fn empty_and_full_masks_write_zero_and_255() {
        let dir = tempfile::tempdir().unwrap();
        for (value, byte) in [(false, 0u8), (true, 255u8)] {
            let p = dir.path().join(format!("m{value}.pgm"));
            write_mask(&BinaryMask::filled(3, 2, value), &p).unwrap();
            let raw = std::fs::read(&p).unwrap();
            assert!(raw.starts_with(b"P5"));
            assert!(raw[raw.len() - 6..].iter().all(|&b| b == byte));
            let png = dir.path().join(format!("m{value}.png"));
            write_mask(&BinaryMask::filled(3, 2, value), &png).unwrap();
            let decoded = image::open(&png).unwrap().into_luma8();
            assert!(decoded.into_raw().iter().all(|&b| b == byte));
        }
    }

    #[test]
    fn missing_file() {
        let err = read_mask("/nonexistent/definitely/missing.png").unwrap_err();
        assert!(matches!(err, RasterError::FileNotFound(_)), "{err}");
    }

    #[test]
    fn malformed_png_is_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        let mut bytes = b"\x89PNG\r\n\x1a\n".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 13, b'I', b'H', b'D', b'R', 1, 2, 3]);
        std::fs::write(&p, bytes).unwrap();
        let err = read_mask(&p).unwrap_err();
        assert!(matches!(err, RasterError::Decode { .. }), "{err}");
    }

    #[test]
    fn unknown_format_and_rgb_mask_are_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        std::fs::write(&p, b"GIF89a garbage").unwrap();
        assert!(matches!(
            read_mask(&p).unwrap_err(),
            RasterError::UnsupportedFormat { .. }
        ));

        let rgb = dir.path().join("rgb.png");
        write_image(&Image::filled(2, 2, [1, 2, 3]), &rgb).unwrap();
        assert!(matches!(
            read_mask(&rgb).unwrap_err(),
            RasterError::UnsupportedFormat { .. }
        ));
        assert!(matches!(
            write_mask(&BinaryMask::new(1, 1), dir.path().join("m.jpg")).unwrap_err(),
            RasterError::UnsupportedFormat { .. }
        ));
    }

    #[test]
    fn image_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::filled(3, 2, [0, 0, 0]);
        img.set(1, 1, [200, 10, 30]);
        let p = dir.path().join("i.png");
        write_image(&img, &p).unwrap();
        assert_eq!(read_image(&p).unwrap(), img);

        let g = GrayImage::from_fn(5, 4, |x, y| (x * 40 + y) as u8);
        let pg = dir.path().join("g.pgm");
        write_gray(&g, &pg).unwrap();
        assert_eq!(read_gray(&pg).unwrap(), g);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn mask_round_trip(w in 1usize..40, h in 1usize..40, seed in any::<u64>(), pgm in any::<bool>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(0.5));
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join(if pgm { "m.pgm" } else { "m.png" });
            write_mask(&m, &p).unwrap();
            prop_assert_eq!(read_mask(&p).unwrap(), m);
        }
    }
}
