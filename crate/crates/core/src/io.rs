//! PNG-backed file formats.
//!
//! * Label maps: two 16-bit grayscale files `<stem>.cat.png` and
//!   `<stem>.inst.png`.
//! * Boundary maps: 8-bit grayscale, 0 or 255; any nonzero value loads as
//!   set.
//! * Soft maps: 8-bit grayscale holding `round(255·p)`; loading returns
//!   `v/255`, so a round trip moves values by at most 1/510.
//! * Images: 8-bit RGB, channels scaled to `[0, 1]`.
//!
//! Every file is structurally validated before decoding: signature, chunk
//! lengths, CRCs and header dimensions, with failures reported as
//! [`FormatError`]s carrying the byte offset.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ColorType, ImageEncoder};

use crate::net::Tensor;
use crate::{BoundaryMap, Error, FormatError, LabelMap, Result, SoftBoundaryMap};

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];
/// Largest accepted width or height.
pub const MAX_SIDE: u32 = 1 << 15;

/// Header facts gathered while walking the chunk list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PngInfo {
    pub width: u32,
    pub height: u32,
    pub bit_depth: u8,
    pub color_type: u8,
}

fn be32(b: &[u8]) -> u32 {
    u32::from_be_bytes(b.try_into().expect("4 bytes"))
}

/// Walks the PNG chunk structure without decompressing pixel data.
pub fn validate_png(bytes: &[u8]) -> std::result::Result<PngInfo, FormatError> {
    if bytes.len() < PNG_SIGNATURE.len() {
        return Err(FormatError::Truncated {
            offset: bytes.len() as u64,
            section: "signature".into(),
        });
    }
    if bytes[..8] != PNG_SIGNATURE {
        return Err(FormatError::MalformedHeader {
            offset: 0,
            detail: "missing PNG signature".into(),
        });
    }
    let mut pos = 8usize;
    let mut info = None;
    let mut seen_idat = false;
    loop {
        let expected = if info.is_none() { "IHDR" } else if seen_idat { "IEND" } else { "IDAT" };
        if bytes.len() - pos < 8 {
            return Err(FormatError::Truncated {
                offset: bytes.len() as u64,
                section: format!("{expected} chunk header"),
            });
        }
        let len = be32(&bytes[pos..pos + 4]) as usize;
        let kind = &bytes[pos + 4..pos + 8];
        let name = String::from_utf8_lossy(kind).into_owned();
        if !kind.iter().all(u8::is_ascii_alphabetic) {
            return Err(FormatError::MalformedHeader {
                offset: pos as u64 + 4,
                detail: "invalid chunk type".into(),
            });
        }
        if len > i32::MAX as usize {
            return Err(FormatError::DimensionOverflow {
                offset: pos as u64,
                detail: format!("chunk length {len}"),
            });
        }
        let data_start = pos + 8;
        if bytes.len() - data_start < len + 4 {
            return Err(FormatError::Truncated {
                offset: bytes.len() as u64,
                section: format!("{name} chunk"),
            });
        }
        let data = &bytes[data_start..data_start + len];
        let crc_at = data_start + len;
        let mut hasher = crc32fast::Hasher::new();
        hasher.update(kind);
        hasher.update(data);
        if hasher.finalize() != be32(&bytes[crc_at..crc_at + 4]) {
            return Err(FormatError::ChecksumMismatch {
                offset: crc_at as u64,
                section: format!("{name} chunk"),
            });
        }
        match kind {
            b"IHDR" => {
                if info.is_some() || len != 13 {
                    return Err(FormatError::MalformedHeader {
                        offset: pos as u64,
                        detail: "bad IHDR chunk".into(),
                    });
                }
                let (width, height) = (be32(&data[0..4]), be32(&data[4..8]));
                for (v, at, what) in [(width, 0, "width"), (height, 4, "height")] {
                    if v == 0 || v > MAX_SIDE {
                        return Err(FormatError::DimensionOverflow {
                            offset: (data_start + at) as u64,
                            detail: format!("{what} {v} outside 1..={MAX_SIDE}"),
                        });
                    }
                }
                info = Some(PngInfo {
                    width,
                    height,
                    bit_depth: data[8],
                    color_type: data[9],
                });
            }
            _ if info.is_none() => {
                return Err(FormatError::MalformedHeader {
                    offset: pos as u64,
                    detail: "first chunk is not IHDR".into(),
                });
            }
            b"IDAT" => seen_idat = true,
            b"IEND" => {
                if !seen_idat {
                    return Err(FormatError::Truncated {
                        offset: pos as u64,
                        section: "IDAT chunk".into(),
                    });
                }
                return Ok(info.expect("checked above"));
            }
            _ => {}
        }
        pos = crc_at + 4;
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn encode_png(data: &[u8], width: usize, height: usize, color: ColorType) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive)
        .write_image(data, width as u32, height as u32, color.into())
        .map_err(|e| Error::InvalidValue(format!("png encoding failed: {e}")))?;
    Ok(out)
}

/// Validates and decodes a PNG that must have the given colour type
/// (0 = gray, 2 = RGB) and bit depth.
fn decode_png(path: &Path, color_type: u8, bit_depth: u8) -> Result<(PngInfo, image::DynamicImage)> {
    let bytes = read(path)?;
    let info = validate_png(&bytes).map_err(|e| Error::format(path, e))?;
    if info.color_type != color_type || info.bit_depth != bit_depth {
        return Err(Error::format(
            path,
            FormatError::Unsupported {
                offset: 24,
                detail: format!(
                    "colour type {} / bit depth {}, expected {color_type} / {bit_depth}",
                    info.color_type, info.bit_depth
                ),
            },
        ));
    }
    let img = image::load(Cursor::new(&bytes), image::ImageFormat::Png).map_err(|e| {
        Error::format(
            path,
            FormatError::MalformedHeader {
                offset: 8,
                detail: format!("undecodable image data: {e}"),
            },
        )
    })?;
    Ok((info, img))
}

/// `<stem>.cat.png` and `<stem>.inst.png`.
pub fn label_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let s = stem.as_os_str().to_owned();
    let mut cat = s.clone();
    cat.push(".cat.png");
    let mut inst = s;
    inst.push(".inst.png");
    (cat.into(), inst.into())
}

fn gray16_bytes(v: &[u16]) -> Vec<u8> {
    // The encoder takes native-endian samples.
    v.iter().flat_map(|x| x.to_ne_bytes()).collect()
}

pub fn save_label_map(lm: &LabelMap, stem: impl AsRef<Path>) -> Result<()> {
    let (cat, inst) = label_paths(stem.as_ref());
    let (w, h) = (lm.width(), lm.height());
    write(&cat, &encode_png(&gray16_bytes(lm.category()), w, h, ColorType::L16)?)?;
    write(&inst, &encode_png(&gray16_bytes(lm.instance()), w, h, ColorType::L16)?)
}

pub fn load_label_map(stem: impl AsRef<Path>) -> Result<LabelMap> {
    let (cat_path, inst_path) = label_paths(stem.as_ref());
    let (ci, cat) = decode_png(&cat_path, 0, 16)?;
    let (ii, inst) = decode_png(&inst_path, 0, 16)?;
    if (ci.width, ci.height) != (ii.width, ii.height) {
        return Err(Error::DimensionMismatch {
            expected: (ci.width as usize, ci.height as usize),
            found: (ii.width as usize, ii.height as usize),
        });
    }
    LabelMap::new(
        ci.width as usize,
        ci.height as usize,
        cat.into_luma16().into_raw(),
        inst.into_luma16().into_raw(),
    )
}

pub fn save_boundary_map(bm: &BoundaryMap, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<u8> = bm.mask().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write(path.as_ref(), &encode_png(&data, bm.width(), bm.height(), ColorType::L8)?)
}

pub fn load_boundary_map(path: impl AsRef<Path>) -> Result<BoundaryMap> {
    let (info, img) = decode_png(path.as_ref(), 0, 8)?;
    let mask = img.into_luma8().into_raw().into_iter().map(|v| v != 0).collect();
    BoundaryMap::new(info.width as usize, info.height as usize, mask)
}

pub fn save_soft_map(soft: &SoftBoundaryMap, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<u8> = soft.confidence().iter().map(|&p| (p * 255.0).round() as u8).collect();
    write(path.as_ref(), &encode_png(&data, soft.width(), soft.height(), ColorType::L8)?)
}

pub fn load_soft_map(path: impl AsRef<Path>) -> Result<SoftBoundaryMap> {
    let (info, img) = decode_png(path.as_ref(), 0, 8)?;
    let conf = img.into_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    SoftBoundaryMap::new(info.width as usize, info.height as usize, conf)
}

/// Saves a 3-channel, batch-1 tensor with values in `[0, 1]` as 8-bit RGB.
pub fn save_image(image: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    if image.batch() != 1 || image.channels() != 3 {
        return Err(Error::ChannelMismatch {
            expected: 3,
            found: image.channels(),
        });
    }
    let n = image.plane_len();
    let mut data = Vec::with_capacity(3 * n);
    for i in 0..n {
        for c in 0..3 {
            data.push((image.plane(c)[i].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    write(path.as_ref(), &encode_png(&data, image.width(), image.height(), ColorType::Rgb8)?)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let (info, img) = decode_png(path.as_ref(), 2, 8)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let raw = img.into_rgb8().into_raw();
    let mut t = Tensor::image(3, h, w);
    for c in 0..3 {
        for (i, v) in t.plane_mut(c).iter_mut().enumerate() {
            *v = raw[3 * i + c] as f64 / 255.0;
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn label_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (w, h) = (7, 5);
        let cat = (0..w * h).map(|_| rng.random_range(0..460)).collect();
        let inst = (0..w * h).map(|_| rng.random::<u16>()).collect();
        let lm = LabelMap::new(w, h, cat, inst).unwrap();
        let stem = dir.path().join("scene");
        save_label_map(&lm, &stem).unwrap();
        assert!(dir.path().join("scene.cat.png").exists());
        assert_eq!(load_label_map(&stem).unwrap(), lm);
    }

    #[test]
    fn boundary_and_soft_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bm = BoundaryMap::new(9, 4, (0..36).map(|_| rng.random_bool(0.3)).collect()).unwrap();
        let p = dir.path().join("b.png");
        save_boundary_map(&bm, &p).unwrap();
        assert_eq!(load_boundary_map(&p).unwrap(), bm);

        let soft = SoftBoundaryMap::new(9, 4, (0..36).map(|_| rng.random::<f64>()).collect()).unwrap();
        let p = dir.path().join("s.png");
        save_soft_map(&soft, &p).unwrap();
        let back = load_soft_map(&p).unwrap();
        for (a, b) in soft.confidence().iter().zip(back.confidence()) {
            assert!((a - b).abs() <= 1.0 / 510.0 + 1e-15);
        }
    }

    #[test]
    fn image_round_trip_on_quantised_values() {
        let dir = tempfile::tempdir().unwrap();
        let data = (0..3 * 6 * 5).map(|i| ((i * 37) % 256) as f64 / 255.0).collect();
        let img = Tensor::from_vec([1, 3, 5, 6], data).unwrap();
        let p = dir.path().join("i.png");
        save_image(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }

    fn sample_png() -> Vec<u8> {
        encode_png(&[0, 255, 0, 255], 2, 2, ColorType::L8).unwrap()
    }

    #[test]
    fn structural_errors_are_distinct() {
        let good = sample_png();
        assert!(validate_png(&good).is_ok());

        let mut bad = good.clone();
        bad[1] = b'X';
        assert!(matches!(validate_png(&bad), Err(FormatError::MalformedHeader { offset: 0, .. })));

        let mut bad = good.clone();
        bad[16..20].copy_from_slice(&(MAX_SIDE + 1).to_be_bytes());
        // Fix the CRC so the dimension check is what fires.
        let crc = crc32fast::hash(&bad[12..29]);
        bad[29..33].copy_from_slice(&crc.to_be_bytes());
        assert!(matches!(validate_png(&bad), Err(FormatError::DimensionOverflow { offset: 16, .. })));

        let mut bad = good.clone();
        bad[20] ^= 1;
        assert!(matches!(
            validate_png(&bad),
            Err(FormatError::ChecksumMismatch { offset: 29, ref section }) if section == "IHDR chunk"
        ));

        let cut = &good[..good.len() - 12];
        assert!(matches!(
            validate_png(cut),
            Err(FormatError::Truncated { ref section, .. }) if section.starts_with("IEND")
        ));
        assert!(matches!(
            validate_png(&good[..20]),
            Err(FormatError::Truncated { ref section, .. }) if section == "IHDR chunk"
        ));
    }

    #[test]
    fn load_reports_path_and_kind() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.png");
        let good = sample_png();
        std::fs::write(&p, &good[..good.len() - 5]).unwrap();
        let err = load_boundary_map(&p).unwrap_err();
        assert!(matches!(err, Error::Format { source: FormatError::Truncated { .. }, .. }));
        assert!(err.to_string().contains("t.png"));

        // An RGB file is not a boundary map.
        let img = Tensor::image(3, 2, 2);
        save_image(&img, &p).unwrap();
        assert!(matches!(
            load_boundary_map(&p),
            Err(Error::Format { source: FormatError::Unsupported { .. }, .. })
        ));
        assert!(matches!(load_boundary_map(dir.path().join("missing.png")), Err(Error::Io { .. })));
    }
}
