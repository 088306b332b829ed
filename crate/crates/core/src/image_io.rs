//! Raster input and output.
//!
//! Reads binary PGM (P5), binary PPM (P6) and 8-bit PNG; writes PNG label
//! maps, PNG contour overlays and one binary PGM mask per phase.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::field::{Grid, ImageField, Partition};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Integer raster as read from disk. Samples are interleaved per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub max_value: u8,
    pub samples: Vec<u8>,
}

impl RawImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        max_value: u8,
        samples: Vec<u8>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "{channels} channels; expected 1 or 3"
            )));
        }
        if max_value == 0 {
            return Err(Error::InvalidArgument("max value must be positive".into()));
        }
        if samples.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} samples for a {width}x{height}x{channels} image",
                samples.len()
            )));
        }
        Ok(RawImage {
            width,
            height,
            channels,
            max_value,
            samples,
        })
    }

    /// Quantizes a real image in `[0, 1]` to 8 bits, clamping out-of-range
    /// values.
    pub fn from_field(f: &ImageField) -> Result<Self> {
        if f.channels() != 1 && f.channels() != 3 {
            return Err(Error::InvalidArgument(format!(
                "cannot rasterize a {}-channel image",
                f.channels()
            )));
        }
        let samples = f
            .values()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        RawImage::new(f.grid().nx(), f.grid().ny(), f.channels(), 255, samples)
    }

    fn to_rgb8(&self) -> Vec<u8> {
        let scale = |s: u8| -> u8 {
            if self.max_value == 255 {
                s
            } else {
                ((s as u32 * 255 + self.max_value as u32 / 2) / self.max_value as u32) as u8
            }
        };
        match self.channels {
            3 => self.samples.iter().map(|&s| scale(s)).collect(),
            _ => self
                .samples
                .iter()
                .flat_map(|&s| {
                    let v = scale(s);
                    [v, v, v]
                })
                .collect(),
        }
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RawImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<RawImage> {
    if bytes.is_empty() {
        return Err(Error::CorruptHeader("file is empty".into()));
    }
    if bytes.starts_with(b"P5") {
        decode_pnm(bytes, 1)
    } else if bytes.starts_with(b"P6") {
        decode_pnm(bytes, 3)
    } else if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else if PNG_MAGIC.starts_with(bytes) || bytes == b"P" {
        Err(Error::CorruptHeader(
            "file ends inside the signature".into(),
        ))
    } else {
        Err(Error::UnsupportedFormat(
            "expected binary PGM (P5), binary PPM (P6) or PNG".into(),
        ))
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::CorruptHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptHeader(format!("{what} out of range")))
    }
}

fn decode_pnm(bytes: &[u8], channels: usize) -> Result<RawImage> {
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let max_value = cur.number("max value")?;
    if width == 0 || height == 0 {
        return Err(Error::CorruptHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if max_value == 0 || max_value > 65535 {
        return Err(Error::CorruptHeader(format!("max value {max_value}")));
    }
    if max_value > 255 {
        return Err(Error::UnsupportedFormat("16-bit samples".into()));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::CorruptHeader("header not terminated".into())),
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::CorruptHeader("dimensions overflow".into()))?;
    let data = &bytes[cur.pos..];
    if data.len() < expected {
        return Err(Error::CorruptHeader(format!(
            "expected {expected} bytes of pixel data, found {}",
            data.len()
        )));
    }
    RawImage::new(
        width,
        height,
        channels,
        max_value as u8,
        data[..expected].to_vec(),
    )
}

fn decode_png(bytes: &[u8]) -> Result<RawImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::CorruptHeader(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img.color() {
        ColorType::L8 => RawImage::new(w, h, 1, 255, img.into_luma8().into_raw()),
        ColorType::La8 => RawImage::new(w, h, 1, 255, img.to_luma8().into_raw()),
        ColorType::Rgb8 => RawImage::new(w, h, 3, 255, img.into_rgb8().into_raw()),
        ColorType::Rgba8 => RawImage::new(w, h, 3, 255, img.to_rgb8().into_raw()),
        other => Err(Error::UnsupportedFormat(format!(
            "PNG color type {other:?}"
        ))),
    }
}

/// Maps every channel affinely from `[0, max_value]` to `[0, 1]`.
pub fn normalize(img: &RawImage) -> Result<ImageField> {
    let grid = Grid::for_image(img.width, img.height)?;
    let max = img.max_value as f64;
    let values = img.samples.iter().map(|&s| s as f64 / max).collect();
    ImageField::new(grid, img.channels, values)
}

/// Phase index per pixel, as serialized to disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub phases: usize,
    pub labels: Vec<u16>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, phases: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a {width}x{height} map",
                labels.len()
            )));
        }
        if let Some((pixel, &l)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= phases)
        {
            return Err(Error::LabelOutOfRange {
                pixel,
                label: l as usize,
                phases,
            });
        }
        Ok(LabelMap {
            width,
            height,
            phases,
            labels,
        })
    }

    pub fn from_partition(u: &Partition) -> Self {
        LabelMap {
            width: u.grid().nx(),
            height: u.grid().ny(),
            phases: u.phases(),
            labels: u.labels().to_vec(),
        }
    }

    pub fn to_partition(&self) -> Result<Partition> {
        Partition::from_labels(
            Grid::for_image(self.width, self.height)?,
            self.labels.clone(),
            self.phases,
        )
    }
}

pub type Rgb = [u8; 3];

pub const CONTOUR_COLOR: Rgb = [255, 0, 0];

const BASE_PALETTE: [Rgb; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

/// `n` pairwise distinct colors. The first ten are fixed; the rest are
/// derived from the phase index.
pub fn default_palette(n: usize) -> Vec<Rgb> {
    let mut out: Vec<Rgb> = BASE_PALETTE.iter().copied().take(n).collect();
    let mut i = 0u32;
    while out.len() < n {
        // walk a 3-D lattice of 16 levels per axis, skipping used colors
        let c = [
            ((i % 16) * 17) as u8,
            (((i / 16) % 16) * 17) as u8,
            (((i / 256) % 16) * 17) as u8,
        ];
        if !out.contains(&c) {
            out.push(c);
        }
        i += 1;
    }
    out
}

fn check_palette(palette: &[Rgb], phases: usize) -> Result<()> {
    if palette.len() < phases {
        return Err(Error::InvalidArgument(format!(
            "palette has {} colors for {phases} phases",
            palette.len()
        )));
    }
    for (i, a) in palette[..phases].iter().enumerate() {
        if palette[..i].contains(a) {
            return Err(Error::InvalidArgument(format!(
                "palette color {i} is repeated"
            )));
        }
    }
    Ok(())
}

fn encode_png(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Vec<u8>> {
    let img = match channels {
        1 => image::GrayImage::from_raw(width as u32, height as u32, data)
            .map(DynamicImage::ImageLuma8),
        _ => image::RgbImage::from_raw(width as u32, height as u32, data)
            .map(DynamicImage::ImageRgb8),
    }
    .ok_or_else(|| Error::Encode("buffer does not match dimensions".into()))?;
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn render_label_map(labels: &LabelMap, palette: &[Rgb]) -> Result<Vec<u8>> {
    check_palette(palette, labels.phases)?;
    let data = labels
        .labels
        .iter()
        .flat_map(|&l| palette[l as usize])
        .collect();
    encode_png(labels.width, labels.height, 3, data)
}

/// Writes the label map as an RGB PNG, one palette color per phase.
pub fn write_label_map(labels: &LabelMap, palette: &[Rgb], path: impl AsRef<Path>) -> Result<()> {
    let bytes = render_label_map(labels, palette)?;
    write_bytes(path.as_ref(), &bytes)
}

/// Reads a label map written by [`write_label_map`] with the same palette.
/// The phase count is the palette length.
pub fn load_label_map(path: impl AsRef<Path>, palette: &[Rgb]) -> Result<LabelMap> {
    let img = load_image(path)?;
    let rgb = img.to_rgb8();
    let labels = rgb
        .chunks_exact(3)
        .enumerate()
        .map(|(p, c)| {
            palette
                .iter()
                .position(|q| q[..] == c[..])
                .map(|i| i as u16)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("pixel {p} has color {c:?} outside the palette"))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    LabelMap::new(img.width, img.height, palette.len(), labels)
}

fn is_boundary(labels: &LabelMap, x: usize, y: usize) -> bool {
    let (w, h) = (labels.width, labels.height);
    let here = labels.labels[y * w + x];
    let differs = |xx: usize, yy: usize| labels.labels[yy * w + xx] != here;
    (x > 0 && differs(x - 1, y))
        || (x + 1 < w && differs(x + 1, y))
        || (y > 0 && differs(x, y - 1))
        || (y + 1 < h && differs(x, y + 1))
}

/// The input image as 8-bit RGB with every pixel that has a 4-neighbor of a
/// different label painted in [`CONTOUR_COLOR`].
pub fn contour_overlay(img: &RawImage, labels: &LabelMap) -> Result<RawImage> {
    if img.width != labels.width || img.height != labels.height {
        return Err(Error::ShapeMismatch(format!(
            "image is {}x{}, labels are {}x{}",
            img.width, img.height, labels.width, labels.height
        )));
    }
    let mut rgb = img.to_rgb8();
    for y in 0..img.height {
        for x in 0..img.width {
            if is_boundary(labels, x, y) {
                let p = 3 * (y * img.width + x);
                rgb[p..p + 3].copy_from_slice(&CONTOUR_COLOR);
            }
        }
    }
    RawImage::new(img.width, img.height, 3, 255, rgb)
}

pub fn write_contour_overlay(
    img: &RawImage,
    labels: &LabelMap,
    path: impl AsRef<Path>,
) -> Result<()> {
    let overlay = contour_overlay(img, labels)?;
    write_png(&overlay, path)
}

pub fn write_png(img: &RawImage, path: impl AsRef<Path>) -> Result<()> {
    let data = if img.max_value == 255 {
        img.samples.clone()
    } else {
        let rgb = img.to_rgb8();
        if img.channels == 1 {
            rgb.chunks_exact(3).map(|c| c[0]).collect()
        } else {
            rgb
        }
    };
    let bytes = encode_png(img.width, img.height, img.channels, data)?;
    write_bytes(path.as_ref(), &bytes)
}

/// Binary PGM (P5) bytes.
pub fn encode_pgm(width: usize, height: usize, samples: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(samples);
    out
}

/// Writes `phase_<i>.pgm` for every phase into `dir`, 255 inside and 0
/// outside. Returns the written paths in phase order.
pub fn write_phase_masks(labels: &LabelMap, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    (0..labels.phases)
        .map(|i| {
            let samples: Vec<u8> = labels
                .labels
                .iter()
                .map(|&l| if l as usize == i { 255 } else { 0 })
                .collect();
            let path = dir.join(format!("phase_{i}.pgm"));
            write_bytes(&path, &encode_pgm(labels.width, labels.height, &samples))?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let bytes = encode_pgm(2, 2, &[0, 255, 255, 0]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(
            img,
            RawImage::new(2, 2, 1, 255, vec![0, 255, 255, 0]).unwrap()
        );
    }

    #[test]
    fn pgm_with_comments() {
        let mut bytes = b"P5\n# made by hand\n2 2 # width height\n15\n".to_vec();
        bytes.extend_from_slice(&[0, 7, 15, 15]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!((img.width, img.height, img.max_value), (2, 2, 15));
        let f = normalize(&img).unwrap();
        assert_eq!(f.values(), &[0.0, 7.0 / 15.0, 1.0, 1.0]);
    }

    #[test]
    fn ppm_decodes_rgb() {
        let mut bytes = b"P6 1 2 255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.channels, 3);
        assert_eq!(img.samples, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn truncated_data_is_corrupt() {
        let mut bytes = encode_pgm(4, 4, &[0; 16]);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(decode_image(&bytes), Err(Error::CorruptHeader(_))));
        assert!(matches!(
            decode_image(b"P5\n4 "),
            Err(Error::CorruptHeader(_))
        ));
        assert!(matches!(
            decode_image(&PNG_MAGIC[..4]),
            Err(Error::CorruptHeader(_))
        ));
    }

    #[test]
    fn truncated_png_is_corrupt() {
        let labels = LabelMap::new(4, 4, 1, vec![0; 16]).unwrap();
        let mut png = render_label_map(&labels, &default_palette(1)).unwrap();
        png.truncate(30);
        assert!(matches!(decode_image(&png), Err(Error::CorruptHeader(_))));
    }

    #[test]
    fn unsupported_formats() {
        assert!(matches!(
            decode_image(b"GIF89a...."),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            decode_image(b"P2\n2 2\n255\n0 0 0 0"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            decode_image(b"P5\n1 1\n65535\n\x00\x00"),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn missing_file_is_unreadable() {
        assert!(matches!(
            load_image("/nonexistent/definitely/not/here.png"),
            Err(Error::Unreadable { .. })
        ));
    }

    #[test]
    fn normalize_endpoints() {
        let img = RawImage::new(2, 2, 1, 255, vec![0, 128, 255, 255]).unwrap();
        let f = normalize(&img).unwrap();
        assert_eq!(f.values()[0], 0.0);
        assert!((f.values()[1] - 0.501_960_784_313_725_5).abs() < 1e-15);
        assert_eq!(f.values()[2], 1.0);
    }

    #[test]
    fn palette_is_distinct() {
        let p = default_palette(300);
        for i in 0..p.len() {
            assert!(!p[..i].contains(&p[i]));
        }
    }

    #[test]
    fn uniform_overlay_is_identity() {
        let img = RawImage::new(3, 2, 3, 255, (0..18).collect()).unwrap();
        let labels = LabelMap::new(3, 2, 1, vec![0; 6]).unwrap();
        assert_eq!(contour_overlay(&img, &labels).unwrap(), img);
    }

    #[test]
    fn half_split_marks_two_columns() {
        let img = RawImage::new(4, 4, 1, 255, vec![100; 16]).unwrap();
        let labels =
            LabelMap::new(4, 4, 2, (0..16).map(|p| (p % 4 >= 2) as u16).collect()).unwrap();
        let out = contour_overlay(&img, &labels).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let px = &out.samples[3 * (y * 4 + x)..3 * (y * 4 + x) + 3];
                if x == 1 || x == 2 {
                    assert_eq!(px, &CONTOUR_COLOR);
                } else {
                    assert_eq!(px, &[100, 100, 100]);
                }
            }
        }
    }

    #[test]
    fn overlay_size_mismatch() {
        let img = RawImage::new(4, 4, 1, 255, vec![0; 16]).unwrap();
        let labels = LabelMap::new(4, 2, 1, vec![0; 8]).unwrap();
        assert!(matches!(
            contour_overlay(&img, &labels),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn label_map_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.png");
        let labels = LabelMap::new(4, 4, 4, (0..16).map(|p| (p / 4) as u16).collect()).unwrap();
        let palette = default_palette(4);
        write_label_map(&labels, &palette, &path).unwrap();
        let img = load_image(&path).unwrap();
        let mut colors: Vec<&[u8]> = img.samples.chunks(3).collect();
        colors.sort();
        colors.dedup();
        assert_eq!(colors.len(), 4);
        assert_eq!(load_label_map(&path, &palette).unwrap(), labels);

        let again = render_label_map(&labels, &palette).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), again);

        let one = LabelMap::new(2, 2, 1, vec![0; 4]).unwrap();
        write_label_map(&one, &palette, &path).unwrap();
        let img = load_image(&path).unwrap();
        assert!(img.samples.chunks(3).all(|c| c == palette[0]));
    }

    #[test]
    fn unwritable_destination() {
        let labels = LabelMap::new(2, 2, 1, vec![0; 4]).unwrap();
        let err = write_label_map(
            &labels,
            &default_palette(1),
            "/nonexistent-dir/x/labels.png",
        );
        assert!(matches!(err, Err(Error::Io { .. })));
    }

    #[test]
    fn masks_are_binary() {
        let dir = tempfile::tempdir().unwrap();
        let labels = LabelMap::new(2, 2, 3, vec![0, 1, 1, 2]).unwrap();
        let paths = write_phase_masks(&labels, dir.path()).unwrap();
        assert_eq!(paths[1].file_name().unwrap(), "phase_1.pgm");
        let m = load_image(&paths[1]).unwrap();
        assert_eq!(m.samples, vec![0, 255, 255, 0]);
    }
}
