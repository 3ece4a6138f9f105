//! Region covariance matrix (RCM) descriptors from grayscale images.
//!
//! A five-channel feature stack (intensity plus absolute first and second
//! derivatives) is computed per pixel; the sample covariance of those
//! feature vectors over a region is the region's SPD descriptor.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spd::{make_spd, SpdMatrix};

/// Grayscale image with row-major intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("image has non-finite pixels".into()));
        }
        if pixels.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Usage(
                "pixel intensities must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Parses either supported format, dispatching on the magic bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(b"P5") {
            Self::from_pgm_bytes(bytes)
        } else if bytes.starts_with(b"RCMF") {
            Self::from_rcmf_bytes(bytes)
        } else {
            Err(Error::Usage(
                "unknown image format: expected a P5 PGM or RCMF header".into(),
            ))
        }
    }

    /// Parses a binary 8-bit PGM ("P5"). Intensities are normalized by the
    /// header's maxval.
    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = 0usize;
        let mut fields = [0usize; 3];

        if bytes.len() < 2 || &bytes[0..2] != b"P5" {
            return Err(Error::Usage("not a binary PGM: missing P5 magic".into()));
        }
        cursor += 2;

        for field in fields.iter_mut() {
            // Skip whitespace and '#' comments between header tokens.
            loop {
                match bytes.get(cursor) {
                    Some(b) if b.is_ascii_whitespace() => cursor += 1,
                    Some(b'#') => {
                        while let Some(&b) = bytes.get(cursor) {
                            cursor += 1;
                            if b == b'\n' {
                                break;
                            }
                        }
                    }
                    Some(_) => break,
                    None => return Err(Error::Usage("truncated PGM header".into())),
                }
            }
            let start = cursor;
            while bytes
                .get(cursor)
                .map(|b| b.is_ascii_digit())
                .unwrap_or(false)
            {
                cursor += 1;
            }
            if start == cursor {
                return Err(Error::Usage("malformed PGM header token".into()));
            }
            *field = std::str::from_utf8(&bytes[start..cursor])
                .expect("digits are valid UTF-8")
                .parse()
                .map_err(|_| Error::Usage("PGM header value out of range".into()))?;
        }

        let [width, height, maxval] = fields;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Usage(format!(
                "only 8-bit PGM supported, got maxval {maxval}"
            )));
        }
        // Exactly one whitespace byte separates the header from the raster.
        if !bytes
            .get(cursor)
            .map(|b| b.is_ascii_whitespace())
            .unwrap_or(false)
        {
            return Err(Error::Usage("missing separator before PGM raster".into()));
        }
        cursor += 1;

        let expected = width
            .checked_mul(height)
            .ok_or_else(|| Error::Usage("PGM dimensions overflow".into()))?;
        let raster = &bytes[cursor..];
        if raster.len() < expected {
            return Err(Error::Usage(format!(
                "PGM raster truncated: expected {expected} bytes, got {}",
                raster.len()
            )));
        }
        let scale = 1.0 / maxval as f64;
        let pixels = raster[..expected]
            .iter()
            .map(|&b| b as f64 * scale)
            .collect();
        Self::from_pixels(width, height, pixels)
    }

    /// Parses the raw float32 format: magic "RCMF", u32 width, u32 height,
    /// u32 reserved, then width·height little-endian f32 values row-major.
    /// Values are clamped into [0, 1].
    pub fn from_rcmf_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[0..4] != b"RCMF" {
            return Err(Error::Usage("not an RCMF image: missing magic".into()));
        }
        let read_u32 =
            |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let width = read_u32(4);
        let height = read_u32(8);
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Usage("RCMF dimensions overflow".into()))?;
        let payload = &bytes[16..];
        if payload.len() < expected {
            return Err(Error::Usage(format!(
                "RCMF payload truncated: expected {expected} bytes, got {}",
                payload.len()
            )));
        }
        let mut pixels = Vec::with_capacity(width * height);
        for chunk in payload[..expected].chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
            if !v.is_finite() {
                return Err(Error::Numeric("RCMF image has non-finite pixels".into()));
            }
            pixels.push(v.clamp(0.0, 1.0));
        }
        Self::from_pixels(width, height, pixels)
    }

    /// Serializes to the RCMF format; the inverse of [`from_rcmf_bytes`].
    pub fn to_rcmf_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len() * 4);
        out.extend_from_slice(b"RCMF");
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for &v in &self.pixels {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Per-pixel feature maps sharing the image dimensions; the channel count
/// is the descriptor dimension.
#[derive(Debug, Clone)]
pub struct FeatureStack {
    width: usize,
    height: usize,
    channels: Vec<Vec<f64>>,
    channel_names: Vec<&'static str>,
}

impl FeatureStack {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel_names(&self) -> &[&'static str] {
        &self.channel_names
    }

    pub fn value(&self, channel: usize, x: usize, y: usize) -> f64 {
        self.channels[channel][y * self.width + x]
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

/// The five texture channels: intensity, |∂I/∂x|, |∂I/∂y|, |∂²I/∂x²|,
/// |∂²I/∂y²|. First derivatives use central differences [−1, 0, 1]/2,
/// second derivatives the stencil [1, −2, 1]; borders replicate.
pub fn texture_features(img: &GrayImage) -> Result<FeatureStack> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::Usage(format!(
            "image must be at least 3x3 for derivative stencils, got {w}x{h}"
        )));
    }

    let at = |x: i64, y: i64| -> f64 {
        let x = x.clamp(0, w as i64 - 1) as usize;
        let y = y.clamp(0, h as i64 - 1) as usize;
        img.pixel(x, y)
    };

    let mut intensity = Vec::with_capacity(w * h);
    let mut dx = Vec::with_capacity(w * h);
    let mut dy = Vec::with_capacity(w * h);
    let mut dxx = Vec::with_capacity(w * h);
    let mut dyy = Vec::with_capacity(w * h);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let center = at(x, y);
            intensity.push(center);
            dx.push(((at(x + 1, y) - at(x - 1, y)) * 0.5).abs());
            dy.push(((at(x, y + 1) - at(x, y - 1)) * 0.5).abs());
            dxx.push((at(x + 1, y) - 2.0 * center + at(x - 1, y)).abs());
            dyy.push((at(x, y + 1) - 2.0 * center + at(x, y - 1)).abs());
        }
    }

    Ok(FeatureStack {
        width: w,
        height: h,
        channels: vec![intensity, dx, dy, dxx, dyy],
        channel_names: vec!["intensity", "abs_dx", "abs_dy", "abs_dxx", "abs_dyy"],
    })
}

/// Sample covariance (divisor n−1) of the feature vectors over a region,
/// regularized into an SPD matrix with the given eigenvalue floor.
pub fn region_covariance(stack: &FeatureStack, region: Rect, floor: f64) -> Result<SpdMatrix> {
    let Rect { x0, y0, w, h } = region;
    if w == 0 || h == 0 || x0 + w > stack.width() || y0 + h > stack.height() {
        return Err(Error::Usage(format!(
            "region {region:?} is outside the {}x{} image",
            stack.width(),
            stack.height()
        )));
    }
    let count = w * h;
    if count < 2 {
        return Err(Error::Usage(
            "region must contain at least 2 pixels for a sample covariance".into(),
        ));
    }

    let d = stack.channel_count();
    let mut mean = vec![0.0f64; d];
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            for (c, m) in mean.iter_mut().enumerate() {
                *m += stack.value(c, x, y);
            }
        }
    }
    for m in mean.iter_mut() {
        *m /= count as f64;
    }

    let mut cov = DMatrix::zeros(d, d);
    let mut deviation = vec![0.0f64; d];
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            for (c, dev) in deviation.iter_mut().enumerate() {
                *dev = stack.value(c, x, y) - mean[c];
            }
            for i in 0..d {
                for j in i..d {
                    cov[(i, j)] += deviation[i] * deviation[j];
                }
            }
        }
    }
    let divisor = (count - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[(i, j)] /= divisor;
            cov[(j, i)] = cov[(i, j)];
        }
    }

    make_spd(&cov, floor)
}

/// Non-overlapping square tiles covering the image in row-major order.
pub fn grid_regions(img: &GrayImage, tile: usize) -> Result<Vec<Rect>> {
    if tile == 0 {
        return Err(Error::Usage("tile size must be positive".into()));
    }
    if img.width() % tile != 0 || img.height() % tile != 0 {
        return Err(Error::Usage(format!(
            "image {}x{} is not divisible into {tile}x{tile} tiles",
            img.width(),
            img.height()
        )));
    }
    let mut regions = Vec::with_capacity((img.width() / tile) * (img.height() / tile));
    for ty in 0..img.height() / tile {
        for tx in 0..img.width() / tile {
            regions.push(Rect {
                x0: tx * tile,
                y0: ty * tile,
                w: tile,
                h: tile,
            });
        }
    }
    Ok(regions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_image(w: usize, h: usize, value: f64) -> GrayImage {
        GrayImage::from_pixels(w, h, vec![value; w * h]).unwrap()
    }

    #[test]
    fn constant_image_has_zero_derivative_channels() {
        let stack = texture_features(&constant_image(5, 4, 0.4)).unwrap();
        assert_eq!(stack.channel_count(), 5);
        for c in 1..5 {
            for y in 0..4 {
                for x in 0..5 {
                    assert_eq!(stack.value(c, x, y), 0.0);
                }
            }
        }
        assert_eq!(stack.value(0, 2, 2), 0.4);
    }

    #[test]
    fn ramp_image_has_expected_derivatives() {
        let w = 8;
        let h = 4;
        let pixels: Vec<f64> = (0..h)
            .flat_map(|_| (0..w).map(|x| x as f64 / w as f64))
            .collect();
        let img = GrayImage::from_pixels(w, h, pixels).unwrap();
        let stack = texture_features(&img).unwrap();
        for y in 0..h {
            for x in 1..w - 1 {
                approx::assert_relative_eq!(
                    stack.value(1, x, y),
                    1.0 / w as f64,
                    epsilon = 1e-15
                );
                approx::assert_relative_eq!(stack.value(3, x, y), 0.0, epsilon = 1e-15);
            }
        }
        // The ramp is constant along y everywhere, borders included.
        for y in 0..h {
            for x in 0..w {
                assert_eq!(stack.value(2, x, y), 0.0);
                assert_eq!(stack.value(4, x, y), 0.0);
            }
        }
    }

    #[test]
    fn texture_features_rejects_tiny_images() {
        let img = constant_image(2, 5, 0.1);
        assert!(matches!(texture_features(&img), Err(Error::Usage(_))));
    }

    #[test]
    fn constant_region_covariance_is_floor_times_identity() {
        let stack = texture_features(&constant_image(6, 6, 0.3)).unwrap();
        let cov = region_covariance(
            &stack,
            Rect {
                x0: 0,
                y0: 0,
                w: 6,
                h: 6,
            },
            1e-6,
        )
        .unwrap();
        let expected = DMatrix::<f64>::identity(5, 5) * 1e-6;
        approx::assert_relative_eq!(cov.matrix(), &expected, epsilon = 1e-18);
    }

    #[test]
    fn two_antipodal_pixels_give_half_covariance() {
        // Hand-built stack: one channel pair (0,...,0) and (1,...,1) over a
        // 2x1 region has covariance 0.5 in every entry (divisor 1).
        let stack = FeatureStack {
            width: 2,
            height: 1,
            channels: vec![vec![0.0, 1.0]; 3],
            channel_names: vec!["a", "b", "c"],
        };
        let cov = region_covariance(
            &stack,
            Rect {
                x0: 0,
                y0: 0,
                w: 2,
                h: 1,
            },
            1e-9,
        )
        .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.5 + 1e-9 * 2.0 / 3.0 } else { 0.5 - 1e-9 / 3.0 };
                approx::assert_relative_eq!(
                    cov.matrix()[(i, j)],
                    expected,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn region_covariance_rejects_out_of_bounds() {
        let stack = texture_features(&constant_image(4, 4, 0.2)).unwrap();
        let bad = Rect {
            x0: 2,
            y0: 2,
            w: 3,
            h: 1,
        };
        assert!(matches!(
            region_covariance(&stack, bad, 1e-6),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn covariance_is_translation_invariant() {
        let w = 8;
        let h = 8;
        let pixels: Vec<f64> = (0..w * h)
            .map(|i| 0.05 + 0.4 * ((i * 37 % 11) as f64 / 11.0))
            .collect();
        let shifted: Vec<f64> = pixels.iter().map(|v| v + 0.3).collect();
        let region = Rect {
            x0: 1,
            y0: 1,
            w: 6,
            h: 6,
        };
        let a = region_covariance(
            &texture_features(&GrayImage::from_pixels(w, h, pixels).unwrap()).unwrap(),
            region,
            1e-8,
        )
        .unwrap();
        let b = region_covariance(
            &texture_features(&GrayImage::from_pixels(w, h, shifted).unwrap()).unwrap(),
            region,
            1e-8,
        )
        .unwrap();
        approx::assert_relative_eq!(a.matrix(), b.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn grid_regions_covers_image_disjointly() {
        let img = constant_image(64, 32, 0.0);
        let regions = grid_regions(&img, 32).unwrap();
        assert_eq!(regions.len(), 2);
        assert_eq!(
            regions[0],
            Rect {
                x0: 0,
                y0: 0,
                w: 32,
                h: 32
            }
        );
        assert_eq!(
            regions[1],
            Rect {
                x0: 32,
                y0: 0,
                w: 32,
                h: 32
            }
        );

        let img = constant_image(256, 256, 0.0);
        let regions = grid_regions(&img, 32).unwrap();
        assert_eq!(regions.len(), 64);
        let mut covered = vec![false; 256 * 256];
        for r in &regions {
            for y in r.y0..r.y0 + r.h {
                for x in r.x0..r.x0 + r.w {
                    assert!(!covered[y * 256 + x], "tiles overlap at ({x},{y})");
                    covered[y * 256 + x] = true;
                }
            }
        }
        assert!(covered.iter().all(|&c| c));
    }

    #[test]
    fn grid_regions_rejects_non_divisible_dimensions() {
        let img = constant_image(60, 64, 0.0);
        assert!(matches!(grid_regions(&img, 32), Err(Error::Usage(_))));
    }

    #[test]
    fn pgm_parsing_handles_comments_and_normalization() {
        let mut bytes = b"P5 # comment\n# another\n 4 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 51, 102, 153, 204, 255, 51, 0]);
        let img = GrayImage::from_pgm_bytes(&bytes).unwrap();
        assert_eq!(img.width(), 4);
        assert_eq!(img.height(), 2);
        approx::assert_relative_eq!(img.pixel(1, 0), 0.2, epsilon = 1e-12);
        approx::assert_relative_eq!(img.pixel(3, 1), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pgm_parsing_rejects_malformed_input() {
        assert!(GrayImage::from_pgm_bytes(b"P6 2 2 255\n....").is_err());
        assert!(GrayImage::from_pgm_bytes(b"P5 2 2 65535\n").is_err());
        let truncated = b"P5 4 4 255\n\x00\x01";
        assert!(GrayImage::from_pgm_bytes(truncated).is_err());
    }

    #[test]
    fn rcmf_roundtrip_is_exact() {
        let pixels: Vec<f64> = (0..12).map(|i| (i as f32 / 11.0) as f64).collect();
        let img = GrayImage::from_pixels(4, 3, pixels).unwrap();
        let bytes = img.to_rcmf_bytes();
        let back = GrayImage::from_bytes(&bytes).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn pipeline_is_deterministic_per_byte_input() {
        let mut bytes = b"P5 6 6 255\n".to_vec();
        bytes.extend((0..36).map(|i| ((i * 89 + 13) % 256) as u8));
        let run = |bytes: &[u8]| {
            let img = GrayImage::from_bytes(bytes).unwrap();
            let stack = texture_features(&img).unwrap();
            region_covariance(
                &stack,
                Rect {
                    x0: 0,
                    y0: 0,
                    w: 6,
                    h: 6,
                },
                1e-6,
            )
            .unwrap()
        };
        assert_eq!(run(&bytes).matrix(), run(&bytes).matrix());
    }
}
