//! Grayscale frames and the preprocessing steps run before segment detection:
//! block-mean downsampling, CLAHE and summed-area tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major 8-bit grayscale image.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel buffer holds {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

/// Summed-area table with one extra leading row and column of zeros.
///
/// Entry `(x, y)` holds the sum of all pixels strictly above and to the left
/// of `(x, y)` in the source image. Sums are exact `u64`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<u64>,
}

impl IntegralImage {
    pub fn new(img: &GrayImage) -> Self {
        let (w, h) = img.dimensions();
        let stride = w + 1;
        let mut table = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row_sum = 0u64;
            let src = img.row(y);
            for x in 0..w {
                row_sum += u64::from(src[x]);
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row_sum;
            }
        }
        IntegralImage {
            width: w,
            height: h,
            table,
        }
    }

    /// Width of the source image.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Height of the source image.
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u64 {
        self.table[y * (self.width + 1) + x]
    }

    /// Sum over the half-open rectangle `[x1, x2) x [y1, y2)`.
    #[inline]
    pub fn rect_sum(&self, x1: usize, y1: usize, x2: usize, y2: usize) -> u64 {
        debug_assert!(x1 <= x2 && y1 <= y2 && x2 <= self.width && y2 <= self.height);
        self.at(x2, y2) + self.at(x1, y1) - self.at(x2, y1) - self.at(x1, y2)
    }

    /// Checked variant of [`rect_sum`](Self::rect_sum).
    pub fn try_rect_sum(&self, x1: usize, y1: usize, x2: usize, y2: usize) -> Result<u64> {
        if x1 > x2 || y1 > y2 || x2 > self.width || y2 > self.height {
            return Err(Error::invalid(format!(
                "rectangle [{x1},{x2})x[{y1},{y2}) outside {}x{} image",
                self.width, self.height
            )));
        }
        Ok(self.rect_sum(x1, y1, x2, y2))
    }
}

/// Convenience wrapper for [`IntegralImage::new`].
pub fn integral(img: &GrayImage) -> IntegralImage {
    IntegralImage::new(img)
}

/// Block-mean downsampling. Trailing partial blocks are dropped.
pub fn downsample(img: &GrayImage, factor: usize) -> Result<GrayImage> {
    if factor == 0 {
        return Err(Error::invalid("downsample factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let (ow, oh) = (img.width / factor, img.height / factor);
    let n = (factor * factor) as u32;
    let mut out = Vec::with_capacity(ow * oh);
    let mut acc = vec![0u32; ow];
    for oy in 0..oh {
        acc.iter_mut().for_each(|a| *a = 0);
        for y in oy * factor..(oy + 1) * factor {
            let row = img.row(y);
            for (ox, a) in acc.iter_mut().enumerate() {
                *a += row[ox * factor..(ox + 1) * factor]
                    .iter()
                    .map(|&v| u32::from(v))
                    .sum::<u32>();
            }
        }
        out.extend(acc.iter().map(|&s| ((s + n / 2) / n) as u8));
    }
    GrayImage::from_raw(ow, oh, out)
}

/// Parameters for [`clahe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaheParams {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Multiple of the mean bin height at which histograms are clipped.
    /// `f64::INFINITY` disables clipping.
    pub clip_limit: f64,
}

impl Default for ClaheParams {
    fn default() -> Self {
        ClaheParams {
            tiles_x: 8,
            tiles_y: 8,
            clip_limit: 2.0,
        }
    }
}

/// Contrast limited adaptive histogram equalization.
///
/// Each tile gets a clipped-histogram CDF lookup table; output pixels are a
/// bilinear blend of the four tile tables around the pixel, with tiles past
/// the image border replaced by the nearest edge tile. A tile whose pixels all
/// share one value maps through the identity.
pub fn clahe(img: &GrayImage, params: &ClaheParams) -> Result<GrayImage> {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::invalid("clahe on a zero-size image"));
    }
    let ClaheParams {
        tiles_x,
        tiles_y,
        clip_limit,
    } = *params;
    if tiles_x == 0 || tiles_y == 0 {
        return Err(Error::invalid("clahe needs at least one tile per axis"));
    }
    if tiles_x > w || tiles_y > h {
        return Err(Error::invalid(format!(
            "{tiles_x}x{tiles_y} tiles do not fit a {w}x{h} image"
        )));
    }
    if clip_limit.is_nan() || clip_limit <= 0.0 {
        return Err(Error::invalid("clahe clip limit must be positive"));
    }

    let x_edges: Vec<usize> = (0..=tiles_x).map(|i| i * w / tiles_x).collect();
    let y_edges: Vec<usize> = (0..=tiles_y).map(|i| i * h / tiles_y).collect();

    let mut luts = vec![[0u8; 256]; tiles_x * tiles_y];
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            let mut hist = [0u32; 256];
            for y in y_edges[ty]..y_edges[ty + 1] {
                for &v in &img.row(y)[x_edges[tx]..x_edges[tx + 1]] {
                    hist[v as usize] += 1;
                }
            }
            let n = ((x_edges[tx + 1] - x_edges[tx]) * (y_edges[ty + 1] - y_edges[ty])) as u32;
            luts[ty * tiles_x + tx] = tile_lut(&mut hist, n, clip_limit);
        }
    }

    let col_weights = interpolation_weights(&x_edges);
    let row_weights = interpolation_weights(&y_edges);

    let mut out = Vec::with_capacity(w * h);
    for (y, &(ty0, ty1, wy)) in row_weights.iter().enumerate() {
        let row = img.row(y);
        for (x, &(tx0, tx1, wx)) in col_weights.iter().enumerate() {
            let v = row[x] as usize;
            let tl = f64::from(luts[ty0 * tiles_x + tx0][v]);
            let tr = f64::from(luts[ty0 * tiles_x + tx1][v]);
            let bl = f64::from(luts[ty1 * tiles_x + tx0][v]);
            let br = f64::from(luts[ty1 * tiles_x + tx1][v]);
            let top = tl + (tr - tl) * wx;
            let bottom = bl + (br - bl) * wx;
            let blended = top + (bottom - top) * wy;
            out.push(blended.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::from_raw(w, h, out)
}

fn tile_lut(hist: &mut [u32; 256], n: u32, clip_limit: f64) -> [u8; 256] {
    let mut lut = [0u8; 256];
    if hist.iter().filter(|&&c| c > 0).count() <= 1 {
        for (i, l) in lut.iter_mut().enumerate() {
            *l = i as u8;
        }
        return lut;
    }

    if clip_limit.is_finite() {
        let limit = ((clip_limit * f64::from(n) / 256.0).floor() as u32).max(1);
        let mut excess = 0u32;
        for c in hist.iter_mut() {
            if *c > limit {
                excess += *c - limit;
                *c = limit;
            }
        }
        let share = excess / 256;
        let residual = (excess % 256) as usize;
        for (i, c) in hist.iter_mut().enumerate() {
            *c += share + u32::from(i < residual);
        }
    }

    let n = u64::from(n);
    let mut cdf = 0u64;
    for (l, &c) in lut.iter_mut().zip(hist.iter()) {
        cdf += u64::from(c);
        *l = ((255 * cdf + n / 2) / n).min(255) as u8;
    }
    lut
}

/// For every pixel along one axis: (lower tile, upper tile, weight of upper).
fn interpolation_weights(edges: &[usize]) -> Vec<(usize, usize, f64)> {
    let tiles = edges.len() - 1;
    let len = edges[tiles];
    let centers: Vec<f64> = edges.windows(2).map(|e| (e[0] + e[1]) as f64 / 2.0).collect();
    let mut t = 0usize;
    (0..len)
        .map(|p| {
            let pc = p as f64 + 0.5;
            if pc <= centers[0] {
                return (0, 0, 0.0);
            }
            if pc >= centers[tiles - 1] {
                return (tiles - 1, tiles - 1, 0.0);
            }
            while centers[t + 1] < pc {
                t += 1;
            }
            let wgt = (pc - centers[t]) / (centers[t + 1] - centers[t]);
            (t, t + 1, wgt)
        })
        .collect()
}

/// Parses a binary PGM (`P5`, maxval 255).
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::ImageFormat("truncated PGM header".into()));
        }
        fields.push(&bytes[start..pos]);
    }
    if fields[0] != b"P5" {
        return Err(Error::ImageFormat("not a binary PGM (P5) file".into()));
    }
    let parse = |f: &[u8], what: &str| -> Result<usize> {
        std::str::from_utf8(f)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::ImageFormat(format!("bad PGM {what}")))
    };
    let width = parse(fields[1], "width")?;
    let height = parse(fields[2], "height")?;
    let maxval = parse(fields[3], "maxval")?;
    if maxval != 255 {
        return Err(Error::ImageFormat(format!(
            "unsupported PGM maxval {maxval} (only 255)"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(Error::ImageFormat("truncated PGM raster".into()));
    }
    GrayImage::from_raw(width, height, bytes[pos..pos + need].to_vec())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// Reads the width and height from a PGM header without loading the raster.
pub fn pgm_dimensions(path: &Path) -> Result<(usize, usize)> {
    use std::io::Read;
    let mut head = [0u8; 256];
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let n = f.read(&mut head).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8_lossy(&head[..n]);
    let mut toks = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    let magic = toks.next();
    let w = toks.next().and_then(|t| t.parse().ok());
    let h = toks.next().and_then(|t| t.parse().ok());
    match (magic, w, h) {
        (Some("P5"), Some(w), Some(h)) => Ok((w, h)),
        _ => Err(Error::ImageFormat(format!("{}: unreadable PGM header", path.display()))),
    }
}

/// Loads a frame. PGM is decoded natively; other formats go through the
/// optional `decode` feature and are converted to luma.
pub fn load_image(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        return decode_pgm(&bytes);
    }
    decode_other(&bytes)
}

#[cfg(feature = "decode")]
fn decode_other(bytes: &[u8]) -> Result<GrayImage> {
    let rgb = image::load_from_memory(bytes)
        .map_err(|e| Error::ImageFormat(e.to_string()))?
        .to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.pixels().map(|p| luma(p.0)).collect();
    GrayImage::from_raw(w, h, data)
}

#[cfg(not(feature = "decode"))]
fn decode_other(_bytes: &[u8]) -> Result<GrayImage> {
    Err(Error::ImageFormat(
        "only binary PGM is supported without the `decode` feature".into(),
    ))
}

/// Rounded ITU-R 601 luma.
pub fn luma([r, g, b]: [u8; 3]) -> u8 {
    (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b))
        .round()
        .clamp(0.0, 255.0) as u8
}

pub fn save_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pgm(img)).map_err(|e| Error::io(path, e))
}
