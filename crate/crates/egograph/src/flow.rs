//! Dense optical flow between consecutive video frames.
//!
//! This module covers everything upstream of the motion descriptor:
//!
//! * grayscale frame input (binary PGM, 8- or 16-bit) normalized to `[0, 1]`,
//! * bilinear resampling to the pipeline's canonical resolution,
//! * dense flow estimation with the classic Horn–Schunck scheme
//!   (quadratic data + smoothness terms, Jacobi iteration),
//! * the Middlebury `.flo` interchange format,
//! * synthetic flow patterns (translation, rotation, zoom, Gaussian noise)
//!   used for calibration and testing.
//!
//! Flow vectors are stored as `f32` pairs, matching the precision of the
//! on-disk format, so a write/read round trip reproduces a field bit for bit.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Magic number leading a Middlebury `.flo` file.
const FLO_MAGIC: f32 = 202021.25;

/// A single grayscale frame with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame {
    /// Build a frame from row-major intensity data.
    ///
    /// Both dimensions must be at least 2 (derivative stencils need a
    /// neighborhood) and every sample must lie in `[0, 1]`.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Frame> {
        if width < 2 || height < 2 {
            return Err(Error::Param(format!(
                "frame dimensions must be at least 2x2, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "frame data holds {} samples, expected {}x{} = {}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Data(format!(
                "frame intensity {bad} outside [0, 1]"
            )));
        }
        Ok(Frame {
            width,
            height,
            data,
        })
    }

    /// Frame filled with a constant intensity.
    pub fn constant(width: usize, height: usize, value: f64) -> Result<Frame> {
        Frame::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Intensity at column `x`, row `y`.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Row-major sample slice.
    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// A dense flow field: one `(u, v)` displacement per pixel, row-major.
///
/// `u` is the horizontal component (positive rightward), `v` the vertical
/// component (positive downward), both in pixels per frame step.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    /// Build a field from row-major component vectors.
    ///
    /// Dimensions must be positive, both components must hold exactly
    /// `width * height` finite samples.
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<FlowField> {
        if width == 0 || height == 0 {
            return Err(Error::Param(format!(
                "flow field dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width * height;
        if u.len() != expected || v.len() != expected {
            return Err(Error::Shape(format!(
                "flow components hold {}/{} samples, expected {expected}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(v.iter()).any(|c| !c.is_finite()) {
            return Err(Error::Data("flow field contains non-finite components".into()));
        }
        Ok(FlowField {
            width,
            height,
            u,
            v,
        })
    }

    /// All-zero field.
    pub fn zeros(width: usize, height: usize) -> Result<FlowField> {
        FlowField::new(width, height, vec![0.0; width * height], vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Displacement at column `x`, row `y`.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    /// Horizontal components, row-major.
    pub fn u(&self) -> &[f32] {
        &self.u
    }

    /// Vertical components, row-major.
    pub fn v(&self) -> &[f32] {
        &self.v
    }

    /// Spatial mean of `(u, v)` over all pixels, in f64.
    pub fn mean(&self) -> (f64, f64) {
        let n = self.len() as f64;
        let su: f64 = self.u.iter().map(|&c| c as f64).sum();
        let sv: f64 = self.v.iter().map(|&c| c as f64).sum();
        (su / n, sv / n)
    }

    /// Add another field component-wise (used to superimpose noise on a
    /// synthetic pattern). Dimensions must match.
    pub fn add(&mut self, other: &FlowField) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Shape(format!(
                "cannot add {}x{} field to {}x{} field",
                other.width, other.height, self.width, self.height
            )));
        }
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            *a += *b;
        }
        for (a, b) in self.v.iter_mut().zip(&other.v) {
            *a += *b;
        }
        Ok(())
    }
}

/// Parameters of the Horn–Schunck solver.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    /// Smoothness weight `alpha`; the update uses `alpha^2`. Larger values
    /// favor smoother fields over data fidelity.
    pub smoothness: f64,
    /// Maximum number of Jacobi iterations.
    pub iterations: usize,
    /// Early-exit threshold on the largest per-component update.
    pub convergence_tol: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            smoothness: 10.0,
            iterations: 100,
            convergence_tol: 1e-4,
        }
    }
}

impl FlowParams {
    fn validate(&self) -> Result<()> {
        if !(self.smoothness > 0.0) || !self.smoothness.is_finite() {
            return Err(Error::Param(format!(
                "smoothness must be positive and finite, got {}",
                self.smoothness
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Param("iterations must be at least 1".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Param(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

// ───────────────────────── PGM input ─────────────────────────

/// Read a binary (P5) PGM frame and normalize intensities by its maxval.
///
/// 8-bit (maxval < 256) and 16-bit big-endian (maxval < 65536) samples are
/// supported. ASCII PGM (P2) is rejected as a parse error; a payload shorter
/// than `width * height` samples is a truncation error.
pub fn read_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(Error::io(path))?;
    parse_pgm(&bytes, path)
}

fn parse_pgm(bytes: &[u8], path: &Path) -> Result<Frame> {
    let mut pos = 0usize;
    let magic = pgm_token(bytes, &mut pos).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        detail: "missing magic number".into(),
    })?;
    if magic != "P5" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            detail: format!("expected binary PGM magic P5, got {magic:?}"),
        });
    }
    let mut header = [0usize; 3];
    for (i, name) in ["width", "height", "maxval"].iter().enumerate() {
        let tok = pgm_token(bytes, &mut pos).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            detail: format!("missing {name} in header"),
        })?;
        header[i] = tok.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            detail: format!("invalid {name} {tok:?}"),
        })?;
    }
    let [width, height, maxval] = header;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            detail: format!("maxval {maxval} outside [1, 65535]"),
        });
    }
    // `pgm_token` leaves `pos` on the single whitespace byte that separates
    // the header from the raster; skip exactly that one byte.
    pos += 1;
    let samples = width * height;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let need = samples * bytes_per;
    let avail = bytes.len().saturating_sub(pos);
    if avail < need {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: need,
            found: avail,
        });
    }
    let raster = &bytes[pos..pos + need];
    let scale = 1.0 / maxval as f64;
    let data: Vec<f64> = if bytes_per == 1 {
        raster.iter().map(|&b| b as f64 * scale).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect()
    };
    if data.iter().any(|&v| v > 1.0) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            detail: "sample value exceeds declared maxval".into(),
        });
    }
    Frame::new(width, height, data)
}

/// Next whitespace-delimited header token, skipping `#` comments. On success
/// `pos` points at the delimiter that terminated the token.
fn pgm_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    // Skip whitespace and comments.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if *pos == start {
        None
    } else {
        Some(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    }
}

// ───────────────────────── resampling ─────────────────────────

/// Resample a frame to `target_width x target_height` with bilinear
/// interpolation.
///
/// Sample positions follow the half-pixel (pixel-center) convention: output
/// pixel `x` reads source coordinate `(x + 0.5) * w_in / w_out - 0.5`,
/// clamped to the frame, so content is neither shifted nor cropped. Equal
/// dimensions return the input unchanged. Interpolation is convex, so output
/// intensities stay within the input range.
pub fn resize_frame(frame: &Frame, target_width: usize, target_height: usize) -> Result<Frame> {
    if target_width < 2 || target_height < 2 {
        return Err(Error::Param(format!(
            "resize target must be at least 2x2, got {target_width}x{target_height}"
        )));
    }
    if target_width == frame.width && target_height == frame.height {
        return Ok(frame.clone());
    }
    let sx = frame.width as f64 / target_width as f64;
    let sy = frame.height as f64 / target_height as f64;
    let mut data = Vec::with_capacity(target_width * target_height);
    for y in 0..target_height {
        let src_y = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (frame.height - 1) as f64);
        let y0 = src_y.floor() as usize;
        let y1 = (y0 + 1).min(frame.height - 1);
        let fy = src_y - y0 as f64;
        for x in 0..target_width {
            let src_x = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (frame.width - 1) as f64);
            let x0 = src_x.floor() as usize;
            let x1 = (x0 + 1).min(frame.width - 1);
            let fx = src_x - x0 as f64;
            let top = frame.get(x0, y0) * (1.0 - fx) + frame.get(x1, y0) * fx;
            let bottom = frame.get(x0, y1) * (1.0 - fx) + frame.get(x1, y1) * fx;
            data.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Frame::new(target_width, target_height, data)
}

// ───────────────────────── Horn–Schunck ─────────────────────────

/// Estimate dense flow from `prev` to `next` with the Horn–Schunck scheme.
///
/// Spatial and temporal intensity derivatives are averaged over the 2x2x2
/// cube spanning both frames; the coupled update
///
/// ```text
/// u <- ubar - Ex (Ex ubar + Ey vbar + Et) / (alpha^2 + Ex^2 + Ey^2)
/// v <- vbar - Ey (Ex ubar + Ey vbar + Et) / (alpha^2 + Ex^2 + Ey^2)
/// ```
///
/// is iterated in Jacobi fashion from a zero initial field, where `ubar`,
/// `vbar` are the 8-neighbor weighted averages (1/6 edge, 1/12 diagonal).
/// Borders replicate the nearest interior value. Iteration stops when the
/// largest per-component update falls below `convergence_tol` or after
/// `iterations` sweeps. The computation is deterministic.
///
/// Identical input frames yield an exactly zero field.
pub fn compute_flow(prev: &Frame, next: &Frame, params: &FlowParams) -> Result<FlowField> {
    if prev.width != next.width || prev.height != next.height {
        return Err(Error::Shape(format!(
            "frame pair has mismatched dimensions {}x{} vs {}x{}",
            prev.width, prev.height, next.width, next.height
        )));
    }
    params.validate()?;
    let (w, h) = (prev.width, prev.height);
    let n = w * h;

    // Derivative estimates over the 2x2x2 cube, replicate-clamped at borders.
    let mut ex = vec![0.0f64; n];
    let mut ey = vec![0.0f64; n];
    let mut et = vec![0.0f64; n];
    for y in 0..h {
        let yb = (y + 1).min(h - 1);
        for x in 0..w {
            let xr = (x + 1).min(w - 1);
            let p00 = prev.get(x, y);
            let p10 = prev.get(xr, y);
            let p01 = prev.get(x, yb);
            let p11 = prev.get(xr, yb);
            let n00 = next.get(x, y);
            let n10 = next.get(xr, y);
            let n01 = next.get(x, yb);
            let n11 = next.get(xr, yb);
            let i = y * w + x;
            ex[i] = 0.25 * ((p10 - p00) + (p11 - p01) + (n10 - n00) + (n11 - n01));
            ey[i] = 0.25 * ((p01 - p00) + (p11 - p10) + (n01 - n00) + (n11 - n10));
            et[i] = 0.25 * ((n00 - p00) + (n10 - p10) + (n01 - p01) + (n11 - p11));
        }
    }

    let alpha2 = params.smoothness * params.smoothness;
    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];
    let mut u_next = vec![0.0f64; n];
    let mut v_next = vec![0.0f64; n];

    for _ in 0..params.iterations {
        let mut max_delta = 0.0f64;
        for y in 0..h {
            let ya = y.saturating_sub(1);
            let yb = (y + 1).min(h - 1);
            for x in 0..w {
                let xa = x.saturating_sub(1);
                let xb = (x + 1).min(w - 1);
                let avg = |f: &[f64]| -> f64 {
                    (f[y * w + xa] + f[y * w + xb] + f[ya * w + x] + f[yb * w + x]) / 6.0
                        + (f[ya * w + xa] + f[ya * w + xb] + f[yb * w + xa] + f[yb * w + xb]) / 12.0
                };
                let i = y * w + x;
                let ubar = avg(&u);
                let vbar = avg(&v);
                let common =
                    (ex[i] * ubar + ey[i] * vbar + et[i]) / (alpha2 + ex[i] * ex[i] + ey[i] * ey[i]);
                let nu = ubar - ex[i] * common;
                let nv = vbar - ey[i] * common;
                max_delta = max_delta.max((nu - u[i]).abs()).max((nv - v[i]).abs());
                u_next[i] = nu;
                v_next[i] = nv;
            }
        }
        std::mem::swap(&mut u, &mut u_next);
        std::mem::swap(&mut v, &mut v_next);
        if max_delta < params.convergence_tol {
            break;
        }
    }

    FlowField::new(
        w,
        h,
        u.into_iter().map(|c| c as f32).collect(),
        v.into_iter().map(|c| c as f32).collect(),
    )
}

// ───────────────────────── .flo interchange ─────────────────────────

/// Write a field in the Middlebury `.flo` layout: the little-endian `f32`
/// magic `202021.25`, two little-endian `i32` dimensions (width, height),
/// then row-major interleaved `(u, v)` pairs as little-endian `f32`.
pub fn write_flo(field: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(12 + field.len() * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(field.width as i32).to_le_bytes());
    out.extend_from_slice(&(field.height as i32).to_le_bytes());
    for i in 0..field.len() {
        out.extend_from_slice(&field.u[i].to_le_bytes());
        out.extend_from_slice(&field.v[i].to_le_bytes());
    }
    fs::write(path, out).map_err(Error::io(path))
}

/// Read a Middlebury `.flo` field; inverse of [`write_flo`].
pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(Error::io(path))?;
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: 12,
            found: bytes.len(),
        });
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            detail: format!("bad flow magic {magic} (expected {FLO_MAGIC})"),
        });
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            detail: format!("non-positive dimensions {width}x{height}"),
        });
    }
    let (w, h) = (width as usize, height as usize);
    let need = w * h * 8;
    if bytes.len() - 12 < need {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: need,
            found: bytes.len() - 12,
        });
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for pair in bytes[12..12 + need].chunks_exact(8) {
        u.push(f32::from_le_bytes(pair[0..4].try_into().unwrap()));
        v.push(f32::from_le_bytes(pair[4..8].try_into().unwrap()));
    }
    FlowField::new(w, h, u, v)
}

// ───────────────────────── synthetic patterns ─────────────────────────

/// Elementary synthetic flow patterns.
///
/// `Rotate` and `Zoom` are taken about the frame center
/// `((width-1)/2, (height-1)/2)`; `Noise` draws i.i.d. Gaussian components
/// from a seeded stream (row-major pixel order, `u` before `v` per pixel),
/// so a given `(sigma, seed, width, height)` always produces the same field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthPattern {
    /// Constant displacement `(u, v)` everywhere.
    Translate { u: f32, v: f32 },
    /// Rigid rotation: `(u, v) = omega * (-(y - cy), x - cx)`.
    Rotate { omega: f32 },
    /// Radial expansion (positive) or contraction (negative):
    /// `(u, v) = scale * (x - cx, y - cy)`.
    Zoom { scale: f32 },
    /// i.i.d. zero-mean Gaussian components with standard deviation `sigma`.
    Noise { sigma: f32, seed: u64 },
}

/// Generate one synthetic flow field.
pub fn synth_flow(pattern: &SynthPattern, width: usize, height: usize) -> Result<FlowField> {
    if width == 0 || height == 0 {
        return Err(Error::Param(format!(
            "synthetic field dimensions must be positive, got {width}x{height}"
        )));
    }
    let n = width * height;
    let mut u = vec![0.0f32; n];
    let mut v = vec![0.0f32; n];
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    match *pattern {
        SynthPattern::Translate { u: du, v: dv } => {
            if !du.is_finite() || !dv.is_finite() {
                return Err(Error::Param("translation components must be finite".into()));
            }
            u.fill(du);
            v.fill(dv);
        }
        SynthPattern::Rotate { omega } => {
            if !omega.is_finite() {
                return Err(Error::Param("rotation rate must be finite".into()));
            }
            for y in 0..height {
                for x in 0..width {
                    let i = y * width + x;
                    u[i] = (-(y as f64 - cy) * omega as f64) as f32;
                    v[i] = ((x as f64 - cx) * omega as f64) as f32;
                }
            }
        }
        SynthPattern::Zoom { scale } => {
            if !scale.is_finite() {
                return Err(Error::Param("zoom scale must be finite".into()));
            }
            for y in 0..height {
                for x in 0..width {
                    let i = y * width + x;
                    u[i] = ((x as f64 - cx) * scale as f64) as f32;
                    v[i] = ((y as f64 - cy) * scale as f64) as f32;
                }
            }
        }
        SynthPattern::Noise { sigma, seed } => {
            if !(sigma >= 0.0) || !sigma.is_finite() {
                return Err(Error::Param(format!(
                    "noise sigma must be non-negative and finite, got {sigma}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..n {
                let du: f64 = StandardNormal.sample(&mut rng);
                let dv: f64 = StandardNormal.sample(&mut rng);
                u[i] = (du * sigma as f64) as f32;
                v[i] = (dv * sigma as f64) as f32;
            }
        }
    }
    FlowField::new(width, height, u, v)
}

/// A sum of [`SynthPattern`] terms, parsed from a compact text form.
///
/// The text form joins terms with `+`:
///
/// * `translate:U,V`
/// * `rotate:OMEGA`
/// * `zoom:SCALE`
/// * `noise:SIGMA,SEED` (seed defaults to 0 when omitted)
///
/// e.g. `translate:2,0+noise:0.3,7`. When generating a frame *sequence*,
/// [`SyntheticSpec::field_at`] perturbs each noise term's seed with the frame
/// index so consecutive fields draw independent noise while remaining fully
/// reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    terms: Vec<SynthPattern>,
}

impl SyntheticSpec {
    pub fn new(terms: Vec<SynthPattern>) -> Result<SyntheticSpec> {
        if terms.is_empty() {
            return Err(Error::Param("synthetic spec needs at least one term".into()));
        }
        Ok(SyntheticSpec { terms })
    }

    pub fn terms(&self) -> &[SynthPattern] {
        &self.terms
    }

    /// Generate the field for frame `index` of a sequence.
    pub fn field_at(&self, width: usize, height: usize, index: u64) -> Result<FlowField> {
        let mut acc = FlowField::zeros(width, height)?;
        for term in &self.terms {
            let concrete = match *term {
                SynthPattern::Noise { sigma, seed } => SynthPattern::Noise {
                    sigma,
                    seed: mix_seed(seed, index),
                },
                other => other,
            };
            acc.add(&synth_flow(&concrete, width, height)?)?;
        }
        Ok(acc)
    }
}

/// Derive a per-frame noise seed from a base seed (splitmix-style mixing).
fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl std::str::FromStr for SyntheticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<SyntheticSpec> {
        let bad = |detail: String| Error::Param(format!("bad synthetic spec {s:?}: {detail}"));
        let mut terms = Vec::new();
        for part in s.split('+') {
            let (name, args) = part
                .split_once(':')
                .ok_or_else(|| bad(format!("term {part:?} is missing a ':'")))?;
            let nums: Vec<&str> = args.split(',').collect();
            let parse_f32 = |t: &str| {
                t.trim()
                    .parse::<f32>()
                    .map_err(|_| bad(format!("invalid number {t:?}")))
            };
            let term = match name.trim() {
                "translate" => {
                    if nums.len() != 2 {
                        return Err(bad("translate takes two components".into()));
                    }
                    SynthPattern::Translate {
                        u: parse_f32(nums[0])?,
                        v: parse_f32(nums[1])?,
                    }
                }
                "rotate" => {
                    if nums.len() != 1 {
                        return Err(bad("rotate takes one rate".into()));
                    }
                    SynthPattern::Rotate {
                        omega: parse_f32(nums[0])?,
                    }
                }
                "zoom" => {
                    if nums.len() != 1 {
                        return Err(bad("zoom takes one scale".into()));
                    }
                    SynthPattern::Zoom {
                        scale: parse_f32(nums[0])?,
                    }
                }
                "noise" => {
                    if nums.is_empty() || nums.len() > 2 {
                        return Err(bad("noise takes sigma and an optional seed".into()));
                    }
                    let seed = if nums.len() == 2 {
                        nums[1]
                            .trim()
                            .parse::<u64>()
                            .map_err(|_| bad(format!("invalid seed {:?}", nums[1])))?
                    } else {
                        0
                    };
                    SynthPattern::Noise {
                        sigma: parse_f32(nums[0])?,
                        seed,
                    }
                }
                other => return Err(bad(format!("unknown term {other:?}"))),
            };
            terms.push(term);
        }
        SyntheticSpec::new(terms)
    }
}
