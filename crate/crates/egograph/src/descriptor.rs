//! Global motion descriptors from stacked flow fields.
//!
//! A video's flow fields are cut into space-time cuboids: the frame plane is
//! partitioned into `dx x dy` pixel cells and time into runs of `dt`
//! consecutive fields (one run per segment). Within each cuboid, every flow
//! vector with magnitude at least `zero_threshold` is binned by direction
//! into one of 8 octants, `floor(theta / (pi/4))` with `theta = atan2(v, u)`
//! wrapped to `[0, 2pi)`; a direction exactly on a bin boundary `k*pi/4`
//! belongs to bin `k`. Near-zero vectors are dropped so stationary regions do
//! not drown out genuine motion.
//!
//! The histograms of one segment are flattened in a fixed order — spatial
//! cell column `j` outermost, cell row `k` next, octant `b` innermost — and
//! the flattened vectors form the columns of the descriptor matrix `X`
//! (`s_x * s_y * 8` rows, one column per segment). Entries are exact counts
//! stored as `f64`.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowField;

/// Number of direction octants per spatial cell.
pub const NUM_BINS: usize = 8;

/// Cuboid geometry and binning parameters of the descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorConfig {
    /// Cell width in pixels; must divide the frame width.
    pub dx: usize,
    /// Cell height in pixels; must divide the frame height.
    pub dy: usize,
    /// Fields per segment (temporal cuboid depth).
    pub dt: usize,
    /// Source frame rate, used to report the segment duration.
    pub fps: f64,
    /// Vectors with magnitude strictly below this are excluded.
    pub zero_threshold: f64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig {
            dx: 64,
            dy: 64,
            dt: 6,
            fps: 30.0,
            zero_threshold: 1e-6,
        }
    }
}

impl DescriptorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dx == 0 || self.dy == 0 || self.dt == 0 {
            return Err(Error::Param(format!(
                "cuboid dimensions must be positive, got dx={} dy={} dt={}",
                self.dx, self.dy, self.dt
            )));
        }
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(Error::Param(format!("fps must be positive, got {}", self.fps)));
        }
        if !(self.zero_threshold >= 0.0) || !self.zero_threshold.is_finite() {
            return Err(Error::Param(format!(
                "zero_threshold must be non-negative, got {}",
                self.zero_threshold
            )));
        }
        Ok(())
    }

    /// Segment duration in seconds (`dt / fps`).
    pub fn segment_seconds(&self) -> f64 {
        self.dt as f64 / self.fps as f64
    }

    /// Spatial grid `(s_x, s_y)` for a frame size, or an error when the cells
    /// do not tile the frame exactly.
    pub fn grid_for(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        self.validate()?;
        if width == 0 || height == 0 || width % self.dx != 0 || height % self.dy != 0 {
            return Err(Error::Shape(format!(
                "cells of {}x{} pixels do not tile a {width}x{height} frame",
                self.dx, self.dy
            )));
        }
        Ok((width / self.dx, height / self.dy))
    }

    /// Length of one flattened segment histogram for a frame size.
    pub fn histogram_len(&self, width: usize, height: usize) -> Result<usize> {
        let (sx, sy) = self.grid_for(width, height)?;
        Ok(sx * sy * NUM_BINS)
    }
}

/// Direction octant of a flow vector, or `None` when its magnitude falls
/// below `zero_threshold`.
///
/// The bin is `floor(theta / (pi/4))` for `theta = atan2(v, u)` mapped into
/// `[0, 2pi)` (negative angles shifted up by `2pi`), with a boundary angle
/// `k * pi/4` belonging to bin `k`. The implementation decides the octant by
/// sign and magnitude comparisons on `u` and `v`, which evaluates that
/// definition exactly — a vector within rounding distance of a boundary can
/// not land in the wrong bin the way a floating-point `atan2`-then-divide
/// could place it.
#[inline]
pub fn bin_of(u: f64, v: f64, zero_threshold: f64) -> Option<usize> {
    if u.hypot(v) < zero_threshold {
        return None;
    }
    let bin = if v >= 0.0 {
        if u > 0.0 {
            if v < u {
                0
            } else {
                1 // v >= u > 0: theta in [pi/4, pi/2)
            }
        } else if u == 0.0 {
            if v > 0.0 {
                2 // theta = pi/2
            } else {
                0 // origin: atan2(0, 0) = 0
            }
        } else if v > -u {
            2 // quadrant II below the 3pi/4 diagonal
        } else if v > 0.0 {
            3 // 0 < v <= -u: theta in [3pi/4, pi)
        } else {
            4 // v = 0, u < 0: theta = pi
        }
    } else if u < 0.0 {
        if v > u {
            4 // |v| < |u|: theta in (pi, 5pi/4)
        } else {
            5 // theta in [5pi/4, 3pi/2)
        }
    } else if u == 0.0 {
        6 // theta = 3pi/2
    } else if -v > u {
        6 // theta in (3pi/2, 7pi/4)
    } else {
        7 // theta in [7pi/4, 2pi)
    };
    Some(bin)
}

/// Histogram one segment: exactly `config.dt` flow fields of equal size.
///
/// Returns the flattened per-cell octant counts, cell column outermost, cell
/// row next, octant innermost: entry `(j * s_y + k) * 8 + b` counts octant
/// `b` in the cell covering pixels `x in [j*dx, (j+1)*dx)`,
/// `y in [k*dy, (k+1)*dy)`, summed over all `dt` fields.
pub fn segment_histogram(fields: &[FlowField], config: &DescriptorConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if fields.len() != config.dt {
        return Err(Error::Shape(format!(
            "segment holds {} fields, expected dt = {}",
            fields.len(),
            config.dt
        )));
    }
    let (width, height) = (fields[0].width(), fields[0].height());
    let (sx, sy) = config.grid_for(width, height)?;
    let mut hist = vec![0.0f64; sx * sy * NUM_BINS];
    for field in fields {
        if field.width() != width || field.height() != height {
            return Err(Error::Shape(format!(
                "segment mixes field sizes {}x{} and {}x{}",
                width,
                height,
                field.width(),
                field.height()
            )));
        }
        accumulate_field(field, config, sy, &mut hist);
    }
    Ok(hist)
}

fn accumulate_field(field: &FlowField, config: &DescriptorConfig, sy: usize, hist: &mut [f64]) {
    let width = field.width();
    let (us, vs) = (field.u(), field.v());
    for y in 0..field.height() {
        let k = y / config.dy;
        let row = y * width;
        for x in 0..width {
            let i = row + x;
            if let Some(b) = bin_of(us[i] as f64, vs[i] as f64, config.zero_threshold) {
                let j = x / config.dx;
                hist[(j * sy + k) * NUM_BINS + b] += 1.0;
            }
        }
    }
}

/// Build the descriptor matrix for a whole field sequence.
///
/// The sequence is cut into `floor(n_fields / dt)` segments of `dt`
/// consecutive fields; a trailing partial segment is dropped. Column `c` of
/// the result is [`segment_histogram`] of segment `c`. Segments are
/// histogrammed in parallel; since entries are exact counts, the result does
/// not depend on scheduling. Errors when the sequence is shorter than `dt`
/// (no complete segment) or fields disagree in size.
pub fn build_descriptor_matrix(
    fields: &[FlowField],
    config: &DescriptorConfig,
) -> Result<Array2<f64>> {
    config.validate()?;
    let segments = fields.len() / config.dt;
    if segments == 0 {
        return Err(Error::Shape(format!(
            "{} fields cannot fill a segment of dt = {}",
            fields.len(),
            config.dt
        )));
    }
    let rows = config.histogram_len(fields[0].width(), fields[0].height())?;
    let columns: Vec<Vec<f64>> = fields
        .par_chunks(config.dt)
        .take(segments)
        .map(|chunk| segment_histogram(chunk, config))
        .collect::<Result<_>>()?;
    let mut x = Array2::zeros((rows, segments));
    for (c, col) in columns.iter().enumerate() {
        x.column_mut(c).assign(&ndarray::ArrayView1::from(&col[..]));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{synth_flow, SynthPattern};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Field built from explicit `(u, v)` pairs in row-major order.
    fn field_from(width: usize, height: usize, vecs: &[(f32, f32)]) -> FlowField {
        let u: Vec<f32> = vecs.iter().map(|p| p.0).collect();
        let v: Vec<f32> = vecs.iter().map(|p| p.1).collect();
        FlowField::new(width, height, u, v).unwrap()
    }

    fn unit_config(dt: usize) -> DescriptorConfig {
        DescriptorConfig {
            dx: 1,
            dy: 1,
            dt,
            fps: 30.0,
            zero_threshold: 1e-6,
        }
    }

    #[test]
    fn octants_of_cardinal_and_diagonal_vectors() {
        let t = 1e-6;
        assert_eq!(bin_of(1.0, 0.0, t), Some(0));
        assert_eq!(bin_of(1.0, 1.0, t), Some(1)); // boundary pi/4 goes up
        assert_eq!(bin_of(0.0, 1.0, t), Some(2));
        assert_eq!(bin_of(-1.0, 1.0, t), Some(3)); // boundary 3pi/4
        assert_eq!(bin_of(-1.0, 0.0, t), Some(4));
        assert_eq!(bin_of(-1.0, -1.0, t), Some(5)); // boundary 5pi/4
        assert_eq!(bin_of(0.0, -1.0, t), Some(6));
        assert_eq!(bin_of(1.0, -1.0, t), Some(7)); // boundary 7pi/4
    }

    #[test]
    fn octants_of_interior_directions() {
        let t = 0.0;
        for b in 0..NUM_BINS {
            let theta = (b as f64 + 0.5) * std::f64::consts::FRAC_PI_4;
            assert_eq!(bin_of(theta.cos(), theta.sin(), t), Some(b), "octant {b}");
        }
    }

    #[test]
    fn near_zero_vectors_are_excluded() {
        assert_eq!(bin_of(1e-7, 0.0, 1e-6), None);
        assert_eq!(bin_of(0.0, -1e-9, 1e-6), None);
        assert_eq!(bin_of(1e-5, 0.0, 1e-6), Some(0));
    }

    #[test]
    fn histogram_counts_known_vectors_exactly() {
        // 2x2 frame, 1x1 cells, dt = 2: cells are single pixels, s_x = s_y = 2.
        let f0 = field_from(
            2,
            2,
            &[(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, 0.0)],
        );
        let f1 = field_from(
            2,
            2,
            &[(1.0, 0.2), (0.0, -2.0), (-0.5, -0.5), (2.0, -2.0)],
        );
        let hist = segment_histogram(&[f0, f1], &unit_config(2)).unwrap();
        assert_eq!(hist.len(), 2 * 2 * NUM_BINS);
        let mut want = vec![0.0; hist.len()];
        // Layout: (j * s_y + k) * 8 + b with j the cell column, k the cell row.
        want[(0 * 2 + 0) * 8 + 0] += 1.0; // f0 (0,0): (1,0) → bin 0
        want[(1 * 2 + 0) * 8 + 2] += 1.0; // f0 (1,0): (0,1) → bin 2
        want[(0 * 2 + 1) * 8 + 4] += 1.0; // f0 (0,1): (-1,0) → bin 4
        // f0 (1,1): (0,0) below threshold → dropped
        want[(0 * 2 + 0) * 8 + 0] += 1.0; // f1 (0,0): (1,0.2) → bin 0
        want[(1 * 2 + 0) * 8 + 6] += 1.0; // f1 (1,0): (0,-2) → bin 6
        want[(0 * 2 + 1) * 8 + 5] += 1.0; // f1 (0,1): (-.5,-.5) → bin 5
        want[(1 * 2 + 1) * 8 + 7] += 1.0; // f1 (1,1): (2,-2) → bin 7
        assert_eq!(hist, want);
        let total: f64 = hist.iter().sum();
        assert_eq!(total, 7.0); // 8 vectors, 1 below threshold
    }

    /// Independent recount that goes through `atan2` and `floor`, the
    /// direct form of the octant definition.
    fn recount_by_atan2(fields: &[FlowField], config: &DescriptorConfig) -> Vec<f64> {
        let (w, h) = (fields[0].width(), fields[0].height());
        let (sx, sy) = (w / config.dx, h / config.dy);
        let mut hist = vec![0.0; sx * sy * NUM_BINS];
        for f in fields {
            for y in 0..h {
                for x in 0..w {
                    let (u, v) = f.get(x, y);
                    let (u, v) = (u as f64, v as f64);
                    if u.hypot(v) < config.zero_threshold {
                        continue;
                    }
                    let mut theta = v.atan2(u);
                    if theta < 0.0 {
                        theta += 2.0 * std::f64::consts::PI;
                    }
                    let b = ((theta / std::f64::consts::FRAC_PI_4) as usize).min(NUM_BINS - 1);
                    hist[((x / config.dx) * sy + y / config.dy) * NUM_BINS + b] += 1.0;
                }
            }
        }
        hist
    }

    #[test]
    fn histogram_agrees_with_atan2_recount_on_noise() {
        let config = DescriptorConfig {
            dx: 8,
            dy: 4,
            dt: 3,
            fps: 30.0,
            zero_threshold: 1e-6,
        };
        for seed in 0..5 {
            let fields: Vec<FlowField> = (0..3)
                .map(|t| {
                    synth_flow(
                        &SynthPattern::Noise {
                            sigma: 1.0,
                            seed: seed * 10 + t,
                        },
                        16,
                        8,
                    )
                    .unwrap()
                })
                .collect();
            let hist = segment_histogram(&fields, &config).unwrap();
            assert_eq!(hist, recount_by_atan2(&fields, &config), "seed {seed}");
            let total: f64 = hist.iter().sum();
            assert_eq!(total, (16 * 8 * 3) as f64); // sigma 1 noise never lands below 1e-6
        }
    }

    #[test]
    fn histogram_is_invariant_to_field_order_within_segment() {
        let f0 = synth_flow(&SynthPattern::Noise { sigma: 1.0, seed: 1 }, 8, 8).unwrap();
        let f1 = synth_flow(&SynthPattern::Rotate { omega: 0.3 }, 8, 8).unwrap();
        let cfg = DescriptorConfig {
            dx: 4,
            dy: 4,
            dt: 2,
            ..DescriptorConfig::default()
        };
        let a = segment_histogram(&[f0.clone(), f1.clone()], &cfg).unwrap();
        let b = segment_histogram(&[f1, f0], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn vectors_only_count_toward_their_own_cell() {
        // One nonzero vector at pixel (5, 2) of an 8x4 frame with 4x2 cells:
        // cell column j = 1, cell row k = 1.
        let mut vecs = vec![(0.0f32, 0.0f32); 32];
        vecs[2 * 8 + 5] = (0.0, 3.0);
        let field = field_from(8, 4, &vecs);
        let cfg = DescriptorConfig {
            dx: 4,
            dy: 2,
            dt: 1,
            ..DescriptorConfig::default()
        };
        let hist = segment_histogram(&[field], &cfg).unwrap();
        let sy = 2;
        let expect_idx = (1 * sy + 1) * NUM_BINS + 2;
        for (i, &count) in hist.iter().enumerate() {
            assert_eq!(count, if i == expect_idx { 1.0 } else { 0.0 }, "index {i}");
        }
    }

    #[test]
    fn rotating_vectors_by_one_octant_permutes_bins_cyclically() {
        let cfg = DescriptorConfig {
            dx: 4,
            dy: 4,
            dt: 1,
            ..DescriptorConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        // Vectors kept away from bin boundaries and the zero threshold so
        // the rotation cannot cross a boundary through rounding.
        let vecs: Vec<(f32, f32)> = (0..64)
            .map(|_| loop {
                let u = rng.random_range(-2.0f64..2.0);
                let v = rng.random_range(-2.0f64..2.0);
                let clear_of_boundaries = u.abs() > 1e-3
                    && v.abs() > 1e-3
                    && (u.abs() - v.abs()).abs() > 1e-3
                    && u.hypot(v) > 1e-3;
                if clear_of_boundaries {
                    return (u as f32, v as f32);
                }
            })
            .collect();
        let field = field_from(8, 8, &vecs);
        let (s, c) = std::f64::consts::FRAC_PI_4.sin_cos();
        let rotated: Vec<(f32, f32)> = vecs
            .iter()
            .map(|&(u, v)| {
                let (u, v) = (u as f64, v as f64);
                ((u * c - v * s) as f32, (u * s + v * c) as f32)
            })
            .collect();
        let rot_field = field_from(8, 8, &rotated);
        let base = segment_histogram(&[field], &cfg).unwrap();
        let rot = segment_histogram(&[rot_field], &cfg).unwrap();
        for cell in 0..4 {
            for b in 0..NUM_BINS {
                assert_eq!(
                    base[cell * NUM_BINS + b],
                    rot[cell * NUM_BINS + (b + 1) % NUM_BINS],
                    "cell {cell} bin {b}"
                );
            }
        }
    }

    #[test]
    fn matrix_drops_trailing_partial_segment() {
        let fields: Vec<FlowField> = (0..7)
            .map(|t| synth_flow(&SynthPattern::Noise { sigma: 1.0, seed: t }, 4, 4).unwrap())
            .collect();
        let cfg = DescriptorConfig {
            dx: 2,
            dy: 2,
            dt: 3,
            ..DescriptorConfig::default()
        };
        let x = build_descriptor_matrix(&fields, &cfg).unwrap();
        assert_eq!(x.dim(), (2 * 2 * NUM_BINS, 2)); // 7 / 3 = 2 segments, 1 field dropped
        for c in 0..2 {
            let want = segment_histogram(&fields[c * 3..(c + 1) * 3], &cfg).unwrap();
            assert_eq!(x.column(c).to_vec(), want, "column {c}");
        }
        // Counts are integers and each column conserves its vector total.
        for &e in x.iter() {
            assert_eq!(e, e.round());
            assert!(e >= 0.0);
        }
    }

    #[test]
    fn matrix_requires_at_least_one_full_segment() {
        let fields: Vec<FlowField> = (0..2)
            .map(|t| synth_flow(&SynthPattern::Noise { sigma: 1.0, seed: t }, 4, 4).unwrap())
            .collect();
        let cfg = DescriptorConfig {
            dx: 2,
            dy: 2,
            dt: 3,
            ..DescriptorConfig::default()
        };
        let err = build_descriptor_matrix(&fields, &cfg).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "got {err:?}");
    }

    #[test]
    fn grid_must_tile_frame_exactly() {
        let cfg = DescriptorConfig {
            dx: 5,
            dy: 2,
            dt: 1,
            ..DescriptorConfig::default()
        };
        assert!(cfg.grid_for(16, 8).is_err());
        assert_eq!(cfg.grid_for(15, 8).unwrap(), (3, 4));
    }
}
