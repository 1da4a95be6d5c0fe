//! Evaluation of predicted segment labels against ground truth, plus the
//! plot artifacts (segment timeline and confusion-matrix image).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Precision/recall for one class. An undefined ratio (0/0: the class was
/// never predicted, or never occurs in the truth) is reported as 0 with the
/// matching `*_defined` flag cleared.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
}

/// Full evaluation of a prediction run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    /// `confusion[t][p]` counts segments of true class `t` predicted as `p`.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    /// Classes the summary means are taken over.
    pub eval_classes: Vec<usize>,
    /// Mean precision over `eval_classes` (undefined entries count as 0).
    pub mean_precision: f64,
    /// Mean recall over `eval_classes` (undefined entries count as 0).
    pub mean_recall: f64,
    /// Fraction of segments labeled correctly.
    pub accuracy: f64,
    /// Total segments evaluated.
    pub total: u64,
}

/// Compare predictions with truth.
///
/// Both slices must have equal nonzero length with labels in
/// `0..num_classes`. `eval_classes` selects which classes enter the summary
/// means (duplicates rejected); per-class metrics are still reported for
/// every class.
pub fn evaluate(
    pred: &[usize],
    truth: &[usize],
    num_classes: usize,
    eval_classes: &[usize],
) -> Result<EvaluationReport> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} truth labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    if num_classes == 0 {
        return Err(Error::Param("num_classes must be positive".into()));
    }
    for (name, labels) in [("prediction", pred), ("truth", truth)] {
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!(
                "{name} label {bad} outside 0..{num_classes}"
            )));
        }
    }
    if eval_classes.is_empty() {
        return Err(Error::Param("eval_classes must not be empty".into()));
    }
    if let Some(bad) = eval_classes.iter().find(|&&c| c >= num_classes) {
        return Err(Error::Param(format!(
            "eval class {bad} outside 0..{num_classes}"
        )));
    }
    let mut seen = vec![false; num_classes];
    for &c in eval_classes {
        if seen[c] {
            return Err(Error::Param(format!("eval class {c} listed twice")));
        }
        seen[c] = true;
    }

    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[t][p] += 1;
    }

    let mut per_class = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let row_sum: u64 = confusion[c].iter().sum();
        let col_sum: u64 = confusion.iter().map(|row| row[c]).sum();
        let hits = confusion[c][c];
        let (precision, precision_defined) = if col_sum > 0 {
            (hits as f64 / col_sum as f64, true)
        } else {
            (0.0, false)
        };
        let (recall, recall_defined) = if row_sum > 0 {
            (hits as f64 / row_sum as f64, true)
        } else {
            (0.0, false)
        };
        per_class.push(ClassMetrics {
            class: c,
            precision,
            recall,
            precision_defined,
            recall_defined,
        });
    }

    let mean_precision = eval_classes
        .iter()
        .map(|&c| per_class[c].precision)
        .sum::<f64>()
        / eval_classes.len() as f64;
    let mean_recall = eval_classes
        .iter()
        .map(|&c| per_class[c].recall)
        .sum::<f64>()
        / eval_classes.len() as f64;
    let total = pred.len() as u64;
    let trace: u64 = (0..num_classes).map(|c| confusion[c][c]).sum();

    Ok(EvaluationReport {
        confusion,
        per_class,
        eval_classes: eval_classes.to_vec(),
        mean_precision,
        mean_recall,
        accuracy: trace as f64 / total as f64,
        total,
    })
}

/// Distinct colors for up to 14 classes; class `c` uses entry `c % 14`.
pub const DEFAULT_PALETTE: [[u8; 3]; 14] = [
    [230, 25, 75],   // red
    [60, 180, 75],   // green
    [0, 130, 200],   // blue
    [255, 225, 25],  // yellow
    [245, 130, 48],  // orange
    [145, 30, 180],  // purple
    [70, 240, 240],  // cyan
    [240, 50, 230],  // magenta
    [210, 245, 60],  // lime
    [250, 190, 212], // pink
    [0, 128, 128],   // teal
    [170, 110, 40],  // brown
    [128, 0, 0],     // maroon
    [128, 128, 128], // gray
];

fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    debug_assert_eq!(rgb.len(), width * height * 3);
    let mut out = Vec::with_capacity(rgb.len() + 32);
    out.extend_from_slice(format!("P6\n{width} {height}\n255\n").as_bytes());
    out.extend_from_slice(rgb);
    let mut file = fs::File::create(path).map_err(Error::io(path))?;
    file.write_all(&out).map_err(Error::io(path))?;
    Ok(())
}

/// Render a timeline strip: one pixel column per segment, colored by class.
///
/// With truth present the image stacks the prediction strip, a one-pixel
/// white separator row, and the truth strip. Binary PPM (P6) output.
pub fn emit_segment_plot(
    path: &Path,
    pred: &[usize],
    truth: Option<&[usize]>,
    strip_height: usize,
) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Data("nothing to plot".into()));
    }
    if strip_height == 0 {
        return Err(Error::Param("strip height must be positive".into()));
    }
    if let Some(t) = truth {
        if t.len() != pred.len() {
            return Err(Error::Shape(format!(
                "{} predictions vs {} truth labels",
                pred.len(),
                t.len()
            )));
        }
    }
    let width = pred.len();
    let height = match truth {
        Some(_) => strip_height * 2 + 1,
        None => strip_height,
    };
    let mut rgb = vec![255u8; width * height * 3];
    let mut paint_strip = |labels: &[usize], y0: usize| {
        for (x, &l) in labels.iter().enumerate() {
            let color = DEFAULT_PALETTE[l % DEFAULT_PALETTE.len()];
            for y in y0..y0 + strip_height {
                let at = (y * width + x) * 3;
                rgb[at..at + 3].copy_from_slice(&color);
            }
        }
    };
    paint_strip(pred, 0);
    if let Some(t) = truth {
        // Row `strip_height` stays white as the separator.
        paint_strip(t, strip_height + 1);
    }
    write_ppm(path, width, height, &rgb)
}

/// Write the confusion matrix as bare CSV: one row per true class, counts
/// separated by commas, rows separated by a single `\n`, no header and no
/// trailing newline.
pub fn emit_confusion_csv(path: &Path, confusion: &[Vec<u64>]) -> Result<()> {
    let body = confusion
        .iter()
        .map(|row| {
            row.iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(path, body).map_err(Error::io(path))
}

/// Render the confusion matrix as a grayscale PPM, `cell_size` pixels per
/// cell. Each row is normalized by its total: intensity
/// `round(255 * (1 - count / row_total))`, so a dominant cell is dark and an
/// empty one white. A row with no segments at all stays white.
pub fn emit_confusion_image(path: &Path, confusion: &[Vec<u64>], cell_size: usize) -> Result<()> {
    let c = confusion.len();
    if c == 0 {
        return Err(Error::Data("empty confusion matrix".into()));
    }
    if confusion.iter().any(|row| row.len() != c) {
        return Err(Error::Shape("confusion matrix is not square".into()));
    }
    if cell_size == 0 {
        return Err(Error::Param("cell size must be positive".into()));
    }
    let side = c * cell_size;
    let mut rgb = vec![255u8; side * side * 3];
    for (t, row) in confusion.iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total == 0 {
            continue;
        }
        for (p, &count) in row.iter().enumerate() {
            let shade = (255.0 * (1.0 - count as f64 / total as f64)).round() as u8;
            for dy in 0..cell_size {
                let y = t * cell_size + dy;
                for dx in 0..cell_size {
                    let x = p * cell_size + dx;
                    let at = (y * side + x) * 3;
                    rgb[at..at + 3].copy_from_slice(&[shade, shade, shade]);
                }
            }
        }
    }
    write_ppm(path, side, side, &rgb)
}
