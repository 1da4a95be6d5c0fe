//! End-to-end orchestration: a JSON-configured run that takes frame
//! sequences (or precomputed/synthetic flow) all the way to predicted
//! labels, an evaluation report, and plots.
//!
//! The run is cut into stages, each leaving its products in the output
//! directory:
//!
//! | stage        | products |
//! |--------------|----------|
//! | `flow`       | `flow/<video>/NNNNNN.flo` (frame-dir sources only) |
//! | `descriptor` | `descriptor.gmd` |
//! | `reduce`     | `basis.gmd`, `coeffs.gmd`, `features.gmd` |
//! | `spectrum`   | `spectrum.spc` (skipped for batched runs) |
//! | `classify`   | `predictions.csv`, `mbo_diagnostics.csv` |
//! | `evaluate`   | `report.json`, `confusion.csv`, `confusion.ppm`, `segments.ppm` |
//!
//! A stage whose products already exist is skipped, so an interrupted run
//! resumes where it stopped; `force` redoes everything. A lock file in the
//! output directory keeps concurrent runs from trampling each other. Every
//! error is tagged with the stage it happened in.
//!
//! All randomness is seeded through the config, so a run is reproducible
//! byte for byte.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::Deserialize;

use crate::descriptor::{segment_histogram, DescriptorConfig};
use crate::error::{Error, Result};
use crate::eval::{
    emit_confusion_csv, emit_confusion_image, emit_segment_plot, evaluate, EvaluationReport,
};
use crate::flow::{
    compute_flow, read_flo, read_frame, resize_frame, write_flo, FlowField, FlowParams,
    SyntheticSpec,
};
use crate::formats::{
    read_labels, read_matrix, read_spectrum, write_labels, write_matrix, write_spectrum,
};
use crate::mbo::{classify_batched, mbo_classify, sample_fidelity, BatchOptions, MboParams};
use crate::reduction::{nmf, project_nnls, smooth_blocks, NmfOptions, SmoothingWindow};
use crate::spectrum::{
    nystrom_spectrum, FeatureSet, LandmarkStrength, NystromOptions, ScaleParams,
};

/// Width every input frame is resized to before flow estimation.
pub const CANONICAL_WIDTH: usize = 1024;
/// Height every input frame is resized to before flow estimation.
pub const CANONICAL_HEIGHT: usize = 576;

const LOCK_FILE: &str = ".egograph.lock";

/// One input video and where its motion comes from. Exactly one of
/// `frames_dir` (grayscale PGM frames, processed through the flow stage),
/// `flo_dir` (precomputed flow fields), or `synthetic` must be set.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoConfig {
    pub id: String,
    /// Frame rate, used to report segment durations.
    pub fps: f64,
    #[serde(default)]
    pub frames_dir: Option<PathBuf>,
    #[serde(default)]
    pub flo_dir: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSource>,
}

/// Procedurally generated flow, described by a pattern expression like
/// `"translate:2,0+noise:0.3,7"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub spec: String,
    pub width: usize,
    pub height: usize,
    /// Number of flow fields to generate.
    pub fields: usize,
}

enum Source<'a> {
    Frames(&'a Path),
    Flo(&'a Path),
    Synthetic(&'a SyntheticSource),
}

impl VideoConfig {
    fn source(&self) -> Result<Source<'_>> {
        match (&self.frames_dir, &self.flo_dir, &self.synthetic) {
            (Some(d), None, None) => Ok(Source::Frames(d)),
            (None, Some(d), None) => Ok(Source::Flo(d)),
            (None, None, Some(s)) => Ok(Source::Synthetic(s)),
            _ => Err(Error::Param(format!(
                "video '{}' must set exactly one of frames_dir, flo_dir, synthetic",
                self.id
            ))),
        }
    }
}

fn default_true_window() -> usize {
    5
}

/// Descriptor geometry, minus the per-video frame rate.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescriptorSection {
    pub dx: usize,
    pub dy: usize,
    pub dt: usize,
    pub zero_threshold: f64,
}

impl Default for DescriptorSection {
    fn default() -> Self {
        let d = DescriptorConfig::default();
        DescriptorSection {
            dx: d.dx,
            dy: d.dy,
            dt: d.dt,
            zero_threshold: d.zero_threshold,
        }
    }
}

impl DescriptorSection {
    fn config_for(&self, fps: f64) -> DescriptorConfig {
        DescriptorConfig {
            dx: self.dx,
            dy: self.dy,
            dt: self.dt,
            fps,
            zero_threshold: self.zero_threshold,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmfSection {
    pub rank: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for NmfSection {
    fn default() -> Self {
        let o = NmfOptions::default();
        NmfSection {
            rank: 50,
            max_iters: o.max_iters,
            tol: o.tol,
            seed: o.seed,
        }
    }
}

/// Graph/eigenpair parameters. Exactly one of `knn` (local scaling) or
/// `tau` (one global bandwidth) must be set.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub n_sample: usize,
    pub n_eig: usize,
    #[serde(default)]
    pub knn: Option<usize>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Estimate landmark strengths from the landmark block alone instead of
    /// both blocks.
    #[serde(default)]
    pub sample_only_strengths: bool,
}

impl SpectrumSection {
    fn scales(&self) -> Result<ScaleParams> {
        match (self.knn, self.tau) {
            (Some(k), None) => Ok(ScaleParams::Local { k }),
            (None, Some(tau)) => Ok(ScaleParams::Global { tau }),
            _ => Err(Error::Param(
                "spectrum config must set exactly one of knn, tau".into(),
            )),
        }
    }

    fn options(&self) -> Result<NystromOptions> {
        Ok(NystromOptions {
            n_sample: self.n_sample,
            n_eig: self.n_eig,
            scales: self.scales()?,
            seed: self.seed,
            strength: if self.sample_only_strengths {
                LandmarkStrength::SampleOnly
            } else {
                LandmarkStrength::Augmented
            },
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MboSection {
    pub eta: f64,
    pub dt: f64,
    pub n_step: usize,
    pub max_iter: usize,
    /// Per-class fraction of truth labels revealed to the classifier.
    pub fidelity_fraction: f64,
    pub seed: u64,
}

impl Default for MboSection {
    fn default() -> Self {
        let p = MboParams::default();
        MboSection {
            eta: p.eta,
            dt: p.dt,
            n_step: p.n_step,
            max_iter: p.max_iter,
            fidelity_fraction: 0.1,
            seed: p.seed,
        }
    }
}

impl MboSection {
    fn params(&self) -> MboParams {
        MboParams {
            eta: self.eta,
            dt: self.dt,
            n_step: self.n_step,
            max_iter: self.max_iter,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSection {
    pub alpha: f64,
    pub iterations: usize,
    pub convergence_tol: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        let p = FlowParams::default();
        FlowSection {
            alpha: p.smoothness,
            iterations: p.iterations,
            convergence_tol: p.convergence_tol,
        }
    }
}

impl FlowSection {
    fn params(&self) -> FlowParams {
        FlowParams {
            smoothness: self.alpha,
            iterations: self.iterations,
            convergence_tol: self.convergence_tol,
        }
    }
}

/// Full run configuration, deserialized from JSON.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub videos: Vec<VideoConfig>,
    /// Class names; their count fixes the number of classes.
    pub class_names: Vec<String>,
    /// Ground-truth labels CSV for the concatenated segments. Required for
    /// classification (fidelity sampling) and evaluation.
    #[serde(default)]
    pub truth_labels: Option<PathBuf>,
    /// Classes included in the summary means; defaults to all classes.
    #[serde(default)]
    pub eval_classes: Option<Vec<usize>>,
    #[serde(default)]
    pub descriptor: DescriptorSection,
    /// Reuse this basis (a `GMD1` matrix) instead of factorizing; new
    /// descriptors are projected onto it.
    #[serde(default)]
    pub basis_in: Option<PathBuf>,
    #[serde(default)]
    pub nmf: NmfSection,
    /// Moving-average window (odd) applied to the coefficient rows,
    /// restarted at each video boundary.
    #[serde(default = "default_true_window")]
    pub window: usize,
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub mbo: MboSection,
    /// When set, classify in contiguous batches of this size, each with its
    /// own landmark spectrum.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub flow: FlowSection,
    pub out_dir: PathBuf,
}

/// Parse and validate a config file.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let config: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.videos.is_empty() {
            return Err(Error::Param("config lists no videos".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for video in &self.videos {
            video.source()?;
            if !seen.insert(video.id.as_str()) {
                return Err(Error::Param(format!("duplicate video id '{}'", video.id)));
            }
            if let Some(sy) = &video.synthetic {
                sy.spec.parse::<SyntheticSpec>()?;
            }
        }
        if self.class_names.len() < 2 {
            return Err(Error::Param(format!(
                "need at least 2 class names, got {}",
                self.class_names.len()
            )));
        }
        if let Some(classes) = &self.eval_classes {
            if let Some(bad) = classes.iter().find(|&&c| c >= self.class_names.len()) {
                return Err(Error::Param(format!(
                    "eval class {bad} outside 0..{}",
                    self.class_names.len()
                )));
            }
        }
        if self.descriptor.dt == 0 {
            return Err(Error::Param("descriptor dt must be at least 1".into()));
        }
        SmoothingWindow::new(self.window)?;
        self.spectrum.scales()?;
        Ok(())
    }
}

/// Removes the lock file when the run ends (including on error unwind).
struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn acquire_lock(out_dir: &Path) -> Result<LockGuard> {
    let path = out_dir.join(LOCK_FILE);
    match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
        Ok(mut file) => {
            let _ = writeln!(file, "{}", std::process::id());
            Ok(LockGuard { path })
        }
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked { path }),
        Err(e) => Err(Error::io(&path)(e)),
    }
}

/// What a finished run did and found.
#[derive(Debug, Clone)]
pub struct RunReport {
    /// One line per stage: what ran, what was skipped.
    pub stage_log: Vec<String>,
    /// Non-fatal anomalies (non-convergence, batches missing class
    /// fidelity, ...).
    pub warnings: Vec<String>,
    /// Present when truth labels were configured.
    pub evaluation: Option<EvaluationReport>,
}

/// List the files in `dir` with the given extension, sorted by name
/// (zero-padded numeric names sort correctly).
pub fn sorted_files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(Error::io(dir))? {
        let entry = entry.map_err(Error::io(dir))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            paths.push(path);
        }
    }
    // Lexicographic order; frame/field files are expected to use
    // zero-padded numeric names.
    paths.sort();
    Ok(paths)
}

/// Build a descriptor matrix segment by segment without holding more than
/// one segment's flow in memory per worker.
///
/// `fetch(i)` supplies the `i`-th flow field (from disk, or generated on
/// the fly); whole trailing segments shorter than `dt` fields are dropped.
pub fn streamed_descriptor<F>(
    n_fields: usize,
    config: &DescriptorConfig,
    fetch: F,
) -> Result<Array2<f64>>
where
    F: Fn(usize) -> Result<FlowField> + Sync,
{
    config.validate()?;
    let segments = n_fields / config.dt;
    if segments == 0 {
        return Err(Error::Data(format!(
            "{n_fields} flow fields cannot fill a segment of {} fields",
            config.dt
        )));
    }
    let columns: Vec<Vec<f64>> = (0..segments)
        .into_par_iter()
        .map(|s| {
            let fields: Vec<FlowField> = (s * config.dt..(s + 1) * config.dt)
                .map(&fetch)
                .collect::<Result<_>>()?;
            segment_histogram(&fields, config)
        })
        .collect::<Result<_>>()?;
    let rows = columns[0].len();
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::Shape(
            "segments produced histograms of different sizes".into(),
        ));
    }
    Ok(Array2::from_shape_fn((rows, segments), |(r, c)| {
        columns[c][r]
    }))
}

struct Paths {
    descriptor: PathBuf,
    basis: PathBuf,
    coeffs: PathBuf,
    features: PathBuf,
    spectrum: PathBuf,
    predictions: PathBuf,
    diagnostics: PathBuf,
    report: PathBuf,
    confusion_csv: PathBuf,
    confusion_ppm: PathBuf,
    segments_ppm: PathBuf,
}

impl Paths {
    fn new(out_dir: &Path) -> Paths {
        Paths {
            descriptor: out_dir.join("descriptor.gmd"),
            basis: out_dir.join("basis.gmd"),
            coeffs: out_dir.join("coeffs.gmd"),
            features: out_dir.join("features.gmd"),
            spectrum: out_dir.join("spectrum.spc"),
            predictions: out_dir.join("predictions.csv"),
            diagnostics: out_dir.join("mbo_diagnostics.csv"),
            report: out_dir.join("report.json"),
            confusion_csv: out_dir.join("confusion.csv"),
            confusion_ppm: out_dir.join("confusion.ppm"),
            segments_ppm: out_dir.join("segments.ppm"),
        }
    }
}

fn stage_flow(config: &PipelineConfig, force: bool, log: &mut Vec<String>) -> Result<()> {
    let params = config.flow.params();
    for video in &config.videos {
        let Source::Frames(frames_dir) = video.source()? else {
            continue;
        };
        let flo_dir = config.out_dir.join("flow").join(&video.id);
        if !force
            && flo_dir.is_dir()
            && !sorted_files_with_extension(&flo_dir, "flo")?.is_empty()
        {
            log.push(format!("flow: kept existing fields for '{}'", video.id));
            continue;
        }
        fs::create_dir_all(&flo_dir).map_err(Error::io(&flo_dir))?;
        let frames = sorted_files_with_extension(frames_dir, "pgm")?;
        if frames.len() < 2 {
            return Err(Error::Data(format!(
                "video '{}' has {} frame(s); flow needs at least 2",
                video.id,
                frames.len()
            )));
        }
        (0..frames.len() - 1)
            .into_par_iter()
            .map(|i| {
                let load = |p: &Path| -> Result<_> {
                    resize_frame(&read_frame(p)?, CANONICAL_WIDTH, CANONICAL_HEIGHT)
                };
                let field = compute_flow(&load(&frames[i])?, &load(&frames[i + 1])?, &params)?;
                write_flo(&field, flo_dir.join(format!("{i:06}.flo")))
            })
            .collect::<Result<()>>()?;
        log.push(format!(
            "flow: computed {} fields for '{}'",
            frames.len() - 1,
            video.id
        ));
    }
    Ok(())
}

fn stage_descriptor(
    config: &PipelineConfig,
    paths: &Paths,
    force: bool,
    log: &mut Vec<String>,
) -> Result<()> {
    if !force && paths.descriptor.is_file() {
        log.push("descriptor: kept existing matrix".into());
        return Ok(());
    }
    let mut parts: Vec<Array2<f64>> = Vec::new();
    for video in &config.videos {
        let dcfg = config.descriptor.config_for(video.fps);
        let part = match video.source()? {
            Source::Frames(_) => {
                let flo_dir = config.out_dir.join("flow").join(&video.id);
                let files = sorted_files_with_extension(&flo_dir, "flo")?;
                streamed_descriptor(files.len(), &dcfg, |i| read_flo(&files[i]))?
            }
            Source::Flo(dir) => {
                let files = sorted_files_with_extension(dir, "flo")?;
                streamed_descriptor(files.len(), &dcfg, |i| read_flo(&files[i]))?
            }
            Source::Synthetic(sy) => {
                let spec: SyntheticSpec = sy.spec.parse()?;
                streamed_descriptor(sy.fields, &dcfg, |i| {
                    spec.field_at(sy.width, sy.height, i as u64)
                })?
            }
        };
        parts.push(part);
    }
    let rows = parts[0].nrows();
    if parts.iter().any(|p| p.nrows() != rows) {
        return Err(Error::Shape(
            "videos produced descriptors of different heights; \
             check that all sources share one resolution"
                .into(),
        ));
    }
    let total: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut x = Array2::zeros((rows, total));
    let mut at = 0;
    for part in &parts {
        x.slice_mut(ndarray::s![.., at..at + part.ncols()])
            .assign(part);
        at += part.ncols();
    }
    write_matrix(&paths.descriptor, &x)?;
    log.push(format!(
        "descriptor: {} segments x {} histogram entries",
        total, rows
    ));
    Ok(())
}

fn stage_reduce(
    config: &PipelineConfig,
    paths: &Paths,
    force: bool,
    log: &mut Vec<String>,
) -> Result<()> {
    if !force && paths.features.is_file() {
        log.push("reduce: kept existing features".into());
        return Ok(());
    }
    let x = read_matrix(&paths.descriptor)?;
    let coeffs = match &config.basis_in {
        Some(basis_path) => {
            let basis = read_matrix(basis_path)?;
            let h = project_nnls(&x, &basis)?;
            log.push(format!(
                "reduce: projected onto given basis of rank {}",
                basis.ncols()
            ));
            h
        }
        None => {
            let opts = NmfOptions {
                max_iters: config.nmf.max_iters,
                tol: config.nmf.tol,
                seed: config.nmf.seed,
            };
            let factors = nmf(&x, config.nmf.rank, &opts)?;
            write_matrix(&paths.basis, &factors.basis)?;
            write_matrix(&paths.coeffs, &factors.coeffs)?;
            log.push(format!(
                "reduce: factorized to rank {} in {} sweeps (objective {:.6e})",
                factors.rank,
                factors.iterations,
                factors.final_objective()
            ));
            factors.coeffs
        }
    };
    // Each video is its own timeline: the moving average must not blend
    // the last segments of one recording into the first of the next.
    let counts = video_segment_counts(config)?;
    if counts.iter().sum::<usize>() != coeffs.ncols() {
        return Err(Error::Data(format!(
            "descriptor matrix has {} segments but the configured videos \
             yield {:?}; rerun with --force to rebuild stale artifacts",
            coeffs.ncols(),
            counts
        )));
    }
    let smoothed = smooth_blocks(&coeffs, SmoothingWindow::new(config.window)?, &counts)?;
    write_matrix(&paths.features, &smoothed)?;
    Ok(())
}

/// Segment count contributed by each video, in configuration order.
///
/// Mirrors how the descriptor stage cuts each video's field sequence into
/// segments of `dt` fields (dropping a trailing partial segment), so later
/// stages can tell which descriptor columns belong to which recording.
fn video_segment_counts(config: &PipelineConfig) -> Result<Vec<usize>> {
    let dt = config.descriptor.dt;
    let mut counts = Vec::with_capacity(config.videos.len());
    for video in &config.videos {
        let fields = match video.source()? {
            Source::Frames(_) => {
                let flo_dir = config.out_dir.join("flow").join(&video.id);
                sorted_files_with_extension(&flo_dir, "flo")?.len()
            }
            Source::Flo(dir) => sorted_files_with_extension(dir, "flo")?.len(),
            Source::Synthetic(sy) => sy.fields,
        };
        counts.push(fields / dt);
    }
    Ok(counts)
}

fn stage_spectrum(
    config: &PipelineConfig,
    paths: &Paths,
    force: bool,
    log: &mut Vec<String>,
) -> Result<()> {
    if config.batch_size.is_some() {
        log.push("spectrum: deferred to per-batch classification".into());
        return Ok(());
    }
    if !force && paths.spectrum.is_file() {
        log.push("spectrum: kept existing eigenpairs".into());
        return Ok(());
    }
    let features = FeatureSet::from_columns(&read_matrix(&paths.features)?)?;
    let spectrum = nystrom_spectrum(&features, &config.spectrum.options()?)?;
    write_spectrum(&paths.spectrum, &spectrum)?;
    log.push(format!(
        "spectrum: {} eigenpairs from {} landmarks over {} segments",
        spectrum.n_eig(),
        spectrum.n_sample,
        spectrum.len()
    ));
    Ok(())
}

fn stage_classify(
    config: &PipelineConfig,
    paths: &Paths,
    force: bool,
    log: &mut Vec<String>,
    warnings: &mut Vec<String>,
) -> Result<()> {
    if !force && paths.predictions.is_file() {
        log.push("classify: kept existing predictions".into());
        return Ok(());
    }
    let truth_path = config.truth_labels.as_ref().ok_or_else(|| {
        Error::Param("classification needs truth_labels to sample fidelity from".into())
    })?;
    let truth = read_labels(truth_path)?;
    let num_classes = config.class_names.len();
    let labels = sample_fidelity(
        &truth,
        num_classes,
        config.mbo.fidelity_fraction,
        config.mbo.seed,
    )?;
    let params = config.mbo.params();

    let mut diagnostics = String::new();
    let assignment = match config.batch_size {
        Some(batch_size) => {
            let features = FeatureSet::from_columns(&read_matrix(&paths.features)?)?;
            if features.len() != truth.len() {
                return Err(Error::Shape(format!(
                    "{} truth labels for {} segments",
                    truth.len(),
                    features.len()
                )));
            }
            let outcome = classify_batched(
                &features,
                &labels,
                &BatchOptions {
                    batch_size,
                    spectrum: config.spectrum.options()?,
                    mbo: params.clone(),
                },
            )?;
            warnings.extend(outcome.warnings.iter().cloned());
            diagnostics.push_str("batch,start,len,iterations,converged\n");
            for (i, b) in outcome.batches.iter().enumerate() {
                diagnostics.push_str(&format!(
                    "{i},{},{},{},{}\n",
                    b.start, b.len, b.iterations, b.converged
                ));
                if !b.converged {
                    warnings.push(format!(
                        "batch {i} did not converge within {} iterations",
                        params.max_iter
                    ));
                }
            }
            log.push(format!(
                "classify: {} segments in {} batches",
                features.len(),
                outcome.batches.len()
            ));
            outcome.assignment
        }
        None => {
            let spectrum = read_spectrum(&paths.spectrum)?;
            if spectrum.len() != truth.len() {
                return Err(Error::Shape(format!(
                    "{} truth labels for {} segments",
                    truth.len(),
                    spectrum.len()
                )));
            }
            let outcome = mbo_classify(&spectrum, &labels, &params)?;
            diagnostics.push_str("iteration,changed\n");
            for (i, changed) in outcome.changed_history.iter().enumerate() {
                diagnostics.push_str(&format!("{},{changed}\n", i + 1));
            }
            if !outcome.converged {
                warnings.push(format!(
                    "classifier did not converge within {} iterations",
                    params.max_iter
                ));
            }
            log.push(format!(
                "classify: {} segments, {} iterations, converged: {}",
                spectrum.len(),
                outcome.iterations,
                outcome.converged
            ));
            outcome.assignment
        }
    };
    write_labels(&paths.predictions, assignment.labels())?;
    fs::write(&paths.diagnostics, diagnostics).map_err(Error::io(&paths.diagnostics))?;
    Ok(())
}

fn stage_evaluate(
    config: &PipelineConfig,
    paths: &Paths,
    force: bool,
    log: &mut Vec<String>,
) -> Result<Option<EvaluationReport>> {
    let Some(truth_path) = &config.truth_labels else {
        log.push("evaluate: no truth labels configured, skipped".into());
        return Ok(None);
    };
    let pred = read_labels(&paths.predictions)?;
    let truth = read_labels(truth_path)?;
    let num_classes = config.class_names.len();
    let all_classes: Vec<usize> = (0..num_classes).collect();
    let eval_classes = config.eval_classes.as_deref().unwrap_or(&all_classes);
    let report = evaluate(&pred, &truth, num_classes, eval_classes)?;
    if force || !paths.report.is_file() {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(&paths.report, json).map_err(Error::io(&paths.report))?;
        emit_confusion_csv(&paths.confusion_csv, &report.confusion)?;
        emit_confusion_image(&paths.confusion_ppm, &report.confusion, 32)?;
        emit_segment_plot(&paths.segments_ppm, &pred, Some(&truth), 40)?;
        log.push(format!(
            "evaluate: accuracy {:.4} over {} segments",
            report.accuracy, report.total
        ));
    } else {
        log.push("evaluate: kept existing report".into());
    }
    Ok(Some(report))
}

/// Run every stage of a configured pipeline.
///
/// Stage products already on disk are reused unless `force` is set. Returns
/// the stage log, accumulated warnings, and the evaluation report when
/// truth labels were available.
pub fn run_pipeline(config: &PipelineConfig, force: bool) -> Result<RunReport> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir).map_err(Error::io(&config.out_dir))?;
    let _lock = acquire_lock(&config.out_dir)?;
    let paths = Paths::new(&config.out_dir);

    let mut log = Vec::new();
    let mut warnings = Vec::new();
    stage_flow(config, force, &mut log).map_err(|e| e.in_stage("flow"))?;
    stage_descriptor(config, &paths, force, &mut log).map_err(|e| e.in_stage("descriptor"))?;
    stage_reduce(config, &paths, force, &mut log).map_err(|e| e.in_stage("reduce"))?;
    stage_spectrum(config, &paths, force, &mut log).map_err(|e| e.in_stage("spectrum"))?;
    stage_classify(config, &paths, force, &mut log, &mut warnings)
        .map_err(|e| e.in_stage("classify"))?;
    let evaluation =
        stage_evaluate(config, &paths, force, &mut log).map_err(|e| e.in_stage("evaluate"))?;

    Ok(RunReport {
        stage_log: log,
        warnings,
        evaluation,
    })
}
