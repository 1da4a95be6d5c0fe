//! Command-line front end: one subcommand per pipeline stage, plus `run`
//! for a configured end-to-end job.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use egograph::descriptor::DescriptorConfig;
use egograph::error::{Error, Result};
use egograph::eval::{emit_confusion_csv, emit_confusion_image, emit_segment_plot, evaluate};
use egograph::flow::{
    compute_flow, read_frame, resize_frame, write_flo, FlowParams, SyntheticSpec,
};
use egograph::formats::{
    read_labels, read_matrix, read_spectrum, write_labels, write_matrix, write_spectrum,
};
use egograph::mbo::{
    classify_batched, mbo_classify, sample_fidelity, BatchOptions, MboParams,
};
use egograph::pipeline::{
    load_config, run_pipeline, sorted_files_with_extension, streamed_descriptor,
    CANONICAL_HEIGHT, CANONICAL_WIDTH,
};
use egograph::reduction::{nmf, project_nnls, smooth, smooth_blocks, NmfOptions, SmoothingWindow};
use egograph::spectrum::{
    nystrom_spectrum, FeatureSet, LandmarkStrength, NystromOptions, ScaleParams,
};

#[derive(Parser)]
#[command(
    name = "egograph",
    version,
    about = "Classify body-worn video segments by camera-wearer activity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate dense optical flow for a frame sequence (or synthesize it).
    Flow(FlowArgs),
    /// Turn flow fields into per-segment motion histograms.
    Descriptor(DescriptorArgs),
    /// Compress descriptors with a non-negative factorization and smooth them.
    Reduce(ReduceArgs),
    /// Compute the leading Laplacian eigenpairs of the segment graph.
    Spectrum(SpectrumArgs),
    /// Assign activity labels by threshold dynamics on the spectrum.
    Classify(ClassifyArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Draw the segment timeline image.
    Plot(PlotArgs),
    /// Run the whole configured pipeline.
    Run(RunArgs),
}

#[derive(Args)]
struct FlowArgs {
    /// Directory of grayscale PGM frames, processed in name order.
    #[arg(long, conflicts_with = "synthetic")]
    frames_dir: Option<PathBuf>,
    /// Synthetic pattern expression, e.g. "translate:2,0+noise:0.3,7".
    #[arg(long)]
    synthetic: Option<String>,
    /// Number of synthetic flow fields to generate.
    #[arg(long, default_value_t = 60, requires = "synthetic")]
    fields: usize,
    /// Field/frame width (frames are resized to this).
    #[arg(long, default_value_t = CANONICAL_WIDTH)]
    width: usize,
    /// Field/frame height (frames are resized to this).
    #[arg(long, default_value_t = CANONICAL_HEIGHT)]
    height: usize,
    /// Smoothness weight of the flow estimator.
    #[arg(long, default_value_t = 10.0)]
    alpha: f64,
    /// Maximum flow iterations per frame pair.
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Early-exit threshold on the largest update.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Directory the .flo files are written to.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DescriptorArgs {
    /// Directory of .flo flow fields, processed in name order.
    #[arg(long)]
    flo_dir: PathBuf,
    /// Cell width in pixels.
    #[arg(long, default_value_t = 64)]
    dx: usize,
    /// Cell height in pixels.
    #[arg(long, default_value_t = 64)]
    dy: usize,
    /// Flow fields per segment.
    #[arg(long, default_value_t = 6)]
    dt: usize,
    /// Source frame rate.
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Vectors shorter than this are not counted.
    #[arg(long, default_value_t = 1e-6)]
    zero_threshold: f64,
    /// Output descriptor matrix (GMD1).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReduceArgs {
    /// Input descriptor matrix (GMD1).
    #[arg(long)]
    input: PathBuf,
    /// Factorization rank.
    #[arg(long, default_value_t = 50, conflicts_with = "basis_in")]
    rank: usize,
    /// Maximum factorization sweeps.
    #[arg(long, default_value_t = 500)]
    iters: usize,
    /// Relative-decrease stopping tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Seed for the factor initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Moving-average window over segments (odd; 1 disables smoothing).
    #[arg(long, default_value_t = 1)]
    window: usize,
    /// Comma-separated per-recording segment counts; smoothing restarts at
    /// each boundary. Default treats all columns as one recording.
    #[arg(long, value_delimiter = ',')]
    blocks: Option<Vec<usize>>,
    /// Write the learned basis here (GMD1).
    #[arg(long)]
    basis_out: Option<PathBuf>,
    /// Write the raw (pre-smoothing) coefficients here (GMD1).
    #[arg(long)]
    coeffs_out: Option<PathBuf>,
    /// Project onto this existing basis instead of factorizing.
    #[arg(long)]
    basis_in: Option<PathBuf>,
    /// Output feature matrix (GMD1), smoothed coefficients.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Input feature matrix (GMD1), one column per segment.
    #[arg(long)]
    input: PathBuf,
    /// Landmark count.
    #[arg(long)]
    nsample: usize,
    /// Number of eigenpairs.
    #[arg(long)]
    neig: usize,
    /// Local scaling: neighbor rank for per-node bandwidths.
    #[arg(long, conflicts_with = "tau")]
    knn: Option<usize>,
    /// Global bandwidth (instead of local scaling).
    #[arg(long)]
    tau: Option<f64>,
    /// Seed for the landmark draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Estimate landmark strengths from the landmark block only.
    #[arg(long)]
    sample_only_strengths: bool,
    /// Output spectrum (SPC1).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Precomputed spectrum (SPC1) for a single unbatched run.
    #[arg(long, conflicts_with = "features")]
    spectrum: Option<PathBuf>,
    /// Feature matrix (GMD1) for a batched run.
    #[arg(long, requires = "batch_size")]
    features: Option<PathBuf>,
    /// Classify in contiguous batches of this size.
    #[arg(long, requires = "features")]
    batch_size: Option<usize>,
    /// Landmark count per batch.
    #[arg(long, default_value_t = 1000)]
    nsample: usize,
    /// Eigenpairs per batch.
    #[arg(long, default_value_t = 400)]
    neig: usize,
    /// Local scaling neighbor rank (batched runs).
    #[arg(long, conflicts_with = "tau")]
    knn: Option<usize>,
    /// Global bandwidth (batched runs).
    #[arg(long)]
    tau: Option<f64>,
    /// Seed for the per-batch landmark draw.
    #[arg(long, default_value_t = 0)]
    spectrum_seed: u64,
    /// Ground-truth labels CSV; fidelity is sampled from it.
    #[arg(long)]
    labels: PathBuf,
    /// Number of classes (default: largest truth label + 1).
    #[arg(long)]
    classes: Option<usize>,
    /// Per-class fraction of truth revealed as fidelity.
    #[arg(long, default_value_t = 0.1)]
    fidelity_fraction: f64,
    /// Fidelity strength.
    #[arg(long, default_value_t = 300.0)]
    eta: f64,
    /// Diffusion time per iteration.
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    /// Inner diffusion steps per iteration.
    #[arg(long, default_value_t = 10)]
    nstep: usize,
    /// Iteration cap.
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    /// Seed for fidelity sampling and initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output predictions CSV.
    #[arg(long)]
    out: PathBuf,
    /// Write per-iteration (or per-batch) diagnostics CSV here.
    #[arg(long)]
    diagnostics_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predictions CSV.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth CSV.
    #[arg(long)]
    truth: PathBuf,
    /// Number of classes (default: largest label + 1).
    #[arg(long)]
    classes: Option<usize>,
    /// Classes for the summary means, e.g. "0,1,3" (default: all).
    #[arg(long, value_delimiter = ',')]
    eval_classes: Option<Vec<usize>>,
    /// Output report (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Also write the confusion matrix as CSV.
    #[arg(long)]
    confusion_csv: Option<PathBuf>,
    /// Also render the confusion matrix as a PPM image.
    #[arg(long)]
    confusion_ppm: Option<PathBuf>,
    /// Cell size of the confusion image, in pixels.
    #[arg(long, default_value_t = 32)]
    cell_size: usize,
}

#[derive(Args)]
struct PlotArgs {
    /// Predictions CSV.
    #[arg(long)]
    pred: PathBuf,
    /// Optional ground-truth CSV drawn as a second strip.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output image (PPM).
    #[arg(long)]
    out: PathBuf,
    /// Height of each strip in pixels.
    #[arg(long, default_value_t = 40)]
    height: usize,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Recompute every stage even when its products exist.
    #[arg(long)]
    force: bool,
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn scale_params(knn: Option<usize>, tau: Option<f64>) -> Result<ScaleParams> {
    match (knn, tau) {
        (Some(k), None) => Ok(ScaleParams::Local { k }),
        (None, Some(t)) => Ok(ScaleParams::Global { tau: t }),
        _ => Err(Error::Param("set exactly one of --knn, --tau".into())),
    }
}

fn infer_classes(explicit: Option<usize>, labels: &[&[usize]]) -> usize {
    explicit.unwrap_or_else(|| {
        labels
            .iter()
            .flat_map(|l| l.iter())
            .copied()
            .max()
            .map_or(2, |m| (m + 1).max(2))
    })
}

fn cmd_flow(args: FlowArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;
    let written = if let Some(spec_text) = &args.synthetic {
        let spec: SyntheticSpec = spec_text.parse()?;
        for i in 0..args.fields {
            let field = spec.field_at(args.width, args.height, i as u64)?;
            write_flo(&field, args.out_dir.join(format!("{i:06}.flo")))?;
        }
        args.fields
    } else {
        let frames_dir = args
            .frames_dir
            .as_ref()
            .ok_or_else(|| Error::Param("set one of --frames-dir, --synthetic".into()))?;
        let frames = sorted_files_with_extension(frames_dir, "pgm")?;
        if frames.len() < 2 {
            return Err(Error::Data(format!(
                "{} frame(s) in {}; flow needs at least 2",
                frames.len(),
                frames_dir.display()
            )));
        }
        let params = FlowParams {
            smoothness: args.alpha,
            iterations: args.iters,
            convergence_tol: args.tol,
        };
        for i in 0..frames.len() - 1 {
            let load = |p: &PathBuf| -> Result<_> {
                resize_frame(&read_frame(p)?, args.width, args.height)
            };
            let field = compute_flow(&load(&frames[i])?, &load(&frames[i + 1])?, &params)?;
            write_flo(&field, args.out_dir.join(format!("{i:06}.flo")))?;
        }
        frames.len() - 1
    };
    println!(
        "wrote {written} flow fields ({}x{}) to {}",
        args.width,
        args.height,
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_descriptor(args: DescriptorArgs) -> Result<()> {
    let config = DescriptorConfig {
        dx: args.dx,
        dy: args.dy,
        dt: args.dt,
        fps: args.fps,
        zero_threshold: args.zero_threshold,
    };
    let files = sorted_files_with_extension(&args.flo_dir, "flo")?;
    let x = streamed_descriptor(files.len(), &config, |i| {
        egograph::flow::read_flo(&files[i])
    })?;
    write_matrix(&args.out, &x)?;
    println!(
        "wrote {} x {} descriptor matrix ({} segments of {:.3}s) to {}",
        x.nrows(),
        x.ncols(),
        x.ncols(),
        config.segment_seconds(),
        args.out.display()
    );
    Ok(())
}

fn cmd_reduce(args: ReduceArgs) -> Result<()> {
    let x = read_matrix(&args.input)?;
    let coeffs = match &args.basis_in {
        Some(basis_path) => {
            let basis = read_matrix(basis_path)?;
            let h = project_nnls(&x, &basis)?;
            println!("projected onto basis of rank {}", basis.ncols());
            h
        }
        None => {
            let factors = nmf(
                &x,
                args.rank,
                &NmfOptions {
                    max_iters: args.iters,
                    tol: args.tol,
                    seed: args.seed,
                },
            )?;
            println!(
                "factorized {}x{} to rank {} in {} sweeps, objective {:.6e}",
                x.nrows(),
                x.ncols(),
                factors.rank,
                factors.iterations,
                factors.final_objective()
            );
            if let Some(path) = &args.basis_out {
                write_matrix(path, &factors.basis)?;
            }
            if let Some(path) = &args.coeffs_out {
                write_matrix(path, &factors.coeffs)?;
            }
            factors.coeffs
        }
    };
    let window = SmoothingWindow::new(args.window)?;
    let smoothed = match &args.blocks {
        Some(blocks) => smooth_blocks(&coeffs, window, blocks)?,
        None => smooth(&coeffs, window),
    };
    write_matrix(&args.out, &smoothed)?;
    println!(
        "wrote {} x {} feature matrix to {}",
        smoothed.nrows(),
        smoothed.ncols(),
        args.out.display()
    );
    Ok(())
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<()> {
    let features = FeatureSet::from_columns(&read_matrix(&args.input)?)?;
    let options = NystromOptions {
        n_sample: args.nsample,
        n_eig: args.neig,
        scales: scale_params(args.knn, args.tau)?,
        seed: args.seed,
        strength: if args.sample_only_strengths {
            LandmarkStrength::SampleOnly
        } else {
            LandmarkStrength::Augmented
        },
    };
    let spectrum = nystrom_spectrum(&features, &options)?;
    write_spectrum(&args.out, &spectrum)?;
    println!(
        "wrote {} eigenpairs over {} segments ({} landmarks) to {}; smallest eigenvalue {:.3e}",
        spectrum.n_eig(),
        spectrum.len(),
        spectrum.n_sample,
        args.out.display(),
        spectrum.eigenvalues[0]
    );
    Ok(())
}

fn cmd_classify(args: ClassifyArgs) -> Result<()> {
    let truth = read_labels(&args.labels)?;
    let num_classes = infer_classes(args.classes, &[&truth]);
    let labels = sample_fidelity(&truth, num_classes, args.fidelity_fraction, args.seed)?;
    let params = MboParams {
        eta: args.eta,
        dt: args.dt,
        n_step: args.nstep,
        max_iter: args.max_iter,
        seed: args.seed,
    };

    let mut diagnostics = String::new();
    let assignment = match (&args.spectrum, &args.features) {
        (Some(spectrum_path), None) => {
            let spectrum = read_spectrum(spectrum_path)?;
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
            println!(
                "classified {} segments in {} iterations (converged: {})",
                spectrum.len(),
                outcome.iterations,
                outcome.converged
            );
            if !outcome.converged {
                eprintln!("warning: label vector still changing at --max-iter");
            }
            outcome.assignment
        }
        (None, Some(features_path)) => {
            let features = FeatureSet::from_columns(&read_matrix(features_path)?)?;
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
                    batch_size: args.batch_size.expect("clap enforces batch_size"),
                    spectrum: NystromOptions {
                        n_sample: args.nsample,
                        n_eig: args.neig,
                        scales: scale_params(args.knn, args.tau)?,
                        seed: args.spectrum_seed,
                        strength: LandmarkStrength::Augmented,
                    },
                    mbo: params,
                },
            )?;
            diagnostics.push_str("batch,start,len,iterations,converged\n");
            for (i, b) in outcome.batches.iter().enumerate() {
                diagnostics.push_str(&format!(
                    "{i},{},{},{},{}\n",
                    b.start, b.len, b.iterations, b.converged
                ));
            }
            for warning in &outcome.warnings {
                eprintln!("warning: {warning}");
            }
            println!(
                "classified {} segments in {} batches",
                features.len(),
                outcome.batches.len()
            );
            outcome.assignment
        }
        _ => {
            return Err(Error::Param(
                "set exactly one of --spectrum, --features (with --batch-size)".into(),
            ))
        }
    };
    write_labels(&args.out, assignment.labels())?;
    if let Some(path) = &args.diagnostics_out {
        std::fs::write(path, diagnostics).map_err(io_err(path))?;
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let pred = read_labels(&args.pred)?;
    let truth = read_labels(&args.truth)?;
    let num_classes = infer_classes(args.classes, &[&pred, &truth]);
    let all_classes: Vec<usize> = (0..num_classes).collect();
    let eval_classes = args.eval_classes.as_deref().unwrap_or(&all_classes);
    let report = evaluate(&pred, &truth, num_classes, eval_classes)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&args.out, json).map_err(io_err(&args.out))?;
    if let Some(path) = &args.confusion_csv {
        emit_confusion_csv(path, &report.confusion)?;
    }
    if let Some(path) = &args.confusion_ppm {
        emit_confusion_image(path, &report.confusion, args.cell_size)?;
    }
    println!(
        "accuracy {:.4}, mean precision {:.4}, mean recall {:.4} over {} segments",
        report.accuracy, report.mean_precision, report.mean_recall, report.total
    );
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    let pred = read_labels(&args.pred)?;
    let truth = match &args.truth {
        Some(path) => Some(read_labels(path)?),
        None => None,
    };
    emit_segment_plot(&args.out, &pred, truth.as_deref(), args.height)?;
    println!("wrote timeline for {} segments to {}", pred.len(), args.out.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let report = run_pipeline(&config, args.force)?;
    for line in &report.stage_log {
        println!("{line}");
    }
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    if let Some(eval) = &report.evaluation {
        println!(
            "accuracy {:.4}, mean precision {:.4}, mean recall {:.4}",
            eval.accuracy, eval.mean_precision, eval.mean_recall
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Flow(args) => cmd_flow(args),
        Command::Descriptor(args) => cmd_descriptor(args),
        Command::Reduce(args) => cmd_reduce(args),
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Plot(args) => cmd_plot(args),
        Command::Run(args) => cmd_run(args),
    }
}

fn main() {
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
