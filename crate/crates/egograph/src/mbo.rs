//! Semi-supervised label assignment by threshold dynamics on the graph
//! spectrum.
//!
//! Segments are labeled by alternating two moves on a class-indicator matrix
//! `u` (`n x c`, rows sum to one after thresholding):
//!
//! 1. **Diffuse** — integrate `du/dt = -L u - eta M (u - f)` for a short
//!    time, where `L` is the symmetric normalized Laplacian (represented by
//!    its leading eigenpairs), `f` holds one-hot rows for the fidelity
//!    (labeled) nodes, and the mask `M` restricts the penalty to those rows.
//!    The semi-implicit step
//!
//!    ```text
//!    a^{s+1} = (I + dt' Λ)^{-1} (a^s - dt' eta Φᵀ M (u^s - f))
//!    ```
//!
//!    acts on spectral coefficients `a = Φᵀ u` with `dt' = dt / (2 n_step)`,
//!    repeated `n_step` times per outer iteration.
//! 2. **Threshold** — snap every row to the indicator of its largest entry.
//!
//! The outer loop stops when no label changes between consecutive
//! iterations, or flags non-convergence after `max_iter` iterations (a
//! diagnostic, not an error). Fidelity rows are *not* re-clamped after
//! thresholding; the fidelity forcing alone anchors them.
//!
//! Large jobs can be cut into contiguous batches classified independently
//! ([`classify_batched`]), each with its own landmark spectrum restricted to
//! the batch.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectrum::{nystrom_spectrum, FeatureSet, NystromOptions, ScaleParams, Spectrum};

/// Known labels for the fidelity subset of nodes.
///
/// `fidelity[i]` is `Some(class)` when node `i` is labeled. Classes are
/// `0..num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelData {
    num_classes: usize,
    fidelity: Vec<Option<usize>>,
}

impl LabelData {
    pub fn new(num_classes: usize, fidelity: Vec<Option<usize>>) -> Result<LabelData> {
        if num_classes < 2 {
            return Err(Error::Param(format!(
                "classification needs at least 2 classes, got {num_classes}"
            )));
        }
        if let Some(bad) = fidelity.iter().flatten().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!(
                "fidelity label {bad} outside 0..{num_classes}"
            )));
        }
        Ok(LabelData {
            num_classes,
            fidelity,
        })
    }

    /// Number of nodes covered (labeled or not).
    pub fn len(&self) -> usize {
        self.fidelity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fidelity.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Label of node `i`, if it is a fidelity node.
    pub fn label(&self, i: usize) -> Option<usize> {
        self.fidelity[i]
    }

    /// Number of fidelity nodes.
    pub fn fidelity_count(&self) -> usize {
        self.fidelity.iter().flatten().count()
    }

    /// Restrict to a contiguous node range (used by batching).
    pub fn slice(&self, range: std::ops::Range<usize>) -> LabelData {
        LabelData {
            num_classes: self.num_classes,
            fidelity: self.fidelity[range].to_vec(),
        }
    }

    /// The fidelity matrix `f`: one-hot rows for labeled nodes, zero rows
    /// elsewhere.
    pub fn one_hot(&self) -> Array2<f64> {
        let mut f = Array2::zeros((self.len(), self.num_classes));
        for (i, lab) in self.fidelity.iter().enumerate() {
            if let Some(l) = lab {
                f[(i, *l)] = 1.0;
            }
        }
        f
    }
}

/// Draw a fidelity subset from full ground truth.
///
/// Per class, `max(1, round(fraction * class_count))` members are chosen
/// uniformly without replacement (`round` is half-away-from-zero), classes
/// processed in ascending order from one seeded stream. Every class present
/// in `truth` therefore keeps at least one fidelity node; a class in
/// `0..num_classes` with no members at all is an error naming the class.
pub fn sample_fidelity(
    truth: &[usize],
    num_classes: usize,
    fraction: f64,
    seed: u64,
) -> Result<LabelData> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Param(format!(
            "fidelity fraction {fraction} outside (0, 1]"
        )));
    }
    if num_classes < 2 {
        return Err(Error::Param(format!(
            "classification needs at least 2 classes, got {num_classes}"
        )));
    }
    if let Some(bad) = truth.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Data(format!(
            "truth label {bad} outside 0..{num_classes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fidelity = vec![None; truth.len()];
    for class in 0..num_classes {
        let members: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == class).collect();
        if members.is_empty() {
            return Err(Error::EmptyClass { class });
        }
        let want = ((fraction * members.len() as f64).round() as usize)
            .max(1)
            .min(members.len());
        for pick in rand::seq::index::sample(&mut rng, members.len(), want) {
            fidelity[members[pick]] = Some(class);
        }
    }
    LabelData::new(num_classes, fidelity)
}

/// Parameters of the threshold-dynamics iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MboParams {
    /// Fidelity strength `eta`.
    pub eta: f64,
    /// Outer diffusion time `dt` per iteration.
    pub dt: f64,
    /// Inner semi-implicit steps per iteration; each advances `dt / (2 n_step)`.
    pub n_step: usize,
    /// Maximum outer iterations before flagging non-convergence.
    pub max_iter: usize,
    /// Seed for the random initial labels of non-fidelity nodes.
    pub seed: u64,
}

impl Default for MboParams {
    fn default() -> Self {
        MboParams {
            eta: 300.0,
            dt: 0.1,
            n_step: 10,
            max_iter: 300,
            seed: 0,
        }
    }
}

impl MboParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::Param(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Param(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_step == 0 {
            return Err(Error::Param("n_step must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Param("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    /// Inner step size `dt / (2 n_step)`.
    pub fn delta_t(&self) -> f64 {
        self.dt / (2.0 * self.n_step as f64)
    }
}

/// A hard class assignment: one class per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    labels: Vec<usize>,
    num_classes: usize,
}

impl Assignment {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Assignment> {
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        Ok(Assignment {
            labels,
            num_classes,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Indicator matrix with exactly one 1 per row.
    pub fn one_hot(&self) -> Array2<f64> {
        let mut u = Array2::zeros((self.labels.len(), self.num_classes));
        for (i, &l) in self.labels.iter().enumerate() {
            u[(i, l)] = 1.0;
        }
        u
    }
}

/// Initial assignment: fidelity nodes keep their label, every other node
/// draws a uniform class from a seeded stream (ascending node order).
pub fn initialize(labels: &LabelData, seed: u64) -> Assignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = labels.num_classes();
    let assigned: Vec<usize> = (0..labels.len())
        .map(|i| labels.label(i).unwrap_or_else(|| rng.random_range(0..c)))
        .collect();
    Assignment {
        labels: assigned,
        num_classes: c,
    }
}

/// One diffusion phase: `n_step` semi-implicit steps in the spectral basis.
///
/// Starting from `a⁰ = Φᵀ u`, each step solves
/// `a^{s+1} = (I + dt' Λ)^{-1} (a^s - dt' eta Φᵀ M (u^s - f))` and rebuilds
/// `u^{s+1} = Φ a^{s+1}`; the fidelity residual of the first step uses the
/// incoming `u` itself. Returns the soft (pre-threshold) `u` after the last
/// step.
pub fn diffuse(
    u: &Array2<f64>,
    spectrum: &Spectrum,
    labels: &LabelData,
    params: &MboParams,
) -> Result<Array2<f64>> {
    params.validate()?;
    let n = spectrum.len();
    let c = labels.num_classes();
    if u.dim() != (n, c) {
        return Err(Error::Shape(format!(
            "indicator matrix is {:?}, expected ({n}, {c})",
            u.dim()
        )));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "label data covers {} nodes, spectrum has {n}",
            labels.len()
        )));
    }
    if u.iter().any(|e| !e.is_finite()) {
        return Err(Error::Data("indicator matrix contains a non-finite entry".into()));
    }

    let dt = params.delta_t();
    let f = labels.one_hot();
    let fidelity_rows: Vec<usize> = (0..n).filter(|&i| labels.label(i).is_some()).collect();

    let mut a = spectrum.phi.t().dot(u);
    let mut u_cur = u.clone();
    for _ in 0..params.n_step {
        // Φᵀ M (u - f): the mask zeroes every non-fidelity row, so only
        // fidelity rows contribute to the projection.
        let mut forcing = Array2::<f64>::zeros((spectrum.n_eig(), c));
        for &i in &fidelity_rows {
            let coeff_row = spectrum.phi.row(i);
            for k in 0..c {
                let r = u_cur[(i, k)] - f[(i, k)];
                if r != 0.0 {
                    for (j, &phi_ij) in coeff_row.iter().enumerate() {
                        forcing[(j, k)] += phi_ij * r;
                    }
                }
            }
        }
        for j in 0..spectrum.n_eig() {
            let damp = 1.0 / (1.0 + dt * spectrum.eigenvalues[j]);
            for k in 0..c {
                a[(j, k)] = (a[(j, k)] - dt * params.eta * forcing[(j, k)]) * damp;
            }
        }
        u_cur = spectrum.phi.dot(&a);
    }
    Ok(u_cur)
}

/// Snap each row to the indicator of its largest entry; ties break toward
/// the lowest class index.
pub fn threshold(u: &Array2<f64>) -> Result<Assignment> {
    let (n, c) = u.dim();
    if c == 0 {
        return Err(Error::Shape("indicator matrix has no class columns".into()));
    }
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let row = u.row(i);
        if row.iter().any(|e| !e.is_finite()) {
            return Err(Error::Data(format!(
                "row {i} contains a non-finite entry"
            )));
        }
        let mut best = 0usize;
        for k in 1..c {
            if row[k] > row[best] {
                best = k;
            }
        }
        labels.push(best);
    }
    Ok(Assignment {
        labels,
        num_classes: c,
    })
}

/// Outcome of [`mbo_classify`].
#[derive(Debug, Clone, PartialEq)]
pub struct MboOutcome {
    /// Final hard assignment.
    pub assignment: Assignment,
    /// Outer iterations performed.
    pub iterations: usize,
    /// Labels changed at each outer iteration (the last entry is 0 when the
    /// run converged).
    pub changed_history: Vec<usize>,
    /// Whether the label vector reached a fixed point within `max_iter`.
    pub converged: bool,
}

/// Run the full threshold-dynamics classification.
///
/// Requires at least one fidelity node. Starting from the seeded
/// [`initialize`] assignment, each outer iteration diffuses and thresholds;
/// the loop stops when no label changed from the previous iteration.
/// Exhausting `max_iter` flags `converged = false` but still returns the
/// last assignment. Deterministic for fixed inputs and seed.
pub fn mbo_classify(
    spectrum: &Spectrum,
    labels: &LabelData,
    params: &MboParams,
) -> Result<MboOutcome> {
    params.validate()?;
    if labels.len() != spectrum.len() {
        return Err(Error::Shape(format!(
            "label data covers {} nodes, spectrum has {}",
            labels.len(),
            spectrum.len()
        )));
    }
    if labels.fidelity_count() == 0 {
        return Err(Error::Param(
            "classification needs at least one fidelity node".into(),
        ));
    }

    let mut current = initialize(labels, params.seed);
    let mut u = current.one_hot();
    let mut changed_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..params.max_iter {
        let soft = diffuse(&u, spectrum, labels, params)?;
        let next = threshold(&soft)?;
        let changed = next
            .labels
            .iter()
            .zip(&current.labels)
            .filter(|(a, b)| a != b)
            .count();
        changed_history.push(changed);
        iterations += 1;
        u = next.one_hot();
        current = next;
        if changed == 0 {
            converged = true;
            break;
        }
    }
    Ok(MboOutcome {
        assignment: current,
        iterations,
        changed_history,
        converged,
    })
}

/// Ginzburg–Landau-style diagnostic energy of a state:
/// `½ Σ_j λ_j ‖a_j‖² + (eta/2) ‖M (u - f)‖²` with `a = Φᵀ u`.
pub fn energy(u: &Array2<f64>, spectrum: &Spectrum, labels: &LabelData, eta: f64) -> f64 {
    let a = spectrum.phi.t().dot(u);
    let mut smoothness = 0.0;
    for j in 0..spectrum.n_eig() {
        let norm_sq: f64 = a.row(j).iter().map(|&e| e * e).sum();
        smoothness += spectrum.eigenvalues[j] * norm_sq;
    }
    let f = labels.one_hot();
    let mut misfit = 0.0;
    for i in 0..labels.len() {
        if labels.label(i).is_some() {
            for k in 0..labels.num_classes() {
                let d = u[(i, k)] - f[(i, k)];
                misfit += d * d;
            }
        }
    }
    0.5 * smoothness + 0.5 * eta * misfit
}

/// Options for [`classify_batched`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptions {
    /// Maximum nodes per batch.
    pub batch_size: usize,
    /// Landmark spectrum parameters; `n_sample` and `n_eig` are clamped to
    /// each batch's size.
    pub spectrum: NystromOptions,
    /// Classifier parameters, reused for every batch.
    pub mbo: MboParams,
}

/// Per-batch diagnostics from [`classify_batched`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    /// First node index of the batch.
    pub start: usize,
    /// Nodes in the batch.
    pub len: usize,
    /// Outer iterations the batch used.
    pub iterations: usize,
    pub converged: bool,
}

/// Outcome of [`classify_batched`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedOutcome {
    /// Assignments for all nodes, in input order.
    pub assignment: Assignment,
    /// Batch diagnostics, in batch order.
    pub batches: Vec<BatchSummary>,
    /// Recorded (non-fatal) anomalies, e.g. a batch without fidelity nodes
    /// for one of the classes.
    pub warnings: Vec<String>,
}

/// Classify a long sequence in contiguous batches.
///
/// Nodes are cut into runs of at most `batch_size` in input order; each
/// batch gets its own landmark spectrum (restricted to the batch, with
/// `n_sample`/`n_eig` clamped to the batch size) and its own classifier run
/// with the batch's fidelity nodes, all using the configured seeds. Results
/// are concatenated in order. A batch lacking fidelity for one of the global
/// classes is recorded as a warning but still classified; a batch with no
/// fidelity at all is an error. With `batch_size >= n` the result is
/// identical to an unbatched [`mbo_classify`] with the same seeds.
pub fn classify_batched(
    features: &FeatureSet,
    labels: &LabelData,
    opts: &BatchOptions,
) -> Result<BatchedOutcome> {
    if opts.batch_size == 0 {
        return Err(Error::Param("batch_size must be at least 1".into()));
    }
    let n = features.len();
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "label data covers {} nodes, features have {n}",
            labels.len()
        )));
    }
    opts.mbo.validate()?;

    let mut all_labels = Vec::with_capacity(n);
    let mut batches = Vec::new();
    let mut warnings = Vec::new();
    let mut start = 0usize;
    while start < n {
        let end = (start + opts.batch_size).min(n);
        let batch_index = batches.len();
        let batch_labels = labels.slice(start..end);
        for class in 0..labels.num_classes() {
            let covered = (0..batch_labels.len())
                .any(|i| batch_labels.label(i) == Some(class));
            if !covered {
                warnings.push(format!(
                    "batch {batch_index} (nodes {start}..{end}) has no fidelity node \
                     for class {class}"
                ));
            }
        }
        let batch_points = features
            .points()
            .slice(ndarray::s![start..end, ..])
            .to_owned();
        let batch_features = FeatureSet::from_points(batch_points)
            .map_err(|e| Error::Param(format!("batch {batch_index}: {e}")))?;
        let batch_n = end - start;
        let spectrum_opts = NystromOptions {
            n_sample: opts.spectrum.n_sample.min(batch_n),
            n_eig: opts
                .spectrum
                .n_eig
                .min(opts.spectrum.n_sample.min(batch_n)),
            ..opts.spectrum.clone()
        };
        if let ScaleParams::Local { k } = spectrum_opts.scales {
            if k >= spectrum_opts.n_sample {
                return Err(Error::Param(format!(
                    "batch {batch_index} of {batch_n} nodes is too small for local \
                     scaling with k = {k}"
                )));
            }
        }
        let spectrum = nystrom_spectrum(&batch_features, &spectrum_opts)?;
        let outcome = mbo_classify(&spectrum, &batch_labels, &opts.mbo).map_err(|e| match e {
            Error::Param(msg) => Error::Param(format!("batch {batch_index}: {msg}")),
            other => other,
        })?;
        all_labels.extend_from_slice(outcome.assignment.labels());
        batches.push(BatchSummary {
            start,
            len: batch_n,
            iterations: outcome.iterations,
            converged: outcome.converged,
        });
        start = end;
    }
    Ok(BatchedOutcome {
        assignment: Assignment {
            labels: all_labels,
            num_classes: labels.num_classes(),
        },
        batches,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{dense_spectrum, LandmarkStrength};
    use ndarray::array;

    /// `blocks` Gaussian-ish blobs of `per` points each, far apart.
    fn blob_features(blocks: usize, per: usize, separation: f64, seed: u64) -> FeatureSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = Array2::from_shape_fn((blocks * per, 3), |(i, d)| {
            let c = (i / per) as f64 * separation;
            let jitter: f64 = rng.random::<f64>() - 0.5;
            if d == 0 {
                c + jitter
            } else {
                jitter
            }
        });
        FeatureSet::from_points(points).unwrap()
    }

    fn blob_truth(blocks: usize, per: usize) -> Vec<usize> {
        (0..blocks * per).map(|i| i / per).collect()
    }

    #[test]
    fn label_data_validates_and_builds_one_hot() {
        let labels = LabelData::new(3, vec![Some(2), None, Some(0)]).unwrap();
        assert_eq!(labels.fidelity_count(), 2);
        assert_eq!(
            labels.one_hot(),
            array![[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
        );
        assert!(LabelData::new(2, vec![Some(2)]).is_err());
        assert!(LabelData::new(1, vec![Some(0)]).is_err());
    }

    #[test]
    fn fidelity_sampling_keeps_one_node_per_small_class() {
        let truth: Vec<usize> = (0..20).map(|i| i / 10).collect();
        let labels = sample_fidelity(&truth, 2, 0.1, 5).unwrap();
        for class in 0..2 {
            let picked = (0..20)
                .filter(|&i| labels.label(i) == Some(class))
                .count();
            assert_eq!(picked, 1, "class {class}");
        }
        // Sampled labels agree with the truth they came from.
        for i in 0..20 {
            if let Some(l) = labels.label(i) {
                assert_eq!(l, truth[i]);
            }
        }
    }

    #[test]
    fn fidelity_sampling_rounds_half_away_from_zero() {
        // 15 members at fraction 0.1 → round(1.5) = 2.
        let truth: Vec<usize> = (0..15).map(|_| 0).chain((0..15).map(|_| 1)).collect();
        let labels = sample_fidelity(&truth, 2, 0.1, 1).unwrap();
        assert_eq!(labels.fidelity_count(), 4);
    }

    #[test]
    fn fidelity_sampling_names_empty_classes() {
        let truth = vec![0usize, 0, 0];
        let err = sample_fidelity(&truth, 2, 0.5, 1).unwrap_err();
        match err {
            Error::EmptyClass { class } => assert_eq!(class, 1),
            other => panic!("expected EmptyClass, got {other:?}"),
        }
    }

    #[test]
    fn fidelity_sampling_is_deterministic() {
        let truth = blob_truth(3, 30);
        let a = sample_fidelity(&truth, 3, 0.2, 9).unwrap();
        let b = sample_fidelity(&truth, 3, 0.2, 9).unwrap();
        assert_eq!(a, b);
        let c = sample_fidelity(&truth, 3, 0.2, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn full_fraction_marks_every_node() {
        let truth = blob_truth(2, 5);
        let labels = sample_fidelity(&truth, 2, 1.0, 0).unwrap();
        assert_eq!(labels.fidelity_count(), 10);
    }

    #[test]
    fn initialization_respects_fidelity_and_seed() {
        let labels = LabelData::new(3, vec![Some(1), None, None, Some(2), None]).unwrap();
        let a = initialize(&labels, 4);
        assert_eq!(a.labels()[0], 1);
        assert_eq!(a.labels()[3], 2);
        assert!(a.labels().iter().all(|&l| l < 3));
        assert_eq!(a, initialize(&labels, 4));
        // Each one-hot row sums to exactly 1.
        let u = a.one_hot();
        for i in 0..5 {
            assert_eq!(u.row(i).sum(), 1.0);
        }
    }

    #[test]
    fn threshold_breaks_ties_toward_lower_class() {
        let u = array![[0.3, 0.5, 0.2], [0.4, 0.4, 0.2], [0.1, 0.1, 0.1]];
        let a = threshold(&u).unwrap();
        assert_eq!(a.labels(), &[1, 0, 0]);
        let bad = array![[f64::NAN, 0.0]];
        assert!(matches!(threshold(&bad), Err(Error::Data(_))));
    }

    /// Dense replica of the semi-implicit step, built from scratch: forms
    /// the full normalized Laplacian of the same graph and solves
    /// `(I + dt' L) u^{s+1} = u^s - dt' eta M (u^s - f)` with an LU
    /// factorization, `n_step` times.
    fn dense_diffuse_oracle(
        features: &FeatureSet,
        scales: &ScaleParams,
        u0: &Array2<f64>,
        labels: &LabelData,
        params: &MboParams,
    ) -> Array2<f64> {
        let n = features.len();
        let c = labels.num_classes();
        let mut w = vec![vec![0.0f64; n]; n];
        let taus = match *scales {
            ScaleParams::Global { tau } => vec![tau; n],
            ScaleParams::Local { .. } => unreachable!("oracle only used with global scaling"),
        };
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    w[i][j] = 1.0;
                } else {
                    let mut d2 = 0.0;
                    for d in 0..features.dim() {
                        let diff = features.points()[(i, d)] - features.points()[(j, d)];
                        d2 += diff * diff;
                    }
                    w[i][j] = (-d2 / taus[i]).exp();
                }
            }
        }
        let deg: Vec<f64> = w.iter().map(|row| row.iter().sum()).collect();
        let mut system = nalgebra::DMatrix::<f64>::zeros(n, n);
        let dt = params.delta_t();
        for i in 0..n {
            for j in 0..n {
                let lap = if i == j { 1.0 } else { 0.0 } - w[i][j] / (deg[i] * deg[j]).sqrt();
                system[(i, j)] = if i == j { 1.0 } else { 0.0 } + dt * lap;
            }
        }
        let lu = system.lu();
        let f = labels.one_hot();
        let mut u = u0.clone();
        for _ in 0..params.n_step {
            let mut rhs = nalgebra::DMatrix::<f64>::zeros(n, c);
            for i in 0..n {
                for k in 0..c {
                    let fid = if labels.label(i).is_some() {
                        u[(i, k)] - f[(i, k)]
                    } else {
                        0.0
                    };
                    rhs[(i, k)] = u[(i, k)] - dt * params.eta * fid;
                }
            }
            let sol = lu.solve(&rhs).expect("diffusion system is well conditioned");
            for i in 0..n {
                for k in 0..c {
                    u[(i, k)] = sol[(i, k)];
                }
            }
        }
        u
    }

    #[test]
    fn diffusion_matches_dense_solve_with_complete_basis() {
        let features = FeatureSet::from_points(array![
            [0.0, 0.0],
            [0.3, 0.1],
            [2.0, 2.1],
            [2.2, 1.9],
            [1.0, 1.0],
        ])
        .unwrap();
        let scales = ScaleParams::Global { tau: 2.0 };
        let spectrum = dense_spectrum(&features, &scales, 5).unwrap();
        let labels = LabelData::new(2, vec![Some(0), None, Some(1), None, None]).unwrap();
        let u0 = array![
            [1.0, 0.0],
            [0.0, 1.0],
            [0.0, 1.0],
            [1.0, 0.0],
            [1.0, 0.0],
        ];
        for n_step in [1usize, 3] {
            let params = MboParams {
                eta: 50.0,
                dt: 0.1,
                n_step,
                max_iter: 10,
                seed: 0,
            };
            let via_spectrum = diffuse(&u0, &spectrum, &labels, &params).unwrap();
            let via_dense = dense_diffuse_oracle(&features, &scales, &u0, &labels, &params);
            for i in 0..5 {
                for k in 0..2 {
                    assert!(
                        (via_spectrum[(i, k)] - via_dense[(i, k)]).abs() <= 1e-12,
                        "n_step {n_step}, entry ({i},{k}): {} vs {}",
                        via_spectrum[(i, k)],
                        via_dense[(i, k)]
                    );
                }
            }
        }
    }

    #[test]
    fn classifier_labels_separated_blobs() {
        let features = blob_features(3, 40, 12.0, 1);
        let truth = blob_truth(3, 40);
        let labels = sample_fidelity(&truth, 3, 0.1, 2).unwrap();
        // The classifier relies on spectral truncation for its smoothing: the
        // retained basis must be rich enough to separate the clusters but
        // small enough to project out within-cluster noise, so n_eig is a
        // small multiple of the class count.
        let spectrum = dense_spectrum(&features, &ScaleParams::Local { k: 8 }, 8).unwrap();
        let outcome = mbo_classify(&spectrum, &labels, &MboParams::default()).unwrap();
        assert!(outcome.converged, "did not converge: {:?}", outcome.changed_history);
        assert_eq!(*outcome.changed_history.last().unwrap(), 0);
        let correct = outcome
            .assignment
            .labels()
            .iter()
            .zip(&truth)
            .filter(|(a, b)| a == b)
            .count();
        assert!(correct >= 117, "only {correct}/120 correct");
        // Fixed point: another diffuse + threshold leaves labels unchanged.
        let again = threshold(
            &diffuse(
                &outcome.assignment.one_hot(),
                &spectrum,
                &labels,
                &MboParams::default(),
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(again, outcome.assignment);
    }

    #[test]
    fn classifier_is_deterministic() {
        let features = blob_features(2, 25, 8.0, 3);
        let truth = blob_truth(2, 25);
        let labels = sample_fidelity(&truth, 2, 0.2, 7).unwrap();
        let spectrum = dense_spectrum(&features, &ScaleParams::Local { k: 5 }, 20).unwrap();
        let a = mbo_classify(&spectrum, &labels, &MboParams::default()).unwrap();
        let b = mbo_classify(&spectrum, &labels, &MboParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn classifier_requires_fidelity() {
        let features = blob_features(2, 10, 8.0, 5);
        let spectrum = dense_spectrum(&features, &ScaleParams::Local { k: 4 }, 10).unwrap();
        let labels = LabelData::new(2, vec![None; 20]).unwrap();
        let err = mbo_classify(&spectrum, &labels, &MboParams::default()).unwrap_err();
        assert!(matches!(err, Error::Param(_)), "got {err:?}");
    }

    #[test]
    fn relabeling_classes_permutes_the_assignment() {
        let features = blob_features(3, 30, 12.0, 11);
        let truth = blob_truth(3, 30);
        // Tight truncation keeps the outcome independent of the random
        // initialization, which is what makes exact label equivariance hold.
        let spectrum = dense_spectrum(&features, &ScaleParams::Local { k: 6 }, 6).unwrap();
        let labels = sample_fidelity(&truth, 3, 0.15, 4).unwrap();
        let base = mbo_classify(&spectrum, &labels, &MboParams::default()).unwrap();
        // Permutation π = (0→2, 1→0, 2→1) applied to the fidelity labels.
        let perm = [2usize, 0, 1];
        let permuted_fidelity: Vec<Option<usize>> = (0..labels.len())
            .map(|i| labels.label(i).map(|l| perm[l]))
            .collect();
        let permuted_labels = LabelData::new(3, permuted_fidelity).unwrap();
        let permuted = mbo_classify(&spectrum, &permuted_labels, &MboParams::default()).unwrap();
        for i in 0..truth.len() {
            assert_eq!(
                permuted.assignment.labels()[i],
                perm[base.assignment.labels()[i]],
                "node {i}"
            );
        }
    }

    #[test]
    fn energy_of_pure_fidelity_state_has_no_misfit_term() {
        let features = blob_features(2, 10, 6.0, 13);
        let truth = blob_truth(2, 10);
        let spectrum = dense_spectrum(&features, &ScaleParams::Local { k: 4 }, 20).unwrap();
        let labels = sample_fidelity(&truth, 2, 1.0, 0).unwrap();
        let f = labels.one_hot();
        let a = spectrum.phi.t().dot(&f);
        let mut want = 0.0;
        for j in 0..spectrum.n_eig() {
            let norm_sq: f64 = a.row(j).iter().map(|&e| e * e).sum();
            want += 0.5 * spectrum.eigenvalues[j] * norm_sq;
        }
        let got = energy(&f, &spectrum, &labels, 300.0);
        assert!((got - want).abs() <= 1e-12);
        assert!(got >= 0.0);
    }

    fn batch_spectrum_opts() -> NystromOptions {
        NystromOptions {
            n_sample: 40,
            n_eig: 20,
            scales: ScaleParams::Local { k: 6 },
            seed: 21,
            strength: LandmarkStrength::Augmented,
        }
    }

    #[test]
    fn single_batch_equals_unbatched_run() {
        let features = blob_features(2, 30, 10.0, 17);
        let truth = blob_truth(2, 30);
        let labels = sample_fidelity(&truth, 2, 0.15, 3).unwrap();
        let opts = BatchOptions {
            batch_size: 60,
            spectrum: batch_spectrum_opts(),
            mbo: MboParams::default(),
        };
        let batched = classify_batched(&features, &labels, &opts).unwrap();
        assert_eq!(batched.batches.len(), 1);
        assert!(batched.warnings.is_empty());
        let spectrum = nystrom_spectrum(&features, &batch_spectrum_opts()).unwrap();
        let single = mbo_classify(&spectrum, &labels, &MboParams::default()).unwrap();
        assert_eq!(batched.assignment, single.assignment);
    }

    #[test]
    fn batches_are_contiguous_and_cover_everything() {
        let features = blob_features(2, 40, 10.0, 19);
        let truth = blob_truth(2, 40);
        let labels = sample_fidelity(&truth, 2, 0.2, 5).unwrap();
        let opts = BatchOptions {
            batch_size: 30,
            spectrum: batch_spectrum_opts(),
            mbo: MboParams::default(),
        };
        let batched = classify_batched(&features, &labels, &opts).unwrap();
        let sizes: Vec<usize> = batched.batches.iter().map(|b| b.len).collect();
        assert_eq!(sizes, vec![30, 30, 20]);
        assert_eq!(batched.batches[1].start, 30);
        assert_eq!(batched.assignment.len(), 80);
    }

    #[test]
    fn missing_class_fidelity_in_a_batch_is_a_warning_not_an_error() {
        // All class-1 fidelity lives in the second half; the first batch
        // only sees class 0.
        let features = blob_features(2, 30, 10.0, 23);
        let fidelity: Vec<Option<usize>> = (0..60)
            .map(|i| match i {
                0 | 5 => Some(0),
                40 | 45 => Some(1),
                _ => None,
            })
            .collect();
        let labels = LabelData::new(2, fidelity).unwrap();
        let opts = BatchOptions {
            batch_size: 30,
            spectrum: NystromOptions {
                n_sample: 30,
                n_eig: 15,
                scales: ScaleParams::Local { k: 5 },
                seed: 2,
                strength: LandmarkStrength::Augmented,
            },
            mbo: MboParams::default(),
        };
        let batched = classify_batched(&features, &labels, &opts).unwrap();
        assert_eq!(batched.warnings.len(), 2);
        assert!(batched.warnings[0].contains("batch 0"));
        assert!(batched.warnings[0].contains("class 1"));
        assert!(batched.warnings[1].contains("batch 1"));
        assert!(batched.warnings[1].contains("class 0"));
    }

    #[test]
    fn batch_without_any_fidelity_is_an_error() {
        let features = blob_features(2, 30, 10.0, 29);
        let fidelity: Vec<Option<usize>> = (0..60)
            .map(|i| if i >= 30 { Some((i >= 45) as usize) } else { None })
            .collect();
        let labels = LabelData::new(2, fidelity).unwrap();
        let opts = BatchOptions {
            batch_size: 30,
            spectrum: NystromOptions {
                n_sample: 30,
                n_eig: 10,
                scales: ScaleParams::Local { k: 5 },
                seed: 2,
                strength: LandmarkStrength::Augmented,
            },
            mbo: MboParams::default(),
        };
        let err = classify_batched(&features, &labels, &opts).unwrap_err();
        match err {
            Error::Param(msg) => assert!(msg.contains("batch 0"), "{msg}"),
            other => panic!("expected Param error, got {other:?}"),
        }
    }
}
