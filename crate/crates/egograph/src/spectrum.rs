//! Similarity graphs over segment features and the spectrum of their
//! symmetric normalized Laplacian.
//!
//! Segments become nodes of a fully connected weighted graph with Gaussian
//! affinities
//!
//! ```text
//! w_ij = exp(-‖H_i - H_j‖² / tau_ij)
//! ```
//!
//! where the bandwidth is either one global constant `tau` or the locally
//! scaled product `tau_i * tau_j`, with `tau_i` the Euclidean distance from
//! node `i` to its `K`-th nearest neighbor (self excluded). Classification
//! needs the leading eigenpairs of the symmetric normalized Laplacian
//! `L = I - D^{-1/2} W D^{-1/2}`, whose eigenvalues lie in `[0, 2]`.
//!
//! Two routes produce a [`Spectrum`]:
//!
//! * [`dense_spectrum`] materializes `W` and decomposes it exactly — the
//!   reference route, guarded to small graphs;
//! * [`nystrom_spectrum`] decomposes only the blocks touching a seeded
//!   random landmark subset `A` (`W_AA`, `W_AB`), extends the eigenvectors
//!   to the full graph, and never materializes an `n x n` matrix, so memory
//!   stays `O(n * max(n_sample, n_eig))`.
//!
//! With the landmark set equal to the whole graph the second route
//! reproduces the first to eigensolver precision.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Floor applied to eigenvalue scalings of extended eigenvectors, keeping
/// the `Ξ^{-1/2}` normalization finite for modes with `ξ` near zero.
const EIG_FLOOR: f64 = 1e-10;

/// Relative cutoff for matrix functions of landmark blocks: eigendirections
/// with `γ ≤ PINV_RCOND · γ_max` are dropped rather than inverted, the
/// pseudo-inverse convention. Clamping them up instead would amplify
/// numerically-null directions of near-low-rank blocks by ~1/cutoff and can
/// drive completed strength estimates negative.
const PINV_RCOND: f64 = 1e-12;

/// Smallest allowed local scale; keeps duplicate points from collapsing
/// `tau_i` to zero.
const SCALE_FLOOR: f64 = 1e-12;

/// Graphs larger than this must go through the landmark route.
const DENSE_LIMIT: usize = 5000;

/// Per-segment feature vectors: one row per segment (node), one column per
/// feature dimension. All entries finite, at least two rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    points: Array2<f64>,
}

impl FeatureSet {
    /// Build from a `(n, dim)` matrix of row vectors.
    pub fn from_points(points: Array2<f64>) -> Result<FeatureSet> {
        if points.nrows() < 2 {
            return Err(Error::Param(format!(
                "feature set needs at least 2 points, got {}",
                points.nrows()
            )));
        }
        if points.ncols() == 0 {
            return Err(Error::Param("feature dimension must be positive".into()));
        }
        if points.iter().any(|e| !e.is_finite()) {
            return Err(Error::Data("feature set contains a non-finite entry".into()));
        }
        Ok(FeatureSet { points })
    }

    /// Build from a matrix whose *columns* are the per-segment features, the
    /// orientation produced by the reduction step.
    pub fn from_columns(h: &Array2<f64>) -> Result<FeatureSet> {
        FeatureSet::from_points(h.t().to_owned())
    }

    /// Number of segments (nodes).
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    /// Squared Euclidean distance between two nodes.
    #[inline]
    fn dist_sq(&self, i: usize, j: usize) -> f64 {
        let a = self.points.row(i);
        let b = self.points.row(j);
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b.iter()) {
            let d = x - y;
            acc += d * d;
        }
        acc
    }
}

/// Bandwidth selection for the Gaussian affinities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleParams {
    /// One constant bandwidth: `tau_ij = tau`.
    Global { tau: f64 },
    /// Local scaling: `tau_ij = tau_i * tau_j` with `tau_i` the distance to
    /// the `k`-th nearest neighbor.
    Local { k: usize },
}

impl ScaleParams {
    fn validate(&self) -> Result<()> {
        match *self {
            ScaleParams::Global { tau } => {
                if !(tau > 0.0) || !tau.is_finite() {
                    return Err(Error::Param(format!(
                        "global bandwidth must be positive and finite, got {tau}"
                    )));
                }
            }
            ScaleParams::Local { k } => {
                if k == 0 {
                    return Err(Error::Param("neighbor count k must be at least 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Landmark strength estimate used by [`nystrom_spectrum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LandmarkStrength {
    /// Landmark strengths sum both blocks, `d_A = W_AA 1 + W_AB 1`, making
    /// the estimate consistent with the non-landmark one. Default.
    #[default]
    Augmented,
    /// Landmark strengths from the landmark block only, `d_A = W_AA 1`; the
    /// printed form of the construction this module follows. Kept behind an
    /// explicit switch for comparison runs.
    SampleOnly,
}

/// Options for [`nystrom_spectrum`].
#[derive(Debug, Clone, PartialEq)]
pub struct NystromOptions {
    /// Landmark count `|A|`; between 2 and the number of nodes.
    pub n_sample: usize,
    /// Number of eigenpairs to return; at most `n_sample`.
    pub n_eig: usize,
    /// Bandwidth selection.
    pub scales: ScaleParams,
    /// Seed for the landmark draw.
    pub seed: u64,
    /// Strength estimator for landmark nodes.
    pub strength: LandmarkStrength,
}

/// Leading eigenpairs of the symmetric normalized graph Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Eigenvalues in ascending order, length `n_eig`.
    pub eigenvalues: Array1<f64>,
    /// Eigenvectors as columns, `(n, n_eig)`, in the eigenvalue order.
    pub phi: Array2<f64>,
    /// Landmark count used to build the spectrum (`n` for the dense route).
    pub n_sample: usize,
    /// Landmark node indices, ascending (`0..n` for the dense route).
    pub sample_indices: Vec<usize>,
}

impl Spectrum {
    /// Number of graph nodes.
    pub fn len(&self) -> usize {
        self.phi.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.nrows() == 0
    }

    /// Number of eigenpairs.
    pub fn n_eig(&self) -> usize {
        self.phi.ncols()
    }
}

/// Gaussian affinity between two feature vectors with bandwidth `tau_ij`.
pub fn weight(hi: ndarray::ArrayView1<f64>, hj: ndarray::ArrayView1<f64>, tau_ij: f64) -> f64 {
    let mut d2 = 0.0;
    for (a, b) in hi.iter().zip(hj.iter()) {
        let d = a - b;
        d2 += d * d;
    }
    (-d2 / tau_ij).exp()
}

/// Local scales `tau_i` for every node: the Euclidean distance from node `i`
/// to its `k`-th nearest neighbor among `candidates` (node `i` itself
/// excluded when it is a candidate), floored at `1e-12` so duplicate points
/// keep a positive bandwidth.
///
/// `k` must be smaller than the candidate count, otherwise sampled nodes
/// have fewer than `k` neighbors to rank.
pub fn local_scales(features: &FeatureSet, k: usize, candidates: &[usize]) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::Param("neighbor count k must be at least 1".into()));
    }
    if candidates.is_empty() {
        return Err(Error::Param("candidate set for local scales is empty".into()));
    }
    if k >= candidates.len() {
        return Err(Error::Param(format!(
            "k = {k} needs more than {} candidate neighbors",
            candidates.len()
        )));
    }
    let n = features.len();
    if let Some(&bad) = candidates.iter().find(|&&c| c >= n) {
        return Err(Error::Param(format!(
            "candidate index {bad} out of range for {n} nodes"
        )));
    }
    let mut scales = Vec::with_capacity(n);
    let mut dists = Vec::with_capacity(candidates.len());
    for i in 0..n {
        dists.clear();
        for &c in candidates {
            if c != i {
                dists.push(features.dist_sq(i, c));
            }
        }
        // Self-exclusion leaves at least k candidates by the check above.
        let (_, kth, _) = dists.select_nth_unstable_by(k - 1, f64::total_cmp);
        scales.push(kth.sqrt().max(SCALE_FLOOR));
    }
    Ok(scales)
}

/// Pairwise bandwidth lookup shared by both spectrum routes.
enum Bandwidth {
    Global(f64),
    Local(Vec<f64>),
}

impl Bandwidth {
    fn build(features: &FeatureSet, scales: &ScaleParams, candidates: &[usize]) -> Result<Bandwidth> {
        scales.validate()?;
        Ok(match *scales {
            ScaleParams::Global { tau } => Bandwidth::Global(tau),
            ScaleParams::Local { k } => {
                Bandwidth::Local(local_scales(features, k, candidates)?)
            }
        })
    }

    #[inline]
    fn tau(&self, i: usize, j: usize) -> f64 {
        match self {
            Bandwidth::Global(tau) => *tau,
            Bandwidth::Local(scales) => scales[i] * scales[j],
        }
    }
}

/// Affinity between nodes `i` and `j`; exactly 1 on the diagonal.
#[inline]
fn affinity(features: &FeatureSet, bw: &Bandwidth, i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        (-features.dist_sq(i, j) / bw.tau(i, j)).exp()
    }
}

/// Symmetric eigendecomposition, eigenvalues ascending.
fn sym_eigh(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |r, c| a[(r, c)]);
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Apply `f` to the significant eigenvalues of a symmetric matrix and
/// reassemble: `Q f(Γ) Qᵀ`, dropping eigendirections below the relative
/// cutoff [`PINV_RCOND`] (pseudo-inverse convention).
fn sym_function(a: &Array2<f64>, f: impl Fn(f64) -> f64) -> Array2<f64> {
    let n = a.nrows();
    let (values, q) = sym_eigh(a);
    let cutoff = values.iter().fold(0.0f64, |m, &g| m.max(g.abs())) * PINV_RCOND;
    let scaled: Vec<f64> = values
        .iter()
        .map(|&g| if g > cutoff { f(g) } else { 0.0 })
        .collect();
    let mut qf = q.clone();
    for (c, &s) in scaled.iter().enumerate() {
        qf.column_mut(c).mapv_inplace(|e| e * s);
    }
    let mut out = qf.dot(&q.t());
    // Enforce exact symmetry lost to rounding.
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    out
}

/// Exact spectrum of the symmetric normalized Laplacian.
///
/// Materializes the full affinity matrix, so the graph is capped at 5000
/// nodes; beyond that use [`nystrom_spectrum`]. Returns the `n_eig` smallest
/// eigenpairs. `D^{1/2} 1` is always an exact kernel vector, so the smallest
/// eigenvalue is zero to solver precision.
pub fn dense_spectrum(
    features: &FeatureSet,
    scales: &ScaleParams,
    n_eig: usize,
) -> Result<Spectrum> {
    let n = features.len();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge(format!(
            "dense spectrum of {n} nodes exceeds the {DENSE_LIMIT}-node guard"
        )));
    }
    if n_eig == 0 || n_eig > n {
        return Err(Error::Param(format!("n_eig {n_eig} outside [1, {n}]")));
    }
    if let ScaleParams::Local { k } = *scales {
        if k >= n {
            return Err(Error::Param(format!(
                "local scaling with k = {k} needs more than {n} nodes"
            )));
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let bw = Bandwidth::build(features, scales, &all)?;

    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        w[(i, i)] = 1.0;
        for j in 0..i {
            let a = affinity(features, &bw, i, j);
            w[(i, j)] = a;
            w[(j, i)] = a;
        }
    }
    let degrees: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    let inv_sqrt_d: Vec<f64> = degrees.iter().map(|&d| 1.0 / d.sqrt()).collect();
    let mut lap = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let norm = w[(i, j)] * inv_sqrt_d[i] * inv_sqrt_d[j];
            lap[(i, j)] = if i == j { 1.0 - norm } else { -norm };
        }
    }
    let (values, vectors) = sym_eigh(&lap);
    let eigenvalues = Array1::from_iter(values[..n_eig].iter().copied());
    let phi = vectors.slice(ndarray::s![.., ..n_eig]).to_owned();
    Ok(Spectrum {
        eigenvalues,
        phi,
        n_sample: n,
        sample_indices: all,
    })
}

/// Approximate spectrum via landmark (low-rank) extension.
///
/// A seeded uniform draw picks `n_sample` landmark nodes `A` without
/// replacement; only the affinity blocks `W_AA` (`|A| x |A|`) and `W_AB`
/// (`|A| x |B|`) are formed. Local scales are ranked against the landmark
/// set only, so `k` must be smaller than `n_sample`. Node strengths are
///
/// ```text
/// d_A = W_AA 1 + W_AB 1          (Augmented; SampleOnly drops the W_AB term)
/// d_B = W_BA 1 + W_BA W_AA^{-1} W_AB 1
/// ```
///
/// the latter completing the unseen block at rank `|A|`. Both blocks are
/// normalized by `sqrt(d_i d_j)`, the one-shot orthogonalized decomposition
/// of `Ŵ_AA + Ŵ_AA^{-1/2} Ŵ_AB Ŵ_BA Ŵ_AA^{-1/2}` is taken, and its leading
/// `n_eig` eigenvalues `ξ` become Laplacian eigenvalues `λ = 1 - ξ`
/// (ascending). Eigenvectors are extended to all of `B` and returned in
/// original node order. Matrix functions of landmark blocks drop
/// eigendirections below a relative cutoff (pseudo-inverse convention)
/// before inversion or square roots.
///
/// A non-positive completed strength estimate aborts with an approximation
/// error (the landmark set failed to explain a node). With
/// `n_sample == n` the result matches [`dense_spectrum`] to eigensolver
/// precision. The run is fully deterministic given the seed, and no `n x n`
/// matrix is ever materialized.
pub fn nystrom_spectrum(features: &FeatureSet, opts: &NystromOptions) -> Result<Spectrum> {
    let n = features.len();
    if opts.n_sample < 2 || opts.n_sample > n {
        return Err(Error::Param(format!(
            "n_sample {} outside [2, {n}]",
            opts.n_sample
        )));
    }
    if opts.n_eig == 0 || opts.n_eig > opts.n_sample {
        return Err(Error::Param(format!(
            "n_eig {} outside [1, n_sample = {}]",
            opts.n_eig, opts.n_sample
        )));
    }
    if let ScaleParams::Local { k } = opts.scales {
        if k >= opts.n_sample {
            return Err(Error::Param(format!(
                "local scaling with k = {k} needs n_sample > k, got {}",
                opts.n_sample
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut a_idx: Vec<usize> =
        rand::seq::index::sample(&mut rng, n, opts.n_sample).into_vec();
    a_idx.sort_unstable();
    let in_a = {
        let mut mask = vec![false; n];
        for &i in &a_idx {
            mask[i] = true;
        }
        mask
    };
    let b_idx: Vec<usize> = (0..n).filter(|&i| !in_a[i]).collect();
    let (ns, nb) = (a_idx.len(), b_idx.len());

    let bw = Bandwidth::build(features, &opts.scales, &a_idx)?;

    let mut w_aa = Array2::zeros((ns, ns));
    for r in 0..ns {
        w_aa[(r, r)] = 1.0;
        for c in 0..r {
            let a = affinity(features, &bw, a_idx[r], a_idx[c]);
            w_aa[(r, c)] = a;
            w_aa[(c, r)] = a;
        }
    }
    let mut w_ab = Array2::zeros((ns, nb));
    for r in 0..ns {
        for c in 0..nb {
            w_ab[(r, c)] = affinity(features, &bw, a_idx[r], b_idx[c]);
        }
    }

    // Strength estimates.
    let row_sum_aa: Array1<f64> = w_aa.sum_axis(ndarray::Axis(1));
    let row_sum_ab: Array1<f64> = w_ab.sum_axis(ndarray::Axis(1));
    let d_a: Array1<f64> = match opts.strength {
        LandmarkStrength::Augmented => &row_sum_aa + &row_sum_ab,
        LandmarkStrength::SampleOnly => row_sum_aa,
    };
    let w_aa_inv = sym_function(&w_aa, |g| 1.0 / g);
    // d_B = W_BA 1 + W_BA W_AA^{-1} W_AB 1, assembled without leaving block shapes.
    let col_sum_ab: Array1<f64> = w_ab.sum_axis(ndarray::Axis(0));
    let completed = w_ab.t().dot(&w_aa_inv.dot(&row_sum_ab));
    let d_b: Array1<f64> = &col_sum_ab + &completed;
    if let Some((c, &d)) = d_b.iter().enumerate().find(|(_, &d)| !(d > 0.0)) {
        return Err(Error::Approximation(format!(
            "completed strength estimate {d} for node {} is not positive; \
             the landmark sample does not cover this node",
            b_idx[c]
        )));
    }

    // Normalize blocks by sqrt(d_i d_j).
    let inv_sqrt_da: Array1<f64> = d_a.mapv(|d| 1.0 / d.sqrt());
    let inv_sqrt_db: Array1<f64> = d_b.mapv(|d| 1.0 / d.sqrt());
    let mut wn_aa = w_aa;
    for r in 0..ns {
        for c in 0..ns {
            wn_aa[(r, c)] *= inv_sqrt_da[r] * inv_sqrt_da[c];
        }
    }
    let mut wn_ab = w_ab;
    for r in 0..ns {
        for c in 0..nb {
            wn_ab[(r, c)] *= inv_sqrt_da[r] * inv_sqrt_db[c];
        }
    }

    // One-shot orthogonalized decomposition.
    let aa_inv_sqrt = sym_function(&wn_aa, |g| 1.0 / g.sqrt());
    let aa_sqrt = sym_function(&wn_aa, f64::sqrt);
    let cross = aa_inv_sqrt.dot(&wn_ab);
    let mut s = &wn_aa + &cross.dot(&cross.t());
    for i in 0..ns {
        for j in 0..i {
            let avg = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = avg;
            s[(j, i)] = avg;
        }
    }
    let (xi_asc, psi_asc) = sym_eigh(&s);

    // Keep the n_eig largest ξ (smallest λ = 1 - ξ).
    let mut eigenvalues = Array1::zeros(opts.n_eig);
    let mut psi = Array2::zeros((ns, opts.n_eig));
    let mut xi_clamped = Array1::zeros(opts.n_eig);
    for e in 0..opts.n_eig {
        let src = ns - 1 - e; // descending ξ
        eigenvalues[e] = 1.0 - xi_asc[src];
        xi_clamped[e] = xi_asc[src].max(EIG_FLOOR);
        psi.column_mut(e).assign(&psi_asc.column(src));
    }

    // Extend to all nodes: Φ_A = Ŵ_AA^{1/2} Ψ Ξ^{-1/2},
    // Φ_B = Ŵ_BA (Ŵ_AA^{-1/2} Ψ Ξ^{-1/2}).
    let mut psi_scaled = psi;
    for e in 0..opts.n_eig {
        let s = 1.0 / xi_clamped[e].sqrt();
        psi_scaled.column_mut(e).mapv_inplace(|x| x * s);
    }
    let phi_a = aa_sqrt.dot(&psi_scaled);
    let phi_b = wn_ab.t().dot(&aa_inv_sqrt.dot(&psi_scaled));

    let mut phi = Array2::zeros((n, opts.n_eig));
    for (r, &node) in a_idx.iter().enumerate() {
        phi.row_mut(node).assign(&phi_a.row(r));
    }
    for (r, &node) in b_idx.iter().enumerate() {
        phi.row_mut(node).assign(&phi_b.row(r));
    }

    Ok(Spectrum {
        eigenvalues,
        phi,
        n_sample: opts.n_sample,
        sample_indices: a_idx,
    })
}
