//! Superpositions of product states ("branch form").
//!
//! A [`BranchState`] is `Σ_k c_k ⊗_j |s_{k,j}⟩` with a handful of branches
//! and arbitrarily many sites. Overlaps factorize site by site, so norms,
//! partial traces and coherences cost `O(branches² · N)` and never touch
//! the `Π d_j`-dimensional tensor space except on the kept subsystem.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::{Error, Result, C64};

/// Tolerance on the Euclidean norm of a [`SiteState`].
pub const SITE_NORM_TOL: f64 = 1e-12;

/// Default cap on the product of kept dimensions in [`reduce`].
pub const DEFAULT_KEPT_DIM_CAP: usize = 4096;

/// Normalized state of a single site.
///
/// Amplitudes live behind an `Arc`, so repeating one site state across a
/// million sites costs one allocation.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteState {
    amps: Arc<[C64]>,
}

impl SiteState {
    /// Wraps already-normalized amplitudes.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.len() < 2 {
            return Err(Error::invalid(
                "site state",
                format!("dimension {} < 2", amps.len()),
            ));
        }
        let norm = norm_sqr(&amps).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > SITE_NORM_TOL {
            return Err(Error::invalid(
                "site state",
                format!("norm {norm} is not 1"),
            ));
        }
        Ok(SiteState { amps: amps.into() })
    }

    /// Rescales `amps` to unit norm.
    pub fn normalized(amps: Vec<C64>) -> Result<Self> {
        let norm = norm_sqr(&amps).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Degenerate("site state has zero norm".into()));
        }
        Self::new(amps.into_iter().map(|a| a / norm).collect())
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::normalized(amps.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    /// The number-basis state `|level⟩` of a `dim`-level site.
    pub fn basis(dim: usize, level: usize) -> Result<Self> {
        if level >= dim {
            return Err(Error::invalid(
                "site state",
                format!("level {level} >= dimension {dim}"),
            ));
        }
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[level] = C64::new(1.0, 0.0);
        Self::new(amps)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// `⟨self|ket⟩`.
    pub fn inner(&self, ket: &SiteState) -> C64 {
        self.amps
            .iter()
            .zip(ket.amps.iter())
            .map(|(b, k)| b.conj() * k)
            .sum()
    }
}

fn norm_sqr(amps: &[C64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

/// One term `c_k ⊗_j |s_{k,j}⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    amplitude: C64,
    sites: Vec<SiteState>,
}

impl Branch {
    pub fn new(amplitude: C64, sites: Vec<SiteState>) -> Self {
        Branch { amplitude, sites }
    }

    pub fn amplitude(&self) -> C64 {
        self.amplitude
    }

    pub fn sites(&self) -> &[SiteState] {
        &self.sites
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn with_amplitude(mut self, amplitude: C64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub(crate) fn sites_mut(&mut self) -> &mut Vec<SiteState> {
        &mut self.sites
    }

    fn dims(&self) -> impl Iterator<Item = usize> + '_ {
        self.sites.iter().map(SiteState::dim)
    }
}

/// Running-product overlap together with its underflow-free log magnitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Overlap {
    /// `c̄_b c_a Π_j ⟨s_{b,j}|s_{a,j}⟩`; may underflow to zero or a subnormal.
    pub value: C64,
    /// `ln|c_a| + ln|c_b| + Σ_j ln|⟨s_{b,j}|s_{a,j}⟩|`, `-∞` iff some factor is exactly zero.
    pub log_magnitude: f64,
}

impl Overlap {
    /// True when the magnitude is nonzero but below the smallest normal `f64`,
    /// so `value` is zero or subnormal and only `log_magnitude` is reliable.
    pub fn underflowed(&self) -> bool {
        self.log_magnitude.is_finite() && self.log_magnitude < f64::MIN_POSITIVE.ln()
    }
}

/// Neumaier-compensated sum; log magnitudes accumulate over 10^6 sites.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        if !x.is_finite() {
            self.sum += x;
            return;
        }
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        if self.sum.is_finite() {
            self.sum + self.carry
        } else {
            self.sum
        }
    }
}

fn check_shapes(a: &Branch, b: &Branch) -> Result<()> {
    if a.site_count() != b.site_count() {
        return Err(Error::Shape(format!(
            "branches have {} and {} sites",
            a.site_count(),
            b.site_count()
        )));
    }
    if let Some(j) = a.dims().zip(b.dims()).position(|(x, y)| x != y) {
        return Err(Error::Shape(format!(
            "site {j} has dimension {} vs {}",
            a.sites[j].dim(),
            b.sites[j].dim()
        )));
    }
    Ok(())
}

/// `⟨b|a⟩` for two product branches, including both amplitudes.
pub fn product_overlap(a: &Branch, b: &Branch) -> Result<Overlap> {
    check_shapes(a, b)?;
    Ok(product_overlap_over(a, b, |_| true))
}

fn product_overlap_over(a: &Branch, b: &Branch, include: impl Fn(usize) -> bool) -> Overlap {
    let (sites, mut log) = sites_product(&a.sites, &b.sites, include);
    log.add(a.amplitude.norm().ln());
    log.add(b.amplitude.norm().ln());
    Overlap {
        value: b.amplitude.conj() * a.amplitude * sites,
        log_magnitude: log.value(),
    }
}

/// `Π_j ⟨b_j|a_j⟩` over included sites, plus the log-magnitude accumulator.
fn sites_product(
    a: &[SiteState],
    b: &[SiteState],
    include: impl Fn(usize) -> bool,
) -> (C64, CompensatedSum) {
    let mut value = C64::new(1.0, 0.0);
    let mut log = CompensatedSum::default();
    for (j, (sa, sb)) in a.iter().zip(b).enumerate() {
        if include(j) {
            let f = sb.inner(sa);
            value *= f;
            log.add(f.norm().ln());
        }
    }
    (value, log)
}

/// Superposition of product states over a fixed site layout.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchState {
    branches: Vec<Branch>,
    site_dims: Vec<usize>,
}

impl BranchState {
    /// Validates shapes and drops zero-amplitude branches. Does not normalize.
    pub fn new(branches: Vec<Branch>) -> Result<Self> {
        let first = branches
            .first()
            .ok_or_else(|| Error::Degenerate("state has no branches".into()))?;
        let site_dims: Vec<usize> = first.dims().collect();
        for (k, b) in branches.iter().enumerate() {
            check_shapes(first, b).map_err(|e| Error::Shape(format!("branch {k}: {e}")))?;
            if !b.amplitude.re.is_finite() || !b.amplitude.im.is_finite() {
                return Err(Error::invalid(
                    "amplitude",
                    format!("branch {k} is not finite"),
                ));
            }
        }
        let branches: Vec<Branch> = branches
            .into_iter()
            .filter(|b| b.amplitude != C64::new(0.0, 0.0))
            .collect();
        if branches.is_empty() {
            return Err(Error::Degenerate("all branch amplitudes are zero".into()));
        }
        Ok(BranchState {
            branches,
            site_dims,
        })
    }

    /// A single product state with amplitude 1.
    pub fn product(sites: Vec<SiteState>) -> Self {
        let site_dims = sites.iter().map(SiteState::dim).collect();
        BranchState {
            branches: vec![Branch::new(C64::new(1.0, 0.0), sites)],
            site_dims,
        }
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn site_count(&self) -> usize {
        self.site_dims.len()
    }

    pub fn site_dims(&self) -> &[usize] {
        &self.site_dims
    }

    pub fn into_branches(self) -> Vec<Branch> {
        self.branches
    }

    /// `Σ_{k,k'} c_k c̄_{k'} Π_j ⟨s_{k',j}|s_{k,j}⟩`.
    pub fn norm_sqr(&self) -> f64 {
        let mut total = 0.0;
        for (k, a) in self.branches.iter().enumerate() {
            total += product_overlap_over(a, a, |_| true).value.re;
            for b in &self.branches[k + 1..] {
                total += 2.0 * product_overlap_over(a, b, |_| true).value.re;
            }
        }
        total
    }

    /// Rescales every amplitude by `1/‖ψ‖`; relative phases are untouched.
    pub fn normalize(&self) -> Result<BranchState> {
        let n2 = self.norm_sqr();
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(Error::Degenerate(format!("norm² = {n2}")));
        }
        let scale = n2.sqrt().recip();
        Ok(BranchState {
            branches: self
                .branches
                .iter()
                .map(|b| b.clone().with_amplitude(b.amplitude * scale))
                .collect(),
            site_dims: self.site_dims.clone(),
        })
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    /// Appends one site per branch; `per_branch[k]` goes onto branch `k`.
    pub(crate) fn push_site(&mut self, per_branch: Vec<SiteState>) {
        debug_assert_eq!(per_branch.len(), self.branches.len());
        self.site_dims.push(per_branch[0].dim());
        for (b, s) in self.branches.iter_mut().zip(per_branch) {
            b.sites.push(s);
        }
    }

    pub(crate) fn from_parts_unchecked(branches: Vec<Branch>, site_dims: Vec<usize>) -> Self {
        BranchState {
            branches,
            site_dims,
        }
    }

    fn kept_mask(&self, keep: &[usize]) -> Result<(Vec<usize>, Vec<bool>)> {
        let mut kept: Vec<usize> = keep.to_vec();
        kept.sort_unstable();
        kept.dedup();
        if let Some(&bad) = kept.iter().find(|&&j| j >= self.site_count()) {
            return Err(Error::Shape(format!(
                "kept site {bad} out of range (state has {} sites)",
                self.site_count()
            )));
        }
        let mut mask = vec![false; self.site_count()];
        for &j in &kept {
            mask[j] = true;
        }
        Ok((kept, mask))
    }
}

/// Density matrix expressed over branch labels.
///
/// `rho[(k, k')] = c_k c̄_{k'} Π_{traced} ⟨s_{k'}|s_k⟩ / ‖ψ‖²` and
/// `gram[(k, k')] = ⟨kept_k|kept_{k'}⟩`. When the kept parts are orthonormal
/// `rho` is the reduced density matrix in the pointer basis.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchLabelMatrix {
    rho: DMatrix<C64>,
    gram: DMatrix<C64>,
}

impl BranchLabelMatrix {
    pub fn rho(&self) -> &DMatrix<C64> {
        &self.rho
    }

    pub fn gram(&self) -> &DMatrix<C64> {
        &self.gram
    }

    pub fn branch_count(&self) -> usize {
        self.rho.nrows()
    }

    /// `|ρ_{k,k2}|`. A single-branch state has no off-diagonal, so any
    /// `k != k2` reads zero there.
    pub fn coherence(&self, k: usize, k2: usize) -> Result<f64> {
        let count = self.branch_count();
        if count == 1 && k != k2 {
            return Ok(0.0);
        }
        for label in [k, k2] {
            if label >= count {
                return Err(Error::LabelOutOfRange { label, count });
            }
        }
        Ok(self.rho[(k, k2)].norm())
    }

    /// `|⟨kept_k|kept_{k2}⟩|`, reported next to coherences so callers can
    /// demand distinguishable pointers.
    pub fn kept_overlap(&self, k: usize, k2: usize) -> Result<f64> {
        let count = self.branch_count();
        for label in [k, k2] {
            if label >= count {
                return Err(Error::LabelOutOfRange { label, count });
            }
        }
        Ok(self.gram[(k, k2)].norm())
    }

    /// Largest `|gram|` off the diagonal.
    pub fn max_kept_overlap(&self) -> f64 {
        let n = self.branch_count();
        let mut worst: f64 = 0.0;
        for k in 0..n {
            for k2 in 0..n {
                if k != k2 {
                    worst = worst.max(self.gram[(k, k2)].norm());
                }
            }
        }
        worst
    }
}

/// Reduced density matrix on a set of kept sites.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedDensityMatrix {
    kept_sites: Vec<usize>,
    kept_dims: Vec<usize>,
    matrix: DMatrix<C64>,
    labels: BranchLabelMatrix,
}

impl ReducedDensityMatrix {
    pub fn kept_sites(&self) -> &[usize] {
        &self.kept_sites
    }

    pub fn kept_dims(&self) -> &[usize] {
        &self.kept_dims
    }

    /// Matrix over the tensor basis of the kept sites, first kept site most significant.
    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn labels(&self) -> &BranchLabelMatrix {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint())
            .iter()
            .fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }
}

fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let herm = (m + m.adjoint()).scale(0.5);
    let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn kept_vector(branch: &Branch, kept: &[usize]) -> Vec<C64> {
    let mut v = vec![C64::new(1.0, 0.0)];
    for &j in kept {
        let s = branch.sites[j].amplitudes();
        let mut next = Vec::with_capacity(v.len() * s.len());
        for a in &v {
            for b in s {
                next.push(a * b);
            }
        }
        v = next;
    }
    v
}

fn kept_dimension(state: &BranchState, kept: &[usize], cap: usize) -> Result<usize> {
    let mut dim: usize = 1;
    for &j in kept {
        dim = dim
            .checked_mul(state.site_dims[j])
            .filter(|&d| d <= cap)
            .ok_or(Error::Capacity {
                what: "kept dimension",
                needed: dim.saturating_mul(state.site_dims[j]),
                cap,
            })?;
    }
    Ok(dim)
}

/// Branch-label density matrix and Gram matrix of kept parts. Never builds
/// the kept tensor space, so it has no capacity limit.
pub fn reduce_labels(state: &BranchState, keep: &[usize]) -> Result<BranchLabelMatrix> {
    let (_, mask) = state.kept_mask(keep)?;
    Ok(label_matrices(state, &mask)?.0)
}

fn label_matrices(state: &BranchState, mask: &[bool]) -> Result<(BranchLabelMatrix, f64)> {
    let n2 = state.norm_sqr();
    if !(n2 > 0.0) || !n2.is_finite() {
        return Err(Error::Degenerate(format!("norm² = {n2}")));
    }
    let bs = &state.branches;
    let nb = bs.len();
    let mut rho = DMatrix::zeros(nb, nb);
    let mut gram = DMatrix::zeros(nb, nb);
    for k in 0..nb {
        for k2 in k..nb {
            // ⟨s_{k2}|s_k⟩ over traced sites, with c_k c̄_{k2}.
            let traced = product_overlap_over(&bs[k], &bs[k2], |j| !mask[j]).value / n2;
            // ⟨kept_k|kept_{k2}⟩ = Π ⟨s_k|s_{k2}⟩ over kept sites.
            let g = sites_product(&bs[k2].sites, &bs[k].sites, |j| mask[j]).0;
            rho[(k, k2)] = traced;
            rho[(k2, k)] = traced.conj();
            gram[(k, k2)] = g;
            gram[(k2, k)] = g.conj();
        }
    }
    Ok((BranchLabelMatrix { rho, gram }, n2))
}

/// Partial trace onto `keep` with the default kept-dimension cap.
pub fn reduce(state: &BranchState, keep: &[usize]) -> Result<ReducedDensityMatrix> {
    reduce_with_cap(state, keep, DEFAULT_KEPT_DIM_CAP)
}

/// `ρ = Σ_{k,k'} c_k c̄_{k'} (Π_{j∉keep} ⟨s_{k',j}|s_{k,j}⟩) |kept_k⟩⟨kept_{k'}|`,
/// divided by the state norm so the trace is one.
pub fn reduce_with_cap(
    state: &BranchState,
    keep: &[usize],
    cap: usize,
) -> Result<ReducedDensityMatrix> {
    let (kept, mask) = state.kept_mask(keep)?;
    let dim = kept_dimension(state, &kept, cap)?;
    let (labels, _) = label_matrices(state, &mask)?;
    let nb = state.branch_count();
    let mut v = DMatrix::<C64>::zeros(dim, nb);
    for (k, b) in state.branches.iter().enumerate() {
        for (i, a) in kept_vector(b, &kept).into_iter().enumerate() {
            v[(i, k)] = a;
        }
    }
    let matrix = &v * &labels.rho * v.adjoint();
    Ok(ReducedDensityMatrix {
        kept_dims: kept.iter().map(|&j| state.site_dims[j]).collect(),
        kept_sites: kept,
        matrix,
        labels,
    })
}

/// The incoherent mixture `Σ_k w_k |kept_k⟩⟨kept_k|` on the same kept
/// subsystem as [`reduce`], normalized to unit trace.
pub fn mixture(
    state: &BranchState,
    keep: &[usize],
    weights: &[f64],
) -> Result<ReducedDensityMatrix> {
    if weights.len() != state.branch_count() {
        return Err(Error::Shape(format!(
            "{} weights for {} branches",
            weights.len(),
            state.branch_count()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::invalid(
            "mixture weight",
            "weights must be non-negative",
        ));
    }
    let (kept, mask) = state.kept_mask(keep)?;
    let dim = kept_dimension(state, &kept, DEFAULT_KEPT_DIM_CAP)?;
    let (base, _) = label_matrices(state, &mask)?;
    let nb = state.branch_count();
    let mut matrix = DMatrix::<C64>::zeros(dim, dim);
    let mut rho = DMatrix::<C64>::zeros(nb, nb);
    for (k, b) in state.branches.iter().enumerate() {
        let v = nalgebra::DVector::from_vec(kept_vector(b, &kept));
        matrix += (&v * v.adjoint()).scale(weights[k]);
        rho[(k, k)] = C64::new(weights[k], 0.0);
    }
    let tr = matrix.trace().re;
    if !(tr > 0.0) {
        return Err(Error::Degenerate("mixture has zero trace".into()));
    }
    matrix.unscale_mut(tr);
    rho.unscale_mut(tr);
    Ok(ReducedDensityMatrix {
        kept_dims: kept.iter().map(|&j| state.site_dims[j]).collect(),
        kept_sites: kept,
        matrix,
        labels: BranchLabelMatrix {
            rho,
            gram: base.gram,
        },
    })
}

/// `|ρ_{k,k2}|` in the branch-label basis.
pub fn coherence(rho: &ReducedDensityMatrix, k: usize, k2: usize) -> Result<f64> {
    rho.labels.coherence(k, k2)
}

/// `tr ρ²`.
pub fn purity(rho: &ReducedDensityMatrix) -> f64 {
    let m = &rho.matrix;
    let n = m.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (m[(i, j)] * m[(j, i)]).re;
        }
    }
    acc
}

/// Half the sum of absolute eigenvalues of `ρ − σ`.
pub fn trace_distance(rho: &ReducedDensityMatrix, sigma: &ReducedDensityMatrix) -> Result<f64> {
    if rho.kept_dims != sigma.kept_dims {
        return Err(Error::Shape(format!(
            "kept dimensions {:?} vs {:?}",
            rho.kept_dims, sigma.kept_dims
        )));
    }
    let diff = &rho.matrix - &sigma.matrix;
    let d = 0.5
        * hermitian_eigenvalues(&diff)
            .iter()
            .map(|e| e.abs())
            .sum::<f64>();
    Ok(d.min(1.0))
}
