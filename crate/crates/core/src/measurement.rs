//! Premeasurement, decoherence toward the pointer mixture, local splitters
//! and cat lifetimes.
//!
//! Site 0 of a premeasured state is the object; sites `1..=N_A` are the
//! apparatus. Environment and radiation records are appended as further
//! sites, one per scattering event, so tracing them out is an ordinary
//! [`reduce`](crate::branch::reduce).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::branch::{
    coherence, mixture, purity, reduce, trace_distance, Branch, BranchState, SiteState,
};
use crate::series::{Axis, ScalingSeries, SeriesPoint};
use crate::{Error, Result, C64};

/// Index of the object site in a premeasured state.
pub const OBJECT_SITE: usize = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSpec {
    pub outcome_amplitudes: Vec<C64>,
    pub apparatus_sites: usize,
    /// Per-site overlap between distinct pointer states; 0 is macroscopically distinct.
    pub pointer_overlap: f64,
    pub object_dim: usize,
}

impl MeasurementSpec {
    pub fn new(outcome_amplitudes: Vec<C64>, apparatus_sites: usize) -> Self {
        let object_dim = outcome_amplitudes.len().max(2);
        MeasurementSpec {
            outcome_amplitudes,
            apparatus_sites,
            pointer_overlap: 0.0,
            object_dim,
        }
    }

    pub fn from_real(amplitudes: &[f64], apparatus_sites: usize) -> Self {
        Self::new(
            amplitudes.iter().map(|&a| C64::new(a, 0.0)).collect(),
            apparatus_sites,
        )
    }

    pub fn with_pointer_overlap(mut self, overlap: f64) -> Self {
        self.pointer_overlap = overlap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.outcome_amplitudes.is_empty() {
            return Err(Error::invalid("amplitudes", "no outcomes"));
        }
        let total: f64 = self.outcome_amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if !((total - 1.0).abs() <= 1e-10) {
            return Err(Error::invalid(
                "amplitudes",
                format!("Σ|c_k|² = {total}, expected 1"),
            ));
        }
        if self.outcome_amplitudes.len() > self.object_dim {
            return Err(Error::invalid(
                "object dim",
                format!(
                    "{} outcomes need object_dim >= {}",
                    self.outcome_amplitudes.len(),
                    self.outcome_amplitudes.len()
                ),
            ));
        }
        if self.object_dim < 2 {
            return Err(Error::invalid("object dim", "must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.pointer_overlap) {
            return Err(Error::invalid(
                "pointer overlap",
                format!("{} is outside [0, 1]", self.pointer_overlap),
            ));
        }
        Ok(())
    }

    /// `|c_k|²` of the outcomes that survive as branches.
    pub fn weights(&self) -> Vec<f64> {
        self.outcome_amplitudes
            .iter()
            .filter(|c| **c != C64::new(0.0, 0.0))
            .map(|c| c.norm_sqr())
            .collect()
    }

    pub fn apparatus(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.apparatus_sites
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvironmentSpec {
    pub env_sites: usize,
    /// Overlap between environment states conditioned on distinct branches.
    pub kappa: f64,
}

impl EnvironmentSpec {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::invalid(
                "kappa",
                format!("{} is outside [0, 1]", self.kappa),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DephasingMode {
    /// Exact Gaussian average `e^{−γt}` per radiating site.
    Analytic,
    /// Monte-Carlo estimate of `⟨e^{iφ}⟩`, `φ ~ Normal(0, 2γt)`.
    Sampled { seed: u64, samples: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DephasingSpec {
    pub gamma: f64,
    pub t: f64,
    pub mode: DephasingMode,
    /// Sites that radiate; each emits one unregistered quantum.
    pub sites: Vec<usize>,
}

impl DephasingSpec {
    pub fn analytic(gamma: f64, t: f64, sites: Vec<usize>) -> Self {
        DephasingSpec {
            gamma,
            t,
            mode: DephasingMode::Analytic,
            sites,
        }
    }

    pub fn sampled(gamma: f64, t: f64, sites: Vec<usize>, seed: u64, samples: usize) -> Self {
        DephasingSpec {
            gamma,
            t,
            mode: DephasingMode::Sampled { seed, samples },
            sites,
        }
    }

    /// `e^{−γt}`.
    pub fn analytic_factor(&self) -> f64 {
        (-self.gamma * self.t).exp()
    }
}

/// Per-site record of one dephasing pass.
#[derive(Clone, Debug, PartialEq)]
pub struct DephasingReport {
    pub analytic_factor: f64,
    /// Coherence factor applied per radiating site, in `sites` order.
    pub site_factors: Vec<C64>,
    /// Standard error of `Re` of each sampled factor; zero when analytic.
    pub standard_errors: Vec<f64>,
}

impl DephasingReport {
    /// Mean of the per-site factors' real parts and its standard error.
    pub fn pooled_factor(&self) -> (f64, f64) {
        let n = self.site_factors.len() as f64;
        if n == 0.0 {
            return (self.analytic_factor, 0.0);
        }
        let mean = self.site_factors.iter().map(|f| f.re).sum::<f64>() / n;
        let se = self
            .standard_errors
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt()
            / n;
        (mean, se)
    }

    /// `Σ ln|f_j|`: the log of the total coherence multiplier.
    pub fn log_total_factor(&self) -> f64 {
        self.site_factors.iter().map(|f| f.norm().ln()).sum()
    }
}

/// `count` real unit vectors with every pairwise overlap equal to `overlap`,
/// from a Cholesky factor of `(1−ρ)I + ρJ`. Dimension is `max(2, count)`.
pub fn equicorrelated_states(count: usize, overlap: f64) -> Result<Vec<SiteState>> {
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::invalid(
            "overlap",
            format!("{overlap} is outside [0, 1]"),
        ));
    }
    let dim = count.max(2);
    let gram = |i: usize, j: usize| if i == j { 1.0 } else { overlap };
    let mut l = vec![vec![0.0f64; dim]; count];
    for i in 0..count {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (gram(i, i) - s).max(0.0).sqrt();
            } else if l[j][j] > 0.0 {
                l[i][j] = (gram(i, j) - s) / l[j][j];
            }
        }
    }
    l.into_iter()
        .map(|row| SiteState::from_real(&row))
        .collect()
}

/// `(e_0, e_1)` with `⟨e_1|e_0⟩ = f`.
fn pair_with_overlap(f: C64) -> Result<(SiteState, SiteState)> {
    let e0 = SiteState::from_real(&[1.0, 0.0])?;
    let rest = (1.0 - f.norm_sqr()).max(0.0).sqrt();
    let e1 = SiteState::normalized(vec![f.conj(), C64::new(rest, 0.0)])?;
    Ok((e0, e1))
}

/// `Σ_k c_k |o_k⟩ ⊗ |A_k⟩^{⊗N_A}`: the object in basis state `k`, the apparatus in pointer state `k`.
pub fn premeasure(spec: &MeasurementSpec) -> Result<BranchState> {
    spec.validate()?;
    let outcomes = spec.outcome_amplitudes.len();
    let pointers = equicorrelated_states(outcomes, spec.pointer_overlap)?;
    let branches = spec
        .outcome_amplitudes
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let mut sites = Vec::with_capacity(1 + spec.apparatus_sites);
            sites.push(SiteState::basis(spec.object_dim, k)?);
            sites.resize(1 + spec.apparatus_sites, pointers[k].clone());
            Ok(Branch::new(c, sites))
        })
        .collect::<Result<Vec<_>>>()?;
    BranchState::new(branches)
}

/// Appends `N_E` environment sites; distinct branches leave records with overlap `κ`.
pub fn environment_scatter(state: &BranchState, env: &EnvironmentSpec) -> Result<BranchState> {
    env.validate()?;
    let records = equicorrelated_states(state.branch_count(), env.kappa)?;
    let mut out = state.clone();
    for _ in 0..env.env_sites {
        out.push_site(records.clone());
    }
    Ok(out)
}

/// Lets every site scatter one environment quantum whose state depends only
/// on that site's local state. Records at sites where all branches agree
/// are identical and factor out exactly, so only differing sites append one.
pub fn local_environment_scatter(state: &BranchState, kappa: f64) -> Result<BranchState> {
    EnvironmentSpec {
        env_sites: 0,
        kappa,
    }
    .validate()?;
    let mut out = state.clone();
    for j in 0..state.site_count() {
        let mut classes: Vec<&SiteState> = Vec::new();
        let mut label = Vec::with_capacity(state.branch_count());
        for b in state.branches() {
            let s = &b.sites()[j];
            let idx = match classes.iter().position(|c| *c == s) {
                Some(idx) => idx,
                None => {
                    classes.push(s);
                    classes.len() - 1
                }
            };
            label.push(idx);
        }
        if classes.len() > 1 {
            let records = equicorrelated_states(classes.len(), kappa)?;
            out.push_site(label.iter().map(|&c| records[c].clone()).collect());
        }
    }
    Ok(out)
}

fn sampled_factor(seed: u64, stream: u64, samples: usize, sigma: f64) -> Result<(C64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid("gamma", e.to_string()))?;
    let (mut re, mut im, mut re2) = (0.0, 0.0, 0.0);
    for _ in 0..samples {
        let phi: f64 = normal.sample(&mut rng);
        let (s, c) = phi.sin_cos();
        re += c;
        im += s;
        re2 += c * c;
    }
    let n = samples as f64;
    let mean = re / n;
    let var = if samples > 1 {
        (re2 - n * mean * mean) / (n - 1.0)
    } else {
        0.0
    };
    Ok((C64::new(mean, im / n), (var.max(0.0) / n).sqrt()))
}

/// Gaussian phase diffusion on the radiating sites, recorded as one traced
/// quantum per site. Coherences between branches shrink by `e^{−γt}` per
/// radiating site (analytic) or by the sampled average of `e^{iφ}`.
pub fn infrared_dephase(
    state: &BranchState,
    spec: &DephasingSpec,
) -> Result<(BranchState, DephasingReport)> {
    if !(spec.gamma >= 0.0) || !spec.gamma.is_finite() {
        return Err(Error::invalid(
            "gamma",
            format!("{} must be finite and non-negative", spec.gamma),
        ));
    }
    if !(spec.t >= 0.0) || !spec.t.is_finite() {
        return Err(Error::invalid(
            "t",
            format!("{} must be finite and non-negative", spec.t),
        ));
    }
    if let Some(&j) = spec.sites.iter().find(|&&j| j >= state.site_count()) {
        return Err(Error::invalid(
            "sites",
            format!("site {j} outside a {}-site state", state.site_count()),
        ));
    }
    let analytic_factor = spec.analytic_factor();
    let gt = spec.gamma * spec.t;
    let unchanged = |f: f64| DephasingReport {
        analytic_factor,
        site_factors: vec![C64::new(f, 0.0); spec.sites.len()],
        standard_errors: vec![0.0; spec.sites.len()],
    };
    if gt == 0.0 {
        return Ok((state.clone(), unchanged(1.0)));
    }
    match spec.mode {
        DephasingMode::Analytic => {
            let report = unchanged(analytic_factor);
            if state.branch_count() < 2 {
                return Ok((state.clone(), report));
            }
            let records = equicorrelated_states(state.branch_count(), analytic_factor)?;
            let mut out = state.clone();
            for _ in &spec.sites {
                out.push_site(records.clone());
            }
            Ok((out, report))
        }
        DephasingMode::Sampled { seed, samples } => {
            if samples == 0 {
                return Err(Error::invalid("samples", "need at least one sample"));
            }
            if state.branch_count() != 2 {
                return Err(Error::invalid(
                    "branches",
                    format!(
                        "sampled dephasing acts on two-branch states, got {}",
                        state.branch_count()
                    ),
                ));
            }
            let sigma = (2.0 * gt).sqrt();
            let draws = (0..spec.sites.len())
                .into_par_iter()
                .map(|task| sampled_factor(seed, task as u64, samples, sigma))
                .collect::<Result<Vec<_>>>()?;
            let mut out = state.clone();
            for &(f, _) in &draws {
                let (e0, e1) = pair_with_overlap(f)?;
                out.push_site(vec![e0, e1]);
            }
            let (site_factors, standard_errors) = draws.into_iter().unzip();
            Ok((
                out,
                DephasingReport {
                    analytic_factor,
                    site_factors,
                    standard_errors,
                },
            ))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairCoherence {
    pub k: usize,
    pub k2: usize,
    pub coherence: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoherenceReport {
    pub coherences: Vec<PairCoherence>,
    pub purity: f64,
    pub mixture_purity: f64,
    /// Distance from the incoherent pointer mixture `Σ|c_k|² |o_k A_k⟩⟨o_k A_k|`.
    pub trace_distance: f64,
    /// Largest overlap between kept parts of distinct branches.
    pub max_kept_overlap: f64,
}

/// Coherences, purity and distance from the ideal mixture on the kept sites.
pub fn decoherence_report(
    state: &BranchState,
    keep: &[usize],
    spec: &MeasurementSpec,
) -> Result<DecoherenceReport> {
    if !keep.contains(&OBJECT_SITE) {
        return Err(Error::invalid("keep", "the object site must be kept"));
    }
    let rho = reduce(state, keep)?;
    let sigma = mixture(state, keep, &spec.weights())?;
    let nb = state.branch_count();
    let mut coherences = Vec::new();
    for k in 0..nb {
        for k2 in k + 1..nb {
            coherences.push(PairCoherence {
                k,
                k2,
                coherence: coherence(&rho, k, k2)?,
            });
        }
    }
    Ok(DecoherenceReport {
        coherences,
        purity: purity(&rho),
        mixture_purity: purity(&sigma),
        trace_distance: trace_distance(&rho, &sigma)?,
        max_kept_overlap: rho.labels().max_kept_overlap(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitterSpec {
    targets: Vec<usize>,
    displacement: SiteState,
}

impl SplitterSpec {
    /// A splitter acting on `targets`; its locality is the number of targets.
    pub fn new(mut targets: Vec<usize>, displacement: SiteState) -> Result<Self> {
        targets.sort_unstable();
        targets.dedup();
        if targets.is_empty() {
            return Err(Error::invalid(
                "locality",
                "a splitter must touch at least one site",
            ));
        }
        Ok(SplitterSpec {
            targets,
            displacement,
        })
    }

    /// Acts on sites `0..k`.
    pub fn leading(k: usize, displacement: SiteState) -> Result<Self> {
        Self::new((0..k).collect(), displacement)
    }

    pub fn locality(&self) -> usize {
        self.targets.len()
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    fn check(&self, state: &BranchState) -> Result<()> {
        let n = state.site_count();
        if self.locality() > n {
            return Err(Error::invalid(
                "locality",
                format!("k = {} exceeds N = {n}", self.locality()),
            ));
        }
        if let Some(&j) = self.targets.iter().find(|&&j| j >= n) {
            return Err(Error::invalid(
                "locality",
                format!("target site {j} outside N = {n}"),
            ));
        }
        if let Some(&j) = self
            .targets
            .iter()
            .find(|&&j| state.site_dims()[j] != self.displacement.dim())
        {
            return Err(Error::Shape(format!(
                "displacement has dimension {} but site {j} has {}",
                self.displacement.dim(),
                state.site_dims()[j]
            )));
        }
        Ok(())
    }

    fn displaced(&self, branch: &Branch) -> Branch {
        let mut b = branch.clone();
        for &j in &self.targets {
            b.sites_mut()[j] = self.displacement.clone();
        }
        b
    }
}

/// Splits a single-branch state into two equal-amplitude branches that
/// differ only on the splitter's target sites.
pub fn split(state: &BranchState, spec: &SplitterSpec) -> Result<BranchState> {
    if state.branch_count() != 1 {
        return Err(Error::invalid(
            "state",
            format!("split expects one branch, got {}", state.branch_count()),
        ));
    }
    split_branch(state, 0, spec)
}

/// Replaces branch `index` by its two split halves and renormalizes.
pub fn split_branch(state: &BranchState, index: usize, spec: &SplitterSpec) -> Result<BranchState> {
    spec.check(state)?;
    if index >= state.branch_count() {
        return Err(Error::LabelOutOfRange {
            label: index,
            count: state.branch_count(),
        });
    }
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut branches = Vec::with_capacity(state.branch_count() + 1);
    for (k, b) in state.branches().iter().enumerate() {
        if k == index {
            let c = b.amplitude() * half;
            branches.push(b.clone().with_amplitude(c));
            branches.push(spec.displaced(b).with_amplitude(c));
        } else {
            branches.push(b.clone());
        }
    }
    BranchState::from_parts_unchecked(branches, state.site_dims().to_vec()).normalize()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairDistinguishability {
    pub k: usize,
    pub k2: usize,
    /// Sites where `|⟨s_k|s_k2⟩| < 1 − ε`.
    pub sites: usize,
}

/// Per branch pair, the number of sites at which the branches are distinguishable.
pub fn branch_distinguishability(
    state: &BranchState,
    epsilon: f64,
) -> Result<Vec<PairDistinguishability>> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(
            "epsilon",
            format!("{epsilon} is outside (0, 1)"),
        ));
    }
    let bs = state.branches();
    let mut out = Vec::new();
    for k in 0..bs.len() {
        for k2 in k + 1..bs.len() {
            let sites = bs[k]
                .sites()
                .iter()
                .zip(bs[k2].sites())
                .filter(|(a, b)| a.inner(b).norm() < 1.0 - epsilon)
                .count();
            out.push(PairDistinguishability { k, k2, sites });
        }
    }
    Ok(out)
}

/// The symmetric cat `(|0…0⟩ + |1…1⟩)/√2` on `n` qubits.
pub fn cat_state(n: usize) -> Result<BranchState> {
    let up = SiteState::basis(2, 0)?;
    let down = SiteState::basis(2, 1)?;
    split(
        &BranchState::product(vec![up; n]),
        &SplitterSpec::leading(n, down)?,
    )
}

/// Time for the cat coherence to halve under per-site rate `γ`: `ln 2 / (γN)`.
pub fn half_life(n: usize, gamma: f64) -> f64 {
    std::f64::consts::LN_2 / (gamma * n as f64)
}

/// `t½` against `N` on log-log axes; the slope is −1.
pub fn cat_lifetime(n_list: &[usize], gamma: f64) -> Result<ScalingSeries> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid("gamma", format!("{gamma} must be positive")));
    }
    if n_list.is_empty() {
        return Err(Error::invalid("N list", "empty"));
    }
    if n_list.contains(&0) {
        return Err(Error::invalid("N list", "N must be at least 1"));
    }
    let points = n_list
        .iter()
        .map(|&n| SeriesPoint::new(n as f64, half_life(n, gamma)))
        .collect();
    Ok(ScalingSeries::new(points, Axis::LogLog))
}

/// Total mass of `n_atoms` atoms of mass `atom_mass_kg`.
pub fn estimate_scale(n_atoms: f64, atom_mass_kg: f64) -> Result<f64> {
    for (name, v) in [("atoms", n_atoms), ("atom mass", atom_mass_kg)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(name, format!("{v} must be positive")));
        }
    }
    Ok(n_atoms * atom_mass_kg)
}
