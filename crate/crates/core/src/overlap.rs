//! Orthogonalization of macroscopically distinct spin-half product states.
//!
//! Two magnetization states share `N − m` "vacuum" sites with per-site
//! overlap `η` and carry `m` excited sites with arbitrary overlaps `c_j`,
//! so `|⟨Ψ¹|Ψ²⟩| = |Π c_j| · η^{N−m}` exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::branch::{product_overlap, BranchState, Overlap, SiteState};
use crate::series::{Axis, ScalingSeries, SeriesPoint};
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct FerromagnetSpec {
    pub n: usize,
    pub m: usize,
    pub eta: f64,
    /// Overlaps `⟨ψ¹_j|ψ²_j⟩` of the excited sites; empty means `η` at each.
    pub excited_overlaps: Vec<C64>,
    pub seed: u64,
}

impl FerromagnetSpec {
    pub fn new(n: usize, m: usize, eta: f64) -> Self {
        FerromagnetSpec {
            n,
            m,
            eta,
            excited_overlaps: Vec::new(),
            seed: 42,
        }
    }

    pub fn with_excited_overlaps(mut self, overlaps: Vec<C64>) -> Self {
        self.excited_overlaps = overlaps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid(
                "eta",
                format!("{} is outside [0, 1]", self.eta),
            ));
        }
        if self.m >= self.n {
            return Err(Error::invalid(
                "m",
                format!("m = {} must be below N = {}", self.m, self.n),
            ));
        }
        if !self.excited_overlaps.is_empty() && self.excited_overlaps.len() != self.m {
            return Err(Error::invalid(
                "excited overlaps",
                format!("{} values for m = {}", self.excited_overlaps.len(), self.m),
            ));
        }
        if let Some(c) = self.excited_overlaps.iter().find(|c| !(c.norm() <= 1.0)) {
            return Err(Error::invalid(
                "excited overlaps",
                format!("|{c}| > 1 is unrealizable"),
            ));
        }
        Ok(())
    }

    fn excited(&self) -> Vec<C64> {
        if self.excited_overlaps.is_empty() {
            vec![C64::new(self.eta, 0.0); self.m]
        } else {
            self.excited_overlaps.clone()
        }
    }

    /// `Π c_j`, the excited-site prefactor.
    pub fn excited_product(&self) -> C64 {
        self.excited().iter().product()
    }

    /// `ln|Π c_j| + (N − m) ln η`.
    pub fn expected_log_overlap(&self) -> f64 {
        let prefactor: f64 = self.excited().iter().map(|c| c.norm().ln()).sum();
        prefactor + (self.n - self.m) as f64 * self.eta.ln()
    }
}

/// A seeded random unit vector `u` and a partner `v` with `⟨u|v⟩ = c` exactly.
fn excited_pair(rng: &mut ChaCha8Rng, c: C64) -> Result<(SiteState, SiteState)> {
    let mut g = || {
        C64::new(
            StandardNormal.sample(&mut *rng),
            StandardNormal.sample(&mut *rng),
        )
    };
    let (a, b) = (g(), g());
    let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let (a, b) = (a / norm, b / norm);
    // u⊥ = (−b̄, ā) is orthogonal to u = (a, b).
    let (pa, pb) = (-b.conj(), a.conj());
    let s = (1.0 - c.norm_sqr()).max(0.0).sqrt();
    let u = SiteState::normalized(vec![a, b])?;
    let v = SiteState::normalized(vec![c * a + s * pa, c * b + s * pb])?;
    Ok((u, v))
}

/// The two excited magnetization states as single-branch product states.
///
/// Sites `0..m` are the excited ones; the remaining `N − m` sites are
/// `(1, 0)` versus `(η, √(1 − η²))`.
pub fn build_ferromagnet_pair(spec: &FerromagnetSpec) -> Result<(BranchState, BranchState)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut first = Vec::with_capacity(spec.n);
    let mut second = Vec::with_capacity(spec.n);
    for c in spec.excited() {
        let (u, v) = excited_pair(&mut rng, c)?;
        first.push(u);
        second.push(v);
    }
    let up = SiteState::from_real(&[1.0, 0.0])?;
    let tilted = SiteState::new(vec![
        C64::new(spec.eta, 0.0),
        C64::new((1.0 - spec.eta * spec.eta).sqrt(), 0.0),
    ])?;
    first.resize(spec.n, up);
    second.resize(spec.n, tilted);
    Ok((BranchState::product(first), BranchState::product(second)))
}

/// `⟨Ψ¹|Ψ²⟩` with its log magnitude.
pub fn pair_overlap(spec: &FerromagnetSpec) -> Result<Overlap> {
    let (first, second) = build_ferromagnet_pair(spec)?;
    product_overlap(&second.branches()[0], &first.branches()[0])
}

/// `ln|⟨Ψ¹|Ψ²⟩|` against `N` on a semi-log axis; the slope is `ln η`.
///
/// With `η = 0` every point is exactly zero and the series says so.
pub fn overlap_curve(template: &FerromagnetSpec, n_list: &[usize]) -> Result<ScalingSeries> {
    if n_list.is_empty() {
        return Err(Error::invalid("N list", "empty"));
    }
    let points = n_list
        .par_iter()
        .map(|&n| {
            let spec = FerromagnetSpec {
                n,
                ..template.clone()
            };
            let ov = pair_overlap(&spec)?;
            Ok(SeriesPoint {
                parameter: n as f64,
                value: ov.value.norm(),
                log_value: ov.log_magnitude,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingSeries::new(points, Axis::SemiLog))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_states_when_eta_is_one() {
        let ov = pair_overlap(&FerromagnetSpec::new(5, 0, 1.0)).unwrap();
        assert_abs_diff_eq!(ov.value.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eta_zero_is_exactly_orthogonal() {
        let ov = pair_overlap(
            &FerromagnetSpec::new(4, 1, 0.0).with_excited_overlaps(vec![C64::new(0.7, 0.0)]),
        )
        .unwrap();
        assert_eq!(ov.value.norm(), 0.0);
        assert_eq!(ov.log_magnitude, f64::NEG_INFINITY);
        let s = overlap_curve(&FerromagnetSpec::new(2, 0, 0.0), &[5, 10]).unwrap();
        assert!(s.is_exact_zero());
    }

    #[test]
    fn six_site_example() {
        let spec = FerromagnetSpec::new(6, 1, 0.8).with_excited_overlaps(vec![C64::new(0.3, 0.0)]);
        let ov = pair_overlap(&spec).unwrap();
        assert_abs_diff_eq!(ov.value.norm(), 0.098304, epsilon = 1e-12);
    }

    #[test]
    fn complex_excited_overlap_is_realized_exactly() {
        let c = C64::new(0.3, -0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (u, v) = excited_pair(&mut rng, c).unwrap();
        assert_abs_diff_eq!((u.inner(&v) - c).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn closed_form_log() {
        let spec = FerromagnetSpec::new(10, 0, 0.5);
        let ov = pair_overlap(&spec).unwrap();
        assert_abs_diff_eq!(ov.log_magnitude, 10.0 * 0.5f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            spec.expected_log_overlap(),
            10.0 * 0.5f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn slopes() {
        let s = overlap_curve(&FerromagnetSpec::new(0, 2, 0.9), &[10, 40, 20, 80]).unwrap();
        assert_abs_diff_eq!(s.slope().unwrap(), 0.9f64.ln(), epsilon = 1e-9);
        assert_eq!(s.points()[1].parameter, 20.0);
        let s = overlap_curve(&FerromagnetSpec::new(0, 0, 1.0), &[10, 20]).unwrap();
        assert_abs_diff_eq!(s.slope().unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn validation() {
        assert!(FerromagnetSpec::new(3, 0, 1.5).validate().is_err());
        assert!(FerromagnetSpec::new(3, 3, 0.5).validate().is_err());
        let bad = FerromagnetSpec::new(3, 1, 0.5).with_excited_overlaps(vec![C64::new(1.1, 0.0)]);
        assert!(build_ferromagnet_pair(&bad).is_err());
        assert!(overlap_curve(&FerromagnetSpec::new(0, 0, 0.5), &[]).is_err());
    }
}
