//! Truncated harmonic-oscillator realization of canonical pairs.
//!
//! `x = (a + a†)/√2` and `p = (a − a†)/(i√2)` in the number basis
//! `|0⟩..|d−1⟩`. Truncation spoils the canonical relation on the top level;
//! a word of total degree `D` is exact on input levels `≤ d−1−D` (the safe
//! subspace), and canonical identities are only ever asserted there.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{commutator_com, ComOperator, OperatorPolynomial};
use crate::series::{Axis, ScalingSeries, SeriesPoint};
use crate::{Error, Result, C64};

/// Largest tensor dimension `d^m` that will be realized.
pub const MAX_REALIZED_DIM: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct SiteMatrices {
    d: usize,
    x: DMatrix<C64>,
    p: DMatrix<C64>,
}

impl SiteMatrices {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn x_matrix(&self) -> &DMatrix<C64> {
        &self.x
    }

    pub fn p_matrix(&self) -> &DMatrix<C64> {
        &self.p
    }

    /// `x^a p^b` as a product of truncated matrices.
    pub fn monomial(&self, a: u16, b: u16) -> DMatrix<C64> {
        let mut m = DMatrix::identity(self.d, self.d);
        for _ in 0..a {
            m = &m * &self.x;
        }
        for _ in 0..b {
            m = &m * &self.p;
        }
        m
    }
}

pub fn build_site_matrices(d: usize) -> Result<SiteMatrices> {
    if !(2..=64).contains(&d) {
        return Err(Error::invalid(
            "d",
            format!("truncation {d} outside 2..=64"),
        ));
    }
    let mut lower = DMatrix::<C64>::zeros(d, d);
    for n in 1..d {
        lower[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    let raise = lower.adjoint();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let x = (&lower + &raise).scale(r);
    // 1/(i√2) = −i/√2
    let p = (&lower - &raise) * C64::new(0.0, -r);
    Ok(SiteMatrices { d, x, p })
}

/// Highest level that is exact for words of total degree `degree`, if any.
pub fn safe_level(d: usize, degree: u32) -> Option<usize> {
    (d - 1).checked_sub(degree as usize)
}

/// Tensor indices (first site most significant) whose levels are all `≤ max_level`.
pub fn safe_indices(d: usize, m: usize, max_level: usize) -> Vec<usize> {
    let mut out = vec![0usize];
    for _ in 0..m {
        out = out
            .iter()
            .flat_map(|&base| (0..=max_level.min(d - 1)).map(move |l| base * d + l))
            .collect();
    }
    out
}

fn tensor_dim(d: usize, m: usize) -> Result<usize> {
    let mut dim: usize = 1;
    for _ in 0..m {
        dim = dim
            .checked_mul(d)
            .filter(|&v| v <= MAX_REALIZED_DIM)
            .ok_or(Error::Capacity {
                what: "realized dimension",
                needed: dim.saturating_mul(d),
                cap: MAX_REALIZED_DIM,
            })?;
    }
    Ok(dim)
}

fn check_sites(poly: &OperatorPolynomial, sites: &[u32]) -> Result<()> {
    if sites.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("sites", "must be strictly increasing"));
    }
    if let Some(s) = poly
        .support()
        .into_iter()
        .find(|s| sites.binary_search(s).is_err())
    {
        return Err(Error::invalid(
            "sites",
            format!("site {s} of the operator is not realized"),
        ));
    }
    Ok(())
}

/// Dense matrix of `poly` over the tensor space of its support.
pub fn realize(poly: &OperatorPolynomial, mats: &SiteMatrices) -> Result<DMatrix<C64>> {
    let sites: Vec<u32> = poly.support().into_iter().collect();
    realize_on(poly, mats, &sites)
}

/// Dense matrix of `poly` over the tensor space of `sites` (increasing, covering the support).
pub fn realize_on(
    poly: &OperatorPolynomial,
    mats: &SiteMatrices,
    sites: &[u32],
) -> Result<DMatrix<C64>> {
    check_sites(poly, sites)?;
    let dim = tensor_dim(mats.d, sites.len())?;
    let eye = DMatrix::<C64>::identity(mats.d, mats.d);
    let mut out = DMatrix::<C64>::zeros(dim, dim);
    for t in poly.terms() {
        let mut acc = DMatrix::from_element(1, 1, t.coefficient);
        for &s in sites {
            acc = match t.monomial.factor(s) {
                Some(f) => acc.kronecker(&mats.monomial(f.x, f.p)),
                None => acc.kronecker(&eye),
            };
        }
        out += acc;
    }
    Ok(out)
}

/// Applies a `d×d` operator to tensor mode `r` of an `m`-site vector.
fn mode_product(op: &DMatrix<C64>, v: &[C64], d: usize, m: usize, r: usize) -> Vec<C64> {
    let inner = d.pow((m - 1 - r) as u32);
    let outer = v.len() / (d * inner);
    let mut out = vec![C64::new(0.0, 0.0); v.len()];
    for o in 0..outer {
        for i in 0..d {
            for j in 0..d {
                let a = op[(i, j)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let src = (o * d + j) * inner;
                let dst = (o * d + i) * inner;
                for q in 0..inner {
                    out[dst + q] += a * v[src + q];
                }
            }
        }
    }
    out
}

/// `poly · v` without forming the dense matrix; `v` lives on the tensor
/// space of `sites`.
pub fn apply(
    poly: &OperatorPolynomial,
    mats: &SiteMatrices,
    sites: &[u32],
    v: &[C64],
) -> Result<Vec<C64>> {
    check_sites(poly, sites)?;
    let d = mats.d;
    let m = sites.len();
    let dim = tensor_dim(d, m)?;
    if v.len() != dim {
        return Err(Error::Shape(format!(
            "vector of length {} on a {dim}-dimensional space",
            v.len()
        )));
    }
    let mut cache: HashMap<(u16, u16), DMatrix<C64>> = HashMap::new();
    let mut out = vec![C64::new(0.0, 0.0); dim];
    for t in poly.terms() {
        let mut w = v.to_vec();
        for f in t.monomial.factors() {
            let r = sites.binary_search(&f.site).expect("checked above");
            let op = cache
                .entry((f.x, f.p))
                .or_insert_with(|| mats.monomial(f.x, f.p));
            w = mode_product(op, &w, d, m, r);
        }
        for (o, wi) in out.iter_mut().zip(w) {
            *o += t.coefficient * wi;
        }
    }
    Ok(out)
}

/// States between which commutator matrix elements are probed.
#[derive(Clone, Debug, PartialEq)]
pub enum Probe {
    /// Every pair of safe basis states.
    SafeBasis,
    /// `count` seeded random unit vectors on the safe subspace.
    Random { count: usize, seed: u64 },
    /// Explicit vectors over the tensor space of the operator's support.
    Vectors(Vec<Vec<C64>>),
}

impl Default for Probe {
    fn default() -> Self {
        Probe::Random { count: 3, seed: 42 }
    }
}

fn probe_vectors(probe: &Probe, dim: usize, safe: &[usize]) -> Result<Vec<Vec<C64>>> {
    match probe {
        Probe::SafeBasis => Ok(safe
            .iter()
            .map(|&k| {
                let mut v = vec![C64::new(0.0, 0.0); dim];
                v[k] = C64::new(1.0, 0.0);
                v
            })
            .collect()),
        Probe::Random { count, seed } => {
            if *count == 0 {
                return Err(Error::invalid("probe", "need at least one probe vector"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok((0..*count)
                .map(|_| {
                    let mut v = vec![C64::new(0.0, 0.0); dim];
                    for &k in safe {
                        v[k] = C64::new(
                            StandardNormal.sample(&mut rng),
                            StandardNormal.sample(&mut rng),
                        );
                    }
                    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    v.iter_mut().for_each(|z| *z /= norm);
                    v
                })
                .collect())
        }
        Probe::Vectors(vs) => {
            let mut allowed = vec![false; dim];
            for &k in safe {
                allowed[k] = true;
            }
            for v in vs {
                if v.len() != dim {
                    return Err(Error::Shape(format!(
                        "probe of length {} on a {dim}-dimensional space",
                        v.len()
                    )));
                }
                if v.iter()
                    .zip(&allowed)
                    .any(|(z, ok)| !ok && *z != C64::new(0.0, 0.0))
                {
                    return Err(Error::invalid(
                        "probe",
                        "probe state leaves the safe subspace",
                    ));
                }
            }
            if vs.is_empty() {
                return Err(Error::invalid("probe", "need at least one probe vector"));
            }
            Ok(vs.clone())
        }
    }
}

/// Largest `|⟨u|[X̂, P]|v⟩|` over probe pairs, for each `N`, as a log-log series.
pub fn commutator_scaling(
    poly: &OperatorPolynomial,
    d: usize,
    n_list: &[u64],
    probe: &Probe,
) -> Result<ScalingSeries> {
    if n_list.is_empty() {
        return Err(Error::invalid("N list", "empty"));
    }
    let mats = build_site_matrices(d)?;
    let sites: Vec<u32> = poly.support().into_iter().collect();
    let dim = tensor_dim(d, sites.len())?;
    let top = safe_level(d, poly.degree()).ok_or_else(|| {
        Error::invalid(
            "probe",
            format!("degree {} leaves no safe levels at d = {d}", poly.degree()),
        )
    })?;
    let safe = safe_indices(d, sites.len(), top);
    let probes = probe_vectors(probe, dim, &safe)?;

    let points = n_list
        .par_iter()
        .map(|&n| -> Result<SeriesPoint> {
            let q = commutator_com(ComOperator::new(n)?, poly)?;
            let mut best: f64 = 0.0;
            for v in &probes {
                let w = apply(&q, &mats, &sites, v)?;
                for u in &probes {
                    let z: C64 = u.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                    best = best.max(z.norm());
                }
            }
            Ok(SeriesPoint::new(n as f64, best))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingSeries::new(points, Axis::LogLog))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::parse_operator;
    use approx::assert_abs_diff_eq;

    fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
        (a - b).iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    #[test]
    fn two_level_matrices() {
        let m = build_site_matrices(2).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(m.x[(0, 1)].re, r, epsilon = 1e-15);
        assert_abs_diff_eq!(m.x[(1, 0)].re, r, epsilon = 1e-15);
        assert_eq!(m.x[(0, 0)], C64::new(0.0, 0.0));
        // p = (a − a†)/(i√2): p01 = −i/√2, p10 = +i/√2
        assert_abs_diff_eq!(
            (m.p[(0, 1)] - C64::new(0.0, -r)).norm(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            (m.p[(1, 0)] - C64::new(0.0, r)).norm(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn hermitian_for_all_truncations() {
        for d in 2..=64 {
            let m = build_site_matrices(d).unwrap();
            assert!(max_diff(&m.x, &m.x.adjoint()) < 1e-12);
            assert!(max_diff(&m.p, &m.p.adjoint()) < 1e-12);
        }
        assert!(build_site_matrices(1).is_err());
        assert!(build_site_matrices(65).is_err());
    }

    #[test]
    fn canonical_relation_below_truncation() {
        let m = build_site_matrices(3).unwrap();
        let comm = &m.x * &m.p - &m.p * &m.x;
        assert_abs_diff_eq!(
            (comm[(0, 0)] - C64::new(0.0, 1.0)).norm(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            (comm[(1, 1)] - C64::new(0.0, 1.0)).norm(),
            0.0,
            epsilon = 1e-12
        );
        // top level carries the defect
        assert!((comm[(2, 2)] - C64::new(0.0, 1.0)).norm() > 0.5);
    }

    #[test]
    fn realize_single_and_product() {
        let m = build_site_matrices(2).unwrap();
        let x1 = realize(&parse_operator("x1").unwrap(), &m).unwrap();
        assert!(max_diff(&x1, &m.x) < 1e-15);
        let xp = realize(&parse_operator("x1*p2").unwrap(), &m).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        // (x ⊗ p)_{(i,k),(j,l)} = x_ij p_kl with x = r·σx, p = r·σy
        let mut expected = DMatrix::<C64>::zeros(4, 4);
        expected[(0, 3)] = C64::new(0.0, -0.5);
        expected[(1, 2)] = C64::new(0.0, 0.5);
        expected[(2, 1)] = C64::new(0.0, -0.5);
        expected[(3, 0)] = C64::new(0.0, 0.5);
        assert_abs_diff_eq!(r * r, 0.5, epsilon = 1e-15);
        assert!(max_diff(&xp, &expected) < 1e-15);
    }

    #[test]
    fn normal_ordered_px_matches_product_on_safe_levels() {
        let m = build_site_matrices(8).unwrap();
        let r = realize(&parse_operator("p1*x1").unwrap(), &m).unwrap();
        let direct = &m.p * &m.x;
        for col in 0..=5 {
            for row in 0..8 {
                assert!((r[(row, col)] - direct[(row, col)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_agrees_with_dense_realization() {
        let m = build_site_matrices(4).unwrap();
        let poly = parse_operator("x1^2*p3 + (0.5-1i)*p1*x2 - 2*p2^2").unwrap();
        let sites = [1, 2, 3];
        let dense = realize_on(&poly, &m, &sites).unwrap();
        let v: Vec<C64> = (0..64)
            .map(|k| C64::new((k as f64).sin(), (k as f64).cos()))
            .collect();
        let w = apply(&poly, &m, &sites, &v).unwrap();
        let wd = &dense * nalgebra::DVector::from_vec(v);
        for (a, b) in w.iter().zip(wd.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn capacity_limits() {
        let m = build_site_matrices(17).unwrap();
        let poly = parse_operator("x1*x2*x3").unwrap();
        assert!(matches!(realize(&poly, &m), Err(Error::Capacity { .. })));
    }

    #[test]
    fn scaling_halves_with_doubled_n() {
        let poly = parse_operator("p1^2").unwrap();
        let s = commutator_scaling(&poly, 8, &[10, 20], &Probe::default()).unwrap();
        let p = s.points();
        assert!(((p[0].value / p[1].value) - 2.0).abs() < 1e-12 * 2.0);
    }

    #[test]
    fn commuting_operator_gives_exact_zero() {
        let poly = parse_operator("x1").unwrap();
        let s = commutator_scaling(&poly, 8, &[8, 16, 32], &Probe::SafeBasis).unwrap();
        assert!(s.is_exact_zero());
        assert!(s.slope().is_none());
    }

    #[test]
    fn scaling_errors() {
        let poly = parse_operator("p1^2").unwrap();
        assert!(commutator_scaling(&poly, 8, &[], &Probe::default()).is_err());
        assert!(
            commutator_scaling(&parse_operator("p3").unwrap(), 8, &[2], &Probe::default()).is_err()
        );
        // all of level 7 is unsafe for a degree-2 operator at d = 8
        let mut bad = vec![C64::new(0.0, 0.0); 8];
        bad[7] = C64::new(1.0, 0.0);
        assert!(commutator_scaling(&poly, 8, &[4], &Probe::Vectors(vec![bad])).is_err());
        assert!(
            commutator_scaling(&parse_operator("p1^8").unwrap(), 8, &[4], &Probe::default())
                .is_err()
        );
    }
}
