//! Polynomials in canonical pairs `(x_i, p_i)` with `[x_i, p_j] = i δ_ij`.
//!
//! Every monomial is stored normal-ordered per site, `x_i^a p_i^b`, with
//! sites in increasing order. Sites are 1-based labels, as in the text
//! syntax. Commutators with the center-of-mass operator are evaluated on
//! the support of the polynomial only; the particle number `N` enters as
//! an exact scalar.

mod matrix;
mod parse;

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

pub use matrix::{
    apply, build_site_matrices, commutator_scaling, realize, realize_on, safe_indices, safe_level,
    Probe, SiteMatrices, MAX_REALIZED_DIM,
};
pub use parse::{parse_operator, ParseError, ParseErrorKind, MAX_EXPONENT};

use crate::{Error, Result, C64};

/// `x_site^x p_site^p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteFactor {
    pub site: u32,
    pub x: u16,
    pub p: u16,
}

/// Normal-ordered product of site factors; the empty monomial is the identity.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<SiteFactor>);

impl Monomial {
    pub fn identity() -> Self {
        Monomial(Vec::new())
    }

    /// Builds from factors in any order; repeated sites are rejected, zero exponents dropped.
    pub fn new(mut factors: Vec<SiteFactor>) -> Option<Self> {
        factors.retain(|f| f.x != 0 || f.p != 0);
        factors.sort();
        if factors.windows(2).any(|w| w[0].site == w[1].site) {
            return None;
        }
        Some(Monomial(factors))
    }

    pub fn factors(&self) -> &[SiteFactor] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    pub fn factor(&self, site: u32) -> Option<SiteFactor> {
        self.0
            .binary_search_by_key(&site, |f| f.site)
            .ok()
            .map(|k| self.0[k])
    }

    /// Total exponent `Σ (a + b)`.
    pub fn degree(&self) -> u32 {
        self.0.iter().map(|f| u32::from(f.x) + u32::from(f.p)).sum()
    }

    /// `Σ b`.
    pub fn momentum_degree(&self) -> u32 {
        self.0.iter().map(|f| u32::from(f.p)).sum()
    }

    /// The momentum part alone, `Π p_i^{b_i}`.
    pub fn momentum_part(&self) -> Monomial {
        Monomial(
            self.0
                .iter()
                .filter(|f| f.p > 0)
                .map(|f| SiteFactor { x: 0, ..*f })
                .collect(),
        )
    }

    fn with_factor(&self, f: SiteFactor) -> Monomial {
        let mut v: Vec<SiteFactor> = self
            .0
            .iter()
            .copied()
            .filter(|g| g.site != f.site)
            .collect();
        if f.x != 0 || f.p != 0 {
            v.push(f);
            v.sort();
        }
        Monomial(v)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for sf in &self.0 {
            for (name, e) in [('x', sf.x), ('p', sf.p)] {
                if e == 0 {
                    continue;
                }
                if !first {
                    f.write_str("*")?;
                }
                first = false;
                write!(f, "{name}{}", sf.site)?;
                if e > 1 {
                    write!(f, "^{e}")?;
                }
            }
        }
        Ok(())
    }
}

/// One coefficient-weighted monomial.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorTerm {
    pub coefficient: C64,
    pub monomial: Monomial,
}

/// Sum of normal-ordered terms with like terms merged.
///
/// Iteration order is lexicographic in the factor signature, so printing
/// is deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OperatorPolynomial {
    terms: BTreeMap<Monomial, C64>,
}

impl OperatorPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: C64) -> Self {
        Self::term(c, Monomial::identity())
    }

    pub fn term(c: C64, m: Monomial) -> Self {
        let mut p = Self::zero();
        p.add_term(c, m);
        p
    }

    pub fn x(site: u32) -> Self {
        Self::term(
            C64::new(1.0, 0.0),
            Monomial(vec![SiteFactor { site, x: 1, p: 0 }]),
        )
    }

    pub fn p(site: u32) -> Self {
        Self::term(
            C64::new(1.0, 0.0),
            Monomial(vec![SiteFactor { site, x: 0, p: 1 }]),
        )
    }

    pub fn from_terms(terms: impl IntoIterator<Item = OperatorTerm>) -> Self {
        let mut p = Self::zero();
        for t in terms {
            p.add_term(t.coefficient, t.monomial);
        }
        p
    }

    /// Adds `c·m`, merging with an existing like term and dropping exact zeros.
    pub fn add_term(&mut self, c: C64, m: Monomial) {
        if c == C64::new(0.0, 0.0) {
            return;
        }
        match self.terms.entry(m) {
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if *e.get() == C64::new(0.0, 0.0) {
                    e.remove();
                }
            }
            Entry::Vacant(e) => {
                e.insert(c);
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = OperatorTerm> + '_ {
        self.terms.iter().map(|(m, &c)| OperatorTerm {
            coefficient: c,
            monomial: m.clone(),
        })
    }

    pub fn coefficient(&self, m: &Monomial) -> C64 {
        self.terms.get(m).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sites appearing with a nonzero exponent in some term.
    pub fn support(&self) -> BTreeSet<u32> {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().map(|f| f.site))
            .collect()
    }

    /// Largest total exponent over terms.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Largest momentum exponent `Σ b` over terms.
    pub fn momentum_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(Monomial::momentum_degree)
            .max()
            .unwrap_or(0)
    }

    /// True when every term carries momenta on at most one site, i.e. the
    /// polynomial is a sum of `C(x) p_r^k` pieces.
    pub fn has_single_site_momenta(&self) -> bool {
        self.terms
            .keys()
            .all(|m| m.0.iter().filter(|f| f.p > 0).count() <= 1)
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = Self::zero();
        for (m, &v) in &self.terms {
            out.add_term(v * c, m.clone());
        }
        out
    }

    /// Divides every coefficient by a real scalar.
    pub fn div_real(&self, d: f64) -> Self {
        let mut out = Self::zero();
        for (m, &v) in &self.terms {
            out.add_term(v / d, m.clone());
        }
        out
    }

    /// Right-multiplies by `x_site^e` or `p_site^e`, normal-ordering on the fly.
    pub fn mul_factor(&self, site: u32, momentum: bool, e: u16) -> Self {
        let f = if momentum {
            SiteFactor { site, x: 0, p: e }
        } else {
            SiteFactor { site, x: e, p: 0 }
        };
        let m = Monomial::new(vec![f]).expect("a single factor cannot repeat a site");
        self * &Self::term(C64::new(1.0, 0.0), m)
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * f64::from(n - j) / f64::from(j + 1))
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, j| acc * f64::from(j))
}

/// `(−i)^j`.
fn minus_i_pow(j: u32) -> C64 {
    match j % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, -1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, 1.0),
    }
}

/// `(x^a p^b)(x^c p^d) = Σ_j j! C(b,j) C(c,j) (−i)^j x^{a+c−j} p^{b+d−j}`.
fn site_product(l: (u16, u16), r: (u16, u16)) -> Vec<(C64, u16, u16)> {
    let (a, b) = l;
    let (c, d) = r;
    let top = b.min(c);
    (0..=top)
        .map(|j| {
            let w =
                factorial(j.into()) * binomial(b.into(), j.into()) * binomial(c.into(), j.into());
            (minus_i_pow(j.into()) * w, a + c - j, b + d - j)
        })
        .collect()
}

fn monomial_product(l: &Monomial, r: &Monomial) -> Vec<(C64, Monomial)> {
    let mut acc = vec![(C64::new(1.0, 0.0), l.clone())];
    for rf in &r.0 {
        let lf = l.factor(rf.site).map(|f| (f.x, f.p)).unwrap_or((0, 0));
        let expansion = site_product(lf, (rf.x, rf.p));
        let mut next = Vec::with_capacity(acc.len() * expansion.len());
        for (c, m) in &acc {
            for &(w, x, p) in &expansion {
                next.push((
                    c * w,
                    m.with_factor(SiteFactor {
                        site: rf.site,
                        x,
                        p,
                    }),
                ));
            }
        }
        acc = next;
    }
    acc
}

impl Mul for &OperatorPolynomial {
    type Output = OperatorPolynomial;

    fn mul(self, rhs: &OperatorPolynomial) -> OperatorPolynomial {
        let mut out = OperatorPolynomial::zero();
        for (ml, &cl) in &self.terms {
            for (mr, &cr) in &rhs.terms {
                for (w, m) in monomial_product(ml, mr) {
                    out.add_term(cl * cr * w, m);
                }
            }
        }
        out
    }
}

impl Add for &OperatorPolynomial {
    type Output = OperatorPolynomial;

    fn add(self, rhs: &OperatorPolynomial) -> OperatorPolynomial {
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(c, m.clone());
        }
        out
    }
}

impl Sub for &OperatorPolynomial {
    type Output = OperatorPolynomial;

    fn sub(self, rhs: &OperatorPolynomial) -> OperatorPolynomial {
        let mut out = self.clone();
        for (m, &c) in &rhs.terms {
            out.add_term(-c, m.clone());
        }
        out
    }
}

impl Neg for &OperatorPolynomial {
    type Output = OperatorPolynomial;

    fn neg(self) -> OperatorPolynomial {
        self.scale(C64::new(-1.0, 0.0))
    }
}

/// Formats a real magnitude so that parsing it back yields the same bits.
fn fmt_real(v: f64) -> String {
    format!("{v}")
}

/// Splits a coefficient into a sign and a printable magnitude in the surface grammar.
fn split_coefficient(c: C64) -> (bool, String) {
    if c.im == 0.0 {
        (c.re < 0.0, fmt_real(c.re.abs()))
    } else if c.re == 0.0 {
        (c.im < 0.0, format!("{}i", fmt_real(c.im.abs())))
    } else {
        let sign = if c.im < 0.0 { '-' } else { '+' };
        (
            false,
            format!("({}{sign}{}i)", fmt_real(c.re), fmt_real(c.im.abs())),
        )
    }
}

impl fmt::Display for OperatorPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (k, (m, &c)) in self.terms.iter().enumerate() {
            let (negative, mag) = split_coefficient(c);
            match (k, negative) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            if m.is_identity() {
                f.write_str(&mag)?;
            } else if mag == "1" {
                write!(f, "{m}")?;
            } else {
                write!(f, "{mag}*{m}")?;
            }
        }
        Ok(())
    }
}

/// `[x̂_i, P]`: each `p_i^b` factor contributes `i·b·p_i^{b−1}`; everything else commutes.
pub fn commutator_x(site: u32, poly: &OperatorPolynomial) -> OperatorPolynomial {
    let mut out = OperatorPolynomial::zero();
    for (m, &c) in &poly.terms {
        if let Some(f) = m.factor(site) {
            if f.p > 0 {
                let lowered = m.with_factor(SiteFactor { p: f.p - 1, ..f });
                out.add_term(c * C64::new(0.0, f64::from(f.p)), lowered);
            }
        }
    }
    out
}

/// The center-of-mass coordinate `X̂ = (1/N) Σ_i x̂_i` of `N` particles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComOperator {
    n: u64,
}

impl ComOperator {
    pub fn new(n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("N", "particle count must be at least 1"));
        }
        Ok(ComOperator { n })
    }

    pub fn particles(&self) -> u64 {
        self.n
    }
}

/// `[X̂, P] = (1/N) Σ_{i ∈ support(P)} [x̂_i, P]`; off-support sites contribute nothing.
pub fn commutator_com(com: ComOperator, poly: &OperatorPolynomial) -> Result<OperatorPolynomial> {
    let support = poly.support();
    if let Some(&max) = support.last() {
        if u64::from(max) > com.n {
            return Err(Error::invalid(
                "N",
                format!("operator touches site {max} but N = {}", com.n),
            ));
        }
    }
    Ok(sum_site_commutators(poly).div_real(com.n as f64))
}

/// `Σ_{i ∈ support(P)} [x̂_i, P]` before the `1/N` prefactor.
pub fn sum_site_commutators(poly: &OperatorPolynomial) -> OperatorPolynomial {
    let mut acc = OperatorPolynomial::zero();
    for site in poly.support() {
        acc = &acc + &commutator_x(site, poly);
    }
    acc
}

/// Counted additives of `Σ_i [x̂_i, P]` against the `m·n` bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TermCount {
    /// Distinct momentum monomials in the commutator; the position
    /// dependence of each is one polynomial coefficient `C(x)`.
    pub actual: usize,
    /// `m·n`: support size times momentum degree.
    pub bound: usize,
}

impl TermCount {
    pub fn within_bound(&self) -> bool {
        self.actual <= self.bound
    }
}

/// Counts the additives of `Σ_i [x̂_i, P]`, grouping terms that differ only
/// in their position factors.
///
/// The bound holds for every sum of `C(x) p_r^k` pieces (see
/// [`OperatorPolynomial::has_single_site_momenta`]). Mixed momentum
/// monomials such as `p1^2*p2` are counted the same way but can exceed it.
pub fn term_count_bound(poly: &OperatorPolynomial) -> TermCount {
    let q = sum_site_commutators(poly);
    let groups: BTreeSet<Monomial> = q.terms.keys().map(Monomial::momentum_part).collect();
    TermCount {
        actual: groups.len(),
        bound: poly.support().len() * poly.momentum_degree() as usize,
    }
}
