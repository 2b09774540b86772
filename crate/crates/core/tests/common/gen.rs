//! Seeded generators for states, operator polynomials and expression text.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use supersel::branch::{Branch, BranchState, SiteState};
use supersel::operator::{Monomial, OperatorPolynomial, SiteFactor};
use supersel::C64;

pub fn gaussian(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

pub fn random_site(rng: &mut ChaCha8Rng, d: usize) -> SiteState {
    SiteState::normalized((0..d).map(|_| gaussian(rng)).collect()).unwrap()
}

/// A normalized state with `branches` branches on the given site dimensions.
pub fn random_state(rng: &mut ChaCha8Rng, dims: &[usize], branches: usize) -> BranchState {
    let bs = (0..branches)
        .map(|_| {
            Branch::new(
                gaussian(rng),
                dims.iter().map(|&d| random_site(rng, d)).collect(),
            )
        })
        .collect();
    BranchState::new(bs).unwrap().normalize().unwrap()
}

/// A state with site dims in `2..=max_d` on `1..=max_sites` sites and `1..=max_branches` branches.
pub fn random_small_state(
    rng: &mut ChaCha8Rng,
    max_sites: usize,
    max_d: usize,
    max_branches: usize,
) -> BranchState {
    let n = rng.random_range(1..=max_sites);
    let dims: Vec<usize> = (0..n).map(|_| rng.random_range(2..=max_d)).collect();
    let b = rng.random_range(1..=max_branches);
    random_state(rng, &dims, b)
}

fn monomial(factors: Vec<SiteFactor>) -> Monomial {
    Monomial::new(factors).expect("distinct sites")
}

/// `Σ_r Σ_k C_rk(x) p_r^k + C_0(x)` on `m` sites with momentum degree exactly `n`.
/// Each `C` is a short random polynomial in the support positions.
pub fn random_momentum_polynomial(rng: &mut ChaCha8Rng, m: usize, n: u16) -> OperatorPolynomial {
    let mut pool: Vec<u32> = (1..=5).collect();
    let mut support = Vec::new();
    for _ in 0..m {
        let i = rng.random_range(0..pool.len());
        support.push(pool.swap_remove(i));
    }
    support.sort_unstable();
    let position_part = |rng: &mut ChaCha8Rng| -> Vec<SiteFactor> {
        support
            .iter()
            .filter_map(|&s| {
                let x = rng.random_range(0..=2u16);
                (x > 0).then_some(SiteFactor { site: s, x, p: 0 })
            })
            .collect()
    };
    let mut poly = OperatorPolynomial::zero();
    let top = *support.choose(rng).unwrap();
    for &r in &support {
        for k in 1..=n {
            if !(r == top && k == n) && rng.random_bool(0.5) {
                continue;
            }
            for _ in 0..rng.random_range(1..=2) {
                let mut factors = position_part(rng);
                match factors.iter_mut().find(|f| f.site == r) {
                    Some(f) => f.p = k,
                    None => factors.push(SiteFactor {
                        site: r,
                        x: 0,
                        p: k,
                    }),
                }
                factors.sort_by_key(|f| f.site);
                poly.add_term(gaussian(rng), monomial(factors));
            }
        }
    }
    if rng.random_bool(0.5) {
        poly.add_term(gaussian(rng), monomial(position_part(rng)));
    }
    poly
}

fn coefficient_text(rng: &mut ChaCha8Rng) -> String {
    let num = |rng: &mut ChaCha8Rng| -> String {
        match rng.random_range(0..4) {
            0 => format!("{}", rng.random_range(1..20)),
            1 => format!("{:.3}", rng.random_range(0.001..10.0)),
            2 => format!("{}e-{}", rng.random_range(1..9), rng.random_range(1..4)),
            _ => format!("0.{}", rng.random_range(1..999)),
        }
    };
    match rng.random_range(0..5) {
        0 => String::new(),
        1 => format!("{}i", num(rng)),
        2 => {
            let sign = if rng.random_bool(0.5) { "+" } else { "-" };
            format!("({}{sign}{}i)", num(rng), num(rng))
        }
        _ => num(rng),
    }
}

/// A random expression in the operator grammar, with optional `*`,
/// spacing, repeated factors and out-of-order sites.
pub fn random_expression(rng: &mut ChaCha8Rng) -> String {
    let terms = rng.random_range(1..=4);
    let mut s = String::new();
    for t in 0..terms {
        let sign = if rng.random_bool(0.3) { "-" } else { "+" };
        if t > 0 {
            s.push_str(&format!(" {sign} "));
        } else if sign == "-" {
            s.push('-');
        }
        let coeff = coefficient_text(rng);
        let factors = rng.random_range(if coeff.is_empty() { 1 } else { 0 }..=3);
        let mut parts = Vec::new();
        if !coeff.is_empty() {
            parts.push(coeff);
        }
        for _ in 0..factors {
            let kind = if rng.random_bool(0.5) { 'x' } else { 'p' };
            let site = rng.random_range(1..=4);
            let e = rng.random_range(1..=3);
            parts.push(if e == 1 {
                format!("{kind}{site}")
            } else {
                format!("{kind}{site}^{e}")
            });
        }
        for (i, part) in parts.iter().enumerate() {
            if i > 0 {
                s.push_str(if rng.random_bool(0.5) { "*" } else { " " });
            }
            s.push_str(part);
        }
    }
    s
}
