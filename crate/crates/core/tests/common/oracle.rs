//! Brute-force reference implementations: dense tensor vectors, explicit
//! partial traces and word-by-word operator application. Nothing here
//! reuses the library's numerics.

use nalgebra::DMatrix;
use supersel::branch::{Branch, BranchState};
use supersel::operator::OperatorPolynomial;
use supersel::C64;

pub fn kron(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| x * y))
        .collect()
}

/// `c ⊗_j s_j` as a dense vector, first site most significant.
pub fn dense_branch(b: &Branch) -> Vec<C64> {
    let mut v = vec![b.amplitude()];
    for s in b.sites() {
        v = kron(&v, s.amplitudes());
    }
    v
}

pub fn dense_state(state: &BranchState) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); state.site_dims().iter().product()];
    for b in state.branches() {
        for (o, x) in out.iter_mut().zip(dense_branch(b)) {
            *o += x;
        }
    }
    out
}

/// `⟨a|b⟩`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn digits(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for j in (0..dims.len()).rev() {
        out[j] = index % dims[j];
        index /= dims[j];
    }
    out
}

fn compose(digits: &[usize], dims: &[usize]) -> usize {
    digits.iter().zip(dims).fold(0, |acc, (d, n)| acc * n + d)
}

/// `Tr_{traced} |ψ⟩⟨ψ| / ⟨ψ|ψ⟩` by explicit index bookkeeping.
pub fn partial_trace(psi: &[C64], dims: &[usize], keep: &[usize]) -> DMatrix<C64> {
    let kept_dims: Vec<usize> = keep.iter().map(|&j| dims[j]).collect();
    let traced: Vec<usize> = (0..dims.len()).filter(|j| !keep.contains(j)).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&j| dims[j]).collect();
    let kd: usize = kept_dims.iter().product();
    let td: usize = traced_dims.iter().product();
    let mut blocks = vec![vec![C64::new(0.0, 0.0); kd]; td];
    for (i, &a) in psi.iter().enumerate() {
        let dg = digits(i, dims);
        let k: Vec<usize> = keep.iter().map(|&j| dg[j]).collect();
        let t: Vec<usize> = traced.iter().map(|&j| dg[j]).collect();
        blocks[compose(&t, &traced_dims)][compose(&k, &kept_dims)] = a;
    }
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let mut rho = DMatrix::zeros(kd, kd);
    for block in &blocks {
        for i in 0..kd {
            for j in 0..kd {
                rho[(i, j)] += block[i] * block[j].conj() / norm;
            }
        }
    }
    rho
}

pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

/// Position and momentum of a `d`-level oscillator built from the ladder
/// operator: `x = (a + a†)/√2`, `p = i(a† − a)/√2`.
pub fn ladder(d: usize) -> (DMatrix<C64>, DMatrix<C64>) {
    let mut a = DMatrix::<C64>::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    let ad = a.adjoint();
    let r = 1.0 / 2f64.sqrt();
    let x = (&a + &ad) * C64::new(r, 0.0);
    let p = (&ad - &a) * C64::new(0.0, r);
    (x, p)
}

/// Applies a single-site `d×d` matrix to tensor slot `slot` of `v`.
fn apply_site(op: &DMatrix<C64>, v: &[C64], d: usize, m: usize, slot: usize) -> Vec<C64> {
    let dims = vec![d; m];
    let mut out = vec![C64::new(0.0, 0.0); v.len()];
    for (i, &amp) in v.iter().enumerate() {
        if amp == C64::new(0.0, 0.0) {
            continue;
        }
        let mut dg = digits(i, &dims);
        let col = dg[slot];
        for row in 0..d {
            let a = op[(row, col)];
            if a != C64::new(0.0, 0.0) {
                dg[slot] = row;
                out[compose(&dg, &dims)] += a * amp;
            }
        }
    }
    out
}

/// `poly · v` on the tensor space of `sites`, one `x` or `p` letter at a time:
/// each monomial `Π_s x_s^a p_s^b` is applied as the word `x…x p…p` per site.
pub fn apply_words(poly: &OperatorPolynomial, d: usize, sites: &[u32], v: &[C64]) -> Vec<C64> {
    let (x, p) = ladder(d);
    let m = sites.len();
    let mut out = vec![C64::new(0.0, 0.0); v.len()];
    for t in poly.terms() {
        let mut w = v.to_vec();
        for f in t.monomial.factors() {
            let slot = sites
                .iter()
                .position(|&s| s == f.site)
                .expect("site in support");
            for _ in 0..f.p {
                w = apply_site(&p, &w, d, m, slot);
            }
            for _ in 0..f.x {
                w = apply_site(&x, &w, d, m, slot);
            }
        }
        for (o, z) in out.iter_mut().zip(w) {
            *o += t.coefficient * z;
        }
    }
    out
}

/// `(1/N) Σ_{i ∈ sites} (x_i P − P x_i) v` evaluated by matrix words.
pub fn com_commutator_words(
    poly: &OperatorPolynomial,
    n: u64,
    d: usize,
    sites: &[u32],
    v: &[C64],
) -> Vec<C64> {
    let (x, _) = ladder(d);
    let m = sites.len();
    let pv = apply_words(poly, d, sites, v);
    let mut out = vec![C64::new(0.0, 0.0); v.len()];
    for slot in 0..m {
        let xpv = apply_site(&x, &pv, d, m, slot);
        let pxv = apply_words(poly, d, sites, &apply_site(&x, v, d, m, slot));
        for ((o, a), b) in out.iter_mut().zip(xpv).zip(pxv) {
            *o += (a - b) / n as f64;
        }
    }
    out
}

/// Tensor indices whose every digit is at most `max_level`.
pub fn safe_indices(d: usize, m: usize, max_level: usize) -> Vec<usize> {
    (0..d.pow(m as u32))
        .filter(|&i| digits(i, &vec![d; m]).iter().all(|&l| l <= max_level))
        .collect()
}
