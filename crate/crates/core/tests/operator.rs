mod common;

use common::gen::{gaussian, random_expression, random_momentum_polynomial};
use common::oracle::{apply_words, com_commutator_words, safe_indices};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use supersel::operator::{
    apply, build_site_matrices, commutator_com, commutator_scaling, parse_operator, realize,
    safe_level, term_count_bound, ComOperator, OperatorPolynomial, ParseErrorKind, Probe,
};
use supersel::C64;

fn random_safe_vector(rng: &mut ChaCha8Rng, d: usize, m: usize, level: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); d.pow(m as u32)];
    for i in safe_indices(d, m, level) {
        v[i] = gaussian(rng);
    }
    v
}

fn max_diff_on(a: &[C64], b: &[C64], idx: &[usize]) -> f64 {
    idx.iter()
        .map(|&i| (a[i] - b[i]).norm())
        .fold(0.0, f64::max)
}

#[test]
fn products_of_letters_normal_order_soundly() {
    let d = 16;
    let mats = build_site_matrices(d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..200 {
        let len = rng.random_range(1..=6);
        let word: Vec<(bool, u32)> = (0..len)
            .map(|_| (rng.random_bool(0.5), rng.random_range(1..=2)))
            .collect();
        let mut poly = OperatorPolynomial::constant(C64::new(1.0, 0.0));
        for &(is_p, s) in &word {
            let letter = if is_p {
                OperatorPolynomial::p(s)
            } else {
                OperatorPolynomial::x(s)
            };
            poly = &poly * &letter;
        }
        let sites = [1u32, 2];
        let level = d - 1 - len;
        let v = random_safe_vector(&mut rng, d, 2, level);
        // The word acts right to left on v.
        let mut expected = v.clone();
        for &(is_p, s) in word.iter().rev() {
            let letter = if is_p {
                OperatorPolynomial::p(s)
            } else {
                OperatorPolynomial::x(s)
            };
            expected = apply_words(&letter, d, &sites, &expected);
        }
        let got = apply(&poly, &mats, &sites, &v).unwrap();
        let idx = safe_indices(d, 2, level);
        assert!(
            max_diff_on(&got, &expected, &idx) < 1e-9,
            "{word:?} -> {poly}"
        );
    }
}

#[test]
fn symbolic_commutators_match_matrix_words() {
    let d = 16;
    let mats = build_site_matrices(d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..20 {
        let m = rng.random_range(1..=3);
        let n = rng.random_range(1..=4);
        let poly = random_momentum_polynomial(&mut rng, m, n);
        let sites: Vec<u32> = poly.support().into_iter().collect();
        let big_n = rng.random_range(8..=64);
        let q = commutator_com(ComOperator::new(big_n).unwrap(), &poly).unwrap();
        let level = safe_level(d, poly.degree()).unwrap();
        let idx = safe_indices(d, sites.len(), level);
        let v = random_safe_vector(&mut rng, d, sites.len(), level);
        let got = apply(&q, &mats, &sites, &v).unwrap();
        let expected = com_commutator_words(&poly, big_n, d, &sites, &v);
        let scale = expected.iter().map(|z| z.norm()).fold(1.0, f64::max);
        assert!(max_diff_on(&got, &expected, &idx) / scale < 1e-10, "{poly}");
    }
}

#[test]
fn apply_agrees_with_dense_realization() {
    let d = 6;
    let mats = build_site_matrices(d).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let poly = random_momentum_polynomial(&mut rng, 2, 2);
        let sites: Vec<u32> = poly.support().into_iter().collect();
        let dense = realize(&poly, &mats).unwrap();
        let v: Vec<C64> = (0..dense.ncols()).map(|_| gaussian(&mut rng)).collect();
        let w = apply(&poly, &mats, &sites, &v).unwrap();
        let dv = &dense * nalgebra::DVector::from_vec(v);
        let diff = w
            .iter()
            .zip(dv.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }
}

#[test]
fn counting_bound_on_ten_thousand_polynomials() {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    for case in 0..10_000 {
        let m = rng.random_range(1..=3);
        let n = rng.random_range(1..=4);
        let poly = random_momentum_polynomial(&mut rng, m, n);
        let count = term_count_bound(&poly);
        assert_eq!(
            count.bound,
            poly.support().len() * n as usize,
            "case {case}: {poly}"
        );
        assert!(poly.support().len() <= m);
        assert!(count.within_bound(), "case {case}: {poly} gives {count:?}");
    }
}

#[test]
fn commutator_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let com = ComOperator::new(12).unwrap();
    for _ in 0..100 {
        let a = random_momentum_polynomial(&mut rng, 2, 3);
        let b = random_momentum_polynomial(&mut rng, 3, 2);
        let (ca, cb) = (gaussian(&mut rng), gaussian(&mut rng));
        let lhs = commutator_com(com, &(&a.scale(ca) + &b.scale(cb))).unwrap();
        let rhs = &commutator_com(com, &a).unwrap().scale(ca)
            + &commutator_com(com, &b).unwrap().scale(cb);
        let diff = &lhs - &rhs;
        assert!(diff.terms().all(|t| t.coefficient.norm() < 1e-12), "{diff}");
    }
}

#[test]
fn scaling_slope_is_minus_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n_list: Vec<u64> = (3..=10).map(|k| 1u64 << k).collect();
    for _ in 0..5 {
        let poly = random_momentum_polynomial(&mut rng, 2, 3);
        let s = commutator_scaling(&poly, 16, &n_list, &Probe::default()).unwrap();
        assert!((s.slope().unwrap() + 1.0).abs() < 1e-6);
    }
}

#[test]
fn parser_round_trips_random_expressions() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for _ in 0..500 {
        let text = random_expression(&mut rng);
        let first = parse_operator(&text).unwrap_or_else(|e| panic!("{text:?}: {e}"));
        let printed = first.to_string();
        let second = parse_operator(&printed).unwrap_or_else(|e| panic!("{printed:?}: {e}"));
        assert_eq!(first, second, "{text:?} printed as {printed:?}");
        assert_eq!(second.to_string(), printed);
    }
}

#[test]
fn syntax_errors_carry_offsets() {
    let cases: &[(&str, usize, ParseErrorKind)] = &[
        ("", 0, ParseErrorKind::EmptyExpression),
        ("x1 +", 4, ParseErrorKind::UnexpectedEnd),
        ("x1 $ p2", 3, ParseErrorKind::UnexpectedChar('$')),
        ("x0", 1, ParseErrorKind::ZeroIndex),
        ("x", 1, ParseErrorKind::ExpectedIndex),
        ("p2^", 3, ParseErrorKind::ExpectedExponent),
        ("x1^17", 3, ParseErrorKind::ExponentOverflow(17)),
        ("(1+2i", 5, ParseErrorKind::UnclosedParen),
    ];
    for (text, offset, kind) in cases {
        let e = parse_operator(text).unwrap_err();
        assert_eq!((e.offset, &e.kind), (*offset, kind), "{text:?}: {e}");
        assert!(e.to_string().contains(&format!("at byte {offset}")));
    }
}
