mod common;

use proptest::prelude::*;
use wpsd_core::algebra::{
    cyclic_group, left_regular_action, symmetric_group, validate_action, validate_semigroup, CyclicInvolution,
    StarSemigroup,
};
use wpsd_core::dilation::{
    bound_constant, build_kolmogorov, build_representation, reversed_pivot_rule, unitary_equivalence,
    verify_linearisation, BoundForm, BoundOptions, KolmogorovOptions,
};
use wpsd_core::kernels::{
    random_block_psd_kernel, random_hermitian_kernel, strong_positivity, weak_positivity, Kernel, PositivityMethod,
    PositivityStatus, WeakPositivityOptions, Witness,
};
use wpsd_core::lifts::{
    lift_operator_kernel, lift_semigroup_map, random_hilbert_operator_kernel, random_positive_semigroup_map,
    semigroup_lift_action, verify_factorization, OperatorOnH,
};
use wpsd_core::linalg::{self, CMat, CVec, C64};
use wpsd_core::repkernel::{build_rk, rk_representation, verify_reproducing};
use wpsd_core::zspace::{GramTensor, SeminormTag, ZElement};

fn group(choice: usize) -> StarSemigroup {
    match choice {
        0 => symmetric_group(3).unwrap(),
        n => cyclic_group(n, CyclicInvolution::Inverse).unwrap(),
    }
}

fn kernel_defect(a: &Kernel, b: &Kernel) -> f64 {
    a.entries().iter().zip(b.entries()).map(|(x, y)| x.max_abs_diff(y)).fold(0.0, f64::max)
}

fn arb_c() -> impl Strategy<Value = C64> {
    (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn diag(v: &[f64]) -> CMat {
    CMat::from_fn(v.len(), v.len(), |i, j| if i == j { C64::new(v[i], 0.0) } else { C64::new(0.0, 0.0) })
}

/// Hermitian `u diag(spec) u*` with a random unitary `u`; `imag` scales the imaginary parts of `u`.
fn hermitian_with_spectrum(entries: &[C64], spec: &[f64], imag: f64) -> CMat {
    let n = spec.len();
    let z = CMat::from_fn(n, n, |i, j| {
        let e = entries[i * n + j];
        C64::new(e.re, imag * e.im)
    });
    let u = z.qr().q();
    &u * diag(spec) * u.adjoint()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigh_diagonalises(
        n in 1usize..9,
        entries in prop::collection::vec(arb_c(), 64),
        spec in prop::collection::vec(-3i32..4, 8),
        imag in prop_oneof![Just(1.0), Just(1e-4), Just(0.0)],
    ) {
        // integer spectra force repeated eigenvalues
        let spec: Vec<f64> = spec[..n].iter().map(|&x| x as f64).collect();
        let h = hermitian_with_spectrum(&entries, &spec, imag);
        let (vals, vecs) = linalg::eigh(&h);
        prop_assert!(linalg::max_abs_diff(&(vecs.adjoint() * &vecs), &CMat::identity(n, n)) <= 1e-12);
        prop_assert!(linalg::max_abs_diff(&(&vecs * diag(&vals) * vecs.adjoint()), &h) <= 1e-12 * (1.0 + linalg::max_abs(&h)));
        let mut sorted = spec.clone();
        sorted.sort_by(f64::total_cmp);
        for (a, b) in vals.iter().zip(&sorted) {
            prop_assert!((a - b).abs() <= 1e-12 * 4.0, "{vals:?} vs {sorted:?}");
        }
    }

    #[test]
    fn pinv_satisfies_penrose(
        rows in 1usize..13,
        cols in 1usize..7,
        rank in 0usize..7,
        entries in prop::collection::vec(arb_c(), 12 * 6 * 2),
    ) {
        let rank = rank.min(rows).min(cols);
        let l = CMat::from_fn(rows, rank, |i, j| entries[i * 6 + j]);
        let r = CMat::from_fn(rank, cols, |i, j| entries[72 + i * 6 + j]);
        let a = l * r;
        let x = linalg::pinv(&a, 1e-12);
        let tol = 1e-10 * (1.0 + linalg::max_abs(&a)) * (1.0 + linalg::max_abs(&x));
        let axa = linalg::max_abs_diff(&(&a * &x * &a), &a);
        prop_assert!(axa <= tol, "axa {axa:e} tol {tol:e} sv {:?}", linalg::singular_values(&a));
        prop_assert!(linalg::max_abs_diff(&(&x * &a * &x), &x) <= tol);
        prop_assert!(linalg::max_abs(&((&a * &x) - (&a * &x).adjoint())) <= tol);
        prop_assert!(linalg::max_abs(&((&x * &a) - (&x * &a).adjoint())) <= tol);
        prop_assert_eq!(linalg::rank(&a, 1e-9), rank);
    }

    #[test]
    fn null_vectors_pair_to_zero(
        f in prop::collection::vec(arb_c(), 4 * 4),
        u in prop::collection::vec(arb_c(), 5),
        v in prop::collection::vec(arb_c(), 5),
        tag_tr in any::<bool>(),
    ) {
        // F_0..F_3 are 2 x 2 blocks; F_4 is chosen so that sum_i u_i F_i = 0
        prop_assume!(u[4].norm() > 0.1);
        let mut blocks: Vec<CMat> = (0..4).map(|i| CMat::from_row_slice(2, 2, &f[4 * i..4 * i + 4])).collect();
        let mut acc = CMat::zeros(2, 2);
        for (i, b) in blocks.iter().enumerate() {
            acc += b * u[i];
        }
        blocks.push(acc * (-C64::new(1.0, 0.0) / u[4]));
        let g = GramTensor::from_fn(5, 2, |i, j| ZElement(blocks[i].adjoint() * &blocks[j]));
        let (u, v) = (CVec::from_vec(u), CVec::from_vec(v));
        let tag = if tag_tr { SeminormTag::TraceNorm } else { SeminormTag::OperatorNorm };
        let uu = g.pair(&u, &u).unwrap().seminorm(tag);
        prop_assert!(uu <= 1e-12 * (1.0 + g.pair(&v, &v).unwrap().seminorm(tag)) * 100.0);
        let check = g.schwarz_check(&u, &v, tag, 1e-12).unwrap();
        prop_assert!(check.lhs <= 1e-6, "{check:?}");
    }

    #[test]
    fn regular_actions_are_valid(choice in 0usize..9) {
        let s = group(choice);
        prop_assert!(validate_semigroup(&s).is_empty());
        prop_assert!(validate_action(&s, &left_regular_action(&s), s.size()).unwrap().is_empty());
    }

    #[test]
    fn non_hermitian_kernels_have_witnesses(m in 2usize..5, d in 1usize..3, seed in any::<u64>(), x in 0usize..4, y in 0usize..4) {
        let k = random_hermitian_kernel(m, d, seed);
        let (x, y) = (x % m, y % m);
        let mut table = k.entries().to_vec();
        table[x * m + y] = &table[x * m + y] + &ZElement::unit(d, 0, d - 1).scale(C64::new(0.5, 0.25));
        let k = Kernel::new(*k.space(), m, table).unwrap();
        prop_assume!(!k.is_hermitian(1e-9));
        let v = weak_positivity(&k, &WeakPositivityOptions { restarts: 4, ..Default::default() });
        prop_assert_eq!(v.status, PositivityStatus::CertifiedNotPositive);
        let w = v.witness.unwrap();
        prop_assert!(w.verify(&k, 1e-9 / 2.0));
    }

    #[test]
    fn witnesses_re_verify(m in 2usize..5, d in 1usize..4, seed in any::<u64>()) {
        let k = random_hermitian_kernel(m, d, seed);
        let tol = 1e-9;
        let v = weak_positivity(&k, &WeakPositivityOptions { restarts: 16, tol, ..Default::default() });
        if v.status == PositivityStatus::CertifiedNotPositive {
            let w = v.witness.unwrap();
            let again = Witness::from_probe(&k, w.t.clone(), w.h.clone());
            prop_assert!(again.value < -tol / 2.0, "{again:?}");
            prop_assert!((again.value - w.value).abs() <= 1e-9 * (1.0 + w.value.abs()));
        }
    }

    #[test]
    fn block_psd_is_never_refuted(m in 2usize..6, d in 1usize..4, rank in 1usize..4, seed in any::<u64>()) {
        let k = random_block_psd_kernel(m, d, rank, seed);
        prop_assert!(strong_positivity(&k, 1e-9).is_psd);
        let v = weak_positivity(&k, &WeakPositivityOptions { restarts: 8, ..Default::default() });
        prop_assert_ne!(v.status, PositivityStatus::CertifiedNotPositive);
    }

    #[test]
    fn linearisation_round_trip(m in 2usize..6, d in 1usize..4, rank in 1usize..4, seed in any::<u64>()) {
        let k = random_block_psd_kernel(m, d, rank, seed);
        let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        prop_assert!(verify_linearisation(&dec, &k).unwrap() <= 1e-9);
    }

    #[test]
    fn minimal_decompositions_are_equivalent(m in 2usize..6, d in 1usize..3, rank in 1usize..3, seed in any::<u64>()) {
        let k = random_block_psd_kernel(m, d, rank, seed);
        let dec1 = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        let opts = KolmogorovOptions { pivot: reversed_pivot_rule(m), ..Default::default() };
        let dec2 = build_kolmogorov(&k, &opts).unwrap();
        let eq = unitary_equivalence(&dec1, &dec2, 1e-8).unwrap();
        prop_assert!(eq.isometry_defect <= 1e-8 && eq.intertwine_defect <= 1e-8);
    }

    #[test]
    fn representation_laws_and_bounds(choice in 0usize..9, d in 1usize..3, rank in 1usize..3, seed in any::<u64>()) {
        let s = group(choice);
        let (k, a) = common::invariant_instance(&s, d, rank, seed);
        let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        let rep = build_representation(&dec, &k, &s, &a, 1e-9).unwrap();
        prop_assert!(rep.mult_defect <= 1e-9 && rep.star_defect <= 1e-9 && rep.intertwine_defect <= 1e-9, "{rep:?}");
        let alpha = (seed as usize) % s.size();
        let b = bound_constant(&k, &s, &a, alpha, BoundForm::Order, &BoundOptions::default()).unwrap();
        prop_assert!(b.lower <= b.upper + 1e-9, "{b:?}");
        if d == 1 {
            prop_assert!((b.upper - b.lower).abs() <= 1e-6, "{b:?}");
        }
    }

    #[test]
    fn reproducing_space_rebuilds_kernel(choice in 0usize..9, d in 1usize..3, rank in 1usize..3, seed in any::<u64>()) {
        let s = group(choice);
        let (k, a) = common::invariant_instance(&s, d, rank, seed);
        let dec = build_kolmogorov(&k, &KolmogorovOptions::default()).unwrap();
        let rk = build_rk(&dec).unwrap();
        prop_assert!(kernel_defect(&rk.rebuild_kernel(), &k) <= 1e-9);
        prop_assert!(verify_reproducing(&rk, &k) <= 1e-9);
        prop_assert!(rk.isometry_defect() <= 1e-12 * k.scale());
        let rho = rk_representation(&rk, &k, &s, &a, 1e-9).unwrap();
        prop_assert!(rho.conjugation_defect <= 1e-9);
    }

    #[test]
    fn positive_maps_factorize(choice in 0usize..7, q in 1usize..4, d in 1usize..3, seed in any::<u64>()) {
        let s = group(choice);
        let t = random_positive_semigroup_map(&s, q, d, 1, seed).unwrap();
        prop_assert!(t.tensor_identity_defect(&s) <= 1e-9);
        let lifted = lift_semigroup_map(&t, &s).unwrap();
        let action = semigroup_lift_action(&s, q);
        prop_assert!(lifted.kernel.invariance_violations(&s, &action, 1e-9 * lifted.kernel.scale()).unwrap().is_empty());
        let dec = build_kolmogorov(&lifted.kernel, &KolmogorovOptions::default()).unwrap();
        let rep = build_representation(&dec, &lifted.kernel, &s, &action, 1e-9).unwrap();
        prop_assert!(verify_factorization(&t, &s, &dec, &rep).unwrap().max_defect <= 1e-8);
    }

    #[test]
    fn scalar_lift_matches_block_matrix(m in 2usize..4, r in 1usize..4, rank in 1usize..3, shift in 0.0..2.0f64, seed in any::<u64>()) {
        let mut l = random_hilbert_operator_kernel(m, r, rank, seed);
        for x in 0..m {
            let op = &l.operators[x * m + x].matrix - CMat::identity(r, r).scale(shift);
            l.operators[x * m + x] = OperatorOnH::new(op);
        }
        let mut block = CMat::zeros(m * r, m * r);
        for x in 0..m {
            for y in 0..m {
                block.view_mut((x * r, y * r), (r, r)).copy_from(&l.get(x, y).matrix);
            }
        }
        let min_eig = linalg::min_eigenvalue(&linalg::hermitian_part(&block));
        let lifted = lift_operator_kernel(&l.module, &l, 1e-9).unwrap();
        let v = weak_positivity(&lifted.kernel, &WeakPositivityOptions::default());
        prop_assert_eq!(v.method, PositivityMethod::ScalarExact);
        let tol = 1e-9 * lifted.kernel.scale();
        prop_assume!(min_eig.abs() > 10.0 * tol);
        prop_assert_eq!(v.status == PositivityStatus::CertifiedPositive, min_eig > 0.0);
        prop_assert_eq!(strong_positivity(&lifted.kernel, 1e-9).is_psd, min_eig > 0.0);
    }
}
