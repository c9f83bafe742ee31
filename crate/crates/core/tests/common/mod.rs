#![allow(dead_code)]

use std::f64::consts::PI;

use wpsd_core::algebra::{Action, StarSemigroup};
use wpsd_core::kernels::Kernel;
use wpsd_core::lifts::{gns_instance, random_positive_semigroup_map};
use wpsd_core::linalg::C64 as Complex64;
use wpsd_core::zspace::ZElement;

/// Random positive definite function on a group, as a kernel `k(a, b) = phi(a* b)`
/// with its left regular action.
pub fn invariant_instance(s: &StarSemigroup, d: usize, rank: usize, seed: u64) -> (Kernel, Action) {
    let t = random_positive_semigroup_map(s, 1, d, rank, seed).expect("group");
    let phi: Vec<ZElement> = (0..s.size()).map(|u| t.get(u, 0, 0).clone()).collect();
    let g = gns_instance(s, &phi).expect("unital");
    (g.kernel, g.action)
}

/// `phi(u) = (1/n) sum_j c_j w^{ju}`, so `sum_u phi(u) w^{-ju} = c_j`.
pub fn fourier_phi(c: &[f64]) -> Vec<ZElement> {
    let n = c.len();
    (0..n)
        .map(|u| {
            let z: Complex64 = c
                .iter()
                .enumerate()
                .map(|(j, &cj)| Complex64::from_polar(cj / n as f64, 2.0 * PI * (j * u) as f64 / n as f64))
                .sum();
            ZElement::scalar(z)
        })
        .collect()
}

/// `n`-th root of unity `w^j`.
pub fn root(n: usize, j: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64)
}
