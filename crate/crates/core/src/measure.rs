//! Moments of the uniform probability measure on a box.

use crate::poly::{ExponentVector, MonomialBasis};

/// `gamma_alpha` for every monomial of a basis.
#[derive(Debug, Clone)]
pub struct MomentVector {
    pub basis: MonomialBasis,
    pub values: Vec<f64>,
}

impl MomentVector {
    /// `sum_alpha p_alpha gamma_alpha` for a coefficient table indexed by
    /// this basis.
    pub fn pair(&self, coeffs: &[f64]) -> f64 {
        coeffs.iter().zip(&self.values).map(|(a, b)| a * b).sum()
    }
}

/// Moment of `t^a` under the uniform probability measure on `[-c, c]`:
/// `c^a / (a + 1)` for even `a`, exactly zero for odd `a`.
pub fn uniform_moment_1d(a: u32, c: f64) -> f64 {
    if a % 2 == 1 {
        0.0
    } else {
        c.powi(a as i32) / (a as f64 + 1.0)
    }
}

/// Moment of `z^alpha` under the uniform probability measure on the cube
/// `[-c, c]^n`.
pub fn box_moment(alpha: &ExponentVector, halfwidth: f64) -> f64 {
    assert!(halfwidth > 0.0, "halfwidth must be positive");
    alpha
        .exponents()
        .iter()
        .map(|&a| uniform_moment_1d(a, halfwidth))
        .product()
}

/// Same as [`box_moment`] with one halfwidth per coordinate.
pub fn box_moment_aniso(alpha: &ExponentVector, halfwidths: &[f64]) -> f64 {
    assert_eq!(alpha.len(), halfwidths.len());
    alpha
        .exponents()
        .iter()
        .zip(halfwidths)
        .map(|(&a, &c)| uniform_moment_1d(a, c))
        .product()
}

/// Moments of all monomials of degree `<= degree` on `[-c, c]^num_vars`.
pub fn moment_vector(num_vars: usize, degree: u32, halfwidth: f64) -> MomentVector {
    moment_vector_aniso(degree, &vec![halfwidth; num_vars])
}

/// Moments on the box `prod_i [-c_i, c_i]`.
pub fn moment_vector_aniso(degree: u32, halfwidths: &[f64]) -> MomentVector {
    let basis = MonomialBasis::new(halfwidths.len(), degree);
    let values = basis
        .monomials()
        .iter()
        .map(|a| box_moment_aniso(a, halfwidths))
        .collect();
    MomentVector { basis, values }
}
