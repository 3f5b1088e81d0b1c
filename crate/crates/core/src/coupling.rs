//! Linear spin-phonon coupling operators `V^α = ∂H_s/∂q_α`.
//!
//! Couplings are in cm⁻¹ per dimensionless normal-mode displacement and are
//! stored in the eigenbasis of the spin Hamiltonian they were built against.

use alloc::vec::Vec;

use nalgebra::Rotation3;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::spin::{self, AngularMomentum, BasisTag, Eigensystem, StevensTerm};

/// `∂B_l^m/∂q_α` in cm⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StevensDerivative {
    pub l: i32,
    pub m: i32,
    pub value_cm1: f64,
}

/// Basis a raw coupling matrix is given in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixBasis {
    /// `|J, M⟩`, ascending `M`.
    Mj,
    /// Eigenbasis of the spin Hamiltonian.
    Eigen,
}

/// Hermiticity gate for raw matrices: below `accept` the matrix is quietly
/// symmetrized, between `accept` and `reject` it is symmetrized and the
/// deviation is reported, above `reject` it is refused.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiticityThresholds {
    pub accept: f64,
    pub reject: f64,
}

impl Default for HermiticityThresholds {
    fn default() -> Self {
        Self { accept: 1e-8, reject: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOperator {
    pub mode_index: usize,
    matrix: CMatrix,
    basis: BasisTag,
    /// Max |V - V^H| of the supplied matrix (zero for Stevens input).
    pub symmetrization_deviation: f64,
    /// The deviation exceeded the quiet-acceptance threshold.
    pub needs_notice: bool,
}

impl CouplingOperator {
    /// `V^α = Σ (∂B_l^m/∂q_α) O_l^m`, rotated into the eigenbasis.
    pub fn from_stevens_derivatives(
        mode_index: usize,
        terms: &[StevensDerivative],
        j: &AngularMomentum,
        es: &Eigensystem,
    ) -> Result<Self> {
        let v = stevens_matrix(terms, j)?;
        if es.dim() != j.dim() {
            return Err(Error::DimensionMismatch { expected: es.dim(), found: j.dim() });
        }
        Ok(Self {
            mode_index,
            matrix: linalg::hermitian_part(&es.to_eigenbasis(&v)),
            basis: es.tag,
            symmetrization_deviation: 0.0,
            needs_notice: false,
        })
    }

    pub fn from_raw_matrix(
        mode_index: usize,
        matrix: &CMatrix,
        basis: MatrixBasis,
        es: &Eigensystem,
        thresholds: HermiticityThresholds,
    ) -> Result<Self> {
        let d = es.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: matrix.nrows().max(matrix.ncols()) });
        }
        let dev = linalg::hermitian_deviation(matrix);
        if dev > thresholds.reject {
            return Err(Error::NotHermitian { deviation: dev, tolerance: thresholds.reject });
        }
        let sym = linalg::hermitian_part(matrix);
        let in_eigen = match basis {
            MatrixBasis::Mj => linalg::hermitian_part(&es.to_eigenbasis(&sym)),
            MatrixBasis::Eigen => sym,
        };
        Ok(Self {
            mode_index,
            matrix: in_eigen,
            basis: es.tag,
            symmetrization_deviation: dev,
            needs_notice: dev > thresholds.accept,
        })
    }

    /// `V^α` in the spin eigenbasis.
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn basis(&self) -> BasisTag {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

/// `Σ value · O_l^m` in the `|J, M⟩` basis.
pub fn stevens_matrix(terms: &[StevensDerivative], j: &AngularMomentum) -> Result<CMatrix> {
    let d = j.dim();
    let mut v = CMatrix::zeros(d, d);
    for t in terms {
        let op = spin::stevens_operator(t.l, t.m, j)?;
        if t.value_cm1 != 0.0 {
            v += op.scale(t.value_cm1);
        }
    }
    Ok(v)
}

/// Rotates a set of Stevens derivatives with the spin frame.
pub fn rotate_derivatives(
    terms: &[StevensDerivative],
    j: &AngularMomentum,
    rotation: &Rotation3<f64>,
) -> Result<Vec<StevensDerivative>> {
    let as_terms: Vec<StevensTerm> =
        terms.iter().map(|t| StevensTerm::new(t.l, t.m, t.value_cm1)).collect::<Result<_>>()?;
    Ok(spin::rotate_stevens_terms(&as_terms, j, rotation)?
        .into_iter()
        .map(|t| StevensDerivative { l: t.l, m: t.m, value_cm1: t.coefficient_cm1 })
        .collect())
}
