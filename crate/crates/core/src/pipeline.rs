//! End-to-end evaluation of one spin model against one bath description.

use alloc::vec::Vec;

use nalgebra::Rotation3;

use crate::bath::{Bath, BroadeningPolicy, PhononMode};
use crate::coupling::{self, CouplingOperator, HermiticityThresholds, MatrixBasis, StevensDerivative};
use crate::dynamics::{self, RateReport};
use crate::error::{Error, Result};
use crate::generators::{self, GeneratorOptions, JumpOperator, Order, SecularBlock, Superoperator};
use crate::linalg::CMatrix;
use crate::spin::{self, Eigensystem, KramersPair, SpinModel};

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingSource {
    Stevens(Vec<StevensDerivative>),
    Matrix { matrix: CMatrix, basis: MatrixBasis },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    pub mode_index: usize,
    pub source: CouplingSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub model: SpinModel,
    pub modes: Vec<PhononMode>,
    pub couplings: Vec<CouplingSpec>,
    pub broadening: BroadeningPolicy,
    pub options: GeneratorOptions,
    /// Rotate model and couplings so the ground-doublet easy axis is `z`.
    pub rotate_to_easy_axis: bool,
    pub hermiticity: HermiticityThresholds,
}

/// A problem with the spin model diagonalized and couplings in its eigenbasis.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub model: SpinModel,
    pub rotation: Rotation3<f64>,
    pub eigensystem: Eigensystem,
    pub couplings: Vec<CouplingOperator>,
    pub blocks: Vec<SecularBlock>,
    pub pair: KramersPair,
    pub modes: Vec<PhononMode>,
    pub broadening: BroadeningPolicy,
    pub options: GeneratorOptions,
}

/// Jump operators and the generator they assemble to.
#[derive(Debug, Clone)]
pub struct OrderTerms {
    pub jumps: Vec<JumpOperator>,
    pub generator: Superoperator,
}

impl Problem {
    pub fn prepare(&self) -> Result<Prepared> {
        let (model, rotation) = if self.rotate_to_easy_axis {
            let aligned = spin::rotate_to_easy_axis(&self.model)?;
            (aligned.model, aligned.rotation)
        } else {
            (self.model.clone(), Rotation3::identity())
        };
        let es = model.eigensystem()?;
        if es.dim() < 2 {
            return Err(Error::InvalidArgument("spin multiplet must have at least two states".into()));
        }
        let pair = es.fundamental_pair().ok_or(Error::InvalidArgument("no fundamental pair".into()))?;
        let j = &model.angular_momentum;
        let rotated = rotation.angle() != 0.0;
        let original_es = if rotated
            && self.couplings.iter().any(|c| matches!(c.source, CouplingSource::Matrix { basis: MatrixBasis::Eigen, .. }))
        {
            Some(self.model.eigensystem()?)
        } else {
            None
        };
        let dmat = if rotated { Some(spin::rotation_operator(j, &rotation)?) } else { None };
        let mut couplings = Vec::with_capacity(self.couplings.len());
        for spec in &self.couplings {
            if !self.modes.iter().any(|m| m.index == spec.mode_index) {
                return Err(Error::InvalidArgument(alloc::format!("coupling refers to unknown mode {}", spec.mode_index)));
            }
            let op = match (&spec.source, &dmat) {
                (CouplingSource::Stevens(terms), None) => {
                    CouplingOperator::from_stevens_derivatives(spec.mode_index, terms, j, &es)?
                }
                (CouplingSource::Stevens(terms), Some(_)) => {
                    let terms = coupling::rotate_derivatives(terms, j, &rotation)?;
                    CouplingOperator::from_stevens_derivatives(spec.mode_index, &terms, j, &es)?
                }
                (CouplingSource::Matrix { matrix, basis }, None) => {
                    CouplingOperator::from_raw_matrix(spec.mode_index, matrix, *basis, &es, self.hermiticity)?
                }
                (CouplingSource::Matrix { matrix, basis }, Some(dm)) => {
                    let mj = match basis {
                        MatrixBasis::Mj => matrix.clone(),
                        MatrixBasis::Eigen => original_es.as_ref().expect("computed above").from_eigenbasis(matrix),
                    };
                    if mj.nrows() != es.dim() || mj.ncols() != es.dim() {
                        return Err(Error::DimensionMismatch { expected: es.dim(), found: mj.nrows() });
                    }
                    let turned = dm * mj * dm.adjoint();
                    let mut op =
                        CouplingOperator::from_raw_matrix(spec.mode_index, &turned, MatrixBasis::Mj, &es, self.hermiticity)?;
                    // Report the deviation of the matrix as supplied.
                    let dev = crate::linalg::hermitian_deviation(matrix);
                    op.symmetrization_deviation = dev;
                    op.needs_notice = dev > self.hermiticity.accept;
                    op
                }
            };
            couplings.push(op);
        }
        let blocks = generators::secular_partition(&es, self.options.secular_tol_cm1);
        Ok(Prepared {
            model,
            rotation,
            eigensystem: es,
            couplings,
            blocks,
            pair,
            modes: self.modes.clone(),
            broadening: self.broadening,
            options: self.options.clone(),
        })
    }
}

impl Prepared {
    pub fn bath(&self, temperature_k: f64) -> Result<Bath> {
        Bath::new(self.modes.clone(), temperature_k, self.broadening)
    }

    pub fn second_order(&self, bath: &Bath) -> Result<OrderTerms> {
        let jumps =
            generators::jump_operators_2(&self.eigensystem, &self.couplings, bath, &self.blocks, &self.options)?;
        let generator = generators::assemble_generator(&jumps, &self.eigensystem, Order::Second, self.options.workers)?;
        Ok(OrderTerms { jumps, generator })
    }

    /// Two-phonon terms alone (not cumulative).
    pub fn fourth_order(&self, bath: &Bath) -> Result<OrderTerms> {
        let jumps =
            generators::jump_operators_4(&self.eigensystem, &self.couplings, bath, &self.blocks, &self.options)?;
        let generator = generators::assemble_generator(&jumps, &self.eigensystem, Order::Fourth, self.options.workers)?;
        Ok(OrderTerms { jumps, generator })
    }

    /// Cumulative terms through fourth order.
    pub fn combine(second: &OrderTerms, fourth: &OrderTerms) -> Result<OrderTerms> {
        let mut jumps = second.jumps.clone();
        jumps.extend(fourth.jumps.iter().cloned());
        Ok(OrderTerms { jumps, generator: second.generator.sum(&fourth.generator)? })
    }

    pub fn report(&self, temperature_k: f64, terms: &OrderTerms) -> Result<RateReport> {
        dynamics::rate_report(temperature_k, &terms.generator, &terms.jumps, &self.eigensystem, &self.pair)
    }

    /// Reports at one temperature for each requested order (fourth is cumulative).
    pub fn evaluate(&self, temperature_k: f64, orders: &[Order]) -> Result<Vec<RateReport>> {
        let bath = self.bath(temperature_k)?;
        let second = self.second_order(&bath)?;
        let mut out = Vec::with_capacity(orders.len());
        let mut cumulative = None;
        for &order in orders {
            match order {
                Order::Second => out.push(self.report(temperature_k, &second)?),
                Order::Fourth => {
                    if cumulative.is_none() {
                        cumulative = Some(Self::combine(&second, &self.fourth_order(&bath)?)?);
                    }
                    out.push(self.report(temperature_k, cumulative.as_ref().expect("set"))?);
                }
            }
        }
        Ok(out)
    }
}
