//! Angular-momentum multiplets, crystal-field (Stevens) operators, Zeeman
//! term, Hamiltonian eigensystem and quantization-frame handling.
//!
//! Stevens operators follow the extended operator-equivalent convention with
//! tesseral combinations for ±m:
//!
//! ```text
//! O_l^0  = F_l0(Jz)
//! O_l^m  = 1/4  {F_lm(Jz), J+^m + J-^m}        (m > 0)
//! O_l^-m = 1/4i {F_lm(Jz), J+^m - J-^m}        (m > 0)
//! ```
//!
//! with the polynomials `F_lm` listed in `stevens_polynomial`. For `m = l`
//! this reduces to `(J+^l + J-^l)/2`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix3, Rotation3, SymmetricEigen, Unit, Vector3};
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::constants::BOHR_MAGNETON_CM1_PER_T;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, I, ONE, ZERO};

/// Multiplet of total angular momentum `J = two_j / 2` with its spin matrices
/// in the `|J, M⟩` basis, ordered `M = -J, -J+1, …, +J`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularMomentum {
    two_j: u32,
    pub jx: CMatrix,
    pub jy: CMatrix,
    pub jz: CMatrix,
    pub jplus: CMatrix,
    pub jminus: CMatrix,
}

impl AngularMomentum {
    pub fn new(two_j: u32) -> Result<Self> {
        if two_j == 0 {
            return Err(Error::InvalidAngularMomentum(two_j));
        }
        let d = two_j as usize + 1;
        let j = two_j as f64 / 2.0;
        let mut jplus = CMatrix::zeros(d, d);
        let mut jz = CMatrix::zeros(d, d);
        for i in 0..d {
            let m = -j + i as f64;
            jz[(i, i)] = Complex64::new(m, 0.0);
            if i + 1 < d {
                jplus[(i + 1, i)] = Complex64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
            }
        }
        let jminus = jplus.adjoint();
        let jx = (&jplus + &jminus).scale(0.5);
        let jy = (&jplus - &jminus) * Complex64::new(0.0, -0.5);
        Ok(Self { two_j, jx, jy, jz, jplus, jminus })
    }

    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    /// `J(J+1)`.
    pub fn j_squared(&self) -> f64 {
        let j = self.j();
        j * (j + 1.0)
    }

    pub fn is_half_integer(&self) -> bool {
        self.two_j % 2 == 1
    }

    /// `M` value of basis state `index`.
    pub fn m_value(&self, index: usize) -> f64 {
        -self.j() + index as f64
    }

    /// `n·J` for a (not necessarily unit) vector `n`.
    pub fn projection(&self, n: [f64; 3]) -> CMatrix {
        self.jx.scale(n[0]) + self.jy.scale(n[1]) + self.jz.scale(n[2])
    }

    pub fn components(&self) -> [&CMatrix; 3] {
        [&self.jx, &self.jy, &self.jz]
    }
}

/// One crystal-field term `B_l^m O_l^m` with `B_l^m` in cm⁻¹.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StevensTerm {
    pub l: i32,
    pub m: i32,
    pub coefficient_cm1: f64,
}

impl StevensTerm {
    pub fn new(l: i32, m: i32, coefficient_cm1: f64) -> Result<Self> {
        validate_rank(l, m)?;
        Ok(Self { l, m, coefficient_cm1 })
    }
}

fn validate_rank(l: i32, m: i32) -> Result<()> {
    if l > 6 {
        return Err(Error::UnsupportedRank(l));
    }
    if !matches!(l, 2 | 4 | 6) || m.abs() > l {
        return Err(Error::InvalidTerm { l, m });
    }
    Ok(())
}

/// `F_l|m|(M)` with `x = J(J+1)`.
fn stevens_polynomial(l: i32, m: u32, mz: f64, x: f64) -> f64 {
    let m2 = mz * mz;
    match (l, m) {
        (2, 0) => 3.0 * m2 - x,
        (2, 1) => mz,
        (2, 2) => 1.0,
        (4, 0) => 35.0 * m2 * m2 - (30.0 * x - 25.0) * m2 + 3.0 * x * x - 6.0 * x,
        (4, 1) => 7.0 * m2 * mz - (3.0 * x + 1.0) * mz,
        (4, 2) => 7.0 * m2 - x - 5.0,
        (4, 3) => mz,
        (4, 4) => 1.0,
        (6, 0) => {
            231.0 * m2 * m2 * m2 - (315.0 * x - 735.0) * m2 * m2
                + (105.0 * x * x - 525.0 * x + 294.0) * m2
                - 5.0 * x * x * x
                + 40.0 * x * x
                - 60.0 * x
        }
        (6, 1) => {
            33.0 * m2 * m2 * mz - (30.0 * x - 15.0) * m2 * mz + (5.0 * x * x - 10.0 * x + 12.0) * mz
        }
        (6, 2) => 33.0 * m2 * m2 - (18.0 * x + 123.0) * m2 + x * x + 10.0 * x + 102.0,
        (6, 3) => 11.0 * m2 * mz - (3.0 * x + 59.0) * mz,
        (6, 4) => 11.0 * m2 - x - 38.0,
        (6, 5) => mz,
        (6, 6) => 1.0,
        _ => unreachable!("rank validated by caller"),
    }
}

/// Matrix of the Stevens operator `O_l^m(J)` in the `|J, M⟩` basis.
pub fn stevens_operator(l: i32, m: i32, j: &AngularMomentum) -> Result<CMatrix> {
    validate_rank(l, m)?;
    let d = j.dim();
    let x = j.j_squared();
    let q = m.unsigned_abs();
    let poly = CMatrix::from_fn(d, d, |r, c| {
        if r == c {
            Complex64::new(stevens_polynomial(l, q, j.m_value(r), x), 0.0)
        } else {
            ZERO
        }
    });
    if q == 0 {
        return Ok(poly);
    }
    let mut up = CMatrix::identity(d, d);
    for _ in 0..q {
        up = &j.jplus * up;
    }
    let down = up.adjoint();
    let op = if m > 0 {
        let s = &up + &down;
        (&poly * &s + &s * &poly).scale(0.25)
    } else {
        let s = &up - &down;
        (&poly * &s + &s * &poly) * (Complex64::new(0.25, 0.0) / I)
    };
    // Exact Hermitization; the construction is Hermitian up to rounding.
    Ok(linalg::hermitian_part(&op))
}

/// Crystal-field plus Zeeman spin Hamiltonian of a single `J` multiplet.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinModel {
    pub angular_momentum: AngularMomentum,
    pub stevens_terms: Vec<StevensTerm>,
    pub g_j: f64,
    pub field_t: [f64; 3],
}

impl SpinModel {
    pub fn new(two_j: u32, stevens_terms: Vec<StevensTerm>, g_j: f64, field_t: [f64; 3]) -> Result<Self> {
        for t in &stevens_terms {
            validate_rank(t.l, t.m)?;
        }
        if !g_j.is_finite() || field_t.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument("g_J and field must be finite".into()));
        }
        Ok(Self { angular_momentum: AngularMomentum::new(two_j)?, stevens_terms, g_j, field_t })
    }

    pub fn dim(&self) -> usize {
        self.angular_momentum.dim()
    }

    /// `H = Σ B_l^m O_l^m + μ_B g_J J·B` in cm⁻¹.
    pub fn hamiltonian(&self) -> Result<CMatrix> {
        let j = &self.angular_momentum;
        let d = j.dim();
        let mut h = CMatrix::zeros(d, d);
        for t in &self.stevens_terms {
            if t.coefficient_cm1 != 0.0 {
                h += stevens_operator(t.l, t.m, j)?.scale(t.coefficient_cm1);
            }
        }
        let zeeman = BOHR_MAGNETON_CM1_PER_T * self.g_j;
        h += j.projection(self.field_t).scale(zeeman);
        let dev = linalg::hermitian_deviation(&h);
        let scale = linalg::max_abs(&h).max(1.0);
        if dev > 1e-10 * scale {
            return Err(Error::Internal(alloc::format!(
                "assembled spin Hamiltonian deviates from Hermitian by {dev:e}"
            )));
        }
        Ok(linalg::hermitian_part(&h))
    }

    /// Diagonalizes the Hamiltonian with the `Jz` gauge in degenerate
    /// subspaces, then records Kramers pairs and the easy axis.
    pub fn eigensystem(&self) -> Result<Eigensystem> {
        let h = self.hamiltonian()?;
        let mut es = diagonalize(&h, Some(&self.angular_momentum.jz))?;
        es.kramers_pairs = identify_kramers_pairs(&es, self);
        es.easy_axis = easy_axis(&es, &self.angular_momentum).axis;
        Ok(es)
    }

    /// The same physical model viewed in a frame rotated by `rotation`:
    /// `H' = D(R) H D(R)^H` with the field rotated as a vector.
    pub fn rotated(&self, rotation: &Rotation3<f64>) -> Result<Self> {
        let terms = rotate_stevens_terms(&self.stevens_terms, &self.angular_momentum, rotation)?;
        let b = rotation * Vector3::from(self.field_t);
        Ok(Self {
            angular_momentum: self.angular_momentum.clone(),
            stevens_terms: terms,
            g_j: self.g_j,
            field_t: [b.x, b.y, b.z],
        })
    }
}

/// Deterministic fingerprint of an eigenbasis; operators carry it so that
/// mixing bases is caught at generator assembly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisTag(pub u64);

impl BasisTag {
    fn of(energies: &[f64], vectors: &CMatrix) -> Self {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        energies.iter().for_each(|&e| eat(e));
        vectors.iter().for_each(|z| {
            eat(z.re);
            eat(z.im);
        });
        BasisTag(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KramersPair {
    /// Member with the larger `⟨Jz⟩`.
    pub a: usize,
    pub b: usize,
    pub jz_a: f64,
    pub jz_b: f64,
    /// Set when the members are not clearly opposite-magnetization states.
    pub ambiguous: bool,
}

/// `|⟨Jz⟩|` below which a pair member counts as unmagnetized.
pub const AMBIGUOUS_JZ: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Eigensystem {
    /// Ascending energies in cm⁻¹ with `energies[0] == 0`.
    pub energies: Vec<f64>,
    /// Columns are eigenvectors in the `|J, M⟩` basis.
    pub eigenvectors: CMatrix,
    pub kramers_pairs: Vec<KramersPair>,
    pub easy_axis: [f64; 3],
    /// Ground energy subtracted from the raw spectrum.
    pub ground_shift_cm1: f64,
    pub tag: BasisTag,
}

impl Eigensystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `U^H A U`.
    pub fn to_eigenbasis(&self, op: &CMatrix) -> CMatrix {
        self.eigenvectors.adjoint() * op * &self.eigenvectors
    }

    /// `U A U^H`.
    pub fn from_eigenbasis(&self, op: &CMatrix) -> CMatrix {
        &self.eigenvectors * op * self.eigenvectors.adjoint()
    }

    pub fn expectation(&self, op: &CMatrix, state: usize) -> f64 {
        let v = self.eigenvectors.column(state);
        v.dotc(&(op * v)).re
    }

    /// `E_b - E_a` in cm⁻¹.
    pub fn gap(&self, b: usize, a: usize) -> f64 {
        self.energies[b] - self.energies[a]
    }

    /// Ground Kramers doublet, if one was identified.
    pub fn fundamental_pair(&self) -> Option<KramersPair> {
        self.kramers_pairs.first().copied()
    }
}

/// Relative tolerance for treating eigenvalues as degenerate.
pub const DEGENERACY_RTOL: f64 = 1e-9;

/// Diagonalizes a Hermitian matrix; ascending energies shifted so the ground
/// state sits at zero.
///
/// Inside each degenerate subspace the basis is fixed by diagonalizing
/// `gauge` (normally `Jz`) there, larger expectation first, and every vector
/// is phased so its largest component is real and positive.
pub fn diagonalize(h: &CMatrix, gauge: Option<&CMatrix>) -> Result<Eigensystem> {
    let dev = linalg::hermitian_deviation(h);
    let scale = linalg::max_abs(h).max(1.0);
    if dev > 1e-8 * scale {
        return Err(Error::NotHermitian { deviation: dev, tolerance: 1e-8 * scale });
    }
    let (raw, mut vecs) = linalg::eigh(&linalg::hermitian_part(h))?;
    let d = raw.len();
    if d == 0 {
        return Err(Error::InvalidArgument("empty Hamiltonian".into()));
    }
    let spread = raw[d - 1] - raw[0];
    let tol = DEGENERACY_RTOL * spread.max(1.0);
    if let Some(g) = gauge {
        let mut start = 0;
        while start < d {
            let mut end = start + 1;
            while end < d && raw[end] - raw[end - 1] <= tol {
                end += 1;
            }
            if end - start > 1 {
                let sub = vecs.columns(start, end - start).into_owned();
                let proj = sub.adjoint() * g * &sub;
                let (_, w) = linalg::eigh(&linalg::hermitian_part(&proj))?;
                let k = end - start;
                // eigh is ascending; we want descending gauge expectation.
                let w_desc = CMatrix::from_fn(k, k, |r, c| w[(r, k - 1 - c)]);
                let rotated = sub * w_desc;
                vecs.columns_mut(start, k).copy_from(&rotated);
            }
            start = end;
        }
    }
    for c in 0..d {
        fix_phase(&mut vecs, c);
    }
    let ground = raw[0];
    let energies: Vec<f64> = raw.iter().map(|e| e - ground).collect();
    let tag = BasisTag::of(&energies, &vecs);
    Ok(Eigensystem {
        energies,
        eigenvectors: vecs,
        kramers_pairs: Vec::new(),
        easy_axis: [0.0, 0.0, 1.0],
        ground_shift_cm1: ground,
        tag,
    })
}

fn fix_phase(vecs: &mut CMatrix, col: usize) {
    let n = vecs.nrows();
    let max = (0..n).map(|r| vecs[(r, col)].norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = (0..n).find(|&r| vecs[(r, col)].norm() >= max * (1.0 - 1e-8)).unwrap_or(0);
    let z = vecs[(pivot, col)];
    let phase = z.conj() / z.norm();
    for r in 0..n {
        vecs[(r, col)] *= phase;
    }
    vecs[(pivot, col)] = Complex64::new(vecs[(pivot, col)].norm(), 0.0);
}

/// Groups the spectrum into consecutive pairs `(0,1), (2,3), …`, ordering each
/// pair by `⟨Jz⟩` (larger first). The first pair is the fundamental doublet.
pub fn identify_kramers_pairs(es: &Eigensystem, model: &SpinModel) -> Vec<KramersPair> {
    let jz = &model.angular_momentum.jz;
    let mut pairs = Vec::new();
    let mut i = 0;
    while i + 1 < es.dim() {
        let (z0, z1) = (es.expectation(jz, i), es.expectation(jz, i + 1));
        let (a, b, jz_a, jz_b) = if z0 >= z1 { (i, i + 1, z0, z1) } else { (i + 1, i, z1, z0) };
        let ambiguous = jz_a.abs() < AMBIGUOUS_JZ || jz_b.abs() < AMBIGUOUS_JZ || jz_a * jz_b > 0.0;
        pairs.push(KramersPair { a, b, jz_a, jz_b, ambiguous });
        i += 2;
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EasyAxis {
    pub axis: [f64; 3],
    /// No preferred direction could be extracted (isotropic ground doublet
    /// with degenerate levels).
    pub isotropic: bool,
}

/// Magnetic axis of the ground doublet.
///
/// Projects `J` onto the two lowest states, writes each component in the
/// Pauli basis `J_i = Σ_k C_ik σ_k` and takes the principal axis of `C Cᵀ`.
/// When `C Cᵀ` is isotropic but the doublet is split, the ground-state `⟨J⟩`
/// direction is used instead.
pub fn easy_axis(es: &Eigensystem, j: &AngularMomentum) -> EasyAxis {
    let z_axis = EasyAxis { axis: [0.0, 0.0, 1.0], isotropic: true };
    if es.dim() < 2 {
        return z_axis;
    }
    let p = es.eigenvectors.columns(0, 2).into_owned();
    let sigma = pauli();
    let mut c = Matrix3::<f64>::zeros();
    for (i, ji) in j.components().iter().enumerate() {
        let proj = p.adjoint() * *ji * &p;
        for (k, s) in sigma.iter().enumerate() {
            c[(i, k)] = 0.5 * (&proj * s).trace().re;
        }
    }
    let m = c * c.transpose();
    let eig = SymmetricEigen::new(m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    let axis = if l1 > 0.0 && l1 - l2 > 1e-6 * l1 {
        let v = eig.eigenvectors.column(order[0]);
        Some([v[0], v[1], v[2]])
    } else {
        let spread = es.energies.last().copied().unwrap_or(0.0);
        if es.energies[1] > DEGENERACY_RTOL * spread.max(1.0) {
            let v: [f64; 3] = core::array::from_fn(|i| es.expectation(j.components()[i], 0));
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            (n > 1e-9).then(|| [v[0] / n, v[1] / n, v[2] / n])
        } else {
            None
        }
    };
    match axis {
        Some(mut v) => {
            // Prefer the hemisphere reached by the smaller rotation.
            let flip = if v[2].abs() > 1e-12 {
                v[2] < 0.0
            } else if v[1].abs() > 1e-12 {
                v[1] < 0.0
            } else {
                v[0] < 0.0
            };
            if flip {
                v = [-v[0], -v[1], -v[2]];
            }
            EasyAxis { axis: v, isotropic: false }
        }
        None => z_axis,
    }
}

fn pauli() -> [CMatrix; 3] {
    let sx = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
    let sy = CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]);
    let sz = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]);
    [sx, sy, sz]
}

/// Unitary `D(R) = exp(-i θ n·J)` representing `rotation` on the multiplet.
pub fn rotation_operator(j: &AngularMomentum, rotation: &Rotation3<f64>) -> Result<CMatrix> {
    let d = j.dim();
    let Some((axis, angle)) = rotation.axis_angle() else {
        return Ok(CMatrix::identity(d, d));
    };
    let gen = j.projection([axis.x, axis.y, axis.z]);
    let (vals, vecs) = linalg::eigh(&gen)?;
    let phases = nalgebra::DVector::from_iterator(
        d,
        vals.iter().map(|&v| Complex64::from_polar(1.0, -angle * v)),
    );
    Ok(&vecs * CMatrix::from_diagonal(&phases) * vecs.adjoint())
}

/// Re-expands `D(R) (Σ B O) D(R)^H` in Stevens operators, rank by rank.
///
/// Operators that vanish identically on this multiplet (rank above 2J) are
/// dropped, since their coefficients carry no information.
pub fn rotate_stevens_terms(
    terms: &[StevensTerm],
    j: &AngularMomentum,
    rotation: &Rotation3<f64>,
) -> Result<Vec<StevensTerm>> {
    let d = j.dim();
    let dmat = rotation_operator(j, rotation)?;
    let mut out = Vec::new();
    for l in [2, 4, 6] {
        let mut h = CMatrix::zeros(d, d);
        let mut present = false;
        for t in terms.iter().filter(|t| t.l == l) {
            h += stevens_operator(t.l, t.m, j)?.scale(t.coefficient_cm1);
            present = true;
        }
        if !present {
            continue;
        }
        let rotated = &dmat * h * dmat.adjoint();
        out.extend(expand_in_rank(l, &rotated, j)?);
    }
    Ok(out)
}

/// Least-squares expansion of a rank-`l` operator in `{O_l^m}`.
pub(crate) fn expand_in_rank(l: i32, op: &CMatrix, j: &AngularMomentum) -> Result<Vec<StevensTerm>> {
    let basis: Vec<(i32, CMatrix)> = (-l..=l)
        .map(|m| stevens_operator(l, m, j).map(|o| (m, o)))
        .collect::<Result<_>>()?;
    let norms: Vec<f64> = basis.iter().map(|(_, o)| (o * o).trace().re).collect();
    let top = norms.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..basis.len()).filter(|&k| norms[k] > 1e-12 * top.max(1e-300)).collect();
    if keep.is_empty() {
        return Ok(Vec::new());
    }
    let n = keep.len();
    let gram = DMatrix::<f64>::from_fn(n, n, |r, c| (&basis[keep[r]].1 * &basis[keep[c]].1).trace().re);
    let rhs = nalgebra::DVector::<f64>::from_fn(n, |r, _| (&basis[keep[r]].1 * op).trace().re);
    let coeffs = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("singular Stevens Gram matrix".into()))?;
    let biggest = coeffs.iter().map(|c| c.abs()).fold(0.0, f64::max);
    Ok(keep
        .iter()
        .zip(coeffs.iter())
        .filter(|(_, c)| c.abs() > 1e-13 * biggest)
        .map(|(&k, &c)| StevensTerm { l, m: basis[k].0, coefficient_cm1: c })
        .collect())
}

/// Result of re-orienting a model so its ground-doublet easy axis is `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct EasyAxisAlignment {
    pub model: SpinModel,
    /// Rotation applied to the original frame (maps the easy axis onto `z`).
    pub rotation: Rotation3<f64>,
    /// The identity was used because no easy axis exists.
    pub isotropic: bool,
}

/// Rotation taking the unit vector `axis` onto `+z`.
pub fn rotation_to_z(axis: [f64; 3]) -> Rotation3<f64> {
    let n = Vector3::from(axis).normalize();
    let z = Vector3::z();
    if (n - z).norm() < 1e-14 {
        return Rotation3::identity();
    }
    Rotation3::rotation_between(&n, &z).unwrap_or_else(|| {
        Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::x()), core::f64::consts::PI)
    })
}

pub fn rotate_to_easy_axis(model: &SpinModel) -> Result<EasyAxisAlignment> {
    let es = model.eigensystem()?;
    let axis = easy_axis(&es, &model.angular_momentum);
    if axis.isotropic {
        return Ok(EasyAxisAlignment { model: model.clone(), rotation: Rotation3::identity(), isotropic: true });
    }
    let rotation = rotation_to_z(axis.axis);
    Ok(EasyAxisAlignment { model: model.rotated(&rotation)?, rotation, isotropic: false })
}
