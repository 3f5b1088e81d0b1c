//! Secular Lindblad generators from one- and two-phonon processes.
//!
//! Every bath channel becomes a jump operator confined to one secular block
//! (a set of index pairs sharing a Bohr frequency). One-phonon operators are
//! the coupling matrices themselves; two-phonon operators are sums of
//! regularized T-matrix amplitudes
//!
//! ```text
//! T^{αβ,±}_{ba} = Σ_c V^α_bc V^β_ca / (E_c - E_a ± ħω_β + iη)
//! ```
//!
//! over both time orderings of the pair. Weights include `2π G` and the
//! cm⁻¹ → s⁻¹ conversion, so `γ_κ L L^H` is a rate.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::bath::{Bath, Channel};
use crate::constants::golden_rule_rate_per_s;
use crate::coupling::CouplingOperator;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ZERO};
use crate::parallel;
use crate::spin::{BasisTag, Eigensystem};

/// Index pairs `(d, b)` whose Bohr frequency `E_d - E_b` equals `frequency_cm1`
/// within the partition tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SecularBlock {
    pub frequency_cm1: f64,
    pub elements: Vec<(usize, usize)>,
}

/// Partitions all ordered pairs `(d, b)` by Bohr frequency. Sorted frequencies
/// closer than `tol_cm1` to their neighbour share a block; blocks are returned
/// in ascending frequency.
pub fn secular_partition(es: &Eigensystem, tol_cm1: f64) -> Vec<SecularBlock> {
    let d = es.dim();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(d * d);
    for row in 0..d {
        for col in 0..d {
            pairs.push((es.gap(row, col), row, col));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut blocks: Vec<SecularBlock> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (w, row, col) in pairs {
        if blocks.is_empty() || w - last > tol_cm1 {
            blocks.push(SecularBlock { frequency_cm1: 0.0, elements: Vec::new() });
            sums.push(0.0);
        }
        let k = blocks.len() - 1;
        blocks[k].elements.push((row, col));
        sums[k] += w;
        last = w;
    }
    for (b, s) in blocks.iter_mut().zip(sums) {
        b.frequency_cm1 = s / b.elements.len() as f64;
        b.elements.sort_unstable();
        // Populations sit at exactly zero frequency.
        if b.elements.iter().any(|&(r, c)| r == c) {
            b.frequency_cm1 = 0.0;
        }
    }
    blocks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JumpLabel {
    OnePhonon { mode: usize },
    /// For the Raman channel `first` is absorbed and `second` emitted.
    TwoPhonon { first: usize, second: usize, channel: Channel },
}

/// `γ_κ L^κ` with `L^κ` normalized to unit Frobenius norm and supported on a
/// single secular block.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperator {
    pub label: JumpLabel,
    pub frequency_cm1: f64,
    pub block: usize,
    /// γ_κ in s⁻¹.
    pub weight_per_s: f64,
    elements: Vec<(usize, usize, Complex64)>,
    basis: BasisTag,
    dim: usize,
}

impl JumpOperator {
    /// Builds a jump operator from an unnormalized element list; the norm is
    /// folded into the weight. Returns `None` for an all-zero matrix.
    pub fn new(
        label: JumpLabel,
        frequency_cm1: f64,
        block: usize,
        weight_per_s: f64,
        mut elements: Vec<(usize, usize, Complex64)>,
        basis: BasisTag,
        dim: usize,
    ) -> Result<Option<Self>> {
        if !(weight_per_s >= 0.0) {
            return Err(Error::NegativeWeight(weight_per_s));
        }
        if let Some(&(r, c, _)) = elements.iter().find(|&&(r, c, _)| r >= dim || c >= dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: r.max(c) + 1 });
        }
        elements.retain(|e| e.2 != ZERO);
        elements.sort_unstable_by_key(|e| (e.0, e.1));
        let norm_sq: f64 = elements.iter().map(|e| e.2.norm_sqr()).sum();
        if norm_sq == 0.0 {
            return Ok(None);
        }
        let inv = 1.0 / norm_sq.sqrt();
        for e in &mut elements {
            e.2 *= inv;
        }
        Ok(Some(Self { label, frequency_cm1, block, weight_per_s: weight_per_s * norm_sq, elements, basis, dim }))
    }

    /// Nonzero `(row, col, value)` entries, sorted by row then column.
    pub fn elements(&self) -> &[(usize, usize, Complex64)] {
        &self.elements
    }

    pub fn element(&self, row: usize, col: usize) -> Complex64 {
        self.elements
            .binary_search_by_key(&(row, col), |e| (e.0, e.1))
            .map(|k| self.elements[k].2)
            .unwrap_or(ZERO)
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.elements {
            m[(r, c)] = v;
        }
        m
    }

    pub fn basis(&self) -> BasisTag {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorOptions {
    pub secular_tol_cm1: f64,
    /// η of the `+iη` shift in T-matrix denominators.
    pub regularizer_cm1: f64,
    pub channels: Vec<Channel>,
    /// Jump operators with `γ‖L‖² <= drop_threshold_per_s` are discarded.
    pub drop_threshold_per_s: f64,
    /// Pair prefilter half width in units of the broadening width; `None`
    /// uses the broadening cutoff.
    pub pair_cutoff_sigmas: Option<f64>,
    /// Admit `α = β` in the Raman channel.
    pub same_mode_raman: bool,
    pub workers: usize,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self {
            secular_tol_cm1: 1e-6,
            regularizer_cm1: 1.0,
            channels: vec![Channel::AbsorptionEmission],
            drop_threshold_per_s: 0.0,
            pair_cutoff_sigmas: None,
            same_mode_raman: false,
            workers: 1,
        }
    }
}

impl GeneratorOptions {
    fn pair_window(&self, bath: &Bath) -> f64 {
        let b = bath.broadening();
        match self.pair_cutoff_sigmas {
            Some(s) if b.kind != crate::bath::BroadeningKind::Exact => s * b.width_cm1,
            _ => b.window_cm1(),
        }
    }
}

/// Couplings by sorted mode position, checked against the eigenbasis.
fn couplings_by_position<'a>(
    es: &Eigensystem,
    couplings: &'a [CouplingOperator],
    bath: &Bath,
) -> Result<Vec<Option<&'a CouplingOperator>>> {
    let mut out = Vec::with_capacity(bath.modes().len());
    for m in bath.modes() {
        let v = couplings.iter().find(|c| c.mode_index == m.index);
        if let Some(v) = v {
            if v.basis() != es.tag {
                return Err(Error::BasisMismatch);
            }
            if v.dim() != es.dim() {
                return Err(Error::DimensionMismatch { expected: es.dim(), found: v.dim() });
            }
        }
        out.push(v.filter(|v| !v.is_zero()));
    }
    Ok(out)
}

fn keep(weight: f64, opts: &GeneratorOptions) -> bool {
    weight > opts.drop_threshold_per_s && weight > 0.0
}

/// One-phonon jump operators: for each mode α and secular block ω,
/// `L_db = V^α_db` on the block with `γ = 2π G²(ω, ω_α)` (in s⁻¹).
pub fn jump_operators_2(
    es: &Eigensystem,
    couplings: &[CouplingOperator],
    bath: &Bath,
    blocks: &[SecularBlock],
    opts: &GeneratorOptions,
) -> Result<Vec<JumpOperator>> {
    let by_pos = couplings_by_position(es, couplings, bath)?;
    let window = bath.broadening().window_cm1();
    let mut items: Vec<(usize, usize)> = Vec::new();
    for (k, block) in blocks.iter().enumerate() {
        let w = block.frequency_cm1;
        let absorb = bath.positions_in(w - window, w + window);
        let emit = bath.positions_in(-w - window, -w + window);
        let lo = absorb.start.min(emit.start);
        let hi = absorb.end.max(emit.end);
        for pos in lo..hi {
            if (absorb.contains(&pos) || emit.contains(&pos)) && by_pos[pos].is_some() {
                items.push((k, pos));
            }
        }
    }
    let chunks = parallel::map_chunks(&items, opts.workers, |chunk| -> Result<Vec<JumpOperator>> {
        let mut out = Vec::new();
        for &(k, pos) in chunk {
            let block = &blocks[k];
            let g = bath.g2(block.frequency_cm1, pos);
            if g == 0.0 {
                continue;
            }
            let v = by_pos[pos].expect("filtered").matrix();
            let elements = block.elements.iter().map(|&(r, c)| (r, c, v[(r, c)])).collect();
            let label = JumpLabel::OnePhonon { mode: bath.modes()[pos].index };
            let gamma = golden_rule_rate_per_s(g);
            if let Some(j) = JumpOperator::new(label, block.frequency_cm1, k, gamma, elements, es.tag, es.dim())? {
                if keep(j.weight_per_s, opts) {
                    out.push(j);
                }
            }
        }
        Ok(out)
    });
    flatten(chunks)
}

fn flatten<T>(chunks: Vec<Result<Vec<T>>>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

const SINGULAR_DENOMINATOR: f64 = 1e-12;

/// `T^{αβ,±}_{row,col}` by direct summation over all intermediate states.
#[allow(clippy::too_many_arguments)]
pub fn t_matrix(
    row: usize,
    col: usize,
    alpha: &CouplingOperator,
    beta: &CouplingOperator,
    omega_beta_cm1: f64,
    sign: Sign,
    es: &Eigensystem,
    regularizer_cm1: f64,
) -> Result<Complex64> {
    if alpha.basis() != es.tag || beta.basis() != es.tag {
        return Err(Error::BasisMismatch);
    }
    let (va, vb) = (alpha.matrix(), beta.matrix());
    let mut acc = ZERO;
    for c in 0..es.dim() {
        let num = va[(row, c)] * vb[(c, col)];
        if num == ZERO {
            continue;
        }
        let den = Complex64::new(es.gap(c, col) + sign.value() * omega_beta_cm1, regularizer_cm1);
        if den.norm() < SINGULAR_DENOMINATOR {
            return Err(Error::SingularDenominator { intermediate: c, initial: col, mode: beta.mode_index });
        }
        acc += num / den;
    }
    Ok(acc)
}

/// `W^{β,±}_{cb} = V^β_cb / (E_c - E_b ± ħω_β + iη)`.
fn propagator_weighted(
    v: &CMatrix,
    es: &Eigensystem,
    omega_cm1: f64,
    sign: Sign,
    eta: f64,
    mode: usize,
) -> Result<CMatrix> {
    let d = es.dim();
    let mut w = CMatrix::zeros(d, d);
    for b in 0..d {
        for c in 0..d {
            let num = v[(c, b)];
            if num == ZERO {
                continue;
            }
            let den = Complex64::new(es.gap(c, b) + sign.value() * omega_cm1, eta);
            if den.norm() < SINGULAR_DENOMINATOR {
                return Err(Error::SingularDenominator { intermediate: c, initial: b, mode });
            }
            w[(c, b)] = num / den;
        }
    }
    Ok(w)
}

struct PairWork {
    block: usize,
    channel: Channel,
    first: usize,
    second: usize,
}

/// Sign of the denominator when the given member of the pair acts first:
/// `+ħω` for an emitted phonon, `-ħω` for an absorbed one.
fn first_sign(channel: Channel, is_first: bool) -> Sign {
    match channel {
        Channel::AbsorptionEmission => {
            if is_first {
                Sign::Minus
            } else {
                Sign::Plus
            }
        }
        Channel::DoubleAbsorption => Sign::Minus,
        Channel::DoubleEmission => Sign::Plus,
    }
}

/// Two-phonon jump operators.
///
/// For each secular block ω, enabled channel and mode pair with nonzero
/// kernel weight,
/// `L_db = Σ_c V^first_dc W^{second}_cb + Σ_c V^second_dc W^{first}_cb`
/// on the block, weighted by `2π G⁴(ω, ω_first, ω_second)`. The Raman channel
/// runs over ordered pairs (absorbed, emitted) of distinct modes; the double
/// channels over unordered pairs. Only pairs whose resonance lies within the
/// pair window of ω are enumerated; the enumeration order is fixed by the
/// sorted modes.
pub fn jump_operators_4(
    es: &Eigensystem,
    couplings: &[CouplingOperator],
    bath: &Bath,
    blocks: &[SecularBlock],
    opts: &GeneratorOptions,
) -> Result<Vec<JumpOperator>> {
    let by_pos = couplings_by_position(es, couplings, bath)?;
    let n = bath.modes().len();
    if n < 2 && !(opts.same_mode_raman && n == 1) {
        return Ok(Vec::new());
    }
    let window = opts.pair_window(bath);
    let modes = bath.modes();
    let mut items: Vec<PairWork> = Vec::new();
    for (k, block) in blocks.iter().enumerate() {
        let w = block.frequency_cm1;
        for &channel in &opts.channels {
            for second in 0..n {
                if by_pos[second].is_none() {
                    continue;
                }
                let ws = modes[second].omega_cm1;
                let target = match channel {
                    Channel::AbsorptionEmission => w + ws,
                    Channel::DoubleAbsorption => w - ws,
                    Channel::DoubleEmission => -w - ws,
                };
                for first in bath.positions_in(target - window, target + window) {
                    if by_pos[first].is_none() {
                        continue;
                    }
                    let admitted = match channel {
                        Channel::AbsorptionEmission => first != second || opts.same_mode_raman,
                        _ => first > second || (first == second && opts.same_mode_raman),
                    };
                    if admitted {
                        items.push(PairWork { block: k, channel, first, second });
                    }
                }
            }
        }
    }
    if items.is_empty() {
        return Ok(Vec::new());
    }

    // Propagator-weighted couplings for every (mode, sign) in use.
    let mut needed = vec![[false; 2]; n];
    for it in &items {
        let s1 = first_sign(it.channel, true);
        let s2 = first_sign(it.channel, false);
        needed[it.first][(s1 == Sign::Minus) as usize] = true;
        needed[it.second][(s2 == Sign::Minus) as usize] = true;
    }
    let mut weighted: Vec<[Option<CMatrix>; 2]> = Vec::with_capacity(n);
    for pos in 0..n {
        let mut slot: [Option<CMatrix>; 2] = [None, None];
        for (k, sign) in [Sign::Plus, Sign::Minus].into_iter().enumerate() {
            if needed[pos][k] {
                let v = by_pos[pos].expect("needed modes are coupled").matrix();
                slot[k] = Some(propagator_weighted(
                    v,
                    es,
                    modes[pos].omega_cm1,
                    sign,
                    opts.regularizer_cm1,
                    modes[pos].index,
                )?);
            }
        }
        weighted.push(slot);
    }

    let d = es.dim();
    let chunks = parallel::map_chunks(&items, opts.workers, |chunk| -> Result<Vec<JumpOperator>> {
        let mut out = Vec::new();
        for it in chunk {
            let block = &blocks[it.block];
            let g = bath.g4(block.frequency_cm1, it.first, it.second, it.channel);
            if g == 0.0 {
                continue;
            }
            let vf = by_pos[it.first].expect("coupled").matrix();
            let vs = by_pos[it.second].expect("coupled").matrix();
            // W of the member acting first in each ordering.
            let ws = weighted[it.second][(first_sign(it.channel, false) == Sign::Minus) as usize]
                .as_ref()
                .expect("precomputed");
            let wf = weighted[it.first][(first_sign(it.channel, true) == Sign::Minus) as usize]
                .as_ref()
                .expect("precomputed");
            let elements: Vec<(usize, usize, Complex64)> = block
                .elements
                .iter()
                .map(|&(r, c)| {
                    let mut acc = ZERO;
                    for m in 0..d {
                        acc += vf[(r, m)] * ws[(m, c)] + vs[(r, m)] * wf[(m, c)];
                    }
                    (r, c, acc)
                })
                .collect();
            let label = JumpLabel::TwoPhonon {
                first: modes[it.first].index,
                second: modes[it.second].index,
                channel: it.channel,
            };
            let gamma = golden_rule_rate_per_s(g);
            if let Some(j) = JumpOperator::new(label, block.frequency_cm1, it.block, gamma, elements, es.tag, d)? {
                if keep(j.weight_per_s, opts) {
                    out.push(j);
                }
            }
        }
        Ok(out)
    });
    flatten(chunks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Order {
    Second,
    /// Fourth order; a sum with the second-order generator is also tagged so.
    Fourth,
}

impl Order {
    pub fn as_u8(self) -> u8 {
        match self {
            Order::Second => 2,
            Order::Fourth => 4,
        }
    }
}

/// Generator `R` acting on the row-major vectorized density matrix,
/// `vec(ρ)[a·d + b] = ρ_ab`, in s⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    pub order: Order,
    dim: usize,
    matrix: CMatrix,
    basis: BasisTag,
}

impl Superoperator {
    pub fn zeros(order: Order, dim: usize, basis: BasisTag) -> Self {
        Self { order, dim, matrix: CMatrix::zeros(dim * dim, dim * dim), basis }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> BasisTag {
        self.basis
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    #[inline]
    pub fn index(&self, a: usize, b: usize) -> usize {
        a * self.dim + b
    }

    /// `R_{ab,cd}`.
    pub fn element(&self, a: usize, b: usize, c: usize, d: usize) -> Complex64 {
        self.matrix[(self.index(a, b), self.index(c, d))]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// `max_{cd} |Σ_a R_{aa,cd}|`.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for col in 0..d * d {
            let mut s = ZERO;
            for a in 0..d {
                s += self.matrix[(a * d + a, col)];
            }
            worst = worst.max(s.norm());
        }
        worst
    }

    /// Real rate matrix `K[b][a] = R_{bb,aa}`.
    pub fn population_block(&self) -> nalgebra::DMatrix<f64> {
        let d = self.dim;
        nalgebra::DMatrix::from_fn(d, d, |b, a| self.matrix[(b * d + b, a * d + a)].re)
    }

    pub fn sum(&self, other: &Superoperator) -> Result<Superoperator> {
        if self.basis != other.basis || self.dim != other.dim {
            return Err(Error::BasisMismatch);
        }
        Ok(Self {
            order: self.order.max(other.order),
            dim: self.dim,
            matrix: &self.matrix + &other.matrix,
            basis: self.basis,
        })
    }

    /// `R ρ` as a matrix.
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let d = self.dim;
        let v = crate::linalg::CVector::from_fn(d * d, |i, _| rho[(i / d, i % d)]);
        let out = &self.matrix * v;
        CMatrix::from_fn(d, d, |a, b| out[a * d + b])
    }

    /// Connected components of the coupling graph of `R` (exact nonzeros),
    /// each sorted, ordered by smallest member.
    pub fn coupled_blocks(&self) -> Vec<Vec<usize>> {
        let n = self.dim * self.dim;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for c in 0..n {
            for r in 0..n {
                if r != c && self.matrix[(r, c)] != ZERO {
                    let (ra, rb) = (find(&mut parent, r), find(&mut parent, c));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; n];
        for i in 0..n {
            let root = find(&mut parent, i);
            if slot[root] == usize::MAX {
                slot[root] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[root]].push(i);
        }
        groups
    }

    pub fn submatrix(&self, indices: &[usize]) -> CMatrix {
        CMatrix::from_fn(indices.len(), indices.len(), |r, c| self.matrix[(indices[r], indices[c])])
    }

    /// All eigenvalues, computed block by block.
    pub fn spectrum(&self) -> Result<Vec<Complex64>> {
        let mut out = Vec::with_capacity(self.dim * self.dim);
        for block in self.coupled_blocks() {
            if block.len() == 1 {
                out.push(self.matrix[(block[0], block[0])]);
            } else {
                out.extend(linalg::eig(&self.submatrix(&block))?.0);
            }
        }
        Ok(out)
    }
}

/// Lindblad generator
/// `R_{ab,cd} = Σ_κ γ_κ [L_ac L_bd* - ½ δ_bd (L^H L)_ac - ½ δ_ac (L^H L)_db]`.
///
/// Jump operators per partial sum; fixed so the result is independent of the
/// worker count.
const ASSEMBLY_CHUNK: usize = 64;

/// Jumps are split into chunks of [`ASSEMBLY_CHUNK`], each accumulated into
/// its own matrix in list order; partial sums are added in chunk order.
pub fn assemble_generator(
    jumps: &[JumpOperator],
    es: &Eigensystem,
    order: Order,
    workers: usize,
) -> Result<Superoperator> {
    let d = es.dim();
    if let Some(j) = jumps.iter().find(|j| j.basis() != es.tag || j.dim() != d) {
        return Err(if j.dim() != d {
            Error::DimensionMismatch { expected: d, found: j.dim() }
        } else {
            Error::BasisMismatch
        });
    }
    let total = Superoperator::zeros(order, d, es.tag);
    Ok(parallel::fold_chunks(
        jumps,
        ASSEMBLY_CHUNK,
        workers,
        total,
        |chunk| {
            let mut r = CMatrix::zeros(d * d, d * d);
            let mut gram = CMatrix::zeros(d, d);
            let mut touched: Vec<(usize, usize)> = Vec::new();
            for j in chunk {
                accumulate_jump(&mut r, &mut gram, &mut touched, j, d);
            }
            r
        },
        |mut acc, partial| {
            acc.matrix += partial;
            acc
        },
    ))
}

fn accumulate_jump(r: &mut CMatrix, gram: &mut CMatrix, touched: &mut Vec<(usize, usize)>, j: &JumpOperator, d: usize) {
    let g = j.weight_per_s;
    let el = j.elements();
    for &(a, c, x) in el {
        for &(b, dd, y) in el {
            r[(a * d + b, c * d + dd)] += x * y.conj() * g;
        }
    }
    // (L^H L)_pq = Σ_j conj(L_jp) L_jq, rows grouped since elements are sorted.
    touched.clear();
    let mut start = 0;
    while start < el.len() {
        let row = el[start].0;
        let mut end = start;
        while end < el.len() && el[end].0 == row {
            end += 1;
        }
        for &(_, p, x) in &el[start..end] {
            for &(_, q, y) in &el[start..end] {
                if gram[(p, q)] == ZERO {
                    touched.push((p, q));
                }
                gram[(p, q)] += x.conj() * y;
            }
        }
        start = end;
    }
    for &(p, q) in touched.iter() {
        let m = gram[(p, q)] * (0.5 * g);
        if m != ZERO {
            for x in 0..d {
                r[(p * d + x, q * d + x)] -= m;
                r[(x * d + q, x * d + p)] -= m;
            }
        }
        gram[(p, q)] = ZERO;
    }
}
