//! Relaxation and coherence times from assembled generators, a propagation
//! oracle, and regime fits of rate curves.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::constants::BOLTZMANN_CM1_PER_K;
use crate::error::{Error, Result};
use crate::generators::{JumpOperator, Order, Superoperator};
use crate::linalg::{self, CMatrix, CVector, ONE, ZERO};
use crate::spin::{Eigensystem, KramersPair};

/// Eigenvalues closer than this (relative to the largest slow rate) are grouped.
pub const GROUPING_RTOL: f64 = 1e-8;
/// Minimum acceptable overlap with the population-difference vector.
pub const MIN_OVERLAP: f64 = 0.5;
/// Slow rates below this multiple of `ε · max(escape rate of a, b)` cannot be
/// separated from the stationary mode in double precision.
pub const RESOLUTION_FACTOR: f64 = 1e3;
const REFINE_RTOL: f64 = 1e-14;
const REFINE_MAX_ITER: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct TauResult {
    /// Infinite when the doublet populations are not relaxed, NaN when the
    /// rate is below numerical resolution.
    pub tau_s: f64,
    /// `τ` is at least this long when it is unresolved.
    pub tau_lower_bound_s: Option<f64>,
    /// NaN when no eigenvalue was identified.
    pub overlap_score: f64,
    pub eigenvalue_per_s: Option<Complex64>,
    /// `(eigenvalue, overlap)` for every non-stationary eigenvalue group.
    pub overlaps: Vec<(Complex64, f64)>,
}

impl TauResult {
    fn unrelaxed() -> Self {
        Self {
            tau_s: f64::INFINITY,
            tau_lower_bound_s: None,
            overlap_score: f64::NAN,
            eigenvalue_per_s: None,
            overlaps: Vec::new(),
        }
    }
}

enum SlowMode {
    AllStationary,
    /// The target lies in the span of modes below the rate floor.
    Unresolved { overlap: f64, floor: f64, overlaps: Vec<(Complex64, f64)> },
    Found { lambda: Complex64, overlap: f64, overlaps: Vec<(Complex64, f64)> },
}

fn groups_by_value(values: &[Complex64], candidates: &[usize], tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &k in candidates {
        match groups.iter_mut().find(|g| (values[g[0]] - values[k]).norm() <= tol) {
            Some(g) => g.push(k),
            None => groups.push(vec![k]),
        }
    }
    groups
}

/// Norm of the projection of `target` on the span of `vectors`.
fn span_overlap(vectors: &[CVector], target: &CVector) -> f64 {
    linalg::orthonormal_basis(vectors).iter().map(|u| u.dotc(target).norm_sqr()).sum::<f64>().sqrt()
}

fn mean(values: &[Complex64], group: &[usize]) -> Complex64 {
    group.iter().map(|&k| values[k]).sum::<Complex64>() / group.len() as f64
}

/// The generator restricted to one connected block, split into the doublet
/// elements `S` (indices `(x, y)` with `x, y ∈ {a, b}`) and the rest `F`.
struct Reduction {
    r_ss: CMatrix,
    r_sf: CMatrix,
    r_fs: CMatrix,
    r_ff: CMatrix,
    slow: Vec<usize>,
    fast: Vec<usize>,
    d: usize,
}

impl Reduction {
    /// `M(μ) = R_SS - R_SF (R_FF - μ)^{-1} R_FS` and `X(μ) = -(R_FF - μ)^{-1} R_FS`.
    fn effective(&self, mu: Complex64) -> Result<(CMatrix, CMatrix)> {
        if self.fast.is_empty() {
            return Ok((self.r_ss.clone(), CMatrix::zeros(0, self.slow.len())));
        }
        let n = self.fast.len();
        let shifted = &self.r_ff - CMatrix::identity(n, n) * mu;
        let x = shifted
            .lu()
            .solve(&self.r_fs)
            .ok_or_else(|| Error::Internal("singular fast block in doublet reduction".into()))?;
        let mut m = &self.r_ss - &self.r_sf * &x;
        // Trace preservation gives `Σ_pop M_{s,c} = μ Σ_F-pop x_{f,c}`. The
        // population diagonal is the difference of two nearly equal fluxes,
        // so take it from the off-diagonal population entry instead.
        let d = self.d;
        let pops: Vec<usize> = (0..self.slow.len()).filter(|&p| self.slow[p] / d == self.slow[p] % d).collect();
        if let [p, q] = pops[..] {
            let fast_pops: Vec<usize> =
                (0..self.fast.len()).filter(|&f| self.fast[f] / d == self.fast[f] % d).collect();
            for (c, other) in [(p, q), (q, p)] {
                let leak: Complex64 = fast_pops.iter().map(|&f| x[(f, c)]).sum();
                m[(c, c)] = mu * leak - m[(other, c)];
            }
        }
        Ok((m, -x))
    }

    /// Full block vector from its doublet part.
    fn lift(&self, xs: &CVector, x: &CMatrix) -> CVector {
        let mut v = CVector::zeros(self.slow.len() + self.fast.len());
        let mut k = 0;
        for (p, _) in self.slow.iter().enumerate() {
            v[k] = xs[p];
            k += 1;
        }
        if !self.fast.is_empty() {
            let xf = x * xs;
            for p in 0..self.fast.len() {
                v[k] = xf[p];
                k += 1;
            }
        }
        let n = v.norm();
        if n > 0.0 {
            v /= Complex64::new(n, 0.0);
        }
        v
    }

    /// In lifted coordinates (slow first, then fast).
    fn trace_weight(&self, v: &CVector) -> f64 {
        let d = self.d;
        let mut t = ZERO;
        for (k, &i) in self.slow.iter().chain(self.fast.iter()).enumerate() {
            if i / d == i % d {
                t += v[k];
            }
        }
        t.norm()
    }
}

impl Reduction {
    fn new(r: &Superoperator, block: &[usize], a: usize, b: usize) -> Self {
        let d = r.dim();
        let in_pair = |i: usize| (i / d == a || i / d == b) && (i % d == a || i % d == b);
        let slow: Vec<usize> = block.iter().copied().filter(|&i| in_pair(i)).collect();
        let fast: Vec<usize> = block.iter().copied().filter(|&i| !in_pair(i)).collect();
        let sub = |rows: &[usize], cols: &[usize]| {
            CMatrix::from_fn(rows.len(), cols.len(), |p, q| r.matrix()[(rows[p], cols[q])])
        };
        Self {
            r_ss: sub(&slow, &slow),
            r_sf: sub(&slow, &fast),
            r_fs: sub(&fast, &slow),
            r_ff: sub(&fast, &fast),
            slow,
            fast,
            d,
        }
    }

    /// Unit vector in lifted coordinates with the given weights on doublet elements.
    fn target(&self, weights: &[(usize, f64)]) -> CVector {
        let mut t = CVector::zeros(self.slow.len() + self.fast.len());
        for &(i, w) in weights {
            if let Some(p) = self.slow.iter().position(|&k| k == i) {
                t[p] = Complex64::new(w, 0.0);
            }
        }
        t
    }

    /// Smallest doublet rate distinguishable from zero.
    fn rate_floor(&self) -> f64 {
        let d = self.d;
        let escape = (0..self.slow.len())
            .filter(|&p| self.slow[p] / d == self.slow[p] % d)
            .map(|p| self.r_ss[(p, p)].norm())
            .fold(0.0, f64::max);
        RESOLUTION_FACTOR * f64::EPSILON * escape
    }

    /// Non-stationary eigenvalue whose eigenvector best overlaps `target`,
    /// with the overlap table of the `μ = 0` reduction.
    fn slow_mode(&self, target: &CVector) -> Result<SlowMode> {
        let (m0, x0) = self.effective(ZERO)?;
        let (values, vectors) = linalg::eig(&m0)?;
        let lifted: Vec<CVector> =
            (0..values.len()).map(|k| self.lift(&vectors.column(k).into_owned(), &x0)).collect();
        let floor = self.rate_floor();
        let near_zero: Vec<CVector> =
            (0..values.len()).filter(|&k| values[k].norm() <= floor).map(|k| lifted[k].clone()).collect();
        let hidden = if floor > 0.0 && near_zero.len() > 1 { span_overlap(&near_zero, target) } else { 0.0 };
        let mut candidates: Vec<usize> = (0..values.len()).filter(|&k| self.trace_weight(&lifted[k]) < 0.5).collect();
        candidates.sort_by(|&x, &y| values[y].re.total_cmp(&values[x].re).then(values[x].im.total_cmp(&values[y].im)));
        let scale = candidates.iter().map(|&k| values[k].norm()).fold(0.0, f64::max);
        if scale == 0.0 && hidden < MIN_OVERLAP {
            return Ok(SlowMode::AllStationary);
        }
        let groups = groups_by_value(&values, &candidates, GROUPING_RTOL * scale);
        let overlaps: Vec<(Complex64, f64)> = groups
            .iter()
            .map(|g| {
                let vs: Vec<CVector> = g.iter().map(|&k| lifted[k].clone()).collect();
                (mean(&values, g), span_overlap(&vs, target))
            })
            .collect();
        if hidden >= MIN_OVERLAP {
            return Ok(SlowMode::Unresolved { overlap: hidden, floor, overlaps });
        }
        let Some(&(mut lambda, mut best)) = overlaps.iter().rev().max_by(|x, y| x.1.total_cmp(&y.1)) else {
            return Ok(SlowMode::AllStationary);
        };
        if !self.fast.is_empty() && best >= MIN_OVERLAP {
            for _ in 0..REFINE_MAX_ITER {
                let (m, x) = self.effective(lambda)?;
                let (vals, vecs) = linalg::eig(&m)?;
                let k = (0..vals.len())
                    .min_by(|&p, &q| (vals[p] - lambda).norm().total_cmp(&(vals[q] - lambda).norm()))
                    .expect("nonempty");
                let next = vals[k];
                let tol = GROUPING_RTOL * next.norm();
                let group: Vec<CVector> = (0..vals.len())
                    .filter(|&q| (vals[q] - next).norm() <= tol)
                    .map(|q| self.lift(&vecs.column(q).into_owned(), &x))
                    .collect();
                best = span_overlap(&group, target);
                let done = (next - lambda).norm() <= REFINE_RTOL * next.norm();
                lambda = next;
                if done {
                    break;
                }
            }
        }
        Ok(SlowMode::Found { lambda, overlap: best, overlaps })
    }
}

/// Magnetization reversal time of the fundamental pair.
///
/// In the connected block of `R` containing `ρ_aa`, the non-stationary
/// eigenvalue whose eigenvector best overlaps `(|a⟩⟨a| - |b⟩⟨b|)/√2` gives
/// `τ = -1/Re λ`. Slow doublet eigenvalues can sit many orders of magnitude
/// below `‖R‖`, so they are found from the Schur complement onto the doublet
/// elements, iterated to the exact eigenvalue (`λ ∈ spec M(λ)`), which keeps
/// their relative accuracy. Stationary modes are recognized by their nonzero
/// trace.
pub fn extract_tau(r: &Superoperator, es: &Eigensystem, pair: &KramersPair) -> Result<TauResult> {
    let d = es.dim();
    if r.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: r.dim() });
    }
    if r.basis() != es.tag {
        return Err(Error::BasisMismatch);
    }
    let (ia, ib) = (pair.a * d + pair.a, pair.b * d + pair.b);
    let Some(block) = r.coupled_blocks().into_iter().find(|b| b.contains(&ia)) else {
        return Ok(TauResult::unrelaxed());
    };
    if !block.contains(&ib) {
        return Ok(TauResult::unrelaxed());
    }
    let red = Reduction::new(r, &block, pair.a, pair.b);
    let s = core::f64::consts::FRAC_1_SQRT_2;
    let target = red.target(&[(ia, s), (ib, -s)]);
    let (lambda, best, overlaps) = match red.slow_mode(&target)? {
        SlowMode::AllStationary => return Ok(TauResult::unrelaxed()),
        SlowMode::Unresolved { overlap, floor, overlaps } => {
            return Ok(TauResult {
                tau_s: f64::NAN,
                tau_lower_bound_s: Some(1.0 / floor),
                overlap_score: overlap,
                eigenvalue_per_s: None,
                overlaps,
            })
        }
        SlowMode::Found { lambda, overlap, overlaps } => (lambda, overlap, overlaps),
    };
    if best < MIN_OVERLAP {
        return Err(Error::AmbiguousEigenvector { best, overlaps });
    }
    let tau_s = if lambda.re < 0.0 { -1.0 / lambda.re } else { f64::INFINITY };
    Ok(TauResult { tau_s, tau_lower_bound_s: None, overlap_score: best, eigenvalue_per_s: Some(lambda), overlaps })
}

fn check_pair(jumps: &[JumpOperator], a: usize, b: usize) -> Result<()> {
    if a == b {
        return Err(Error::InvalidArgument(alloc::format!("pair members coincide ({a})")));
    }
    if let Some(j) = jumps.first() {
        if a >= j.dim() || b >= j.dim() {
            return Err(Error::DimensionMismatch { expected: j.dim(), found: a.max(b) + 1 });
        }
    }
    Ok(())
}

fn time_from_rate(rate: f64) -> f64 {
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

/// `1/(2T1) = Σ_κ γ_κ [½ Σ_{j≠a} |L_ja|² + ½ Σ_{j≠b} |L_jb|²]`.
pub fn pair_t1(jumps: &[JumpOperator], a: usize, b: usize) -> Result<f64> {
    check_pair(jumps, a, b)?;
    let mut half_rate = 0.0;
    for j in jumps {
        let mut s = 0.0;
        for &(row, col, v) in j.elements() {
            if (col == a && row != a) || (col == b && row != b) {
                s += v.norm_sqr();
            }
        }
        half_rate += j.weight_per_s * 0.5 * s;
    }
    Ok(time_from_rate(2.0 * half_rate))
}

/// `1/T2* = Σ_κ γ_κ ½ |L_aa - L_bb|²`.
pub fn pair_t2star(jumps: &[JumpOperator], a: usize, b: usize) -> Result<f64> {
    check_pair(jumps, a, b)?;
    let rate: f64 = jumps.iter().map(|j| j.weight_per_s * 0.5 * (j.element(a, a) - j.element(b, b)).norm_sqr()).sum();
    Ok(time_from_rate(rate))
}

#[derive(Debug, Clone, PartialEq)]
pub struct T2Result {
    /// `-1 / Re R_{ab,ab}`.
    pub t2_s: f64,
    /// `ρ_ab` is coupled to other elements by `R`.
    pub coupled: bool,
    /// For a coupled coherence, `-1/Re λ` of the block eigenvalue whose
    /// eigenvector best overlaps `|a⟩⟨b|`.
    pub block_t2_s: Option<f64>,
    pub block_overlap: Option<f64>,
}

/// Coherence time of the pair `(a, b)` from the diagonal generator element.
pub fn pair_t2(r: &Superoperator, a: usize, b: usize) -> Result<T2Result> {
    let d = r.dim();
    if a == b || a >= d || b >= d {
        return Err(Error::InvalidArgument(alloc::format!("invalid coherence ({a}, {b}) for dimension {d}")));
    }
    let t2_s = time_from_rate(-r.element(a, b, a, b).re);
    let idx = a * d + b;
    let block = r.coupled_blocks().into_iter().find(|g| g.contains(&idx)).expect("every index has a block");
    if block.len() == 1 {
        return Ok(T2Result { t2_s, coupled: false, block_t2_s: None, block_overlap: None });
    }
    let red = Reduction::new(r, &block, a, b);
    let target = red.target(&[(idx, 1.0)]);
    let (block_t2_s, block_overlap) = match red.slow_mode(&target)? {
        SlowMode::Found { lambda, overlap, .. } => (Some(time_from_rate(-lambda.re)), Some(overlap)),
        SlowMode::Unresolved { .. } | SlowMode::AllStationary => (None, None),
    };
    Ok(T2Result { t2_s, coupled: true, block_t2_s, block_overlap })
}

/// Times for one temperature and generator order.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub temperature_k: f64,
    pub order: Order,
    pub tau_s: f64,
    pub t1_s: f64,
    pub t2_s: f64,
    pub t2star_s: f64,
    pub overlap_score: f64,
    pub tau_eigenvalue_per_s: Option<Complex64>,
    /// Set when `tau_s` is NaN because the rate is below numerical resolution.
    pub tau_lower_bound_s: Option<f64>,
    pub t2_coupled: bool,
    pub t2_block_s: Option<f64>,
}

/// Evaluates all times for the fundamental pair from a generator and the
/// jump operators it was assembled from.
pub fn rate_report(
    temperature_k: f64,
    r: &Superoperator,
    jumps: &[JumpOperator],
    es: &Eigensystem,
    pair: &KramersPair,
) -> Result<RateReport> {
    let tau = extract_tau(r, es, pair)?;
    let t2 = pair_t2(r, pair.a, pair.b)?;
    Ok(RateReport {
        temperature_k,
        order: r.order,
        tau_s: tau.tau_s,
        t1_s: pair_t1(jumps, pair.a, pair.b)?,
        t2_s: t2.t2_s,
        t2star_s: pair_t2star(jumps, pair.a, pair.b)?,
        overlap_score: tau.overlap_score,
        tau_eigenvalue_per_s: tau.eigenvalue_per_s,
        tau_lower_bound_s: tau.tau_lower_bound_s,
        t2_coupled: t2.coupled,
        t2_block_s: t2.block_t2_s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagationMethod {
    /// Exponential for `d² <= 1024`, Runge-Kutta above.
    Auto,
    /// `exp(R t)` per connected block.
    Exponential,
    /// Adaptive Dormand-Prince 5(4).
    RungeKutta,
}

pub const EXPONENTIAL_LIMIT: usize = 1024;
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = -1e-8;

fn vectorize(rho: &CMatrix) -> CVector {
    let d = rho.nrows();
    CVector::from_fn(d * d, |i, _| rho[(i / d, i % d)])
}

fn unvectorize(v: &CVector, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |a, b| v[a * d + b])
}

fn check_state(rho: &CMatrix, time: f64) -> Result<()> {
    let drift = (rho.trace() - ONE).norm();
    if drift > TRACE_TOL {
        return Err(Error::TraceViolation { time, drift });
    }
    let (values, _) = linalg::eigh(&linalg::hermitian_part(rho))?;
    let min = values.first().copied().unwrap_or(0.0);
    if min < POSITIVITY_TOL {
        return Err(Error::PositivityViolation { time, min_eigenvalue: min });
    }
    Ok(())
}

/// `ρ(t) = exp(R t) ρ0` on `times` (seconds, non-negative). Each state is
/// checked for unit trace and positivity.
pub fn propagate(r: &Superoperator, rho0: &CMatrix, times: &[f64]) -> Result<Vec<CMatrix>> {
    propagate_with(r, rho0, times, PropagationMethod::Auto)
}

pub fn propagate_with(
    r: &Superoperator,
    rho0: &CMatrix,
    times: &[f64],
    method: PropagationMethod,
) -> Result<Vec<CMatrix>> {
    let d = r.dim();
    if rho0.nrows() != d || rho0.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho0.nrows() });
    }
    if linalg::hermitian_deviation(rho0) > 1e-10 {
        return Err(Error::InvalidArgument("initial state is not Hermitian".into()));
    }
    if let Some(&t) = times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument(alloc::format!("invalid propagation time {t}")));
    }
    check_state(rho0, 0.0).map_err(|e| Error::InvalidArgument(alloc::format!("initial state rejected: {e}")))?;
    let method = match method {
        PropagationMethod::Auto if d * d <= EXPONENTIAL_LIMIT => PropagationMethod::Exponential,
        PropagationMethod::Auto => PropagationMethod::RungeKutta,
        m => m,
    };
    let v0 = vectorize(rho0);
    let states = match method {
        PropagationMethod::Exponential => propagate_exponential(r, &v0, times)?,
        _ => propagate_rk(r, &v0, times)?,
    };
    let mut out = Vec::with_capacity(times.len());
    for (v, &t) in states.iter().zip(times) {
        let rho = unvectorize(v, d);
        check_state(&rho, t)?;
        out.push(rho);
    }
    Ok(out)
}

fn propagate_exponential(r: &Superoperator, v0: &CVector, times: &[f64]) -> Result<Vec<CVector>> {
    let blocks: Vec<(Vec<usize>, CMatrix)> = r
        .coupled_blocks()
        .into_iter()
        .filter(|b| b.iter().any(|&i| v0[i] != ZERO))
        .map(|b| {
            let m = r.submatrix(&b);
            (b, m)
        })
        .collect();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let mut v = CVector::zeros(v0.len());
        for (idx, m) in &blocks {
            let x = CVector::from_fn(idx.len(), |k, _| v0[idx[k]]);
            let y = linalg::expm(&(m * Complex64::new(t, 0.0)))? * x;
            for (k, &i) in idx.iter().enumerate() {
                v[i] = y[k];
            }
        }
        out.push(v);
    }
    Ok(out)
}

// Dormand-Prince 5(4) tableau; R is time independent so the nodes are unused.
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

const RK_RTOL: f64 = 1e-11;
const RK_ATOL: f64 = 1e-13;

fn propagate_rk(r: &Superoperator, v0: &CVector, times: &[f64]) -> Result<Vec<CVector>> {
    let m = r.matrix();
    let scale = linalg::one_norm(m).max(f64::MIN_POSITIVE);
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&x, &y| times[x].total_cmp(&times[y]));
    let mut out = vec![CVector::zeros(0); times.len()];
    let mut t = 0.0;
    let mut v = v0.clone();
    let mut h = 0.1 / scale;
    let mut k: [CVector; 7] = core::array::from_fn(|_| CVector::zeros(v.len()));
    for &slot in &order {
        let target = times[slot];
        while t < target {
            let step = h.min(target - t);
            k[0] = m * &v;
            for s in 1..7 {
                let mut y = v.clone();
                for (q, &a) in DP_A[s].iter().enumerate().take(s) {
                    if a != 0.0 {
                        y.axpy(Complex64::new(step * a, 0.0), &k[q], ONE);
                    }
                }
                k[s] = m * &y;
            }
            let mut y5 = v.clone();
            let mut err = CVector::zeros(v.len());
            for s in 0..7 {
                y5.axpy(Complex64::new(step * DP_B5[s], 0.0), &k[s], ONE);
                err.axpy(Complex64::new(step * (DP_B5[s] - DP_B4[s]), 0.0), &k[s], ONE);
            }
            let mut e = 0.0f64;
            for i in 0..v.len() {
                let tol = RK_ATOL + RK_RTOL * v[i].norm().max(y5[i].norm());
                e = e.max(err[i].norm() / tol);
            }
            if e <= 1.0 {
                t += step;
                v = y5;
            }
            let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
            h = step * factor;
            if h < 1e-300 {
                return Err(Error::Internal("step size underflow in propagation".into()));
            }
        }
        out[slot] = v.clone();
    }
    Ok(out)
}

/// Stationary state of `R`: the null eigenvector of the block holding the
/// ground population, normalized to unit trace.
pub fn stationary_state(r: &Superoperator) -> Result<CMatrix> {
    let d = r.dim();
    let block = r.coupled_blocks().into_iter().find(|b| b.contains(&0)).expect("index 0 has a block");
    let (values, vectors) = linalg::eig(&r.submatrix(&block))?;
    let k = (0..values.len()).min_by(|&x, &y| values[x].norm().total_cmp(&values[y].norm())).expect("nonempty");
    let mut v = CVector::zeros(d * d);
    for (p, &i) in block.iter().enumerate() {
        v[i] = vectors[(p, k)];
    }
    let mut rho = unvectorize(&v, d);
    let tr = rho.trace();
    if tr.norm() == 0.0 {
        return Err(Error::Internal("stationary vector has zero trace".into()));
    }
    rho /= tr;
    Ok(rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// `rate = A exp(-U / k_B T)`.
    Arrhenius,
    /// `rate = c T^n`.
    PowerLaw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitParameters {
    Arrhenius { u_cm1: f64, prefactor_per_s: f64 },
    PowerLaw { exponent: f64, scale_per_s: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: FitModel,
    pub parameters: FitParameters,
    /// RMS of `ln(rate) - ln(fit)` over the used points.
    pub rms_log_residual: f64,
    /// Temperature range of the used points, K.
    pub window_k: (f64, f64),
    pub points_used: usize,
    /// Points with non-positive or non-finite rate or temperature.
    pub rejected: Vec<(f64, f64)>,
}

pub const MIN_FIT_POINTS: usize = 4;

/// Least-squares fit of `ln(rate)` against `1/T` (Arrhenius) or `ln T`
/// (power law).
pub fn fit_regimes(curve: &[(f64, f64)], model: FitModel) -> Result<FitResult> {
    let mut rejected = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut window = (f64::INFINITY, f64::NEG_INFINITY);
    for &(t, rate) in curve {
        if !(t > 0.0 && rate > 0.0 && t.is_finite() && rate.is_finite()) {
            rejected.push((t, rate));
            continue;
        }
        xs.push(match model {
            FitModel::Arrhenius => 1.0 / t,
            FitModel::PowerLaw => t.ln(),
        });
        ys.push(rate.ln());
        window = (window.0.min(t), window.1.max(t));
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidArgument(alloc::format!(
            "fit needs at least {MIN_FIT_POINTS} positive points, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("fit needs at least two distinct temperatures".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let parameters = match model {
        FitModel::Arrhenius => {
            FitParameters::Arrhenius { u_cm1: -slope * BOLTZMANN_CM1_PER_K, prefactor_per_s: intercept.exp() }
        }
        FitModel::PowerLaw => FitParameters::PowerLaw { exponent: slope, scale_per_s: intercept.exp() },
    };
    Ok(FitResult {
        model,
        parameters,
        rms_log_residual: (rss / n).sqrt(),
        window_k: window,
        points_used: xs.len(),
        rejected,
    })
}
