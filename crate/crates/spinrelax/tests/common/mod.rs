#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use spinrelax::deck::{self, RunConfig};
use spinrelax::run;
use spinrelax_core::bath::Channel;
use spinrelax_core::pipeline::Prepared;

pub const DECKS: [&str; 3] = ["spin_half_zeeman", "two_doublet_axial", "easy_axis_j15_2"];

const KB_CM1_PER_K: f64 = 0.6950348004;
const C_CM_PER_S: f64 = 2.99792458e10;

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn deck_path(name: &str) -> PathBuf {
    crate_dir().join("decks").join(format!("{name}.toml"))
}

pub fn load(name: &str) -> RunConfig {
    deck::load(&deck_path(name)).unwrap_or_else(|e| panic!("{name}: {e}")).config
}

pub fn parse(text: &str) -> RunConfig {
    deck::parse_str(text, Path::new(".")).unwrap_or_else(|e| panic!("{e}: {e:?}"))
}

pub fn prepare(cfg: &RunConfig) -> Prepared {
    run::problem(cfg, cfg.spin.field_t).unwrap().prepare().unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn bose(omega: f64, t: f64) -> f64 {
    1.0 / (omega / (KB_CM1_PER_K * t)).exp_m1()
}

/// `2π/ħ · x` for `x = |V|² ρ` with `V` in cm⁻¹ and `ρ` per cm⁻¹.
fn golden_rule(x: f64) -> f64 {
    4.0 * PI * PI * C_CM_PER_S * x
}

/// Truncated Gaussian normalized by quadrature over its window.
pub struct Kernel {
    width: f64,
    cutoff: f64,
    norm: f64,
}

impl Kernel {
    pub fn gaussian(width: f64, cutoff: f64) -> Self {
        let n = 40_000;
        let (a, b) = (-cutoff * width, cutoff * width);
        let h = (b - a) / n as f64;
        let f = |x: f64| (-0.5 * (x / width).powi(2)).exp();
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        Self { width, cutoff, norm: s * h / 3.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x.abs() > self.cutoff * self.width {
            0.0
        } else {
            (-0.5 * (x / self.width).powi(2)).exp() / self.norm
        }
    }
}

/// Population transfer matrix `K[b][a]` (rate a→b, columns summing to zero)
/// from one-phonon golden-rule rates.
pub fn oracle_population_2(p: &Prepared, t: f64, kernel: &Kernel) -> DMatrix<f64> {
    let es = &p.eigensystem;
    let d = es.dim();
    let mut k = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            if a == b {
                continue;
            }
            let w = es.energies[b] - es.energies[a];
            let mut rate = 0.0;
            for v in &p.couplings {
                let mode = p.modes.iter().find(|m| m.index == v.mode_index).unwrap();
                let n = bose(mode.omega_cm1, t);
                let g = kernel.eval(w - mode.omega_cm1) * n + kernel.eval(w + mode.omega_cm1) * (n + 1.0);
                rate += golden_rule(v.matrix()[(b, a)].norm_sqr() * g);
            }
            k[(b, a)] = rate;
        }
    }
    close_columns(&mut k);
    k
}

fn close_columns(k: &mut DMatrix<f64>) {
    for a in 0..k.ncols() {
        let out: f64 = (0..k.nrows()).filter(|&b| b != a).map(|b| k[(b, a)]).sum();
        k[(a, a)] = -out;
    }
}

/// Two-phonon rates over the selected channels: Raman over ordered pairs of
/// distinct modes, double absorption and emission over unordered pairs, each
/// with the full second-order amplitude summed over intermediate states.
pub fn oracle_population_4(p: &Prepared, t: f64, kernel: &Kernel, eta: f64, channels: &[Channel]) -> DMatrix<f64> {
    let raman = channels.contains(&Channel::AbsorptionEmission);
    let absorb = channels.contains(&Channel::DoubleAbsorption);
    let emit = channels.contains(&Channel::DoubleEmission);
    let es = &p.eigensystem;
    let d = es.dim();
    let e = &es.energies;
    let ops: Vec<(f64, &nalgebra::DMatrix<Complex64>)> = p
        .couplings
        .iter()
        .map(|v| (p.modes.iter().find(|m| m.index == v.mode_index).unwrap().omega_cm1, v.matrix()))
        .collect();
    // Amplitude for a → b with phonon energies handed to the spin `dx`, `dy`
    // (positive when absorbed) when x (then y) or y (then x) acts first.
    let amplitude = |b: usize, a: usize, vx: &DMatrix<Complex64>, dx: f64, vy: &DMatrix<Complex64>, dy: f64| {
        let mut s = Complex64::new(0.0, 0.0);
        for c in 0..d {
            s += vy[(b, c)] * vx[(c, a)] / Complex64::new(e[c] - e[a] - dx, eta);
            s += vx[(b, c)] * vy[(c, a)] / Complex64::new(e[c] - e[a] - dy, eta);
        }
        s
    };
    let mut k = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            if a == b {
                continue;
            }
            let w = e[b] - e[a];
            let mut rate = 0.0;
            for (i, &(wi, vi)) in ops.iter().enumerate() {
                for (j, &(wj, vj)) in ops.iter().enumerate() {
                    let (ni, nj) = (bose(wi, t), bose(wj, t));
                    if raman && i != j {
                        // i absorbed, j emitted.
                        let amp = amplitude(b, a, vi, wi, vj, -wj);
                        rate += golden_rule(amp.norm_sqr() * kernel.eval(w - (wi - wj)) * ni * (nj + 1.0));
                    }
                    if absorb && i < j {
                        let amp = amplitude(b, a, vi, wi, vj, wj);
                        rate += golden_rule(amp.norm_sqr() * kernel.eval(w - (wi + wj)) * ni * nj);
                    }
                    if emit && i < j {
                        let amp = amplitude(b, a, vi, -wi, vj, -wj);
                        rate += golden_rule(amp.norm_sqr() * kernel.eval(w + wi + wj) * (ni + 1.0) * (nj + 1.0));
                    }
                }
            }
            k[(b, a)] = rate;
        }
    }
    close_columns(&mut k);
    k
}

/// Largest elementwise relative deviation, with entries below `floor` of
/// the largest magnitude compared absolutely.
pub fn max_rel_deviation(x: &DMatrix<f64>, y: &DMatrix<f64>, floor: f64) -> f64 {
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x.iter()
        .zip(y.iter())
        .map(|(&p, &q)| (p - q).abs() / q.abs().max(floor * scale).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}
