//! One line per acceptance criterion; exits nonzero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Rotation3, Unit, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spinrelax::deck::RunConfig;
use spinrelax::run;
use spinrelax_core::bath::{BroadeningPolicy, Channel, PhononMode};
use spinrelax_core::coupling::{self, HermiticityThresholds, StevensDerivative};
use spinrelax_core::dynamics::{self, FitModel, FitParameters, RateReport};
use spinrelax_core::generators::{GeneratorOptions, Order, Superoperator};
use spinrelax_core::linalg::CMatrix;
use spinrelax_core::pipeline::{CouplingSource, CouplingSpec, Prepared, Problem};
use spinrelax_core::spin::{self, SpinModel, StevensTerm};

use common::{load, prepare, rel, Kernel};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn five_temperatures(name: &str) -> [f64; 5] {
    match name {
        "spin_half_zeeman" => [1.0, 2.0, 4.0, 8.0, 16.0],
        "two_doublet_axial" => [4.0, 10.0, 20.0, 40.0, 80.0],
        _ => [5.0, 10.0, 20.0, 40.0, 60.0],
    }
}

/// Second-order and cumulative fourth-order generators.
fn generators(p: &Prepared, t: f64) -> Vec<(Order, Superoperator)> {
    let bath = p.bath(t).unwrap();
    let second = p.second_order(&bath).unwrap();
    let fourth = p.fourth_order(&bath).unwrap();
    let both = Prepared::combine(&second, &fourth).unwrap();
    vec![(Order::Second, second.generator), (Order::Fourth, both.generator)]
}

fn projector(d: usize, amps: &[(usize, f64)]) -> CMatrix {
    let mut v = nalgebra::DVector::<Complex64>::zeros(d);
    for &(i, x) in amps {
        v[i] = Complex64::new(x, 0.0);
    }
    let v = v.normalize();
    &v * v.adjoint()
}

fn min_eigenvalue(rho: &CMatrix) -> f64 {
    let h = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().fold(f64::INFINITY, |m, &x| m.min(x))
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut checked = 0;
    let mut worst_trace = 0.0f64;
    let mut worst_re = f64::NEG_INFINITY;
    let mut worst_min = f64::INFINITY;
    for name in common::DECKS {
        let p = prepare(&load(name));
        let d = p.eigensystem.dim();
        let (a, b) = (p.pair.a, p.pair.b);
        let top = d - 1;
        let states = [
            projector(d, &[(a, 1.0)]),
            projector(d, &[(a, 1.0), (b, 1.0)]),
            projector(d, &[(a, 1.0), (top, 0.6)]),
        ];
        for t in five_temperatures(name) {
            for (order, r) in generators(&p, t) {
                let norm = r.frobenius_norm();
                let defect = r.trace_defect();
                worst_trace = worst_trace.max(defect / norm);
                ensure(defect <= 1e-10 * norm, || format!("{name} T={t} order {}: trace defect {defect:e}", order.as_u8()))?;
                let max_re = r.spectrum().unwrap().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
                worst_re = worst_re.max(max_re / norm);
                ensure(max_re <= 1e-10 * norm, || format!("{name} T={t}: Re λ = {max_re:e}"))?;
                let times: Vec<f64> = (0..9).map(|k| 10f64.powi(k - 2) / norm).collect();
                for rho0 in &states {
                    let traj = dynamics::propagate(&r, rho0, &times)
                        .map_err(|e| format!("{name} T={t} order {}: {e}", order.as_u8()))?;
                    for rho in &traj {
                        let m = min_eigenvalue(rho);
                        worst_min = worst_min.min(m);
                        ensure(m >= -1e-8, || format!("{name} T={t}: min eigenvalue {m:e}"))?;
                    }
                }
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {:.1} s", elapsed.as_secs_f64()))?;
    Ok(format!(
        "{checked} generators; max trace defect {worst_trace:.1e}·‖R‖, max Re λ {worst_re:.1e}·‖R‖, \
         min eigenvalue {worst_min:.1e}; {:.1} s",
        elapsed.as_secs_f64()
    ))
}

fn oracle_problem(field: [f64; 3], omegas: [f64; 3]) -> Problem {
    let model = SpinModel::new(3, vec![StevensTerm::new(2, 0, -50.0).unwrap()], 0.8, field).unwrap();
    let modes: Vec<PhononMode> = omegas.iter().enumerate().map(|(k, &w)| PhononMode::new(k, w).unwrap()).collect();
    let couplings = (0..3)
        .map(|k| {
            let x = k as f64;
            let terms = vec![
                StevensDerivative { l: 2, m: 1, value_cm1: (0.3 * x + 0.2).cos() },
                StevensDerivative { l: 2, m: -1, value_cm1: (0.7 * x + 0.4).sin() },
                StevensDerivative { l: 2, m: 2, value_cm1: 0.1 * (1.3 * x).cos() },
                StevensDerivative { l: 2, m: -2, value_cm1: 0.1 * (0.9 * x + 0.5).sin() },
                StevensDerivative { l: 2, m: 0, value_cm1: 0.3 * (0.5 * x).cos() },
            ];
            CouplingSpec { mode_index: k, source: CouplingSource::Stevens(terms) }
        })
        .collect();
    Problem {
        model,
        modes,
        couplings,
        broadening: BroadeningPolicy::default(),
        options: GeneratorOptions { channels: Channel::ALL.to_vec(), ..Default::default() },
        rotate_to_easy_axis: false,
        hermiticity: HermiticityThresholds::default(),
    }
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let kernel = Kernel::gaussian(3.0, 5.0);
    let mut worst = 0.0f64;
    for field in [[0.0; 3], [0.3, -0.2, 1.0]] {
        let p = oracle_problem(field, [148.0, 152.0, 301.0]).prepare().unwrap();
        for t in [10.0, 40.0, 150.0] {
            let bath = p.bath(t).unwrap();
            let k2 = p.second_order(&bath).unwrap().generator.population_block();
            let o2 = common::oracle_population_2(&p, t, &kernel);
            let k4 = p.fourth_order(&bath).unwrap().generator.population_block();
            let o4 = common::oracle_population_4(&p, t, &kernel, p.options.regularizer_cm1, &p.options.channels);
            ensure(o2.iter().any(|&x| x > 0.0) && o4.iter().any(|&x| x > 0.0), || "oracle rates vanish".into())?;
            for (lib, ora, what) in [(&k2, &o2, "one-phonon"), (&k4, &o4, "two-phonon")] {
                let dev = common::max_rel_deviation(lib, ora, 1e-14);
                worst = worst.max(dev);
                ensure(dev <= 1e-10, || format!("{what} block at T={t}, field {field:?}: rel deviation {dev:e}"))?;
            }
        }
    }
    // Decay of the doublet population difference under propagation. At zero
    // field fewer than three resonant modes leave a conserved doublet axis.
    let mut worst_decay = 0.0f64;
    let p = oracle_problem([0.0; 3], [296.0, 300.5, 304.0]).prepare().unwrap();
    for t in [60.0, 100.0] {
        let bath = p.bath(t).unwrap();
        let second = p.second_order(&bath).unwrap();
        let full = Prepared::combine(&second, &p.fourth_order(&bath).unwrap()).unwrap();
        for terms in [&second, &full] {
            let r = &terms.generator;
            let tau = dynamics::extract_tau(r, &p.eigensystem, &p.pair).unwrap();
            let lambda = tau.eigenvalue_per_s.ok_or("no τ eigenvalue")?.re;
            let fast = r
                .spectrum()
                .unwrap()
                .iter()
                .map(|z| -z.re)
                .filter(|&x| x > 2.0 * -lambda)
                .fold(f64::INFINITY, f64::min);
            let t1 = 40.0 / fast;
            let t2 = t1 + 1.0 / -lambda;
            let rho0 = projector(p.eigensystem.dim(), &[(p.pair.a, 1.0)]);
            let traj = dynamics::propagate(r, &rho0, &[t1, t2]).map_err(|e| e.to_string())?;
            let diff = |rho: &CMatrix| (rho[(p.pair.a, p.pair.a)] - rho[(p.pair.b, p.pair.b)]).re;
            let fitted = (diff(&traj[1]) / diff(&traj[0])).ln() / (t2 - t1);
            let dev = rel(fitted, lambda);
            worst_decay = worst_decay.max(dev);
            ensure(dev <= 1e-6, || format!("T={t}: fitted {fitted:e} vs eigenvalue {lambda:e}"))?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {:.1} s", elapsed.as_secs_f64()))?;
    Ok(format!(
        "population blocks within {worst:.1e}, propagated decay within {worst_decay:.1e}; {:.1} s",
        elapsed.as_secs_f64()
    ))
}

fn criterion_3() -> Check {
    let model = SpinModel::new(3, vec![StevensTerm::new(2, 0, -5.0).unwrap()], 0.8, [0.3, 0.4, 1.2]).unwrap();
    let es = model.eigensystem().unwrap();
    let d = es.dim();
    let mut gaps = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            gaps.push(es.energies[j] - es.energies[i]);
        }
    }
    let modes: Vec<PhononMode> = gaps.iter().enumerate().map(|(k, &w)| PhononMode::new(k, w).unwrap()).collect();
    let couplings = (0..gaps.len())
        .map(|k| {
            let x = k as f64;
            let terms = vec![
                StevensDerivative { l: 2, m: 1, value_cm1: (0.8 * x + 0.1).cos() },
                StevensDerivative { l: 2, m: -2, value_cm1: 0.5 * (0.6 * x + 0.3).sin() },
                StevensDerivative { l: 2, m: 0, value_cm1: 0.2 },
                StevensDerivative { l: 2, m: 2, value_cm1: 0.3 * (1.1 * x).cos() },
            ];
            CouplingSpec { mode_index: k, source: CouplingSource::Stevens(terms) }
        })
        .collect();
    let problem = Problem {
        model,
        modes,
        couplings,
        broadening: BroadeningPolicy::exact(1e-9).unwrap(),
        options: GeneratorOptions::default(),
        rotate_to_easy_axis: false,
        hermiticity: HermiticityThresholds::default(),
    };
    let p = problem.prepare().unwrap();
    let kb = spinrelax_core::constants::BOLTZMANN_CM1_PER_K;
    let mut worst = 0.0f64;
    for t in [2.0, 10.0, 50.0] {
        let r = p.second_order(&p.bath(t).unwrap()).unwrap().generator;
        let k = r.population_block();
        let w: Vec<f64> = p.eigensystem.energies.iter().map(|e| (-e / (kb * t)).exp()).collect();
        let z: f64 = w.iter().sum();
        let gibbs: Vec<f64> = w.iter().map(|x| x / z).collect();
        let flux = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| k[(i, j)] * gibbs[j]).fold(0.0, f64::max);
        ensure(flux > 0.0, || "no transitions".into())?;
        for i in 0..d {
            for j in 0..d {
                let imbalance = (k[(i, j)] * gibbs[j] - k[(j, i)] * gibbs[i]).abs() / flux;
                worst = worst.max(imbalance);
            }
        }
        let rho = dynamics::stationary_state(&r).unwrap();
        let num: f64 = (0..d).map(|i| (rho[(i, i)].re - gibbs[i]).powi(2)).sum::<f64>().sqrt();
        let den: f64 = gibbs.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(num / den);
        ensure(worst <= 1e-8, || format!("T={t}: deviation from Gibbs {worst:e}"))?;
    }
    Ok(format!("max relative deviation {worst:.1e} at 2, 10, 50 K"))
}

fn deck_reports(name: &str) -> Vec<RateReport> {
    run::run(&load(name)).unwrap().rows.into_iter().map(|r| r.report).collect()
}

fn criterion_4() -> Check {
    let mut worst = 0.0f64;
    let mut n = 0;
    for name in common::DECKS {
        for r in deck_reports(name) {
            let lhs = 1.0 / r.t2_s;
            let rhs = 1.0 / (2.0 * r.t1_s) + 1.0 / r.t2star_s;
            let dev = rel(lhs, rhs);
            worst = worst.max(dev);
            ensure(dev <= 1e-9, || format!("{name} T={} order {}: {lhs:e} vs {rhs:e}", r.temperature_k, r.order.as_u8()))?;
            n += 1;
        }
    }
    Ok(format!("{n} points, max relative deviation {worst:.1e}"))
}

fn criterion_5() -> Check {
    let mut n = 0;
    for name in common::DECKS {
        let mut cfg = load(name);
        cfg.bath.broadening.kind = "exact".into();
        cfg.bath.broadening.width_cm1 = 1e-6;
        cfg.sweep.orders = vec![2];
        for r in run::run(&cfg).unwrap().rows {
            let dephasing = 1.0 / r.report.t2star_s;
            let scale = 1.0 / r.report.t1_s;
            ensure(dephasing <= f64::EPSILON * scale, || {
                format!("{name} T={}: 1/T2* = {dephasing:e}", r.report.temperature_k)
            })?;
            n += 1;
        }
    }
    Ok(format!("1/T2* = 0 at {n} points"))
}

fn criterion_6() -> Check {
    let cfg = load("two_doublet_axial");
    let mut ratios = Vec::new();
    for r in deck_reports("two_doublet_axial") {
        if r.order != Order::Fourth || r.temperature_k > 10.0 {
            continue;
        }
        let ratio = (1.0 / r.t2star_s) / (1.0 / (2.0 * r.t1_s));
        ensure(ratio > 10.0, || format!("T={}: ratio {ratio:.2}", r.temperature_k))?;
        ratios.push(format!("{}K {ratio:.0}", r.temperature_k));
    }
    ensure(!ratios.is_empty(), || format!("no low-T points in {:?}", cfg.sweep.temperatures_k))?;
    Ok(format!("(1/T2*)/(1/2T1) = {}", ratios.join(", ")))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
    let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), rng.gen_range(0.1..3.0))
}

fn rotated_problem(base: &Problem, rot: &Rotation3<f64>) -> Problem {
    let j = &base.model.angular_momentum;
    let d = spin::rotation_operator(j, rot).unwrap();
    let couplings = base
        .couplings
        .iter()
        .map(|c| {
            let source = match &c.source {
                CouplingSource::Stevens(t) => CouplingSource::Stevens(coupling::rotate_derivatives(t, j, rot).unwrap()),
                CouplingSource::Matrix { matrix, basis } => {
                    CouplingSource::Matrix { matrix: &d * matrix * d.adjoint(), basis: *basis }
                }
            };
            CouplingSpec { mode_index: c.mode_index, source }
        })
        .collect();
    Problem { model: base.model.rotated(rot).unwrap(), couplings, ..base.clone() }
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for name in common::DECKS {
        let cfg = load(name);
        let base = run::problem(&cfg, cfg.spin.field_t).unwrap();
        let temps = [cfg.sweep.temperatures_k[1], *cfg.sweep.temperatures_k.last().unwrap()];
        let orders = [Order::Second, Order::Fourth];
        let reference: Vec<RateReport> = {
            let p = base.prepare().unwrap();
            temps.iter().flat_map(|&t| p.evaluate(t, &orders).unwrap()).collect()
        };
        for _ in 0..3 {
            let rot = random_rotation(&mut rng);
            let p = rotated_problem(&base, &rot).prepare().unwrap();
            let turned: Vec<RateReport> = temps.iter().flat_map(|&t| p.evaluate(t, &orders).unwrap()).collect();
            for (x, y) in reference.iter().zip(&turned) {
                for (q, u, v) in [("tau", x.tau_s, y.tau_s), ("T1", x.t1_s, y.t1_s), ("T2*", x.t2star_s, y.t2star_s)] {
                    let dev = rel(u, v);
                    worst = worst.max(dev);
                    ensure(dev < 1e-6, || format!("{name} T={} {q}: {u:e} vs {v:e}", x.temperature_k))?;
                }
            }
        }
    }
    Ok(format!("3 rotations per deck, max relative change {worst:.1e}"))
}

fn criterion_8() -> Check {
    let mut cfg = load("two_doublet_axial");
    cfg.sweep.orders = vec![2];
    let [lo, hi] = cfg.fit.arrhenius_window_k.ok_or("deck has no Arrhenius window")?;
    let p = prepare(&cfg);
    let kd1 = p.eigensystem.energies[2];
    let out = run::run(&cfg).unwrap();
    let curve: Vec<(f64, f64)> = out
        .rows
        .iter()
        .filter(|r| r.report.temperature_k >= lo && r.report.temperature_k <= hi)
        .map(|r| (r.report.temperature_k, 1.0 / r.report.t1_s))
        .collect();
    let fit = dynamics::fit_regimes(&curve, FitModel::Arrhenius).map_err(|e| e.to_string())?;
    let FitParameters::Arrhenius { u_cm1, .. } = fit.parameters else {
        return Err("wrong fit model".into());
    };
    let dev = rel(u_cm1, kd1);
    ensure(dev < 0.05, || format!("U = {u_cm1:.1} vs first excited doublet {kd1:.1} cm^-1"))?;
    Ok(format!("U = {u_cm1:.1} cm^-1 vs {kd1:.1} cm^-1 ({:.1}%), {} points", 100.0 * dev, fit.points_used))
}

fn synthetic_problem(workers: usize) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let terms = vec![
        StevensTerm::new(2, 0, -5.0).unwrap(),
        StevensTerm::new(2, 2, 3.0).unwrap(),
        StevensTerm::new(4, 0, -1e-4).unwrap(),
        StevensTerm::new(4, 4, 5e-5).unwrap(),
    ];
    let model = SpinModel::new(15, terms, 4.0 / 3.0, [0.0; 3]).unwrap();
    let modes: Vec<PhononMode> =
        (0..200).map(|k| PhononMode::new(k, 15.0 + 4.5 * k as f64 + rng.gen_range(0.0..2.0)).unwrap()).collect();
    let couplings = (0..200)
        .map(|k| {
            let mut terms = Vec::new();
            for m in -2..=2 {
                terms.push(StevensDerivative { l: 2, m, value_cm1: rng.gen_range(-0.05..0.05) });
            }
            terms.push(StevensDerivative { l: 4, m: 1, value_cm1: rng.gen_range(-5e-4..5e-4) });
            CouplingSpec { mode_index: k, source: CouplingSource::Stevens(terms) }
        })
        .collect();
    Problem {
        model,
        modes,
        couplings,
        broadening: BroadeningPolicy::default(),
        options: GeneratorOptions { pair_cutoff_sigmas: Some(3.0), workers, ..Default::default() },
        rotate_to_easy_axis: true,
        hermiticity: HermiticityThresholds::default(),
    }
}

fn matrix_rel(x: &DMatrix<Complex64>, y: &DMatrix<Complex64>) -> f64 {
    (x - y).norm() / y.norm()
}

fn criterion_9() -> Check {
    let t = 40.0;
    let mut builds = Vec::new();
    for workers in [1, 4] {
        let p = synthetic_problem(workers).prepare().unwrap();
        let bath = p.bath(t).unwrap();
        let start = Instant::now();
        let fourth = p.fourth_order(&bath).unwrap();
        let elapsed = start.elapsed();
        let second = p.second_order(&bath).unwrap();
        let both = Prepared::combine(&second, &fourth).unwrap();
        let report = p.report(t, &both).unwrap();
        builds.push((workers, elapsed, fourth, report));
    }
    let (_, t1, f1, r1) = &builds[0];
    let (_, t4, f4, r4) = &builds[1];
    ensure(*t1 < Duration::from_secs(60) && *t4 < Duration::from_secs(60), || {
        format!("build took {:.1} s / {:.1} s", t1.as_secs_f64(), t4.as_secs_f64())
    })?;
    let dev_r = matrix_rel(f4.generator.matrix(), f1.generator.matrix());
    let mut worst = dev_r;
    for (u, v) in [(r1.tau_s, r4.tau_s), (r1.t1_s, r4.t1_s), (r1.t2_s, r4.t2_s), (r1.t2star_s, r4.t2star_s)] {
        worst = worst.max(rel(u, v));
    }
    ensure(worst <= 1e-12, || format!("workers 1 vs 4 differ by {worst:e} (generator {dev_r:e}; {r1:?} vs {r4:?})"))?;
    Ok(format!(
        "{} jump operators; build {:.1} s (1 worker), {:.1} s (4 workers); max relative difference {worst:.1e}",
        f1.jumps.len(),
        t1.as_secs_f64(),
        t4.as_secs_f64()
    ))
}

/// `⟨M|O_l^0|M⟩` from the closed-form polynomials in `M` and `X = J(J+1)`.
fn axial_diagonal(l: i32, j: f64, m: f64) -> f64 {
    let x = j * (j + 1.0);
    let m2 = m * m;
    match l {
        2 => 3.0 * m2 - x,
        4 => 35.0 * m2 * m2 - 30.0 * x * m2 + 25.0 * m2 - 6.0 * x + 3.0 * x * x,
        6 => {
            231.0 * m2 * m2 * m2 - 315.0 * x * m2 * m2 + 735.0 * m2 * m2 + 105.0 * x * x * m2 - 525.0 * x * m2
                + 294.0 * m2
                - 5.0 * x * x * x
                + 40.0 * x * x
                - 60.0 * x
        }
        _ => unreachable!(),
    }
}

fn axial_deck(rng: &mut ChaCha8Rng) -> (String, u32, Vec<(i32, f64)>) {
    let two_j = [3, 5, 7, 9, 11, 13, 15][rng.gen_range(0..7)];
    let b = vec![(2, rng.gen_range(-8.0..8.0)), (4, rng.gen_range(-0.02..0.02)), (6, rng.gen_range(-2e-4..2e-4))];
    let stevens: Vec<String> = b.iter().map(|(l, v)| format!("{{ l = {l}, m = 0, B_cm1 = {v:e} }}")).collect();
    let text = format!(
        "[spin]\ntwo_j = {two_j}\ng_j = 1.2\nrotate_to_easy_axis = false\nstevens = [{}]\n\n\
         [bath]\nmodes_cm1 = [50.0]\n\n[sweep]\ntemperatures_K = [10.0]\n",
        stevens.join(", ")
    );
    (text, two_j, b)
}

fn criterion_10() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_split = 0.0f64;
    let mut worst_energy = 0.0f64;
    for k in 0..20 {
        let (text, two_j, b) = axial_deck(&mut rng);
        let cfg: RunConfig = common::parse(&text);
        let p = prepare(&cfg);
        let j = two_j as f64 / 2.0;
        let mut diag: Vec<(f64, f64)> = (0..=two_j)
            .map(|i| {
                let m = -j + i as f64;
                (b.iter().map(|&(l, v)| v * axial_diagonal(l, j, m)).sum(), m)
            })
            .collect();
        diag.sort_by(|x, y| x.0.total_cmp(&y.0));
        let e0 = diag[0].0;
        let span = diag.last().unwrap().0 - e0;
        for (i, (e, _)) in diag.iter().enumerate() {
            let dev = (p.eigensystem.energies[i] - (e - e0)).abs() / span;
            worst_energy = worst_energy.max(dev);
            ensure(dev < 1e-9, || format!("deck {k}: level {i} off by {dev:e}"))?;
        }
        let m_star = diag[0].1.abs();
        let pair = p.pair;
        ensure(
            (pair.jz_a - m_star).abs() < 1e-9 && (pair.jz_b + m_star).abs() < 1e-9 && !pair.ambiguous,
            || format!("deck {k}: pair ⟨Jz⟩ = ({}, {}), expected ±{m_star}", pair.jz_a, pair.jz_b),
        )?;
        ensure(p.eigensystem.energies[pair.a] == 0.0 || p.eigensystem.energies[pair.b] == 0.0, || {
            format!("deck {k}: fundamental pair is not the ground doublet")
        })?;
        // The same deck with random transverse even-rank terms stays Kramers degenerate.
        let mut cfg = cfg.clone();
        for l in [2, 4, 6] {
            for m in 1..=l {
                let scale = match l {
                    2 => 1.0,
                    4 => 0.005,
                    _ => 5e-5,
                };
                for sign in [1, -1] {
                    cfg.spin.stevens.push(spinrelax::deck::StevensEntry {
                        l,
                        m: sign * m,
                        b_cm1: scale * rng.gen_range(-1.0..1.0),
                    });
                }
            }
        }
        let es = prepare(&cfg).eigensystem;
        let span = es.energies.last().unwrap() - es.energies[0];
        for pair in es.energies.chunks(2) {
            let split = (pair[1] - pair[0]) / span;
            worst_split = worst_split.max(split);
            ensure(split < 1e-9, || format!("deck {k}: doublet split {split:e}"))?;
        }
    }
    Ok(format!(
        "20 decks; levels within {worst_energy:.1e}, ground doublet ±M identified, doublet splitting ≤ {worst_split:.1e}"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("CPTP generators and positive propagation", criterion_1),
        ("oracle equivalence", criterion_2),
        ("detailed balance", criterion_3),
        ("decomposition identity", criterion_4),
        ("second-order exact-delta dephasing vanishes", criterion_5),
        ("fourth-order dephasing dominance", criterion_6),
        ("rotational invariance", criterion_7),
        ("Arrhenius barrier from T1", criterion_8),
        ("200-mode build time and worker determinism", criterion_9),
        ("Kramers degeneracy and ground doublet", criterion_10),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} ({name}): PASS ({detail})", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL ({detail})", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
