//! Acceptance criteria. Run with `cargo test --test acceptance`; prints one
//! line per criterion and exits nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use mixfield::ergodiag::{
    cells_for_frequency, cesaro_atom_bound, cesaro_average, ergodic_time_average, fourier_of_atoms,
    time_average_grid, ErgodicVerdict,
};
use mixfield::experiment::{self, presets::PRESETS, ModelSpec};
use mixfield::field::IdField;
use mixfield::idlaw::{find_admissible_scale, scan_atoms_2pi, Atom};
use mixfield::mixdiag::{
    codifference_analytic, codifference_oracle, combined_criterion, empirical_threshold, maruyama_check,
    pair_mixing_criterion, rescaled_criterion, smallball_trace, sum_of_independents_check, Verdict,
    DEFAULT_DELTAS,
};
use mixfield::realization::SimulationSpec;
use mixfield::sequence::SequenceSpec;
use mixfield::Error;
use num_complex::Complex64;
use rand::Rng;

const CODIFF_TOL: f64 = 1e-8;
const OU_TOL: f64 = 1e-6;
const DECAY_RATIO: f64 = 1e-6;
const MIN_SHAPES: usize = 3;
const GAP_TOL: f64 = 1e-9;
const LISTED_GAP_DECIMAL: f64 = 0.60116;
const ERGODIC_REPLICATES: usize = 64;
const ERGODIC_HORIZON: f64 = 100.0;
const MC_REPLICATES: usize = 10_000;
const THETA_POINTS: usize = 21;
const CESARO_HORIZONS: [f64; 3] = [10.0, 100.0, 1000.0];
const MM2_FALL: f64 = 1e-3;
const SMALLBALL_FALL: f64 = 1e-2;
const ADDITIVITY_TOL: f64 = 1e-9;

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn criterion1() -> Outcome {
    let mut r = common::rng(0xC0D1);
    let mut worst = 0.0f64;
    let mut evaluated = 0;
    for _ in 0..20 {
        let model = common::random_atomic_mma(&mut r);
        let q = model.q();
        for _ in 0..10 {
            let t = vec![r.random_range(-3.0..3.0)];
            let j = r.random_range(0..q);
            let k = r.random_range(0..q);
            let a = codifference_analytic(&model, &t, j, k).map_err(err)?;
            let (o, _) = codifference_oracle(&model, &t, j, k).map_err(err)?;
            worst = worst.max((a - o).norm());
            evaluated += 1;
        }
    }
    ensure(worst <= CODIFF_TOL, format!("max |analytic - oracle| = {worst:e} > {CODIFF_TOL:e}"))?;
    Ok(format!("{evaluated} lags, max |analytic - oracle| = {worst:.3e}"))
}

fn criterion2() -> Outcome {
    let mut worst = 0.0f64;
    for lambda in [0.5, 1.0, 2.0] {
        let model = common::ou_gaussian(lambda);
        let s_int = model.marginal().map_err(err)?.sigma()[(0, 0)];
        worst = worst.max((s_int - 1.0 / (2.0 * lambda)).abs());
        let seq = SequenceSpec::axis(1, 0.0, 0.5, 21).map_err(err)?;
        for p in seq.points() {
            let want = (-lambda * p[0]).exp() / (2.0 * lambda);
            let got = model.gauss_cross(&p).map_err(err)?.value[(0, 0)];
            worst = worst.max((got - want).abs());
        }
        let trace = combined_criterion(&model, &seq).map_err(err)?;
        for tp in &trace.points {
            let want = (-lambda * tp.t[0]).exp() / (2.0 * lambda);
            worst = worst.max((tp.value - want).abs());
        }
    }
    ensure(worst <= OU_TOL, format!("max deviation {worst:e} > {OU_TOL:e}"))?;
    Ok(format!("max deviation from closed forms {worst:.3e}"))
}

fn criterion3() -> Outcome {
    let mut lines = Vec::new();
    for p in PRESETS {
        let cfg = p.config();
        if matches!(cfg.model.resolve().map_err(err)?, ModelSpec::Constant { .. }) {
            continue;
        }
        let built = cfg.model.build().map_err(err)?;
        let shapes = cfg.sequence.shapes(built.field.l()).map_err(err)?;
        let mut passing = 0;
        for s in &shapes {
            let tr = combined_criterion(built.field.as_ref(), s).map_err(err)?;
            let first = tr.points[0].value;
            let last = tr.last_value();
            if first > 0.0 && last <= DECAY_RATIO * first {
                passing += 1;
            }
        }
        ensure(
            passing >= MIN_SHAPES,
            format!("{}: only {passing}/{} shapes decay by {DECAY_RATIO:e}", p.name, shapes.len()),
        )?;
        lines.push(format!("{} {passing}/{}", p.name, shapes.len()));
    }
    Ok(lines.join(", "))
}

fn criterion4() -> Outcome {
    let field = common::preset_field("constant-field");
    let cfg = experiment::presets::config("constant-field").unwrap();
    let seq = cfg.sequence.build(1).map_err(err)?;
    let trace = pair_mixing_criterion(field.as_ref(), &seq, 0, 0).map_err(err)?;
    let want = common::constant_field_gap();
    let last = trace.last_value();
    ensure(
        (last - want).abs() <= GAP_TOL,
        format!("persistent gap {last:.12} vs closed form {want:.12}"),
    )?;
    ensure(
        trace.verdict == Verdict::Inconsistent,
        format!("pair verdict {} instead of inconsistent", trace.verdict),
    )?;
    let grid = time_average_grid(ERGODIC_HORIZON, 1, field.decay_length());
    let long = field
        .simulate(&grid, &SimulationSpec::new(ERGODIC_REPLICATES, 0.05, 4101))
        .map_err(err)?;
    let ensemble = field
        .simulate(&[vec![0.0]], &SimulationSpec::new(ERGODIC_REPLICATES, 0.05, 4102))
        .map_err(err)?;
    let g = |x: &[f64]| Complex64::new(x[0].cos(), x[0].sin());
    let rep = ergodic_time_average(&long, &ensemble, &g, field.decay_length()).map_err(err)?;
    ensure(
        rep.gap > 4.0 * rep.stderr && rep.verdict == ErgodicVerdict::NonErgodic,
        format!("time average gap {} vs 4 stderr {}", rep.gap, 4.0 * rep.stderr),
    )?;
    Ok(format!(
        "gap {last:.12} = |1 - exp(2(cos1 - 1))| (the listed decimal {LISTED_GAP_DECIMAL} differs by {:.2e}); ergodic gap {:.4} > 4 stderr {:.4}",
        (want - LISTED_GAP_DECIMAL).abs(),
        rep.gap,
        4.0 * rep.stderr
    ))
}

fn criterion5() -> Outcome {
    let threshold = empirical_threshold(MC_REPLICATES);
    let mut lines = Vec::new();
    for p in PRESETS {
        let started = Instant::now();
        let cfg = p.config();
        let built = cfg.validate().map_err(err)?;
        let field = built.field;
        let q = field.q();
        let mut spec = cfg.simulation.spec();
        spec.replicates = MC_REPLICATES;
        let real = field.simulate(&[vec![0.0; field.l()]], &spec).map_err(err)?;
        let triplet = field.marginal_triplet().map_err(err)?;
        let thetas = cfg.diagnostics.theta_grid(q);
        ensure(thetas.len() == THETA_POINTS, "theta grid size")?;
        let mut worst = 0.0f64;
        for th in &thetas {
            let ecf = (0..MC_REPLICATES)
                .map(|r| {
                    let x: f64 = th.iter().zip(real.value(r, 0)).map(|(a, b)| a * b).sum();
                    Complex64::new(x.cos(), x.sin())
                })
                .sum::<Complex64>()
                / MC_REPLICATES as f64;
            worst = worst.max((ecf - triplet.charfn(th).map_err(err)?).norm());
        }
        let took = started.elapsed();
        ensure(worst <= threshold, format!("{}: sup gap {worst:.4} > {threshold}", p.name))?;
        ensure(took < Duration::from_secs(300), format!("{}: took {took:?}", p.name))?;
        lines.push(format!("{} {worst:.4}", p.name));
    }
    Ok(format!("threshold {threshold}: {}", lines.join(", ")))
}

fn criterion6() -> Outcome {
    let mut r = common::rng(0xCE5A);
    let mut checked = 0;
    let mut worst_slack = f64::INFINITY;
    for case in 0..10 {
        let l = 1 + case % 2;
        let n = r.random_range(1..=10);
        let mut atoms: Vec<Atom> = (0..n)
            .map(|_| {
                let p: Vec<f64> = (0..l)
                    .map(|_| match r.random_range(0..5) {
                        0 => 0.0,
                        _ => r.random_range(-1.0..1.0),
                    })
                    .collect();
                Atom::new(p, r.random_range(0.1..1.0))
            })
            .collect();
        if case % 3 == 0 {
            atoms.push(Atom::new(vec![0.0; l], 0.5));
        }
        let origin: f64 = atoms.iter().filter(|a| a.point.iter().all(|v| *v == 0.0)).map(|a| a.mass).sum();
        let max_freq = atoms
            .iter()
            .flat_map(|a| a.point.iter().map(|v| v.abs()))
            .fold(0.0, f64::max);
        let f = fourier_of_atoms(&atoms);
        for t in CESARO_HORIZONS {
            let cells = cells_for_frequency(t, max_freq);
            let avg = cesaro_average(&f, t, l, cells).map_err(err)?;
            let dev = (avg.value - origin).norm();
            let bound = cesaro_atom_bound(&atoms, t) + avg.error;
            ensure(dev <= bound, format!("case {case}, T = {t}: |avg - mu(0)| = {dev:e} > bound {bound:e}"))?;
            worst_slack = worst_slack.min(bound - dev);
            checked += 1;
        }
    }
    Ok(format!("{checked} averages within their bounds, min slack {worst_slack:.3e}"))
}

fn criterion7() -> Outcome {
    let field = common::preset_field("atom-2pi");
    let cfg = experiment::presets::config("atom-2pi").unwrap();
    let seq = cfg.sequence.build(1).map_err(err)?;
    match pair_mixing_criterion(field.as_ref(), &seq, 0, 0) {
        Err(Error::AtomsIn2PiZ { .. }) => {}
        other => return Err(format!("unscaled criterion not refused: {other:?}")),
    }
    let levy = field.marginal_triplet().map_err(err)?.levy().clone();
    let scale = find_admissible_scale(&levy, cfg.simulation.seed).map_err(err)?;
    let mapped = mixfield::field::LinearMapped::diagonal(field.clone(), &scale).map_err(err)?;
    let scan = mapped.marginal_atom_scan().map_err(err)?;
    ensure(scan.offending.is_empty(), "atoms remain in 2piZ after rescaling")?;
    let rescaled = rescaled_criterion(field, &seq, 0, 0, cfg.simulation.seed).map_err(err)?;
    ensure(
        rescaled.trace.verdict == Verdict::ConsistentWithMixing,
        format!("rescaled verdict {}", rescaled.trace.verdict),
    )?;
    ensure(scan_atoms_2pi(&levy).offending.len() == 1, "original scan should flag one atom")?;
    Ok(format!("refused, scale {:?}, rescaled verdict consistent", rescaled.scale))
}

fn criterion8() -> Outcome {
    let mut lines = Vec::new();
    for name in ["ou-cp", "indicator-cp"] {
        let field = common::preset_field(name);
        let cfg = experiment::presets::config(name).unwrap();
        let seq = cfg.sequence.build(1).map_err(err)?;
        let mm = maruyama_check(field.as_ref(), &seq, &DEFAULT_DELTAS).map_err(err)?;
        let sb = smallball_trace(field.as_ref(), &seq, cfg.diagnostics.smallball_bound).map_err(err)?;
        let fallen = |n: usize| {
            mm.mm2.iter().all(|(_, tr)| {
                let init = tr.points[0].value;
                init == 0.0 || tr.points[n].value <= MM2_FALL * init
            })
        };
        let n = (0..seq.count)
            .find(|&n| fallen(n))
            .ok_or_else(|| format!("{name}: jump-mass traces never fall by {}", 1.0 / MM2_FALL))?;
        let (init, now) = (sb.points[0].value, sb.points[n].value);
        ensure(
            now <= SMALLBALL_FALL * init,
            format!("{name}: small-ball trace {now:e} at n = {n} against initial {init:e}"),
        )?;
        if init == 0.0 {
            lines.push(format!("{name} n = {n}, small-ball integral vanishes identically"));
        } else {
            lines.push(format!("{name} n = {n} small-ball ratio {:.3e}", now / init));
        }
    }
    Ok(lines.join(", "))
}

fn criterion9() -> Outcome {
    let cfg = experiment::presets::config("sum-of-ou").unwrap();
    let built = cfg.model.build().map_err(err)?;
    let seq = cfg.sequence.build(1).map_err(err)?;
    let rep = sum_of_independents_check(built.parts.clone(), &seq).map_err(err)?;
    ensure(
        rep.trace_defect <= ADDITIVITY_TOL,
        format!("trace defect {:e}", rep.trace_defect),
    )?;
    Ok(format!(
        "trace defect {:.3e}, covariance defect {:.3e}, jump defect {:.3e}",
        rep.trace_defect, rep.sigma_defect, rep.jump_defect
    ))
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut total = 0;
    for p in PRESETS {
        let cfg = p.config();
        let mut runs = Vec::new();
        for i in 0..2 {
            let dir = tmp.path().join(format!("{}-{i}", p.name));
            experiment::run_in(&cfg, p.name, &dir).map_err(err)?;
            runs.push(csv_files(&dir));
        }
        ensure(!runs[0].is_empty(), format!("{}: no csv output", p.name))?;
        ensure(
            runs[0].keys().eq(runs[1].keys()),
            format!("{}: file sets differ", p.name),
        )?;
        for (k, v) in &runs[0] {
            ensure(&runs[1][k] == v, format!("{}: {k} differs between runs", p.name))?;
        }
        total += runs[0].len();
    }
    Ok(format!("{total} csv files identical across two runs of {} presets", PRESETS.len()))
}

fn main() {
    let criteria: [(u32, fn() -> Outcome, Duration); 10] = [
        (1, criterion1, Duration::from_secs(10)),
        (2, criterion2, Duration::from_secs(30)),
        (3, criterion3, Duration::from_secs(300)),
        (4, criterion4, Duration::from_secs(120)),
        (5, criterion5, Duration::from_secs(300 * PRESETS.len() as u64)),
        (6, criterion6, Duration::from_secs(10)),
        (7, criterion7, Duration::from_secs(10)),
        (8, criterion8, Duration::from_secs(60)),
        (9, criterion9, Duration::from_secs(10)),
        (10, criterion10, Duration::from_secs(3600)),
    ];
    let only: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (n, f, budget) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let started = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panic: {msg}"))
        });
        let took = started.elapsed();
        let res = match res {
            Ok(d) if took > budget => Err(format!("{d}; over the {budget:?} budget")),
            r => r,
        };
        match res {
            Ok(d) => println!("criterion {n}: PASS ({:.2}s) {d}", took.as_secs_f64()),
            Err(d) => {
                failed += 1;
                println!("criterion {n}: FAIL ({:.2}s) {d}", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
