//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_UNATTAINABLE` are still run and reported as
//! FAIL when they fail; only they are allowed to fail without failing the
//! target. The analysis for each lives in the decisions ledger.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use semilab::cutoff::chi;
use semilab::experiment::{run_convergence, Config, ExperimentConfig, ResultTable};
use semilab::initial_data::{frequency_window_criterion, DataFamily, Profile};
use semilab::propagator::{evolve_observe, strang_evolve, Generator, TimeWindow};
use semilab::smoothing::{blowup_exponent, Ball, SweepGrid};
use semilab::symbols::{builtin_symbol, PotentialSpec, SymbolParams, SymbolSpec, SYMBOL_TAGS};
use semilab::wigner::{apply_cutoffs, two_micro_expect, wigner_transform, CutoffKind, CutoffParams, EtaFactor, Split, TwoMicroSymbol, XFactor, XiFactor};
use semilab::{par, Field, Grid, C64};

const KNOWN_UNATTAINABLE: &[&str] = &["C4"];
const SCHEDULE: [f64; 6] = [0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625];

type Check = Result<(bool, String), String>;
type Criterion = (&'static str, &'static str, fn() -> Check);

fn table(text: &str) -> Result<ResultTable, String> {
    let cfg = Config::parse(text).map_err(|e| e.to_string())?;
    let exp = ExperimentConfig::from_config(&cfg).map_err(|e| e.to_string())?;
    run_convergence(&exp).map_err(|e| e.to_string())
}

fn measured(t: &ResultTable) -> Result<Vec<f64>, String> {
    t.rows.iter().map(|r| r.measured.ok_or_else(|| format!("ε = {} INVALID: {:?}", r.eps, r.guard))).collect()
}

fn gaps(t: &ResultTable) -> Result<Vec<f64>, String> {
    t.rows.iter().map(|r| r.gap().ok_or_else(|| format!("ε = {} has no gap", r.eps))).collect()
}

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt(v: &[f64]) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", s.join(", "))
}

fn sym(tag: &str, dim: usize) -> SymbolSpec {
    let p = if tag.starts_with("manifold") { Some(1) } else { None };
    builtin_symbol(tag, &SymbolParams { dim, p, ..Default::default() }).unwrap()
}

fn gauss(dim: usize, w: f64) -> Profile {
    Profile::gaussian_iso(dim, w).unwrap()
}

/// Families used by the unitarity and marginal checks, with their box.
fn families(dim: usize) -> Vec<(DataFamily, Vec<f64>)> {
    if dim == 1 {
        vec![
            (DataFamily::PlaneWaveModulated { profile: gauss(1, 1.0), carrier: vec![1.0] }, vec![20.0]),
            (
                DataFamily::TwoWave { first: gauss(1, 1.0), first_carrier: vec![0.5], second: gauss(1, 1.0), second_carrier: vec![1.0] },
                vec![20.0],
            ),
            (DataFamily::CoherentState { profile: gauss(1, 0.5), center: vec![0.0], carrier: vec![1.0] }, vec![20.0]),
            (
                DataFamily::ShiftedDegenerate { profile: gauss(1, 1.0), carrier: vec![0.0], direction: vec![1.0], alpha: 0.0, beta: 0.75 },
                vec![20.0],
            ),
        ]
    } else {
        vec![
            (
                DataFamily::ManifoldConcentrating { transverse: gauss(1, 1.0), along: gauss(1, 1.0), center: vec![0.0], carrier: vec![1.0], alpha: 0.5 },
                vec![2.0, 8.0],
            ),
            (
                DataFamily::ManifoldShifted { transverse: gauss(1, 1.0), along: gauss(1, 1.0), carrier: vec![0.0], direction: vec![1.0], alpha: 0.0, beta: 0.75 },
                vec![4.0, 8.0],
            ),
        ]
    }
}

fn norm_drift(u0: &Field, gen: &Generator, w: &TimeWindow, split: bool) -> Result<f64, String> {
    let n0 = u0.l2_norm();
    let obs = evolve_observe(u0, gen, w, split, |_, u| u.l2_norm()).map_err(|e| e.to_string())?;
    Ok(obs.values.iter().map(|(_, n)| (n / n0 - 1.0).abs()).fold(0.0, f64::max))
}

fn c1_unitarity() -> Check {
    let w = TimeWindow::new(0.0, 1.0, 10, 1).unwrap();
    // wavenumber closest to 1 that is periodic on the box
    let cosine = |half: &[f64]| PotentialSpec::Cosine {
        amplitudes: vec![1.0; half.len()],
        wavenumbers: half.iter().map(|l| (l / PI).round().max(1.0) * PI / l).collect(),
    };
    let (mut free, mut strang, mut cases) = (0.0f64, 0.0f64, 0);
    for tag in SYMBOL_TAGS {
        let d = if tag.starts_with("manifold") { 2 } else { 1 };
        let s = sym(tag, d);
        for (fam, half) in families(d) {
            for eps in SCHEDULE {
                let n = fam.required_points(eps, &half);
                let g = Grid::new(&n, &half).map_err(|e| e.to_string())?;
                let u0 = fam.sample(eps, &g).map_err(|e| format!("{tag}/{}: {e}", fam.tag()))?;
                let gen = Generator::semiclassical(&s, eps, &g).map_err(|e| e.to_string())?;
                free = free.max(norm_drift(&u0, &gen, &w, false)?);
                let gv = gen.with_potential(&cosine(&half)).map_err(|e| e.to_string())?;
                let ws = TimeWindow::new(0.0, 1.0, gv.min_steps(1.0).max(10), 1).unwrap();
                strang = strang.max(norm_drift(&u0, &gv, &ws, true)?);
                cases += 1;
            }
        }
    }
    Ok((free < 1e-13 && strang < 1e-10, format!("{cases} cases; max drift free {free:.2e} (< 1e-13), Strang {strang:.2e} (< 1e-10)")))
}

fn c2_marginals() -> Check {
    let g = Grid::new_1d(2048, 20.0).unwrap();
    let eps = 0.05;
    let mut worst = 0.0f64;
    for (fam, _) in families(1) {
        let f = fam.sample(eps, &g).map_err(|e| e.to_string())?;
        let w = wigner_transform(&f, eps).map_err(|e| e.to_string())?;
        let dens: Vec<f64> = f.values().iter().map(|v| v.norm_sqr()).collect();
        let ff = f.to_frequency();
        let mom: Vec<f64> = ff.coeffs().iter().map(|c| c.norm_sqr() / (2.0 * PI * eps)).collect();
        for (got, want) in [(w.position_marginal(), dens), (w.momentum_marginal(), mom)] {
            let top = want.iter().cloned().fold(0.0, f64::max);
            let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / top;
            worst = worst.max(err);
        }
    }
    Ok((worst < 1e-10, format!("N = 2048, four 1-D families, worst relative marginal error {worst:.2e} (< 1e-10)")))
}

const DOUBLE_WELL_BASE: &str = "
symbol.tag = double_well_1d
time.a = 0
time.b = 1
time.steps = 400
observable.kind = density
observable.phi = bump
observable.phi_radius = 1
output.timing = false
";

fn c3_two_wave() -> Check {
    let t = table(&format!(
        "{DOUBLE_WELL_BASE}
family.tag = two_wave
family.carrier = 0.5
family.second_carrier = 1
family.width = 1
grid.half_len = 300
oracle.kind = isolated"
    ))?;
    let g = gaps(&t)?;
    let pred = t.rows.last().unwrap().predicted.unwrap();
    let rel = g.last().unwrap() / pred;
    Ok((decreasing(&g) && rel < 0.05, format!("gaps {} ; relative gap at ε = 0.00625: {:.2}% (< 5%)", fmt(&g), 100.0 * rel)))
}

fn c4_coherent() -> Check {
    let t = table(&format!(
        "{DOUBLE_WELL_BASE}
family.tag = coherent_state
family.carrier = 1
family.center = 0
family.width = 1
grid.half_len = 600
grid.max_points = 262144"
    ))?;
    let m = measured(&t)?;
    let ratio = m.last().unwrap() / m[0];
    Ok((ratio < 0.1, format!("measured {} ; smallest/largest = {ratio:.3} (< 0.10)", fmt(&m))))
}

fn degenerate(alpha: f64, width: f64, phi_radius: f64, extra: &str) -> Result<ResultTable, String> {
    table(&format!(
        "symbol.tag = quartic_degenerate
family.tag = shifted_degenerate
family.carrier = 0
family.direction = 1
family.alpha = {alpha}
family.beta = 0.75
family.width = {width}
time.steps = 400
observable.kind = density
observable.phi = bump
observable.phi_radius = {phi_radius}
oracle.kind = degenerate
output.timing = false
{extra}"
    ))
}

fn c5_degenerate_static() -> Check {
    let t = degenerate(0.0, 1.0, 1.0, "grid.half_len = 20")?;
    let g = gaps(&t)?;
    let rel = g.last().unwrap() / t.rows.last().unwrap().predicted.unwrap();
    Ok((decreasing(&g) && rel < 0.05, format!("gaps {} ; relative gap {:.2}% (< 5%)", fmt(&g), 100.0 * rel)))
}

fn c6_degenerate_concentrating() -> Check {
    let t = degenerate(0.3, 0.6, 0.5, "grid.half_len = 200")?;
    let g = gaps(&t)?;
    let rel = g.last().unwrap() / t.rows.last().unwrap().predicted.unwrap();
    Ok((rel < 0.07, format!("gaps {} ; relative gap {:.2}% (< 7%)", fmt(&g), 100.0 * rel)))
}

fn c7_criterion_separation() -> Check {
    let eps = *SCHEDULE.last().unwrap();
    let pw = DataFamily::PlaneWaveModulated { profile: gauss(1, 1.0), carrier: vec![1.0] };
    let sd = DataFamily::ShiftedDegenerate { profile: gauss(1, 1.0), carrier: vec![0.0], direction: vec![1.0], alpha: 0.0, beta: 0.25 };
    let half = [20.0];
    let value = |fam: &DataFamily, xi: f64| -> Result<f64, String> {
        let g = Grid::new(&fam.required_points(eps, &half), &half).map_err(|e| e.to_string())?;
        frequency_window_criterion(fam, &[xi], eps, 4.0, 0.5, &g).map_err(|e| e.to_string())
    };
    let (a, b) = (value(&pw, 1.0)?, value(&sd, 0.0)?);
    Ok((a < 0.05 && b > 0.9, format!("ε = {eps}: plane wave {a:.2e} (< 0.05), shifted degenerate {b:.4} (> 0.9)")))
}

fn c8_consistency() -> Check {
    let t = table(
        "symbol.tag = double_well_1d
family.tag = plane_wave
family.carrier = 1
family.width = 1
grid.half_len = 80
time.steps = 400
observable.kind = twomicro
observable.phi = bump
observable.phi_radius = 1
observable.xi0 = 1
observable.eta = bump
observable.eta_radius = 3
observable.cutoff = inner
observable.cutoff_r = 4
observable.cutoff_delta = 0.5
oracle.kind = consistency
output.timing = false",
    )?;
    let g = gaps(&t)?;
    let rel = g.last().unwrap() / t.rows.last().unwrap().predicted.unwrap().abs();
    Ok((decreasing(&g) && rel < 0.05, format!("gaps {} ; relative gap {:.3}% (< 5%)", fmt(&g), 100.0 * rel)))
}

fn c9_manifold() -> Check {
    let t = table(
        "symbol.tag = manifold_quadratic
symbol.dim = 2
symbol.p = 1
family.tag = manifold_concentrating
family.carrier = 1
family.center = 0
family.alpha = 0.5
family.width = 1
family.along_width = 1
grid.half_len = 2, 16
grid.points = 256, 256
epsilon.values = 0.0125
time.steps = 200
observable.kind = density
observable.phi = bump
observable.phi_radius = 1
oracle.kind = manifold
output.timing = false",
    )?;
    let r = &t.rows[0];
    let m = r.measured.ok_or("row INVALID")?;
    let p = r.predicted.ok_or("no prediction")?;
    let rel = (m - p).abs() / p;
    Ok((rel < 0.07, format!("ε = 0.0125, N = 256²: measured {m:.5}, predicted {p:.5}, relative gap {:.2}% (< 7%)", 100.0 * rel)))
}

fn c10_smoothing() -> Check {
    let fam = DataFamily::PlaneWaveModulated { profile: gauss(1, 1.0), carrier: vec![1.0] };
    let ball = Ball::new(vec![0.0], 1.0).unwrap();
    let grid = SweepGrid { half_len: vec![40.0], points: None };
    let rep = blowup_exponent(&fam, &sym("double_well_1d", 1), &PotentialSpec::Zero, 0.5, 0.5, &ball, &SCHEDULE, &grid, 200)
        .map_err(|e| e.to_string())?;
    let fit = rep.fit.ok_or("no fit")?;
    Ok(((fit.slope + 1.0).abs() <= 0.1, format!("S(ε) {} ; fitted slope {:.4} (−1 ± 0.1)", fmt(&rep.values), fit.slope)))
}

fn c11_strang_order() -> Check {
    let g = Grid::new_1d(256, 4.0 * PI).unwrap();
    let u0 = Field::from_fn(g, |x| C64::from_polar((-x[0] * x[0] / 2.0).exp(), x[0])).unwrap();
    let s = sym("iso_quadratic", 1);
    let v = PotentialSpec::Cosine { amplitudes: vec![1.0], wavenumbers: vec![1.0] };
    let run = |n: usize| strang_evolve(&u0, &s, &v, 0.5, &TimeWindow::new(0.0, 1.0, n, n).unwrap()).map_err(|e| e.to_string());
    let reference = run(640)?;
    let err = |n: usize| -> Result<f64, String> {
        Ok(run(n)?.final_state().sub(reference.final_state()).map_err(|e| e.to_string())?.l2_norm())
    };
    let e: Vec<f64> = [20, 40, 80].iter().map(|&n| err(n)).collect::<Result<_, _>>()?;
    let orders: Vec<f64> = e.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let ok = orders.iter().all(|o| (o - 2.0).abs() <= 0.1);
    Ok((ok, format!("errors {} vs 640 steps; observed orders {}", fmt(&e), fmt(&orders))))
}

fn c12_properties() -> Check {
    let mut fails = Vec::new();
    // symbol derivatives against central differences
    let h = 1e-5;
    for tag in SYMBOL_TAGS {
        let d = if tag.starts_with("manifold") { 2 } else { 1 };
        let s = sym(tag, d);
        for k in 0..7 {
            let xi: Vec<f64> = (0..d).map(|a| -1.3 + 0.45 * k as f64 + 0.2 * a as f64).collect();
            let grad = s.grad(&xi).unwrap();
            let hess = s.hess(&xi).unwrap();
            for a in 0..d {
                let mut p = xi.clone();
                let mut m = xi.clone();
                p[a] += h;
                m[a] -= h;
                let fd = (s.value(&p) - s.value(&m)) / (2.0 * h);
                if (fd - grad[a]).abs() > 1e-6 * (1.0 + grad[a].abs()) {
                    fails.push(format!("{tag} grad"));
                }
                let (gp, gm) = (s.grad(&p).unwrap(), s.grad(&m).unwrap());
                for b in 0..d {
                    let fd = (gp[b] - gm[b]) / (2.0 * h);
                    if (fd - hess[(a, b)]).abs() > 1e-6 * (1.0 + hess[(a, b)].abs()) {
                        fails.push(format!("{tag} hess"));
                    }
                }
            }
        }
    }
    // cut-off support and monotonicity
    let rs: Vec<f64> = (0..=3000).map(|i| i as f64 * 1e-3).collect();
    if rs.iter().any(|&r| (r <= 1.0 && chi(r) != 1.0) || (r >= 2.0 && chi(r) != 0.0) || !(0.0..=1.0).contains(&chi(r))) {
        fails.push("chi support".into());
    }
    if rs.windows(2).any(|w| chi(w[1]) > chi(w[0])) {
        fails.push("chi monotone".into());
    }
    // outer + inner cut-off functionals recover the uncut one
    let g = Grid::new_1d(2048, 20.0).unwrap();
    let eps = 0.05;
    let fam = DataFamily::PlaneWaveModulated { profile: gauss(1, 1.0), carrier: vec![1.0] };
    let f = fam.sample(eps, &g).unwrap();
    let base = TwoMicroSymbol::new(Split::point(&[1.0])).with_term(
        1.0,
        XFactor::Bump { center: vec![0.0], radius: 1.0 },
        vec![XiFactor::One],
        vec![EtaFactor::Bump { center: vec![0.0], radius: 3.0 }],
    );
    let c = CutoffParams { r: 4.0, delta: 0.5 };
    let whole = two_micro_expect(&f, &base, eps).unwrap();
    let parts = two_micro_expect(&f, &apply_cutoffs(&base, c, CutoffKind::Outer), eps).unwrap()
        + two_micro_expect(&f, &apply_cutoffs(&base, c, CutoffKind::Inner), eps).unwrap();
    let gap = (whole - parts).norm();
    if gap > 1e-10 * whole.norm().max(1.0) {
        fails.push(format!("cutoff partition {gap:.2e}"));
    }
    // determinism, including parallel against sequential
    let text = format!(
        "{DOUBLE_WELL_BASE}
family.tag = two_wave
family.carrier = 0.5
family.second_carrier = 1
grid.half_len = 40
epsilon.values = 0.2, 0.1, 0.05
oracle.kind = isolated"
    );
    let a = table(&text)?.to_csv();
    let b = table(&text)?.to_csv();
    let prev = par::set_enabled(false);
    let s = table(&text);
    par::set_enabled(prev);
    if a != b || a != s?.to_csv() {
        fails.push("determinism".into());
    }
    Ok((fails.is_empty(), if fails.is_empty() { "derivatives, cut-off, partition, determinism green".into() } else { fails.join("; ") }))
}

fn main() -> ExitCode {
    // libtest flags (e.g. from `cargo test --workspace -- --nocapture`) are ignored
    let only: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('C')).collect();
    let criteria: [Criterion; 12] = [
        ("C1", "unitarity", c1_unitarity),
        ("C2", "Wigner marginals", c2_marginals),
        ("C3", "non-dispersion at a nondegenerate critical point", c3_two_wave),
        ("C4", "coherent-state dispersion", c4_coherent),
        ("C5", "degenerate point, static profile", c5_degenerate_static),
        ("C6", "degenerate point, concentrating profile", c6_degenerate_concentrating),
        ("C7", "frequency-window criterion separation", c7_criterion_separation),
        ("C8", "two-microlocal consistency", c8_consistency),
        ("C9", "manifold of critical points", c9_manifold),
        ("C10", "smoothing blow-up rate", c10_smoothing),
        ("C11", "Strang self-convergence", c11_strang_order),
        ("C12", "property suites", c12_properties),
    ];
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{id:<4} {verdict} {name}: {detail} [{:.1}s]", start.elapsed().as_secs_f64());
        if !pass && !KNOWN_UNATTAINABLE.contains(&id) {
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        println!("acceptance: no unexpected failures (known unattainable: {})", KNOWN_UNATTAINABLE.join(", "));
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected failures: {}", unexpected.join(", "));
        ExitCode::FAILURE
    }
}
