//! Local smoothing probe: `S(ε) = ∫₀^δ ‖|D|^s u^ε(t)‖²_{L²(B)} dt` along an
//! ε-sweep, and its log-log slope.

use crate::cutoff::norm;
use crate::initial_data::DataFamily;
use crate::propagator::{evolve_observe, Generator, TimeWindow};
use crate::symbols::{Classification, PotentialSpec, SymbolSpec, DEFAULT_TOL};
use crate::{par, Error, Field, Grid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::param(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Ball { center, radius })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        norm(&d) < self.radius
    }

    fn check_inside(&self, g: &Grid) -> Result<()> {
        if self.center.len() != g.dim() {
            return Err(Error::DimensionMismatch { expected: g.dim(), got: self.center.len() });
        }
        for a in 0..g.dim() {
            if self.center[a].abs() + self.radius >= g.half_len(a) {
                return Err(Error::param(format!(
                    "ball (center {:?}, radius {}) touches the periodic boundary on axis {a}",
                    self.center, self.radius
                )));
            }
        }
        Ok(())
    }
}

/// `‖|D|^s f‖²_{L²(B)}` with `|D|^s` the scale-1 multiplier `‖k‖^s`.
pub fn restricted_sobolev(f: &Field, s: f64, ball: &Ball) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::param(format!("smoothing order must be nonnegative, got {s}")));
    }
    ball.check_inside(f.grid())?;
    let g = f.grid();
    let lifted = if s == 0.0 {
        f.clone()
    } else {
        f.apply_real_table(&g.freq_table(|k| norm(k).powf(s)))
    };
    Ok(lifted.weighted_mass(|x| if ball.contains(x) { 1.0 } else { 0.0 }))
}

/// Trapezoid over `[0, delta]`; the last partial interval uses the linear
/// interpolant of the integrand.
pub(crate) fn integrate_to(samples: &[(f64, f64)], delta: f64) -> Result<f64> {
    let tol = 1e-12 * (1.0 + delta.abs());
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        return Err(Error::param("no snapshots"));
    };
    if !(delta > 0.0) || first.0 > tol || last.0 < delta - tol {
        return Err(Error::param(format!(
            "δ = {delta} must lie in the snapshot range [{}, {}] starting at 0",
            first.0, last.0
        )));
    }
    let mut total = 0.0;
    for p in samples.windows(2) {
        let ((t0, v0), (t1, v1)) = (p[0], p[1]);
        if t0 >= delta {
            break;
        }
        if t1 <= delta + tol {
            total += 0.5 * (t1 - t0) * (v0 + v1);
        } else {
            let vd = v0 + (v1 - v0) * (delta - t0) / (t1 - t0);
            total += 0.5 * (delta - t0) * (v0 + vd);
        }
    }
    Ok(total)
}

/// `S = ∫₀^δ ‖|D|^s u(t)‖²_{L²(B)} dt` over stored snapshots.
pub fn smoothing_norm(snaps: &crate::propagator::EvolutionResult, s: f64, ball: &Ball, delta: f64) -> Result<f64> {
    let vals = par::map_slice(&snaps.snapshots, |sn| restricted_sobolev(&sn.field, s, ball).map(|v| (sn.t, v)));
    let samples: Vec<(f64, f64)> = vals.into_iter().collect::<Result<_>>()?;
    integrate_to(&samples, delta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in `log S`.
    pub residual: f64,
}

/// Least squares on `log y` against `log x`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::param("a log-log fit needs at least two paired points"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::param("log-log fit needs positive values"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::param("log-log fit needs distinct abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    Ok(LogLogFit { slope, intercept, residual })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingReport {
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    /// Present only with at least four points spanning a decade in ε.
    pub fit: Option<LogLogFit>,
    pub s: f64,
    pub delta: f64,
    pub ball: Ball,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub half_len: Vec<f64>,
    /// Fixed point counts; `None` picks the minimal resolving N per ε.
    pub points: Option<Vec<usize>>,
}

impl SweepGrid {
    pub fn grid_for(&self, fam: &DataFamily, eps: f64) -> Result<Grid> {
        let n = match &self.points {
            Some(n) => n.clone(),
            None => fam.required_points(eps, &self.half_len),
        };
        Grid::new(&n, &self.half_len)
    }
}

/// Evolve the family for every ε on `[0, δ]` and measure `S(ε)`.
#[allow(clippy::too_many_arguments)]
pub fn blowup_exponent(
    fam: &DataFamily,
    sym: &SymbolSpec,
    v: &PotentialSpec,
    s: f64,
    delta: f64,
    ball: &Ball,
    eps_list: &[f64],
    grid: &SweepGrid,
    n_steps: usize,
) -> Result<SmoothingReport> {
    if eps_list.len() < 2 {
        return Err(Error::param("a smoothing sweep needs at least two ε values"));
    }
    let mut notes = Vec::new();
    let carrier = match fam {
        DataFamily::PlaneWaveModulated { carrier, .. } => carrier.clone(),
        other => {
            notes.push(format!("{} data: the blow-up rate is stated for plane waves", other.tag()));
            other.carriers().into_iter().next().unwrap_or_default()
        }
    };
    if norm(&carrier) == 0.0 {
        notes.push("carrier at ξ = 0: |D|^s does not amplify the profile".into());
    }
    if let Ok(Classification::NotCritical) = sym.classify_critical(&carrier, DEFAULT_TOL) {
        notes.push(format!("carrier {carrier:?} is not critical: mass disperses out of the ball"));
    }
    let w = TimeWindow::new(0.0, delta, n_steps, 1)?;
    let rows = par::map_slice(eps_list, |&eps| -> Result<f64> {
        let g = grid.grid_for(fam, eps)?;
        ball.check_inside(&g)?;
        let u0 = fam.sample(eps, &g)?;
        let gen = Generator::semiclassical(sym, eps, &g)?.with_potential(v)?;
        let mult = g.freq_table(|k| norm(k).powf(s));
        let obs = evolve_observe(&u0, &gen, &w, false, |_, u| {
            let lifted = if s == 0.0 { u.clone() } else { u.apply_real_table(&mult) };
            lifted.weighted_mass(|x| if ball.contains(x) { 1.0 } else { 0.0 })
        })?;
        if let Some(msg) = obs.guard_violation() {
            return Err(Error::Guard(format!("ε = {eps}: {msg}")));
        }
        integrate_to(&obs.values, delta)
    });
    let values: Vec<f64> = rows.into_iter().collect::<Result<_>>()?;
    let lo = eps_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eps_list.iter().cloned().fold(0.0, f64::max);
    let fit = if eps_list.len() >= 4 && hi >= 10.0 * lo && values.iter().all(|v| *v > 0.0) {
        Some(fit_loglog(eps_list, &values)?)
    } else {
        None
    };
    Ok(SmoothingReport { eps: eps_list.to_vec(), values, fit, s, delta, ball: ball.clone(), notes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::Profile;
    use crate::propagator::{free_evolve, EvolutionResult, Method, Snapshot};
    use crate::symbols::{builtin_symbol, SymbolParams};
    use crate::C64;
    use proptest::prelude::*;

    fn frozen(f: &Field, times: &[f64]) -> EvolutionResult {
        EvolutionResult {
            snapshots: times.iter().map(|&t| Snapshot { t, field: f.clone() }).collect(),
            method: Method::ExactFree,
            mass_drift: vec![0.0; times.len()],
            boundary_mass: 0.0,
        }
    }

    fn pw(eps: f64, xi0: f64, center: f64) -> (Grid, Field) {
        let g = Grid::new_1d(4096, 20.0).unwrap();
        let p = Profile::gaussian(vec![1.0], vec![center]).unwrap();
        let fam = DataFamily::PlaneWaveModulated { profile: p, carrier: vec![xi0] };
        (g, fam.sample(eps, &g).unwrap())
    }

    fn times(n: usize, end: f64) -> Vec<f64> {
        (0..=n).map(|i| end * i as f64 / n as f64).collect()
    }

    #[test]
    fn order_zero_is_a_mass_bound() {
        let (_, f) = pw(0.1, 1.0, 0.0);
        let ball = Ball::new(vec![0.0], 1.0).unwrap();
        let s = smoothing_norm(&frozen(&f, &times(10, 1.0)), 0.0, &ball, 0.5).unwrap();
        assert!(s <= 0.5 * f.norm_sqr());
        assert!(s > 0.0);
    }

    #[test]
    fn narrow_band_plane_wave() {
        let eps = 0.02;
        let (_, f) = pw(eps, 1.0, 0.0);
        let ball = Ball::new(vec![0.0], 1.0).unwrap();
        let got = smoothing_norm(&frozen(&f, &times(4, 1.0)), 0.5, &ball, 1.0).unwrap();
        let local = f.weighted_mass(|x| if ball.contains(x) { 1.0 } else { 0.0 });
        let oracle = (1.0 / eps) * local;
        // |k|^{1/2} ≈ ε^{-1/2}(1 + O(ε)) on the band
        assert!((got - oracle).abs() < 0.01 * oracle, "{got} vs {oracle}");
    }

    #[test]
    fn profile_away_from_ball() {
        let (_, f) = pw(0.1, 1.0, 10.0);
        let ball = Ball::new(vec![0.0], 1.0).unwrap();
        let s = smoothing_norm(&frozen(&f, &times(4, 1.0)), 0.5, &ball, 1.0).unwrap();
        assert!(s < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (_, f) = pw(0.1, 1.0, 0.0);
        let sn = frozen(&f, &times(4, 1.0));
        let edge = Ball::new(vec![19.5], 1.0).unwrap();
        assert!(smoothing_norm(&sn, 0.5, &edge, 0.5).is_err());
        let ball = Ball::new(vec![0.0], 1.0).unwrap();
        assert!(smoothing_norm(&sn, -1.0, &ball, 0.5).is_err());
        assert!(smoothing_norm(&sn, 0.5, &ball, 2.0).is_err());
        let fam = DataFamily::PlaneWaveModulated { profile: Profile::gaussian_iso(1, 1.0).unwrap(), carrier: vec![1.0] };
        let sym = builtin_symbol("double_well_1d", &SymbolParams { dim: 1, ..Default::default() }).unwrap();
        let grid = SweepGrid { half_len: vec![40.0], points: None };
        assert!(blowup_exponent(&fam, &sym, &PotentialSpec::Zero, 0.5, 0.5, &ball, &[0.1], &grid, 10).is_err());
    }

    #[test]
    fn fit_recovers_power_law() {
        let x = [0.2, 0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|e: &f64| 3.0 * e.powf(-1.5)).collect();
        let f = fit_loglog(&x, &y).unwrap();
        assert!((f.slope + 1.5).abs() < 1e-12 && f.residual < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn slope_needs_a_decade() {
        let fam = DataFamily::PlaneWaveModulated { profile: Profile::gaussian_iso(1, 1.0).unwrap(), carrier: vec![1.0] };
        let sym = builtin_symbol("double_well_1d", &SymbolParams { dim: 1, ..Default::default() }).unwrap();
        let ball = Ball::new(vec![0.0], 1.0).unwrap();
        let grid = SweepGrid { half_len: vec![40.0], points: None };
        let r = blowup_exponent(&fam, &sym, &PotentialSpec::Zero, 0.0, 0.5, &ball, &[0.2, 0.1, 0.05], &grid, 20).unwrap();
        assert!(r.fit.is_none());
        assert!(r.notes.is_empty());
        let r = blowup_exponent(&fam, &sym, &PotentialSpec::Zero, 0.0, 0.5, &ball, &[0.2, 0.1, 0.05, 0.02], &grid, 20).unwrap();
        // s = 0: local mass is ε-independent to leading order
        assert!(r.fit.unwrap().slope.abs() < 0.1);
    }

    #[test]
    fn evolved_snapshots_and_observer_agree() {
        let fam = DataFamily::PlaneWaveModulated { profile: Profile::gaussian_iso(1, 1.0).unwrap(), carrier: vec![1.0] };
        let sym = builtin_symbol("double_well_1d", &SymbolParams { dim: 1, ..Default::default() }).unwrap();
        let ball = Ball::new(vec![0.0], 1.0).unwrap();
        let grid = SweepGrid { half_len: vec![40.0], points: None };
        let eps = 0.1;
        let r = blowup_exponent(&fam, &sym, &PotentialSpec::Zero, 0.5, 0.5, &ball, &[eps, 0.05], &grid, 20).unwrap();
        let g = grid.grid_for(&fam, eps).unwrap();
        let snaps = free_evolve(&fam.sample(eps, &g).unwrap(), &sym, eps, &TimeWindow::new(0.0, 0.5, 20, 1).unwrap()).unwrap();
        let direct = smoothing_norm(&snaps, 0.5, &ball, 0.5).unwrap();
        assert!((r.values[0] - direct).abs() < 1e-12 * direct);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn monotone_and_homogeneous(d1 in 0.1f64..0.9, d2 in 0.0f64..0.1, r1 in 0.3f64..2.0, r2 in 0.0f64..1.0,
                                    c in 0.1f64..3.0, s in 0.0f64..1.0) {
            let g = Grid::new_1d(512, 10.0).unwrap();
            let p = Profile::gaussian_iso(1, 1.0).unwrap();
            let f = Field::from_fn(g, |x| C64::new(0.0, 3.0 * x[0]).exp() * p.eval(x)).unwrap();
            let sym = builtin_symbol("double_well_1d", &SymbolParams { dim: 1, ..Default::default() }).unwrap();
            let snaps = free_evolve(&f, &sym, 0.5, &TimeWindow::new(0.0, 1.0, 16, 1).unwrap()).unwrap();
            let small = Ball::new(vec![0.0], r1).unwrap();
            let big = Ball::new(vec![0.0], r1 + r2).unwrap();
            let a = smoothing_norm(&snaps, s, &small, d1).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!(a <= smoothing_norm(&snaps, s, &small, d1 + d2).unwrap() + 1e-14);
            prop_assert!(a <= smoothing_norm(&snaps, s, &big, d1).unwrap() + 1e-14);
            let scaled = EvolutionResult {
                snapshots: snaps.snapshots.iter().map(|sn| Snapshot { t: sn.t, field: sn.field.scale(C64::new(c, 0.0)) }).collect(),
                ..snaps.clone()
            };
            let b = smoothing_norm(&scaled, s, &small, d1).unwrap();
            prop_assert!((b - c * c * a).abs() <= 1e-12 * (c * c * a).max(1e-300));
        }
    }
}
