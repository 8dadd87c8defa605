//! Closed-form and quadrature oracles for the ε → 0 limits of time-averaged
//! position densities `∫Ξ(t)∫φ|u^ε(t)|² dx dt`.
//!
//! Profile quadratures run on the caller's grid, so an oracle and the
//! measurement it is compared with share their discretisation.

use std::fmt;

use nalgebra::DMatrix;

use crate::initial_data::{DataFamily, Profile};
use crate::propagator::{evolve_observe, time_average, time_average_c, transverse_hessian, Generator, TimeWindow};
use crate::symbols::{CriticalSet, PotentialSpec, SymbolSpec, DEFAULT_TOL};
use crate::wigner::{EtaFactor, Split, Term, TwoMicroSymbol, XFactor};
use crate::{Error, Field, Grid, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LimitTag {
    DispersedZero,
    ProfileDensity,
    PointMass,
    ManifoldProfile,
    ManifoldPointMass,
}

impl LimitTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            LimitTag::DispersedZero => "dispersed_zero",
            LimitTag::ProfileDensity => "profile_density",
            LimitTag::PointMass => "point_mass",
            LimitTag::ManifoldProfile => "manifold_profile",
            LimitTag::ManifoldPointMass => "manifold_point_mass",
        }
    }
}

impl fmt::Display for LimitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictedLimit {
    pub value: f64,
    pub tag: LimitTag,
    /// Which limit statement the value comes from.
    pub provenance: &'static str,
    /// `false` when the value is only a lower bound for the limit.
    pub equality: bool,
    pub notes: Vec<String>,
}

impl PredictedLimit {
    fn new(value: f64, tag: LimitTag, provenance: &'static str, equality: bool) -> Self {
        PredictedLimit { value, tag, provenance, equality, notes: Vec::new() }
    }
}

const ISOLATED: &str = "defect measure at isolated critical points: sum of profile densities";
const ISOLATED_LOWER: &str = "defect measure at isolated critical points: profile densities (lower bound, degenerate point)";
const DEGENERATE_PROFILE: &str = "shifted data at a degenerate critical point, unconcentrated profile";
const DEGENERATE_POINT: &str = "shifted data at a degenerate critical point, concentrating profile";
const MANIFOLD_CONC: &str = "data concentrating along a critical manifold: transverse Heisenberg flow";
const MANIFOLD_SHIFT_PROFILE: &str = "shifted data transverse to a critical manifold, unconcentrated profile";
const MANIFOLD_SHIFT_POINT: &str = "shifted data transverse to a critical manifold, concentrating profile";

fn window_mass(w: &TimeWindow) -> f64 {
    let s: Vec<(f64, f64)> = w.snapshot_times().into_iter().map(|t| (t, 1.0)).collect();
    time_average(&s, w)
}

/// `∫Ξ(t) ∫ φ |θ(t)|²` for `θ` evolved by the profile generator.
fn averaged_density(theta: &Field, gen: &Generator, w: &TimeWindow, phi: impl Fn(&[f64]) -> f64 + Sync + Send) -> Result<f64> {
    let obs = evolve_observe(theta, gen, w, false, |_, u| u.weighted_mass(&phi))?;
    if let Some(msg) = obs.guard_violation() {
        return Err(Error::Guard(format!("profile evolution: {msg}")));
    }
    Ok(time_average(&obs.values, w))
}

fn sample_profile(p: &Profile, grid: &Grid) -> Result<Field> {
    if p.dim() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: grid.dim() });
    }
    Field::from_fn(*grid, |x| C64::new(p.eval(x), 0.0))
}

/// Axes `range` of `grid` as a grid of their own.
fn sub_grid(grid: &Grid, range: std::ops::Range<usize>) -> Result<Grid> {
    let n: Vec<usize> = range.clone().map(|a| grid.points(a)).collect();
    let l: Vec<f64> = range.map(|a| grid.half_len(a)).collect();
    Grid::new(&n, &l)
}

fn hypotheses(errs: Vec<String>) -> Result<()> {
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Hypotheses(errs))
    }
}

/// Sum over isolated critical points of the averaged profile densities.
///
/// The value is an equality claim when every critical point is
/// nondegenerate or the family concentrates at rate ε; otherwise it is
/// flagged as a lower bound.
pub fn predict_isolated(
    fam: &DataFamily,
    sym: &SymbolSpec,
    v: &PotentialSpec,
    phi: &XFactor,
    w: &TimeWindow,
    grid: &Grid,
) -> Result<PredictedLimit> {
    fam.validate()?;
    w.validate()?;
    let CriticalSet::FinitePoints(points) = sym.critical_set() else {
        return Err(Error::param(format!("{} has no isolated critical points", sym.tag())));
    };
    if sym.dim() != fam.dim() || grid.dim() != fam.dim() {
        return Err(Error::DimensionMismatch { expected: fam.dim(), got: sym.dim().max(grid.dim()) });
    }
    let degenerate = points.iter().any(|p| p.hessian_rank < sym.dim());
    let equality = !degenerate || fam.concentrates_at_rate_eps();
    let mut total = 0.0;
    let mut hit = false;
    for p in points {
        let Some(theta) = fam.weak_limit_profile(&p.location, grid)? else {
            continue;
        };
        hit = true;
        let gen = Generator::profile(&sym.hess(&p.location)?, grid)?.with_potential(v)?;
        total += averaged_density(&theta, &gen, w, |x| phi.eval(x))?;
    }
    let mut out = if hit {
        let prov = if equality { ISOLATED } else { ISOLATED_LOWER };
        PredictedLimit::new(total, LimitTag::ProfileDensity, prov, equality)
    } else {
        let prov = if equality { ISOLATED } else { ISOLATED_LOWER };
        PredictedLimit::new(0.0, LimitTag::DispersedZero, prov, equality)
    };
    if !equality {
        out.notes.push("a degenerate critical point is present and the data do not concentrate at rate ε".into());
    }
    Ok(out)
}

/// Limit for shifted data at a degenerate critical point with `V = 0`.
pub fn predict_degenerate(fam: &DataFamily, sym: &SymbolSpec, v: &PotentialSpec, phi: &XFactor, w: &TimeWindow, grid: &Grid) -> Result<PredictedLimit> {
    fam.validate()?;
    w.validate()?;
    let DataFamily::ShiftedDegenerate { profile, carrier, alpha, beta, .. } = fam else {
        return Err(Error::param("degenerate prediction needs shifted_degenerate data"));
    };
    let (mut errs, notes) = fam.check_against(sym);
    if !v.is_zero() {
        errs.push("the potential must vanish".into());
    }
    if *beta <= 2.0 / 3.0 {
        errs.push(format!("shift exponent {beta} must exceed 2/3"));
    }
    hypotheses(errs)?;
    let mut out = if *alpha == 0.0 {
        let theta = sample_profile(profile, grid)?;
        let gen = Generator::profile(&sym.hess(carrier)?, grid)?;
        let val = averaged_density(&theta, &gen, w, |x| phi.eval(x))?;
        PredictedLimit::new(val, LimitTag::ProfileDensity, DEGENERATE_PROFILE, true)
    } else {
        let origin = vec![0.0; fam.dim()];
        // the profile concentrates at the origin with unit norm
        let val = window_mass(w) * phi.eval(&origin);
        PredictedLimit::new(val, LimitTag::PointMass, DEGENERATE_POINT, true)
    };
    out.notes = notes;
    Ok(out)
}

/// Limits along an affine critical manifold `{ξ'' = ξ₀''}`.
///
/// `grid` is the full experiment grid; the transverse flow runs on its
/// last `p` axes. The rank condition for equality is checked at the
/// carrier; every catalog manifold symbol is invariant along `ξ'`.
pub fn predict_manifold(fam: &DataFamily, sym: &SymbolSpec, v: &PotentialSpec, phi: &XFactor, w: &TimeWindow, grid: &Grid) -> Result<PredictedLimit> {
    fam.validate()?;
    w.validate()?;
    let (mut errs, notes) = fam.check_against(sym);
    if grid.dim() != fam.dim() {
        errs.push(format!("grid dimension {} differs from family dimension {}", grid.dim(), fam.dim()));
    }
    let Some((r, p)) = fam.split() else {
        return Err(Error::param("manifold prediction needs manifold_concentrating or manifold_shifted data"));
    };
    if let DataFamily::ManifoldShifted { beta, .. } = fam {
        if *beta <= 2.0 / 3.0 {
            errs.push(format!("shift exponent {beta} must exceed 2/3"));
        }
        if !v.is_zero() {
            errs.push("the potential must vanish for shifted manifold data".into());
        }
    }
    hypotheses(errs)?;
    let tgrid = sub_grid(grid, r..r + p)?;
    let agrid = sub_grid(grid, 0..r)?;
    let mut out = match fam {
        DataFamily::ManifoldConcentrating { transverse, center, carrier, .. } => {
            let mut xi0 = carrier.clone();
            if let CriticalSet::AffineManifold { base, .. } = sym.critical_set() {
                xi0.extend_from_slice(base);
            }
            let rank = full_rank(&sym.hess(&xi0)?);
            let theta = sample_profile(transverse, &tgrid)?;
            let h = transverse_hessian(sym, carrier)?;
            let vals = transverse_potential(v, center, &tgrid);
            let mut gen = Generator::profile(&h, &tgrid)?;
            if !v.is_zero() {
                gen = gen.with_potential_values(vals)?;
            }
            // the along profile concentrates at scale ε^α; its unit norm is exact
            let along_mass = 1.0;
            let dens = averaged_density(&theta, &gen, w, |y| {
                let mut x = center.clone();
                x.extend_from_slice(y);
                phi.eval(&x)
            })?;
            let mut o = PredictedLimit::new(along_mass * dens, LimitTag::ManifoldProfile, MANIFOLD_CONC, rank == p);
            if rank != p {
                o.notes.push(format!("Hessian rank {rank} differs from codimension {p}: value is a lower bound"));
            }
            o
        }
        DataFamily::ManifoldShifted { transverse, along, carrier, alpha, .. } => {
            let prof = sample_profile(along, &agrid)?;
            let weights: Vec<(Vec<f64>, f64)> = (0..agrid.len())
                .map(|i| (agrid.point(i)[..r].to_vec(), prof.values()[i].norm_sqr() * agrid.cell_volume()))
                .filter(|(_, m)| *m > 0.0)
                .collect();
            if *alpha == 0.0 {
                let theta = sample_profile(transverse, &tgrid)?;
                let gen = Generator::profile(&transverse_hessian(sym, carrier)?, &tgrid)?;
                let val = averaged_density(&theta, &gen, w, |y| {
                    weights
                        .iter()
                        .map(|(xp, m)| {
                            let mut x = xp.clone();
                            x.extend_from_slice(y);
                            m * phi.eval(&x)
                        })
                        .sum()
                })?;
                PredictedLimit::new(val, LimitTag::ManifoldProfile, MANIFOLD_SHIFT_PROFILE, true)
            } else {
                // concentrating transverse profile: unit norm
                let theta_mass = 1.0;
                let on_plane: f64 = weights
                    .iter()
                    .map(|(xp, m)| {
                        let mut x = xp.clone();
                        x.extend(std::iter::repeat_n(0.0, p));
                        m * phi.eval(&x)
                    })
                    .sum();
                PredictedLimit::new(window_mass(w) * theta_mass * on_plane, LimitTag::ManifoldPointMass, MANIFOLD_SHIFT_POINT, true)
            }
        }
        _ => unreachable!("split() is Some only for manifold families"),
    };
    out.notes.extend(notes);
    Ok(out)
}

fn full_rank(h: &DMatrix<f64>) -> usize {
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    eig.eigenvalues.iter().filter(|v| v.abs() > DEFAULT_TOL * scale).count()
}

fn transverse_potential(v: &PotentialSpec, along_pos: &[f64], tgrid: &Grid) -> Vec<f64> {
    let d = tgrid.dim();
    (0..tgrid.len())
        .map(|i| {
            let mut x = along_pos.to_vec();
            x.extend_from_slice(&tgrid.point(i)[..d]);
            v.eval(&x)
        })
        .collect()
}

/// The only momenta that can carry non-dispersed mass.
pub fn predict_support(sym: &SymbolSpec) -> CriticalSet {
    sym.critical_set().clone()
}

pub fn describe_support(set: &CriticalSet) -> String {
    match set {
        CriticalSet::FinitePoints(ps) => {
            let locs: Vec<String> = ps.iter().map(|p| format!("{:?}", p.location)).collect();
            format!("xi in {{{}}}", locs.join(", "))
        }
        CriticalSet::AffineManifold { r, p, base } => {
            format!("xi'' = {base:?} (xi' free in R^{r}, codimension {p})")
        }
        CriticalSet::None => "empty".into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsistencyValue {
    pub value: f64,
    /// The family has no weak limit at the symbol's base point.
    pub vanishing: bool,
}

/// `∫Ξ (op₁(A_R) u(t), u(t)) dt` with `A_R(x, k) = a(x, ξ₀, k) χ(|k|/R)` and
/// `u` the profile at `ξ₀ = a.split.base` evolved on `grid`.
pub fn profile_side_pairing(
    fam: &DataFamily,
    sym: &SymbolSpec,
    v: &PotentialSpec,
    a: &TwoMicroSymbol,
    w: &TimeWindow,
    r: f64,
    grid: &Grid,
) -> Result<ConsistencyValue> {
    if a.split.r != 0 {
        return Err(Error::param("consistency check is for isolated critical points"));
    }
    if !(r > 0.0) {
        return Err(Error::param(format!("cutoff radius must be positive, got {r}")));
    }
    let xi0 = &a.split.base;
    let Some(theta) = fam.weak_limit_profile(xi0, grid)? else {
        return Ok(ConsistencyValue { value: 0.0, vanishing: true });
    };
    let d = xi0.len();
    // freeze ξ at ξ₀, rename η to the scale-1 frequency k
    let mut frozen = TwoMicroSymbol::new(Split::point(&vec![0.0; d]));
    for t in &a.terms {
        let xi_val: f64 = t.xi.iter().map(|f| frozen_xi(f, xi0, &a.split)).product();
        let mut eta = t.eta.clone();
        eta.push(EtaFactor::Inner { r });
        frozen.terms.push(Term { coeff: t.coeff * xi_val, x: t.x.clone(), xi: vec![], eta });
    }
    let prep = frozen.prepare(grid, 1.0)?;
    let gen = Generator::profile(&sym.hess(xi0)?, grid)?.with_potential(v)?;
    let obs = evolve_observe(&theta, &gen, w, false, |_, u| prep.expect(u))?;
    if let Some(msg) = obs.guard_violation() {
        return Err(Error::Guard(format!("profile evolution: {msg}")));
    }
    let samples: Vec<(f64, C64)> = obs.values.into_iter().map(|(t, z)| z.map(|z| (t, z))).collect::<Result<_>>()?;
    Ok(ConsistencyValue { value: time_average_c(&samples, w).re, vanishing: false })
}

fn frozen_xi(f: &crate::wigner::XiFactor, xi0: &[f64], split: &Split) -> f64 {
    let probe = TwoMicroSymbol::new(split.clone()).with_term(1.0, XFactor::One, vec![f.clone()], vec![]);
    probe.eval(&vec![0.0; xi0.len()], xi0, &vec![0.0; split.p])
}
