//! ε-indexed families of initial data, their analytic weak limits, and the
//! frequency-concentration diagnostics.

use std::f64::consts::PI;

use crate::cutoff::{bump, chi, norm};
use crate::symbols::{Classification, SymbolSpec, DEFAULT_TOL};
use crate::{par, Error, Field, Grid, Result, C64};

/// Resolution safety factor on the highest frequency a family carries.
pub const FREQ_MARGIN: f64 = 1.5;
/// Minimum number of grid cells across the smallest profile scale.
pub const CELLS_PER_SCALE: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// Product of `(πσ²)^{-1/4} e^{-x²/(2σ²)}` over axes.
    Gaussian { widths: Vec<f64> },
    /// Radial `exp(1 - 1/(1 - r²))`, `r = ‖x‖/radius`, scaled to unit norm.
    Bump { radius: f64, dim: usize },
}

/// Unit-norm amplitude profile on `R^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    shape: Shape,
    center: Vec<f64>,
    scale: f64,
}

impl Profile {
    pub fn gaussian(widths: Vec<f64>, center: Vec<f64>) -> Result<Self> {
        if widths.is_empty() || widths.len() != center.len() {
            return Err(Error::param("gaussian widths and center must have equal nonzero length"));
        }
        if widths.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::param("gaussian widths must be positive"));
        }
        Ok(Profile { shape: Shape::Gaussian { widths }, center, scale: 1.0 })
    }

    /// Isotropic centred Gaussian.
    pub fn gaussian_iso(dim: usize, width: f64) -> Result<Self> {
        Self::gaussian(vec![width; dim], vec![0.0; dim])
    }

    pub fn bump(dim: usize, radius: f64, center: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&dim) || center.len() != dim {
            return Err(Error::param("bump profile needs dimension 1 or 2 and a matching center"));
        }
        if !(radius > 0.0) {
            return Err(Error::param("bump radius must be positive"));
        }
        let mass = bump_square_integral(dim) * radius.powi(dim as i32);
        Ok(Profile { shape: Shape::Bump { radius, dim }, center, scale: mass.sqrt().recip() })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Gaussian { widths } => widths
                .iter()
                .zip(&self.center)
                .zip(x)
                .map(|((s, c), xa)| {
                    let z = (xa - c) / s;
                    (PI * s * s).powf(-0.25) * (-0.5 * z * z).exp()
                })
                .product(),
            Shape::Bump { radius, .. } => {
                let r: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                self.scale * bump(r / radius)
            }
        }
    }

    /// Smallest length scale along any axis.
    pub fn min_scale(&self) -> f64 {
        match &self.shape {
            Shape::Gaussian { widths } => widths.iter().cloned().fold(f64::INFINITY, f64::min),
            Shape::Bump { radius, .. } => *radius,
        }
    }

    /// Frequency radius outside which the transform carries negligible
    /// mass (below about 1e-12 of the total).
    pub fn bandwidth(&self) -> f64 {
        match &self.shape {
            Shape::Gaussian { .. } => 5.3 / self.min_scale(),
            Shape::Bump { radius, .. } => 60.0 / radius,
        }
    }

    /// `∫ self(x) other(x) e^{i k·x} dx`.
    pub fn cross(&self, other: &Profile, k: &[f64]) -> C64 {
        if let (Shape::Gaussian { widths: w1 }, Shape::Gaussian { widths: w2 }) = (&self.shape, &other.shape) {
            let mut acc = C64::new(1.0, 0.0);
            for a in 0..self.dim() {
                let (s1, s2, c1, c2) = (w1[a], w2[a], self.center[a], other.center[a]);
                let qa = 0.5 / (s1 * s1) + 0.5 / (s2 * s2);
                let b = C64::new(c1 / (s1 * s1) + c2 / (s2 * s2), k[a]);
                let c = 0.5 * c1 * c1 / (s1 * s1) + 0.5 * c2 * c2 / (s2 * s2);
                let pre = (PI * s1 * s1).powf(-0.25) * (PI * s2 * s2).powf(-0.25) * (PI / qa).sqrt();
                acc *= (b * b / (4.0 * qa) - c).exp() * pre;
            }
            return acc;
        }
        // Simpson quadrature over a box covering both supports.
        let d = self.dim();
        let reach = |p: &Profile| match &p.shape {
            Shape::Gaussian { widths } => 9.0 * widths.iter().cloned().fold(0.0, f64::max),
            Shape::Bump { radius, .. } => *radius,
        };
        let lo: Vec<f64> = (0..d).map(|a| (self.center[a] - reach(self)).max(other.center[a] - reach(other))).collect();
        let hi: Vec<f64> = (0..d).map(|a| (self.center[a] + reach(self)).min(other.center[a] + reach(other))).collect();
        if (0..d).any(|a| hi[a] <= lo[a]) {
            return C64::new(0.0, 0.0);
        }
        let m = if d == 1 { 4096 } else { 512 };
        let w = |i: usize| if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let h: Vec<f64> = (0..d).map(|a| (hi[a] - lo[a]) / m as f64).collect();
        let f = |x: &[f64]| {
            let ph: f64 = x.iter().zip(k).map(|(a, b)| a * b).sum();
            C64::new(ph.cos(), ph.sin()) * (self.eval(x) * other.eval(x))
        };
        let mut acc = C64::new(0.0, 0.0);
        if d == 1 {
            for i in 0..=m {
                acc += f(&[lo[0] + i as f64 * h[0]]) * w(i);
            }
            acc * h[0] / 3.0
        } else {
            for i in 0..=m {
                for j in 0..=m {
                    acc += f(&[lo[0] + i as f64 * h[0], lo[1] + j as f64 * h[1]]) * (w(i) * w(j));
                }
            }
            acc * (h[0] * h[1] / 9.0)
        }
    }
}

/// `∫ bump(‖x‖)² dx` over the unit ball in dimension `dim`.
fn bump_square_integral(dim: usize) -> f64 {
    let m = 20000;
    let h = 1.0 / m as f64;
    let mut s = 0.0;
    for i in 0..=m {
        let r = i as f64 * h;
        let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let b = bump(r);
        s += w * b * b * if dim == 1 { 2.0 } else { 2.0 * PI * r };
    }
    s * h / 3.0
}

/// Parametric ε-indexed initial data. Coordinates split as `x = (x', x'')`
/// with `x'` the first `r` axes for the manifold families.
#[derive(Clone, Debug, PartialEq)]
pub enum DataFamily {
    /// `θ(x) e^{iξ₀·x/ε}`
    PlaneWaveModulated { profile: Profile, carrier: Vec<f64> },
    /// `θ₁(x) e^{iξ₁·x/ε} + θ₂(x) e^{iξ₂·x/ε}`
    TwoWave { first: Profile, first_carrier: Vec<f64>, second: Profile, second_carrier: Vec<f64> },
    /// `ε^{-d/4} θ((x - x₀)/√ε) e^{iξ₀·x/ε}`
    CoherentState { profile: Profile, center: Vec<f64>, carrier: Vec<f64> },
    /// `ε^{-αd/2} θ(x/ε^α) e^{i x·(ξ₀ + ε^β ω₀)/ε}`
    ShiftedDegenerate { profile: Profile, carrier: Vec<f64>, direction: Vec<f64>, alpha: f64, beta: f64 },
    /// `ε^{-αr/2} θ(x'') φ((x' - z₀)/ε^α) e^{i x'·ζ₀/ε}`
    ManifoldConcentrating { transverse: Profile, along: Profile, center: Vec<f64>, carrier: Vec<f64>, alpha: f64 },
    /// `ε^{-αp/2} θ(x''/ε^α) e^{i x''·ω₀/ε^{1-β}} e^{i ξ₀'·x'/ε} φ(x')`
    ManifoldShifted { transverse: Profile, along: Profile, carrier: Vec<f64>, direction: Vec<f64>, alpha: f64, beta: f64 },
}

pub const FAMILY_TAGS: &[&str] = &[
    "plane_wave",
    "two_wave",
    "coherent_state",
    "shifted_degenerate",
    "manifold_concentrating",
    "manifold_shifted",
];

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn phase(t: f64) -> C64 {
    C64::new(t.cos(), t.sin())
}

impl DataFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            DataFamily::PlaneWaveModulated { .. } => "plane_wave",
            DataFamily::TwoWave { .. } => "two_wave",
            DataFamily::CoherentState { .. } => "coherent_state",
            DataFamily::ShiftedDegenerate { .. } => "shifted_degenerate",
            DataFamily::ManifoldConcentrating { .. } => "manifold_concentrating",
            DataFamily::ManifoldShifted { .. } => "manifold_shifted",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DataFamily::PlaneWaveModulated { profile, .. }
            | DataFamily::CoherentState { profile, .. }
            | DataFamily::ShiftedDegenerate { profile, .. } => profile.dim(),
            DataFamily::TwoWave { first, .. } => first.dim(),
            DataFamily::ManifoldConcentrating { transverse, along, .. }
            | DataFamily::ManifoldShifted { transverse, along, .. } => transverse.dim() + along.dim(),
        }
    }

    /// `(r, p)` split for the manifold families.
    pub fn split(&self) -> Option<(usize, usize)> {
        match self {
            DataFamily::ManifoldConcentrating { transverse, along, .. }
            | DataFamily::ManifoldShifted { transverse, along, .. } => Some((along.dim(), transverse.dim())),
            _ => None,
        }
    }

    /// Structural checks that do not depend on a symbol.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let d = self.dim();
        if !(1..=2).contains(&d) {
            errs.push(format!("family dimension {d} not in {{1, 2}}"));
        }
        let want = |v: &[f64], n: usize, what: &str, errs: &mut Vec<String>| {
            if v.len() != n {
                errs.push(format!("{what} has length {}, expected {n}", v.len()));
            }
        };
        let unit = |v: &[f64], errs: &mut Vec<String>| {
            if (norm(v) - 1.0).abs() > 1e-12 {
                errs.push(format!("shift direction {v:?} must have unit Euclidean norm"));
            }
        };
        match self {
            DataFamily::PlaneWaveModulated { carrier, .. } => want(carrier, d, "carrier", &mut errs),
            DataFamily::TwoWave { first, first_carrier, second, second_carrier } => {
                if first.dim() != second.dim() {
                    errs.push("two_wave profiles differ in dimension".into());
                }
                want(first_carrier, d, "first carrier", &mut errs);
                want(second_carrier, d, "second carrier", &mut errs);
            }
            DataFamily::CoherentState { center, carrier, .. } => {
                want(center, d, "center", &mut errs);
                want(carrier, d, "carrier", &mut errs);
            }
            DataFamily::ShiftedDegenerate { carrier, direction, alpha, beta, .. } => {
                want(carrier, d, "carrier", &mut errs);
                want(direction, d, "shift direction", &mut errs);
                unit(direction, &mut errs);
                if !(0.0..1.0).contains(alpha) {
                    errs.push(format!("concentration exponent {alpha} must lie in [0, 1)"));
                }
                if !(*beta > 0.0 && *beta < 1.0) {
                    errs.push(format!("shift exponent {beta} must lie in (0, 1)"));
                }
            }
            DataFamily::ManifoldConcentrating { along, center, carrier, alpha, .. } => {
                want(center, along.dim(), "center", &mut errs);
                want(carrier, along.dim(), "carrier", &mut errs);
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    errs.push(format!("concentration exponent {alpha} must lie in (0, 1)"));
                }
            }
            DataFamily::ManifoldShifted { transverse, along, carrier, direction, alpha, beta } => {
                want(carrier, along.dim(), "carrier", &mut errs);
                want(direction, transverse.dim(), "shift direction", &mut errs);
                unit(direction, &mut errs);
                if !(0.0..1.0).contains(alpha) {
                    errs.push(format!("concentration exponent {alpha} must lie in [0, 1)"));
                }
                if !(*beta > 0.0 && *beta < 1.0) {
                    errs.push(format!("shift exponent {beta} must lie in (0, 1)"));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Hypotheses(errs))
        }
    }

    /// Pointwise value of the family formula at parameter `eps`.
    pub fn value(&self, eps: f64, x: &[f64]) -> C64 {
        match self {
            DataFamily::PlaneWaveModulated { profile, carrier } => {
                phase(dot(carrier, x) / eps) * profile.eval(x)
            }
            DataFamily::TwoWave { first, first_carrier, second, second_carrier } => {
                phase(dot(first_carrier, x) / eps) * first.eval(x)
                    + phase(dot(second_carrier, x) / eps) * second.eval(x)
            }
            DataFamily::CoherentState { profile, center, carrier } => {
                let s = eps.sqrt();
                let y: Vec<f64> = x.iter().zip(center).map(|(a, c)| (a - c) / s).collect();
                phase(dot(carrier, x) / eps) * (eps.powf(-(x.len() as f64) / 4.0) * profile.eval(&y))
            }
            DataFamily::ShiftedDegenerate { profile, carrier, direction, alpha, beta } => {
                let s = eps.powf(*alpha);
                let y: Vec<f64> = x.iter().map(|a| a / s).collect();
                let k: f64 = x.iter().zip(carrier.iter().zip(direction)).map(|(a, (c, w))| a * (c + eps.powf(*beta) * w)).sum();
                phase(k / eps) * (s.powf(-(x.len() as f64) / 2.0) * profile.eval(&y))
            }
            DataFamily::ManifoldConcentrating { transverse, along, center, carrier, alpha } => {
                let r = along.dim();
                let s = eps.powf(*alpha);
                let y: Vec<f64> = x[..r].iter().zip(center).map(|(a, c)| (a - c) / s).collect();
                phase(dot(carrier, &x[..r]) / eps)
                    * (s.powf(-(r as f64) / 2.0) * along.eval(&y) * transverse.eval(&x[r..]))
            }
            DataFamily::ManifoldShifted { transverse, along, carrier, direction, alpha, beta } => {
                let r = along.dim();
                let p = transverse.dim();
                let s = eps.powf(*alpha);
                let y: Vec<f64> = x[r..].iter().map(|a| a / s).collect();
                let ph = dot(direction, &x[r..]) / eps.powf(1.0 - beta) + dot(carrier, &x[..r]) / eps;
                phase(ph) * (s.powf(-(p as f64) / 2.0) * transverse.eval(&y) * along.eval(&x[..r]))
            }
        }
    }

    /// Analytic `‖u₀^ε‖²`.
    pub fn analytic_mass(&self, eps: f64) -> f64 {
        match self {
            DataFamily::TwoWave { first, first_carrier, second, second_carrier } => {
                let k: Vec<f64> = first_carrier.iter().zip(second_carrier).map(|(a, b)| (a - b) / eps).collect();
                2.0 + 2.0 * first.cross(second, &k).re
            }
            _ => 1.0,
        }
    }

    /// Per axis: (smallest length scale, highest carried frequency).
    fn scales(&self, eps: f64) -> Vec<(f64, f64)> {
        let d = self.dim();
        let mut out = vec![(f64::INFINITY, 0.0f64); d];
        let mut put = |a: usize, scale: f64, freq: f64| {
            out[a].0 = out[a].0.min(scale);
            out[a].1 = out[a].1.max(freq);
        };
        match self {
            DataFamily::PlaneWaveModulated { profile, carrier } => {
                for a in 0..d {
                    put(a, profile.min_scale(), carrier[a].abs() / eps + profile.bandwidth());
                }
            }
            DataFamily::TwoWave { first, first_carrier, second, second_carrier } => {
                for a in 0..d {
                    put(a, first.min_scale(), first_carrier[a].abs() / eps + first.bandwidth());
                    put(a, second.min_scale(), second_carrier[a].abs() / eps + second.bandwidth());
                }
            }
            DataFamily::CoherentState { profile, carrier, .. } => {
                let s = eps.sqrt();
                for a in 0..d {
                    put(a, s * profile.min_scale(), carrier[a].abs() / eps + profile.bandwidth() / s);
                }
            }
            DataFamily::ShiftedDegenerate { profile, carrier, direction, alpha, beta } => {
                let s = eps.powf(*alpha);
                for a in 0..d {
                    let k = (carrier[a] + eps.powf(*beta) * direction[a]).abs() / eps;
                    put(a, s * profile.min_scale(), k + profile.bandwidth() / s);
                }
            }
            DataFamily::ManifoldConcentrating { transverse, along, carrier, alpha, .. } => {
                let r = along.dim();
                let s = eps.powf(*alpha);
                for a in 0..r {
                    put(a, s * along.min_scale(), carrier[a].abs() / eps + along.bandwidth() / s);
                }
                for a in r..d {
                    put(a, transverse.min_scale(), transverse.bandwidth());
                }
            }
            DataFamily::ManifoldShifted { transverse, along, carrier, direction, alpha, beta } => {
                let r = along.dim();
                let s = eps.powf(*alpha);
                for a in 0..r {
                    put(a, along.min_scale(), carrier[a].abs() / eps + along.bandwidth());
                }
                for a in r..d {
                    let k = direction[a - r].abs() / eps.powf(1.0 - beta);
                    put(a, s * transverse.min_scale(), k + transverse.bandwidth() / s);
                }
            }
        }
        out
    }

    /// Minimal power-of-two N per axis that resolves the family at `eps`
    /// on a box with the given half-lengths.
    pub fn required_points(&self, eps: f64, half_len: &[f64]) -> Vec<usize> {
        self.scales(eps)
            .iter()
            .zip(half_len)
            .map(|(&(scale, freq), &l)| {
                let by_freq = Grid::required_points(l, FREQ_MARGIN * freq);
                let by_scale = ((CELLS_PER_SCALE * 2.0 * l / scale).ceil() as usize).next_power_of_two();
                by_freq.max(by_scale).max(8)
            })
            .collect()
    }

    /// Sample at `eps`, refusing under-resolved grids and checking the
    /// discrete mass against the analytic one to 1%.
    pub fn sample(&self, eps: f64, grid: &Grid) -> Result<Field> {
        if !(eps > 0.0) {
            return Err(Error::param(format!("ε must be positive, got {eps}")));
        }
        self.validate()?;
        if grid.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: grid.dim() });
        }
        let need = self.required_points(eps, grid.half_lengths());
        if need.iter().zip(grid.shape()).any(|(n, have)| n > have) {
            return Err(Error::UnderResolved {
                required_n: need.iter().copied().max().unwrap_or(8),
                detail: format!("{} at ε = {eps} needs N = {need:?}, grid has {:?}", self.tag(), grid.shape()),
            });
        }
        let f = Field::from_fn(*grid, |x| self.value(eps, x))?;
        let got = f.norm_sqr();
        let want = self.analytic_mass(eps);
        if ((got - want) / want).abs() > 0.01 {
            return Err(Error::UnderResolved {
                required_n: 2 * grid.shape().iter().copied().max().unwrap_or(8),
                detail: format!("{} at ε = {eps}: discrete mass {got} vs analytic {want}", self.tag()),
            });
        }
        Ok(f)
    }

    /// Analytic weak limit of `e^{-iξ·x/ε} u₀^ε`, sampled on `grid`, or
    /// `None` when it vanishes.
    pub fn weak_limit_profile(&self, xi: &[f64], grid: &Grid) -> Result<Option<Field>> {
        let hit = |c: &[f64]| c.len() == xi.len() && c.iter().zip(xi).all(|(a, b)| (a - b).abs() <= 1e-12);
        let prof = match self {
            DataFamily::PlaneWaveModulated { profile, carrier } if hit(carrier) => Some(profile),
            DataFamily::TwoWave { first, first_carrier, .. } if hit(first_carrier) => Some(first),
            DataFamily::TwoWave { second, second_carrier, .. } if hit(second_carrier) => Some(second),
            _ => None,
        };
        match prof {
            None => Ok(None),
            Some(p) => {
                if grid.dim() != p.dim() {
                    return Err(Error::DimensionMismatch { expected: p.dim(), got: grid.dim() });
                }
                Ok(Some(Field::from_fn(*grid, |x| C64::new(p.eval(x), 0.0))?))
            }
        }
    }

    /// Frequencies at which the family oscillates at the semiclassical scale.
    pub fn carriers(&self) -> Vec<Vec<f64>> {
        match self {
            DataFamily::PlaneWaveModulated { carrier, .. }
            | DataFamily::CoherentState { carrier, .. }
            | DataFamily::ShiftedDegenerate { carrier, .. } => vec![carrier.clone()],
            DataFamily::TwoWave { first_carrier, second_carrier, .. } => {
                vec![first_carrier.clone(), second_carrier.clone()]
            }
            DataFamily::ManifoldConcentrating { carrier, transverse, .. }
            | DataFamily::ManifoldShifted { carrier, transverse, .. } => {
                let mut c = carrier.clone();
                c.extend(std::iter::repeat_n(0.0, transverse.dim()));
                vec![c]
            }
        }
    }

    /// Does the family satisfy the frequency-concentration condition at the
    /// given frequency? Profiles fixed in ε do; concentrating or shifted
    /// data leak mass to `‖η‖ → ∞`.
    pub fn concentrates_at_rate_eps(&self) -> bool {
        matches!(self, DataFamily::PlaneWaveModulated { .. } | DataFamily::TwoWave { .. })
    }

    /// Hypotheses linking the family to a symbol: (hard violations, notes).
    pub fn check_against(&self, sym: &SymbolSpec) -> (Vec<String>, Vec<String>) {
        let mut errs = Vec::new();
        let mut notes = Vec::new();
        if sym.dim() != self.dim() {
            errs.push(format!("symbol dimension {} differs from family dimension {}", sym.dim(), self.dim()));
            return (errs, notes);
        }
        match self {
            DataFamily::ShiftedDegenerate { carrier, direction, alpha, beta, .. } => {
                match sym.classify_critical(carrier, DEFAULT_TOL) {
                    Ok(Classification::Degenerate(kernel)) => {
                        let h = sym.hess(carrier).expect("dimension checked");
                        let hw = &h * nalgebra::DVector::from_column_slice(direction);
                        if hw.norm() > 1e-10 {
                            errs.push(format!(
                                "shift direction {direction:?} is not in the Hessian kernel {kernel:?} at {carrier:?}"
                            ));
                        }
                    }
                    _ => errs.push(format!("shifted data need a degenerate critical point; {carrier:?} is not one")),
                }
                if alpha + beta >= 1.0 {
                    notes.push(format!(
                        "concentration + shift exponents {alpha} + {beta} >= 1: the shift no longer dominates the profile's frequency spread"
                    ));
                }
            }
            DataFamily::ManifoldConcentrating { .. } | DataFamily::ManifoldShifted { .. } => {
                let (r, p) = self.split().expect("manifold family");
                match sym.critical_set() {
                    crate::symbols::CriticalSet::AffineManifold { r: sr, p: sp, .. } if *sr == r && *sp == p => {}
                    _ => errs.push(format!("manifold data need an affine critical manifold with split r = {r}, p = {p}")),
                }
                if let DataFamily::ManifoldShifted { carrier, direction, .. } = self {
                    let mut xi0 = carrier.clone();
                    xi0.extend(std::iter::repeat_n(0.0, p));
                    if let Ok(h) = sym.hess(&xi0) {
                        let block = h.view((r, r), (p, p)).into_owned();
                        if (&block * nalgebra::DVector::from_column_slice(direction)).norm() > 1e-10 {
                            errs.push(format!(
                                "shift direction {direction:?} is not in the kernel of the transverse Hessian at {xi0:?}"
                            ));
                        }
                    }
                }
            }
            _ => {}
        }
        (errs, notes)
    }
}

/// `sample_data` of the data model.
pub fn sample_data(fam: &DataFamily, eps: f64, grid: &Grid) -> Result<Field> {
    fam.sample(eps, grid)
}

/// `(2π)^{-d} ∫_{‖ξ‖ > radius} |f̂(ξ)|² dξ` on the lattice.
pub fn tail_mass(f: &Field, radius: f64) -> f64 {
    let ff = f.to_frequency();
    let g = *f.grid();
    let d = g.dim();
    let c = ff.coeffs();
    let w = g.freq_cell_volume() / (2.0 * PI).powi(d as i32);
    w * par::sum_range(c.len(), |i| {
        if norm(&g.freq_point(i)[..d]) > radius {
            c[i].norm_sqr()
        } else {
            0.0
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OscillationTable {
    /// `(ε, R, tail mass beyond R/ε)`
    pub rows: Vec<(f64, f64, f64)>,
    /// `(R, max tail over the smallest half of the ε list)`
    pub limsup: Vec<(f64, f64)>,
}

pub fn check_eps_oscillating(fam: &DataFamily, eps: &[f64], radii: &[f64], grid: &Grid) -> Result<OscillationTable> {
    let increasing = |v: &[f64]| !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]);
    if !increasing(eps) || !increasing(radii) {
        return Err(Error::param("ε and R lists must be nonempty and strictly increasing"));
    }
    let mut rows = Vec::new();
    for &e in eps {
        let f = fam.sample(e, grid)?;
        for &r in radii {
            rows.push((e, r, tail_mass(&f, r / e)));
        }
    }
    let small = eps.len().div_ceil(2);
    let limsup = radii
        .iter()
        .map(|&r| {
            let m = rows
                .iter()
                .filter(|(e, rr, _)| *rr == r && eps[..small].contains(e))
                .map(|x| x.2)
                .fold(0.0, f64::max);
            (r, m)
        })
        .collect();
    Ok(OscillationTable { rows, limsup })
}

/// `‖(1-χ)((εD - ξ)/(εR)) χ((εD - ξ)/δ) u₀^ε‖`
pub fn frequency_window_criterion(fam: &DataFamily, xi: &[f64], eps: f64, r: f64, delta: f64, grid: &Grid) -> Result<f64> {
    if !(delta > 0.0) || !(r >= 1.0) {
        return Err(Error::param(format!("need δ > 0 and R >= 1, got δ = {delta}, R = {r}")));
    }
    if xi.len() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), got: xi.len() });
    }
    let u = fam.sample(eps, grid)?;
    Ok(frequency_window_norm(&u, xi, eps, r, delta))
}

/// The multiplier of [`frequency_window_criterion`] applied to an arbitrary field.
pub fn frequency_window_norm(u: &Field, xi: &[f64], eps: f64, r: f64, delta: f64) -> f64 {
    let t = u.grid().freq_table(|k| {
        let off: f64 = k.iter().zip(xi).map(|(a, b)| (eps * a - b).powi(2)).sum::<f64>().sqrt();
        (1.0 - chi(off / (eps * r))) * chi(off / delta)
    });
    u.apply_real_table(&t).l2_norm()
}
