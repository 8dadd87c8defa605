//! Closed-form dispersion relations with exact derivatives and classified
//! critical sets, plus the catalog of bounded potentials.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::cutoff::norm;
use crate::{Error, Grid, Result};

/// Default eigenvalue tolerance for [`SymbolSpec::classify_critical`].
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum SymbolKind {
    /// `‖ξ‖²`
    IsoQuadratic,
    /// `‖ξ - c‖²`
    ShiftedQuadratic { center: Vec<f64> },
    /// `ξ⁴` in one dimension, `ξ₁² + ξ₂⁴` in two.
    QuarticDegenerate,
    /// `(ξ² - 1)²`, one dimension.
    DoubleWell,
    /// `‖ξ''‖²` where `ξ''` are the last `p` coordinates.
    ManifoldQuadratic { p: usize },
    /// `‖ξ''‖⁴`: same critical manifold with a vanishing transverse Hessian.
    ManifoldQuartic { p: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub hessian_rank: usize,
    /// Orthonormal basis of the Hessian kernel.
    pub kernel_basis: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CriticalSet {
    FinitePoints(Vec<CriticalPoint>),
    /// `{ξ : ξ'' = base}` with `ξ = (ξ', ξ'') ∈ R^r × R^p`.
    AffineManifold { r: usize, p: usize, base: Vec<f64> },
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Classification {
    NotCritical,
    NonDegenerate,
    Degenerate(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolSpec {
    kind: SymbolKind,
    dim: usize,
    critical_set: CriticalSet,
}

/// Parameters for [`builtin_symbol`]; unused fields are ignored per tag.
#[derive(Clone, Debug, Default)]
pub struct SymbolParams {
    pub dim: usize,
    pub center: Option<Vec<f64>>,
    pub p: Option<usize>,
}

pub const SYMBOL_TAGS: &[&str] = &[
    "iso_quadratic",
    "shifted_quadratic",
    "quartic_degenerate",
    "double_well_1d",
    "manifold_quadratic",
    "manifold_quartic",
];

pub fn builtin_symbol(tag: &str, params: &SymbolParams) -> Result<SymbolSpec> {
    let dim = params.dim;
    if !(1..=2).contains(&dim) {
        return Err(Error::param(format!("symbol dimension {dim} not in {{1, 2}}")));
    }
    let manifold_p = || -> Result<usize> {
        let p = params.p.unwrap_or(1);
        if p == 0 || p > dim {
            return Err(Error::param(format!("manifold codimension p = {p} must lie in 1..={dim}")));
        }
        Ok(p)
    };
    let kind = match tag {
        "iso_quadratic" => SymbolKind::IsoQuadratic,
        "shifted_quadratic" => {
            let c = params.center.clone().unwrap_or_else(|| vec![0.0; dim]);
            if c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
            }
            SymbolKind::ShiftedQuadratic { center: c }
        }
        "quartic_degenerate" => SymbolKind::QuarticDegenerate,
        "double_well_1d" => {
            if dim != 1 {
                return Err(Error::param("double_well_1d is one-dimensional"));
            }
            SymbolKind::DoubleWell
        }
        "manifold_quadratic" => SymbolKind::ManifoldQuadratic { p: manifold_p()? },
        "manifold_quartic" => SymbolKind::ManifoldQuartic { p: manifold_p()? },
        other => return Err(Error::UnknownTag(other.to_string())),
    };
    SymbolSpec::from_kind(kind, dim)
}

impl SymbolSpec {
    pub fn from_kind(kind: SymbolKind, dim: usize) -> Result<Self> {
        let mut s = SymbolSpec { kind, dim, critical_set: CriticalSet::None };
        let points: Vec<Vec<f64>> = match &s.kind {
            SymbolKind::IsoQuadratic | SymbolKind::QuarticDegenerate => vec![vec![0.0; dim]],
            SymbolKind::ShiftedQuadratic { center } => vec![center.clone()],
            SymbolKind::DoubleWell => vec![vec![-1.0], vec![0.0], vec![1.0]],
            SymbolKind::ManifoldQuadratic { p } | SymbolKind::ManifoldQuartic { p } => {
                s.critical_set = CriticalSet::AffineManifold { r: dim - p, p: *p, base: vec![0.0; *p] };
                return Ok(s);
            }
        };
        let mut crit = Vec::new();
        for loc in points {
            let kernel = match s.classify_critical(&loc, DEFAULT_TOL)? {
                Classification::NonDegenerate => vec![],
                Classification::Degenerate(k) => k,
                Classification::NotCritical => unreachable!("catalog point is critical"),
            };
            crit.push(CriticalPoint { hessian_rank: dim - kernel.len(), location: loc, kernel_basis: kernel });
        }
        s.critical_set = CriticalSet::FinitePoints(crit);
        Ok(s)
    }

    pub fn kind(&self) -> &SymbolKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn critical_set(&self) -> &CriticalSet {
        &self.critical_set
    }

    /// Growth exponent of the symbol class.
    pub fn order(&self) -> f64 {
        match self.kind {
            SymbolKind::IsoQuadratic | SymbolKind::ShiftedQuadratic { .. } | SymbolKind::ManifoldQuadratic { .. } => 2.0,
            _ => 4.0,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self.kind {
            SymbolKind::IsoQuadratic => "iso_quadratic",
            SymbolKind::ShiftedQuadratic { .. } => "shifted_quadratic",
            SymbolKind::QuarticDegenerate => "quartic_degenerate",
            SymbolKind::DoubleWell => "double_well_1d",
            SymbolKind::ManifoldQuadratic { .. } => "manifold_quadratic",
            SymbolKind::ManifoldQuartic { .. } => "manifold_quartic",
        }
    }

    fn check(&self, xi: &[f64]) -> Result<()> {
        if xi.len() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, got: xi.len() })
        }
    }

    fn transverse_start(&self) -> usize {
        match self.kind {
            SymbolKind::ManifoldQuadratic { p } | SymbolKind::ManifoldQuartic { p } => self.dim - p,
            _ => 0,
        }
    }

    /// `λ(ξ)` without the dimension check; for hot loops.
    pub fn value(&self, xi: &[f64]) -> f64 {
        match &self.kind {
            SymbolKind::IsoQuadratic => xi.iter().map(|a| a * a).sum(),
            SymbolKind::ShiftedQuadratic { center } => {
                xi.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum()
            }
            SymbolKind::QuarticDegenerate => {
                if self.dim == 1 {
                    xi[0].powi(4)
                } else {
                    xi[0] * xi[0] + xi[1].powi(4)
                }
            }
            SymbolKind::DoubleWell => (xi[0] * xi[0] - 1.0).powi(2),
            SymbolKind::ManifoldQuadratic { .. } => {
                xi[self.transverse_start()..].iter().map(|a| a * a).sum()
            }
            SymbolKind::ManifoldQuartic { .. } => {
                let s: f64 = xi[self.transverse_start()..].iter().map(|a| a * a).sum();
                s * s
            }
        }
    }

    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        self.check(xi)?;
        Ok(self.value(xi))
    }

    pub fn grad(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.check(xi)?;
        let d = self.dim;
        let g = match &self.kind {
            SymbolKind::IsoQuadratic => xi.iter().map(|a| 2.0 * a).collect(),
            SymbolKind::ShiftedQuadratic { center } => {
                xi.iter().zip(center).map(|(a, c)| 2.0 * (a - c)).collect()
            }
            SymbolKind::QuarticDegenerate => {
                if d == 1 {
                    vec![4.0 * xi[0].powi(3)]
                } else {
                    vec![2.0 * xi[0], 4.0 * xi[1].powi(3)]
                }
            }
            SymbolKind::DoubleWell => vec![4.0 * xi[0] * (xi[0] * xi[0] - 1.0)],
            SymbolKind::ManifoldQuadratic { .. } => {
                let s = self.transverse_start();
                (0..d).map(|i| if i >= s { 2.0 * xi[i] } else { 0.0 }).collect()
            }
            SymbolKind::ManifoldQuartic { .. } => {
                let s = self.transverse_start();
                let q: f64 = xi[s..].iter().map(|a| a * a).sum();
                (0..d).map(|i| if i >= s { 4.0 * q * xi[i] } else { 0.0 }).collect()
            }
        };
        Ok(g)
    }

    pub fn hess(&self, xi: &[f64]) -> Result<DMatrix<f64>> {
        self.check(xi)?;
        let d = self.dim;
        let mut h = DMatrix::zeros(d, d);
        match &self.kind {
            SymbolKind::IsoQuadratic | SymbolKind::ShiftedQuadratic { .. } => {
                h.fill_diagonal(2.0);
            }
            SymbolKind::QuarticDegenerate => {
                if d == 1 {
                    h[(0, 0)] = 12.0 * xi[0] * xi[0];
                } else {
                    h[(0, 0)] = 2.0;
                    h[(1, 1)] = 12.0 * xi[1] * xi[1];
                }
            }
            SymbolKind::DoubleWell => h[(0, 0)] = 12.0 * xi[0] * xi[0] - 4.0,
            SymbolKind::ManifoldQuadratic { .. } => {
                for i in self.transverse_start()..d {
                    h[(i, i)] = 2.0;
                }
            }
            SymbolKind::ManifoldQuartic { .. } => {
                let s = self.transverse_start();
                let q: f64 = xi[s..].iter().map(|a| a * a).sum();
                for i in s..d {
                    for j in s..d {
                        h[(i, j)] = 8.0 * xi[i] * xi[j] + if i == j { 4.0 * q } else { 0.0 };
                    }
                }
            }
        }
        Ok(h)
    }

    pub fn classify_critical(&self, xi0: &[f64], tol: f64) -> Result<Classification> {
        if !(tol > 0.0) {
            return Err(Error::param(format!("tolerance must be positive, got {tol}")));
        }
        if norm(&self.grad(xi0)?) > tol {
            return Ok(Classification::NotCritical);
        }
        let eig = SymmetricEigen::new(self.hess(xi0)?);
        let mut kernel: Vec<Vec<f64>> = Vec::new();
        for (i, ev) in eig.eigenvalues.iter().enumerate() {
            if ev.abs() <= tol {
                let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
                if let Some(first) = v.iter().find(|a| a.abs() > 1e-12) {
                    if *first < 0.0 {
                        v.iter_mut().for_each(|a| *a = -*a);
                    }
                }
                kernel.push(v);
            }
        }
        if kernel.is_empty() {
            Ok(Classification::NonDegenerate)
        } else {
            kernel.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
            Ok(Classification::Degenerate(kernel))
        }
    }

    /// Critical points of a finite critical set (empty otherwise).
    pub fn critical_points(&self) -> &[CriticalPoint] {
        match &self.critical_set {
            CriticalSet::FinitePoints(p) => p,
            _ => &[],
        }
    }

    /// Is `xi` on the declared critical set (to `tol`)?
    pub fn is_on_critical_set(&self, xi: &[f64], tol: f64) -> bool {
        match &self.critical_set {
            CriticalSet::FinitePoints(p) => p.iter().any(|c| dist(&c.location, xi) <= tol),
            CriticalSet::AffineManifold { r, base, .. } => {
                xi.len() == self.dim && dist(&xi[*r..], base) <= tol
            }
            CriticalSet::None => false,
        }
    }

    /// Smallest `C` with `|∂^α λ(ξ)| ≤ C (1 + ‖ξ‖)^N`, `|α| ≤ 2`, sampled on
    /// a deterministic set of points of norm at most `radius`.
    pub fn growth_constant(&self, radius: f64) -> f64 {
        let d = self.dim;
        let mut c: f64 = 0.0;
        let dirs: Vec<Vec<f64>> = if d == 1 {
            vec![vec![1.0], vec![-1.0]]
        } else {
            (0..16)
                .map(|k| {
                    let a = k as f64 * std::f64::consts::PI / 8.0;
                    vec![a.cos(), a.sin()]
                })
                .collect()
        };
        for step in 0..=200 {
            let r = radius * step as f64 / 200.0;
            for dir in &dirs {
                let xi: Vec<f64> = dir.iter().map(|a| a * r).collect();
                let w = (1.0 + r).powf(self.order());
                let v = self.value(&xi).abs();
                let g = self.grad(&xi).map(|g| norm(&g)).unwrap_or(f64::INFINITY);
                let h = self.hess(&xi).map(|h| h.abs().max()).unwrap_or(f64::INFINITY);
                c = c.max(v.max(g).max(h) / w);
            }
        }
        c
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Bounded potentials compatible with periodic boxes.
#[derive(Clone, Debug, PartialEq)]
pub enum PotentialSpec {
    Zero,
    /// `height · exp(-‖x - center‖² / width²)`
    GaussianBump { center: Vec<f64>, width: f64, height: f64 },
    /// `Σ_a amplitudes[a] · cos(wavenumbers[a] · x_a)`
    Cosine { amplitudes: Vec<f64>, wavenumbers: Vec<f64> },
}

pub const POTENTIAL_TAGS: &[&str] = &["zero", "gaussian_bump", "cosine"];

impl PotentialSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            PotentialSpec::Zero => "zero",
            PotentialSpec::GaussianBump { .. } => "gaussian_bump",
            PotentialSpec::Cosine { .. } => "cosine",
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PotentialSpec::Zero => true,
            PotentialSpec::GaussianBump { height, .. } => *height == 0.0,
            PotentialSpec::Cosine { amplitudes, .. } => amplitudes.iter().all(|a| *a == 0.0),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::GaussianBump { center, width, height } => {
                height * (-dist(x, center).powi(2) / (width * width)).exp()
            }
            PotentialSpec::Cosine { amplitudes, wavenumbers } => amplitudes
                .iter()
                .zip(wavenumbers)
                .zip(x)
                .map(|((a, k), xa)| a * (k * xa).cos())
                .sum(),
        }
    }

    /// Upper bound for `sup |V|`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            PotentialSpec::Zero => 0.0,
            PotentialSpec::GaussianBump { height, .. } => height.abs(),
            PotentialSpec::Cosine { amplitudes, .. } => amplitudes.iter().map(|a| a.abs()).sum(),
        }
    }

    /// Admissibility on a periodic grid: dimensions agree, the Gaussian has
    /// negligible size on the box boundary, cosines are periodic, and the
    /// sampled first and second differences stay bounded.
    pub fn check_on_grid(&self, grid: &Grid) -> Result<Vec<f64>> {
        let d = grid.dim();
        match self {
            PotentialSpec::Zero => {}
            PotentialSpec::GaussianBump { center, width, .. } => {
                if center.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: center.len() });
                }
                if !(*width > 0.0) {
                    return Err(Error::param("gaussian_bump width must be positive"));
                }
                // closest boundary point to the centre bounds the wrap-around
                let gap = (0..d)
                    .map(|a| grid.half_len(a) - center[a].abs())
                    .fold(f64::INFINITY, f64::min);
                let edge = self.sup_bound() * (-(gap.max(0.0) / width).powi(2)).exp();
                if gap <= 0.0 || edge >= 1e-12 {
                    return Err(Error::param(format!(
                        "gaussian_bump is {edge:.3e} on the box boundary (must be < 1e-12)"
                    )));
                }
            }
            PotentialSpec::Cosine { amplitudes, wavenumbers } => {
                if amplitudes.len() != d || wavenumbers.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: amplitudes.len() });
                }
                for a in 0..d {
                    let m = wavenumbers[a] * grid.half_len(a) / std::f64::consts::PI;
                    if (m - m.round()).abs() > 1e-9 {
                        return Err(Error::param(format!(
                            "cosine wavenumber {} is not periodic on [-{L}, {L})",
                            wavenumbers[a],
                            L = grid.half_len(a)
                        )));
                    }
                }
            }
        }
        let vals: Vec<f64> = (0..grid.len()).map(|i| self.eval(&grid.point(i)[..d])).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential sample".into()));
        }
        Ok(vals)
    }
}
