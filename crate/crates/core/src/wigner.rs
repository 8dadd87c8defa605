//! Phase-space observables: discrete Wigner slices (d = 1), factored
//! symbols `a(x, ξ, η) = Σ c·φ(x)ψ(ξ)ρ(η)` with `η = (ξ'' - ξ₀'')/ε`, their
//! symmetrised quantisation, and the cutoff hierarchy in `(δ, R)`.

use std::f64::consts::PI;
use std::io::Write;

use crate::cutoff::{bump_at, chi, norm};
use crate::fft::{self, Direction};
use crate::grid::{write_header, write_values};
use crate::propagator::{time_average_c, EvolutionResult, TimeWindow};
use crate::{par, Error, Field, Grid, Result, C64};

/// Discrete Wigner transform on `N` positions × `2N` half-lattice momenta.
///
/// Row `j` holds `W(x_j, ξ_n)` for `ξ_n = ε·πn/(2L)`, `n` in FFT storage
/// order over `2N` slots. The separation variable is sampled at half grid
/// steps (odd steps use the half-cell interpolant), which makes its period
/// `4L` and hence the momentum lattice twice as fine as the field's.
#[derive(Clone, Debug)]
pub struct WignerSlice {
    eps: f64,
    grid: Grid,
    values: Vec<f64>,
    /// Largest `|Im W| / max|Re W|` seen before taking the real part.
    pub imag_residue: f64,
}

pub fn wigner_transform(f: &Field, eps: f64) -> Result<WignerSlice> {
    let g = *f.grid();
    if g.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: g.dim() });
    }
    if !(eps > 0.0) {
        return Err(Error::param(format!("ε must be positive, got {eps}")));
    }
    let n = g.points(0);
    let h = g.spacing(0);
    let half = f.fourier_interpolate(&[0.5 * h])?;
    let (fv, gv) = (f.values(), half.values());
    let m2 = 2 * n;
    let pref = h / (2.0 * PI * eps);
    let plan = fft::plan(m2, Direction::Inverse);
    let rows = par::map_range(n, |j| {
        let mut buf = vec![C64::new(0.0, 0.0); m2];
        for (m, slot) in buf.iter_mut().enumerate() {
            let q = m / 2;
            *slot = if m % 2 == 0 {
                fv[(j + n - q % n) % n] * fv[(j + q) % n].conj()
            } else {
                gv[(j + 2 * n - q % n - 1) % n] * gv[(j + q) % n].conj()
            };
        }
        plan.process(&mut buf);
        let re: Vec<f64> = buf.iter().map(|c| c.re * pref).collect();
        let im = buf.iter().map(|c| (c.im * pref).abs()).fold(0.0, f64::max);
        (re, im)
    });
    let mut values = Vec::with_capacity(n * m2);
    let mut im_max: f64 = 0.0;
    for (r, im) in rows {
        values.extend_from_slice(&r);
        im_max = im_max.max(im);
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let imag_residue = if scale > 0.0 { im_max / scale } else { 0.0 };
    Ok(WignerSlice { eps, grid: g, values, imag_residue })
}

impl WignerSlice {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_x(&self) -> usize {
        self.grid.points(0)
    }

    pub fn n_xi(&self) -> usize {
        2 * self.grid.points(0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, j: usize, n: usize) -> f64 {
        self.values[j * self.n_xi() + n]
    }

    /// Momentum step `επ/(2L)`.
    pub fn xi_step(&self) -> f64 {
        self.eps * PI / (2.0 * self.grid.half_len(0))
    }

    /// Momentum of storage slot `n`.
    pub fn xi(&self, n: usize) -> f64 {
        let m = self.n_xi();
        let s = if n < m / 2 { n as i64 } else { n as i64 - m as i64 };
        s as f64 * self.xi_step()
    }

    /// `∫ W(x_j, ξ) dξ` for every `j`; equals `|f(x_j)|²`.
    pub fn position_marginal(&self) -> Vec<f64> {
        let w = self.xi_step();
        self.values.chunks(self.n_xi()).map(|row| w * row.iter().sum::<f64>()).collect()
    }

    /// `Σ_j h W(x_j, ξ_n)` over all `2N` momentum slots.
    pub fn raw_momentum_sums(&self) -> Vec<f64> {
        let m = self.n_xi();
        let h = self.grid.spacing(0);
        let mut out = vec![0.0; m];
        for row in self.values.chunks(m) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += h * v);
        }
        out
    }

    /// Momentum marginal on the field's lattice, storage order: the cell
    /// average of the two half-lattice slots `2k`, `2k+1`. Equals
    /// `(2πε)^{-1}|f̂(k)|²` at lattice frequency `k`.
    pub fn momentum_marginal(&self) -> Vec<f64> {
        let raw = self.raw_momentum_sums();
        let m = self.n_xi() as i64;
        (0..self.n_x())
            .map(|j| {
                let k = self.grid.freq_index(0, j);
                let a = (2 * k).rem_euclid(m) as usize;
                let b = (2 * k + 1).rem_euclid(m) as usize;
                0.5 * (raw[a] + raw[b])
            })
            .collect()
    }

    /// Location `(x, ξ)` of the largest value.
    pub fn argmax(&self) -> (f64, f64) {
        let (i, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
        let m = self.n_xi();
        (self.grid.coord(0, i / m), self.xi(i % m))
    }

    /// `∫∫ a(x, ξ) W dx dξ` by the rectangle rule.
    pub fn pair<F>(&self, a: F) -> f64
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        let m = self.n_xi();
        let xis: Vec<f64> = (0..m).map(|n| self.xi(n)).collect();
        let w = self.grid.spacing(0) * self.xi_step();
        let rows = par::map_range(self.n_x(), |j| {
            let x = self.grid.coord(0, j);
            let row = &self.values[j * m..(j + 1) * m];
            row.iter().zip(&xis).map(|(v, xi)| a(x, *xi) * v).sum::<f64>()
        });
        w * rows.into_iter().sum::<f64>()
    }

    /// Binary dump: 2-D header `(N, 2N)`, `(L, ε·πN/(2L))`, real values
    /// stored as complex with zero imaginary part.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let l = self.grid.half_len(0);
        let xi_half = self.xi_step() * self.n_x() as f64;
        write_header(w, &[self.n_x(), self.n_xi()], &[l, xi_half])?;
        // reorder momenta from storage order to ascending ξ
        let m = self.n_xi();
        let mut out = Vec::with_capacity(self.values.len());
        for row in self.values.chunks(m) {
            out.extend((0..m).map(|i| C64::new(row[(i + m / 2) % m], 0.0)));
        }
        write_values(w, &out)
    }
}

/// Position factor `φ(x)`.
#[derive(Clone, Debug, PartialEq)]
pub enum XFactor {
    One,
    Bump { center: Vec<f64>, radius: f64 },
    Gaussian { center: Vec<f64>, width: f64 },
}

/// Momentum factor `ψ(ξ)` (semiclassical momentum `ξ = εk`).
#[derive(Clone, Debug, PartialEq)]
pub enum XiFactor {
    One,
    Bump { center: Vec<f64>, radius: f64 },
    /// `χ(‖ξ'' - ξ₀''‖/δ)`
    Cutoff { delta: f64 },
}

/// Two-microlocal factor `ρ(η)`, `η ∈ R^p`.
#[derive(Clone, Debug, PartialEq)]
pub enum EtaFactor {
    One,
    Bump { center: Vec<f64>, radius: f64 },
    /// `χ(‖η‖/R)`
    Inner { r: f64 },
    /// `1 - χ(‖η‖/R)`
    Outer { r: f64 },
    /// `(1 - χ(‖η‖/r₀)) (1 + ω·e)/2` with `ω = η/‖η‖`.
    Angular { direction: Vec<f64>, r0: f64 },
    /// Indicator of `η·e > 0`; smooth wherever `η` stays away from 0.
    HalfSpace { direction: Vec<f64> },
}

impl XFactor {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            XFactor::One => 1.0,
            XFactor::Bump { center, radius } => bump_at(x, center, *radius),
            XFactor::Gaussian { center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (-r2 / (width * width)).exp()
            }
        }
    }

    fn translated(&self, by: &[f64]) -> XFactor {
        let shift = |c: &[f64]| c.iter().zip(by).map(|(a, b)| a + b).collect();
        match self {
            XFactor::One => XFactor::One,
            XFactor::Bump { center, radius } => XFactor::Bump { center: shift(center), radius: *radius },
            XFactor::Gaussian { center, width } => XFactor::Gaussian { center: shift(center), width: *width },
        }
    }
}

impl XiFactor {
    fn eval(&self, xi: &[f64], split: &Split) -> f64 {
        match self {
            XiFactor::One => 1.0,
            XiFactor::Bump { center, radius } => bump_at(xi, center, *radius),
            XiFactor::Cutoff { delta } => {
                let off: f64 = xi[split.r..].iter().zip(&split.base).map(|(a, b)| (a - b) * (a - b)).sum();
                chi(off.sqrt() / delta)
            }
        }
    }

    /// Smallest momentum feature size.
    fn feature(&self) -> f64 {
        match self {
            XiFactor::One => f64::INFINITY,
            XiFactor::Bump { radius, .. } => *radius,
            XiFactor::Cutoff { delta } => *delta,
        }
    }
}

impl EtaFactor {
    pub fn eval(&self, eta: &[f64]) -> f64 {
        match self {
            EtaFactor::One => 1.0,
            EtaFactor::Bump { center, radius } => bump_at(eta, center, *radius),
            EtaFactor::Inner { r } => chi(norm(eta) / r),
            EtaFactor::Outer { r } => 1.0 - chi(norm(eta) / r),
            EtaFactor::Angular { direction, r0 } => {
                let n = norm(eta);
                if n == 0.0 {
                    return 0.0;
                }
                let c: f64 = eta.iter().zip(direction).map(|(a, b)| a * b).sum::<f64>() / n;
                (1.0 - chi(n / r0)) * 0.5 * (1.0 + c)
            }
            EtaFactor::HalfSpace { direction } => {
                if eta.iter().zip(direction).map(|(a, b)| a * b).sum::<f64>() > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Radius beyond which the factor is homogeneous of degree 0.
    fn threshold(&self) -> f64 {
        match self {
            EtaFactor::One | EtaFactor::HalfSpace { .. } => 0.0,
            EtaFactor::Bump { center, radius } => norm(center) + radius,
            EtaFactor::Inner { r } | EtaFactor::Outer { r } => 2.0 * r,
            EtaFactor::Angular { r0, .. } => 2.0 * r0,
        }
    }

    /// Value on the sphere at infinity in direction `omega`.
    fn at_infinity(&self, omega: &[f64]) -> f64 {
        match self {
            EtaFactor::One => 1.0,
            EtaFactor::Bump { .. } | EtaFactor::Inner { .. } => 0.0,
            EtaFactor::Outer { .. } => 1.0,
            EtaFactor::Angular { direction, .. } => {
                0.5 * (1.0 + omega.iter().zip(direction).map(|(a, b)| a * b).sum::<f64>() / norm(omega))
            }
            EtaFactor::HalfSpace { .. } => self.eval(omega),
        }
    }

    fn feature(&self) -> f64 {
        match self {
            EtaFactor::One | EtaFactor::HalfSpace { .. } => f64::INFINITY,
            EtaFactor::Bump { radius, .. } => *radius,
            EtaFactor::Inner { r } | EtaFactor::Outer { r } => *r,
            EtaFactor::Angular { r0, .. } => *r0,
        }
    }
}

/// Manifold split `ξ = (ξ', ξ'') ∈ R^r × R^p` with base point `ξ₀''`.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub r: usize,
    pub p: usize,
    pub base: Vec<f64>,
}

impl Split {
    /// Isolated critical point: `r = 0`, `p = d`.
    pub fn point(xi0: &[f64]) -> Self {
        Split { r: 0, p: xi0.len(), base: xi0.to_vec() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub x: XFactor,
    pub xi: Vec<XiFactor>,
    pub eta: Vec<EtaFactor>,
}

/// Finite sum of factored symbols sharing one manifold split.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoMicroSymbol {
    pub terms: Vec<Term>,
    pub split: Split,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutoffParams {
    pub r: f64,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutoffKind {
    /// `χ((ξ''-ξ₀'')/δ)(1 - χ(η/R))`
    Outer,
    /// `χ((ξ''-ξ₀'')/δ) χ(η/R)`
    Inner,
}

impl TwoMicroSymbol {
    pub fn new(split: Split) -> Self {
        TwoMicroSymbol { terms: Vec::new(), split }
    }

    pub fn with_term(mut self, coeff: f64, x: XFactor, xi: Vec<XiFactor>, eta: Vec<EtaFactor>) -> Self {
        self.terms.push(Term { coeff, x, xi, eta });
        self
    }

    /// `φ(x)` alone.
    pub fn position(split: Split, x: XFactor) -> Self {
        Self::new(split).with_term(1.0, x, vec![], vec![])
    }

    pub fn dim(&self) -> usize {
        self.split.r + self.split.p
    }

    pub fn is_eta_independent(&self) -> bool {
        self.terms.iter().all(|t| t.eta.iter().all(|e| *e == EtaFactor::One))
    }

    pub fn eval(&self, x: &[f64], xi: &[f64], eta: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coeff
                    * t.x.eval(x)
                    * t.xi.iter().map(|f| f.eval(xi, &self.split)).product::<f64>()
                    * t.eta.iter().map(|f| f.eval(eta)).product::<f64>()
            })
            .sum()
    }

    /// `a_∞(x, ξ, ω)`, the degree-0 boundary value on the η-sphere.
    pub fn at_infinity(&self, x: &[f64], xi: &[f64], omega: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coeff
                    * t.x.eval(x)
                    * t.xi.iter().map(|f| f.eval(xi, &self.split)).product::<f64>()
                    * t.eta.iter().map(|f| f.at_infinity(omega)).product::<f64>()
            })
            .sum()
    }

    /// `R₀` beyond which `a(x, ξ, η) = a_∞(x, ξ, η/‖η‖)`.
    pub fn eta_threshold(&self) -> f64 {
        self.terms
            .iter()
            .flat_map(|t| t.eta.iter().map(|e| e.threshold()))
            .fold(0.0, f64::max)
    }

    /// Bound on `sup |a|` (every factor is bounded by 1).
    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.abs()).sum()
    }

    pub fn plus(&self, other: &TwoMicroSymbol) -> Result<TwoMicroSymbol> {
        if self.split != other.split {
            return Err(Error::param("symbols have different manifold splits"));
        }
        let mut s = self.clone();
        s.terms.extend(other.terms.iter().cloned());
        Ok(s)
    }

    pub fn scaled(&self, c: f64) -> TwoMicroSymbol {
        let mut s = self.clone();
        s.terms.iter_mut().for_each(|t| t.coeff *= c);
        s
    }

    /// Compose with the d = 1 transport `x ↦ x + s·H·η/|η|`: each term
    /// splits into the two half-lines of `η`, with the position factor
    /// translated by `∓sH`.
    pub fn compose_flow_1d(&self, s: f64, hessian: f64) -> Result<TwoMicroSymbol> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: self.dim() });
        }
        let shift = s * hessian;
        let mut out = TwoMicroSymbol::new(self.split.clone());
        for t in &self.terms {
            for sign in [1.0, -1.0] {
                let mut eta = t.eta.clone();
                eta.push(EtaFactor::HalfSpace { direction: vec![sign] });
                out.terms.push(Term { coeff: t.coeff, x: t.x.translated(&[-sign * shift]), xi: t.xi.clone(), eta });
            }
        }
        Ok(out)
    }

    /// Momentum multiplier of one term on the lattice at scale `eps`.
    fn multiplier(&self, t: &Term, grid: &Grid, eps: f64) -> Vec<f64> {
        let split = &self.split;
        grid.freq_table(|k| {
            let mut xi = [0.0; 2];
            for (a, v) in k.iter().enumerate() {
                xi[a] = eps * v;
            }
            let xi = &xi[..k.len()];
            let mut eta = [0.0; 2];
            for (i, b) in split.base.iter().enumerate() {
                eta[i] = (xi[split.r + i] - b) / eps;
            }
            let eta = &eta[..split.p];
            t.xi.iter().map(|f| f.eval(xi, split)).product::<f64>()
                * t.eta.iter().map(|f| f.eval(eta)).product::<f64>()
        })
    }

    /// Refuse grids whose lattice cannot resolve the symbol's features.
    pub fn check_resolution(&self, grid: &Grid, eps: f64) -> Result<()> {
        if grid.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: grid.dim() });
        }
        let dk = (0..grid.dim()).map(|a| grid.freq_spacing(a)).fold(0.0, f64::max);
        for t in &self.terms {
            let xi_feat = t.xi.iter().map(|f| f.feature()).fold(f64::INFINITY, f64::min);
            let eta_feat = t.eta.iter().map(|f| f.feature()).fold(f64::INFINITY, f64::min);
            // four lattice cells across the narrowest feature's diameter
            let need = (2.0 * dk * eps / xi_feat).max(2.0 * dk / eta_feat);
            if need > 1.0 {
                let l = (0..grid.dim()).map(|a| grid.half_len(a)).fold(0.0, f64::max);
                let n = grid.shape().iter().copied().max().unwrap_or(8);
                return Err(Error::UnderResolved {
                    required_n: (n as f64 * need).ceil() as usize,
                    detail: format!("momentum lattice too coarse for the symbol; enlarge L = {l} by {need:.2}x at fixed spacing"),
                });
            }
        }
        Ok(())
    }

    /// Tables for repeated pairings on one grid at one `eps`.
    pub fn prepare(&self, grid: &Grid, eps: f64) -> Result<Prepared> {
        self.check_resolution(grid, eps)?;
        let d = grid.dim();
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let x = if t.x == XFactor::One {
                    None
                } else {
                    Some(par::map_range(grid.len(), |i| t.x.eval(&grid.point(i)[..d])))
                };
                let m = self.multiplier(t, grid, eps);
                let m = if m.iter().all(|v| *v == 1.0) { None } else { Some(m) };
                (t.coeff, x, m)
            })
            .collect();
        Ok(Prepared { grid: *grid, terms })
    }
}

/// Coefficient, x-factor values (None for 1) and multiplier table (None for 1).
type TabulatedTerm = (f64, Option<Vec<f64>>, Option<Vec<f64>>);

/// Symbol tabulated for one grid and one `eps`.
#[derive(Clone, Debug)]
pub struct Prepared {
    grid: Grid,
    terms: Vec<TabulatedTerm>,
}

impl Prepared {
    /// `Σ c·½[(M(φf), f) + (φ(Mf), f)]`
    pub fn expect(&self, f: &Field) -> Result<C64> {
        self.grid.check_same(f.grid())?;
        let v = f.values();
        let h = self.grid.cell_volume();
        let mut total = C64::new(0.0, 0.0);
        for (c, x, m) in &self.terms {
            let val = match (x, m) {
                (None, None) => C64::new(f.norm_sqr(), 0.0),
                (Some(x), None) => C64::new(h * par::sum_range(v.len(), |i| x[i] * v[i].norm_sqr()), 0.0),
                (None, Some(m)) => f.apply_real_table(m).inner(f)?,
                (Some(x), Some(m)) => {
                    let phi_f = Field::from_vec_unchecked(self.grid, v.iter().zip(x).map(|(a, b)| a * b).collect());
                    let first = phi_f.apply_real_table(m).inner(f)?;
                    let mf = f.apply_real_table(m);
                    let mv = mf.values();
                    let second = h * par::sum_range_c(v.len(), |i| mv[i] * x[i] * v[i].conj());
                    (first + second) * 0.5
                }
            };
            total += val * *c;
        }
        Ok(total)
    }
}

/// `(op_ε♯(a) f, f)` through the symmetrised factored rule.
pub fn two_micro_expect(f: &Field, a: &TwoMicroSymbol, eps: f64) -> Result<C64> {
    a.prepare(f.grid(), eps)?.expect(f)
}

/// `(op_ε(a) f, f)` for a symbol without η-dependence.
pub fn expect_op(f: &Field, a: &TwoMicroSymbol, eps: f64) -> Result<C64> {
    if !a.is_eta_independent() {
        return Err(Error::param("expect_op needs a symbol independent of η"));
    }
    two_micro_expect(f, a, eps)
}

/// Exact Weyl pairing `∫∫ a W` through the Wigner slice (d = 1, η-free).
pub fn expect_op_wigner(f: &Field, a: &TwoMicroSymbol, eps: f64) -> Result<f64> {
    if !a.is_eta_independent() {
        return Err(Error::param("the Wigner route needs a symbol independent of η"));
    }
    let w = wigner_transform(f, eps)?;
    Ok(w.pair(|x, xi| a.eval(&[x], &[xi], &[])))
}

/// `∫ Ξ(t) (op_ε♯(a) u(t), u(t)) dt` by the trapezoid rule over snapshots.
pub fn time_averaged_functional(snaps: &EvolutionResult, a: &TwoMicroSymbol, w: &TimeWindow, eps: f64) -> Result<C64> {
    let first = snaps.snapshots.first().ok_or_else(|| Error::param("no snapshots"))?;
    let last = snaps.snapshots.last().expect("nonempty");
    let tol = 1e-12 * (1.0 + w.b.abs());
    if first.t > w.a + tol || last.t < w.b - tol {
        return Err(Error::param(format!(
            "window [{}, {}] exceeds snapshot range [{}, {}]",
            w.a, w.b, first.t, last.t
        )));
    }
    let prep = a.prepare(first.field.grid(), eps)?;
    let samples = par::map_slice(&snaps.snapshots, |s| prep.expect(&s.field).map(|v| (s.t, v)));
    let samples: Vec<(f64, C64)> = samples.into_iter().collect::<Result<_>>()?;
    Ok(time_average_c(&samples, w))
}

/// Multiply every term by the outer or inner `(δ, R)` cutoff.
pub fn apply_cutoffs(a: &TwoMicroSymbol, c: CutoffParams, which: CutoffKind) -> TwoMicroSymbol {
    let mut out = a.clone();
    for t in &mut out.terms {
        t.xi.push(XiFactor::Cutoff { delta: c.delta });
        t.eta.push(match which {
            CutoffKind::Outer => EtaFactor::Outer { r: c.r },
            CutoffKind::Inner => EtaFactor::Inner { r: c.r },
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::{DataFamily, Profile};
    use proptest::prelude::*;

    fn coherent(g: Grid, eps: f64, x0: f64, xi0: f64, sigma: f64) -> Field {
        let fam = DataFamily::CoherentState {
            profile: Profile::gaussian_iso(1, sigma).unwrap(),
            center: vec![x0],
            carrier: vec![xi0],
        };
        fam.sample(eps, &g).unwrap()
    }

    #[test]
    fn marginals_are_exact() {
        let g = Grid::new_1d(256, 6.0).unwrap();
        let eps = 0.1;
        let f = coherent(g, eps, 0.4, 0.7, 0.8);
        let w = wigner_transform(&f, eps).unwrap();
        assert!(w.imag_residue < 1e-12);
        let pos = w.position_marginal();
        let dens: Vec<f64> = f.values().iter().map(|v| v.norm_sqr()).collect();
        let top = dens.iter().cloned().fold(0.0, f64::max);
        for (a, b) in pos.iter().zip(&dens) {
            assert!((a - b).abs() <= 1e-12 * top);
        }
        let ff = f.to_frequency();
        let mom = w.momentum_marginal();
        let target: Vec<f64> = ff.coeffs().iter().map(|c| c.norm_sqr() / (2.0 * PI * eps)).collect();
        let top = target.iter().cloned().fold(0.0, f64::max);
        for (a, b) in mom.iter().zip(&target) {
            assert!((a - b).abs() <= 1e-12 * top);
        }
        // odd half-lattice slots integrate to zero in x
        let raw = w.raw_momentum_sums();
        assert!(raw.iter().skip(1).step_by(2).all(|v| v.abs() <= 1e-12 * top));
    }

    #[test]
    fn coherent_state_peak() {
        // closed form: W = (πε)^{-1} exp(-(x-x₀)²/(σ²ε) - σ²(ξ-ξ₀)²/ε)
        let g = Grid::new_1d(512, 4.0).unwrap();
        let (eps, x0, xi0, s) = (0.05, 0.5, 1.0, 1.0);
        let f = coherent(g, eps, x0, xi0, s);
        let w = wigner_transform(&f, eps).unwrap();
        let (x, xi) = w.argmax();
        assert!((x - x0).abs() <= g.spacing(0));
        assert!((xi - xi0).abs() <= w.xi_step());
        let j = ((x0 + 4.0) / g.spacing(0)).round() as usize;
        let n = (xi0 / w.xi_step()).round() as usize;
        let exact = |x: f64, xi: f64| {
            (PI * eps).recip() * (-(x - x0).powi(2) / (s * s * eps) - s * s * (xi - xi0).powi(2) / eps).exp()
        };
        assert!((w.get(j, n) - exact(g.coord(0, j), w.xi(n))).abs() < 1e-10);
        assert!((w.get(j + 3, n + 5) - exact(g.coord(0, j + 3), w.xi(n + 5))).abs() < 1e-10);
    }

    #[test]
    fn rejects_two_dimensions() {
        let g = Grid::new_2d([8, 8], [1.0, 1.0]).unwrap();
        assert!(wigner_transform(&Field::zeros(g), 0.1).is_err());
    }

    #[test]
    fn dump_header() {
        let g = Grid::new_1d(16, 4.0).unwrap();
        let f = Field::from_fn(g, |x| C64::new((-x[0] * x[0]).exp(), 0.0)).unwrap();
        let w = wigner_transform(&f, 1.0).unwrap();
        let mut bytes = Vec::new();
        w.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 8 + 16 + 16 + 16 * 16 * 32);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 32);
    }

    fn test_field(g: Grid, eps: f64) -> Field {
        DataFamily::PlaneWaveModulated { profile: Profile::gaussian_iso(1, 1.0).unwrap(), carrier: vec![1.0] }
            .sample(eps, &g)
            .unwrap()
    }

    #[test]
    fn position_and_momentum_symbols() {
        let g = Grid::new_1d(1024, 10.0).unwrap();
        let eps = 0.1;
        let f = test_field(g, eps);
        let phi = XFactor::Bump { center: vec![0.3], radius: 1.0 };
        let a = TwoMicroSymbol::position(Split::point(&[1.0]), phi.clone());
        let direct = f.weighted_mass(|x| phi.eval(x));
        let v = expect_op(&f, &a, eps).unwrap();
        assert!((v.re - direct).abs() < 1e-14 && v.im == 0.0);
        let psi = XiFactor::Bump { center: vec![1.0], radius: 0.3 };
        let b = TwoMicroSymbol::new(Split::point(&[1.0])).with_term(1.0, XFactor::One, vec![psi.clone()], vec![]);
        let ff = f.to_frequency();
        let split = Split::point(&[1.0]);
        let direct: f64 = ff
            .coeffs()
            .iter()
            .enumerate()
            .map(|(j, c)| psi.eval(&[eps * g.freq(0, j)], &split) * c.norm_sqr())
            .sum::<f64>()
            * g.freq_spacing(0)
            / (2.0 * PI);
        let v = expect_op(&f, &b, eps).unwrap();
        assert!((v.re - direct).abs() < 1e-12, "{v} vs {direct}");
        let eta = a.clone().with_term(1.0, XFactor::One, vec![], vec![EtaFactor::Inner { r: 1.0 }]);
        assert!(expect_op(&f, &eta, eps).is_err());
    }

    #[test]
    fn symmetrised_vs_weyl_is_second_order() {
        let split = Split::point(&[1.0]);
        let a = TwoMicroSymbol::new(split).with_term(
            1.0,
            XFactor::Gaussian { center: vec![0.2], width: 1.0 },
            vec![XiFactor::Bump { center: vec![1.1], radius: 0.6 }],
            vec![],
        );
        let mut errs = Vec::new();
        for eps in [0.1, 0.05, 0.025] {
            let g = Grid::new_1d(2048, 10.0).unwrap();
            let f = test_field(g, eps);
            let s = expect_op(&f, &a, eps).unwrap().re;
            let w = expect_op_wigner(&f, &a, eps).unwrap();
            errs.push((s - w).abs());
        }
        let slope = (errs[0] / errs[2]).log2() / 2.0;
        assert!(slope > 1.8, "errors {errs:?}, slope {slope}");
    }

    #[test]
    fn two_micro_limits_for_plane_wave() {
        let eps = 0.01;
        let g = Grid::new_1d(4096, 10.0).unwrap();
        let f = test_field(g, eps);
        let phi = XFactor::Bump { center: vec![0.0], radius: 1.0 };
        let a = TwoMicroSymbol::new(Split::point(&[1.0])).with_term(1.0, phi.clone(), vec![], vec![EtaFactor::Inner { r: 4.0 }]);
        let v = two_micro_expect(&f, &a, eps).unwrap().re;
        let target = f.weighted_mass(|x| phi.eval(x));
        // profile spectrum sits at |η| = O(1), inside the inner cutoff
        assert!((v - target).abs() < 1e-6 * target, "{v} vs {target}");
        let b = TwoMicroSymbol::new(Split::point(&[1.0])).with_term(1.0, phi, vec![], vec![EtaFactor::Outer { r: 4.0 }]);
        assert!(two_micro_expect(&f, &b, eps).unwrap().re.abs() < 1e-6);
    }

    #[test]
    fn cutoff_partition() {
        let a = TwoMicroSymbol::new(Split::point(&[1.0])).with_term(
            2.0,
            XFactor::Bump { center: vec![0.0], radius: 1.0 },
            vec![],
            vec![EtaFactor::Angular { direction: vec![1.0], r0: 1.0 }],
        );
        let c = CutoffParams { r: 3.0, delta: 0.5 };
        let o = apply_cutoffs(&a, c, CutoffKind::Outer);
        let i = apply_cutoffs(&a, c, CutoffKind::Inner);
        for &(x, xi, eta) in &[(0.1, 1.2, 5.0), (0.5, 0.9, -2.0), (0.0, 1.0, 0.5), (-0.3, 1.7, 9.0)] {
            let sum = o.eval(&[x], &[xi], &[eta]) + i.eval(&[x], &[xi], &[eta]);
            let target = chi((xi - 1.0f64).abs() / 0.5) * a.eval(&[x], &[xi], &[eta]);
            assert!((sum - target).abs() < 1e-15);
        }
        assert_eq!(o.eval(&[0.0], &[1.0], &[2.9]), 0.0);
        // huge R: the inner cutoff is the plain δ cutoff on the grid
        let big = apply_cutoffs(&a, CutoffParams { r: 1e9, delta: 0.5 }, CutoffKind::Inner);
        assert_eq!(big.eval(&[0.0], &[1.1], &[50.0]), chi(0.2) * a.eval(&[0.0], &[1.1], &[50.0]));
        assert_eq!(a.eta_threshold(), 2.0);
        assert_eq!(a.at_infinity(&[0.0], &[1.0], &[1.0]), 2.0);
    }

    #[test]
    fn time_average_of_stationary_state() {
        let g = Grid::new_1d(256, 10.0).unwrap();
        let f = test_field(g, 0.2);
        let w = TimeWindow::new(0.0, 2.0, 4, 1).unwrap();
        let snaps = EvolutionResult {
            snapshots: w.snapshot_times().into_iter().map(|t| crate::propagator::Snapshot { t, field: f.clone() }).collect(),
            method: crate::propagator::Method::ExactFree,
            mass_drift: vec![0.0; 5],
            boundary_mass: 0.0,
        };
        let a = TwoMicroSymbol::position(Split::point(&[1.0]), XFactor::Bump { center: vec![0.0], radius: 1.0 });
        let one = two_micro_expect(&f, &a, 0.2).unwrap();
        let avg = time_averaged_functional(&snaps, &a, &w, 0.2).unwrap();
        assert!((avg - one * 2.0).norm() < 1e-13);
        let late = TimeWindow::new(0.0, 3.0, 4, 1).unwrap();
        assert!(time_averaged_functional(&snaps, &a, &late, 0.2).is_err());
        // linearity over symbol sums
        let b = TwoMicroSymbol::new(Split::point(&[1.0])).with_term(0.5, XFactor::One, vec![], vec![EtaFactor::Inner { r: 2.0 }]);
        let sum = time_averaged_functional(&snaps, &a.plus(&b).unwrap(), &w, 0.2).unwrap();
        let parts = avg + time_averaged_functional(&snaps, &b, &w, 0.2).unwrap();
        assert!((sum - parts).norm() < 1e-13);
    }

    #[test]
    fn under_resolved_symbol_refused() {
        let g = Grid::new_1d(64, 1.0).unwrap();
        let a = TwoMicroSymbol::new(Split::point(&[0.0])).with_term(1.0, XFactor::One, vec![], vec![EtaFactor::Bump { center: vec![0.0], radius: 0.5 }]);
        assert!(matches!(a.prepare(&g, 0.1), Err(Error::UnderResolved { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn pairing_is_real_and_bounded(c in 0.1f64..2.0, cx in -1.0f64..1.0, rad in 0.5f64..2.0,
                                       r in 1.0f64..5.0, eps_pow in 2u32..6) {
            let eps = 0.2 / 2f64.powi(eps_pow as i32);
            let g = Grid::new_1d(8192, 10.0).unwrap();
            let f = test_field(g, eps);
            let a = TwoMicroSymbol::new(Split::point(&[1.0])).with_term(
                c,
                XFactor::Bump { center: vec![cx], radius: rad },
                vec![XiFactor::Cutoff { delta: 0.5 }],
                vec![EtaFactor::Angular { direction: vec![1.0], r0: r }, EtaFactor::Outer { r }],
            ).with_term(c, XFactor::Gaussian { center: vec![-cx], width: rad }, vec![], vec![EtaFactor::Inner { r }]);
            let v = two_micro_expect(&f, &a, eps).unwrap();
            prop_assert!(v.im.abs() <= 1e-10 * (1.0 + v.re.abs()));
            prop_assert!(v.norm() <= 1.05 * a.sup_bound() * f.norm_sqr());
        }
    }
}
