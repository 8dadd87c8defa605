//! Time evolution for `i∂ₜu = A(D)u + V(x)u` with `A` tabulated on the
//! frequency lattice. The scaled equation uses `A(k) = λ(εk)/ε²`; the
//! profile equations use `A(k) = ½ Hk·k`.

use nalgebra::DMatrix;

use crate::cutoff::bump;
use crate::symbols::{CriticalSet, PotentialSpec, SymbolSpec};
use crate::{par, Error, Field, Grid, Result, C64};

/// Largest admissible `Δt · sup|V|` for a Strang step.
pub const MAX_POTENTIAL_PHASE: f64 = 0.1;
/// Boundary-strip width (fraction of each half-axis) for the wrap-around monitor.
pub const BOUNDARY_STRIP: f64 = 0.05;
/// Boundary mass above which a run is considered contaminated.
pub const BOUNDARY_THRESHOLD: f64 = 1e-6;
pub const FREE_DRIFT_BOUND: f64 = 1e-13;
pub const STRANG_DRIFT_BOUND: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowShape {
    /// Indicator of `[a, b]`.
    Indicator,
    /// Smooth bump supported on `[a, b]`, peak 1 at the midpoint.
    Bump,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeWindow {
    pub a: f64,
    pub b: f64,
    pub n_steps: usize,
    /// Steps between stored snapshots.
    pub stride: usize,
    pub shape: WindowShape,
}

impl TimeWindow {
    pub fn new(a: f64, b: f64, n_steps: usize, stride: usize) -> Result<Self> {
        let w = TimeWindow { a, b, n_steps, stride, shape: WindowShape::Indicator };
        w.validate()?;
        Ok(w)
    }

    pub fn with_shape(mut self, shape: WindowShape) -> Self {
        self.shape = shape;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a < self.b) || !self.a.is_finite() || !self.b.is_finite() {
            return Err(Error::param(format!("time window needs a < b, got [{}, {}]", self.a, self.b)));
        }
        if self.n_steps == 0 || self.stride == 0 || !self.n_steps.is_multiple_of(self.stride) {
            return Err(Error::param(format!(
                "n_steps = {} must be a positive multiple of stride = {}",
                self.n_steps, self.stride
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.b - self.a) / self.n_steps as f64
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        let m = self.n_steps / self.stride;
        (0..=m)
            .map(|i| if i == m { self.b } else { self.a + (i * self.stride) as f64 * self.dt() })
            .collect()
    }

    /// Window weight `Ξ(t)`.
    pub fn weight(&self, t: f64) -> f64 {
        if t < self.a || t > self.b {
            return 0.0;
        }
        match self.shape {
            WindowShape::Indicator => 1.0,
            WindowShape::Bump => {
                let mid = 0.5 * (self.a + self.b);
                bump((t - mid) / (0.5 * (self.b - self.a)))
            }
        }
    }

    /// Same window with half the snapshot stride (twice as many samples).
    pub fn refined(&self) -> TimeWindow {
        if self.stride.is_multiple_of(2) {
            TimeWindow { stride: self.stride / 2, ..*self }
        } else {
            TimeWindow { n_steps: 2 * self.n_steps, ..*self }
        }
    }
}

/// `∫ Ξ(t) v(t) dt` by the trapezoid rule over the sample times.
pub fn time_average(samples: &[(f64, f64)], w: &TimeWindow) -> f64 {
    samples
        .windows(2)
        .map(|p| 0.5 * (p[1].0 - p[0].0) * (w.weight(p[0].0) * p[0].1 + w.weight(p[1].0) * p[1].1))
        .sum()
}

/// Complex version of [`time_average`].
pub fn time_average_c(samples: &[(f64, C64)], w: &TimeWindow) -> C64 {
    samples
        .windows(2)
        .map(|p| (p[0].1 * w.weight(p[0].0) + p[1].1 * w.weight(p[1].0)) * (0.5 * (p[1].0 - p[0].0)))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    ExactFree,
    Strang,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::ExactFree => "exact_free",
            Method::Strang => "strang",
        }
    }

    pub fn drift_bound(&self) -> f64 {
        match self {
            Method::ExactFree => FREE_DRIFT_BOUND,
            Method::Strang => STRANG_DRIFT_BOUND,
        }
    }
}

/// Evolution generator: kinetic symbol on the lattice plus optional potential.
#[derive(Clone, Debug)]
pub struct Generator {
    grid: Grid,
    kinetic: Vec<f64>,
    potential: Option<Vec<f64>>,
}

impl Generator {
    /// `A(k) = λ(εk)/ε²`
    pub fn semiclassical(sym: &SymbolSpec, eps: f64, grid: &Grid) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::param(format!("ε must be positive, got {eps}")));
        }
        if sym.dim() != grid.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), got: sym.dim() });
        }
        let e2 = eps * eps;
        let kinetic = grid.freq_table(|k| {
            let mut s = [0.0; 2];
            for (a, v) in k.iter().enumerate() {
                s[a] = eps * v;
            }
            sym.value(&s[..k.len()]) / e2
        });
        Ok(Generator { grid: *grid, kinetic, potential: None })
    }

    /// `A(k) = ½ Hk·k`
    pub fn profile(h: &DMatrix<f64>, grid: &Grid) -> Result<Self> {
        let d = grid.dim();
        if h.nrows() != d || h.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: h.nrows() });
        }
        if (h - h.transpose()).abs().max() > 1e-12 * (1.0 + h.abs().max()) {
            return Err(Error::NotSymmetric);
        }
        let h = h.clone();
        let kinetic = grid.freq_table(|k| {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += h[(i, j)] * k[i] * k[j];
                }
            }
            0.5 * s
        });
        Ok(Generator { grid: *grid, kinetic, potential: None })
    }

    pub fn with_potential(mut self, v: &PotentialSpec) -> Result<Self> {
        let vals = v.check_on_grid(&self.grid)?;
        self.potential = if v.is_zero() { None } else { Some(vals) };
        Ok(self)
    }

    /// Potential given by samples on the grid.
    pub fn with_potential_values(mut self, vals: Vec<f64>) -> Result<Self> {
        if vals.len() != self.grid.len() {
            return Err(Error::DimensionMismatch { expected: self.grid.len(), got: vals.len() });
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential sample".into()));
        }
        self.potential = if vals.iter().all(|v| *v == 0.0) { None } else { Some(vals) };
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kinetic(&self) -> &[f64] {
        &self.kinetic
    }

    pub fn potential_sup(&self) -> f64 {
        self.potential.as_ref().map_or(0.0, |v| v.iter().fold(0.0, |m, x| m.max(x.abs())))
    }

    /// Exact kinetic flow `e^{-itA(D)} u`.
    pub fn free_flow(&self, u: &Field, t: f64) -> Result<Field> {
        self.grid.check_same(u.grid())?;
        let table: Vec<C64> = self.kinetic.iter().map(|a| C64::new(0.0, -t * a).exp()).collect();
        Ok(u.apply_table(&table))
    }

    /// Smallest number of steps on `[a, b]` that respects the potential-phase limit.
    pub fn min_steps(&self, span: f64) -> usize {
        (span.abs() * self.potential_sup() / MAX_POTENTIAL_PHASE).ceil() as usize
    }
}

/// Streamed evolution output: one observed value per snapshot.
#[derive(Clone, Debug)]
pub struct Observed<T> {
    pub values: Vec<(f64, T)>,
    pub method: Method,
    /// Relative norm change, per step (Strang) or per snapshot (exact).
    pub mass_drift: Vec<f64>,
    /// Largest boundary-strip mass over the snapshots.
    pub boundary_mass: f64,
}

impl<T> Observed<T> {
    pub fn max_drift(&self) -> f64 {
        self.mass_drift.iter().cloned().fold(0.0, f64::max)
    }

    /// Describe any tripped guard (drift above the method bound, boundary
    /// contamination).
    pub fn guard_violation(&self) -> Option<String> {
        let drift = self.max_drift();
        if drift > self.method.drift_bound() {
            return Some(format!("mass drift {drift:.3e} exceeds {:.0e} ({})", self.method.drift_bound(), self.method.tag()));
        }
        if self.boundary_mass > BOUNDARY_THRESHOLD {
            return Some(format!("boundary mass {:.3e} exceeds {BOUNDARY_THRESHOLD:.0e}", self.boundary_mass));
        }
        None
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub field: Field,
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub snapshots: Vec<Snapshot>,
    pub method: Method,
    pub mass_drift: Vec<f64>,
    pub boundary_mass: f64,
}

impl EvolutionResult {
    fn from_observed(o: Observed<Field>) -> Self {
        EvolutionResult {
            snapshots: o.values.into_iter().map(|(t, field)| Snapshot { t, field }).collect(),
            method: o.method,
            mass_drift: o.mass_drift,
            boundary_mass: o.boundary_mass,
        }
    }

    pub fn max_drift(&self) -> f64 {
        self.mass_drift.iter().cloned().fold(0.0, f64::max)
    }

    pub fn final_state(&self) -> &Field {
        &self.snapshots.last().expect("at least one snapshot").field
    }
}

/// Evolve `u0` over the window, calling `observe` on every snapshot.
///
/// Without a potential each snapshot is one exact multiplier applied to
/// the initial transform, so snapshots are independent and computed in
/// parallel. With a potential the Strang steps run sequentially.
pub fn evolve_observe<T, F>(u0: &Field, gen: &Generator, w: &TimeWindow, force_split: bool, observe: F) -> Result<Observed<T>>
where
    T: Send,
    F: Fn(f64, &Field) -> T + Sync + Send,
{
    w.validate()?;
    gen.grid.check_same(u0.grid())?;
    if gen.potential.is_none() && !force_split {
        exact(u0, gen, w, observe)
    } else {
        strang(u0, gen, w, observe)
    }
}

fn exact<T, F>(u0: &Field, gen: &Generator, w: &TimeWindow, observe: F) -> Result<Observed<T>>
where
    T: Send,
    F: Fn(f64, &Field) -> T + Sync + Send,
{
    let g = gen.grid;
    let mut f0 = u0.values().to_vec();
    g.fft(&mut f0, crate::fft::Direction::Forward);
    let n0 = u0.l2_norm();
    let times = w.snapshot_times();
    let scale = 1.0 / g.len() as f64;
    let out = par::map_range(times.len(), |i| {
        let t = times[i];
        let mut buf: Vec<C64> = f0
            .iter()
            .zip(&gen.kinetic)
            .map(|(c, a)| c * C64::new(0.0, -t * a).exp() * scale)
            .collect();
        g.fft(&mut buf, crate::fft::Direction::Inverse);
        let u = Field::from_vec_unchecked(g, buf);
        let drift = if n0 > 0.0 { (u.l2_norm() - n0).abs() / n0 } else { 0.0 };
        let bm = u.boundary_mass(BOUNDARY_STRIP);
        (observe(t, &u), drift, bm)
    });
    let mut values = Vec::with_capacity(out.len());
    let mut drift = Vec::with_capacity(out.len());
    let mut boundary: f64 = 0.0;
    for ((v, d, b), t) in out.into_iter().zip(times) {
        values.push((t, v));
        drift.push(d);
        boundary = boundary.max(b);
    }
    Ok(Observed { values, method: Method::ExactFree, mass_drift: drift, boundary_mass: boundary })
}

struct StepTables {
    half_potential: Option<Vec<C64>>,
    kinetic: Vec<C64>,
}

impl StepTables {
    fn new(gen: &Generator, dt: f64) -> Self {
        let scale = 1.0 / gen.grid.len() as f64;
        StepTables {
            half_potential: gen
                .potential
                .as_ref()
                .map(|v| v.iter().map(|x| C64::new(0.0, -0.5 * dt * x).exp()).collect()),
            kinetic: gen.kinetic.iter().map(|a| C64::new(0.0, -dt * a).exp() * scale).collect(),
        }
    }

    fn step(&self, g: &Grid, u: &mut [C64]) {
        if let Some(p) = &self.half_potential {
            u.iter_mut().zip(p).for_each(|(x, e)| *x *= e);
        }
        g.fft(u, crate::fft::Direction::Forward);
        u.iter_mut().zip(&self.kinetic).for_each(|(x, e)| *x *= e);
        g.fft(u, crate::fft::Direction::Inverse);
        if let Some(p) = &self.half_potential {
            u.iter_mut().zip(p).for_each(|(x, e)| *x *= e);
        }
    }
}

fn strang<T, F>(u0: &Field, gen: &Generator, w: &TimeWindow, observe: F) -> Result<Observed<T>>
where
    F: Fn(f64, &Field) -> T,
{
    let g = gen.grid;
    let need = gen.min_steps(w.b - w.a);
    if w.n_steps < need {
        return Err(Error::StepSize { min_steps: need });
    }
    let dt = w.dt();
    let mut u = u0.values().to_vec();
    let norm = |v: &[C64]| (g.cell_volume() * v.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt();
    let mut drift = Vec::with_capacity(w.n_steps);
    let mut last = norm(&u);
    let n0 = last;
    let rel = |a: f64, b: f64| if n0 > 0.0 { (a - b).abs() / n0 } else { 0.0 };

    if w.a != 0.0 {
        let pre = ((w.a.abs() / dt).ceil() as usize).max(1).max(gen.min_steps(w.a));
        let tables = StepTables::new(gen, w.a / pre as f64);
        for _ in 0..pre {
            tables.step(&g, &mut u);
            let n = norm(&u);
            drift.push(rel(n, last));
            last = n;
        }
    }

    let tables = StepTables::new(gen, dt);
    let times = w.snapshot_times();
    let mut values = Vec::with_capacity(times.len());
    let mut boundary: f64 = 0.0;
    let mut record = |t: f64, u: &[C64], values: &mut Vec<(f64, T)>| {
        let f = Field::from_vec_unchecked(g, u.to_vec());
        boundary = boundary.max(f.boundary_mass(BOUNDARY_STRIP));
        values.push((t, observe(t, &f)));
    };
    record(times[0], &u, &mut values);
    for s in 1..=w.n_steps {
        tables.step(&g, &mut u);
        let n = norm(&u);
        drift.push(rel(n, last));
        last = n;
        if s % w.stride == 0 {
            record(times[s / w.stride], &u, &mut values);
        }
    }
    Ok(Observed { values, method: Method::Strang, mass_drift: drift, boundary_mass: boundary })
}

fn collect(u0: &Field, gen: &Generator, w: &TimeWindow, force_split: bool) -> Result<EvolutionResult> {
    evolve_observe(u0, gen, w, force_split, |_, f| f.clone()).map(EvolutionResult::from_observed)
}

/// Exact free evolution `u(t) = e^{-itλ(εD)/ε²} u₀` at every snapshot time.
pub fn free_evolve(u0: &Field, sym: &SymbolSpec, eps: f64, w: &TimeWindow) -> Result<EvolutionResult> {
    collect(u0, &Generator::semiclassical(sym, eps, u0.grid())?, w, false)
}

/// Strang splitting with the potential half-steps around the exact kinetic flow.
pub fn strang_evolve(u0: &Field, sym: &SymbolSpec, v: &PotentialSpec, eps: f64, w: &TimeWindow) -> Result<EvolutionResult> {
    let gen = Generator::semiclassical(sym, eps, u0.grid())?.with_potential(v)?;
    collect(u0, &gen, w, true)
}

/// `i∂ₜθ = ½ HD·D θ + Vθ`
pub fn profile_evolve(theta0: &Field, h: &DMatrix<f64>, v: &PotentialSpec, w: &TimeWindow) -> Result<EvolutionResult> {
    let gen = Generator::profile(h, theta0.grid())?.with_potential(v)?;
    collect(theta0, &gen, w, false)
}

/// Transverse Hessian block `∇²_{ξ''}λ(ξ', ξ₀'')` of a manifold symbol.
pub fn transverse_hessian(sym: &SymbolSpec, along_freq: &[f64]) -> Result<DMatrix<f64>> {
    let CriticalSet::AffineManifold { r, p, base } = sym.critical_set() else {
        return Err(Error::param("symbol has no affine critical manifold"));
    };
    if along_freq.len() != *r {
        return Err(Error::DimensionMismatch { expected: *r, got: along_freq.len() });
    }
    let mut xi = along_freq.to_vec();
    xi.extend_from_slice(base);
    Ok(sym.hess(&xi)?.view((*r, *r), (*p, *p)).into_owned())
}

/// Rank-one reduction of the operator-valued Heisenberg flow: evolve the
/// unit vector `θ` on the transverse grid by
/// `i∂ₜθ = ½∇²_{ξ''}λ(ξ', ξ₀'') D_y·D_y θ + V(x', y) θ`.
/// The projector onto `θ(t)` then solves the Heisenberg equation.
pub fn heisenberg_rank1_evolve(
    theta0: &Field,
    sym: &SymbolSpec,
    along_pos: &[f64],
    along_freq: &[f64],
    v: &PotentialSpec,
    w: &TimeWindow,
) -> Result<EvolutionResult> {
    let h = transverse_hessian(sym, along_freq)?;
    let g = *theta0.grid();
    if g.dim() != h.nrows() {
        return Err(Error::DimensionMismatch { expected: h.nrows(), got: g.dim() });
    }
    if along_pos.len() != along_freq.len() {
        return Err(Error::DimensionMismatch { expected: along_freq.len(), got: along_pos.len() });
    }
    let n = theta0.l2_norm();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::param(format!("transverse profile must be normalised, has norm {n}")));
    }
    let d = g.dim();
    let vals: Vec<f64> = (0..g.len())
        .map(|i| {
            let mut x = along_pos.to_vec();
            x.extend_from_slice(&g.point(i)[..d]);
            v.eval(&x)
        })
        .collect();
    let gen = Generator::profile(&h, &g)?.with_potential_values(vals)?;
    if gen.potential.is_some() {
        let span = w.b - w.a;
        if w.n_steps < gen.min_steps(span) {
            return Err(Error::StepSize { min_steps: gen.min_steps(span) });
        }
    }
    collect(theta0, &gen, w, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::Profile;
    use crate::symbols::{builtin_symbol, SymbolParams};
    use std::f64::consts::PI;

    fn sym(tag: &str, dim: usize) -> SymbolSpec {
        builtin_symbol(tag, &SymbolParams { dim, ..Default::default() }).unwrap()
    }

    fn gaussian_field(g: Grid, width: f64, carrier: f64) -> Field {
        let p = Profile::gaussian_iso(g.dim(), width).unwrap();
        Field::from_fn(g, |x| C64::new(0.0, carrier * x[0]).exp() * p.eval(x)).unwrap()
    }

    #[test]
    fn window_basics() {
        let w = TimeWindow::new(0.0, 1.0, 10, 2).unwrap();
        assert_eq!(w.snapshot_times().len(), 6);
        assert_eq!(*w.snapshot_times().last().unwrap(), 1.0);
        assert!(TimeWindow::new(1.0, 0.0, 10, 1).is_err());
        assert!(TimeWindow::new(0.0, 1.0, 10, 3).is_err());
        let b = w.with_shape(WindowShape::Bump);
        assert_eq!(b.weight(0.5), 1.0);
        assert_eq!(b.weight(0.0), 0.0);
        let samples: Vec<(f64, f64)> = w.snapshot_times().into_iter().map(|t| (t, 2.0)).collect();
        assert!((time_average(&samples, &w) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn plane_wave_phase() {
        let g = Grid::new_1d(64, PI).unwrap();
        let eps = 0.25;
        let k = 3.0;
        let u0 = Field::from_fn(g, |x| C64::new(0.0, k * x[0]).exp()).unwrap();
        let w = TimeWindow::new(0.0, 0.7, 7, 7).unwrap();
        let r = free_evolve(&u0, &sym("iso_quadratic", 1), eps, &w).unwrap();
        // λ(εk)/ε² = k² for the isotropic quadratic
        let expect = u0.scale(C64::new(0.0, -0.7 * k * k).exp());
        assert!(r.final_state().max_abs_diff(&expect).unwrap() < 1e-12);
        assert_eq!(r.method, Method::ExactFree);
    }

    #[test]
    fn free_gaussian_spreading() {
        // closed form: |u(t,x)|² = (π s(t)²)^{-1/2} exp(-x²/s(t)²),
        // s(t)² = σ² + (2t/σ)² for i∂ₜu = -∂²u (λ = ξ², any ε)
        let g = Grid::new_1d(1024, 20.0).unwrap();
        let sigma = 0.8;
        let u0 = gaussian_field(g, sigma, 0.0);
        let t = 1.3;
        let w = TimeWindow::new(0.0, t, 1, 1).unwrap();
        let r = free_evolve(&u0, &sym("iso_quadratic", 1), 0.37, &w).unwrap();
        let s2 = sigma * sigma + (2.0 * t / sigma).powi(2);
        for j in (0..1024).step_by(17) {
            let x = g.coord(0, j);
            let exact = (PI * s2).powf(-0.5) * (-x * x / s2).exp();
            assert!((r.final_state().values()[j].norm_sqr() - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn unitarity_and_time_reversal() {
        let g = Grid::new_1d(512, 10.0).unwrap();
        let u0 = gaussian_field(g, 1.0, 5.0);
        for s in [sym("double_well_1d", 1), sym("quartic_degenerate", 1)] {
            let w = TimeWindow::new(0.0, 1.0, 20, 1).unwrap();
            let r = free_evolve(&u0, &s, 0.2, &w).unwrap();
            assert!(r.max_drift() < FREE_DRIFT_BOUND);
            let gen = Generator::semiclassical(&s, 0.2, &g).unwrap();
            let back = gen.free_flow(&gen.free_flow(&u0, 0.9).unwrap(), -0.9).unwrap();
            assert!(back.max_abs_diff(&u0).unwrap() < 1e-12);
        }
    }

    #[test]
    fn semiclassical_scaling_of_homogeneous_quadratics() {
        let g = Grid::new_2d([64, 64], [6.0, 6.0]).unwrap();
        let p = Profile::gaussian(vec![0.7, 1.1], vec![0.3, -0.2]).unwrap();
        let u0 = Field::from_fn(g, |x| C64::new(p.eval(x), 0.0)).unwrap();
        let w = TimeWindow::new(0.2, 0.9, 7, 1).unwrap();
        let s = sym("iso_quadratic", 2);
        let a = free_evolve(&u0, &s, 0.03, &w).unwrap();
        let b = free_evolve(&u0, &s, 1.0, &w).unwrap();
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            assert!(x.field.max_abs_diff(&y.field).unwrap() < 1e-12);
        }
    }

    #[test]
    fn strang_without_potential_matches_exact() {
        let g = Grid::new_1d(256, 8.0).unwrap();
        let u0 = gaussian_field(g, 1.0, 2.0);
        let s = sym("double_well_1d", 1);
        let w = TimeWindow::new(0.0, 1.0, 40, 8).unwrap();
        let a = free_evolve(&u0, &s, 0.5, &w).unwrap();
        let b = strang_evolve(&u0, &s, &PotentialSpec::Zero, 0.5, &w).unwrap();
        assert_eq!(b.method, Method::Strang);
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(x.t, y.t);
            assert!(x.field.max_abs_diff(&y.field).unwrap() < 1e-12);
        }
    }

    #[test]
    fn strang_commuting_case_is_exact() {
        // with λ ≡ 0 (zero-width quadratic profile) only the potential acts
        let g = Grid::new_1d(128, PI).unwrap();
        let u0 = gaussian_field(g, 0.5, 0.0);
        let v = PotentialSpec::Cosine { amplitudes: vec![0.8], wavenumbers: vec![2.0] };
        let w = TimeWindow::new(0.0, 1.0, 10, 10).unwrap();
        let r = profile_evolve(&u0, &DMatrix::zeros(1, 1), &v, &w).unwrap();
        let expect = u0.mul_fn(|x| C64::new(0.0, -v.eval(x)).exp());
        assert!(r.final_state().max_abs_diff(&expect).unwrap() < 1e-13);
    }

    #[test]
    fn strang_step_limit() {
        let g = Grid::new_1d(64, PI).unwrap();
        let u0 = gaussian_field(g, 0.5, 0.0);
        let v = PotentialSpec::Cosine { amplitudes: vec![2.0], wavenumbers: vec![1.0] };
        let w = TimeWindow::new(0.0, 1.0, 10, 1).unwrap();
        match strang_evolve(&u0, &sym("iso_quadratic", 1), &v, 0.1, &w) {
            Err(Error::StepSize { min_steps }) => assert_eq!(min_steps, 20),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn strang_second_order() {
        let g = Grid::new_1d(256, 4.0 * PI).unwrap();
        let u0 = gaussian_field(g, 1.0, 1.0);
        let s = sym("iso_quadratic", 1);
        let v = PotentialSpec::Cosine { amplitudes: vec![1.0], wavenumbers: vec![1.0] };
        let run = |n| strang_evolve(&u0, &s, &v, 0.5, &TimeWindow::new(0.0, 1.0, n, n).unwrap()).unwrap();
        let reference = run(160);
        let e1 = run(20).final_state().sub(reference.final_state()).unwrap().l2_norm();
        let e2 = run(40).final_state().sub(reference.final_state()).unwrap().l2_norm();
        let slope = (e1 / e2).log2();
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn profile_cases() {
        let g = Grid::new_1d(256, 10.0).unwrap();
        let th = gaussian_field(g, 1.0, 0.0);
        let w = TimeWindow::new(0.0, 1.0, 5, 1).unwrap();
        let still = profile_evolve(&th, &DMatrix::zeros(1, 1), &PotentialSpec::Zero, &w).unwrap();
        assert!(still.snapshots.iter().all(|s| s.field.max_abs_diff(&th).unwrap() < 1e-13));
        let two = DMatrix::from_element(1, 1, 2.0);
        let a = profile_evolve(&th, &two, &PotentialSpec::Zero, &w).unwrap();
        let b = free_evolve(&th, &sym("iso_quadratic", 1), 1.0, &w).unwrap();
        assert!(a.final_state().max_abs_diff(b.final_state()).unwrap() < 1e-13);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let g2 = Grid::new_2d([16, 16], [3.0, 3.0]).unwrap();
        assert!(matches!(Generator::profile(&bad, &g2), Err(Error::NotSymmetric)));
    }

    #[test]
    fn profile_spreads_along_nondegenerate_axis_only() {
        let g = Grid::new_2d([256, 128], [30.0, 12.0]).unwrap();
        let p = Profile::gaussian_iso(2, 1.0).unwrap();
        let th = Field::from_fn(g, |x| C64::new(p.eval(x), 0.0)).unwrap();
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let t = 1.5;
        let r = profile_evolve(&th, &h, &PotentialSpec::Zero, &TimeWindow::new(0.0, t, 1, 1).unwrap()).unwrap();
        let u = r.final_state();
        // second moments of the marginals: x₁ grows as (1 + 4t²)/2, x₂ stays 1/2
        let m1 = u.weighted_mass(|x| x[0] * x[0]);
        let m2 = u.weighted_mass(|x| x[1] * x[1]);
        assert!((m1 - 0.5 * (1.0 + 4.0 * t * t)).abs() < 1e-9, "{m1}");
        assert!((m2 - 0.5).abs() < 1e-9, "{m2}");
    }

    #[test]
    fn heisenberg_reduction() {
        let g = Grid::new_1d(256, 10.0).unwrap();
        let th = gaussian_field(g, 1.0, 0.0);
        let s = sym("manifold_quadratic", 2);
        let w = TimeWindow::new(0.0, 1.0, 4, 1).unwrap();
        let a = heisenberg_rank1_evolve(&th, &s, &[0.3], &[1.0], &PotentialSpec::Zero, &w).unwrap();
        let b = profile_evolve(&th, &DMatrix::from_element(1, 1, 2.0), &PotentialSpec::Zero, &w).unwrap();
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            assert!(x.field.max_abs_diff(&y.field).unwrap() < 1e-13);
            assert!((x.field.l2_norm() - 1.0).abs() < 1e-12);
        }
        assert!(heisenberg_rank1_evolve(&th, &sym("iso_quadratic", 1), &[], &[], &PotentialSpec::Zero, &w).is_err());
        assert!(heisenberg_rank1_evolve(&th.scale(C64::new(2.0, 0.0)), &s, &[0.0], &[0.0], &PotentialSpec::Zero, &w).is_err());
    }

    #[test]
    fn pre_evolution_reaches_window_start() {
        let g = Grid::new_1d(128, PI).unwrap();
        let u0 = gaussian_field(g, 0.6, 0.0);
        let s = sym("iso_quadratic", 1);
        let v = PotentialSpec::Cosine { amplitudes: vec![0.5], wavenumbers: vec![1.0] };
        let late = strang_evolve(&u0, &s, &v, 1.0, &TimeWindow::new(0.5, 1.0, 50, 50).unwrap()).unwrap();
        let full = strang_evolve(&u0, &s, &v, 1.0, &TimeWindow::new(0.0, 1.0, 100, 100).unwrap()).unwrap();
        assert!(late.final_state().max_abs_diff(full.final_state()).unwrap() < 1e-12);
        assert!(late.max_drift() < STRANG_DRIFT_BOUND);
    }
}
