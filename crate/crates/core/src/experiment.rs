//! Declarative ε-sweeps: a flat `section.key = value` config names a
//! symbol, potential, data family, grid policy, time window, observable
//! and oracle; [`run_convergence`] turns it into a [`ResultTable`].

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::initial_data::{frequency_window_criterion, DataFamily, Profile, FAMILY_TAGS};
use crate::predictions::{self, PredictedLimit};
use crate::propagator::{evolve_observe, time_average, Generator, TimeWindow, WindowShape, MAX_POTENTIAL_PHASE};
use crate::smoothing::{integrate_to, Ball};
use crate::symbols::{builtin_symbol, CriticalSet, PotentialSpec, SymbolParams, SymbolSpec, POTENTIAL_TAGS, SYMBOL_TAGS};
use crate::wigner::{apply_cutoffs, CutoffKind, CutoffParams, EtaFactor, Split, TwoMicroSymbol, XFactor, XiFactor};
use crate::{cutoff, par, Error, Field, Grid, Result};

pub const OBSERVABLE_KINDS: &[&str] = &["density", "twomicro", "smoothing", "criterion"];
pub const ORACLE_KINDS: &[&str] = &["none", "isolated", "degenerate", "manifold", "consistency"];
pub const DEFAULT_MAX_POINTS: usize = 1 << 16;

/// Raw key/value view of a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            c.set(line).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        }
        Ok(c)
    }

    /// Apply one `section.key = value` assignment.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let Some((k, v)) = assignment.split_once('=') else {
            return Err(Error::Parse(format!("expected `section.key = value`, got `{assignment}`")));
        };
        let (k, v) = (k.trim(), v.trim());
        match k.split_once('.') {
            Some((s, rest)) if !s.is_empty() && !rest.is_empty() && !rest.contains('.') => {}
            _ => return Err(Error::Parse(format!("key `{k}` must have the form section.key"))),
        }
        if v.is_empty() {
            return Err(Error::Parse(format!("key `{k}` has an empty value")));
        }
        self.entries.insert(k.to_string(), v.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Sorted `key = value` lines; equal configs give equal text.
    pub fn canonical(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Typed reads that remember which keys were used and collect problems.
struct Reader<'a> {
    cfg: &'a Config,
    used: RefCell<BTreeSet<String>>,
    errs: RefCell<Vec<String>>,
}

impl<'a> Reader<'a> {
    fn new(cfg: &'a Config) -> Self {
        Reader { cfg, used: RefCell::default(), errs: RefCell::default() }
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.used.borrow_mut().insert(key.to_string());
        self.cfg.get(key)
    }

    fn fail(&self, msg: String) {
        self.errs.borrow_mut().push(msg);
    }

    fn str_or(&self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    fn f64_or(&self, key: &str, default: f64) -> f64 {
        match self.raw(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|_| {
                self.fail(format!("{key}: `{v}` is not a number"));
                default
            }),
        }
    }

    fn req_f64(&self, key: &str) -> f64 {
        if self.cfg.get(key).is_none() {
            self.fail(format!("{key} is required"));
        }
        self.f64_or(key, f64::NAN)
    }

    fn usize_or(&self, key: &str, default: usize) -> usize {
        match self.raw(key) {
            None => default,
            Some(v) => v.parse().unwrap_or_else(|_| {
                self.fail(format!("{key}: `{v}` is not a nonnegative integer"));
                default
            }),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> bool {
        match self.raw(key) {
            None => default,
            Some("true") => true,
            Some("false") => false,
            Some(v) => {
                self.fail(format!("{key}: `{v}` is not true/false"));
                default
            }
        }
    }

    fn list(&self, key: &str) -> Option<Vec<f64>> {
        let v = self.raw(key)?;
        let out: std::result::Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match out {
            Ok(l) => Some(l),
            Err(_) => {
                self.fail(format!("{key}: `{v}` is not a comma list of numbers"));
                None
            }
        }
    }

    /// A list of length `n`; a single value is repeated.
    fn vec_or(&self, key: &str, n: usize, default: f64) -> Vec<f64> {
        match self.list(key) {
            None => vec![default; n],
            Some(l) if l.len() == 1 => vec![l[0]; n],
            Some(l) if l.len() == n => l,
            Some(l) => {
                self.fail(format!("{key} has {} entries, expected {n}", l.len()));
                vec![default; n]
            }
        }
    }

    fn req_vec(&self, key: &str, n: usize) -> Vec<f64> {
        if self.cfg.get(key).is_none() {
            self.fail(format!("{key} is required"));
        }
        self.vec_or(key, n, f64::NAN)
    }

    fn finish(self) -> Vec<String> {
        let used = self.used.into_inner();
        let mut errs = self.errs.into_inner();
        for k in self.cfg.entries.keys() {
            if !used.contains(k) {
                errs.push(format!("unknown key `{k}`"));
            }
        }
        errs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GridPolicy {
    Fixed(Vec<usize>),
    /// Smallest resolving power of two per ε, capped.
    Auto { max_points: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub half_len: Vec<f64>,
    pub policy: GridPolicy,
}

impl GridSpec {
    pub fn grid_for(&self, fam: &DataFamily, eps: f64) -> Result<Grid> {
        let need = fam.required_points(eps, &self.half_len);
        let n = match &self.policy {
            GridPolicy::Fixed(n) => n.clone(),
            GridPolicy::Auto { max_points } => {
                if let Some(m) = need.iter().find(|m| **m > *max_points) {
                    return Err(Error::UnderResolved {
                        required_n: *m,
                        detail: format!("ε = {eps} needs N = {need:?}, above grid.max_points = {max_points}"),
                    });
                }
                need
            }
        };
        Grid::new(&n, &self.half_len)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    /// `∫Ξ ∫ φ|u|²`
    Density { phi: XFactor },
    /// `∫Ξ (op_ε♯(a) u, u)` with the raw symbol and its optional cutoffs
    /// and flow composition.
    TwoMicro { base: TwoMicroSymbol, cutoff: Option<(CutoffKind, CutoffParams)>, flow_s: Option<f64> },
    /// `∫₀^δ ‖|D|^s u‖²_{L²(B)}`
    Smoothing { s: f64, delta: f64, ball: Ball },
    /// Frequency-window criterion of the initial data (no evolution).
    Criterion { xi0: Vec<f64>, r: f64, delta: f64 },
}

impl Observable {
    pub fn tag(&self) -> &'static str {
        match self {
            Observable::Density { .. } => "density",
            Observable::TwoMicro { .. } => "twomicro",
            Observable::Smoothing { .. } => "smoothing",
            Observable::Criterion { .. } => "criterion",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleKind {
    None,
    Isolated,
    Degenerate,
    Manifold,
    /// Profile-side pairing with the inner-cutoff radius of the observable.
    Consistency,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub csv: Option<PathBuf>,
    /// Write wall-clock seconds; `false` writes 0 so reruns are byte-identical.
    pub timing: bool,
    pub dump_state: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub symbol: SymbolSpec,
    pub potential: PotentialSpec,
    pub family: DataFamily,
    pub eps: Vec<f64>,
    pub grid: GridSpec,
    pub window: TimeWindow,
    pub force_split: bool,
    pub observable: Observable,
    pub oracle: OracleKind,
    pub output: OutputSpec,
    /// Hypotheses reported but not enforced.
    pub notes: Vec<String>,
    pub config_hash: String,
}

fn read_profile(r: &Reader, prefix: &str, dim: usize) -> Option<Profile> {
    let kind = r.str_or(&format!("family.{prefix}profile"), "gaussian");
    let center = r.vec_or(&format!("family.{prefix}profile_center"), dim, 0.0);
    let res = match kind {
        "gaussian" => Profile::gaussian(r.vec_or(&format!("family.{prefix}width"), dim, 1.0), center),
        "bump" => Profile::bump(dim, r.f64_or(&format!("family.{prefix}radius"), 1.0), center),
        other => {
            r.fail(format!("family.{prefix}profile: unknown profile `{other}` (gaussian, bump)"));
            return None;
        }
    };
    res.map_err(|e| r.fail(format!("family.{prefix}profile: {e}"))).ok()
}

fn read_family(r: &Reader, d: usize, p: usize) -> Option<DataFamily> {
    let tag = r.str_or("family.tag", "plane_wave");
    let unit = |n: usize| {
        let mut e = vec![0.0; n];
        e[0] = 1.0;
        e
    };
    let fam = match tag {
        "plane_wave" => DataFamily::PlaneWaveModulated { profile: read_profile(r, "", d)?, carrier: r.req_vec("family.carrier", d) },
        "two_wave" => {
            let first = read_profile(r, "", d)?;
            let second = if ["profile", "width", "radius", "profile_center"].iter().any(|k| r.cfg.get(&format!("family.second_{k}")).is_some()) {
                read_profile(r, "second_", d)?
            } else {
                first.clone()
            };
            DataFamily::TwoWave {
                first,
                first_carrier: r.req_vec("family.carrier", d),
                second,
                second_carrier: r.req_vec("family.second_carrier", d),
            }
        }
        "coherent_state" => DataFamily::CoherentState {
            profile: read_profile(r, "", d)?,
            center: r.vec_or("family.center", d, 0.0),
            carrier: r.req_vec("family.carrier", d),
        },
        "shifted_degenerate" => DataFamily::ShiftedDegenerate {
            profile: read_profile(r, "", d)?,
            carrier: r.req_vec("family.carrier", d),
            direction: r.list("family.direction").unwrap_or_else(|| unit(d)),
            alpha: r.f64_or("family.alpha", 0.0),
            beta: r.req_f64("family.beta"),
        },
        "manifold_concentrating" | "manifold_shifted" => {
            if p >= d {
                r.fail(format!("{tag} needs a manifold symbol with codimension p < d = {d}"));
                return None;
            }
            let rr = d - p;
            let transverse = read_profile(r, "", p)?;
            let along = read_profile(r, "along_", rr)?;
            if tag == "manifold_concentrating" {
                DataFamily::ManifoldConcentrating {
                    transverse,
                    along,
                    center: r.vec_or("family.center", rr, 0.0),
                    carrier: r.req_vec("family.carrier", rr),
                    alpha: r.req_f64("family.alpha"),
                }
            } else {
                DataFamily::ManifoldShifted {
                    transverse,
                    along,
                    carrier: r.req_vec("family.carrier", rr),
                    direction: r.list("family.direction").unwrap_or_else(|| unit(p)),
                    alpha: r.f64_or("family.alpha", 0.0),
                    beta: r.req_f64("family.beta"),
                }
            }
        }
        other => {
            r.fail(format!("family.tag: unknown family `{other}` (one of {})", FAMILY_TAGS.join(", ")));
            return None;
        }
    };
    Some(fam)
}

fn read_potential(r: &Reader, d: usize) -> PotentialSpec {
    match r.str_or("potential.tag", "zero") {
        "zero" => PotentialSpec::Zero,
        "gaussian_bump" => PotentialSpec::GaussianBump {
            center: r.vec_or("potential.center", d, 0.0),
            width: r.f64_or("potential.width", 1.0),
            height: r.f64_or("potential.height", 1.0),
        },
        "cosine" => PotentialSpec::Cosine {
            amplitudes: r.vec_or("potential.amplitudes", d, 1.0),
            wavenumbers: r.req_vec("potential.wavenumbers", d),
        },
        other => {
            r.fail(format!("potential.tag: unknown potential `{other}` (one of {})", POTENTIAL_TAGS.join(", ")));
            PotentialSpec::Zero
        }
    }
}

fn read_x_factor(r: &Reader, d: usize) -> XFactor {
    let center = r.vec_or("observable.phi_center", d, 0.0);
    match r.str_or("observable.phi", "bump") {
        "bump" => XFactor::Bump { center, radius: r.f64_or("observable.phi_radius", 1.0) },
        "gaussian" => XFactor::Gaussian { center, width: r.f64_or("observable.phi_width", 1.0) },
        "one" => XFactor::One,
        other => {
            r.fail(format!("observable.phi: unknown test function `{other}` (bump, gaussian, one)"));
            XFactor::One
        }
    }
}

fn read_observable(r: &Reader, d: usize, split_r: usize) -> Option<Observable> {
    let kind = r.str_or("observable.kind", "density");
    let obs = match kind {
        "density" => Observable::Density { phi: read_x_factor(r, d) },
        "twomicro" => {
            let phi = read_x_factor(r, d);
            let xi0 = r.req_vec("observable.xi0", d);
            let split = if split_r == 0 {
                Split::point(&xi0)
            } else {
                Split { r: split_r, p: d - split_r, base: xi0[split_r..].to_vec() }
            };
            let p = split.p;
            let psi = match r.str_or("observable.psi", "one") {
                "one" => XiFactor::One,
                "bump" => XiFactor::Bump { center: r.vec_or("observable.psi_center", d, 0.0), radius: r.f64_or("observable.psi_radius", 1.0) },
                other => {
                    r.fail(format!("observable.psi: unknown momentum factor `{other}` (one, bump)"));
                    XiFactor::One
                }
            };
            let eta = match r.str_or("observable.eta", "one") {
                "one" => EtaFactor::One,
                "bump" => EtaFactor::Bump { center: r.vec_or("observable.eta_center", p, 0.0), radius: r.f64_or("observable.eta_radius", 1.0) },
                "inner" => EtaFactor::Inner { r: r.f64_or("observable.eta_radius", 1.0) },
                "outer" => EtaFactor::Outer { r: r.f64_or("observable.eta_radius", 1.0) },
                "angular" => EtaFactor::Angular {
                    direction: r.req_vec("observable.eta_direction", p),
                    r0: r.f64_or("observable.eta_radius", 1.0),
                },
                other => {
                    r.fail(format!("observable.eta: unknown η factor `{other}` (one, bump, inner, outer, angular)"));
                    EtaFactor::One
                }
            };
            let base = TwoMicroSymbol::new(split).with_term(1.0, phi, vec![psi], vec![eta]);
            let params = || CutoffParams { r: r.f64_or("observable.cutoff_r", 4.0), delta: r.f64_or("observable.cutoff_delta", 0.5) };
            let cutoff = match r.str_or("observable.cutoff", "none") {
                "none" => None,
                "inner" => Some((CutoffKind::Inner, params())),
                "outer" => Some((CutoffKind::Outer, params())),
                other => {
                    r.fail(format!("observable.cutoff: unknown cutoff `{other}` (none, inner, outer)"));
                    None
                }
            };
            let flow_s = r.raw("observable.flow_s").map(|_| r.f64_or("observable.flow_s", 0.0));
            Observable::TwoMicro { base, cutoff, flow_s }
        }
        "smoothing" => {
            let ball = Ball::new(r.vec_or("observable.ball_center", d, 0.0), r.f64_or("observable.ball_radius", 1.0));
            let ball = ball.map_err(|e| r.fail(format!("observable.ball_radius: {e}"))).ok()?;
            Observable::Smoothing { s: r.f64_or("observable.s", 0.5), delta: r.f64_or("observable.delta", 0.5), ball }
        }
        "criterion" => Observable::Criterion {
            xi0: r.req_vec("observable.xi0", d),
            r: r.f64_or("observable.cutoff_r", 4.0),
            delta: r.f64_or("observable.cutoff_delta", 0.5),
        },
        other => {
            r.fail(format!("observable.kind: unknown observable `{other}` (one of {})", OBSERVABLE_KINDS.join(", ")));
            return None;
        }
    };
    Some(obs)
}

fn default_schedule(start: f64, count: usize, ratio: f64) -> Vec<f64> {
    (0..count).map(|k| start * ratio.powi(k as i32)).collect()
}

impl ExperimentConfig {
    /// Parse and cross-validate; every problem found is reported at once.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let r = Reader::new(cfg);
        let d = r.usize_or("symbol.dim", 1);
        let sym_p = r.raw("symbol.p").map(|_| r.usize_or("symbol.p", 1));
        let params = SymbolParams { dim: d, center: r.list("symbol.center"), p: sym_p };
        let tag = r.str_or("symbol.tag", "iso_quadratic");
        let symbol = builtin_symbol(tag, &params).map_err(|e| match e {
            Error::UnknownTag(t) => format!("symbol.tag: unknown symbol `{t}` (one of {})", SYMBOL_TAGS.join(", ")),
            other => format!("symbol: {other}"),
        });
        let p = match symbol.as_ref().map(|s| s.critical_set()) {
            Ok(CriticalSet::AffineManifold { p, .. }) => *p,
            _ => d,
        };
        let potential = read_potential(&r, d);
        let family = read_family(&r, d, p);
        let eps = match r.list("epsilon.values") {
            Some(v) => v,
            None => default_schedule(r.f64_or("epsilon.start", 0.2), r.usize_or("epsilon.count", 6), r.f64_or("epsilon.ratio", 0.5)),
        };
        let half_len = r.vec_or("grid.half_len", d, 10.0);
        let policy = match r.raw("grid.points") {
            None | Some("auto") => GridPolicy::Auto { max_points: r.usize_or("grid.max_points", DEFAULT_MAX_POINTS) },
            Some(_) => GridPolicy::Fixed(r.vec_or("grid.points", d, 0.0).iter().map(|v| *v as usize).collect()),
        };
        let shape = match r.str_or("time.window", "indicator") {
            "indicator" => WindowShape::Indicator,
            "bump" => WindowShape::Bump,
            other => {
                r.fail(format!("time.window: unknown window `{other}` (indicator, bump)"));
                WindowShape::Indicator
            }
        };
        let window = TimeWindow::new(r.f64_or("time.a", 0.0), r.f64_or("time.b", 1.0), r.usize_or("time.steps", 200), r.usize_or("time.stride", 1))
            .map(|w| w.with_shape(shape));
        let force_split = match r.str_or("time.method", "auto") {
            "auto" => false,
            "strang" => true,
            other => {
                r.fail(format!("time.method: unknown method `{other}` (auto, strang)"));
                false
            }
        };
        let split_r = d.saturating_sub(p);
        let observable = read_observable(&r, d, split_r);
        let oracle = match r.str_or("oracle.kind", "none") {
            "none" => OracleKind::None,
            "isolated" => OracleKind::Isolated,
            "degenerate" => OracleKind::Degenerate,
            "manifold" => OracleKind::Manifold,
            "consistency" => OracleKind::Consistency,
            other => {
                r.fail(format!("oracle.kind: unknown oracle `{other}` (one of {})", ORACLE_KINDS.join(", ")));
                OracleKind::None
            }
        };
        let output = OutputSpec {
            csv: r.raw("output.csv").map(PathBuf::from),
            timing: r.bool_or("output.timing", true),
            dump_state: r.raw("output.dump_state").map(PathBuf::from),
        };
        let mut errs = r.finish();
        let symbol = symbol.map_err(|e| errs.push(e)).ok();
        let window = window.map_err(|e| errs.push(format!("time: {e}"))).ok();
        let (Some(symbol), Some(family), Some(window), Some(observable)) = (symbol, family, window, observable) else {
            return Err(Error::Hypotheses(errs));
        };
        let mut out = ExperimentConfig {
            symbol,
            potential,
            family,
            eps,
            grid: GridSpec { half_len, policy },
            window,
            force_split,
            observable,
            oracle,
            output,
            notes: Vec::new(),
            config_hash: cfg.hash(),
        };
        errs.extend(out.cross_check());
        if errs.is_empty() {
            Ok(out)
        } else {
            Err(Error::Hypotheses(errs))
        }
    }

    /// Consistency between the parts; fills `notes` with soft findings.
    fn cross_check(&mut self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(Error::Hypotheses(e)) = self.family.validate() {
            errs.extend(e);
        }
        let (e, notes) = self.family.check_against(&self.symbol);
        errs.extend(e);
        self.notes.extend(notes);
        if self.eps.is_empty() {
            errs.push("the ε schedule is empty".into());
        }
        if self.eps.iter().any(|e| !(*e > 0.0)) {
            errs.push(format!("ε values must be positive: {:?}", self.eps));
        }
        if self.eps.windows(2).any(|w| w[1] >= w[0]) {
            errs.push(format!("ε values must be strictly decreasing: {:?}", self.eps));
        }
        if !errs.is_empty() {
            return errs;
        }
        let mut grids = Vec::new();
        for &eps in &self.eps {
            match self.grid.grid_for(&self.family, eps) {
                Ok(g) => {
                    let need = self.family.required_points(eps, g.half_lengths());
                    if need.iter().zip(g.shape()).any(|(n, have)| n > have) {
                        errs.push(format!("grid {:?} does not resolve {} at ε = {eps}: need N = {need:?}", g.shape(), self.family.tag()));
                    }
                    grids.push((eps, g));
                }
                Err(e) => errs.push(format!("grid at ε = {eps}: {e}")),
            }
        }
        if let Some((_, g)) = grids.first() {
            if let Err(e) = self.potential.check_on_grid(g) {
                errs.push(format!("potential: {e}"));
            }
        }
        if !self.potential.is_zero() {
            let need = ((self.window.b - self.window.a).abs() * self.potential.sup_bound() / MAX_POTENTIAL_PHASE).ceil() as usize;
            if self.window.n_steps < need {
                errs.push(format!("time.steps = {} is below the {need} steps the potential needs", self.window.n_steps));
            }
        }
        match &self.observable {
            Observable::Density { phi } => check_phi(phi, self.symbol.dim(), &mut errs),
            Observable::TwoMicro { base, cutoff, flow_s } => {
                for t in &base.terms {
                    check_phi(&t.x, self.symbol.dim(), &mut errs);
                }
                if flow_s.is_some() && self.symbol.dim() != 1 {
                    errs.push("observable.flow_s composes with the transverse flow in one dimension only".into());
                }
                match self.measured_symbol(base, cutoff, flow_s) {
                    Ok(sym) => {
                        for (eps, g) in &grids {
                            if let Err(e) = sym.check_resolution(g, *eps) {
                                errs.push(format!("observable at ε = {eps}: {e}"));
                            }
                        }
                    }
                    Err(e) => errs.push(format!("observable: {e}")),
                }
            }
            Observable::Smoothing { s, delta, ball } => {
                if !(*s >= 0.0) {
                    errs.push(format!("observable.s = {s} must be nonnegative"));
                }
                if !(*delta > 0.0) {
                    errs.push(format!("observable.delta = {delta} must be positive"));
                }
                if ball.center.len() != self.symbol.dim() {
                    errs.push("observable.ball_center has the wrong dimension".into());
                } else {
                    for a in 0..self.symbol.dim() {
                        if ball.center[a].abs() + ball.radius >= self.grid.half_len[a] {
                            errs.push(format!("smoothing ball touches the periodic boundary on axis {a}"));
                        }
                    }
                }
            }
            Observable::Criterion { r, delta, .. } => {
                if !(*delta > 0.0) || !(*r >= 1.0) {
                    errs.push(format!("criterion needs δ > 0 and R ≥ 1, got δ = {delta}, R = {r}"));
                }
            }
        }
        errs.extend(self.oracle_preconditions());
        errs
    }

    fn oracle_preconditions(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let density = matches!(self.observable, Observable::Density { .. });
        match self.oracle {
            OracleKind::None => {}
            OracleKind::Isolated | OracleKind::Degenerate | OracleKind::Manifold if !density => {
                errs.push(format!("oracle {:?} predicts densities; observable.kind must be density", self.oracle));
            }
            OracleKind::Isolated => {
                if !matches!(self.symbol.critical_set(), CriticalSet::FinitePoints(_)) {
                    errs.push("isolated oracle needs a symbol with finitely many critical points".into());
                }
            }
            OracleKind::Degenerate => {
                if !matches!(self.family, DataFamily::ShiftedDegenerate { .. }) {
                    errs.push("degenerate oracle needs shifted_degenerate data".into());
                }
                if !self.potential.is_zero() {
                    errs.push("degenerate oracle needs a vanishing potential".into());
                }
                if let DataFamily::ShiftedDegenerate { beta, .. } = &self.family {
                    if *beta <= 2.0 / 3.0 {
                        errs.push(format!("degenerate oracle needs shift exponent β > 2/3, got {beta}"));
                    }
                }
            }
            OracleKind::Manifold => {
                if self.family.split().is_none() {
                    errs.push("manifold oracle needs manifold_concentrating or manifold_shifted data".into());
                }
            }
            OracleKind::Consistency => match &self.observable {
                Observable::TwoMicro { base, cutoff: Some((CutoffKind::Inner, _)), flow_s: None } if base.split.r == 0 => {}
                _ => errs.push("consistency oracle needs a twomicro observable at a point with an inner cutoff and no flow".into()),
            },
        }
        errs
    }

    fn measured_symbol(&self, base: &TwoMicroSymbol, cutoff: &Option<(CutoffKind, CutoffParams)>, flow_s: &Option<f64>) -> Result<TwoMicroSymbol> {
        let mut a = match cutoff {
            Some((kind, p)) => apply_cutoffs(base, *p, *kind),
            None => base.clone(),
        };
        if let Some(s) = flow_s {
            let h = self.symbol.hess(&base.split.base)?[(0, 0)];
            a = a.compose_flow_1d(*s, h)?;
        }
        Ok(a)
    }

    pub fn has_oracle(&self) -> bool {
        self.oracle != OracleKind::None
    }

    pub fn grid_for(&self, eps: f64) -> Result<Grid> {
        self.grid.grid_for(&self.family, eps)
    }

    /// Oracle on the experiment grid of `eps`.
    pub fn predict(&self, grid: &Grid) -> Result<Option<PredictedLimit>> {
        let phi = match &self.observable {
            Observable::Density { phi } => Some(phi),
            _ => None,
        };
        let (fam, sym, v, w) = (&self.family, &self.symbol, &self.potential, &self.window);
        let out = match (self.oracle, phi) {
            (OracleKind::None, _) => None,
            (OracleKind::Isolated, Some(phi)) => Some(predictions::predict_isolated(fam, sym, v, phi, w, grid)?),
            (OracleKind::Degenerate, Some(phi)) => Some(predictions::predict_degenerate(fam, sym, v, phi, w, grid)?),
            (OracleKind::Manifold, Some(phi)) => Some(predictions::predict_manifold(fam, sym, v, phi, w, grid)?),
            (OracleKind::Consistency, _) => {
                let Observable::TwoMicro { base, cutoff: Some((_, p)), .. } = &self.observable else {
                    return Err(Error::param("consistency oracle needs an inner-cutoff twomicro observable"));
                };
                let c = predictions::profile_side_pairing(fam, sym, v, base, w, p.r, grid)?;
                let mut pl = PredictedLimit {
                    value: c.value,
                    tag: if c.vanishing { predictions::LimitTag::DispersedZero } else { predictions::LimitTag::ProfileDensity },
                    provenance: "profile-side pairing of the inner two-microlocal functional",
                    equality: true,
                    notes: Vec::new(),
                };
                if c.vanishing {
                    pl.notes.push("no weak limit at the symbol's base point".into());
                }
                Some(pl)
            }
            _ => return Err(Error::param("density oracle needs a density observable")),
        };
        Ok(out)
    }

    /// Measured value at one ε: `Ok(Err(msg))` when a numerical guard trips.
    pub fn measure(&self, eps: f64) -> Result<std::result::Result<f64, String>> {
        let grid = self.grid_for(eps)?;
        if let Observable::Criterion { xi0, r, delta } = &self.observable {
            return Ok(Ok(frequency_window_criterion(&self.family, xi0, eps, *r, *delta, &grid)?));
        }
        let u0 = self.family.sample(eps, &grid)?;
        let gen = Generator::semiclassical(&self.symbol, eps, &grid)?.with_potential(&self.potential)?;
        let (values, guard, w) = match &self.observable {
            Observable::Density { phi } => {
                let obs = evolve_observe(&u0, &gen, &self.window, self.force_split, |_, u| u.weighted_mass(|x| phi.eval(x)))?;
                (obs.values.clone(), obs.guard_violation(), self.window)
            }
            Observable::TwoMicro { base, cutoff, flow_s } => {
                let prep = self.measured_symbol(base, cutoff, flow_s)?.prepare(&grid, eps)?;
                let obs = evolve_observe(&u0, &gen, &self.window, self.force_split, |_, u| prep.expect(u).map(|z| z.re))?;
                let vals: Vec<(f64, f64)> = obs.values.iter().map(|(t, v)| v.as_ref().map(|v| (*t, *v)).map_err(|e| Error::param(e.to_string()))).collect::<Result<_>>()?;
                (vals, obs.guard_violation(), self.window)
            }
            Observable::Smoothing { s, delta, ball } => {
                let w = TimeWindow::new(0.0, *delta, self.window.n_steps, 1)?;
                let mult = grid.freq_table(|k| cutoff::norm(k).powf(*s));
                let obs = evolve_observe(&u0, &gen, &w, self.force_split, |_, u| {
                    let lifted = if *s == 0.0 { u.clone() } else { u.apply_real_table(&mult) };
                    lifted.weighted_mass(|x| if ball.contains(x) { 1.0 } else { 0.0 })
                })?;
                let val = integrate_to(&obs.values, *delta)?;
                return Ok(match obs.guard_violation() {
                    Some(g) => Err(g),
                    None => Ok(val),
                });
            }
            Observable::Criterion { .. } => unreachable!("handled above"),
        };
        Ok(match guard {
            Some(g) => Err(g),
            None => Ok(time_average(&values, &w)),
        })
    }
}

fn check_phi(phi: &XFactor, d: usize, errs: &mut Vec<String>) {
    let (XFactor::Bump { center, .. } | XFactor::Gaussian { center, .. }) = phi else {
        return;
    };
    if center.len() != d {
        errs.push(format!("test function center has {} entries, expected {d}", center.len()));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub eps: f64,
    /// `None` marks an INVALID row (numerical guard tripped).
    pub measured: Option<f64>,
    pub predicted: Option<f64>,
    pub runtime_s: f64,
    pub guard: Option<String>,
}

impl Row {
    pub fn gap(&self) -> Option<f64> {
        Some((self.measured? - self.predicted?).abs())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<Row>,
    pub has_oracle: bool,
    /// Oracle at the smallest ε, when one is selected.
    pub prediction: Option<PredictedLimit>,
    pub config_hash: String,
    pub code_version: &'static str,
    pub notes: Vec<String>,
    timing: bool,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

impl ResultTable {
    pub fn any_invalid(&self) -> bool {
        self.rows.iter().any(|r| r.measured.is_none())
    }

    pub fn header(&self) -> &'static str {
        if self.has_oracle {
            "epsilon,measured,predicted,gap,runtime_s"
        } else {
            "epsilon,measured,runtime_s"
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(self.header());
        s.push_str("\r\n");
        for r in &self.rows {
            let measured = r.measured.map_or("INVALID".to_string(), num);
            let runtime = num(if self.timing { r.runtime_s } else { 0.0 });
            if self.has_oracle {
                let pred = r.predicted.map_or(String::new(), num);
                let gap = match (r.measured, r.gap()) {
                    (None, _) => "INVALID".to_string(),
                    (_, Some(g)) => num(g),
                    _ => String::new(),
                };
                s.push_str(&format!("{},{measured},{pred},{gap},{runtime}\r\n", num(r.eps)));
            } else {
                s.push_str(&format!("{},{measured},{runtime}\r\n", num(r.eps)));
            }
        }
        s
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Sidecar text: hash, version, oracle provenance, notes, guard trips.
    pub fn meta(&self) -> String {
        let mut s = format!("config_hash = {}\ncode_version = {}\n", self.config_hash, self.code_version);
        if let Some(p) = &self.prediction {
            s.push_str(&format!("oracle = {}\nprovenance = {}\nequality = {}\n", p.tag, p.provenance, p.equality));
            for n in &p.notes {
                s.push_str(&format!("oracle_note = {n}\n"));
            }
        }
        for n in &self.notes {
            s.push_str(&format!("note = {n}\n"));
        }
        for r in &self.rows {
            if let Some(g) = &r.guard {
                s.push_str(&format!("invalid = epsilon {}: {g}\n", num(r.eps)));
            }
        }
        s
    }
}

/// Run every ε row (in parallel, order preserved) and attach the oracle.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let grids: Vec<Grid> = cfg.eps.iter().map(|&e| cfg.grid_for(e)).collect::<Result<_>>()?;
    let mut distinct: Vec<Grid> = Vec::new();
    for g in &grids {
        if !distinct.contains(g) {
            distinct.push(*g);
        }
    }
    let mut notes = cfg.notes.clone();
    let mut oracles: Vec<Option<PredictedLimit>> = Vec::with_capacity(distinct.len());
    if cfg.has_oracle() {
        // a contaminated oracle leaves the predicted column empty rather than aborting
        for (g, p) in distinct.iter().zip(par::map_slice(&distinct, |g| cfg.predict(g))) {
            match p {
                Ok(p) => oracles.push(p),
                Err(Error::Guard(msg)) => {
                    notes.push(format!("oracle on grid {:?} invalid: {msg}", g.shape()));
                    oracles.push(None);
                }
                Err(e) => return Err(e),
            }
        }
    } else {
        oracles.resize(distinct.len(), None);
    }
    let rows = par::map_range(cfg.eps.len(), |i| -> Result<Row> {
        let eps = cfg.eps[i];
        let start = Instant::now();
        let m = cfg.measure(eps)?;
        let runtime_s = start.elapsed().as_secs_f64();
        let k = distinct.iter().position(|g| *g == grids[i]).expect("grid listed");
        let predicted = oracles[k].as_ref().map(|p| p.value);
        let (measured, guard) = match m {
            Ok(v) => (Some(v), None),
            Err(g) => (None, Some(g)),
        };
        Ok(Row { eps, measured, predicted, runtime_s, guard })
    });
    let rows: Vec<Row> = rows.into_iter().collect::<Result<_>>()?;
    let prediction = oracles.last().cloned().flatten();
    Ok(ResultTable {
        rows,
        has_oracle: cfg.has_oracle(),
        prediction,
        config_hash: cfg.config_hash.clone(),
        code_version: env!("CARGO_PKG_VERSION"),
        notes,
        timing: cfg.output.timing,
    })
}

/// One evolution at `eps`: per-snapshot `(t, mass, observable)` and the
/// final state. The observable column is the density pairing when one is
/// configured, otherwise the mass.
pub struct SingleRun {
    pub rows: Vec<(f64, f64, f64)>,
    pub final_state: Field,
    pub guard: Option<String>,
}

pub fn evolve_single(cfg: &ExperimentConfig, eps: f64) -> Result<SingleRun> {
    let grid = cfg.grid_for(eps)?;
    let u0 = cfg.family.sample(eps, &grid)?;
    let gen = Generator::semiclassical(&cfg.symbol, eps, &grid)?.with_potential(&cfg.potential)?;
    let phi = match &cfg.observable {
        Observable::Density { phi } => phi.clone(),
        _ => XFactor::One,
    };
    let b = cfg.window.b;
    let obs = evolve_observe(&u0, &gen, &cfg.window, cfg.force_split, |t, u| {
        let keep = if (t - b).abs() <= 1e-12 * b.abs().max(1.0) { Some(u.clone()) } else { None };
        (u.norm_sqr(), u.weighted_mass(|x| phi.eval(x)), keep)
    })?;
    let guard = obs.guard_violation();
    let mut rows = Vec::with_capacity(obs.values.len());
    let mut last = None;
    for (t, (m, o, keep)) in obs.values {
        rows.push((t, m, o));
        if keep.is_some() {
            last = keep;
        }
    }
    Ok(SingleRun { rows, final_state: last.expect("window ends at b"), guard })
}

/// Config for the catalog listing and docs.
pub fn catalog() -> String {
    let mut s = String::new();
    s.push_str(&format!("symbols: {}\n", SYMBOL_TAGS.join(", ")));
    s.push_str(&format!("potentials: {}\n", POTENTIAL_TAGS.join(", ")));
    s.push_str(&format!("families: {}\n", FAMILY_TAGS.join(", ")));
    s.push_str(&format!("observables: {}\n", OBSERVABLE_KINDS.join(", ")));
    s.push_str(&format!("oracles: {}\n", ORACLE_KINDS.join(", ")));
    s
}
