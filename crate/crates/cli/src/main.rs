use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semilab::experiment::{self, evolve_single, run_convergence, Config, ExperimentConfig, GridPolicy, Observable, ResultTable};
use semilab::smoothing::{blowup_exponent, SweepGrid};
use semilab::wigner::wigner_transform;
use semilab::{par, Error};

/// Semiclassical dispersive-equation laboratory.
#[derive(Parser)]
#[command(name = "semilab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (`section.key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config entry; repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Output file; stdout when omitted (binary outputs require it).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the final state in the binary field format.
    #[arg(long)]
    dump_state: Option<PathBuf>,
    /// Worker threads (overrides SEMILAB_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Single-run ε; defaults to the smallest value of the schedule.
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve once and write t, mass, observable per snapshot.
    Evolve(Common),
    /// ε-sweep of the space-time density pairing.
    Defect(Common),
    /// Wigner transform of the final state (binary).
    Wigner(Common),
    /// ε-sweep of a two-microlocal pairing.
    Twomicro(Common),
    /// Local smoothing sweep and log-log slope.
    Smoothing(Common),
    /// Print the predicted limit with its tag and provenance.
    Predict(Common),
    /// ε-sweep of any observable.
    Converge(Common),
    /// List the catalog tags.
    ListCatalog,
}

enum Failure {
    Validation(String),
    Guard(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Guard(m) => Failure::Guard(m),
            Error::Io(e) => Failure::Other(e.to_string()),
            Error::NonFinite(_) => Failure::Other(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::ListCatalog => {
            print!("{}", experiment::catalog());
            Ok(())
        }
        Cmd::Evolve(c) => with_config(&c).and_then(|cfg| evolve(&c, &cfg)),
        Cmd::Defect(c) => with_config(&c).and_then(|cfg| sweep(&c, &cfg, Some("density"))),
        Cmd::Twomicro(c) => with_config(&c).and_then(|cfg| sweep(&c, &cfg, Some("twomicro"))),
        Cmd::Converge(c) => with_config(&c).and_then(|cfg| sweep(&c, &cfg, None)),
        Cmd::Wigner(c) => with_config(&c).and_then(|cfg| wigner(&c, &cfg)),
        Cmd::Smoothing(c) => with_config(&c).and_then(|cfg| smoothing(&c, &cfg)),
        Cmd::Predict(c) => with_config(&c).and_then(|cfg| predict(&c, &cfg)),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Guard(m)) => {
            eprintln!("guard: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn with_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let threads = c.threads.or_else(|| std::env::var("SEMILAB_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads {
        par::configure_threads(n);
    }
    let mut cfg = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Other(format!("{}: {e}", p.display())))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    for s in &c.set {
        cfg.set(s)?;
    }
    Ok(ExperimentConfig::from_config(&cfg)?)
}

fn single_eps(c: &Common, cfg: &ExperimentConfig) -> f64 {
    c.eps.unwrap_or_else(|| *cfg.eps.last().expect("validated schedule is nonempty"))
}

fn out_path<'a>(c: &'a Common, cfg: &'a ExperimentConfig) -> Option<&'a Path> {
    c.out.as_deref().or(cfg.output.csv.as_deref())
}

fn write_text(path: Option<&Path>, text: &str) -> io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn dump_state(c: &Common, cfg: &ExperimentConfig, f: &semilab::Field) -> Outcome {
    if let Some(p) = c.dump_state.as_deref().or(cfg.output.dump_state.as_deref()) {
        let mut w = BufWriter::new(File::create(p)?);
        f.write_to(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn evolve(c: &Common, cfg: &ExperimentConfig) -> Outcome {
    let run = evolve_single(cfg, single_eps(c, cfg))?;
    let mut s = String::from("t,mass,observable\r\n");
    for (t, m, o) in &run.rows {
        s.push_str(&format!("{t:.16e},{m:.16e},{o:.16e}\r\n"));
    }
    write_text(out_path(c, cfg), &s)?;
    dump_state(c, cfg, &run.final_state)?;
    match run.guard {
        Some(g) => Err(Failure::Guard(g)),
        None => Ok(()),
    }
}

fn finish_table(c: &Common, cfg: &ExperimentConfig, t: &ResultTable) -> Outcome {
    let path = out_path(c, cfg);
    write_text(path, &t.to_csv())?;
    match path {
        Some(p) => {
            let mut meta = p.as_os_str().to_owned();
            meta.push(".meta");
            std::fs::write(meta, t.meta())?;
        }
        None => eprint!("{}", t.meta()),
    }
    if t.any_invalid() {
        return Err(Failure::Guard("one or more rows are INVALID".into()));
    }
    Ok(())
}

fn sweep(c: &Common, cfg: &ExperimentConfig, want: Option<&str>) -> Outcome {
    if let Some(w) = want {
        if cfg.observable.tag() != w {
            return Err(Failure::Validation(format!("this subcommand needs observable.kind = {w}, got {}", cfg.observable.tag())));
        }
    }
    let t = run_convergence(cfg)?;
    finish_table(c, cfg, &t)
}

fn wigner(c: &Common, cfg: &ExperimentConfig) -> Outcome {
    let Some(path) = c.out.as_deref() else {
        return Err(Failure::Validation("wigner writes binary output and needs --out".into()));
    };
    let run = evolve_single(cfg, single_eps(c, cfg))?;
    if let Some(g) = run.guard {
        return Err(Failure::Guard(g));
    }
    let w = wigner_transform(&run.final_state, single_eps(c, cfg))?;
    let mut f = BufWriter::new(File::create(path)?);
    w.write_to(&mut f)?;
    f.flush()?;
    dump_state(c, cfg, &run.final_state)
}

fn smoothing(c: &Common, cfg: &ExperimentConfig) -> Outcome {
    let Observable::Smoothing { s, delta, ball } = &cfg.observable else {
        return Err(Failure::Validation(format!("smoothing needs observable.kind = smoothing, got {}", cfg.observable.tag())));
    };
    let grid = SweepGrid {
        half_len: cfg.grid.half_len.clone(),
        points: match &cfg.grid.policy {
            GridPolicy::Fixed(n) => Some(n.clone()),
            GridPolicy::Auto { .. } => None,
        },
    };
    let rep = blowup_exponent(&cfg.family, &cfg.symbol, &cfg.potential, *s, *delta, ball, &cfg.eps, &grid, cfg.window.n_steps)?;
    let (slope, residual) = match &rep.fit {
        Some(f) => (format!("{:.16e}", f.slope), format!("{:.16e}", f.residual)),
        None => (String::new(), String::new()),
    };
    let mut out = String::from("epsilon,S,fitted_slope,residual\r\n");
    for (e, v) in rep.eps.iter().zip(&rep.values) {
        out.push_str(&format!("{e:.16e},{v:.16e},{slope},{residual}\r\n"));
    }
    write_text(out_path(c, cfg), &out)?;
    for n in &rep.notes {
        eprintln!("note: {n}");
    }
    Ok(())
}

fn predict(c: &Common, cfg: &ExperimentConfig) -> Outcome {
    if !cfg.has_oracle() {
        return Err(Failure::Validation("predict needs oracle.kind to name an oracle".into()));
    }
    let grid = cfg.grid_for(single_eps(c, cfg))?;
    let p = cfg.predict(&grid)?.expect("oracle selected");
    let mut s = format!("value = {:.16e}\ntag = {}\nprovenance = {}\nequality = {}\n", p.value, p.tag, p.provenance, p.equality);
    for n in p.notes.iter().chain(&cfg.notes) {
        s.push_str(&format!("note = {n}\n"));
    }
    write_text(out_path(c, cfg), &s)?;
    Ok(())
}
