//! Command-line front end. Every subcommand parses its arguments, makes the
//! matching library call and prints a [`Report`](crate::report::Report).
//!
//! Exit codes: 0 success (including `HypothesesFail` and `Undetermined`
//! verdicts), 1 usage or input error, 2 numeric failure.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::classify::{
    box_neighborhood, classify_corollary5, classify_theorem3, classify_theorem4, dual_attractor, isolate, trichotomy,
    AnalysisParams, Disk,
};
use crate::equilibria::find_equilibria;
use crate::field::BUILTIN_NAMES;
use crate::integrate::flow;
use crate::report::{
    block_report, classification_report, dual_report, equilibria_report, invariant_set_report, trajectory_report,
    Report,
};
use crate::svg::{portrait, render_svg, PortraitOptions};
use crate::topology::{entrance_exit, BoxGrid, BoxSet};
use crate::{Error, IntegrationParams, Point, Rect, VectorField};

/// Caps the worker threads used by the analyses.
pub const THREADS_ENV: &str = "PLANAR_CONLEY_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "planar-conley",
    version,
    about = "Classify isolated invariant sets of planar flows"
)]
struct Cli {
    /// Emit JSON with full-precision numbers instead of the text report.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the builtin systems.
    Systems,
    /// Locate and classify equilibria.
    Equilibria {
        /// Builtin name or path to a key=value config file.
        system: String,
        #[arg(long, value_parser = parse_rect, allow_hyphen_values = true)]
        rect: Option<Rect>,
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
    /// Integrate one orbit and print its endpoint.
    Simulate {
        system: String,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        from: Point,
        /// Signed time; negative integrates backward.
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
    },
    /// Invariant part of a box grid and whether it is isolated.
    Invset {
        system: String,
        #[arg(long, value_parser = parse_rect, allow_hyphen_values = true)]
        rect: Option<Rect>,
        #[arg(long)]
        res: Option<usize>,
        /// Write the invariant part in box-set text form.
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Entrance/exit decomposition of a counterclockwise polygon.
    Block {
        system: String,
        /// Vertices as `x1,y1:x2,y2:...`.
        #[arg(long, value_parser = parse_polygon, allow_hyphen_values = true)]
        poly: Polygon,
        #[arg(long, default_value_t = 256)]
        samples: usize,
    },
    /// Classify the invariant set inside a neighbourhood.
    Classify {
        system: String,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Disk `cx,cy,r` for `t4`.
        #[arg(long, value_parser = parse_disk, allow_hyphen_values = true)]
        disk: Option<Disk>,
        /// Neighbourhood rectangle; defaults to the system's.
        #[arg(long, value_parser = parse_rect, allow_hyphen_values = true)]
        rect: Option<Rect>,
        #[arg(long)]
        res: Option<usize>,
        /// Neighbourhood as a box-set text file; overrides --rect and --res.
        #[arg(long)]
        kset: Option<PathBuf>,
    },
    /// Write an SVG phase portrait.
    Portrait {
        system: String,
        #[arg(long, value_parser = parse_rect, allow_hyphen_values = true)]
        rect: Option<Rect>,
        #[arg(long)]
        out: PathBuf,
        /// Box-set text file drawn as translucent boxes.
        #[arg(long)]
        kset: Option<PathBuf>,
        #[arg(long)]
        no_cycles: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    T3,
    T4,
    C5,
    Trichotomy,
    C6,
}

fn numbers(s: &str, n: usize, what: &str) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{what}: `{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("{what}: expected {n} comma-separated numbers, got {}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(format!("{what}: numbers must be finite"));
    }
    Ok(v)
}

fn parse_point(s: &str) -> Result<Point, String> {
    let v = numbers(s, 2, "point")?;
    Ok(Point::new(v[0], v[1]))
}

fn parse_rect(s: &str) -> Result<Rect, String> {
    let v = numbers(s, 4, "rect")?;
    let r = Rect::new(v[0], v[1], v[2], v[3]);
    if !r.is_valid() {
        return Err("rect: need x0 < x1 and y0 < y1".into());
    }
    Ok(r)
}

fn parse_disk(s: &str) -> Result<Disk, String> {
    let v = numbers(s, 3, "disk")?;
    if v[2] <= 0.0 {
        return Err("disk: radius must be positive".into());
    }
    Ok(Disk::new(Point::new(v[0], v[1]), v[2]))
}

#[derive(Debug, Clone)]
struct Polygon(Vec<Point>);

fn parse_polygon(s: &str) -> Result<Polygon, String> {
    s.split(':').map(parse_point).collect::<Result<_, _>>().map(Polygon)
}

/// A system to analyse: builtin or read from a config file.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub name: String,
    pub fx: String,
    pub fy: String,
    /// Analysis rectangle for equilibria, invariant sets and portraits.
    pub rect: Rect,
    /// Default neighbourhood of `K` for `classify`.
    pub k_rect: Rect,
    pub resolution: (usize, usize),
    pub params: IntegrationParams,
}

impl SystemConfig {
    pub fn builtin(name: &str) -> Option<Self> {
        let (fx, fy) = crate::field::builtin_source(name)?;
        let (view, k_half) = match name {
            "saddle" | "node" => (1.0, 0.5),
            "radial" => (1.5, 0.3),
            "vdp" => (3.0, 0.3),
            _ => (2.5, 0.3),
        };
        Some(Self {
            name: name.to_string(),
            fx,
            fy,
            rect: Rect::square(Point::zero(), view),
            k_rect: Rect::square(Point::zero(), k_half),
            resolution: (32, 32),
            params: IntegrationParams::default(),
        })
    }

    /// Flat `key = value` lines; `#` starts a comment. Keys: `name`, `fx`,
    /// `fy`, `rect`, `k_rect` (as `x0,y0,x1,y1`), `res` (`n` or `nx,ny`) and
    /// the integration fields `rel_tol`, `abs_tol`, `max_step`, `t_max`,
    /// `escape_radius`, `dt_dense`.
    pub fn parse(text: &str) -> crate::Result<Self> {
        let bad = |m: String| Error::Parse(format!("config: {m}"));
        let mut name = None;
        let (mut fx, mut fy) = (None, None);
        let (mut rect, mut k_rect, mut res) = (None, None, None);
        let mut params = IntegrationParams::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let real = || value.parse::<f64>().map_err(|e| bad(format!("{key}: {e}")));
            match key {
                "name" => name = Some(value.to_string()),
                "fx" => fx = Some(value.to_string()),
                "fy" => fy = Some(value.to_string()),
                "rect" => rect = Some(parse_rect(value).map_err(bad)?),
                "k_rect" => k_rect = Some(parse_rect(value).map_err(bad)?),
                "res" => {
                    let v: Vec<usize> = value
                        .split(',')
                        .map(|t| t.trim().parse::<usize>().map_err(|e| bad(format!("res: {e}"))))
                        .collect::<crate::Result<_>>()?;
                    res = Some(match v[..] {
                        [n] => (n, n),
                        [nx, ny] => (nx, ny),
                        _ => return Err(bad("res: expected n or nx,ny".into())),
                    });
                }
                "rel_tol" => params.rel_tol = real()?,
                "abs_tol" => params.abs_tol = real()?,
                "max_step" => params.max_step = real()?,
                "t_max" => params.t_max = real()?,
                "escape_radius" => params.escape_radius = real()?,
                "dt_dense" => params.dt_dense = real()?,
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        params.validate()?;
        let fx = fx.ok_or_else(|| bad("missing fx".into()))?;
        let fy = fy.ok_or_else(|| bad("missing fy".into()))?;
        let rect = rect.ok_or_else(|| bad("missing rect".into()))?;
        // fail early on bad expressions
        VectorField::parse("config", &fx, &fy)?;
        Ok(Self {
            name: name.unwrap_or_else(|| "custom".into()),
            fx,
            fy,
            rect,
            k_rect: k_rect.unwrap_or(rect),
            resolution: res.unwrap_or((32, 32)),
            params,
        })
    }

    /// A builtin name, else a config file path.
    pub fn load(spec: &str) -> crate::Result<Self> {
        if let Some(c) = Self::builtin(spec) {
            return Ok(c);
        }
        match std::fs::read_to_string(spec) {
            Ok(text) => Self::parse(&text),
            Err(_) => Err(Error::UnknownSystem(spec.to_string())),
        }
    }

    pub fn field(&self) -> crate::Result<VectorField> {
        VectorField::parse(self.name.clone(), &self.fx, &self.fy)
    }

    pub fn analysis_params(&self) -> AnalysisParams {
        AnalysisParams {
            integration: self.params,
            ..AnalysisParams::default()
        }
    }
}

/// Exit status and captured output of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliOutcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl CliOutcome {
    fn ok(stdout: String) -> Self {
        Self {
            code: 0,
            stdout,
            stderr: String::new(),
        }
    }

    fn fail(code: i32, stderr: String) -> Self {
        Self {
            code,
            stdout: String::new(),
            stderr,
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Expr(_) | Error::UnknownSystem(_) | Error::Precondition(_) | Error::Parse(_) => 1,
        _ => 2,
    }
}

fn read_boxset(path: &PathBuf) -> crate::Result<BoxSet> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    BoxSet::from_text(&text)
}

fn grid_cover(rect: Rect, (nx, ny): (usize, usize)) -> crate::Result<BoxSet> {
    Ok(BoxSet::full(BoxGrid::new(rect, nx, ny)?))
}

fn execute(command: Command) -> crate::Result<Report> {
    match command {
        Command::Systems => {
            let mut r = Report::new();
            for name in BUILTIN_NAMES {
                let (fx, fy) = crate::field::builtin_source(name).expect("builtin names have sources");
                let mut s = Report::new();
                s.text("name", name).text("fx", fx).text("fy", fy);
                r.section("system", s);
            }
            Ok(r)
        }
        Command::Equilibria { system, rect, grid } => {
            let cfg = SystemConfig::load(&system)?;
            let field = cfg.field()?;
            let scan = find_equilibria(&field, rect.unwrap_or(cfg.rect), grid, 1e-10)?;
            Ok(equilibria_report(&scan))
        }
        Command::Simulate { system, from, t } => {
            let cfg = SystemConfig::load(&system)?;
            let field = cfg.field()?;
            let tr = flow(&field, from, t, &cfg.params)?;
            Ok(trajectory_report(&tr))
        }
        Command::Invset {
            system,
            rect,
            res,
            save,
        } => {
            let cfg = SystemConfig::load(&system)?;
            let field = cfg.field()?;
            let res = res.map(|n| (n, n)).unwrap_or(cfg.resolution);
            let domain = grid_cover(rect.unwrap_or(cfg.rect), res)?;
            let inv = isolate(&field, &domain, &cfg.analysis_params())?;
            let mut r = invariant_set_report(&inv.set, inv.isolated, inv.tau);
            match save {
                Some(path) => {
                    std::fs::write(&path, inv.set.to_text())
                        .map_err(|e| Error::Parse(format!("cannot write {}: {e}", path.display())))?;
                    r.text("saved", path.display().to_string());
                }
                None => {
                    let mut b = Report::new();
                    for line in inv.set.to_text().lines() {
                        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
                        let key = if key.parse::<usize>().is_ok() { "indices" } else { key };
                        let rest = if key == "indices" { line } else { rest };
                        b.text(key, rest);
                    }
                    r.section("boxset", b);
                }
            }
            Ok(r)
        }
        Command::Block { system, poly, samples } => {
            let cfg = SystemConfig::load(&system)?;
            let field = cfg.field()?;
            Ok(block_report(&entrance_exit(&field, &poly.0, samples)?))
        }
        Command::Classify {
            system,
            mode,
            disk,
            rect,
            res,
            kset,
        } => {
            let cfg = SystemConfig::load(&system)?;
            let field = cfg.field()?;
            let ap = cfg.analysis_params();
            let n_k = match kset {
                Some(path) => read_boxset(&path)?,
                None => box_neighborhood(rect.unwrap_or(cfg.k_rect), res.unwrap_or(cfg.resolution.0))?,
            };
            match mode {
                Mode::T3 => Ok(classification_report(&classify_theorem3(&field, &n_k, &ap)?)),
                Mode::T4 => {
                    let disk = disk.ok_or_else(|| Error::Precondition("--mode t4 needs --disk cx,cy,r".into()))?;
                    Ok(classification_report(&classify_theorem4(&field, &n_k, disk, &ap)?))
                }
                Mode::C5 => Ok(classification_report(&classify_corollary5(&field, &n_k, &ap)?)),
                Mode::Trichotomy => Ok(classification_report(&trichotomy(&field, &n_k, &ap)?)),
                Mode::C6 => Ok(dual_report(&dual_attractor(&field, &n_k, &ap)?)),
            }
        }
        Command::Portrait {
            system,
            rect,
            out,
            kset,
            no_cycles,
        } => {
            let cfg = SystemConfig::load(&system)?;
            let field = cfg.field()?;
            let rect = rect.unwrap_or(cfg.rect);
            let k = kset.as_ref().map(read_boxset).transpose()?;
            let opts = PortraitOptions {
                find_cycles: !no_cycles,
                integration: IntegrationParams {
                    dt_dense: 0.02,
                    ..cfg.params
                },
                ..PortraitOptions::default()
            };
            let p = portrait(&field, rect, k.as_ref(), &opts)?;
            let svg = render_svg(&p, rect, opts.width, &cfg.name);
            std::fs::write(&out, svg).map_err(|e| Error::Parse(format!("cannot write {}: {e}", out.display())))?;
            let mut r = Report::new();
            r.text("written", out.display().to_string())
                .int("streamlines", p.streamlines.len())
                .int("equilibria", p.equilibria.len())
                .int("cycles", p.cycles.len());
            Ok(r)
        }
    }
}

fn thread_count() -> Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("{THREADS_ENV} must be a positive integer, got `{v}`")),
        },
    }
}

/// Runs one invocation. `argv[0]` is the program name.
pub fn run_cli<I, S>(argv: I) -> CliOutcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                CliOutcome::fail(1, text)
            } else {
                CliOutcome::ok(text)
            };
        }
    };
    let threads = match thread_count() {
        Ok(t) => t,
        Err(m) => return CliOutcome::fail(1, format!("error: {m}\n")),
    };
    let json = cli.json;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => return CliOutcome::fail(2, format!("error: thread pool: {e}\n")),
    };
    match pool.install(|| execute(cli.command)) {
        Ok(report) => {
            let out = if json {
                let mut s = serde_json::to_string_pretty(&report.to_json()).expect("reports serialize");
                s.push('\n');
                s
            } else {
                report.render()
            };
            CliOutcome::ok(out)
        }
        Err(e) => CliOutcome::fail(exit_code(&e), format!("error: {e}\n")),
    }
}

/// Entry point of the binary.
pub fn main_entry() -> i32 {
    let out = run_cli(std::env::args_os());
    print!("{}", out.stdout);
    eprint!("{}", out.stderr);
    out.code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_number_lists() {
        assert_eq!(parse_point("1,-2").unwrap(), Point::new(1.0, -2.0));
        assert!(parse_rect("1,0,0,1").is_err());
        assert!(parse_disk("0,0,-1").is_err());
        assert_eq!(parse_polygon("0,0:1,0:0,1").unwrap().0.len(), 3);
        assert!(parse_point("1,nan").is_err());
    }

    #[test]
    fn config_round_trip_and_errors() {
        let cfg = SystemConfig::parse(
            "# damped\nname = osc\nfx = y\nfy = -x - 0.5*y\nrect = -2,-2,2,2\nres = 16,24\nt_max = 50\n",
        )
        .unwrap();
        assert_eq!(cfg.name, "osc");
        assert_eq!(cfg.resolution, (16, 24));
        assert_eq!(cfg.params.t_max, 50.0);
        assert_eq!(cfg.k_rect, cfg.rect);
        assert!(cfg.field().is_ok());
        assert!(matches!(SystemConfig::parse("fx = y\nfy = x\n"), Err(Error::Parse(_))));
        assert!(matches!(
            SystemConfig::parse("fx = y\nfy = x\nrect = -1,-1,1,1\ncolour = red\n"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            SystemConfig::parse("fx = y +\nfy = x\nrect = -1,-1,1,1\n"),
            Err(Error::Expr(_))
        ));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_cli(["planar-conley", "frobnicate"]).code, 1);
        assert_eq!(
            run_cli(["planar-conley", "simulate", "nosuch", "--from", "0,0", "--t", "1"]).code,
            1
        );
        assert_eq!(run_cli(["planar-conley", "classify", "saddle", "--mode", "t4"]).code, 1);
        let help = run_cli(["planar-conley", "--help"]);
        assert_eq!(help.code, 0);
        assert!(help.stdout.contains("classify"));
    }
}
