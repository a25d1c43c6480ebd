//! Run configuration: flags, an optional JSON config file, and the small
//! `kind:args` spec strings used by both.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fracgraph::graph::{build_cycle, build_grid, build_path, load_graph};
use fracgraph::{NonlinearitySpec, PotentialSpec, WeightedGraph};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{arg_err, read_file, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Nehari,
    Mountainpass,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweptCommand {
    Kernel,
    Lambda,
    Solve,
}

/// Options shared by every subcommand. Anything left unset falls back to the
/// config file, then to the built-in default.
#[derive(Debug, Default, Clone, Args)]
pub struct Options {
    /// JSON config file; flags override its entries.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Edge list file, one `u v weight` line per edge.
    #[arg(long, global = true, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    /// Measure file, one `u mu` line per vertex (default μ ≡ 1).
    #[arg(long, global = true, value_name = "FILE")]
    pub measure: Option<PathBuf>,
    /// Built-in graph: `path:n`, `cycle:n` or `grid:nx,ny`.
    #[arg(long, global = true, value_name = "SPEC")]
    pub builder: Option<String>,
    /// Fractional order in (0, 1).
    #[arg(long, global = true)]
    pub s: Option<f64>,
    /// Exponent p >= 2.
    #[arg(long, global = true)]
    pub p: Option<f64>,
    /// Assemble the kernel by time quadrature instead of the spectral formula.
    #[arg(long, global = true)]
    pub quadrature: bool,
    /// `const:h0`, `affine:h0,c,x0` or `file:PATH`.
    #[arg(long, global = true, value_name = "SPEC")]
    pub potential: Option<String>,
    /// `power:q[,a]` for F(y) = a y^q / q.
    #[arg(long, global = true, value_name = "SPEC")]
    pub nonlinearity: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<MethodChoice>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Vertex function for `operators`, one `u value` line per vertex.
    #[arg(long, global = true, value_name = "FILE")]
    pub function: Option<PathBuf>,
    /// Test function for the integration-by-parts check (default: seeded random).
    #[arg(long, global = true, value_name = "FILE")]
    pub phi: Option<PathBuf>,
    /// Stored `solution.json` for `verify`.
    #[arg(long, global = true, value_name = "FILE")]
    pub solution: Option<PathBuf>,
    /// `s=a:b:step`, `p=...` or `r=...`; a comma list also works (`s=0.25,0.5`).
    #[arg(long, global = true, value_name = "SPEC")]
    pub sweep: Option<String>,
    /// Command repeated by `sweep`.
    #[arg(long, global = true, value_enum)]
    pub of: Option<SweptCommand>,
    /// Ball center for `r` sweeps (label or index).
    #[arg(long, global = true, value_name = "VERTEX")]
    pub center: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    graph: Option<PathBuf>,
    measure: Option<PathBuf>,
    builder: Option<String>,
    s: Option<f64>,
    p: Option<f64>,
    quadrature: Option<bool>,
    potential: Option<String>,
    nonlinearity: Option<String>,
    method: Option<MethodChoice>,
    tol: Option<f64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    function: Option<PathBuf>,
    phi: Option<PathBuf>,
    solution: Option<PathBuf>,
    sweep: Option<String>,
    of: Option<SweptCommand>,
    center: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Builder {
    Path(usize),
    Cycle(usize),
    Grid(usize, usize),
}

impl Builder {
    pub fn parse(spec: &str) -> CliResult<Self> {
        let (kind, args) = split_spec(spec)?;
        let nums = parse_list::<usize>(args, spec)?;
        match (kind, nums.as_slice()) {
            ("path", [n]) => Ok(Builder::Path(*n)),
            ("cycle", [n]) => Ok(Builder::Cycle(*n)),
            ("grid", [nx, ny]) => Ok(Builder::Grid(*nx, *ny)),
            _ => Err(arg_err(format!("bad builder `{spec}` (expected path:n, cycle:n or grid:nx,ny)"))),
        }
    }

    pub fn build(&self) -> CliResult<WeightedGraph> {
        Ok(match *self {
            Builder::Path(n) => build_path(n, None, None)?,
            Builder::Cycle(n) => build_cycle(n)?,
            Builder::Grid(nx, ny) => build_grid(nx, ny)?,
        })
    }
}

impl std::fmt::Display for Builder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Builder::Path(n) => write!(f, "path:{n}"),
            Builder::Cycle(n) => write!(f, "cycle:{n}"),
            Builder::Grid(nx, ny) => write!(f, "grid:{nx},{ny}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    Builder(Builder),
    File { edges: PathBuf, measure: Option<PathBuf> },
}

impl GraphSource {
    pub fn load(&self) -> CliResult<WeightedGraph> {
        match self {
            GraphSource::Builder(b) => b.build(),
            GraphSource::File { edges, measure } => {
                let e = read_file(edges)?;
                let m = measure.as_deref().map(read_file).transpose()?;
                Ok(load_graph(&e, m.as_deref())?)
            }
        }
    }

    fn describe(&self) -> String {
        match self {
            GraphSource::Builder(b) => b.to_string(),
            GraphSource::File { edges, .. } => format!("file:{}", edges.display()),
        }
    }
}

/// Potential as given on the command line; vertices are resolved by label
/// against each graph it is applied to.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialArg {
    Const(f64),
    Affine { h0: f64, c: f64, x0: String },
    File(PathBuf),
}

impl PotentialArg {
    pub fn parse(spec: &str) -> CliResult<Self> {
        let (kind, args) = split_spec(spec)?;
        match kind {
            "const" => Ok(PotentialArg::Const(parse_num(args, spec)?)),
            "affine" => {
                let parts: Vec<&str> = args.split(',').map(str::trim).collect();
                let [h0, c, x0] = parts[..] else {
                    return Err(arg_err(format!("bad potential `{spec}` (expected affine:h0,c,x0)")));
                };
                Ok(PotentialArg::Affine { h0: parse_num(h0, spec)?, c: parse_num(c, spec)?, x0: x0.to_string() })
            }
            "file" => Ok(PotentialArg::File(PathBuf::from(args))),
            _ => Err(arg_err(format!("bad potential `{spec}` (expected const:, affine: or file:)"))),
        }
    }

    pub fn resolve(&self, g: &WeightedGraph) -> CliResult<PotentialSpec> {
        Ok(match self {
            PotentialArg::Const(h0) => PotentialSpec::Constant { h0: *h0 },
            PotentialArg::Affine { h0, c, x0 } => PotentialSpec::Affine { h0: *h0, c: *c, x0: resolve_vertex(g, x0)? },
            PotentialArg::File(path) => PotentialSpec::Table { values: read_vertex_values(path, g)? },
        })
    }

    fn describe(&self) -> String {
        match self {
            PotentialArg::Const(h0) => format!("const:{h0}"),
            PotentialArg::Affine { h0, c, x0 } => format!("affine:{h0},{c},{x0}"),
            PotentialArg::File(p) => format!("file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerArg {
    pub q: f64,
    pub a: f64,
}

impl PowerArg {
    pub fn parse(spec: &str) -> CliResult<Self> {
        let (kind, args) = split_spec(spec)?;
        let nums = parse_list::<f64>(args, spec)?;
        match (kind, nums.as_slice()) {
            ("power", [q]) => Ok(PowerArg { q: *q, a: 1.0 }),
            ("power", [q, a]) => Ok(PowerArg { q: *q, a: *a }),
            _ => Err(arg_err(format!("bad nonlinearity `{spec}` (expected power:q[,a])"))),
        }
    }

    pub fn spec(&self) -> NonlinearitySpec {
        NonlinearitySpec::power(self.q, self.a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    S,
    P,
    R,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::S => "s",
            SweepParam::P => "p",
            SweepParam::R => "r",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn parse(spec: &str) -> CliResult<Self> {
        let bad = || arg_err(format!("bad sweep `{spec}` (expected s=a:b:step or s=v1,v2,...)"));
        let (name, range) = spec.split_once('=').ok_or_else(bad)?;
        let param = match name.trim() {
            "s" => SweepParam::S,
            "p" => SweepParam::P,
            "r" => SweepParam::R,
            _ => return Err(bad()),
        };
        let values = if range.contains(':') {
            let parts: Vec<&str> = range.split(':').collect();
            let [a, b, step] = parts[..] else { return Err(bad()) };
            let (a, b, step): (f64, f64, f64) = (parse_num(a, spec)?, parse_num(b, spec)?, parse_num(step, spec)?);
            if !step.is_finite() || step <= 0.0 || b < a {
                return Err(bad());
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            // round away the accumulated binary error so 0.1 + 2·0.1 prints as 0.3
            (0..count).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect()
        } else {
            parse_list::<f64>(range, spec)?
        };
        if values.is_empty() {
            return Err(bad());
        }
        if param == SweepParam::R && values.iter().any(|r| *r < 0.0 || r.fract() != 0.0) {
            return Err(arg_err(format!("sweep `{spec}`: radii must be nonnegative integers")));
        }
        Ok(SweepSpec { param, values })
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub graph: GraphSource,
    pub s: f64,
    pub p: f64,
    pub quadrature: bool,
    pub potential: PotentialArg,
    pub nonlinearity: PowerArg,
    pub method: MethodChoice,
    pub tol: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub function: Option<PathBuf>,
    pub phi: Option<PathBuf>,
    pub solution: Option<PathBuf>,
    pub sweep: Option<SweepSpec>,
    pub of: SweptCommand,
    pub center: Option<String>,
}

impl RunConfig {
    pub fn resolve(opts: &Options) -> CliResult<Self> {
        let file = match &opts.config {
            Some(path) => load_file_config(path)?,
            None => FileConfig::default(),
        };
        let graph = match (opts.builder.clone().or(file.builder), opts.graph.clone().or(file.graph)) {
            (Some(b), None) => GraphSource::Builder(Builder::parse(&b)?),
            (None, Some(edges)) => GraphSource::File { edges, measure: opts.measure.clone().or(file.measure) },
            // a flag on one side overrides the other source from the file
            (Some(b), Some(edges)) => match (opts.builder.is_some(), opts.graph.is_some()) {
                (true, false) => GraphSource::Builder(Builder::parse(&b)?),
                (false, true) => GraphSource::File { edges, measure: opts.measure.clone().or(file.measure) },
                _ => return Err(arg_err("give either --graph or --builder, not both")),
            },
            (None, None) => return Err(arg_err("no graph given (use --graph FILE or --builder SPEC)")),
        };
        let s = opts.s.or(file.s).unwrap_or(0.5);
        let p = opts.p.or(file.p).unwrap_or(2.0);
        fracgraph::kernel::check_order(s)?;
        fracgraph::calculus::check_exponent(p)?;
        let tol = opts.tol.or(file.tol).unwrap_or(1e-8);
        if !tol.is_finite() || tol <= 0.0 {
            return Err(arg_err(format!("tolerance must be positive, got {tol}")));
        }
        let potential = match opts.potential.as_deref().or(file.potential.as_deref()) {
            Some(spec) => PotentialArg::parse(spec)?,
            None => PotentialArg::Const(1.0),
        };
        let nonlinearity = match opts.nonlinearity.as_deref().or(file.nonlinearity.as_deref()) {
            Some(spec) => PowerArg::parse(spec)?,
            None => PowerArg { q: 4.0, a: 1.0 },
        };
        let sweep = opts.sweep.as_deref().or(file.sweep.as_deref()).map(SweepSpec::parse).transpose()?;
        Ok(RunConfig {
            graph,
            s,
            p,
            quadrature: opts.quadrature || file.quadrature.unwrap_or(false),
            potential,
            nonlinearity,
            method: opts.method.or(file.method).unwrap_or(MethodChoice::Nehari),
            tol,
            seed: opts.seed.or(file.seed).unwrap_or(0),
            out: opts.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(".")),
            function: opts.function.clone().or(file.function),
            phi: opts.phi.clone().or(file.phi),
            solution: opts.solution.clone().or(file.solution),
            sweep,
            of: opts.of.or(file.of).unwrap_or(SweptCommand::Solve),
            center: opts.center.clone().or(file.center),
        })
    }

    /// Config record written into result files.
    pub fn describe(&self) -> Value {
        json!({
            "graph": self.graph.describe(),
            "s": self.s,
            "p": self.p,
            "kernel": if self.quadrature { "quadrature" } else { "spectral" },
            "potential": self.potential.describe(),
            "nonlinearity": format!("power:{},{}", self.nonlinearity.q, self.nonlinearity.a),
            "tol": self.tol,
            "seed": self.seed,
        })
    }
}

fn load_file_config(path: &Path) -> CliResult<FileConfig> {
    let text = read_file(path)?;
    let mut cfg: FileConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Config { path: path.to_path_buf(), msg: e.to_string() })?;
    // relative paths in the file are relative to the file itself
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut cfg.graph, &mut cfg.measure, &mut cfg.out, &mut cfg.function, &mut cfg.phi, &mut cfg.solution]
        .into_iter()
        .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    if let Some(spec) = cfg.potential.as_mut() {
        if let Some(rest) = spec.strip_prefix("file:") {
            if Path::new(rest).is_relative() {
                *spec = format!("file:{}", base.join(rest).display());
            }
        }
    }
    Ok(cfg)
}

/// A vertex given by label, or by index when no label matches.
pub fn resolve_vertex(g: &WeightedGraph, v: &str) -> CliResult<usize> {
    if let Ok(x) = g.vertex_index(v) {
        return Ok(x);
    }
    match v.parse::<usize>() {
        Ok(x) if x < g.len() => Ok(x),
        _ => Err(fracgraph::Error::UnknownVertex(v.to_string()).into()),
    }
}

/// Reads `label value` lines into a vertex-ordered vector. Every vertex of `g`
/// needs a value; labels outside `g` are skipped so one file can serve every
/// ball of a truncation sweep.
pub fn read_vertex_values(path: &Path, g: &WeightedGraph) -> CliResult<Vec<f64>> {
    let text = read_file(path)?;
    let mut values = vec![None; g.len()];
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line == "vertex,u" {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|f| !f.is_empty()).collect();
        let [label, value] = fields[..] else {
            return Err(fracgraph::Error::Parse {
                line: i + 1,
                msg: format!("expected `vertex value` in {}", path.display()),
            }
            .into());
        };
        let value: f64 = value.parse().map_err(|_| fracgraph::Error::Parse {
            line: i + 1,
            msg: format!("bad number `{value}` in {}", path.display()),
        })?;
        if let Ok(x) = g.vertex_index(label) {
            values[x] = Some(value);
        }
    }
    values
        .into_iter()
        .enumerate()
        .map(|(x, v)| v.ok_or_else(|| arg_err(format!("{}: no value for vertex `{}`", path.display(), g.labels()[x]))))
        .collect()
}

fn split_spec(spec: &str) -> CliResult<(&str, &str)> {
    spec.split_once(':')
        .map(|(k, a)| (k.trim(), a.trim()))
        .ok_or_else(|| arg_err(format!("bad spec `{spec}` (expected kind:args)")))
}

fn parse_num<T: std::str::FromStr>(s: &str, spec: &str) -> CliResult<T> {
    s.trim().parse().map_err(|_| arg_err(format!("bad number `{}` in `{spec}`", s.trim())))
}

fn parse_list<T: std::str::FromStr>(s: &str, spec: &str) -> CliResult<Vec<T>> {
    s.split(',').map(|x| parse_num(x, spec)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builders() {
        assert_eq!(Builder::parse("path:5").unwrap(), Builder::Path(5));
        assert_eq!(Builder::parse("grid:10, 4").unwrap(), Builder::Grid(10, 4));
        assert_eq!(Builder::parse("cycle:6").unwrap().to_string(), "cycle:6");
        for bad in ["path", "path:x", "grid:3", "star:4"] {
            assert!(Builder::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn potentials() {
        assert_eq!(PotentialArg::parse("const:2").unwrap(), PotentialArg::Const(2.0));
        let a = PotentialArg::parse("affine:1,0.5,3_4").unwrap();
        assert_eq!(a, PotentialArg::Affine { h0: 1.0, c: 0.5, x0: "3_4".into() });
        let g = build_grid(5, 5).unwrap();
        assert!(matches!(a.resolve(&g).unwrap(), PotentialSpec::Affine { x0, .. } if g.labels()[x0] == "3_4"));
        let by_index = PotentialArg::parse("affine:1,1,7").unwrap().resolve(&g).unwrap();
        assert!(matches!(by_index, PotentialSpec::Affine { x0: 7, .. }));
        assert!(PotentialArg::parse("affine:1,2").is_err());
        assert!(PotentialArg::parse("quadratic:1").is_err());
        assert!(PotentialArg::parse("affine:1,1,nowhere").unwrap().resolve(&g).is_err());
    }

    #[test]
    fn nonlinearities() {
        assert_eq!(PowerArg::parse("power:4").unwrap(), PowerArg { q: 4.0, a: 1.0 });
        assert_eq!(PowerArg::parse("power:3,0.5").unwrap(), PowerArg { q: 3.0, a: 0.5 });
        assert!(PowerArg::parse("exp:1").is_err());
    }

    #[test]
    fn sweeps() {
        let s = SweepSpec::parse("s=0.1:0.9:0.1").unwrap();
        assert_eq!(s.param, SweepParam::S);
        assert_eq!(s.values.len(), 9);
        assert_eq!(s.values[2], 0.3);
        assert_eq!(s.values[8], 0.9);
        assert_eq!(SweepSpec::parse("r=2:6:1").unwrap().values, vec![2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(SweepSpec::parse("p=2,3").unwrap().values, vec![2.0, 3.0]);
        for bad in ["q=1:2:1", "s=0.9:0.1:0.1", "s=0.1:0.9:0", "r=1.5,2", "s"] {
            assert!(SweepSpec::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("fracgraph-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.json");
        std::fs::write(&path, r#"{"builder": "path:4", "s": 0.3, "seed": 7, "out": "res", "method": "both"}"#).unwrap();
        let opts = Options { config: Some(path.clone()), s: Some(0.6), ..Default::default() };
        let cfg = RunConfig::resolve(&opts).unwrap();
        assert_eq!(cfg.s, 0.6);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.method, MethodChoice::Both);
        assert_eq!(cfg.out, dir.join("res"));
        assert_eq!(cfg.graph, GraphSource::Builder(Builder::Path(4)));
        let opts = Options { config: Some(path.clone()), builder: Some("grid:2,2".into()), ..Default::default() };
        assert_eq!(RunConfig::resolve(&opts).unwrap().graph, GraphSource::Builder(Builder::Grid(2, 2)));
        std::fs::write(&path, r#"{"builder": "path:4", "colour": 1}"#).unwrap();
        let err = RunConfig::resolve(&Options { config: Some(path), ..Default::default() }).unwrap_err();
        assert_eq!(err.category(), "config");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn invalid_parameters() {
        let base = Options { builder: Some("path:3".into()), ..Default::default() };
        assert_eq!(RunConfig::resolve(&Options { s: Some(1.0), ..base.clone() }).unwrap_err().category(), "argument");
        assert_eq!(RunConfig::resolve(&Options { p: Some(1.5), ..base.clone() }).unwrap_err().category(), "argument");
        assert_eq!(RunConfig::resolve(&Options::default()).unwrap_err().category(), "argument");
        let both = Options { graph: Some("g.txt".into()), ..base };
        assert!(RunConfig::resolve(&both).is_err());
    }
}
