use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fracgraph::calculus::{
    frac_gradient, frac_length, frac_p_laplacian, rayleigh_lambda, sobolev_norm, verify_parts_identity,
};
use fracgraph::kernel::{assemble_kernel_quadrature, assemble_kernel_spectral, kernel_row_sums};
use fracgraph::spectral::{estimate_ax, spectral_decompose};
use fracgraph::variational::{ground_state_solve, mountain_pass_solve, u_from_json, verify_solution};
use fracgraph::{
    fmt_f64, FracKernel, MountainPassConfig, NehariConfig, ProblemSpec, QuadConfig, RayleighConfig, SolutionReport,
    VertexFunction, WeightedGraph,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{
    read_vertex_values, resolve_vertex, MethodChoice, PotentialArg, RunConfig, SweepParam, SweptCommand,
};
use crate::error::{arg_err, read_file, write_file, CliError, CliResult};

/// Lines for `run.log`; echoed to stdout for top-level commands.
#[derive(Default)]
pub struct Log(Vec<String>);

impl Log {
    pub fn line(&mut self, s: impl Into<String>) {
        self.0.push(s.into());
    }

    fn text(&self) -> String {
        self.0.iter().map(|l| format!("{l}\n")).collect()
    }

    pub fn echo(&self) {
        for l in &self.0 {
            println!("{l}");
        }
    }
}

/// Numbers a command reports to a sweep row, in the order of [`metric_names`].
type Metrics = Vec<String>;

pub fn metric_names(of: SweptCommand, method: MethodChoice) -> Vec<&'static str> {
    match of {
        SweptCommand::Kernel => vec!["max_weight", "max_row_sum", "rowsum_pass"],
        SweptCommand::Lambda => vec!["lambda", "certificate"],
        SweptCommand::Solve => {
            let mut v = vec!["energy", "pointwise_residual", "min_u", "iterations"];
            if method == MethodChoice::Both {
                v.push("mountain_pass_energy");
            }
            v
        }
    }
}

fn create_out(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })
}

fn finish_log(out: &Path, cfg: &RunConfig, command: &str, log: &mut Log) -> CliResult<()> {
    let mut head = Log::default();
    head.line(format!("command={command}"));
    head.line(format!("config={}", cfg.describe()));
    head.0.append(&mut log.0);
    *log = head;
    write_file(&out.join("run.log"), &log.text())
}

fn kernel_for(cfg: &RunConfig, g: &WeightedGraph) -> CliResult<(fracgraph::SpectralData, FracKernel)> {
    let sd = spectral_decompose(g)?;
    let k = if cfg.quadrature {
        assemble_kernel_quadrature(&sd, cfg.s, &QuadConfig::default())?
    } else {
        assemble_kernel_spectral(&sd, cfg.s)?
    };
    Ok((sd, k))
}

fn problem_for(cfg: &RunConfig, g: &WeightedGraph) -> CliResult<ProblemSpec> {
    let (_, k) = kernel_for(cfg, g)?;
    Ok(ProblemSpec::new(k, cfg.p, cfg.potential.resolve(g)?, cfg.nonlinearity.spec())?)
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values always serialize");
    s.push('\n');
    s
}

/// `{"config": …}` followed by the entries of `body`.
fn with_config(cfg: &RunConfig, body: Value) -> Value {
    let mut map = Map::new();
    map.insert("config".into(), cfg.describe());
    if let Value::Object(b) = body {
        map.extend(b);
    }
    Value::Object(map)
}

pub fn kernel(cfg: &RunConfig, g: &WeightedGraph, out: &Path, log: &mut Log) -> CliResult<Metrics> {
    let (sd, k) = kernel_for(cfg, g)?;
    let bounds = (0..g.len()).map(|x| estimate_ax(&sd, x)).collect::<fracgraph::Result<Vec<_>>>()?;
    let rows = kernel_row_sums(&k, &bounds)?;
    write_file(&out.join("kernel.csv"), &k.to_csv())?;
    let mut csv = String::from("vertex,row_sum,bound,pass,a_x,sampled_sup\n");
    for (r, b) in rows.iter().zip(&bounds) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            g.labels()[r.vertex],
            fmt_f64(r.row_sum),
            fmt_f64(r.bound),
            r.pass,
            fmt_f64(b.a_x),
            fmt_f64(b.sampled_sup)
        );
    }
    write_file(&out.join("rowsums.csv"), &csv)?;
    let max_w = k.matrix().iter().fold(0.0f64, |a, &b| a.max(b));
    let max_row = rows.iter().fold(0.0f64, |a, r| a.max(r.row_sum));
    let pass = rows.iter().all(|r| r.pass);
    log.line(format!("kernel: n={} provenance={} s={}", g.len(), k.provenance(), cfg.s));
    log.line(format!("max_weight={} max_row_sum={} rowsum_pass={pass}", fmt_f64(max_w), fmt_f64(max_row)));
    Ok(vec![fmt_f64(max_w), fmt_f64(max_row), pass.to_string()])
}

pub fn operators(cfg: &RunConfig, g: &WeightedGraph, out: &Path, log: &mut Log) -> CliResult<Metrics> {
    let path = cfg.function.as_ref().ok_or_else(|| arg_err("operators needs --function FILE"))?;
    let u = VertexFunction::from_vec(read_vertex_values(path, g)?);
    let phi = match &cfg.phi {
        Some(p) => VertexFunction::from_vec(read_vertex_values(p, g)?),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            VertexFunction::from_fn(g.len(), |_, _| rng.random_range(-1.0..1.0))
        }
    };
    let (_, k) = kernel_for(cfg, g)?;
    let grad = frac_gradient(&k, &u)?;
    let len = frac_length(&k, &u)?;
    let lap = frac_p_laplacian(&k, &u, cfg.p)?;
    let parts = verify_parts_identity(&k, &u, &phi, cfg.p)?;
    let norm = sobolev_norm(&k, &u, cfg.p, None)?;

    let labels = g.labels();
    let mut csv = String::from("vertex,u,phi,grad_length,p_laplacian\n");
    for x in 0..g.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            labels[x],
            fmt_f64(u[x]),
            fmt_f64(phi[x]),
            fmt_f64(len[x]),
            fmt_f64(lap[x])
        );
    }
    write_file(&out.join("operators.csv"), &csv)?;
    let mut csv = String::from("x,y,grad\n");
    for x in 0..g.len() {
        for y in 0..g.len() {
            if x != y && k.get(x, y) > 0.0 {
                let _ = writeln!(csv, "{},{},{}", labels[x], labels[y], fmt_f64(grad.0[(x, y)]));
            }
        }
    }
    write_file(&out.join("gradient.csv"), &csv)?;
    let doc = json!({
        "lhs": parts.lhs,
        "rhs": parts.rhs,
        "residual": parts.residual,
        "scale": parts.scale(),
        "sobolev_norm": norm,
    });
    write_file(&out.join("parts.json"), &pretty(&with_config(cfg, doc)))?;
    log.line(format!(
        "parts: lhs={} rhs={} residual={}",
        fmt_f64(parts.lhs),
        fmt_f64(parts.rhs),
        fmt_f64(parts.residual)
    ));
    log.line(format!("sobolev_norm={}", fmt_f64(norm.total)));
    Ok(vec![fmt_f64(parts.residual)])
}

pub fn lambda(cfg: &RunConfig, g: &WeightedGraph, out: &Path, log: &mut Log) -> CliResult<Metrics> {
    let spec = problem_for(cfg, g)?;
    let rc = RayleighConfig { seed: cfg.seed, ..RayleighConfig::default() };
    let est = rayleigh_lambda(spec.kernel(), spec.h(), cfg.p, &rc)?;
    let assumptions = spec.assumptions(Some(est.clone()));
    let certificate = serde_json::to_value(est.certificate).expect("enum serializes");
    let doc = json!({
        "lambda": est.value,
        "certificate": certificate,
        "p2_reference": est.p2_reference,
        "start_values": est.start_values,
        "assumptions": assumptions,
        "certified": assumptions.certified(),
    });
    write_file(&out.join("lambda.json"), &pretty(&with_config(cfg, doc)))?;
    let cert = certificate.as_str().unwrap_or_default().to_string();
    log.line(format!("lambda_p={} certificate={cert} p2_reference={}", fmt_f64(est.value), fmt_f64(est.p2_reference)));
    log.line(format!("assumptions certified={}", assumptions.certified()));
    Ok(vec![fmt_f64(est.value), cert])
}

fn write_solution(cfg: &RunConfig, out: &Path, stem: &str, rep: &SolutionReport) -> CliResult<()> {
    write_file(&out.join(format!("{stem}.json")), &pretty(&with_config(cfg, rep.to_json())))?;
    write_file(&out.join(format!("{stem}.csv")), &rep.to_csv())
}

fn log_report(log: &mut Log, rep: &SolutionReport) {
    log.line(format!(
        "{}: energy={} pointwise_residual={} weak_residual={} min_u={} iterations={} converged={}",
        rep.method,
        fmt_f64(rep.energy),
        fmt_f64(rep.pointwise_residual),
        fmt_f64(rep.weak_residual),
        fmt_f64(rep.min_u),
        rep.iterations,
        rep.converged
    ));
}

pub fn solve(cfg: &RunConfig, g: &WeightedGraph, out: &Path, log: &mut Log) -> CliResult<Metrics> {
    let spec = problem_for(cfg, g)?;
    let assumptions = spec.assumptions(None);
    if !assumptions.certified() {
        log.line(format!(
            "warning: structural assumptions not all met: {}",
            serde_json::to_string(&assumptions).unwrap_or_default()
        ));
    }
    let ncfg = NehariConfig { tol: cfg.tol, seed: cfg.seed, ..NehariConfig::default() };
    let mcfg = MountainPassConfig { tol: cfg.tol, seed: cfg.seed, ..MountainPassConfig::default() };
    let (main, mp) = match cfg.method {
        MethodChoice::Nehari => (ground_state_solve(&spec, &ncfg)?, None),
        MethodChoice::Mountainpass => (mountain_pass_solve(&spec, &mcfg)?, None),
        MethodChoice::Both => (ground_state_solve(&spec, &ncfg)?, Some(mountain_pass_solve(&spec, &mcfg)?)),
    };
    write_solution(cfg, out, "solution", &main)?;
    log_report(log, &main);
    if !main.starts.is_empty() {
        let energies: Vec<String> = main.starts.iter().map(|s| fmt_f64(s.energy)).collect();
        log.line(format!("start energies: {}", energies.join(" ")));
    }
    let mut metrics =
        vec![fmt_f64(main.energy), fmt_f64(main.pointwise_residual), fmt_f64(main.min_u), main.iterations.to_string()];
    if let Some(mp) = mp {
        write_solution(cfg, out, "mountain_pass", &mp)?;
        log_report(log, &mp);
        let rel = (mp.energy - main.energy).abs() / main.energy.abs();
        log.line(format!("level agreement: relative difference {}", fmt_f64(rel)));
        metrics.push(fmt_f64(mp.energy));
    }
    Ok(metrics)
}

pub fn verify(cfg: &RunConfig, g: &WeightedGraph, out: &Path, log: &mut Log) -> CliResult<Metrics> {
    let path = cfg.solution.as_ref().ok_or_else(|| arg_err("verify needs --solution FILE"))?;
    let doc: Value = serde_json::from_str(&read_file(path)?).map_err(fracgraph::Error::from)?;
    let u = u_from_json(&doc, g)?;
    let spec = problem_for(cfg, g)?;
    let rep = verify_solution(&spec, &u, cfg.tol)?;
    write_file(&out.join("verify.json"), &pretty(&with_config(cfg, rep.to_json())))?;
    log_report(log, &rep);
    if !rep.converged {
        return Err(CliError::Verification(format!(
            "stored solution fails: pointwise residual {:.3e}, weak residual {:.3e}, min u {:.3e} (tol {:.1e})",
            rep.pointwise_residual, rep.weak_residual, rep.min_u, cfg.tol
        )));
    }
    Ok(vec![fmt_f64(rep.pointwise_residual)])
}

fn run_swept(cfg: &RunConfig, g: &WeightedGraph, out: &Path, log: &mut Log) -> CliResult<Metrics> {
    match cfg.of {
        SweptCommand::Kernel => kernel(cfg, g, out, log),
        SweptCommand::Lambda => lambda(cfg, g, out, log),
        SweptCommand::Solve => solve(cfg, g, out, log),
    }
}

fn sweep_center(cfg: &RunConfig, g: &WeightedGraph) -> CliResult<usize> {
    match (&cfg.center, &cfg.potential) {
        (Some(c), _) => resolve_vertex(g, c),
        (None, PotentialArg::Affine { x0, .. }) => resolve_vertex(g, x0),
        (None, _) => Ok(0),
    }
}

pub fn sweep(cfg: &RunConfig, g: &WeightedGraph, out: &Path, log: &mut Log) -> CliResult<Metrics> {
    let spec = cfg.sweep.as_ref().ok_or_else(|| arg_err("sweep needs --sweep SPEC"))?;
    let center = sweep_center(cfg, g)?;
    let name = spec.param.name();
    let cases: Vec<(f64, PathBuf)> =
        spec.values.iter().map(|&v| (v, out.join("cases").join(format!("{name}={v}")))).collect();
    let results: Vec<(usize, CliResult<Metrics>)> = cases
        .par_iter()
        .map(|(v, dir)| {
            let mut c = cfg.clone();
            let graph = match spec.param {
                SweepParam::S => {
                    c.s = *v;
                    Ok(g.clone())
                }
                SweepParam::P => {
                    c.p = *v;
                    Ok(g.clone())
                }
                SweepParam::R => g.ball_subgraph(center, *v as usize).map_err(CliError::from),
            };
            let graph = match graph {
                Ok(g) => g,
                Err(e) => return (0, Err(e)),
            };
            let n = graph.len();
            let mut case_log = Log::default();
            let res = create_out(dir)
                .and_then(|_| run_swept(&c, &graph, dir, &mut case_log))
                .and_then(|m| finish_log(dir, &c, &format!("{:?}", c.of).to_lowercase(), &mut case_log).map(|_| m));
            (n, res)
        })
        .collect();

    let names = metric_names(cfg.of, cfg.method);
    let mut csv = format!("{name},vertices,status,{}\n", names.join(","));
    let mut failed = 0;
    for ((v, _), (n, res)) in cases.iter().zip(&results) {
        match res {
            Ok(m) => {
                let _ = writeln!(csv, "{v},{n},ok,{}", m.join(","));
            }
            Err(e) => {
                failed += 1;
                log.line(format!("case {name}={v}: {}", e.line()));
                let _ = writeln!(csv, "{v},{n},error:{}{}", e.category(), ",".repeat(names.len()));
            }
        }
    }
    write_file(&out.join("sweep.csv"), &csv)?;
    log.line(format!("sweep {name} over {} cases, {failed} failed", cases.len()));
    if failed > 0 {
        return Err(CliError::Sweep { failed, total: cases.len() });
    }
    Ok(Vec::new())
}

type CommandFn = fn(&RunConfig, &WeightedGraph, &Path, &mut Log) -> CliResult<Metrics>;

/// Runs one top-level command: loads the graph, runs, writes `run.log` (also on failure).
pub fn run(name: &str, f: CommandFn, cfg: &RunConfig) -> CliResult<()> {
    create_out(&cfg.out)?;
    let mut log = Log::default();
    let res = cfg.graph.load().and_then(|g| {
        log.line(format!("graph: {} vertices, {} edges", g.len(), g.edge_count()));
        f(cfg, &g, &cfg.out, &mut log)
    });
    if let Err(e) = &res {
        log.line(e.line());
    }
    finish_log(&cfg.out, cfg, name, &mut log)?;
    if res.is_ok() {
        log.echo();
    }
    res.map(|_| ())
}
