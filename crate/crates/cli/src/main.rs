//! `diamag` command line: point evaluations of the kernels, jet tables,
//! expansion estimates, gas series, discrete-box oracles, the
//! thermodynamic-limit study, and the invariant battery.
//!
//! Configuration can come from a file (`--config`, flat `key=value`
//! lines or a JSON object); explicit CLI flags override file values.
//! Exit codes: 0 success, 1 validation error, 2 numerical failure,
//! 3 resource cap.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use diamag::dyson::{assemble_derivative, QuadratureSpec};
use diamag::harness::{
    format_float, provenance_line, run_convergence_study, run_invariant_battery, FdOptionsConfig,
    StudyConfig, SuiteStatus,
};
use diamag::magcore::Point3;
use diamag::mehler::{diag_jet, mehler_kernel, KernelParams};
use diamag::oracle::{
    build_hamiltonian, chi_l_fd, duhamel_residual, ginibre_gruber_check, pressure_l, spectrum,
    spectrum_eigenvalues, BoxSpec, FdOptions,
};
use diamag::thermo::{chi_infty, GasParams};
use diamag::{Error, Result};

#[derive(Parser)]
#[command(name = "diamag", version, about = "Magnetic heat-kernel numerics")]
struct Cli {
    /// RNG seed for all stochastic subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo reduction (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config file: flat key=value lines or a JSON object.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the closed-form kernel (and optionally the box kernel).
    Kernel(KernelArgs),
    /// Diagonal omega-derivative table from jet arithmetic.
    Jet(JetArgs),
    /// Expansion estimate of a diagonal derivative, with error bars.
    Expand(ExpandArgs),
    /// Infinite-volume pressure and susceptibilities.
    Thermo(ThermoArgs),
    /// Discrete-box spectra, pressure, FD susceptibility, Duhamel check.
    Oracle(OracleArgs),
    /// Thermodynamic-limit convergence study.
    Converge(ConvergeArgs),
    /// Invariant battery.
    Check(CheckArgs),
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    /// Comma-separated point "x1,x2,x3".
    #[arg(long)]
    x: Option<String>,
    /// Second point; defaults to x (diagonal).
    #[arg(long)]
    y: Option<String>,
    /// Box side; enables the finite-volume column.
    #[arg(long)]
    side: Option<f64>,
    /// Transverse grid points per dimension for the box kernel.
    #[arg(long)]
    grid: Option<usize>,
    /// Longitudinal modes for the box kernel.
    #[arg(long)]
    modes: Option<usize>,
}

#[derive(Args)]
struct JetArgs {
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    /// Highest derivative order.
    #[arg(long)]
    order: Option<usize>,
}

#[derive(Args)]
struct ExpandArgs {
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    /// Derivative order n.
    #[arg(long)]
    order: Option<usize>,
    /// Monte Carlo samples per expansion term.
    #[arg(long)]
    samples: Option<u64>,
    /// Use deterministic quadrature instead of Monte Carlo.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct ThermoArgs {
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    z: Option<f64>,
    /// +1 Fermi, -1 Bose.
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<i8>,
    /// Comma-separated derivative orders (0 = pressure).
    #[arg(long)]
    orders: Option<String>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    side: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Number of lowest transverse eigenvalues to emit.
    #[arg(long)]
    eigs: Option<usize>,
    /// Fugacity; enables the pressure line.
    #[arg(long)]
    z: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<i8>,
    /// FD susceptibility order; enables the chi line.
    #[arg(long)]
    chi_order: Option<usize>,
    #[arg(long)]
    h_fd: Option<f64>,
    /// Evaluate the boundary Duhamel residual at the origin pair.
    #[arg(long)]
    duhamel: bool,
    /// Run the random trace-norm inequality check with this many trials.
    #[arg(long)]
    gg_trials: Option<usize>,
}

#[derive(Args)]
struct ConvergeArgs {
    /// Comma-separated box sides, ascending.
    #[arg(long)]
    l_list: Option<String>,
    #[arg(long)]
    spacing: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    z: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<i8>,
    /// Comma-separated susceptibility orders (1..=4).
    #[arg(long)]
    orders: Option<String>,
    #[arg(long)]
    h_fd: Option<f64>,
    #[arg(long)]
    richardson: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Sample budget per Monte Carlo suite (0 skips them).
    #[arg(long)]
    budget: Option<u64>,
}

/// Config file contents, flattened to string key/value pairs.
struct Settings(HashMap<String, String>);

impl Settings {
    fn load(path: Option<&PathBuf>) -> Result<Settings> {
        let Some(path) = path else { return Ok(Settings(HashMap::new())) };
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut map = HashMap::new();
        if text.trim_start().starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::Validation(format!("invalid JSON config: {e}")))?;
            let obj = v
                .as_object()
                .ok_or_else(|| Error::Validation("JSON config must be an object".into()))?;
            for (k, v) in obj {
                let s = match v {
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Number(n) => n.to_string(),
                    serde_json::Value::Bool(b) => b.to_string(),
                    serde_json::Value::Array(a) => a
                        .iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                    _ => {
                        return Err(Error::Validation(format!(
                            "config key {k} has an unsupported value type"
                        )))
                    }
                };
                map.insert(k.clone(), s);
            }
        } else {
            for (ln, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::Validation(format!("config line {} is not key=value", ln + 1))
                })?;
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Settings(map))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| Error::Validation(format!("config key {key}: cannot parse {s:?}"))),
        }
    }

    fn f64(&self, cli: Option<f64>, key: &str, default: f64) -> Result<f64> {
        Ok(cli.or(self.parse(key)?).unwrap_or(default))
    }

    fn usize(&self, cli: Option<usize>, key: &str, default: usize) -> Result<usize> {
        Ok(cli.or(self.parse(key)?).unwrap_or(default))
    }

    fn u64(&self, cli: Option<u64>, key: &str, default: u64) -> Result<u64> {
        Ok(cli.or(self.parse(key)?).unwrap_or(default))
    }

    fn i8(&self, cli: Option<i8>, key: &str, default: i8) -> Result<i8> {
        Ok(cli.or(self.parse(key)?).unwrap_or(default))
    }

    fn list(&self, cli: Option<&String>, key: &str) -> Option<String> {
        cli.cloned().or_else(|| self.0.get(key).cloned())
    }
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Validation(format!("{what}: cannot parse {p:?}")))
        })
        .collect()
}

fn parse_usize_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Validation(format!("{what}: cannot parse {p:?}")))
        })
        .collect()
}

fn parse_point(s: &str) -> Result<Point3> {
    let v = parse_f64_list(s, "point")?;
    if v.len() != 3 {
        return Err(Error::Validation(format!("point needs 3 coordinates, got {}", v.len())));
    }
    Ok(Point3::new(v[0], v[1], v[2]))
}

fn emit(out: Option<&PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Settings::load(cli.config.as_ref())?;
    let seed = cfg.u64(cli.seed, "seed", 0)?;
    let workers = cfg.usize(cli.workers, "workers", 0)?;
    let out = cli.out.clone().or_else(|| cfg.0.get("out").map(PathBuf::from));

    match &cli.cmd {
        Cmd::Kernel(a) => {
            let beta = cfg.f64(a.beta, "beta", 1.0)?;
            let omega = cfg.f64(a.omega, "omega", 0.0)?;
            let p = KernelParams::new(beta, omega)?;
            let xs = cfg.list(a.x.as_ref(), "x").unwrap_or_else(|| "0,0,0".into());
            let x = parse_point(&xs)?;
            let y = match cfg.list(a.y.as_ref(), "y") {
                Some(s) => parse_point(&s)?,
                None => x,
            };
            let g = mehler_kernel(x, y, p);
            let mut csv = provenance_line(seed, &format!("kernel beta={beta} omega={omega}"));
            csv.push('\n');
            if let Some(side) = a.side.or(cfg.parse("side")?) {
                let grid = cfg.usize(a.grid, "grid", 32)?;
                let modes = cfg.usize(a.modes, "modes", 40)?;
                let b = BoxSpec::new(side, grid, modes)?;
                let s = spectrum(&build_hamiltonian(&b, omega)?)?;
                let gl = diamag::oracle::kernel_l(&s, x, y, p)?;
                csv.push_str("beta,omega,G_inf_re,G_inf_im,G_L_re,G_L_im\n");
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    beta,
                    omega,
                    format_float(g.re),
                    format_float(g.im),
                    format_float(gl.re),
                    format_float(gl.im)
                ));
            } else {
                csv.push_str("beta,omega,G_inf_re,G_inf_im\n");
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    beta,
                    omega,
                    format_float(g.re),
                    format_float(g.im)
                ));
            }
            emit(out.as_ref(), &csv)
        }
        Cmd::Jet(a) => {
            let beta = cfg.f64(a.beta, "beta", 1.0)?;
            let omega = cfg.f64(a.omega, "omega", 0.0)?;
            let order = cfg.usize(a.order, "order", 4)?;
            let p = KernelParams::new(beta, omega)?;
            let jet = diag_jet(order, p)?;
            let mut csv = provenance_line(seed, &format!("jet beta={beta} omega={omega} order={order}"));
            csv.push('\n');
            csv.push_str("n,coefficient,derivative\n");
            for n in 0..=order {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    n,
                    format_float(jet.coefficients[n]),
                    format_float(jet.derivative(n))
                ));
            }
            emit(out.as_ref(), &csv)
        }
        Cmd::Expand(a) => {
            let beta = cfg.f64(a.beta, "beta", 1.0)?;
            let omega = cfg.f64(a.omega, "omega", 0.0)?;
            let order = cfg.usize(a.order, "order", 2)?;
            let samples = cfg.u64(a.samples, "samples", 100_000)?;
            let p = KernelParams::new(beta, omega)?;
            let q = if a.deterministic {
                QuadratureSpec::deterministic()
            } else {
                let mut q = QuadratureSpec::mc(samples, seed);
                q.worker_count = workers;
                q
            };
            let r = assemble_derivative(order, p, &q)?;
            let jet_ref = diag_jet(order, p)?.derivative(order);
            let mut csv = provenance_line(
                seed,
                &format!("expand beta={beta} omega={omega} order={order} samples={samples}"),
            );
            csv.push('\n');
            csv.push_str("order,value,std_error,imag,imag_std_error,samples,jet_reference\n");
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                order,
                format_float(r.value),
                format_float(r.std_error),
                format_float(r.imag_value),
                format_float(r.imag_std_error),
                r.terms_evaluated,
                format_float(jet_ref)
            ));
            emit(out.as_ref(), &csv)
        }
        Cmd::Thermo(a) => {
            let beta = cfg.f64(a.beta, "beta", 1.0)?;
            let omega = cfg.f64(a.omega, "omega", 0.0)?;
            let z = cfg.f64(a.z, "z", 0.5)?;
            let eps = cfg.i8(a.eps, "eps", 1)?;
            let g = GasParams::new(beta, omega, z, eps)?;
            let orders = match cfg.list(a.orders.as_ref(), "orders") {
                Some(s) => parse_usize_list(&s, "orders")?,
                None => vec![0, 1, 2],
            };
            let mut csv = provenance_line(
                seed,
                &format!("thermo beta={beta} omega={omega} z={z} eps={eps}"),
            );
            csv.push('\n');
            csv.push_str("n,value,tail_bound,terms\n");
            for &n in &orders {
                let r = chi_infty(n, &g)?;
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    n,
                    format_float(r.value),
                    format_float(r.tail_bound),
                    r.terms
                ));
            }
            emit(out.as_ref(), &csv)
        }
        Cmd::Oracle(a) => {
            let side = cfg.f64(a.side, "side", 6.0)?;
            let grid = cfg.usize(a.grid, "grid", 24)?;
            let modes = cfg.usize(a.modes, "modes", 40)?;
            let omega = cfg.f64(a.omega, "omega", 0.0)?;
            let beta = cfg.f64(a.beta, "beta", 1.0)?;
            let b = BoxSpec::new(side, grid, modes)?;
            let mut body = provenance_line(
                seed,
                &format!("oracle side={side} grid={grid} modes={modes} omega={omega}"),
            );
            body.push('\n');
            if let Some(trials) = a.gg_trials.or(cfg.parse("gg_trials")?) {
                let rep = ginibre_gruber_check(trials, 8, seed)?;
                body.push_str("trials,max_ratio,violations\n");
                body.push_str(&format!(
                    "{},{},{}\n",
                    rep.trials,
                    format_float(rep.max_ratio),
                    rep.violations
                ));
                return emit(out.as_ref(), &body);
            }
            if a.duhamel {
                let p = KernelParams::new(beta, omega)?;
                let x = Point3::new(0.2, -0.1, 0.3);
                let rep = duhamel_residual(&b, x, x, p)?;
                body.push_str("lhs_re,lhs_im,rhs_re,rhs_im,relative_residual\n");
                body.push_str(&format!(
                    "{},{},{},{},{}\n",
                    format_float(rep.lhs.re),
                    format_float(rep.lhs.im),
                    format_float(rep.rhs.re),
                    format_float(rep.rhs.im),
                    format_float(rep.relative_residual)
                ));
                return emit(out.as_ref(), &body);
            }
            if let Some(n) = a.chi_order.or(cfg.parse("chi_order")?) {
                let z = cfg.f64(a.z, "z", 0.5)?;
                let eps = cfg.i8(a.eps, "eps", 1)?;
                let h_fd = cfg.f64(a.h_fd, "h_fd", 0.05)?;
                let r = chi_l_fd(&b, n, beta, z, eps, omega, FdOptions { h_fd, richardson: true })?;
                body.push_str("n,chi_L,fd_error,eigensolves\n");
                body.push_str(&format!(
                    "{},{},{},{}\n",
                    n,
                    format_float(r.value),
                    format_float(r.fd_error),
                    r.evaluations
                ));
                return emit(out.as_ref(), &body);
            }
            let s = spectrum_eigenvalues(&build_hamiltonian(&b, omega)?)?;
            if let Some(z) = a.z.or(cfg.parse("z")?) {
                let eps = cfg.i8(a.eps, "eps", 1)?;
                let p = pressure_l(&s, beta, z, eps)?;
                body.push_str("beta,z,eps,P_L\n");
                body.push_str(&format!("{},{},{},{}\n", beta, z, eps, format_float(p)));
                return emit(out.as_ref(), &body);
            }
            let count = cfg.usize(a.eigs, "eigs", 10)?.min(s.eigenvalues().len());
            body.push_str("index,eigenvalue\n");
            for (i, &e) in s.eigenvalues().iter().take(count).enumerate() {
                body.push_str(&format!("{},{}\n", i, format_float(e)));
            }
            emit(out.as_ref(), &body)
        }
        Cmd::Converge(a) => {
            let l_list = match cfg.list(a.l_list.as_ref(), "l_list") {
                Some(s) => parse_f64_list(&s, "l_list")?,
                None => vec![4.0, 6.0, 8.0],
            };
            let orders = match cfg.list(a.orders.as_ref(), "orders") {
                Some(s) => parse_usize_list(&s, "orders")?,
                None => vec![1],
            };
            let gas = GasParams::new(
                cfg.f64(a.beta, "beta", 1.0)?,
                cfg.f64(a.omega, "omega", 1.0)?,
                cfg.f64(a.z, "z", 0.5)?,
                cfg.i8(a.eps, "eps", 1)?,
            )?;
            let fd = FdOptionsConfig {
                h_fd: cfg.f64(a.h_fd, "h_fd", 0.05)?,
                richardson: a.richardson || cfg.parse::<bool>("richardson")?.unwrap_or(false),
            };
            let c = StudyConfig {
                l_list,
                spacing: cfg.f64(a.spacing, "spacing", 0.25)?,
                gas,
                orders,
                fd,
                seed,
                output: out.clone(),
            };
            let rep = run_convergence_study(&c)?;
            if out.is_none() {
                print!("{}", rep.csv);
            }
            eprintln!(
                "pressure slope {:.4} +/- {:.4}",
                rep.pressure_rate.slope, rep.pressure_rate.std_error
            );
            for (n, fit) in &rep.chi_rates {
                eprintln!("chi{} slope {:.4} +/- {:.4}", n, fit.slope, fit.std_error);
            }
            Ok(())
        }
        Cmd::Check(a) => {
            let budget = cfg.u64(a.budget, "budget", 10_000)?;
            let rep = run_invariant_battery(seed, budget);
            for s in &rep.suites {
                let status = match s.status {
                    SuiteStatus::Pass => "pass",
                    SuiteStatus::Fail => "FAIL",
                    SuiteStatus::Skipped => "skipped",
                };
                println!(
                    "{:<18} {:<8} max_dev={:.3e} samples={} {}",
                    s.name, status, s.max_deviation, s.samples, s.detail
                );
            }
            if let Some(path) = &out {
                let json = serde_json::to_string_pretty(&rep)
                    .map_err(|e| Error::Numerical(format!("report serialization: {e}")))?;
                fs::write(path, json)
                    .map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display())))?;
            }
            if rep.passed() {
                Ok(())
            } else {
                Err(Error::Numerical("invariant battery failed".into()))
            }
        }
    }
}
