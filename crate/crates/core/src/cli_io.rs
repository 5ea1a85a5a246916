//! Command-line front end: configuration, file formats, reports.
//!
//! Every JSON file carries a `schema` field; every check in a report carries
//! the tolerance it was judged against. Output is deterministic for a given
//! configuration and seed.

use crate::elliptic;
use crate::error::{HillError, Result};
use crate::finite_gap::{self, Periodicity};
use crate::floquet;
use crate::kdv::{self, EvolveOptions, KdVField, KdVHistory};
use crate::ode_core::{Hill, PeriodicPotential};
use crate::products::{RHPData, TailMode};
use crate::rhp_verify;
use crate::spectrum::{self, SpectralData, SpectrumOptions};
use crate::C64;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: &str = "hillspec/1";

/// Exit status: all checks passed.
pub const EXIT_OK: i32 = 0;
/// A configured check failed.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Configuration or I/O error.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hillspec", version, about = "Spectral theory of periodic Hill operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Report path (default `<out>/<command>.json`).
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Seed for randomised test points.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Product truncation `N_trunc`.
    #[arg(long, global = true, default_value_t = 200)]
    pub n_trunc: usize,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "HILLSPEC_THREADS")]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub tol: TolArgs,
}

/// `--tol-*` overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct TolArgs {
    #[arg(long, global = true)]
    pub tol_floquet: Option<f64>,
    #[arg(long, global = true)]
    pub tol_products: Option<f64>,
    #[arg(long, global = true)]
    pub tol_jump: Option<f64>,
    #[arg(long, global = true)]
    pub tol_det: Option<f64>,
    #[arg(long, global = true)]
    pub tol_recon: Option<f64>,
    #[arg(long, global = true)]
    pub tol_drift: Option<f64>,
    #[arg(long, global = true)]
    pub tol_dubrovin: Option<f64>,
    #[arg(long, global = true)]
    pub tol_kdv: Option<f64>,
    #[arg(long, global = true)]
    pub tol_periodicity: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Tail {
    Free,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Which {
    Space,
    Time,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
pub enum Command {
    /// Discriminant on a real λ grid (band diagram).
    Floquet {
        #[arg(long)]
        potential: String,
        /// `lo:hi:n`.
        #[arg(long, default_value = "-5:50:400")]
        lambda_grid: String,
    },
    /// Spectral data `{λ_n, μ_n, σ_n}`.
    Forward {
        #[arg(long)]
        potential: String,
        #[arg(long, default_value_t = 12)]
        n_max: usize,
        #[arg(long, default_value_t = 400)]
        band_points: usize,
    },
    /// Hadamard products against the direct ODE values.
    Products {
        #[arg(long)]
        potential: String,
        #[arg(long, default_value_t = 20)]
        n_max: usize,
        #[arg(long, value_enum, default_value_t = Tail::Free)]
        tail: Tail,
        #[arg(long, default_value_t = 50.0)]
        radius: f64,
        #[arg(long, default_value_t = 16)]
        points: usize,
    },
    /// Admissibility of spectral data and, given the potential, the RHP
    /// verification suite.
    VerifyRhp {
        #[arg(long)]
        sigma: Option<PathBuf>,
        #[arg(long)]
        potential: Option<String>,
        #[arg(long, default_value_t = 12)]
        n_max: usize,
        /// `x` positions as fractions of the period.
        #[arg(long, value_delimiter = ',', default_value = "0,0.3,0.7")]
        x: Vec<f64>,
        #[arg(long, default_value_t = 6)]
        samples: usize,
    },
    /// KdV flow of the data: reference field, Dirichlet trajectories, edge
    /// drift.
    Evolve {
        #[arg(long)]
        potential: String,
        #[arg(long, default_value_t = 0.1)]
        t_end: f64,
        #[arg(long, default_value_t = 5)]
        checkpoints: usize,
        #[arg(long, default_value_t = 3)]
        n_gaps: usize,
        #[arg(long, default_value_t = 128)]
        grid: usize,
        #[arg(long, default_value_t = 40000)]
        steps_per_unit: usize,
    },
    /// Its–Matveev potential on an `x` grid.
    Theta {
        #[arg(long, value_delimiter = ',')]
        edges: Vec<f64>,
        /// Divisor `μ:sheet` per gap (default: lower gap edges).
        #[arg(long, value_delimiter = ',')]
        gaps: Vec<String>,
        #[arg(long, default_value = "0:6.283185307179586:64")]
        x_grid: String,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
    },
    /// Commensurability search and `r`-function certificate.
    Periodicity {
        #[arg(long, value_delimiter = ',')]
        edges: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Which::Space)]
        which: Which,
        #[arg(long, default_value_t = 1e-8)]
        search_tol: f64,
    },
    /// Invariant suites on `u ≡ 0` and a genus-1 curve.
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Floquet { .. } => "floquet",
            Command::Forward { .. } => "forward",
            Command::Products { .. } => "products",
            Command::VerifyRhp { .. } => "verify-rhp",
            Command::Evolve { .. } => "evolve",
            Command::Theta { .. } => "theta",
            Command::Periodicity { .. } => "periodicity",
            Command::Selftest => "selftest",
        }
    }
}

/// Validated run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub tolerances: BTreeMap<String, f64>,
    pub n_trunc: usize,
    pub out: PathBuf,
    pub report: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
}

fn default_tolerances() -> BTreeMap<String, f64> {
    [
        ("floquet", 1e-9),
        ("products", 1e-4),
        ("jump", rhp_verify::JUMP_TOL),
        ("det", rhp_verify::DET_TOL),
        ("edge_exponent", rhp_verify::EDGE_EXPONENT_MAX),
        ("recon", rhp_verify::RECONSTRUCTION_TOL),
        ("drift", 1e-5),
        ("dubrovin", 1e-5),
        ("kdv", 1e-6),
        ("periodicity", 1e-7),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self> {
        let mut tolerances = default_tolerances();
        let t = &cli.tol;
        for (k, v) in [
            ("floquet", t.tol_floquet),
            ("products", t.tol_products),
            ("jump", t.tol_jump),
            ("det", t.tol_det),
            ("recon", t.tol_recon),
            ("drift", t.tol_drift),
            ("dubrovin", t.tol_dubrovin),
            ("kdv", t.tol_kdv),
            ("periodicity", t.tol_periodicity),
        ] {
            if let Some(v) = v {
                tolerances.insert(k.into(), v);
            }
        }
        let cfg = Self {
            command: cli.command,
            tolerances,
            n_trunc: cli.n_trunc,
            out: cli.out,
            report: cli.report,
            seed: cli.seed,
            threads: cli.threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((k, v)) = self.tolerances.iter().find(|(_, v)| !(**v > 0.0)) {
            return Err(HillError::Config(format!("tolerance {k} = {v} must be positive")));
        }
        if self.n_trunc == 0 {
            return Err(HillError::Config("n_trunc must be positive".into()));
        }
        match &self.command {
            Command::Floquet { lambda_grid, .. } => {
                parse_grid(lambda_grid)?;
            }
            Command::Theta { x_grid, edges, .. } => {
                parse_grid(x_grid)?;
                nonempty(edges, "edges")?;
            }
            Command::Periodicity { edges, .. } => nonempty(edges, "edges")?,
            Command::VerifyRhp { sigma, potential, x, .. } => {
                if sigma.is_none() && potential.is_none() {
                    return Err(HillError::Config("verify-rhp needs --sigma or --potential".into()));
                }
                nonempty(x, "x")?;
            }
            Command::Evolve { checkpoints, t_end, .. } => {
                if *checkpoints == 0 || !(*t_end > 0.0) {
                    return Err(HillError::Config("evolve needs t_end > 0 and checkpoints ≥ 1".into()));
                }
            }
            Command::Products { points, .. } if *points == 0 => {
                return Err(HillError::Config("products needs points ≥ 1".into()))
            }
            _ => {}
        }
        Ok(())
    }

    fn tol(&self, name: &str) -> f64 {
        self.tolerances[name]
    }
}

fn nonempty<T>(v: &[T], what: &str) -> Result<()> {
    if v.is_empty() {
        Err(HillError::Config(format!("{what} must be nonempty")))
    } else {
        Ok(())
    }
}

/// `lo:hi:n` → `n` equispaced points (`n ≥ 1`).
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || HillError::Config(format!("grid {s:?} is not lo:hi:n"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect())
}

/// Potential file format (`kind`-tagged JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    Zero { period: f64 },
    Constant { period: f64, value: f64 },
    /// `2q cos 2x`, period π.
    Mathieu { q: f64 },
    Lame1 { m: f64, period: f64, #[serde(default)] translate: f64 },
    Lame2 { m: f64, period: f64, #[serde(default)] translate: f64 },
    /// Non-negative Fourier modes `[re, im]`.
    Modes { period: f64, coeffs: Vec<[f64; 2]> },
    /// Uniform samples `u(jT/M)`.
    Samples { period: f64, values: Vec<f64> },
}

impl PotentialSpec {
    pub fn build(&self) -> Result<PeriodicPotential> {
        Ok(match self {
            PotentialSpec::Zero { period } => PeriodicPotential::zero(*period),
            PotentialSpec::Constant { period, value } => PeriodicPotential::constant(*period, *value),
            PotentialSpec::Mathieu { q } => PeriodicPotential::mathieu(*q),
            PotentialSpec::Lame1 { m, period, translate } => elliptic::lame1(*m, *period).0.translated(*translate),
            PotentialSpec::Lame2 { m, period, translate } => elliptic::lame2(*m, *period).0.translated(*translate),
            PotentialSpec::Modes { period, coeffs } => {
                PeriodicPotential::new(*period, coeffs.iter().map(|c| C64::new(c[0], c[1])).collect())?
            }
            PotentialSpec::Samples { period, values } => PeriodicPotential::from_samples(*period, values)?,
        })
    }

    /// A file path, or a shorthand `zero[:T]`, `mathieu:q`, `lame1:m[:T]`,
    /// `lame2:m[:T]`.
    pub fn parse(arg: &str) -> Result<Self> {
        let p = Path::new(arg);
        if p.is_file() {
            let text = std::fs::read_to_string(p)?;
            return Ok(serde_json::from_str(&text)?);
        }
        let bad = || HillError::Config(format!("potential {arg:?} is neither a file nor a shorthand"));
        let parts: Vec<&str> = arg.split(':').collect();
        let num = |i: usize, d: f64| -> Result<f64> {
            match parts.get(i) {
                Some(s) => s.parse().map_err(|_| bad()),
                None => Ok(d),
            }
        };
        match parts[0] {
            "zero" => Ok(PotentialSpec::Zero { period: num(1, PI)? }),
            "mathieu" => Ok(PotentialSpec::Mathieu { q: num(1, 0.5)? }),
            "lame1" => Ok(PotentialSpec::Lame1 { m: num(1, 0.5)?, period: num(2, PI)?, translate: 0.0 }),
            "lame2" => Ok(PotentialSpec::Lame2 { m: num(1, 0.5)?, period: num(2, PI)?, translate: 0.0 }),
            _ => Err(bad()),
        }
    }
}

/// `sigma.json`: spectral data with a schema tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaFile {
    pub schema: String,
    pub spectral: SpectralData,
}

/// One judged quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, passed: value <= tolerance }
    }

    /// A boolean outcome (`value` 1 = pass).
    pub fn flag(name: &str, ok: bool) -> Self {
        Self { name: name.into(), value: if ok { 1.0 } else { 0.0 }, tolerance: 0.0, passed: ok }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub command: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub data: serde_json::Value,
}

impl Report {
    fn new(cfg: &RunConfig, checks: Vec<Check>, data: serde_json::Value) -> Self {
        Self {
            schema: SCHEMA_VERSION.into(),
            command: cfg.command.name().into(),
            seed: cfg.seed,
            passed: checks.iter().all(|c| c.passed),
            checks,
            data,
        }
    }
}

/// A CSV table for plotting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }
}

/// Writes `table` as CSV (`# schema` comment line, header, rows; a header
/// only when empty). Plain numbers, so gnuplot reads it directly.
pub fn write_csv(path: &Path, table: &Table) -> Result<()> {
    let mut text = format!("# {SCHEMA_VERSION}\n");
    let mut w = csv::WriterBuilder::new().from_writer(vec![]);
    let io = |e: csv::Error| HillError::Io(e.to_string());
    w.write_record(&table.header).map_err(io)?;
    for r in &table.rows {
        w.write_record(r.iter().map(|v| format!("{v:e}"))).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| HillError::Io(e.to_string()))?;
    text.push_str(&String::from_utf8_lossy(&bytes));
    std::fs::write(path, text)?;
    Ok(())
}

/// Plot data of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotData {
    pub band: Option<Table>,
    pub trajectory: Option<Table>,
    pub residual: Option<Table>,
}

/// `(λ, Δ)` on a real grid.
pub fn band_diagram(h: &Hill, lambdas: &[f64]) -> Result<Table> {
    use rayon::prelude::*;
    let mut t = Table::new(&["lambda", "delta"]);
    t.rows = lambdas
        .par_iter()
        .map(|&l| Ok(vec![l, floquet::discriminant(h, C64::new(l, 0.0))?.re]))
        .collect::<Result<Vec<_>>>()?;
    Ok(t)
}

/// `(t, k, n, μ, σ)` for every snapshot and tracked gap (`μ` unshifted).
pub fn trajectory_table(traj: &kdv::DirichletTrajectory, snapshots: &[f64]) -> Table {
    let mut t = Table::new(&["t", "k", "n", "mu", "sigma"]);
    for &s in snapshots {
        for (k, (n, mu, sg)) in traj.state_at(s).into_iter().enumerate() {
            t.rows.push(vec![s, (k + 1) as f64, n as f64, mu + traj.shift, sg as f64]);
        }
    }
    t
}

/// Writes the present tables to `<dir>/band.csv`, `trajectory.csv`,
/// `residual.csv`.
pub fn emit_plotdata(dir: &Path, plots: &PlotData) -> Result<Vec<PathBuf>> {
    let mut out = vec![];
    for (name, t) in [("band.csv", &plots.band), ("trajectory.csv", &plots.trajectory), ("residual.csv", &plots.residual)] {
        if let Some(t) = t {
            let p = dir.join(name);
            write_csv(&p, t)?;
            out.push(p);
        }
    }
    Ok(out)
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn tail_mode(t: Tail) -> TailMode {
    match t {
        Tail::Free => TailMode::FreeTail,
        Tail::None => TailMode::None,
    }
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Runs the configured command: writes its artifacts and report, returns
/// the report.
pub fn run(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)?;
    let work = || execute(cfg);
    let (report, plots) = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HillError::Config(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    emit_plotdata(&cfg.out, &plots)?;
    let path = cfg.report.clone().unwrap_or_else(|| cfg.out.join(format!("{}.json", cfg.command.name())));
    write_json(&path, &report)?;
    Ok(report)
}

fn execute(cfg: &RunConfig) -> Result<(Report, PlotData)> {
    let mut plots = PlotData::default();
    let mut checks = vec![];
    let data = match &cfg.command {
        Command::Floquet { potential, lambda_grid } => {
            let h = Hill::new(PotentialSpec::parse(potential)?.build()?);
            let band = band_diagram(&h, &parse_grid(lambda_grid)?)?;
            let spectrum: usize = band.rows.iter().filter(|r| r[1].abs() <= 2.0).count();
            plots.band = Some(band);
            serde_json::json!({ "period": h.period(), "points_in_spectrum": spectrum })
        }
        Command::Forward { potential, n_max, band_points } => {
            let h = Hill::new(PotentialSpec::parse(potential)?.build()?);
            let sd = spectrum::spectral_data(&h, *n_max, SpectrumOptions::default())?;
            let adm = spectrum::admissibility_check(&sd.edges, &sd.gaps);
            checks.push(Check::flag("admissibility", adm.passed()));
            let top = sd.lambda_seq.last().copied().unwrap_or(0.0) + sd.shift;
            let lo = sd.shift - 1.0;
            let n = (*band_points).max(1);
            let grid: Vec<f64> = (0..n).map(|j| lo + (top + 1.0 - lo) * j as f64 / (n.max(2) - 1) as f64).collect();
            plots.band = Some(band_diagram(&h, &grid)?);
            write_json(&cfg.out.join("sigma.json"), &SigmaFile { schema: SCHEMA_VERSION.into(), spectral: sd.clone() })?;
            serde_json::json!({ "spectral": to_value(&sd)?, "admissibility": to_value(&adm)? })
        }
        Command::Products { potential, n_max, tail, radius, points } => {
            let pot = PotentialSpec::parse(potential)?.build()?;
            let h = Hill::new(pot);
            let r = RHPData::from_potential(&h, *n_max, cfg.n_trunc, tail_mode(*tail))?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut res = Table::new(&["re", "im", "y2_rel", "dm2_rel", "dp2_rel"]);
            for _ in 0..*points {
                let rho = radius * rng.gen::<f64>().sqrt();
                let l = C64::from_polar(rho, rng.gen_range(0.0..2.0 * PI));
                let m = h.monodromy(l + r.sdata.shift, false)?;
                res.rows.push(vec![
                    l.re,
                    l.im,
                    rel(r.y2_product(l), m.y2()),
                    rel(r.delta_pm2_product(-1, l), m.trace() - 2.0),
                    rel(r.delta_pm2_product(1, l), m.trace() + 2.0),
                ]);
            }
            let worst = res.rows.iter().flat_map(|r| r[2..].to_vec()).fold(0.0, f64::max);
            checks.push(Check::at_most("products_vs_ode", worst, cfg.tol("products")));
            plots.residual = Some(res);
            serde_json::json!({ "n_trunc": cfg.n_trunc, "genus": r.sdata.genus() })
        }
        Command::VerifyRhp { sigma, potential, n_max, x, samples } => {
            let sd = match sigma {
                Some(p) => {
                    let f: SigmaFile = serde_json::from_str(&std::fs::read_to_string(p)?)?;
                    if f.schema != SCHEMA_VERSION {
                        return Err(HillError::Config(format!("unsupported schema {}", f.schema)));
                    }
                    Some(f.spectral)
                }
                None => None,
            };
            let mut data = serde_json::Map::new();
            if let Some(sd) = &sd {
                let adm = spectrum::admissibility_check(&sd.edges, &sd.gaps);
                for c in &adm.conditions {
                    checks.push(Check::flag(&format!("admissibility:{}", c.name), c.passed));
                }
                data.insert("admissibility".into(), to_value(&adm)?);
            }
            let admissible = checks.iter().all(|c| c.passed);
            if let (Some(p), true) = (potential, admissible) {
                let pot = PotentialSpec::parse(p)?.build()?;
                let (h, rhp) = RHPData::normalized(pot, *n_max, cfg.n_trunc, TailMode::FreeTail)?;
                let xs: Vec<f64> = x.iter().map(|f| f * h.period()).collect();
                let rep = rhp_verify::verify_all(&h, &rhp, &xs, *samples)?;
                let jump = rep.jump.iter().map(|j| j.band_max.max(j.gap_max)).fold(0.0, f64::max);
                checks.push(Check::at_most("jump", jump, cfg.tol("jump")));
                checks.push(Check::at_most("det", rep.det_max, cfg.tol("det")));
                checks.push(Check::flag("asymptotics", rep.asymptotics.passed));
                let ex = rep.edges.iter().map(|e| e.exponent).fold(0.0, f64::max);
                checks.push(Check::at_most("edge_exponent", ex, cfg.tol("edge_exponent")));
                checks.push(Check::at_most("reconstruction", rep.reconstruction_max_error, cfg.tol("recon")));
                checks.push(Check::flag("growth", rep.growth.passed));
                let mut res = Table::new(&["x", "u_rec", "u", "error"]);
                for r in &rep.reconstruction {
                    let (ur, u) = (r.u + rhp.sdata.shift, h.pot.eval(r.x) + rhp.sdata.shift);
                    res.rows.push(vec![r.x, ur, u, (ur - u).abs()]);
                }
                plots.residual = Some(res);
                data.insert("rhp".into(), to_value(&rep)?);
            }
            serde_json::Value::Object(data)
        }
        Command::Evolve { potential, t_end, checkpoints, n_gaps, grid, steps_per_unit } => {
            let pot = PotentialSpec::parse(potential)?.build()?;
            let (_, rhp) = RHPData::normalized(pot.clone(), *n_gaps, cfg.n_trunc, TailMode::FreeTail)?;
            let u0 = KdVField::from_potential(&pot, *grid)?;
            let steps = ((t_end * *steps_per_unit as f64).ceil() as usize).max(1);
            let hist = KdVHistory::run(&u0, *t_end, steps)?;
            let traj = kdv::evolve_dirichlet(&hist, &rhp, *t_end, EvolveOptions::default())?;
            let snaps: Vec<f64> = (1..=*checkpoints).map(|j| t_end * j as f64 / *checkpoints as f64).collect();
            let mut mu_err: f64 = 0.0;
            for &t in &snaps {
                let oracle = kdv::dirichlet_oracle(&hist, rhp.sdata.shift, t, *n_gaps)?;
                for (n, mu, _) in traj.state_at(t) {
                    mu_err = mu_err.max((mu - oracle[n - 1]).abs());
                }
            }
            let mut times = vec![0.0];
            times.extend(&snaps);
            let iso = kdv::isospectrality_report(&u0, &times, *n_gaps, *steps_per_unit)?;
            checks.push(Check::at_most("edge_drift", iso.max_drift, cfg.tol("drift")));
            checks.push(Check::at_most("dubrovin_vs_dirichlet", mu_err, cfg.tol("dubrovin")));
            let mut all = vec![0.0];
            all.extend(&snaps);
            plots.trajectory = Some(trajectory_table(&traj, &all));
            serde_json::json!({ "isospectrality": to_value(&iso)?, "sigma_flips": (0..traj.gaps.len()).map(|j| traj.sigma_flips(j)).collect::<Vec<_>>() })
        }
        Command::Theta { edges, gaps, x_grid, t } => {
            let mut h = finite_gap::build_curve(edges)?;
            if !gaps.is_empty() {
                h.set_divisor(parse_divisor(gaps, h.shift)?)?;
            }
            let th = h.theta()?;
            let mut res = Table::new(&["x", "u", "u_x", "kdv_residual"]);
            let mut worst: f64 = 0.0;
            for x in parse_grid(x_grid)? {
                let j = finite_gap::its_matveev_jet(&h, &th, x, *t)?;
                let r = finite_gap::kdv_residual(&j);
                worst = worst.max(r.abs());
                res.rows.push(vec![x, j.u, j.u_x, r]);
            }
            checks.push(Check::at_most("kdv_residual", worst, cfg.tol("kdv")));
            checks.push(Check::at_most("tau_symmetry", h.symmetry_residual(), 1e-8));
            checks.push(Check::at_most("a_normalization", h.normalization_residual(), 1e-8));
            plots.residual = Some(res);
            to_value(&h)?
        }
        Command::Periodicity { edges, which, search_tol } => {
            let h = finite_gap::build_curve(edges)?;
            let which = match which {
                Which::Space => Periodicity::Space,
                Which::Time => Periodicity::Time,
            };
            let cert = finite_gap::periodicity_certificates(&h, which, *search_tol);
            if cert.period.is_some() {
                checks.push(Check::at_most("r_jump", cert.jump_residual, cfg.tol("periodicity")));
            }
            to_value(&cert)?
        }
        Command::Selftest => {
            let (c, d) = selftest(cfg)?;
            checks = c;
            d
        }
    };
    Ok((Report::new(cfg, checks, data), plots))
}

/// `μ:sheet` entries, `μ` unshifted.
fn parse_divisor(items: &[String], shift: f64) -> Result<Vec<(f64, i8)>> {
    items
        .iter()
        .map(|s| {
            let bad = || HillError::Config(format!("divisor entry {s:?} is not mu:sheet"));
            let (a, b) = s.split_once(':').ok_or_else(bad)?;
            let mu: f64 = a.parse().map_err(|_| bad())?;
            let sheet: i8 = b.parse().map_err(|_| bad())?;
            if sheet != 1 && sheet != -1 {
                return Err(bad());
            }
            Ok((mu - shift, sheet))
        })
        .collect()
}

fn selftest(cfg: &RunConfig) -> Result<(Vec<Check>, serde_json::Value)> {
    let mut checks = vec![];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = Hill::new(PeriodicPotential::zero(PI));
    let mut worst: f64 = 0.0;
    for _ in 0..24 {
        let l = C64::from_polar(100.0 * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..2.0 * PI));
        let d = floquet::discriminant(&h, l)?;
        let want = 2.0 * (PI * l.sqrt()).cos();
        worst = worst.max((d - want).norm() / want.norm().max(1.0));
    }
    checks.push(Check::at_most("free_discriminant", worst, cfg.tol("floquet")));
    let sd = spectrum::spectral_data(&h, 6, SpectrumOptions::default())?;
    let e_err = sd
        .lambda_seq
        .iter()
        .enumerate()
        .map(|(i, l)| (l - ((i + 1) / 2).pow(2) as f64).abs())
        .fold(0.0, f64::max);
    let mu_err = sd.mu_seq.iter().enumerate().map(|(i, m)| (m - ((i + 1) * (i + 1)) as f64).abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("free_edges", e_err, 1e-9));
    checks.push(Check::at_most("free_dirichlet", mu_err, 1e-9));
    checks.push(Check::flag("free_sigma_zero", sd.sigma_seq.iter().all(|&s| s == 0)));
    let r = RHPData::new(sd, cfg.n_trunc, TailMode::FreeTail)?;
    let mut pw: f64 = 0.0;
    for _ in 0..8 {
        let l = C64::from_polar(50.0 * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..2.0 * PI));
        let m = h.monodromy(l, false)?;
        pw = pw.max(rel(r.y2_product(l), m.y2())).max(rel(r.delta_pm2_product(-1, l), m.trace() - 2.0));
    }
    checks.push(Check::at_most("free_products", pw, cfg.tol("products")));
    let curve = finite_gap::build_curve(&[0.0, 1.0, 2.0])?;
    let tau_err = (curve.tau[0][0].re - finite_gap::genus1_tau_oracle(1.0, 2.0)).abs();
    checks.push(Check::at_most("genus1_tau", tau_err, 1e-10));
    let th = curve.theta()?;
    let j = finite_gap::its_matveev_jet(&curve, &th, rng.gen_range(0.0..3.0), rng.gen_range(0.0..1.0))?;
    checks.push(Check::at_most("genus1_kdv_residual", finite_gap::kdv_residual(&j).abs(), cfg.tol("kdv")));
    Ok((checks, serde_json::json!({ "suites": ["floquet", "spectrum", "products", "finite_gap"] })))
}

/// Parses `args`, runs, prints a one-line summary per check; returns the
/// process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let cfg = match RunConfig::from_cli(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    match run(&cfg) {
        Ok(rep) => {
            for c in &rep.checks {
                println!("{} {} = {:e} (tol {:e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
            }
            if rep.passed {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_parse() {
        assert_eq!(parse_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("2:5:1").unwrap(), vec![2.0]);
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("0:1").is_err());
    }

    #[test]
    fn potential_shorthands() {
        assert_eq!(PotentialSpec::parse("mathieu:0.1").unwrap(), PotentialSpec::Mathieu { q: 0.1 });
        assert_eq!(PotentialSpec::parse("zero").unwrap(), PotentialSpec::Zero { period: PI });
        assert!(PotentialSpec::parse("nonsense:1").is_err());
        let json = r#"{"schema":"hillspec/1","kind":"modes","period":3.0,"coeffs":[[0.5,0],[0.2,0.1]]}"#;
        let spec: PotentialSpec = serde_json::from_str(json).unwrap();
        assert!((spec.build().unwrap().mean() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn free_band_diagram() {
        let h = Hill::new(PeriodicPotential::zero(PI));
        let t = band_diagram(&h, &parse_grid("-3:30:23").unwrap()).unwrap();
        for r in &t.rows {
            let want = 2.0 * (PI * C64::new(r[0], 0.0).sqrt()).cos().re;
            assert!((r[1] - want).abs() < 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = std::env::temp_dir().join(format!("hillspec-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("e.csv");
        write_csv(&p, &Table::new(&["a", "b"])).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), format!("# {SCHEMA_VERSION}\na,b\n"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = RunConfig {
            command: Command::Selftest,
            tolerances: default_tolerances(),
            n_trunc: 200,
            out: ".".into(),
            report: None,
            seed: 0,
            threads: None,
        };
        assert!(cfg.validate().is_ok());
        cfg.tolerances.insert("jump".into(), 0.0);
        assert!(cfg.validate().is_err());
        cfg.tolerances = default_tolerances();
        cfg.command = Command::Theta { edges: vec![], gaps: vec![], x_grid: "0:1:2".into(), t: 0.0 };
        assert!(cfg.validate().is_err());
    }
}
