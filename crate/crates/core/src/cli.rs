//! Command-line front end: flat `[section] key = value` configuration,
//! subcommand dispatch, and deterministic CSV / report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::base_maps::{Base, BaseMap, BasePoint, CatMap};
use crate::conjugacy::Conjugacy;
use crate::error::{Error, Result};
use crate::fibre_maps::{certify_bounds, validate_family, DynFamily, FamilyRegistry};
use crate::lyapunov::{classify, sample_points, ClassifySettings, GraphKind};
use crate::numeric::{par_map_range, sig17};
use crate::pinch::{discontinuity_lines, pinch_cells, stable_alignment, structure_checks, StructureSettings};
use crate::pullback::{field, invariance_residual, separator, Grid, PullbackSettings, SeparatorOutcome, SeparatorSettings};
use crate::weierstrass::{box_dimension, dyadic_samples};

#[derive(Debug, Clone, PartialEq)]
pub enum BaseSpec {
    Baker { a: f64 },
    Cat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec {
    pub kind: String,
    pub params: BTreeMap<String, f64>,
}

/// Fully validated run configuration with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub base: BaseSpec,
    pub family: FamilySpec,
    pub grid: Grid,
    pub pullback: PullbackSettings,
    pub tol_pinch: f64,
    pub tol_zero: f64,
    pub target_err: f64,
    pub seed: u64,
    pub samples: usize,
    pub separator_samples: usize,
    pub horizon: usize,
    pub validation_grid: usize,
    pub out: Option<PathBuf>,
}

const RUN_KEYS: &[&str] = &[
    "grid",
    "n_xi",
    "n_x",
    "depth",
    "stop_tol",
    "probe_step",
    "tol_pinch",
    "tol_zero",
    "target_err",
    "seed",
    "samples",
    "separator_samples",
    "horizon",
    "validation_grid",
    "out",
];

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2 && ((v.starts_with('"') && v.ends_with('"')) || (v.starts_with('\'') && v.ends_with('\''))) {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

type Sections = BTreeMap<String, BTreeMap<String, (String, usize)>>;

fn split_sections(text: &str) -> Result<Sections> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            if !["base", "family", "run"].contains(&name.as_str()) {
                return Err(Error::Config(format!("line {lineno}: unknown section [{name}]")));
            }
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {lineno}: expected key = value, got '{line}'")));
        };
        let Some(section) = &current else {
            return Err(Error::Config(format!("line {lineno}: key '{}' outside any section", key.trim())));
        };
        let key = key.trim().to_string();
        let entry = sections.get_mut(section).expect("section registered");
        if entry.insert(key.clone(), (unquote(value).to_string(), lineno)).is_some() {
            return Err(Error::Config(format!("[{section}].{key} given twice")));
        }
    }
    Ok(sections)
}

fn parse_f64(section: &str, key: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config(format!("[{section}].{key}: expected a number, got '{raw}'")))
}

fn parse_usize(section: &str, key: &str, raw: &str) -> Result<usize> {
    raw.parse::<usize>()
        .map_err(|_| Error::Config(format!("[{section}].{key}: expected a non-negative integer, got '{raw}'")))
}

fn positive(section: &str, key: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Config(format!("[{section}].{key} = {v} must be positive")))
    }
}

fn require<'a>(sections: &'a Sections, section: &str) -> Result<&'a BTreeMap<String, (String, usize)>> {
    sections.get(section).ok_or_else(|| Error::Config(format!("missing section [{section}]")))
}

fn required_key<'a>(map: &'a BTreeMap<String, (String, usize)>, section: &str, key: &str) -> Result<&'a str> {
    map.get(key)
        .map(|(v, _)| v.as_str())
        .ok_or_else(|| Error::Config(format!("missing required key [{section}].{key}")))
}

/// Parses and validates a configuration; unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &FamilyRegistry::builtin())
}

pub fn parse_config_with(text: &str, registry: &FamilyRegistry) -> Result<RunConfig> {
    let sections = split_sections(text)?;

    let base_map = require(&sections, "base")?;
    let base = match required_key(base_map, "base", "kind")? {
        "baker" => {
            if let Some(key) = base_map.keys().find(|k| !["kind", "a"].contains(&k.as_str())) {
                return Err(Error::Config(format!("unknown key [base].{key}")));
            }
            let a = match base_map.get("a") {
                Some((raw, _)) => parse_f64("base", "a", raw)?,
                None => 0.5,
            };
            crate::base_maps::Baker::new(a)?;
            BaseSpec::Baker { a }
        }
        "cat" => {
            if let Some(key) = base_map.keys().find(|k| k.as_str() != "kind") {
                return Err(Error::Config(format!("unknown key [base].{key}")));
            }
            BaseSpec::Cat
        }
        other => return Err(Error::Config(format!("[base].kind: unknown base '{other}' (expected baker or cat)"))),
    };

    let fam_map = require(&sections, "family")?;
    let kind = required_key(fam_map, "family", "kind")?;
    let (canonical, keys) = registry.describe(kind).map_err(|e| Error::Config(format!("[family].kind: {e}")))?;
    let mut params = BTreeMap::new();
    for (key, (raw, _)) in fam_map.iter().filter(|(k, _)| k.as_str() != "kind") {
        if !keys.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown key [family].{key} for family {canonical}")));
        }
        params.insert(key.clone(), parse_f64("family", key, raw)?);
    }
    registry.build(canonical, &params).map_err(|e| Error::Config(format!("[family]: {e}")))?;
    let family = FamilySpec { kind: canonical.to_string(), params };

    let empty = BTreeMap::new();
    let run = sections.get("run").unwrap_or(&empty);
    for key in run.keys() {
        if !RUN_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown key [run].{key}")));
        }
    }
    let get = |k: &str| run.get(k).map(|(v, _)| v.as_str());
    let usize_or = |k: &str, d: usize| get(k).map_or(Ok(d), |raw| parse_usize("run", k, raw));
    let f64_or = |k: &str, d: f64| get(k).map_or(Ok(d), |raw| parse_f64("run", k, raw).and_then(|v| positive("run", k, v)));

    let square = usize_or("grid", 100)?;
    let n_xi = usize_or("n_xi", square)?;
    let n_x = usize_or("n_x", square)?;
    let grid = Grid::new(n_xi, n_x).map_err(|_| Error::Config(format!("[run] grid {n_xi}x{n_x} must be at least 2x2")))?;
    let defaults = PullbackSettings::default();
    let pullback = PullbackSettings {
        depth: usize_or("depth", defaults.depth)?,
        stop_tol: f64_or("stop_tol", defaults.stop_tol)?,
        probe_step: usize_or("probe_step", defaults.probe_step)?.max(1),
    };
    let seed = match get("seed") {
        Some(raw) => raw.parse::<u64>().map_err(|_| Error::Config(format!("[run].seed: expected an unsigned integer, got '{raw}'")))?,
        None => 0,
    };
    let horizon = usize_or("horizon", 40)?;
    if horizon == 0 {
        return Err(Error::Config("[run].horizon must be at least 1".into()));
    }
    Ok(RunConfig {
        base,
        family,
        grid,
        pullback,
        tol_pinch: f64_or("tol_pinch", 1e-6)?,
        tol_zero: f64_or("tol_zero", 1e-3)?,
        target_err: f64_or("target_err", 1e-8)?,
        seed,
        samples: usize_or("samples", 10_000)?,
        separator_samples: usize_or("separator_samples", 500)?,
        horizon,
        validation_grid: usize_or("validation_grid", 100)?,
        out: get("out").map(PathBuf::from),
    })
}

impl RunConfig {
    pub fn build_base(&self) -> Result<Base> {
        Ok(match self.base {
            BaseSpec::Baker { a } => Base::Baker(crate::base_maps::Baker::new(a)?),
            BaseSpec::Cat => Base::Cat(CatMap),
        })
    }

    pub fn build_family(&self) -> Result<DynFamily> {
        FamilyRegistry::builtin().build(&self.family.kind, &self.family.params)
    }

    pub fn separator_settings(&self) -> SeparatorSettings {
        SeparatorSettings {
            horizon: self.horizon,
            pinch_tol: self.tol_pinch,
            pullback: self.pullback,
            ..SeparatorSettings::default()
        }
    }

    /// Canonical text form; identical configurations give identical text.
    pub fn canonical_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        match self.base {
            BaseSpec::Baker { a } => lines.push(format!("[base] kind=baker a={a:e}")),
            BaseSpec::Cat => lines.push("[base] kind=cat".into()),
        }
        let mut fam = format!("[family] kind={}", self.family.kind);
        for (k, v) in &self.family.params {
            let _ = write!(fam, " {k}={v:e}");
        }
        lines.push(fam);
        lines.push(format!(
            "[run] n_xi={} n_x={} depth={} stop_tol={:e} probe_step={} tol_pinch={:e} tol_zero={:e} target_err={:e}",
            self.grid.n_xi,
            self.grid.n_x,
            self.pullback.depth,
            self.pullback.stop_tol,
            self.pullback.probe_step,
            self.tol_pinch,
            self.tol_zero,
            self.target_err
        ));
        lines.push(format!(
            "[run] samples={} separator_samples={} horizon={} validation_grid={}",
            self.samples, self.separator_samples, self.horizon, self.validation_grid
        ));
        lines.push(format!("seed={}", self.seed));
        lines
    }
}

#[derive(Debug, Parser)]
#[command(name = "skewgraph", version, about = "Invariant graphs of skew products over Baker and cat-map drives")]
pub struct Cli {
    /// Run configuration (flat [base], [family], [run] sections).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory; overrides [run].out.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed; overrides [run].seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check compression, monotonicity, the Schwarzian sign and α·Q_f < 1.
    Validate,
    /// Bounding graphs φ± on the grid, with the invariance residual.
    Graphs(GraphsArgs),
    /// Lyapunov exponents and the three-case classification.
    Classify(ClassifyArgs),
    /// Separating graph φ* at random base points.
    Separator(SeparatorArgs),
    /// Fibre-wise conjugacy residuals (Baker base only).
    Conjugacy(ConjugacyArgs),
    /// Pinch cells and structural checks.
    Pinch(PinchArgs),
    /// Weierstrass series samples and box dimension.
    Weierstrass(WeierstrassArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GraphsArgs {
    #[arg(long)]
    pub depth: Option<usize>,
    /// Square grid size, overriding the config.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub samples: Option<usize>,
    /// Also write per-sample log-derivatives as CSV.
    #[arg(long)]
    pub samples_csv: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SeparatorArgs {
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ConjugacyArgs {
    /// Number of random base points.
    #[arg(long, default_value_t = 20)]
    pub thetas: usize,
    /// Explicit base points as `xi,x`; repeatable. Replaces the random ones.
    #[arg(long = "theta", value_parser = parse_theta)]
    pub theta: Vec<(f64, f64)>,
    /// Fibre samples per base point.
    #[arg(long, default_value_t = 16)]
    pub ys: usize,
    #[arg(long)]
    pub target_err: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub depth_cap: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PinchArgs {
    #[arg(long, default_value_t = 2)]
    pub radius: usize,
    #[arg(long)]
    pub depth: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct WeierstrassArgs {
    /// Defaults to [family].lambda when the config has an affine family.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 60)]
    pub depth: usize,
    #[arg(long, default_value_t = 8)]
    pub levels: usize,
    /// log2 of the sample count used for box counting.
    #[arg(long, default_value_t = 20)]
    pub bits: u32,
    /// log2 of the number of (x, W) rows written to the CSV.
    #[arg(long, default_value_t = 12)]
    pub csv_bits: u32,
}

fn parse_theta(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected xi,x, got '{s}'"))?;
    let xi = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let x = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((xi, x))
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<(String, String)>,
    /// Validation found a hard failure; the process should exit with 2.
    pub validation_failed: bool,
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Hypothesis(_) => 3,
        Error::Config(_)
        | Error::UnknownFamily(_)
        | Error::UnsupportedBase(_)
        | Error::Precondition(_)
        | Error::Family(_)
        | Error::Certification(_) => 2,
        _ => 1,
    }
}

struct Emitter {
    dir: PathBuf,
    stem: String,
    header: Vec<String>,
    files: Vec<PathBuf>,
}

impl Emitter {
    fn new(dir: &Path, subcommand: &str, mut header: Vec<String>) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
        let mut hasher = Sha256::new();
        for line in &header {
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        header.push(format!("config_hash={hex}"));
        Ok(Emitter { dir: dir.to_path_buf(), stem: format!("{subcommand}_{hex}"), header, files: Vec::new() })
    }

    fn write(&mut self, ext: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(format!("{}.{ext}", self.stem));
        let io = |e: std::io::Error| Error::Config(format!("cannot write {}: {e}", path.display()));
        let mut w = BufWriter::new(fs::File::create(&path).map_err(io)?);
        for line in &self.header {
            writeln!(w, "# {line}").map_err(io)?;
        }
        body(&mut w).map_err(io)?;
        w.flush().map_err(io)?;
        self.files.push(path);
        Ok(())
    }

    fn report(&mut self, kv: &[(String, String)]) -> Result<()> {
        self.write("txt", |w| {
            for (k, v) in kv {
                writeln!(w, "{k}={v}")?;
            }
            Ok(())
        })
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("this subcommand needs --config".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn output_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    cli.out.clone().or_else(|| cfg.and_then(|c| c.out.clone())).unwrap_or_else(|| PathBuf::from("."))
}

/// Runs the parsed command line.
pub fn run(cli: &Cli) -> Result<Outcome> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // a second initialisation in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Weierstrass(args) => run_weierstrass(cli, args),
        cmd => {
            let mut cfg = load_config(cli)?;
            match cmd {
                Command::Graphs(a) => {
                    if let Some(d) = a.depth {
                        cfg.pullback.depth = d;
                    }
                    if let Some(g) = a.grid {
                        cfg.grid = Grid::square(g).map_err(|_| Error::Config("--grid must be at least 2".into()))?;
                    }
                }
                Command::Classify(a) => {
                    if let Some(s) = a.samples {
                        cfg.samples = s;
                    }
                }
                Command::Separator(a) => {
                    if let Some(h) = a.horizon {
                        cfg.horizon = h.max(1);
                    }
                }
                Command::Conjugacy(a) => {
                    if let Some(t) = a.target_err {
                        if !(t > 0.0) {
                            return Err(Error::Config("--target-err must be positive".into()));
                        }
                        cfg.target_err = t;
                    }
                }
                Command::Pinch(a) => {
                    if let Some(d) = a.depth {
                        cfg.pullback.depth = d;
                    }
                }
                _ => {}
            }
            let dir = output_dir(cli, Some(&cfg));
            let base = cfg.build_base()?;
            let family = cfg.build_family()?;
            let mut header = cfg.canonical_lines();
            header.push(format!("command={cmd:?}"));
            let mut out = Emitter::new(&dir, command_name(cmd), header)?;
            let (summary, validation_failed) = match cmd {
                Command::Validate => run_validate(&cfg, &base, family.as_ref(), &mut out)?,
                Command::Graphs(_) => (run_graphs(&cfg, &base, family.as_ref(), &mut out)?, false),
                Command::Classify(a) => (run_classify(&cfg, &base, family.as_ref(), a, &mut out)?, false),
                Command::Separator(a) => (run_separator(&cfg, &base, family.as_ref(), a, &mut out)?, false),
                Command::Conjugacy(a) => (run_conjugacy(&cfg, &base, family.as_ref(), a, &mut out)?, false),
                Command::Pinch(a) => (run_pinch(&cfg, &base, family.as_ref(), a, &mut out)?, false),
                Command::Weierstrass(_) => unreachable!("handled above"),
            };
            Ok(Outcome { files: out.files, summary, validation_failed })
        }
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Validate => "validate",
        Command::Graphs(_) => "graphs",
        Command::Classify(_) => "classify",
        Command::Separator(_) => "separator",
        Command::Conjugacy(_) => "conjugacy",
        Command::Pinch(_) => "pinch",
        Command::Weierstrass(_) => "weierstrass",
    }
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn run_validate(
    cfg: &RunConfig,
    base: &Base,
    family: &dyn crate::fibre_maps::FibreMap,
    out: &mut Emitter,
) -> Result<(Vec<(String, String)>, bool)> {
    let r = validate_family(family, base, cfg.validation_grid);
    let mut s = vec![
        kv("family", family.name()),
        kv("base", base.name()),
        kv("compressing", r.compressing),
        kv("monotone", r.monotone),
        kv("schwarzian_negative", r.schwarzian_negative),
        kv("alpha_qf_lt_1", r.alpha_qf_lt_1),
        kv("alpha", format!("{:.6}", r.alpha)),
        kv("q_f", format!("{:.6}", r.q_f)),
        kv("alpha_qf", format!("{:.6}", r.alpha_qf)),
        kv("max_abs_image", format!("{:.10}", r.max_abs_image)),
        kv("min_deriv", format!("{:.6e}", r.min_deriv)),
        kv("max_schwarzian", format!("{:.6e}", r.max_schwarzian)),
    ];
    if let Some(b) = r.bounds {
        s.push(kv("qp_f", format!("{:.6}", b.qp_f)));
        s.push(kv("lipschitz", format!("{:.6}", b.lip)));
        s.push(kv("lipschitz_grid_estimate", format!("{:.6}", b.lip_grid)));
        s.push(kv("certified_by", format!("{:?}", b.certified_by).to_lowercase()));
    }
    if !r.schwarzian_negative {
        s.push(kv("warning", "Schwarzian derivative is not negative everywhere"));
    }
    out.report(&s)?;
    Ok((s, !r.hard_ok()))
}

fn run_graphs(
    cfg: &RunConfig,
    base: &Base,
    family: &dyn crate::fibre_maps::FibreMap,
    out: &mut Emitter,
) -> Result<Vec<(String, String)>> {
    let fld = field(base, family, cfg.grid, &cfg.pullback);
    out.write("csv", |w| {
        writeln!(w, "xi,x,phi_minus,phi_plus,depth,gap")?;
        for idx in 0..fld.grid.len() {
            let t = fld.grid.center(idx);
            writeln!(
                w,
                "{},{},{},{},{},{}",
                sig17(t.xi),
                sig17(t.x),
                sig17(fld.phi_minus[idx]),
                sig17(fld.phi_plus[idx]),
                fld.depth[idx],
                sig17(fld.gap(idx))
            )?;
        }
        Ok(())
    })?;
    let res = invariance_residual(base, family, &fld);
    let worst = fld.grid.center(res.cell);
    let gaps = fld.gaps();
    let s = vec![
        kv("cells", fld.grid.len()),
        kv("max_depth_reached", fld.max_depth_reached()),
        kv("monotone_violations", fld.monotone_violations),
        kv("gap_min", format!("{:.6e}", gaps.iter().copied().fold(f64::INFINITY, f64::min))),
        kv("gap_max", format!("{:.6e}", gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max))),
        kv("invariance_residual", format!("{:.6e}", res.sup)),
        kv("invariance_residual_at", format!("{:.6},{:.6}", worst.xi, worst.x)),
        kv("invariance_residual_graph", if res.upper { "phi_plus" } else { "phi_minus" }),
    ];
    out.report(&s)?;
    Ok(s)
}

fn run_classify(
    cfg: &RunConfig,
    base: &Base,
    family: &dyn crate::fibre_maps::FibreMap,
    args: &ClassifyArgs,
    out: &mut Emitter,
) -> Result<Vec<(String, String)>> {
    let settings = ClassifySettings {
        grid: cfg.grid,
        tol_pinch: cfg.tol_pinch,
        tol_zero: cfg.tol_zero,
        n_samples: cfg.samples,
        separator_samples: cfg.separator_samples,
        seed: cfg.seed,
        separator: cfg.separator_settings(),
    };
    let report = classify(base, family, &settings)?;
    let s = report.key_values();
    out.report(&s)?;
    if args.samples_csv {
        let lower = crate::lyapunov::graph_exponent(base, family, GraphKind::Lower, cfg.samples, cfg.seed, &settings.separator)?;
        let upper =
            crate::lyapunov::graph_exponent(base, family, GraphKind::Upper, cfg.samples, cfg.seed.wrapping_add(1), &settings.separator)?;
        out.write("csv", |w| {
            writeln!(w, "graph,xi,x,y,log_deriv")?;
            for g in [&lower, &upper] {
                for (t, y, l) in &g.samples {
                    writeln!(w, "{},{},{},{},{}", g.kind.label(), sig17(t.xi), sig17(t.x), sig17(*y), sig17(*l))?;
                }
            }
            Ok(())
        })?;
    }
    Ok(s)
}

fn run_separator(
    cfg: &RunConfig,
    base: &Base,
    family: &dyn crate::fibre_maps::FibreMap,
    args: &SeparatorArgs,
    out: &mut Emitter,
) -> Result<Vec<(String, String)>> {
    let settings = cfg.separator_settings();
    let points = sample_points(args.points, cfg.seed);
    let results = par_map_range(points.len(), |i| separator(base, family, points[i], &settings));
    let results: Vec<SeparatorOutcome> = results.into_iter().collect::<Result<_>>()?;
    let resolved = results.iter().filter(|r| r.resolved().is_some()).count();
    out.write("csv", |w| {
        writeln!(w, "xi,x,phi_minus,phi_star,phi_plus,bracket_width,horizon_used,status")?;
        for r in &results {
            match r {
                SeparatorOutcome::Resolved(s) => writeln!(
                    w,
                    "{},{},{},{},{},{},{},resolved",
                    sig17(s.theta.xi),
                    sig17(s.theta.x),
                    sig17(s.phi_minus),
                    sig17(s.value),
                    sig17(s.phi_plus),
                    sig17(s.bracket_width),
                    s.horizon_used
                )?,
                SeparatorOutcome::Degenerate { theta, phi_minus, phi_plus, reason } => writeln!(
                    w,
                    "{},{},{},,{},,,degenerate: {reason}",
                    sig17(theta.xi),
                    sig17(theta.x),
                    sig17(*phi_minus),
                    sig17(*phi_plus)
                )?,
            }
        }
        Ok(())
    })?;
    let s = vec![
        kv("points", results.len()),
        kv("resolved", resolved),
        kv("degenerate", results.len() - resolved),
        kv("horizon", settings.horizon),
    ];
    out.report(&s)?;
    Ok(s)
}

fn run_conjugacy(
    cfg: &RunConfig,
    base: &Base,
    family: &dyn crate::fibre_maps::FibreMap,
    args: &ConjugacyArgs,
    out: &mut Emitter,
) -> Result<Vec<(String, String)>> {
    let baker = base.as_baker()?;
    let bounds = certify_bounds(family, cfg.validation_grid.max(64))?;
    let conj = Conjugacy::new(baker, family, bounds, cfg.target_err)?.with_depth_cap(args.depth_cap);
    let thetas: Vec<BasePoint> = if args.theta.is_empty() {
        sample_points(args.thetas, cfg.seed)
    } else {
        args.theta.iter().map(|&(xi, x)| BasePoint::new(xi, x)).collect()
    };
    let tables = par_map_range(thetas.len(), |i| conj.verify(thetas[i], args.ys));
    let tables: Vec<_> = tables.into_iter().collect::<Result<_>>()?;
    out.write("csv", |w| {
        writeln!(w, "xi,x,y,G,H,residual")?;
        for t in &tables {
            for r in &t.rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    sig17(t.theta.xi),
                    sig17(t.theta.x),
                    sig17(r.y),
                    sig17(r.g),
                    sig17(r.h),
                    sig17(r.residual)
                )?;
            }
        }
        Ok(())
    })?;
    let max_res = tables.iter().map(|t| t.max_residual()).fold(0.0, f64::max);
    let s = vec![
        kv("thetas", tables.len()),
        kv("depth", tables.first().map_or(0, |t| t.depth)),
        kv("alpha_qf", format!("{:.6}", conj.rate())),
        kv("c_prime", format!("{:.6}", conj.c_prime())),
        kv("target_err", format!("{:e}", cfg.target_err)),
        kv("max_residual", format!("{max_res:.6e}")),
        kv("within_10_target", max_res < 10.0 * cfg.target_err),
    ];
    out.report(&s)?;
    Ok(s)
}

fn run_pinch(
    cfg: &RunConfig,
    base: &Base,
    family: &dyn crate::fibre_maps::FibreMap,
    args: &PinchArgs,
    out: &mut Emitter,
) -> Result<Vec<(String, String)>> {
    let fld = field(base, family, cfg.grid, &cfg.pullback);
    let partial = pinch_cells(&fld, cfg.tol_pinch);
    let settings = StructureSettings { envelope_radius: args.radius.max(1), ..Default::default() };
    let mut s;
    let report = match base {
        Base::Baker(b) => {
            let lines = discontinuity_lines(b, cfg.pullback.depth.max(1))?;
            let r = structure_checks(base, Some(family), &fld, partial, Some(&lines), &settings)?;
            s = r.key_values();
            r
        }
        Base::Cat(cat) => {
            let r = structure_checks(base, Some(family), &fld, partial, None, &settings)?;
            let a = stable_alignment(cat, &r, 2);
            s = r.key_values();
            s.push(kv("stable_alignment", format!("{:.6}", a.score)));
            r
        }
    };
    out.report(&s)?;
    out.write("csv", |w| {
        writeln!(w, "xi,x,gap")?;
        for &k in &report.pinched {
            let t = fld.grid.center(k);
            writeln!(w, "{},{},{}", sig17(t.xi), sig17(t.x), sig17(fld.gap(k)))?;
        }
        Ok(())
    })?;
    Ok(s)
}

fn run_weierstrass(cli: &Cli, args: &WeierstrassArgs) -> Result<Outcome> {
    let cfg = match &cli.config {
        Some(_) => Some(load_config(cli)?),
        None => None,
    };
    let lambda = match (args.lambda, &cfg) {
        (Some(l), _) => l,
        (None, Some(c)) if c.family.kind == "affine_cosine" => c.family.params.get("lambda").copied().unwrap_or(0.6),
        (None, Some(_)) => return Err(Error::Config("--lambda is required unless the config has an affine family".into())),
        (None, None) => 0.6,
    };
    let est = box_dimension(lambda, args.levels, args.depth, args.bits)?;
    let mut header = cfg.as_ref().map(|c| c.canonical_lines()).unwrap_or_default();
    header.push(format!(
        "weierstrass lambda={lambda:e} depth={} levels={} bits={} csv_bits={}",
        args.depth, args.levels, args.bits, args.csv_bits
    ));
    let mut out = Emitter::new(&output_dir(cli, cfg.as_ref()), "weierstrass", header)?;
    let samples = dyadic_samples(lambda, args.depth, args.csv_bits)?;
    let n = samples.len() as f64;
    out.write("csv", |w| {
        writeln!(w, "x,W")?;
        for (i, v) in samples.iter().enumerate() {
            writeln!(w, "{},{}", sig17(i as f64 / n), sig17(*v))?;
        }
        Ok(())
    })?;
    let mut s = vec![
        kv("lambda", lambda),
        kv("excess_slope", format!("{:.6}", est.excess_slope)),
        kv("graph_dimension", format!("{:.6}", est.graph_dimension)),
        kv("surface_dimension", format!("{:.6}", est.surface_dimension)),
        kv("fit_rms", format!("{:.3e}", est.fit_rms)),
        kv("expected_graph_dimension", est.expected.map_or("n/a".into(), |e| format!("{e:.6}"))),
        kv("inconclusive", est.inconclusive),
    ];
    if est.wide_tolerance {
        s.push(kv("note", "lambda is close to 1/2; the estimate converges slowly there"));
    }
    for (d, c) in &est.counts {
        s.push(kv(&format!("count_delta_{d:e}"), c));
    }
    out.report(&s)?;
    Ok(Outcome { files: out.files, summary: s, validation_failed: false })
}
