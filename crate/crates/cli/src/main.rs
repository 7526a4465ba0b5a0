use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use slope_energy::calibration::{calibrate, write_dataset, CalibrationConfig, FrameSource};
use slope_energy::path::{energy_of_path, superposition_check, PathSpec, DEFAULT_DT};
use slope_energy::planner::{LatticeConfig, Node, Planner};
use slope_energy::synth::{generate_telemetry, Scenario};
use slope_energy::telemetry::{parse_log, preprocess, write_log, PreprocessConfig, RejectionReport};
use slope_energy::wrench::{linspace, EvalMode, MotionAxis, WrenchModel};
use slope_energy::{Error, Terrain};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "slope-energy", version, about = "Slope-aware energy models for legged robots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic telemetry from a scenario
    Synth(SynthArgs),
    /// Clean a telemetry log
    Ingest(IngestArgs),
    /// Fit a wrench model to a cleaned log
    Calibrate(CalibrateArgs),
    /// Export a (slope, heading) cost map
    Map(MapArgs),
    /// Integrate the energy of a path
    EvalPath(EvalPathArgs),
    /// Compare the energy of a path against the sum of its parts
    Superpose(SuperposeArgs),
    /// Plan a minimum-energy path on a lattice
    Plan(PlanArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Literal,
    Dissipative,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Literal => EvalMode::Literal,
            ModeArg::Dissipative => EvalMode::Dissipative,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Forward,
    Lateral,
    Rotation,
}

#[derive(Args)]
struct ModelArgs {
    /// Wrench model JSON
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    eval_mode: Option<ModeArg>,
}

impl ModelArgs {
    fn load(&self) -> Result<WrenchModel> {
        let mut m = WrenchModel::from_json(&read_text(&self.model)?)?;
        if let Some(mode) = self.eval_mode {
            m.eval_mode = mode.into();
        }
        Ok(m)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario JSON; the built-in default grid when omitted
    #[arg(long, visible_alias = "input")]
    scenario: Option<PathBuf>,
    /// Telemetry CSV (stdout when omitted)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Ground-truth manifest JSON
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Cleaned CSV (stdout when omitted)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Rejection report JSON
    #[arg(long)]
    report: Option<PathBuf>,
    /// Preprocessing overrides as JSON
    #[arg(long)]
    config: Option<PathBuf>,
    /// Enables the consistency check against this model
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Model JSON (stdout when omitted)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Fit report JSON
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-window wrench samples CSV
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Repeatability bins JSON
    #[arg(long)]
    repeatability: Option<PathBuf>,
    /// Calibration overrides as JSON
    #[arg(long)]
    config: Option<PathBuf>,
    /// Terrain JSON; switches the slope frame source to the map
    #[arg(long)]
    terrain: Option<PathBuf>,
    #[arg(long, value_enum)]
    eval_mode: Option<ModeArg>,
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Cost map CSV (stdout when omitted)
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "forward")]
    axis: AxisArg,
    #[arg(long, default_value_t = 20.0)]
    alpha_max_deg: f64,
    #[arg(long, default_value_t = 21)]
    alpha_steps: usize,
    #[arg(long, default_value_t = 13)]
    gamma_steps: usize,
}

#[derive(Args)]
struct EvalPathArgs {
    /// Path JSON
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    terrain: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_DT)]
    dt: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SuperposeArgs {
    /// The whole path JSON
    #[arg(long, visible_alias = "input")]
    whole: PathBuf,
    /// Part path JSON, in order; the whole is split per primitive when omitted
    #[arg(long = "part")]
    parts: Vec<PathBuf>,
    #[arg(long)]
    terrain: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_DT)]
    dt: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    terrain: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Lattice configuration JSON
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start node as col,row,heading
    #[arg(long)]
    start: String,
    /// Goal cell as col,row
    #[arg(long)]
    goal: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidConfig(msg.into()).into()
}

fn read_text(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(invalid(format!("no such file: {}", path.display())));
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(Error::from)
        .with_context(|| format!("parsing {}", path.display()))
}

fn load_terrain(path: &Path) -> Result<Terrain> {
    read_text(path)?;
    Ok(Terrain::load(path)?)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn parse_ints(s: &str, n: usize, what: &str) -> Result<Vec<usize>> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| invalid(format!("{what} must be {n} comma-separated integers")))?;
    if v.len() != n {
        return Err(invalid(format!("{what} must be {n} comma-separated integers")));
    }
    Ok(v)
}

#[derive(Serialize)]
struct IngestReport {
    schema_version: u32,
    #[serde(flatten)]
    report: RejectionReport,
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut scenario = match &a.scenario {
        Some(p) => Scenario::from_json(&read_text(p)?)?,
        None => Scenario::default_grid(WrenchModel::reference()),
    };
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    let generated = generate_telemetry(&scenario)?;
    let mut out = open_output(a.output.as_deref())?;
    generated.write_csv(&mut out)?;
    out.flush()?;
    if let Some(m) = &a.manifest {
        write_json(Some(m), &generated.manifest)?;
    }
    eprintln!(
        "synth: {} samples over {} legs (seed {})",
        generated.samples.len(),
        generated.manifest.legs.len(),
        scenario.seed
    );
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let cfg: PreprocessConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => PreprocessConfig::default(),
    };
    let model = match &a.model {
        Some(p) => Some(WrenchModel::from_json(&read_text(p)?)?),
        None => None,
    };
    read_text(&a.input)?;
    let log = parse_log(BufReader::new(File::open(&a.input)?))?;
    let out = preprocess(&log, &cfg, model.as_ref())?;
    let mut w = open_output(a.output.as_deref())?;
    write_log(&mut w, &out.samples)?;
    w.flush()?;
    let r = out.report;
    if let Some(p) = &a.report {
        write_json(Some(p), &IngestReport {
            schema_version: SCHEMA_VERSION,
            report: r,
        })?;
    }
    eprintln!(
        "ingest: {} in, {} low speed, {} outliers, {} inconsistent, {} out",
        r.input, r.low_speed, r.power_outlier, r.inconsistent, r.output
    );
    Ok(())
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<()> {
    let mut cfg: CalibrationConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => CalibrationConfig::default(),
    };
    if let Some(mode) = a.eval_mode {
        cfg.eval_mode = mode.into();
    }
    let terrain = match &a.terrain {
        Some(p) => {
            cfg.frame_source = FrameSource::Terrain;
            Some(load_terrain(p)?)
        }
        None => None,
    };
    read_text(&a.input)?;
    let log = parse_log(BufReader::new(File::open(&a.input)?))?;
    let cal = calibrate(&log, &cfg, terrain.as_ref())?;
    write_json(a.output.as_deref(), &cal.model)?;
    if let Some(p) = &a.report {
        write_json(Some(p), &cal.report)?;
    }
    if let Some(p) = &a.dataset {
        let mut w = open_output(Some(p))?;
        write_dataset(&mut w, &cal.dataset)?;
        w.flush()?;
    }
    if let Some(p) = &a.repeatability {
        write_json(Some(p), &cal.repeatability)?;
    }
    eprintln!(
        "calibrate: {} windows, max residual rms {:.3e}",
        cal.dataset.len(),
        cal.report.max_residual_rms()
    );
    Ok(())
}

fn map(a: MapArgs) -> Result<()> {
    if a.alpha_steps < 1 || a.gamma_steps < 2 {
        return Err(invalid("need at least 1 slope step and 2 heading steps"));
    }
    if !(0.0..90.0).contains(&a.alpha_max_deg) {
        return Err(invalid("alpha_max_deg must lie in [0, 90)"));
    }
    let model = a.model.load()?;
    let axis = match a.axis {
        AxisArg::Forward => MotionAxis::Forward,
        AxisArg::Lateral => MotionAxis::Lateral,
        AxisArg::Rotation => MotionAxis::Rotation,
    };
    let alphas = linspace(0.0, a.alpha_max_deg.to_radians(), a.alpha_steps);
    let gammas = linspace(0.0, std::f64::consts::PI, a.gamma_steps);
    let cost_map = model.export_cost_map(&alphas, &gammas, axis);
    let mut out = open_output(a.output.as_deref())?;
    cost_map.write_csv(&mut out)?;
    out.flush()?;
    if alphas.iter().any(|&x| model.extrapolates(x)) {
        eprintln!("map: warning: slope range extends beyond the fitted range");
    }
    Ok(())
}

fn eval_path(a: EvalPathArgs) -> Result<()> {
    let path = PathSpec::from_json(&read_text(&a.input)?)?;
    let terrain = load_terrain(&a.terrain)?;
    let model = a.model.load()?;
    let report = energy_of_path(&path, &terrain, &model, a.dt)?;
    write_json(a.output.as_deref(), &report)?;
    eprintln!("eval-path: {:.6} J over {:.3} s", report.total_j, report.duration_s);
    for w in &report.warnings {
        eprintln!("eval-path: warning: {w}");
    }
    Ok(())
}

fn superpose(a: SuperposeArgs) -> Result<()> {
    let whole = PathSpec::from_json(&read_text(&a.whole)?)?;
    let parts = if a.parts.is_empty() {
        whole.split()
    } else {
        a.parts
            .iter()
            .map(|p| Ok(PathSpec::from_json(&read_text(p)?)?))
            .collect::<Result<Vec<_>>>()?
    };
    let terrain = load_terrain(&a.terrain)?;
    let model = a.model.load()?;
    let s = superposition_check(&parts, &whole, &terrain, &model, a.dt)?;
    write_json(a.output.as_deref(), &s)?;
    eprintln!("superpose: relative difference {:.3e}", s.relative_difference);
    Ok(())
}

fn plan_cmd(a: PlanArgs) -> Result<()> {
    let cfg: LatticeConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => LatticeConfig::default(),
    };
    let s = parse_ints(&a.start, 3, "--start")?;
    let g = parse_ints(&a.goal, 2, "--goal")?;
    let terrain = load_terrain(&a.terrain)?;
    let model = a.model.load()?;
    let planner = Planner::new(&terrain, &model, cfg)?;
    let plan = planner.plan(Node::new(s[0], s[1], s[2]), (g[0], g[1]))?;
    write_json(a.output.as_deref(), &plan)?;
    eprintln!(
        "plan: {:.3} J, {} primitives, {} nodes expanded in {:.1} ms",
        plan.energy_j,
        plan.path.primitives.len(),
        plan.expanded_nodes,
        plan.runtime_ms
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Map(a) => map(a),
        Command::EvalPath(a) => eval_path(a),
        Command::Superpose(a) => superpose(a),
        Command::Plan(a) => plan_cmd(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
