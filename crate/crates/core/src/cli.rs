//! Command-line pipelines: `ingest`, `cooc`, `densify`, `design`, `run`, `grid`.
//!
//! A TOML config file supplies every setting; flags override it. Outputs are
//! written to temporary files and renamed into place only after all of a
//! command's outputs have been produced.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use crate::cooc::{build_cooc, marginals, render_report, CoocMatrix};
use crate::densify::{densify, densify_summary, DensifyConfig};
use crate::design::{assign_roles, sample_training_set, DesignSpec};
use crate::inventory::{parse_inventory, validate_inventory, Inventory, InventoryFormat};
use crate::simlearner::{
    generate_world, FeatureTable, LinearHyper, LinearLearner, Memorizer, SynthWorldConfig,
};
use crate::splits::generate_splits;
use crate::trials::{run_grid, run_trials, ExternalLearner, GridAxes, Learner};

#[derive(Debug, Parser)]
#[command(
    name = "actobj",
    version,
    about = "Controlled action-object training designs and trials"
)]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Design seed (overrides `design.seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Inventory file (overrides `inventory`).
    #[arg(long, global = true)]
    pub inventory: Option<PathBuf>,
    /// Feature table file (overrides `features`).
    #[arg(long, global = true)]
    pub features: Option<PathBuf>,
    /// Number of trials (overrides `trials`).
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// `memorizer`, `linear` or `external:<command>` (overrides `learner`).
    #[arg(long, global = true)]
    pub learner: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Parse and validate the inventory; echo it (and any features) to the output directory.
    Ingest,
    /// Write the action x object count matrix.
    Cooc,
    /// Select a dense submatrix; write it with the removal log.
    Densify,
    /// Write one split manifest for the configured seed.
    Design,
    /// Run repeated trials; write the aggregate report and plot data.
    Run,
    /// Sweep (c, u, N) and write the grid plot data.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LearnerChoice {
    Memorizer,
    Linear,
    External(String),
}

impl std::str::FromStr for LearnerChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "memorizer" => Ok(LearnerChoice::Memorizer),
            "linear" => Ok(LearnerChoice::Linear),
            _ => match s.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(LearnerChoice::External(cmd.to_string())),
                _ => Err(format!(
                    "unknown learner `{s}` (memorizer, linear, external:<command>)"
                )),
            },
        }
    }
}

/// Contents of the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inventory: Option<PathBuf>,
    pub inventory_format: Option<String>,
    pub features: Option<PathBuf>,
    pub out: PathBuf,
    pub trials: usize,
    pub learner: String,
    /// Synthetic world used when no inventory is given.
    pub world: SynthWorldConfig,
    /// When present, `design`, `run` and `grid` work on the densified matrix.
    pub densify: Option<DensifyConfig>,
    pub design: DesignSpec,
    pub linear: LinearHyper,
    pub grid: GridAxes,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inventory: None,
            inventory_format: None,
            features: None,
            out: PathBuf::from("out"),
            trials: 10,
            learner: "linear".into(),
            world: SynthWorldConfig::default(),
            densify: None,
            design: DesignSpec::default(),
            linear: LinearHyper::default(),
            grid: GridAxes::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Data,
    Design,
    Trial,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Io => 3,
            ErrorKind::Data => 4,
            ErrorKind::Design => 5,
            ErrorKind::Trial => 6,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Io => "io",
            ErrorKind::Data => "data",
            ErrorKind::Design => "design",
            ErrorKind::Trial => "trial",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    fn new(kind: ErrorKind, message: impl fmt::Display) -> Self {
        CliError {
            kind,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.kind.label(), self.message)
    }
}

impl std::error::Error for CliError {}

/// Settings after merging the config file with flags.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub learner: LearnerChoice,
}

pub fn resolve(cli: &Cli) -> Result<Resolved, CliError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::new(ErrorKind::Config, format!("{}: {e}", path.display()))
            })?;
            let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| {
                CliError::new(ErrorKind::Config, format!("{}: {e}", path.display()))
            })?;
            // Paths inside the config file are relative to the file.
            let base = path.parent().unwrap_or(Path::new(""));
            for p in [&mut cfg.inventory, &mut cfg.features]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
            if cfg.out.is_relative() {
                cfg.out = base.join(&cfg.out);
            }
            cfg
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.design.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Some(inv) = &cli.inventory {
        config.inventory = Some(inv.clone());
    }
    if let Some(f) = &cli.features {
        config.features = Some(f.clone());
    }
    if let Some(t) = cli.trials {
        config.trials = t;
    }
    if let Some(l) = &cli.learner {
        config.learner = l.clone();
    }
    if config.trials == 0 {
        return Err(CliError::new(
            ErrorKind::Config,
            "trials must be at least 1",
        ));
    }
    let learner = config
        .learner
        .parse()
        .map_err(|e| CliError::new(ErrorKind::Config, e))?;
    for p in [&config.inventory, &config.features].into_iter().flatten() {
        if !p.exists() {
            return Err(CliError::new(
                ErrorKind::Config,
                format!("{} does not exist", p.display()),
            ));
        }
    }
    Ok(Resolved { config, learner })
}

struct Source {
    inventory: Inventory,
    features: Option<FeatureTable>,
}

fn load_source(cfg: &RunConfig) -> Result<Source, CliError> {
    let features = match &cfg.features {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::new(ErrorKind::Io, format!("{}: {e}", path.display())))?;
            Some(
                FeatureTable::parse_csv(&text).map_err(|e| {
                    CliError::new(ErrorKind::Data, format!("{}: {e}", path.display()))
                })?,
            )
        }
        None => None,
    };
    match &cfg.inventory {
        Some(path) => {
            let bytes = fs::read(path)
                .map_err(|e| CliError::new(ErrorKind::Io, format!("{}: {e}", path.display())))?;
            let format = match &cfg.inventory_format {
                Some(f) => f.parse().map_err(|e| CliError::new(ErrorKind::Config, e))?,
                None => InventoryFormat::from_path(path),
            };
            let inventory = parse_inventory(&bytes, format)
                .map_err(|e| CliError::new(ErrorKind::Data, format!("{}: {e}", path.display())))?;
            Ok(Source {
                inventory,
                features,
            })
        }
        None => {
            let (inventory, world_features) =
                generate_world(&cfg.world).map_err(|e| CliError::new(ErrorKind::Config, e))?;
            Ok(Source {
                inventory,
                features: features.or(Some(world_features)),
            })
        }
    }
}

fn matrix(inv: &Inventory) -> Result<CoocMatrix, CliError> {
    build_cooc(inv).map_err(|e| CliError::new(ErrorKind::Data, e))
}

fn design_matrix(cfg: &RunConfig, inv: &Inventory) -> Result<CoocMatrix, CliError> {
    let m = matrix(inv)?;
    match &cfg.densify {
        Some(d) => densify(&m, d)
            .map(|(dense, _)| dense)
            .map_err(|e| CliError::new(ErrorKind::Design, e)),
        None => Ok(m),
    }
}

fn make_learner(choice: &LearnerChoice, hyper: &LinearHyper) -> Box<dyn Learner> {
    match choice {
        LearnerChoice::Memorizer => Box::new(Memorizer),
        LearnerChoice::Linear => Box::new(LinearLearner { hyper: *hyper }),
        LearnerChoice::External(command) => Box::new(ExternalLearner {
            command: command.clone(),
        }),
    }
}

/// Write every file to a temporary sibling first, then rename them all into place.
pub fn write_outputs(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>, CliError> {
    let io = |path: &Path, e: std::io::Error| {
        CliError::new(ErrorKind::Io, format!("{}: {e}", path.display()))
    };
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = fs::write(&tmp, contents) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(io(&tmp, e));
        }
        staged.push((tmp, dir.join(name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, dest) in staged {
        fs::rename(&tmp, &dest).map_err(|e| io(&dest, e))?;
        written.push(dest);
    }
    Ok(written)
}

/// Execute one subcommand; returns a short summary for stdout.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let Resolved {
        config: cfg,
        learner,
    } = resolve(cli)?;
    let source = load_source(&cfg)?;
    let inv = &source.inventory;
    let out = &cfg.out;

    match cli.command {
        Command::Ingest => {
            let report = validate_inventory(inv);
            if !report.is_empty() {
                let lines: Vec<String> = report.iter().map(ToString::to_string).collect();
                return Err(CliError::new(ErrorKind::Data, lines.join("; ")));
            }
            let mut files = vec![("inventory.csv", inv.to_delimited(true))];
            if let Some(f) = &source.features {
                files.push(("features.csv", f.to_csv()));
            }
            write_outputs(out, &files)?;
            Ok(format!(
                "{} instances, {} actions, {} objects, digest {}",
                inv.len(),
                inv.action_vocab.len(),
                inv.object_vocab.len(),
                inv.digest()
            ))
        }
        Command::Cooc => {
            let m = matrix(inv)?;
            write_outputs(out, &[("cooc.csv", render_report(&m))])?;
            let mg = marginals(&m);
            Ok(format!(
                "{}x{} matrix, density {}",
                m.num_actions(),
                m.num_objects(),
                mg.density
            ))
        }
        Command::Densify => {
            let m = matrix(inv)?;
            let dcfg = cfg.densify.unwrap_or_default();
            let (dense, log) =
                densify(&m, &dcfg).map_err(|e| CliError::new(ErrorKind::Design, e))?;
            write_outputs(
                out,
                &[
                    ("densified.csv", render_report(&dense)),
                    ("densify_log.txt", densify_summary(&log)),
                ],
            )?;
            Ok(format!(
                "{}x{} -> {}x{}, {} removals",
                m.num_actions(),
                m.num_objects(),
                dense.num_actions(),
                dense.num_objects(),
                log.len()
            ))
        }
        Command::Design => {
            let m = design_matrix(&cfg, inv)?;
            let spec = &cfg.design;
            let design_err = |e: &dyn fmt::Display| CliError::new(ErrorKind::Design, e);
            let roles = assign_roles(&m, spec).map_err(|e| design_err(&e))?;
            let sample = sample_training_set(&m, &roles, spec).map_err(|e| design_err(&e))?;
            let manifest = generate_splits(&m, &roles, &sample, spec, &inv.digest())
                .map_err(|e| design_err(&e))?;
            write_outputs(out, &[("manifest.json", manifest.to_json())])?;
            for w in &manifest.design.warnings {
                eprintln!("warning: {w}");
            }
            Ok(format!(
                "seed {}: {} train, {} val, {} test",
                spec.seed,
                manifest.train.len(),
                manifest.val.len(),
                manifest.test.len()
            ))
        }
        Command::Run => {
            let m = design_matrix(&cfg, inv)?;
            let learner = make_learner(&learner, &cfg.linear);
            let (report, results) = run_trials(
                inv,
                &m,
                &cfg.design,
                learner.as_ref(),
                source.features.as_ref(),
                cfg.trials,
            )
            .map_err(|e| CliError::new(ErrorKind::Trial, e))?;
            let mut per_trial = String::from("trial_seed,test_type,correct,total\n");
            for r in &results {
                for (t, tally) in &r.tallies {
                    per_trial.push_str(&format!(
                        "{},{},{},{}\n",
                        r.trial_seed, t, tally.correct, tally.total
                    ));
                }
            }
            write_outputs(
                out,
                &[
                    ("report.json", report.to_json()),
                    ("report.csv", report.to_plot_csv()),
                    ("trials.csv", per_trial),
                ],
            )?;
            let summary: Vec<String> = report
                .types
                .iter()
                .map(|(t, s)| match s.half_width_95 {
                    Some(h) => format!("{t} {:.4} ± {:.4}", s.mean, h),
                    None => format!("{t} {:.4}", s.mean),
                })
                .collect();
            Ok(format!(
                "{} ({} trials): {}",
                learner.name(),
                cfg.trials,
                summary.join(", ")
            ))
        }
        Command::Grid => {
            let m = design_matrix(&cfg, inv)?;
            let learner = make_learner(&learner, &cfg.linear);
            let table = run_grid(
                inv,
                &m,
                &cfg.design,
                &cfg.grid,
                learner.as_ref(),
                source.features.as_ref(),
                cfg.trials,
            );
            write_outputs(
                out,
                &[
                    ("grid.csv", table.to_csv()),
                    ("grid_failures.csv", table.failures_csv()),
                ],
            )?;
            for cell in &table.cells {
                if let Err(e) = &cell.outcome {
                    eprintln!(
                        "warning: grid cell c={} u={} N={} failed: {e}",
                        cell.config.c, cell.config.u, cell.config.n
                    );
                }
            }
            Ok(format!(
                "{} grid cells, {} failed",
                table.cells.len(),
                table.failures()
            ))
        }
    }
}

/// Process entry point; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                ErrorKind::Config.exit_code()
            } else {
                0
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.kind.exit_code()
        }
    }
}
