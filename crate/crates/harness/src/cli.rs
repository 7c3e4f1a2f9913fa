use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::boxplot::emit_boxplot;
use crate::config::{read_config, HazardConfig, LinearConfig};
use crate::error::{HarnessError, Result};
use crate::hazard::{self, run_hazard_experiment};
use crate::linear_exp::{self, run_linear_experiment};
use crate::output::CsvTable;
use crate::selftest::run_selftest;

#[derive(Debug, Parser)]
#[command(name = "minimax", version, about = "Near-minimax estimation experiments")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: the config's `out`, else `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Linear-form experiment (Gaussian singletons or a custom problem).
    Linear(RunArgs),
    /// Hazard-rate bisection experiment.
    Hazard(RunArgs),
    /// Boxplot of a runner CSV.
    Boxplot {
        /// CSV written by `linear` or `hazard`.
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grouping column (default per table kind).
        #[arg(long)]
        group: Option<String>,
        /// Value column (default per table kind).
        #[arg(long)]
        value: Option<String>,
    },
    /// Quick end-to-end checks.
    Selftest,
}

fn out_dir(flag: Option<&Path>, cfg: Option<&Path>) -> Result<PathBuf> {
    let dir = flag.or(cfg).map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    Ok(dir)
}

fn write_svg(table: &CsvTable, path: &Path) -> Result<()> {
    let svg = emit_boxplot(&table.to_bytes(), None, None)?;
    std::fs::write(path, svg).map_err(|e| HarnessError::io(path, e))
}

pub fn run(cli: Cli) -> Result<()> {
    let pool = match cli.threads {
        Some(0) => return Err(HarnessError::Config("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| HarnessError::Config(e.to_string()))?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Linear(a) => {
            let mut cfg = LinearConfig::from_json(&read_config(&a.config)?)?;
            if let Some(s) = a.seed {
                *cfg.seed_mut() = s;
            }
            let dir = out_dir(a.out.as_deref(), cfg.out())?;
            let res = run_linear_experiment(&cfg)?;
            let kind = match cfg {
                LinearConfig::GaussianSingletons(_) => crate::config::LINEAR_KIND,
                LinearConfig::Custom(_) => crate::config::CUSTOM_KIND,
            };
            let table = linear_exp::records_table(kind, &res.records);
            table.write(&dir.join("linear.csv"))?;
            let summary = linear_exp::cells_table(&res.cells);
            summary.write(&dir.join("linear_summary.csv"))?;
            res.timing.write(&dir.join("linear_timing.json"))?;
            write_svg(&table, &dir.join("linear.svg"))?;
            println!("K\tmedian max rho\tcoverage\tfloor");
            for c in &res.cells {
                println!("{}\t{:.6}\t{:.4}\t{:.4}", c.k, c.median_rho_max, c.coverage, c.coverage_floor);
            }
            println!("wrote {}", dir.display());
            Ok(())
        }
        Command::Hazard(a) => {
            let mut cfg = HazardConfig::from_json(&read_config(&a.config)?)?;
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            let dir = out_dir(a.out.as_deref(), cfg.out.as_deref())?;
            let res = run_hazard_experiment(&cfg)?;
            let table = hazard::records_table(&res.records);
            table.write(&dir.join("hazard.csv"))?;
            hazard::cells_table(&res.cells).write(&dir.join("hazard_summary.csv"))?;
            res.timing.write(&dir.join("hazard_timing.json"))?;
            let group = if cfg.thetas.len() > 1 && cfg.k_grid.len() == 1 { "theta" } else { "K" };
            let svg = emit_boxplot(&table.to_bytes(), Some(group), Some("error"))?;
            let path = dir.join("hazard.svg");
            std::fs::write(&path, svg).map_err(|e| HarnessError::io(&path, e))?;
            println!("theta\tK\tcoverage\tfloor\tmedian error\tinitial half-width");
            for c in &res.cells {
                println!(
                    "{}\t{}\t{:.4}\t{:.4}\t{:.6}\t{:.6}",
                    c.theta, c.k, c.coverage, c.coverage_floor, c.median_error, c.initial_half_width
                );
            }
            println!("wrote {}", dir.display());
            Ok(())
        }
        Command::Boxplot { csv, out, group, value } => {
            let bytes = std::fs::read(&csv).map_err(|e| HarnessError::Csv(format!("{}: {e}", csv.display())))?;
            let svg = emit_boxplot(&bytes, group.as_deref(), value.as_deref())?;
            let path = match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
                    dir.join(csv.with_extension("svg").file_name().expect("csv path has a file name"))
                }
                None => csv.with_extension("svg"),
            };
            std::fs::write(&path, svg).map_err(|e| HarnessError::io(&path, e))?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Selftest => {
            let failed = run_selftest(&mut std::io::stdout())?;
            if failed > 0 {
                return Err(HarnessError::Numerical(minimax_core::Error::InvalidInput(format!(
                    "{failed} self-test check(s) failed"
                ))));
            }
            Ok(())
        }
    }
}
