use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use reapsnap_core::analysis::{render_results_csv, write_results_csv, ResultRow};
use reapsnap_core::bench::{self, Bench, BenchError, ExperimentConfig};
use reapsnap_core::engine::RestoreMode;

#[derive(Parser)]
#[command(name = "reapsnap", version, about = "Snapshot restore engine with working-set record and prefetch")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Key/value experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overridden by REAPSNAP_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Storage calibration table.
    #[arg(long, global = true)]
    calibration: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Lazy,
    Record,
    Prefetch,
}

impl From<Mode> for RestoreMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Lazy => RestoreMode::LazyBaseline,
            Mode::Record => RestoreMode::Record,
            Mode::Prefetch => RestoreMode::Prefetch,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Snapshot image management.
    Snapshot {
        #[command(subcommand)]
        action: SnapshotCmd,
    },
    /// Record the working set of a function.
    Record {
        #[arg(long)]
        profile: String,
    },
    /// Cold invocations in one restore mode.
    Coldstart {
        /// Preset name, or `all`.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        repeats: Option<u32>,
    },
    /// Four-step optimization ablation.
    OptSteps {
        #[arg(long)]
        profile: String,
    },
    /// Concurrent cold starts sharing one disk.
    Sweep {
        #[arg(long)]
        profile: String,
        /// Comma-separated instance counts.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<u32>>,
    },
    /// Contiguity, footprint and reuse of trace or sequence files.
    Analyze {
        paths: Vec<PathBuf>,
        #[arg(long, default_value_t = 4096)]
        page_size: u32,
    },
    /// Measure a real file's read throughput and print a calibration table.
    MeasureDisk { path: PathBuf },
}

#[derive(Subcommand)]
enum SnapshotCmd {
    Create {
        #[arg(long)]
        pages: Option<u64>,
        #[arg(long)]
        page_size: Option<u32>,
        #[arg(long)]
        content_seed: Option<u64>,
        #[arg(long)]
        vmm_bytes: Option<u64>,
    },
}

fn config(g: &Global) -> Result<ExperimentConfig, BenchError> {
    let mut c = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    c.apply_env();
    if let Some(out) = &g.out {
        c.out = out.clone();
    }
    if let Some(cal) = &g.calibration {
        c.calibration = Some(cal.clone());
    }
    if let Some(seed) = g.seed {
        c.seed = seed;
    }
    Ok(c)
}

fn emit<T: Serialize>(format: Format, value: &T, csv: impl FnOnce() -> String) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(value).expect("outputs serialize")),
        Format::Csv => print!("{}", csv()),
    }
}

fn run(cli: Cli) -> Result<(), BenchError> {
    let g = &cli.global;
    match cli.command {
        Command::Snapshot { action: SnapshotCmd::Create { pages, page_size, content_seed, vmm_bytes } } => {
            let mut c = config(g)?;
            c.num_pages = pages.unwrap_or(c.num_pages);
            c.page_size = page_size.unwrap_or(c.page_size);
            c.content_seed = content_seed.unwrap_or(c.content_seed);
            c.vmm_state_bytes = vmm_bytes.unwrap_or(c.vmm_state_bytes);
            let image = bench::cmd_snapshot_create(&c)?;
            println!("{} {} pages x {} B, id {}", image.dir().display(), image.num_pages(), image.page_size(), image.id());
        }
        Command::Record { profile } => {
            let b = Bench::open(config(g)?)?;
            let rec = bench::cmd_record(&b, &profile)?;
            emit(g.format, &rec, || {
                let rows = [ResultRow::new(&rec.function, &rec.lazy), ResultRow::new(&rec.function, &rec.report)];
                format!("{}overhead,{:.4}\n", render_results_csv(&rows).unwrap(), rec.overhead)
            });
        }
        Command::Coldstart { profile, mode, repeats } => {
            let mut c = config(g)?;
            if let Some(p) = profile {
                c.profiles = if p == "all" { Vec::new() } else { vec![p] };
            }
            if let Some(r) = repeats {
                c.repeats = r;
            }
            let b = Bench::open(c)?;
            let mut outcomes = Vec::new();
            let mut rows = Vec::new();
            for p in b.selected_profiles() {
                let o = bench::cmd_coldstart(&b, &p.name, mode.into(), b.config.repeats)?;
                rows.extend(o.rows());
                outcomes.push(o);
            }
            write_results_csv(b.config.out.join("results.csv"), &rows)?;
            emit(g.format, &outcomes, || render_results_csv(&rows).unwrap());
        }
        Command::OptSteps { profile } => {
            let b = Bench::open(config(g)?)?;
            let o = bench::cmd_opt_steps(&b, &profile)?;
            emit(g.format, &o, || o.render_csv());
        }
        Command::Sweep { profile, counts } => {
            let mut c = config(g)?;
            if let Some(counts) = counts {
                c.concurrency = counts;
            }
            let b = Bench::open(c)?;
            let o = bench::cmd_sweep_concurrency(&b, &profile, &b.config.concurrency)?;
            emit(g.format, &o, || o.render_csv());
        }
        Command::Analyze { paths, page_size } => {
            let o = bench::cmd_analyze(&paths, page_size)?;
            emit(g.format, &o, || {
                if o.reuse.is_empty() {
                    o.files_csv()
                } else {
                    format!("{}\n{}", o.files_csv(), o.reuse_csv())
                }
            });
        }
        Command::MeasureDisk { path } => {
            let (table, measured) = bench::cmd_measure_disk(&path)?;
            for (pattern, mbps) in &measured {
                match mbps {
                    Some(v) => eprintln!("{pattern}: {v:.1} MB/s"),
                    None => eprintln!("{pattern}: unsupported on this file system"),
                }
            }
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("reapsnap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
