use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use simest::harness::{self, emit_figure_data, emit_table, RunConfig, TableFormat};
use simest::oracles::{exact_posterior_cdf, table2_row, NormalOracleInput, Table2Estimator};
use simest::weights::weighted_ecdf_distance;
use simest::Result;

#[derive(Parser)]
#[command(name = "simest", version, about = "Simulation-based estimators and their Monte Carlo experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replace the master seed of the config.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Replace the output directory of the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment or figure config and write its outputs.
    Run {
        config: PathBuf,
        /// Markdown with estimators as columns.
        #[arg(long)]
        paper_layout: bool,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
    /// Closed-form moments of a normal-model estimator ("all" lists every row).
    Oracle {
        estimator: String,
        #[arg(long = "T", alias = "t")]
        t: usize,
        #[arg(long = "S", alias = "s", default_value_t = 1)]
        s: usize,
        #[arg(long = "B", alias = "b", default_value_t = 1)]
        b: usize,
        #[arg(long)]
        sigma2: f64,
        /// Observed ML variance for the conditional column (default: sigma2).
        #[arg(long)]
        sigma2_hat: Option<f64>,
    },
    /// Reverse sampler against the exact posterior on one normal dataset.
    Figure1 {
        #[arg(long = "B", alias = "b", default_value_t = 50_000)]
        b: usize,
        #[arg(long = "T", alias = "t", default_value_t = 10)]
        t: usize,
        #[arg(long, default_value_t = 20240605)]
        seed: u64,
    },
    /// Quick end-to-end checks; exit status 2 if any falls outside its band.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Run { config, paper_layout, format } => {
            match RunConfig::load(config)? {
                RunConfig::Experiment(mut cfg) => {
                    if let Some(seed) = cli.seed_override {
                        cfg.master_seed = seed;
                    }
                    if let Some(dir) = &cli.out_dir {
                        cfg.out_dir = dir.clone();
                    }
                    let table = harness::run_replications(&cfg)?;
                    fs::create_dir_all(&cfg.out_dir)?;
                    let csv = cfg.out_dir.join(format!("{}.csv", cfg.name));
                    emit_table(&table, TableFormat::Csv, BufWriter::new(File::create(&csv)?))?;
                    let layout = if *paper_layout { TableFormat::PaperMarkdown } else { TableFormat::Markdown };
                    let md = cfg.out_dir.join(format!("{}.md", cfg.name));
                    emit_table(&table, layout, BufWriter::new(File::create(&md)?))?;
                    let shown = match format {
                        Format::Csv => TableFormat::Csv,
                        Format::Markdown => layout,
                    };
                    emit_table(&table, shown, io::stdout().lock())?;
                    for r in &table.results {
                        eprintln!("{}: {:.1}s", r.label, r.seconds);
                    }
                }
                RunConfig::Figure1 { name, out_dir, figure } => {
                    let dir = cli.out_dir.clone().unwrap_or(out_dir);
                    let seed = cli.seed_override.unwrap_or(figure.seed);
                    run_figure(&dir, &name, figure.t, figure.b, seed)?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { estimator, t, s, b, sigma2, sigma2_hat } => {
            let input = NormalOracleInput {
                s: *s,
                b: *b,
                sigma2_hat: sigma2_hat.unwrap_or(*sigma2),
                ..NormalOracleInput::new(*t, *sigma2)
            };
            let which = if estimator == "all" { Table2Estimator::ALL.to_vec() } else { vec![Table2Estimator::parse(estimator)?] };
            let mut out = io::stdout().lock();
            writeln!(out, "estimator,expected,bias,variance,conditional")?;
            for e in which {
                let row = table2_row(e, &input)?;
                let cond = row.conditional.map_or(String::new(), |c| c.to_string());
                writeln!(out, "{e:?},{},{},{},{cond}", row.expected, row.bias, row.variance)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Figure1 { b, t, seed } => {
            let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
            run_figure(&dir, "figure1", *t, *b, cli.seed_override.unwrap_or(*seed))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let checks = harness::selftest::run(cli.seed_override.unwrap_or(20240607))?;
            for c in &checks {
                println!("{c}");
            }
            Ok(if checks.iter().all(|c| c.passed()) { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn run_figure(dir: &Path, name: &str, t: usize, b: usize, seed: u64) -> Result<()> {
    let fig = harness::figure1(t, b, seed)?;
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{name}.csv"));
    let mut file = BufWriter::new(File::create(&path)?);
    writeln!(file, "# t = {t}, b = {b}, seed = {seed}, sigma2_hat = {}", fig.sigma2_hat)?;
    emit_figure_data(&fig.grids, &mut file)?;
    file.flush()?;
    let oracle = fig.oracle_input();
    let cdf = |x: f64| exact_posterior_cdf(&oracle, x).unwrap_or(f64::NAN);
    println!("sigma2_hat = {}", fig.sigma2_hat);
    println!("ECDF distance, RS with Jacobian: {:.4}", weighted_ecdf_distance(&fig.draws, 1, cdf)?);
    println!("ECDF distance, RS without Jacobian: {:.4}", weighted_ecdf_distance(&fig.unweighted, 1, cdf)?);
    println!("wrote {}", path.display());
    Ok(())
}
