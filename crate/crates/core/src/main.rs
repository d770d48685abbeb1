use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stance_harness::ingest::{self, SourceKind, SourceSpec, StratifyBy, SubsetSpec};
use stance_harness::model::{QapStyle, Split};
use stance_harness::prompt::StsqaConfig;
use stance_harness::runner::{self, report, EvalReport, Method, ReportFormat, RunConfig, RunError, Runner};

#[derive(Parser)]
#[command(
    name = "stance-harness",
    version,
    about = "Chain-of-thought stance detection evaluation harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a source dataset file to canonical JSONL.
    Ingest {
        kind: SourceKind,
        path: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Run one evaluation.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: Option<Method>,
        /// Number of QAP exemplars for StSQA.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        subset: Option<usize>,
        #[arg(long, requires = "subset")]
        seed: Option<u64>,
    },
    /// StSQA runs over several exemplar counts.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        ks: Vec<usize>,
    },
    /// Paired StSQA runs with word-level and semantic-level exemplars.
    CompareStyles {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-emit a finished run's report in other formats.
    Report {
        run_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "json,csv,markdown")]
        format: Vec<ReportFormat>,
    },
    /// Ask the backend to explain one labeled instance and print the QAP as JSON.
    InduceQap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        instance: String,
        #[arg(long, default_value = "semantic_level")]
        style: QapStyle,
        #[arg(long)]
        id: String,
    },
}

fn apply_run_overrides(
    cfg: &mut RunConfig,
    method: Option<Method>,
    k: Option<usize>,
    subset: Option<usize>,
    seed: Option<u64>,
) -> Result<(), RunError> {
    if let Some(m) = method {
        cfg.method = m;
    }
    if let Some(k) = k {
        let stsqa = cfg.stsqa.get_or_insert(StsqaConfig {
            k,
            qap_ids: Vec::new(),
            style: QapStyle::SemanticLevel,
        });
        if stsqa.qap_ids.len() != k {
            stsqa.qap_ids.clear();
        }
        stsqa.k = k;
    }
    if let Some(n) = subset {
        let stratify_by = cfg.subset.as_ref().map_or(StratifyBy::None, |s| s.stratify_by);
        cfg.subset = Some(SubsetSpec {
            n,
            seed: seed.unwrap_or(cfg.seed),
            stratify_by,
        });
    }
    cfg.validate()
}

fn print_report(r: &EvalReport) {
    print!("{}", report::to_markdown(r));
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Ingest { kind, path, out, split } => {
            let d = ingest::load(&SourceSpec::new(kind, path, split))?;
            ingest::write_canonical(&d, &out)?;
            eprintln!(
                "wrote {} instances ({} targets) to {}",
                d.len(),
                d.targets.len(),
                out.display()
            );
        }
        Command::Run {
            config,
            method,
            k,
            subset,
            seed,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            apply_run_overrides(&mut cfg, method, k, subset, seed)?;
            let runner = Runner::from_config(&cfg)?;
            let out = runner.run_eval(&cfg)?;
            print_report(&out.report);
            eprintln!(
                "{} instances, {} cache hits, {} misses -> {}",
                out.manifest.instance_count,
                out.manifest.cache_hits,
                out.manifest.cache_misses,
                out.dir.display()
            );
        }
        Command::Sweep { config, ks } => {
            let cfg = RunConfig::load(&config)?;
            let runner = Runner::from_config(&cfg)?;
            let result = runner.run_qap_sweep(&cfg, &ks)?;
            print!("{}", result.to_csv());
        }
        Command::CompareStyles { config } => {
            let cfg = RunConfig::load(&config)?;
            let runner = Runner::from_config(&cfg)?;
            let cmp = runner.run_style_compare(&cfg)?;
            print!("{}", cmp.to_csv());
        }
        Command::Report { run_dir, format } => {
            let r = EvalReport::load_json(&run_dir.join(format!("{}.json", report::REPORT_STEM)))?;
            for path in runner::emit_report(&r, &run_dir, &format)? {
                eprintln!("wrote {}", path.display());
            }
        }
        Command::InduceQap {
            config,
            instance,
            style,
            id,
        } => {
            let cfg = RunConfig::load(&config)?;
            let runner = Runner::from_config(&cfg)?;
            let dataset = ingest::load(&cfg.source)?;
            let inst = dataset
                .instances
                .iter()
                .find(|i| i.id == instance)
                .ok_or(RunError::UnknownInstance(instance))?;
            let qap = runner.induce_qap(inst, style, &id)?;
            println!("{}", serde_json::to_string(&qap).expect("QAP serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
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
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
