use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hgsg::commands::{self, EvalCommandConfig, HierarchyBuildConfig, HierarchyMethod, ToyTrainConfig};
use hgsg::{selftest, CliError};
use hgsg_core::hierarchy::OovPolicy;
use hgsg_core::sgeval::Task;
use hgsg_core::{BackwardFault, PoolMode};

/// Predicate hierarchies, hierarchy-guided feature learning at toy scale,
/// and scene-graph recall evaluation.
///
/// Exit codes: 0 success, 1 self-test failure, 2 missing or malformed
/// input, 3 labels without word vectors, 4 invalid parameter, 5 image id
/// mismatch, 6 training divergence.
#[derive(Parser)]
#[command(name = "hgsg", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predicate hierarchy tools.
    Hierarchy {
        #[command(subcommand)]
        action: HierarchyAction,
    },
    /// Recall@K for PredDet, PhrDet and SGGen.
    Eval(EvalArgs),
    /// Train the fine-only baseline and the dual-branch model on synthetic
    /// region features.
    ToyTrain(ToyTrainArgs),
    /// Run the invariant suite.
    Selftest(SelftestArgs),
}

#[derive(Subcommand)]
enum HierarchyAction {
    /// Cluster a predicate lexicon into parent classes.
    Build(BuildArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Auto,
    Keyword,
}

#[derive(Clone, Copy, ValueEnum)]
enum Oov {
    Skip,
    Zero,
    Error,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pooling {
    Max,
    Mean,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    Relu,
    Matmul,
}

#[derive(clap::Args)]
struct BuildArgs {
    /// Lexicon JSON: [{"label": ..., "count": ...}, ...].
    #[arg(long)]
    lexicon: PathBuf,
    /// Word vectors, one `token v1 ... vd` per line.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Number of parent classes.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    method: Method,
    /// Handling of label tokens without vectors.
    #[arg(long, value_enum, default_value_t = Oov::Skip)]
    oov: Oov,
    /// Drop labels with fewer occurrences.
    #[arg(long, default_value_t = 0)]
    min_freq: u64,
    /// Output hierarchy JSON.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Ground-truth scene graphs, JSON lines.
    #[arg(long)]
    gt: PathBuf,
    /// Predicted triplets, JSON lines.
    #[arg(long)]
    pred: PathBuf,
    /// Also report recall over parent predicates.
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "50,100")]
    ks: Vec<usize>,
    /// `all`, `PredDet`, `PhrDet` or `SGGen`; repeatable or comma separated.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    task: Vec<String>,
    /// Pool hits over the dataset instead of averaging per image.
    #[arg(long)]
    micro: bool,
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// SGGen requires IoU strictly above the threshold.
    #[arg(long)]
    strict_sggen: bool,
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct ToyTrainArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    lr: f64,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    /// Train the dual-branch model without the guided module.
    #[arg(long)]
    no_hgm: bool,
    #[arg(long, value_enum, default_value_t = Pooling::Max)]
    pooling: Pooling,
    /// Batch norm inside the module's transforms.
    #[arg(long)]
    bn: bool,
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    separation: Option<f64>,
    /// Directory for per-variant reports, loss curves and the comparison.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct SelftestArgs {
    #[arg(long)]
    json: bool,
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<Fault>,
}

fn parse_tasks(raw: &[String]) -> Result<Vec<Task>, CliError> {
    let mut tasks = Vec::new();
    for t in raw {
        let add: Vec<Task> =
            if t.eq_ignore_ascii_case("all") { Task::ALL.to_vec() } else { vec![Task::parse(t)?] };
        for task in add {
            if !tasks.contains(&task) {
                tasks.push(task);
            }
        }
    }
    Ok(tasks)
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Hierarchy { action: HierarchyAction::Build(a) } => commands::cmd_hierarchy_build(&HierarchyBuildConfig {
            lexicon: a.lexicon,
            vectors: a.vectors,
            method: match a.method {
                Method::Auto => HierarchyMethod::Auto,
                Method::Keyword => HierarchyMethod::Keyword,
            },
            k: a.k,
            seed: a.seed,
            oov: match a.oov {
                Oov::Skip => OovPolicy::Skip,
                Oov::Zero => OovPolicy::Zero,
                Oov::Error => OovPolicy::Error,
            },
            min_freq: a.min_freq,
            out: a.out,
            json: a.json,
        }),
        Command::Eval(a) => commands::cmd_eval(&EvalCommandConfig {
            gt: a.gt,
            pred: a.pred,
            hierarchy: a.hierarchy,
            ks: a.ks,
            tasks: parse_tasks(&a.task)?,
            micro: a.micro,
            iou: a.iou,
            strict_sggen: a.strict_sggen,
            json: a.json,
        }),
        Command::ToyTrain(a) => commands::cmd_toy_train(&ToyTrainConfig {
            seed: a.seed,
            lr: a.lr,
            steps: a.steps,
            hgm: !a.no_hgm,
            pooling: match a.pooling {
                Pooling::Max => PoolMode::Max,
                Pooling::Mean => PoolMode::Mean,
            },
            batch_norm: a.bn,
            regions: a.regions,
            noise: a.noise,
            separation: a.separation,
            out: a.out,
            json: a.json,
        })
        .map(|(text, _)| text),
        Command::Selftest(a) => {
            let fault = a.inject_fault.map(|f| match f {
                Fault::Relu => BackwardFault::ReluDoubled,
                Fault::Matmul => BackwardFault::MatMulRhsZeroed,
            });
            let results = selftest::run(fault);
            let text = if a.json {
                hgsg::formats::to_json(&results)
            } else {
                results
                    .iter()
                    .map(|r| format!("{:<4} {:<24} {}\n", if r.pass { "ok" } else { "FAIL" }, r.name, r.detail))
                    .collect()
            };
            let failed: Vec<String> = results.iter().filter(|r| !r.pass).map(|r| r.name.to_string()).collect();
            if failed.is_empty() {
                Ok(text)
            } else {
                print!("{text}");
                Err(CliError::SelfTest(failed))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
