use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tnet_infer::order::DEFAULT_EXHAUSTIVE_LIMIT;
use tnet_infer::{
    build_network, complexity_report, compute_mar, compute_mmap, compute_mpe, compute_pr, draw_samples, parse_evidence, parse_model,
    parse_query, write_result, Error, Evidence, ModelSpec, OrderStrategy, Result, ResultPayload, TaskOptions,
};

#[derive(Parser)]
#[command(name = "tnet-infer", version, about = "Exact inference on UAI models by tensor-network contraction")]
struct Cli {
    #[command(subcommand)]
    task: Task,
}

#[derive(Subcommand)]
enum Task {
    /// log10 probability of the evidence
    Pr(Common),
    /// Marginal of every unobserved variable
    Mar(Common),
    /// Most probable explanation
    Mpe(Common),
    /// Marginal MAP over the query variables
    Mmap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        query: PathBuf,
    },
    /// Exact samples of the unobserved variables
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        num_samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Contraction-order complexity of the model
    Stats(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    evidence: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Order::Greedy)]
    order: Order,
    #[arg(long, default_value_t = 28.0)]
    space_cap: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    Greedy,
    Exhaustive,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load(c: &Common) -> Result<(ModelSpec, Evidence, TaskOptions)> {
    let model = parse_model(&read(&c.model)?)?;
    let evidence = match &c.evidence {
        Some(p) => parse_evidence(&read(p)?, &model)?,
        None => Evidence::default(),
    };
    let strategy = match c.order {
        Order::Greedy => OrderStrategy::Greedy,
        Order::Exhaustive => OrderStrategy::Exhaustive {
            max_tensors: DEFAULT_EXHAUSTIVE_LIMIT,
        },
    };
    let opts = TaskOptions {
        strategy,
        space_cap: Some(c.space_cap),
    };
    Ok((model, evidence, opts))
}

fn run(task: &Task) -> Result<String> {
    let common = match task {
        Task::Pr(c) | Task::Mar(c) | Task::Mpe(c) | Task::Stats(c) => c,
        Task::Mmap { common, .. } | Task::Sample { common, .. } => common,
    };
    let (model, evidence, opts) = load(common)?;
    let net = build_network::<f64>(&model)?;
    let e = &evidence.assignment;
    let text = match task {
        Task::Pr(_) => write_result(&ResultPayload::Pr(compute_pr(&net, e, &opts)?)),
        Task::Mar(_) => {
            let table = compute_mar(&net, e, None, &opts)?;
            let rows: Vec<(usize, Vec<f64>)> = table.entries.into_iter().map(|m| (m.probs.len(), m.probs)).collect();
            write_result(&ResultPayload::Mar(&rows))
        }
        Task::Mpe(_) => write_result(&ResultPayload::Mpe(&compute_mpe(&net, e, &opts)?.assignment)),
        Task::Mmap { query, .. } => {
            let q = parse_query(&read(query)?, &model)?;
            write_result(&ResultPayload::Mmap(&compute_mmap(&net, e, &q, &opts)?.assignment))
        }
        Task::Sample { num_samples, seed, .. } => {
            let batch = draw_samples(&net, e, *num_samples as usize, *seed, &opts)?;
            write_result(&ResultPayload::Samples(&batch.samples))
        }
        Task::Stats(_) => {
            let sliced = net.sliced(e)?;
            if sliced.tensors().is_empty() {
                "space=0.0 time=0.0 rw=0.0\n".to_string()
            } else {
                let tree = opts.strategy.build(&sliced)?;
                let r = complexity_report(&sliced, &tree);
                format!("space={:?} time={:?} rw={:?}\n", r.space, r.time, r.rw)
            }
        }
    };
    Ok(text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let output = match &cli.task {
        Task::Pr(c) | Task::Mar(c) | Task::Mpe(c) | Task::Stats(c) => c.output.clone(),
        Task::Mmap { common, .. } | Task::Sample { common, .. } => common.output.clone(),
    };
    let result = run(&cli.task).and_then(|text| match &output {
        Some(p) => fs::write(p, text).map_err(|source| Error::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(1)
        }
    }
}
