//! Command-line harness: build trees, extract orderings, run optimizers,
//! inspect frontiers, and reproduce the multi-trial experiment tables.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cattree::construct::{build, dissimilarity_ordering, similarity_ordering};
use cattree::dataset::{random_ordering, split, Dataset, Ordering};
use cattree::evaluate::{accuracy, structure_metrics};
use cattree::experiment::{
    run_experiment, run_validate_pipeline, write_experiment, write_pipeline, ExperimentConfig,
    OrderingCondition, Strategy,
};
use cattree::frontier::{accumulate, frontier_report, frontier_stats, prune, select_frontiers};
use cattree::objective::ObjectiveId;
use cattree::optimize::{
    hierarchical_redistribution, layered_build, redistribute_single, reorder_resort,
};
use cattree::synth;

#[derive(Parser)]
#[command(
    name = "cattree",
    about = "Probabilistic categorization trees: hierarchical sorting, iterative optimization, holdout pruning",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Pu,
    PuInfo,
    NormGr,
    NormDm,
}

impl From<ObjectiveArg> for ObjectiveId {
    fn from(o: ObjectiveArg) -> ObjectiveId {
        match o {
            ObjectiveArg::Pu => ObjectiveId::Pu,
            ObjectiveArg::PuInfo => ObjectiveId::PuInfo,
            ObjectiveArg::NormGr => ObjectiveId::NormGainRatio,
            ObjectiveArg::NormDm => ObjectiveId::NormDeMantaras,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// CSV file of nominal values
    #[arg(long)]
    data: PathBuf,
    /// Treat the first row as a header
    #[arg(long)]
    header: bool,
}

impl DataArgs {
    fn load(&self) -> anyhow::Result<Dataset> {
        Dataset::load_csv(&self.data, self.header)
            .with_context(|| format!("loading {}", self.data.display()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sort a dataset into a categorization tree and dump it as JSON
    Build {
        #[command(flatten)]
        data: DataArgs,
        /// Maximum leaf depth; omit for unbounded growth
        #[arg(long)]
        height: Option<usize>,
        #[arg(long, value_enum, default_value = "pu")]
        objective: ObjectiveArg,
        /// Seed for the sort ordering
        #[arg(long, default_value = "0")]
        seed: u64,
        /// Output file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit an observation ordering, one id per line
    Order {
        #[command(flatten)]
        data: DataArgs,
        /// random, dissimilarity, or similarity
        #[arg(long, default_value = "random")]
        kind: String,
        #[arg(long, default_value = "0")]
        seed: u64,
        /// Height of the underlying build for tree-derived orderings
        #[arg(long, default_value = "2")]
        height: usize,
        #[arg(long, value_enum, default_value = "pu")]
        objective: ObjectiveArg,
    },
    /// Optimize a freshly built tree and report what happened
    Optimize {
        #[command(flatten)]
        data: DataArgs,
        /// reorder, single, or hier
        #[arg(long)]
        strategy: String,
        #[arg(long, default_value = "2")]
        height: usize,
        #[arg(long, value_enum, default_value = "pu")]
        objective: ObjectiveArg,
        #[arg(long, default_value = "0")]
        seed: u64,
        /// Dump the optimized tree here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split, build a full-depth tree, and report per-variable frontiers
    Validate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "pu")]
        objective: ObjectiveArg,
        #[arg(long, default_value = "0")]
        seed: u64,
    },
    /// Run the full validation pipeline over multiple trials
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "pu")]
        objective: ObjectiveArg,
        #[arg(long, default_value = "20")]
        trials: usize,
        #[arg(long, default_value = "0")]
        seed: u64,
        /// Output directory for pipeline.csv, cost.csv, manifest.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare optimization strategies over multiple trials
    Experiment {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "pu")]
        objective: ObjectiveArg,
        /// Comma-separated subset of sort,reorder,single,hier
        #[arg(long, default_value = "sort,reorder,single,hier")]
        strategies: String,
        #[arg(long, default_value = "2")]
        height: usize,
        #[arg(long, default_value = "20")]
        trials: usize,
        #[arg(long, default_value = "0")]
        seed: u64,
        /// random or similarity trial orderings
        #[arg(long, default_value = "random")]
        ordering: String,
        /// Output directory for results.csv, timings.csv, manifest.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic benchmark-shaped dataset as CSV
    Synth {
        /// house or mushroom
        #[arg(long)]
        kind: String,
        #[arg(long, default_value = "0")]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Build {
            data,
            height,
            objective,
            seed,
            out,
        } => {
            let d = data.load()?;
            let ord = random_ordering(&d, seed)?;
            let tree = build(&d, &ord, height, objective.into())?;
            write_or_print(out.as_ref(), &tree.dump_json())?;
        }
        Command::Order {
            data,
            kind,
            seed,
            height,
            objective,
        } => {
            let d = data.load()?;
            let base = random_ordering(&d, seed)?;
            let ord: Ordering = match kind.as_str() {
                "random" => base,
                "dissimilarity" | "similarity" => {
                    let tree = build(&d, &base, Some(height), objective.into())?;
                    if kind == "dissimilarity" {
                        dissimilarity_ordering(&tree)?
                    } else {
                        similarity_ordering(&tree)?
                    }
                }
                other => bail!("unknown ordering kind '{other}'"),
            };
            let mut text = String::new();
            for id in &ord.permutation {
                text.push_str(&format!("{id}\n"));
            }
            print!("{text}");
        }
        Command::Optimize {
            data,
            strategy,
            height,
            objective,
            seed,
            out,
        } => {
            let d = data.load()?;
            let obj: ObjectiveId = objective.into();
            let ord = random_ordering(&d, seed)?;
            let strategy: Strategy = strategy.parse()?;
            let (tree, report) = match strategy {
                Strategy::Sort => bail!("'sort' is not an optimizer; use build"),
                Strategy::ReorderResort => reorder_resort(&d, &ord, Some(height), obj)?,
                Strategy::SingleRedistribution => {
                    let mut t = build(&d, &ord, Some(height), obj)?;
                    let r = redistribute_single(&mut t, obj)?;
                    (t, r)
                }
                Strategy::HierarchicalRedistribution => {
                    let mut t = build(&d, &ord, Some(height), obj)?;
                    let r = hierarchical_redistribution(&mut t, obj)?;
                    (t, r)
                }
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(p) = out {
                std::fs::write(&p, tree.dump_json())
                    .with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Validate {
            data,
            objective,
            seed,
        } => {
            let d = data.load()?;
            let obj: ObjectiveId = objective.into();
            let s = split(&d, (0.4, 0.4, 0.2), seed)?;
            let train = cattree::dataset::shuffled_ids(&s.train, seed);
            let tree = layered_build(&d, &Ordering::new(train), obj)?;
            let validation: Vec<_> = s
                .validation
                .iter()
                .map(|&i| d.observations[i as usize].clone())
                .collect();
            let table = accumulate(&tree, &validation, obj)?;
            let frontier = select_frontiers(&table, &tree)?;
            let stats = frontier_stats(&frontier);
            for var in 0..d.n_variables() {
                println!(
                    "variable {} ({}): frontier size {}",
                    var,
                    d.schema.var(var).name,
                    frontier.per_var[var].len()
                );
                for e in frontier_report(&tree, &table, &frontier, var) {
                    println!(
                        "  node {} depth {} size {} correct {}",
                        e.node, e.depth, e.size, e.correct
                    );
                }
            }
            println!("mean frontier size: {:.2}", stats.mean);
            let pruned = prune(&tree, &frontier)?;
            let m = structure_metrics(&pruned)?;
            println!(
                "validated leaves: {} (unvalidated: {})",
                m.leaves,
                tree.leaves().len()
            );
            let test: Vec<_> = s
                .test
                .iter()
                .map(|&i| d.observations[i as usize].clone())
                .collect();
            println!(
                "test accuracy: validated {:.4}, unvalidated {:.4}",
                accuracy(&tree, &test, Some(&frontier), obj)?,
                accuracy(&tree, &test, None, obj)?
            );
        }
        Command::Evaluate {
            data,
            objective,
            trials,
            seed,
            out,
        } => {
            let d = data.load()?;
            let cfg = ExperimentConfig {
                objective: objective.into(),
                trials,
                seed,
                ..Default::default()
            };
            let result = run_validate_pipeline(&d, &cfg)?;
            write_pipeline(&d, &cfg, &result, &out)?;
            for a in &result.aggregates {
                println!(
                    "{} {}: leaves {:.2} ({:.2}), accuracy {:.3} ({:.3}), frontier {:.2} ({:.2})",
                    a.condition.name(),
                    if a.validated { "validated" } else { "unvalidated" },
                    a.leaves_mean,
                    a.leaves_std,
                    a.accuracy_mean,
                    a.accuracy_std,
                    a.frontier_mean,
                    a.frontier_std
                );
            }
            println!("tables written to {}", out.display());
        }
        Command::Experiment {
            data,
            objective,
            strategies,
            height,
            trials,
            seed,
            ordering,
            out,
        } => {
            let d = data.load()?;
            let strategies: Vec<Strategy> = strategies
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<cattree::Result<_>>()?;
            let ordering: OrderingCondition = ordering.parse()?;
            let cfg = ExperimentConfig {
                objective: objective.into(),
                strategies,
                height,
                trials,
                seed,
                ordering,
                ..Default::default()
            };
            let result = run_experiment(&d, &cfg)?;
            write_experiment(&d, &cfg, &result, &out)?;
            for a in &result.aggregates {
                println!("{:<8} {:.4} ({:.4})", a.strategy.name(), a.mean, a.std);
            }
            println!("tables written to {}", out.display());
        }
        Command::Synth { kind, seed, out } => {
            let d = match kind.as_str() {
                "house" => synth::house_votes_like(seed)?,
                "mushroom" => synth::mushroom_like(seed)?,
                other => bail!("unknown synthetic dataset '{other}'"),
            };
            let mut text = String::new();
            let names: Vec<&str> = d.schema.vars().iter().map(|v| v.name.as_str()).collect();
            text.push_str(&names.join(","));
            text.push('\n');
            for obs in &d.observations {
                text.push_str(&d.decode(obs).join(","));
                text.push('\n');
            }
            std::fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "wrote {} ({} observations, {} variables)",
                out.display(),
                d.n_observations(),
                d.n_variables()
            );
        }
    }
    Ok(())
}
