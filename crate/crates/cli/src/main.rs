use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use polytree_cli::commands::{self, Bounds, FactorKind, HomFilter, Report, SCHEMA_VERSION};
use polytree_cli::{CliError, Env};
use serde_json::json;

/// Polynomial endofunctors, trees and their combinatorics.
#[derive(Parser)]
#[command(name = "polytree", version)]
struct Cli {
    /// Document to read; standard input when absent.
    #[arg(short, long, global = true)]
    file: Option<PathBuf>,
    /// Edge bound for enumerations and truncated sites.
    #[arg(long, global = true, env = "POLYTREE_MAX_EDGES")]
    max_edges: Option<usize>,
    /// Node bound for enumerations.
    #[arg(long, global = true, env = "POLYTREE_MAX_NODES")]
    max_nodes: Option<usize>,
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Print nothing; only the exit status reports the verdict.
    #[arg(long, global = true)]
    quiet: bool,
    /// Write the output to a file instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum HomArg {
    All,
    Injective,
    Surjective,
    BoundaryPreserving,
    Free,
}

#[derive(Clone, Copy, ValueEnum)]
enum FactorArg {
    SurjInj,
    GenericFree,
    Triple,
}

#[derive(Subcommand)]
enum Command {
    /// Check a definition and summarise it.
    Validate { name: String },
    /// List or count the subtrees of a tree.
    Subtrees {
        tree: String,
        #[arg(long)]
        count: bool,
    },
    /// Graft UPPER onto the leaf LEAF of LOWER.
    Graft {
        upper: String,
        lower: String,
        leaf: String,
        /// Name of the resulting tree.
        #[arg(long)]
        name: Option<String>,
    },
    /// Remove everything above an edge.
    Prune { tree: String, edge: String },
    /// Contract an inner edge.
    Contract { tree: String, edge: String },
    /// Morphisms between two trees.
    Hom {
        source: String,
        target: String,
        #[arg(long, value_enum, default_value = "all")]
        only: HomArg,
        #[arg(long)]
        count: bool,
    },
    /// Factor a map.
    Factor {
        map: String,
        #[arg(long, value_enum, default_value = "triple")]
        kind: FactorArg,
    },
    /// Tree classes up to the edge bound.
    EnumerateTrees {
        /// Include nodes without inputs.
        #[arg(long)]
        stumps: bool,
    },
    /// Trees decorated over an endofunctor, up to the bounds.
    EnumeratePtrees { poly: String },
    /// Automorphisms of a tree.
    Automorphisms { tree: String },
    /// Free monad on a tree or endofunctor, with its laws checked.
    FreeMonad { name: String },
    /// Composite of two endofunctors.
    Compose { first: String, second: String },
    /// Values of a presheaf, or of the nerve of an endofunctor.
    Nerve { name: String },
    /// Segal condition for a presheaf or the nerve of an endofunctor.
    SegalCheck { name: String },
    /// Flatness of a collection, an endofunctor's collection, or a
    /// presheaf's elementary part.
    FlatCheck { name: String },
    /// Whether a presheaf is the nerve of a polynomial monad.
    NerveTheoremCheck { name: String },
    /// DOT graphs of trees, all trees of the document by default.
    ExportDot { names: Vec<String> },
}

impl Command {
    fn needs_document(&self) -> bool {
        !matches!(self, Command::EnumerateTrees { .. })
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Subtrees { .. } => "subtrees",
            Command::Graft { .. } => "graft",
            Command::Prune { .. } => "prune",
            Command::Contract { .. } => "contract",
            Command::Hom { .. } => "hom",
            Command::Factor { .. } => "factor",
            Command::EnumerateTrees { .. } => "enumerate-trees",
            Command::EnumeratePtrees { .. } => "enumerate-ptrees",
            Command::Automorphisms { .. } => "automorphisms",
            Command::FreeMonad { .. } => "free-monad",
            Command::Compose { .. } => "compose",
            Command::Nerve { .. } => "nerve",
            Command::SegalCheck { .. } => "segal-check",
            Command::FlatCheck { .. } => "flat-check",
            Command::NerveTheoremCheck { .. } => "nerve-theorem-check",
            Command::ExportDot { .. } => "export-dot",
        }
    }
}

fn run(cli: &Cli) -> Result<Report, CliError> {
    let bounds = Bounds {
        max_edges: cli.max_edges.unwrap_or(polytree::DEFAULT_MAX_EDGES),
        max_nodes: cli.max_nodes.unwrap_or(polytree::DEFAULT_MAX_NODES),
    };
    let env = if cli.command.needs_document() {
        let text = match &cli.file {
            Some(path) => std::fs::read_to_string(path)?,
            None => {
                let mut s = String::new();
                std::io::stdin().read_to_string(&mut s)?;
                s
            }
        };
        Env::parse(&text)?
    } else {
        Env::default()
    };
    match &cli.command {
        Command::Validate { name } => commands::validate(&env, name, bounds),
        Command::Subtrees { tree, count } => commands::subtrees(&env, tree, *count),
        Command::Graft { upper, lower, leaf, name } => commands::graft_cmd(&env, upper, lower, leaf, name.as_deref()),
        Command::Prune { tree, edge } => commands::prune_cmd(&env, tree, edge),
        Command::Contract { tree, edge } => commands::contract_cmd(&env, tree, edge),
        Command::Hom { source, target, only, count } => {
            let filter = match only {
                HomArg::All => HomFilter::All,
                HomArg::Injective => HomFilter::Injective,
                HomArg::Surjective => HomFilter::Surjective,
                HomArg::BoundaryPreserving => HomFilter::BoundaryPreserving,
                HomArg::Free => HomFilter::Free,
            };
            commands::hom(&env, source, target, filter, *count)
        }
        Command::Factor { map, kind } => {
            let kind = match kind {
                FactorArg::SurjInj => FactorKind::SurjInj,
                FactorArg::GenericFree => FactorKind::GenericFree,
                FactorArg::Triple => FactorKind::Triple,
            };
            commands::factor(&env, map, kind)
        }
        Command::EnumerateTrees { stumps } => commands::enumerate_trees(bounds, *stumps),
        Command::EnumeratePtrees { poly } => commands::enumerate_ptrees_cmd(&env, poly, bounds),
        Command::Automorphisms { tree } => commands::automorphisms_cmd(&env, tree),
        Command::FreeMonad { name } => commands::free_monad_cmd(&env, name, bounds),
        Command::Compose { first, second } => commands::compose_cmd(&env, first, second),
        Command::Nerve { name } => commands::nerve_cmd(&env, name, bounds),
        Command::SegalCheck { name } => commands::segal_cmd(&env, name, bounds),
        Command::FlatCheck { name } => commands::flat_cmd(&env, name, bounds),
        Command::NerveTheoremCheck { name } => commands::nerve_theorem_cmd(&env, name, bounds),
        Command::ExportDot { names } => commands::export_dot(&env, names),
    }
}

fn emit(cli: &Cli, body: &str) -> Result<(), CliError> {
    if cli.quiet {
        return Ok(());
    }
    match &cli.out {
        Some(path) => std::fs::write(path, format!("{body}\n"))?,
        None => println!("{body}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            let body = if cli.json {
                let mut value = json!({"schema_version": SCHEMA_VERSION, "command": cli.command.name(), "ok": report.ok});
                value["result"] = report.json;
                serde_json::to_string_pretty(&value).expect("JSON values serialise")
            } else {
                report.text
            };
            if let Err(e) = emit(&cli, &body) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            if report.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            if cli.json && !cli.quiet {
                let value = json!({"schema_version": SCHEMA_VERSION, "command": cli.command.name(), "error": e.to_string()});
                println!("{}", serde_json::to_string_pretty(&value).expect("JSON values serialise"));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(2)
        }
    }
}
