//! `smf`: command-line front end for the symbolic mirroring toolkit.
//!
//! Exit codes: 0 on success, 1 when an input fails validation, 2 on I/O or
//! remote protocol errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use smf_core::converge::{classify_outcome, explain, render_convergence, View};
use smf_core::graph::{input, NodeFailure, Runtime, Value};
use smf_core::kb::{parse_kb, parse_kb_unchecked, validate_kb, KnowledgeBase};
use smf_core::planner::{parse_domain, plan};
use smf_core::predictions::{
    endpoint_env_var, load_predictions, PredictionCorpus, PredictionError,
};
use smf_core::study::{
    aggregate, encode_stream, evaluate_corpus, program_id, render_report, ReportFormat,
};

#[derive(Parser)]
#[command(
    name = "smf",
    version,
    about = "Explain and unify disagreeing classifier views with an ontology"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Knowledge-base utilities
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Explain how two labels differ by class
    Explain(PairArgs),
    /// Unify two labels into abstractions, properties and relationships
    Converge(PairArgs),
    /// Execute a program graph on one image
    Run(RunArgs),
    /// Aggregate outcomes over a prediction corpus
    Corpus(CorpusArgs),
    /// Print the per-image S/U/D/D* outcome stream
    Stream(CorpusArgs),
    /// Find a plan for a STRIPS domain and problem
    Plan(PlanArgs),
}

#[derive(Subcommand)]
enum KbCommand {
    /// Parse a `.smk` file and report every finding
    Validate { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    kb: PathBuf,
    label1: String,
    label2: String,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long)]
    kb: PathBuf,
    /// recorded predictions; classifiers without a record fall back to
    /// `SMF_ENDPOINT_<NAME>`
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    image: String,
    /// write the program graph in Graphviz format
    #[arg(long)]
    dot: Option<PathBuf>,
    /// write the execution trace as JSON
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    /// two classifier names, e.g. `resnet,alexnet`
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pair: Vec<String>,
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    problem: PathBuf,
}

enum Failure {
    Invalid(anyhow::Error),
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Io(_) => 2,
        }
    }
}

type CliResult = Result<(), Failure>;

/// program id, per-image outcomes, and the corpus they came from
type CorpusRun = (String, Vec<(String, smf_core::Outcome)>, PredictionCorpus);

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Invalid(e.into())
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(anyhow!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| Failure::Io(anyhow!("{}: {e}", path.display())))
}

fn load_kb(path: &Path) -> Result<KnowledgeBase, Failure> {
    parse_kb(&read(path)?).map_err(|e| invalid(anyhow!("{}: {e}", path.display())))
}

fn load_corpus(path: &Path) -> Result<PredictionCorpus, Failure> {
    load_predictions(path).map_err(|e| match e {
        PredictionError::Io(io) => Failure::Io(anyhow!("{}: {io}", path.display())),
        other => invalid(anyhow!("{}: {other}", path.display())),
    })
}

fn views(args: &PairArgs) -> Result<(View, View), Failure> {
    Ok((
        View::new(&args.label1, "label1").map_err(invalid)?,
        View::new(&args.label2, "label2").map_err(invalid)?,
    ))
}

fn kb_validate(path: &Path) -> CliResult {
    let kb = parse_kb_unchecked(&read(path)?)
        .map_err(|e| invalid(anyhow!("{}: {e}", path.display())))?;
    let report = validate_kb(&kb);
    for finding in &report.findings {
        println!("{finding}");
    }
    if report.is_valid() {
        println!(
            "ok: {} classes, {} individuals, {} data properties, {} object properties",
            kb.classes().len(),
            kb.individuals().len(),
            kb.data_properties().len(),
            kb.object_properties().len()
        );
        Ok(())
    } else {
        Err(invalid(anyhow!("{} finding(s)", report.findings.len())))
    }
}

fn cmd_explain(args: &PairArgs) -> CliResult {
    let kb = load_kb(&args.kb)?;
    let (v1, v2) = views(args)?;
    let e = explain(&v1, &v2, &kb);
    match args.format {
        OutputFormat::Text => match &e {
            Some(e) => println!("{}", e.rendered),
            None => println!("no explanation"),
        },
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&e).expect("serializes")),
    }
    Ok(())
}

fn cmd_converge(args: &PairArgs) -> CliResult {
    let kb = load_kb(&args.kb)?;
    let (v1, v2) = views(args)?;
    let outcome = classify_outcome(&v1, &v2, &kb);
    let c = outcome.convergence.clone().unwrap_or_default();
    match args.format {
        OutputFormat::Text => {
            println!("outcome: {}", outcome.kind);
            if let Some(e) = &outcome.explanation {
                println!("explain: {}", e.rendered);
            }
            if !c.is_empty() {
                for line in render_convergence(&c, &kb).map_err(invalid)? {
                    println!("converge: {line}");
                }
            }
        }
        OutputFormat::Json => {
            let relationships: Vec<_> = c
                .relationships
                .iter()
                .map(|r| json!([r.subject_individual, r.predicate, r.object_individual]))
                .collect();
            let doc = json!({
                "outcome": outcome.kind,
                "explained": outcome.explained,
                "abstraction": c.abstraction,
                "properties": c.properties,
                "relationships": relationships,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&doc).expect("serializes")
            );
        }
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> CliResult {
    let runtime = Runtime::new();
    let program_text = read(&args.program)?;
    let mut graph = runtime
        .load_program(&program_text)
        .map_err(|e| invalid(anyhow!("{}: {e}", args.program.display())))?;
    let mut inputs: BTreeMap<String, Value> = BTreeMap::new();
    inputs.insert(input::IMAGE_ID.into(), Value::Text(args.image.clone()));
    inputs.insert(
        input::KB.into(),
        Value::Knowledge(Arc::new(load_kb(&args.kb)?)),
    );
    if let Some(p) = &args.predictions {
        inputs.insert(
            input::PREDICTIONS.into(),
            Value::Corpus(Arc::new(load_corpus(p)?)),
        );
    }
    for node in graph.nodes() {
        if let Some(classifier) = node.params.get("classifier") {
            if let Ok(endpoint) = std::env::var(endpoint_env_var(classifier)) {
                inputs.insert(
                    format!("{}{classifier}", input::ENDPOINT_PREFIX),
                    Value::Text(endpoint),
                );
            }
        }
    }

    let result = runtime.execute(&mut graph, &inputs);
    if let Some(dot) = &args.dot {
        write(dot, &smf_core::graph::draw(&graph))?;
    }
    let trace = match result {
        Ok(trace) => trace,
        Err(e) => {
            let err = anyhow!("{e}");
            return Err(match e.cause {
                NodeFailure::Io(_) => Failure::Io(err),
                _ => Failure::Invalid(err),
            });
        }
    };
    if let Some(path) = &args.trace {
        write(path, &(trace.to_json() + "\n"))?;
    }
    let report = graph
        .in_control_order()
        .filter_map(|n| n.value.as_ref().and_then(Value::as_report))
        .last();
    match report {
        Some(r) => print!("{r}"),
        None => {
            for record in &trace.records {
                println!("{}: {}", record.node, record.value);
            }
        }
    }
    Ok(())
}

fn corpus_outcomes(args: &CorpusArgs) -> Result<CorpusRun, Failure> {
    let [c1, c2] = args.pair.as_slice() else {
        return Err(invalid(anyhow!(
            "--pair takes exactly two classifier names"
        )));
    };
    let kb = load_kb(&args.kb)?;
    let corpus = load_corpus(&args.predictions)?;
    let outcomes = evaluate_corpus(&corpus, (c1, c2), &kb).map_err(invalid)?;
    Ok((program_id((c1, c2)), outcomes, corpus))
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult {
    match out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_corpus(args: &CorpusArgs) -> CliResult {
    let format: ReportFormat = args.format.parse().map_err(invalid)?;
    let (id, outcomes, corpus) = corpus_outcomes(args)?;
    let report = aggregate(id, &outcomes, |image| corpus.category(image));
    let mut text = render_report(&report, format);
    if !text.ends_with('\n') {
        text.push('\n');
    }
    emit(&args.out, &text)
}

fn cmd_stream(args: &CorpusArgs) -> CliResult {
    let format: ReportFormat = args.format.parse().map_err(invalid)?;
    let (_, outcomes, _) = corpus_outcomes(args)?;
    let stream = encode_stream(outcomes.iter().map(|(_, o)| o));
    let text = match format {
        ReportFormat::Text => format!("{stream}\n"),
        ReportFormat::Json => {
            let images: Vec<&str> = outcomes.iter().map(|(i, _)| i.as_str()).collect();
            let doc = json!({"images": images, "stream": stream});
            serde_json::to_string_pretty(&doc).expect("serializes") + "\n"
        }
    };
    emit(&args.out, &text)
}

fn cmd_plan(args: &PlanArgs) -> CliResult {
    let domain = parse_domain(&read(&args.domain)?)
        .map_err(|e| invalid(anyhow!("{}: {e}", args.domain.display())))?;
    let problem = parse_domain(&read(&args.problem)?)
        .map_err(|e| invalid(anyhow!("{}: {e}", args.problem.display())))?;
    match plan(&domain.merge(problem)).map_err(invalid)? {
        Some(p) => {
            print!("{}", p.render());
            Ok(())
        }
        None => Err(invalid(anyhow!("no plan reaches the goal"))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Kb {
            command: KbCommand::Validate { path },
        } => kb_validate(path),
        Command::Explain(a) => cmd_explain(a),
        Command::Converge(a) => cmd_converge(a),
        Command::Run(a) => cmd_run(a),
        Command::Corpus(a) => cmd_corpus(a),
        Command::Stream(a) => cmd_stream(a),
        Command::Plan(a) => cmd_plan(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Invalid(e) | Failure::Io(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
