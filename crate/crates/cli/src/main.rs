mod io;
mod runs;
mod stages;

use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand};

use todalign::eval::EvalReport;
use todalign::{Error, ErrorKind};

/// Hint-guided exemplar selection, prompting and evaluation for
/// task-oriented dialog with LLMs.
#[derive(Parser, Debug)]
#[command(name = "todalign", version)]
struct Cli {
    /// Log level filter, e.g. `info` or `debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a dataset release into a canonical corpus.
    Prepare(stages::PrepareArgs),
    /// Train the hint predictors on a corpus's training split.
    TrainHints(stages::TrainHintsArgs),
    /// Predict (or derive gold) hints for a split.
    PredictHints(stages::PredictHintsArgs),
    /// Embed training and query samples into an embedding file.
    Embed(stages::EmbedArgs),
    /// Retrieve and re-rank exemplars for each query sample.
    SelectExemplars(stages::SelectArgs),
    /// Render prompts from exemplar selections and hints.
    BuildPrompts(stages::BuildPromptsArgs),
    /// Send prompts to an LLM backend and parse the responses.
    Generate(stages::GenerateArgs),
    /// Score predictions against a corpus.
    Evaluate(stages::EvaluateArgs),
    /// Run the whole pipeline from a config.
    Run(runs::ConfigArgs),
    /// Run the base config and its ablation variants.
    Ablate(runs::AblateArgs),
    /// Run the pipeline on nested subsamples of the training dialogs.
    Subsample(runs::SubsampleArgs),
}

pub(crate) fn print_summary(report: &EvalReport) {
    for (name, value) in report.summary_rows() {
        println!("{name:<22} {value}");
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Backend => 3,
    }
}

fn dispatch(command: &Command) -> Result<(), Error> {
    match command {
        Command::Prepare(a) => stages::prepare(a),
        Command::TrainHints(a) => stages::train_hints(a),
        Command::PredictHints(a) => stages::predict_hints_cmd(a),
        Command::Embed(a) => stages::embed_cmd(a),
        Command::SelectExemplars(a) => stages::select_exemplars(a),
        Command::BuildPrompts(a) => stages::build_prompts(a),
        Command::Generate(a) => stages::generate(a),
        Command::Evaluate(a) => stages::evaluate_cmd(a),
        Command::Run(a) => runs::run(a),
        Command::Ablate(a) => runs::ablate_cmd(a),
        Command::Subsample(a) => runs::subsample_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log)).init();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
