use std::error::Error;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use diversity_harness::model_backend::{
    build_backend, favored_order, rank_weights, BackendKind, HttpSettings, MockBackend, MockConfig,
    ModelConfig,
};
use diversity_harness::perturbation::{inject, make_context, ContextSpec, WordLists};
use diversity_harness::prompt_dataset::{
    bundled_prompts_text, draft_prompts, save_prompts, Setting,
};
use diversity_harness::reporting::{
    build_summary, build_ttest_report, export_plot_data, render_markdown_table, PlotKind,
    SummaryRow, DEFAULT_BIN_WIDTH,
};
use diversity_harness::rng::RngStream;
use diversity_harness::run_orchestrator::{execute_run, resume_run, ResponseFile, RunConfig};
use diversity_harness::statistics::{entropy_bits, FrequencyTable};

type CliResult<T = ()> = Result<T, Box<dyn Error>>;

/// Measure how much random context injection diversifies list answers.
#[derive(Parser, Debug)]
#[command(name = "harness", version)]
struct Cli {
    /// Log request/response bodies (credentials redacted) and progress detail
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Query every prompt under every condition M times and store the replies
    Run(RunArgs),
    /// Summaries, t-tests and plot data from a response file
    Report {
        #[command(subcommand)]
        report: ReportCommand,
    },
    /// Sanity-check the mock backend's sampler
    ValidateMock(ValidateMockArgs),
    /// Ask a backend for candidate prompts (printed as JSONL for manual review)
    Draft(DraftArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendArg,

    /// Model name sent to the endpoint and recorded with every reply
    #[arg(long)]
    model: Option<String>,

    #[arg(long, default_value_t = 0.9)]
    temperature: f64,

    /// Retries for transient HTTP failures
    #[arg(long, default_value_t = 3)]
    max_retries: u32,

    /// Per-request timeout in seconds
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,

    #[arg(long, default_value = "http://localhost:11434")]
    base_url: String,

    #[arg(long, default_value = "/v1/chat/completions")]
    api_path: String,

    /// Environment variable holding the bearer token
    #[arg(long, default_value = "MODEL_API_KEY")]
    api_key_env: String,
}

impl ModelArgs {
    fn config(&self) -> CliResult<ModelConfig> {
        let backend = match self.backend {
            BackendArg::Mock => BackendKind::Mock,
            BackendArg::Http => BackendKind::Http,
        };
        let model_name = match (&self.model, backend) {
            (Some(name), _) => name.clone(),
            (None, BackendKind::Mock) => "mock-zipf".to_string(),
            (None, BackendKind::Http) => {
                return Err("--model is required with --backend http".into())
            }
        };
        Ok(ModelConfig {
            backend,
            model_name,
            temperature: self.temperature,
            max_retries: self.max_retries,
            request_timeout_secs: self.timeout,
            http: HttpSettings {
                base_url: self.base_url.clone(),
                path: self.api_path.clone(),
                api_key_env: Some(self.api_key_env.clone()),
            },
        })
    }
}

#[derive(Args, Debug)]
struct MockArgs {
    #[arg(long, default_value_t = 200)]
    vocab_size: usize,

    #[arg(long, default_value_t = 1.1)]
    zipf_exponent: f64,

    /// Keep each prompt's favored items fixed regardless of the injected context
    #[arg(long)]
    context_insensitive: bool,
}

impl MockArgs {
    fn config(&self) -> MockConfig {
        MockConfig {
            vocab_size: self.vocab_size,
            zipf_exponent: self.zipf_exponent,
            context_sensitive: !self.context_insensitive,
        }
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Prompt dataset (JSONL); the bundled 100-question set is used when omitted
    #[arg(long)]
    prompts: Option<PathBuf>,

    #[arg(long, default_value = "ordered")]
    setting: Setting,

    /// Comma-separated: regular, word, words<n>, sentence, string
    #[arg(
        long,
        alias = "condition",
        value_delimiter = ',',
        default_value = "regular,word"
    )]
    conditions: Vec<String>,

    /// Words per context for the `word` condition
    #[arg(long, default_value_t = 1)]
    num_words: u32,

    /// Repetitions per prompt and condition
    #[arg(long, default_value_t = 100)]
    m: u32,

    #[arg(long, default_value_t = 7)]
    seed: u64,

    #[arg(long, default_value_t = 4)]
    parallelism: usize,

    /// Output directory; replies go to responses_<setting>.jsonl inside it
    #[arg(long)]
    out: PathBuf,

    /// Word list override (JSON with adjectives, nouns, verbs)
    #[arg(long)]
    wordlists: Option<PathBuf>,

    /// Continue an interrupted run instead of refusing to touch an existing file
    #[arg(long)]
    resume: bool,

    /// Write this timestamp into every record, making files byte-reproducible
    #[arg(long)]
    fixed_timestamp: Option<String>,

    #[command(flatten)]
    model: ModelArgs,

    #[command(flatten)]
    mock: MockArgs,
}

#[derive(Subcommand, Debug)]
enum ReportCommand {
    /// Mean entropy and median distinct count per model, setting and condition
    Summary {
        #[arg(long, num_args = 1.., required = true)]
        responses: Vec<PathBuf>,

        #[arg(long, value_enum, default_value = "markdown")]
        format: SummaryFormat,

        /// Write to a file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired t-tests between two conditions on counts and entropies
    Ttest {
        #[arg(long)]
        responses: PathBuf,

        #[arg(long, default_value = "regular")]
        baseline: String,

        #[arg(long, default_value = "word")]
        treatment: String,

        /// Print JSON instead of text
        #[arg(long)]
        json: bool,
    },
    /// CSV data for frequency-rank curves or distinct-count histograms
    Plotdata {
        #[arg(long)]
        responses: PathBuf,

        #[arg(long, value_parser = parse_plot_kind)]
        kind: PlotKind,

        #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
        bin_width: u64,

        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_plot_kind(s: &str) -> Result<PlotKind, String> {
    s.parse()
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SummaryFormat {
    Markdown,
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct ValidateMockArgs {
    #[command(flatten)]
    mock: MockArgs,

    /// Samples per check
    #[arg(long, default_value_t = 2000)]
    m: u32,

    #[arg(long, default_value_t = 10)]
    k: usize,

    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct DraftArgs {
    #[arg(long, default_value_t = 20)]
    n: usize,

    /// Topics to cover (repeat or comma-separate)
    #[arg(long, value_delimiter = ',')]
    topic: Vec<String>,

    #[arg(long, default_value_t = 7)]
    seed: u64,

    /// Write candidates here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,

    #[command(flatten)]
    model: ModelArgs,

    #[command(flatten)]
    mock: MockArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Report { report } => report_cmd(report),
        Command::ValidateMock(args) => validate_mock(args),
        Command::Draft(args) => draft(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: RunArgs) -> CliResult<bool> {
    let conditions = args
        .conditions
        .iter()
        .map(|c| ContextSpec::parse_with_words(c, args.num_words))
        .collect::<Result<Vec<_>, _>>()?;
    let dataset_path = match &args.prompts {
        Some(p) => p.clone(),
        None => {
            let p = args.out.join("prompts.jsonl");
            if !p.exists() {
                fs::create_dir_all(&args.out)?;
                fs::write(&p, bundled_prompts_text())?;
                info!("wrote bundled prompt set to {}", p.display());
            }
            p
        }
    };
    let config = RunConfig {
        dataset_path,
        setting: args.setting,
        conditions,
        m: args.m,
        master_seed: args.seed,
        parallelism: args.parallelism,
        model: args.model.config()?,
        mock: Some(args.mock.config()),
        output_dir: args.out.clone(),
        wordlists_path: args.wordlists.clone(),
        fixed_timestamp: args.fixed_timestamp.clone(),
    };
    let path = config.response_path();
    let report = if path.exists() {
        if !args.resume {
            return Err(format!(
                "{} already exists; pass --resume to continue it",
                path.display()
            )
            .into());
        }
        resume_run(&config, &path)?
    } else {
        execute_run(&config)?
    };
    let s = &report.summary;
    println!(
        "{}: {} records (ok {}, recovered {}, failed {}); {} cells and {} requests in this invocation",
        s.output_path.display(),
        s.total_records,
        s.ok,
        s.recovered,
        s.failed,
        report.cells_executed,
        report.requests_sent
    );
    Ok(report.complete)
}

fn emit(text: &str, out: Option<&Path>) -> CliResult {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "model_name,setting,condition,mean_entropy_bits,median_count,n_prompts,failed_record_count\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.model_name,
            r.setting,
            r.condition,
            r.mean_entropy_bits,
            r.median_count,
            r.n_prompts,
            r.failed_record_count
        ));
    }
    out
}

fn report_cmd(cmd: ReportCommand) -> CliResult<bool> {
    match cmd {
        ReportCommand::Summary {
            responses,
            format,
            out,
        } => {
            let mut rows = Vec::new();
            for path in &responses {
                rows.extend(build_summary(&ResponseFile::read(path)?)?);
            }
            let text = match format {
                SummaryFormat::Markdown => render_markdown_table(&rows)?,
                SummaryFormat::Json => serde_json::to_string_pretty(&rows)? + "\n",
                SummaryFormat::Csv => summary_csv(&rows),
            };
            emit(&text, out.as_deref())?;
        }
        ReportCommand::Ttest {
            responses,
            baseline,
            treatment,
            json,
        } => {
            let report =
                build_ttest_report(&ResponseFile::read(&responses)?, &baseline, &treatment)?;
            let text = if json {
                serde_json::to_string_pretty(&report)? + "\n"
            } else {
                report.render()
            };
            emit(&text, None)?;
        }
        ReportCommand::Plotdata {
            responses,
            kind,
            bin_width,
            out,
        } => {
            export_plot_data(&ResponseFile::read(&responses)?, kind, bin_width, &out)?;
            info!("wrote {}", out.display());
        }
    }
    Ok(true)
}

const PROBE: &str = "Name 10 Hollywood actors.";

fn entropy_of(lists: &[Vec<String>]) -> f64 {
    let mut t = FrequencyTable::new("probe", "");
    for l in lists {
        t.add_list(l);
    }
    entropy_bits(&t)
}

fn validate_mock(args: ValidateMockArgs) -> CliResult<bool> {
    let config = args.mock.config();
    let mock = MockBackend::new("mock", config.clone())?;
    let k = args.k;
    let lists_for = |contexts: &dyn Fn(u32) -> String| -> CliResult<Vec<Vec<String>>> {
        (0..args.m)
            .map(|rep| {
                let prompt = inject(&contexts(rep), PROBE)?;
                let mut s = RngStream::derive(args.seed, "validate-mock", &[&rep.to_string()]);
                Ok(mock.sample_items(&prompt, k, &mut s)?)
            })
            .collect()
    };
    let mut checks: Vec<(&str, bool, String)> = Vec::new();

    let regular = lists_for(&|_| String::new())?;
    let again = lists_for(&|_| String::new())?;
    checks.push((
        "determinism",
        regular == again,
        format!("{} lists replayed", args.m),
    ));

    let well_formed = regular.iter().all(|l| {
        let distinct: std::collections::HashSet<_> = l.iter().collect();
        distinct.len() == k && l.iter().all(|x| x.len() == 9 && x.starts_with("item_"))
    });
    checks.push(("distinct labelled items", well_formed, format!("k = {k}")));

    // The first draw of each list follows the plain Zipf law.
    let weights = rank_weights(config.vocab_size, config.zipf_exponent);
    let p_top = weights[0] / weights.iter().sum::<f64>();
    let top = format!("item_{:04}", favored_order(config.vocab_size, PROBE)[0] + 1);
    let hits = regular.iter().filter(|l| l[0] == top).count() as f64;
    let observed = hits / f64::from(args.m);
    let se = (p_top * (1.0 - p_top) / f64::from(args.m)).sqrt();
    checks.push((
        "top-rank first-draw rate",
        (observed - p_top).abs() <= 5.0 * se,
        format!(
            "observed {observed:.4}, expected {p_top:.4} (5 SE = {:.4})",
            5.0 * se
        ),
    ));

    let lists = WordLists::bundled();
    let with_words = lists_for(&|rep| {
        let mut s = RngStream::derive(args.seed, "validate-mock-context", &[&rep.to_string()]);
        make_context(ContextSpec::Words(1), &lists, &mut s)
    })?;
    let (h_regular, h_words) = (entropy_of(&regular), entropy_of(&with_words));
    let expect_gain = config.context_sensitive;
    checks.push((
        "context effect",
        if expect_gain {
            h_words > h_regular
        } else {
            (h_words - h_regular).abs() < 0.1
        },
        format!(
            "entropy {h_regular:.3} bits without context, {h_words:.3} with one random word ({})",
            if expect_gain {
                "context-sensitive"
            } else {
                "context-insensitive"
            }
        ),
    ));

    let mut all_ok = true;
    for (name, ok, detail) in &checks {
        all_ok &= ok;
        println!(
            "{:<26} {}  {detail}",
            name,
            if *ok { "ok  " } else { "FAIL" }
        );
    }
    Ok(all_ok)
}

fn draft(args: DraftArgs) -> CliResult<bool> {
    let model = args.model.config()?;
    let backend = build_backend(&model, Some(&args.mock.config()))?;
    let mut stream = RngStream::derive(args.seed, "draft", &[]);
    let records = draft_prompts(backend.as_ref(), args.n, &args.topic, &mut stream)?;
    info!(
        "{} usable candidates out of {} requested",
        records.len(),
        args.n
    );
    match &args.out {
        Some(p) => save_prompts(p, &records)?,
        None => {
            for r in &records {
                println!("{}", serde_json::to_string(r)?);
            }
        }
    }
    Ok(true)
}
