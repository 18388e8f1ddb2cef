//! bisectr: find the commit that introduced a vulnerability, starting from
//! the commit that fixed it.

mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use bisectr_core::diff::{classify_patch, strip_comment_changes, PatchClass};
use bisectr_core::eval::{
    aggregate, histogram_csv, parse_ground_truth_tsv, score_case, CaseRecord, VersionIndex,
};
use bisectr_core::generators::{
    extract_message_keywords, generate_c1, generate_c2, generate_c3, CandidateSet, GeneratorKind,
};
use bisectr_core::lang::LanguageProfile;
use bisectr_core::pipeline::{run, strip_fixes_tags, PipelineError, PipelineFailure};
use bisectr_core::repo::{Repo, RepoError};
use bisectr_core::types::{CommitId, CriticalLine};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bisectr", version, about = "Bug bisection: locate the bug-inducing commit for a given fix")]
struct Cli {
    /// Accepted for output stability; bisectr never emits color.
    #[arg(long, global = true)]
    no_color: bool,

    /// Log level (error|warn|info|debug|trace).
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct BackendArgs {
    /// Model name sent to the backend.
    #[arg(long, env = "BISECTR_MODEL")]
    model: Option<String>,

    /// live | recorded | scripted.
    #[arg(long)]
    backend: Option<String>,

    /// Chat-completions base URL for the live backend.
    #[arg(long, env = "BISECTR_BASE_URL")]
    base_url: Option<String>,

    /// Transcript JSONL (recorded) or script rules JSON (scripted).
    #[arg(long)]
    transcript: Option<PathBuf>,

    /// With backend=live: append every response to the transcript.
    #[arg(long)]
    record: bool,

    /// Cache root; reports land under <cache>/<fix>/<config-digest>/.
    #[arg(long, env = "BISECTR_CACHE_DIR")]
    cache_dir: Option<PathBuf>,

    /// TOML config file (flags and environment take precedence).
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    votes: Option<u32>,

    #[arg(long)]
    token_budget: Option<u64>,

    /// How many critical lines to request for deleted-lines patches.
    #[arg(long)]
    num_lines: Option<u32>,

    #[arg(long)]
    candidate_cap: Option<usize>,

    /// Comma-separated subset of c1,c2,c3.
    #[arg(long)]
    generators: Option<String>,

    /// full | baseline-early-stop | baseline-one-shot.
    #[arg(long)]
    mode: Option<String>,

    /// Keep kernel `Fixes:` tag lines in the fix message (they are stripped
    /// by default to avoid leaking ground truth).
    #[arg(long)]
    keep_fixes_tags: bool,
}

impl BackendArgs {
    fn resolve(&self) -> Result<config::Resolved> {
        let file = config::FileConfig::load(self.config.as_ref())?;
        config::resolve(
            file,
            self.model.clone(),
            self.backend.clone(),
            self.base_url.clone(),
            self.transcript.clone(),
            self.record,
            self.cache_dir.clone(),
            self.votes,
            self.token_budget,
            self.num_lines,
            self.candidate_cap,
            self.generators.clone(),
            self.mode.clone(),
            self.keep_fixes_tags,
            std::env::var("BISECTR_API_KEY").ok(),
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full bisection pipeline and report the bug-inducing commit.
    Bisect {
        #[arg(long)]
        repo: PathBuf,
        /// The bug-fix commit (hash prefix or symbolic ref).
        #[arg(long)]
        fix: String,
        /// Report JSON destination (default: the cache slot, else CWD).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Known true BIC; enables ground-truth stage tracking in the report.
        #[arg(long)]
        truth: Option<String>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Classify the fix patch (deleted-lines / added-only / reorder-only).
    Classify {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        fix: String,
        #[arg(long)]
        json: bool,
    },
    /// Print each generator's candidates with provenance.
    Candidates {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        fix: String,
        /// Skip LLM calls; C2 degrades to the deleted-lines heuristic.
        #[arg(long)]
        no_llm: bool,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Score pipeline runs against ground truth and emit the dataset report.
    Eval {
        #[arg(long)]
        repo: PathBuf,
        /// TSV: case_id<TAB>fix<TAB>true_bic[<TAB>notes].
        #[arg(long)]
        ground_truth: PathBuf,
        /// TSV: version_tag<TAB>release_commit, in release order.
        #[arg(long)]
        version_index: PathBuf,
        /// Directory for report JSON and histogram CSV (default: CWD).
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Re-render a bisection report from a transcript without any LLM calls
    /// (recorded backend, strict).
    Replay {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        fix: String,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

/// Exit codes: 0 a result was produced (including NONE), 1 configuration
/// error, 2 runtime failure.
fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Bisect {
            repo,
            fix,
            output,
            truth,
            backend,
        } => cmd_bisect(repo, fix, output, truth, backend),
        Command::Classify { repo, fix, json } => cmd_classify(repo, fix, json),
        Command::Candidates {
            repo,
            fix,
            no_llm,
            json,
            backend,
        } => cmd_candidates(repo, fix, no_llm, json, backend),
        Command::Eval {
            repo,
            ground_truth,
            version_index,
            output,
            backend,
        } => cmd_eval(repo, ground_truth, version_index, output, backend),
        Command::Replay {
            repo,
            fix,
            output,
            backend,
        } => {
            let mut backend = backend;
            if backend.transcript.is_none() {
                return config_exit("replay requires --transcript");
            }
            backend.backend = Some("recorded".into());
            backend.record = false;
            cmd_bisect(repo, fix, output, None, backend)
        }
    }
}

fn config_exit(err: impl std::fmt::Display) -> Result<ExitCode> {
    eprintln!("error: {err}");
    Ok(ExitCode::from(1))
}

fn runtime_exit(err: impl std::fmt::Display) -> Result<ExitCode> {
    eprintln!("error: {err}");
    Ok(ExitCode::from(2))
}

fn open_repo(path: &PathBuf) -> Result<Repo, ExitCode> {
    Repo::open(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}

fn cmd_bisect(
    repo_path: PathBuf,
    fix: String,
    output: Option<PathBuf>,
    truth: Option<String>,
    backend: BackendArgs,
) -> Result<ExitCode> {
    let resolved = match backend.resolve() {
        Ok(r) => r,
        Err(e) => return config_exit(e),
    };
    let repo = match open_repo(&repo_path) {
        Ok(r) => r,
        Err(code) => return Ok(code),
    };
    let gateway = match resolved.gateway() {
        Ok(g) => g,
        Err(e) => return config_exit(e),
    };
    let truth_id = match truth {
        Some(t) => match repo.resolve_commit(&t) {
            Ok(c) => Some(c.id),
            Err(e) => return config_exit(e),
        },
        None => None,
    };

    let result = match run(&repo, &fix, &resolved.pipeline, &gateway, truth_id.as_ref()) {
        Ok(result) => result,
        Err(PipelineFailure { error, partial }) => {
            // A bad ref or bad config is an operator error; everything else
            // is a runtime failure with the partial report on stderr.
            return match error {
                PipelineError::Repo(RepoError::UnknownRef(_))
                | PipelineError::Repo(RepoError::AmbiguousRef(_))
                | PipelineError::Config(_) => config_exit(error),
                other => {
                    eprintln!("partial flow: {}", partial.to_json());
                    runtime_exit(other)
                }
            };
        }
    };

    let out_path = output
        .or_else(|| {
            resolved
                .cache_slot(result.fix.as_str())
                .map(|d| d.join("report.json"))
        })
        .unwrap_or_else(|| PathBuf::from("bisectr-report.json"));
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("create {}", parent.display()))?;
        }
    }
    std::fs::write(&out_path, result.to_json())
        .with_context(|| format!("write report {}", out_path.display()))?;

    match &result.final_bic {
        Some(bic) => {
            let pre_filter_rationale = result
                .flow
                .per_generator
                .values()
                .find_map(|f| f.rationales.get(bic));
            let rationale = result
                .rationales
                .last()
                .or(pre_filter_rationale)
                .map(|r| one_line(r))
                .unwrap_or_default();
            println!("{bic} {rationale}");
        }
        None => println!("NONE no candidate survived the pipeline"),
    }
    Ok(ExitCode::SUCCESS)
}

fn one_line(text: &str) -> String {
    let mut s: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if s.len() > 160 {
        s.truncate(157);
        s.push_str("...");
    }
    s
}

fn cmd_classify(repo_path: PathBuf, fix: String, json: bool) -> Result<ExitCode> {
    let repo = match open_repo(&repo_path) {
        Ok(r) => r,
        Err(code) => return Ok(code),
    };
    let commit = match repo.resolve_commit(&fix) {
        Ok(c) => c,
        Err(e) => return config_exit(e),
    };
    let stripped = strip_comment_changes(&commit.diff, LanguageProfile::CLike);
    match classify_patch(&stripped) {
        Ok(class) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&class)?);
            } else {
                println!("{}", class.label());
                if let PatchClass::ReorderOnly { pairs } = &class {
                    for p in pairs {
                        println!(
                            "  moved: {:?} (old line {} -> new line {}) in {}",
                            p.deleted.line_text,
                            p.deleted.old_lineno.unwrap_or(0),
                            p.added.new_lineno.unwrap_or(0),
                            p.deleted.filename,
                        );
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => runtime_exit(e),
    }
}

fn cmd_candidates(
    repo_path: PathBuf,
    fix: String,
    no_llm: bool,
    json: bool,
    backend: BackendArgs,
) -> Result<ExitCode> {
    let resolved = match backend.resolve() {
        Ok(r) => r,
        Err(e) => return config_exit(e),
    };
    let repo = match open_repo(&repo_path) {
        Ok(r) => r,
        Err(code) => return Ok(code),
    };
    let mut commit = match repo.resolve_commit(&fix) {
        Ok(c) => c,
        Err(e) => return config_exit(e),
    };
    if resolved.pipeline.strip_fixes_tags {
        commit.message = strip_fixes_tags(&commit.message);
    }
    let mut stripped = commit.clone();
    stripped.diff = strip_comment_changes(&commit.diff, LanguageProfile::CLike);
    let cap = resolved.pipeline.candidate_cap;
    let enabled = &resolved.pipeline.generators_enabled;

    let mut sets: Vec<CandidateSet> = Vec::new();
    let mut heuristic_mode = false;
    if enabled.contains(&GeneratorKind::C1Function) {
        sets.push(generate_c1(&repo, &stripped, cap).context("generate C1")?);
    }
    if enabled.contains(&GeneratorKind::C2CriticalLine) {
        let critical: Vec<CriticalLine> = if no_llm {
            heuristic_mode = true;
            heuristic_critical_lines(&repo, &stripped)
        } else {
            let gateway = match resolved.gateway() {
                Ok(g) => g,
                Err(e) => return config_exit(e),
            };
            match classify_patch(&stripped.diff) {
                Ok(class) => {
                    let bodies = prepatch_bodies(&repo, &stripped);
                    let cl = bisectr_core::generators::identify_critical_lines(
                        &commit,
                        &class,
                        &bodies,
                        &[],
                        &gateway,
                        &bisectr_core::generators::CriticalLineConfig {
                            model: resolved.pipeline.model.clone(),
                            num_lines: resolved.pipeline.num_lines,
                        },
                    );
                    match cl {
                        Ok((lines, _)) => lines,
                        Err(e) => return runtime_exit(e),
                    }
                }
                Err(_) => Vec::new(),
            }
        };
        sets.push(generate_c2(&repo, &stripped, &critical, cap).context("generate C2")?);
    }
    if enabled.contains(&GeneratorKind::C3CommitMessage) {
        let keywords = extract_message_keywords(&stripped);
        let exclude = sets
            .iter()
            .flat_map(|s| s.commits.iter().cloned())
            .collect();
        sets.push(generate_c3(&repo, &stripped, &keywords, &exclude, cap).context("generate C3")?);
    }

    if json {
        let mut doc = BTreeMap::new();
        doc.insert("schema_version", serde_json::json!(1));
        doc.insert("heuristic_c2", serde_json::json!(heuristic_mode));
        doc.insert("sets", serde_json::to_value(&sets)?);
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        if heuristic_mode {
            println!("# C2 computed without LLM (deleted-lines heuristic)");
        }
        for set in &sets {
            println!(
                "{} ({} candidates{})",
                set.generator.label(),
                set.len(),
                if set.truncated { ", truncated" } else { "" }
            );
            for c in &set.commits {
                let why = set.provenance.get(c).map(|s| s.as_str()).unwrap_or("");
                println!("  {c} {why}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// The --no-llm stand-in for critical-line identification: every non-comment
/// deleted line of the stripped fix, positioned inside its function.
fn heuristic_critical_lines(
    repo: &Repo,
    stripped: &bisectr_core::repo::Commit,
) -> Vec<CriticalLine> {
    let bodies = prepatch_bodies(repo, stripped);
    let mut out = Vec::new();
    for cl in stripped.diff.changed_lines() {
        if cl.kind != bisectr_core::diff::LineKind::Deleted {
            continue;
        }
        let locator = bisectr_core::types::FunctionLocator::new(&cl.filename, &cl.functionname);
        let linenum = match (bodies.get(&locator), cl.old_lineno) {
            (Some(body), Some(abs)) if abs >= body.start_line => abs - body.start_line + 1,
            _ => 1,
        };
        out.push(CriticalLine {
            filename: cl.filename.clone(),
            functionname: cl.functionname.clone(),
            linenum,
            line_text: cl.line_text.trim().to_string(),
        });
    }
    out.sort();
    out.dedup();
    out
}

fn prepatch_bodies(
    repo: &Repo,
    commit: &bisectr_core::repo::Commit,
) -> BTreeMap<bisectr_core::types::FunctionLocator, bisectr_core::types::FunctionBody> {
    let mut bodies = BTreeMap::new();
    let Some(parent) = commit.first_parent() else {
        return bodies;
    };
    for locator in commit.diff.touched_functions() {
        if let Ok(body) = repo.function_body_at(parent, &locator) {
            bodies.insert(locator, body);
        }
    }
    bodies
}

fn cmd_eval(
    repo_path: PathBuf,
    ground_truth: PathBuf,
    version_index: PathBuf,
    output: Option<PathBuf>,
    backend: BackendArgs,
) -> Result<ExitCode> {
    let resolved = match backend.resolve() {
        Ok(r) => r,
        Err(e) => return config_exit(e),
    };
    let repo = match open_repo(&repo_path) {
        Ok(r) => r,
        Err(code) => return Ok(code),
    };
    let truth_text = match std::fs::read_to_string(&ground_truth) {
        Ok(t) => t,
        Err(e) => return config_exit(format!("read {}: {e}", ground_truth.display())),
    };
    let cases = match parse_ground_truth_tsv(&truth_text) {
        Ok(c) => c,
        Err(e) => return config_exit(e),
    };
    let index_text = match std::fs::read_to_string(&version_index) {
        Ok(t) => t,
        Err(e) => return config_exit(format!("read {}: {e}", version_index.display())),
    };
    let index = match VersionIndex::from_tsv(&index_text) {
        Ok(i) => i,
        Err(e) => return config_exit(e),
    };

    let mut records = Vec::new();
    for case in &cases {
        let gateway = match resolved.gateway() {
            Ok(g) => g,
            Err(e) => return config_exit(e),
        };
        let outcome = run(
            &repo,
            case.fix.as_str(),
            &resolved.pipeline,
            &gateway,
            Some(&case.true_bic),
        );
        let (predicted, tokens, votes): (Option<CommitId>, u64, Option<(usize, Vec<u32>)>) =
            match &outcome {
                Ok(result) => {
                    let mut tally: Vec<u32> = result.votes_tally.values().copied().collect();
                    tally.sort_unstable_by(|a, b| b.cmp(a));
                    let candidates = result.votes_tally.len();
                    (
                        result.final_bic.clone(),
                        result.tokens.total,
                        if candidates > 0 {
                            Some((candidates, tally))
                        } else {
                            None
                        },
                    )
                }
                Err(failure) => {
                    eprintln!("case {}: {}", case.case_id, failure);
                    (None, failure.partial.tokens.total, None)
                }
            };
        let score = match score_case(&repo, predicted.as_ref(), case, &index) {
            Ok(s) => s,
            Err(e) => return runtime_exit(format!("case {}: {e}", case.case_id)),
        };
        records.push(CaseRecord {
            case_id: case.case_id.clone(),
            score,
            tokens: Some(tokens),
            votes,
        });
    }

    let report = aggregate(&records);
    let out_dir = output.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(
        out_dir.join("eval-report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    std::fs::write(out_dir.join("eval-histogram.csv"), histogram_csv(&report))?;

    println!(
        "accuracy {:.1}% ({}/{} correct)",
        report.accuracy * 100.0,
        report.correct,
        report.cases
    );
    println!(
        "pooled precision {:.1}% recall {:.1}% f1 {:.1}% (tp={} fp={} fn={})",
        report.pooled.precision * 100.0,
        report.pooled.recall * 100.0,
        report.pooled.f1 * 100.0,
        report.pooled.tp,
        report.pooled.fp,
        report.pooled.fn_
    );
    Ok(ExitCode::SUCCESS)
}
