//! Pipeline orchestration: candidate generation, per-generator pre- and
//! post-filtering, finalization with majority voting, the two baseline
//! ablation modes, and the versioned result report.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{classify_patch, reorder_context, strip_comment_changes, DiffError, PatchClass};
use crate::generators::{
    extract_message_keywords, format_patch_content, generate_c1, generate_c2, generate_c3,
    identify_critical_lines, CandidateSet, CriticalLineConfig, GeneratorKind, MessageKeywords,
};
use crate::lang::LanguageProfile;
use crate::llm::{
    estimate_tokens, parse_binary_verdict, parse_comparative_choice, render_prompt, CallRecord,
    Gateway, LlmError, LlmRequest, TemplateId,
};
use crate::repo::{Commit, Repo, RepoError};
use crate::types::{CommitId, CriticalLine, FunctionBody, FunctionLocator};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    Full,
    BaselineEarlyStop,
    BaselineOneShot,
}

impl PipelineMode {
    pub fn label(&self) -> &'static str {
        match self {
            PipelineMode::Full => "full",
            PipelineMode::BaselineEarlyStop => "baseline_early_stop",
            PipelineMode::BaselineOneShot => "baseline_one_shot",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub generators_enabled: BTreeSet<GeneratorKind>,
    /// Majority-voting rounds in finalization; odd.
    pub votes: u32,
    pub mode: PipelineMode,
    pub candidate_cap: usize,
    /// Budget (estimated tokens) for function bodies included in prompts.
    pub token_budget: u64,
    pub model: String,
    /// `${num_lines}` for the deleted-lines critical prompt.
    pub num_lines: u32,
    /// Drop `Fixes:` tag lines from the fix message before any use.
    pub strip_fixes_tags: bool,
    pub language: LanguageProfile,
    /// Ablation: apply majority voting inside post-filtering too.
    pub vote_in_post_filter: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            generators_enabled: [
                GeneratorKind::C1Function,
                GeneratorKind::C2CriticalLine,
                GeneratorKind::C3CommitMessage,
            ]
            .into_iter()
            .collect(),
            votes: 7,
            mode: PipelineMode::Full,
            candidate_cap: crate::generators::CANDIDATE_CAP,
            token_budget: 60_000,
            model: "gpt-4o".into(),
            num_lines: 5,
            strip_fixes_tags: true,
            language: LanguageProfile::CLike,
            vote_in_post_filter: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.votes == 0 || self.votes % 2 == 0 {
            return Err(format!("votes must be odd and >= 1, got {}", self.votes));
        }
        if self.candidate_cap == 0 {
            return Err("candidate_cap must be >= 1".into());
        }
        if self.generators_enabled.is_empty() {
            return Err("at least one generator must be enabled".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Failure carrying whatever partial result was assembled before the error.
#[derive(Debug)]
pub struct PipelineFailure {
    pub error: PipelineError,
    pub partial: Box<BisectionResult>,
}

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for PipelineFailure {}

// ---------------------------------------------------------------------------
// Flow and result types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageCounts {
    pub generated: usize,
    pub after_pre_filter: usize,
    pub after_post_filter: usize,
    pub finalized: usize,
}

/// Ground-truth presence per stage, recorded only when a truth commit is
/// supplied to the run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TruthTrace {
    pub in_generated: bool,
    pub in_pre_filter_survivors: bool,
    pub is_post_filter_pick: bool,
    pub is_final: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorFlow {
    pub counts: StageCounts,
    pub candidates: Vec<CommitId>,
    pub survivors: Vec<CommitId>,
    pub pick: Option<CommitId>,
    pub truncated: bool,
    pub provenance: BTreeMap<CommitId, String>,
    /// Pre-filter rationales for kept candidates.
    pub rationales: BTreeMap<CommitId, String>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthTrace>,
}

impl GeneratorFlow {
    fn empty() -> GeneratorFlow {
        GeneratorFlow {
            counts: StageCounts::default(),
            candidates: Vec::new(),
            survivors: Vec::new(),
            pick: None,
            truncated: false,
            provenance: BTreeMap::new(),
            rationales: BTreeMap::new(),
            warnings: Vec::new(),
            truth: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StageFlow {
    pub per_generator: BTreeMap<String, GeneratorFlow>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TokenReport {
    pub prompt_total: u64,
    pub completion_total: u64,
    pub total: u64,
    pub per_call: Vec<CallRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BisectionResult {
    pub schema_version: u32,
    pub fix: CommitId,
    pub mode: String,
    pub final_bic: Option<CommitId>,
    pub per_generator_pick: BTreeMap<String, Option<CommitId>>,
    pub votes_tally: BTreeMap<CommitId, u32>,
    pub none_votes: u32,
    pub completed_rounds: u32,
    pub patch_class: Option<String>,
    pub critical_lines: Vec<CriticalLine>,
    pub keywords: MessageKeywords,
    pub flow: StageFlow,
    pub rationales: Vec<String>,
    pub tokens: TokenReport,
}

impl BisectionResult {
    fn empty(fix: CommitId, mode: PipelineMode) -> BisectionResult {
        BisectionResult {
            schema_version: REPORT_SCHEMA_VERSION,
            fix,
            mode: mode.label().to_string(),
            final_bic: None,
            per_generator_pick: BTreeMap::new(),
            votes_tally: BTreeMap::new(),
            none_votes: 0,
            completed_rounds: 0,
            patch_class: None,
            critical_lines: Vec::new(),
            keywords: MessageKeywords::default(),
            flow: StageFlow::default(),
            rationales: Vec::new(),
            tokens: TokenReport::default(),
        }
    }

    /// Stable JSON rendering of the report (maps are ordered).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

// ---------------------------------------------------------------------------
// Prompt-content assembly with the function-body token budget
// ---------------------------------------------------------------------------

const VERDICT_REMINDER: &str =
    "Answer with a standalone True or False token (plus your reasoning when True).";
const CHOICE_REMINDER: &str =
    "Name the chosen commit by its hash (at least 12 characters), or say None.";

struct BodyBudget {
    budget: u64,
    spent: u64,
    dropped: Vec<String>,
}

impl BodyBudget {
    fn new(budget: u64) -> BodyBudget {
        BodyBudget {
            budget,
            spent: 0,
            dropped: Vec::new(),
        }
    }

    /// Keep bodies while they fit, largest-first victims when over budget.
    fn admit(&mut self, bodies: &BTreeMap<FunctionLocator, FunctionBody>) -> String {
        let mut entries: Vec<(&FunctionLocator, &FunctionBody, u64)> = bodies
            .iter()
            .map(|(l, b)| (l, b, estimate_tokens(&b.text)))
            .collect();
        // Drop the largest first until the remainder fits.
        let mut total: u64 = entries.iter().map(|(_, _, t)| t).sum();
        entries.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(b.0)));
        let mut kept = entries.clone();
        while self.spent + total > self.budget && !kept.is_empty() {
            let (loc, _, t) = kept.remove(0);
            total -= t;
            self.dropped.push(loc.to_string());
        }
        kept.sort_by(|a, b| a.0.cmp(b.0));
        self.spent += total;
        let mut out = String::new();
        for (loc, body, _) in kept {
            out.push_str(&format!(
                "filename: {}\nfunction: {}\n{}\n",
                loc.filename,
                loc.functionname,
                body.numbered()
            ));
        }
        out
    }
}

/// Pre-patch bodies of every function a commit touches.
fn bodies_before(
    repo: &Repo,
    commit: &Commit,
) -> Result<BTreeMap<FunctionLocator, FunctionBody>, RepoError> {
    let mut out = BTreeMap::new();
    let Some(parent) = commit.first_parent() else {
        return Ok(out);
    };
    for locator in commit.diff.touched_functions() {
        match repo.function_body_at(parent, &locator) {
            Ok(body) => {
                out.insert(locator, body);
            }
            Err(RepoError::FunctionNotFound(_)) => {} // introduced by this commit
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// `commit <hash>` header, message, diff, and budgeted pre-commit bodies.
fn commit_block(
    repo: &Repo,
    commit: &Commit,
    budget: &mut BodyBudget,
) -> Result<String, RepoError> {
    let bodies = bodies_before(repo, commit)?;
    let body_text = budget.admit(&bodies);
    let mut out = format_patch_content(commit);
    if !body_text.is_empty() {
        out.push_str("\nThe complete function definitions before this commit are:\n");
        out.push_str(&body_text);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Screen every candidate with the binary prompt; no early termination.
/// Per-candidate failures keep the candidate with a flag; a transcript miss
/// aborts because replay without the transcript cannot be meaningful.
pub fn pre_filter(
    repo: &Repo,
    fix_content: &str,
    candidates: &CandidateSet,
    gateway: &Gateway,
    config: &PipelineConfig,
    flow: &mut GeneratorFlow,
    flags: &mut Vec<String>,
) -> Result<Vec<CommitId>, PipelineError> {
    let label = format!("pre_filter:{}", candidates.generator.label());
    let mut survivors = Vec::new();
    for cid in &candidates.commits {
        let commit = repo.commit(cid)?;
        let commit_content = format_patch_content(&commit);
        let mut params = BTreeMap::new();
        params.insert("patch_content".to_string(), fix_content.to_string());
        params.insert("commit_content".to_string(), commit_content);
        let prompt = match render_prompt(TemplateId::PreFilter, &params) {
            Ok(p) => p,
            Err(e) => {
                flags.push(format!("pre_filter render failed for {cid}: {e}"));
                survivors.push(cid.clone());
                continue;
            }
        };
        let req = LlmRequest::new(&config.model, prompt);
        match gateway.complete_parsed(&label, &req, VERDICT_REMINDER, parse_binary_verdict) {
            Ok((verdict, _)) => {
                if verdict.is_bic {
                    flow.rationales.insert(cid.clone(), verdict.rationale);
                    survivors.push(cid.clone());
                }
            }
            Err(e @ LlmError::TranscriptMiss(_)) => return Err(e.into()),
            Err(e) => {
                // Kept conservatively: a dropped true BIC is unrecoverable.
                flags.push(format!("pre_filter kept {cid} after error: {e}"));
                flow.rationales
                    .insert(cid.clone(), format!("kept after error: {e}"));
                survivors.push(cid.clone());
            }
        }
    }
    Ok(survivors)
}

/// Comparative selection among survivors. One survivor returns directly with
/// no model call; zero returns None.
#[allow(clippy::too_many_arguments)]
pub fn post_filter(
    repo: &Repo,
    fix_content: &str,
    generator: GeneratorKind,
    survivors: &[CommitId],
    gateway: &Gateway,
    config: &PipelineConfig,
    rationales: &mut Vec<String>,
    flags: &mut Vec<String>,
) -> Result<Option<CommitId>, PipelineError> {
    match survivors.len() {
        0 => return Ok(None),
        1 => return Ok(Some(survivors[0].clone())),
        _ => {}
    }
    let label = format!("post_filter:{}", generator.label());
    let rounds = if config.vote_in_post_filter {
        config.votes
    } else {
        1
    };
    let mut tally: BTreeMap<CommitId, u32> = BTreeMap::new();
    let mut none_votes = 0u32;
    for _ in 0..rounds {
        match comparative_round(repo, fix_content, survivors, gateway, config, &label, flags)? {
            RoundOutcome::Chosen(c, rationale) => {
                rationales.push(rationale);
                *tally.entry(c).or_default() += 1;
            }
            RoundOutcome::None_(rationale) => {
                rationales.push(rationale);
                none_votes += 1;
            }
            RoundOutcome::Failed => {}
        }
    }
    Ok(modal_choice(repo, tally, none_votes)?.0)
}

enum RoundOutcome {
    Chosen(CommitId, String),
    None_(String),
    Failed,
}

fn comparative_round(
    repo: &Repo,
    fix_content: &str,
    presented: &[CommitId],
    gateway: &Gateway,
    config: &PipelineConfig,
    label: &str,
    flags: &mut Vec<String>,
) -> Result<RoundOutcome, PipelineError> {
    let mut budget = BodyBudget::new(config.token_budget);
    let mut blocks = Vec::new();
    for cid in presented {
        let commit = repo.commit(cid)?;
        blocks.push(commit_block(repo, &commit, &mut budget)?);
    }
    if !budget.dropped.is_empty() {
        flags.push(format!(
            "{label}: dropped function bodies over token budget: {}",
            budget.dropped.join(", ")
        ));
    }
    let mut params = BTreeMap::new();
    params.insert("patch_content".to_string(), fix_content.to_string());
    params.insert("commit_content".to_string(), blocks.join("\n\n---\n\n"));
    let prompt = match render_prompt(TemplateId::Comparative, &params) {
        Ok(p) => p,
        Err(e) => {
            flags.push(format!("{label} render failed: {e}"));
            return Ok(RoundOutcome::Failed);
        }
    };
    let req = LlmRequest::new(&config.model, prompt);
    let presented_owned = presented.to_vec();
    match gateway.complete_parsed(label, &req, CHOICE_REMINDER, move |text| {
        parse_comparative_choice(text, &presented_owned)
    }) {
        Ok((choice, _)) => match choice.chosen {
            Some(c) => Ok(RoundOutcome::Chosen(c, choice.rationale)),
            None => Ok(RoundOutcome::None_(choice.rationale)),
        },
        Err(e @ LlmError::TranscriptMiss(_)) => Err(e.into()),
        Err(e) => {
            flags.push(format!("{label} unparseable after retries: {e}"));
            Ok(RoundOutcome::Failed)
        }
    }
}

/// Modal pick with recency tie-break; None wins only on a strict majority of
/// explicit none votes.
fn modal_choice(
    repo: &Repo,
    tally: BTreeMap<CommitId, u32>,
    none_votes: u32,
) -> Result<(Option<CommitId>, BTreeMap<CommitId, u32>), RepoError> {
    if tally.is_empty() {
        return Ok((None, tally));
    }
    let best_count = tally.values().copied().max().unwrap_or(0);
    if none_votes > best_count {
        return Ok((None, tally));
    }
    let tied: Vec<&CommitId> = tally
        .iter()
        .filter(|(_, v)| **v == best_count)
        .map(|(k, _)| k)
        .collect();
    if tied.len() == 1 {
        return Ok((Some(tied[0].clone()), tally.clone()));
    }
    // Recency tie-break: latest (author_time, hash) wins.
    let mut best: Option<(i64, CommitId)> = None;
    for cid in tied {
        let t = repo.commit(cid)?.author_time;
        let key = (t, cid.clone());
        if best
            .as_ref()
            .map(|(bt, bc)| key.0 > *bt || (key.0 == *bt && key.1 > *bc))
            .unwrap_or(true)
        {
            best = Some(key);
        }
    }
    Ok((best.map(|(_, c)| c), tally))
}

/// Outcome of the finalization stage.
#[derive(Debug, Clone, Default)]
pub struct FinalizeOutcome {
    pub final_bic: Option<CommitId>,
    pub votes_tally: BTreeMap<CommitId, u32>,
    pub none_votes: u32,
    pub completed_rounds: u32,
    pub rationales: Vec<String>,
}

/// Compare the distinct per-generator picks, `votes` times, and take the
/// modal answer. One distinct pick wins with a recorded single-round tally;
/// zero picks finalize to None.
pub fn finalize(
    repo: &Repo,
    fix_content: &str,
    picks: &BTreeMap<GeneratorKind, Option<CommitId>>,
    gateway: &Gateway,
    config: &PipelineConfig,
    flags: &mut Vec<String>,
) -> Result<FinalizeOutcome, PipelineError> {
    let mut distinct: Vec<CommitId> = Vec::new();
    for pick in picks.values().flatten() {
        if !distinct.contains(pick) {
            distinct.push(pick.clone());
        }
    }
    if distinct.is_empty() {
        return Ok(FinalizeOutcome::default());
    }
    if distinct.len() == 1 {
        let mut votes_tally = BTreeMap::new();
        votes_tally.insert(distinct[0].clone(), 1);
        return Ok(FinalizeOutcome {
            final_bic: Some(distinct[0].clone()),
            votes_tally,
            none_votes: 0,
            completed_rounds: 1,
            rationales: Vec::new(),
        });
    }

    // Present newest-first, like every other candidate list.
    let mut with_time: Vec<(i64, CommitId)> = Vec::new();
    for c in &distinct {
        with_time.push((repo.commit(c)?.author_time, c.clone()));
    }
    with_time.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| b.1.cmp(&a.1)));
    let presented: Vec<CommitId> = with_time.into_iter().map(|(_, c)| c).collect();

    // Every presented candidate appears in the tally, zero-vote entries
    // included, so a unanimous three-way split reads (7, 0, 0).
    let mut tally: BTreeMap<CommitId, u32> =
        presented.iter().map(|c| (c.clone(), 0)).collect();
    let mut none_votes = 0u32;
    let mut rationales = Vec::new();
    for round in 1..=config.votes {
        let label = format!("finalize:round{round}");
        match comparative_round(repo, fix_content, &presented, gateway, config, &label, flags)? {
            RoundOutcome::Chosen(c, rationale) => {
                rationales.push(rationale);
                *tally.entry(c).or_default() += 1;
            }
            RoundOutcome::None_(rationale) => {
                rationales.push(rationale);
                none_votes += 1;
            }
            RoundOutcome::Failed => {}
        }
    }
    let completed_rounds = tally.values().sum::<u32>() + none_votes;
    if completed_rounds == 0 {
        flags.push("finalize: every voting round failed to parse".to_string());
        return Ok(FinalizeOutcome {
            final_bic: None,
            votes_tally: tally,
            none_votes,
            completed_rounds,
            rationales,
        });
    }
    let (final_bic, votes_tally) = modal_choice(repo, tally, none_votes)?;
    Ok(FinalizeOutcome {
        final_bic,
        votes_tally,
        none_votes,
        completed_rounds,
        rationales,
    })
}

// ---------------------------------------------------------------------------
// The run entry point
// ---------------------------------------------------------------------------

/// Drop kernel-convention `Fixes:` tag lines from a commit message.
pub fn strip_fixes_tags(message: &str) -> String {
    message
        .lines()
        .filter(|l| {
            let t = l.trim_start();
            !(t.len() > 6 && t[..6].eq_ignore_ascii_case("fixes:"))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn truth_trace(flow: &GeneratorFlow, truth: &CommitId, final_bic: &Option<CommitId>) -> TruthTrace {
    TruthTrace {
        in_generated: flow.candidates.contains(truth),
        in_pre_filter_survivors: flow.survivors.contains(truth),
        is_post_filter_pick: flow.pick.as_ref() == Some(truth),
        is_final: final_bic.as_ref() == Some(truth),
    }
}

/// Run the configured pipeline over one fix commit. `truth` enables
/// stage-flow tracking of the known bug-inducing commit.
pub fn run(
    repo: &Repo,
    fix_ref: &str,
    config: &PipelineConfig,
    gateway: &Gateway,
    truth: Option<&CommitId>,
) -> Result<BisectionResult, PipelineFailure> {
    let calls_before = gateway.calls().len();
    let fail = |error: PipelineError, partial: BisectionResult| PipelineFailure {
        error,
        partial: Box::new(partial),
    };

    if let Err(msg) = config.validate() {
        return Err(fail(
            PipelineError::Config(msg),
            BisectionResult::empty(CommitId::new("0000000").unwrap(), config.mode),
        ));
    }

    let mut fix = match repo.resolve_commit(fix_ref) {
        Ok(c) => c,
        Err(e) => {
            return Err(fail(
                PipelineError::Repo(e),
                BisectionResult::empty(CommitId::new("0000000").unwrap(), config.mode),
            ))
        }
    };
    if config.strip_fixes_tags {
        fix.message = strip_fixes_tags(&fix.message);
    }

    let mut result = BisectionResult::empty(fix.id.clone(), config.mode);
    let run_res = run_inner(repo, &fix, config, gateway, truth, &mut result);
    let calls: Vec<CallRecord> = gateway.calls().split_off(calls_before);
    let prompt_total: u64 = calls.iter().map(|c| c.prompt_tokens).sum();
    let completion_total: u64 = calls.iter().map(|c| c.completion_tokens).sum();
    result.tokens = TokenReport {
        prompt_total,
        completion_total,
        total: prompt_total + completion_total,
        per_call: calls,
    };
    match run_res {
        Ok(()) => Ok(result),
        Err(e) => Err(fail(e, result)),
    }
}

fn run_inner(
    repo: &Repo,
    fix: &Commit,
    config: &PipelineConfig,
    gateway: &Gateway,
    truth: Option<&CommitId>,
    result: &mut BisectionResult,
) -> Result<(), PipelineError> {
    // Work on the comment-stripped diff; prompts carry the original patch.
    let mut stripped_fix = fix.clone();
    stripped_fix.diff = strip_comment_changes(&fix.diff, config.language);
    result
        .flow
        .flags
        .extend(stripped_fix.diff.warnings.iter().cloned());

    let patch_class = match classify_patch(&stripped_fix.diff) {
        Ok(c) => Some(c),
        Err(DiffError::EmptyPatch) => {
            result
                .flow
                .flags
                .push("fix has no non-comment changed lines".to_string());
            None
        }
        Err(e) => return Err(e.into()),
    };
    result.patch_class = patch_class.as_ref().map(|c| c.label().to_string());

    let mut fix_budget = BodyBudget::new(config.token_budget);
    let fix_bodies = bodies_before(repo, &stripped_fix)?;
    let fix_body_text = fix_budget.admit(&fix_bodies);
    if !fix_budget.dropped.is_empty() {
        result.flow.flags.push(format!(
            "patch content dropped function bodies over token budget: {}",
            fix_budget.dropped.join(", ")
        ));
    }
    let mut fix_content = format_patch_content(fix);
    if !fix_body_text.is_empty() {
        fix_content.push_str("\nThe complete functions before the patch are:\n");
        fix_content.push_str(&fix_body_text);
    }

    match config.mode {
        PipelineMode::Full => run_full(
            repo,
            fix,
            &stripped_fix,
            patch_class,
            &fix_bodies,
            &fix_content,
            config,
            gateway,
            truth,
            result,
        ),
        PipelineMode::BaselineEarlyStop => run_baseline_early_stop(
            repo,
            &stripped_fix,
            &fix_content,
            config,
            gateway,
            truth,
            result,
        ),
        PipelineMode::BaselineOneShot => run_baseline_one_shot(
            repo,
            &stripped_fix,
            &fix_content,
            config,
            gateway,
            truth,
            result,
        ),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_full(
    repo: &Repo,
    fix: &Commit,
    stripped_fix: &Commit,
    patch_class: Option<PatchClass>,
    fix_bodies: &BTreeMap<FunctionLocator, FunctionBody>,
    fix_content: &str,
    config: &PipelineConfig,
    gateway: &Gateway,
    truth: Option<&CommitId>,
    result: &mut BisectionResult,
) -> Result<(), PipelineError> {
    let enabled = &config.generators_enabled;
    let mut sets: BTreeMap<GeneratorKind, CandidateSet> = BTreeMap::new();

    if enabled.contains(&GeneratorKind::C1Function) {
        sets.insert(
            GeneratorKind::C1Function,
            generate_c1(repo, stripped_fix, config.candidate_cap)?,
        );
    }

    if enabled.contains(&GeneratorKind::C2CriticalLine) {
        let critical = match &patch_class {
            Some(class) => {
                let reorder_seed = match class {
                    PatchClass::ReorderOnly { pairs } => {
                        match reorder_context(&stripped_fix.diff, pairs, fix_bodies) {
                            Ok(seed) => seed,
                            Err(e) => {
                                result
                                    .flow
                                    .flags
                                    .push(format!("reorder context unavailable: {e}"));
                                Vec::new()
                            }
                        }
                    }
                    _ => Vec::new(),
                };
                let cl_config = CriticalLineConfig {
                    model: config.model.clone(),
                    num_lines: config.num_lines,
                };
                match identify_critical_lines(
                    fix,
                    class,
                    fix_bodies,
                    &reorder_seed,
                    gateway,
                    &cl_config,
                ) {
                    Ok((lines, warnings)) => {
                        result.flow.flags.extend(warnings);
                        lines
                    }
                    Err(e @ LlmError::TranscriptMiss(_)) => return Err(e.into()),
                    Err(e) => {
                        result
                            .flow
                            .flags
                            .push(format!("critical-line identification failed: {e}"));
                        Vec::new()
                    }
                }
            }
            None => Vec::new(),
        };
        result.critical_lines = critical.clone();
        sets.insert(
            GeneratorKind::C2CriticalLine,
            generate_c2(repo, stripped_fix, &critical, config.candidate_cap)?,
        );
    }

    if enabled.contains(&GeneratorKind::C3CommitMessage) {
        let keywords = extract_message_keywords(stripped_fix);
        result.keywords = keywords.clone();
        let exclude: BTreeSet<CommitId> = sets
            .values()
            .flat_map(|s| s.commits.iter().cloned())
            .collect();
        sets.insert(
            GeneratorKind::C3CommitMessage,
            generate_c3(repo, stripped_fix, &keywords, &exclude, config.candidate_cap)?,
        );
    }

    let mut picks: BTreeMap<GeneratorKind, Option<CommitId>> = BTreeMap::new();
    for (kind, set) in &sets {
        let mut flow = GeneratorFlow::empty();
        flow.candidates = set.commits.clone();
        flow.truncated = set.truncated;
        flow.provenance = set.provenance.clone();
        flow.warnings = set.warnings.clone();
        flow.counts.generated = set.commits.len();

        let survivors = pre_filter(
            repo,
            fix_content,
            set,
            gateway,
            config,
            &mut flow,
            &mut result.flow.flags,
        )?;
        flow.survivors = survivors.clone();
        flow.counts.after_pre_filter = survivors.len();

        let pick = post_filter(
            repo,
            fix_content,
            *kind,
            &survivors,
            gateway,
            config,
            &mut result.rationales,
            &mut result.flow.flags,
        )?;
        flow.counts.after_post_filter = usize::from(pick.is_some());
        flow.pick = pick.clone();
        picks.insert(*kind, pick);
        result
            .flow
            .per_generator
            .insert(kind.label().to_string(), flow);
    }

    let outcome = finalize(
        repo,
        fix_content,
        &picks,
        gateway,
        config,
        &mut result.flow.flags,
    )?;
    result.final_bic = outcome.final_bic.clone();
    result.votes_tally = outcome.votes_tally;
    result.none_votes = outcome.none_votes;
    result.completed_rounds = outcome.completed_rounds;
    result.rationales.extend(outcome.rationales);
    for (kind, pick) in &picks {
        result
            .per_generator_pick
            .insert(kind.label().to_string(), pick.clone());
    }

    for (kind, flow) in result.flow.per_generator.iter_mut() {
        if let Some(truth) = truth {
            flow.truth = Some(truth_trace(flow, truth, &result.final_bic));
        }
        if let Some(pick) = picks.get(&label_kind(kind)).and_then(|p| p.as_ref()) {
            if result.final_bic.as_ref() == Some(pick) {
                flow.counts.finalized = 1;
            }
        }
    }
    Ok(())
}

fn label_kind(label: &str) -> GeneratorKind {
    match label {
        "C1" => GeneratorKind::C1Function,
        "C2" => GeneratorKind::C2CriticalLine,
        _ => GeneratorKind::C3CommitMessage,
    }
}

/// Reverse-chronological single-commit loop stopping at the first True.
fn run_baseline_early_stop(
    repo: &Repo,
    stripped_fix: &Commit,
    fix_content: &str,
    config: &PipelineConfig,
    gateway: &Gateway,
    truth: Option<&CommitId>,
    result: &mut BisectionResult,
) -> Result<(), PipelineError> {
    let set = generate_c1(repo, stripped_fix, config.candidate_cap)?;
    let mut flow = GeneratorFlow::empty();
    flow.candidates = set.commits.clone();
    flow.truncated = set.truncated;
    flow.provenance = set.provenance.clone();
    flow.counts.generated = set.commits.len();

    let mut final_pick: Option<CommitId> = None;
    for cid in &set.commits {
        let commit = repo.commit(cid)?;
        let mut params = BTreeMap::new();
        params.insert("patch_content".to_string(), fix_content.to_string());
        params.insert("commit_content".to_string(), format_patch_content(&commit));
        let prompt = render_prompt(TemplateId::PreFilter, &params).map_err(PipelineError::Llm)?;
        let req = LlmRequest::new(&config.model, prompt);
        match gateway.complete_parsed(
            "pre_filter:C1",
            &req,
            VERDICT_REMINDER,
            parse_binary_verdict,
        ) {
            Ok((verdict, _)) => {
                if verdict.is_bic {
                    flow.rationales.insert(cid.clone(), verdict.rationale);
                    final_pick = Some(cid.clone());
                    break;
                }
            }
            Err(e) => {
                result
                    .flow
                    .flags
                    .push(format!("baseline skipped {cid} after error: {e}"));
            }
        }
    }

    flow.survivors = final_pick.iter().cloned().collect();
    flow.counts.after_pre_filter = flow.survivors.len();
    flow.counts.after_post_filter = flow.survivors.len();
    flow.pick = final_pick.clone();
    flow.counts.finalized = usize::from(final_pick.is_some());
    if let Some(truth) = truth {
        flow.truth = Some(truth_trace(&flow, truth, &final_pick));
    }
    result
        .flow
        .per_generator
        .insert("C1".to_string(), flow);
    result
        .per_generator_pick
        .insert("C1".to_string(), final_pick.clone());
    if let Some(pick) = &final_pick {
        result.votes_tally.insert(pick.clone(), 1);
        result.completed_rounds = 1;
    }
    result.final_bic = final_pick;
    Ok(())
}

/// One comparative call over the newest N function-history candidates.
fn run_baseline_one_shot(
    repo: &Repo,
    stripped_fix: &Commit,
    fix_content: &str,
    config: &PipelineConfig,
    gateway: &Gateway,
    truth: Option<&CommitId>,
    result: &mut BisectionResult,
) -> Result<(), PipelineError> {
    let set = generate_c1(repo, stripped_fix, config.candidate_cap)?;
    let mut flow = GeneratorFlow::empty();
    flow.candidates = set.commits.clone();
    flow.truncated = set.truncated;
    flow.provenance = set.provenance.clone();
    flow.counts.generated = set.commits.len();

    let final_pick = if set.commits.is_empty() {
        None
    } else {
        match comparative_round(
            repo,
            fix_content,
            &set.commits,
            gateway,
            config,
            "baseline_one_shot",
            &mut result.flow.flags,
        )? {
            RoundOutcome::Chosen(c, rationale) => {
                result.rationales.push(rationale);
                Some(c)
            }
            RoundOutcome::None_(rationale) => {
                result.rationales.push(rationale);
                None
            }
            RoundOutcome::Failed => None,
        }
    };

    flow.survivors = set.commits.clone();
    flow.counts.after_pre_filter = set.commits.len();
    flow.counts.after_post_filter = usize::from(final_pick.is_some());
    flow.pick = final_pick.clone();
    flow.counts.finalized = usize::from(final_pick.is_some());
    if let Some(truth) = truth {
        flow.truth = Some(truth_trace(&flow, truth, &final_pick));
    }
    result.flow.per_generator.insert("C1".to_string(), flow);
    result
        .per_generator_pick
        .insert("C1".to_string(), final_pick.clone());
    if let Some(pick) = &final_pick {
        result.votes_tally.insert(pick.clone(), 1);
        result.completed_rounds = 1;
    }
    result.final_bic = final_pick;
    Ok(())
}
