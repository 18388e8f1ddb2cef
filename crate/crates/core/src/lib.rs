//! Bug-bisection engine: given a repository and a vulnerability-fixing
//! commit, identify the bug-inducing commit via three candidate generators,
//! two-phase LLM filtering, and majority-vote finalization.

pub mod diff;
pub mod eval;
pub mod generators;
pub mod lang;
pub mod llm;
pub mod pipeline;
pub mod repo;
pub mod types;

pub use diff::{ChangedLine, DiffError, PatchClass, PatchDiff};
pub use generators::{CandidateSet, GeneratorKind, MessageKeywords};
pub use pipeline::{BisectionResult, PipelineConfig, PipelineMode};
pub use lang::LanguageProfile;
pub use repo::{Commit, FunctionHistory, Repo, RepoError};
pub use types::{CommitId, CriticalLine, FunctionBody, FunctionLocator};
