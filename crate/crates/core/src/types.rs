//! Domain newtypes shared across the crate.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A git commit hash: lowercase hex, 7 to 40 characters. The canonical form
/// is the full 40-character hash; short forms are accepted as inputs only.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommitId(String);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdError {
    #[error("not a commit hash: {0:?} (want 7-40 lowercase hex chars)")]
    Invalid(String),
}

impl CommitId {
    pub fn new(hash: impl Into<String>) -> Result<Self, IdError> {
        let hash = hash.into();
        let ok = (7..=40).contains(&hash.len())
            && hash.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        if ok {
            Ok(CommitId(hash))
        } else {
            Err(IdError::Invalid(hash))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// First 12 characters, the customary short display form.
    pub fn short(&self) -> &str {
        &self.0[..self.0.len().min(12)]
    }

    pub fn is_full(&self) -> bool {
        self.0.len() == 40
    }
}

impl fmt::Display for CommitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for CommitId {
    type Err = IdError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CommitId::new(s)
    }
}

/// A function within a file: repo-relative forward-slash path plus the
/// function's identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionLocator {
    pub filename: String,
    pub functionname: String,
}

impl FunctionLocator {
    pub fn new(filename: impl Into<String>, functionname: impl Into<String>) -> Self {
        FunctionLocator {
            filename: filename.into(),
            functionname: functionname.into(),
        }
    }
}

impl fmt::Display for FunctionLocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.filename, self.functionname)
    }
}

/// Full source text of one function at one commit. `start_line` is the
/// 1-based line of the signature in the containing file; line `n` of the
/// body is file line `start_line + n - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionBody {
    pub locator: FunctionLocator,
    pub start_line: u32,
    pub text: String,
}

impl FunctionBody {
    pub fn line_count(&self) -> u32 {
        self.text.lines().count() as u32
    }

    /// Body text with 1-based in-function line numbers prefixed.
    pub fn numbered(&self) -> String {
        let mut out = String::with_capacity(self.text.len() + 8 * self.line_count() as usize);
        for (i, line) in self.text.lines().enumerate() {
            out.push_str(&format!("{}: {}\n", i + 1, line));
        }
        out
    }
}

/// A line judged central to the vulnerability logic. `linenum` is 1-based
/// inside the named function (or inside the file-scope region when
/// `functionname` is empty).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CriticalLine {
    pub filename: String,
    pub functionname: String,
    pub linenum: u32,
    pub line_text: String,
}
