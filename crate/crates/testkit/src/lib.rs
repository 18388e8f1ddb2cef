//! Test fixtures: deterministic git repositories, synthetic diffs, ancestry
//! DAGs, and independent oracles used by integration and acceptance tests.

pub mod dag;
pub mod fixture;
pub mod oracle;
pub mod sha1;
pub mod synth;

pub use dag::SyntheticDag;
pub use fixture::FixtureRepo;
