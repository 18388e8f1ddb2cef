//! In-memory commit DAGs with known ancestry, for evaluation tests that
//! need thousands of ancestry queries without a real repository.

use std::collections::HashMap;

use bisectr_core::eval::{AncestryProvider, EvalError};
use bisectr_core::CommitId;
use rand::Rng;

/// A DAG of synthetic commits. Node 0 is the root; `mainline` is the
/// first-parent chain from root to tip.
pub struct SyntheticDag {
    ids: Vec<CommitId>,
    parents: Vec<Vec<usize>>,
    index: HashMap<CommitId, usize>,
    mainline: Vec<usize>,
}

impl SyntheticDag {
    /// Linear mainline of `n` commits with `branches` two-commit side
    /// branches merged back at random points.
    pub fn random(rng: &mut impl Rng, n: usize, branches: usize) -> SyntheticDag {
        assert!(n >= 2);
        let mut parents: Vec<Vec<usize>> = vec![Vec::new()];
        let mut mainline = vec![0usize];
        for _ in 1..n {
            let prev = *mainline.last().unwrap();
            parents.push(vec![prev]);
            mainline.push(parents.len() - 1);
        }
        for _ in 0..branches {
            // Fork from a random mainline point, add two commits, merge into
            // a random later mainline commit as a second parent.
            let fork_at = rng.random_range(0..mainline.len() - 1);
            let fork = mainline[fork_at];
            parents.push(vec![fork]);
            let b1 = parents.len() - 1;
            parents.push(vec![b1]);
            let b2 = parents.len() - 1;
            let merge_at = rng.random_range(fork_at + 1..mainline.len());
            let merge = mainline[merge_at];
            parents[merge].push(b2);
        }
        let ids: Vec<CommitId> = (0..parents.len()).map(|i| synthetic_id(i)).collect();
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        SyntheticDag {
            ids,
            parents,
            index,
            mainline,
        }
    }

    pub fn id(&self, node: usize) -> &CommitId {
        &self.ids[node]
    }

    pub fn mainline(&self) -> &[usize] {
        &self.mainline
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn node_of(&self, id: &CommitId) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Reflexive-transitive ancestry over parent edges.
    pub fn is_ancestor_nodes(&self, anc: usize, desc: usize) -> bool {
        if anc == desc {
            return true;
        }
        let mut stack = vec![desc];
        let mut seen = vec![false; self.parents.len()];
        while let Some(cur) = stack.pop() {
            if cur == anc {
                return true;
            }
            if seen[cur] {
                continue;
            }
            seen[cur] = true;
            stack.extend(self.parents[cur].iter().copied());
        }
        false
    }
}

impl AncestryProvider for SyntheticDag {
    fn is_ancestor(&self, anc: &CommitId, desc: &CommitId) -> Result<bool, EvalError> {
        let a = self
            .node_of(anc)
            .ok_or_else(|| EvalError::UnmappedCommit(anc.clone()))?;
        let d = self
            .node_of(desc)
            .ok_or_else(|| EvalError::UnmappedCommit(desc.clone()))?;
        Ok(self.is_ancestor_nodes(a, d))
    }
}

/// A stable 40-hex id derived from the node index.
pub fn synthetic_id(node: usize) -> CommitId {
    CommitId::new(format!("{node:040x}")).expect("synthetic id is valid hex")
}
