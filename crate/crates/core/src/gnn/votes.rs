use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Externally produced predictions: node -> sample index -> class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VoteTable {
    votes: BTreeMap<usize, BTreeMap<u64, usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VoteRow {
    node_id: usize,
    sample_index: u64,
    class: usize,
}

impl VoteTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, node: usize, sample_index: u64, class: usize) -> Result<()> {
        let slot = self.votes.entry(node).or_default();
        if slot.insert(sample_index, class).is_some() {
            return Err(Error::Format(format!(
                "duplicate vote for node {node}, sample {sample_index}"
            )));
        }
        Ok(())
    }

    pub fn get(&self, node: usize, sample_index: u64) -> Option<usize> {
        self.votes.get(&node)?.get(&sample_index).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.votes.keys().copied()
    }

    pub fn samples(&self, node: usize) -> usize {
        self.votes.get(&node).map_or(0, BTreeMap::len)
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    /// Number of votes over all nodes.
    pub fn len(&self) -> usize {
        self.votes.values().map(BTreeMap::len).sum()
    }

    /// One more than the largest class seen.
    pub fn num_classes(&self) -> usize {
        self.votes
            .values()
            .flat_map(|m| m.values())
            .max()
            .map_or(0, |c| c + 1)
    }

    /// Class counts over every sample recorded for `node`.
    pub fn tally(&self, node: usize) -> BTreeMap<usize, u64> {
        let mut t = BTreeMap::new();
        if let Some(m) = self.votes.get(&node) {
            for &c in m.values() {
                *t.entry(c).or_insert(0) += 1;
            }
        }
        t
    }
}

/// Reads `node_id,sample_index,class` rows (with header).
pub fn load_votes(path: &Path) -> Result<VoteTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let mut table = VoteTable::new();
    for (i, row) in rdr.deserialize::<VoteRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            msg: e.to_string(),
        })?;
        table.insert(row.node_id, row.sample_index, row.class)?;
    }
    Ok(table)
}

pub fn write_votes(path: &Path, table: &VoteTable) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["node_id", "sample_index", "class"])?;
    for (&node, m) in &table.votes {
        for (&s, &c) in m {
            w.serialize(VoteRow {
                node_id: node,
                sample_index: s,
                class: c,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn tmp(name: &str, body: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("votes-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn three_votes_for_class_two() {
        let p = tmp("a.csv", "node_id,sample_index,class\n0,0,2\n0,1,2\n0,2,2\n");
        let t = load_votes(&p).unwrap();
        assert_eq!(t.tally(0), BTreeMap::from([(2, 3)]));
    }

    #[test]
    fn duplicate_is_format_error() {
        let p = tmp("b.csv", "node_id,sample_index,class\n0,0,2\n0,0,1\n");
        assert!(matches!(load_votes(&p), Err(Error::Format(_))));
    }

    #[test]
    fn empty_file_gives_empty_table() {
        let p = tmp("c.csv", "");
        assert!(load_votes(&p).unwrap().is_empty());
        let p = tmp("d.csv", "node_id,sample_index,class\n");
        assert!(load_votes(&p).unwrap().is_empty());
    }

    #[test]
    fn write_then_load() {
        let mut t = VoteTable::new();
        t.insert(3, 7, 1).unwrap();
        t.insert(1, 0, 0).unwrap();
        let p = std::env::temp_dir().join(format!("votes-rt-{}.csv", std::process::id()));
        write_votes(&p, &t).unwrap();
        assert_eq!(load_votes(&p).unwrap(), t);
    }
}
