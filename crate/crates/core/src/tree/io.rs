use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScenarioTree;
use crate::error::{Error, Result};

/// On-disk JSON layout of a tree.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeFile {
    #[serde(rename = "T")]
    pub stages: usize,
    pub d: usize,
    pub nodes: Vec<TreeNodeRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeNodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub quantizer: Vec<f64>,
    pub prob: f64,
}

impl From<&ScenarioTree> for TreeFile {
    fn from(tree: &ScenarioTree) -> Self {
        let nodes = (0..tree.len())
            .map(|n| TreeNodeRecord {
                id: n,
                parent: tree.parent(n),
                quantizer: tree.quantizer(n).to_vec(),
                prob: tree.prob(n),
            })
            .collect();
        TreeFile { stages: tree.depth(), d: tree.dim(), nodes }
    }
}

impl TryFrom<TreeFile> for ScenarioTree {
    type Error = Error;

    /// Checks ids, dimensions and the declared depth, then every tree invariant.
    fn try_from(file: TreeFile) -> Result<Self> {
        let n = file.nodes.len();
        let mut slots: Vec<Option<TreeNodeRecord>> = vec![None; n];
        for rec in file.nodes {
            let id = rec.id;
            if id >= n {
                return Err(Error::Structure { node: id, reason: format!("id out of range 0..{n}") });
            }
            if slots[id].is_some() {
                return Err(Error::Structure { node: id, reason: "duplicate id".into() });
            }
            if rec.quantizer.len() != file.d {
                return Err(Error::Structure {
                    node: id,
                    reason: format!("quantizer has {} entries, expected d = {}", rec.quantizer.len(), file.d),
                });
            }
            slots[id] = Some(rec);
        }
        let records: Vec<TreeNodeRecord> = slots.into_iter().map(|s| s.expect("ids are dense")).collect();
        let parent = records.iter().map(|r| r.parent).collect();
        let prob = records.iter().map(|r| r.prob).collect();
        let quantizer = records.iter().flat_map(|r| r.quantizer.iter().copied()).collect();
        let tree = ScenarioTree::from_parts(file.d, parent, quantizer, prob)?;
        if tree.depth() != file.stages {
            return Err(Error::Structure {
                node: 0,
                reason: format!("declared T = {} but tree depth is {}", file.stages, tree.depth()),
            });
        }
        tree.check()?;
        Ok(tree)
    }
}

impl ScenarioTree {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&TreeFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TreeFile = serde_json::from_str(text)?;
        ScenarioTree::try_from(file)
    }
}

/// Reads and validates a JSON tree.
pub fn load(path: impl AsRef<Path>) -> Result<ScenarioTree> {
    ScenarioTree::from_json(&fs::read_to_string(path)?)
}

pub fn save(tree: &ScenarioTree, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, tree.to_json()?)?;
    Ok(())
}
