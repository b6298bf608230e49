use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::stats::ColumnKind;

/// Observations of one environment. `x` is column-major: `x[c][row]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvBlock {
    pub env_id: String,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
}

impl EnvBlock {
    pub fn new(env_id: impl Into<String>, t: Vec<f64>, y: Vec<f64>, x: Vec<Vec<f64>>) -> Self {
        EnvBlock { env_id: env_id.into(), t, y, x }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Per-environment blocks of `(t, y, x)` sharing column kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiEnvDataset {
    blocks: Vec<EnvBlock>,
    t_kind: ColumnKind,
    y_kind: ColumnKind,
    x_kinds: Vec<ColumnKind>,
}

fn infer(values: impl Iterator<Item = f64>) -> ColumnKind {
    let mut binary = true;
    for v in values {
        if v != 0.0 && v != 1.0 {
            binary = false;
            break;
        }
    }
    if binary {
        ColumnKind::Binary
    } else {
        ColumnKind::Continuous
    }
}

impl MultiEnvDataset {
    /// Validates the blocks and infers each column as binary when every value
    /// is 0 or 1, continuous otherwise.
    pub fn new(blocks: Vec<EnvBlock>) -> Result<Self> {
        let p = blocks.first().map_or(0, |b| b.x.len());
        let mut seen = HashSet::new();
        for b in &blocks {
            if !seen.insert(b.env_id.as_str()) {
                return Err(Error::DegenerateInput(format!("environment `{}` appears twice", b.env_id)));
            }
            if b.is_empty() {
                return Err(Error::DegenerateInput(format!("environment `{}` has no observations", b.env_id)));
            }
            if b.y.len() != b.len() || b.x.iter().any(|c| c.len() != b.len()) {
                return Err(Error::DegenerateInput(format!("environment `{}` has ragged columns", b.env_id)));
            }
            if b.x.len() != p {
                return Err(Error::DegenerateInput(format!(
                    "environment `{}` has {} covariates, expected {p}",
                    b.env_id,
                    b.x.len()
                )));
            }
            let finite = b.t.iter().chain(&b.y).chain(b.x.iter().flatten()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::DegenerateInput(format!("environment `{}` has a non-finite value", b.env_id)));
            }
        }
        let t_kind = infer(blocks.iter().flat_map(|b| b.t.iter().copied()));
        let y_kind = infer(blocks.iter().flat_map(|b| b.y.iter().copied()));
        let x_kinds = (0..p).map(|c| infer(blocks.iter().flat_map(|b| b.x[c].iter().copied()))).collect();
        Ok(MultiEnvDataset { blocks, t_kind, y_kind, x_kinds })
    }

    pub fn blocks(&self) -> &[EnvBlock] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<EnvBlock> {
        self.blocks
    }

    pub fn n_envs(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.x_kinds.len()
    }

    pub fn n_rows(&self) -> usize {
        self.blocks.iter().map(EnvBlock::len).sum()
    }

    pub fn t_kind(&self) -> ColumnKind {
        self.t_kind
    }

    pub fn y_kind(&self) -> ColumnKind {
        self.y_kind
    }

    pub fn x_kinds(&self) -> &[ColumnKind] {
        &self.x_kinds
    }

    /// Indices of the blocks in ascending `env_id` order.
    pub fn sorted_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.blocks.len()).collect();
        idx.sort_by(|&a, &b| self.blocks[a].env_id.cmp(&self.blocks[b].env_id));
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infers_kinds() {
        let d = MultiEnvDataset::new(vec![
            EnvBlock::new("a", vec![0.0, 1.0], vec![0.5, 1.0], vec![vec![1.0, 0.0]]),
            EnvBlock::new("b", vec![1.0], vec![2.0], vec![vec![3.0]]),
        ])
        .unwrap();
        assert_eq!(d.t_kind(), ColumnKind::Binary);
        assert_eq!(d.y_kind(), ColumnKind::Continuous);
        assert_eq!(d.x_kinds(), &[ColumnKind::Continuous]);
        assert_eq!(d.n_rows(), 3);
    }

    #[test]
    fn rejects_duplicates_and_ragged_blocks() {
        let b = EnvBlock::new("a", vec![0.0], vec![0.0], vec![]);
        assert!(MultiEnvDataset::new(vec![b.clone(), b.clone()]).is_err());
        let ragged = EnvBlock::new("c", vec![0.0, 1.0], vec![0.0], vec![]);
        assert!(MultiEnvDataset::new(vec![b.clone(), ragged]).is_err());
        let wide = EnvBlock::new("d", vec![0.0], vec![0.0], vec![vec![1.0]]);
        assert!(MultiEnvDataset::new(vec![b, wide]).is_err());
    }
}
