//! Weight-free reference implementation of part-level attention with
//! parent/child masking, and the rectified-flow training identities.

mod flow;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use flow::{cfg_combine, rf_interpolate, rf_loss, sample_timestep, sample_timesteps, FlowSample};

/// Stacked part latents: one row per token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentStack {
    pub values: DMatrix<f64>,
    /// Part index of each token row.
    pub part_of: Vec<usize>,
    /// Parent part of each part, `None` for roots.
    pub parents: Vec<Option<usize>>,
}

impl LatentStack {
    pub fn new(values: DMatrix<f64>, part_of: Vec<usize>, parents: Vec<Option<usize>>) -> Result<Self> {
        let s = Self {
            values,
            part_of,
            parents,
        };
        s.validate()?;
        Ok(s)
    }

    /// `K` parts of `n` consecutive tokens each.
    pub fn uniform(values: DMatrix<f64>, tokens_per_part: usize, parents: Vec<Option<usize>>) -> Result<Self> {
        let part_of = (0..values.nrows()).map(|r| r / tokens_per_part.max(1)).collect();
        if values.nrows() != tokens_per_part * parents.len() {
            return Err(Error::Argument(format!(
                "{} token rows do not split into {} parts of {tokens_per_part}",
                values.nrows(),
                parents.len()
            )));
        }
        Self::new(values, part_of, parents)
    }

    pub fn num_parts(&self) -> usize {
        self.parents.len()
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.ncols() == 0 {
            return Err(Error::Argument("latents need at least one channel".into()));
        }
        if self.part_of.len() != self.values.nrows() {
            return Err(Error::Argument(format!(
                "part map covers {} tokens but there are {}",
                self.part_of.len(),
                self.values.nrows()
            )));
        }
        let k = self.parents.len();
        if let Some(&bad) = self.part_of.iter().find(|&&p| p >= k) {
            return Err(Error::Argument(format!("token assigned to part {bad} of {k}")));
        }
        for (i, p) in self.parents.iter().enumerate() {
            match *p {
                Some(p) if p == i => return Err(Error::Structural(format!("part {i} is its own parent"))),
                Some(p) if p >= k => return Err(Error::Structural(format!("part {i} has unknown parent {p}"))),
                _ => {}
            }
        }
        for start in 0..k {
            let mut cur = start;
            for _ in 0..=k {
                match self.parents[cur] {
                    Some(p) => cur = p,
                    None => break,
                }
            }
            if self.parents[cur].is_some() {
                return Err(Error::Structural(format!("parent map has a cycle through part {start}")));
            }
        }
        Ok(())
    }

    fn tokens_of(&self, part: usize) -> Vec<usize> {
        (0..self.part_of.len()).filter(|&t| self.part_of[t] == part).collect()
    }

    fn children_of(&self, part: usize) -> Vec<usize> {
        (0..self.parents.len()).filter(|&c| self.parents[c] == Some(part)).collect()
    }

    /// Concatenate independent objects, offsetting part indices so parents stay
    /// inside their own object.
    pub fn batch(objects: &[LatentStack]) -> Result<Self> {
        let c = objects.first().map(|o| o.channels()).unwrap_or(1);
        if objects.iter().any(|o| o.channels() != c) {
            return Err(Error::Argument("batched objects must share a channel count".into()));
        }
        let rows: usize = objects.iter().map(|o| o.values.nrows()).sum();
        let mut values = DMatrix::zeros(rows, c);
        let (mut part_of, mut parents) = (Vec::new(), Vec::new());
        let (mut row, mut offset) = (0, 0);
        for o in objects {
            values.rows_mut(row, o.values.nrows()).copy_from(&o.values);
            row += o.values.nrows();
            part_of.extend(o.part_of.iter().map(|p| p + offset));
            parents.extend(o.parents.iter().map(|p| p.map(|p| p + offset)));
            offset += o.num_parts();
        }
        Self::new(values, part_of, parents)
    }
}

fn softmax_rows(mut logits: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in logits.row_iter_mut() {
        let max = row.max();
        row.apply(|x| *x = (*x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    logits
}

/// Row-wise scaled dot-product attention weights among the given rows.
fn self_attention(z: &DMatrix<f64>) -> DMatrix<f64> {
    let scale = 1.0 / (z.ncols() as f64).sqrt();
    softmax_rows(z * z.transpose() * scale)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMaps {
    /// One `n_k × n_k` map per part.
    pub local: Vec<DMatrix<f64>>,
    /// Map over all tokens.
    pub global: DMatrix<f64>,
}

/// `softmax(Z_k Z_kᵀ / √C)` per part and over the whole stack.
pub fn attention_maps(stack: &LatentStack) -> Result<AttentionMaps> {
    stack.validate()?;
    let local = (0..stack.num_parts())
        .map(|k| self_attention(&stack.values.select_rows(stack.tokens_of(k).iter())))
        .collect();
    Ok(AttentionMaps {
        local,
        global: self_attention(&stack.values),
    })
}

/// Where the parent-to-child pass reads its values from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyVariant {
    /// `Z'' = Z' + A^{p→c} Z'`.
    #[default]
    UpdatedValues,
    /// `Z'' = Z' + A^{p→c} Z`, weights still computed from `Z'`.
    InputValues,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ChildToParent,
    ParentToChild,
}

fn allowed(stack: &LatentStack, dir: Direction, token: usize) -> Vec<usize> {
    let part = stack.part_of[token];
    match dir {
        Direction::ChildToParent => match stack.parents[part] {
            Some(p) => stack.tokens_of(p),
            None => Vec::new(),
        },
        Direction::ParentToChild => {
            let children = stack.children_of(part);
            (0..stack.part_of.len()).filter(|t| children.contains(&stack.part_of[*t])).collect()
        }
    }
}

/// Dense masked attention matrix over all tokens, computed from `z`. Rows with an
/// empty mask are zero.
pub fn masked_attention_matrix(stack: &LatentStack, z: &DMatrix<f64>, dir: Direction) -> Result<DMatrix<f64>> {
    stack.validate()?;
    if z.shape() != stack.values.shape() {
        return Err(Error::Argument("latent shape does not match the stack".into()));
    }
    let n = z.nrows();
    let scale = 1.0 / (z.ncols() as f64).sqrt();
    let mut a = DMatrix::zeros(n, n);
    for u in 0..n {
        let keys = allowed(stack, dir, u);
        if keys.is_empty() {
            continue;
        }
        let logits: Vec<f64> = keys.iter().map(|&v| z.row(u).dot(&z.row(v)) * scale).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = w.iter().sum();
        for (&v, wv) in keys.iter().zip(&w) {
            a[(u, v)] = wv / sum;
        }
    }
    Ok(a)
}

/// Per-part masked update: each token aggregates `values` over its allowed set,
/// with weights from `z`.
fn masked_update(stack: &LatentStack, z: &DMatrix<f64>, values: &DMatrix<f64>, dir: Direction) -> DMatrix<f64> {
    let scale = 1.0 / (z.ncols() as f64).sqrt();
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    for k in 0..stack.num_parts() {
        let targets: Vec<usize> = match dir {
            Direction::ChildToParent => stack.parents[k].map(|p| stack.tokens_of(p)).unwrap_or_default(),
            Direction::ParentToChild => stack.children_of(k).into_iter().flat_map(|c| stack.tokens_of(c)).collect(),
        };
        if targets.is_empty() {
            continue;
        }
        let keys = z.select_rows(targets.iter());
        let vals = values.select_rows(targets.iter());
        for u in stack.tokens_of(k) {
            let logits = (&keys * z.row(u).transpose()) * scale;
            let max = logits.max();
            let w = logits.map(|l| (l - max).exp());
            let w = &w / w.sum();
            out.row_mut(u).copy_from(&(w.transpose() * &vals));
        }
    }
    out
}

/// Child tokens attend to their parent's tokens, then parents attend to their
/// children's tokens.
pub fn hierarchy_update(stack: &LatentStack, variant: HierarchyVariant) -> Result<DMatrix<f64>> {
    stack.validate()?;
    let z = &stack.values;
    let z1 = z + masked_update(stack, z, z, Direction::ChildToParent);
    let source = match variant {
        HierarchyVariant::UpdatedValues => &z1,
        HierarchyVariant::InputValues => z,
    };
    Ok(&z1 + masked_update(stack, &z1, source, Direction::ParentToChild))
}

/// Same result as [`hierarchy_update`] through dense `(KN)×(KN)` masked matrices.
pub fn hierarchy_update_dense(stack: &LatentStack, variant: HierarchyVariant) -> Result<DMatrix<f64>> {
    let z = &stack.values;
    let z1 = z + masked_attention_matrix(stack, z, Direction::ChildToParent)? * z;
    let a = masked_attention_matrix(stack, &z1, Direction::ParentToChild)?;
    Ok(match variant {
        HierarchyVariant::UpdatedValues => &z1 + a * &z1,
        HierarchyVariant::InputValues => &z1 + a * z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_trivial_cases() {
        let s = LatentStack::uniform(DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, 0.0]), 1, vec![None, Some(0), Some(0)])
            .unwrap();
        let m = attention_maps(&s).unwrap();
        assert!(m.local.iter().all(|a| a.shape() == (1, 1) && a[(0, 0)] == 1.0));
        let zero = LatentStack::uniform(DMatrix::zeros(4, 3), 2, vec![None, Some(0)]).unwrap();
        let m = attention_maps(&zero).unwrap();
        assert!(m.global.iter().all(|&v| v == 0.25));
        assert!(m.local.iter().all(|a| a.iter().all(|&v| v == 0.5)));
        let one = LatentStack::uniform(DMatrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64 * 0.3), 3, vec![None]).unwrap();
        let m = attention_maps(&one).unwrap();
        assert_eq!(m.global, m.local[0]);
    }

    #[test]
    fn hand_computed_chain() {
        let s = LatentStack::uniform(DMatrix::from_row_slice(2, 1, &[1.0, 2.0]), 1, vec![None, Some(0)]).unwrap();
        let z = hierarchy_update(&s, HierarchyVariant::UpdatedValues).unwrap();
        assert_eq!(z.as_slice(), &[4.0, 3.0]);
        let z = hierarchy_update(&s, HierarchyVariant::InputValues).unwrap();
        assert_eq!(z.as_slice(), &[3.0, 3.0]);
    }

    #[test]
    fn single_part_is_untouched() {
        let s = LatentStack::uniform(DMatrix::from_fn(4, 3, |r, c| (r as f64 - c as f64) * 0.7), 4, vec![None]).unwrap();
        assert_eq!(hierarchy_update(&s, HierarchyVariant::UpdatedValues).unwrap(), s.values);
    }

    #[test]
    fn dense_and_per_part_agree() {
        let z = DMatrix::from_fn(8, 3, |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.4 - 0.8);
        let s = LatentStack::uniform(z, 2, vec![None, Some(0), Some(0), Some(1)]).unwrap();
        for v in [HierarchyVariant::UpdatedValues, HierarchyVariant::InputValues] {
            let a = hierarchy_update(&s, v).unwrap();
            let b = hierarchy_update_dense(&s, v).unwrap();
            assert!((a - b).abs().max() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_forests() {
        let z = DMatrix::zeros(2, 1);
        assert!(matches!(
            LatentStack::uniform(z.clone(), 1, vec![Some(1), Some(0)]),
            Err(Error::Structural(_))
        ));
        assert!(matches!(LatentStack::uniform(z.clone(), 1, vec![None, Some(1)]), Err(Error::Structural(_))));
        assert!(LatentStack::uniform(z, 1, vec![None]).is_err());
    }

    #[test]
    fn batching_offsets_parents() {
        let a = LatentStack::uniform(DMatrix::from_row_slice(2, 1, &[1.0, 2.0]), 1, vec![None, Some(0)]).unwrap();
        let b = LatentStack::uniform(DMatrix::from_row_slice(2, 1, &[5.0, -1.0]), 1, vec![None, Some(0)]).unwrap();
        let both = LatentStack::batch(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(both.parents, vec![None, Some(0), None, Some(2)]);
        let z = hierarchy_update(&both, HierarchyVariant::UpdatedValues).unwrap();
        assert_eq!(z.rows(0, 2), hierarchy_update(&a, HierarchyVariant::UpdatedValues).unwrap());
        assert_eq!(z.rows(2, 2), hierarchy_update(&b, HierarchyVariant::UpdatedValues).unwrap());
    }
}
