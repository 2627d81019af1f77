//! Gradient dropout masks.
//!
//! Every neuron of every hidden layer and of the output layer gets a
//! `Bernoulli(p)` gate on its incoming activation gradient during the backward
//! pass. The forward pass never sees the masks, and surviving gradients are
//! not rescaled.

use crate::error::{config, usage, Result};
use crate::lens::NetworkSpec;
use crate::stochastics::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GradMaskPlan {
    p: f64,
    masks: Vec<Vec<bool>>,
}

impl GradMaskPlan {
    /// Plan with every gate open, i.e. plain backpropagation.
    pub fn all_ones(spec: &NetworkSpec) -> Self {
        Self {
            p: 1.0,
            masks: spec.layer_widths().into_iter().map(|w| vec![true; w]).collect(),
        }
    }

    pub fn from_masks(p: f64, masks: Vec<Vec<bool>>) -> Result<Self> {
        check_probability(p)?;
        Ok(Self { p, masks })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn layer(&self, k: usize) -> &[bool] {
        &self.masks[k]
    }

    pub fn layers(&self) -> &[Vec<bool>] {
        &self.masks
    }

    pub fn check_layout(&self, spec: &NetworkSpec) -> Result<()> {
        let widths = spec.layer_widths();
        if widths.len() != self.masks.len()
            || widths.iter().zip(&self.masks).any(|(w, m)| *w != m.len())
        {
            return Err(config(format!(
                "mask plan shaped {:?} does not match layer widths {widths:?}",
                self.masks.iter().map(Vec::len).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }

    pub fn fraction_open(&self) -> f64 {
        let total: usize = self.masks.iter().map(Vec::len).sum();
        let open = self.masks.iter().flatten().filter(|&&m| m).count();
        open as f64 / total.max(1) as f64
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(usage(format!("gradient keep probability p = {p} is outside [0, 1]")));
    }
    Ok(())
}

/// One independent `Bernoulli(p)` gate per neuron of every layer.
pub fn sample_masks(spec: &NetworkSpec, p: f64, rng: &mut Rng) -> Result<GradMaskPlan> {
    check_probability(p)?;
    let masks = spec
        .layer_widths()
        .into_iter()
        .map(|w| (0..w).map(|_| rng.bernoulli(p)).collect())
        .collect();
    Ok(GradMaskPlan { p, masks })
}

#[inline]
pub(crate) fn gate_one(grad: f64, open: bool) -> f64 {
    if open {
        grad
    } else {
        0.0
    }
}

/// `out[j] = mask[j]·grad_a[j]`
pub fn gate(grad_a: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if grad_a.len() != mask.len() {
        return Err(config(format!(
            "gradient has {} entries, mask {}",
            grad_a.len(),
            mask.len()
        )));
    }
    Ok(grad_a.iter().zip(mask).map(|(&g, &m)| gate_one(g, m)).collect())
}
