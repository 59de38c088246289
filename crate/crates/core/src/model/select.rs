use rand::Rng;

use crate::autodiff::MASK_SENTINEL;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectMode {
    /// Sample from the softmax over unmasked positions.
    Stochastic,
    /// Highest logit, lowest index on ties.
    GreedyArgmax,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub log_prob: f64,
    pub entropy: f64,
}

/// Picks a position from masked logits. Positions at the mask sentinel are
/// never chosen; at least one position must be open.
pub fn actor_select<T: Scalar, R: Rng + ?Sized>(logits: &[T], mode: SelectMode, rng: &mut R) -> Selection {
    let open: Vec<bool> = logits.iter().map(|l| l.f64() > MASK_SENTINEL / 2.0).collect();
    let max = logits
        .iter()
        .zip(&open)
        .filter(|(_, o)| **o)
        .map(|(l, _)| l.f64())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite(), "actor_select needs at least one open position");
    let weights: Vec<f64> = logits
        .iter()
        .zip(&open)
        .map(|(l, o)| if *o { (l.f64() - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    let log_total = total.ln();
    let entropy = -weights
        .iter()
        .zip(logits)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, l)| (w / total) * (l.f64() - max - log_total))
        .sum::<f64>();

    let index = match mode {
        SelectMode::GreedyArgmax => {
            let mut best = None;
            for (j, l) in logits.iter().enumerate() {
                if open[j] && best.is_none_or(|(_, b)| l.f64() > b) {
                    best = Some((j, l.f64()));
                }
            }
            best.map(|(j, _)| j).unwrap_or(0)
        }
        SelectMode::Stochastic => {
            let u = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (j, w) in weights.iter().enumerate() {
                if *w > 0.0 {
                    acc += w;
                    pick = Some(j);
                    if u < acc {
                        break;
                    }
                }
            }
            pick.expect("an open position exists")
        }
    };
    Selection {
        index,
        log_prob: logits[index].f64() - max - log_total,
        entropy,
    }
}
