//! Categorical distribution over the `2N` actions with illegal actions
//! removed: their probability is exactly zero and they never enter sums.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DistError {
    #[error("every action is masked")]
    AllMasked,
    #[error("{logits} logits but {mask} mask entries")]
    Length { logits: usize, mask: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskedCategorical {
    /// `−∞` at masked actions.
    log_probs: Vec<f64>,
}

impl MaskedCategorical {
    pub fn new(logits: &[f64], mask: &[bool]) -> Result<Self, DistError> {
        if logits.len() != mask.len() {
            return Err(DistError::Length {
                logits: logits.len(),
                mask: mask.len(),
            });
        }
        let max = logits
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(DistError::AllMasked);
        }
        let sum: f64 = logits
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| (l - max).exp())
            .sum();
        let log_z = max + sum.ln();
        let log_probs = logits
            .iter()
            .zip(mask)
            .map(|(&l, &m)| if m { l - log_z } else { f64::NEG_INFINITY })
            .collect();
        Ok(Self { log_probs })
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn is_allowed(&self, a: usize) -> bool {
        self.log_probs[a] > f64::NEG_INFINITY
    }

    pub fn log_prob(&self, a: usize) -> f64 {
        self.log_probs[a]
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs
            .iter()
            .map(|&l| if l > f64::NEG_INFINITY { l.exp() } else { 0.0 })
            .collect()
    }

    /// `−Σ p log p` over legal actions.
    pub fn entropy(&self) -> f64 {
        -self
            .log_probs
            .iter()
            .filter(|l| l.is_finite())
            .map(|&l| l.exp() * l)
            .sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = None;
        for (a, &l) in self.log_probs.iter().enumerate() {
            if l == f64::NEG_INFINITY {
                continue;
            }
            acc += l.exp();
            last = Some(a);
            if u < acc {
                return a;
            }
        }
        last.expect("at least one legal action")
    }

    /// Most probable legal action, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (a, &l) in self.log_probs.iter().enumerate() {
            if l > self.log_probs[best] {
                best = a;
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionMode {
    #[default]
    Sample,
    Greedy,
}

impl std::str::FromStr for ActionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sample" => Ok(ActionMode::Sample),
            "greedy" | "argmax" => Ok(ActionMode::Greedy),
            _ => Err(format!("unknown action mode {s:?} (sample, greedy)")),
        }
    }
}

/// Picks an action from masked logits; returns it with its log-probability.
pub fn select_action<R: Rng + ?Sized>(
    logits: &[f64],
    mask: &[bool],
    mode: ActionMode,
    rng: &mut R,
) -> Result<(usize, f64), DistError> {
    let d = MaskedCategorical::new(logits, mask)?;
    let a = match mode {
        ActionMode::Sample => d.sample(rng),
        ActionMode::Greedy => d.argmax(),
    };
    Ok((a, d.log_prob(a)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn masked_actions_have_zero_probability() {
        let d = MaskedCategorical::new(&[1.0, 5.0, -2.0, 0.3], &[true, false, true, true]).unwrap();
        let p = d.probs();
        assert_eq!(p[1], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let full = MaskedCategorical::new(&[1.0, -2.0, 0.3], &[true; 3]).unwrap();
        assert!((d.entropy() - full.entropy()).abs() < 1e-15);
    }

    #[test]
    fn single_legal_action_is_certain() {
        let d = MaskedCategorical::new(&[3.0, -1.0, 2.0], &[false, true, false]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(d.sample(&mut rng), 1);
        }
        assert_eq!(d.log_prob(1), 0.0);
        assert_eq!(d.entropy(), 0.0);
        assert_eq!(d.argmax(), 1);
    }

    #[test]
    fn all_masked_is_an_error() {
        assert_eq!(
            MaskedCategorical::new(&[0.0, 0.0], &[false, false]),
            Err(DistError::AllMasked)
        );
        assert!(matches!(
            MaskedCategorical::new(&[0.0], &[true, true]),
            Err(DistError::Length { .. })
        ));
    }

    #[test]
    fn uniform_over_the_unmasked_half() {
        let n = 18;
        let mask: Vec<bool> = (0..n).map(|a| a % 2 == 0).collect();
        let d = MaskedCategorical::new(&vec![0.0; n], &mask).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 100_000;
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            counts[d.sample(&mut rng)] += 1;
        }
        let p = 1.0 / 9.0;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (a, &c) in counts.iter().enumerate() {
            if mask[a] {
                assert!(
                    (c as f64 - draws as f64 * p).abs() <= 3.0 * sigma,
                    "action {a}: {c}"
                );
            } else {
                assert_eq!(c, 0);
            }
        }
    }

    #[test]
    fn masked_actions_are_never_sampled() {
        let logits: Vec<f64> = (0..18).map(|i| (i as f64 * 0.7).sin() * 4.0).collect();
        let mask: Vec<bool> = (0..18).map(|a| a % 3 != 0).collect();
        let d = MaskedCategorical::new(&logits, &mask).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1_000_000 {
            assert!(mask[d.sample(&mut rng)]);
        }
    }
}
