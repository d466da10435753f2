//! Clipped-surrogate loss and its gradient with respect to the network
//! parameters.
//!
//! Per sample with ratio `ρ = exp(log π(a) − log π_old(a))`:
//! `L = −min(ρA, clip(ρ)A) + c_v (V − R)² − c_e H`, averaged over the
//! minibatch. Logit gradients are closed form: `∂ log π(a)/∂z_j = 1[j=a] − p_j`
//! and `∂H/∂z_j = −p_j (log p_j + H)`, both zero at masked actions.

use crate::buffer::RolloutBuffer;
use crate::dist::{DistError, MaskedCategorical};
use cubeswarm_geonet::{CellBatch, PolicyValueNet, Scalar};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug)]
pub struct LossCoefs {
    pub clip_range: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Loss over the samples `idx` of `buffer`; the gradient is written into
/// `grads` (overwritten, not accumulated).
pub fn ppo_loss<T: Scalar>(
    net: &PolicyValueNet<T>,
    buffer: &RolloutBuffer,
    idx: &[usize],
    coefs: &LossCoefs,
    grads: &mut [T],
) -> Result<LossStats, DistError> {
    let samples: Vec<&[_]> = idx.iter().map(|&i| buffer.obs[i].as_slice()).collect();
    let batch = CellBatch::from_coords(&samples, net.config().kernel / 2);
    let cache = net.forward(&batch);
    let b = idx.len() as f64;
    let eps = coefs.clip_range;
    let mut dlogits = vec![T::zero(); cache.logits.len()];
    let mut dvalues = vec![T::zero(); idx.len()];
    let mut st = LossStats::default();
    for (s, &i) in idx.iter().enumerate() {
        let logits: Vec<f64> = cache
            .sample_logits(&batch, s)
            .iter()
            .map(|v| v.f64())
            .collect();
        let dist = MaskedCategorical::new(&logits, &buffer.masks[i])?;
        let a = buffer.actions[i];
        let adv = buffer.advantages[i];
        let log_ratio = dist.log_prob(a) - buffer.log_probs[i];
        let ratio = log_ratio.exp();
        let surr1 = ratio * adv;
        let surr2 = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        st.policy_loss -= surr1.min(surr2) / b;
        st.approx_kl += ((ratio - 1.0) - log_ratio) / b;
        if (ratio - 1.0).abs() > eps {
            st.clip_fraction += 1.0 / b;
        }
        let h = dist.entropy();
        st.entropy += h / b;
        let v = cache.values[s].f64();
        let ret = buffer.returns[i];
        st.value_loss += (v - ret) * (v - ret) / b;

        // The unclipped branch is active when it is the smaller one.
        let dl_dlogp = if surr1 <= surr2 {
            -adv * ratio / b
        } else {
            0.0
        };
        let p = dist.probs();
        let lp = dist.log_probs();
        let r = batch.sample_rows(s);
        let out = &mut dlogits[2 * r.start..2 * r.end];
        for j in 0..p.len() {
            if p[j] == 0.0 {
                continue;
            }
            let onehot = if j == a { 1.0 } else { 0.0 };
            let g = dl_dlogp * (onehot - p[j]) + coefs.entropy_coef / b * p[j] * (lp[j] + h);
            out[j] = T::of(g);
        }
        dvalues[s] = T::of(coefs.value_coef * 2.0 * (v - ret) / b);
    }
    st.total = st.policy_loss + coefs.value_coef * st.value_loss - coefs.entropy_coef * st.entropy;
    grads.iter_mut().for_each(|g| *g = T::zero());
    net.backward(&batch, &cache, &dlogits, &dvalues, grads);
    Ok(st)
}
