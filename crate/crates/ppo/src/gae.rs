//! Generalised advantage estimation over step-major rollouts
//! (`index = t·n_envs + env`).

/// `dones[i]` marks that the episode ended with step `i`; `last_values` are
/// the critic's estimates for each environment's state after the final
/// step. Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_values: &[f64],
    n_envs: usize,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(
        n_envs > 0 && n % n_envs == 0,
        "rollout length must be a multiple of n_envs"
    );
    assert_eq!(values.len(), n);
    assert_eq!(dones.len(), n);
    assert_eq!(last_values.len(), n_envs);
    let steps = n / n_envs;
    let mut adv = vec![0.0; n];
    for e in 0..n_envs {
        let mut gae = 0.0;
        for t in (0..steps).rev() {
            let i = t * n_envs + e;
            let next_value = if t + 1 == steps {
                last_values[e]
            } else {
                values[i + n_envs]
            };
            let live = if dones[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * next_value * live - values[i];
            gae = delta + gamma * lambda * live * gae;
            adv[i] = gae;
        }
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// `(x − mean) / std`, with the divisor floored at `1e-8`.
pub fn normalize(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for v in x {
        *v = (*v - mean) / std;
    }
}
