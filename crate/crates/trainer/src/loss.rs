/// Total objective: task loss plus the midpoint-collapse penalty summed
/// over gate sites, `lambda * 4 g (1 - g)` each. Kinds without gates pass
/// an empty slice and get the task loss back unchanged.
pub fn total_loss(task_loss: f64, gammas: &[f64], lambda_gate: f64) -> f64 {
    let penalty: f64 = gammas
        .iter()
        .map(|&g| lambda_gate * 4.0 * g * (1.0 - g))
        .sum();
    task_loss + penalty
}
