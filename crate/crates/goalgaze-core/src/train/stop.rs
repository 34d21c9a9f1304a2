//! Early stopping on relative validation-loss improvement.

/// True when the most recent `consecutive` relative improvements
/// (L_prev - L_now) / L_prev are each below `rel`. Needs at least
/// `consecutive + 1` recorded checks; returns false before that.
pub fn early_stop(val_losses: &[f64], rel: f64, consecutive: usize) -> bool {
    if consecutive == 0 || val_losses.len() < consecutive + 1 {
        return false;
    }
    let start = val_losses.len() - consecutive;
    (start..val_losses.len()).all(|j| {
        let prev = val_losses[j - 1];
        let improvement = if prev > 0.0 { (prev - val_losses[j]) / prev } else { 0.0 };
        improvement < rel
    })
}
