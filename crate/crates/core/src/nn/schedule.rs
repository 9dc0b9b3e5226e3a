use std::f64::consts::PI;

/// Linear warmup to `peak` over `warmup` epochs, then cosine decay towards
/// zero at `total`.
pub fn lr_schedule(epoch: usize, total: usize, warmup: usize, peak: f64) -> f64 {
    if epoch < warmup {
        return peak * (epoch + 1) as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup).max(1) as f64;
    let progress = (epoch - warmup) as f64 / span;
    peak * 0.5 * (1.0 + (PI * progress).cos())
}
