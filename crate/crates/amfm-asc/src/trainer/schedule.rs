//! Cosine annealing with warm restarts.

use super::TrainConfig;

/// Learning rate at `epoch`: cosine from `lr_max` down to `lr_min` over each
/// period; period `i` lasts `restart_period * restart_mult^i` epochs and the
/// rate snaps back to `lr_max` at every restart boundary.
pub fn warm_restart_lr(epoch: usize, cfg: &TrainConfig) -> f64 {
    let e = epoch as f64;
    let mut start = 0.0;
    let mut len = cfg.restart_period as f64;
    while e >= start + len {
        start += len;
        len *= cfg.restart_mult.max(1.0);
    }
    let t = (e - start) / len;
    cfg.lr_min + (cfg.lr_max - cfg.lr_min) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}
