//! Percentiles and grid resampling.

/// Nearest-rank percentile: the value of rank `⌈q/100 · N⌉` (at least 1) in
/// ascending order. NaN sorts last.
pub fn nearest_rank(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

/// `n` evenly spaced points from 0 to `end`.
pub fn grid(end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| end * k as f64 / (n - 1) as f64).collect()
}

/// Value of the last sample at or before each grid point. Points before the
/// first sample take the first value.
pub fn carry_forward(xs: &[f64], ys: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut k = 0;
    for &g in grid {
        while k + 1 < xs.len() && xs[k + 1] <= g {
            k += 1;
        }
        out.push(ys.get(k).copied().unwrap_or(f64::NAN));
    }
    out
}
