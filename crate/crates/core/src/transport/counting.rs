use crate::error::{Error, Result};

fn check_sorted(times: &[f64], name: &str) -> Result<()> {
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Input(format!("{name} event times are not sorted")));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Input(format!("{name} event times must be finite")));
    }
    Ok(())
}

/// `(1/T) int_0^T |N_u(t) - N_v(t)| dt` between two single-type event streams.
///
/// With `I <= J` events, the `i`-th events are paired and the surplus events
/// of the longer stream are charged up to the horizon:
/// `(1/T) [sum_{i<=I} |t_i^u - t_i^v| + sum_{i>I} (T - t_i^v)]`.
pub fn counting_distance(u: &[f64], v: &[f64], horizon: f64) -> Result<f64> {
    check_sorted(u, "first")?;
    check_sorted(v, "second")?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Input(format!("horizon must be positive, got {horizon}")));
    }
    if u.iter().chain(v).any(|&t| !(0.0..=horizon).contains(&t)) {
        return Err(Error::Input(format!("event times must lie in [0, {horizon}]")));
    }
    let (short, long) = if u.len() <= v.len() { (u, v) } else { (v, u) };
    let paired: f64 = short.iter().zip(long).map(|(a, b)| (a - b).abs()).sum();
    let surplus: f64 = long[short.len()..].iter().map(|t| horizon - t).sum();
    Ok((paired + surplus) / horizon)
}

/// Direct integral of `|N_u - N_v|` over the merged breakpoints, divided by `T`.
///
/// Independent of the closed form above; used to cross-check it.
pub fn counting_distance_integral(u: &[f64], v: &[f64], horizon: f64) -> f64 {
    let mut breaks: Vec<f64> = u.iter().chain(v).copied().collect();
    breaks.push(0.0);
    breaks.push(horizon);
    breaks.sort_by(f64::total_cmp);
    let count = |xs: &[f64], t: f64| xs.iter().filter(|&&x| x <= t).count() as f64;
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi > lo {
            total += (count(u, lo) - count(v, lo)).abs() * (hi - lo);
        }
    }
    total / horizon
}
