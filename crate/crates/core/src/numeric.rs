//! Small numeric helpers.

/// `log(1 + exp(t))` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 35.0 {
        t
    } else {
        t.max(0.0) + (-t.abs()).exp().ln_1p()
    }
}

/// `softplus(t + h) − softplus(t)` without cancellation when `h` is small.
#[inline]
pub fn softplus_diff(t: f64, h: f64) -> f64 {
    if h.abs() <= 1.0 {
        (sigmoid(t) * h.exp_m1()).ln_1p()
    } else {
        softplus(t + h) - softplus(t)
    }
}

/// Logistic function `1 / (1 + exp(-t))`, stable for large `|t|`.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Formats `x` with 4 significant digits for human-readable summaries.
pub fn sig4(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..=6).contains(&mag) {
        return format!("{x:.3e}");
    }
    let decimals = (3 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}
