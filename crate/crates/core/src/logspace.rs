//! Log-space helpers for probabilities far below `f64::MIN_POSITIVE`.

/// `ln(sum(exp(x)))`, exact for all-`-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(1 - p)` for a probability `p`.
pub fn ln_complement(p: f64) -> f64 {
    (-p).ln_1p()
}

/// `ln(1 - exp(x))` for `x <= 0`.
pub fn log1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Log-probability that a chain first switches on inside a window.
///
/// `h[s]` is the switch-on probability at position `s` given it is still
/// off; `log_pmf[i]` weights position `window_start + i`. Returns
/// `ln sum_t prod_{s<t}(1 - h[s]) * h[t] * pmf[t]`.
pub fn log_first_acquisition(h: &[f64], window_start: usize, log_pmf: &[f64]) -> f64 {
    let mut log_survival = 0.0;
    let mut terms = Vec::with_capacity(log_pmf.len());
    for (s, &hs) in h.iter().enumerate() {
        if s >= window_start {
            let i = s - window_start;
            if i >= log_pmf.len() {
                break;
            }
            if hs > 0.0 {
                terms.push(log_survival + hs.ln() + log_pmf[i]);
            }
        }
        log_survival += ln_complement(hs);
        if log_survival == f64::NEG_INFINITY {
            break;
        }
    }
    log_sum_exp(&terms)
}
