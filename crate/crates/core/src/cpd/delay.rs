//! Delay distributions and their embedding into Noisy-OR edge weights.

use serde::{Deserialize, Serialize};

use super::CpdError;

const GRID_EPS: f64 = 1e-9;

/// Shape of a delay distribution on `[lower, upper]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DelayShape {
    /// Continuous uniform.
    Uniform,
    /// Equal mass on every multiple of `step` inside the support.
    DiscreteUniform { step: f64 },
    /// `((t - lower) / (upper - lower))^exponent`.
    Power { exponent: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub lower: f64,
    pub upper: f64,
    pub shape: DelayShape,
}

/// Per-frame Noisy-OR weights of one delay distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayWeights {
    /// Delay in whole frames for each weight.
    pub delays: Vec<u32>,
    pub alphas: Vec<f64>,
}

impl DelayWeights {
    /// Non-zero weights only: zero-weight edges are never materialised.
    pub fn nonzero(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.delays
            .iter()
            .copied()
            .zip(self.alphas.iter().copied())
            .filter(|&(_, a)| a > 0.0)
    }

    /// Probability that no edge with delay `<= frames` has fired.
    pub fn survival(&self, frames: i64) -> f64 {
        self.delays
            .iter()
            .zip(&self.alphas)
            .take_while(|(d, _)| i64::from(**d) <= frames)
            .map(|(_, a)| 1.0 - a)
            .product()
    }

    pub fn max_delay(&self) -> u32 {
        self.delays.last().copied().unwrap_or(0)
    }
}

impl DelayModel {
    pub fn uniform(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            shape: DelayShape::Uniform,
        }
    }

    pub fn discrete_uniform(lower: f64, upper: f64, step: f64) -> Self {
        Self {
            lower,
            upper,
            shape: DelayShape::DiscreteUniform { step },
        }
    }

    pub fn power(lower: f64, upper: f64, exponent: f64) -> Self {
        Self {
            lower,
            upper,
            shape: DelayShape::Power { exponent },
        }
    }

    pub fn validate(&self, frame_interval: f64) -> Result<(), CpdError> {
        let ok_bounds = self.lower.is_finite() && self.upper.is_finite() && self.upper >= self.lower;
        if !ok_bounds {
            return Err(CpdError::BadDelay(format!(
                "invalid support [{}, {}]",
                self.lower, self.upper
            )));
        }
        if self.lower + GRID_EPS < frame_interval {
            return Err(CpdError::BadDelay(format!(
                "delay lower bound {} is shorter than the frame interval {}",
                self.lower, frame_interval
            )));
        }
        match self.shape {
            DelayShape::DiscreteUniform { step } if !(step > 0.0) => {
                Err(CpdError::BadDelay(format!("discrete step must be positive, got {step}")))
            }
            DelayShape::Power { exponent } if !(exponent > 0.0) => {
                Err(CpdError::BadDelay(format!("power exponent must be positive, got {exponent}")))
            }
            _ => Ok(()),
        }
    }

    /// Cumulative distribution at delay `t` minutes.
    pub fn cdf(&self, t: f64) -> f64 {
        if t < self.lower {
            return 0.0;
        }
        if t >= self.upper {
            return 1.0;
        }
        let span = self.upper - self.lower;
        match self.shape {
            DelayShape::Uniform => ((t - self.lower) / span).clamp(0.0, 1.0),
            DelayShape::Power { exponent } => ((t - self.lower) / span).clamp(0.0, 1.0).powf(exponent),
            DelayShape::DiscreteUniform { step } => {
                let first = (self.lower / step - GRID_EPS).ceil();
                let last = (self.upper / step + GRID_EPS).floor();
                let upto = (t / step + GRID_EPS).floor();
                let total = last - first + 1.0;
                if total <= 0.0 {
                    return 1.0;
                }
                ((upto - first + 1.0) / total).clamp(0.0, 1.0)
            }
        }
    }

    /// Frame offsets whose delay lies within the support.
    pub fn frame_delays(&self, frame_interval: f64) -> Vec<u32> {
        let first = (self.lower / frame_interval - GRID_EPS).ceil().max(0.0) as u32;
        let last = (self.upper / frame_interval + GRID_EPS).floor().max(0.0) as u32;
        (first..=last).collect()
    }

    pub fn weights(&self, frame_interval: f64) -> Result<DelayWeights, CpdError> {
        let delays = self.frame_delays(frame_interval);
        let cdf: Vec<f64> = delays
            .iter()
            .map(|&d| self.cdf(d as f64 * frame_interval))
            .collect();
        let alphas = delay_edge_weights(&cdf)?;
        Ok(DelayWeights { delays, alphas })
    }

    /// Probability mass of observing a delay of `frames` on the frame grid:
    /// the CDF increment over the half-frame neighbourhood.
    pub fn frame_pmf(&self, frames: i64, frame_interval: f64) -> f64 {
        let t = frames as f64 * frame_interval;
        let half = 0.5 * frame_interval;
        (self.cdf(t + half) - self.cdf(t - half)).max(0.0)
    }

    /// Delay range in whole frames that carries expression mass.
    pub fn pmf_frame_range(&self, frame_interval: f64) -> (i64, i64) {
        let lo = ((self.lower - 0.5 * frame_interval) / frame_interval - GRID_EPS).ceil() as i64;
        let hi = ((self.upper + 0.5 * frame_interval) / frame_interval + GRID_EPS).floor() as i64;
        let lo = (lo..=hi)
            .find(|&d| self.frame_pmf(d, frame_interval) > 0.0)
            .unwrap_or(lo);
        let hi = (lo..=hi)
            .rev()
            .find(|&d| self.frame_pmf(d, frame_interval) > 0.0)
            .unwrap_or(hi);
        (lo.max(1), hi.max(1))
    }

    pub fn label(&self) -> String {
        format!("({},{})", fmt_num(self.lower), fmt_num(self.upper))
    }
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Converts CDF values at successive frame delays into Noisy-OR weights.
///
/// Each weight is the probability that the change happens at that delay
/// given it has not happened at any earlier one, so that the survival
/// product over the first `k` edges equals `1 - cdf[k]`.
pub fn delay_edge_weights(cdf: &[f64]) -> Result<Vec<f64>, CpdError> {
    let mut alphas = Vec::with_capacity(cdf.len());
    let mut survival = 1.0_f64;
    let mut prev = 0.0_f64;
    for (k, &f) in cdf.iter().enumerate() {
        if !(0.0..=1.0).contains(&f) || f < prev {
            return Err(CpdError::DegenerateCdf(format!(
                "cdf value {f} at position {k} is outside [0,1] or decreasing"
            )));
        }
        let alpha = if survival == 0.0 {
            if f < 1.0 {
                return Err(CpdError::DegenerateCdf(format!(
                    "certain change before position {k} but cdf is {f} there"
                )));
            }
            0.0
        } else {
            (1.0 - (1.0 - f) / survival).clamp(0.0, 1.0)
        };
        alphas.push(alpha);
        survival *= 1.0 - alpha;
        if f == 1.0 {
            survival = 0.0;
        }
        prev = f;
    }
    Ok(alphas)
}
