//! Parameter forcing profiles `q(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric sech² pulse from a background value:
/// `q(t) = q_inf + (r + q_b - q_inf) / cosh(s (t_end - 2 t))²`, peaking at
/// `t_end / 2` with value `q_b + r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sech2Forcing {
    /// Background value.
    pub q_inf: f64,
    /// Peak exceedance over `q_b`.
    pub r: f64,
    /// Speed (inverse time units).
    pub s: f64,
    /// Duration of the window `[0, t_end]`.
    pub t_end: f64,
    /// Reference value the exceedance `r` is measured from.
    pub q_b: f64,
}

impl Sech2Forcing {
    pub fn amplitude(&self) -> f64 {
        self.r + self.q_b - self.q_inf
    }

    pub fn value(&self, t: f64) -> f64 {
        let c = (self.s * (self.t_end - 2.0 * t)).cosh();
        self.q_inf + self.amplitude() / (c * c)
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        let u = self.s * (self.t_end - 2.0 * t);
        let sech2 = 1.0 / u.cosh().powi(2);
        let tanh = u.tanh();
        self.amplitude() * 4.0 * self.s * self.s * (4.0 * sech2 * tanh * tanh - 2.0 * sech2 * sech2)
    }

    pub fn peak_time(&self) -> f64 {
        0.5 * self.t_end
    }

    /// Exact time spent above `threshold` (zero if the peak does not reach it).
    pub fn exceedance_time_exact(&self, threshold: f64) -> f64 {
        let base = threshold - self.q_inf;
        let amp = self.amplitude();
        if base <= 0.0 || amp <= base {
            return 0.0;
        }
        (amp / base).sqrt().acosh() / self.s
    }

    /// Leading-order exceedance time over `q_b`: `sqrt(r / (q_b - q_inf)) / s`.
    pub fn exceedance_time_approx(&self) -> f64 {
        (self.r / (self.q_b - self.q_inf)).sqrt() / self.s
    }

    /// Speed `s` giving exceedance time `t_e` above `q_b` for exceedance `r`.
    pub fn speed_for(r: f64, t_e: f64, q_inf: f64, q_b: f64) -> f64 {
        ((r + q_b - q_inf) / (q_b - q_inf)).sqrt().acosh() / t_e
    }

    /// Window length such that `q(0) - q_inf <= offset`.
    pub fn t_end_for_offset(amplitude: f64, s: f64, offset: f64) -> f64 {
        if amplitude <= offset {
            return 0.0;
        }
        (amplitude / offset).sqrt().acosh() / s
    }

    /// Builds a pulse whose window starts `rel_tol * (q_b - q_inf)` above the
    /// background value.
    pub fn with_background_tolerance(q_inf: f64, r: f64, s: f64, q_b: f64, rel_tol: f64) -> Self {
        let amp = r + q_b - q_inf;
        let t_end = Self::t_end_for_offset(amp, s, rel_tol * (q_b - q_inf));
        Sech2Forcing { q_inf, r, s, t_end, q_b }
    }
}

/// A scalar parameter path `q(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ForcingProfile {
    Constant {
        value: f64,
    },
    /// `q(t) = q_b + eps r0 - eps² r2 t²`, maximal at `t = 0`.
    Parabolic {
        r0: f64,
        r2: f64,
        eps: f64,
        q_b: f64,
    },
    Sech2(Sech2Forcing),
    /// Piecewise-linear interpolation of samples, clamped outside the range.
    Sampled {
        times: Vec<f64>,
        values: Vec<f64>,
    },
    /// `gain * (base(time_scale * t) - offset)`.
    Rescaled {
        base: Box<ForcingProfile>,
        gain: f64,
        offset: f64,
        time_scale: f64,
    },
}

impl ForcingProfile {
    pub fn constant(value: f64) -> Self {
        ForcingProfile::Constant { value }
    }

    pub fn parabolic(r0: f64, r2: f64, eps: f64, q_b: f64) -> Self {
        ForcingProfile::Parabolic { r0, r2, eps, q_b }
    }

    pub fn sampled(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::InvalidInput(
                "sampled forcing needs at least two (time, value) pairs of equal length".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("sampled forcing times must be strictly increasing".into()));
        }
        Ok(ForcingProfile::Sampled { times, values })
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        match self {
            ForcingProfile::Parabolic { r2, eps, .. } => {
                if *r2 <= 0.0 {
                    problems.push(format!("parabolic forcing needs r2 > 0 (got {r2})"));
                }
                if *eps <= 0.0 {
                    problems.push(format!("parabolic forcing needs eps > 0 (got {eps})"));
                }
            }
            ForcingProfile::Sech2(f) => {
                if f.s <= 0.0 {
                    problems.push(format!("sech2 forcing needs s > 0 (got {})", f.s));
                }
                if f.t_end <= 0.0 {
                    problems.push(format!("sech2 forcing needs t_end > 0 (got {})", f.t_end));
                }
            }
            ForcingProfile::Sampled { times, values } => {
                if times.len() != values.len() || times.len() < 2 {
                    problems.push("sampled forcing needs >= 2 samples of equal length".into());
                } else if times.windows(2).any(|w| w[1] <= w[0]) {
                    problems.push("sampled forcing times must be strictly increasing".into());
                }
            }
            ForcingProfile::Rescaled { base, time_scale, .. } => {
                if *time_scale <= 0.0 {
                    problems.push("rescaled forcing needs time_scale > 0".into());
                }
                problems.extend(base.validate());
            }
            ForcingProfile::Constant { .. } => {}
        }
        problems
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            ForcingProfile::Constant { value } => *value,
            ForcingProfile::Parabolic { r0, r2, eps, q_b } => q_b + eps * r0 - eps * eps * r2 * t * t,
            ForcingProfile::Sech2(f) => f.value(t),
            ForcingProfile::Sampled { times, values } => interpolate(times, values, t),
            ForcingProfile::Rescaled {
                base,
                gain,
                offset,
                time_scale,
            } => gain * (base.value(time_scale * t) - offset),
        }
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        match self {
            ForcingProfile::Constant { .. } => 0.0,
            ForcingProfile::Parabolic { r2, eps, .. } => -2.0 * eps * eps * r2,
            ForcingProfile::Sech2(f) => f.second_derivative(t),
            ForcingProfile::Sampled { times, values } => {
                // second difference of the three samples around t
                let i = match times.iter().position(|&x| x >= t) {
                    Some(0) | None => return 0.0,
                    Some(i) => i.clamp(1, times.len().saturating_sub(2).max(1)),
                };
                if times.len() < 3 {
                    return 0.0;
                }
                let (t0, t1, t2) = (times[i - 1], times[i], times[i + 1]);
                let (v0, v1, v2) = (values[i - 1], values[i], values[i + 1]);
                2.0 * ((v2 - v1) / (t2 - t1) - (v1 - v0) / (t1 - t0)) / (t2 - t0)
            }
            ForcingProfile::Rescaled {
                base, gain, time_scale, ..
            } => gain * time_scale * time_scale * base.second_derivative(time_scale * t),
        }
    }

    /// Time and value of the maximum. `None` for constant forcing.
    pub fn peak(&self) -> Option<(f64, f64)> {
        match self {
            ForcingProfile::Constant { .. } => None,
            ForcingProfile::Parabolic { r0, eps, q_b, .. } => Some((0.0, q_b + eps * r0)),
            ForcingProfile::Sech2(f) => Some((f.peak_time(), f.value(f.peak_time()))),
            ForcingProfile::Sampled { times, values } => {
                let (i, v) = values
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
                Some((times[i], v))
            }
            ForcingProfile::Rescaled {
                base,
                gain,
                offset,
                time_scale,
            } => {
                if *gain < 0.0 {
                    return None;
                }
                base.peak().map(|(t, v)| (t / time_scale, gain * (v - offset)))
            }
        }
    }

    /// Natural finite time window of the profile, if it has one.
    pub fn window(&self) -> Option<(f64, f64)> {
        match self {
            ForcingProfile::Sech2(f) => Some((0.0, f.t_end)),
            ForcingProfile::Sampled { times, .. } => Some((times[0], times[times.len() - 1])),
            ForcingProfile::Rescaled { base, time_scale, .. } => {
                base.window().map(|(a, b)| (a / time_scale, b / time_scale))
            }
            _ => None,
        }
    }

    /// Symmetric window `[-T, T]` around the peak of a parabolic profile at
    /// which `q(±T) = q_b - depth`.
    pub fn parabolic_window(&self, depth: f64) -> Option<(f64, f64)> {
        match self {
            ForcingProfile::Parabolic { r0, r2, eps, .. } => {
                let t = ((eps * r0 + depth) / (eps * eps * r2)).sqrt();
                Some((-t, t))
            }
            _ => None,
        }
    }
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    if t <= times[0] {
        return values[0];
    }
    let last = times.len() - 1;
    if t >= times[last] {
        return values[last];
    }
    let i = times.partition_point(|&x| x <= t);
    let (t0, t1) = (times[i - 1], times[i]);
    let w = (t - t0) / (t1 - t0);
    values[i - 1] * (1.0 - w) + values[i] * w
}
