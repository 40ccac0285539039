//! Scalar reduction of the monsoon model and its canonical rescaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::{ForcingProfile, Sech2Forcing};
use crate::monsoon::{MonsoonFold, A_INF};

use super::mode::{mode_approx_with, ModeApprox, RateModel};

/// Background offset of the albedo at the start of the forcing window.
pub const START_OFFSET: f64 = 1e-3;

/// `dy = [p_f (A - A_b) + x_f y^2] dt + sqrt(2 D) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonsoonReduction {
    pub a_b: f64,
    pub p_f: f64,
    pub x_f: f64,
    pub d: f64,
    pub a_inf: f64,
    /// Albedo from which exceedance amplitude and time are measured.
    pub threshold: f64,
}

impl MonsoonReduction {
    pub fn from_fold(fold: &MonsoonFold, threshold: f64) -> Self {
        MonsoonReduction {
            a_b: fold.fold.q_b,
            p_f: fold.p_f,
            x_f: fold.x_f,
            d: fold.noise_d,
            a_inf: A_INF,
            threshold,
        }
    }

    /// Canonical time per model time unit: `t = beta s`,
    /// `beta = (D x_f^2)^(-1/3)`.
    pub fn time_scale(&self) -> f64 {
        (self.d * self.x_f * self.x_f).powf(-1.0 / 3.0)
    }

    /// `p = D^(-2/3) x_f^(-1/3) p_f (A - A_b)`.
    pub fn gain(&self) -> f64 {
        self.d.powf(-2.0 / 3.0) * self.x_f.powf(-1.0 / 3.0) * self.p_f
    }

    /// Sech² albedo pulse exceeding the threshold by `r` for time `t_e`,
    /// starting `START_OFFSET` above the background.
    pub fn forcing(&self, r: f64, t_e: f64) -> Result<Sech2Forcing> {
        if !(r > 0.0 && t_e > 0.0) {
            return Err(Error::InvalidInput(format!("need r > 0 and t_e > 0 (got {r}, {t_e})")));
        }
        let base = self.threshold - self.a_inf;
        if !(base > START_OFFSET) {
            return Err(Error::InvalidInput(format!(
                "threshold {} must exceed the background {} by more than {START_OFFSET}",
                self.threshold, self.a_inf
            )));
        }
        let amp = r + base;
        let s = Sech2Forcing::speed_for(r, t_e, self.a_inf, self.threshold);
        Ok(Sech2Forcing {
            q_inf: self.a_inf,
            r,
            s,
            t_end: Sech2Forcing::t_end_for_offset(amp, s, START_OFFSET),
            q_b: self.threshold,
        })
    }

    /// Canonical forcing `p(s)` of an albedo pulse.
    pub fn canonical(&self, albedo: &Sech2Forcing) -> ForcingProfile {
        ForcingProfile::Rescaled {
            base: Box::new(ForcingProfile::Sech2(*albedo)),
            gain: self.gain(),
            offset: self.a_b,
            time_scale: self.time_scale(),
        }
    }

    /// Mode approximation over the whole pulse window, with its validity
    /// flag.
    pub fn mode_approx(&self, r: f64, t_e: f64, rate: &RateModel) -> Result<ModeApprox> {
        let albedo = self.forcing(r, t_e)?;
        let p = self.canonical(&albedo);
        let s_end = albedo.t_end / self.time_scale();
        let rate = rate.clone();
        mode_approx_with(&p, (0.0, s_end), move |x| rate.rate(x))
    }

    /// Checked escape probability; see [`super::mode_approx_probability`].
    pub fn mode_probability(&self, r: f64, t_e: f64, rate: &RateModel) -> Result<f64> {
        Ok(self.mode_approx(r, t_e, rate)?.checked()?.probability)
    }
}
