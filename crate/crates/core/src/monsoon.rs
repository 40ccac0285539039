//! Simplified two-variable Zickfeld model of the Indian summer monsoon.
//!
//! State `(Q_a, T_a)`: specific humidity and atmospheric temperature over
//! land. The forced parameter is the planetary albedo `A_sys`. Time is in
//! decades.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynsys::{
    locate_fold, normal_form_coefficients, trace_branch, BranchOptions, DynamicalSystem, EscapeBox, FoldPoint,
};
use crate::error::{Error, Result};
use crate::forcing::Sech2Forcing;

/// Present-day background albedo.
pub const A_INF: f64 = 0.47;
/// Published fold location of the albedo.
pub const PUBLISHED_A_B: f64 = 0.5287;
/// Published `d_b` (per decade squared).
pub const PUBLISHED_D_B: f64 = 318.36;
/// Published projection weights onto the critical direction.
pub const PUBLISHED_W0: [f64; 2] = [-3.50, -0.99];
/// Published scalar-reduction coefficients: drift factor, quadratic factor, noise.
pub const PUBLISHED_P_F: f64 = 115.30;
pub const PUBLISHED_X_F: f64 = 0.69;
pub const PUBLISHED_D: f64 = 3.04;
/// Noise variances `(D1, D2)` of the two-dimensional model.
pub const NOISE: [f64; 2] = [0.01, 3.0];
/// Simulation domain in `(Q_a, T_a)`.
pub const DOMAIN_LOWER: [f64; 2] = [-0.04, 295.0];
pub const DOMAIN_UPPER: [f64; 2] = [0.07, 315.0];
/// Initial guess for the stable equilibrium near the background albedo.
pub const GUESS: [f64; 2] = [0.03, 306.0];
pub const YEARS_PER_DECADE: f64 = 10.0;

/// Sech² albedo pulse `A(t)` (see [`Sech2Forcing`]).
pub type AlbedoForcing = Sech2Forcing;

/// Albedo pulse with the published background and fold values.
pub fn albedo_forcing(r: f64, s: f64, t_end: f64) -> AlbedoForcing {
    Sech2Forcing {
        q_inf: A_INF,
        r,
        s,
        t_end,
        q_b: PUBLISHED_A_B,
    }
}

pub fn albedo(t: f64, forcing: &AlbedoForcing) -> f64 {
    forcing.value(t)
}

pub fn escape_box() -> EscapeBox {
    EscapeBox {
        lower: DOMAIN_LOWER.to_vec(),
        upper: DOMAIN_UPPER.to_vec(),
    }
}

/// Model constants. Serialized names follow the usual symbols (`T_oc`,
/// `C_L2`, `F_down_SL_TA`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonsoonParams {
    /// Temperature over the Indian Ocean (K).
    #[serde(rename = "T_oc")]
    pub t_oc: f64,
    /// Reference (freezing) temperature (K).
    #[serde(rename = "T_0")]
    pub t_0: f64,
    /// Humidity over the ocean.
    #[serde(rename = "Q_oc")]
    pub q_oc: f64,
    /// Saturated humidity.
    #[serde(rename = "Q_sat")]
    pub q_sat: f64,
    /// Latent heat (m² s⁻²).
    #[serde(rename = "L")]
    pub latent_heat: f64,
    /// Evaporation factor (mm s⁻¹ K⁻¹).
    #[serde(rename = "C_E")]
    pub c_e: f64,
    /// Precipitation factor (mm s⁻¹).
    #[serde(rename = "C_P")]
    pub c_p: f64,
    /// Moisture advection factors, ocean and land (mm s⁻¹ K⁻¹).
    #[serde(rename = "C_mo")]
    pub c_mo: f64,
    #[serde(rename = "C_ml")]
    pub c_ml: f64,
    /// Outgoing long-wave radiation, linear factor and constant.
    #[serde(rename = "C_L1")]
    pub c_l1: f64,
    #[serde(rename = "C_L2")]
    pub c_l2: f64,
    /// Incoming short-wave radiation factor (kg s⁻³).
    #[serde(rename = "F_down_SL_TA")]
    pub f_down: f64,
    /// Heat advection factor (kg s⁻³ K⁻²).
    #[serde(rename = "C_H")]
    pub c_h: f64,
    /// Potential temperature over the ocean (K).
    #[serde(rename = "theta_oc")]
    pub theta_oc: f64,
    /// Lapse rate constant (K m⁻¹), linear factor (m⁻¹), humidity factor.
    #[serde(rename = "Gamma_0")]
    pub gamma_0: f64,
    #[serde(rename = "Gamma_1")]
    pub gamma_1: f64,
    #[serde(rename = "Gamma_2")]
    pub gamma_2: f64,
    /// Adiabatic lapse rate (K m⁻¹).
    #[serde(rename = "Gamma_a")]
    pub gamma_a: f64,
    /// Fixed high altitude (m).
    #[serde(rename = "z_h")]
    pub z_h: f64,
    /// Humidity scaling (mm).
    #[serde(rename = "I_q")]
    pub i_q: f64,
    /// Temperature scaling (kg s⁻² K⁻¹).
    #[serde(rename = "I_T")]
    pub i_t: f64,
    /// Seconds-to-decades conversion (decades s⁻¹).
    #[serde(rename = "beta")]
    pub beta: f64,
}

impl Default for MonsoonParams {
    fn default() -> Self {
        MonsoonParams {
            t_oc: 300.0,
            t_0: 273.2,
            q_oc: 0.0190,
            q_sat: 0.0401,
            latent_heat: 2.5e6,
            c_e: 3.4375e-4,
            c_p: 0.0027,
            c_mo: 6.9021e-4,
            c_ml: 1.6213e-4,
            c_l1: 1.6642,
            c_l2: -263.3753,
            f_down: 443.6250,
            c_h: 0.7136,
            theta_oc: 300.2356,
            gamma_0: 0.0053,
            gamma_1: 5.5e-5,
            gamma_2: 1000.0,
            gamma_a: 0.0098,
            z_h: 5.1564e3,
            i_q: 2.0636e3,
            i_t: 1.1958e9,
            beta: 3.1710e-9,
        }
    }
}

impl MonsoonParams {
    fn named(&self) -> [(&'static str, f64); 22] {
        [
            ("T_oc", self.t_oc),
            ("T_0", self.t_0),
            ("Q_oc", self.q_oc),
            ("Q_sat", self.q_sat),
            ("L", self.latent_heat),
            ("C_E", self.c_e),
            ("C_P", self.c_p),
            ("C_mo", self.c_mo),
            ("C_ml", self.c_ml),
            ("C_L1", self.c_l1),
            ("C_L2", self.c_l2),
            ("F_down_SL_TA", self.f_down),
            ("C_H", self.c_h),
            ("theta_oc", self.theta_oc),
            ("Gamma_0", self.gamma_0),
            ("Gamma_1", self.gamma_1),
            ("Gamma_2", self.gamma_2),
            ("Gamma_a", self.gamma_a),
            ("z_h", self.z_h),
            ("I_q", self.i_q),
            ("I_T", self.i_t),
            ("beta", self.beta),
        ]
    }

    /// Every violated sign constraint: all constants positive except `C_L2`.
    pub fn problems(&self) -> Vec<String> {
        self.named()
            .iter()
            .filter_map(|&(name, v)| {
                let ok = if name == "C_L2" { v < 0.0 } else { v > 0.0 };
                match (v.is_finite(), ok) {
                    (false, _) => Some(format!("{name} must be finite (got {v})")),
                    (true, false) if name == "C_L2" => Some(format!("{name} must be negative (got {v})")),
                    (true, false) => Some(format!("{name} must be positive (got {v})")),
                    _ => None,
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Parse overrides from TOML; missing keys keep their defaults.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let p: MonsoonParams = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    /// Parse overrides from JSON; missing keys keep their defaults.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let p: MonsoonParams = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    /// Load overrides from a `.toml` or `.json` file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    /// The model as a [`DynamicalSystem`] in `(Q_a, T_a)` with output weights `w`.
    pub fn system(&self, weights: [f64; 2]) -> DynamicalSystem {
        let p = *self;
        DynamicalSystem::new(
            2,
            move |y, a, out| {
                let (dq, dt) = monsoon_rhs(MonsoonState { q_a: y[0], t_a: y[1] }, a, &p);
                out[0] = dq;
                out[1] = dt;
            },
            weights.to_vec(),
        )
        .expect("two-dimensional system with nonzero weights")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonsoonState {
    pub q_a: f64,
    pub t_a: f64,
}

impl MonsoonState {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.q_a, self.t_a]
    }
}

/// Individual flux terms of the model (before division by the storage
/// factors).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonsoonTerms {
    pub evaporation: f64,
    pub precipitation: f64,
    pub moisture_advection: f64,
    pub longwave_up: f64,
    pub shortwave_down: f64,
    pub lapse_rate: f64,
    pub theta_a: f64,
    pub heat_advection: f64,
}

pub fn monsoon_terms(state: MonsoonState, a_sys: f64, p: &MonsoonParams) -> MonsoonTerms {
    let MonsoonState { q_a, t_a } = state;
    let dt_oc = t_a - p.t_oc;
    let evaporation = p.c_e * dt_oc * (p.q_sat - q_a);
    let precipitation = p.c_p * q_a;
    let moisture_advection = dt_oc * (p.c_mo * p.q_oc - p.c_ml * q_a);
    let longwave_up = p.c_l1 * t_a + p.c_l2;
    let shortwave_down = p.f_down * (1.0 - a_sys);
    let lapse_rate = p.gamma_0 + p.gamma_1 * (t_a - p.t_0) * (1.0 - p.gamma_2 * q_a * q_a);
    let theta_a = t_a - (lapse_rate - p.gamma_a) * p.z_h;
    let heat_advection = p.c_h * dt_oc * (p.theta_oc - theta_a);
    MonsoonTerms {
        evaporation,
        precipitation,
        moisture_advection,
        longwave_up,
        shortwave_down,
        lapse_rate,
        theta_a,
        heat_advection,
    }
}

/// `(dQ_a/dt, dT_a/dt)` in units per decade.
pub fn monsoon_rhs(state: MonsoonState, a_sys: f64, p: &MonsoonParams) -> (f64, f64) {
    let t = monsoon_terms(state, a_sys, p);
    let dq = (t.evaporation - t.precipitation + t.moisture_advection) / (p.beta * p.i_q);
    let dt = (p.latent_heat * (t.precipitation - t.evaporation) - t.longwave_up + t.shortwave_down + t.heat_advection)
        / (p.beta * p.i_t);
    (dq, dt)
}

/// Result of the fold analysis of the monsoon model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonsoonFold {
    pub fold: FoldPoint,
    /// Left nullvector normalized against a unit right nullvector.
    pub recomputed_w0: [f64; 2],
    pub published_w0: [f64; 2],
    /// Largest componentwise relative difference of the two.
    pub w0_discrepancy: f64,
    /// Output weights used for the normal form.
    pub weights: [f64; 2],
    /// Scalar reduction `dx = [p_f (A - A_b) + x_f x^2] dt + sqrt(2 D) dW`.
    pub p_f: f64,
    pub x_f: f64,
    pub noise_d: f64,
}

/// Fold of the stable (active monsoon) branch and its normal form. The
/// published projection weights are used unless they differ from the
/// recomputed nullvector by more than 2 %.
pub fn analyze_fold(params: &MonsoonParams) -> Result<MonsoonFold> {
    params.validate()?;
    let sys = params.system(PUBLISHED_W0);
    let loc = locate_fold(&sys, (A_INF, 0.8), &GUESS)?;
    let vn = loc.v0.iter().map(|x| x * x).sum::<f64>().sqrt();
    let recomputed_w0 = [loc.w0[0] * vn, loc.w0[1] * vn];
    let w0_discrepancy = (0..2)
        .map(|i| ((recomputed_w0[i] - PUBLISHED_W0[i]) / PUBLISHED_W0[i]).abs())
        .fold(0.0, f64::max);
    let weights = if w0_discrepancy > 0.02 { recomputed_w0 } else { PUBLISHED_W0 };
    let sys = sys.with_weights(weights.to_vec())?;
    let loc = locate_fold(&sys, (A_INF, 0.8), &GUESS)?;
    let fold = normal_form_coefficients(&sys, &loc)?;
    let w0 = &fold.w0;
    let noise_d = NOISE[0] * w0[0] * w0[0] + NOISE[1] * w0[1] * w0[1];
    Ok(MonsoonFold {
        p_f: fold.a0,
        x_f: fold.a0 * fold.kappa,
        noise_d,
        fold,
        recomputed_w0,
        published_w0: PUBLISHED_W0,
        w0_discrepancy,
        weights,
    })
}

/// Stable equilibrium at albedo `a_sys`, continued from the background state.
pub fn stable_equilibrium(params: &MonsoonParams, a_sys: f64) -> Result<Vec<f64>> {
    let sys = params.system(PUBLISHED_W0);
    crate::dynsys::find_equilibrium(&sys, a_sys, &GUESS)
        .or_else(|_| {
            let pts = trace_branch(&sys, &GUESS, A_INF, &BranchOptions::new(0.0, a_sys.max(A_INF), a_sys - A_INF))?;
            let near = pts
                .iter()
                .filter(|p| p.stable)
                .min_by(|a, b| (a.q - a_sys).abs().total_cmp(&(b.q - a_sys).abs()))
                .ok_or(Error::NewtonDiverged {
                    iterations: 0,
                    residual: f64::NAN,
                })?;
            crate::dynsys::find_equilibrium(&sys, a_sys, &near.y)
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub a_sys: f64,
    pub q_a: f64,
    pub t_a: f64,
    pub stable: bool,
}

/// Both equilibrium branches over `a_range`, traced from the stable state at
/// the background albedo around the fold.
pub fn equilibrium_branches(params: &MonsoonParams, a_range: (f64, f64)) -> Result<Vec<BranchRow>> {
    let (lo, hi) = a_range;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(Error::InvalidInput(format!("albedo range ({lo}, {hi}) must satisfy 0 < lo < hi < 1")));
    }
    params.validate()?;
    let sys = params.system(PUBLISHED_W0);
    let start = A_INF.clamp(lo, hi);
    let y0 = stable_equilibrium(params, start)?;
    let mut rows = Vec::new();
    // below the start, walk down the stable branch first
    if start > lo {
        let mut opts = BranchOptions::new(lo, hi, -1.0);
        opts.ds_max = 2e-2;
        let down = trace_branch(&sys, &y0, start, &opts)?;
        rows.extend(down.iter().rev().filter(|p| p.stable).map(to_row));
    }
    let mut opts = BranchOptions::new(lo, hi, 1.0);
    opts.ds_max = 2e-2;
    let up = trace_branch(&sys, &y0, start, &opts)?;
    let skip = usize::from(!rows.is_empty());
    rows.extend(up.iter().skip(skip).map(to_row));
    Ok(rows)
}

fn to_row(p: &crate::dynsys::BranchPoint) -> BranchRow {
    BranchRow {
        a_sys: p.q,
        q_a: p.y[0],
        t_a: p.y[1],
        stable: p.stable,
    }
}

/// CSV `A_sys,Q_a,T_a,stable`.
pub fn write_branches_csv<W: Write>(rows: &[BranchRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "A_sys,Q_a,T_a,stable")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.a_sys, r.q_a, r.t_a, r.stable)?;
    }
    Ok(())
}
