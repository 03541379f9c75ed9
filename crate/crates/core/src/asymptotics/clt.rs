//! Gaussian limit of √m(FDPₘ − p*) and √m(τ̂ − τ*).
//!
//! X = p*(1−p*)(𝕫₀(τ)/τ − 𝕫₁(τ)/G₁(τ)) + ṗ(τ)·𝒯̇(𝕫), with
//! 𝒯̇(H) = δ·H(τ) + ξ·𝒜̇(H), δ = 1/(∂r/∂u − g(τ)), ξ = −δ·∂r/∂α, and
//! 𝒜̇(H) = c·H(u₀) for the plug-in procedures.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::functional::{numeric_functional_derivative_with_step, Direction, Functional};
use super::{analytic_level, asymptotic_curve, first_stage_threshold, tau_star};
use crate::error::{Error, Result};
use crate::model::MixtureModel;
use crate::procedures::{ProcedureName, ProcedureSpec};

/// Scaling of the two empirical-process limits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BridgeScaling {
    /// √m(Ĝ₀,ₘ − G₀) → 𝔹/√π₀ and √m(Ĝ₁,ₘ − G₁) → 𝔹∘G₁/√(1−π₀), which is
    /// what samples with m₀ = π₀m nulls produce.
    #[default]
    PerGroup,
    /// Both limits taken as standard bridges (𝔹 and 𝔹∘G₁).
    Unit,
}

/// Covariances of 𝕫₀, 𝕫₁ and 𝕫 = π₀𝕫₀ + (1−π₀)𝕫₁.
#[derive(Clone, Copy, Debug)]
pub struct Covariance<'a> {
    model: &'a MixtureModel,
    s0: f64,
    s1: f64,
}

impl<'a> Covariance<'a> {
    pub fn new(model: &'a MixtureModel, scaling: BridgeScaling) -> Self {
        let pi0 = model.pi0();
        let (s0, s1) = match scaling {
            BridgeScaling::Unit => (1.0, 1.0),
            BridgeScaling::PerGroup => (
                if pi0 > 0.0 { 1.0 / pi0 } else { 0.0 },
                if pi0 < 1.0 { 1.0 / (1.0 - pi0) } else { 0.0 },
            ),
        };
        Covariance { model, s0, s1 }
    }

    pub fn cov_z0(&self, s: f64, t: f64) -> f64 {
        self.s0 * cov_bridge(s, t)
    }

    pub fn cov_z1(&self, s: f64, t: f64) -> f64 {
        let a = self.model.alternative();
        self.s1 * cov_bridge(a.cdf(s), a.cdf(t))
    }

    pub fn var_z0(&self, t: f64) -> f64 {
        self.cov_z0(t, t)
    }

    pub fn var_z1(&self, t: f64) -> f64 {
        self.cov_z1(t, t)
    }

    pub fn cov_z(&self, s: f64, t: f64) -> f64 {
        let p = self.model.pi0();
        p * p * self.cov_z0(s, t) + (1.0 - p) * (1.0 - p) * self.cov_z1(s, t)
    }

    pub fn var_z(&self, t: f64) -> f64 {
        self.cov_z(t, t)
    }

    /// E[𝕫₀(s)𝕫(t)].
    pub fn cov_z0_z(&self, s: f64, t: f64) -> f64 {
        self.model.pi0() * self.cov_z0(s, t)
    }

    /// E[𝕫₁(s)𝕫(t)].
    pub fn cov_z1_z(&self, s: f64, t: f64) -> f64 {
        (1.0 - self.model.pi0()) * self.cov_z1(s, t)
    }
}

/// γ₀(s,t) = s∧t − st.
pub fn cov_bridge(s: f64, t: f64) -> f64 {
    s.min(t) - s * t
}

/// Var 𝕫(t) under the default scaling.
pub fn var_z(model: &MixtureModel, t: f64) -> f64 {
    Covariance::new(model, BridgeScaling::default()).var_z(t)
}

/// E[𝕫₀(s)𝕫(t)] under the default scaling.
pub fn cov_z0_z(model: &MixtureModel, s: f64, t: f64) -> f64 {
    Covariance::new(model, BridgeScaling::default()).cov_z0_z(s, t)
}

/// Candidate coefficients K in the BKY06 limit
/// X = p*(𝕫₀(τ)/τ + K·𝕫(u)/(1 − G(u))), u = u(λ).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingCandidate {
    /// 1/(1 − α(1−λ)g(u))
    AlphaLambdaDensity,
    /// 1/(1/(α(1−λ)) − g(u))
    ReciprocalLevelGap,
    /// 1/(1 − λg(u))
    LambdaDensity,
}

impl CouplingCandidate {
    pub const ALL: [CouplingCandidate; 3] = [
        CouplingCandidate::AlphaLambdaDensity,
        CouplingCandidate::ReciprocalLevelGap,
        CouplingCandidate::LambdaDensity,
    ];

    pub fn formula(self) -> &'static str {
        match self {
            CouplingCandidate::AlphaLambdaDensity => "1/(1 - alpha(1-lambda) g(u))",
            CouplingCandidate::ReciprocalLevelGap => "1/(1/(alpha(1-lambda)) - g(u))",
            CouplingCandidate::LambdaDensity => "1/(1 - lambda g(u))",
        }
    }

    pub fn value(self, alpha: f64, lambda: f64, g_u: f64) -> f64 {
        let c = alpha * (1.0 - lambda);
        match self {
            CouplingCandidate::AlphaLambdaDensity => 1.0 / (1.0 - c * g_u),
            CouplingCandidate::ReciprocalLevelGap => 1.0 / (1.0 / c - g_u),
            CouplingCandidate::LambdaDensity => 1.0 / (1.0 - lambda * g_u),
        }
    }
}

impl fmt::Display for CouplingCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.formula())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingReport {
    /// K implied by the numeric derivative of the level functional.
    pub numeric: f64,
    pub candidates: Vec<(CouplingCandidate, f64)>,
    /// Candidate closest to the numeric value.
    pub selected: CouplingCandidate,
    /// Candidates within 1e-4 (relative) of the numeric value.
    pub matching: Vec<CouplingCandidate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianLimit {
    pub tau_star: f64,
    pub pfdr_star: f64,
    pub level: f64,
    /// Coefficient of 𝕫₀(τ*).
    pub coeff_z0_tau: f64,
    /// Coefficient of 𝕫₁(τ*).
    pub coeff_z1_tau: f64,
    /// Point where the level function reads G, for plug-in procedures.
    pub u0: Option<f64>,
    /// Coefficient of 𝕫(u₀).
    pub coeff_z_u0: f64,
    /// c in 𝒜̇(H) = c·H(u₀).
    pub level_derivative: f64,
    pub fdp_sd: f64,
    pub threshold_sd: f64,
    pub zeta: f64,
    pub xi: f64,
    pub delta: f64,
    pub scaling: BridgeScaling,
    pub coupling: Option<CouplingReport>,
}

pub fn clt_limit(model: &MixtureModel, spec: &ProcedureSpec) -> Result<GaussianLimit> {
    clt_limit_with(model, spec, BridgeScaling::default())
}

pub fn clt_limit_with(model: &MixtureModel, spec: &ProcedureSpec, scaling: BridgeScaling) -> Result<GaussianLimit> {
    let cross = tau_star(model, spec)?;
    let tau = cross.t;
    let level = analytic_level(model, spec)?;
    let curve = asymptotic_curve(model, spec, level)?;
    let pi0 = model.pi0();
    let big_g = model.cdf(tau);
    let g = model.density(tau);
    let g1 = model.alt_cdf(tau);
    let p = model.pfdr(tau)?;
    let pdot = model.pfdr_deriv(tau)?;

    let delta = 1.0 / cross.slope_gap;
    let xi = -curve.dalpha(tau)? * delta;
    let zeta = 1.0 - delta * (big_g / tau - g);

    let mut coupling = None;
    let (u0, c) = match spec.name() {
        ProcedureName::Sto02 | ProcedureName::STS04 => {
            let l = spec.lambda().expect("validated");
            (Some(l), level / (1.0 - model.cdf(l)))
        }
        ProcedureName::BKY06 | ProcedureName::BKY06exact => {
            let report = bky06_coupling(model, spec)?;
            let u = first_stage_threshold(model, spec.lambda().expect("validated"))?;
            let k = report
                .candidates
                .iter()
                .find(|(c, _)| *c == report.selected)
                .map(|(_, v)| *v)
                .expect("selected is a candidate");
            coupling = Some(report);
            (Some(u), level * k / (1.0 - model.cdf(u)))
        }
        _ => (None, 0.0),
    };

    let cov = Covariance::new(model, scaling);
    let a0 = p * (1.0 - p) / tau + pdot * delta * pi0;
    let a1 = if pi0 < 1.0 {
        -p * (1.0 - p) / g1 + pdot * delta * (1.0 - pi0)
    } else {
        0.0
    };
    let b = pdot * xi * c;

    let mut var = a0 * a0 * cov.var_z0(tau) + a1 * a1 * cov.var_z1(tau);
    let mut tvar = delta * delta * cov.var_z(tau);
    if let Some(u) = u0 {
        var += b * b * cov.var_z(u) + 2.0 * a0 * b * cov.cov_z0_z(tau, u) + 2.0 * a1 * b * cov.cov_z1_z(tau, u);
        let e = xi * c;
        tvar += 2.0 * delta * e * cov.cov_z(tau, u) + e * e * cov.var_z(u);
    }

    Ok(GaussianLimit {
        tau_star: tau,
        pfdr_star: p,
        level,
        coeff_z0_tau: a0,
        coeff_z1_tau: a1,
        u0,
        coeff_z_u0: b,
        level_derivative: c,
        fdp_sd: var.max(0.0).sqrt(),
        threshold_sd: tvar.max(0.0).sqrt(),
        zeta,
        xi,
        delta,
        scaling,
        coupling,
    })
}

/// Compares the three coupling candidates with the numeric derivative of the
/// BKY06 level functional in a direction H with H(u(λ)) = 1.
fn bky06_coupling(model: &MixtureModel, spec: &ProcedureSpec) -> Result<CouplingReport> {
    let a = spec.alpha();
    let l = spec.lambda().expect("validated");
    let u = first_stage_threshold(model, l)?;
    let level = analytic_level(model, spec)?;
    let one_minus = 1.0 - model.cdf(u);
    let width = (0.5 * u).min(0.05);
    let h = Direction::plateau(u, width);
    // u(λ) can be tiny for weak alternatives; scale the step with it.
    let step = 1e-5 * (100.0 * u).min(1.0);
    let d = numeric_functional_derivative_with_step(model, spec, &h, Functional::Level, step)?;
    let numeric = d * one_minus / level;
    let g_u = model.density(u);
    let candidates: Vec<_> = CouplingCandidate::ALL
        .iter()
        .map(|&c| (c, c.value(a, l, g_u)))
        .collect();
    let rel = |v: f64| ((v - numeric) / numeric).abs();
    let selected = candidates
        .iter()
        .min_by(|x, y| rel(x.1).total_cmp(&rel(y.1)))
        .map(|x| x.0)
        .expect("three candidates");
    let matching = candidates
        .iter()
        .filter(|x| rel(x.1) < 1e-4)
        .map(|x| x.0)
        .collect::<Vec<_>>();
    if matching.is_empty() {
        return Err(Error::OracleInconclusive(format!(
            "no coupling candidate within 1e-4 of the numeric value {numeric}: {candidates:?}"
        )));
    }
    Ok(CouplingReport {
        numeric,
        candidates,
        selected,
        matching,
    })
}

/// FDP variance from the procedure-specific closed forms. For BKY06 the
/// coupling candidate must be named.
pub fn specialized_fdp_variance(
    model: &MixtureModel,
    spec: &ProcedureSpec,
    scaling: BridgeScaling,
    coupling: Option<CouplingCandidate>,
) -> Result<f64> {
    let cross = tau_star(model, spec)?;
    let tau = cross.t;
    let cov = Covariance::new(model, scaling);
    let pi0 = model.pi0();
    let a = spec.alpha();
    let v0 = cov.var_z0(tau) / (tau * tau);
    let big_g = |x: f64| model.cdf(x);
    let g1 = model.alt_cdf(tau);
    let v1 = if pi0 < 1.0 { cov.var_z1(tau) / (g1 * g1) } else { 0.0 };
    Ok(match spec.name() {
        ProcedureName::BH95 => (pi0 * a).powi(2) * v0,
        ProcedureName::BH95o => (pi0 * a / spec.pi0().unwrap_or(pi0)).powi(2) * v0,
        ProcedureName::FDR08 | ProcedureName::BR08 | ProcedureName::BR08exact => {
            let g = model.density(tau);
            let gt = big_g(tau);
            let zeta = if spec.name() == ProcedureName::FDR08 {
                let pb = model.pi0_bar(tau)?;
                -(1.0 - pb) * (pb / a) / (pb * pb / a - g)
            } else {
                -(gt * gt / tau) / (gt * (1.0 - gt) / tau - g)
            };
            let p = pi0 * tau / gt;
            (p * (1.0 - p * zeta)).powi(2) * v0 + (p * (1.0 - p) * zeta).powi(2) * v1
        }
        ProcedureName::Sto02 | ProcedureName::STS04 => {
            let l = spec.lambda().expect("validated");
            let level = a / model.pi0_bar(l)?;
            let q = 1.0 - big_g(l);
            (pi0 * level).powi(2)
                * (v0 + cov.var_z(l) / (q * q) + 2.0 * cov.cov_z0_z(tau, l) / (tau * q))
        }
        ProcedureName::BKY06 | ProcedureName::BKY06exact => {
            let cand = coupling.ok_or_else(|| {
                Error::Validation("BKY06 closed form needs a coupling candidate".into())
            })?;
            let l = spec.lambda().expect("validated");
            let u = first_stage_threshold(model, l)?;
            let q = 1.0 - big_g(u);
            let level = a * (1.0 - l) / q;
            let k = cand.value(a, l, model.density(u));
            (pi0 * level).powi(2)
                * (v0 + k * k * cov.var_z(u) / (q * q) + 2.0 * k * cov.cov_z0_z(tau, u) / (tau * q))
        }
    })
}

/// Threshold variance for one-stage procedures: Var 𝕫(τ*)/(∂r/∂u − g(τ*))².
pub fn specialized_threshold_variance(model: &MixtureModel, spec: &ProcedureSpec, scaling: BridgeScaling) -> Result<f64> {
    if spec.name().is_plug_in() {
        return Err(Error::Validation(format!("{} is not a one-stage procedure", spec.name())));
    }
    let cross = tau_star(model, spec)?;
    let cov = Covariance::new(model, scaling);
    Ok(cov.var_z(cross.t) / cross.slope_gap.powi(2))
}
