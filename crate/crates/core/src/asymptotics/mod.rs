//! Limit theory at the true mixture CDF G: asymptotic levels and thresholds,
//! existence conditions, asymptotic pFDR and the Gaussian limit of the FDP.

mod clt;
pub mod crossing;
mod functional;

use serde::Serialize;

pub use clt::{
    clt_limit, clt_limit_with, cov_bridge, cov_z0_z, specialized_fdp_variance,
    specialized_threshold_variance, var_z, BridgeScaling, CouplingCandidate, CouplingReport,
    Covariance, GaussianLimit,
};
pub use functional::{numeric_functional_derivative, numeric_functional_derivative_with_step, Direction, Functional};

use crate::error::{Error, Result};
use crate::model::MixtureModel;
use crate::procedures::{kappa, ProcedureName, ProcedureSpec, RejectionCurve};
use crossing::{scan, EndState, Scan};

/// sup{u : F(u) ≥ r(u)} for an arbitrary function F.
pub fn sup_crossing<F: Fn(f64) -> f64>(f: F, curve: &RejectionCurve) -> f64 {
    scan(f, curve).sup()
}

/// 𝒜(F) for a CDF-like function F. `pi0` supplies the oracle value for
/// BH95o when the spec carries none.
pub fn level_of<F: Fn(f64) -> f64>(f: F, pi0: f64, spec: &ProcedureSpec) -> Result<f64> {
    let a = spec.alpha();
    match spec.name() {
        ProcedureName::BH95 | ProcedureName::FDR08 | ProcedureName::BR08 | ProcedureName::BR08exact => Ok(a),
        ProcedureName::BH95o => {
            let p = spec.pi0().unwrap_or(pi0);
            if p <= 0.0 {
                return Err(Error::DegenerateLevel("BH95o with pi0 = 0".into()));
            }
            Ok(a / p)
        }
        ProcedureName::Sto02 | ProcedureName::STS04 => {
            let l = spec.lambda().expect("validated");
            let denom = 1.0 - f(l);
            if denom <= 0.0 {
                return Err(Error::DegenerateLevel(format!("F(lambda) = 1 at lambda = {l}")));
            }
            Ok(a * (1.0 - l) / denom)
        }
        ProcedureName::BKY06 | ProcedureName::BKY06exact => {
            let l = spec.lambda().expect("validated");
            let u = sup_crossing(&f, &RejectionCurve::simes(l)?);
            if u <= 0.0 {
                return Err(Error::criticality(format!(
                    "first stage BH95 at level {l} has no interior crossing"
                )));
            }
            let denom = 1.0 - f(u);
            if denom <= 0.0 {
                return Err(Error::DegenerateLevel(format!("first stage rejects everything at lambda = {l}")));
            }
            Ok(a * (1.0 - l) / denom)
        }
    }
}

/// 𝒜(G).
pub fn analytic_level(model: &MixtureModel, spec: &ProcedureSpec) -> Result<f64> {
    level_of(|u| model.cdf(u), model.pi0(), spec)
}

/// u(λ) = 𝒰(G, λ), the BH95 threshold at level λ.
pub fn first_stage_threshold(model: &MixtureModel, lambda: f64) -> Result<f64> {
    let u = sup_crossing(|x| model.cdf(x), &RejectionCurve::simes(lambda)?);
    if u <= 0.0 {
        return Err(Error::criticality(format!("BH95 at level {lambda} has no interior crossing")));
    }
    Ok(u)
}

/// Rejection curve whose crossing with G gives the asymptotic threshold.
/// FDR08 is truncated at κ whenever κ < 1; exact variants use their
/// asymptotically equivalent base curves.
pub fn asymptotic_curve(model: &MixtureModel, spec: &ProcedureSpec, level: f64) -> Result<RejectionCurve> {
    match spec.name() {
        ProcedureName::FDR08 => {
            let k = kappa(spec.alpha(), model.pi0());
            let trunc = (k > 0.0 && k < 1.0).then_some(k);
            RejectionCurve::fdr08(level, trunc)
        }
        ProcedureName::BR08 | ProcedureName::BR08exact => {
            RejectionCurve::br08(level, spec.lambda().expect("validated"))
        }
        ProcedureName::STS04 => RejectionCurve::simes(level)?.with_truncation(spec.lambda()),
        _ => RejectionCurve::simes(level),
    }
}

/// A point where G meets the rejection curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrossingPoint {
    pub t: f64,
    pub is_right_crossing: bool,
    /// ∂r/∂u − g at t.
    pub slope_gap: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossingMode {
    /// Error if more than one right crossing exists.
    Unique,
    /// Take the largest right crossing.
    Largest,
}

fn scan_for(model: &MixtureModel, spec: &ProcedureSpec) -> Result<(f64, RejectionCurve, Scan)> {
    let level = analytic_level(model, spec)?;
    let curve = asymptotic_curve(model, spec, level)?;
    let s = scan(|u| model.cdf(u), &curve);
    Ok((level, curve, s))
}

fn with_report(err: Error, model: &MixtureModel, spec: &ProcedureSpec) -> Error {
    match err {
        Error::Criticality { message, .. } => Error::Criticality {
            message,
            report: Some(Box::new(check_conditions(model, spec))),
        },
        e => e,
    }
}

/// τ*: the unique interior right crossing of G with r(𝒜(G), ·).
pub fn tau_star(model: &MixtureModel, spec: &ProcedureSpec) -> Result<CrossingPoint> {
    tau_star_with(model, spec, CrossingMode::Unique)
}

pub fn tau_star_with(model: &MixtureModel, spec: &ProcedureSpec, mode: CrossingMode) -> Result<CrossingPoint> {
    locate(model, spec, mode).map_err(|e| with_report(e, model, spec))
}

fn locate(model: &MixtureModel, spec: &ProcedureSpec, mode: CrossingMode) -> Result<CrossingPoint> {
    let (_, curve, s) = scan_for(model, spec)?;
    if s.end_state == EndState::Above {
        return Err(Error::criticality(format!(
            "{}: G stays above the rejection curve up to {}, no interior crossing",
            spec.label(),
            s.end
        )));
    }
    let rights = s.right_crossings();
    let Some(&t) = rights.last() else {
        return Err(Error::criticality(format!(
            "{}: G never reaches the rejection curve away from 0",
            spec.label()
        )));
    };
    if mode == CrossingMode::Unique && rights.len() > 1 {
        return Err(Error::Ambiguity(format!(
            "{}: {} right crossings at {:?}",
            spec.label(),
            rights.len(),
            rights
        )));
    }
    let slope_gap = curve.slope(t)? - model.density(t);
    if !(slope_gap > 0.0) {
        return Err(Error::Ambiguity(format!(
            "{}: tangency at {t} (slope gap {slope_gap})",
            spec.label()
        )));
    }
    Ok(CrossingPoint {
        t,
        is_right_crossing: true,
        slope_gap,
    })
}

/// One existence or uniqueness condition with its numeric margin.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub holds: bool,
    pub margin: f64,
    /// Strict conditions hold when margin > 0, others when margin ≥ 0.
    pub strict: bool,
    pub statement: &'static str,
}

impl ConditionCheck {
    fn new(name: &'static str, margin: f64, strict: bool, statement: &'static str) -> Self {
        let holds = if strict { margin > 0.0 } else { margin >= 0.0 };
        ConditionCheck {
            name,
            holds,
            margin,
            strict,
            statement,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub procedure: String,
    pub critical_alpha: f64,
    /// Right crossings found by the scan.
    pub right_crossings: usize,
    pub checks: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Evaluates every condition that applies to the spec. Never fails.
pub fn check_conditions(model: &MixtureModel, spec: &ProcedureSpec) -> ConditionReport {
    let a = spec.alpha();
    let a_star = model.critical_alpha();
    let pi0 = model.pi0();
    let lam = spec.lambda();
    let crossings = match scan_for(model, spec) {
        Ok((_, _, s)) if s.end_state != EndState::Above => s.right_crossings().len(),
        _ => 0,
    };
    let mut checks = vec![
        ConditionCheck::new("C.2", crossings as f64, true, "an interior right crossing exists"),
        ConditionCheck::new("C.3", 1.0 - crossings as f64, false, "at most one interior right crossing"),
    ];
    let level = analytic_level(model, spec).unwrap_or(f64::NAN);
    let c9 = |l: f64| {
        let g = model.cdf(l);
        ConditionCheck::new("C.9", (l / a) * (1.0 - g) / (1.0 - l) - g, false, "G(λ) ≤ (λ/α)(1−G(λ))/(1−λ)")
    };
    let c10 = ConditionCheck::new("C.10", level - a_star, true, "𝒜(G) > α*");
    match spec.name() {
        ProcedureName::BH95 => checks.push(ConditionCheck::new("C.4", a - a_star, true, "α > α*")),
        ProcedureName::BH95o => {
            let p = spec.pi0().unwrap_or(pi0);
            checks.push(ConditionCheck::new("C.5", a - p * a_star, true, "α > π₀α*"));
        }
        ProcedureName::FDR08 => {
            checks.push(ConditionCheck::new("C.4", a - a_star, true, "α > α*"));
            if let Some(l) = lam {
                checks.push(ConditionCheck::new("C.6", l - kappa(a, pi0), false, "λ ≥ κ"));
            }
            checks.push(ConditionCheck::new("C.7", pi0 - a, true, "α < π₀"));
        }
        ProcedureName::BR08 | ProcedureName::BR08exact => {
            let l = lam.expect("validated");
            checks.push(ConditionCheck::new("C.8", a * (1.0 - l) - a_star, true, "α(1−λ) > α*"));
            checks.push(c9(l));
        }
        ProcedureName::Sto02 | ProcedureName::STS04 => {
            let l = lam.expect("validated");
            checks.push(c10);
            let pb = model.pi0_bar(l).unwrap_or(f64::NAN);
            checks.push(ConditionCheck::new("C.11", a - pb * a_star, true, "α > π̄₀(λ)α*"));
            if spec.name() == ProcedureName::STS04 {
                checks.push(c9(l));
            }
        }
        ProcedureName::BKY06 | ProcedureName::BKY06exact => {
            let l = lam.expect("validated");
            checks.push(ConditionCheck::new("C.8", a * (1.0 - l) - a_star, true, "α(1−λ) > α*"));
            checks.push(c10);
            checks.push(ConditionCheck::new("C.12", l - a_star, true, "λ > α*"));
        }
    }
    ConditionReport {
        procedure: spec.label(),
        critical_alpha: a_star,
        right_crossings: crossings,
        checks,
    }
}

/// p* = π₀τ*/G(τ*).
pub fn asymptotic_pfdr(model: &MixtureModel, spec: &ProcedureSpec) -> Result<f64> {
    let t = tau_star(model, spec)?.t;
    model.pfdr(t)
}

/// The procedure-specific closed form of p*, evaluated at a given τ*.
pub fn pfdr_closed_form(model: &MixtureModel, spec: &ProcedureSpec, tau: f64) -> Result<f64> {
    let a = spec.alpha();
    let pi0 = model.pi0();
    Ok(match spec.name() {
        ProcedureName::BH95 => pi0 * a,
        ProcedureName::BH95o => pi0 * a / spec.pi0().unwrap_or(pi0),
        ProcedureName::FDR08 => a * pi0 / model.pi0_bar(tau)?,
        ProcedureName::BR08 | ProcedureName::BR08exact => {
            a * pi0 * (1.0 - spec.lambda().expect("validated")) / (1.0 - model.cdf(tau))
        }
        ProcedureName::Sto02 | ProcedureName::STS04 => {
            a * pi0 / model.pi0_bar(spec.lambda().expect("validated"))?
        }
        ProcedureName::BKY06 | ProcedureName::BKY06exact => {
            let l = spec.lambda().expect("validated");
            let u = first_stage_threshold(model, l)?;
            a * pi0 * (1.0 - l) / (1.0 - model.cdf(u))
        }
    })
}
