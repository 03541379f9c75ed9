//! Rejection curves, level functions and the step-up engine.
//!
//! Every procedure has the threshold function 𝒯(F) = 𝒰(F, 𝒜(F)) where
//! 𝒰(F, α) = sup{u : F(u) ≥ r_α(u)} and 𝒜 is the level function.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ecdf::LabeledSample;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    /// u/α
    Simes,
    /// u/(α + (1−α)u)
    Fdr08,
    /// u/(α(1−λ) + u)
    Br08,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RejectionCurve {
    kind: CurveKind,
    alpha: f64,
    lambda: f64,
    truncation: Option<f64>,
    scale: f64,
}

impl RejectionCurve {
    fn checked(kind: CurveKind, alpha: f64, lambda: f64, truncation: Option<f64>) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Validation(format!("curve level must be positive, got {alpha}")));
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::Validation(format!("lambda must lie in [0,1), got {lambda}")));
        }
        if let Some(t) = truncation {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Validation(format!("truncation must lie in (0,1], got {t}")));
            }
        }
        Ok(RejectionCurve {
            kind,
            alpha,
            lambda,
            truncation,
            scale: 1.0,
        })
    }

    pub fn simes(alpha: f64) -> Result<Self> {
        Self::checked(CurveKind::Simes, alpha, 0.0, None)
    }

    /// FDR08 curve, truncated at `truncation` when given.
    pub fn fdr08(alpha: f64, truncation: Option<f64>) -> Result<Self> {
        if alpha >= 1.0 {
            return Err(Error::Validation(format!("FDR08 needs alpha < 1, got {alpha}")));
        }
        Self::checked(CurveKind::Fdr08, alpha, 0.0, truncation)
    }

    /// BR08 curve with shape λ, truncated at λ.
    pub fn br08(alpha: f64, lambda: f64) -> Result<Self> {
        if lambda <= 0.0 {
            return Err(Error::Validation(format!("BR08 needs lambda in (0,1), got {lambda}")));
        }
        Self::checked(CurveKind::Br08, alpha, lambda, Some(lambda))
    }

    pub fn with_truncation(mut self, truncation: Option<f64>) -> Result<Self> {
        if let Some(t) = truncation {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Validation(format!("truncation must lie in (0,1], got {t}")));
            }
        }
        self.truncation = truncation;
        Ok(self)
    }

    /// Multiplies the curve by a constant factor (1 + 1/m for BR08exact).
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Right end of the finite domain.
    pub fn domain_end(&self) -> f64 {
        self.truncation.unwrap_or(1.0)
    }

    fn beyond(&self, u: f64) -> bool {
        self.truncation.is_some_and(|t| u > t)
    }

    /// r(u), or +∞ beyond the truncation point.
    pub fn value(&self, u: f64) -> f64 {
        if self.beyond(u) {
            return f64::INFINITY;
        }
        let a = self.alpha;
        let r = match self.kind {
            CurveKind::Simes => u / a,
            CurveKind::Fdr08 => u / (a + (1.0 - a) * u),
            CurveKind::Br08 => u / (a * (1.0 - self.lambda) + u),
        };
        self.scale * r
    }

    /// r⁻¹(y) from the closed forms.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::OutOfRange(format!("curve inverse needs y >= 0, got {y}")));
        }
        let y = y / self.scale;
        let a = self.alpha;
        match self.kind {
            CurveKind::Simes => Ok(a * y),
            CurveKind::Fdr08 => {
                let d = 1.0 - (1.0 - a) * y;
                if d <= 0.0 {
                    return Err(Error::OutOfRange(format!("FDR08 curve never reaches {y}")));
                }
                Ok(a * y / d)
            }
            CurveKind::Br08 => {
                if y >= 1.0 {
                    return Err(Error::OutOfRange(format!("BR08 inverse needs y < 1, got {y}")));
                }
                Ok(a * (1.0 - self.lambda) * y / (1.0 - y))
            }
        }
    }

    /// ∂r/∂u.
    pub fn slope(&self, u: f64) -> Result<f64> {
        if self.beyond(u) {
            return Err(Error::OutOfRange(format!("slope requested at {u}, beyond truncation")));
        }
        let a = self.alpha;
        let s = match self.kind {
            CurveKind::Simes => 1.0 / a,
            CurveKind::Fdr08 => a / (a + (1.0 - a) * u).powi(2),
            CurveKind::Br08 => {
                let c = a * (1.0 - self.lambda);
                c / (c + u).powi(2)
            }
        };
        Ok(self.scale * s)
    }

    /// ∂r/∂α.
    pub fn dalpha(&self, u: f64) -> Result<f64> {
        if self.beyond(u) {
            return Err(Error::OutOfRange(format!("derivative requested at {u}, beyond truncation")));
        }
        let a = self.alpha;
        let d = match self.kind {
            CurveKind::Simes => -u / (a * a),
            CurveKind::Fdr08 => -u * (1.0 - u) / (a + (1.0 - a) * u).powi(2),
            CurveKind::Br08 => {
                let l = 1.0 - self.lambda;
                -u * l / (a * l + u).powi(2)
            }
        };
        Ok(self.scale * d)
    }

    // min(r⁻¹(y), domain end, 1); unreachable heights map to the domain end.
    fn capped_inverse(&self, y: f64) -> f64 {
        let cap = self.domain_end().min(1.0);
        match self.inverse(y) {
            Ok(u) => u.min(cap),
            Err(_) => cap,
        }
    }
}

/// 𝒰(Ĝₘ, ·) for the given curve: max over i of sᵢ = min(r⁻¹(i/m), truncation, 1)
/// among indices with P₍ᵢ₎ ≤ sᵢ, or 0 when none qualifies.
pub fn step_up_threshold(sample: &LabeledSample, curve: &RejectionCurve) -> f64 {
    step_up_threshold_shifted(sample, curve, 0.0)
}

/// Step-up threshold of the shifted step function Ĝₘ − `shift`.
pub fn step_up_threshold_shifted(sample: &LabeledSample, curve: &RejectionCurve, shift: f64) -> f64 {
    let p = sample.pvalues();
    let m = p.len() as f64;
    // sᵢ is nondecreasing in i, so the first qualifying index from the top wins.
    for i in (1..=p.len()).rev() {
        let y = i as f64 / m - shift;
        if y < 0.0 {
            break;
        }
        let s = curve.capped_inverse(y);
        if p[i - 1] <= s {
            return s;
        }
    }
    0.0
}

/// Independent oracle: the largest point among a uniform grid and the order
/// statistics where Ĝₘ(u) ≥ r(u). The grid has at least 10·m cells.
pub fn brute_force_threshold(sample: &LabeledSample, curve: &RejectionCurve, grid_size: usize) -> f64 {
    let m = sample.m();
    if m == 0 {
        return 0.0;
    }
    let n = grid_size.max(10 * m);
    let ok = |u: f64| sample.ecdf(u) >= curve.value(u);
    let grid_best = (0..=n)
        .rev()
        .map(|j| j as f64 / n as f64)
        .find(|&u| ok(u))
        .unwrap_or(0.0);
    let order_best = sample
        .pvalues()
        .iter()
        .rev()
        .copied()
        .find(|&u| ok(u))
        .unwrap_or(0.0);
    grid_best.max(order_best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProcedureName {
    BH95,
    BH95o,
    FDR08,
    BR08,
    Sto02,
    STS04,
    BKY06,
    BKY06exact,
    BR08exact,
}

impl ProcedureName {
    pub const ALL: [ProcedureName; 9] = [
        ProcedureName::BH95,
        ProcedureName::BH95o,
        ProcedureName::FDR08,
        ProcedureName::BR08,
        ProcedureName::Sto02,
        ProcedureName::STS04,
        ProcedureName::BKY06,
        ProcedureName::BKY06exact,
        ProcedureName::BR08exact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProcedureName::BH95 => "BH95",
            ProcedureName::BH95o => "BH95o",
            ProcedureName::FDR08 => "FDR08",
            ProcedureName::BR08 => "BR08",
            ProcedureName::Sto02 => "Sto02",
            ProcedureName::STS04 => "STS04",
            ProcedureName::BKY06 => "BKY06",
            ProcedureName::BKY06exact => "BKY06exact",
            ProcedureName::BR08exact => "BR08exact",
        }
    }

    /// Procedures that apply Simes' line at a data-dependent level.
    pub fn is_plug_in(self) -> bool {
        matches!(
            self,
            ProcedureName::Sto02 | ProcedureName::STS04 | ProcedureName::BKY06 | ProcedureName::BKY06exact
        )
    }

    fn needs_lambda(self) -> bool {
        matches!(
            self,
            ProcedureName::BR08 | ProcedureName::BR08exact | ProcedureName::Sto02 | ProcedureName::STS04
        )
    }

    fn takes_lambda(self) -> bool {
        self.needs_lambda()
            || matches!(self, ProcedureName::FDR08 | ProcedureName::BKY06 | ProcedureName::BKY06exact)
    }
}

impl fmt::Display for ProcedureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A procedure with its parameters. BKY06 variants always carry a resolved λ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRecord", into = "SpecRecord")]
pub struct ProcedureSpec {
    name: ProcedureName,
    alpha: f64,
    lambda: Option<f64>,
    pi0: Option<f64>,
}

/// Config-file form of a procedure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecRecord {
    pub name: ProcedureName,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi0: Option<f64>,
}

impl TryFrom<SpecRecord> for ProcedureSpec {
    type Error = Error;

    fn try_from(r: SpecRecord) -> Result<Self> {
        ProcedureSpec::new(r.name, r.alpha, r.lambda, r.pi0)
    }
}

impl From<ProcedureSpec> for SpecRecord {
    fn from(s: ProcedureSpec) -> Self {
        SpecRecord {
            name: s.name,
            alpha: s.alpha,
            lambda: s.lambda,
            pi0: s.pi0,
        }
    }
}

/// Default BKY06 tuning parameter α/(1+α).
pub fn bky06_default_lambda(alpha: f64) -> f64 {
    alpha / (1.0 + alpha)
}

impl ProcedureSpec {
    pub fn new(name: ProcedureName, alpha: f64, lambda: Option<f64>, pi0: Option<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Validation(format!("{name}: alpha must lie in (0,1), got {alpha}")));
        }
        if lambda.is_some() && !name.takes_lambda() {
            return Err(Error::Validation(format!("{name} takes no lambda")));
        }
        if pi0.is_some() && name != ProcedureName::BH95o {
            return Err(Error::Validation(format!("{name} takes no pi0")));
        }
        if name.needs_lambda() && lambda.is_none() {
            return Err(Error::Validation(format!("{name} requires lambda")));
        }
        if let Some(l) = lambda {
            if !(l > 0.0 && l < 1.0) {
                return Err(Error::Validation(format!("{name}: lambda must lie in (0,1), got {l}")));
            }
        }
        if let Some(p) = pi0 {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Validation(format!("{name}: pi0 must lie in (0,1], got {p}")));
            }
        }
        let lambda = match name {
            ProcedureName::BKY06 | ProcedureName::BKY06exact => {
                Some(lambda.unwrap_or_else(|| bky06_default_lambda(alpha)))
            }
            _ => lambda,
        };
        Ok(ProcedureSpec {
            name,
            alpha,
            lambda,
            pi0,
        })
    }

    pub fn bh95(alpha: f64) -> Result<Self> {
        Self::new(ProcedureName::BH95, alpha, None, None)
    }

    pub fn bh95o(alpha: f64, pi0: Option<f64>) -> Result<Self> {
        Self::new(ProcedureName::BH95o, alpha, None, pi0)
    }

    pub fn fdr08(alpha: f64, lambda: Option<f64>) -> Result<Self> {
        Self::new(ProcedureName::FDR08, alpha, lambda, None)
    }

    pub fn br08(alpha: f64, lambda: f64) -> Result<Self> {
        Self::new(ProcedureName::BR08, alpha, Some(lambda), None)
    }

    pub fn br08exact(alpha: f64, lambda: f64) -> Result<Self> {
        Self::new(ProcedureName::BR08exact, alpha, Some(lambda), None)
    }

    pub fn sto02(alpha: f64, lambda: f64) -> Result<Self> {
        Self::new(ProcedureName::Sto02, alpha, Some(lambda), None)
    }

    pub fn sts04(alpha: f64, lambda: f64) -> Result<Self> {
        Self::new(ProcedureName::STS04, alpha, Some(lambda), None)
    }

    pub fn bky06(alpha: f64, lambda: Option<f64>) -> Result<Self> {
        Self::new(ProcedureName::BKY06, alpha, lambda, None)
    }

    pub fn bky06exact(alpha: f64, lambda: Option<f64>) -> Result<Self> {
        Self::new(ProcedureName::BKY06exact, alpha, lambda, None)
    }

    pub fn name(&self) -> ProcedureName {
        self.name
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn pi0(&self) -> Option<f64> {
        self.pi0
    }

    /// Fills parameters a model can supply: π₀ for BH95o and, for FDR08
    /// without λ, the truncation κ = α(1−π₀)/((1−α)π₀).
    pub fn resolved_for(&self, pi0: f64) -> Result<Self> {
        let mut s = *self;
        match s.name {
            ProcedureName::BH95o if s.pi0.is_none() => {
                if pi0 <= 0.0 {
                    return Err(Error::Validation("BH95o needs pi0 > 0".into()));
                }
                s.pi0 = Some(pi0);
            }
            ProcedureName::FDR08 if s.lambda.is_none() => {
                let k = kappa(s.alpha, pi0);
                if k > 0.0 && k < 1.0 {
                    s.lambda = Some(k);
                }
            }
            _ => {}
        }
        Ok(s)
    }

    /// Short label such as `Sto02(0.5)`.
    pub fn label(&self) -> String {
        match (self.name, self.lambda) {
            (ProcedureName::BH95o, _) => match self.pi0 {
                Some(p) => format!("BH95o(pi0={p})"),
                None => "BH95o".into(),
            },
            (n, Some(l)) => format!("{n}({l})"),
            (n, None) => n.to_string(),
        }
    }

    /// 𝒜(Ĝₘ).
    pub fn level(&self, sample: &LabeledSample) -> Result<f64> {
        let a = self.alpha;
        let m = sample.m() as f64;
        let lam = || self.lambda.expect("validated at construction");
        match self.name {
            ProcedureName::BH95 | ProcedureName::FDR08 | ProcedureName::BR08 | ProcedureName::BR08exact => {
                Ok(a)
            }
            ProcedureName::BH95o => {
                let p = self
                    .pi0
                    .ok_or_else(|| Error::Validation("BH95o needs pi0 (from the spec or a model)".into()))?;
                Ok(a / p)
            }
            ProcedureName::Sto02 => {
                let l = lam();
                let denom = 1.0 - sample.ecdf(l);
                if denom <= 0.0 {
                    return Err(Error::DegenerateLevel(format!(
                        "Sto02({l}): every p-value is <= lambda"
                    )));
                }
                Ok(a * (1.0 - l) / denom)
            }
            ProcedureName::STS04 => {
                let l = lam();
                Ok(a * (1.0 - l) / (1.0 + 1.0 / m - sample.ecdf(l)))
            }
            ProcedureName::BKY06 | ProcedureName::BKY06exact => {
                let l = lam();
                let stage1 = step_up_threshold(sample, &RejectionCurve::simes(l)?);
                let frac = sample.count_le(stage1) as f64 / m;
                let denom = if self.name == ProcedureName::BKY06 {
                    1.0 - frac
                } else {
                    1.0 + 1.0 / m - frac
                };
                if denom <= 0.0 {
                    return Err(Error::DegenerateLevel(format!(
                        "BKY06({l}): first stage rejects every hypothesis"
                    )));
                }
                Ok(a * (1.0 - l) / denom)
            }
        }
    }

    /// Rejection curve at the given level for a sample of size m.
    pub fn curve(&self, level: f64, m: usize) -> Result<RejectionCurve> {
        match self.name {
            ProcedureName::BH95
            | ProcedureName::BH95o
            | ProcedureName::Sto02
            | ProcedureName::BKY06
            | ProcedureName::BKY06exact => RejectionCurve::simes(level),
            ProcedureName::STS04 => RejectionCurve::simes(level)?.with_truncation(self.lambda),
            ProcedureName::FDR08 => RejectionCurve::fdr08(level, self.lambda),
            ProcedureName::BR08 => RejectionCurve::br08(level, self.lambda.expect("validated")),
            ProcedureName::BR08exact => Ok(RejectionCurve::br08(level, self.lambda.expect("validated"))?
                .with_scale(1.0 + 1.0 / m as f64)),
        }
    }

    /// Level and threshold without building the rejection set.
    pub fn threshold(&self, sample: &LabeledSample) -> Result<(f64, f64)> {
        if sample.is_empty() {
            return Err(Error::Validation("cannot apply a procedure to an empty sample".into()));
        }
        let level = self.level(sample)?;
        let curve = self.curve(level, sample.m())?;
        Ok((level, step_up_threshold(sample, &curve)))
    }

    pub fn apply(&self, sample: &LabeledSample) -> Result<ApplicationResult> {
        let (level_used, threshold) = self.threshold(sample)?;
        let fdp = sample.fdp_at(threshold).ok();
        let fnp = sample.fnp_at(threshold).ok();
        Ok(ApplicationResult {
            threshold,
            num_rejected: sample.count_le(threshold),
            num_false: sample.null_count_le(threshold),
            rejected: sample.rejected_indices(threshold),
            fdp,
            fnp,
            level_used,
        })
    }
}

/// FDR08 truncation κ = α(1−π₀)/((1−α)π₀).
pub fn kappa(alpha: f64, pi0: f64) -> f64 {
    alpha * (1.0 - pi0) / ((1.0 - alpha) * pi0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ApplicationResult {
    pub threshold: f64,
    pub num_rejected: usize,
    /// V, when labels are known.
    pub num_false: Option<usize>,
    /// Input positions of rejected hypotheses, ascending.
    pub rejected: Vec<usize>,
    pub fdp: Option<f64>,
    /// Undefined without labels or when every hypothesis is null.
    pub fnp: Option<f64>,
    pub level_used: f64,
}
