//! Fixed-point maps linking two-stage plug-in procedures to one-stage
//! adaptive procedures, and asymptotic power comparisons.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{first_stage_threshold, sup_crossing, tau_star};
use crate::error::{Error, Result};
use crate::model::MixtureModel;
use crate::procedures::{ProcedureName, ProcedureSpec, RejectionCurve};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapFamily {
    /// τ(t) = 𝒰(G, α(1−t)/(1−G(t))): Sto02 anchored at t, limit FDR08.
    Sto02ToFdr08,
    /// τ(t) = 𝒰(G, α(1−λ)/(1−G(t))): BKY06 second stage, limit BR08(λ).
    Bky06ToBr08,
}

impl MapFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            MapFamily::Sto02ToFdr08 => "sto02-to-fdr08",
            MapFamily::Bky06ToBr08 => "bky06-to-br08",
        }
    }

    fn level(self, model: &MixtureModel, t: f64, alpha: f64, lambda: Option<f64>) -> Result<f64> {
        let q = 1.0 - model.cdf(t);
        if q <= 0.0 {
            return Err(Error::DegenerateLevel(format!("G({t}) = 1")));
        }
        Ok(match self {
            MapFamily::Sto02ToFdr08 => alpha * (1.0 - t) / q,
            MapFamily::Bky06ToBr08 => alpha * (1.0 - need_lambda(lambda)?) / q,
        })
    }

    /// The one-stage procedure whose threshold is the fixed point.
    pub fn one_stage_spec(self, alpha: f64, lambda: Option<f64>) -> Result<ProcedureSpec> {
        match self {
            MapFamily::Sto02ToFdr08 => ProcedureSpec::fdr08(alpha, None),
            MapFamily::Bky06ToBr08 => ProcedureSpec::br08(alpha, need_lambda(lambda)?),
        }
    }

    /// t₀ used in the convergence statements: λ for sto02-to-fdr08,
    /// u(λ) = 𝒰(G, λ) for bky06-to-br08.
    pub fn canonical_t0(self, model: &MixtureModel, lambda: f64) -> Result<f64> {
        match self {
            MapFamily::Sto02ToFdr08 => Ok(lambda),
            MapFamily::Bky06ToBr08 => first_stage_threshold(model, lambda),
        }
    }
}

fn need_lambda(lambda: Option<f64>) -> Result<f64> {
    match lambda {
        Some(l) if l > 0.0 && l < 1.0 => Ok(l),
        Some(l) => Err(Error::Validation(format!("lambda must lie in (0,1), got {l}"))),
        None => Err(Error::Validation("bky06-to-br08 needs lambda".into())),
    }
}

/// τ(t): asymptotic threshold of the Simes-line procedure at the level
/// induced by anchor t. Returns 1 when G stays above the line.
pub fn tau_map(model: &MixtureModel, family: MapFamily, t: f64, alpha: f64, lambda: Option<f64>) -> Result<f64> {
    let level = family.level(model, t, alpha, lambda)?;
    let u = sup_crossing(|x| model.cdf(x), &RejectionCurve::simes(level)?);
    if u <= 0.0 {
        return Err(Error::criticality(format!(
            "{}: induced level {level} at t = {t} has no interior crossing",
            family.as_str()
        )));
    }
    Ok(u)
}

/// Checks that u ↦ c(G,u)/u is nonincreasing on a grid, which the
/// convergence argument requires.
pub fn check_c13(model: &MixtureModel, family: MapFamily, alpha: f64, lambda: Option<f64>) -> Result<()> {
    let end = match family {
        MapFamily::Sto02ToFdr08 => 0.999,
        MapFamily::Bky06ToBr08 => need_lambda(lambda)?,
    };
    // c(G,u)/u up to positive constants.
    let ratio = |u: f64| match family {
        MapFamily::Sto02ToFdr08 => (1.0 - model.cdf(u)) / (1.0 - u) / alpha,
        MapFamily::Bky06ToBr08 => (1.0 - model.cdf(u)) / (alpha * (1.0 - end)),
    };
    let n = 1000;
    let mut prev = ratio(end / n as f64);
    for k in 2..=n {
        let u = end * k as f64 / n as f64;
        let r = ratio(u);
        if r > prev * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::Premise(format!(
                "{}: c(G,u)/u increases near u = {u}",
                family.as_str()
            )));
        }
        prev = r;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
    Constant,
    /// Not monotone; violates the bracketing statement.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationTrace {
    pub family: MapFamily,
    pub alpha: f64,
    pub lambda: Option<f64>,
    pub t0: f64,
    /// t₀, t₁, …, t_N with N the first index where |τ(t_N) − t_N| < tol.
    pub sequence: Vec<f64>,
    /// |τ(t_n) − t_n| for each entry of `sequence`.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub limit: f64,
    pub monotone_direction: Direction,
    /// τ* of the one-stage procedure, when it exists.
    pub one_stage_tau: Option<f64>,
    /// Every iterate lies between its predecessor and the one-stage τ*.
    pub bracketed: Option<bool>,
}

impl IterationTrace {
    /// CSV with columns n, t_n, residual.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "t_n", "residual"])?;
        for (n, (t, r)) in self.sequence.iter().zip(&self.residuals).enumerate() {
            out.write_record([n.to_string(), format!("{t:.16e}"), format!("{r:.16e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn iterate(
    model: &MixtureModel,
    family: MapFamily,
    t0: f64,
    alpha: f64,
    lambda: Option<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<IterationTrace> {
    if !(t0 > 0.0 && t0 < 1.0) {
        return Err(Error::Validation(format!("t0 must lie in (0,1), got {t0}")));
    }
    check_c13(model, family, alpha, lambda)?;
    let mut sequence = vec![t0];
    let mut residuals = Vec::new();
    let mut t = t0;
    let mut converged = false;
    for _ in 0..max_iter {
        let next = tau_map(model, family, t, alpha, lambda)?;
        let res = (next - t).abs();
        residuals.push(res);
        if res < tol {
            converged = true;
            break;
        }
        sequence.push(next);
        t = next;
    }
    if !converged {
        // The last entry has no residual yet.
        let next = tau_map(model, family, t, alpha, lambda)?;
        residuals.push((next - t).abs());
    }

    let one_stage_tau = family
        .one_stage_spec(alpha, lambda)
        .and_then(|s| tau_star(model, &s))
        .ok()
        .map(|c| c.t);
    let bracketed = one_stage_tau.map(|ts| {
        let slack = 1e-12;
        sequence.windows(2).all(|w| {
            let (lo, hi) = if w[0] <= ts { (w[0], ts) } else { (ts, w[0]) };
            w[1] >= lo - slack && w[1] <= hi + slack
        })
    });
    Ok(IterationTrace {
        family,
        alpha,
        lambda,
        t0,
        limit: *sequence.last().expect("non-empty"),
        monotone_direction: direction(&sequence),
        sequence,
        residuals,
        converged,
        one_stage_tau,
        bracketed,
    })
}

fn direction(seq: &[f64]) -> Direction {
    let up = seq.windows(2).any(|w| w[1] > w[0]);
    let down = seq.windows(2).any(|w| w[1] < w[0]);
    match (up, down) {
        (false, false) => Direction::Constant,
        (true, false) => Direction::Increasing,
        (false, true) => Direction::Decreasing,
        (true, true) => Direction::Mixed,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    FirstMorePowerful,
    SecondMorePowerful,
    Equivalent,
}

impl Verdict {
    fn from_diff(d: f64, tie: f64) -> Self {
        if d > tie {
            Verdict::FirstMorePowerful
        } else if d < -tie {
            Verdict::SecondMorePowerful
        } else {
            Verdict::Equivalent
        }
    }
}

/// A closed-form power criterion evaluated for a pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Criterion {
    pub statement: String,
    /// Positive when the criterion favours the first procedure.
    pub margin: f64,
    pub predicted: Verdict,
    /// None when the margin is within the tie tolerance.
    pub agrees: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerComparison {
    pub first: String,
    pub second: String,
    pub tau_first: f64,
    pub tau_second: f64,
    pub pfdr_first: f64,
    pub pfdr_second: f64,
    /// Larger asymptotic threshold means more rejections.
    pub verdict: Verdict,
    /// Ordering of p*, which must match the threshold ordering.
    pub pfdr_verdict: Verdict,
    pub criteria: Vec<Criterion>,
}

impl PowerComparison {
    /// False if any applicable criterion or the p* ordering disagrees.
    pub fn consistent(&self) -> bool {
        let ties = self.verdict == Verdict::Equivalent || self.pfdr_verdict == Verdict::Equivalent;
        (ties || self.verdict == self.pfdr_verdict) && self.criteria.iter().all(|c| c.agrees != Some(false))
    }
}

const TIE: f64 = 1e-9;

pub fn power_compare(model: &MixtureModel, a: &ProcedureSpec, b: &ProcedureSpec) -> Result<PowerComparison> {
    let ta = tau_star(model, a)?.t;
    let tb = tau_star(model, b)?.t;
    let pa = model.pfdr(ta)?;
    let pb = model.pfdr(tb)?;
    let verdict = Verdict::from_diff(ta - tb, TIE);
    let mut criteria = pair_criteria(model, a, b, ta, tb)?;
    if criteria.is_empty() {
        // Try the reversed pair and flip signs.
        criteria = pair_criteria(model, b, a, tb, ta)?
            .into_iter()
            .map(|c| Criterion {
                margin: -c.margin,
                predicted: match c.predicted {
                    Verdict::FirstMorePowerful => Verdict::SecondMorePowerful,
                    Verdict::SecondMorePowerful => Verdict::FirstMorePowerful,
                    v => v,
                },
                ..c
            })
            .collect();
    }
    for c in &mut criteria {
        c.agrees = (c.margin.abs() > TIE && verdict != Verdict::Equivalent).then(|| c.predicted == verdict);
    }
    Ok(PowerComparison {
        first: a.label(),
        second: b.label(),
        tau_first: ta,
        tau_second: tb,
        pfdr_first: pa,
        pfdr_second: pb,
        verdict,
        pfdr_verdict: Verdict::from_diff(pa - pb, TIE * 1e-3),
        criteria,
    })
}

fn criterion(statement: String, margin: f64, strict_favours_first: bool) -> Criterion {
    let predicted = if (margin > 0.0) == strict_favours_first {
        Verdict::FirstMorePowerful
    } else {
        Verdict::SecondMorePowerful
    };
    Criterion {
        statement,
        margin,
        predicted,
        agrees: None,
    }
}

// Criteria for an ordered pair (first, second); empty when none is known.
fn pair_criteria(
    model: &MixtureModel,
    a: &ProcedureSpec,
    b: &ProcedureSpec,
    ta: f64,
    tb: f64,
) -> Result<Vec<Criterion>> {
    use ProcedureName as P;
    let mut out = Vec::new();
    let same_alpha = a.alpha() == b.alpha();
    let alpha = a.alpha();
    match (a.name(), b.name()) {
        (P::Sto02, P::FDR08) if same_alpha => {
            let l = a.lambda().expect("validated");
            let t = tau_map(model, MapFamily::Sto02ToFdr08, l, alpha, None)?;
            out.push(criterion(format!("lambda > tau(lambda): {l} vs {t}"), l - t, true));
        }
        (P::BR08, P::BKY06) if same_alpha && a.lambda() == b.lambda() => {
            let l = a.lambda().expect("validated");
            let bound = l - alpha * (1.0 - l);
            out.push(criterion(format!("tau*_BR08 >= lambda - alpha(1-lambda) = {bound}"), ta - bound, true));
        }
        (P::BR08, P::BH95) if same_alpha => {
            let l = a.lambda().expect("validated");
            // Only meaningful when BH95's threshold lies inside BR08's domain.
            if tb <= l {
                out.push(criterion(format!("tau*_BH95 >= alpha*lambda = {}", alpha * l), tb - alpha * l, true));
            }
        }
        (P::BKY06, P::BH95) if same_alpha => {
            let l = a.lambda().expect("validated");
            let u = first_stage_threshold(model, l)?;
            out.push(criterion(format!("G(u(lambda)) > lambda = {l}"), model.cdf(u) - l, true));
            let sqrt_bound = (1..1000)
                .map(|k| k as f64 / 1000.0)
                .all(|x| model.cdf(x) <= x.sqrt());
            if sqrt_bound {
                out.push(criterion("G(x) <= sqrt(x) on [0,1]".into(), -1.0, true));
            }
        }
        (P::BH95o, P::BH95) if same_alpha => {
            let p = a.pi0().unwrap_or(model.pi0());
            out.push(criterion(format!("oracle pi0 = {p} < 1"), 1.0 - p, true));
        }
        (P::Sto02, P::BH95) if same_alpha => {
            let pb = model.pi0_bar(a.lambda().expect("validated"))?;
            out.push(criterion(format!("pi0_bar(lambda) = {pb} < 1"), 1.0 - pb, true));
        }
        (P::Sto02, P::Sto02) if same_alpha => {
            let pa = model.pi0_bar(a.lambda().expect("validated"))?;
            let pb = model.pi0_bar(b.lambda().expect("validated"))?;
            out.push(criterion("pi0_bar(lambda_1) < pi0_bar(lambda_2)".into(), pb - pa, true));
        }
        (P::BH95o, P::Sto02) if same_alpha => {
            let p = a.pi0().unwrap_or(model.pi0());
            let pb = model.pi0_bar(b.lambda().expect("validated"))?;
            out.push(criterion("oracle pi0 < pi0_bar(lambda)".into(), pb - p, true));
        }
        _ => {}
    }
    Ok(out)
}
