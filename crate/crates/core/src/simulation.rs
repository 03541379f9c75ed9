//! Seeded Monte Carlo over p-value samples drawn from a mixture model.
//!
//! Each replicate gets its own ChaCha8 stream seeded from a splitmix64 mix
//! of (base seed, spec index, m, replicate index). Results are gathered in
//! replicate order, so summaries do not depend on the worker count.

use rand::distr::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::asymptotics::{clt_limit, tau_star};
use crate::ecdf::LabeledSample;
use crate::error::{Error, Result};
use crate::model::MixtureModel;
use crate::normal;
use crate::procedures::ProcedureSpec;
use crate::stats::{self, Moments};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit seed for one replicate.
pub fn replicate_seed(base_seed: u64, spec_index: usize, m: usize, replicate: usize) -> u64 {
    [spec_index as u64, m as u64, replicate as u64]
        .iter()
        .fold(splitmix64(base_seed), |h, &x| splitmix64(h ^ x))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_simulable(model: &MixtureModel, m: usize) -> Result<()> {
    if !model.is_simulable() {
        return Err(Error::NotSimulable(format!(
            "{} has no sampling distribution",
            model.family().as_str()
        )));
    }
    if m == 0 {
        return Err(Error::Validation("m must be at least 1".into()));
    }
    Ok(())
}

pub fn null_count(model: &MixtureModel, m: usize) -> usize {
    ((model.pi0() * m as f64).round() as usize).min(m)
}

// (p-value, is_null) pairs in generation order: nulls first.
fn draw(model: &MixtureModel, m: usize, seed: u64) -> Vec<(f64, bool)> {
    let m0 = null_count(model, m);
    let mut r = rng(seed);
    let alt = model.alternative();
    (0..m)
        .map(|i| {
            let u: f64 = Open01.sample(&mut r);
            if i < m0 {
                (u, true)
            } else {
                (alt.sample(u), false)
            }
        })
        .collect()
}

fn draw_sorted(model: &MixtureModel, m: usize, seed: u64) -> LabeledSample {
    let mut pairs = draw(model, m, seed);
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    LabeledSample::from_sorted_pairs(&pairs)
}

/// m p-values: the first round(π₀m) uniform nulls, the rest alternatives.
pub fn sample_pvalues(model: &MixtureModel, m: usize, seed: u64) -> Result<LabeledSample> {
    check_simulable(model, m)?;
    let (p, l): (Vec<f64>, Vec<bool>) = draw(model, m, seed).into_iter().unzip();
    LabeledSample::from_raw(&p, &l)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub fdp: f64,
    /// None when every hypothesis is null.
    pub fnp: Option<f64>,
    pub threshold: f64,
    pub rejected: usize,
    pub false_rejections: usize,
    pub level_used: f64,
}

fn apply_to(spec: &ProcedureSpec, sample: &LabeledSample) -> Result<ReplicateRecord> {
    let (level_used, threshold) = spec.threshold(sample)?;
    let rejected = sample.count_le(threshold);
    let false_rejections = sample.null_count_le(threshold).expect("simulated samples are labelled");
    Ok(ReplicateRecord {
        fdp: false_rejections as f64 / rejected.max(1) as f64,
        fnp: sample.fnp_at(threshold).ok(),
        threshold,
        rejected,
        false_rejections,
        level_used,
    })
}

/// One sample, one procedure. The spec is resolved against the model's π₀.
pub fn run_replicate(model: &MixtureModel, spec: &ProcedureSpec, m: usize, seed: u64) -> Result<ReplicateRecord> {
    check_simulable(model, m)?;
    let spec = spec.resolved_for(model.pi0())?;
    apply_to(&spec, &draw_sorted(model, m, seed))
}

/// Maps `f` over 0..n, in parallel when enabled, returning results in index order.
fn map_indexed<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers != 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
        return pool.install(|| (0..n).into_par_iter().map(&f).collect());
    }
    let _ = workers;
    (0..n).map(f).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub model: MixtureModel,
    pub specs: Vec<ProcedureSpec>,
    pub m_values: Vec<usize>,
    pub replicates: usize,
    pub base_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_thresholds: Option<Vec<f64>>,
    /// Keep every replicate record in the summary.
    #[serde(default)]
    pub keep_raw: bool,
}

impl SimConfig {
    pub fn new(model: MixtureModel, specs: Vec<ProcedureSpec>, m_values: Vec<usize>, replicates: usize, base_seed: u64) -> Self {
        SimConfig {
            model,
            specs,
            m_values,
            replicates,
            base_seed,
            fixed_thresholds: None,
            keep_raw: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Validation("replicates must be at least 1".into()));
        }
        if self.specs.is_empty() || self.m_values.is_empty() {
            return Err(Error::Validation("need at least one spec and one m".into()));
        }
        for &m in &self.m_values {
            check_simulable(&self.model, m)?;
        }
        for &t in self.fixed_thresholds.iter().flatten() {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Validation(format!("fixed threshold {t} outside (0,1)")));
            }
        }
        Ok(())
    }
}

/// Summary for one (spec, m) cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub spec: String,
    pub m: usize,
    pub replicates: usize,
    pub mean_fdp: f64,
    pub se_mean_fdp: f64,
    pub var_fdp: f64,
    pub sd_fdp: f64,
    pub mean_fnp: Option<f64>,
    pub mean_threshold: f64,
    pub mean_rejected: f64,
    pub mean_level: f64,
    /// p* and the predicted √m-scale FDP deviation, when the limit exists.
    pub pfdr_star: Option<f64>,
    pub predicted_sd: Option<f64>,
    /// Moments of √m(FDP − p*).
    pub scaled_mean: Option<f64>,
    pub scaled_var: Option<f64>,
    pub se_scaled_var: Option<f64>,
    pub scaled_skewness: Option<f64>,
    pub scaled_excess_kurtosis: Option<f64>,
    /// KS distance of the scaled deviations to N(0, predicted_sd²).
    pub ks_to_predicted: Option<f64>,
}

impl CellSummary {
    /// Empirical over predicted scaled variance.
    pub fn variance_ratio(&self) -> Option<f64> {
        Some(self.scaled_var? / self.predicted_sd?.powi(2))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RawRecord {
    pub spec: String,
    pub m: usize,
    pub replicate: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub record: ReplicateRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub config: SimConfig,
    pub cells: Vec<CellSummary>,
    pub fixed_threshold_checks: Vec<FixedThresholdCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<Vec<RawRecord>>,
}

impl SimulationSummary {
    pub fn cell(&self, spec_label: &str, m: usize) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.spec == spec_label && c.m == m)
    }

    /// One row per (spec, m).
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for c in &self.cells {
            out.serialize(c)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_raw_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["spec", "m", "replicate", "seed", "fdp", "fnp", "threshold", "rejected", "false_rejections", "level_used"])?;
        for r in self.raw.iter().flatten() {
            let x = &r.record;
            out.write_record([
                r.spec.clone(),
                r.m.to_string(),
                r.replicate.to_string(),
                r.seed.to_string(),
                format!("{:.16e}", x.fdp),
                x.fnp.map(|v| format!("{v:.16e}")).unwrap_or_default(),
                format!("{:.16e}", x.threshold),
                x.rejected.to_string(),
                x.false_rejections.to_string(),
                format!("{:.16e}", x.level_used),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn summarize(model: &MixtureModel, spec: &ProcedureSpec, m: usize, recs: &[ReplicateRecord]) -> CellSummary {
    let n = recs.len() as f64;
    let fdp: Vec<f64> = recs.iter().map(|r| r.fdp).collect();
    let fm = Moments::of(&fdp);
    let fnps: Vec<f64> = recs.iter().filter_map(|r| r.fnp).collect();
    let mean_fnp = (!fnps.is_empty()).then(|| fnps.iter().sum::<f64>() / fnps.len() as f64);

    let pfdr_star = tau_star(model, spec).ok().and_then(|c| model.pfdr(c.t).ok());
    let predicted_sd = pfdr_star.and_then(|_| clt_limit(model, spec).ok()).map(|g| g.fdp_sd);
    let scaled = pfdr_star.map(|p| {
        let s = (m as f64).sqrt();
        let dev: Vec<f64> = fdp.iter().map(|f| s * (f - p)).collect();
        let mo = Moments::of(&dev);
        let ks = predicted_sd.filter(|sd| *sd > 0.0).map(|sd| stats::ks_normal(&dev, 0.0, sd));
        (mo, ks)
    });
    CellSummary {
        spec: spec.label(),
        m,
        replicates: recs.len(),
        mean_fdp: fm.mean,
        se_mean_fdp: fm.se_mean(),
        var_fdp: fm.var,
        sd_fdp: fm.sd(),
        mean_fnp,
        mean_threshold: recs.iter().map(|r| r.threshold).sum::<f64>() / n,
        mean_rejected: recs.iter().map(|r| r.rejected as f64).sum::<f64>() / n,
        mean_level: recs.iter().map(|r| r.level_used).sum::<f64>() / n,
        pfdr_star,
        predicted_sd,
        scaled_mean: scaled.map(|s| s.0.mean),
        scaled_var: scaled.map(|s| s.0.var),
        se_scaled_var: scaled.map(|s| s.0.se_var()),
        scaled_skewness: scaled.map(|s| s.0.skewness),
        scaled_excess_kurtosis: scaled.map(|s| s.0.excess_kurtosis),
        ks_to_predicted: scaled.and_then(|s| s.1),
    }
}

/// Runs every (spec, m) cell. `workers` = 1 runs sequentially, 0 uses the
/// default pool size; without the `parallel` feature it is ignored.
pub fn run_study(config: &SimConfig, workers: usize) -> Result<SimulationSummary> {
    config.validate()?;
    let model = &config.model;
    let mut cells = Vec::new();
    let mut raw = config.keep_raw.then(Vec::new);
    for (si, spec) in config.specs.iter().enumerate() {
        let spec = spec.resolved_for(model.pi0())?;
        for &m in &config.m_values {
            let recs = map_indexed(config.replicates, workers, |r| {
                let seed = replicate_seed(config.base_seed, si, m, r);
                apply_to(&spec, &draw_sorted(model, m, seed)).map_err(|e| {
                    Error::Validation(format!("{} m={m} replicate {r} (seed {seed}): {e}", spec.label()))
                })
            })?;
            cells.push(summarize(model, &spec, m, &recs));
            if let Some(raw) = raw.as_mut() {
                raw.extend(recs.into_iter().enumerate().map(|(r, record)| RawRecord {
                    spec: spec.label(),
                    m,
                    replicate: r,
                    seed: replicate_seed(config.base_seed, si, m, r),
                    record,
                }));
            }
        }
    }
    let mut fixed_threshold_checks = Vec::new();
    for &t in config.fixed_thresholds.iter().flatten() {
        for &m in &config.m_values {
            fixed_threshold_checks.push(fdr_at_fixed_threshold_with(model, t, m, config.replicates, config.base_seed, workers)?);
        }
    }
    Ok(SimulationSummary {
        config: config.clone(),
        cells,
        fixed_threshold_checks,
        raw,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FixedThresholdCheck {
    pub t: f64,
    pub m: usize,
    pub replicates: usize,
    pub empirical: f64,
    pub standard_error: f64,
    /// p(t)(1 − (1 − G(t))^m).
    pub formula: f64,
    pub z: f64,
}

/// Exact finite-m FDR of the fixed rejection region [0, t].
pub fn fdr_formula(model: &MixtureModel, t: f64, m: usize) -> Result<f64> {
    Ok(model.pfdr(t)? * (1.0 - (1.0 - model.cdf(t)).powi(m as i32)))
}

/// Mean FDP at a fixed threshold against the exact formula. Labels are
/// drawn iid Bernoulli(π₀) here, the setting in which the formula is exact.
pub fn fdr_at_fixed_threshold(model: &MixtureModel, t: f64, m: usize, replicates: usize, seed: u64) -> Result<FixedThresholdCheck> {
    fdr_at_fixed_threshold_with(model, t, m, replicates, seed, 1)
}

pub fn fdr_at_fixed_threshold_with(
    model: &MixtureModel,
    t: f64,
    m: usize,
    replicates: usize,
    seed: u64,
    workers: usize,
) -> Result<FixedThresholdCheck> {
    check_simulable(model, m)?;
    if !(t > 0.0 && t < 1.0) || replicates < 2 {
        return Err(Error::Validation("need t in (0,1) and at least 2 replicates".into()));
    }
    let alt = model.alternative();
    let pi0 = model.pi0();
    let fdps = map_indexed(replicates, workers, |r| {
        let mut g = rng(replicate_seed(seed, usize::MAX, m, r));
        let (mut v, mut rej) = (0usize, 0usize);
        for _ in 0..m {
            let label: f64 = Open01.sample(&mut g);
            let u: f64 = Open01.sample(&mut g);
            let (p, is_null) = if label < pi0 { (u, true) } else { (alt.sample(u), false) };
            if p <= t {
                rej += 1;
                v += usize::from(is_null);
            }
        }
        Ok(v as f64 / rej.max(1) as f64)
    })?;
    let mo = Moments::of(&fdps);
    let formula = fdr_formula(model, t, m)?;
    let se = mo.se_mean();
    Ok(FixedThresholdCheck {
        t,
        m,
        replicates,
        empirical: mo.mean,
        standard_error: se,
        formula,
        z: if se > 0.0 { (mo.mean - formula) / se } else { 0.0 },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceRecord {
    pub first: String,
    pub second: String,
    pub m_values: Vec<usize>,
    /// 0.9-quantile of √m|FDP_first − FDP_second| per m.
    pub quantiles: Vec<f64>,
    pub nonincreasing: bool,
}

/// Paired comparison: both procedures see the same sample in each replicate.
pub fn equivalence_check(
    model: &MixtureModel,
    a: &ProcedureSpec,
    b: &ProcedureSpec,
    m_values: &[usize],
    replicates: usize,
    seed: u64,
    workers: usize,
) -> Result<EquivalenceRecord> {
    let a = a.resolved_for(model.pi0())?;
    let b = b.resolved_for(model.pi0())?;
    let mut quantiles = Vec::with_capacity(m_values.len());
    for &m in m_values {
        check_simulable(model, m)?;
        let s = (m as f64).sqrt();
        let diffs = map_indexed(replicates, workers, |r| {
            let sample = draw_sorted(model, m, replicate_seed(seed, 0, m, r));
            Ok(s * (apply_to(&a, &sample)?.fdp - apply_to(&b, &sample)?.fdp).abs())
        })?;
        quantiles.push(stats::quantile(&diffs, 0.9));
    }
    Ok(EquivalenceRecord {
        first: a.label(),
        second: b.label(),
        m_values: m_values.to_vec(),
        nonincreasing: quantiles.windows(2).all(|w| w[1] <= w[0]),
        quantiles,
    })
}

/// z-score of an empirical mean against a target.
pub fn z_score(mean: f64, se: f64, target: f64) -> f64 {
    (mean - target) / se
}

/// Two-sided normal p-value of a z-score.
pub fn two_sided_p(z: f64) -> f64 {
    2.0 * normal::sf(z.abs())
}
