//! Acceptance gate: one PASS/FAIL line per criterion.

use std::io::Write;

use fdr_threshold::asymptotics::{
    check_conditions, clt_limit, clt_limit_with, specialized_fdp_variance,
    specialized_threshold_variance, tau_star, BridgeScaling, CouplingCandidate,
};
use fdr_threshold::fixedpoint::{iterate, power_compare, Direction, MapFamily, DEFAULT_MAX_ITER, DEFAULT_TOL};
use fdr_threshold::procedures::{brute_force_threshold, step_up_threshold, RejectionCurve};
use fdr_threshold::simulation::{equivalence_check, fdr_at_fixed_threshold, null_count, run_study, SimConfig};
use fdr_threshold::stats::log_log_slope;
use fdr_threshold::{AlternativeModel, Error, LabeledSample, MixtureModel, ProcedureName, ProcedureSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// 0 lets rayon size the pool; results do not depend on it.
const WORKERS: usize = 0;

// Pinned tolerances and sizes.
/// |z| bound for Monte Carlo means against exact finite-m values.
const Z_MAX: f64 = 3.0;
/// Relative band for empirical vs analytic √m-scale FDP variance.
const CLT_VAR_REL: f64 = 0.10;
/// Admissible log-log slope of SD(FDP) against m.
const RATE_SLOPE: (f64, f64) = (-0.55, -0.45);
/// Rejection-count contrast across α*.
const CRITICALITY_RATIO: f64 = 50.0;
/// Offset of "just below/above" α*, relative.
const CRITICALITY_OFFSET: f64 = 0.2;
/// Fixed-point limit vs one-stage τ*.
const FIXED_POINT_TOL: f64 = 1e-8;
const FIXED_POINT_TUPLES: usize = 20;
/// Generic vs specialized variance, relative to max(1, value).
const IDENTITY_TOL: f64 = 1e-10;
/// BKY06 closed-form coupling vs the numeric functional derivative.
const COUPLING_ORACLE_TOL: f64 = 1e-4;
const ORACLE_SAMPLES: usize = 1000;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn gauss(pi0: f64, theta: f64) -> MixtureModel {
    MixtureModel::new(pi0, AlternativeModel::gaussian(theta).unwrap()).unwrap()
}

fn laplace(pi0: f64, theta: f64) -> MixtureModel {
    MixtureModel::new(pi0, AlternativeModel::laplace(theta).unwrap()).unwrap()
}

fn model_grid() -> Vec<MixtureModel> {
    let mut out = Vec::new();
    for pi0 in [0.5, 0.8, 0.95] {
        for theta in [1.0, 2.0, 3.0] {
            out.push(gauss(pi0, theta));
            out.push(laplace(pi0, theta));
        }
    }
    out
}

fn usable(model: &MixtureModel, spec: &ProcedureSpec) -> bool {
    check_conditions(model, &spec.resolved_for(model.pi0()).unwrap()).all_hold() && tau_star(model, spec).is_ok()
}

fn exact_bh95_fdr() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for pi0 in [0.5, 0.8] {
        let model = gauss(pi0, 2.0);
        let cfg = SimConfig::new(model, vec![ProcedureSpec::bh95(0.1).unwrap()], vec![50, 500, 5000], 50_000, 101);
        let s = run_study(&cfg, WORKERS).unwrap();
        for c in &s.cells {
            let target = null_count(&model, c.m) as f64 / c.m as f64 * 0.1;
            let z = (c.mean_fdp - target) / c.se_mean_fdp;
            worst = worst.max(z.abs());
            lines.push(format!("pi0={pi0} m={} z={z:.2}", c.m));
        }
    }
    Outcome {
        pass: worst < Z_MAX,
        detail: format!("max |z| = {worst:.2} ({})", lines.join(", ")),
    }
}

fn fixed_threshold_formula() -> Outcome {
    let model = gauss(0.8, 2.0);
    let mut worst: f64 = 0.0;
    for t in [0.01, 0.05, 0.2] {
        for m in [10, 100] {
            let c = fdr_at_fixed_threshold(&model, t, m, 100_000, 202).unwrap();
            worst = worst.max(c.z.abs());
        }
    }
    Outcome {
        pass: worst < Z_MAX,
        detail: format!("max |z| = {worst:.2} over t in {{0.01,0.05,0.2}}, m in {{10,100}}"),
    }
}

fn clt_variance() -> Outcome {
    let model = gauss(0.8, 2.0);
    let specs = vec![
        ProcedureSpec::bh95(0.1).unwrap(),
        ProcedureSpec::sto02(0.1, 0.5).unwrap(),
        ProcedureSpec::fdr08(0.1, None).unwrap(),
        ProcedureSpec::br08(0.1, 0.3).unwrap(),
        ProcedureSpec::bky06(0.1, None).unwrap(),
    ];
    let cfg = SimConfig::new(model, specs.clone(), vec![10_000], 20_000, 303);
    let s = run_study(&cfg, WORKERS).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (spec, c) in specs.iter().zip(&s.cells) {
        let emp = c.scaled_var.unwrap();
        if spec.name() == ProcedureName::BKY06 {
            let passing: Vec<CouplingCandidate> = CouplingCandidate::ALL
                .into_iter()
                .filter(|&k| {
                    let v = specialized_fdp_variance(&model, spec, BridgeScaling::PerGroup, Some(k)).unwrap();
                    (emp / v - 1.0).abs() < CLT_VAR_REL
                })
                .collect();
            let selected = clt_limit(&model, spec).unwrap().coupling.unwrap().selected;
            let ok = passing.contains(&selected);
            pass &= ok;
            let names: Vec<&str> = passing.iter().map(|k| k.formula()).collect();
            parts.push(format!(
                "{}: ratio {:.3}, selected K = {}, passing [{}]",
                c.spec,
                c.variance_ratio().unwrap(),
                selected.formula(),
                names.join("; ")
            ));
        } else {
            let r = c.variance_ratio().unwrap();
            pass &= (r - 1.0).abs() < CLT_VAR_REL;
            parts.push(format!("{}: ratio {r:.3}", c.spec));
        }
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn rate() -> Outcome {
    let ms = [100, 1000, 10_000];
    let cfg = SimConfig::new(gauss(0.8, 2.0), vec![ProcedureSpec::bh95(0.1).unwrap()], ms.to_vec(), 10_000, 404);
    let s = run_study(&cfg, WORKERS).unwrap();
    let sd: Vec<f64> = s.cells.iter().map(|c| c.sd_fdp).collect();
    let x: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
    let slope = log_log_slope(&x, &sd);
    Outcome {
        pass: (RATE_SLOPE.0..=RATE_SLOPE.1).contains(&slope),
        detail: format!("slope {slope:.4}"),
    }
}

fn criticality() -> Outcome {
    let model = laplace(0.5, 2.0);
    let a_star = model.critical_alpha();
    let closed = 1.0 / (0.5 + 0.5 * 2f64.exp());
    let lo = ProcedureSpec::bh95(a_star * (1.0 - CRITICALITY_OFFSET)).unwrap();
    let hi = ProcedureSpec::bh95(a_star * (1.0 + CRITICALITY_OFFSET)).unwrap();
    let below_err = matches!(tau_star(&model, &lo), Err(Error::Criticality { .. }));
    let above_ok = tau_star(&model, &hi).is_ok();
    let cfg = SimConfig::new(model, vec![lo, hi], vec![10_000], 2000, 505);
    let s = run_study(&cfg, WORKERS).unwrap();
    let (r_lo, r_hi) = (s.cells[0].mean_rejected, s.cells[1].mean_rejected);
    let ratio = r_hi / r_lo.max(f64::MIN_POSITIVE);
    Outcome {
        pass: (a_star - closed).abs() < 1e-15 && below_err && above_ok && ratio >= CRITICALITY_RATIO,
        detail: format!(
            "alpha* = {a_star:.6}, error below: {below_err}, ok above: {above_ok}, mean R {r_lo:.2} vs {r_hi:.1} (x{ratio:.0})"
        ),
    }
}

fn fixed_point() -> Outcome {
    let mut tuples = 0;
    let mut failures = Vec::new();
    'grid: for model in model_grid() {
        for alpha in [0.05, 0.1, 0.2] {
            for lambda in [0.2, 0.5] {
                let one_stage = [ProcedureSpec::fdr08(alpha, None).unwrap(), ProcedureSpec::br08(alpha, lambda).unwrap()];
                if !one_stage.iter().all(|s| usable(&model, s)) || lambda <= model.critical_alpha() {
                    continue;
                }
                let runs = [
                    (MapFamily::Sto02ToFdr08, None),
                    (MapFamily::Bky06ToBr08, Some(lambda)),
                ]
                .map(|(fam, l)| {
                    let t0 = fam.canonical_t0(&model, lambda)?;
                    iterate(&model, fam, t0, alpha, l, DEFAULT_TOL, DEFAULT_MAX_ITER)
                });
                if runs.iter().any(|r| matches!(r, Err(Error::Premise(_)))) {
                    continue;
                }
                tuples += 1;
                for r in runs {
                    match r {
                        Ok(t) => {
                            let ok = t.converged
                                && (t.limit - t.one_stage_tau.unwrap_or(f64::NAN)).abs() < FIXED_POINT_TOL
                                && t.monotone_direction != Direction::Mixed
                                && t.bracketed == Some(true);
                            if !ok {
                                failures.push(format!("{} t0={} alpha={alpha}", t.family.as_str(), t.t0));
                            }
                        }
                        Err(e) => failures.push(e.to_string()),
                    }
                }
                if tuples == FIXED_POINT_TUPLES {
                    break 'grid;
                }
            }
        }
    }
    Outcome {
        pass: tuples == FIXED_POINT_TUPLES && failures.is_empty(),
        detail: format!("{tuples} tuples x 2 families, {} failures {:?}", failures.len(), failures),
    }
}

fn step_up_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut mismatches = [0usize; 3];
    for k in 0..ORACLE_SAMPLES {
        let m = rng.random_range(1..=40);
        let p: Vec<f64> = (0..m)
            .map(|_| {
                let u: f64 = rng.random();
                u * u * u
            })
            .collect();
        let sample = LabeledSample::unlabeled(&p).unwrap();
        let alpha = rng.random_range(0.02..0.5);
        let lambda = rng.random_range(0.05..0.9);
        let curves = [
            RejectionCurve::simes(alpha).unwrap(),
            RejectionCurve::fdr08(alpha, (k % 2 == 0).then_some(lambda)).unwrap(),
            RejectionCurve::br08(alpha, lambda).unwrap(),
        ];
        for (i, c) in curves.iter().enumerate() {
            let fast = step_up_threshold(&sample, c);
            let slow = brute_force_threshold(&sample, c, 10 * m);
            // Same rejection set; the threshold itself may sit anywhere in the gap.
            if sample.count_le(fast) != sample.count_le(slow) {
                mismatches[i] += 1;
            }
        }
    }
    Outcome {
        pass: mismatches == [0; 3],
        detail: format!("mismatches simes/fdr08/br08 = {mismatches:?} over {ORACLE_SAMPLES} samples each"),
    }
}

fn variance_identity() -> Outcome {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut bky_checked = 0;
    let mut bky_worst: f64 = 0.0;
    let mut errors = Vec::new();
    for model in model_grid() {
        for alpha in [0.05, 0.1, 0.2] {
            let specs = [
                ProcedureSpec::bh95(alpha).unwrap(),
                ProcedureSpec::bh95o(alpha, None).unwrap(),
                ProcedureSpec::fdr08(alpha, None).unwrap(),
                ProcedureSpec::br08(alpha, 0.1).unwrap(),
                ProcedureSpec::br08(alpha, 0.3).unwrap(),
                ProcedureSpec::sto02(alpha, 0.3).unwrap(),
                ProcedureSpec::sto02(alpha, 0.5).unwrap(),
                ProcedureSpec::sts04(alpha, 0.5).unwrap(),
                ProcedureSpec::bky06(alpha, None).unwrap(),
                ProcedureSpec::bky06(alpha, Some(0.3)).unwrap(),
            ];
            for spec in specs {
                if !usable(&model, &spec) {
                    continue;
                }
                let spec = spec.resolved_for(model.pi0()).unwrap();
                for scaling in [BridgeScaling::PerGroup, BridgeScaling::Unit] {
                    let lim = match clt_limit_with(&model, &spec, scaling) {
                        Ok(l) => l,
                        Err(e) => {
                            errors.push(format!("{} {:?}: {e}", spec.label(), model));
                            continue;
                        }
                    };
                    if let Some(c) = &lim.coupling {
                        let k = c.candidates.iter().find(|(k, _)| *k == c.selected).unwrap().1;
                        bky_worst = bky_worst.max((c.numeric - k).abs() / k.abs());
                        bky_checked += 1;
                        continue;
                    }
                    let v = match specialized_fdp_variance(&model, &spec, scaling, None) {
                        Ok(v) => v,
                        Err(e) => {
                            errors.push(format!("{} {:?}: {e}", spec.label(), model));
                            continue;
                        }
                    };
                    let mut err = (lim.fdp_sd.powi(2) - v).abs() / v.max(1.0);
                    if !spec.name().is_plug_in() {
                        let tv = specialized_threshold_variance(&model, &spec, scaling).unwrap();
                        err = err.max((lim.threshold_sd.powi(2) - tv).abs() / tv.max(1.0));
                    }
                    worst = worst.max(err);
                    checked += 1;
                }
            }
        }
    }
    Outcome {
        pass: checked > 0 && bky_checked > 0 && worst < IDENTITY_TOL && bky_worst < COUPLING_ORACLE_TOL && errors.is_empty(),
        detail: format!(
            "{checked} cases max rel err {worst:.2e}; BKY06 {bky_checked} cases max rel gap to numeric derivative {bky_worst:.2e}; {} errors {:?}",
            errors.len(),
            errors.iter().take(5).collect::<Vec<_>>()
        ),
    }
}

fn equivalence_decay() -> Outcome {
    // At π₀=0.8, α=0.1 the paired FDPs differ in under 10% of replicates, so
    // the 0.9-quantile is 0 at every m and carries no information.
    let model = gauss(0.5, 2.0);
    let alpha = 0.2;
    let ms = [100, 1000, 10_000];
    let pairs = [
        (ProcedureSpec::sto02(alpha, 0.5).unwrap(), ProcedureSpec::sts04(alpha, 0.5).unwrap()),
        (ProcedureSpec::bky06(alpha, None).unwrap(), ProcedureSpec::bky06exact(alpha, None).unwrap()),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (a, b) in &pairs {
        pass &= usable(&model, a) && usable(&model, b);
        let r = equivalence_check(&model, a, b, &ms, 4000, 909, WORKERS).unwrap();
        let decreasing = r.quantiles.windows(2).all(|w| w[1] < w[0]);
        pass &= decreasing;
        let qs: Vec<String> = r.quantiles.iter().map(|q| format!("{q:.4}")).collect();
        parts.push(format!("{} vs {}: {}", r.first, r.second, qs.join(" > ")));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn power_orderings() -> Outcome {
    let mut compared = 0;
    let mut evaluated = std::collections::BTreeMap::<&str, usize>::new();
    let mut disagreements = Vec::new();
    for model in model_grid() {
        for alpha in [0.05, 0.1, 0.2] {
            let default_l = alpha / (1.0 + alpha);
            let mut pairs = vec![(ProcedureSpec::bh95o(alpha, None).unwrap(), ProcedureSpec::bh95(alpha).unwrap())];
            for lambda in [0.02, 0.05, default_l - 0.01, 0.1, 0.3, 0.5] {
                let br = ProcedureSpec::br08(alpha, lambda).unwrap();
                let bky = ProcedureSpec::bky06(alpha, Some(lambda)).unwrap();
                let sto = ProcedureSpec::sto02(alpha, lambda).unwrap();
                pairs.push((sto, ProcedureSpec::fdr08(alpha, None).unwrap()));
                pairs.push((br, bky));
                pairs.push((br, ProcedureSpec::bh95(alpha).unwrap()));
                pairs.push((bky, ProcedureSpec::bh95(alpha).unwrap()));
                pairs.push((sto, ProcedureSpec::bh95(alpha).unwrap()));
                pairs.push((ProcedureSpec::bh95o(alpha, None).unwrap(), sto));
                pairs.push((ProcedureSpec::sto02(alpha, 0.6).unwrap(), sto));
            }
            for (a, b) in pairs {
                if !usable(&model, &a) || !usable(&model, &b) {
                    continue;
                }
                let c = power_compare(&model, &a, &b).unwrap();
                compared += 1;
                for crit in &c.criteria {
                    if crit.agrees.is_some() {
                        *evaluated.entry(criterion_kind(&crit.statement)).or_default() += 1;
                    }
                }
                if !c.consistent() {
                    disagreements.push(format!("{} vs {} ({:?})", c.first, c.second, model));
                }
            }
        }
    }
    let required = ["sto02-vs-fdr08", "br08-vs-bky06", "br08-vs-bh95", "bky06-vs-bh95", "sqrt-bound"];
    let covered = required.iter().all(|k| evaluated.get(k).copied().unwrap_or(0) > 0);
    Outcome {
        pass: disagreements.is_empty() && covered,
        detail: format!(
            "{compared} pairs, criteria evaluated {evaluated:?}, {} disagreements {:?}",
            disagreements.len(),
            disagreements.iter().take(5).collect::<Vec<_>>()
        ),
    }
}

fn criterion_kind(statement: &str) -> &'static str {
    if statement.starts_with("lambda > tau") {
        "sto02-vs-fdr08"
    } else if statement.starts_with("tau*_BR08") {
        "br08-vs-bky06"
    } else if statement.starts_with("tau*_BH95") {
        "br08-vs-bh95"
    } else if statement.starts_with("G(u(lambda))") {
        "bky06-vs-bh95"
    } else if statement.starts_with("G(x) <= sqrt") {
        "sqrt-bound"
    } else {
        "pi0-ordering"
    }
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("exact finite-sample FDR of BH95", exact_bh95_fdr),
        ("fixed-threshold FDR formula", fixed_threshold_formula),
        ("CLT variance reproduction", clt_variance),
        ("FDP standard deviation rate", rate),
        ("criticality at alpha*", criticality),
        ("fixed-point convergence", fixed_point),
        ("step-up vs brute-force oracle", step_up_oracle),
        ("generic vs specialized variance", variance_identity),
        ("asymptotic-equivalence decay", equivalence_decay),
        ("power orderings", power_orderings),
    ];
    // ACCEPTANCE_ONLY=3,5 runs a subset.
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    let out = std::io::stdout();
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        let o = f();
        let line = format!("{} criterion {}: {name}: {}\n", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        // Written past the harness capture so the lines always show.
        out.lock().write_all(line.as_bytes()).unwrap();
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
