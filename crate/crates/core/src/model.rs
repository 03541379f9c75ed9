//! Two-group mixture model for p-values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// One-sided Gaussian shift test: G₁(t) = Φ̄(Φ̄⁻¹(t) − θ).
    GaussianLocation,
    /// One-sided Laplace shift test with the same construction.
    LaplaceLocation,
    /// All alternative p-values equal to 0 (G₁ ≡ 1). Analytic use only.
    DiracUniformLimit,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::GaussianLocation => "gaussian-location",
            Family::LaplaceLocation => "laplace-location",
            Family::DiracUniformLimit => "dirac-uniform-limit",
        }
    }
}

/// Distribution of p-values under the alternative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlternativeModel {
    family: Family,
    theta: f64,
}

impl AlternativeModel {
    pub fn new(family: Family, theta: f64) -> Result<Self> {
        match family {
            Family::GaussianLocation | Family::LaplaceLocation => {
                if !(theta.is_finite() && theta > 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "{} needs a finite theta > 0, got {theta}",
                        family.as_str()
                    )));
                }
            }
            Family::DiracUniformLimit => {
                if !theta.is_finite() {
                    return Err(Error::InvalidModel(format!("theta must be finite, got {theta}")));
                }
            }
        }
        Ok(AlternativeModel { family, theta })
    }

    pub fn gaussian(theta: f64) -> Result<Self> {
        Self::new(Family::GaussianLocation, theta)
    }

    pub fn laplace(theta: f64) -> Result<Self> {
        Self::new(Family::LaplaceLocation, theta)
    }

    pub fn dirac_uniform() -> Self {
        AlternativeModel {
            family: Family::DiracUniformLimit,
            theta: 0.0,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// G₁(u). Arguments outside [0,1] are clamped.
    pub fn cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self.family {
            Family::GaussianLocation => {
                if u == 0.0 {
                    0.0
                } else {
                    normal::sf(normal::isf(u) - self.theta)
                }
            }
            Family::LaplaceLocation => {
                let x = laplace_isf(u);
                if x >= self.theta {
                    // Both points in the right tail: the ratio is exactly e^θ.
                    u * self.theta.exp()
                } else {
                    laplace_sf(x - self.theta)
                }
            }
            Family::DiracUniformLimit => 1.0,
        }
    }

    /// g₁(u). At u = 0 the Gaussian density is unbounded and `f64::INFINITY`
    /// is returned.
    pub fn density(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self.family {
            Family::GaussianLocation => {
                if u == 0.0 {
                    return f64::INFINITY;
                }
                let z = normal::isf(u);
                (self.theta * z - 0.5 * self.theta * self.theta).exp()
            }
            Family::LaplaceLocation => {
                let x = laplace_isf(u);
                if x >= self.theta {
                    self.theta.exp()
                } else {
                    (x.abs() - (x - self.theta).abs()).exp()
                }
            }
            Family::DiracUniformLimit => 0.0,
        }
    }

    /// g₁(0⁺), possibly infinite.
    pub fn density_at_zero(&self) -> f64 {
        match self.family {
            Family::GaussianLocation => f64::INFINITY,
            Family::LaplaceLocation => self.theta.exp(),
            Family::DiracUniformLimit => 0.0,
        }
    }

    /// Inverse-CDF draw G₁⁻¹(v) from a uniform v ∈ (0,1).
    pub fn sample(&self, v: f64) -> f64 {
        match self.family {
            Family::GaussianLocation => normal::sf(normal::isf(v) + self.theta),
            Family::LaplaceLocation => laplace_sf(laplace_isf(v) + self.theta),
            Family::DiracUniformLimit => 0.0,
        }
    }
}

// Survival function of the standard Laplace distribution and its inverse.
fn laplace_sf(x: f64) -> f64 {
    if x >= 0.0 {
        0.5 * (-x).exp()
    } else {
        1.0 - 0.5 * x.exp()
    }
}

fn laplace_isf(t: f64) -> f64 {
    if t <= 0.5 {
        -(2.0 * t).ln()
    } else {
        (2.0 * (1.0 - t)).ln()
    }
}

/// G = π₀·U + (1 − π₀)·G₁.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRecord", into = "ModelRecord")]
pub struct MixtureModel {
    pi0: f64,
    alternative: AlternativeModel,
}

/// Config-file form of a model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub pi0: f64,
    pub family: Family,
    #[serde(default)]
    pub theta: f64,
}

impl TryFrom<ModelRecord> for MixtureModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        MixtureModel::new(r.pi0, AlternativeModel::new(r.family, r.theta)?)
    }
}

impl From<MixtureModel> for ModelRecord {
    fn from(m: MixtureModel) -> Self {
        ModelRecord {
            pi0: m.pi0,
            family: m.alternative.family,
            theta: m.alternative.theta,
        }
    }
}

impl MixtureModel {
    pub fn new(pi0: f64, alternative: AlternativeModel) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi0) {
            return Err(Error::InvalidModel(format!("pi0 must lie in [0,1], got {pi0}")));
        }
        Ok(MixtureModel { pi0, alternative })
    }

    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    pub fn alternative(&self) -> &AlternativeModel {
        &self.alternative
    }

    pub fn family(&self) -> Family {
        self.alternative.family
    }

    /// Only location families can be sampled.
    pub fn is_simulable(&self) -> bool {
        self.alternative.family != Family::DiracUniformLimit
    }

    pub fn alt_cdf(&self, u: f64) -> f64 {
        self.alternative.cdf(u)
    }

    pub fn alt_density(&self, u: f64) -> f64 {
        self.alternative.density(u)
    }

    pub fn cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        if self.pi0 == 1.0 {
            return u;
        }
        self.pi0 * u + (1.0 - self.pi0) * self.alternative.cdf(u)
    }

    pub fn density(&self, u: f64) -> f64 {
        if self.pi0 == 1.0 {
            return 1.0;
        }
        self.pi0 + (1.0 - self.pi0) * self.alternative.density(u)
    }

    /// p(t) = π₀t/G(t).
    pub fn pfdr(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::UndefinedInput(format!("pfdr needs t in (0,1], got {t}")));
        }
        Ok(self.pi0 * t / self.cdf(t))
    }

    /// ṗ(t) = π₀/G(t) · (1 − t·g(t)/G(t)).
    pub fn pfdr_deriv(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::UndefinedInput(format!("pfdr_deriv needs t in (0,1], got {t}")));
        }
        let g = self.cdf(t);
        Ok(self.pi0 / g * (1.0 - t * self.density(t) / g))
    }

    /// Plug-in bound π̄₀(λ) = (1 − G(λ))/(1 − λ).
    pub fn pi0_bar(&self, lambda: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::UndefinedInput(format!("pi0_bar needs lambda in [0,1), got {lambda}")));
        }
        if self.pi0 == 1.0 {
            return Ok(1.0);
        }
        if self.alternative.family == Family::DiracUniformLimit {
            return Ok(self.pi0);
        }
        Ok((1.0 - self.cdf(lambda)) / (1.0 - lambda))
    }

    /// α* = inf u/G(u) as u → 0, which is 1/g(0⁺) when G(0) = 0.
    ///
    /// For the Dirac-uniform limit G(0⁺) = 1 − π₀ > 0, so the infimum is 0
    /// whenever π₀ < 1.
    pub fn critical_alpha(&self) -> f64 {
        if self.pi0 == 1.0 {
            return 1.0;
        }
        match self.alternative.family {
            Family::GaussianLocation | Family::DiracUniformLimit => 0.0,
            Family::LaplaceLocation => {
                1.0 / (self.pi0 + (1.0 - self.pi0) * self.alternative.theta.exp())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gauss(pi0: f64, theta: f64) -> MixtureModel {
        MixtureModel::new(pi0, AlternativeModel::gaussian(theta).unwrap()).unwrap()
    }

    fn laplace(pi0: f64, theta: f64) -> MixtureModel {
        MixtureModel::new(pi0, AlternativeModel::laplace(theta).unwrap()).unwrap()
    }

    fn du(pi0: f64) -> MixtureModel {
        MixtureModel::new(pi0, AlternativeModel::dirac_uniform()).unwrap()
    }

    // mpmath values of G₁(t) for the one-sided shift tests.
    const GAUSS: &[(f64, f64, f64)] = &[
        (1.0, 1e-6, 8.721_761_014_038_920_003_7e-5),
        (1.0, 0.05, 0.259_511_022_841_444_070_65),
        (1.0, 0.9, 0.988_742_085_487_395_234_62),
        (2.0, 1e-6, 2.948_770_286_453_718_405_5e-3),
        (2.0, 0.001, 0.137_805_412_898_300_241_72),
        (2.0, 0.01, 0.372_080_585_435_494_316_44),
        (2.0, 0.05, 0.638_760_031_312_335_064_32),
        (2.0, 0.2, 0.876_645_249_790_940_761_19),
        (2.0, 0.5, 0.977_249_868_051_820_792_8),
        (3.0, 0.01, 0.749_733_747_466_796_948_76),
        (3.0, 0.9, 0.999_990_720_264_835_924_38),
    ];

    const LAPLACE: &[(f64, f64, f64)] = &[
        (1.0, 0.01, 0.027_182_818_284_590_452_354),
        (1.0, 0.2, 0.540_150_698_535_697_098_01),
        (1.0, 0.9, 0.963_212_055_882_855_767_84),
        (2.0, 0.01, 0.073_890_560_989_306_502_272),
        (2.0, 0.05, 0.369_452_804_946_532_511_36),
        (2.0, 0.2, 0.830_830_895_954_234_135_13),
        (2.0, 0.5, 0.932_332_358_381_693_654_05),
        (2.0, 0.9, 0.986_466_471_676_338_730_81),
    ];

    #[test]
    fn alt_cdf_golden_values() {
        for &(theta, t, want) in GAUSS {
            let got = AlternativeModel::gaussian(theta).unwrap().cdf(t);
            assert_relative_eq!(got, want, max_relative = 1e-13);
        }
        for &(theta, t, want) in LAPLACE {
            let got = AlternativeModel::laplace(theta).unwrap().cdf(t);
            assert_relative_eq!(got, want, max_relative = 1e-13);
        }
    }

    #[test]
    fn alt_cdf_endpoints() {
        for alt in [
            AlternativeModel::gaussian(2.0).unwrap(),
            AlternativeModel::laplace(2.0).unwrap(),
        ] {
            assert_eq!(alt.cdf(0.0), 0.0);
            assert_eq!(alt.cdf(1.0), 1.0);
        }
        assert_eq!(AlternativeModel::dirac_uniform().cdf(0.0), 1.0);
        assert_eq!(AlternativeModel::dirac_uniform().cdf(1.0), 1.0);
    }

    #[test]
    fn nonpositive_theta_is_rejected() {
        assert!(matches!(AlternativeModel::gaussian(0.0), Err(Error::InvalidModel(_))));
        assert!(matches!(AlternativeModel::laplace(-1.0), Err(Error::InvalidModel(_))));
        assert!(MixtureModel::new(1.5, AlternativeModel::dirac_uniform()).is_err());
    }

    #[test]
    fn laplace_density_near_zero() {
        let alt = AlternativeModel::laplace(2.0).unwrap();
        assert_relative_eq!(alt.density(1e-9), 2f64.exp(), max_relative = 1e-14);
        assert_eq!(alt.density_at_zero(), 2f64.exp());
        let h = 1e-6;
        let fd = (alt.cdf(2.0 * h) - alt.cdf(h)) / h;
        assert_relative_eq!(fd, 2f64.exp(), max_relative = 1e-8);
    }

    #[test]
    fn gaussian_density_diverges_at_zero() {
        let alt = AlternativeModel::gaussian(2.0).unwrap();
        let mut prev = 0.0;
        for k in 1..=12 {
            let g = alt.density(10f64.powi(-k));
            assert!(g > prev);
            prev = g;
        }
        assert!(prev > 1e3);
        assert_eq!(alt.density(0.0), f64::INFINITY);
    }

    #[test]
    fn density_matches_finite_difference() {
        let h = 1e-6;
        for alt in [
            AlternativeModel::gaussian(2.0).unwrap(),
            AlternativeModel::laplace(2.0).unwrap(),
        ] {
            let fd = (alt.cdf(0.3 + h) - alt.cdf(0.3 - h)) / (2.0 * h);
            assert!((fd - alt.density(0.3)).abs() < 1e-6);
        }
    }

    #[test]
    fn mixture_examples() {
        let m = gauss(1.0, 2.0);
        for u in [0.0, 0.1, 0.5, 1.0] {
            assert_eq!(m.cdf(u), u);
        }
        let d = du(0.3);
        assert_relative_eq!(d.cdf(0.4), 0.3 * 0.4 + 0.7);
        let fig = laplace(0.5, 2.0);
        assert_relative_eq!(fig.cdf(0.2), 0.5 * 0.2 + 0.5 * 0.830_830_895_954_234_1, max_relative = 1e-13);
    }

    #[test]
    fn pfdr_examples() {
        let null = gauss(1.0, 2.0);
        for t in [0.01, 0.5, 1.0] {
            assert_relative_eq!(null.pfdr(t).unwrap(), 1.0);
            assert_eq!(null.pfdr_deriv(t).unwrap(), 0.0);
        }
        let d = du(0.6);
        for t in [0.1, 0.5, 0.9] {
            assert_relative_eq!(d.pfdr(t).unwrap(), 0.6 * t / (0.6 * t + 0.4), max_relative = 1e-15);
            let want = 0.6 * 0.4 / (0.6 * t + 0.4f64).powi(2);
            assert_relative_eq!(d.pfdr_deriv(t).unwrap(), want, max_relative = 1e-14);
        }
        assert_relative_eq!(gauss(0.8, 2.0).pfdr(1.0).unwrap(), 0.8);
        assert!(matches!(null.pfdr(0.0), Err(Error::UndefinedInput(_))));
    }

    #[test]
    fn pfdr_deriv_matches_finite_difference() {
        let h = 1e-6;
        for m in [gauss(0.8, 2.0), laplace(0.5, 2.0), du(0.7)] {
            for t in [0.2, 0.5, 0.8] {
                let fd = (m.pfdr(t + h).unwrap() - m.pfdr(t - h).unwrap()) / (2.0 * h);
                assert!((fd - m.pfdr_deriv(t).unwrap()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pi0_bar_examples() {
        assert_eq!(gauss(1.0, 1.0).pi0_bar(0.4).unwrap(), 1.0);
        assert_eq!(gauss(0.7, 1.0).pi0_bar(0.0).unwrap(), 1.0);
        assert_eq!(laplace(0.7, 1.0).pi0_bar(0.0).unwrap(), 1.0);
        assert_relative_eq!(du(0.35).pi0_bar(0.6).unwrap(), 0.35);
        assert!(gauss(0.5, 1.0).pi0_bar(1.0).is_err());
    }

    #[test]
    fn critical_alpha_closed_forms() {
        assert_eq!(gauss(0.5, 2.0).critical_alpha(), 0.0);
        assert_relative_eq!(laplace(0.5, 2.0).critical_alpha(), 1.0 / (0.5 + 0.5 * 2f64.exp()));
        assert_eq!(laplace(1.0, 2.0).critical_alpha(), 1.0);
        assert_eq!(du(0.5).critical_alpha(), 0.0);
    }

    #[test]
    fn laplace_ratio_converges_to_critical_alpha() {
        let m = laplace(0.5, 2.0);
        for u in [1e-3, 1e-6, 1e-9] {
            assert!((u / m.cdf(u) - m.critical_alpha()).abs() < 1e-4);
        }
    }

    #[test]
    fn sampler_inverts_cdf() {
        for alt in [
            AlternativeModel::gaussian(2.0).unwrap(),
            AlternativeModel::laplace(2.0).unwrap(),
        ] {
            for k in 1..200 {
                let v = k as f64 / 200.0;
                assert!((alt.cdf(alt.sample(v)) - v).abs() < 1e-10);
            }
        }
        assert_eq!(AlternativeModel::dirac_uniform().sample(0.3), 0.0);
    }

    #[test]
    fn record_round_trip() {
        let m = laplace(0.5, 2.0);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"pi0":0.5,"family":"laplace-location","theta":2.0}"#);
        let back: MixtureModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"pi0":0.5,"family":"gaussian-location","theta":-1}"#;
        assert!(serde_json::from_str::<MixtureModel>(bad).is_err());
    }
}
