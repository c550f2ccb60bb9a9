//! Transformation function families `xi_l(t)`.
//!
//! Every procedure is identified by a family of maps that are non-decreasing
//! in `t` and non-increasing in the step index `l`. Critical values are the
//! `zeta`-level inverses of these maps, and the adjusted p-values are their
//! running maxima along the sorted p-values.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::distributions::{
    binom_upper, geometric_complement, pbin_upper, CdfFamily, Domain,
};
use crate::error::{FdxError, Result};
use crate::weighting::{self, WeightProfile};

/// Added before flooring `alpha * l` so that products such as `0.05 * 20`
/// land on the intended integer.
pub const FLOOR_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProcedureKind {
    Lr,
    Gr,
    Hlr,
    Hgr,
    HgrNonAdaptive,
    Pb,
    WlrAm,
    WlrGm,
    WpbAm,
    WpbGm,
    WgrAm,
    WgrGm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Am,
    Gm,
}

impl ProcedureKind {
    pub const ALL: [ProcedureKind; 12] = [
        ProcedureKind::Lr,
        ProcedureKind::Gr,
        ProcedureKind::Hlr,
        ProcedureKind::Hgr,
        ProcedureKind::HgrNonAdaptive,
        ProcedureKind::Pb,
        ProcedureKind::WlrAm,
        ProcedureKind::WlrGm,
        ProcedureKind::WpbAm,
        ProcedureKind::WpbGm,
        ProcedureKind::WgrAm,
        ProcedureKind::WgrGm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProcedureKind::Lr => "lr",
            ProcedureKind::Gr => "gr",
            ProcedureKind::Hlr => "hlr",
            ProcedureKind::Hgr => "hgr",
            ProcedureKind::HgrNonAdaptive => "hgr-na",
            ProcedureKind::Pb => "pb",
            ProcedureKind::WlrAm => "wlr-am",
            ProcedureKind::WlrGm => "wlr-gm",
            ProcedureKind::WpbAm => "wpb-am",
            ProcedureKind::WpbGm => "wpb-gm",
            ProcedureKind::WgrAm => "wgr-am",
            ProcedureKind::WgrGm => "wgr-gm",
        }
    }

    pub fn needs_family(self) -> bool {
        matches!(
            self,
            ProcedureKind::Hlr | ProcedureKind::Hgr | ProcedureKind::HgrNonAdaptive | ProcedureKind::Pb
        )
    }

    pub fn weighting(self) -> Option<Weighting> {
        match self {
            ProcedureKind::WlrAm | ProcedureKind::WpbAm | ProcedureKind::WgrAm => Some(Weighting::Am),
            ProcedureKind::WlrGm | ProcedureKind::WpbGm | ProcedureKind::WgrGm => Some(Weighting::Gm),
            _ => None,
        }
    }
}

impl fmt::Display for ProcedureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProcedureKind {
    type Err = FdxError;

    fn from_str(s: &str) -> Result<Self> {
        ProcedureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| FdxError::Config(format!("unknown procedure '{s}'")))
    }
}

/// FDP exceedance threshold, optionally carried as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alpha {
    value: f64,
    exact: Option<(u64, u64)>,
}

impl Alpha {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value < 1.0) {
            return Err(FdxError::Domain(format!("alpha = {value} outside (0, 1)")));
        }
        Ok(Self { value, exact: None })
    }

    pub fn ratio(numerator: u64, denominator: u64) -> Result<Self> {
        if numerator == 0 || numerator >= denominator {
            return Err(FdxError::Domain(format!(
                "alpha = {numerator}/{denominator} outside (0, 1)"
            )));
        }
        Ok(Self {
            value: numerator as f64 / denominator as f64,
            exact: Some((numerator, denominator)),
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// `floor(alpha * ell)`.
    pub fn floor_mul(&self, ell: usize) -> usize {
        match self.exact {
            Some((num, den)) => ((ell as u128 * num as u128) / den as u128) as usize,
            None => (self.value * ell as f64 + FLOOR_GUARD).floor() as usize,
        }
    }
}

/// `m - ell + floor(alpha * ell) + 1`.
pub fn m_of_ell(ell: usize, m: usize, alpha: Alpha) -> Result<usize> {
    if ell == 0 || ell > m {
        return Err(FdxError::Domain(format!("ell = {ell} must lie in [1, {m}]")));
    }
    Ok(m - ell + alpha.floor_mul(ell) + 1)
}

/// Everything needed to instantiate one procedure.
#[derive(Debug, Clone)]
pub struct ProcedureSpec {
    pub kind: ProcedureKind,
    pub alpha: Alpha,
    pub zeta: f64,
    pub weights: Option<Vec<f64>>,
    pub family: Option<CdfFamily>,
}

impl ProcedureSpec {
    pub fn new(kind: ProcedureKind, alpha: Alpha, zeta: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta < 1.0) {
            return Err(FdxError::Domain(format!("zeta = {zeta} outside (0, 1)")));
        }
        Ok(Self {
            kind,
            alpha,
            zeta,
            weights: None,
            family: None,
        })
    }

    pub fn with_family(mut self, family: CdfFamily) -> Self {
        self.family = Some(family);
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    /// The p-values the step-down runs on: weighted p-values for weighted
    /// kinds, the raw ones otherwise.
    pub fn prepare_pvalues(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if let Some(p) = raw.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(FdxError::Domain(format!("p-value {p} outside [0, 1]")));
        }
        match self.kind.weighting() {
            None => Ok(raw.to_vec()),
            Some(scheme) => {
                let profile = self.weight_profile()?;
                if profile.len() != raw.len() {
                    return Err(FdxError::Dimension {
                        expected: profile.len(),
                        got: raw.len(),
                    });
                }
                Ok(match scheme {
                    Weighting::Am => weighting::weighted_pvalues_am(raw, &profile),
                    Weighting::Gm => weighting::weighted_pvalues_gm(raw, &profile),
                })
            }
        }
    }

    fn weight_profile(&self) -> Result<WeightProfile> {
        let weights = self.weights.as_ref().ok_or_else(|| {
            FdxError::Config(format!("procedure {} requires weights", self.kind))
        })?;
        WeightProfile::new(weights.clone())
    }
}

#[derive(Debug, Clone)]
enum Rule {
    Linear,
    Binomial,
    TopSum(Arc<CdfFamily>),
    PoissonBinomial(Arc<CdfFamily>),
    GeometricBinomial(Arc<CdfFamily>),
    GeometricBinomialAll(Arc<CdfFamily>),
    // w_bar_{m(l)} / w_bar per step
    WeightedLinear(Vec<f64>),
}

/// The maps `xi_1, ..., xi_m` of one procedure.
#[derive(Debug, Clone)]
pub struct TransformFamily {
    kind: ProcedureKind,
    m: usize,
    alpha: Alpha,
    rule: Rule,
    domain: Domain,
}

/// Builds the transformation family of `spec` for `m` hypotheses.
pub fn make_transform(spec: &ProcedureSpec, m: usize) -> Result<TransformFamily> {
    if m == 0 {
        return Err(FdxError::Config("need at least one hypothesis".into()));
    }
    let family = |spec: &ProcedureSpec| -> Result<Arc<CdfFamily>> {
        let fam = spec.family.as_ref().ok_or_else(|| {
            FdxError::Config(format!("procedure {} requires a CDF family", spec.kind))
        })?;
        if fam.len() != m {
            return Err(FdxError::Dimension {
                expected: m,
                got: fam.len(),
            });
        }
        Ok(Arc::new(fam.clone()))
    };
    let weighted_family = |spec: &ProcedureSpec, scheme: Weighting| -> Result<(WeightProfile, Arc<CdfFamily>)> {
        let profile = spec.weight_profile()?;
        if profile.len() != m {
            return Err(FdxError::Dimension {
                expected: m,
                got: profile.len(),
            });
        }
        let fam = match scheme {
            Weighting::Am => weighting::am_family(&profile)?,
            Weighting::Gm => weighting::gm_family(&profile)?,
        };
        Ok((profile, Arc::new(fam)))
    };

    use ProcedureKind as K;
    let rule = match spec.kind {
        K::Lr => Rule::Linear,
        K::Gr => Rule::Binomial,
        K::Hlr => Rule::TopSum(family(spec)?),
        K::Pb => Rule::PoissonBinomial(family(spec)?),
        K::Hgr => Rule::GeometricBinomial(family(spec)?),
        K::HgrNonAdaptive => Rule::GeometricBinomialAll(family(spec)?),
        K::WlrAm => {
            let (profile, _) = weighted_family(spec, Weighting::Am)?;
            let ratios = (1..=m)
                .map(|ell| {
                    let j = m - ell + spec.alpha.floor_mul(ell) + 1;
                    profile.prefix_avg()[j - 1] / profile.mean()
                })
                .collect();
            Rule::WeightedLinear(ratios)
        }
        K::WlrGm => Rule::TopSum(weighted_family(spec, Weighting::Gm)?.1),
        K::WpbAm => Rule::PoissonBinomial(weighted_family(spec, Weighting::Am)?.1),
        K::WpbGm => Rule::PoissonBinomial(weighted_family(spec, Weighting::Gm)?.1),
        K::WgrAm => Rule::GeometricBinomial(weighted_family(spec, Weighting::Am)?.1),
        K::WgrGm => Rule::GeometricBinomial(weighted_family(spec, Weighting::Gm)?.1),
    };
    let domain = match &rule {
        Rule::TopSum(f)
        | Rule::PoissonBinomial(f)
        | Rule::GeometricBinomial(f)
        | Rule::GeometricBinomialAll(f) => f.domain().clone(),
        Rule::Linear | Rule::Binomial | Rule::WeightedLinear(_) => Domain::Continuum,
    };
    Ok(TransformFamily {
        kind: spec.kind,
        m,
        alpha: spec.alpha,
        rule,
        domain,
    })
}

impl TransformFamily {
    pub fn kind(&self) -> ProcedureKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// `floor(alpha * ell) + 1`, the number of false rejections that makes
    /// the FDP of `ell` rejections exceed alpha.
    pub fn threshold(&self, ell: usize) -> usize {
        self.alpha.floor_mul(ell) + 1
    }

    pub fn m_of(&self, ell: usize) -> usize {
        self.m - ell + self.threshold(ell)
    }

    /// `xi_ell(t)` for `1 <= ell <= m` and `t` in `[0, 1]`.
    pub fn eval(&self, ell: usize, t: f64) -> f64 {
        self.evaluator().eval(ell, t)
    }

    /// An evaluator that reuses its scratch buffer across calls.
    pub fn evaluator(&self) -> XiEvaluator<'_> {
        XiEvaluator {
            xi: self,
            buf: Vec::with_capacity(self.m),
        }
    }
}

pub struct XiEvaluator<'a> {
    xi: &'a TransformFamily,
    buf: Vec<f64>,
}

impl XiEvaluator<'_> {
    pub fn eval(&mut self, ell: usize, t: f64) -> f64 {
        let xi = self.xi;
        assert!(ell >= 1 && ell <= xi.m, "step index {ell} outside [1, {}]", xi.m);
        let k = xi.threshold(ell);
        let m_ell = xi.m - ell + k;
        match &xi.rule {
            Rule::Linear => m_ell as f64 / k as f64 * t,
            Rule::Binomial => binom_upper(m_ell as u64, k as u64, t),
            Rule::WeightedLinear(ratios) => m_ell as f64 / k as f64 * ratios[ell - 1] * t,
            Rule::TopSum(fam) => {
                fam.largest_values(t, m_ell, &mut self.buf);
                self.buf.iter().sum::<f64>() / k as f64
            }
            Rule::PoissonBinomial(fam) => {
                fam.largest_values(t, m_ell, &mut self.buf);
                pbin_upper(&self.buf, k)
            }
            Rule::GeometricBinomial(fam) => {
                fam.largest_values(t, m_ell, &mut self.buf);
                binom_upper(m_ell as u64, k as u64, geometric_complement(&self.buf))
            }
            Rule::GeometricBinomialAll(fam) => {
                fam.values_at(t, &mut self.buf);
                binom_upper(xi.m as u64, k as u64, geometric_complement(&self.buf))
            }
        }
    }
}

/// True when `a`'s maps never exceed `b`'s by more than `slack` on `grid`.
pub fn xi_pointwise_dominates(
    a: &TransformFamily,
    b: &TransformFamily,
    grid: &[f64],
    slack: f64,
) -> Result<bool> {
    if a.m() != b.m() {
        return Err(FdxError::Dimension {
            expected: a.m(),
            got: b.m(),
        });
    }
    let (mut ea, mut eb) = (a.evaluator(), b.evaluator());
    for ell in 1..=a.m() {
        for &t in grid {
            if ea.eval(ell, t) > eb.eval(ell, t) + slack {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
