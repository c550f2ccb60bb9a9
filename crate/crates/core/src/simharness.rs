//! Monte-Carlo engine for the two-sample adverse-event study and an
//! empirical FDX oracle.
//!
//! Every replicate draws from its own ChaCha20 stream (stream id = replicate
//! index), so serial and parallel runs produce identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Deserialize;

use crate::distributions::{stable_sum, CdfFamily, NullCdf};
use crate::error::{FdxError, Result};
use crate::fisher::{FisherMargins, FisherSupport, Sided};
use crate::stepdown::reject_early_exit;
use crate::transforms::{make_transform, Alpha, ProcedureKind, ProcedureSpec, TransformFamily};

fn default_n() -> u64 {
    25
}
fn default_p_null_low() -> f64 {
    0.01
}
fn default_p_null_high() -> f64 {
    0.10
}
fn default_p_alt_base() -> f64 {
    0.10
}
fn default_alpha() -> f64 {
    0.05
}
fn default_zeta() -> f64 {
    0.5
}

/// One scenario of the two-sample study.
///
/// The first `m1` positions are Bernoulli(`p_null_low`) in both groups, the
/// next `m2` Bernoulli(`p_null_high`) in both groups, and the last `m3` are
/// Bernoulli(`p_alt_base`) in group 1 against Bernoulli(`q3`) in group 2.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub m: usize,
    pub m1: usize,
    /// Defaults to `m - m1 - m3`.
    #[serde(default)]
    pub m2: Option<usize>,
    pub m3: usize,
    pub q3: f64,
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_p_null_low")]
    pub p_null_low: f64,
    #[serde(default = "default_p_null_high")]
    pub p_null_high: f64,
    #[serde(default = "default_p_alt_base")]
    pub p_alt_base: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    /// The standard defaults for the given design.
    pub fn study(m: usize, m3: usize, m1: usize, q3: f64, replicates: usize, seed: u64) -> Self {
        Self {
            m,
            m1,
            m2: None,
            m3,
            q3,
            n: default_n(),
            p_null_low: default_p_null_low(),
            p_null_high: default_p_null_high(),
            p_alt_base: default_p_alt_base(),
            alpha: default_alpha(),
            zeta: default_zeta(),
            replicates,
            seed,
        }
    }

    pub fn m2(&self) -> usize {
        self.m2
            .unwrap_or_else(|| self.m.saturating_sub(self.m1 + self.m3))
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(FdxError::Config("m must be positive".into()));
        }
        if self.m1 + self.m2() + self.m3 != self.m {
            return Err(FdxError::Config(format!(
                "m1 + m2 + m3 = {} differs from m = {}",
                self.m1 + self.m2() + self.m3,
                self.m
            )));
        }
        for (name, p) in [
            ("q3", self.q3),
            ("p_null_low", self.p_null_low),
            ("p_null_high", self.p_null_high),
            ("p_alt_base", self.p_alt_base),
        ] {
            if !(p > 0.0 && p < 1.0) {
                return Err(FdxError::Config(format!("{name} = {p} outside (0, 1)")));
            }
        }
        if self.n == 0 {
            return Err(FdxError::Config("n must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(FdxError::Config("replicates must be positive".into()));
        }
        Alpha::new(self.alpha)?;
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(FdxError::Config(format!("zeta = {} outside (0, 1)", self.zeta)));
        }
        Ok(())
    }

    /// True for positions where the null hypothesis is false.
    pub fn is_false_null(&self, i: usize) -> bool {
        i >= self.m - self.m3
    }
}

/// The 54-design sweep at `m` in {800, 2000}.
pub fn study_sweep(replicates: usize, seed: u64) -> Vec<SimConfig> {
    let mut configs = Vec::new();
    for m in [800, 2000] {
        for m3_frac in [0.1, 0.3, 0.8] {
            let m3 = (m as f64 * m3_frac).round() as usize;
            let m0 = m - m3;
            for m1_frac in [0.2, 0.5, 0.8] {
                let m1 = (m0 as f64 * m1_frac).round() as usize;
                for q3 in [0.15, 0.25, 0.4] {
                    configs.push(SimConfig::study(m, m3, m1, q3, replicates, seed));
                }
            }
        }
    }
    configs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimProcedure {
    /// Benjamini-Hochberg step-up at level alpha on the raw p-values.
    Bh,
    /// A step-down procedure; kinds taking a CDF family get the Fisher
    /// p-value CDFs of the replicate.
    Stepdown(ProcedureKind),
}

impl SimProcedure {
    pub fn label(&self) -> String {
        match self {
            SimProcedure::Bh => "bh".into(),
            SimProcedure::Stepdown(kind) => kind.name().into(),
        }
    }

    /// BH, LR, HLR, GR, PB and HGR.
    pub fn study_set() -> Vec<SimProcedure> {
        vec![
            SimProcedure::Bh,
            SimProcedure::Stepdown(ProcedureKind::Lr),
            SimProcedure::Stepdown(ProcedureKind::Hlr),
            SimProcedure::Stepdown(ProcedureKind::Gr),
            SimProcedure::Stepdown(ProcedureKind::Pb),
            SimProcedure::Stepdown(ProcedureKind::Hgr),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub fdp: f64,
    /// 0 when there are no false nulls.
    pub tdp: f64,
    pub rejections: usize,
}

impl TrialOutcome {
    pub fn from_rejections(rejected: &[usize], is_false_null: impl Fn(usize) -> bool, m_false: usize) -> Self {
        let true_rejections = rejected.iter().filter(|&&i| is_false_null(i)).count();
        let false_rejections = rejected.len() - true_rejections;
        Self {
            fdp: false_rejections as f64 / rejected.len().max(1) as f64,
            tdp: if m_false == 0 {
                0.0
            } else {
                true_rejections as f64 / m_false as f64
            },
            rejections: rejected.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcedureSummary {
    pub label: String,
    pub mean_tdp: f64,
    pub tdp_se: f64,
    /// Fraction of replicates with FDP > alpha.
    pub fdx: f64,
    pub fdx_se: f64,
    pub mean_rejections: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioSummary {
    pub config: SimConfig,
    pub procedures: Vec<ProcedureSummary>,
    /// `trials[r][j]`: replicate `r`, procedure `j`.
    pub trials: Vec<Vec<TrialOutcome>>,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = stable_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = stable_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, (ss / (n - 1.0) / n).sqrt())
}

fn summarize(label: String, outcomes: &[TrialOutcome], alpha: f64) -> ProcedureSummary {
    let tdp: Vec<f64> = outcomes.iter().map(|o| o.tdp).collect();
    let exceed: Vec<f64> = outcomes
        .iter()
        .map(|o| if o.fdp > alpha { 1.0 } else { 0.0 })
        .collect();
    let rejections: Vec<f64> = outcomes.iter().map(|o| o.rejections as f64).collect();
    let (mean_tdp, tdp_se) = mean_and_se(&tdp);
    let (fdx, _) = mean_and_se(&exceed);
    let n = outcomes.len() as f64;
    ProcedureSummary {
        label,
        mean_tdp,
        tdp_se,
        fdx,
        fdx_se: (fdx * (1.0 - fdx) / n).sqrt(),
        mean_rejections: stable_sum(rejections) / n,
    }
}

/// Benjamini-Hochberg step-up; returns rejected indices, ascending.
pub fn benjamini_hochberg(pvals: &[f64], alpha: f64) -> Vec<usize> {
    let m = pvals.len();
    let mut sorted: Vec<f64> = pvals.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let k = (1..=m)
        .rev()
        .find(|&k| sorted[k - 1] <= alpha * k as f64 / m as f64);
    match k {
        None => Vec::new(),
        Some(k) => {
            let cut = sorted[k - 1];
            (0..m).filter(|&i| pvals[i] <= cut).collect()
        }
    }
}

fn replicate_rng(seed: u64, replicate: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// Runs `config.replicates` replicates of the study for each procedure.
///
/// Weighted kinds are not part of this design and are rejected.
pub fn run_scenario(config: &SimConfig, procedures: &[SimProcedure]) -> Result<ScenarioSummary> {
    config.validate()?;
    let alpha = Alpha::new(config.alpha)?;
    for p in procedures {
        if let SimProcedure::Stepdown(kind) = p {
            if kind.weighting().is_some() {
                return Err(FdxError::Config(format!(
                    "procedure {kind} needs weights and is not part of the simulation design"
                )));
            }
        }
    }
    let n = config.n;
    // With both groups of size n only 2n + 1 margin classes exist.
    let supports: Vec<FisherSupport> = (0..=2 * n)
        .map(|s| FisherSupport::new(FisherMargins { n1: n, n2: n, s }, Sided::Two))
        .collect();
    let probs: Vec<(f64, f64)> = (0..config.m)
        .map(|i| {
            if i < config.m1 {
                (config.p_null_low, config.p_null_low)
            } else if config.is_false_null(i) {
                (config.p_alt_base, config.q3)
            } else {
                (config.p_null_high, config.p_null_high)
            }
        })
        .collect();
    let draws: Vec<(Binomial, Binomial)> = probs
        .iter()
        .map(|&(a, b)| {
            let g1 = Binomial::new(n, a).map_err(|e| FdxError::Config(e.to_string()))?;
            let g2 = Binomial::new(n, b).map_err(|e| FdxError::Config(e.to_string()))?;
            Ok((g1, g2))
        })
        .collect::<Result<_>>()?;
    // Linear and binomial transforms do not depend on the data.
    let fixed: Vec<Option<TransformFamily>> = procedures
        .iter()
        .map(|p| match p {
            SimProcedure::Stepdown(kind) if !kind.needs_family() => {
                make_transform(&ProcedureSpec::new(*kind, alpha, config.zeta)?, config.m).map(Some)
            }
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;

    let run_one = |r: usize| -> Result<Vec<TrialOutcome>> {
        let mut rng = replicate_rng(config.seed, r);
        let mut pvals = Vec::with_capacity(config.m);
        let mut cdfs = Vec::with_capacity(config.m);
        for (g1, g2) in &draws {
            let x1 = g1.sample(&mut rng);
            let x2 = g2.sample(&mut rng);
            let support = &supports[(x1 + x2) as usize];
            pvals.push(support.pvalue(x1));
            cdfs.push(NullCdf::Step(support.cdf().clone()));
        }
        let needs_family = procedures
            .iter()
            .any(|p| matches!(p, SimProcedure::Stepdown(k) if k.needs_family()));
        let family = if needs_family {
            Some(CdfFamily::new(cdfs)?)
        } else {
            None
        };
        procedures
            .iter()
            .zip(&fixed)
            .map(|(p, fixed)| {
                let rejected = match p {
                    SimProcedure::Bh => benjamini_hochberg(&pvals, config.alpha),
                    SimProcedure::Stepdown(kind) => {
                        let owned;
                        let xi = match fixed {
                            Some(xi) => xi,
                            None => {
                                let spec = ProcedureSpec::new(*kind, alpha, config.zeta)?
                                    .with_family(family.clone().expect("family built above"));
                                owned = make_transform(&spec, config.m)?;
                                &owned
                            }
                        };
                        reject_early_exit(&pvals, xi, config.zeta)?.rejected
                    }
                };
                Ok(TrialOutcome::from_rejections(
                    &rejected,
                    |i| config.is_false_null(i),
                    config.m3,
                ))
            })
            .collect()
    };
    let trials: Vec<Vec<TrialOutcome>> = (0..config.replicates)
        .into_par_iter()
        .map(run_one)
        .collect::<Result<_>>()?;
    let summaries = procedures
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let outcomes: Vec<TrialOutcome> = trials.iter().map(|t| t[j]).collect();
            summarize(p.label(), &outcomes, config.alpha)
        })
        .collect();
    Ok(ScenarioSummary {
        config: config.clone(),
        procedures: summaries,
        trials,
    })
}

/// Null models with known marginal p-value distributions.
#[derive(Debug, Clone)]
pub enum NullGenerator {
    /// The first `m - m_false` p-values are uniform; the rest are
    /// `alt_scale * U` with `U` uniform.
    Uniform {
        m: usize,
        m_false: usize,
        alt_scale: f64,
    },
    /// Fisher tests with fixed margins. Null counts follow the conditional
    /// hypergeometric law; false nulls take the smallest attainable p-value.
    Fisher {
        margins: Vec<FisherMargins>,
        sided: Sided,
        m_false: usize,
    },
    /// Raw p-values as in `Uniform`, passed through the spec's weighting.
    Weighted {
        weights: Vec<f64>,
        m_false: usize,
        alt_scale: f64,
    },
}

impl NullGenerator {
    pub fn m(&self) -> usize {
        match self {
            NullGenerator::Uniform { m, .. } => *m,
            NullGenerator::Fisher { margins, .. } => margins.len(),
            NullGenerator::Weighted { weights, .. } => weights.len(),
        }
    }

    pub fn m_false(&self) -> usize {
        match self {
            NullGenerator::Uniform { m_false, .. }
            | NullGenerator::Fisher { m_false, .. }
            | NullGenerator::Weighted { m_false, .. } => *m_false,
        }
    }

    pub fn is_false_null(&self, i: usize) -> bool {
        i >= self.m() - self.m_false()
    }

    /// Null CDFs of the generated p-values where the generator fixes them.
    pub fn family(&self) -> Result<Option<CdfFamily>> {
        match self {
            NullGenerator::Uniform { m, .. } => CdfFamily::uniform(*m).map(Some),
            NullGenerator::Fisher { margins, sided, .. } => CdfFamily::new(
                margins
                    .iter()
                    .map(|&mg| NullCdf::Step(FisherSupport::new(mg, *sided).cdf().clone()))
                    .collect(),
            )
            .map(Some),
            NullGenerator::Weighted { .. } => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdxEstimate {
    pub estimate: f64,
    /// Binomial standard error of `estimate`.
    pub se: f64,
    pub replicates: usize,
}

/// Empirical `P(FDP > alpha)` of `spec` under `generator`.
pub fn mc_fdx_oracle(
    generator: &NullGenerator,
    spec: &ProcedureSpec,
    replicates: usize,
    seed: u64,
) -> Result<FdxEstimate> {
    if replicates == 0 {
        return Err(FdxError::Config("replicates must be positive".into()));
    }
    let m = generator.m();
    if generator.m_false() > m {
        return Err(FdxError::Config("more false nulls than hypotheses".into()));
    }
    let xi = make_transform(spec, m)?;
    let fisher: Vec<FisherSupport> = match generator {
        NullGenerator::Fisher { margins, sided, .. } => {
            margins.iter().map(|&mg| FisherSupport::new(mg, *sided)).collect()
        }
        _ => Vec::new(),
    };
    let alpha = spec.alpha.value();
    let exceed: Vec<bool> = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<bool> {
            let mut rng = replicate_rng(seed, r);
            let raw: Vec<f64> = match generator {
                NullGenerator::Uniform { alt_scale, .. } | NullGenerator::Weighted { alt_scale, .. } => (0..m)
                    .map(|i| {
                        let u: f64 = rng.random();
                        if generator.is_false_null(i) {
                            alt_scale * u
                        } else {
                            u
                        }
                    })
                    .collect(),
                NullGenerator::Fisher { .. } => fisher
                    .iter()
                    .enumerate()
                    .map(|(i, fs)| {
                        let u: f64 = rng.random();
                        if generator.is_false_null(i) {
                            fs.pvalues().iter().copied().fold(1.0, f64::min)
                        } else {
                            fs.pvalues()[sample_index(fs.pmf(), u)]
                        }
                    })
                    .collect(),
            };
            let pvals = spec.prepare_pvalues(&raw)?;
            let rejected = reject_early_exit(&pvals, &xi, spec.zeta)?.rejected;
            let outcome =
                TrialOutcome::from_rejections(&rejected, |i| generator.is_false_null(i), generator.m_false());
            Ok(outcome.fdp > alpha)
        })
        .collect::<Result<_>>()?;
    let hits = exceed.iter().filter(|&&e| e).count();
    let estimate = hits as f64 / replicates as f64;
    Ok(FdxEstimate {
        estimate,
        se: (estimate * (1.0 - estimate) / replicates as f64).sqrt(),
        replicates,
    })
}

// inverse-CDF draw from a probability vector
fn sample_index(pmf: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &d) in pmf.iter().enumerate() {
        acc += d;
        if u < acc {
            return i;
        }
    }
    pmf.len() - 1
}
