#![allow(dead_code)]

use fdx::{
    distributions::{CdfFamily, NullCdf, StepCdf},
    fisher::{FisherMargins, FisherSupport, FisherTable, Sided},
    transforms::{Alpha, ProcedureKind, ProcedureSpec},
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fisher p-value CDF for random small margins.
pub fn random_fisher_cdf(rng: &mut impl Rng) -> StepCdf {
    let n1 = rng.random_range(1..=12);
    let n2 = rng.random_range(1..=12);
    let s = rng.random_range(0..=n1 + n2);
    let sided = if rng.random_bool(0.5) { Sided::One } else { Sided::Two };
    FisherSupport::new(FisherMargins::new(n1, n2, s).unwrap(), sided)
        .cdf()
        .clone()
}

/// Random step CDF with `F(t) <= t` on its support and a final jump to 1.
pub fn random_superuniform_step(rng: &mut impl Rng) -> StepCdf {
    let k = rng.random_range(1..=6);
    let mut pts: Vec<f64> = (0..k).map(|_| rng.random_range(0.001..0.999)).collect();
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    let shrink: f64 = rng.random_range(0.2..=1.0);
    let mut cum: Vec<f64> = pts.iter().map(|p| p * shrink).collect();
    pts.push(1.0);
    cum.push(1.0);
    StepCdf::new(pts, cum).unwrap()
}

pub fn random_step_family(rng: &mut impl Rng, m: usize) -> CdfFamily {
    let cdfs = (0..m)
        .map(|_| {
            NullCdf::Step(if rng.random_bool(0.7) {
                random_fisher_cdf(rng)
            } else {
                random_superuniform_step(rng)
            })
        })
        .collect();
    CdfFamily::new(cdfs).unwrap()
}

/// Uniform, AM- and GM-weighted members with a shared mean weight.
pub fn random_continuous_family(rng: &mut impl Rng, m: usize) -> CdfFamily {
    let mean_weight = rng.random_range(0.5..2.0);
    let cdfs = (0..m)
        .map(|_| match rng.random_range(0..3) {
            0 => NullCdf::Uniform,
            1 => NullCdf::WeightedAm {
                weight: rng.random_range(0.1..3.0),
                mean_weight,
            },
            _ => NullCdf::WeightedGm {
                weight: if rng.random_bool(0.1) {
                    0.0
                } else {
                    rng.random_range(0.1..3.0)
                },
                mean_weight,
            },
        })
        .collect();
    CdfFamily::new(cdfs).unwrap()
}

/// p-values drawn from each member's support, biased towards small values
/// and with frequent ties.
pub fn pvalues_on_support(rng: &mut impl Rng, family: &CdfFamily) -> Vec<f64> {
    family
        .cdfs()
        .iter()
        .map(|cdf| match cdf {
            NullCdf::Step(s) => {
                let pts = s.support();
                let i = if rng.random_bool(0.5) {
                    0
                } else {
                    rng.random_range(0..pts.len())
                };
                pts[i]
            }
            _ => unreachable!("step family expected"),
        })
        .collect()
}

/// Continuous p-values with a share of strong signals and forced ties.
pub fn continuous_pvalues(rng: &mut impl Rng, m: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..m)
        .map(|_| {
            let u: f64 = rng.random();
            if rng.random_bool(0.4) {
                u * 1e-3
            } else {
                u
            }
        })
        .collect();
    for _ in 0..m / 5 {
        let (a, b) = (rng.random_range(0..m), rng.random_range(0..m));
        p[a] = p[b];
    }
    p
}

pub fn random_weights(rng: &mut impl Rng, m: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..m)
        .map(|_| {
            if rng.random_bool(0.1) {
                0.0
            } else {
                rng.random_range(0.05..4.0)
            }
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[0] = 1.0;
    }
    w
}

/// A random instance of `kind`: its spec and the p-values it runs on.
pub fn random_instance(rng: &mut impl Rng, kind: ProcedureKind, m: usize) -> (ProcedureSpec, Vec<f64>) {
    let alpha = Alpha::new(*[0.05, 0.1, 0.2, 0.3].choose(rng).unwrap()).unwrap();
    let zeta = *[0.05, 0.1, 0.25, 0.5, 0.8].choose(rng).unwrap();
    let spec = ProcedureSpec::new(kind, alpha, zeta).unwrap();
    if kind.weighting().is_some() {
        let spec = spec.with_weights(random_weights(rng, m));
        let raw = continuous_pvalues(rng, m);
        let p = spec.prepare_pvalues(&raw).unwrap();
        return (spec, p);
    }
    if !kind.needs_family() {
        return (spec, continuous_pvalues(rng, m));
    }
    if rng.random_bool(0.5) {
        let family = random_step_family(rng, m);
        let p = pvalues_on_support(rng, &family);
        (spec.with_family(family), p)
    } else {
        let family = random_continuous_family(rng, m);
        (spec.with_family(family), continuous_pvalues(rng, m))
    }
}

pub struct CountRow {
    pub id: String,
    pub table: FisherTable,
}

pub fn read_counts(text: &str) -> Vec<CountRow> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let n = |i: usize| f[i].trim().parse::<u64>().unwrap();
            CountRow {
                id: f[0].to_string(),
                table: FisherTable::from_counts(n(1), n(2), n(3), n(4)).unwrap(),
            }
        })
        .collect()
}

pub const SYNTHETIC_COUNTS: &str = include_str!("../data/synthetic_counts.csv");

/// Slow reference implementations that share no code with the library's
/// transforms: full sorts, complete distributions and linear scans.
pub mod naive {
    use super::*;

    fn ln_choose(n: usize, k: usize) -> f64 {
        (1..=k).map(|j| ((n - k + j) as f64 / j as f64).ln()).sum()
    }

    /// `P(Bin[n, t] >= k)` by summing every term.
    pub fn binom_tail(n: usize, k: usize, t: f64) -> f64 {
        if k == 0 {
            return 1.0;
        }
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        let terms: Vec<f64> = (k..=n)
            .map(|j| (ln_choose(n, j) + j as f64 * t.ln() + (n - j) as f64 * (-t).ln_1p()).exp())
            .collect();
        terms.iter().rev().sum::<f64>().min(1.0)
    }

    /// Full Poisson-binomial distribution, then the upper tail.
    pub fn pbin_tail(probs: &[f64], k: usize) -> f64 {
        let mut dist = vec![1.0];
        for &p in probs {
            let mut next = vec![0.0; dist.len() + 1];
            for (j, &d) in dist.iter().enumerate() {
                next[j] += d * (1.0 - p);
                next[j + 1] += d * p;
            }
            dist = next;
        }
        dist.iter().skip(k).sum::<f64>().min(1.0)
    }

    pub fn m_of(ell: usize, m: usize, alpha: f64) -> (usize, usize) {
        let k = (alpha * ell as f64 + 1e-9).floor() as usize + 1;
        (m - ell + k, k)
    }

    /// xi of the unweighted kinds from the member CDFs.
    pub fn xi(kind: ProcedureKind, cdfs: &[NullCdf], alpha: f64, ell: usize, t: f64) -> f64 {
        let m = cdfs.len();
        let (mm, k) = m_of(ell, m, alpha);
        let mut f: Vec<f64> = cdfs.iter().map(|c| c.eval(t)).collect();
        f.sort_by(|a, b| b.total_cmp(a));
        let top = &f[..mm];
        let geo = |v: &[f64]| -> f64 {
            if v.iter().any(|&x| x >= 1.0) {
                return 1.0;
            }
            let mean_log = v.iter().map(|x| (1.0 - x).ln()).sum::<f64>() / v.len() as f64;
            1.0 - mean_log.exp()
        };
        match kind {
            ProcedureKind::Lr => mm as f64 / k as f64 * t,
            ProcedureKind::Gr => binom_tail(mm, k, t),
            ProcedureKind::Hlr => top.iter().sum::<f64>() / k as f64,
            ProcedureKind::Pb => pbin_tail(top, k),
            ProcedureKind::Hgr => binom_tail(mm, k, geo(top)),
            ProcedureKind::HgrNonAdaptive => binom_tail(m, k, geo(&f)),
            _ => unimplemented!("weighted kinds are not needed by the oracle"),
        }
    }

    /// Explicit step-down with critical values found by scanning the pooled
    /// support; returns the rejection count and the critical values.
    pub fn stepdown_on_support(
        kind: ProcedureKind,
        cdfs: &[NullCdf],
        alpha: f64,
        zeta: f64,
        pvals: &[f64],
    ) -> (usize, Vec<f64>) {
        let mut support: Vec<f64> = cdfs
            .iter()
            .flat_map(|c| match c {
                NullCdf::Step(s) => s.support().to_vec(),
                _ => unreachable!(),
            })
            .collect();
        support.sort_by(|a, b| a.total_cmp(b));
        support.dedup();
        let m = cdfs.len();
        let mut tau = Vec::with_capacity(m);
        // the feasible sets grow with l, so each scan resumes where the last stopped
        let mut start = 0;
        for ell in 1..=m {
            let mut best = None;
            let mut i = start;
            while i < support.len() && xi(kind, cdfs, alpha, ell, support[i]) <= zeta {
                best = Some(i);
                i += 1;
            }
            match best {
                Some(b) => {
                    tau.push(support[b]);
                    start = b;
                }
                None => tau.push(0.0),
            }
        }
        let mut sorted = pvals.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let ell_hat = sorted.iter().zip(&tau).take_while(|(p, t)| p <= t).count();
        let rejected = if ell_hat == 0 {
            0
        } else {
            pvals.iter().filter(|&&p| p <= tau[ell_hat - 1]).count()
        };
        (rejected, tau)
    }
}
