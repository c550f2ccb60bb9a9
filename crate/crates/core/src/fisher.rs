//! Fisher's exact test for 2x2 tables conditioned on both margins.
//!
//! Besides p-values this builds the exact null distribution of the p-value
//! itself: a step CDF over the attainable p-values of the table's margins.

use std::sync::{OnceLock, RwLock};

use crate::distributions::{NullCdf, StepCdf};
use crate::error::{FdxError, Result};

/// Tables whose probability is within this relative distance of the
/// observed one count as "no more likely" in the two-sided p-value.
pub const TWO_SIDED_REL_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sided {
    /// Upper tail in the group-1 success count.
    One,
    /// Minimum-likelihood two-sided p-value.
    Two,
}

/// Margins of a 2x2 table: group sizes and the total number of successes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FisherMargins {
    pub n1: u64,
    pub n2: u64,
    pub s: u64,
}

impl FisherMargins {
    pub fn new(n1: u64, n2: u64, s: u64) -> Result<Self> {
        if s > n1 + n2 {
            return Err(FdxError::Domain(format!(
                "total successes {s} exceed the {} subjects",
                n1 + n2
            )));
        }
        Ok(Self { n1, n2, s })
    }

    /// Inclusive range of attainable group-1 success counts.
    pub fn support(&self) -> (u64, u64) {
        (self.s.saturating_sub(self.n2), self.n1.min(self.s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FisherTable {
    pub margins: FisherMargins,
    pub x: u64,
}

impl FisherTable {
    pub fn new(margins: FisherMargins, x: u64) -> Result<Self> {
        let (lo, hi) = margins.support();
        if x < lo || x > hi {
            return Err(FdxError::Domain(format!(
                "x = {x} outside the support [{lo}, {hi}]"
            )));
        }
        Ok(Self { margins, x })
    }

    /// Table with `x1` successes out of `n1` in group 1 and `x2` out of `n2`
    /// in group 2.
    pub fn from_counts(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<Self> {
        if x1 > n1 || x2 > n2 {
            return Err(FdxError::Domain(format!(
                "counts ({x1}/{n1}, {x2}/{n2}) exceed their group sizes"
            )));
        }
        Self::new(FisherMargins::new(n1, n2, x1 + x2)?, x1)
    }
}

fn log_factorials() -> &'static RwLock<Vec<f64>> {
    static TABLE: OnceLock<RwLock<Vec<f64>>> = OnceLock::new();
    TABLE.get_or_init(|| RwLock::new(vec![0.0]))
}

/// `ln(k!)` for every `k <= n`, extending the shared table when needed.
fn with_log_factorials<T>(n: u64, f: impl FnOnce(&[f64]) -> T) -> T {
    let n = n as usize;
    {
        let table = log_factorials().read().expect("log-factorial table poisoned");
        if table.len() > n {
            return f(&table);
        }
    }
    let mut table = log_factorials().write().expect("log-factorial table poisoned");
    while table.len() <= n {
        let k = table.len();
        let next = table[k - 1] + (k as f64).ln();
        table.push(next);
    }
    f(&table)
}

/// Conditional null law of the group-1 success count.
pub fn hypergeom_pmf(margins: FisherMargins) -> Vec<(u64, f64)> {
    let (lo, _) = margins.support();
    pmf_values(margins)
        .into_iter()
        .enumerate()
        .map(|(i, d)| (lo + i as u64, d))
        .collect()
}

fn pmf_values(margins: FisherMargins) -> Vec<f64> {
    let FisherMargins { n1, n2, s } = margins;
    let (lo, hi) = margins.support();
    let logs: Vec<f64> = with_log_factorials(n1 + n2, |lf| {
        let ln_choose = |n: u64, k: u64| lf[n as usize] - lf[k as usize] - lf[(n - k) as usize];
        (lo..=hi)
            .map(|x| ln_choose(n1, x) + ln_choose(n2, s - x))
            .collect()
    });
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|d| d / total).collect()
}

/// Everything Fisher's test needs for one set of margins.
#[derive(Debug, Clone)]
pub struct FisherSupport {
    margins: FisherMargins,
    sided: Sided,
    pmf: Vec<f64>,
    pvalues: Vec<f64>,
    cdf: StepCdf,
}

impl FisherSupport {
    pub fn new(margins: FisherMargins, sided: Sided) -> Self {
        let pmf = pmf_values(margins);
        let n = pmf.len();
        // Outcomes ranked so that every p-value, and every value of the
        // p-value CDF, is a prefix sum of pmf along this ranking.
        let rank: Vec<usize> = match sided {
            Sided::One => (0..n).rev().collect(),
            Sided::Two => {
                let mut r: Vec<usize> = (0..n).collect();
                r.sort_by(|&a, &b| pmf[a].total_cmp(&pmf[b]).then(a.cmp(&b)));
                r
            }
        };
        let mut prefix = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &i in &rank {
            acc += pmf[i];
            prefix.push(acc);
        }
        // last rank counted in each outcome's p-value
        let reach: Vec<usize> = match sided {
            Sided::One => (0..n).collect(),
            Sided::Two => {
                let mut reach = Vec::with_capacity(n);
                let mut j = 0;
                for r in 0..n {
                    let bound = pmf[rank[r]] * (1.0 + TWO_SIDED_REL_TOL);
                    j = j.max(r);
                    while j + 1 < n && pmf[rank[j + 1]] <= bound {
                        j += 1;
                    }
                    reach.push(j);
                }
                reach
            }
        };
        let mut pvalues = vec![0.0; n];
        for r in 0..n {
            pvalues[rank[r]] = prefix[reach[r]].min(1.0);
        }
        // p-values are non-decreasing along the ranking
        let mut support: Vec<f64> = Vec::new();
        let mut cum: Vec<f64> = Vec::new();
        for r in 0..n {
            let v = pvalues[rank[r]];
            let mass = prefix[r].min(1.0);
            if support.last() == Some(&v) {
                *cum.last_mut().unwrap() = mass;
            } else {
                support.push(v);
                cum.push(mass);
            }
        }
        let cdf = StepCdf::new(support, cum).expect("Fisher p-value CDF is a valid step function");
        Self {
            margins,
            sided,
            pmf,
            pvalues,
            cdf,
        }
    }

    pub fn margins(&self) -> FisherMargins {
        self.margins
    }

    pub fn sided(&self) -> Sided {
        self.sided
    }

    /// Probabilities of `x = lo, lo + 1, ..., hi`.
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn pvalue(&self, x: u64) -> f64 {
        let (lo, _) = self.margins.support();
        self.pvalues[(x - lo) as usize]
    }

    /// p-values of `x = lo, ..., hi`.
    pub fn pvalues(&self) -> &[f64] {
        &self.pvalues
    }

    pub fn cdf(&self) -> &StepCdf {
        &self.cdf
    }
}

pub fn fisher_pvalue(table: FisherTable, sided: Sided) -> f64 {
    FisherSupport::new(table.margins, sided).pvalue(table.x)
}

/// Step CDF of the p-value under the conditional null.
pub fn fisher_support_cdf(margins: FisherMargins, sided: Sided) -> NullCdf {
    NullCdf::Step(FisherSupport::new(margins, sided).cdf)
}
