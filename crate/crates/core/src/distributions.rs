//! Probability kernels shared by every procedure: null CDFs, binomial and
//! Poisson-binomial upper tails, and the averaged-complement statistics used
//! by the heterogeneous transforms.

use std::cmp::Ordering;

use crate::error::{FdxError, Result};

/// Absolute tolerance on `t` when inverting a continuous non-decreasing map.
pub const BISECTION_TOL: f64 = 1e-12;

/// Step CDF with finitely many jumps.
///
/// `cum[i]` is the value of the CDF on `[support[i], support[i + 1])`; the
/// function is zero strictly below `support[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCdf {
    support: Vec<f64>,
    cum: Vec<f64>,
}

impl StepCdf {
    pub fn new(support: Vec<f64>, cum: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(FdxError::InvalidStep("empty support".into()));
        }
        if support.len() != cum.len() {
            return Err(FdxError::InvalidStep(format!(
                "support has {} points but cum has {}",
                support.len(),
                cum.len()
            )));
        }
        if support.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(FdxError::InvalidStep("support point outside [0, 1]".into()));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FdxError::InvalidStep("support not strictly ascending".into()));
        }
        if cum.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(FdxError::InvalidStep("cumulative value outside [0, 1]".into()));
        }
        if cum.windows(2).any(|w| w[0] > w[1]) {
            return Err(FdxError::InvalidStep("cumulative values decrease".into()));
        }
        Ok(Self { support, cum })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn cum(&self) -> &[f64] {
        &self.cum
    }

    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.support.partition_point(|&s| s <= t);
        if idx == 0 {
            0.0
        } else {
            self.cum[idx - 1]
        }
    }
}

/// Null distribution function of a single p-value.
#[derive(Debug, Clone, PartialEq)]
pub enum NullCdf {
    Uniform,
    /// `min(weight * t / mean_weight, 1)`.
    WeightedAm { weight: f64, mean_weight: f64 },
    /// `1 - (1 - t)^(weight / mean_weight)`.
    WeightedGm { weight: f64, mean_weight: f64 },
    Step(StepCdf),
}

impl NullCdf {
    /// Evaluates the CDF at `t`, which the caller guarantees lies in `[0, 1]`.
    ///
    /// A zero weight puts all null mass of the weighted p-value at 1, so both
    /// weighted variants are 0 below 1 and jump to 1 at `t = 1`.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            NullCdf::Uniform => t,
            NullCdf::WeightedAm {
                weight,
                mean_weight,
            } => {
                if *weight == 0.0 {
                    return if t >= 1.0 { 1.0 } else { 0.0 };
                }
                (weight * t / mean_weight).min(1.0)
            }
            NullCdf::WeightedGm {
                weight,
                mean_weight,
            } => {
                if t >= 1.0 {
                    return 1.0;
                }
                if *weight == 0.0 {
                    return 0.0;
                }
                -((weight / mean_weight) * (-t).ln_1p()).exp_m1()
            }
            NullCdf::Step(step) => step.eval(t),
        }
    }

    pub fn is_step(&self) -> bool {
        matches!(self, NullCdf::Step(_))
    }
}

/// Checked evaluation of a null CDF.
pub fn cdf_eval(cdf: &NullCdf, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(FdxError::Domain(format!("t = {t} outside [0, 1]")));
    }
    Ok(cdf.eval(t))
}

/// Where the critical values of a procedure may live.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Continuum,
    /// Sorted, deduplicated union of the jump points of every member CDF.
    Support(Vec<f64>),
}

impl Domain {
    pub fn is_continuum(&self) -> bool {
        matches!(self, Domain::Continuum)
    }

    /// True when `t` could have been produced under the null model.
    pub fn contains(&self, t: f64) -> bool {
        match self {
            Domain::Continuum => (0.0..=1.0).contains(&t),
            Domain::Support(points) => points.binary_search_by(|p| p.total_cmp(&t)).is_ok(),
        }
    }
}

/// The `m` null CDFs of a testing problem.
#[derive(Debug, Clone)]
pub struct CdfFamily {
    cdfs: Vec<NullCdf>,
    domain: Domain,
    // Member indices ordered by decreasing CDF value, valid for every t.
    fixed_order: Option<Vec<usize>>,
}

impl CdfFamily {
    /// Builds a family. Members must be all step functions or all continuous.
    pub fn new(cdfs: Vec<NullCdf>) -> Result<Self> {
        if cdfs.is_empty() {
            return Err(FdxError::Config("a CDF family needs at least one member".into()));
        }
        let steps = cdfs.iter().filter(|c| c.is_step()).count();
        let domain = if steps == 0 {
            Domain::Continuum
        } else if steps == cdfs.len() {
            let mut points: Vec<f64> = cdfs
                .iter()
                .flat_map(|c| match c {
                    NullCdf::Step(s) => s.support().to_vec(),
                    _ => unreachable!(),
                })
                .collect();
            points.sort_by(f64::total_cmp);
            points.dedup();
            Domain::Support(points)
        } else {
            return Err(FdxError::Config(
                "cannot mix step and continuous CDFs in one family".into(),
            ));
        };
        let fixed_order = weight_order(&cdfs);
        Ok(Self {
            cdfs,
            domain,
            fixed_order,
        })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        Self::new(vec![NullCdf::Uniform; m])
    }

    pub fn len(&self) -> usize {
        self.cdfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdfs.is_empty()
    }

    pub fn cdfs(&self) -> &[NullCdf] {
        &self.cdfs
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn pooled_support(&self) -> Option<&[f64]> {
        match &self.domain {
            Domain::Support(points) => Some(points),
            Domain::Continuum => None,
        }
    }

    /// Fills `buf` with `F_i(t)` for every member.
    pub fn values_at(&self, t: f64, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.cdfs.iter().map(|c| c.eval(t)));
    }

    /// Fills `buf` with the multiset of the `j` largest values of `F_i(t)`,
    /// in no particular order.
    pub(crate) fn largest_values(&self, t: f64, j: usize, buf: &mut Vec<f64>) {
        let j = j.min(self.cdfs.len());
        buf.clear();
        match &self.fixed_order {
            Some(order) => buf.extend(order[..j].iter().map(|&i| self.cdfs[i].eval(t))),
            None => {
                buf.extend(self.cdfs.iter().map(|c| c.eval(t)));
                if j > 0 && j < buf.len() {
                    buf.select_nth_unstable_by(j - 1, desc);
                }
                buf.truncate(j);
            }
        }
    }
}

fn desc(a: &f64, b: &f64) -> Ordering {
    b.total_cmp(a)
}

// Weighted families with a common mean weight are ordered by weight at every t.
fn weight_order(cdfs: &[NullCdf]) -> Option<Vec<usize>> {
    let key = |c: &NullCdf| match c {
        NullCdf::Uniform => Some((0u8, 1.0, 1.0)),
        NullCdf::WeightedAm {
            weight,
            mean_weight,
        } => Some((1, *weight, *mean_weight)),
        NullCdf::WeightedGm {
            weight,
            mean_weight,
        } => Some((2, *weight, *mean_weight)),
        NullCdf::Step(_) => None,
    };
    let (tag0, _, mean0) = key(&cdfs[0])?;
    let mut weights = Vec::with_capacity(cdfs.len());
    for c in cdfs {
        let (tag, w, mean) = key(c)?;
        if tag != tag0 || mean != mean0 {
            return None;
        }
        weights.push(w);
    }
    let mut order: Vec<usize> = (0..cdfs.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
    Some(order)
}

/// Sum of the `j` largest entries.
pub fn top_sum(values: &[f64], j: usize) -> Result<f64> {
    if j == 0 || j > values.len() {
        return Err(FdxError::Domain(format!(
            "j = {j} must lie in [1, {}]",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(desc);
    Ok(sorted[..j].iter().sum())
}

/// One minus the geometric mean of `1 - F` over the `j` largest values of a
/// decreasingly sorted slice.
pub fn geometric_average_cdf(sorted_desc: &[f64], j: usize) -> Result<f64> {
    if j == 0 || j > sorted_desc.len() {
        return Err(FdxError::Domain(format!(
            "j = {j} must lie in [1, {}]",
            sorted_desc.len()
        )));
    }
    if sorted_desc.windows(2).any(|w| w[0] < w[1]) {
        return Err(FdxError::Domain("values must be sorted decreasingly".into()));
    }
    if sorted_desc.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(FdxError::Domain("values must lie in [0, 1]".into()));
    }
    Ok(geometric_complement(&sorted_desc[..j]))
}

/// `1 - (prod (1 - v))^(1/n)` over all of `values`, computed in the log domain.
// Neumaier summation
pub(crate) fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub(crate) fn geometric_complement(values: &[f64]) -> f64 {
    if values.iter().any(|&v| v >= 1.0) {
        return 1.0;
    }
    let mean_log = stable_sum(values.iter().map(|&v| (-v).ln_1p())) / values.len() as f64;
    -mean_log.exp_m1()
}

/// `P(Bin[n, t] >= k)`.
pub fn binom_tail(n: u64, k: u64, t: f64) -> Result<f64> {
    if n == 0 {
        return Err(FdxError::Domain("n must be positive".into()));
    }
    if k > n + 1 {
        return Err(FdxError::Domain(format!("k = {k} exceeds n + 1 = {}", n + 1)));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(FdxError::Domain(format!("t = {t} outside [0, 1]")));
    }
    Ok(binom_upper(n, k, t))
}

/// Largest `t` with `P(Bin[n, t] >= k) <= zeta`.
pub fn binom_tail_invert(n: u64, k: u64, zeta: f64) -> Result<f64> {
    if k == 0 || k > n {
        return Err(FdxError::Domain(format!("k = {k} must lie in [1, n = {n}]")));
    }
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(FdxError::Domain(format!("zeta = {zeta} outside (0, 1)")));
    }
    Ok(largest_feasible(|t| binom_upper(n, k, t), zeta))
}

/// `P(PBin[probs] >= k)`.
pub fn pbin_tail(probs: &[f64], k: usize) -> Result<f64> {
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(FdxError::Domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(pbin_upper(probs, k))
}

/// Largest `t` in `[0, 1]` with `f(t) <= level` for a non-decreasing `f`,
/// found by bisection and always returned on the feasible side. Returns 0
/// when even `f(0)` exceeds the level.
pub(crate) fn largest_feasible<F: FnMut(f64) -> f64>(f: F, level: f64) -> f64 {
    largest_feasible_from(f, level, None)
}

/// As [`largest_feasible`], starting from a point already known to be feasible.
pub(crate) fn largest_feasible_from<F: FnMut(f64) -> f64>(
    mut f: F,
    level: f64,
    known_feasible: Option<f64>,
) -> f64 {
    if f(1.0) <= level {
        return 1.0;
    }
    let lo = match known_feasible {
        Some(t) => t,
        None => {
            if f(0.0) > level {
                return 0.0;
            }
            0.0
        }
    };
    let (mut lo, mut hi) = (lo, 1.0f64);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Probability-domain convolution. Mass above `k - 1` is folded into an
/// exact running tail, so the vector never grows past `k` entries.
pub(crate) fn pbin_upper(probs: &[f64], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > probs.len() {
        return 0.0;
    }
    let mut mass = vec![0.0f64; k];
    mass[0] = 1.0;
    let mut tail = 0.0f64;
    let mut reach = 0usize;
    for &p in probs {
        let q = 1.0 - p;
        tail += mass[k - 1] * p;
        let top = (reach + 1).min(k - 1);
        for j in (1..=top).rev() {
            mass[j] = mass[j] * q + mass[j - 1] * p;
        }
        mass[0] *= q;
        reach = top;
    }
    tail.min(1.0)
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

// Stirling-formula remainder ln(n!) - ln(sqrt(2 pi n) (n/e)^n) for integers 1..=15.
#[allow(clippy::excessive_precision)]
const STIRLING_REMAINDER: [f64; 15] = [
    0.081_061_466_795_327_26,
    0.041_340_695_955_409_29,
    0.027_677_925_684_998_34,
    0.020_790_672_103_765_09,
    0.016_644_691_189_821_19,
    0.013_876_128_823_070_75,
    0.011_896_709_945_891_77,
    0.010_411_265_261_972_1,
    0.009_255_462_182_712_733,
    0.008_330_563_433_362_871,
    0.007_573_675_487_951_841,
    0.006_942_840_107_209_53,
    0.006_408_994_188_004_207,
    0.005_951_370_112_758_848,
    0.005_554_733_551_962_801,
];

fn stirling_remainder(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return STIRLING_REMAINDER[n as usize - 1];
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

// Deviance term x ln(x / np) + np - x, accurate when x is close to np.
fn deviance(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        let mut j = 1.0;
        loop {
            ej *= v;
            let s1 = s + ej / (2.0 * j + 1.0);
            if s1 == s {
                return s1;
            }
            s = s1;
            j += 1.0;
        }
    }
    x * (x / np).ln() + np - x
}

/// Binomial pmf via the saddle-point expansion; relative error near machine
/// precision even for n in the millions.
pub(crate) fn binom_pmf(x: u64, n: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    if p == 0.0 {
        return if x == 0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if x == n { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    if x == 0 {
        let lc = if p < 0.1 {
            -deviance(nf, nf * q) - nf * p
        } else {
            nf * q.ln()
        };
        return lc.exp();
    }
    if x == n {
        let lc = if q < 0.1 {
            -deviance(nf, nf * p) - nf * q
        } else {
            nf * p.ln()
        };
        return lc.exp();
    }
    let xf = x as f64;
    let lc = stirling_remainder(nf)
        - stirling_remainder(xf)
        - stirling_remainder(nf - xf)
        - deviance(xf, nf * p)
        - deviance(nf - xf, nf * q);
    let lf = LN_2PI + xf.ln() + (-xf / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

// Recurrence terms are re-anchored on the exact pmf this often.
const REANCHOR_EVERY: u64 = 64;

/// Unchecked `P(Bin[n, t] >= k)`: sums whichever tail lies away from the mode
/// so the returned value keeps full relative precision.
pub(crate) fn binom_upper(n: u64, k: u64, t: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let odds = t / (1.0 - t);
    let mode = ((n as f64 + 1.0) * t).floor() as u64;
    if k > mode {
        let mut x = k;
        let mut term = binom_pmf(x, n, t);
        let mut sum = 0.0;
        loop {
            sum += term;
            if x == n || term <= sum * 1e-17 {
                break;
            }
            term *= (n - x) as f64 / (x + 1) as f64 * odds;
            x += 1;
            if (x - k).is_multiple_of(REANCHOR_EVERY) {
                term = binom_pmf(x, n, t);
            }
        }
        sum.min(1.0)
    } else {
        let start = k - 1;
        let mut x = start;
        let mut term = binom_pmf(x, n, t);
        let mut lower = 0.0;
        loop {
            lower += term;
            if x == 0 || term <= lower * 1e-17 {
                break;
            }
            term *= x as f64 / (n - x + 1) as f64 / odds;
            x -= 1;
            if (start - x).is_multiple_of(REANCHOR_EVERY) {
                term = binom_pmf(x, n, t);
            }
        }
        (1.0 - lower).max(0.0)
    }
}
