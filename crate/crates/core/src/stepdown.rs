//! Step-down engine: critical values by inversion, adjusted p-values by the
//! running-maximum shortcut, and the explicit step-down scan.

use crate::distributions::{largest_feasible_from, Domain};
use crate::error::{FdxError, Result};
use crate::transforms::TransformFamily;

/// Non-decreasing critical values `tau_1 <= ... <= tau_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalValues {
    tau: Vec<f64>,
}

impl CriticalValues {
    pub fn new(tau: Vec<f64>) -> Self {
        Self { tau }
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionResult {
    /// Adjusted p-values in input order; absent for the explicit scan.
    pub adjusted: Option<Vec<f64>>,
    pub ell_hat: usize,
    /// Rejected hypothesis indices, ascending.
    pub rejected: Vec<usize>,
    /// Input indices sorted by increasing p-value, ties by index.
    pub order: Vec<usize>,
}

impl RejectionResult {
    pub fn count(&self) -> usize {
        self.rejected.len()
    }

    pub fn mask(&self, m: usize) -> Vec<bool> {
        let mut mask = vec![false; m];
        for &i in &self.rejected {
            mask[i] = true;
        }
        mask
    }
}

fn check_pvalues(pvals: &[f64], m: usize) -> Result<()> {
    if pvals.len() != m {
        return Err(FdxError::Dimension {
            expected: m,
            got: pvals.len(),
        });
    }
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(FdxError::Domain(format!("p-value {p} outside [0, 1]")));
    }
    Ok(())
}

fn check_zeta(zeta: f64) -> Result<()> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(FdxError::Domain(format!("zeta = {zeta} outside (0, 1)")));
    }
    Ok(())
}

/// Stable ascending order of the p-values.
pub fn sort_order(pvals: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pvals.len()).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    order
}

/// `tau_l = max{t in domain : xi_l(t) <= zeta}`, 0 when no point qualifies.
pub fn critical_values(xi: &TransformFamily, zeta: f64) -> Result<CriticalValues> {
    check_zeta(zeta)?;
    let mut ev = xi.evaluator();
    let mut tau = Vec::with_capacity(xi.m());
    match xi.domain() {
        Domain::Continuum => {
            let mut prev: Option<f64> = None;
            for ell in 1..=xi.m() {
                // tau_{l-1} stays feasible for xi_l because xi_l <= xi_{l-1}
                let t = largest_feasible_from(|t| ev.eval(ell, t), zeta, prev);
                tau.push(t);
                // a zero from the empty-set convention is not a feasible start
                prev = if ev.eval(ell, t) <= zeta { Some(t) } else { None };
            }
        }
        Domain::Support(points) => {
            // index of the last feasible support point found so far
            let mut floor: Option<usize> = None;
            for ell in 1..=xi.m() {
                let mut lo = match floor {
                    Some(i) => i,
                    None => {
                        if ev.eval(ell, points[0]) > zeta {
                            tau.push(0.0);
                            continue;
                        }
                        0
                    }
                };
                let mut hi = points.len();
                // invariant: points[lo] feasible, points[hi..] infeasible
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if ev.eval(ell, points[mid]) <= zeta {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                tau.push(points[lo]);
                floor = Some(lo);
            }
        }
    }
    Ok(CriticalValues::new(tau))
}

// Adjusted values along the sorted order. Tied p-values share the maximum
// over their whole tie block, which is exactly the literal definition. With
// `stop` set, scanning ends at the first block whose value exceeds it.
fn scan(
    pvals: &[f64],
    xi: &TransformFamily,
    order: &[usize],
    stop: Option<f64>,
) -> (Vec<f64>, usize) {
    let m = pvals.len();
    let mut ev = xi.evaluator();
    let mut sorted_adj = Vec::with_capacity(m);
    let mut running = f64::NEG_INFINITY;
    let mut start = 0;
    while start < m {
        let p = pvals[order[start]];
        let mut end = start + 1;
        while end < m && pvals[order[end]] == p {
            end += 1;
        }
        for ell in start + 1..=end {
            running = running.max(ev.eval(ell, p));
        }
        if let Some(level) = stop {
            if running > level {
                return (sorted_adj, start);
            }
        }
        sorted_adj.extend(std::iter::repeat_n(running, end - start));
        start = end;
    }
    (sorted_adj, m)
}

/// Adjusted p-values `max{xi_l(p_(l)) : p_(l) <= p_i}`.
pub fn adjusted_pvalues(pvals: &[f64], xi: &TransformFamily) -> Result<Vec<f64>> {
    check_pvalues(pvals, xi.m())?;
    let order = sort_order(pvals);
    let (sorted_adj, _) = scan(pvals, xi, &order, None);
    let mut adjusted = vec![0.0; pvals.len()];
    for (pos, &i) in order.iter().enumerate() {
        adjusted[i] = sorted_adj[pos];
    }
    Ok(adjusted)
}

/// Rejects `{i : adjusted_i <= zeta}`.
pub fn reject(pvals: &[f64], xi: &TransformFamily, zeta: f64) -> Result<RejectionResult> {
    check_zeta(zeta)?;
    let adjusted = adjusted_pvalues(pvals, xi)?;
    let order = sort_order(pvals);
    let mut rejected: Vec<usize> = (0..pvals.len()).filter(|&i| adjusted[i] <= zeta).collect();
    rejected.sort_unstable();
    Ok(RejectionResult {
        adjusted: Some(adjusted),
        ell_hat: rejected.len(),
        rejected,
        order,
    })
}

/// Same rejection set as [`reject`], but stops evaluating the transforms at
/// the first step that fails. Adjusted p-values are not produced.
pub fn reject_early_exit(
    pvals: &[f64],
    xi: &TransformFamily,
    zeta: f64,
) -> Result<RejectionResult> {
    check_zeta(zeta)?;
    check_pvalues(pvals, xi.m())?;
    let order = sort_order(pvals);
    let (_, ell_hat) = scan(pvals, xi, &order, Some(zeta));
    let mut rejected = order[..ell_hat].to_vec();
    rejected.sort_unstable();
    Ok(RejectionResult {
        adjusted: None,
        ell_hat,
        rejected,
        order,
    })
}

/// Direct step-down scan with given critical values.
pub fn stepdown_explicit(pvals: &[f64], tau: &CriticalValues) -> Result<RejectionResult> {
    check_pvalues(pvals, tau.len())?;
    if tau.tau().windows(2).any(|w| w[0] > w[1]) {
        return Err(FdxError::Domain("critical values must be non-decreasing".into()));
    }
    let order = sort_order(pvals);
    let ell_hat = order
        .iter()
        .zip(tau.tau())
        .take_while(|(&i, &t)| pvals[i] <= t)
        .count();
    let rejected = if ell_hat == 0 {
        Vec::new()
    } else {
        let cut = tau.tau()[ell_hat - 1];
        (0..pvals.len()).filter(|&i| pvals[i] <= cut).collect()
    };
    Ok(RejectionResult {
        adjusted: None,
        ell_hat,
        rejected,
        order,
    })
}

/// Indices whose p-value cannot occur under the family's null model.
pub fn off_support(pvals: &[f64], xi: &TransformFamily) -> Vec<usize> {
    (0..pvals.len())
        .filter(|&i| !xi.domain().contains(pvals[i]))
        .collect()
}
