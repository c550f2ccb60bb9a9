//! Weighted p-values and the closed-form weighted critical values.
//!
//! Weights are taken as given. A zero weight makes its hypothesis
//! unrejectable: its weighted p-value is 1.

use crate::distributions::{CdfFamily, NullCdf};
use crate::error::{FdxError, Result};
use crate::stepdown::{critical_values, CriticalValues};
use crate::transforms::{make_transform, Alpha, ProcedureKind, ProcedureSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightProfile {
    weights: Vec<f64>,
    mean: f64,
    sorted_desc: Vec<f64>,
    prefix_avg: Vec<f64>,
}

impl WeightProfile {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(FdxError::Config("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(FdxError::Domain(format!("weight {w} is not a finite non-negative number")));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(FdxError::Domain("at least one weight must be positive".into()));
        }
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        let mut sorted_desc = weights.clone();
        sorted_desc.sort_by(|a, b| b.total_cmp(a));
        let mut running = 0.0;
        let prefix_avg = sorted_desc
            .iter()
            .enumerate()
            .map(|(i, w)| {
                running += w;
                running / (i + 1) as f64
            })
            .collect();
        Ok(Self {
            weights,
            mean,
            sorted_desc,
            prefix_avg,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sorted_desc(&self) -> &[f64] {
        &self.sorted_desc
    }

    /// `prefix_avg()[j - 1]` is the average of the `j` largest weights.
    pub fn prefix_avg(&self) -> &[f64] {
        &self.prefix_avg
    }
}

/// `min(p * w_bar / w, 1)`, with 1 for zero weights.
pub fn weighted_pvalues_am(p: &[f64], wp: &WeightProfile) -> Vec<f64> {
    p.iter()
        .zip(wp.weights())
        .map(|(&p, &w)| {
            if w == 0.0 {
                1.0
            } else {
                (p * wp.mean() / w).min(1.0)
            }
        })
        .collect()
}

/// `1 - (1 - p)^(w_bar / w)`. For zero weights the limit is used: 0 when
/// `p = 0`, otherwise 1.
pub fn weighted_pvalues_gm(p: &[f64], wp: &WeightProfile) -> Vec<f64> {
    p.iter()
        .zip(wp.weights())
        .map(|(&p, &w)| {
            if w == 0.0 {
                if p == 0.0 {
                    0.0
                } else {
                    1.0
                }
            } else if p >= 1.0 {
                1.0
            } else {
                -((wp.mean() / w) * (-p).ln_1p()).exp_m1()
            }
        })
        .collect()
}

/// Null CDFs of the AM-weighted p-values.
pub fn am_family(wp: &WeightProfile) -> Result<CdfFamily> {
    CdfFamily::new(
        wp.weights()
            .iter()
            .map(|&weight| NullCdf::WeightedAm {
                weight,
                mean_weight: wp.mean(),
            })
            .collect(),
    )
}

/// Null CDFs of the GM-weighted p-values.
pub fn gm_family(wp: &WeightProfile) -> Result<CdfFamily> {
    CdfFamily::new(
        wp.weights()
            .iter()
            .map(|&weight| NullCdf::WeightedGm {
                weight,
                mean_weight: wp.mean(),
            })
            .collect(),
    )
}

fn check_len(m: usize, wp: &WeightProfile) -> Result<()> {
    if m != wp.len() {
        return Err(FdxError::Dimension {
            expected: m,
            got: wp.len(),
        });
    }
    Ok(())
}

/// `zeta (floor(alpha l) + 1) w_bar / sum_{j <= m(l)} w_(j)`.
pub fn wlr_am_critical_values(
    m: usize,
    alpha: Alpha,
    zeta: f64,
    wp: &WeightProfile,
) -> Result<CriticalValues> {
    check_len(m, wp)?;
    let tau = (1..=m)
        .map(|ell| {
            let k = alpha.floor_mul(ell) + 1;
            let m_ell = m - ell + k;
            let lr = zeta * k as f64 / m_ell as f64;
            (lr * wp.mean() / wp.prefix_avg()[m_ell - 1]).min(1.0)
        })
        .collect();
    Ok(CriticalValues::new(tau))
}

/// `1 - (1 - tau_GR)^(w_bar / w_bar_{m(l)})`.
pub fn wgr_gm_critical_values(
    m: usize,
    alpha: Alpha,
    zeta: f64,
    wp: &WeightProfile,
) -> Result<CriticalValues> {
    check_len(m, wp)?;
    let gr = make_transform(&ProcedureSpec::new(ProcedureKind::Gr, alpha, zeta)?, m)?;
    let base = critical_values(&gr, zeta)?;
    let tau = base
        .tau()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let m_ell = gr.m_of(i + 1);
            let exponent = wp.mean() / wp.prefix_avg()[m_ell - 1];
            -(exponent * (-t).ln_1p()).exp_m1()
        })
        .collect();
    Ok(CriticalValues::new(tau))
}
