use serde::{Deserialize, Serialize};

use crate::data::MetaDataset;
use crate::normal::{norm_quantile, wald_p_value};

/// Classical random-effects summary of the published studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlEstimates {
    pub mu_hat: f64,
    pub tau2_hat: f64,
    pub q: f64,
    pub mu_fixed: f64,
    pub i2: f64,
    /// Standard error of `mu_hat`, `sqrt(1 / sum w_i)`.
    pub se_mu: f64,
    pub n: usize,
}

impl DlEstimates {
    pub fn ci_mu(&self, level: f64) -> (f64, f64) {
        let z = norm_quantile(0.5 + level / 2.0);
        (self.mu_hat - z * self.se_mu, self.mu_hat + z * self.se_mu)
    }

    pub fn p_value(&self) -> f64 {
        wald_p_value(self.mu_hat, self.se_mu)
    }
}

/// Inverse-variance fixed effect, Cochran's Q and the DerSimonian-Laird
/// moment estimator on the published rows only.
pub fn dl_fit(dataset: &MetaDataset) -> DlEstimates {
    let studies: Vec<(f64, f64)> = dataset
        .published()
        .map(|(_, e)| (e.effect, e.se * e.se))
        .collect();
    dl_from_pairs(&studies)
}

pub(crate) fn dl_from_pairs(studies: &[(f64, f64)]) -> DlEstimates {
    let n = studies.len();
    let (mut sw, mut sw2, mut swy) = (0.0, 0.0, 0.0);
    for &(y, v) in studies {
        let w = 1.0 / v;
        sw += w;
        sw2 += w * w;
        swy += w * y;
    }
    let mu_fixed = swy / sw;
    let q: f64 = studies
        .iter()
        .map(|&(y, v)| (y - mu_fixed).powi(2) / v)
        .sum();
    let df = (n - 1) as f64;
    let tau2_hat = ((q - df) / (sw - sw2 / sw)).max(0.0);
    let (mut sr, mut sry) = (0.0, 0.0);
    for &(y, v) in studies {
        let w = 1.0 / (v + tau2_hat);
        sr += w;
        sry += w * y;
    }
    let i2 = if q > df { (q - df) / q } else { 0.0 };
    DlEstimates {
        mu_hat: sry / sr,
        tau2_hat,
        q,
        mu_fixed,
        i2,
        se_mu: (1.0 / sr).sqrt(),
        n,
    }
}
