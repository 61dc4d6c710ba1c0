//! Bayesian online change-point detection with a constant hazard and a
//! Gaussian observation model under a Normal-Gamma prior (unknown mean and
//! variance). The predictive for each run length is a Student-t.

use statrs::function::gamma::ln_gamma;

/// Prior hyperparameters of the Normal-Gamma model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalGamma {
    pub mu: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NormalGamma {
    fn update(&self, x: f64) -> NormalGamma {
        let kappa = self.kappa + 1.0;
        NormalGamma {
            mu: (self.kappa * self.mu + x) / kappa,
            kappa,
            alpha: self.alpha + 0.5,
            beta: self.beta + self.kappa * (x - self.mu).powi(2) / (2.0 * kappa),
        }
    }

    /// Log density of the Student-t posterior predictive at `x`.
    fn ln_predictive(&self, x: f64) -> f64 {
        let nu = 2.0 * self.alpha;
        let scale2 = self.beta * (self.kappa + 1.0) / (self.alpha * self.kappa);
        let z2 = (x - self.mu).powi(2) / scale2;
        ln_gamma((nu + 1.0) / 2.0)
            - ln_gamma(nu / 2.0)
            - 0.5 * (nu * std::f64::consts::PI * scale2).ln()
            - (nu + 1.0) / 2.0 * (z2 / nu).ln_1p()
    }
}

/// Prior mean-precision pseudo-count; small so a new segment's level is
/// only weakly tied to the window's median.
const PRIOR_KAPPA: f64 = 0.01;
const PRIOR_ALPHA: f64 = 1.0;

/// Robust per-sample noise variance: scaled MAD of first differences, with
/// fallback to their mean square. `None` when the sequence is constant.
fn noise_variance(values: &[f64]) -> Option<f64> {
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    if diffs.is_empty() {
        return None;
    }
    let med = median(&diffs);
    let mad = median(&diffs.iter().map(|d| (d - med).abs()).collect::<Vec<_>>());
    let sigma = 1.4826 * mad / std::f64::consts::SQRT_2;
    let mut var = sigma * sigma;
    if var == 0.0 {
        var = diffs.iter().map(|d| d * d).sum::<f64>() / (2.0 * diffs.len() as f64);
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-9 * (1.0 + scale)).powi(2);
    (var > 0.0).then(|| var.max(floor))
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Data-scaled prior: centred on the median, noise scale from the
/// differences, so the detector is invariant to affine rescaling.
pub fn default_prior(values: &[f64]) -> Option<NormalGamma> {
    let var = noise_variance(values)?;
    Some(NormalGamma {
        mu: median(values),
        kappa: PRIOR_KAPPA,
        alpha: PRIOR_ALPHA,
        beta: PRIOR_ALPHA * var,
    })
}

/// Posterior probability that a new segment starts at each position.
///
/// Constant hazard `1/len`. Position 0 has no history and reports the
/// hazard itself, as does every position of a constant sequence.
pub fn change_probabilities(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let hazard = 1.0 / n as f64;
    let Some(prior) = default_prior(values) else {
        return vec![hazard; n];
    };
    change_probabilities_with(values, hazard, prior)
}

pub fn change_probabilities_with(values: &[f64], hazard: f64, prior: NormalGamma) -> Vec<f64> {
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(hazard);
    let (ln_h, ln_1mh) = (hazard.ln(), (1.0 - hazard).ln());
    // run-length posterior (log) and per-run parameters; index = run length - 1
    let mut ln_r: Vec<f64> = vec![0.0];
    let mut params: Vec<NormalGamma> = vec![prior.update(values[0])];
    for &x in &values[1..] {
        let ln_cp = ln_h + prior.ln_predictive(x);
        let ln_growth: Vec<f64> = ln_r
            .iter()
            .zip(&params)
            .map(|(lr, p)| lr + p.ln_predictive(x) + ln_1mh)
            .collect();
        let ln_evidence = log_sum_exp(std::iter::once(ln_cp).chain(ln_growth.iter().copied()));
        out.push((ln_cp - ln_evidence).exp().clamp(0.0, 1.0));

        let mut next_r = Vec::with_capacity(ln_growth.len() + 1);
        next_r.push(ln_cp - ln_evidence);
        next_r.extend(ln_growth.iter().map(|g| g - ln_evidence));
        let mut next_p = Vec::with_capacity(params.len() + 1);
        next_p.push(prior.update(x));
        next_p.extend(params.iter().map(|p| p.update(x)));
        ln_r = next_r;
        params = next_p;
    }
    out
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}
