//! Classic ACD(p, q) with unit-exponential innovations.
//!
//! `Δt_i = μ_i ε_i` with `μ_i = ω + Σ_j α_j Δt_{i-j} + Σ_j β_j μ_{i-j}`.
//! Pre-sample durations and conditional means are both set to one value,
//! normally the mean of the training durations.
//!
//! Fitting maximizes the exponential log-likelihood over log-coordinates
//! `(ln ω, ln α, ln β)` by gradient ascent. The gradient comes from forward
//! accumulation of `∂μ_i/∂θ` through the recursion, so each evaluation is a
//! single pass over the data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ScalingStats;
use crate::error::{Error, Result};
use crate::fileio;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcdParams {
    pub omega: f64,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl AcdParams {
    pub fn new(omega: f64, alphas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        let p = AcdParams { omega, alphas, betas };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidArgument(format!("omega {} must be positive", self.omega)));
        }
        if self.alphas.is_empty() && self.betas.is_empty() {
            return Err(Error::InvalidArgument("ACD(0,0) has no dynamics".into()));
        }
        if let Some(c) = self.alphas.iter().chain(&self.betas).find(|c| !(**c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidArgument(format!("coefficient {c} must be nonnegative")));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.alphas.len()
    }

    pub fn q(&self) -> usize {
        self.betas.len()
    }

    pub fn persistence(&self) -> f64 {
        self.alphas.iter().sum::<f64>() + self.betas.iter().sum::<f64>()
    }

    pub fn is_stationary(&self) -> bool {
        self.persistence() < 1.0
    }

    /// `ω / (1 - Σα - Σβ)`, when stationary.
    pub fn unconditional_mean(&self) -> Option<f64> {
        self.is_stationary().then(|| self.omega / (1.0 - self.persistence()))
    }

    /// Default starting point: α = 0.1 and β = 0.8 spread evenly over the
    /// lags, ω = 0.1 × sample mean.
    pub fn default_init(p: usize, q: usize, sample_mean: f64) -> Self {
        AcdParams {
            omega: 0.1 * sample_mean,
            alphas: vec![0.1 / p.max(1) as f64; p],
            betas: vec![0.8 / q.max(1) as f64; q],
        }
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.p() + self.q());
        v.push(self.omega);
        v.extend(&self.alphas);
        v.extend(&self.betas);
        v
    }

    fn from_vec(v: &[f64], p: usize) -> Self {
        AcdParams { omega: v[0], alphas: v[1..1 + p].to_vec(), betas: v[1 + p..].to_vec() }
    }
}

fn check_inputs(durations: &[f64], presample_mu: f64) -> Result<()> {
    if !(presample_mu > 0.0) || !presample_mu.is_finite() {
        return Err(Error::InvalidArgument(format!("presample mean {presample_mu} must be positive")));
    }
    if let Some(i) = durations.iter().position(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(Error::InvalidSeries(format!("duration at index {i} is not positive")));
    }
    Ok(())
}

/// Conditional means `μ_0..μ_{N-1}`; `μ_i` uses durations strictly before `i`.
pub fn acd_recursion(params: &AcdParams, durations: &[f64], presample_mu: f64) -> Result<Vec<f64>> {
    params.validate()?;
    check_inputs(durations, presample_mu)?;
    let mut mu = Vec::with_capacity(durations.len());
    for i in 0..durations.len() {
        let m = next_mu(params, durations, &mu, i, presample_mu);
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Numeric(format!("conditional mean {m} at index {i}")));
        }
        mu.push(m);
    }
    Ok(mu)
}

#[inline]
pub(crate) fn next_mu(params: &AcdParams, durations: &[f64], mu: &[f64], i: usize, pre: f64) -> f64 {
    let mut m = params.omega;
    for (j, a) in params.alphas.iter().enumerate() {
        m += a * if i > j { durations[i - j - 1] } else { pre };
    }
    for (j, b) in params.betas.iter().enumerate() {
        m += b * if i > j { mu[i - j - 1] } else { pre };
    }
    m
}

/// Negative log-likelihood `Σ ln μ_i + Δt_i / μ_i`.
pub fn acd_nll(params: &AcdParams, durations: &[f64], presample_mu: f64) -> Result<f64> {
    let mu = acd_recursion(params, durations, presample_mu)?;
    Ok(durations.iter().zip(&mu).map(|(d, m)| m.ln() + d / m).sum())
}

/// Negative log-likelihood and its gradient with respect to
/// `[ω, α_1..α_p, β_1..β_q]`.
pub fn acd_nll_grad(params: &AcdParams, durations: &[f64], presample_mu: f64) -> Result<(f64, Vec<f64>)> {
    params.validate()?;
    check_inputs(durations, presample_mu)?;
    let (p, q) = (params.p(), params.q());
    let k = 1 + p + q;
    let n = durations.len();
    let mut mu = Vec::with_capacity(n);
    // ∂μ_i/∂θ, row-major n × k
    let mut dmu = vec![0.0; n * k];
    let mut nll = 0.0;
    let mut grad = vec![0.0; k];

    for i in 0..n {
        let m = next_mu(params, durations, &mu, i, presample_mu);
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Numeric(format!("conditional mean {m} at index {i}")));
        }
        let (done, rest) = dmu.split_at_mut(i * k);
        let row = &mut rest[..k];
        row[0] = 1.0;
        for j in 0..p {
            row[1 + j] = if i > j { durations[i - j - 1] } else { presample_mu };
        }
        for j in 0..q {
            row[1 + p + j] = if i > j { mu[i - j - 1] } else { presample_mu };
        }
        for (j, b) in params.betas.iter().enumerate() {
            if i > j {
                let prev = &done[(i - j - 1) * k..(i - j) * k];
                for (r, d) in row.iter_mut().zip(prev) {
                    *r += b * d;
                }
            }
        }
        let d = durations[i];
        nll += m.ln() + d / m;
        let dl_dmu = 1.0 / m - d / (m * m);
        for (g, r) in grad.iter_mut().zip(row.iter()) {
            *g += dl_dmu * r;
        }
        mu.push(m);
    }
    Ok((nll, grad))
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub init: Option<AcdParams>,
    pub max_iters: usize,
    /// Max-norm of the per-observation log-likelihood gradient in
    /// log-parameter coordinates.
    pub tol: f64,
    /// Defaults to the sample mean of the fitted durations.
    pub presample_mu: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { init: None, max_iters: 5000, tol: 1e-6, presample_mu: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcdFitResult {
    pub params: AcdParams,
    /// Total negative log-likelihood at `params`.
    pub nll: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub presample_mu: f64,
    pub note: Option<String>,
}

/// Mean NLL and its gradient in log coordinates.
fn objective(theta: &[f64], p: usize, durations: &[f64], pre: f64) -> Option<(f64, Vec<f64>)> {
    let nat: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
    let params = AcdParams::from_vec(&nat, p);
    let (nll, g) = acd_nll_grad(&params, durations, pre).ok()?;
    let n = durations.len() as f64;
    let g: Vec<f64> = g.iter().zip(&nat).map(|(g, x)| g * x / n).collect();
    let f = nll / n;
    (f.is_finite() && g.iter().all(|v| v.is_finite())).then_some((f, g))
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximum-likelihood fit of an ACD(p, q).
///
/// Steps along the log-likelihood gradient with a Barzilai-Borwein trial
/// length and Armijo backtracking. Stationarity is checked after the fact.
pub fn acd_fit(durations: &[f64], p: usize, q: usize, opts: &FitOptions) -> Result<AcdFitResult> {
    if p + q == 0 {
        return Err(Error::InvalidArgument("ACD(0,0) has no dynamics".into()));
    }
    if durations.len() <= 10 * (p + q + 1) {
        return Err(Error::InsufficientData(format!(
            "{} durations is too few for ACD({p},{q})",
            durations.len()
        )));
    }
    let mean = durations.iter().sum::<f64>() / durations.len() as f64;
    let pre = opts.presample_mu.unwrap_or(mean);
    check_inputs(durations, pre)?;
    let init = match &opts.init {
        Some(init) => {
            init.validate()?;
            if init.p() != p || init.q() != q {
                return Err(Error::InvalidArgument(format!(
                    "initial parameters are ACD({},{}), requested ACD({p},{q})",
                    init.p(),
                    init.q()
                )));
            }
            init.clone()
        }
        None => AcdParams::default_init(p, q, mean),
    };
    if let Some(c) = init.to_vec().iter().find(|c| !(**c > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "initial coefficient {c} must be strictly positive in log coordinates"
        )));
    }

    let mut theta: Vec<f64> = init.to_vec().iter().map(|x| x.ln()).collect();
    let (mut f, mut g) = objective(&theta, p, durations, pre).ok_or_else(|| {
        Error::Numeric("likelihood is not finite at the initial point; try rescaling the durations".into())
    })?;

    const ARMIJO: f64 = 1e-4;
    let mut step = 1.0 / max_norm(&g).max(1.0);
    let mut iterations = 0;
    let mut converged = false;
    let mut note = None;

    while iterations < opts.max_iters {
        if max_norm(&g) < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let gg = dot(&g, &g);
        let mut s = step;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = theta.iter().zip(&g).map(|(t, g)| t - s * g).collect();
            if let Some((ft, gt)) = objective(&trial, p, durations, pre) {
                if ft <= f - ARMIJO * s * gg {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            s *= 0.5;
        }
        let Some((trial, ft, gt)) = accepted else {
            note = Some("line search made no progress".to_string());
            break;
        };
        let dtheta: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let curv = dot(&dtheta, &dg);
        step = if curv > 0.0 { dot(&dtheta, &dtheta) / curv } else { s * 2.0 };
        theta = trial;
        f = ft;
        g = gt;
    }
    if !converged && max_norm(&g) < opts.tol {
        converged = true;
    }

    let params = AcdParams::from_vec(&theta.iter().map(|t| t.exp()).collect::<Vec<_>>(), p);
    if !params.is_stationary() {
        converged = false;
        note = Some(format!("stationarity violated: persistence {:.6} >= 1", params.persistence()));
    } else if !converged && note.is_none() {
        note = Some(format!("iteration limit {} reached", opts.max_iters));
    }
    Ok(AcdFitResult {
        nll: f * durations.len() as f64,
        grad_norm: max_norm(&g),
        params,
        iterations,
        converged,
        presample_mu: pre,
        note,
    })
}

/// One-step-ahead conditional mean from the last `p` durations and last `q`
/// conditional means (most recent last).
pub fn acd_forecast_one(params: &AcdParams, history: &[f64], mu_history: &[f64]) -> Result<f64> {
    params.validate()?;
    if history.len() < params.p() || mu_history.len() < params.q() {
        return Err(Error::InsufficientData(format!(
            "ACD({},{}) forecast needs {} durations and {} means, got {} and {}",
            params.p(),
            params.q(),
            params.p(),
            params.q(),
            history.len(),
            mu_history.len()
        )));
    }
    let (n, m) = (history.len(), mu_history.len());
    let mut mu = params.omega;
    for (j, a) in params.alphas.iter().enumerate() {
        mu += a * history[n - 1 - j];
    }
    for (j, b) in params.betas.iter().enumerate() {
        mu += b * mu_history[m - 1 - j];
    }
    Ok(mu)
}

/// Which tail of the predicted duration distribution a time-at-risk refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    /// Short-duration risk: the α-quantile.
    #[default]
    Lower,
    /// Long-duration risk: the (1 − α)-quantile.
    Upper,
}

impl Tail {
    /// Probability level of the quantile reported for `alpha`.
    pub fn level(self, alpha: f64) -> f64 {
        match self {
            Tail::Lower => alpha,
            Tail::Upper => 1.0 - alpha,
        }
    }
}

/// `−μ ln(1 − α)`, the α-quantile of an exponential with mean `μ`.
pub fn exp_quantile(mu: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("probability {alpha} outside (0, 1)")));
    }
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!("mean {mu} must be positive")));
    }
    Ok(-mu * (-alpha).ln_1p())
}

pub fn time_at_risk(mu: f64, alpha: f64, tail: Tail) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("probability {alpha} outside (0, 1)")));
    }
    exp_quantile(mu, tail.level(alpha))
}

/// On-disk form of a fitted ACD model, in original duration units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcdModelFile {
    pub model: String,
    pub p: usize,
    pub q: usize,
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub presample_mu: f64,
    pub nll: f64,
    pub iterations: usize,
    pub converged: bool,
    pub scaling: Option<ScalingStats>,
}

impl AcdModelFile {
    pub const MODEL: &'static str = "ACD";

    pub fn new(params: &AcdParams, presample_mu: f64, fit: Option<&AcdFitResult>, scaling: Option<ScalingStats>) -> Self {
        AcdModelFile {
            model: Self::MODEL.into(),
            p: params.p(),
            q: params.q(),
            omega: params.omega,
            alpha: params.alphas.clone(),
            beta: params.betas.clone(),
            presample_mu,
            nll: fit.map_or(f64::NAN, |f| f.nll),
            iterations: fit.map_or(0, |f| f.iterations),
            converged: fit.is_some_and(|f| f.converged),
            scaling,
        }
    }

    pub fn params(&self) -> Result<AcdParams> {
        if self.alpha.len() != self.p || self.beta.len() != self.q {
            return Err(Error::InvalidArgument("lag orders disagree with coefficient lists".into()));
        }
        AcdParams::new(self.omega, self.alpha.clone(), self.beta.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fileio::write_toml(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: AcdModelFile = fileio::read_toml(path)?;
        if f.model != Self::MODEL {
            return Err(Error::format(path, format!("expected model \"ACD\", found {:?}", f.model)));
        }
        f.params()?;
        Ok(f)
    }
}
