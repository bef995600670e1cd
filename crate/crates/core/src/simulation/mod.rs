//! Simulation designs, Monte Carlo truth oracles and evaluation metrics.
//!
//! Standard designs `1`-`10` draw five `U[0, 1]` covariates (plus two hidden
//! ones for design 7) and `W ~ Bernoulli(0.5)`. Instrumental designs
//! `200`-`204b` draw three covariates, a hidden confounder `U ~ U[0, 1]`,
//! `Z ~ Bernoulli(0.5)` and `W = I(0.5 U + gamma Z + 0.2 N(0, 1) > 0.5)`.
//!
//! Proportional-hazards laws `lambda(t) = c t^k exp(eta)` are sampled
//! exactly as `T = (E (k + 1) / (c exp(eta)))^(1 / (k + 1))`, `E ~ Exp(1)`.
//! Effects are reported as treated minus control.

mod metrics;
mod mimic;

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;
use core::str::FromStr;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{OutcomeTransform, SurvivalDataset};
use crate::matrix::Matrix;
use crate::rng::{self, tag};
use crate::{par, Error, Result};

pub use metrics::{evaluate, mae, mse, Metric, MetricSummary};
pub use mimic::{mimic_formula_sample, mimic_lambda_f, mimic_true_cate, MimicColumns, MIMIC_HORIZON, MIMIC_T_MAX};

/// Instrumental design variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IvVariant {
    T200,
    T200a,
    T200b,
    T201,
    T202,
    T203,
    T204,
    T204a,
    T204b,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SettingId {
    Standard(u8),
    Iv(IvVariant),
}

impl SettingId {
    pub const STANDARD: [SettingId; 10] = [
        SettingId::Standard(1),
        SettingId::Standard(2),
        SettingId::Standard(3),
        SettingId::Standard(4),
        SettingId::Standard(5),
        SettingId::Standard(6),
        SettingId::Standard(7),
        SettingId::Standard(8),
        SettingId::Standard(9),
        SettingId::Standard(10),
    ];

    pub const IV: [SettingId; 9] = [
        SettingId::Iv(IvVariant::T200),
        SettingId::Iv(IvVariant::T200a),
        SettingId::Iv(IvVariant::T200b),
        SettingId::Iv(IvVariant::T201),
        SettingId::Iv(IvVariant::T202),
        SettingId::Iv(IvVariant::T203),
        SettingId::Iv(IvVariant::T204),
        SettingId::Iv(IvVariant::T204a),
        SettingId::Iv(IvVariant::T204b),
    ];

    pub fn is_iv(&self) -> bool {
        matches!(self, SettingId::Iv(_))
    }
}

impl fmt::Display for SettingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SettingId::Standard(k) => write!(f, "{k}"),
            SettingId::Iv(v) => f.write_str(match v {
                IvVariant::T200 => "200",
                IvVariant::T200a => "200a",
                IvVariant::T200b => "200b",
                IvVariant::T201 => "201",
                IvVariant::T202 => "202",
                IvVariant::T203 => "203",
                IvVariant::T204 => "204",
                IvVariant::T204a => "204a",
                IvVariant::T204b => "204b",
            }),
        }
    }
}

impl FromStr for SettingId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase().replace('-', "");
        let v = match t.as_str() {
            "200" => IvVariant::T200,
            "200a" => IvVariant::T200a,
            "200b" => IvVariant::T200b,
            "201" => IvVariant::T201,
            "202" => IvVariant::T202,
            "203" => IvVariant::T203,
            "204" => IvVariant::T204,
            "204a" => IvVariant::T204a,
            "204b" => IvVariant::T204b,
            _ => {
                return match t.parse::<u8>() {
                    Ok(k @ 1..=10) => Ok(SettingId::Standard(k)),
                    _ => Err(Error::UnknownSetting(s.to_string())),
                }
            }
        };
        Ok(SettingId::Iv(v))
    }
}

/// Static description of a design.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingSpec {
    pub id: SettingId,
    /// Observed covariates.
    pub p: usize,
    /// Covariates used only by the censoring law.
    pub hidden: usize,
    pub t_max: f64,
    pub horizon: f64,
    /// Censoring percentage reported for the design at `n = 5000`, if any.
    pub reference_censoring: Option<f64>,
}

impl SettingSpec {
    pub fn outcome(&self) -> OutcomeTransform {
        OutcomeTransform::rmst(self.horizon).expect("positive horizon")
    }
}

pub fn spec(id: SettingId) -> SettingSpec {
    match id {
        SettingId::Standard(k) => {
            let (t_max, horizon, rate) = match k {
                1 => (0.8, 0.7, 15.3),
                2 => (0.8, 0.7, 29.6),
                3 => (12.0, 11.0, 11.3),
                4 => (4.0, 3.0, 21.0),
                5 => (7.0, 6.0, 73.4),
                6 => (7.0, 6.0, 76.2),
                7 => (8.0, 7.0, 74.0),
                8 => (7.0, 6.0, 92.7),
                9 => (0.8, 0.7, 92.1),
                _ => (0.8, 0.7, 69.9),
            };
            SettingSpec { id, p: 5, hidden: if k == 7 { 2 } else { 0 }, t_max, horizon, reference_censoring: Some(rate) }
        }
        SettingId::Iv(_) => SettingSpec { id, p: 3, hidden: 0, t_max: 9.0, horizon: 8.0, reference_censoring: None },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorOptions {
    /// Scale of the normal noise in the AFT designs.
    pub aft_sigma: f64,
    /// `false` sets every censoring time to infinity and disables the end of
    /// follow-up.
    pub censoring: bool,
    /// Follow-up ends at `t_max`: a unit still at risk there is censored at
    /// `t_max`.
    pub end_of_follow_up: bool,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        Self { aft_sigma: 1.0, censoring: true, end_of_follow_up: true }
    }
}

impl GeneratorOptions {
    fn follow_up(&self, t_max: f64) -> f64 {
        if self.censoring && self.end_of_follow_up {
            t_max
        } else {
            f64::INFINITY
        }
    }
}

/// A generated dataset together with its latent quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub data: SurvivalDataset,
    /// Latent event times `T~`.
    pub event_time: Vec<f64>,
    /// Latent censoring times `C` (`inf` when never censored).
    pub censor_time: Vec<f64>,
    /// End of follow-up `tau`: `T = min(T~, C, tau)` and
    /// `delta = I(T~ <= C and T~ < tau)`.
    pub follow_up: f64,
    /// Hidden covariates (design 7) or the confounder `U` (instrumental designs).
    pub hidden: Option<Matrix>,
}

impl LabeledSample {
    pub fn censoring_rate(&self) -> f64 {
        self.data.censoring_rate()
    }
}

/// Poisson inverse CDF with a cached table for a fixed rate.
struct PoissonTable {
    lambda: f64,
    cdf: Vec<f64>,
}

impl PoissonTable {
    fn new(lambda: f64) -> Self {
        let mut cdf = Vec::new();
        if lambda > 0.0 && lambda <= 600.0 {
            let mut k = 0u64;
            let mut p = libm::exp(-lambda);
            let mut c = p;
            cdf.push(c);
            while c < 1.0 && (p > 0.0 || k as f64 <= lambda) {
                k += 1;
                p *= lambda / k as f64;
                c += p;
                cdf.push(c);
            }
        }
        Self { lambda, cdf }
    }

    fn quantile(&self, u: f64) -> f64 {
        if self.cdf.is_empty() {
            return rng::poisson_quantile(self.lambda, u) as f64;
        }
        let k = self.cdf.partition_point(|&c| u >= c);
        if k < self.cdf.len() {
            k as f64
        } else {
            rng::poisson_quantile(self.lambda, u) as f64
        }
    }
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Time law of a design at fixed covariates and treatment.
#[derive(Clone, Copy, Debug)]
enum Law {
    /// `log T = mu + sigma * eps`.
    Aft { mu: f64 },
    /// `lambda(t) = c t^k exp(eta)`.
    Cox { c: f64, k: f64, eta: f64 },
    Poisson { lambda: f64 },
}

impl Law {
    /// Maps a uniform to a time; AFT consumes a standard normal instead.
    fn time_from(&self, noise: f64, sigma: f64) -> f64 {
        match *self {
            Law::Aft { mu } => libm::exp(mu + sigma * noise),
            Law::Cox { c, k, eta } => {
                let e = rng::exponential_from_uniform(noise);
                libm::pow(e * (k + 1.0) / (c * libm::exp(eta)), 1.0 / (k + 1.0))
            }
            Law::Poisson { lambda } => rng::poisson_quantile(lambda, noise) as f64,
        }
    }

    fn is_aft(&self) -> bool {
        matches!(self, Law::Aft { .. })
    }
}

fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

fn softplus(x: f64) -> f64 {
    libm::log(1.0 + libm::exp(x))
}

/// Event-time law of a standard design.
fn standard_event_law(k: u8, x: &[f64], w: bool) -> Law {
    let w = ind(w);
    let lo = ind(x[0] < 0.5);
    match k {
        1 => Law::Aft {
            mu: -1.85 - 0.8 * lo + 0.7 * sqrt(x[1]) + 0.2 * x[2] + (0.7 - 0.4 * lo - 0.4 * sqrt(x[1])) * w,
        },
        9 => Law::Aft {
            mu: 0.3 - 0.5 * lo + 0.5 * sqrt(x[1]) + 0.2 * x[2] + (1.0 - 0.8 * lo - 0.8 * sqrt(x[1])) * w,
        },
        2 | 10 => Law::Cox { c: 0.5, k: -0.5, eta: x[0] + (-0.5 + x[1]) * w },
        3 | 5 | 6 => Law::Poisson { lambda: x[1] * x[1] + x[2] + 6.0 + 2.0 * (sqrt(x[0]) - 0.3) * w },
        4 => Law::Poisson { lambda: x[1] + x[2] + (x[0] - 0.3).max(0.0) * w },
        _ => Law::Poisson { lambda: x[1] * x[1] + x[2] + 7.0 + 2.0 * (sqrt(x[0]) - 0.3) * w },
    }
}

/// Censoring time of a standard design; `x` includes hidden covariates.
/// Consumes exactly two uniforms.
fn standard_censoring<R: Rng + ?Sized>(k: u8, x: &[f64], w: bool, rng: &mut R) -> f64 {
    let u1 = rng::uniform(rng);
    let u2 = rng::uniform(rng);
    let wf = ind(w);
    let lo = ind(x[0] < 0.5);
    match k {
        1 => Law::Cox {
            c: 2.0,
            k: 1.0,
            eta: -1.75 - 0.5 * sqrt(x[1]) + 0.2 * x[2] + (1.15 + 0.5 * lo - 0.3 * sqrt(x[1])) * wf,
        }
        .time_from(u1, 1.0),
        9 => Law::Cox {
            c: 2.0,
            k: 1.0,
            eta: -0.9 + 2.0 * sqrt(x[1]) + 2.0 * x[2] + (1.15 + 0.5 * lo - 0.3 * sqrt(x[1])) * wf,
        }
        .time_from(u1, 1.0),
        2 => 3.0 * u1,
        3 => rng::poisson_quantile(12.0 + softplus(x[2]), u1) as f64,
        4 => rng::poisson_quantile(1.0 + softplus(x[2]), u1) as f64,
        5 => {
            if u1 < 0.6 {
                f64::INFINITY
            } else {
                1.0 + ind(x[3] < 0.5)
            }
        }
        6 => rng::poisson_quantile(3.0 + softplus(2.0 * x[1] + x[2]), u1) as f64,
        7 => rng::poisson_quantile(3.0 + 4.0 * x[5] + 2.0 * x[6], u1) as f64,
        8 => rng::poisson_quantile(3.0, u1) as f64,
        _ => {
            if u1 < 0.1 {
                f64::INFINITY
            } else {
                0.05 * u2
            }
        }
    }
}

fn iv_gamma(v: IvVariant) -> f64 {
    match v {
        IvVariant::T200 | IvVariant::T203 | IvVariant::T204 => 0.5,
        IvVariant::T200a | IvVariant::T204a => 0.4,
        IvVariant::T200b | IvVariant::T204b => 0.3,
        IvVariant::T201 | IvVariant::T202 => 0.35,
    }
}

fn iv_lambda_t(v: IvVariant, x: &[f64], u: f64, w: bool) -> f64 {
    let effect = 2.0 * (sqrt(x[0]) - 0.3) * ind(w);
    let base = 2.0 * x[0] + x[1];
    base + effect
        + match v {
            IvVariant::T202 => 3.0 * sqrt(u) + 3.0,
            IvVariant::T203 => 2.0 * u + 5.0,
            IvVariant::T204 | IvVariant::T204a | IvVariant::T204b => 2.0 * u + 6.0,
            _ => 2.0 * u + 4.0,
        }
}

fn iv_lambda_c(v: IvVariant) -> f64 {
    match v {
        IvVariant::T203 => 6.0,
        IvVariant::T204 | IvVariant::T204a | IvVariant::T204b => 4.0,
        _ => 7.0,
    }
}

struct Unit {
    x: Vec<f64>,
    hidden: Vec<f64>,
    w: bool,
    z: Option<bool>,
    t: f64,
    c: f64,
}

fn standard_unit<R: Rng + ?Sized>(k: u8, sp: &SettingSpec, opts: &GeneratorOptions, rng: &mut R) -> Unit {
    let all: Vec<f64> = (0..sp.p + sp.hidden).map(|_| rng::uniform(rng)).collect();
    let w = rng::bernoulli(rng, 0.5);
    let law = standard_event_law(k, &all, w);
    let noise = if law.is_aft() { rng::standard_normal(rng) } else { rng::uniform(rng) };
    let t = law.time_from(noise, opts.aft_sigma);
    let c = standard_censoring(k, &all, w, rng);
    let c = if opts.censoring { c } else { f64::INFINITY };
    Unit { x: all[..sp.p].to_vec(), hidden: all[sp.p..].to_vec(), w, z: None, t, c }
}

fn iv_unit<R: Rng + ?Sized>(v: IvVariant, opts: &GeneratorOptions, rng: &mut R) -> Unit {
    let x: Vec<f64> = (0..3).map(|_| rng::uniform(rng)).collect();
    let u = rng::uniform(rng);
    let z = rng::bernoulli(rng, 0.5);
    let w_star = 0.5 * u + iv_gamma(v) * ind(z) + 0.2 * rng::standard_normal(rng);
    let w = w_star > 0.5;
    let t = rng::poisson_quantile(iv_lambda_t(v, &x, u, w), rng::uniform(rng)) as f64;
    let c = rng::poisson_quantile(iv_lambda_c(v), rng::uniform(rng)) as f64;
    let c = if opts.censoring { c } else { f64::INFINITY };
    Unit { x, hidden: vec![u], w, z: Some(z), t, c }
}

pub fn generate(id: SettingId, n: usize, seed: u64) -> Result<LabeledSample> {
    generate_with(id, n, seed, &GeneratorOptions::default())
}

/// Unit `i` uses its own random stream, so samples are reproducible and a
/// prefix of a larger sample equals the smaller sample.
pub fn generate_with(id: SettingId, n: usize, seed: u64, opts: &GeneratorOptions) -> Result<LabeledSample> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    if !(opts.aft_sigma >= 0.0 && opts.aft_sigma.is_finite()) {
        return Err(Error::InvalidParameter("AFT noise scale must be finite and nonnegative".into()));
    }
    let sp = spec(id);
    let units = par::map_indexed(n, |i| {
        let mut rng = rng::stream(seed, &[tag::GENERATOR, i as u64]);
        match id {
            SettingId::Standard(k) => standard_unit(k, &sp, opts, &mut rng),
            SettingId::Iv(v) => iv_unit(v, opts, &mut rng),
        }
    });
    let n_hidden = match id {
        SettingId::Standard(_) => sp.hidden,
        SettingId::Iv(_) => 1,
    };
    assemble(units, sp.p, n_hidden, opts.follow_up(sp.t_max))
}

fn assemble(units: Vec<Unit>, p: usize, n_hidden: usize, follow_up: f64) -> Result<LabeledSample> {
    let n = units.len();
    let mut x = Vec::with_capacity(n * p);
    let mut hidden = Vec::with_capacity(n * n_hidden);
    let mut w = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    let mut event_time = Vec::with_capacity(n);
    let mut censor_time = Vec::with_capacity(n);
    let has_z = units.first().is_some_and(|u| u.z.is_some());
    for u in units {
        x.extend_from_slice(&u.x);
        hidden.extend_from_slice(&u.hidden);
        w.push(u.w);
        if let Some(zi) = u.z {
            z.push(zi);
        }
        time.push(u.t.min(u.c).min(follow_up));
        event.push(u.t <= u.c && u.t < follow_up);
        event_time.push(u.t);
        censor_time.push(u.c);
    }
    let data = SurvivalDataset::new(Matrix::new(n, p, x)?, w, has_z.then_some(z), time, event)?;
    let hidden = if n_hidden > 0 { Some(Matrix::new(n, n_hidden, hidden)?) } else { None };
    Ok(LabeledSample { data, event_time, censor_time, follow_up, hidden })
}

/// Grid of 21 points with every covariate equal to `q` for
/// `q = 0, 0.05, ..., 1`. Design 7 includes its two hidden covariates.
pub fn quantiles_test_set(id: SettingId) -> Result<Matrix> {
    let sp = spec(id);
    if id.is_iv() {
        return Err(Error::UnknownSetting(format!("no quantiles test set for design {id}")));
    }
    let d = sp.p + sp.hidden;
    let rows: Vec<Vec<f64>> = (0..=20).map(|k| vec![k as f64 / 20.0; d]).collect();
    Matrix::from_rows(&rows)
}

/// Monte Carlo `E[g(T~(1)) - g(T~(0)) | X = x]`. Both potential times of one
/// draw share their noise; instrumental designs draw a fresh `U` per draw.
/// `x` holds the observed covariates.
pub fn true_cate(id: SettingId, x: &[f64], n_mc: usize, seed: u64, g: &OutcomeTransform) -> Result<f64> {
    true_cate_with(id, x, n_mc, seed, g, &GeneratorOptions::default())
}

pub fn true_cate_with(
    id: SettingId,
    x: &[f64],
    n_mc: usize,
    seed: u64,
    g: &OutcomeTransform,
    opts: &GeneratorOptions,
) -> Result<f64> {
    let sp = spec(id);
    if x.len() < sp.p {
        return Err(Error::DimensionMismatch { expected: sp.p, got: x.len() });
    }
    if n_mc == 0 {
        return Err(Error::InvalidParameter("n_mc must be positive".into()));
    }
    let mut rng = rng::stream(seed, &[tag::TRUTH]);
    let mut total = 0.0;
    match id {
        SettingId::Standard(k) => {
            let l1 = standard_event_law(k, x, true);
            let l0 = standard_event_law(k, x, false);
            if let (Law::Poisson { lambda: a }, Law::Poisson { lambda: b }) = (l1, l0) {
                let (t1, t0) = (PoissonTable::new(a), PoissonTable::new(b));
                for _ in 0..n_mc {
                    let u = rng::uniform(&mut rng);
                    total += g.apply(t1.quantile(u)) - g.apply(t0.quantile(u));
                }
            } else {
                for _ in 0..n_mc {
                    let noise = if l1.is_aft() { rng::standard_normal(&mut rng) } else { rng::uniform(&mut rng) };
                    total += g.apply(l1.time_from(noise, opts.aft_sigma)) - g.apply(l0.time_from(noise, opts.aft_sigma));
                }
            }
        }
        SettingId::Iv(v) => {
            for _ in 0..n_mc {
                let u = rng::uniform(&mut rng);
                let e = rng::uniform(&mut rng);
                let t1 = rng::poisson_quantile(iv_lambda_t(v, x, u, true), e) as f64;
                let t0 = rng::poisson_quantile(iv_lambda_t(v, x, u, false), e) as f64;
                total += g.apply(t1) - g.apply(t0);
            }
        }
    }
    Ok(total / n_mc as f64)
}

/// Truth at every row of `points`; row `i` uses a seed derived from `(seed, i)`.
pub fn true_cate_batch(id: SettingId, points: &Matrix, n_mc: usize, seed: u64, g: &OutcomeTransform) -> Result<Vec<f64>> {
    par::map_indexed(points.n_rows(), |i| {
        true_cate(id, points.row(i), n_mc, rng::derive_seed(seed, &[tag::TRUTH, i as u64]), g)
    })
    .into_iter()
    .collect()
}

/// Human-readable list of known designs.
pub fn known_settings() -> String {
    let mut s = String::new();
    for id in SettingId::STANDARD.iter().chain(SettingId::IV.iter()) {
        if !s.is_empty() {
            s.push_str(", ");
        }
        s.push_str(&id.to_string());
    }
    s.push_str(", mimic");
    s
}
