//! Ground-truth data generators and brute-force reference computations.
//!
//! [`brute_force_pips`] deliberately shares no likelihood code with [`crate::bma`]:
//! it projects the data onto an explicit Helmert basis of the space orthogonal
//! to the intercept and evaluates each model's marginal density from a dense
//! covariance matrix (log-determinant plus quadratic form).

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bma::{PosteriorSummary, PriorConfig, SingleStage, TopModel, VariableSummary};
use crate::error::{Error, Result};
use crate::model_space::InclusionMask;
use crate::pipeline::{DesignMatrices, Observation, PanelTable, Role, RoleKind, Roster, Transform, VariableSpec, YearWindow};

/// Largest candidate count [`brute_force_pips`] accepts.
pub const BRUTE_FORCE_CAP: usize = 15;

/// Error structure of a simulated endogenous system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endogeneity {
    /// Number of endogenous regressors; they occupy the first `p` candidate columns.
    pub p: usize,
    /// `(p+1)×(p+1)` covariance of `(ε, η_1, …, η_p)`, row-major.
    pub sigma: Vec<Vec<f64>>,
    /// Target population correlation between each `X_j` and its instrument `Z_j`.
    pub instrument_strength: f64,
}

impl Endogeneity {
    pub fn sigma_matrix(&self) -> Result<DMatrix<f64>> {
        let d = self.p + 1;
        if self.sigma.len() != d || self.sigma.iter().any(|r| r.len() != d) {
            return Err(Error::Config(format!("sigma must be {d}x{d}")));
        }
        Ok(DMatrix::from_fn(d, d, |i, j| self.sigma[i][j]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    /// Candidate columns of the outcome equation (`[X W]` when endogenous).
    pub k: usize,
    pub true_mask: InclusionMask,
    /// One coefficient per included column, in column order.
    pub true_coefficients: Vec<f64>,
    /// Outcome noise SD; ignored when `endogeneity` is set (then `Σ_00` applies).
    pub noise_sd: f64,
    pub intercept: f64,
    pub endogeneity: Option<Endogeneity>,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Exogenous design with `true` coefficients placed on `included`.
    pub fn linear(n: usize, k: usize, included: &[usize], coefficients: &[f64], noise_sd: f64, seed: u64) -> Self {
        Self {
            n,
            k,
            true_mask: InclusionMask::from_indices(k, included),
            true_coefficients: coefficients.to_vec(),
            noise_sd,
            intercept: 0.0,
            endogeneity: None,
            seed,
        }
    }

    /// One endogenous regressor with coefficient `beta`, `q` irrelevant exogenous
    /// regressors, unit error variances and error correlation `rho_error`.
    pub fn single_endogenous(n: usize, q: usize, beta: f64, rho_error: f64, strength: f64, seed: u64) -> Self {
        Self {
            n,
            k: q + 1,
            true_mask: InclusionMask::from_indices(q + 1, &[0]),
            true_coefficients: vec![beta],
            noise_sd: 1.0,
            intercept: 0.0,
            endogeneity: Some(Endogeneity {
                p: 1,
                sigma: vec![vec![1.0, rho_error], vec![rho_error, 1.0]],
                instrument_strength: strength,
            }),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.true_mask.len() != self.k {
            return Err(Error::Config(format!(
                "true mask has {} bits for {} candidates",
                self.true_mask.len(),
                self.k
            )));
        }
        if self.true_coefficients.len() != self.true_mask.count_ones() {
            return Err(Error::Config(format!(
                "{} coefficients for {} included columns",
                self.true_coefficients.len(),
                self.true_mask.count_ones()
            )));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config(format!("noise_sd must be positive, got {}", self.noise_sd)));
        }
        if let Some(e) = &self.endogeneity {
            if e.p == 0 || e.p > self.k {
                return Err(Error::Config(format!("p = {} must lie in 1..={}", e.p, self.k)));
            }
            let sigma = e.sigma_matrix()?;
            if !crate::linalg::is_positive_definite(&sigma) {
                return Err(Error::Config("sigma is not symmetric positive definite".into()));
            }
            if !(e.instrument_strength > 0.0 && e.instrument_strength < 1.0) {
                return Err(Error::Config(format!(
                    "instrument strength {} is unreachable; it must lie strictly between 0 and 1",
                    e.instrument_strength
                )));
            }
        }
        Ok(())
    }

    fn dense_coefficients(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.k);
        for (j, &c) in self.true_mask.iter_ones().zip(&self.true_coefficients) {
            b[j] = c;
        }
        b
    }
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `y = intercept + X_true·b + noise`, all columns i.i.d. standard normal.
pub fn generate_linear(config: &SyntheticConfig) -> Result<SingleStage> {
    config.validate()?;
    if config.endogeneity.is_some() {
        return Err(Error::Config("use generate_endogenous for configurations with endogeneity".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let columns = normal_matrix(config.n, config.k, &mut rng);
    let noise = normal_matrix(config.n, 1, &mut rng).column(0) * config.noise_sd;
    let y = (&columns * config.dense_coefficients()).add_scalar(config.intercept) + noise;
    SingleStage::unnamed(y, columns)
}

/// Simulates `y = Xβ + Wγ + ε`, `X_j = δ_j·Z_j + η_j` with `(ε, η) ~ N(0, Σ)`.
///
/// `Z` and `W` are i.i.d. standard normal and `δ_j = ρ·sqrt(σ_jj/(1-ρ²))`, which
/// makes the population correlation of `X_j` and `Z_j` exactly `ρ`.
pub fn generate_endogenous(config: &SyntheticConfig) -> Result<DesignMatrices> {
    config.validate()?;
    let endo = config
        .endogeneity
        .as_ref()
        .ok_or_else(|| Error::Config("configuration has no endogeneity block".into()))?;
    let (n, p) = (config.n, endo.p);
    let q = config.k - p;
    let sigma = endo.sigma_matrix()?;
    let chol = sigma.clone().cholesky().expect("validated positive definite");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let z = normal_matrix(n, p, &mut rng);
    let w = normal_matrix(n, q, &mut rng);
    let errors = normal_matrix(n, p + 1, &mut rng) * chol.l().transpose();
    let rho = endo.instrument_strength;
    let mut x = DMatrix::zeros(n, p);
    for j in 0..p {
        let delta = rho * (sigma[(j + 1, j + 1)] / (1.0 - rho * rho)).sqrt();
        x.set_column(j, &(z.column(j) * delta + errors.column(j + 1)));
    }
    let b = config.dense_coefficients();
    let y = (&x * b.rows(0, p) + &w * b.rows(p, q) + errors.column(0)).add_scalar(config.intercept);
    DesignMatrices::new(
        (1..=n).map(|i| format!("C{i:05}")).collect(),
        "y".into(),
        y,
        x,
        (1..=p).map(|j| format!("x{j}")).collect(),
        w,
        (1..=q).map(|j| format!("w{j}")).collect(),
        z,
        (1..=p).map(|j| format!("z{j}")).collect(),
    )
}

/// Orthonormal basis of the complement of the constant vector, as `(n-1) × n` rows.
fn helmert(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n - 1, n, |r, c| {
        let k = (r + 1) as f64;
        let scale = 1.0 / (k * (k + 1.0)).sqrt();
        match c.cmp(&(r + 1)) {
            std::cmp::Ordering::Less => scale,
            std::cmp::Ordering::Equal => -k * scale,
            std::cmp::Ordering::Greater => 0.0,
        }
    })
}

struct DenseModel {
    log_density: f64,
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// Marginal density (up to a model-independent constant) and slope moments for
/// one model, from `ỹ ~ N(0, σ²·(I + g·C(CᵀC)⁻¹Cᵀ))` with `σ²` integrated out.
fn dense_model(yt: &DVector<f64>, ct: &DMatrix<f64>, g: f64) -> Option<DenseModel> {
    let m = yt.len();
    let k = ct.ncols();
    if k + 1 > m {
        return None;
    }
    let mut v = DMatrix::identity(m, m);
    let mut gram_inv = DMatrix::zeros(0, 0);
    if k > 0 {
        let gram = ct.tr_mul(ct);
        let svd = gram.clone().svd(false, false);
        let max = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-10 * max.max(f64::MIN_POSITIVE) {
            return None;
        }
        gram_inv = gram.try_inverse()?;
        v += ct * &gram_inv * ct.transpose() * g;
    }
    let lu = v.lu();
    let log_det = lu.determinant().ln();
    let v_inv_y = lu.solve(yt)?;
    let quad = yt.dot(&v_inv_y);
    let log_density = -0.5 * log_det - 0.5 * m as f64 * quad.ln();

    let (mut mean, mut var) = (Vec::new(), Vec::new());
    if k > 0 {
        // β | σ² ~ N(0, g·σ²·(CᵀC)⁻¹); condition on ỹ = Cβ + e
        let prior_cov = &gram_inv * g;
        let cross = &prior_cov * ct.transpose();
        let post_mean = &cross * &v_inv_y;
        let v_inv_cross_t = lu.solve(&cross.transpose())?;
        let post_cov_unit = &prior_cov - &cross * v_inv_cross_t;
        let sigma2 = quad / (m as f64 - 2.0);
        mean = post_mean.iter().copied().collect();
        var = post_cov_unit.diagonal().iter().map(|d| d * sigma2).collect();
    }
    Some(DenseModel {
        log_density,
        mean,
        var,
    })
}

/// Enumerates all `2^K` models by the dense route and aggregates inclusion
/// probabilities, posterior means and posterior SDs.
pub fn brute_force_pips(y: &DVector<f64>, columns: &DMatrix<f64>, prior: &PriorConfig) -> Result<PosteriorSummary> {
    let n = y.len();
    let k = columns.ncols();
    if k > BRUTE_FORCE_CAP {
        return Err(Error::EnumerationCap { k, cap: BRUTE_FORCE_CAP });
    }
    if columns.nrows() != n || n < 3 {
        return Err(Error::Dimension(format!("need matching rows and n >= 3, got n = {n}")));
    }
    prior.g.validate()?;
    let g = prior.g.value(n);
    let h = helmert(n);
    let yt = &h * y;
    let xt = &h * columns;

    let total = 1usize << k;
    let mut log_d = vec![f64::NEG_INFINITY; total];
    let mut fits: Vec<Option<DenseModel>> = Vec::with_capacity(total);
    let mut deficient = 0;
    for r in 0..total {
        let mask = InclusionMask::from_rank(k, r as u64);
        let idx = mask.indices();
        let ct = DMatrix::from_fn(n - 1, idx.len(), |i, a| xt[(i, idx[a])]);
        let fit = if idx.len() + 2 > n { None } else { dense_model(&yt, &ct, g) };
        match &fit {
            Some(f) => log_d[r] = f.log_density,
            None => deficient += 1,
        }
        fits.push(fit);
    }
    let max = log_d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_d.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = weights.iter().sum();

    let (mut pip, mut m1, mut m2) = (vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    for (r, fit) in fits.iter().enumerate() {
        let Some(fit) = fit else { continue };
        let w = weights[r] / z;
        for (a, j) in InclusionMask::from_rank(k, r as u64).iter_ones().enumerate() {
            pip[j] += w;
            m1[j] += w * fit.mean[a];
            m2[j] += w * (fit.var[a] + fit.mean[a] * fit.mean[a]);
        }
    }
    let mut ranked: Vec<usize> = (0..total).collect();
    ranked.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    Ok(PosteriorSummary {
        variables: (0..k)
            .map(|j| VariableSummary {
                name: format!("x{}", j + 1),
                pip: pip[j],
                post_mean: m1[j],
                post_sd: (m2[j] - m1[j] * m1[j]).max(0.0).sqrt(),
            })
            .collect(),
        models_visited: total,
        rank_deficient_models: deficient,
        top_models: ranked
            .into_iter()
            .take(10)
            .map(|r| TopModel {
                mask: InclusionMask::from_rank(k, r as u64),
                pmp: weights[r] / z,
            })
            .collect(),
    })
}

/// Classical fits of `y` on `[X W]`; slopes only, in `[X W]` column order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFits {
    pub ols: DVector<f64>,
    pub tsls: DVector<f64>,
}

fn with_intercept(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks[0].nrows();
    let width: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::from_element(n, width + 1, 1.0);
    let mut at = 1;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    out
}

fn least_squares(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() < a.ncols() {
        return Err(Error::RankDeficient(format!("{} rows for {} columns", a.nrows(), a.ncols())));
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let max = r.diagonal().abs().max();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-10 * max.max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficient("regressor matrix does not have full column rank".into()));
    }
    let qtb = qr.q().transpose() * b;
    r.solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))
}

/// Ordinary least squares on `[1 X W]` and two-stage least squares that replaces
/// `X` by its projection on `[1 Z W]`.
pub fn reference_fits(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    z: &DMatrix<f64>,
) -> Result<ReferenceFits> {
    if z.ncols() < x.ncols() {
        return Err(Error::Dimension(format!("{} instruments for {} endogenous columns", z.ncols(), x.ncols())));
    }
    let y_mat = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let ols = least_squares(&with_intercept(&[x, w]), &y_mat)?;
    let first = with_intercept(&[z, w]);
    let x_hat = &first * least_squares(&first, x)?;
    let tsls = least_squares(&with_intercept(&[&x_hat, w]), &y_mat)?;
    let slopes = |m: DMatrix<f64>| DVector::from_iterator(m.nrows() - 1, m.column(0).iter().skip(1).copied());
    Ok(ReferenceFits {
        ols: slopes(ols),
        tsls: slopes(tsls),
    })
}

/// Writes a design as a one-year long panel plus the roster that reassembles it.
pub fn design_to_panel(design: &DesignMatrices, year: i32) -> (PanelTable, Roster) {
    let window = YearWindow { start: year, end: year };
    let mut specs = vec![VariableSpec::new(&design.outcome_name, Role::Outcome, window)];
    let mut columns: Vec<(String, Vec<f64>)> = vec![(design.outcome_name.clone(), design.y.iter().copied().collect())];
    for j in 0..design.p() {
        specs.push(VariableSpec::new(&design.x_names[j], Role::Endogenous, window));
        columns.push((design.x_names[j].clone(), design.x.column(j).iter().copied().collect()));
    }
    for j in 0..design.q() {
        specs.push(VariableSpec::new(&design.w_names[j], Role::Exogenous, window));
        columns.push((design.w_names[j].clone(), design.w.column(j).iter().copied().collect()));
    }
    for j in 0..design.p() {
        specs.push(VariableSpec::new(
            &design.z_names[j],
            Role::Instrument {
                target: design.x_names[j].clone(),
            },
            window,
        ));
        columns.push((design.z_names[j].clone(), design.z.column(j).iter().copied().collect()));
    }
    let mut rows = Vec::with_capacity(columns.len() * design.n());
    for (i, country) in design.countries.iter().enumerate() {
        for (name, values) in &columns {
            rows.push(Observation {
                country: country.clone(),
                year,
                variable: name.clone(),
                value: Some(values[i]),
            });
        }
    }
    let roster = Roster::new(specs).expect("design names are unique");
    (PanelTable { rows }, roster)
}

/// Options for [`simulate_panel`].
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSimulation {
    pub countries: usize,
    /// Probability that any single annual cell is missing.
    pub missing_rate: f64,
    /// Within-country year-to-year noise relative to the cross-country spread.
    pub annual_noise: f64,
    pub seed: u64,
}

impl PanelSimulation {
    pub fn new(countries: usize, seed: u64) -> Self {
        Self {
            countries,
            missing_rate: 0.02,
            annual_noise: 0.3,
            seed,
        }
    }
}

/// Generates an annual panel for every series a roster uses.
///
/// Each country gets a persistent level per series plus annual noise, so lagged
/// windows of the same series act as strong instruments. The outcome depends
/// on the first few endogenous and exogenous levels. Log-transformed series are
/// strictly positive.
pub fn simulate_panel(roster: &Roster, options: &PanelSimulation) -> PanelTable {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut years: BTreeMap<&str, (i32, i32)> = BTreeMap::new();
    let mut log_series = BTreeSet::new();
    for spec in &roster.variables {
        let e = years.entry(spec.series()).or_insert((spec.window.start, spec.window.end));
        e.0 = e.0.min(spec.window.start);
        e.1 = e.1.max(spec.window.end);
        if spec.transform == Transform::Log10 {
            log_series.insert(spec.series());
        }
    }
    let outcome_series = roster.outcome().series();
    let drivers: Vec<&str> = roster
        .variables
        .iter()
        .filter(|s| matches!(s.role, RoleKind::Endogenous | RoleKind::Exogenous))
        .map(|s| s.series())
        .take(4)
        .collect();

    let countries: Vec<String> = (1..=options.countries).map(|i| format!("C{i:03}")).collect();
    let mut rows = Vec::new();
    for country in &countries {
        let levels: BTreeMap<&str, f64> = years
            .keys()
            .map(|&s| (s, StandardNormal.sample(&mut rng)))
            .collect();
        let shock: f64 = StandardNormal.sample(&mut rng);
        let outcome_level = drivers.iter().map(|d| levels[d]).sum::<f64>() + shock;
        for (&series, &(start, end)) in &years {
            let level = if series == outcome_series { outcome_level } else { levels[series] };
            for year in start..=end {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let raw = level + options.annual_noise * noise;
                let value = if log_series.contains(series) {
                    10f64.powf(3.0 + 0.5 * raw)
                } else {
                    20.0 + 10.0 * raw
                };
                let missing = rng.random::<f64>() < options.missing_rate;
                rows.push(Observation {
                    country: country.clone(),
                    year,
                    variable: series.to_string(),
                    value: (!missing).then_some(value),
                });
            }
        }
    }
    PanelTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::prepare;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        crate::pipeline::cross_section::pearson(a, b).unwrap()
    }

    #[test]
    fn helmert_rows_are_orthonormal_and_sum_to_zero() {
        let h = helmert(7);
        let gram = &h * h.transpose();
        assert!((gram - DMatrix::identity(6, 6)).abs().max() < 1e-12);
        assert!((&h * DVector::from_element(7, 1.0)).abs().max() < 1e-12);
    }

    #[test]
    fn noiseless_linear_recovers_coefficients() {
        let mut cfg = SyntheticConfig::linear(40, 5, &[0, 3], &[1.5, -2.0], 1e-9, 3);
        cfg.intercept = 0.7;
        let s = generate_linear(&cfg).unwrap();
        let none = DMatrix::zeros(40, 0);
        let fit = reference_fits(&s.y, &none, &s.columns, &none).unwrap().ols;
        let truth = [1.5, 0.0, 0.0, -2.0, 0.0];
        for (a, b) in fit.iter().zip(truth) {
            assert!((a - b).abs() < 1e-6, "{fit}");
        }
    }

    #[test]
    fn empty_truth_is_uncorrelated_noise() {
        let s = generate_linear(&SyntheticConfig::linear(20_000, 3, &[], &[], 1.0, 9)).unwrap();
        for j in 0..3 {
            let c = corr(s.y.as_slice(), s.columns.column(j).as_slice());
            assert!(c.abs() < 4.0 / (20_000f64).sqrt(), "{c}");
        }
    }

    #[test]
    fn generators_are_seed_deterministic() {
        let cfg = SyntheticConfig::single_endogenous(50, 3, 1.0, 0.5, 0.8, 11);
        assert_eq!(generate_endogenous(&cfg).unwrap(), generate_endogenous(&cfg).unwrap());
        let lin = SyntheticConfig::linear(30, 4, &[1], &[2.0], 1.0, 5);
        assert_eq!(generate_linear(&lin).unwrap(), generate_linear(&lin).unwrap());
    }

    fn error_correlation(d: &DesignMatrices, cfg: &SyntheticConfig) -> f64 {
        let beta = cfg.true_coefficients[0];
        let eps: Vec<f64> = (0..d.n()).map(|i| d.y[i] - beta * d.x[(i, 0)]).collect();
        let rho = cfg.endogeneity.as_ref().unwrap().instrument_strength;
        let delta = rho / (1.0 - rho * rho).sqrt();
        let eta: Vec<f64> = (0..d.n()).map(|i| d.x[(i, 0)] - delta * d.z[(i, 0)]).collect();
        corr(&eps, &eta)
    }

    #[test]
    fn independent_errors_are_uncorrelated() {
        let cfg = SyntheticConfig::single_endogenous(10_000, 2, 1.0, 0.0, 0.9, 21);
        let d = generate_endogenous(&cfg).unwrap();
        assert!(error_correlation(&d, &cfg).abs() < 3.0 / 100.0);
    }

    #[test]
    fn error_correlation_matches_sigma() {
        let cfg = SyntheticConfig::single_endogenous(10_000, 2, 1.0, 0.7, 0.9, 22);
        let d = generate_endogenous(&cfg).unwrap();
        assert!((error_correlation(&d, &cfg) - 0.7).abs() < 0.03);
    }

    #[test]
    fn instrument_strength_is_reached() {
        let cfg = SyntheticConfig::single_endogenous(10_000, 2, 1.0, 0.7, 0.9, 23);
        let d = generate_endogenous(&cfg).unwrap();
        let c = corr(d.x.column(0).as_slice(), d.z.column(0).as_slice());
        assert!((c - 0.9).abs() < 0.03, "{c}");
    }

    #[test]
    fn unreachable_strength_is_rejected() {
        for s in [0.0, 1.0, 1.2, -0.3] {
            let cfg = SyntheticConfig::single_endogenous(50, 2, 1.0, 0.5, s, 1);
            assert!(matches!(generate_endogenous(&cfg), Err(Error::Config(_))), "{s}");
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = SyntheticConfig::linear(30, 4, &[1], &[2.0, 3.0], 1.0, 5);
        assert!(cfg.validate().is_err());
        cfg.true_coefficients = vec![2.0];
        cfg.noise_sd = 0.0;
        assert!(cfg.validate().is_err());
        let mut endo = SyntheticConfig::single_endogenous(50, 2, 1.0, 0.5, 0.8, 1);
        endo.endogeneity.as_mut().unwrap().sigma = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(endo.validate().is_err());
    }

    #[test]
    fn perfect_instrument_gives_ols() {
        let cfg = SyntheticConfig::single_endogenous(200, 3, 1.0, 0.6, 0.8, 4);
        let d = generate_endogenous(&cfg).unwrap();
        let f = reference_fits(&d.y, &d.x, &d.w, &d.x).unwrap();
        assert!((&f.ols - &f.tsls).abs().max() < 1e-10);
    }

    #[test]
    fn ols_and_tsls_agree_under_exogeneity() {
        let cfg = SyntheticConfig::single_endogenous(20_000, 2, 1.0, 0.0, 0.9, 6);
        let d = generate_endogenous(&cfg).unwrap();
        let f = reference_fits(&d.y, &d.x, &d.w, &d.z).unwrap();
        assert!((f.ols[0] - f.tsls[0]).abs() < 0.03, "{} {}", f.ols[0], f.tsls[0]);
    }

    #[test]
    fn collinear_regressors_fail() {
        let cfg = SyntheticConfig::single_endogenous(50, 2, 1.0, 0.0, 0.9, 6);
        let d = generate_endogenous(&cfg).unwrap();
        let w = hstack_dup(&d.w);
        assert!(matches!(reference_fits(&d.y, &d.x, &w, &d.z), Err(Error::RankDeficient(_))));
    }

    fn hstack_dup(w: &DMatrix<f64>) -> DMatrix<f64> {
        crate::linalg::hstack(w, &w.columns(0, 1).into_owned())
    }

    #[test]
    fn duplicated_column_splits_mass_evenly() {
        let s = generate_linear(&SyntheticConfig::linear(30, 1, &[0], &[0.3], 1.0, 2)).unwrap();
        let dup = crate::linalg::hstack(&s.columns, &s.columns);
        let r = brute_force_pips(&s.y, &dup, &PriorConfig::fixed(1.0)).unwrap();
        assert!((r.variables[0].pip - r.variables[1].pip).abs() < 1e-12);
        assert_eq!(r.rank_deficient_models, 1);
        assert!(!r.top_models.iter().any(|m| m.mask.count_ones() == 2 && m.pmp > 0.0));
    }

    #[test]
    fn brute_force_refuses_large_k() {
        let y = DVector::zeros(40);
        let x = DMatrix::zeros(40, 16);
        assert!(matches!(
            brute_force_pips(&y, &x, &PriorConfig::default()),
            Err(Error::EnumerationCap { k: 16, .. })
        ));
    }

    #[test]
    fn design_round_trips_through_panel_csv() {
        let cfg = SyntheticConfig::single_endogenous(25, 3, 1.0, 0.4, 0.8, 31);
        let d = generate_endogenous(&cfg).unwrap();
        let (panel, roster) = design_to_panel(&d, 2005);
        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        let text = roster.to_toml_string();
        let roster = Roster::from_toml_str(&text).unwrap();
        let panel = crate::pipeline::read_panel(buf.as_slice(), &roster).unwrap();
        let prepared = prepare(&panel, &roster, None).unwrap();
        assert_eq!(prepared.design, d);
        assert!(prepared.drop_log.is_empty());
    }

    #[test]
    fn simulated_panel_feeds_the_pipeline() {
        let w = |a, b| YearWindow::new(a, b).unwrap();
        let roster = Roster::new(vec![
            VariableSpec::new("y", Role::Outcome, w(2001, 2010)),
            VariableSpec::new("gdp", Role::Endogenous, w(2001, 2010)).with_transform(Transform::Log10),
            VariableSpec::new("gdp_lag", Role::Instrument { target: "gdp".into() }, w(1991, 2000))
                .with_series("gdp")
                .with_transform(Transform::Log10),
            VariableSpec::new("land", Role::Exogenous, w(2001, 2010)),
        ])
        .unwrap();
        let panel = simulate_panel(&roster, &PanelSimulation::new(60, 8));
        let prepared = prepare(&panel, &roster, None).unwrap();
        assert_eq!(prepared.design.n() + prepared.drop_log.len(), 60);
        let c = prepared.diagnostics.instruments[0].correlation.unwrap();
        assert!(c > 0.8, "{c}");
        assert_eq!(simulate_panel(&roster, &PanelSimulation::new(60, 8)), panel);
    }
}
