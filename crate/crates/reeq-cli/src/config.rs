//! Run configuration: a TOML file with flat key = value sections. Unknown
//! keys are rejected so typos fail fast instead of silently running with
//! defaults.

use anyhow::{bail, Context};
use reeq_core::estimate::{
    EstimationMode, EstimationSpec, OptimizerSettings, RateMode, ThetaInit,
};
use reeq_core::riccati::SolverConfig;
use reeq_core::ModelParams;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed shared by every stochastic component unless overridden.
    pub seed: Option<u64>,
    pub model: ModelSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub estimation: EstimationSection,
    #[serde(default)]
    pub ingest: IngestSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub r: f64,
    pub xi: f64,
    pub beta: f64,
    pub phi: f64,
    pub alpha_d: f64,
    pub alpha_i: f64,
    pub alpha_theta: f64,
    pub sigma_0: f64,
    pub sigma_d: f64,
    pub sigma_i: f64,
    pub sigma_theta: f64,
}

impl ModelSection {
    pub fn to_params(&self) -> ModelParams {
        ModelParams {
            r: self.r,
            xi: self.xi,
            beta: self.beta,
            phi: self.phi,
            alpha_d: self.alpha_d,
            alpha_i: self.alpha_i,
            alpha_theta: self.alpha_theta,
            sigma_0: self.sigma_0,
            sigma_d: self.sigma_d,
            sigma_i: self.sigma_i,
            sigma_theta: self.sigma_theta,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub n_starts: usize,
    pub coeff_min: f64,
    pub coeff_max: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub newton_max_iter: usize,
    pub residual_tol: f64,
    pub dedupe_tol: f64,
    pub classification_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            n_starts: d.n_starts,
            coeff_min: d.coeff_range.0,
            coeff_max: d.coeff_range.1,
            l_min: d.l_range.0,
            l_max: d.l_range.1,
            newton_max_iter: d.newton_max_iter,
            residual_tol: d.residual_tol,
            dedupe_tol: d.dedupe_tol,
            classification_tol: d.classification_tol,
        }
    }
}

impl SolverSection {
    pub fn to_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            n_starts: self.n_starts,
            coeff_range: (self.coeff_min, self.coeff_max),
            l_range: (self.l_min, self.l_max),
            newton_max_iter: self.newton_max_iter,
            residual_tol: self.residual_tol,
            dedupe_tol: self.dedupe_tol,
            rng_seed: seed,
            classification_tol: self.classification_tol,
            collect_diagnostics: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub length: usize,
    pub dt: f64,
    /// "efficient" or four explicit values `[p0, pD0, pD1, pI]`.
    pub coefficients: CoeffChoice,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            length: 300,
            dt: 1.0,
            coefficients: CoeffChoice::Efficient,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoeffChoice {
    Efficient,
    Explicit([f64; 4]),
    Named(String),
}

impl CoeffChoice {
    pub fn resolve(&self, params: &ModelParams) -> anyhow::Result<reeq_core::PriceCoefficients> {
        match self {
            CoeffChoice::Efficient => Ok(reeq_core::efficient::efficient_coefficients(params)?),
            CoeffChoice::Named(s) if s == "efficient" => {
                Ok(reeq_core::efficient::efficient_coefficients(params)?)
            }
            CoeffChoice::Named(s) => bail!("unknown coefficient choice '{s}'"),
            CoeffChoice::Explicit(v) => Ok(reeq_core::PriceCoefficients::new(
                v[0], v[1], v[2], v[3],
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationSection {
    /// "typeA", "typeB", or "both".
    pub mode: String,
    /// "fixed:<r>" or "free".
    pub rate: String,
    /// De-trending rate; when absent the series metadata value is used.
    pub xi: Option<f64>,
    pub max_evals: usize,
    pub restarts: usize,
    pub tolerance: f64,
    pub theta_init: Option<[f64; 7]>,
}

impl Default for EstimationSection {
    fn default() -> Self {
        EstimationSection {
            mode: "both".into(),
            rate: "fixed:0.03".into(),
            xi: None,
            max_evals: 6000,
            restarts: 3,
            tolerance: 1e-9,
            theta_init: None,
        }
    }
}

pub fn parse_rate(s: &str) -> anyhow::Result<RateMode> {
    if s == "free" {
        return Ok(RateMode::Free);
    }
    if let Some(v) = s.strip_prefix("fixed:") {
        let r: f64 = v
            .parse()
            .with_context(|| format!("unparseable rate '{v}'"))?;
        return Ok(RateMode::Fixed(r));
    }
    bail!("rate must be 'free' or 'fixed:<value>', got '{s}'")
}

pub fn parse_modes(s: &str) -> anyhow::Result<Vec<EstimationMode>> {
    match s {
        "typeA" | "typea" | "a" => Ok(vec![EstimationMode::TypeAConstrained]),
        "typeB" | "typeb" | "b" => Ok(vec![EstimationMode::TypeBFree]),
        "both" => Ok(vec![
            EstimationMode::TypeAConstrained,
            EstimationMode::TypeBFree,
        ]),
        other => bail!("mode must be typeA, typeB, or both, got '{other}'"),
    }
}

impl EstimationSection {
    pub fn to_spec(
        &self,
        mode: EstimationMode,
        xi_fallback: f64,
        seed: u64,
    ) -> anyhow::Result<EstimationSpec> {
        let mut spec = EstimationSpec::new(
            mode,
            parse_rate(&self.rate)?,
            self.xi.unwrap_or(xi_fallback),
        );
        spec.optimizer = OptimizerSettings {
            max_evals: self.max_evals,
            tolerance: self.tolerance,
            restarts: self.restarts,
            seed,
        };
        if let Some(t) = self.theta_init {
            spec.theta_init = Some(ThetaInit {
                alpha_d: t[0],
                alpha_i: t[1],
                alpha_theta: t[2],
                sigma_0: t[3],
                sigma_d: t[4],
                sigma_theta: t[5],
                rho_i: t[6],
            });
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestSection {
    pub date_column: String,
    pub price_column: String,
    pub dividend_column: String,
    pub cpi_column: Option<String>,
    /// "none", "last", or "year:<decimal year>".
    pub deflate: String,
    pub annual_january: bool,
    /// "log" or "arithmetic".
    pub growth: String,
    /// Override the estimated growth rate.
    pub xi: Option<f64>,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            date_column: "date".into(),
            price_column: "price".into(),
            dividend_column: "dividend".into(),
            cpi_column: None,
            deflate: "none".into(),
            annual_january: false,
            growth: "log".into(),
            xi: None,
        }
    }
}

/// Loads and validates a TOML run configuration.
pub fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg: RunConfig =
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    cfg.model
        .to_params()
        .validated()
        .with_context(|| "model parameters fail validation")?;
    Ok(cfg)
}
