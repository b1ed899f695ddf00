//! Flat run configuration shared by the JSON config file and the flags.
//!
//! Every key is optional. A value given on the command line replaces the
//! one from `--config`; anything still missing falls back to a default that
//! depends on the experiment. The resolved configuration is echoed in
//! `manifest.json`.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use qdgf_core::operators::CurlStencil;
use qdgf_core::{FieldKind, Sign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Spectrum,
    Sample,
    Condition,
    Concentration,
    Tail,
    ExemplarPoint,
    ExemplarHelicity,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::Sample => "sample",
            Experiment::Condition => "condition",
            Experiment::Concentration => "concentration",
            Experiment::Tail => "tail",
            Experiment::ExemplarPoint => "exemplar-point",
            Experiment::ExemplarHelicity => "exemplar-helicity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    /// `exp(−|r|²/2σ²)`.
    Gaussian,
    /// `exp(−|r|/L)`.
    Exponential,
    /// Isotropic incompressible flow with a gaussian longitudinal profile.
    Flow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ObservableName {
    /// `|φ(0)|²`.
    Point,
    /// `v(0)·curl v(0)`.
    Helicity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    /// Rejection while `P(±Q > u) ≥ 1e−3`, tilting beyond.
    Auto,
    Rejection,
    Tilted,
}

/// Parses a value by its JSON spelling so flags and config files agree.
fn by_serde_name<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_kind(s: &str) -> Result<FieldKind, String> {
    by_serde_name(s)
}

fn parse_stencil(s: &str) -> Result<CurlStencil, String> {
    by_serde_name(s)
}

fn parse_sign(s: &str) -> Result<Sign, String> {
    s.parse::<Sign>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Experiment to run (only needed with `qdgf run`).
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,

    /// Spatial dimension of the grid.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Half-width L of the box [−L, L]^d.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    /// Odd number of nodes per axis.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Field kind: real or complex.
    #[arg(long, value_parser = parse_kind)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<FieldKind>,

    /// Covariance kernel.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelName>,
    /// Width of the gaussian kernel.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Correlation length of the exponential kernel.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corr_length: Option<f64>,
    /// Kinetic energy E of the flow kernel.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    /// Taylor scale ℓ of the flow kernel.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taylor_scale: Option<f64>,

    /// Observable Q.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableName>,
    /// Curl stencil for the helicity: second_order or fourth_order.
    #[arg(long, value_parser = parse_stencil)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stencil: Option<CurlStencil>,

    /// Branch conditioned on: plus or minus.
    #[arg(long, value_parser = parse_sign, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sign: Option<Sign>,
    /// Thresholds u, comma separated and ascending.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    /// Quantile levels of ±Q used as thresholds when `u` is absent.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<Vec<f64>>,
    /// Mismatch tolerance ε.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Samples per threshold (or unconditional draws for `sample`).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Conditional sampler.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodChoice>,
    /// Random seed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Also run the opposite branch and the |Q|-conditioned combination.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<bool>,
    /// Write every realisation as a field file.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub save_fields: Option<bool>,

    /// Eigenvalues of the profile for `tail`, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigs: Option<Vec<f64>>,
    /// Monte Carlo draws per threshold for `tail` (0 disables).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_draws: Option<u64>,
    /// α of the tail lower bound.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,

    /// Output directory (default: $QDGF_OUT_DIR, then ./qdgf-out).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),* $(,)?) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl RunConfig {
    /// Reads a config file; unknown keys are rejected by name.
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    /// Values set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &RunConfig) -> Self {
        overlay!(self, top;
            experiment, dim, half_width, points, kind, kernel, sigma, corr_length, energy, taylor_scale,
            observable, stencil, sign, u, quantiles, epsilon, samples, method, seed, split, save_fields,
            eigs, mc_draws, alpha, out_dir);
        self
    }
}
