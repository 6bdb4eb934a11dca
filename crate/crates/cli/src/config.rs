use std::path::Path;

use bbm_core::approx::Variant;
use bbm_core::collision::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Listed under `--help`.
pub const CONFIG_KEYS: &str = "\
Config file (TOML sections, or the same structure as JSON when the file ends in .json).
Unknown keys are errors. Flags override file values.

[identities]     grid_n, half_length
[coeffs]         lambdas = [..], sweep_points
[profiles]       lambda, stride
[residual_scan]  lambda, sigmas = [..], variant = \"z\" | \"z-sharp\" | \"both\"
[simulate]       speeds = [..], centers = [..], half_length, n_points, dt, t_end,
                 dealias, record_every, record_values
[collide]        c1, c2, initial_mode = \"far_separated_sum\" | \"approx_v_at_minus_t\",
                 separation, separation_widths, max_spacing, domain_length, dt, dealias,
                 post_collision_factor, fit_window_width, seam_widths, residue_speed,
                 samples, records, control_run, frame_speed
[scaling]        c2_values = [..]   (other run settings come from [collide])
[diagnostics]    uses [collide]";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub identities: IdentitiesConfig,
    #[serde(default)]
    pub coeffs: CoeffsConfig,
    #[serde(default)]
    pub profiles: ProfilesConfig,
    #[serde(default)]
    pub residual_scan: ScanConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub collide: Option<ExperimentConfig>,
    #[serde(default)]
    pub scaling: ScalingConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitiesConfig {
    pub grid_n: usize,
    pub half_length: f64,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        let g = bbm_core::Grid::profile_default();
        Self {
            grid_n: g.n_points,
            half_length: g.half_length,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoeffsConfig {
    pub lambdas: Vec<f64>,
    pub sweep_points: usize,
}

impl Default for CoeffsConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.5],
            sweep_points: 19,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfilesConfig {
    pub lambda: f64,
    pub stride: usize,
}

impl Default for ProfilesConfig {
    fn default() -> Self {
        Self { lambda: 0.5, stride: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScanVariant {
    Z,
    ZSharp,
    Both,
}

impl ScanVariant {
    pub fn includes(self, v: Variant) -> bool {
        match self {
            Self::Both => true,
            Self::Z => v == Variant::SymmetricZ,
            Self::ZSharp => v == Variant::ModifiedZSharp,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub lambda: f64,
    pub sigmas: Vec<f64>,
    pub variant: ScanVariant,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            sigmas: bbm_core::fit::log_spaced(0.02, 0.2, 5),
            variant: ScanVariant::Both,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub speeds: Vec<f64>,
    pub centers: Vec<f64>,
    pub half_length: f64,
    pub n_points: usize,
    pub dt: f64,
    pub t_end: f64,
    pub dealias: bool,
    pub record_every: usize,
    pub record_values: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            speeds: vec![2.0],
            centers: vec![0.0],
            half_length: 50.0,
            n_points: 2048,
            dt: 0.01,
            t_end: 20.0,
            dealias: false,
            record_every: 100,
            record_values: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub c2_values: Vec<f64>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            c2_values: bbm_core::fit::log_spaced(0.03, 0.3, 5).iter().map(|s| 1.0 + s).collect(),
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if json {
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Comma-separated reals on the command line.
#[derive(Debug, Clone)]
pub struct Reals(pub Vec<f64>);

pub fn parse_list(s: &str) -> Result<Reals, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(Reals)
}
