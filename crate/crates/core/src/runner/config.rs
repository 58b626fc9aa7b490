//! Sweep configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::measure::Scheme;
use crate::noise::LindbladParams;
use crate::telecorrect::{EfficiencyModel, DEFAULT_ANCILLA_ALPHA};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Rsb,
    Gkp,
    Twirl,
    BreakEven,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Rsb => "rsb",
            ExperimentKind::Gkp => "gkp",
            ExperimentKind::Twirl => "twirl",
            ExperimentKind::BreakEven => "break-even",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rsb" => Ok(Self::Rsb),
            "gkp" => Ok(Self::Gkp),
            "twirl" => Ok(Self::Twirl),
            "break-even" => Ok(Self::BreakEven),
            other => Err(Error::Config(format!("unknown experiment kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RsbFamily {
    Cat,
    Bin,
}

impl RsbFamily {
    pub fn name(&self) -> &'static str {
        match self {
            RsbFamily::Cat => "cat",
            RsbFamily::Bin => "bin",
        }
    }
}

/// Loss and dephasing strengths. Dephasing is given either directly or as
/// the ratio `κ/κ_φ`; every listed value is combined with every `kappa_tau`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseGrid {
    #[serde(default = "zero_grid")]
    pub kappa_tau: Vec<f64>,
    #[serde(default)]
    pub kappa_phi_tau: Option<Vec<f64>>,
    #[serde(default)]
    pub kappa_ratio: Option<Vec<f64>>,
}

fn zero_grid() -> Vec<f64> {
    vec![0.0]
}

impl Default for NoiseGrid {
    fn default() -> Self {
        Self {
            kappa_tau: zero_grid(),
            kappa_phi_tau: None,
            kappa_ratio: None,
        }
    }
}

impl NoiseGrid {
    pub fn pairs(&self) -> Result<Vec<LindbladParams>> {
        let mut out = Vec::new();
        match (&self.kappa_phi_tau, &self.kappa_ratio) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give kappa_phi_tau or kappa_ratio, not both".into()));
            }
            (None, Some(ratios)) => {
                for &kt in &self.kappa_tau {
                    for &r in ratios {
                        if !(r > 0.0) {
                            return Err(Error::Config(format!("kappa_ratio must be positive, got {r}")));
                        }
                        out.push(LindbladParams::new(kt, kt / r)?);
                    }
                }
            }
            (phi, None) => {
                let phi = phi.clone().unwrap_or_else(zero_grid);
                for &kt in &self.kappa_tau {
                    for &kp in &phi {
                        out.push(LindbladParams::new(kt, kp)?);
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("noise grid is empty".into()));
        }
        Ok(out)
    }
}

fn default_eta() -> Vec<f64> {
    vec![1.0]
}

fn default_ancilla_alpha() -> f64 {
    DEFAULT_ANCILLA_ALPHA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsbGrid {
    pub family: RsbFamily,
    pub order: usize,
    /// Mean photon numbers. Binomial codes need `2 n̄ / N` to be an integer.
    pub nbar: Vec<f64>,
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_eta")]
    pub eta: Vec<f64>,
    #[serde(default = "default_ancilla_alpha")]
    pub ancilla_alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GkpGrid {
    /// Envelope widths; data and ancilla use the same value.
    pub delta: Vec<f64>,
    #[serde(default = "default_eta")]
    pub eta: Vec<f64>,
    #[serde(default = "default_models")]
    pub efficiency_model: Vec<EfficiencyModel>,
}

fn default_models() -> Vec<EfficiencyModel> {
    vec![EfficiencyModel::Amplified]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Fixed truncation for the data mode; chosen per point when absent.
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
}

fn default_bins() -> usize {
    256
}

fn default_max_dim() -> usize {
    300
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            dim: None,
            bins: default_bins(),
            max_dim: default_max_dim(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseGrid,
    #[serde(default)]
    pub rsb: Option<RsbGrid>,
    /// Also used by `twirl` sweeps, where the efficiency model
    /// `loss-with-rescaled-boundaries` selects the halved detector variance.
    #[serde(default)]
    pub gkp: Option<GkpGrid>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn check_grid(name: &str, v: &[f64], ok: impl Fn(f64) -> bool) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Config(format!("{name} grid is empty")));
    }
    if let Some(bad) = v.iter().find(|x| !ok(**x)) {
        return Err(Error::Config(format!("{name} value {bad} out of range")));
    }
    Ok(())
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.pairs()?;
        if !(8..=1 << 16).contains(&self.numerics.bins) {
            return Err(Error::Config(format!("bins {} outside [8, 65536]", self.numerics.bins)));
        }
        if let Some(d) = self.numerics.dim {
            if d < 2 || d > self.numerics.max_dim {
                return Err(Error::Config(format!("dim {d} outside [2, {}]", self.numerics.max_dim)));
            }
        }
        let eta_ok = |e: f64| e > 0.0 && e <= 1.0;
        match self.kind {
            ExperimentKind::Rsb => {
                let g = self.rsb.as_ref().ok_or_else(|| Error::Config("rsb sweep needs an [rsb] table".into()))?;
                if g.order == 0 {
                    return Err(Error::Config("rotation order must be >= 1".into()));
                }
                check_grid("nbar", &g.nbar, |n| n > 0.0 && n.is_finite())?;
                check_grid("eta", &g.eta, eta_ok)?;
                if g.schemes.is_empty() {
                    return Err(Error::Config("schemes list is empty".into()));
                }
                if g.family == RsbFamily::Bin {
                    for &n in &g.nbar {
                        let k = 2.0 * n / g.order as f64;
                        if (k - k.round()).abs() > 1e-9 || k.round() < 2.0 {
                            return Err(Error::Config(format!(
                                "bin code with N={} has no n̄ = {n} (need 2n̄/N an integer >= 2)",
                                g.order
                            )));
                        }
                    }
                }
            }
            ExperimentKind::Gkp | ExperimentKind::Twirl => {
                let g = self.gkp.as_ref().ok_or_else(|| Error::Config("gkp/twirl sweep needs a [gkp] table".into()))?;
                check_grid("delta", &g.delta, |d| d > 0.0 && d.is_finite())?;
                check_grid("eta", &g.eta, eta_ok)?;
                if g.efficiency_model.is_empty() {
                    return Err(Error::Config("efficiency_model list is empty".into()));
                }
                if self.kind == ExperimentKind::Twirl && self.noise.pairs()?.iter().any(|p| !p.is_noiseless()) {
                    return Err(Error::Config("twirl sweeps take no Lindblad noise".into()));
                }
            }
            ExperimentKind::BreakEven => {}
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output path.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
