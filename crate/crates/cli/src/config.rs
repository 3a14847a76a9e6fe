//! Experiment configuration: parsing, validation and hashing.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use fslice::grid::{GaussianPacket, Grid, GridState};
use fslice::hessian::HessianFamily;
use fslice::phimap::{PhiConfig, PhiVariant, ScanBox};
use fslice::reference::CnOptions;
use fslice::spin::SpinHamiltonian;
use fslice::{FieldSet, GaugeFunction, PolySpaceTime};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Propagate,
    Converge,
    #[serde(alias = "gauge-check")]
    Gauge,
    Spin,
    Exchange,
    Phimap,
    Hessian,
    Audit,
    #[serde(alias = "local-consistency")]
    Consistency,
}

impl CheckKind {
    /// Stable identifier written next to every table the check emits.
    pub fn tag(self) -> &'static str {
        match self {
            Self::Propagate => "sliced-propagation",
            Self::Converge => "global-convergence",
            Self::Gauge => "gauge-covariance",
            Self::Spin => "spin-convergence",
            Self::Exchange => "exchange-symmetry",
            Self::Phimap => "phase-map-determinant",
            Self::Hessian => "hessian-lower-bound",
            Self::Audit => "assumption-audit",
            Self::Consistency => "local-consistency",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Propagate => "propagate",
            Self::Converge => "converge",
            Self::Gauge => "gauge",
            Self::Spin => "spin",
            Self::Exchange => "exchange",
            Self::Phimap => "phimap",
            Self::Hessian => "hessian",
            Self::Audit => "audit",
            Self::Consistency => "consistency",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub half_width: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default)]
    pub momentum: Option<Vec<f64>>,
}

impl Default for PacketSpec {
    fn default() -> Self {
        Self { center: None, width: 1.0, momentum: None }
    }
}

fn one() -> f64 {
    1.0
}

impl PacketSpec {
    fn packet(&self, dim: usize) -> Result<GaussianPacket> {
        let center = self.center.clone().unwrap_or_else(|| vec![0.0; dim]);
        let momentum = self.momentum.clone().unwrap_or_else(|| vec![0.0; dim]);
        if center.len() != dim || momentum.len() != dim {
            bail!("packet center and momentum need {dim} entries");
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            bail!("packet width must be positive, got {}", self.width);
        }
        Ok(GaussianPacket { center, width: self.width, momentum })
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(flatten)]
    pub packet: PacketSpec,
    /// Spin components as `[re, im]` pairs, one particle's worth.
    #[serde(default)]
    pub spinor: Option<Vec<[f64; 2]>>,
    /// Second particle for exchange runs.
    #[serde(default)]
    pub second: Option<PacketSpec>,
    #[serde(default)]
    pub second_spinor: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub t_final: f64,
    pub nu: Vec<usize>,
    /// Crank–Nicolson step of the reference; defaults to `t_final / 4000`.
    #[serde(default)]
    pub reference_dt: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeSpec {
    /// Polynomial rows `[α_1, …, α_d, k, c]`.
    pub psi: Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsistencySpec {
    pub rhos: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhimapSpec {
    #[serde(default = "default_variant")]
    pub variant: PhiVariant,
    #[serde(default = "default_quad")]
    pub quad_order: usize,
    /// Convexity shift; taken from the audit when absent.
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub scan: Option<ScanBox>,
    pub rho_grid: Vec<f64>,
}

fn default_variant() -> PhiVariant {
    PhiVariant::TimeDerivative
}

fn default_quad() -> usize {
    8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    PowerOfNorm { m: u32 },
    LinearImage { m: u32, matrix: Vec<f64> },
    ShiftedLinearImage { m: f64, matrix: Vec<f64> },
    Unspecified,
}

impl From<&FamilySpec> for HessianFamily {
    fn from(f: &FamilySpec) -> Self {
        match f {
            FamilySpec::PowerOfNorm { m } => Self::PowerOfNorm { m: *m },
            FamilySpec::LinearImage { m, matrix } => Self::LinearImage { m: *m, matrix: matrix.clone() },
            FamilySpec::ShiftedLinearImage { m, matrix } => Self::ShiftedLinearImage { m: *m, matrix: matrix.clone() },
            FamilySpec::Unspecified => Self::Unspecified,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HessianSpec {
    pub family: FamilySpec,
    #[serde(default = "default_hessian_samples")]
    pub samples: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_hessian_samples() -> usize {
    1000
}

fn default_radius() -> f64 {
    10.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSpec {
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "one")]
    pub t_max: f64,
    #[serde(default = "default_audit_samples")]
    pub samples: usize,
}

impl Default for AuditSpec {
    fn default() -> Self {
        Self { radius: default_radius(), t_max: 1.0, samples: default_audit_samples() }
    }
}

fn default_audit_samples() -> usize {
    512
}

/// Pass thresholds; every field has a default.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub slope: f64,
    pub consistency_slope: f64,
    pub norm_deviation: f64,
    pub gauge_defect: f64,
    pub symmetry_defect: f64,
    pub unitarity: f64,
    pub hessian_margin: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            slope: 0.5,
            consistency_slope: 1.4,
            norm_deviation: 0.05,
            gauge_defect: 1e-8,
            symmetry_defect: 1e-12,
            unitarity: 1e-10,
            hessian_margin: -1e-9,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Inline field definition.
    #[serde(default)]
    pub fields: Option<Value>,
    /// Field definition file, relative to the config file.
    #[serde(default)]
    pub fields_file: Option<PathBuf>,
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub initial: InitialSpec,
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub spin: Option<Value>,
    #[serde(default)]
    pub gauge: Option<GaugeSpec>,
    #[serde(default)]
    pub consistency: Option<ConsistencySpec>,
    #[serde(default)]
    pub phimap: Option<PhimapSpec>,
    #[serde(default)]
    pub hessian: Option<HessianSpec>,
    #[serde(default)]
    pub audit: Option<AuditSpec>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub checks: Vec<CheckKind>,
    /// Offset into the quasi-random sample sequences.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub rho_star: Option<f64>,
    #[serde(default)]
    pub force_sampling: bool,
    #[serde(default)]
    pub cn: Option<CnOptions>,
    /// Output directory; `--out` takes precedence. Not part of the hash.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

/// A validated configuration with its resolved objects.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub fields: FieldSet,
    pub spin: Option<SpinHamiltonian>,
    pub hash: String,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Self::new(config, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn new(mut config: ExperimentConfig, base: &Path) -> Result<Self> {
        if let Some(file) = config.fields_file.take() {
            if config.fields.is_some() {
                bail!("give either \"fields\" or \"fields_file\", not both");
            }
            let path = base.join(file);
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            config.fields = Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?);
        }
        let fields_json = config.fields.as_ref().ok_or_else(|| anyhow!("config needs \"fields\" or \"fields_file\""))?;
        let fields = FieldSet::from_json(fields_json)?;
        let spin = config
            .spin
            .as_ref()
            .map(|v| SpinHamiltonian::from_json(v, fields.config_dim()))
            .transpose()?;
        // the hash covers the resolved fields, so a moved fields file does not change it
        let hash = hex::encode(Sha256::digest(serde_json::to_vec(&config)?));
        let exp = Self { config, fields, spin, hash };
        exp.validate()?;
        Ok(exp)
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        if let Some(r) = c.rho_star {
            if !(r > 0.0 && r.is_finite()) {
                bail!("rho_star must be positive, got {r}");
            }
        }
        if let Some(s) = &c.schedule {
            if !(s.t_final > 0.0) || s.nu.is_empty() || s.nu.contains(&0) {
                bail!("schedule needs t_final > 0 and a non-empty list of positive nu");
            }
        }
        for check in &c.checks {
            self.requirements(*check)?;
        }
        Ok(())
    }

    /// Fails when the config lacks a section the check needs.
    pub fn requirements(&self, check: CheckKind) -> Result<()> {
        let c = &self.config;
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(anyhow!("check \"{}\" needs {what}", check.name()))
            }
        };
        match check {
            CheckKind::Propagate | CheckKind::Converge => {
                need(c.grid.is_some(), "\"grid\"")?;
                need(c.schedule.is_some(), "\"schedule\"")
            }
            CheckKind::Gauge => {
                need(c.grid.is_some() && c.schedule.is_some(), "\"grid\" and \"schedule\"")?;
                need(c.gauge.is_some(), "\"gauge\"")
            }
            CheckKind::Spin => {
                need(c.grid.is_some() && c.schedule.is_some(), "\"grid\" and \"schedule\"")?;
                need(self.spin.is_some(), "\"spin\"")
            }
            CheckKind::Exchange => {
                need(c.grid.is_some() && c.schedule.is_some(), "\"grid\" and \"schedule\"")?;
                need(self.fields.particles() == 2, "a two-particle field set")?;
                need(c.initial.second.is_some(), "\"initial.second\"")
            }
            CheckKind::Phimap => need(c.phimap.is_some(), "\"phimap\""),
            CheckKind::Hessian => need(c.hessian.is_some(), "\"hessian\""),
            CheckKind::Audit => Ok(()),
            CheckKind::Consistency => {
                need(c.grid.is_some(), "\"grid\"")?;
                need(c.consistency.is_some(), "\"consistency\"")
            }
        }
    }

    pub fn grid(&self, dim: usize) -> Result<Grid> {
        let g = self.config.grid.as_ref().ok_or_else(|| anyhow!("config needs \"grid\""))?;
        Ok(Grid::uniform(dim, g.half_width, g.points)?)
    }

    pub fn schedule(&self) -> Result<&Schedule> {
        self.config.schedule.as_ref().ok_or_else(|| anyhow!("config needs \"schedule\""))
    }

    fn spinor(spec: &Option<Vec<[f64; 2]>>, degree: usize) -> Result<Vec<Complex64>> {
        match spec {
            Some(v) => {
                if v.len() != degree {
                    bail!("spinor has {} components, spin degree is {degree}", v.len());
                }
                Ok(v.iter().map(|[re, im]| Complex64::new(*re, *im)).collect())
            }
            None => {
                let mut v = vec![Complex64::new(0.0, 0.0); degree];
                v[0] = Complex64::new(1.0, 0.0);
                Ok(v)
            }
        }
    }

    /// Single-particle initial state, with spin when the config has a coupling.
    pub fn initial_state(&self) -> Result<GridState> {
        let d = self.fields.dim();
        let packet = self.config.initial.packet.packet(d)?;
        let grid = self.grid(d)?;
        match &self.spin {
            Some(h1) => {
                let spinor = Self::spinor(&self.config.initial.spinor, h1.degree())?;
                Ok(GridState::from_fn_spinor(grid, &spinor, |x| packet.eval(x)))
            }
            None => Ok(GridState::gaussian(grid, &packet)),
        }
    }

    /// The two single-particle factors of an exchange run.
    pub fn particle_states(&self) -> Result<[GridState; 2]> {
        let d = self.fields.dim();
        let grid = self.grid(d)?;
        let init = &self.config.initial;
        let second = init.second.as_ref().ok_or_else(|| anyhow!("config needs \"initial.second\""))?;
        let packets = [init.packet.packet(d)?, second.packet(d)?];
        match &self.spin {
            Some(h1) => {
                let per = (h1.degree() as f64).sqrt().round() as usize;
                if per * per != h1.degree() {
                    bail!("two-particle spin degree {} is not a square", h1.degree());
                }
                let spinors = [Self::spinor(&init.spinor, per)?, Self::spinor(&init.second_spinor, per)?];
                Ok([0, 1].map(|i| GridState::from_fn_spinor(grid.clone(), &spinors[i], |x| packets[i].eval(x))))
            }
            None => Ok([0, 1].map(|i| GridState::gaussian(grid.clone(), &packets[i]))),
        }
    }

    pub fn gauge(&self) -> Result<GaugeFunction> {
        let spec = self.config.gauge.as_ref().ok_or_else(|| anyhow!("config needs \"gauge\""))?;
        Ok(GaugeFunction::new(PolySpaceTime::from_rows(self.fields.dim(), &spec.psi)?)?)
    }

    pub fn phi_config(&self, audit_a: Option<f64>) -> Result<PhiConfig> {
        let spec = self.config.phimap.as_ref().ok_or_else(|| anyhow!("config needs \"phimap\""))?;
        let a = spec.a.or(audit_a).unwrap_or(0.0);
        Ok(PhiConfig::new(spec.variant, spec.quad_order, a)?)
    }
}
