//! Run configuration: a TOML file with `[domain]`, `[field]`, `[quadrature]`,
//! `[mfs]`, `[transport]` and `[study]` sections. Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corrector::Profile;
use crate::exterior_solver::MfsParams;
use crate::field::{VorticityKind, VorticitySpec};
use crate::geometry::{LatticeParams, ObstacleShape, PerforatedDomain, Rect};
use crate::quadrature::{QuadSpec, Scheme, Singularity};
use crate::transport::{BackendKind, TransportParams};
use crate::treecode::TreeParams;
use crate::{Error, Point, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSection {
    pub eps: f64,
    pub alpha: f64,
    pub mu: f64,
    /// `disk` or `ellipse`.
    pub shape: String,
    /// Ellipse semi-axes along x and y.
    pub p: f64,
    pub q: f64,
    /// Cut-off profile: `cubic`, `quintic` or `septic`.
    pub profile: String,
}

impl Default for DomainSection {
    fn default() -> Self {
        Self { eps: 0.1, alpha: 1.0, mu: 0.0, shape: "disk".into(), p: 1.0, q: 0.5, profile: "quintic".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    /// `radial_bump`, `gaussian_truncated` or `patch_indicator_smooth`.
    pub kind: String,
    pub center: [f64; 2],
    pub radius: f64,
    pub amplitude: f64,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self { kind: "radial_bump".into(), center: [0.5, 0.5], radius: 0.9, amplitude: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSection {
    /// `tensor_gauss` or `monte_carlo`.
    pub scheme: String,
    pub order: usize,
    pub target_order: usize,
    pub polar_order: usize,
    pub samples: usize,
    pub near_factor: f64,
    /// `polar_split` or `none`.
    pub singularity: String,
    pub plane_cells: usize,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        let q = QuadSpec::default();
        Self {
            scheme: "tensor_gauss".into(),
            order: q.order,
            target_order: q.target_order,
            polar_order: q.polar_order,
            samples: q.samples,
            near_factor: q.near_factor,
            singularity: "polar_split".into(),
            plane_cells: q.plane_cells,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfsSection {
    pub m: usize,
    pub rho: f64,
    pub tol_bc: f64,
    pub svd_cutoff: f64,
    pub max_unknowns: usize,
}

impl Default for MfsSection {
    fn default() -> Self {
        let p = MfsParams::default();
        Self { m: p.m, rho: p.rho, tol_bc: p.tol_bc, svd_cutoff: p.svd_cutoff, max_unknowns: p.max_unknowns }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportSection {
    /// `plane`, `corrector` or `mfs`.
    pub backend: String,
    pub h: f64,
    pub blob_factor: f64,
    pub cfl: f64,
    pub t_end: f64,
    /// Fixed step; 0 selects the CFL step at the start of the run.
    pub dt: f64,
    pub diag_stride: usize,
    pub traj_stride: usize,
    pub circulation_samples: usize,
    pub tree_threshold: usize,
    pub tree_theta: f64,
    pub tree_order: usize,
}

impl Default for TransportSection {
    fn default() -> Self {
        let t = TransportParams::default();
        Self {
            backend: "corrector".into(),
            h: t.h,
            blob_factor: t.blob_factor,
            cfl: t.cfl,
            t_end: 1.0,
            dt: 0.0,
            diag_stride: 1,
            traj_stride: 10,
            circulation_samples: t.circulation_samples,
            tree_threshold: t.tree_threshold,
            tree_theta: t.tree.theta,
            tree_order: t.tree.order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub eps_list: Vec<f64>,
    pub slack: f64,
    /// Final time of the convergence study.
    pub t_end: f64,
    /// `[x0, x1, y0, y1]` of the comparison window and of the `eval-field` grid.
    pub window: [f64; 4],
    pub window_cells: [usize; 2],
    /// Field sampled by `eval-field`: `plane`, `exterior_disk`,
    /// `exterior_obstacle`, `corrector`, `w1` .. `w4`, `mfs`.
    pub field: String,
    /// 1-based inclusion of `exterior_obstacle`.
    pub inclusion: [usize; 2],
    /// Random sample points of the decomposition closure check.
    pub closure_points: usize,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            eps_list: vec![0.1, 0.05, 0.025, 0.0125],
            slack: crate::analysis::SLOPE_SLACK,
            t_end: 0.5,
            window: [0.0, 1.0, 0.0, 0.8],
            window_cells: [100, 80],
            field: "corrector".into(),
            inclusion: [1, 1],
            closure_points: 100,
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub domain: DomainSection,
    pub field: FieldSection,
    pub quadrature: QuadratureSection,
    pub mfs: MfsSection,
    pub transport: TransportSection,
    pub study: StudySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            domain: DomainSection::default(),
            field: FieldSection::default(),
            quadrature: QuadratureSection::default(),
            mfs: MfsSection::default(),
            transport: TransportSection::default(),
            study: StudySection::default(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Parse an override value as a TOML value, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Set `section.key = value` (or a top-level `key = value`) in a table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{assignment}` is not of the form key=value")))?;
    let path = path.trim();
    let value = parse_value(raw.trim());
    let mut parts: Vec<&str> = path.split('.').collect();
    let key = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| config_err(format!("empty key in `{assignment}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("`{p}` in override `{path}` is not a section")))?;
    }
    cur.insert(key.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parse TOML text with `key=value` overrides applied on top.
    pub fn from_str_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err(e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_str_with(&text, overrides)
    }

    /// Check every enumerated option and numeric range.
    pub fn validate(&self) -> Result<()> {
        self.lattice()?.validate().map_err(|e| config_err(e.to_string()))?;
        self.shape()?.validate().map_err(|e| config_err(e.to_string()))?;
        self.profile()?;
        self.vorticity()?;
        self.quad()?;
        self.mfs_params().validate().map_err(|e| config_err(e.to_string()))?;
        self.backend()?;
        self.transport_params()?.validate().map_err(|e| config_err(e.to_string()))?;
        if !(self.transport.dt >= 0.0) {
            return Err(config_err("transport.dt must be non-negative"));
        }
        let w = self.study.window;
        if !(w[1] > w[0] && w[3] > w[2]) || self.study.window_cells.contains(&0) {
            return Err(config_err("study.window must be [x0, x1, y0, y1] with x0 < x1, y0 < y1 and cells >= 1"));
        }
        Ok(())
    }

    pub fn lattice(&self) -> Result<LatticeParams> {
        let d = &self.domain;
        Ok(LatticeParams { eps: d.eps, alpha: d.alpha, mu: d.mu })
    }

    pub fn shape(&self) -> Result<ObstacleShape> {
        match self.domain.shape.as_str() {
            "disk" => Ok(ObstacleShape::Disk),
            "ellipse" => Ok(ObstacleShape::Ellipse { p: self.domain.p, q: self.domain.q }),
            s => Err(config_err(format!("domain.shape `{s}` must be `disk` or `ellipse`"))),
        }
    }

    pub fn profile(&self) -> Result<Profile> {
        Profile::parse(&self.domain.profile)
            .ok_or_else(|| config_err(format!("domain.profile `{}` is not a known profile", self.domain.profile)))
    }

    pub fn build_domain(&self) -> Result<PerforatedDomain> {
        PerforatedDomain::build(self.lattice()?, self.shape()?)
    }

    /// The domain at another `eps` with the same exponents and shape.
    pub fn domain_at(&self, eps: f64) -> Result<PerforatedDomain> {
        PerforatedDomain::build(LatticeParams::new(eps, self.domain.alpha, self.domain.mu)?, self.shape()?)
    }

    pub fn vorticity(&self) -> Result<VorticitySpec> {
        let f = &self.field;
        let kind = VorticityKind::parse(&f.kind).ok_or_else(|| config_err(format!("field.kind `{}` is not known", f.kind)))?;
        VorticitySpec::new(kind, Point::new(f.center[0], f.center[1]), f.radius, f.amplitude)
            .map_err(|e| config_err(e.to_string()))
    }

    pub fn quad(&self) -> Result<QuadSpec> {
        let q = &self.quadrature;
        let scheme = match q.scheme.as_str() {
            "tensor_gauss" => Scheme::TensorGauss,
            "monte_carlo" => Scheme::MonteCarlo,
            s => return Err(config_err(format!("quadrature.scheme `{s}` must be `tensor_gauss` or `monte_carlo`"))),
        };
        let singularity = match q.singularity.as_str() {
            "polar_split" => Singularity::PolarSplit,
            "none" => Singularity::None,
            s => return Err(config_err(format!("quadrature.singularity `{s}` must be `polar_split` or `none`"))),
        };
        if q.order == 0 || q.target_order == 0 || q.polar_order == 0 || q.plane_cells == 0 || !(q.near_factor >= 0.0) {
            return Err(config_err("quadrature orders and plane_cells must be positive"));
        }
        Ok(QuadSpec {
            scheme,
            order: q.order,
            target_order: q.target_order,
            polar_order: q.polar_order,
            samples: q.samples,
            near_factor: q.near_factor,
            singularity,
            plane_cells: q.plane_cells,
        })
    }

    pub fn mfs_params(&self) -> MfsParams {
        let m = &self.mfs;
        MfsParams { m: m.m, rho: m.rho, tol_bc: m.tol_bc, svd_cutoff: m.svd_cutoff, max_unknowns: m.max_unknowns }
    }

    pub fn backend(&self) -> Result<BackendKind> {
        BackendKind::parse(&self.transport.backend).ok_or_else(|| {
            config_err(format!("transport.backend `{}` must be plane, corrector or mfs", self.transport.backend))
        })
    }

    pub fn transport_params(&self) -> Result<TransportParams> {
        let t = &self.transport;
        Ok(TransportParams {
            h: t.h,
            blob_factor: t.blob_factor,
            cfl: t.cfl,
            profile: self.profile()?,
            mfs: self.mfs_params(),
            tree: TreeParams { theta: t.tree_theta, order: t.tree_order, ..TreeParams::default() },
            tree_threshold: t.tree_threshold,
            circulation_samples: t.circulation_samples,
        })
    }

    pub fn window(&self) -> Rect {
        let w = self.study.window;
        Rect::new(w[0], w[1], w[2], w[3])
    }

    /// The resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = RunConfig::from_str_with("", &[]).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_str_with("[domain]\nepss = 0.1\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("epss"), "{err}");
    }

    #[test]
    fn overrides_replace_keys() {
        let c = RunConfig::from_str_with(
            "[domain]\neps = 0.1\n",
            &["domain.eps=0.05".into(), "transport.backend=plane".into(), "seed=7".into()],
        )
        .unwrap();
        assert_eq!(c.domain.eps, 0.05);
        assert_eq!(c.transport.backend, "plane");
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::from_str_with("seed = 3\n[study]\neps_list = [0.2, 0.1]\n", &[]).unwrap();
        let again = RunConfig::from_str_with(&c.to_toml(), &[]).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn bad_enumerations_are_rejected() {
        assert!(RunConfig::from_str_with("[domain]\nshape = \"square\"\n", &[]).is_err());
        assert!(RunConfig::from_str_with("[transport]\nbackend = \"fmm\"\n", &[]).is_err());
        assert!(RunConfig::from_str_with("[field]\nkind = \"vortex\"\n", &[]).is_err());
    }
}
