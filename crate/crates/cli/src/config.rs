//! Run configuration: a TOML file, command-line flags and dotted `--set`
//! overrides, merged in that order.

use std::path::{Path, PathBuf};

use cphm::geometry::TriangleMesh;
use cphm::linalg::SolverMethod;
use cphm::{CphmConfig, Point3, Surface};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceKind {
    Sphere,
    Hemisphere,
    Disk,
    Torus,
    Mesh,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceBlock {
    pub kind: SurfaceKind,
    #[serde(default)]
    pub center: Option<[f64; 3]>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub major: Option<f64>,
    #[serde(default)]
    pub minor: Option<f64>,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    #[default]
    Auto,
    Direct,
    Krylov,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default)]
    pub method: MethodName,
    pub rel_tol: Option<f64>,
    pub max_iter: Option<usize>,
}

/// Grid spacing, either given or chosen from the surface size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Spacing {
    Value(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Default for Spacing {
    fn default() -> Self {
        Spacing::Auto(AutoTag::Auto)
    }
}

/// Cells across the longest bounding box side when the spacing is automatic.
pub const AUTO_CELLS: f64 = 64.0;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default)]
    pub dx: Spacing,
    pub dt: Option<f64>,
    pub gamma: Option<f64>,
    pub p: Option<usize>,
    pub q: Option<usize>,
    #[serde(rename = "H")]
    pub h: Option<f64>,
    pub kappa: Option<f64>,
    pub grad_eps: Option<f64>,
    #[serde(default)]
    pub solver: SolverBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Vtk,
    Summary,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Vtk => "vtk",
            Format::Summary => "txt",
        }
    }
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Summary]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default)]
    pub dump_operators: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            dir: None,
            formats: default_formats(),
            dump_operators: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub surface: SurfaceBlock,
    #[serde(default)]
    pub sources: Vec<[f64; 3]>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub outputs: Outputs,
}

/// Read `path` as a TOML table, or start from an empty one.
pub fn load_table(path: Option<&Path>) -> Result<Table, CliError> {
    let Some(path) = path else {
        return Ok(Table::new());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    text.parse::<Table>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parse a command-line value the way TOML would, falling back to a bare
/// string.
pub fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Set `dotted.key.path` in `table`, creating intermediate tables.
pub fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Apply a `key=value` override.
pub fn apply_assignment(table: &mut Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    set_dotted(table, key.trim(), parse_value(raw.trim()))
}

/// Parse the `--surface` shorthand: `sphere`, `hemisphere`, `disk`,
/// `torus[:R,r]` or `mesh:<path>`.
pub fn surface_shorthand(spec: &str) -> Result<Table, CliError> {
    let (kind, arg) = match spec.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (spec, None),
    };
    let mut t = Table::new();
    t.insert("kind".into(), Value::String(kind.to_string()));
    match (kind, arg) {
        ("mesh", Some(path)) => {
            t.insert("path".into(), Value::String(path.to_string()));
        }
        ("mesh", None) => return Err(CliError::Config("mesh surface needs a path: mesh:<file.obj>".into())),
        ("torus", Some(radii)) => {
            let r = parse_reals(radii, 2)?;
            t.insert("major".into(), Value::Float(r[0]));
            t.insert("minor".into(), Value::Float(r[1]));
        }
        ("sphere" | "hemisphere" | "disk", Some(radius)) => {
            let r = parse_reals(radius, 1)?;
            t.insert("radius".into(), Value::Float(r[0]));
        }
        (_, None) => {}
        (other, Some(_)) => return Err(CliError::Config(format!("surface `{other}` takes no parameters"))),
    }
    Ok(t)
}

/// Comma-separated reals, exactly `n` of them.
pub fn parse_reals(s: &str, n: usize) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("`{s}`: {e}")))?;
    if v.len() != n {
        return Err(CliError::Config(format!("`{s}`: expected {n} comma-separated numbers")));
    }
    Ok(v)
}

/// Comma-separated list of positive spacings.
pub fn parse_dx_list(s: &str) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("dx list `{s}`: {e}")))?;
    if v.is_empty() || v.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(CliError::Config(format!("dx list `{s}` must hold positive numbers")));
    }
    Ok(v)
}

impl RunConfig {
    pub fn from_table(table: Table) -> Result<Self, CliError> {
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.check_paths()?;
        Ok(cfg)
    }

    fn check_paths(&self) -> Result<(), CliError> {
        if self.surface.kind == SurfaceKind::Mesh {
            let path = self
                .surface
                .path
                .as_ref()
                .ok_or_else(|| CliError::Config("mesh surface needs `surface.path`".into()))?;
            if !path.is_file() {
                return Err(CliError::Config(format!("mesh file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn build_surface(&self) -> Result<Surface, CliError> {
        let s = &self.surface;
        let center = Point3::from(s.center.unwrap_or([0.0; 3]));
        let radius = s.radius.unwrap_or(1.0);
        let surface = match s.kind {
            SurfaceKind::Sphere => Surface::sphere(center, radius)?,
            SurfaceKind::Hemisphere => Surface::hemisphere(center, radius)?,
            SurfaceKind::Disk => Surface::disk2d([center.x, center.y], radius)?,
            SurfaceKind::Torus => Surface::torus(center, s.major.unwrap_or(1.0), s.minor.unwrap_or(0.4))?,
            SurfaceKind::Mesh => Surface::mesh(read_obj(s.path.as_deref().expect("checked at parse time"))?),
        };
        Ok(surface)
    }

    pub fn sources(&self) -> Result<Vec<Point3>, CliError> {
        if self.sources.is_empty() {
            return Err(CliError::Config("at least one source point is required".into()));
        }
        Ok(self.sources.iter().map(|s| Point3::from(*s)).collect())
    }

    /// Grid spacing for `surface`, resolving `auto`.
    pub fn spacing(&self, surface: &Surface) -> f64 {
        match self.numerics.dx {
            Spacing::Value(dx) => dx,
            Spacing::Auto(_) => {
                let (lo, hi) = surface.bounding_box();
                (hi - lo).max() / AUTO_CELLS
            }
        }
    }

    /// Solver configuration at spacing `dx`, with every unset field taken
    /// from the library defaults.
    pub fn cphm_config(&self, dx: f64) -> Result<CphmConfig, CliError> {
        let n = &self.numerics;
        let mut cfg = CphmConfig::new(dx);
        cfg.dt = n.dt;
        cfg.gamma = n.gamma;
        cfg.h = n.h;
        if let Some(p) = n.p {
            cfg.p = p;
        }
        if let Some(q) = n.q {
            cfg.q = q;
        }
        if let Some(k) = n.kappa {
            if k != 1.0 && k != 2.0 {
                return Err(CliError::Config(format!("kappa must be 1 or 2, got {k}")));
            }
            cfg.kappa = k;
        }
        if let Some(e) = n.grad_eps {
            cfg.grad_eps = e;
        }
        cfg.solver.method = match n.solver.method {
            MethodName::Auto => SolverMethod::Auto,
            MethodName::Direct => SolverMethod::SparseDirect,
            MethodName::Krylov => SolverMethod::IterativeKrylov,
        };
        if let Some(t) = n.solver.rel_tol {
            cfg.solver.rel_tol = t;
        }
        cfg.solver.max_iter = n.solver.max_iter;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Load every triangle of an OBJ file into one mesh.
pub fn read_obj(path: &Path) -> Result<TriangleMesh, CliError> {
    let opts = tobj::LoadOptions {
        triangulate: true,
        single_index: true,
        ..Default::default()
    };
    let (models, _) = tobj::load_obj(path, &opts).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for m in &models {
        let base = vertices.len();
        vertices.extend(m.mesh.positions.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])));
        faces.extend(m.mesh.indices.chunks_exact(3).map(|f| {
            [base + f[0] as usize, base + f[1] as usize, base + f[2] as usize]
        }));
    }
    Ok(TriangleMesh::new(vertices, faces)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Table {
        "sources = [[0.0, 0.0, 1.0]]\n[surface]\nkind = \"sphere\"\n".parse().unwrap()
    }

    #[test]
    fn dotted_overrides() {
        let mut t = base();
        apply_assignment(&mut t, "numerics.dx=0.05").unwrap();
        apply_assignment(&mut t, "numerics.solver.method=krylov").unwrap();
        apply_assignment(&mut t, "outputs.formats=[\"vtk\"]").unwrap();
        let cfg = RunConfig::from_table(t).unwrap();
        assert_eq!(cfg.numerics.dx, Spacing::Value(0.05));
        assert_eq!(cfg.numerics.solver.method, MethodName::Krylov);
        assert_eq!(cfg.outputs.formats, vec![Format::Vtk]);
    }

    #[test]
    fn defaults_come_from_the_library() {
        let cfg = RunConfig::from_table(base()).unwrap();
        assert_eq!(cfg.cphm_config(0.1).unwrap(), CphmConfig::new(0.1));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut t = base();
        set_dotted(&mut t, "numerics.bogus", Value::Integer(1)).unwrap();
        assert!(matches!(RunConfig::from_table(t), Err(CliError::Config(_))));
    }

    #[test]
    fn missing_mesh_is_a_config_error() {
        let mut t = Table::new();
        t.insert("surface".into(), Value::Table(surface_shorthand("mesh:/no/such/file.obj").unwrap()));
        assert!(matches!(RunConfig::from_table(t), Err(CliError::Config(_))));
    }

    #[test]
    fn shorthand_and_lists() {
        let t = surface_shorthand("torus:2,0.5").unwrap();
        assert_eq!(t["major"].as_float(), Some(2.0));
        assert_eq!(parse_dx_list("0.1, 0.05").unwrap(), vec![0.1, 0.05]);
        assert!(parse_dx_list("0.1,-1").is_err());
        assert!(parse_reals("1,2", 3).is_err());
        assert_eq!(parse_value("auto"), Value::String("auto".into()));
        assert_eq!(parse_value("0.5"), Value::Float(0.5));
    }

    #[test]
    fn kappa_must_be_one_or_two() {
        let mut t: Table = "sources = [[0.0, 0.0, 1.0]]\n[surface]\nkind = \"hemisphere\"\n".parse().unwrap();
        set_dotted(&mut t, "numerics.kappa", Value::Float(3.0)).unwrap();
        let cfg = RunConfig::from_table(t).unwrap();
        assert!(cfg.cphm_config(0.1).is_err());
    }
}
