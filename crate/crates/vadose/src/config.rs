//! Problem configuration: a line-oriented text format with `[section]`
//! headers, `key = value` entries and `#` comments.
//!
//! Sections: `[mesh]` (once), `[region]` (repeated), `[boundary]`
//! (repeated), `[source]` (repeated), `[solver]` (optional). Unknown
//! sections and keys are rejected with their line number. Units are meters
//! and days throughout.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::constitutive::{ContinuationFunctionKind, MediumProperties};
use crate::continuation::ContinuationConfig;
use crate::discretization::{
    resolve_boundary_conditions, BoundaryCondition, KrScheme, SteadyProblem,
};
use crate::error::Error as CrateError;
use crate::linsolve::LinearSolverConfig;
use crate::mesh::{build_box_grid, BoundaryTag, RegionLayer};
use crate::newton::NewtonConfig;
use crate::pseudo_transient::PseudoTransientConfig;

#[derive(Debug, Clone, Error)]
#[error("{}{message}", match line { Some(l) => format!("line {l}: "), None => String::new() })]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Newton,
    Continuation,
    PseudoTransient,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Newton => "newton",
            Strategy::Continuation => "continuation",
            Strategy::PseudoTransient => "pseudo_transient",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "newton" => Some(Strategy::Newton),
            "continuation" => Some(Strategy::Continuation),
            "pseudo_transient" => Some(Strategy::PseudoTransient),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MeshConfig {
    pub extents: (f64, f64, f64),
    pub counts: (usize, usize, usize),
}

#[derive(Debug, Clone, Copy)]
pub struct RegionConfig {
    pub id: u32,
    pub z_low: f64,
    pub z_high: f64,
    pub medium: MediumProperties,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundarySpec {
    pub side: BoundaryTag,
    pub z_low: f64,
    pub z_high: f64,
    pub condition: BoundaryCondition,
}

#[derive(Debug, Clone, Copy)]
pub struct SourceSpec {
    pub region: u32,
    /// Volumetric source density, 1/day.
    pub rate: f64,
}

/// Solver strategy selection and all numeric knobs.
#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub strategy: Strategy,
    pub kind: ContinuationFunctionKind,
    pub kr_scheme: KrScheme,
    pub newton: NewtonConfig,
    pub linear: LinearSolverConfig,
    pub continuation: ContinuationConfig,
    pub pseudo_transient: PseudoTransientConfig,
    /// Constant initial head; when absent, solvers start from the q = 0
    /// linear solution.
    pub initial_head: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            strategy: Strategy::Continuation,
            kind: ContinuationFunctionKind::Power,
            kr_scheme: KrScheme::Upwind,
            newton: NewtonConfig::default(),
            linear: LinearSolverConfig::default(),
            continuation: ContinuationConfig::default(),
            pseudo_transient: PseudoTransientConfig::default(),
            initial_head: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub mesh: MeshConfig,
    pub regions: Vec<RegionConfig>,
    pub boundaries: Vec<BoundarySpec>,
    pub sources: Vec<SourceSpec>,
    pub solver: SolverSettings,
}

/// CLI-level overrides applied on top of a parsed file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub strategy: Option<Strategy>,
    pub kind: Option<ContinuationFunctionKind>,
    pub kr_scheme: Option<KrScheme>,
    /// Multiplies every cell count.
    pub mesh_scale: Option<usize>,
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn scan_sections(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line_no, "malformed section header"))?
                .trim();
            if name.is_empty() {
                return Err(ConfigError::at(line_no, "empty section name"));
            }
            sections.push(Section {
                name: name.to_string(),
                line: line_no,
                entries: Vec::new(),
            });
        } else if let Some((key, value)) = line.split_once('=') {
            let section = sections
                .last_mut()
                .ok_or_else(|| ConfigError::at(line_no, "entry before any [section] header"))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::at(line_no, "empty key"));
            }
            if value.is_empty() {
                return Err(ConfigError::at(line_no, format!("key '{key}' has no value")));
            }
            if section.entries.iter().any(|e| e.key == key) {
                return Err(ConfigError::at(line_no, format!("duplicate key '{key}'")));
            }
            section.entries.push(Entry {
                key,
                value,
                line: line_no,
            });
        } else {
            return Err(ConfigError::at(
                line_no,
                format!("expected 'key = value' or '[section]', got '{line}'"),
            ));
        }
    }
    Ok(sections)
}

/// Typed access to one section's entries with unknown-key rejection.
struct Keys<'a> {
    section: &'a Section,
    used: Vec<bool>,
}

impl<'a> Keys<'a> {
    fn new(section: &'a Section) -> Self {
        Keys {
            section,
            used: vec![false; section.entries.len()],
        }
    }

    fn raw(&mut self, key: &str) -> Option<(&'a str, usize)> {
        for (i, e) in self.section.entries.iter().enumerate() {
            if e.key == key {
                self.used[i] = true;
                return Some((e.value.as_str(), e.line));
            }
        }
        None
    }

    fn f64_opt(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| ConfigError::at(line, format!("key '{key}': invalid number '{v}'"))),
        }
    }

    fn usize_opt(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| ConfigError::at(line, format!("key '{key}': invalid integer '{v}'"))),
        }
    }

    fn bool_opt(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(("true", _)) => Ok(Some(true)),
            Some(("false", _)) => Ok(Some(false)),
            Some((v, line)) => Err(ConfigError::at(
                line,
                format!("key '{key}': expected true or false, got '{v}'"),
            )),
        }
    }

    fn triple_f64(&mut self, key: &str) -> Result<Option<(f64, f64, f64)>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => {
                let parts: Vec<&str> = v.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(ConfigError::at(
                        line,
                        format!("key '{key}': expected three numbers, got '{v}'"),
                    ));
                }
                let mut vals = [0.0; 3];
                for (slot, p) in vals.iter_mut().zip(&parts) {
                    *slot = p.parse::<f64>().map_err(|_| {
                        ConfigError::at(line, format!("key '{key}': invalid number '{p}'"))
                    })?;
                }
                Ok(Some((vals[0], vals[1], vals[2])))
            }
        }
    }

    fn triple_usize(&mut self, key: &str) -> Result<Option<(usize, usize, usize)>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => {
                let parts: Vec<&str> = v.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(ConfigError::at(
                        line,
                        format!("key '{key}': expected three integers, got '{v}'"),
                    ));
                }
                let mut vals = [0usize; 3];
                for (slot, p) in vals.iter_mut().zip(&parts) {
                    *slot = p.parse::<usize>().map_err(|_| {
                        ConfigError::at(line, format!("key '{key}': invalid integer '{p}'"))
                    })?;
                }
                Ok(Some((vals[0], vals[1], vals[2])))
            }
        }
    }

    /// Errors on any entry that no reader consumed.
    fn finish(self) -> Result<(), ConfigError> {
        for (i, e) in self.section.entries.iter().enumerate() {
            if !self.used[i] {
                return Err(ConfigError::at(
                    e.line,
                    format!("unknown key '{}' in section [{}]", e.key, self.section.name),
                ));
            }
        }
        Ok(())
    }
}

fn missing(section: &Section, key: &str) -> ConfigError {
    ConfigError::at(
        section.line,
        format!("section [{}] is missing required key '{key}'", section.name),
    )
}

fn parse_mesh(section: &Section) -> Result<MeshConfig, ConfigError> {
    let mut keys = Keys::new(section);
    let extents = keys.triple_f64("extents")?;
    let counts = keys.triple_usize("counts")?;
    keys.finish()?;
    Ok(MeshConfig {
        extents: extents.ok_or_else(|| missing(section, "extents"))?,
        counts: counts.ok_or_else(|| missing(section, "counts"))?,
    })
}

fn parse_region(section: &Section) -> Result<RegionConfig, ConfigError> {
    let mut keys = Keys::new(section);
    let id = keys.usize_opt("id")?;
    let z_low = keys.f64_opt("z_low")?;
    let z_high = keys.f64_opt("z_high")?;
    let k = keys.f64_opt("k")?;
    let k_xx = keys.f64_opt("k_xx")?;
    let k_yy = keys.f64_opt("k_yy")?;
    let k_zz = keys.f64_opt("k_zz")?;
    let porosity = keys.f64_opt("porosity")?;
    let alpha_phi = keys.f64_opt("alpha_phi")?;
    let alpha_theta = keys.f64_opt("alpha_theta")?;
    let specific_storage = keys.f64_opt("specific_storage")?;
    let kr_floor = keys.f64_opt("kr_floor")?;
    keys.finish()?;

    let id = id.ok_or_else(|| missing(section, "id"))? as u32;
    let z_low = z_low.ok_or_else(|| missing(section, "z_low"))?;
    let z_high = z_high.ok_or_else(|| missing(section, "z_high"))?;
    let conductivity = match (k, k_xx, k_yy, k_zz) {
        (Some(k), None, None, None) => [k, k, k],
        (None, Some(x), Some(y), Some(z)) => [x, y, z],
        (None, None, None, None) => return Err(missing(section, "k")),
        _ => {
            return Err(ConfigError::at(
                section.line,
                "give either 'k' or all of 'k_xx'/'k_yy'/'k_zz', not a mixture",
            ))
        }
    };
    let defaults = MediumProperties::default();
    let medium = MediumProperties {
        conductivity,
        porosity: porosity.ok_or_else(|| missing(section, "porosity"))?,
        alpha_phi: alpha_phi.unwrap_or(defaults.alpha_phi),
        alpha_theta: alpha_theta.unwrap_or(defaults.alpha_theta),
        specific_storage: specific_storage.unwrap_or(defaults.specific_storage),
        kr_floor: kr_floor.unwrap_or(defaults.kr_floor),
    };
    if let Err(msg) = medium.validate() {
        return Err(ConfigError::at(section.line, format!("region {id}: {msg}")));
    }
    if z_high <= z_low {
        return Err(ConfigError::at(
            section.line,
            format!("region {id}: z_high must exceed z_low"),
        ));
    }
    Ok(RegionConfig {
        id,
        z_low,
        z_high,
        medium,
    })
}

fn parse_boundary(section: &Section) -> Result<BoundarySpec, ConfigError> {
    let mut keys = Keys::new(section);
    let side = keys.raw("side").map(|(v, l)| (v.to_string(), l));
    let bc_type = keys.raw("type").map(|(v, l)| (v.to_string(), l));
    let head = keys.f64_opt("head")?;
    let value = keys.f64_opt("value")?;
    let z_low = keys.f64_opt("z_low")?.unwrap_or(f64::NEG_INFINITY);
    let z_high = keys.f64_opt("z_high")?.unwrap_or(f64::INFINITY);
    keys.finish()?;

    let (side_str, side_line) = side.ok_or_else(|| missing(section, "side"))?;
    let side = BoundaryTag::parse(&side_str).ok_or_else(|| {
        ConfigError::at(
            side_line,
            format!("key 'side': expected one of xmin/xmax/ymin/ymax/zmin/zmax, got '{side_str}'"),
        )
    })?;
    let (type_str, type_line) = bc_type.ok_or_else(|| missing(section, "type"))?;
    let reject_extra = |present: bool, key: &str| {
        if present {
            Err(ConfigError::at(
                type_line,
                format!("key '{key}' is not allowed for type {type_str}"),
            ))
        } else {
            Ok(())
        }
    };
    let condition = match type_str.as_str() {
        "dirichlet" => {
            reject_extra(value.is_some(), "value")?;
            BoundaryCondition::DirichletHead(head.ok_or_else(|| {
                ConfigError::at(type_line, "dirichlet boundary requires key 'head'")
            })?)
        }
        "flux" => {
            reject_extra(head.is_some(), "head")?;
            BoundaryCondition::NeumannFlux(value.ok_or_else(|| {
                ConfigError::at(type_line, "flux boundary requires key 'value'")
            })?)
        }
        "seepage" => {
            reject_extra(head.is_some(), "head")?;
            reject_extra(value.is_some(), "value")?;
            BoundaryCondition::Seepage
        }
        other => {
            return Err(ConfigError::at(
                type_line,
                format!("key 'type': expected dirichlet, flux or seepage, got '{other}'"),
            ))
        }
    };
    if z_high <= z_low {
        return Err(ConfigError::at(section.line, "boundary z_high must exceed z_low"));
    }
    Ok(BoundarySpec {
        side,
        z_low,
        z_high,
        condition,
    })
}

fn parse_source(section: &Section) -> Result<SourceSpec, ConfigError> {
    let mut keys = Keys::new(section);
    let region = keys.usize_opt("region")?;
    let rate = keys.f64_opt("rate")?;
    keys.finish()?;
    Ok(SourceSpec {
        region: region.ok_or_else(|| missing(section, "region"))? as u32,
        rate: rate.ok_or_else(|| missing(section, "rate"))?,
    })
}

fn parse_solver(section: &Section) -> Result<SolverSettings, ConfigError> {
    let mut keys = Keys::new(section);
    let mut s = SolverSettings::default();
    if let Some((v, line)) = keys.raw("strategy") {
        s.strategy = Strategy::parse(v).ok_or_else(|| {
            ConfigError::at(
                line,
                format!("key 'strategy': expected newton, continuation or pseudo_transient, got '{v}'"),
            )
        })?;
    }
    if let Some((v, line)) = keys.raw("kind") {
        s.kind = ContinuationFunctionKind::parse(v).ok_or_else(|| {
            ConfigError::at(line, format!("key 'kind': expected power or linear, got '{v}'"))
        })?;
    }
    if let Some((v, line)) = keys.raw("kr_scheme") {
        s.kr_scheme = KrScheme::parse(v).ok_or_else(|| {
            ConfigError::at(line, format!("key 'kr_scheme': expected upwind or central, got '{v}'"))
        })?;
    }
    if let Some(v) = keys.f64_opt("eps_rel")? {
        s.newton.eps_rel = v;
    }
    if let Some(v) = keys.f64_opt("eps_abs")? {
        s.newton.eps_abs = v;
    }
    if let Some(v) = keys.usize_opt("maxit")? {
        s.newton.max_iterations = v;
    }
    if let Some(v) = keys.f64_opt("gamma")? {
        s.newton.gamma = v;
    }
    if let Some(v) = keys.f64_opt("omega_min")? {
        s.newton.omega_min = v;
    }
    if let Some(v) = keys.usize_opt("line_search_start")? {
        s.newton.line_search_start_iter = v;
    }
    if let Some(v) = keys.bool_opt("line_search")? {
        s.newton.use_line_search = v;
    }
    if let Some(v) = keys.f64_opt("fixed_omega")? {
        s.newton.fixed_omega = Some(v);
    }
    if let Some(v) = keys.f64_opt("dq_min")? {
        s.continuation.dq_min = v;
    }
    if let Some(v) = keys.f64_opt("dt_init")? {
        s.pseudo_transient.dt_init = v;
    }
    if let Some(v) = keys.f64_opt("dt_min")? {
        s.pseudo_transient.dt_min = v;
    }
    if let Some(v) = keys.f64_opt("dt_max")? {
        s.pseudo_transient.dt_max = v;
    }
    if let Some(v) = keys.usize_opt("numit_inc")? {
        s.pseudo_transient.numit_inc = v;
    }
    if let Some(v) = keys.usize_opt("max_time_steps")? {
        s.pseudo_transient.max_steps = v;
    }
    if let Some(v) = keys.bool_opt("pt_line_search")? {
        s.pseudo_transient.line_search_in_step = v;
    }
    if let Some(v) = keys.f64_opt("lin_rel_tol")? {
        s.linear.rel_tol = v;
    }
    if let Some(v) = keys.f64_opt("lin_abs_tol")? {
        s.linear.abs_tol = v;
    }
    if let Some(v) = keys.usize_opt("lin_maxit")? {
        s.linear.max_iters = v;
    }
    if let Some(v) = keys.usize_opt("ilu_level")? {
        s.linear.ilu_level = v;
    }
    if let Some(v) = keys.f64_opt("initial_head")? {
        s.initial_head = Some(v);
    }
    keys.finish()?;
    validate_solver(&s, section.line)?;
    Ok(s)
}

fn validate_solver(s: &SolverSettings, line: usize) -> Result<(), ConfigError> {
    let err = |m: String| Err(ConfigError::at(line, m));
    if s.newton.eps_rel <= 0.0 || s.newton.eps_abs <= 0.0 {
        return err("tolerances must be positive".into());
    }
    if s.newton.max_iterations < 1 {
        return err("maxit must be at least 1".into());
    }
    if !(0.0 < s.newton.gamma && s.newton.gamma < 1.0) {
        return err(format!("gamma must lie in (0, 1), got {}", s.newton.gamma));
    }
    if !(0.0 < s.newton.omega_min && s.newton.omega_min <= 1.0) {
        return err(format!("omega_min must lie in (0, 1], got {}", s.newton.omega_min));
    }
    if let Some(w) = s.newton.fixed_omega {
        if !(0.0 < w && w <= 1.0) {
            return err(format!("fixed_omega must lie in (0, 1], got {w}"));
        }
    }
    if !(0.0 < s.continuation.dq_min && s.continuation.dq_min < 1.0) {
        return err(format!("dq_min must lie in (0, 1), got {}", s.continuation.dq_min));
    }
    let pt = &s.pseudo_transient;
    if !(pt.dt_min > 0.0 && pt.dt_min <= pt.dt_init && pt.dt_init <= pt.dt_max) {
        return err(format!(
            "time step limits must satisfy 0 < dt_min <= dt_init <= dt_max, got {} / {} / {}",
            pt.dt_min, pt.dt_init, pt.dt_max
        ));
    }
    if pt.numit_inc >= s.newton.max_iterations {
        return err(format!(
            "numit_inc ({}) must be smaller than maxit ({})",
            pt.numit_inc, s.newton.max_iterations
        ));
    }
    if s.linear.rel_tol <= 0.0 || s.linear.abs_tol <= 0.0 || s.linear.max_iters < 1 {
        return err("linear solver tolerances must be positive and lin_maxit >= 1".into());
    }
    Ok(())
}

impl ProblemConfig {
    pub fn parse(text: &str) -> Result<ProblemConfig, ConfigError> {
        let sections = scan_sections(text)?;
        let mut mesh: Option<MeshConfig> = None;
        let mut regions = Vec::new();
        let mut boundaries = Vec::new();
        let mut sources = Vec::new();
        let mut solver: Option<SolverSettings> = None;

        for section in &sections {
            match section.name.as_str() {
                "mesh" => {
                    if mesh.is_some() {
                        return Err(ConfigError::at(section.line, "duplicate [mesh] section"));
                    }
                    mesh = Some(parse_mesh(section)?);
                }
                "region" => regions.push(parse_region(section)?),
                "boundary" => boundaries.push(parse_boundary(section)?),
                "source" => sources.push(parse_source(section)?),
                "solver" => {
                    if solver.is_some() {
                        return Err(ConfigError::at(section.line, "duplicate [solver] section"));
                    }
                    solver = Some(parse_solver(section)?);
                }
                other => {
                    return Err(ConfigError::at(
                        section.line,
                        format!("unknown section [{other}]"),
                    ))
                }
            }
        }

        let config = ProblemConfig {
            mesh: mesh.ok_or_else(|| ConfigError::general("missing [mesh] section"))?,
            regions,
            boundaries,
            sources,
            solver: solver.unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let (lx, ly, lz) = self.mesh.extents;
        if lx <= 0.0 || ly <= 0.0 || lz <= 0.0 {
            return Err(ConfigError::general("mesh extents must be positive"));
        }
        let (nx, ny, nz) = self.mesh.counts;
        if nx < 1 || ny < 1 || nz < 1 {
            return Err(ConfigError::general("mesh counts must be at least 1"));
        }
        if self.regions.is_empty() {
            return Err(ConfigError::general("at least one [region] section is required"));
        }
        let mut ids: Vec<u32> = self.regions.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.regions.len() {
            return Err(ConfigError::general("region ids must be unique"));
        }
        for src in &self.sources {
            if !ids.contains(&src.region) {
                return Err(ConfigError::general(format!(
                    "source references unknown region {}",
                    src.region
                )));
            }
        }
        // Overlapping boundary specs on one side are ambiguous.
        for (i, a) in self.boundaries.iter().enumerate() {
            for b in &self.boundaries[i + 1..] {
                if a.side == b.side && a.z_low < b.z_high && b.z_low < a.z_high {
                    return Err(ConfigError::general(format!(
                        "overlapping boundary specs on side {}",
                        a.side.name()
                    )));
                }
            }
        }
        // A pure-Neumann problem has a nullspace.
        let well_posed = self.boundaries.iter().any(|b| {
            matches!(
                b.condition,
                BoundaryCondition::DirichletHead(_) | BoundaryCondition::Seepage
            )
        });
        if !well_posed {
            return Err(ConfigError::general(
                "ill-posed problem: at least one dirichlet or seepage boundary is required",
            ));
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(s) = o.strategy {
            self.solver.strategy = s;
        }
        if let Some(k) = o.kind {
            self.solver.kind = k;
        }
        if let Some(k) = o.kr_scheme {
            self.solver.kr_scheme = k;
        }
        if let Some(scale) = o.mesh_scale {
            let (nx, ny, nz) = self.mesh.counts;
            self.mesh.counts = (nx * scale, ny * scale, nz * scale);
        }
    }

    /// Builds the mesh and assembles the steady problem.
    pub fn build_problem(&self) -> Result<SteadyProblem, CrateError> {
        let layers: Vec<RegionLayer> = self
            .regions
            .iter()
            .map(|r| RegionLayer {
                z_low: r.z_low,
                z_high: r.z_high,
                region_id: r.id,
            })
            .collect();
        let mesh = build_box_grid(self.mesh.extents, self.mesh.counts, &layers)?;
        let media: BTreeMap<u32, MediumProperties> =
            self.regions.iter().map(|r| (r.id, r.medium)).collect();
        let specs: Vec<(BoundaryTag, f64, f64, BoundaryCondition)> = self
            .boundaries
            .iter()
            .map(|b| (b.side, b.z_low, b.z_high, b.condition))
            .collect();
        let face_bc = resolve_boundary_conditions(&mesh, &specs);
        let mut sources = vec![0.0f64; mesh.cell_count()];
        for src in &self.sources {
            for (c, &region) in mesh.cell_region.iter().enumerate() {
                if region == src.region {
                    sources[c] += src.rate;
                }
            }
        }
        SteadyProblem::new(
            mesh,
            &media,
            face_bc,
            sources,
            self.solver.kr_scheme,
            self.solver.kind,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAM: &str = r#"
# Flow through a square dam, coarse grid.
[mesh]
extents = 10 0.25 10
counts = 40 1 40

[region]
id = 0
z_low = 0
z_high = 10
k = 0.864
porosity = 0.3
specific_storage = 1e-4

[boundary]
side = xmin
type = dirichlet
head = 10

[boundary]
side = xmax
z_low = 0
z_high = 2
type = dirichlet
head = 2

[boundary]
side = xmax
z_low = 2
z_high = 10
type = seepage

[solver]
strategy = continuation
kind = power
kr_scheme = upwind
"#;

    #[test]
    fn dam_config_parses() {
        let cfg = ProblemConfig::parse(DAM).unwrap();
        assert_eq!(cfg.mesh.counts, (40, 1, 40));
        assert_eq!(cfg.regions.len(), 1);
        assert_eq!(cfg.regions[0].medium.conductivity, [0.864; 3]);
        assert_eq!(cfg.boundaries.len(), 3);
        assert_eq!(
            cfg.boundaries[0].condition,
            BoundaryCondition::DirichletHead(10.0)
        );
        assert_eq!(cfg.boundaries[2].condition, BoundaryCondition::Seepage);
        assert_eq!(cfg.solver.strategy, Strategy::Continuation);
        let problem = cfg.build_problem().unwrap();
        assert_eq!(problem.cell_count(), 1600);
    }

    #[test]
    fn empty_file_misses_mesh_section() {
        let err = ProblemConfig::parse("").unwrap_err();
        assert!(err.message.contains("missing [mesh] section"), "{err}");
    }

    #[test]
    fn misspelled_key_names_key_and_line() {
        let text = "[mesh]\nextents = 1 1 1\ncounts = 1 1 1\n\n[region]\nid = 0\nz_low = 0\nz_high = 1\nk = 1\nporrosity = 0.3\n\n[boundary]\nside = xmin\ntype = dirichlet\nhead = 1\n";
        let err = ProblemConfig::parse(text).unwrap_err();
        assert!(err.message.contains("porrosity"), "{err}");
        assert_eq!(err.line, Some(10));
    }

    #[test]
    fn all_neumann_is_rejected_as_ill_posed() {
        let text = "[mesh]\nextents = 1 1 1\ncounts = 2 1 1\n\n[region]\nid = 0\nz_low = 0\nz_high = 1\nk = 1\nporosity = 0.3\n\n[boundary]\nside = xmin\ntype = flux\nvalue = 0.1\n";
        let err = ProblemConfig::parse(text).unwrap_err();
        assert!(err.message.contains("ill-posed"), "{err}");
    }

    #[test]
    fn overlapping_boundary_specs_rejected() {
        let text = "[mesh]\nextents = 1 1 1\ncounts = 2 1 1\n\n[region]\nid = 0\nz_low = 0\nz_high = 1\nk = 1\nporosity = 0.3\n\n[boundary]\nside = xmin\ntype = dirichlet\nhead = 1\n\n[boundary]\nside = xmin\nz_low = 0\nz_high = 0.5\ntype = seepage\n";
        let err = ProblemConfig::parse(text).unwrap_err();
        assert!(err.message.contains("overlapping"), "{err}");
    }

    #[test]
    fn unknown_section_rejected() {
        let err = ProblemConfig::parse("[grid]\nnx = 3\n").unwrap_err();
        assert!(err.message.contains("unknown section"), "{err}");
        assert_eq!(err.line, Some(1));
    }

    #[test]
    fn bad_number_names_line() {
        let text = "[mesh]\nextents = 1 1 one\ncounts = 1 1 1\n";
        let err = ProblemConfig::parse(text).unwrap_err();
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn numit_inc_must_stay_below_maxit() {
        let text = "[mesh]\nextents = 1 1 1\ncounts = 1 1 1\n\n[region]\nid = 0\nz_low = 0\nz_high = 1\nk = 1\nporosity = 0.3\n\n[boundary]\nside = xmin\ntype = dirichlet\nhead = 1\n\n[solver]\nmaxit = 10\nnumit_inc = 10\n";
        let err = ProblemConfig::parse(text).unwrap_err();
        assert!(err.message.contains("numit_inc"), "{err}");
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = ProblemConfig::parse(DAM).unwrap();
        cfg.apply_overrides(&Overrides {
            strategy: Some(Strategy::PseudoTransient),
            kind: Some(ContinuationFunctionKind::Linear),
            kr_scheme: Some(KrScheme::Central),
            mesh_scale: Some(2),
        });
        assert_eq!(cfg.solver.strategy, Strategy::PseudoTransient);
        assert_eq!(cfg.mesh.counts, (80, 2, 80));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# top comment\n\n[mesh]\nextents = 1 1 1  # inline\ncounts = 1 1 1\n\n[region]\nid = 0\nz_low = 0\nz_high = 1\nk = 1\nporosity = 0.3\n\n[boundary]\nside = zmax\ntype = dirichlet\nhead = 2\n";
        let cfg = ProblemConfig::parse(text).unwrap();
        assert_eq!(cfg.mesh.extents, (1.0, 1.0, 1.0));
    }
}
