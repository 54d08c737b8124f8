//! Run configuration: a flat `[section]` / `key = value` text format with `#`
//! comments. Parsing collects every problem in the file before failing, and
//! rejects unknown sections and keys.
//!
//! ```text
//! [domain]
//! dimension = 2
//! length = 1.0, 1.0
//! cells = 64, 64
//!
//! [phi]
//! kind = singular_power
//! a = 1
//! b = 1
//!
//! [reaction]
//! kind = biofilm
//! d2 = 0.01
//!
//! [bc]
//! dirichlet = top
//! u = 0
//! v = 1
//!
//! [ic]
//! kind = bumps
//! count = 5
//! radius = 0.1
//! height = 0.8
//!
//! [time]
//! T = 1
//! tau = 1e-3
//! snapshot_every = 100
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Face, Grid};
use crate::nonlinearity::PhiSpec;
use crate::reactions::{BiofilmKinetics, ReactionSpec};

/// One problem found while reading a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    /// `section.key`, or just the section name.
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainConfig {
    pub lengths: Vec<f64>,
    pub cells: Vec<usize>,
}

impl DomainConfig {
    pub fn dimension(&self) -> usize {
        self.cells.len()
    }

    pub fn grid(&self) -> Result<Grid> {
        let extents: Vec<(f64, usize)> = self
            .lengths
            .iter()
            .copied()
            .zip(self.cells.iter().copied())
            .collect();
        Grid::new(&extents)
    }
}

#[derive(Debug, Clone)]
pub struct ReactionConfig {
    pub spec: ReactionSpec,
    /// Diffusion scalings of the `u` and `v` equations.
    pub d1: f64,
    pub d2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConfig {
    pub dirichlet_u: Vec<Face>,
    pub dirichlet_v: Vec<Face>,
    /// Uniform Dirichlet values, overridden face by face.
    pub u: f64,
    pub v: f64,
    pub u_faces: Vec<(Face, f64)>,
    pub v_faces: Vec<(Face, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialShape {
    Constant,
    Bumps {
        count: usize,
        radius: f64,
        height: f64,
        seed: u64,
    },
    /// Snapshot CSV (`x[,y],value`) in the grid's row-major order.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfig {
    pub shape: InitialShape,
    /// Background value of `u` (the bumps sit on top of it).
    pub u: f64,
    /// Uniform initial value of `v` in coupled runs.
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeConfig {
    pub horizon: f64,
    pub tau: f64,
    /// Snapshot stride in steps; 0 writes only the first and last state.
    pub snapshot_every: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub phi: PhiSpec,
    pub reaction: ReactionConfig,
    pub bc: BoundaryConfig,
    pub ic: InitialConfig,
    pub time: TimeConfig,
    pub output: PathBuf,
}

impl RunConfig {
    pub fn is_coupled(&self) -> bool {
        self.reaction.spec.is_coupled()
    }

    /// Number of implicit steps, `round(T / tau)`.
    pub fn steps(&self) -> usize {
        (self.time.horizon / self.time.tau).round() as usize
    }
}

const SECTIONS: &[&str] = &["domain", "phi", "reaction", "bc", "ic", "time", "output"];

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

/// Key lookup over the raw entries that records diagnostics as it goes.
struct Reader {
    entries: BTreeMap<(String, String), Entry>,
    errors: Vec<Diagnostic>,
}

impl Reader {
    fn raw(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        self.entries
            .get_mut(&(section.to_string(), key.to_string()))
            .map(|e| {
                e.used = true;
                (e.line, e.value.clone())
            })
    }

    fn fail(&mut self, line: Option<usize>, section: &str, key: &str, message: impl Into<String>) {
        self.errors.push(Diagnostic {
            line,
            key: format!("{section}.{key}"),
            message: message.into(),
        });
    }

    fn parsed<T: std::str::FromStr>(
        &mut self,
        section: &str,
        key: &str,
        what: &str,
    ) -> Option<(usize, T)> {
        let (line, raw) = self.raw(section, key)?;
        match raw.parse::<T>() {
            Ok(v) => Some((line, v)),
            Err(_) => {
                self.fail(
                    Some(line),
                    section,
                    key,
                    format!("expected {what}, got `{raw}`"),
                );
                None
            }
        }
    }

    fn real(&mut self, section: &str, key: &str, default: f64) -> f64 {
        match self.parsed::<f64>(section, key, "a number") {
            Some((line, v)) if !v.is_finite() => {
                self.fail(Some(line), section, key, "must be finite");
                default
            }
            Some((_, v)) => v,
            None => default,
        }
    }

    /// Like [`real`](Self::real) but requires `v > 0` (or `v >= 0`).
    fn positive(&mut self, section: &str, key: &str, default: f64, allow_zero: bool) -> f64 {
        let line = self.line_of(section, key);
        let v = self.real(section, key, default);
        if v < 0.0 || (!allow_zero && v == 0.0) {
            let bound = if allow_zero { ">= 0" } else { "> 0" };
            self.fail(line, section, key, format!("must be {bound} (got {v})"));
        }
        v
    }

    fn integer(&mut self, section: &str, key: &str, default: usize) -> usize {
        self.parsed::<usize>(section, key, "a non-negative integer")
            .map_or(default, |(_, v)| v)
    }

    fn word(&mut self, section: &str, key: &str, default: &str) -> (Option<usize>, String) {
        match self.raw(section, key) {
            Some((line, v)) => (Some(line), v),
            None => (None, default.to_string()),
        }
    }

    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .map(|e| e.line)
    }

    fn list<T: std::str::FromStr>(
        &mut self,
        section: &str,
        key: &str,
        what: &str,
    ) -> Option<(usize, Vec<T>)> {
        let (line, raw) = self.raw(section, key)?;
        let mut out = Vec::new();
        for item in raw.split(',').map(str::trim) {
            match item.parse::<T>() {
                Ok(v) => out.push(v),
                Err(_) => {
                    self.fail(
                        Some(line),
                        section,
                        key,
                        format!("expected {what}, got `{item}`"),
                    );
                    return None;
                }
            }
        }
        Some((line, out))
    }

    fn faces(&mut self, section: &str, key: &str, dim: usize) -> Option<Vec<Face>> {
        let (line, raw) = self.raw(section, key)?;
        let raw = raw.trim();
        if raw.is_empty() || raw == "none" {
            return Some(Vec::new());
        }
        let mut faces = Vec::new();
        for name in raw.split(',').map(str::trim) {
            match Face::parse(name) {
                Ok(f) if dim == 1 && matches!(f, Face::Bottom | Face::Top) => {
                    self.fail(
                        Some(line),
                        section,
                        key,
                        format!("face `{name}` does not exist in 1D"),
                    );
                }
                Ok(f) if faces.contains(&f) => {
                    self.fail(
                        Some(line),
                        section,
                        key,
                        format!("face `{name}` listed twice"),
                    );
                }
                Ok(f) => faces.push(f),
                Err(_) => self.fail(Some(line), section, key, format!("unknown face `{name}`")),
            }
        }
        Some(faces)
    }
}

/// Reads and validates a configuration file. Relative paths inside it
/// (the initial-data file) resolve against the file's directory.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_str(&text, base).map_err(|errs| {
        Error::Config(
            errs.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("\n"),
        )
    })
}

/// Parses configuration text, returning every diagnostic on failure.
pub fn parse_str(text: &str, base: &Path) -> std::result::Result<RunConfig, Vec<Diagnostic>> {
    let mut reader = Reader {
        entries: BTreeMap::new(),
        errors: Vec::new(),
    };
    tokenize(text, &mut reader);
    let cfg = interpret(&mut reader, base);
    for ((section, key), e) in &reader.entries {
        if !e.used {
            // Keys in unknown sections were already reported.
            if SECTIONS.contains(&section.as_str()) {
                reader.errors.push(Diagnostic {
                    line: Some(e.line),
                    key: format!("{section}.{key}"),
                    message: "unknown key".into(),
                });
            }
        }
    }
    if reader.errors.is_empty() {
        Ok(cfg)
    } else {
        reader.errors.sort_by_key(|d| d.line.unwrap_or(usize::MAX));
        Err(reader.errors)
    }
}

fn tokenize(text: &str, reader: &mut Reader) {
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                reader.errors.push(Diagnostic {
                    line: Some(line),
                    key: content.to_string(),
                    message: "malformed section header".into(),
                });
                section = None;
                continue;
            };
            let name = name.trim().to_string();
            if !SECTIONS.contains(&name.as_str()) {
                reader.errors.push(Diagnostic {
                    line: Some(line),
                    key: name.clone(),
                    message: "unknown section".into(),
                });
            }
            section = Some(name);
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            reader.errors.push(Diagnostic {
                line: Some(line),
                key: section.clone().unwrap_or_default(),
                message: format!("expected `key = value`, got `{content}`"),
            });
            continue;
        };
        let key = key.trim().to_string();
        let Some(sec) = section.clone() else {
            reader.errors.push(Diagnostic {
                line: Some(line),
                key,
                message: "key outside any section".into(),
            });
            continue;
        };
        let entry = Entry {
            line,
            value: value.trim().to_string(),
            used: false,
        };
        let slot = (sec.clone(), key.clone());
        if let Some(prev) = reader.entries.get(&slot) {
            reader.errors.push(Diagnostic {
                line: Some(line),
                key: format!("{sec}.{key}"),
                message: format!("duplicate key (first set on line {})", prev.line),
            });
            continue;
        }
        reader.entries.insert(slot, entry);
    }
}

fn interpret(r: &mut Reader, base: &Path) -> RunConfig {
    let domain = read_domain(r);
    let dim = domain.dimension();
    let phi = read_phi(r);
    let reaction = read_reaction(r);
    let bc = read_bc(r, dim);
    let ic = read_ic(r, base);
    let time = read_time(r);
    let output = PathBuf::from(r.word("output", "directory", "out").1);
    if let Some(msg) = check_initial_range(&phi, &ic) {
        let line = r.line_of("ic", "height").or(r.line_of("ic", "u"));
        r.fail(line, "ic", "height", msg);
    }
    if !reaction.spec.is_coupled()
        && (!bc.v_faces.is_empty() || r.line_of("bc", "dirichlet_v").is_some())
    {
        let line = r.line_of("bc", "dirichlet_v");
        r.fail(
            line,
            "bc",
            "dirichlet_v",
            "only meaningful for coupled reactions",
        );
    }
    RunConfig {
        domain,
        phi,
        reaction,
        bc,
        ic,
        time,
        output,
    }
}

fn read_domain(r: &mut Reader) -> DomainConfig {
    let dim_line = r.line_of("domain", "dimension");
    let mut dim = r.integer("domain", "dimension", 1);
    if dim != 1 && dim != 2 {
        r.fail(
            dim_line,
            "domain",
            "dimension",
            format!("must be 1 or 2 (got {dim})"),
        );
        dim = 1;
    }
    let lengths = match r.list::<f64>("domain", "length", "a number") {
        Some((line, v)) => broadcast(r, line, "length", v, dim).unwrap_or(vec![1.0; dim]),
        None => vec![1.0; dim],
    };
    if r.line_of("domain", "cells").is_none() {
        r.fail(None, "domain", "cells", "missing");
    }
    let cells = match r.list::<usize>("domain", "cells", "a positive integer") {
        Some((line, v)) => broadcast(r, line, "cells", v, dim).unwrap_or(vec![2; dim]),
        None => vec![2; dim],
    };
    let line = r.line_of("domain", "length");
    if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        r.fail(line, "domain", "length", "every length must be positive");
    }
    let line = r.line_of("domain", "cells");
    if cells.iter().any(|&c| c < 2) {
        r.fail(line, "domain", "cells", "at least 2 cells per axis");
    }
    DomainConfig {
        lengths: lengths
            .into_iter()
            .map(|l| if l > 0.0 { l } else { 1.0 })
            .collect(),
        cells: cells.into_iter().map(|c| c.max(2)).collect(),
    }
}

fn broadcast<T: Copy>(
    r: &mut Reader,
    line: usize,
    key: &str,
    v: Vec<T>,
    dim: usize,
) -> Option<Vec<T>> {
    match v.len() {
        1 => Some(vec![v[0]; dim]),
        n if n == dim => Some(v),
        n => {
            r.fail(
                Some(line),
                "domain",
                key,
                format!("expected 1 or {dim} values, got {n}"),
            );
            None
        }
    }
}

fn read_phi(r: &mut Reader) -> PhiSpec {
    let (line, kind) = r.word("phi", "kind", "linear");
    let fallback = PhiSpec::linear(1.0).expect("unit slope is valid");
    let spec = match kind.as_str() {
        "singular_power" => {
            let a = r.real("phi", "a", 1.0);
            let b = r.real("phi", "b", 1.0);
            PhiSpec::singular_power(a, b)
        }
        "porous_medium" => {
            let m = r.real("phi", "m", 2.0);
            PhiSpec::porous_medium(m)
        }
        "linear" => {
            let s = r.real("phi", "slope", 1.0);
            PhiSpec::linear(s)
        }
        other => {
            r.fail(
                line,
                "phi",
                "kind",
                format!("unknown kind `{other}` (singular_power, porous_medium, linear)"),
            );
            return fallback;
        }
    };
    spec.unwrap_or_else(|e| {
        r.fail(line, "phi", "kind", e.to_string());
        fallback
    })
}

fn read_reaction(r: &mut Reader) -> ReactionConfig {
    let (line, kind) = r.word("reaction", "kind", "none");
    let d1 = r.positive("reaction", "d1", 1.0, false);
    let d2 = r.positive("reaction", "d2", 1.0, false);
    let mut spec = match kind.as_str() {
        "none" => ReactionSpec::none(),
        "porous_fischer" => ReactionSpec::porous_fischer(),
        "biofilm" => {
            let defaults = BiofilmKinetics::default();
            let k1 = r.real("reaction", "K1", defaults.k1);
            let k2 = r.real("reaction", "K2", defaults.k2);
            let k3 = r.real("reaction", "K3", defaults.k3);
            let k4 = r.real("reaction", "K4", defaults.k4);
            match BiofilmKinetics::new(k1, k2, k3, k4) {
                Ok(k) => ReactionSpec::biofilm(k),
                Err(e) => {
                    r.fail(line, "reaction", "K1..K4", e.to_string());
                    ReactionSpec::none()
                }
            }
        }
        other => {
            r.fail(
                line,
                "reaction",
                "kind",
                format!("unknown kind `{other}` (none, porous_fischer, biofilm)"),
            );
            ReactionSpec::none()
        }
    };
    if r.line_of("reaction", "L_override").is_some() {
        spec.lipschitz_override = Some(r.positive("reaction", "L_override", 0.0, true));
    }
    ReactionConfig { spec, d1, d2 }
}

fn read_bc(r: &mut Reader, dim: usize) -> BoundaryConfig {
    let default = if dim == 2 { Face::Top } else { Face::Right };
    let dirichlet_u = r.faces("bc", "dirichlet", dim).unwrap_or(vec![default]);
    let dirichlet_v = r
        .faces("bc", "dirichlet_v", dim)
        .unwrap_or_else(|| dirichlet_u.clone());
    for (key, faces) in [("dirichlet", &dirichlet_u), ("dirichlet_v", &dirichlet_v)] {
        if faces.is_empty() && r.line_of("bc", key).is_some() {
            let line = r.line_of("bc", key);
            r.fail(
                line,
                "bc",
                key,
                "at least one Dirichlet face is required (pure Neumann is verification-only)",
            );
        }
    }
    let u = r.real("bc", "u", 0.0);
    let v = r.real("bc", "v", 1.0);
    let u_faces = per_face_values(r, "u", &dirichlet_u);
    let v_faces = per_face_values(r, "v", &dirichlet_v);
    BoundaryConfig {
        dirichlet_u,
        dirichlet_v,
        u,
        v,
        u_faces,
        v_faces,
    }
}

fn per_face_values(r: &mut Reader, prefix: &str, tagged: &[Face]) -> Vec<(Face, f64)> {
    let mut out = Vec::new();
    for face in [Face::Left, Face::Right, Face::Bottom, Face::Top] {
        let key = format!("{prefix}_{}", face.name());
        let line = r.line_of("bc", &key);
        if line.is_none() {
            continue;
        }
        let value = r.real("bc", &key, 0.0);
        if !tagged.contains(&face) {
            r.fail(
                line,
                "bc",
                &key,
                format!("face `{}` is not a Dirichlet face", face.name()),
            );
        }
        out.push((face, value));
    }
    out
}

fn read_ic(r: &mut Reader, base: &Path) -> InitialConfig {
    let (line, kind) = r.word("ic", "kind", "constant");
    let u = r.real("ic", "u", 0.0);
    let v = r.real("ic", "v", 1.0);
    let shape = match kind.as_str() {
        "constant" => InitialShape::Constant,
        "bumps" => {
            let count_line = r.line_of("ic", "count");
            let count = r.integer("ic", "count", 3);
            if count == 0 {
                r.fail(count_line, "ic", "count", "at least one bump");
            }
            let radius = r.positive("ic", "radius", 0.1, false);
            let height = r.positive("ic", "height", 0.5, false);
            let seed = r
                .parsed::<u64>("ic", "seed", "a non-negative integer")
                .map_or(0, |(_, s)| s);
            InitialShape::Bumps {
                count,
                radius,
                height,
                seed,
            }
        }
        "file" => match r.raw("ic", "path") {
            Some((_, p)) => InitialShape::File(base.join(p)),
            None => {
                r.fail(line, "ic", "path", "required when kind = file");
                InitialShape::Constant
            }
        },
        other => {
            r.fail(
                line,
                "ic",
                "kind",
                format!("unknown kind `{other}` (constant, bumps, file)"),
            );
            InitialShape::Constant
        }
    };
    InitialConfig { shape, u, v }
}

fn read_time(r: &mut Reader) -> TimeConfig {
    if r.line_of("time", "T").is_none() {
        r.fail(None, "time", "T", "missing");
    }
    if r.line_of("time", "tau").is_none() {
        r.fail(None, "time", "tau", "missing");
    }
    let horizon = r.positive("time", "T", 1.0, false);
    let tau = r.positive("time", "tau", 1.0, false);
    let snapshot_every = r.integer("time", "snapshot_every", 0);
    if horizon > 0.0 && tau > 0.0 {
        let steps = horizon / tau;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) || steps.round() < 1.0 {
            let line = r.line_of("time", "tau");
            r.fail(
                line,
                "time",
                "tau",
                format!("T / tau = {steps} must be a positive integer"),
            );
        }
    }
    TimeConfig {
        horizon,
        tau,
        snapshot_every,
    }
}

/// Constant and bump data must stay inside the domain of `phi`.
fn check_initial_range(phi: &PhiSpec, ic: &InitialConfig) -> Option<String> {
    let peak = match ic.shape {
        InitialShape::Bumps { height, .. } => ic.u + height,
        _ => ic.u,
    };
    if phi.interval.contains(peak) && phi.interval.contains(ic.u) {
        None
    } else {
        Some(format!(
            "initial values up to {peak} leave ({}, {})",
            phi.interval.lo, phi.interval.hi
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAT: &str = "[domain]\ncells = 10\n[time]\nT = 0.1\ntau = 0.01\n";

    fn parse(text: &str) -> std::result::Result<RunConfig, Vec<Diagnostic>> {
        parse_str(text, Path::new("."))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(HEAT).unwrap();
        assert_eq!(c.domain.cells, vec![10]);
        assert_eq!(c.domain.lengths, vec![1.0]);
        assert_eq!(c.phi, PhiSpec::linear(1.0).unwrap());
        assert!(!c.is_coupled() && c.reaction.spec.lipschitz_bound() == 0.0);
        assert_eq!(c.bc.dirichlet_u, vec![Face::Right]);
        assert_eq!(c.ic.shape, InitialShape::Constant);
        assert_eq!(c.steps(), 10);
        assert_eq!(c.output, PathBuf::from("out"));
    }

    #[test]
    fn zero_cells_named() {
        let errs = parse("[domain]\ncells = 0\n[time]\nT = 1\ntau = 0.5\n").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].key, "domain.cells");
        assert_eq!(errs[0].line, Some(2));
    }

    #[test]
    fn all_errors_collected() {
        let text = "[domain]\ncells = x\nbogus = 1\n[phi]\nkind = cubic\n[weird]\nq = 1\n[time]\ntau = -1\n";
        let errs = parse(text).unwrap_err();
        let keys: Vec<&str> = errs.iter().map(|d| d.key.as_str()).collect();
        for k in [
            "domain.cells",
            "domain.bogus",
            "phi.kind",
            "weird",
            "time.T",
            "time.tau",
        ] {
            assert!(keys.contains(&k), "{k} missing from {keys:?}");
        }
    }

    #[test]
    fn comments_and_whitespace() {
        let c = parse("# heat\n[domain]   # grid\n  cells = 4   # four\n[time]\nT=1\ntau=0.25\n")
            .unwrap();
        assert_eq!(c.domain.cells, vec![4]);
    }

    #[test]
    fn biofilm_preset_dirichlet_top() {
        let text = "[domain]\ndimension = 2\ncells = 8, 8\n[phi]\nkind = singular_power\na = 1\nb = 1\n\
                    [reaction]\nkind = biofilm\nK1 = 1\nK2 = 1\nK3 = 1\nK4 = 1\nd1 = 1\nd2 = 1e-2\n\
                    [bc]\ndirichlet = top\nu = 0\nv = 1\n[ic]\nkind = bumps\ncount = 3\nradius = 0.1\nheight = 0.8\n\
                    [time]\nT = 0.1\ntau = 0.01\n";
        let c = parse(text).unwrap();
        assert!(c.is_coupled());
        assert_eq!(c.bc.dirichlet_u, vec![Face::Top]);
        assert_eq!(c.bc.dirichlet_v, vec![Face::Top]);
        assert_eq!(c.reaction.d2, 1e-2);
        assert_eq!(c.phi, PhiSpec::singular_power(1.0, 1.0).unwrap());
    }

    #[test]
    fn faces_checked_against_dimension() {
        let errs = parse("[domain]\ncells = 4\n[bc]\ndirichlet = top\n[time]\nT = 1\ntau = 0.5\n")
            .unwrap_err();
        assert_eq!(errs[0].key, "bc.dirichlet");
        let errs = parse(
            "[domain]\ncells = 4\n[bc]\ndirichlet = left\nu_right = 1\n[time]\nT = 1\ntau = 0.5\n",
        )
        .unwrap_err();
        assert_eq!(errs[0].key, "bc.u_right");
    }

    #[test]
    fn pure_neumann_rejected() {
        let errs = parse("[domain]\ncells = 4\n[bc]\ndirichlet = none\n[time]\nT = 1\ntau = 0.5\n")
            .unwrap_err();
        assert_eq!(errs[0].key, "bc.dirichlet");
    }

    #[test]
    fn singular_range_enforced() {
        let text =
            "[domain]\ncells = 4\n[phi]\nkind = singular_power\n[ic]\nkind = bumps\nheight = 1.2\n\
                    [time]\nT = 1\ntau = 0.5\n";
        let errs = parse(text).unwrap_err();
        assert_eq!(errs[0].key, "ic.height");
    }

    #[test]
    fn duplicate_and_non_integer_steps() {
        let errs = parse("[domain]\ncells = 4\ncells = 5\n[time]\nT = 1\ntau = 0.3\n").unwrap_err();
        assert_eq!(errs.len(), 2);
        assert!(errs[0].message.contains("duplicate"));
        assert_eq!(errs[1].key, "time.tau");
    }
}
