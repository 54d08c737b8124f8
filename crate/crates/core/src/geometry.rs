//! Cell-centered structured grids on intervals and rectangles, boundary
//! tagging into a Dirichlet part and a zero-flux remainder, nodal fields and
//! their discrete norms.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub length: f64,
    pub cells: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        self.length / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.spacing()
    }
}

/// Uniform cell-centered grid; nodes are cell centers, stored row-major with
/// `x` varying fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    axes: [Axis; 2],
    dim: usize,
}

impl Grid {
    pub fn new(extents: &[(f64, usize)]) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 {
            return Err(Error::Config(format!(
                "grid dimension must be 1 or 2, got {}",
                extents.len()
            )));
        }
        for (k, &(length, cells)) in extents.iter().enumerate() {
            if !(length > 0.0 && length.is_finite()) {
                return Err(Error::Config(format!(
                    "axis {k}: length must be positive, got {length}"
                )));
            }
            if cells < 2 {
                return Err(Error::Config(format!(
                    "axis {k}: need at least 2 cells, got {cells}"
                )));
            }
        }
        let first = Axis {
            length: extents[0].0,
            cells: extents[0].1,
        };
        let second = extents
            .get(1)
            .map(|&(length, cells)| Axis { length, cells })
            .unwrap_or(Axis {
                length: 1.0,
                cells: 1,
            });
        Ok(Grid {
            axes: [first, second],
            dim: extents.len(),
        })
    }

    pub fn line(length: f64, cells: usize) -> Result<Self> {
        Self::new(&[(length, cells)])
    }

    pub fn rect(lx: f64, nx: usize, ly: f64, ny: usize) -> Result<Self> {
        Self::new(&[(lx, nx), (ly, ny)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn axis(&self, k: usize) -> Axis {
        self.axes[k]
    }

    pub fn nx(&self) -> usize {
        self.axes[0].cells
    }

    /// Cells along `y`; 1 for one-dimensional grids.
    pub fn ny(&self) -> usize {
        if self.dim == 2 {
            self.axes[1].cells
        } else {
            1
        }
    }

    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 2] {
        [self.axes[0].spacing(), self.axes[1].spacing()]
    }

    pub fn cell_volume(&self) -> f64 {
        if self.dim == 2 {
            self.axes[0].spacing() * self.axes[1].spacing()
        } else {
            self.axes[0].spacing()
        }
    }

    /// Measure of the domain.
    pub fn volume(&self) -> f64 {
        if self.dim == 2 {
            self.axes[0].length * self.axes[1].length
        } else {
            self.axes[0].length
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        let i = node % self.nx();
        let j = node / self.nx();
        let y = if self.dim == 2 {
            self.axes[1].center(j)
        } else {
            0.0
        };
        [self.axes[0].center(i), y]
    }

    pub fn faces(&self) -> &'static [Face] {
        if self.dim == 2 {
            &[Face::Left, Face::Right, Face::Bottom, Face::Top]
        } else {
            &[Face::Left, Face::Right]
        }
    }

    /// Nodes adjacent to `face`, ordered along the face.
    pub fn face_nodes(&self, face: Face) -> Vec<usize> {
        let (nx, ny) = (self.nx(), self.ny());
        match face {
            Face::Left => (0..ny).map(|j| self.index(0, j)).collect(),
            Face::Right => (0..ny).map(|j| self.index(nx - 1, j)).collect(),
            Face::Bottom => (0..nx).map(|i| self.index(i, 0)).collect(),
            Face::Top => (0..nx).map(|i| self.index(i, ny - 1)).collect(),
        }
    }

    /// Spacing normal to `face`.
    pub fn normal_spacing(&self, face: Face) -> f64 {
        match face {
            Face::Left | Face::Right => self.axes[0].spacing(),
            Face::Bottom | Face::Top => self.axes[1].spacing(),
        }
    }

    /// `(d-1)`-dimensional measure of `face`.
    pub fn face_measure(&self, face: Face) -> f64 {
        if self.dim == 1 {
            return 1.0;
        }
        match face {
            Face::Left | Face::Right => self.axes[1].length,
            Face::Bottom | Face::Top => self.axes[0].length,
        }
    }

    pub fn field(&self, role: FieldRole, values: Vec<f64>) -> Result<Field> {
        Field::new(*self, role, values)
    }

    pub fn constant(&self, role: FieldRole, value: f64) -> Field {
        Field {
            grid: *self,
            role,
            values: vec![value; self.len()],
        }
    }

    pub fn sample<F: Fn([f64; 2]) -> f64>(&self, role: FieldRole, f: F) -> Field {
        Field {
            grid: *self,
            role,
            values: (0..self.len()).map(|n| f(self.coords(n))).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Face {
    Left,
    Right,
    Bottom,
    Top,
}

impl Face {
    pub fn name(&self) -> &'static str {
        match self {
            Face::Left => "left",
            Face::Right => "right",
            Face::Bottom => "bottom",
            Face::Top => "top",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "left" => Ok(Face::Left),
            "right" => Ok(Face::Right),
            "bottom" => Ok(Face::Bottom),
            "top" => Ok(Face::Top),
            other => Err(Error::Config(format!("unknown face '{other}'"))),
        }
    }

    fn slot(&self) -> usize {
        *self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceTag {
    Dirichlet,
    Neumann,
}

/// Per-face boundary tags. Every face of the grid carries exactly one tag.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMap {
    tags: [FaceTag; 4],
    faces: &'static [Face],
    dirichlet_measure: f64,
}

impl BoundaryMap {
    /// Tags the listed faces Dirichlet and all remaining faces Neumann.
    pub fn tag(grid: &Grid, dirichlet: &[Face]) -> Result<Self> {
        let faces = grid.faces();
        let mut tags = [FaceTag::Neumann; 4];
        let mut seen = [false; 4];
        for f in dirichlet {
            if !faces.contains(f) {
                return Err(Error::Config(format!(
                    "face '{}' does not exist on a {}D grid",
                    f.name(),
                    grid.dim()
                )));
            }
            if seen[f.slot()] {
                return Err(Error::Config(format!("face '{}' tagged twice", f.name())));
            }
            seen[f.slot()] = true;
            tags[f.slot()] = FaceTag::Dirichlet;
        }
        let dirichlet_measure = dirichlet.iter().map(|&f| grid.face_measure(f)).sum();
        Ok(BoundaryMap {
            tags,
            faces,
            dirichlet_measure,
        })
    }

    pub fn pure_neumann(grid: &Grid) -> Self {
        Self::tag(grid, &[]).expect("empty tag list is always valid")
    }

    pub fn tag_of(&self, face: Face) -> FaceTag {
        self.tags[face.slot()]
    }

    pub fn dirichlet_faces(&self) -> Vec<Face> {
        self.faces
            .iter()
            .copied()
            .filter(|&f| self.tag_of(f) == FaceTag::Dirichlet)
            .collect()
    }

    pub fn faces(&self) -> &'static [Face] {
        self.faces
    }

    pub fn dirichlet_measure(&self) -> f64 {
        self.dirichlet_measure
    }

    /// Pure-Neumann maps are only meant for verification (mass balance).
    pub fn is_pure_neumann(&self) -> bool {
        self.dirichlet_measure == 0.0
    }
}

/// Dirichlet values per boundary face, one value per adjacent node.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletData {
    values: [Vec<f64>; 4],
}

impl DirichletData {
    pub fn uniform(grid: &Grid, map: &BoundaryMap, value: f64) -> Self {
        let mut values: [Vec<f64>; 4] = Default::default();
        for f in map.dirichlet_faces() {
            values[f.slot()] = vec![value; grid.face_nodes(f).len()];
        }
        DirichletData { values }
    }

    pub fn per_face(grid: &Grid, map: &BoundaryMap, values: &[(Face, f64)]) -> Result<Self> {
        let mut data = Self::uniform(grid, map, 0.0);
        for &(face, v) in values {
            if map.tag_of(face) != FaceTag::Dirichlet {
                return Err(Error::Config(format!(
                    "boundary value given for non-Dirichlet face '{}'",
                    face.name()
                )));
            }
            data.values[face.slot()].iter_mut().for_each(|x| *x = v);
        }
        Ok(data)
    }

    pub fn face_values(&self, face: Face) -> &[f64] {
        &self.values[face.slot()]
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        DirichletData {
            values: self.values.clone().map(|v| v.into_iter().map(&f).collect()),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Common value if every Dirichlet entry is the same.
    pub fn uniform_value(&self) -> Option<f64> {
        let mut it = self.values.iter().flatten();
        let first = *it.next()?;
        it.all(|&v| v == first).then_some(first)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    U,
    V,
    W,
    Auxiliary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    pub role: FieldRole,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    Linf,
}

impl Field {
    pub fn new(grid: Grid, role: FieldRole, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!(
                "non-finite value {} at node {bad}",
                values[bad]
            )));
        }
        Ok(Field { grid, role, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        discrete_norm(&self.grid, &self.values, kind)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Integral of the field, `sum(value) * cellVolume`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Snapshot CSV: `x[,y],value`, one node per row, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.grid.dim() == 2 {
            out.push_str("x,y,value\n");
        } else {
            out.push_str("x,value\n");
        }
        for (n, v) in self.values.iter().enumerate() {
            let [x, y] = self.grid.coords(n);
            if self.grid.dim() == 2 {
                let _ = writeln!(out, "{},{},{}", fmt17(x), fmt17(y), fmt17(*v));
            } else {
                let _ = writeln!(out, "{},{}", fmt17(x), fmt17(*v));
            }
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Discrete L1, L2 and max norms weighted by the uniform cell volume.
pub fn discrete_norm(grid: &Grid, values: &[f64], kind: NormKind) -> f64 {
    let vol = grid.cell_volume();
    match kind {
        NormKind::L1 => values.iter().map(|v| v.abs()).sum::<f64>() * vol,
        NormKind::L2 => (values.iter().map(|v| v * v).sum::<f64>() * vol).sqrt(),
        NormKind::Linf => values.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
    }
}

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
