//! Structured hexahedral grids over a box domain.
//!
//! Grids are axis-aligned and orthogonal, which keeps the two-point flux
//! approximation consistent. One-cell-thick grids give quasi-2D setups
//! such as the dam cross-section.

use crate::error::Error;

/// The six sides of the box domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundaryTag {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 6] = [
        BoundaryTag::XMin,
        BoundaryTag::XMax,
        BoundaryTag::YMin,
        BoundaryTag::YMax,
        BoundaryTag::ZMin,
        BoundaryTag::ZMax,
    ];

    pub fn index(self) -> usize {
        match self {
            BoundaryTag::XMin => 0,
            BoundaryTag::XMax => 1,
            BoundaryTag::YMin => 2,
            BoundaryTag::YMax => 3,
            BoundaryTag::ZMin => 4,
            BoundaryTag::ZMax => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::XMin => "xmin",
            BoundaryTag::XMax => "xmax",
            BoundaryTag::YMin => "ymin",
            BoundaryTag::YMax => "ymax",
            BoundaryTag::ZMin => "zmin",
            BoundaryTag::ZMax => "zmax",
        }
    }

    pub fn parse(s: &str) -> Option<BoundaryTag> {
        BoundaryTag::ALL.iter().copied().find(|t| t.name() == s)
    }
}

/// Coordinate axis a face normal is aligned with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Per-cell geometry needed by the constitutive model and the FV assembly.
///
/// `z_min`/`z_max` are the minimal and maximal vertical node coordinates of
/// the cell; the piecewise-linear water content model is parameterized by
/// them.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub centroid: [f64; 3],
    /// Cell volume, m³.
    pub volume: f64,
    pub z_min: f64,
    pub z_max: f64,
}

/// Which cells a face connects.
#[derive(Debug, Clone, Copy)]
pub enum FaceKind {
    /// Shared by two cells; the stored normal points from `left` to `right`.
    Interior {
        right: usize,
        /// Center-to-face distance on the `left` side, m.
        dist_left: f64,
        /// Center-to-face distance on the `right` side, m.
        dist_right: f64,
    },
    /// On the domain boundary; the stored normal points outward.
    Boundary {
        tag: BoundaryTag,
        /// Cell-center-to-face distance, m.
        dist: f64,
    },
}

/// An oriented mesh face.
#[derive(Debug, Clone, Copy)]
pub struct Face {
    /// Cell on the side the normal points away from.
    pub left: usize,
    pub kind: FaceKind,
    /// Face area, m².
    pub area: f64,
    /// Unit normal.
    pub normal: [f64; 3],
    pub centroid: [f64; 3],
    pub axis: Axis,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        matches!(self.kind, FaceKind::Boundary { .. })
    }

    /// Boundary tag, if this is a boundary face.
    pub fn boundary_tag(&self) -> Option<BoundaryTag> {
        match self.kind {
            FaceKind::Boundary { tag, .. } => Some(tag),
            FaceKind::Interior { .. } => None,
        }
    }
}

/// Geometric half of the two-point transmissibility for one face: the
/// cell-center-to-face distances on each existing side.
#[derive(Debug, Clone, Copy)]
pub struct FaceGeometry {
    pub dist_left: f64,
    /// `None` for boundary faces.
    pub dist_right: Option<f64>,
    pub axis: Axis,
}

/// Metadata of the generating box grid, kept for structured exports.
#[derive(Debug, Clone, Copy)]
pub struct GridShape {
    pub extents: [f64; 3],
    pub counts: [usize; 3],
    pub spacing: [f64; 3],
}

/// Immutable cell/face topology and geometry of a structured box grid.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub grid: GridShape,
    pub cells: Vec<CellGeometry>,
    pub faces: Vec<Face>,
    /// Region id of each cell (layered geology: assigned by centroid z).
    pub cell_region: Vec<u32>,
    /// Boundary face indices grouped by box side.
    pub boundary_faces: [Vec<usize>; 6],
    // CSR-style cell -> (face, orientation) adjacency; orientation is +1 when
    // the face normal points out of the cell.
    cell_face_offsets: Vec<usize>,
    cell_face_items: Vec<(u32, i8)>,
}

impl Mesh {
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Faces of a cell with the orientation of their normal relative to it.
    pub fn cell_faces(&self, cell: usize) -> &[(u32, i8)] {
        let lo = self.cell_face_offsets[cell];
        let hi = self.cell_face_offsets[cell + 1];
        &self.cell_face_items[lo..hi]
    }

    pub fn interior_face_count(&self) -> usize {
        self.faces.iter().filter(|f| !f.is_boundary()).count()
    }

    pub fn boundary_face_count(&self) -> usize {
        self.boundary_faces.iter().map(Vec::len).sum()
    }

    /// Distances entering the two-point transmissibility of `face`.
    pub fn face_geometry(&self, face: usize) -> Result<FaceGeometry, Error> {
        let f = &self.faces[face];
        let geo = match f.kind {
            FaceKind::Interior {
                dist_left,
                dist_right,
                ..
            } => FaceGeometry {
                dist_left,
                dist_right: Some(dist_right),
                axis: f.axis,
            },
            FaceKind::Boundary { dist, .. } => FaceGeometry {
                dist_left: dist,
                dist_right: None,
                axis: f.axis,
            },
        };
        if geo.dist_left <= 0.0 || geo.dist_right.is_some_and(|d| d <= 0.0) {
            return Err(Error::Mesh(format!("degenerate zero distance at face {face}")));
        }
        Ok(geo)
    }

    pub fn total_volume(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }
}

/// One geological layer of the box: cells whose centroid z falls in
/// `[z_low, z_high)` get `region_id`.
#[derive(Debug, Clone, Copy)]
pub struct RegionLayer {
    pub z_low: f64,
    pub z_high: f64,
    pub region_id: u32,
}

const LAYER_TOL: f64 = 1e-9;

fn layer_of(layers: &[RegionLayer], z: f64) -> Option<u32> {
    layers
        .iter()
        .find(|l| z >= l.z_low && z < l.z_high)
        .map(|l| l.region_id)
}

/// Builds an `nx × ny × nz` hexahedral grid over the box
/// `[0,Lx] × [0,Ly] × [0,Lz]` with layered region assignment.
///
/// `region_layers` must partition `[0, Lz]` without overlap or gaps.
pub fn build_box_grid(
    extents: (f64, f64, f64),
    counts: (usize, usize, usize),
    region_layers: &[RegionLayer],
) -> Result<Mesh, Error> {
    let (lx, ly, lz) = extents;
    let (nx, ny, nz) = counts;
    if nx < 1 || ny < 1 || nz < 1 {
        return Err(Error::Mesh(format!("cell counts must be >= 1, got {nx}x{ny}x{nz}")));
    }
    if lx <= 0.0 || ly <= 0.0 || lz <= 0.0 {
        return Err(Error::Mesh(format!(
            "extents must be positive, got ({lx}, {ly}, {lz})"
        )));
    }
    validate_layers(region_layers, lz)?;

    let dx = lx / nx as f64;
    let dy = ly / ny as f64;
    let dz = lz / nz as f64;
    let n_cells = nx * ny * nz;
    let cell_index = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);

    let mut cells = Vec::with_capacity(n_cells);
    let mut cell_region = Vec::with_capacity(n_cells);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let centroid = [
                    (i as f64 + 0.5) * dx,
                    (j as f64 + 0.5) * dy,
                    (k as f64 + 0.5) * dz,
                ];
                let region = layer_of(region_layers, centroid[2]).ok_or_else(|| {
                    Error::Mesh(format!("no region layer contains z = {}", centroid[2]))
                })?;
                cells.push(CellGeometry {
                    centroid,
                    volume: dx * dy * dz,
                    z_min: k as f64 * dz,
                    z_max: (k + 1) as f64 * dz,
                });
                cell_region.push(region);
            }
        }
    }
    // Cells were pushed in k-major order above but indexed i-fastest; re-sort
    // is avoided by pushing in the same i-fastest order:
    debug_assert_eq!(cells.len(), n_cells);

    let mut faces = Vec::new();
    let mut boundary_faces: [Vec<usize>; 6] = Default::default();
    let push_boundary = |faces: &mut Vec<Face>,
                         boundary: &mut [Vec<usize>; 6],
                         face: Face| {
        let tag = face.boundary_tag().expect("boundary face");
        boundary[tag.index()].push(faces.len());
        faces.push(face);
    };

    let axes = [
        (Axis::X, dy * dz, dx, [1.0, 0.0, 0.0]),
        (Axis::Y, dx * dz, dy, [0.0, 1.0, 0.0]),
        (Axis::Z, dx * dy, dz, [0.0, 0.0, 1.0]),
    ];

    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = cell_index(i, j, k);
                let centroid = cells[c].centroid;
                for (axis, area, h, normal) in axes {
                    let (idx, n_axis) = match axis {
                        Axis::X => (i, nx),
                        Axis::Y => (j, ny),
                        Axis::Z => (k, nz),
                    };
                    let mut face_centroid = centroid;
                    // Interior face toward the positive side, owned by this cell.
                    if idx + 1 < n_axis {
                        let right = match axis {
                            Axis::X => cell_index(i + 1, j, k),
                            Axis::Y => cell_index(i, j + 1, k),
                            Axis::Z => cell_index(i, j, k + 1),
                        };
                        face_centroid[axis.index()] = centroid[axis.index()] + 0.5 * h;
                        faces.push(Face {
                            left: c,
                            kind: FaceKind::Interior {
                                right,
                                dist_left: 0.5 * h,
                                dist_right: 0.5 * h,
                            },
                            area,
                            normal,
                            centroid: face_centroid,
                            axis,
                        });
                    } else {
                        face_centroid[axis.index()] = centroid[axis.index()] + 0.5 * h;
                        let tag = match axis {
                            Axis::X => BoundaryTag::XMax,
                            Axis::Y => BoundaryTag::YMax,
                            Axis::Z => BoundaryTag::ZMax,
                        };
                        push_boundary(
                            &mut faces,
                            &mut boundary_faces,
                            Face {
                                left: c,
                                kind: FaceKind::Boundary { tag, dist: 0.5 * h },
                                area,
                                normal,
                                centroid: face_centroid,
                                axis,
                            },
                        );
                    }
                    if idx == 0 {
                        let mut face_centroid = centroid;
                        face_centroid[axis.index()] = centroid[axis.index()] - 0.5 * h;
                        let tag = match axis {
                            Axis::X => BoundaryTag::XMin,
                            Axis::Y => BoundaryTag::YMin,
                            Axis::Z => BoundaryTag::ZMin,
                        };
                        let mut outward = normal;
                        outward[axis.index()] = -1.0;
                        push_boundary(
                            &mut faces,
                            &mut boundary_faces,
                            Face {
                                left: c,
                                kind: FaceKind::Boundary { tag, dist: 0.5 * h },
                                area,
                                normal: outward,
                                centroid: face_centroid,
                                axis,
                            },
                        );
                    }
                }
            }
        }
    }

    // Cell -> face adjacency.
    let mut counts_per_cell = vec![0usize; n_cells];
    for f in &faces {
        counts_per_cell[f.left] += 1;
        if let FaceKind::Interior { right, .. } = f.kind {
            counts_per_cell[right] += 1;
        }
    }
    let mut offsets = vec![0usize; n_cells + 1];
    for c in 0..n_cells {
        offsets[c + 1] = offsets[c] + counts_per_cell[c];
    }
    let mut items = vec![(0u32, 0i8); offsets[n_cells]];
    let mut cursor = offsets.clone();
    for (fi, f) in faces.iter().enumerate() {
        items[cursor[f.left]] = (fi as u32, 1);
        cursor[f.left] += 1;
        if let FaceKind::Interior { right, .. } = f.kind {
            items[cursor[right]] = (fi as u32, -1);
            cursor[right] += 1;
        }
    }

    Ok(Mesh {
        grid: GridShape {
            extents: [lx, ly, lz],
            counts: [nx, ny, nz],
            spacing: [dx, dy, dz],
        },
        cells,
        faces,
        cell_region,
        boundary_faces,
        cell_face_offsets: offsets,
        cell_face_items: items,
    })
}

fn validate_layers(layers: &[RegionLayer], lz: f64) -> Result<(), Error> {
    if layers.is_empty() {
        return Err(Error::Mesh("at least one region layer is required".into()));
    }
    let mut sorted: Vec<RegionLayer> = layers.to_vec();
    sorted.sort_by(|a, b| a.z_low.total_cmp(&b.z_low));
    for l in &sorted {
        if l.z_high <= l.z_low {
            return Err(Error::Mesh(format!(
                "region layer [{}, {}] has non-positive thickness",
                l.z_low, l.z_high
            )));
        }
    }
    if sorted[0].z_low.abs() > LAYER_TOL {
        return Err(Error::Mesh(format!(
            "region layers must start at z = 0, first starts at {}",
            sorted[0].z_low
        )));
    }
    for w in sorted.windows(2) {
        let gap = w[1].z_low - w[0].z_high;
        if gap > LAYER_TOL {
            return Err(Error::Mesh(format!(
                "gap between region layers at z = {}",
                w[0].z_high
            )));
        }
        if gap < -LAYER_TOL {
            return Err(Error::Mesh(format!(
                "overlapping region layers at z = {}",
                w[1].z_low
            )));
        }
    }
    let top = sorted.last().unwrap().z_high;
    if (top - lz).abs() > LAYER_TOL {
        return Err(Error::Mesh(format!(
            "region layers must cover [0, {lz}], top layer ends at {top}"
        )));
    }
    Ok(())
}

/// Convenience: a single layer spanning the whole column.
pub fn single_region(lz: f64) -> Vec<RegionLayer> {
    vec![RegionLayer {
        z_low: 0.0,
        z_high: lz,
        region_id: 0,
    }]
}
