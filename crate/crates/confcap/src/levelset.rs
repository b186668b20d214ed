//! Level surfaces of the potential as watertight triangle meshes.
//!
//! A level surface is extracted by marching tetrahedra over a center-split
//! tetrahedralization of the grid: every hex cell is split into 24 tets via
//! its face centers and cell center, and the wedge cells ringing each pole
//! axis into 14.  Face-center data is addressed by the face's lattice key
//! and computed in one canonical corner order, so the two cells sharing a
//! face see bit-identical values and the mesh closes without cracks — the
//! pole identifications included.  Crossing vertices are deduplicated by
//! the pair of endpoint references of the tet edge they live on.
//!
//! The raw marching mesh is then refined: each subdivision round inserts
//! edge midpoints and projects them back onto the interpolated level along
//! fixed-direction rays, so vertex positions converge to the smooth surface
//! rather than to the chords of the coarse mesh.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::domain::unit_dir;
use crate::error::{Error, Result};
use crate::grid::{AnnularGrid, FieldInterp};
use crate::par;

/// Reference to a vertex of the tetrahedralization, packed for use in
/// dedup keys: tag in the top nibble, lattice coordinates below.
type Ref = u64;

const TAG_NODE: u64 = 0;
const TAG_FACE_S: u64 = 1;
const TAG_FACE_T: u64 = 2;
const TAG_FACE_P: u64 = 3;
const TAG_SIDE_N: u64 = 4;
const TAG_SIDE_S: u64 = 5;
const TAG_CELL: u64 = 6;
const TAG_WEDGE_N: u64 = 7;
const TAG_WEDGE_S: u64 = 8;
const TAG_POLE_N: u64 = 9;
const TAG_POLE_S: u64 = 10;

fn pack(tag: u64, i: usize, j: usize, k: usize) -> Ref {
    (tag << 56) | ((i as u64) << 36) | ((j as u64) << 18) | k as u64
}

/// Everything the marching pass needs to know about a reference point.
#[derive(Clone, Copy)]
struct RefData {
    value: f64,
    pos: Vector3<f64>,
    s: f64,
    dir: Vector3<f64>,
}

/// Triangle mesh of one level surface, with per-vertex logical coordinates
/// retained so surface fields can be sampled back off the grid.
pub struct LevelSurface {
    pub level: f64,
    pub positions: Vec<Vector3<f64>>,
    /// Radial map coordinate and unit direction per vertex.
    pub logical: Vec<(f64, Vector3<f64>)>,
    pub triangles: Vec<[u32; 3]>,
}

struct RawVertex {
    key: (Ref, Ref),
    data: RefData,
}

struct Extractor<'a> {
    grid: &'a AnnularGrid,
    u: &'a [f64],
    level: f64,
    /// Azimuthal mean of the potential and radius on each polar ring.
    pole_n: Vec<(f64, f64)>,
    pole_s: Vec<(f64, f64)>,
}

impl<'a> Extractor<'a> {
    fn new(grid: &'a AnnularGrid, u: &'a [f64], level: f64) -> Self {
        let (n_s, n_t, n_p) = grid.dims();
        let ring_mean = |i: usize, j: usize| -> (f64, f64) {
            let mut uv = 0.0;
            let mut rv = 0.0;
            for k in 0..n_p {
                let q = grid.idx(i, j, k);
                uv += u[q];
                rv += grid.radius_at(q);
            }
            (uv / n_p as f64, rv / n_p as f64)
        };
        Self {
            grid,
            u,
            level,
            pole_n: (0..n_s).map(|i| ring_mean(i, 0)).collect(),
            pole_s: (0..n_s).map(|i| ring_mean(i, n_t - 1)).collect(),
        }
    }

    fn node_data(&self, i: usize, j: usize, k: usize) -> RefData {
        let q = self.grid.idx(i, j, k);
        let (h_s, _, _) = self.grid.spacing();
        let pos = self.grid.position(q);
        RefData {
            value: self.u[q],
            pos,
            s: i as f64 * h_s,
            dir: unit_dir(self.grid.theta_at(j), self.grid.phi_at(k)),
        }
    }

    fn pole_data(&self, north: bool, i: usize) -> RefData {
        let (h_s, _, _) = self.grid.spacing();
        let (value, radius) = if north { self.pole_n[i] } else { self.pole_s[i] };
        let z = if north { 1.0 } else { -1.0 };
        RefData {
            value,
            pos: Vector3::new(0.0, 0.0, z * radius),
            s: i as f64 * h_s,
            dir: Vector3::new(0.0, 0.0, z),
        }
    }

    fn mean_of(&self, parts: &[RefData]) -> RefData {
        let inv = 1.0 / parts.len() as f64;
        let mut value = 0.0;
        let mut pos = Vector3::zeros();
        let mut s = 0.0;
        let mut dir = Vector3::zeros();
        for p in parts {
            value += p.value;
            pos += p.pos;
            s += p.s;
            dir += p.dir;
        }
        RefData {
            value: value * inv,
            pos: pos * inv,
            s: s * inv,
            dir: dir.normalize(),
        }
    }

    /// Canonical data for any reference; face and center values are computed
    /// in one fixed corner order so every cell sharing the reference agrees
    /// bitwise.
    fn data(&self, r: Ref) -> RefData {
        let tag = r >> 56;
        let i = ((r >> 36) & 0xf_ffff) as usize;
        let j = ((r >> 18) & 0x3_ffff) as usize;
        let k = (r & 0x3_ffff) as usize;
        let (_, n_t, n_p) = self.grid.dims();
        let k1 = (k + 1) % n_p;
        match tag {
            TAG_NODE => self.node_data(i, j, k),
            TAG_FACE_S => self.mean_of(&[
                self.node_data(i, j, k),
                self.node_data(i, j, k1),
                self.node_data(i, j + 1, k),
                self.node_data(i, j + 1, k1),
            ]),
            TAG_FACE_T => self.mean_of(&[
                self.node_data(i, j, k),
                self.node_data(i, j, k1),
                self.node_data(i + 1, j, k),
                self.node_data(i + 1, j, k1),
            ]),
            TAG_FACE_P => self.mean_of(&[
                self.node_data(i, j, k),
                self.node_data(i, j + 1, k),
                self.node_data(i + 1, j, k),
                self.node_data(i + 1, j + 1, k),
            ]),
            TAG_SIDE_N => self.mean_of(&[
                self.pole_data(true, i),
                self.node_data(i, 0, k),
                self.pole_data(true, i + 1),
                self.node_data(i + 1, 0, k),
            ]),
            TAG_SIDE_S => self.mean_of(&[
                self.pole_data(false, i),
                self.node_data(i, n_t - 1, k),
                self.pole_data(false, i + 1),
                self.node_data(i + 1, n_t - 1, k),
            ]),
            TAG_CELL => self.mean_of(&[
                self.node_data(i, j, k),
                self.node_data(i, j, k1),
                self.node_data(i, j + 1, k),
                self.node_data(i, j + 1, k1),
                self.node_data(i + 1, j, k),
                self.node_data(i + 1, j, k1),
                self.node_data(i + 1, j + 1, k),
                self.node_data(i + 1, j + 1, k1),
            ]),
            TAG_WEDGE_N => self.mean_of(&[
                self.pole_data(true, i),
                self.pole_data(true, i + 1),
                self.node_data(i, 0, k),
                self.node_data(i, 0, k1),
                self.node_data(i + 1, 0, k),
                self.node_data(i + 1, 0, k1),
            ]),
            TAG_WEDGE_S => self.mean_of(&[
                self.pole_data(false, i),
                self.pole_data(false, i + 1),
                self.node_data(i, n_t - 1, k),
                self.node_data(i, n_t - 1, k1),
                self.node_data(i + 1, n_t - 1, k),
                self.node_data(i + 1, n_t - 1, k1),
            ]),
            TAG_POLE_N => self.pole_data(true, i),
            TAG_POLE_S => self.pole_data(false, i),
            _ => unreachable!("unknown reference tag"),
        }
    }

    /// March one tetrahedron, appending crossing triangles.
    fn march_tet(&self, refs: [Ref; 4], out: &mut Vec<[RawVertex; 3]>) {
        let data: Vec<RefData> = refs.iter().map(|&r| self.data(r)).collect();
        let above: Vec<bool> = data.iter().map(|d| d.value >= self.level).collect();
        let n_above = above.iter().filter(|&&a| a).count();
        if n_above == 0 || n_above == 4 {
            return;
        }

        let cross = |a: usize, b: usize| -> RawVertex {
            let (ra, rb) = (refs[a], refs[b]);
            let key = if ra <= rb { (ra, rb) } else { (rb, ra) };
            let (da, db) = if ra <= rb {
                (&data[a], &data[b])
            } else {
                (&data[b], &data[a])
            };
            let x = (self.level - da.value) / (db.value - da.value);
            RawVertex {
                key,
                data: RefData {
                    value: self.level,
                    pos: da.pos + (db.pos - da.pos) * x,
                    s: da.s + (db.s - da.s) * x,
                    dir: (da.dir + (db.dir - da.dir) * x).normalize(),
                },
            }
        };

        let mut emit = |v0: RawVertex, v1: RawVertex, v2: RawVertex| {
            let mut hi = Vector3::zeros();
            let mut lo = Vector3::zeros();
            let (mut nh, mut nl) = (0.0, 0.0);
            for (d, &a) in data.iter().zip(&above) {
                if a {
                    hi += d.pos;
                    nh += 1.0;
                } else {
                    lo += d.pos;
                    nl += 1.0;
                }
            }
            let outward = hi / nh - lo / nl;
            let n = (v1.data.pos - v0.data.pos).cross(&(v2.data.pos - v0.data.pos));
            if n.dot(&outward) >= 0.0 {
                out.push([v0, v1, v2]);
            } else {
                out.push([v0, v2, v1]);
            }
        };

        match n_above {
            1 | 3 => {
                let lone = (0..4)
                    .find(|&q| above[q] == (n_above == 1))
                    .expect("lone vertex exists");
                let rest: Vec<usize> = (0..4).filter(|&q| q != lone).collect();
                emit(
                    cross(lone, rest[0]),
                    cross(lone, rest[1]),
                    cross(lone, rest[2]),
                );
            }
            2 => {
                let ups: Vec<usize> = (0..4).filter(|&q| above[q]).collect();
                let downs: Vec<usize> = (0..4).filter(|&q| !above[q]).collect();
                let (a, b) = (ups[0], ups[1]);
                let (c, d) = (downs[0], downs[1]);
                emit(cross(a, c), cross(a, d), cross(b, d));
                emit(cross(a, c), cross(b, d), cross(b, c));
            }
            _ => unreachable!(),
        }
    }

    /// All 24 tets of the hex cell based at node `(i, j, k)`.
    fn march_hex(&self, i: usize, j: usize, k: usize, out: &mut Vec<[RawVertex; 3]>) {
        let (_, _, n_p) = self.grid.dims();
        let k1 = (k + 1) % n_p;
        let corners = [
            (i, j, k),
            (i, j, k1),
            (i, j + 1, k),
            (i, j + 1, k1),
            (i + 1, j, k),
            (i + 1, j, k1),
            (i + 1, j + 1, k),
            (i + 1, j + 1, k1),
        ];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(ci, cj, ck) in &corners {
            let v = self.u[self.grid.idx(ci, cj, ck)];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if self.level < lo || self.level > hi {
            return;
        }

        let node = |ci: usize, cj: usize, ck: usize| pack(TAG_NODE, ci, cj, ck);
        let cell = pack(TAG_CELL, i, j, k);
        // Each face: canonical key and its corner cycle.
        let faces = [
            (
                pack(TAG_FACE_S, i, j, k),
                [node(i, j, k), node(i, j, k1), node(i, j + 1, k1), node(i, j + 1, k)],
            ),
            (
                pack(TAG_FACE_S, i + 1, j, k),
                [
                    node(i + 1, j, k),
                    node(i + 1, j, k1),
                    node(i + 1, j + 1, k1),
                    node(i + 1, j + 1, k),
                ],
            ),
            (
                pack(TAG_FACE_T, i, j, k),
                [node(i, j, k), node(i, j, k1), node(i + 1, j, k1), node(i + 1, j, k)],
            ),
            (
                pack(TAG_FACE_T, i, j + 1, k),
                [
                    node(i, j + 1, k),
                    node(i, j + 1, k1),
                    node(i + 1, j + 1, k1),
                    node(i + 1, j + 1, k),
                ],
            ),
            (
                pack(TAG_FACE_P, i, j, k),
                [node(i, j, k), node(i, j + 1, k), node(i + 1, j + 1, k), node(i + 1, j, k)],
            ),
            (
                pack(TAG_FACE_P, i, j, k1),
                [
                    node(i, j, k1),
                    node(i, j + 1, k1),
                    node(i + 1, j + 1, k1),
                    node(i + 1, j, k1),
                ],
            ),
        ];
        for (face, cycle) in faces {
            for e in 0..4 {
                self.march_tet([cycle[e], cycle[(e + 1) % 4], face, cell], out);
            }
        }
    }

    /// All 14 tets of the wedge between the polar node ring and the axis.
    fn march_wedge(&self, north: bool, i: usize, k: usize, out: &mut Vec<[RawVertex; 3]>) {
        let (_, n_t, n_p) = self.grid.dims();
        let k1 = (k + 1) % n_p;
        let j = if north { 0 } else { n_t - 1 };
        let (tag_side, tag_wedge, tag_pole) = if north {
            (TAG_SIDE_N, TAG_WEDGE_N, TAG_POLE_N)
        } else {
            (TAG_SIDE_S, TAG_WEDGE_S, TAG_POLE_S)
        };

        let ring = [(i, k), (i, k1), (i + 1, k), (i + 1, k1)];
        let poles = if north { &self.pole_n } else { &self.pole_s };
        let mut lo = poles[i].0.min(poles[i + 1].0);
        let mut hi = poles[i].0.max(poles[i + 1].0);
        for &(ci, ck) in &ring {
            let v = self.u[self.grid.idx(ci, j, ck)];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if self.level < lo || self.level > hi {
            return;
        }

        let p0 = pack(tag_pole, i, 0, 0);
        let p1 = pack(tag_pole, i + 1, 0, 0);
        let a0 = pack(TAG_NODE, i, j, k);
        let b0 = pack(TAG_NODE, i, j, k1);
        let a1 = pack(TAG_NODE, i + 1, j, k);
        let b1 = pack(TAG_NODE, i + 1, j, k1);
        let center = pack(tag_wedge, i, 0, k);

        // Outer quad is the hex θ-face; the two radial side quads are shared
        // with the neighboring wedges.
        let quads = [
            (pack(TAG_FACE_T, i, j, k), [a0, b0, b1, a1]),
            (pack(tag_side, i, 0, k), [p0, a0, a1, p1]),
            (pack(tag_side, i, 0, k1), [p0, b0, b1, p1]),
        ];
        for (face, cycle) in quads {
            for e in 0..4 {
                self.march_tet([cycle[e], cycle[(e + 1) % 4], face, center], out);
            }
        }
        self.march_tet([p0, a0, b0, center], out);
        self.march_tet([p1, a1, b1, center], out);
    }
}

/// Extract the level surface `u = level` as a watertight triangle mesh,
/// refined by `subdivisions` rounds of midpoint subdivision with ray
/// projection back onto the interpolated level.
pub fn extract_level_surface(
    grid: &AnnularGrid,
    u: &[f64],
    level: f64,
    subdivisions: usize,
) -> Result<LevelSurface> {
    let (n_s, n_t, n_p) = grid.dims();
    let u_max = u.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if !(level > 0.0 && level < u_max) {
        return Err(Error::LevelOutOfRange {
            t: level,
            max: u_max,
        });
    }

    let ex = Extractor::new(grid, u, level);

    // Cells indexed flat: hexes first, then the two polar wedge rings.
    let hexes = (n_s - 1) * (n_t - 1) * n_p;
    let wedges = (n_s - 1) * n_p;
    let total = hexes + 2 * wedges;
    let raw: Vec<[RawVertex; 3]> = par::map_chunks(total, 256, |range| {
        let mut out = Vec::new();
        for c in range {
            if c < hexes {
                let i = c / ((n_t - 1) * n_p);
                let rem = c % ((n_t - 1) * n_p);
                ex.march_hex(i, rem / n_p, rem % n_p, &mut out);
            } else if c < hexes + wedges {
                let c = c - hexes;
                ex.march_wedge(true, c / n_p, c % n_p, &mut out);
            } else {
                let c = c - hexes - wedges;
                ex.march_wedge(false, c / n_p, c % n_p, &mut out);
            }
        }
        out
    });

    if raw.is_empty() {
        return Err(Error::EmptyLevelSet { t: level });
    }

    // Deduplicate crossing vertices by their tet-edge key.
    let mut ids: HashMap<(Ref, Ref), u32> = HashMap::new();
    let mut positions = Vec::new();
    let mut logical = Vec::new();
    let mut triangles = Vec::with_capacity(raw.len());
    let (h_s, _, _) = grid.spacing();
    let mut s_max = 0.0f64;
    for tri in &raw {
        let mut ix = [0u32; 3];
        for (slot, v) in tri.iter().enumerate() {
            let next = positions.len() as u32;
            let id = *ids.entry(v.key).or_insert(next);
            if id == next {
                positions.push(v.data.pos);
                logical.push((v.data.s, v.data.dir));
                s_max = s_max.max(v.data.s);
            }
            ix[slot] = id;
        }
        if ix[0] != ix[1] && ix[1] != ix[2] && ix[0] != ix[2] {
            triangles.push(ix);
        }
    }

    if s_max > 1.0 - 2.0 * h_s {
        return Err(Error::LevelTouchesBoundary { t: level });
    }

    let mut surface = LevelSurface {
        level,
        positions,
        logical,
        triangles,
    };
    if subdivisions > 0 {
        let interp = FieldInterp::new(grid, u);
        // Marching puts corner–center crossings on chords well off the
        // smooth level; pull every vertex onto the interpolated surface
        // before refining, or the mesh stays bumpy at the coarse scale.
        project_vertices(grid, &interp, &mut surface);
        for _ in 0..subdivisions {
            surface = subdivide(grid, &interp, surface);
        }
    }
    Ok(surface)
}

/// Project a point at logical coordinates `(s, dir)` onto the interpolated
/// level along its fixed-direction ray.  Falls back to the input when no
/// bracket is found (the point is then simply not moved).
fn project_to_level(
    interp: &FieldInterp,
    level: f64,
    s: f64,
    theta: f64,
    phi: f64,
    h_s: f64,
) -> f64 {
    let f = |x: f64| interp.value(x, theta, phi) - level;
    let mut half = h_s;
    let (mut lo, mut hi) = (s, s);
    for _ in 0..4 {
        lo = (s - half).max(0.0);
        hi = (s + half).min(1.0);
        if f(lo) * f(hi) <= 0.0 {
            break;
        }
        half *= 2.0;
    }
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo * fhi > 0.0 {
        return s;
    }
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if flo * fm <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    0.5 * (lo + hi)
}

fn project_vertices(grid: &AnnularGrid, interp: &FieldInterp, surf: &mut LevelSurface) {
    let (h_s, _, _) = grid.spacing();
    let moved: Vec<(f64, Vector3<f64>)> = par::map_chunks(surf.positions.len(), 1024, |range| {
        range
            .map(|v| {
                let (s, dir) = surf.logical[v];
                let (theta, phi) = crate::domain::dir_angles(&dir);
                let s = project_to_level(interp, surf.level, s, theta, phi, h_s);
                (s, grid.map_position(s, theta, phi))
            })
            .collect()
    });
    for (v, (s, pos)) in moved.into_iter().enumerate() {
        surf.logical[v].0 = s;
        surf.positions[v] = pos;
    }
}

fn subdivide(grid: &AnnularGrid, interp: &FieldInterp, surf: LevelSurface) -> LevelSurface {
    let (h_s, _, _) = grid.spacing();
    let mut positions = surf.positions;
    let mut logical = surf.logical;
    let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
    let mut triangles = Vec::with_capacity(surf.triangles.len() * 4);

    let mut mid = |a: u32, b: u32, positions: &mut Vec<Vector3<f64>>, logical: &mut Vec<(f64, Vector3<f64>)>| -> u32 {
        let key = if a < b { (a, b) } else { (b, a) };
        if let Some(&id) = midpoint.get(&key) {
            return id;
        }
        let (sa, da) = logical[a as usize];
        let (sb, db) = logical[b as usize];
        let dir = (da + db).normalize();
        let (theta, phi) = crate::domain::dir_angles(&dir);
        let s = project_to_level(interp, surf.level, 0.5 * (sa + sb), theta, phi, h_s);
        let id = positions.len() as u32;
        positions.push(grid.map_position(s, theta, phi));
        logical.push((s, dir));
        midpoint.insert(key, id);
        id
    };

    for &[a, b, c] in &surf.triangles {
        let ab = mid(a, b, &mut positions, &mut logical);
        let bc = mid(b, c, &mut positions, &mut logical);
        let ca = mid(c, a, &mut positions, &mut logical);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }

    LevelSurface {
        level: surf.level,
        positions,
        logical,
        triangles,
    }
}

impl LevelSurface {
    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    /// Total area under the one-point rule (exact for flat triangles).
    pub fn area(&self) -> f64 {
        par::sum(self.triangles.len(), |t| self.triangle_area(t))
    }

    fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let pa = self.positions[a as usize];
        let pb = self.positions[b as usize];
        let pc = self.positions[c as usize];
        0.5 * (pb - pa).cross(&(pc - pa)).norm()
    }

    /// Integrate a per-vertex scalar over the surface: one-point quadrature
    /// with the triangle value taken as the vertex average.
    pub fn integrate(&self, vertex_values: &[f64]) -> f64 {
        debug_assert_eq!(vertex_values.len(), self.positions.len());
        par::sum(self.triangles.len(), |t| {
            let [a, b, c] = self.triangles[t];
            let mean = (vertex_values[a as usize]
                + vertex_values[b as usize]
                + vertex_values[c as usize])
                / 3.0;
            self.triangle_area(t) * mean
        })
    }

    /// V − E + F; 2 for anything sphere-like, and a crack detector in tests.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for &[a, b, c] in &self.triangles {
            for (x, y) in [(a, b), (b, c), (c, a)] {
                edges.insert(if x < y { (x, y) } else { (y, x) });
            }
        }
        self.positions.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    /// Number of connected components of the triangle mesh.
    pub fn component_count(&self) -> usize {
        let n = self.positions.len();
        let mut root: Vec<u32> = (0..n as u32).collect();
        fn find(root: &mut [u32], mut x: u32) -> u32 {
            while root[x as usize] != x {
                root[x as usize] = root[root[x as usize] as usize];
                x = root[x as usize];
            }
            x
        }
        for &[a, b, c] in &self.triangles {
            let ra = find(&mut root, a);
            let rb = find(&mut root, b);
            root[rb as usize] = ra;
            let rc = find(&mut root, c);
            root[rc as usize] = ra;
        }
        let mut roots: Vec<u32> = self
            .triangles
            .iter()
            .map(|&[a, _, _]| find(&mut root, a))
            .collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        let mut counts: HashMap<(u32, u32), u32> = HashMap::new();
        for &[a, b, c] in &self.triangles {
            for (x, y) in [(a, b), (b, c), (c, a)] {
                *counts.entry(if x < y { (x, y) } else { (y, x) }).or_insert(0) += 1;
            }
        }
        counts.values().all(|&c| c == 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_ball, make_star_domain, HarmonicGraph, RadialGraph};
    use crate::grid::GridConfig;

    fn log_r_field(grid: &AnnularGrid) -> Vec<f64> {
        (0..grid.n_nodes())
            .map(|q| grid.radius_at(q).ln())
            .collect()
    }

    fn star_grid() -> AnnularGrid {
        let mut coeffs = vec![0.0; 16];
        coeffs[0] = (4.0 * std::f64::consts::PI).sqrt();
        coeffs[7] = 0.14;
        coeffs[12] = 0.06;
        let graph = HarmonicGraph::new(3, coeffs).unwrap();
        let dom = make_star_domain(RadialGraph::Harmonics(graph), Vector3::zeros()).unwrap();
        let cfg = GridConfig {
            n_s: 24,
            n_t: 16,
            n_p: 32,
            r_out_over_bounding: 6.0,
        };
        AnnularGrid::build(&dom, &cfg).unwrap()
    }

    #[test]
    fn sphere_levels_have_exact_area_and_topology() {
        // With u = log r on a star grid, every level set is a round sphere
        // of radius e^t, exercising hexes, wedges, and the seams between.
        let grid = star_grid();
        let u = log_r_field(&grid);
        for t in [0.6, 1.0, 1.4] {
            let surf = extract_level_surface(&grid, &u, t, 2).unwrap();
            assert!(surf.is_closed(), "mesh not watertight at t = {t}");
            assert_eq!(surf.euler_characteristic(), 2, "t = {t}");
            let exact = 4.0 * std::f64::consts::PI * (2.0 * t).exp();
            let rel = (surf.area() - exact).abs() / exact;
            assert!(rel < 2e-3, "area error {rel:.2e} at t = {t}");
        }
    }

    #[test]
    fn raw_mesh_is_already_watertight() {
        let grid = star_grid();
        let u = log_r_field(&grid);
        let surf = extract_level_surface(&grid, &u, 0.8, 0).unwrap();
        assert!(surf.is_closed());
        assert_eq!(surf.euler_characteristic(), 2);
    }

    #[test]
    fn subdivision_sharpens_the_area() {
        let grid = star_grid();
        let u = log_r_field(&grid);
        let exact = 4.0 * std::f64::consts::PI * (2.0f64 * 0.9).exp();
        let raw = extract_level_surface(&grid, &u, 0.9, 0).unwrap();
        let fine = extract_level_surface(&grid, &u, 0.9, 2).unwrap();
        assert_eq!(fine.triangle_count(), raw.triangle_count() * 16);
        let e_raw = (raw.area() - exact).abs() / exact;
        let e_fine = (fine.area() - exact).abs() / exact;
        assert!(
            e_fine < e_raw / 4.0,
            "subdivision did not help: {e_raw:.2e} -> {e_fine:.2e}"
        );
    }

    #[test]
    fn vertex_integration_matches_closed_form() {
        // ∮ r⁻² da over a sphere of any radius is 4π.
        let grid = star_grid();
        let u = log_r_field(&grid);
        let surf = extract_level_surface(&grid, &u, 1.1, 2).unwrap();
        let vals: Vec<f64> = surf
            .positions
            .iter()
            .map(|p| 1.0 / p.norm_squared())
            .collect();
        let got = surf.integrate(&vals);
        let exact = 4.0 * std::f64::consts::PI;
        assert!(
            (got - exact).abs() / exact < 2e-3,
            "flux integral {got:.6} vs {exact:.6}"
        );
    }

    #[test]
    fn ball_levels_on_a_ball_grid() {
        let scenario = make_ball(1.0, Vector3::zeros()).unwrap();
        let cfg = GridConfig {
            n_s: 20,
            n_t: 10,
            n_p: 20,
            r_out_over_bounding: 8.0,
        };
        let grid = AnnularGrid::build(&scenario.domain, &cfg).unwrap();
        let u = log_r_field(&grid);
        let surf = extract_level_surface(&grid, &u, 1.0, 2).unwrap();
        assert!(surf.is_closed());
        let exact = 4.0 * std::f64::consts::PI * (2.0f64).exp();
        assert!((surf.area() - exact).abs() / exact < 2e-3);
        // Every vertex should sit on the sphere r = e after projection.
        let worst = surf
            .positions
            .iter()
            .map(|p| (p.norm() - 1.0f64.exp()).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 2e-3, "vertex off the level sphere by {worst:.2e}");
    }

    #[test]
    fn out_of_range_levels_are_rejected() {
        let grid = star_grid();
        let u = log_r_field(&grid);
        assert!(matches!(
            extract_level_surface(&grid, &u, -0.5, 0),
            Err(Error::LevelOutOfRange { .. })
        ));
        assert!(matches!(
            extract_level_surface(&grid, &u, 100.0, 0),
            Err(Error::LevelOutOfRange { .. })
        ));
        let near_outer = grid.r_out().ln() - 1e-3;
        assert!(matches!(
            extract_level_surface(&grid, &u, near_outer, 0),
            Err(Error::LevelTouchesBoundary { .. })
        ));
    }
}
