use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::mesh::{TriangleMesh, Vec3};
use crate::oracle::DistanceOracle;
use crate::{Error, Result};

/// Barycentric coordinates below this count as zero.
const BARY_EPS: f64 = 1e-9;

/// A point on the surface and the triangle it was reached through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub position: Vec3,
    pub triangle: usize,
}

/// Polyline on the mesh surface from the target back to the source.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeodesicPath {
    pub points: Vec<PathPoint>,
}

impl GeodesicPath {
    pub fn total_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum()
    }

    /// OBJ text with one vertex per point and a single polyline.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let _ = writeln!(out, "v {} {} {}", p.position.x, p.position.y, p.position.z);
        }
        if self.points.len() > 1 {
            out.push('l');
            for k in 1..=self.points.len() {
                let _ = write!(out, " {k}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_obj()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Location {
    Vertex(u32),
    Edge(u32, u32),
}

struct Walker<'a> {
    mesh: &'a TriangleMesh,
    field: Vec<f64>,
    vertex_faces: Vec<Vec<usize>>,
    edge_faces: HashMap<(u32, u32), Vec<usize>>,
}

fn edge_key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

impl<'a> Walker<'a> {
    fn new(mesh: &'a TriangleMesh, field: Vec<f64>) -> Self {
        let mut vertex_faces = vec![Vec::new(); mesh.vertex_count()];
        let mut edge_faces: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
        for (f, face) in mesh.faces().iter().enumerate() {
            for k in 0..3 {
                vertex_faces[face[k] as usize].push(f);
                edge_faces.entry(edge_key(face[k], face[(k + 1) % 3])).or_default().push(f);
            }
        }
        Walker {
            mesh,
            field,
            vertex_faces,
            edge_faces,
        }
    }

    fn corners(&self, f: usize) -> [Vec3; 3] {
        self.mesh.faces()[f].map(|i| self.mesh.positions()[i as usize])
    }

    /// Coefficients `(s, t)` of `d ≈ s (b - a) + t (c - a)` in the plane of
    /// face `f`, or `None` for a degenerate face.
    fn plane_coords(&self, f: usize, d: &Vec3) -> Option<(f64, f64)> {
        let [a, b, c] = self.corners(f);
        let (e1, e2) = (b - a, c - a);
        let (g11, g12, g22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
        let det = g11 * g22 - g12 * g12;
        if det <= 1e-300 {
            return None;
        }
        let (r1, r2) = (d.dot(&e1), d.dot(&e2));
        Some(((g22 * r1 - g12 * r2) / det, (g11 * r2 - g12 * r1) / det))
    }

    /// Linear-interpolation gradient of the field over face `f`.
    fn gradient(&self, f: usize) -> Option<Vec3> {
        let [a, b, c] = self.corners(f);
        let [ia, ib, ic] = self.mesh.faces()[f].map(|i| i as usize);
        let (e1, e2) = (b - a, c - a);
        let (g11, g12, g22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
        let det = g11 * g22 - g12 * g12;
        if det <= 1e-300 {
            return None;
        }
        let (d1, d2) = (self.field[ib] - self.field[ia], self.field[ic] - self.field[ia]);
        let s = (g22 * d1 - g12 * d2) / det;
        let t = (g11 * d2 - g12 * d1) / det;
        Some(e1 * s + e2 * t)
    }

    fn barycentric(&self, f: usize, p: &Vec3) -> [f64; 3] {
        let [a, ..] = self.corners(f);
        let (s, t) = self.plane_coords(f, &(p - a)).unwrap_or((0.0, 0.0));
        [1.0 - s - t, s, t]
    }

    fn face_has(&self, f: usize, v: u32) -> bool {
        self.mesh.faces()[f].contains(&v)
    }

    /// Descent direction in face `f` and its barycentric velocity, if it
    /// enters the face from `bary`.
    fn inward(&self, f: usize, bary: &[f64; 3]) -> Option<(Vec3, [f64; 3])> {
        let dir = -self.gradient(f)?;
        let scale = dir.norm();
        if scale == 0.0 || !scale.is_finite() {
            return None;
        }
        let (s, t) = self.plane_coords(f, &dir)?;
        let vel = [-(s + t), s, t];
        let len = vel.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let enters = (0..3).all(|k| bary[k] > BARY_EPS || vel[k] > 1e-12 * len);
        enters.then_some((dir, vel))
    }

    fn value_at(&self, loc: Location, p: &Vec3) -> f64 {
        match loc {
            Location::Vertex(v) => self.field[v as usize],
            Location::Edge(a, b) => {
                let (pa, pb) = (self.mesh.positions()[a as usize], self.mesh.positions()[b as usize]);
                let len = (pb - pa).norm();
                let t = if len > 0.0 { ((p - pa).norm() / len).clamp(0.0, 1.0) } else { 0.0 };
                (1.0 - t) * self.field[a as usize] + t * self.field[b as usize]
            }
        }
    }

    fn faces_at(&self, loc: Location) -> &[usize] {
        match loc {
            Location::Vertex(v) => &self.vertex_faces[v as usize],
            Location::Edge(a, b) => self.edge_faces.get(&edge_key(a, b)).map_or(&[], Vec::as_slice),
        }
    }

    /// Walks across face `f` from `p` until the descent ray leaves it.
    fn cross(&self, f: usize, bary: [f64; 3], vel: [f64; 3]) -> (Vec3, Location) {
        let mut t = f64::INFINITY;
        for k in 0..3 {
            if vel[k] < 0.0 {
                t = t.min(bary[k].max(0.0) / -vel[k]);
            }
        }
        let mut lam = [0.0; 3];
        for k in 0..3 {
            lam[k] = (bary[k] + t * vel[k]).max(0.0);
        }
        let sum: f64 = lam.iter().sum();
        lam.iter_mut().for_each(|l| *l /= sum);
        let face = self.mesh.faces()[f];
        let [a, b, c] = self.corners(f);
        let point = a * lam[0] + b * lam[1] + c * lam[2];
        let zero: Vec<usize> = (0..3).filter(|&k| lam[k] <= BARY_EPS).collect();
        let loc = if zero.len() >= 2 {
            let k = (0..3).find(|k| !zero.contains(k)).unwrap_or(0);
            Location::Vertex(face[k])
        } else {
            let k = zero.first().copied().unwrap_or_else(|| {
                (0..3).min_by(|&i, &j| lam[i].total_cmp(&lam[j])).unwrap_or(0)
            });
            Location::Edge(face[(k + 1) % 3], face[(k + 2) % 3])
        };
        let point = match loc {
            Location::Vertex(v) => self.mesh.positions()[v as usize],
            Location::Edge(..) => point,
        };
        (point, loc)
    }

    /// Moves along the mesh edges to a lower-valued vertex when no face
    /// offers an inward descent direction.
    fn slide(&self, loc: Location, p: &Vec3) -> Option<(Vec3, Location, usize)> {
        let here = self.value_at(loc, p);
        let candidates: Vec<(u32, usize)> = match loc {
            Location::Edge(a, b) => {
                let f = *self.faces_at(loc).iter().min()?;
                vec![(a, f), (b, f)]
            }
            Location::Vertex(v) => self.vertex_faces[v as usize]
                .iter()
                .flat_map(|&f| self.mesh.faces()[f].iter().map(move |&u| (u, f)))
                .filter(|&(u, _)| u != v)
                .collect(),
        };
        let (u, f) = candidates
            .into_iter()
            .filter(|&(u, _)| self.field[u as usize] < here)
            .min_by(|x, y| {
                self.field[x.0 as usize]
                    .total_cmp(&self.field[y.0 as usize])
                    .then(x.1.cmp(&y.1))
            })?;
        Some((self.mesh.positions()[u as usize], Location::Vertex(u), f))
    }
}

/// Traces a path from `target` to `source` by descending the distance field
/// `d(source, ·)` triangle by triangle.
///
/// The field is linearly interpolated over each triangle. From a vertex or
/// edge the walk enters the lowest-indexed incident triangle whose descent
/// direction points into it; when none does, it moves along an edge to a
/// lower-valued vertex. The walk ends once it touches a triangle containing
/// the source. If `max_steps` triangle crossings are used up, or the walk gets
/// stuck in a local minimum, the error carries the path traced so far.
pub fn trace_geodesic_path(
    mesh: &TriangleMesh,
    distances: &dyn DistanceOracle,
    source: usize,
    target: usize,
    max_steps: usize,
) -> Result<GeodesicPath> {
    let v = mesh.vertex_count();
    for index in [source, target] {
        if index >= v {
            return Err(Error::IndexOutOfRange { index, len: v });
        }
    }
    if source == target {
        return Err(Error::InvalidArgument("source and target coincide".into()));
    }
    if distances.mesh_checksum() != mesh.checksum() {
        return Err(Error::StaleChecksum {
            expected: mesh.checksum(),
            found: distances.mesh_checksum(),
        });
    }
    if max_steps == 0 {
        return Err(Error::PartialPath(Box::default()));
    }
    let walker = Walker::new(mesh, distances.distance_field(source)?);
    let src = source as u32;
    let mut loc = Location::Vertex(target as u32);
    let mut point = mesh.positions()[target];
    let Some(&first) = walker.faces_at(loc).first() else {
        return Err(Error::InvalidArgument(format!("vertex {target} has no faces")));
    };
    let mut path = GeodesicPath {
        points: vec![PathPoint {
            position: point,
            triangle: first,
        }],
    };
    let mut steps = 0;
    loop {
        let mut faces = walker.faces_at(loc).to_vec();
        faces.sort_unstable();
        if let Some(&f) = faces.iter().find(|&&f| walker.face_has(f, src)) {
            path.points.push(PathPoint {
                position: mesh.positions()[source],
                triangle: f,
            });
            return Ok(path);
        }
        if steps == max_steps {
            return Err(Error::PartialPath(Box::new(path)));
        }
        steps += 1;
        let entered = faces.iter().find_map(|&f| {
            let bary = walker.barycentric(f, &point);
            walker.inward(f, &bary).map(|(_, vel)| (f, bary, vel))
        });
        let (next, next_loc, f) = match entered {
            Some((f, bary, vel)) => {
                let (p, l) = walker.cross(f, bary, vel);
                (p, l, f)
            }
            None => match walker.slide(loc, &point) {
                Some(step) => step,
                None => return Err(Error::PartialPath(Box::new(path))),
            },
        };
        point = next;
        loc = next_loc;
        path.points.push(PathPoint {
            position: point,
            triangle: f,
        });
    }
}
