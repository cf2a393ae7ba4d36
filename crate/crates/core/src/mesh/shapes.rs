//! Procedural meshes used by tests, benchmarks and the synthetic corpus.
//!
//! Generators return raw (unnormalised) geometry; callers normalise when the
//! network is involved.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::{TriangleMesh, Vec3};

fn build(positions: Vec<Vec3>, faces: Vec<[u32; 3]>) -> TriangleMesh {
    TriangleMesh::new(positions, faces).expect("generator produced a valid mesh")
}

/// Unit icosphere. Level `l` has `10 * 4^l + 2` vertices (12, 42, 162, 642,
/// 2562, 10242, 40962, ...).
pub fn icosphere(level: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut positions: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, positions: &mut Vec<Vec3>| -> u32 {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let p = (positions[a as usize] + positions[b as usize]).normalize();
                positions.push(p);
                positions.len() as u32 - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut positions);
            let bc = mid(b, c, &mut positions);
            let ca = mid(c, a, &mut positions);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    build(positions, faces)
}

/// Icosphere scaled per axis.
pub fn ellipsoid(level: u32, radii: Vec3) -> TriangleMesh {
    let base = icosphere(level);
    let pts = base
        .positions()
        .iter()
        .map(|p| p.component_mul(&radii))
        .collect();
    base.with_positions(pts).expect("same vertex count")
}

/// Icosphere with radius `1 + amplitude * sin(f x) sin(f y) sin(f z)`.
pub fn bumpy_sphere(level: u32, amplitude: f64, frequency: f64) -> TriangleMesh {
    let base = icosphere(level);
    let pts = base
        .positions()
        .iter()
        .map(|p| {
            let r = 1.0
                + amplitude
                    * (frequency * p.x).sin()
                    * (frequency * p.y).sin()
                    * (frequency * p.z).sin();
            p * r
        })
        .collect();
    base.with_positions(pts).expect("same vertex count")
}

/// Icosphere pushed towards a rounded box: each coordinate is mapped through
/// `sign(c) |c|^(2/exponent)` and rescaled onto the sphere's radius.
pub fn superellipsoid(level: u32, exponent: f64, radii: Vec3) -> TriangleMesh {
    let base = icosphere(level);
    let pts = base
        .positions()
        .iter()
        .map(|p| {
            let q = p.map(|c| c.signum() * c.abs().powf(2.0 / exponent));
            q.component_mul(&radii)
        })
        .collect();
    base.with_positions(pts).expect("same vertex count")
}

/// Latitude/longitude sphere with `rings` latitude bands (two poles plus
/// `(rings - 1) * segments` vertices).
pub fn uv_sphere(rings: usize, segments: usize) -> TriangleMesh {
    assert!(rings >= 2 && segments >= 3);
    let mut positions = vec![Vec3::new(0.0, 0.0, 1.0)];
    for r in 1..rings {
        let theta = PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = 2.0 * PI * s as f64 / segments as f64;
            positions.push(Vec3::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ));
        }
    }
    positions.push(Vec3::new(0.0, 0.0, -1.0));
    let south = positions.len() as u32 - 1;
    let ring = |r: usize, s: usize| (1 + (r - 1) * segments + s % segments) as u32;
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring(1, s), ring(1, s + 1)]);
        faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b, c, d) = (ring(r, s), ring(r, s + 1), ring(r + 1, s), ring(r + 1, s + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    build(positions, faces)
}

/// Torus around the z axis.
pub fn torus(major_segments: usize, minor_segments: usize, major: f64, minor: f64) -> TriangleMesh {
    let mut positions = Vec::with_capacity(major_segments * minor_segments);
    for i in 0..major_segments {
        let u = 2.0 * PI * i as f64 / major_segments as f64;
        for j in 0..minor_segments {
            let v = 2.0 * PI * j as f64 / minor_segments as f64;
            let r = major + minor * v.cos();
            positions.push(Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| ((i % major_segments) * minor_segments + j % minor_segments) as u32;
    let mut faces = Vec::new();
    for i in 0..major_segments {
        for j in 0..minor_segments {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    build(positions, faces)
}

/// Flat `width x height` rectangle in the z = 0 plane with `nx x ny` cells,
/// each split along the same diagonal. Vertex `(i, j)` has index
/// `j * (nx + 1) + i`.
pub fn grid(nx: usize, ny: usize, width: f64, height: f64) -> TriangleMesh {
    let (positions, faces) = grid_parts(nx, ny, width, height);
    build(positions, faces)
}

fn grid_parts(nx: usize, ny: usize, width: f64, height: f64) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let mut positions = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            positions.push(Vec3::new(
                width * i as f64 / nx as f64,
                height * j as f64 / ny as f64,
                0.0,
            ));
        }
    }
    let idx = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    (positions, faces)
}

/// A flat `length x width` strip rolled onto a cylinder so that it sweeps
/// `bend` radians along its length. Vertex order matches [`grid`], so the
/// result is an isometric copy of `grid(nx, ny, length, width)` up to the
/// chord error of its edges.
pub fn bent_strip(nx: usize, ny: usize, length: f64, width: f64, bend: f64) -> TriangleMesh {
    let flat = grid(nx, ny, length, width);
    if bend == 0.0 {
        return flat;
    }
    let radius = length / bend;
    let pts = flat
        .positions()
        .iter()
        .map(|p| {
            let angle = p.x / radius;
            Vec3::new(radius * angle.sin(), p.y, radius * (1.0 - angle.cos()))
        })
        .collect();
    flat.with_positions(pts).expect("same vertex count")
}

/// Closed thin box occupying `[x0, x0 + size]^2 x [z0, z0 + thickness]`,
/// with an `n x n` grid on the top and bottom sheets and single-segment side
/// walls. Top vertices come first (`(n + 1)^2` of them), then bottom.
pub fn thin_plate(n: usize, size: f64, thickness: f64, origin: Vec3) -> TriangleMesh {
    let (top, top_faces) = grid_parts(n, n, size, size);
    let count = top.len() as u32;
    let mut positions: Vec<Vec3> = top
        .iter()
        .map(|p| origin + Vec3::new(p.x, p.y, thickness))
        .collect();
    positions.extend(top.iter().map(|p| origin + Vec3::new(p.x, p.y, 0.0)));
    let mut faces = top_faces.clone();
    // Bottom sheet faces the other way.
    faces.extend(top_faces.iter().map(|f| [f[0] + count, f[2] + count, f[1] + count]));
    let idx = |i: usize, j: usize| (j * (n + 1) + i) as u32;
    let mut rim = Vec::new();
    for i in 0..n {
        rim.push(idx(i, 0));
    }
    for j in 0..n {
        rim.push(idx(n, j));
    }
    for i in (1..=n).rev() {
        rim.push(idx(i, n));
    }
    for j in (1..=n).rev() {
        rim.push(idx(0, j));
    }
    for k in 0..rim.len() {
        let a = rim[k];
        let b = rim[(k + 1) % rim.len()];
        faces.push([a, a + count, b + count]);
        faces.push([a, b + count, b]);
    }
    build(positions, faces)
}

/// Two disjoint icospheres of the given level, the second shifted along x.
pub fn two_spheres(level: u32, separation: f64) -> TriangleMesh {
    let a = icosphere(level);
    let n = a.vertex_count() as u32;
    let mut positions = a.positions().to_vec();
    positions.extend(a.positions().iter().map(|p| p + Vec3::new(separation, 0.0, 0.0)));
    let mut faces = a.faces().to_vec();
    faces.extend(a.faces().iter().map(|f| f.map(|i| i + n)));
    build(positions, faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euler_characteristic(m: &TriangleMesh) -> i64 {
        m.vertex_count() as i64 - m.edges().len() as i64 + m.face_count() as i64
    }

    #[test]
    fn closed_surfaces_have_expected_topology() {
        for level in 0..4 {
            let s = icosphere(level);
            assert_eq!(s.vertex_count(), 10 * 4usize.pow(level) + 2);
            assert_eq!(euler_characteristic(&s), 2);
        }
        assert_eq!(euler_characteristic(&uv_sphere(12, 18)), 2);
        assert_eq!(uv_sphere(12, 18).vertex_count(), 200);
        assert_eq!(euler_characteristic(&torus(12, 6, 1.0, 0.3)), 0);
        assert_eq!(euler_characteristic(&thin_plate(4, 1.0, 0.01, Vec3::zeros())), 2);
        assert_eq!(euler_characteristic(&two_spheres(1, 3.0)), 4);
    }

    #[test]
    fn outward_orientation() {
        // Area-weighted normals of convex shapes point away from the centre.
        for m in [icosphere(2), uv_sphere(8, 10)] {
            for (p, n) in m.positions().iter().zip(m.normals()) {
                assert!(p.dot(n) > 0.0);
            }
        }
        let plate = thin_plate(4, 1.0, 0.02, Vec3::zeros());
        assert!(plate.normals()[12].z > 0.9);
        assert!(plate.normals()[25 + 12].z < -0.9);
    }

    #[test]
    fn bent_strip_preserves_edge_lengths_approximately() {
        let flat = grid(20, 4, 4.0, 1.0);
        let bent = bent_strip(20, 4, 4.0, 1.0, PI);
        for (a, b) in flat.edges() {
            let lf = (flat.positions()[a as usize] - flat.positions()[b as usize]).norm();
            let lb = (bent.positions()[a as usize] - bent.positions()[b as usize]).norm();
            assert!((lf - lb).abs() / lf < 0.01);
        }
    }
}
