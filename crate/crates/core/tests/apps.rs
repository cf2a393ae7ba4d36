use geoembed::apps::{compare_distributions, shape_distribution, trace_geodesic_path, ShapeDistribution};
use geoembed::mesh::{shapes, Vec3};
use geoembed::nn::{batched_decode, Model, NetConfig};
use geoembed::oracle::{DistanceOracle, EuclideanOracle, GraphOracle, SteinerOracle};
use geoembed::query::{precompute_embedding, QuerySession};
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

#[test]
fn flat_grid_path_is_nearly_straight() {
    let mesh = shapes::grid(20, 12, 2.0, 1.2);
    let oracle = EuclideanOracle::new(&mesh);
    let (source, target) = (21 + 1, 12 * 21 + 18);
    let path = trace_geodesic_path(&mesh, &oracle, source, target, 500).unwrap();
    let straight = (mesh.positions()[source] - mesh.positions()[target]).norm();
    let rel = path.total_length() / straight - 1.0;
    assert!(rel >= -1e-9 && rel < 0.02, "excess {rel}");
    let field = oracle.distance_field(source).unwrap();
    let p0 = mesh.positions()[source];
    let along: Vec<f64> = path.points.iter().map(|p| (p.position - p0).norm()).collect();
    assert!(along.windows(2).all(|w| w[1] < w[0] + 1e-12), "{along:?}");
    assert_eq!(along[0], field[target]);
}

#[test]
fn steiner_field_neighbour_path_is_straight() {
    let mesh = shapes::grid(10, 10, 1.0, 1.0);
    let oracle = SteinerOracle::new(&mesh, 3);
    let path = trace_geodesic_path(&mesh, &oracle, 55, 56, 50).unwrap();
    let straight = (mesh.positions()[55] - mesh.positions()[56]).norm();
    assert!((path.total_length() / straight - 1.0).abs() < 0.05);
}

#[test]
fn path_points_are_on_their_triangles() {
    let mesh = shapes::grid(16, 16, 1.0, 1.0);
    let oracle = SteinerOracle::new(&mesh, 3);
    let path = trace_geodesic_path(&mesh, &oracle, 20, 250, 400).unwrap();
    for p in &path.points {
        let [a, b, c] = mesh.faces()[p.triangle].map(|i| mesh.positions()[i as usize]);
        // Inside the triangle's bounding box in the plane.
        for k in 0..2 {
            let lo = a[k].min(b[k]).min(c[k]) - 1e-9;
            let hi = a[k].max(b[k]).max(c[k]) + 1e-9;
            assert!(p.position[k] >= lo && p.position[k] <= hi);
        }
    }
    let straight = (mesh.positions()[20] - mesh.positions()[250]).norm();
    assert!(path.total_length() < 1.05 * straight);
}

#[test]
fn small_mesh_histogram_matches_enumeration() {
    let mesh = shapes::uv_sphere(4, 5);
    assert!(mesh.vertex_count() <= 25);
    let model = Model::<f32>::new(NetConfig::default(), 9).unwrap();
    let table = precompute_embedding(&model, &mesh).unwrap();
    let session = QuerySession::new(table.clone(), &model).unwrap();
    let v = mesh.vertex_count() as u32;
    let hist = shape_distribution(&session, usize::MAX, 12, 0).unwrap();
    let pairs: Vec<(u32, u32)> = (0..v).flat_map(|i| (i + 1..v).map(move |j| (i, j))).collect();
    let brute: Vec<f64> = batched_decode(&table, &pairs, model.dist.as_ref().unwrap())
        .unwrap()
        .into_iter()
        .map(f64::from)
        .collect();
    assert_eq!(hist, ShapeDistribution::from_values(&brute, 12).unwrap());
    assert_eq!(hist.total() as usize, pairs.len());
}

#[test]
fn fixed_seed_is_reproducible_and_rigid_motion_invariant() {
    let mesh = shapes::bumpy_sphere(2, 0.1, 3.0);
    let a = shape_distribution(&GraphOracle::new(&mesh), 3000, 32, 5).unwrap();
    let b = shape_distribution(&GraphOracle::new(&mesh), 3000, 32, 5).unwrap();
    assert_eq!(a, b);
    let rot = Rotation3::from_axis_angle(&Vector3::y_axis(), 0.7);
    let moved = mesh
        .with_positions(mesh.positions().iter().map(|p| rot * p + Vec3::new(3.0, -1.0, 2.0)).collect())
        .unwrap();
    let c = shape_distribution(&GraphOracle::new(&moved), 3000, 32, 5).unwrap();
    assert!(compare_distributions(&a, &c).unwrap() < 1e-9);
}

#[test]
fn geodesic_histograms_see_through_bending() {
    let flat = shapes::bent_strip(40, 6, 4.0, 0.6, 0.0);
    let bent = shapes::bent_strip(40, 6, 4.0, 0.6, 4.0);
    let geo = |m: &geoembed::mesh::TriangleMesh| {
        shape_distribution(&SteinerOracle::new(m, 2), 4000, 24, 1).unwrap()
    };
    let euc = |m: &geoembed::mesh::TriangleMesh| shape_distribution(&EuclideanOracle::new(m), 4000, 24, 1).unwrap();
    let d_geo = compare_distributions(&geo(&flat), &geo(&bent)).unwrap();
    let d_euc = compare_distributions(&euc(&flat), &euc(&bent)).unwrap();
    assert!(d_geo < d_euc, "geodesic {d_geo} vs euclidean {d_euc}");
}

fn histogram() -> impl Strategy<Value = ShapeDistribution> {
    (prop::collection::vec(0.0f64..10.0, 1..60), 1usize..20)
        .prop_map(|(v, bins)| ShapeDistribution::from_values(&v, bins).unwrap())
}

proptest! {
    #[test]
    fn comparison_is_a_bounded_symmetric_metric(a in histogram(), b in histogram(), c in histogram()) {
        let ab = compare_distributions(&a, &b).unwrap();
        let ba = compare_distributions(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=2.0).contains(&ab));
        prop_assert_eq!(compare_distributions(&a, &a).unwrap(), 0.0);
        let ac = compare_distributions(&a, &c).unwrap();
        let cb = compare_distributions(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-9, "{} > {} + {}", ab, ac, cb);
    }
}
