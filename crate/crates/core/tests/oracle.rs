use geoembed::mesh::shapes;
use geoembed::oracle::{dijkstra_distances, steiner_refined_distances, SteinerGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn great_circle(a: &geoembed::mesh::Vec3, b: &geoembed::mesh::Vec3) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

fn sphere_mre(level: u32, k: usize, sources: usize, seed: u64) -> f64 {
    let mesh = shapes::icosphere(level);
    let graph = SteinerGraph::new(&mesh, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mesh.vertex_count();
    let (mut total, mut count) = (0.0, 0);
    for _ in 0..sources {
        let s = rng.gen_range(0..n);
        let field = graph.distances(s).unwrap();
        for _ in 0..10 {
            let t = rng.gen_range(0..n);
            if t == s {
                continue;
            }
            let gt = great_circle(&mesh.positions()[s], &mesh.positions()[t]);
            total += (field[t] - gt).abs() / gt;
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn steiner_error_shrinks_with_refinement_on_sphere() {
    let errors: Vec<f64> = [0, 1, 3].iter().map(|&k| sphere_mre(3, k, 10, 5)).collect();
    eprintln!("sphere MRE for k = 0, 1, 3: {errors:?}");
    assert!(errors[0] > errors[1] && errors[1] > errors[2]);
}

#[test]
fn steiner_one_shot_matches_graph_and_bounds_dijkstra() {
    let mesh = shapes::superellipsoid(2, 0.6, geoembed::mesh::Vec3::new(1.0, 0.7, 0.5));
    let plain = dijkstra_distances(&mesh.build_graph(), 11).unwrap();
    let refined = steiner_refined_distances(&mesh, 11, 2).unwrap();
    assert_eq!(refined, SteinerGraph::new(&mesh, 2).distances(11).unwrap());
    assert!(refined.iter().zip(&plain).all(|(r, p)| r <= p));
}
