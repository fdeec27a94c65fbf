use boxfield_core::geometry::{aabb_from_layout, layout_from_aabb, ray_box_intersect, Aabb, Ray, Vec3, LAYOUT_EXTENT};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_box(rng: &mut ChaCha8Rng) -> Aabb<f64> {
    let a = Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let s = Vec3::new(
        rng.random_range(0.05..1.0),
        rng.random_range(0.05..1.0),
        rng.random_range(0.05..1.0),
    );
    Aabb::new(a, a + s).unwrap()
}

/// Aimed at a point around `bbox` so that roughly half the rays hit it.
fn random_ray(rng: &mut ChaCha8Rng, bbox: &Aabb<f64>) -> Ray<f64> {
    let o = Vec3::new(
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
    );
    let u = Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let aim = bbox.center() + u.mul_elem(bbox.size());
    Ray::new(o, aim - o)
}

/// March `n` points over `[0, t_max]` and bracket the inside run.
fn march(ray: &Ray<f64>, bbox: &Aabb<f64>, t_max: f64, n: usize) -> Option<(f64, f64)> {
    let step = t_max / n as f64;
    let mut first = None;
    let mut last = None;
    for k in 0..=n {
        let t = k as f64 * step;
        if bbox.contains(ray.at(t)) {
            first.get_or_insert(t);
            last = Some(t);
        }
    }
    first.zip(last)
}

#[test]
fn slab_intersection_matches_point_marching() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let t_max = 12.0;
    let step = t_max / n as f64;
    let mut hits = 0;
    for _ in 0..100_000 {
        let bbox = random_box(&mut rng);
        let ray = random_ray(&mut rng, &bbox);
        let slab = ray_box_intersect(&ray, &bbox);
        match (slab, march(&ray, &bbox, t_max, n)) {
            (Some((t0, t1)), Some((m0, m1))) => {
                hits += 1;
                assert!((t0 - m0).abs() <= step + 1e-12, "entry {t0} vs marched {m0}");
                assert!((t1 - m1).abs() <= step + 1e-12, "exit {t1} vs marched {m1}");
            }
            (None, None) => {}
            // A grazing hit shorter than one marching step can slip between points.
            (Some((t0, t1)), None) => assert!(t1 - t0 <= step, "marching missed a chord of {}", t1 - t0),
            (None, Some(m)) => panic!("slab missed a marched hit at {m:?}"),
        }
    }
    assert!(hits > 30_000, "too few hits ({hits}) to mean anything");
}

#[test]
fn interval_endpoints_bracket_the_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let eps = 1e-4;
    let mut checked = 0;
    while checked < 20_000 {
        let bbox = random_box(&mut rng);
        let ray = random_ray(&mut rng, &bbox);
        if bbox.contains(ray.origin) {
            continue;
        }
        let Some((t0, t1)) = ray_box_intersect(&ray, &bbox) else {
            continue;
        };
        // Directions are unit length, so eps is a world distance.
        if t1 - t0 < 2.0 * eps {
            continue;
        }
        assert!(bbox.contains(ray.at(0.5 * (t0 + t1))));
        assert!(!bbox.contains(ray.at(t0 - eps)));
        assert!(!bbox.contains(ray.at(t1 + eps)));
        checked += 1;
    }
}

#[test]
fn inside_origin_enters_at_zero() {
    let bbox = Aabb::world();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let o = Vec3::new(
            rng.random_range(-0.9..0.9),
            rng.random_range(-0.9..0.9),
            rng.random_range(-0.9..0.9),
        );
        let d = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let (t0, t1) = ray_box_intersect(&Ray::new(o, d), &bbox).unwrap();
        assert_eq!(t0, 0.0);
        assert!(t1 > 0.0);
    }
}

fn arb_box6() -> impl Strategy<Value = [i64; 6]> {
    (0i64..511, 0i64..511, 0i64..511).prop_flat_map(|(x, y, z)| {
        (1..=512 - x, 1..=512 - y, 1..=512 - z).prop_map(move |(d, w, h)| [x, y, z, d, w, h])
    })
}

proptest! {
    #[test]
    fn layout_world_layout_is_identity(b in arb_box6()) {
        let world: Aabb<f64> = aabb_from_layout(b, LAYOUT_EXTENT).unwrap();
        prop_assert!(Aabb::world().contains_box(&world));
        prop_assert_eq!(layout_from_aabb(&world, LAYOUT_EXTENT), b);
    }
}
