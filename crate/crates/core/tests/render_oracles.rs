use std::sync::Mutex;

use boxfield_core::field::{FieldGradient, FieldSample, RadianceField, VoxelField};
use boxfield_core::geometry::{generate_camera_rays, Aabb, CameraPose, Ray, RayBatch, Vec3};
use boxfield_core::occupancy::OccupancyGrid;
use boxfield_core::render::{
    composite, compositing_weights, render, render_backward, render_clipped, render_clipped_backward, render_full,
    render_inverse_clipped, Clip, RenderConfig, Sample, TransmittanceMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Records every point the renderer asks about.
struct Recording<'a, F> {
    inner: &'a F,
    points: Mutex<Vec<Vec3<f64>>>,
}

impl<'a, F> Recording<'a, F> {
    fn new(inner: &'a F) -> Self {
        Self {
            inner,
            points: Mutex::new(Vec::new()),
        }
    }

    fn take(&self) -> Vec<Vec3<f64>> {
        std::mem::take(&mut self.points.lock().unwrap())
    }
}

impl<F: RadianceField<f64>> RadianceField<f64> for Recording<'_, F> {
    fn query(&self, x: Vec3<f64>, d: Vec3<f64>) -> FieldSample<f64> {
        self.points.lock().unwrap().push(x);
        self.inner.query(x, d)
    }
}

fn random_field(rng: &mut ChaCha8Rng, res: usize) -> VoxelField<f64> {
    let n = res * res * res;
    let density = (0..n).map(|_| rng.random_range(-3.0..2.0)).collect();
    let color = (0..n)
        .map(|_| {
            Vec3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            )
        })
        .collect();
    VoxelField::from_raw(res, density, color).unwrap()
}

fn random_grid(rng: &mut ChaCha8Rng, res: usize, fill: f64) -> OccupancyGrid<f64> {
    let mut g = OccupancyGrid::new(res, 0.01, 16);
    for c in 0..g.cell_count() {
        g.set(c, rng.random_bool(fill));
    }
    g
}

fn random_box(rng: &mut ChaCha8Rng) -> Aabb<f64> {
    let lo = Vec3::new(
        rng.random_range(-0.9..0.3),
        rng.random_range(-0.9..0.3),
        rng.random_range(-0.9..0.3),
    );
    let size = Vec3::new(
        rng.random_range(0.2..0.8),
        rng.random_range(0.2..0.8),
        rng.random_range(0.2..0.8),
    );
    Aabb::new(lo, (lo + size).min_elem(Vec3::splat(1.0))).unwrap()
}

fn random_rays(rng: &mut ChaCha8Rng, n: usize) -> RayBatch<f64> {
    let rays = (0..n)
        .map(|_| {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let z = rng.random_range(-0.8..0.8);
            let r = (1.0f64 - z * z).sqrt();
            let o = Vec3::new(r * theta.cos(), r * theta.sin(), z) * 2.5;
            let aim = Vec3::new(
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
            );
            Ray::new(o, aim - o)
        })
        .collect();
    RayBatch {
        width: n,
        height: 1,
        rays,
    }
}

fn plain_config(m: usize) -> RenderConfig<f64> {
    RenderConfig {
        samples_per_ray: m,
        near: 0.5,
        far: 4.5,
        background: Vec3::lit(0.2, 0.7, 1.0),
        stratified: false,
        clip_to_grid: false,
        transmittance: TransmittanceMode::Exclusive,
    }
}

/// Straight-line evaluation of the compositing sum over bin-center depths,
/// with membership decided per point.
fn brute_force_pixel(
    field: &VoxelField<f64>,
    grid: &OccupancyGrid<f64>,
    ray: &Ray<f64>,
    cfg: &RenderConfig<f64>,
    keep: impl Fn(Vec3<f64>) -> bool,
) -> Vec3<f64> {
    let m = cfg.samples_per_ray;
    let bin = (cfg.far - cfg.near) / m as f64;
    let ts: Vec<f64> = (0..m).map(|k| cfg.near + (k as f64 + 0.5) * bin).collect();
    let mut trans = 1.0;
    let mut color = Vec3::zero();
    for (k, &t) in ts.iter().enumerate() {
        let delta = if k + 1 < m { ts[k + 1] - t } else { cfg.far - t };
        let x = ray.at(t);
        if !(keep(x) && grid.is_occupied(x)) {
            continue;
        }
        let s = field.query(x, ray.direction);
        let a = 1.0 - (-s.sigma * delta).exp();
        color += s.color * (trans * a);
        trans *= 1.0 - a;
    }
    color + cfg.background * trans
}

fn strictly_inside(b: &Aabb<f64>, p: Vec3<f64>) -> bool {
    (0..3).all(|a| b.min()[a] < p[a] && p[a] < b.max()[a])
}

#[test]
fn clipped_render_matches_membership_oracle_and_never_queries_outside() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = plain_config(48);
    for scene in 0..100 {
        let field = random_field(&mut rng, 16);
        let grid = random_grid(&mut rng, 8, 0.7);
        let bbox = random_box(&mut rng);
        let rays = random_rays(&mut rng, 64);
        let rec = Recording::new(&field);
        let img = render_clipped(&rec, &grid, &rays, &bbox, &cfg, 0);
        for p in rec.take() {
            assert!(bbox.contains(p), "scene {scene}: query at {p:?} outside {bbox:?}");
        }
        for (i, ray) in rays.rays.iter().enumerate() {
            let expect = brute_force_pixel(&field, &grid, ray, &cfg, |x| bbox.contains(x));
            for ch in 0..3 {
                assert!(
                    (img.rgb[i][ch] - expect[ch]).abs() <= 1e-6,
                    "scene {scene} ray {i}: {:?} vs {:?}",
                    img.rgb[i],
                    expect
                );
            }
        }
    }
}

#[test]
fn inverse_render_matches_oracle_and_never_queries_inside() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let cfg = plain_config(48);
    for _ in 0..30 {
        let field = random_field(&mut rng, 12);
        let grid = random_grid(&mut rng, 8, 0.8);
        let boxes = [random_box(&mut rng), random_box(&mut rng)];
        let rays = random_rays(&mut rng, 48);
        let rec = Recording::new(&field);
        let img = render_inverse_clipped(&rec, &grid, &rays, &boxes, &cfg, 0);
        for p in rec.take() {
            assert!(
                boxes.iter().all(|b| !strictly_inside(b, p)),
                "query inside a box at {p:?}"
            );
        }
        for (i, ray) in rays.rays.iter().enumerate() {
            let expect = brute_force_pixel(&field, &grid, ray, &cfg, |x| {
                boxes.iter().all(|b| !strictly_inside(b, x))
            });
            assert!((img.rgb[i] - expect).norm() <= 1e-6);
        }
    }
}

fn sorted_bits(points: Vec<Vec3<f64>>) -> Vec<[u64; 3]> {
    let mut v: Vec<[u64; 3]> = points.iter().map(|p| p.to_array().map(f64::to_bits)).collect();
    v.sort_unstable();
    v
}

#[test]
fn clipped_and_inverse_masks_partition_the_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (mut inside_total, mut total) = (0, 0);
    for _ in 0..30 {
        let field = random_field(&mut rng, 8);
        let mut grid = OccupancyGrid::new(4, 0.01, 16);
        grid.fill(true);
        let bbox = random_box(&mut rng);
        let rays = random_rays(&mut rng, 32);
        let cfg = RenderConfig {
            stratified: true,
            samples_per_ray: 40,
            ..plain_config(40)
        };
        let rec = Recording::new(&field);
        render_full(&rec, &grid, &rays, &cfg, 5);
        let all = sorted_bits(rec.take());
        render_clipped(&rec, &grid, &rays, &bbox, &cfg, 5);
        let mut parts = rec.take();
        let inside = parts.len();
        render_inverse_clipped(&rec, &grid, &rays, std::slice::from_ref(&bbox), &cfg, 5);
        parts.extend(rec.take());
        assert_eq!(sorted_bits(parts), all);
        inside_total += inside;
        total += all.len();
    }
    assert!(inside_total > 0 && inside_total < total);
}

#[test]
fn no_boxes_means_full_render_and_covering_boxes_mean_background() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let field = random_field(&mut rng, 10);
    let mut grid = OccupancyGrid::new(8, 0.01, 16);
    grid.fill(true);
    let rays = random_rays(&mut rng, 64);
    let cfg = RenderConfig {
        stratified: true,
        ..plain_config(32)
    };
    let full = render_full(&field, &grid, &rays, &cfg, 9);
    assert_eq!(render_inverse_clipped(&field, &grid, &rays, &[], &cfg, 9), full);

    let huge = Aabb::new(Vec3::splat(-50.0), Vec3::splat(50.0)).unwrap();
    let masked = render_inverse_clipped(&field, &grid, &rays, &[huge], &cfg, 9);
    assert!(masked.rgb.iter().all(|c| *c == cfg.background));
    assert!(masked.opacity.iter().all(|o| *o == 0.0));
}

/// A field that is empty outside one box.
struct Boxed<'a> {
    inner: &'a VoxelField<f64>,
    bbox: Aabb<f64>,
}

impl RadianceField<f64> for Boxed<'_> {
    fn query(&self, x: Vec3<f64>, d: Vec3<f64>) -> FieldSample<f64> {
        if self.bbox.contains(x) {
            self.inner.query(x, d)
        } else {
            FieldSample::empty()
        }
    }
}

#[test]
fn clipping_a_field_empty_outside_the_box_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..20 {
        let inner = random_field(&mut rng, 10);
        let bbox = random_box(&mut rng);
        let field = Boxed { inner: &inner, bbox };
        let grid = random_grid(&mut rng, 8, 0.9);
        let rays = random_rays(&mut rng, 64);
        let cfg = RenderConfig {
            stratified: true,
            ..plain_config(64)
        };
        assert_eq!(
            render_clipped(&field, &grid, &rays, &bbox, &cfg, 3),
            render_full(&field, &grid, &rays, &cfg, 3)
        );
    }
}

#[test]
fn background_exactly_when_opacity_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let field = random_field(&mut rng, 10);
    let grid = random_grid(&mut rng, 8, 0.3);
    let bbox = random_box(&mut rng);
    let rays = random_rays(&mut rng, 256);
    let cfg = plain_config(32);
    let img = render_clipped(&field, &grid, &rays, &bbox, &cfg, 0);
    let mut seen_clear = false;
    for (c, o) in img.rgb.iter().zip(&img.opacity) {
        assert_eq!(*o == 0.0, *c == cfg.background);
        seen_clear |= *o == 0.0;
    }
    assert!(seen_clear);
}

#[test]
fn weights_and_final_transmittance_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    for _ in 0..100_000 {
        let m = rng.random_range(0..24);
        let mut t = 0.0;
        let samples: Vec<Sample<f64>> = (0..m)
            .map(|_| {
                let delta = rng.random_range(0.0..0.5);
                t += delta;
                Sample {
                    t,
                    delta,
                    sigma: rng.random_range(0.0..60.0),
                    color: Vec3::splat(0.5),
                }
            })
            .collect();
        let (w, tr) = compositing_weights(&samples, TransmittanceMode::Exclusive);
        let total: f64 = w.iter().sum::<f64>() + tr;
        assert!((total - 1.0).abs() <= 1e-9, "sum {total}");
        let c = composite(&samples, Vec3::zero(), TransmittanceMode::Exclusive);
        assert!((c.opacity - (1.0 - tr)).abs() <= 1e-12);
    }
}

/// Constant density and white color everywhere in the world cube.
struct Uniform(f64);

impl RadianceField<f64> for Uniform {
    fn query(&self, x: Vec3<f64>, _d: Vec3<f64>) -> FieldSample<f64> {
        if Aabb::world().contains(x) {
            FieldSample {
                sigma: self.0,
                color: Vec3::splat(1.0),
            }
        } else {
            FieldSample::empty()
        }
    }
}

/// Density `peak * (1 - x^2)` across the cube, white.
struct Parabolic(f64);

impl RadianceField<f64> for Parabolic {
    fn query(&self, x: Vec3<f64>, _d: Vec3<f64>) -> FieldSample<f64> {
        if Aabb::world().contains(x) {
            FieldSample {
                sigma: self.0 * (1.0 - x.x * x.x),
                color: Vec3::splat(1.0),
            }
        } else {
            FieldSample::empty()
        }
    }
}

fn axis_pixel<F: RadianceField<f64>>(field: &F, m: usize) -> f64 {
    let mut grid = OccupancyGrid::new(4, 0.01, 16);
    grid.fill(true);
    let cfg = RenderConfig {
        samples_per_ray: m,
        near: 0.0,
        far: 4.0,
        background: Vec3::zero(),
        stratified: false,
        clip_to_grid: false,
        transmittance: TransmittanceMode::Exclusive,
    };
    let rays = RayBatch {
        width: 1,
        height: 1,
        rays: vec![Ray::new(Vec3::lit(-1.5, 0.0, 0.0), Vec3::lit(1.0, 0.0, 0.0))],
    };
    render_full(field, &grid, &rays, &cfg, 0).rgb[0].x
}

#[test]
fn homogeneous_slab_matches_beer_lambert() {
    // Chord of length 2 through the cube.
    let got = axis_pixel(&Uniform(0.5), 128);
    let exact = 1.0 - (-0.5f64 * 2.0).exp();
    assert!((got - exact).abs() < 1e-3, "{got} vs {exact}");
}

#[test]
fn doubling_samples_converges() {
    // Optical depth of the chord: integral of 1.5 (1 - x^2) over [-1, 1].
    let exact = 1.0 - (-2.0f64).exp();
    let ms = [16, 32, 64, 128, 256, 512];
    let px: Vec<f64> = ms.iter().map(|&m| axis_pixel(&Parabolic(1.5), m)).collect();
    let errs: Vec<f64> = px.iter().map(|p| (p - exact).abs()).collect();
    for w in errs.windows(2) {
        assert!(w[1] < w[0], "errors not decreasing: {errs:?}");
    }
    let steps: Vec<f64> = px.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    for w in steps.windows(2) {
        assert!(w[1] < w[0], "differences not shrinking: {steps:?}");
    }
    assert!(errs[5] < 1e-4);
}

#[test]
fn unit_chord_with_unit_density() {
    let mut grid = OccupancyGrid::new(4, 0.01, 16);
    grid.fill(true);
    let cfg = RenderConfig {
        samples_per_ray: 256,
        near: 0.0,
        far: 4.0,
        background: Vec3::zero(),
        stratified: false,
        clip_to_grid: false,
        transmittance: TransmittanceMode::Exclusive,
    };
    // Enters the cube at t = 1 and leaves through a slab of length 1 in the
    // clipping box.
    let bbox = Aabb::new(Vec3::lit(-0.5, -1.0, -1.0), Vec3::lit(0.5, 1.0, 1.0)).unwrap();
    let rays = RayBatch {
        width: 1,
        height: 1,
        rays: vec![Ray::new(Vec3::lit(-1.5, 0.0, 0.0), Vec3::lit(1.0, 0.0, 0.0))],
    };
    let px = render_clipped(&Uniform(1.0), &grid, &rays, &bbox, &cfg, 0).rgb[0].x;
    assert!((px - (1.0 - (-1.0f64).exp())).abs() < 1e-3, "{px}");
}

type FdScene = (
    VoxelField<f64>,
    OccupancyGrid<f64>,
    RayBatch<f64>,
    Aabb<f64>,
    Vec<Vec3<f64>>,
);

fn fd_scene(seed: u64) -> FdScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 8 * 8 * 8;
    let density = (0..n).map(|_| rng.random_range(-1.0..1.5)).collect();
    let color = (0..n)
        .map(|_| {
            Vec3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            )
        })
        .collect();
    let field = VoxelField::from_raw(8, density, color).unwrap();
    let mut grid = OccupancyGrid::new(4, 0.01, 16);
    grid.fill(true);
    let pose = CameraPose::new(
        Vec3::lit(2.2, 1.1, 0.9),
        Vec3::lit(0.05, -0.05, 0.0),
        Vec3::lit(0.0, 0.0, 1.0),
        0.5,
    )
    .unwrap();
    let rays = generate_camera_rays(&pose, 2, 2);
    let bbox = Aabb::new(Vec3::lit(-0.6, -0.7, -0.5), Vec3::lit(0.7, 0.5, 0.6)).unwrap();
    let cot = (0..4)
        .map(|_| {
            Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    (field, grid, rays, bbox, cot)
}

#[test]
fn clipped_backward_matches_central_differences() {
    let (field, grid, rays, bbox, cot) = fd_scene(31);
    let cfg = RenderConfig {
        samples_per_ray: 8,
        stratified: true,
        ..RenderConfig::default()
    };
    let seed = 77;
    let objective = |f: &VoxelField<f64>| -> f64 {
        let img = render_clipped(f, &grid, &rays, &bbox, &cfg, seed);
        img.rgb.iter().zip(&cot).map(|(c, g)| c.dot(*g)).sum()
    };
    let mut grad = FieldGradient::zeros_like(&field);
    render_clipped_backward(&field, &grid, &rays, &bbox, &cfg, seed, &cot, &mut grad).unwrap();

    let h = 1e-4;
    let mut checked = 0;
    let mut check = |analytic: f64, plus: f64, minus: f64, what: &str| {
        let fd = (plus - minus) / (2.0 * h);
        if fd.abs() > 1e-6 {
            let rel = (analytic - fd).abs() / fd.abs();
            assert!(rel < 1e-3, "{what}: analytic {analytic} vs fd {fd} (rel {rel})");
            checked += 1;
        } else {
            assert!(analytic.abs() < 1e-5, "{what}: analytic {analytic} where fd vanishes");
        }
    };
    for v in 0..field.vertex_count() {
        let mut p = field.clone();
        p.raw_density_mut()[v] += h;
        let plus = objective(&p);
        p.raw_density_mut()[v] -= 2.0 * h;
        let minus = objective(&p);
        check(grad.d_density[v], plus, minus, &format!("density {v}"));
        for ch in 0..3 {
            let mut p = field.clone();
            p.raw_color_mut()[v][ch] += h;
            let plus = objective(&p);
            p.raw_color_mut()[v][ch] -= 2.0 * h;
            let minus = objective(&p);
            check(grad.d_color[v][ch], plus, minus, &format!("color {v}.{ch}"));
        }
    }
    assert!(checked > 50, "only {checked} parameters had a measurable effect");
}

#[test]
fn backward_ignores_rays_that_miss_the_box_and_zero_cotangents() {
    let (field, grid, rays, _, cot) = fd_scene(32);
    let cfg = RenderConfig {
        samples_per_ray: 8,
        ..RenderConfig::default()
    };
    let behind = Aabb::new(Vec3::lit(5.0, 5.0, 5.0), Vec3::lit(6.0, 6.0, 6.0)).unwrap();
    let mut grad = FieldGradient::zeros_like(&field);
    render_clipped_backward(&field, &grid, &rays, &behind, &cfg, 1, &cot, &mut grad).unwrap();
    assert!(grad.is_zero());
    let zero = vec![Vec3::zero(); rays.len()];
    render_backward(&field, &grid, &rays, Clip::Full, &cfg, 1, &zero, &mut grad).unwrap();
    assert!(grad.is_zero());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let field = random_field(&mut rng, 16);
    let grid = random_grid(&mut rng, 8, 0.8);
    let rays = random_rays(&mut rng, 300);
    let bbox = random_box(&mut rng);
    let cot: Vec<Vec3<f64>> = (0..rays.len())
        .map(|_| {
            Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let cfg = RenderConfig {
        samples_per_ray: 64,
        ..RenderConfig::default()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let img = render(&field, &grid, &rays, Clip::Inside(&bbox), &cfg, 99);
            let mut grad = FieldGradient::zeros_like(&field);
            render_backward(&field, &grid, &rays, Clip::Inside(&bbox), &cfg, 99, &cot, &mut grad).unwrap();
            (img, grad)
        })
    };
    let (img1, grad1) = run(1);
    let (img4, grad4) = run(4);
    assert_eq!(img1, img4);
    let bits = |g: &FieldGradient<f64>| -> Vec<u64> {
        g.d_density
            .iter()
            .map(|v| v.to_bits())
            .chain(g.d_color.iter().flat_map(|c| c.to_array().map(f64::to_bits)))
            .collect()
    };
    assert_eq!(bits(&grad1), bits(&grad4));
    assert!(!grad1.is_zero());
}
