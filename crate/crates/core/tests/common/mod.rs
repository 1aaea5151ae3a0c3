//! Fine-sampling reference for voxel ray traversal.

#![allow(dead_code)]

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use viewplan::world::{raycast, VoxelGrid};

/// Samples per voxel edge length along the ray.
pub const SAMPLES_PER_VOXEL: f64 = 400.0;
/// A chord through an occupied voxel shorter than this (in voxel edges) is
/// too thin for sampling to resolve reliably.
pub const GRAZING_CHORD: f64 = 1.0 / 50.0;
/// Boxes are widened by this much when measuring chords, so rays that only
/// touch a face, edge or corner also count as grazing.
pub const FACE_EPS: f64 = 1e-7;

pub fn random_grid(rng: &mut ChaCha8Rng) -> VoxelGrid<f64> {
    let res = rng.random_range(0.1..1.0);
    let origin = Vector3::new(
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
        rng.random_range(-5.0..5.0),
    );
    let dims = [
        rng.random_range(4..20),
        rng.random_range(4..20),
        rng.random_range(4..20),
    ];
    let fill = rng.random_range(0.05..0.3);
    let mut grid = VoxelGrid::new(origin, res, dims).unwrap();
    for i in 0..dims[0] as i64 {
        for j in 0..dims[1] as i64 {
            for k in 0..dims[2] as i64 {
                if rng.random::<f64>() < fill {
                    grid.set_occupied([i, j, k]);
                }
            }
        }
    }
    grid
}

pub struct Ray {
    pub origin: Vector3<f64>,
    pub dir: Vector3<f64>,
    pub max_len: f64,
}

/// Origins in a box around the grid, so some rays start outside it; one in
/// ten is axis-aligned.
pub fn random_ray(rng: &mut ChaCha8Rng, grid: &VoxelGrid<f64>) -> Ray {
    let lo = grid.origin;
    let hi = grid.extent_max();
    let pad = (hi - lo) * 0.25;
    let origin = Vector3::from_fn(|i, _| rng.random_range(lo[i] - pad[i]..hi[i] + pad[i]));
    let dir = if rng.random::<f64>() < 0.1 {
        let mut d = Vector3::zeros();
        d[rng.random_range(0..3)] = if rng.random() { 1.0 } else { -1.0 };
        d
    } else {
        let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        v / v.norm()
    };
    let max_len = rng.random_range(0.0..1.5) * (hi - lo).norm();
    Ray { origin, dir, max_len }
}

/// Distance to the first sample that lands in an occupied voxel.
pub fn sampled_hit(grid: &VoxelGrid<f64>, ray: &Ray) -> Option<f64> {
    let h = grid.resolution / SAMPLES_PER_VOXEL;
    let n = (ray.max_len / h).floor() as usize;
    (0..=n).map(|k| k as f64 * h).chain(std::iter::once(ray.max_len)).find(|&t| {
        let p = ray.origin + ray.dir * t;
        grid.is_occupied(grid.voxel_of(&p))
    })
}

/// Length of the part of the segment inside the axis-aligned box, or `None`
/// when they do not meet.
fn chord(ray: &Ray, lo: Vector3<f64>, hi: Vector3<f64>) -> Option<f64> {
    let (mut t0, mut t1) = (0.0f64, ray.max_len);
    for i in 0..3 {
        if ray.dir[i] == 0.0 {
            if ray.origin[i] < lo[i] || ray.origin[i] > hi[i] {
                return None;
            }
            continue;
        }
        let a = (lo[i] - ray.origin[i]) / ray.dir[i];
        let b = (hi[i] - ray.origin[i]) / ray.dir[i];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1).then_some(t1 - t0)
}

/// The ray passes so close to an occupied voxel's boundary that neither
/// the traversal nor the sampler is authoritative.
pub fn is_grazing(grid: &VoxelGrid<f64>, ray: &Ray) -> bool {
    let res = grid.resolution;
    let eps = Vector3::repeat(FACE_EPS);
    grid.occupied_indices().any(|idx| {
        let lo = grid.origin + Vector3::new(idx[0] as f64, idx[1] as f64, idx[2] as f64) * res;
        let hi = lo + Vector3::repeat(res);
        match chord(ray, lo - eps, hi + eps) {
            None => false,
            Some(c) => c < GRAZING_CHORD * res + 2.0 * FACE_EPS || chord(ray, lo + eps, hi - eps).is_none(),
        }
    })
}

#[derive(Debug, Default, Clone, Copy)]
pub struct OracleTally {
    pub rays: usize,
    pub agree: usize,
    pub grazing: usize,
    pub disagree: usize,
}

/// Compares the exact traversal with the sampler on `grids × rays` random
/// cases. A hit must agree to within one sample spacing.
pub fn run_oracle(seed: u64, grids: usize, rays: usize) -> OracleTally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = OracleTally::default();
    for _ in 0..grids {
        let grid = random_grid(&mut rng);
        let h = grid.resolution / SAMPLES_PER_VOXEL;
        for _ in 0..rays {
            let ray = random_ray(&mut rng, &grid);
            tally.rays += 1;
            let exact = raycast(&grid, &ray.origin, &ray.dir, ray.max_len).unwrap();
            let sampled = sampled_hit(&grid, &ray);
            let same = match (exact.hit, sampled) {
                (false, None) => true,
                (true, Some(t)) => exact.distance <= t + 1e-9 && t - exact.distance <= h + 1e-9,
                _ => false,
            };
            if same {
                tally.agree += 1;
            } else if is_grazing(&grid, &ray) {
                tally.grazing += 1;
            } else {
                tally.disagree += 1;
            }
        }
    }
    tally
}
