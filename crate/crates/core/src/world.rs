//! Environment model: voxel occupancy, cylindrical obstacles and the sun.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Horizontal padding added around the workspace when voxelizing, so
/// obstacles near the border keep their full footprint.
pub const GRID_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("ray direction has zero length")]
    ZeroDirection,
    #[error("ray length must be positive")]
    NonPositiveLength,
    #[error("voxel resolution must be positive")]
    InvalidResolution,
    #[error("obstacles outside the grid bounds: {0:?}")]
    ObstacleOutOfBounds(Vec<usize>),
    #[error("obstacle {index} could not be placed after {attempts} attempts")]
    PlacementFailed { index: usize, attempts: usize },
    #[error("sun direction must be a unit vector pointing downward")]
    InvalidSun,
    #[error("invalid obstacle {0}: diameter and height must be positive")]
    InvalidObstacle(usize),
}

/// Dense occupancy grid. Voxels outside `dims` are free.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T: Real> {
    pub origin: Vector3<T>,
    pub resolution: T,
    pub dims: [usize; 3],
    occupancy: Vec<bool>,
}

impl<T: Real> VoxelGrid<T> {
    pub fn new(origin: Vector3<T>, resolution: T, dims: [usize; 3]) -> Result<Self, WorldError> {
        if !(resolution > T::zero()) {
            return Err(WorldError::InvalidResolution);
        }
        Ok(Self {
            origin,
            resolution,
            dims,
            occupancy: vec![false; dims[0] * dims[1] * dims[2]],
        })
    }

    fn linear(&self, idx: [i64; 3]) -> Option<usize> {
        let mut out = 0usize;
        for axis in (0..3).rev() {
            let i = idx[axis];
            if i < 0 || i as usize >= self.dims[axis] {
                return None;
            }
            out = out * self.dims[axis] + i as usize;
        }
        Some(out)
    }

    pub fn is_occupied(&self, idx: [i64; 3]) -> bool {
        self.linear(idx).is_some_and(|i| self.occupancy[i])
    }

    /// Marks a voxel occupied; returns false if the index is outside the grid.
    pub fn set_occupied(&mut self, idx: [i64; 3]) -> bool {
        match self.linear(idx) {
            Some(i) => {
                self.occupancy[i] = true;
                true
            }
            None => false,
        }
    }

    pub fn voxel_of(&self, p: &Vector3<T>) -> [i64; 3] {
        let mut idx = [0i64; 3];
        for axis in 0..3 {
            idx[axis] = ((p[axis] - self.origin[axis]) / self.resolution)
                .floor()
                .as_f64() as i64;
        }
        idx
    }

    pub fn voxel_center(&self, idx: [i64; 3]) -> Vector3<T> {
        let half = T::lit(0.5);
        Vector3::from_fn(|axis, _| {
            self.origin[axis] + (T::lit(idx[axis] as f64) + half) * self.resolution
        })
    }

    /// Upper corner of the grid's bounding box.
    pub fn extent_max(&self) -> Vector3<T> {
        Vector3::from_fn(|axis, _| {
            self.origin[axis] + T::lit(self.dims[axis] as f64) * self.resolution
        })
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn occupied_indices(&self) -> impl Iterator<Item = [i64; 3]> + '_ {
        let [nx, ny, _] = self.dims;
        self.occupancy.iter().enumerate().filter(|(_, &o)| o).map(move |(i, _)| {
            [(i % nx) as i64, ((i / nx) % ny) as i64, (i / (nx * ny)) as i64]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayHit<T: Real> {
    pub hit: bool,
    pub distance: T,
    pub voxel: Option<[i64; 3]>,
}

impl<T: Real> RayHit<T> {
    fn miss() -> Self {
        Self {
            hit: false,
            distance: T::zero(),
            voxel: None,
        }
    }

    fn at(distance: T, voxel: [i64; 3]) -> Self {
        Self {
            hit: true,
            distance,
            voxel: Some(voxel),
        }
    }
}

/// First occupied voxel along the segment `origin + t * direction`,
/// `t ∈ [0, max_len]`, by incremental voxel traversal.
pub fn raycast<T: Real>(
    grid: &VoxelGrid<T>,
    origin: &Vector3<T>,
    direction: &Vector3<T>,
    max_len: T,
) -> Result<RayHit<T>, WorldError> {
    let norm = direction.norm();
    if !(norm > T::lit(1e-12)) {
        return Err(WorldError::ZeroDirection);
    }
    if !(max_len > T::zero()) {
        return Err(WorldError::NonPositiveLength);
    }
    let dir = direction / norm;

    let start = grid.voxel_of(origin);
    if grid.is_occupied(start) {
        return Ok(RayHit::at(T::zero(), start));
    }

    // Clip the segment against the grid box.
    let lo = grid.origin;
    let hi = grid.extent_max();
    let mut t_enter = T::zero();
    let mut t_exit = max_len;
    for axis in 0..3 {
        let d = dir[axis];
        let o = origin[axis];
        if d == T::zero() {
            if o < lo[axis] || o > hi[axis] {
                return Ok(RayHit::miss());
            }
            continue;
        }
        let mut a = (lo[axis] - o) / d;
        let mut b = (hi[axis] - o) / d;
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        t_enter = t_enter.max(a);
        t_exit = t_exit.min(b);
    }
    if t_enter > t_exit {
        return Ok(RayHit::miss());
    }

    let entry = origin + dir * t_enter;
    let mut idx = grid.voxel_of(&entry);
    for axis in 0..3 {
        idx[axis] = idx[axis].clamp(0, grid.dims[axis] as i64 - 1);
    }
    let step: [i64; 3] = std::array::from_fn(|axis| {
        if dir[axis] > T::zero() {
            1
        } else if dir[axis] < T::zero() {
            -1
        } else {
            0
        }
    });
    // Parameter at which the ray leaves the current voxel along `axis`.
    let boundary_t = |idx: &[i64; 3], axis: usize| -> T {
        match step[axis] {
            0 => T::infinity(),
            s => {
                let face = if s > 0 { idx[axis] + 1 } else { idx[axis] };
                (grid.origin[axis] + T::lit(face as f64) * grid.resolution - origin[axis]) / dir[axis]
            }
        }
    };

    let mut t = t_enter;
    loop {
        if grid.is_occupied(idx) {
            return Ok(RayHit::at(t, idx));
        }
        let mut axis = 0;
        let mut t_next = boundary_t(&idx, 0);
        for a in 1..3 {
            let cand = boundary_t(&idx, a);
            if cand < t_next {
                t_next = cand;
                axis = a;
            }
        }
        if t_next > t_exit {
            return Ok(RayHit::miss());
        }
        t = t.max(t_next);
        idx[axis] += step[axis];
        if idx[axis] < 0 || idx[axis] >= grid.dims[axis] as i64 {
            return Ok(RayHit::miss());
        }
    }
}

/// Axis-aligned bounds of a voxelized region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBounds<T: Real> {
    pub min: Vector3<T>,
    pub max: Vector3<T>,
}

/// Upright cylinder standing on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle<T: Real> {
    pub center: Vector2<T>,
    pub diameter: T,
    pub height: T,
}

impl<T: Real> Obstacle<T> {
    pub fn contains(&self, p: &Vector3<T>) -> bool {
        let r = self.diameter * T::lit(0.5);
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        dx * dx + dy * dy <= r * r && p.z >= T::zero() && p.z <= self.height
    }
}

/// Voxelizes obstacles: a voxel is occupied iff its center lies inside a cylinder.
pub fn rasterize<T: Real>(
    obstacles: &[Obstacle<T>],
    resolution: T,
    bounds: &GridBounds<T>,
) -> Result<VoxelGrid<T>, WorldError> {
    if !(resolution > T::zero()) {
        return Err(WorldError::InvalidResolution);
    }
    let offenders: Vec<usize> = obstacles
        .iter()
        .enumerate()
        .filter(|(_, o)| {
            o.center.x < bounds.min.x
                || o.center.x > bounds.max.x
                || o.center.y < bounds.min.y
                || o.center.y > bounds.max.y
        })
        .map(|(i, _)| i)
        .collect();
    if !offenders.is_empty() {
        return Err(WorldError::ObstacleOutOfBounds(offenders));
    }
    if let Some(i) = obstacles
        .iter()
        .position(|o| !(o.diameter > T::zero() && o.height > T::zero()))
    {
        return Err(WorldError::InvalidObstacle(i));
    }

    let dims: [usize; 3] = std::array::from_fn(|axis| {
        let span = ((bounds.max[axis] - bounds.min[axis]) / resolution).ceil().as_f64();
        (span as usize).max(1)
    });
    let mut grid = VoxelGrid::new(bounds.min, resolution, dims)?;
    for obstacle in obstacles {
        let r = obstacle.diameter * T::lit(0.5);
        let lo = grid.voxel_of(&Vector3::new(
            obstacle.center.x - r,
            obstacle.center.y - r,
            T::zero(),
        ));
        let hi = grid.voxel_of(&Vector3::new(
            obstacle.center.x + r,
            obstacle.center.y + r,
            obstacle.height,
        ));
        for k in lo[2].max(0)..=hi[2].min(dims[2] as i64 - 1) {
            for j in lo[1].max(0)..=hi[1].min(dims[1] as i64 - 1) {
                for i in lo[0].max(0)..=hi[0].min(dims[0] as i64 - 1) {
                    if obstacle.contains(&grid.voxel_center([i, j, k])) {
                        grid.set_occupied([i, j, k]);
                    }
                }
            }
        }
    }
    Ok(grid)
}

/// Rectangular region of the ground plane where obstacles and robots live.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace<T: Real> {
    pub xmin: T,
    pub ymin: T,
    pub xmax: T,
    pub ymax: T,
}

impl<T: Real> Default for Workspace<T> {
    fn default() -> Self {
        Self {
            xmin: T::zero(),
            ymin: T::zero(),
            xmax: T::lit(20.0),
            ymax: T::lit(20.0),
        }
    }
}

impl<T: Real> Workspace<T> {
    pub fn contains(&self, p: &Vector2<T>) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn as_array(&self) -> [T; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self {
            xmin: a[0],
            ymin: a[1],
            xmax: a[2],
            ymax: a[3],
        }
    }

    fn grid_bounds(&self, ceiling: T) -> GridBounds<T> {
        let m = T::lit(GRID_MARGIN);
        GridBounds {
            min: Vector3::new(self.xmin - m, self.ymin - m, T::zero()),
            max: Vector3::new(self.xmax + m, self.ymax + m, ceiling),
        }
    }
}

/// Everything the planner knows about the environment. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel<T: Real> {
    pub seed: u64,
    pub workspace: Workspace<T>,
    pub grid: VoxelGrid<T>,
    pub obstacles: Vec<Obstacle<T>>,
    /// Unit vector pointing from the sun toward the ground.
    pub sun_direction: Vector3<T>,
    /// Sharpness of the specular glare lobe.
    pub glare_exponent: T,
}

/// Default glare lobe exponent.
pub const DEFAULT_GLARE_EXPONENT: f64 = 8.0;
/// Grid height used when no obstacle is taller.
pub const DEFAULT_CEILING: f64 = 12.0;

impl<T: Real> WorldModel<T> {
    pub fn new(
        seed: u64,
        workspace: Workspace<T>,
        resolution: T,
        obstacles: Vec<Obstacle<T>>,
        sun_direction: Vector3<T>,
    ) -> Result<Self, WorldError> {
        if (sun_direction.norm() - T::one()).abs() > T::lit(1e-9) || !(sun_direction.z < T::zero()) {
            return Err(WorldError::InvalidSun);
        }
        let ceiling = obstacles
            .iter()
            .fold(T::lit(DEFAULT_CEILING), |acc, o| acc.max(o.height));
        let grid = rasterize(&obstacles, resolution, &workspace.grid_bounds(ceiling))?;
        Ok(Self {
            seed,
            workspace,
            grid,
            obstacles,
            sun_direction,
            glare_exponent: T::lit(DEFAULT_GLARE_EXPONENT),
        })
    }

    pub fn with_glare_exponent(mut self, exponent: T) -> Self {
        self.glare_exponent = exponent;
        self
    }

    pub fn empty(sun_direction: Vector3<T>) -> Result<Self, WorldError> {
        Self::new(0, Workspace::default(), T::lit(0.25), Vec::new(), sun_direction)
    }
}

/// Parameters of the random map generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapSpec<T: Real> {
    pub workspace: Workspace<T>,
    pub n_obstacles: usize,
    pub diameter_min: T,
    pub diameter_max: T,
    pub obstacle_height: T,
    pub resolution: T,
    /// Radius of the disk around each keep-out point no obstacle may overlap.
    pub keepout_radius: T,
    /// Sun elevation below the horizon line, radians.
    pub sun_elevation_min: T,
    pub sun_elevation_max: T,
}

impl<T: Real> Default for MapSpec<T> {
    fn default() -> Self {
        Self {
            workspace: Workspace::default(),
            n_obstacles: 25,
            diameter_min: T::lit(0.5),
            diameter_max: T::lit(2.5),
            obstacle_height: T::lit(10.0),
            resolution: T::lit(0.25),
            keepout_radius: T::lit(0.75),
            sun_elevation_min: T::lit(20f64.to_radians()),
            sun_elevation_max: T::lit(60f64.to_radians()),
        }
    }
}

pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

fn uniform<T: Real>(rng: &mut ChaCha8Rng, lo: T, hi: T) -> T {
    let u: f64 = rng.random();
    lo + (hi - lo) * T::lit(u)
}

/// Sun direction from its azimuth and its elevation above the horizon.
pub fn sun_from_angles<T: Real>(azimuth: T, elevation: T) -> Vector3<T> {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    Vector3::new(-ce * ca, -ce * sa, -se)
}

/// Random world: obstacle centers uniform in the workspace, diameters
/// uniform in `[diameter_min, diameter_max]`, none overlapping a keep-out disk.
pub fn random_map<T: Real>(
    seed: u64,
    spec: &MapSpec<T>,
    keepout: &[Vector2<T>],
) -> Result<WorldModel<T>, WorldError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sun_az = uniform(&mut rng, T::zero(), T::two_pi());
    let sun_el = uniform(&mut rng, spec.sun_elevation_min, spec.sun_elevation_max);
    let sun = sun_from_angles(sun_az, sun_el);

    let ws = &spec.workspace;
    let half = T::lit(0.5);
    let mut obstacles = Vec::with_capacity(spec.n_obstacles);
    for index in 0..spec.n_obstacles {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let center = Vector2::new(
                uniform(&mut rng, ws.xmin, ws.xmax),
                uniform(&mut rng, ws.ymin, ws.ymax),
            );
            let diameter = uniform(&mut rng, spec.diameter_min, spec.diameter_max);
            let clear = keepout
                .iter()
                .all(|k| (k - center).norm() >= diameter * half + spec.keepout_radius);
            if clear {
                placed = Some(Obstacle {
                    center,
                    diameter,
                    height: spec.obstacle_height,
                });
                break;
            }
        }
        obstacles.push(placed.ok_or(WorldError::PlacementFailed {
            index,
            attempts: MAX_PLACEMENT_ATTEMPTS,
        })?);
    }
    WorldModel::new(seed, *ws, spec.resolution, obstacles, sun)
}
