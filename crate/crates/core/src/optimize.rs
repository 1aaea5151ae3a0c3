//! Search strategies over the five-dimensional placement space
//! `(rho, psi, phi, azimuth, elevation)`.
//!
//! All strategies are deterministic for a given seed. Candidate batches may
//! be evaluated in parallel; results are always merged in index order.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraParams, SphericalOffset};
use crate::lupp::CandidateResult;
use crate::scalar::Real;

/// Minimum best-cost decrease that resets the stall counter.
pub const IMPROVEMENT_TOL: f64 = 1e-9;

/// Anything an optimizer can rank.
pub trait Scored<T: Real> {
    fn cost(&self) -> T;

    fn is_feasible(&self) -> bool {
        self.cost().is_finite()
    }
}

impl Scored<f64> for f64 {
    fn cost(&self) -> f64 {
        *self
    }
}

impl Scored<f32> for f32 {
    fn cost(&self) -> f32 {
        *self
    }
}

impl<T: Real> Scored<T> for CandidateResult<T> {
    fn cost(&self) -> T {
        self.cost
    }

    fn is_feasible(&self) -> bool {
        self.verdict.feasible
    }
}

/// Closed interval per search variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds<T: Real> {
    pub rho: [T; 2],
    pub psi: [T; 2],
    pub phi: [T; 2],
    pub azimuth: [T; 2],
    pub elevation: [T; 2],
}

impl<T: Real> SearchBounds<T> {
    /// Whole detection range and field of view, every azimuth, and the
    /// given elevation band.
    pub fn for_camera(cam: &CameraParams<T>, elevation: [T; 2]) -> Self {
        let half = T::lit(0.5);
        Self {
            rho: [cam.rho_min, cam.rho_max],
            psi: [-half * cam.f_horz, half * cam.f_horz],
            phi: [-half * cam.f_vert, half * cam.f_vert],
            azimuth: [T::zero(), T::two_pi()],
            elevation,
        }
    }

    pub fn axes(&self) -> [[T; 2]; 5] {
        [self.rho, self.psi, self.phi, self.azimuth, self.elevation]
    }

    pub fn is_valid(&self) -> bool {
        self.axes().iter().all(|[lo, hi]| lo <= hi && lo.is_finite() && hi.is_finite())
    }

    /// Inside the camera's range and field of view.
    pub fn fits_camera(&self, cam: &CameraParams<T>) -> bool {
        let half = T::lit(0.5);
        let eps = T::lit(1e-12);
        self.is_valid()
            && self.rho[0] >= cam.rho_min - eps
            && self.rho[1] <= cam.rho_max + eps
            && self.psi[0] >= -half * cam.f_horz - eps
            && self.psi[1] <= half * cam.f_horz + eps
            && self.phi[0] >= -half * cam.f_vert - eps
            && self.phi[1] <= half * cam.f_vert + eps
    }

    pub fn contains(&self, x: &SphericalOffset<T>) -> bool {
        self.axes()
            .iter()
            .zip(x.to_array())
            .all(|([lo, hi], v)| *lo <= v && v <= *hi)
    }

    pub fn clip(&self, x: [T; 5]) -> [T; 5] {
        let axes = self.axes();
        std::array::from_fn(|i| x[i].clamp(axes[i][0], axes[i][1]))
    }

    fn azimuth_is_full_circle(&self) -> bool {
        self.azimuth[1] - self.azimuth[0] >= T::two_pi() - T::lit(1e-9)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> [T; 5] {
        let axes = self.axes();
        std::array::from_fn(|i| {
            let u: f64 = rng.random();
            axes[i][0] + (axes[i][1] - axes[i][0]) * T::lit(u)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport<T: Real, R> {
    pub best: R,
    pub best_point: SphericalOffset<T>,
    pub evaluations: usize,
    pub feasible_evaluations: usize,
    pub wall_time: f64,
    /// `(iteration, best cost so far)`.
    pub history: Vec<(usize, T)>,
    /// False when the budget ran out without a single feasible candidate.
    pub found_feasible: bool,
}

impl<T: Real, R: Scored<T>> SearchReport<T, R> {
    pub fn best_cost(&self) -> T {
        self.best.cost()
    }
}

/// Error raised by a strategy: either nothing to return, or the objective failed.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError<E> {
    #[error("invalid search parameters: {0}")]
    InvalidParameters(String),
    #[error("objective failed: {0}")]
    Objective(E),
}

fn eval_batch<T, R, E, F>(objective: &F, points: &[[T; 5]]) -> Result<Vec<R>, SearchError<E>>
where
    T: Real,
    R: Send,
    E: Send,
    F: Fn(&SphericalOffset<T>) -> Result<R, E> + Sync,
{
    let results: Vec<Result<R, E>> = points
        .par_iter()
        .map(|p| objective(&SphericalOffset::from_array(*p)))
        .collect();
    results
        .into_iter()
        .map(|r| r.map_err(SearchError::Objective))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeParams {
    pub pop_size: usize,
    pub max_iters: usize,
    pub scale: f64,
    pub crossover: f64,
    pub stall_limit: usize,
    pub seed: u64,
}

impl Default for DeParams {
    fn default() -> Self {
        Self {
            pop_size: 40,
            max_iters: 100,
            scale: 0.8,
            crossover: 0.9,
            stall_limit: 20,
            seed: 0,
        }
    }
}

fn distinct_indices<R: Rng>(rng: &mut R, n: usize, exclude: usize) -> [usize; 3] {
    let mut out = [usize::MAX; 3];
    for k in 0..3 {
        loop {
            let c = rng.random_range(0..n);
            if c != exclude && !out[..k].contains(&c) {
                out[k] = c;
                break;
            }
        }
    }
    out
}

/// DE/rand/1/bin with greedy selection.
///
/// Stops after `max_iters` generations, or after `stall_limit` consecutive
/// generations without the best cost dropping by more than
/// [`IMPROVEMENT_TOL`]. The stall counter only runs once a feasible
/// candidate has been found.
pub fn differential_evolution<T, R, E, F>(
    objective: F,
    bounds: &SearchBounds<T>,
    params: &DeParams,
) -> Result<SearchReport<T, R>, SearchError<E>>
where
    T: Real,
    R: Scored<T> + Clone + Send,
    E: Send,
    F: Fn(&SphericalOffset<T>) -> Result<R, E> + Sync,
{
    if params.pop_size < 4 {
        return Err(SearchError::InvalidParameters("pop_size must be at least 4".into()));
    }
    if !(params.scale > 0.0 && params.scale <= 2.0) || !(0.0..=1.0).contains(&params.crossover) {
        return Err(SearchError::InvalidParameters("need 0 < F <= 2 and 0 <= CR <= 1".into()));
    }
    if !bounds.is_valid() {
        return Err(SearchError::InvalidParameters("bounds are empty or non-finite".into()));
    }

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let np = params.pop_size;
    let f = T::lit(params.scale);

    let mut population: Vec<[T; 5]> = (0..np).map(|_| bounds.sample(&mut rng)).collect();
    let mut scores = eval_batch(&objective, &population)?;
    let mut evaluations = np;
    let mut feasible_evaluations = scores.iter().filter(|s| s.is_feasible()).count();

    let argmin = |scores: &[R]| {
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if s.cost() < scores[best].cost() {
                best = i;
            }
        }
        best
    };
    let mut best = argmin(&scores);
    let mut history = vec![(0, scores[best].cost())];
    let mut stall = 0;

    for iter in 1..=params.max_iters {
        let trials: Vec<[T; 5]> = (0..np)
            .map(|i| {
                let [a, b, c] = distinct_indices(&mut rng, np, i);
                let forced = rng.random_range(0..5);
                let mutant: [T; 5] = std::array::from_fn(|j| population[a][j] + f * (population[b][j] - population[c][j]));
                let mutant = bounds.clip(mutant);
                std::array::from_fn(|j| {
                    let u: f64 = rng.random();
                    if j == forced || u < params.crossover {
                        mutant[j]
                    } else {
                        population[i][j]
                    }
                })
            })
            .collect();
        let trial_scores = eval_batch(&objective, &trials)?;
        evaluations += np;
        feasible_evaluations += trial_scores.iter().filter(|s| s.is_feasible()).count();

        let previous = scores[best].cost();
        for (i, (x, s)) in trials.into_iter().zip(trial_scores).enumerate() {
            if s.cost() <= scores[i].cost() {
                population[i] = x;
                scores[i] = s;
            }
        }
        best = argmin(&scores);
        let current = scores[best].cost();
        history.push((iter, current));

        if current.is_finite() {
            if previous - current > T::lit(IMPROVEMENT_TOL) {
                stall = 0;
            } else {
                stall += 1;
            }
            if stall >= params.stall_limit {
                break;
            }
        }
    }

    let found_feasible = scores[best].is_feasible();
    Ok(SearchReport {
        best_point: SphericalOffset::from_array(population[best]),
        best: scores.swap_remove(best),
        evaluations,
        feasible_evaluations,
        wall_time: start.elapsed().as_secs_f64(),
        history,
        found_feasible,
    })
}

/// Grid values along one axis: inclusive endpoints, or evenly spaced around
/// the circle for a full azimuth range. A single point sits at the midpoint.
fn axis_values<T: Real>(lo: T, hi: T, n: usize, periodic: bool) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![(lo + hi) * T::lit(0.5)],
        _ if periodic => (0..n)
            .map(|k| lo + T::two_pi() * T::lit(k as f64) / T::lit(n as f64))
            .collect(),
        _ => (0..n)
            .map(|k| lo + (hi - lo) * T::lit(k as f64) / T::lit((n - 1) as f64))
            .collect(),
    }
}

/// Cartesian grid in lexicographic `(rho, psi, phi, azimuth, elevation)` order.
pub fn grid_points<T: Real>(bounds: &SearchBounds<T>, resolution: [usize; 5]) -> Vec<[T; 5]> {
    let axes = bounds.axes();
    let values: Vec<Vec<T>> = (0..5)
        .map(|i| axis_values(axes[i][0], axes[i][1], resolution[i], i == 3 && bounds.azimuth_is_full_circle()))
        .collect();
    let mut points = Vec::with_capacity(resolution.iter().product());
    for &r in &values[0] {
        for &s in &values[1] {
            for &p in &values[2] {
                for &a in &values[3] {
                    for &e in &values[4] {
                        points.push([r, s, p, a, e]);
                    }
                }
            }
        }
    }
    points
}

/// Exhaustive grid search. Ties go to the lexicographically smallest point.
pub fn brute_force<T, R, E, F>(
    objective: F,
    bounds: &SearchBounds<T>,
    resolution: [usize; 5],
) -> Result<SearchReport<T, R>, SearchError<E>>
where
    T: Real,
    R: Scored<T> + Clone + Send,
    E: Send,
    F: Fn(&SphericalOffset<T>) -> Result<R, E> + Sync,
{
    if resolution.contains(&0) {
        return Err(SearchError::InvalidParameters("every grid size must be at least 1".into()));
    }
    let start = Instant::now();
    let points = grid_points(bounds, resolution);
    let mut scores = eval_batch(&objective, &points)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.cost() < scores[best].cost() {
            best = i;
        }
    }
    let feasible_evaluations = scores.iter().filter(|s| s.is_feasible()).count();
    let evaluations = scores.len();
    let best_cost = scores[best].cost();
    let found_feasible = scores[best].is_feasible();
    Ok(SearchReport {
        best_point: SphericalOffset::from_array(points[best]),
        best: scores.swap_remove(best),
        evaluations,
        feasible_evaluations,
        wall_time: start.elapsed().as_secs_f64(),
        history: vec![(0, best_cost)],
        found_feasible,
    })
}

/// Samples uniformly until a feasible pose turns up; cost plays no role in
/// the choice. `evaluate` runs once on the returned pose for reporting.
pub fn random_view<T, R, E, P, F>(
    feasibility: P,
    evaluate: F,
    bounds: &SearchBounds<T>,
    seed: u64,
    max_attempts: usize,
) -> Result<SearchReport<T, R>, SearchError<E>>
where
    T: Real,
    R: Scored<T>,
    P: Fn(&SphericalOffset<T>) -> Result<bool, E>,
    F: Fn(&SphericalOffset<T>) -> Result<R, E>,
{
    if max_attempts == 0 {
        return Err(SearchError::InvalidParameters("max_attempts must be at least 1".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = SphericalOffset::from_array(bounds.sample(&mut rng));
    let mut attempts = 1;
    let mut found = feasibility(&last).map_err(SearchError::Objective)?;
    while !found && attempts < max_attempts {
        last = SphericalOffset::from_array(bounds.sample(&mut rng));
        attempts += 1;
        found = feasibility(&last).map_err(SearchError::Objective)?;
    }
    finish_heuristic(evaluate, last, attempts, found, start)
}

fn finish_heuristic<T, R, E, F>(
    evaluate: F,
    point: SphericalOffset<T>,
    attempts: usize,
    found: bool,
    start: Instant,
) -> Result<SearchReport<T, R>, SearchError<E>>
where
    T: Real,
    R: Scored<T>,
    F: Fn(&SphericalOffset<T>) -> Result<R, E>,
{
    let best = evaluate(&point).map_err(SearchError::Objective)?;
    let cost = best.cost();
    Ok(SearchReport {
        best,
        best_point: point,
        evaluations: attempts,
        feasible_evaluations: usize::from(found),
        wall_time: start.elapsed().as_secs_f64(),
        history: vec![(0, cost)],
        found_feasible: found,
    })
}

/// Number of azimuths the center-view heuristic tries.
pub const CENTER_VIEW_AZIMUTHS: usize = 16;

/// Elevations tried by the center-view heuristic, in scan order.
pub fn center_view_elevations<T: Real>(bounds: &SearchBounds<T>) -> [T; 3] {
    let [lo, hi] = bounds.elevation;
    let mid = (lo + hi) * T::lit(0.5);
    [mid, hi, lo]
}

/// Keeps the rover on the boresight (`psi = phi = 0`) and scans azimuths
/// from a seeded offset at each elevation, first at mid range, then at the
/// near and far limits. Returns the first feasible pose; cost is never used.
pub fn center_view<T, R, E, P, F>(
    feasibility: P,
    evaluate: F,
    bounds: &SearchBounds<T>,
    seed: u64,
) -> Result<SearchReport<T, R>, SearchError<E>>
where
    T: Real,
    R: Scored<T>,
    P: Fn(&SphericalOffset<T>) -> Result<bool, E>,
    F: Fn(&SphericalOffset<T>) -> Result<R, E>,
{
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = rng.random();
    let [a_lo, a_hi] = bounds.azimuth;
    let full = bounds.azimuth_is_full_circle();
    let azimuths: Vec<T> = (0..CENTER_VIEW_AZIMUTHS)
        .map(|k| {
            let frac = (phase + k as f64 / CENTER_VIEW_AZIMUTHS as f64).fract();
            if full {
                a_lo + T::two_pi() * T::lit(frac)
            } else {
                a_lo + (a_hi - a_lo) * T::lit(frac)
            }
        })
        .collect();
    let elevations = center_view_elevations(bounds);
    let [r_lo, r_hi] = bounds.rho;
    let ranges = [(r_lo + r_hi) * T::lit(0.5), r_lo, r_hi];

    let mut attempts = 0;
    let mut last = None;
    for &rho in &ranges {
        for &azimuth in &azimuths {
            for &elevation in &elevations {
                let cand = SphericalOffset {
                    rho,
                    psi: T::zero(),
                    phi: T::zero(),
                    azimuth,
                    elevation,
                };
                attempts += 1;
                last = Some(cand);
                if feasibility(&cand).map_err(SearchError::Objective)? {
                    return finish_heuristic(evaluate, cand, attempts, true, start);
                }
            }
        }
    }
    finish_heuristic(evaluate, last.expect("non-empty scan"), attempts, false, start)
}
