//! Service area, positions, the critical zone, and the two mobility models.
//!
//! Coordinates are metres. The service area is the axis-aligned rectangle
//! `[0, width] x [0, height]` at ground level; base stations sit at a common
//! mast height and UAVs fly at a common (per-scenario) altitude. Mobility is
//! two-dimensional at constant altitude: either a straight deterministic path
//! sampled at integer slots, or a Gauss-Markov random walk with reflecting
//! boundaries.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in 3D space (metres).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Position { x, y, z }
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Service area: rectangle dimensions, base-station sites, and the two flight
/// heights. Base-station positions carry `z == bs_height`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaConfig {
    /// Extent along x (metres).
    pub width: f64,
    /// Extent along y (metres).
    pub height: f64,
    /// Base-station mast positions, one per station, `z == bs_height`.
    pub bs_positions: Vec<Position>,
    /// Common mast height (metres).
    pub bs_height: f64,
    /// Common UAV altitude (metres).
    pub uav_height: f64,
}

impl AreaConfig {
    /// Builds an area from 2D base-station sites, placing each at `bs_height`.
    pub fn new(
        width: f64,
        height: f64,
        sites: &[(f64, f64)],
        bs_height: f64,
        uav_height: f64,
    ) -> Self {
        AreaConfig {
            width,
            height,
            bs_positions: sites
                .iter()
                .map(|&(x, y)| Position::new(x, y, bs_height))
                .collect(),
            bs_height,
            uav_height,
        }
    }

    /// Number of base stations.
    pub fn num_bs(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width.is_finite() && self.width > 0.0)
            || !(self.height.is_finite() && self.height > 0.0)
        {
            return Err(Error::Validation(format!(
                "area dimensions must be positive and finite, got {} x {}",
                self.width, self.height
            )));
        }
        if self.bs_positions.is_empty() {
            return Err(Error::Validation("at least one base station required".into()));
        }
        if !(self.bs_height.is_finite() && self.bs_height >= 0.0) {
            return Err(Error::Validation(format!(
                "bs_height must be non-negative, got {}",
                self.bs_height
            )));
        }
        if !(self.uav_height.is_finite() && self.uav_height > 0.0) {
            return Err(Error::Validation(format!(
                "uav_height must be positive, got {}",
                self.uav_height
            )));
        }
        for (k, p) in self.bs_positions.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::Validation(format!("bs {k} has non-finite position")));
            }
            if p.z != self.bs_height {
                return Err(Error::Validation(format!(
                    "bs {k} height {} differs from bs_height {}",
                    p.z, self.bs_height
                )));
            }
            if p.x < 0.0 || p.x > self.width || p.y < 0.0 || p.y > self.height {
                return Err(Error::Validation(format!(
                    "bs {k} at ({}, {}) lies outside the area",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }

    /// True when `(x, y)` lies in the closed service rectangle.
    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && x <= self.width && y >= 0.0 && y <= self.height
    }
}

/// Axis-aligned rectangle with a tighter reliability requirement. Membership
/// uses the closed rectangle: boundary points count as inside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalZone {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl CriticalZone {
    pub fn validate(&self) -> Result<()> {
        let ok = self.x_min.is_finite()
            && self.x_max.is_finite()
            && self.y_min.is_finite()
            && self.y_max.is_finite()
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "critical zone bounds invalid: x [{}, {}], y [{}, {}]",
                self.x_min, self.x_max, self.y_min, self.y_max
            )))
        }
    }

    /// Closed-rectangle membership test on the horizontal coordinates.
    pub fn contains(&self, p: &Position) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

/// Straight-line flight sampled at integer time slots `0..=n_slots`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterministicPath {
    pub start: Position,
    pub end: Position,
    /// Number of slots taken to traverse the full path.
    pub n_slots: u32,
}

impl DeterministicPath {
    pub fn validate(&self) -> Result<()> {
        if self.n_slots == 0 {
            return Err(Error::Validation("path must span at least one slot".into()));
        }
        if !self.start.is_finite() || !self.end.is_finite() {
            return Err(Error::Validation("path endpoints must be finite".into()));
        }
        if self.start.z != self.end.z {
            return Err(Error::Validation(format!(
                "path altitude must be constant, got {} -> {}",
                self.start.z, self.end.z
            )));
        }
        Ok(())
    }

    /// Position at slot `t`. Endpoints are reproduced exactly; interior slots
    /// interpolate affinely, so increments between consecutive slots are equal.
    ///
    /// Returns a range error for `t > n_slots`.
    pub fn position_at(&self, t: u32) -> Result<Position> {
        if t > self.n_slots {
            return Err(Error::Range(format!(
                "slot {t} past end of path ({} slots)",
                self.n_slots
            )));
        }
        let f = f64::from(t) / f64::from(self.n_slots);
        let g = 1.0 - f;
        Ok(Position::new(
            g * self.start.x + f * self.end.x,
            g * self.start.y + f * self.end.y,
            g * self.start.z + f * self.end.z,
        ))
    }

    /// Per-slot velocity (constant along the path).
    pub fn slot_velocity(&self) -> (f64, f64) {
        let n = f64::from(self.n_slots);
        ((self.end.x - self.start.x) / n, (self.end.y - self.start.y) / n)
    }
}

/// Position plus horizontal velocity of one UAV (altitude is fixed).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobilityState {
    pub position: Position,
    /// Velocity along x (metres per slot).
    pub vx: f64,
    /// Velocity along y (metres per slot).
    pub vy: f64,
}

impl MobilityState {
    pub fn speed(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy).sqrt()
    }
}

/// Gauss-Markov mobility parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussMarkovParams {
    /// Mean velocity along x (metres per slot).
    pub mean_vx: f64,
    /// Mean velocity along y (metres per slot).
    pub mean_vy: f64,
    /// Memory parameter in `[0, 1]`: 1 keeps the previous velocity, 0 draws a
    /// fresh one around the mean.
    pub memory: f64,
    /// Velocity noise scale (metres per slot).
    pub noise: f64,
    /// Hard cap on speed (metres per slot).
    pub v_max: f64,
}

impl Default for GaussMarkovParams {
    fn default() -> Self {
        GaussMarkovParams {
            mean_vx: 0.0,
            mean_vy: 0.0,
            memory: 0.9,
            noise: 3.0,
            v_max: 10.0,
        }
    }
}

impl GaussMarkovParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.memory >= 0.0 && self.memory <= 1.0) {
            return Err(Error::Validation(format!(
                "memory must lie in [0, 1], got {}",
                self.memory
            )));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Validation(format!(
                "noise must be non-negative, got {}",
                self.noise
            )));
        }
        if !(self.v_max.is_finite() && self.v_max > 0.0) {
            return Err(Error::Validation(format!(
                "v_max must be positive, got {}",
                self.v_max
            )));
        }
        if !self.mean_vx.is_finite() || !self.mean_vy.is_finite() {
            return Err(Error::Validation("mean velocity must be finite".into()));
        }
        Ok(())
    }
}

/// One Gauss-Markov step: update the velocity with memory `rho` around the
/// mean, clamp its magnitude to `v_max`, advance the position, and reflect off
/// the area boundary (negating the offending velocity component).
///
/// The Gaussian perturbations are drawn x first, then y.
pub fn gauss_markov_step<R: Rng + ?Sized>(
    state: &MobilityState,
    params: &GaussMarkovParams,
    area: &AreaConfig,
    rng: &mut R,
) -> MobilityState {
    let rho = params.memory;
    let diffusion = params.noise * (1.0 - rho * rho).sqrt();
    let wx: f64 = rng.sample(StandardNormal);
    let wy: f64 = rng.sample(StandardNormal);

    let mut vx = rho * state.vx + (1.0 - rho) * params.mean_vx + diffusion * wx;
    let mut vy = rho * state.vy + (1.0 - rho) * params.mean_vy + diffusion * wy;

    let speed = (vx * vx + vy * vy).sqrt();
    if speed > params.v_max {
        let scale = params.v_max / speed;
        vx *= scale;
        vy *= scale;
    }

    let mut x = state.position.x + vx;
    let mut y = state.position.y + vy;
    // Reflect until the point is back inside; each pass strictly shrinks the
    // overshoot, and with speeds capped well below the area size a single pass
    // is the common case.
    while x < 0.0 || x > area.width {
        if x < 0.0 {
            x = -x;
        } else {
            x = 2.0 * area.width - x;
        }
        vx = -vx;
    }
    while y < 0.0 || y > area.height {
        if y < 0.0 {
            y = -y;
        } else {
            y = 2.0 * area.height - y;
        }
        vy = -vy;
    }

    MobilityState {
        position: Position::new(x, y, state.position.z),
        vx,
        vy,
    }
}

/// 3D distance and elevation angle of a UAV-base-station link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkGeometry {
    /// Euclidean distance (metres).
    pub distance: f64,
    /// Elevation of the UAV as seen from the base station, in degrees;
    /// 90 for a UAV directly overhead.
    pub elevation_deg: f64,
}

/// Computes the link geometry between a UAV and a base station.
///
/// Returns a degenerate-geometry error when the two points coincide, since the
/// elevation angle is undefined there.
pub fn link_geometry(uav: &Position, bs: &Position) -> Result<LinkGeometry> {
    let dx = uav.x - bs.x;
    let dy = uav.y - bs.y;
    let dz = uav.z - bs.z;
    if dx == 0.0 && dy == 0.0 && dz == 0.0 {
        return Err(Error::DegenerateGeometry(
            "uav and base station positions coincide".into(),
        ));
    }
    let horizontal = (dx * dx + dy * dy).sqrt();
    Ok(LinkGeometry {
        distance: (horizontal * horizontal + dz * dz).sqrt(),
        elevation_deg: dz.atan2(horizontal).to_degrees(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn test_area() -> AreaConfig {
        AreaConfig::new(1500.0, 1500.0, &[(50.0, 150.0)], 25.0, 100.0)
    }

    fn diagonal_path() -> DeterministicPath {
        DeterministicPath {
            start: Position::new(0.0, 0.0, 100.0),
            end: Position::new(1500.0, 1500.0, 100.0),
            n_slots: 1500,
        }
    }

    #[test]
    fn path_hits_endpoints_exactly() {
        let p = diagonal_path();
        assert_eq!(p.position_at(0).unwrap(), Position::new(0.0, 0.0, 100.0));
        assert_eq!(
            p.position_at(1500).unwrap(),
            Position::new(1500.0, 1500.0, 100.0)
        );
        assert_eq!(
            p.position_at(750).unwrap(),
            Position::new(750.0, 750.0, 100.0)
        );
    }

    #[test]
    fn path_rejects_slot_past_end() {
        let p = diagonal_path();
        assert!(matches!(p.position_at(1501), Err(Error::Range(_))));
    }

    #[test]
    fn path_increments_are_equal() {
        let p = DeterministicPath {
            start: Position::new(0.1, 0.3, 80.0),
            end: Position::new(733.7, 1499.9, 80.0),
            n_slots: 977,
        };
        let step0 = p.position_at(1).unwrap();
        let first = (step0.x - 0.1, step0.y - 0.3);
        for t in 1..977 {
            let a = p.position_at(t).unwrap();
            let b = p.position_at(t + 1).unwrap();
            assert!((b.x - a.x - first.0).abs() < 1e-9);
            assert!((b.y - a.y - first.1).abs() < 1e-9);
        }
    }

    #[test]
    fn path_requires_constant_altitude() {
        let p = DeterministicPath {
            start: Position::new(0.0, 0.0, 100.0),
            end: Position::new(10.0, 0.0, 120.0),
            n_slots: 10,
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn zone_membership_is_closed() {
        let zone = CriticalZone {
            x_min: 750.0,
            x_max: 1000.0,
            y_min: 750.0,
            y_max: 1000.0,
        };
        assert!(zone.contains(&Position::new(750.0, 750.0, 100.0)));
        assert!(zone.contains(&Position::new(1000.0, 1000.0, 100.0)));
        assert!(zone.contains(&Position::new(800.0, 999.0, 100.0)));
        assert!(!zone.contains(&Position::new(749.99, 800.0, 100.0)));
        assert!(!zone.contains(&Position::new(800.0, 1000.01, 100.0)));
    }

    #[test]
    fn gauss_markov_full_memory_keeps_velocity() {
        let params = GaussMarkovParams {
            memory: 1.0,
            noise: 0.0,
            v_max: 10.0,
            mean_vx: 5.0,
            mean_vy: -5.0,
        };
        let state = MobilityState {
            position: Position::new(700.0, 700.0, 100.0),
            vx: 2.0,
            vy: 1.0,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let next = gauss_markov_step(&state, &params, &test_area(), &mut rng);
        assert_eq!(next.vx, 2.0);
        assert_eq!(next.vy, 1.0);
        assert_eq!(next.position, Position::new(702.0, 701.0, 100.0));
    }

    #[test]
    fn gauss_markov_zero_memory_snaps_to_mean() {
        let params = GaussMarkovParams {
            memory: 0.0,
            noise: 0.0,
            v_max: 10.0,
            mean_vx: 3.0,
            mean_vy: 4.0,
        };
        let state = MobilityState {
            position: Position::new(700.0, 700.0, 100.0),
            vx: -9.0,
            vy: 9.0,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let next = gauss_markov_step(&state, &params, &test_area(), &mut rng);
        assert_eq!(next.vx, 3.0);
        assert_eq!(next.vy, 4.0);
    }

    #[test]
    fn gauss_markov_reflects_and_negates_velocity() {
        let params = GaussMarkovParams {
            memory: 1.0,
            noise: 0.0,
            v_max: 10.0,
            mean_vx: 0.0,
            mean_vy: 0.0,
        };
        let state = MobilityState {
            position: Position::new(1.0, 5.0, 100.0),
            vx: -3.0,
            vy: 0.0,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let next = gauss_markov_step(&state, &params, &test_area(), &mut rng);
        // Raw step lands at x = -2; the boundary reflects it to +2 and flips vx.
        assert_eq!(next.position.x, 2.0);
        assert_eq!(next.vx, 3.0);
        assert_eq!(next.position.y, 5.0);
    }

    #[test]
    fn gauss_markov_caps_speed() {
        let params = GaussMarkovParams {
            memory: 1.0,
            noise: 0.0,
            v_max: 5.0,
            mean_vx: 0.0,
            mean_vy: 0.0,
        };
        let state = MobilityState {
            position: Position::new(700.0, 700.0, 100.0),
            vx: 30.0,
            vy: 40.0,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let next = gauss_markov_step(&state, &params, &test_area(), &mut rng);
        assert!((next.speed() - 5.0).abs() < 1e-12);
        // Direction preserved: 3-4-5 triangle scaled to speed 5.
        assert!((next.vx - 3.0).abs() < 1e-12);
        assert!((next.vy - 4.0).abs() < 1e-12);
    }

    #[test]
    fn link_geometry_overhead_is_vertical() {
        let g = link_geometry(
            &Position::new(0.0, 0.0, 100.0),
            &Position::new(0.0, 0.0, 0.0),
        )
        .unwrap();
        assert_eq!(g.distance, 100.0);
        assert_eq!(g.elevation_deg, 90.0);
    }

    #[test]
    fn link_geometry_diagonal_cases() {
        // 45 degrees: equal horizontal and vertical offsets.
        let g = link_geometry(
            &Position::new(100.0, 0.0, 100.0),
            &Position::new(0.0, 0.0, 0.0),
        )
        .unwrap();
        assert!((g.elevation_deg - 45.0).abs() < 1e-12);
        assert!((g.distance - 100.0 * 2f64.sqrt()).abs() < 1e-9);

        // 3-4-5 triangle in the horizontal plane: zero elevation.
        let g = link_geometry(
            &Position::new(300.0, 400.0, 25.0),
            &Position::new(0.0, 0.0, 25.0),
        )
        .unwrap();
        assert_eq!(g.distance, 500.0);
        assert_eq!(g.elevation_deg, 0.0);
    }

    #[test]
    fn link_geometry_rejects_coincident_points() {
        let p = Position::new(1.0, 2.0, 3.0);
        assert!(matches!(
            link_geometry(&p, &p),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn area_validation_catches_out_of_bounds_bs() {
        let mut area = test_area();
        assert!(area.validate().is_ok());
        area.bs_positions.push(Position::new(-1.0, 0.0, 25.0));
        assert!(area.validate().is_err());
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_triangular(
            ax in -1e3..1e3f64, ay in -1e3..1e3f64, az in -1e3..1e3f64,
            bx in -1e3..1e3f64, by in -1e3..1e3f64, bz in -1e3..1e3f64,
            cx in -1e3..1e3f64, cy in -1e3..1e3f64, cz in -1e3..1e3f64,
        ) {
            let a = Position::new(ax, ay, az);
            let b = Position::new(bx, by, bz);
            let c = Position::new(cx, cy, cz);
            prop_assert!((a.distance(&b) - b.distance(&a)).abs() < 1e-9);
            prop_assert!(a.distance(&c) <= a.distance(&b) + b.distance(&c) + 1e-9);
        }

        #[test]
        fn gauss_markov_stays_in_area(seed in 0u64..1000) {
            let area = test_area();
            let params = GaussMarkovParams::default();
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut state = MobilityState {
                position: Position::new(750.0, 750.0, 100.0),
                vx: 0.0,
                vy: 0.0,
            };
            for _ in 0..200 {
                state = gauss_markov_step(&state, &params, &area, &mut rng);
                prop_assert!(area.contains_xy(state.position.x, state.position.y));
                prop_assert!(state.speed() <= params.v_max + 1e-12);
            }
        }

        #[test]
        fn path_positions_stay_on_segment(t in 0u32..=1500) {
            let p = DeterministicPath {
                start: Position::new(0.0, 0.0, 100.0),
                end: Position::new(1500.0, 1500.0, 100.0),
                n_slots: 1500,
            };
            let pos = p.position_at(t).unwrap();
            prop_assert!((pos.x - pos.y).abs() < 1e-9); // diagonal path
            prop_assert!(pos.x >= 0.0 && pos.x <= 1500.0);
        }
    }
}
