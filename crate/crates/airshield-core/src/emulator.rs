//! Synthetic wireless-propagation telemetry.
//!
//! Stands in for a ray-traced scenario with a parametric model: log-distance
//! pathloss with log-normal shadowing, a distance-dependent (or fixed) NLoS
//! probability, and a total-blockage state. Every record's randomness comes
//! from a counter-based stream keyed by `(rng_seed, record_index)`, so the
//! parallel and sequential generators agree bit for bit.
//!
//! Angle convention, used everywhere: azimuth measured from the +x axis
//! counterclockwise in [-180, 180); zenith from the +z axis in [0, 180].

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Reference distance for the log-distance model, meters.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Error)]
pub enum EmulatorError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("scene config produces zero grid points")]
    EmptyScene,
    #[error("pathloss undefined at zero distance")]
    ZeroDistance,
    #[error("base station and user positions coincide")]
    CoincidentPositions,
}

/// Visibility state between base station and user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LosState {
    /// Total blockage: no usable path. Emitted with sentinel pathloss/power.
    Blocked,
    /// Non-line-of-sight: scattered path with excess delay.
    NonLineOfSight,
    /// Direct line of sight.
    LineOfSight,
}

impl LosState {
    pub fn as_f64(self) -> f64 {
        match self {
            LosState::Blocked => -1.0,
            LosState::NonLineOfSight => 0.0,
            LosState::LineOfSight => 1.0,
        }
    }

    pub fn from_f64(v: f64) -> Option<Self> {
        if v == -1.0 {
            Some(LosState::Blocked)
        } else if v == 0.0 {
            Some(LosState::NonLineOfSight)
        } else if v == 1.0 {
            Some(LosState::LineOfSight)
        } else {
            None
        }
    }
}

/// Probability that a user at distance `d` is out of line of sight.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum NlosProbabilityModel {
    Fixed { p: f64 },
    DistanceDependent { d_cutoff_m: f64 },
}

impl NlosProbabilityModel {
    pub fn probability(&self, distance: f64) -> f64 {
        match self {
            NlosProbabilityModel::Fixed { p } => *p,
            NlosProbabilityModel::DistanceDependent { d_cutoff_m } => {
                (distance / d_cutoff_m).min(1.0)
            }
        }
    }
}

/// One rectangular user grid. Points at `min + i * spacing` along each axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub spacing: f64,
}

impl GridRect {
    fn points_along(min: f64, max: f64, spacing: f64) -> usize {
        ((max - min) / spacing + 1e-9).floor() as usize + 1
    }

    pub fn n_x(&self) -> usize {
        Self::points_along(self.x_min, self.x_max, self.spacing)
    }

    pub fn n_y(&self) -> usize {
        Self::points_along(self.y_min, self.y_max, self.spacing)
    }

    pub fn n_points(&self) -> usize {
        self.n_x() * self.n_y()
    }
}

/// Scene description. Multiple user grids model disjoint user clusters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Base station position in meters; the height is the z component.
    pub bs_position: [f64; 3],
    /// User antenna height in meters.
    pub user_height: f64,
    /// User placement grids.
    pub user_grids: Vec<GridRect>,
    /// Carrier frequency in Hz.
    pub carrier_frequency: f64,
    pub pathloss_exponent_los: f64,
    pub pathloss_exponent_nlos: f64,
    /// Log-normal shadowing standard deviation, dB.
    pub shadowing_sigma_db: f64,
    pub nlos_probability_model: NlosProbabilityModel,
    /// Upper bound of the uniform NLoS excess delay, seconds. Draws are in
    /// (0, max], so NLoS arrival is strictly later than the direct path.
    pub nlos_excess_delay_max: f64,
    /// Probability that a grid point is fully blocked (los = -1).
    #[serde(default = "default_blockage_probability")]
    pub blockage_probability: f64,
    /// Sentinel pathloss assigned to blocked records, dB.
    #[serde(default = "default_blockage_pathloss_db")]
    pub blockage_pathloss_db: f64,
    /// Transmit power, dBm.
    #[serde(default)]
    pub tx_power_dbm: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_blockage_probability() -> f64 {
    0.02
}

fn default_blockage_pathloss_db() -> f64 {
    250.0
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), EmulatorError> {
        let bad = |msg: &str| Err(EmulatorError::InvalidConfig(msg.to_string()));
        let finite = self.bs_position.iter().all(|v| v.is_finite())
            && self.user_height.is_finite()
            && self.carrier_frequency.is_finite()
            && self.pathloss_exponent_los.is_finite()
            && self.pathloss_exponent_nlos.is_finite()
            && self.shadowing_sigma_db.is_finite()
            && self.nlos_excess_delay_max.is_finite()
            && self.blockage_probability.is_finite()
            && self.blockage_pathloss_db.is_finite()
            && self.tx_power_dbm.is_finite();
        if !finite {
            return bad("non-finite numeric value");
        }
        if self.user_grids.is_empty() {
            return Err(EmulatorError::EmptyScene);
        }
        for g in &self.user_grids {
            if ![g.x_min, g.x_max, g.y_min, g.y_max, g.spacing]
                .iter()
                .all(|v| v.is_finite())
            {
                return bad("non-finite grid value");
            }
            if g.spacing <= 0.0 {
                return bad("grid spacing must be > 0");
            }
            if g.x_max <= g.x_min || g.y_max <= g.y_min {
                return bad("grid extent must satisfy max > min");
            }
        }
        if self.carrier_frequency <= 0.0 {
            return bad("carrier frequency must be > 0");
        }
        if self.pathloss_exponent_los < 1.0 || self.pathloss_exponent_nlos < 1.0 {
            return bad("pathloss exponents must be >= 1");
        }
        if self.shadowing_sigma_db < 0.0 {
            return bad("shadowing sigma must be >= 0");
        }
        if let NlosProbabilityModel::Fixed { p } = self.nlos_probability_model {
            if !(0.0..=1.0).contains(&p) {
                return bad("fixed NLoS probability must be in [0, 1]");
            }
        }
        if let NlosProbabilityModel::DistanceDependent { d_cutoff_m } =
            self.nlos_probability_model
        {
            if d_cutoff_m <= 0.0 {
                return bad("NLoS distance cutoff must be > 0");
            }
        }
        if self.nlos_excess_delay_max <= 0.0 {
            return bad("NLoS excess delay bound must be > 0");
        }
        if !(0.0..=1.0).contains(&self.blockage_probability) {
            return bad("blockage probability must be in [0, 1]");
        }
        Ok(())
    }

    /// Free-space intercept PL(d0) = 20 log10(4 pi d0 f / c), dB.
    pub fn reference_pathloss_db(&self) -> f64 {
        20.0 * (4.0 * std::f64::consts::PI * REFERENCE_DISTANCE_M * self.carrier_frequency
            / SPEED_OF_LIGHT)
            .log10()
    }

    pub fn total_points(&self) -> usize {
        self.user_grids.iter().map(GridRect::n_points).sum()
    }
}

/// One emulated user's propagation observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRecord {
    pub x_coord: f64,
    pub y_coord: f64,
    pub distance: f64,
    /// Combined path loss, dB (dBm-referenced).
    pub pathloss: f64,
    pub doa_phi: f64,
    pub doa_theta: f64,
    pub dod_phi: f64,
    pub dod_theta: f64,
    /// Phase of the signal path, degrees in [0, 360).
    pub phase: f64,
    /// Received signal power, watts.
    pub power: f64,
    /// Time of arrival, seconds.
    pub time_of_arrival: f64,
    pub los: LosState,
}

impl ChannelRecord {
    /// Canonical 12-value row in [`crate::features::RECORD_COLUMNS`] order.
    pub fn to_row(&self) -> [f64; 12] {
        [
            self.x_coord,
            self.y_coord,
            self.distance,
            self.pathloss,
            self.doa_phi,
            self.doa_theta,
            self.dod_phi,
            self.dod_theta,
            self.phase,
            self.power,
            self.time_of_arrival,
            self.los.as_f64(),
        ]
    }
}

/// Ray geometry between the base station and one user position.
#[derive(Debug, Clone, Copy)]
pub struct RayGeometry {
    pub doa_phi: f64,
    pub doa_theta: f64,
    pub dod_phi: f64,
    pub dod_theta: f64,
    pub distance: f64,
}

/// Wraps an angle in degrees into [-180, 180).
pub fn wrap_azimuth_deg(angle: f64) -> f64 {
    let w = (angle + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid of a value just below zero can round up to 360 exactly.
    if w >= 180.0 {
        -180.0
    } else {
        w
    }
}

/// Azimuth/zenith of the departure ray (BS toward user) and the arrival ray
/// (user toward BS), plus the separation distance.
pub fn compute_geometry(
    bs_position: [f64; 3],
    user_position: [f64; 3],
) -> Result<RayGeometry, EmulatorError> {
    let dx = user_position[0] - bs_position[0];
    let dy = user_position[1] - bs_position[1];
    let dz = user_position[2] - bs_position[2];
    let distance = (dx * dx + dy * dy + dz * dz).sqrt();
    if distance == 0.0 {
        return Err(EmulatorError::CoincidentPositions);
    }
    let dod_phi = wrap_azimuth_deg(dy.atan2(dx).to_degrees());
    let dod_theta = (dz / distance).clamp(-1.0, 1.0).acos().to_degrees();
    let doa_phi = wrap_azimuth_deg((-dy).atan2(-dx).to_degrees());
    let doa_theta = (-dz / distance).clamp(-1.0, 1.0).acos().to_degrees();
    Ok(RayGeometry {
        doa_phi,
        doa_theta,
        dod_phi,
        dod_theta,
        distance,
    })
}

/// Log-distance pathloss: PL(d) = PL(d0) + 10 n log10(d/d0) + shadowing.
/// Blocked paths get the configured sentinel ceiling instead.
pub fn compute_pathloss(
    distance: f64,
    los: LosState,
    config: &SceneConfig,
    shadowing_draw_db: f64,
) -> Result<f64, EmulatorError> {
    if distance <= 0.0 {
        return Err(EmulatorError::ZeroDistance);
    }
    match los {
        LosState::Blocked => Ok(config.blockage_pathloss_db),
        _ => {
            let n = match los {
                LosState::LineOfSight => config.pathloss_exponent_los,
                _ => config.pathloss_exponent_nlos,
            };
            Ok(config.reference_pathloss_db()
                + 10.0 * n * (distance / REFERENCE_DISTANCE_M).log10()
                + shadowing_draw_db)
        }
    }
}

/// Time of arrival, carrier phase at arrival and received power.
///
/// ToA is d/c for LoS, d/c plus a uniform excess in (0, max] for NLoS, and a
/// 10 d/c sentinel for blocked paths. Phase is (360 f ToA) mod 360. Power is
/// 10^((P_tx_dBm - PL)/10) / 1000 watts, forced to exactly zero when blocked.
pub fn compute_arrival<R: Rng>(
    distance: f64,
    los: LosState,
    pathloss_db: f64,
    config: &SceneConfig,
    rng: &mut R,
) -> Result<(f64, f64, f64), EmulatorError> {
    if distance <= 0.0 {
        return Err(EmulatorError::ZeroDistance);
    }
    let direct = distance / SPEED_OF_LIGHT;
    let toa = match los {
        LosState::LineOfSight => direct,
        LosState::NonLineOfSight => {
            let u: f64 = rng.random();
            direct + config.nlos_excess_delay_max * (1.0 - u)
        }
        LosState::Blocked => direct * 10.0,
    };
    let phase = (360.0 * config.carrier_frequency * toa) % 360.0;
    let power = match los {
        LosState::Blocked => 0.0,
        _ => 10f64.powf((config.tx_power_dbm - pathloss_db) / 10.0) / 1000.0,
    };
    Ok((toa, phase, power))
}

fn grid_positions(config: &SceneConfig) -> Vec<(f64, f64)> {
    let mut points = Vec::with_capacity(config.total_points());
    for grid in &config.user_grids {
        let (nx, ny) = (grid.n_x(), grid.n_y());
        for iy in 0..ny {
            for ix in 0..nx {
                points.push((
                    grid.x_min + ix as f64 * grid.spacing,
                    grid.y_min + iy as f64 * grid.spacing,
                ));
            }
        }
    }
    points
}

fn record_at(config: &SceneConfig, index: u64, x: f64, y: f64) -> Result<ChannelRecord, EmulatorError> {
    let geo = compute_geometry(config.bs_position, [x, y, config.user_height])?;
    let mut rng = stream_rng(config.rng_seed, index);

    let u_block: f64 = rng.random();
    let los = if u_block < config.blockage_probability {
        LosState::Blocked
    } else {
        let p_nlos = config.nlos_probability_model.probability(geo.distance);
        let u_nlos: f64 = rng.random();
        if u_nlos < p_nlos {
            LosState::NonLineOfSight
        } else {
            LosState::LineOfSight
        }
    };

    let shadowing = if config.shadowing_sigma_db > 0.0 && los != LosState::Blocked {
        Normal::new(0.0, config.shadowing_sigma_db)
            .expect("validated sigma")
            .sample(&mut rng)
    } else {
        0.0
    };
    let pathloss = compute_pathloss(geo.distance, los, config, shadowing)?;

    // NLoS rays scatter: angles deviate from the direct-path geometry.
    let (doa_phi, doa_theta, dod_phi, dod_theta) = if los == LosState::NonLineOfSight {
        let az = Normal::new(0.0, 25.0).expect("const sigma");
        let zen = Normal::new(0.0, 8.0).expect("const sigma");
        (
            wrap_azimuth_deg(geo.doa_phi + az.sample(&mut rng)),
            reflect_zenith_deg(geo.doa_theta + zen.sample(&mut rng)),
            wrap_azimuth_deg(geo.dod_phi + az.sample(&mut rng)),
            reflect_zenith_deg(geo.dod_theta + zen.sample(&mut rng)),
        )
    } else {
        (geo.doa_phi, geo.doa_theta, geo.dod_phi, geo.dod_theta)
    };

    let (toa, phase, power) = compute_arrival(geo.distance, los, pathloss, config, &mut rng)?;

    Ok(ChannelRecord {
        x_coord: x,
        y_coord: y,
        distance: geo.distance,
        pathloss,
        doa_phi,
        doa_theta,
        dod_phi,
        dod_theta,
        phase,
        power,
        time_of_arrival: toa,
        los,
    })
}

fn reflect_zenith_deg(angle: f64) -> f64 {
    let a = angle.rem_euclid(360.0);
    if a > 180.0 {
        360.0 - a
    } else {
        a
    }
}

/// Generates one record per grid point, sequentially.
pub fn generate_scene_seq(config: &SceneConfig) -> Result<Vec<ChannelRecord>, EmulatorError> {
    config.validate()?;
    grid_positions(config)
        .iter()
        .enumerate()
        .map(|(i, (x, y))| record_at(config, i as u64, *x, *y))
        .collect()
}

/// Generates one record per grid point. Runs on rayon when the `parallel`
/// feature is enabled; output is bit-identical to [`generate_scene_seq`].
pub fn generate_scene(config: &SceneConfig) -> Result<Vec<ChannelRecord>, EmulatorError> {
    config.validate()?;
    let points = grid_positions(config);
    #[cfg(feature = "parallel")]
    {
        points
            .par_iter()
            .enumerate()
            .map(|(i, (x, y))| record_at(config, i as u64, *x, *y))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        points
            .iter()
            .enumerate()
            .map(|(i, (x, y))| record_at(config, i as u64, *x, *y))
            .collect()
    }
}

#[cfg(test)]
pub(crate) fn test_scene(seed: u64) -> SceneConfig {
    SceneConfig {
        bs_position: [0.0, 0.0, 15.0],
        user_height: 2.0,
        user_grids: vec![GridRect {
            x_min: 5.0,
            x_max: 14.0,
            y_min: 5.0,
            y_max: 14.0,
            spacing: 1.0,
        }],
        carrier_frequency: 28.0e9,
        pathloss_exponent_los: 2.0,
        pathloss_exponent_nlos: 3.3,
        shadowing_sigma_db: 4.0,
        nlos_probability_model: NlosProbabilityModel::DistanceDependent { d_cutoff_m: 400.0 },
        nlos_excess_delay_max: 3.0e-7,
        blockage_probability: 0.05,
        blockage_pathloss_db: 250.0,
        tx_power_dbm: 0.0,
        rng_seed: seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_record_invariants(r: &ChannelRecord, cfg: &SceneConfig) {
        let dx = r.x_coord - cfg.bs_position[0];
        let dy = r.y_coord - cfg.bs_position[1];
        let dz = cfg.user_height - cfg.bs_position[2];
        let d = (dx * dx + dy * dy + dz * dz).sqrt();
        assert!((r.distance - d).abs() <= 1e-9 * d.max(1.0));
        let direct = r.distance / SPEED_OF_LIGHT;
        match r.los {
            LosState::LineOfSight => assert_eq!(r.time_of_arrival, direct),
            _ => assert!(r.time_of_arrival > direct),
        }
        assert!(r.power >= 0.0);
        assert!((0.0..360.0).contains(&r.phase));
        for theta in [r.doa_theta, r.dod_theta] {
            assert!((0.0..=180.0).contains(&theta));
        }
        for phi in [r.doa_phi, r.dod_phi] {
            assert!((-180.0..180.0).contains(&phi));
        }
        if r.los == LosState::Blocked {
            assert_eq!(r.power, 0.0);
            assert_eq!(r.pathloss, cfg.blockage_pathloss_db);
            assert_eq!(r.time_of_arrival, 10.0 * direct);
        }
    }

    #[test]
    fn ten_by_ten_grid_yields_100_valid_records() {
        let cfg = test_scene(42);
        let records = generate_scene(&cfg).unwrap();
        assert_eq!(records.len(), 100);
        for r in &records {
            assert_record_invariants(r, &cfg);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = test_scene(7);
        let a = generate_scene(&cfg).unwrap();
        let b = generate_scene(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let cfg = test_scene(99);
        let par = generate_scene(&cfg).unwrap();
        let seq = generate_scene_seq(&cfg).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn vertical_geometry() {
        let geo = compute_geometry([0.0, 0.0, 15.0], [0.0, 0.0, 2.0]).unwrap();
        assert!((geo.distance - 13.0).abs() < 1e-12);
        // Arrival ray at the user points straight up toward the BS.
        assert!((geo.doa_theta - 0.0).abs() < 1e-9);
        assert!((geo.dod_theta - 180.0).abs() < 1e-9);
    }

    #[test]
    fn due_east_geometry() {
        let geo = compute_geometry([0.0, 0.0, 15.0], [10.0, 0.0, 15.0]).unwrap();
        assert!((geo.dod_phi - 0.0).abs() < 1e-12);
        assert!((geo.dod_theta - 90.0).abs() < 1e-12);
        assert!((geo.distance - 10.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_positions_rejected() {
        assert!(matches!(
            compute_geometry([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]),
            Err(EmulatorError::CoincidentPositions)
        ));
    }

    #[test]
    fn antipodality_over_random_geometries() {
        let mut rng = crate::rng::seeded_rng(3);
        for _ in 0..1000 {
            let bs = [0.0, 0.0, 15.0];
            let user = [
                rng.random_range(-500.0..500.0),
                rng.random_range(-500.0..500.0),
                2.0,
            ];
            let geo = compute_geometry(bs, user).unwrap();
            let mut dphi = (geo.dod_phi - (geo.doa_phi + 180.0)).rem_euclid(360.0);
            if dphi > 180.0 {
                dphi -= 360.0;
            }
            assert!(dphi.abs() < 1e-9, "dphi = {dphi}");
            assert!((geo.dod_theta - (180.0 - geo.doa_theta)).abs() < 1e-9);
        }
    }

    #[test]
    fn pathloss_reference_identity_and_doubling() {
        let cfg = test_scene(0);
        let pl0 = compute_pathloss(1.0, LosState::LineOfSight, &cfg, 0.0).unwrap();
        assert_eq!(pl0, cfg.reference_pathloss_db());
        let pl_d = compute_pathloss(50.0, LosState::LineOfSight, &cfg, 0.0).unwrap();
        let pl_2d = compute_pathloss(100.0, LosState::LineOfSight, &cfg, 0.0).unwrap();
        assert!((pl_2d - pl_d - 20.0 * 2f64.log10()).abs() < 1e-9);
        assert!((pl_2d - pl_d - 6.0206).abs() < 1e-3);
    }

    #[test]
    fn nlos_pathloss_dominates_los() {
        let cfg = test_scene(0);
        for d in [13.0, 50.0, 200.0, 1000.0] {
            let los = compute_pathloss(d, LosState::LineOfSight, &cfg, 0.0).unwrap();
            let nlos = compute_pathloss(d, LosState::NonLineOfSight, &cfg, 0.0).unwrap();
            assert!(nlos >= los);
        }
    }

    #[test]
    fn pathloss_monotone_in_distance() {
        let cfg = test_scene(0);
        for los in [LosState::LineOfSight, LosState::NonLineOfSight, LosState::Blocked] {
            let mut prev = f64::NEG_INFINITY;
            for i in 1..200 {
                let d = i as f64 * 5.0;
                let pl = compute_pathloss(d, los, &cfg, 0.0).unwrap();
                assert!(pl >= prev);
                prev = pl;
            }
        }
    }

    #[test]
    fn zero_distance_rejected() {
        let cfg = test_scene(0);
        assert!(matches!(
            compute_pathloss(0.0, LosState::LineOfSight, &cfg, 0.0),
            Err(EmulatorError::ZeroDistance)
        ));
    }

    #[test]
    fn arrival_identities() {
        let cfg = test_scene(0);
        let mut rng = crate::rng::seeded_rng(1);
        // d chosen so the direct-path delay is exactly 1 microsecond.
        let (toa, phase, _) =
            compute_arrival(299.792458, LosState::LineOfSight, 100.0, &cfg, &mut rng).unwrap();
        assert_eq!(toa, 299.792458 / SPEED_OF_LIGHT);
        assert!((toa - 1.0e-6).abs() < 1e-18);
        assert!((0.0..360.0).contains(&phase));

        // +10 dB pathloss is exactly a tenth of the power.
        let (_, _, p1) =
            compute_arrival(100.0, LosState::LineOfSight, 90.0, &cfg, &mut rng).unwrap();
        let (_, _, p2) =
            compute_arrival(100.0, LosState::LineOfSight, 100.0, &cfg, &mut rng).unwrap();
        assert!((p1 / p2 - 10.0).abs() < 1e-9);
    }

    #[test]
    fn nlos_excess_delay_bounded() {
        let cfg = test_scene(5);
        for i in 0..500 {
            let mut rng = stream_rng(11, i);
            let (toa, _, _) =
                compute_arrival(100.0, LosState::NonLineOfSight, 100.0, &cfg, &mut rng).unwrap();
            let excess = toa - 100.0 / SPEED_OF_LIGHT;
            assert!(excess > 0.0 && excess <= cfg.nlos_excess_delay_max);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = test_scene(0);
        cfg.user_grids[0].spacing = 0.0;
        assert!(generate_scene(&cfg).is_err());

        let mut cfg = test_scene(0);
        cfg.user_grids.clear();
        assert!(matches!(generate_scene(&cfg), Err(EmulatorError::EmptyScene)));

        let mut cfg = test_scene(0);
        cfg.carrier_frequency = f64::NAN;
        assert!(generate_scene(&cfg).is_err());

        let mut cfg = test_scene(0);
        cfg.nlos_probability_model = NlosProbabilityModel::Fixed { p: 1.5 };
        assert!(generate_scene(&cfg).is_err());
    }

    #[test]
    fn two_cluster_scene_counts_points_per_grid() {
        let mut cfg = test_scene(1);
        cfg.user_grids.push(GridRect {
            x_min: 100.0,
            x_max: 104.0,
            y_min: 5.0,
            y_max: 9.0,
            spacing: 1.0,
        });
        let records = generate_scene(&cfg).unwrap();
        assert_eq!(records.len(), 100 + 25);
        for r in &records {
            assert_record_invariants(r, &cfg);
        }
    }
}
