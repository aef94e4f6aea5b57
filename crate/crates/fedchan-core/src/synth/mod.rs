//! Synthetic per-city link datasets with known parametric ground truth.
//!
//! Stands in for a ray-traced measurement campaign: each link between a
//! UAV and a gNB gets a categorical state (no link / LOS / NLOS) drawn
//! from a closed-form distance model, and — when a link exists — a 20-path
//! parameter matrix whose strongest-path loss follows a dual-slope
//! log-distance law with lognormal shadowing. Because the generating
//! distributions are known, distribution recovery by the generative path
//! models is verifiable.

mod generate;
mod io;
mod scaler;

pub use generate::{
    generate_city, sample_link_state, sample_paths, split_train_test, state_probabilities,
};
pub use io::{read_dataset, write_dataset};
pub use scaler::{fit_scaler, record_features, FeatureScaler, ScaledBatch};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no paths exist for a no-link record")]
    NoLinkHasNoPaths,
    #[error("record with state NoLink is not eligible for path-model features")]
    IneligibleRecord,
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("height set must not be empty")]
    EmptyHeightSet,
    #[error("dataset must not be empty")]
    EmptyDataset,
    #[error("{path} line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("metadata sidecar {path}: {msg}")]
    BadMeta { path: String, msg: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Paths per link in the fixed dataset layout.
pub const NUM_PATHS: usize = 20;
/// Parameters per path: loss dB, delay ns, AoA az/el deg, AoD az/el deg.
pub const PARAMS_PER_PATH: usize = 6;
/// Width of one path matrix: 20 paths x 6 parameters.
pub const PATH_DIM: usize = NUM_PATHS * PARAMS_PER_PATH;
/// Width of the link condition vector.
pub const COND_DIM: usize = 5;
/// Condition plus path matrix, the feature layout the scaler covers.
pub const FEATURE_DIM: usize = COND_DIM + PATH_DIM;
/// Hard ceiling on any recorded path loss; also the padding sentinel.
pub const MAX_PATH_LOSS_DB: f64 = 200.0;
/// Extra attenuation applied to NLOS links on top of the distance law.
pub const NLOS_EXCESS_DB: f64 = 18.0;
/// UAV altitudes used when generating datasets, in meters.
pub const UAV_HEIGHTS_M: [f64; 4] = [30.0, 60.0, 90.0, 120.0];
/// Mast height of a street-level gNB, in meters.
pub const TERRESTRIAL_GNB_HEIGHT_M: f64 = 10.0;
/// Mast height of a rooftop (aerial) gNB, in meters.
pub const AERIAL_GNB_HEIGHT_M: f64 = 25.0;
/// Carrier recorded in dataset metadata; only shapes the intercept.
pub const FREQUENCY_GHZ: f64 = 28.0;
/// Speed of light, m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// Categorical channel state of one link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkState {
    NoLink = 0,
    Los = 1,
    Nlos = 2,
}

impl LinkState {
    pub const ALL: [LinkState; 3] = [LinkState::NoLink, LinkState::Los, LinkState::Nlos];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<LinkState> {
        Some(match code {
            0 => LinkState::NoLink,
            1 => LinkState::Los,
            2 => LinkState::Nlos,
            _ => return None,
        })
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// gNB deployment type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnbType {
    /// Street-level mast serving ground users.
    Terrestrial,
    /// Rooftop mast tilted upward, dedicated to aerial users.
    Aerial,
}

impl GnbType {
    pub fn height_m(self) -> f64 {
        match self {
            GnbType::Terrestrial => TERRESTRIAL_GNB_HEIGHT_M,
            GnbType::Aerial => AERIAL_GNB_HEIGHT_M,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            GnbType::Terrestrial => "terrestrial",
            GnbType::Aerial => "aerial",
        }
    }

    pub fn from_label(label: &str) -> Option<GnbType> {
        match label {
            "terrestrial" => Some(GnbType::Terrestrial),
            "aerial" => Some(GnbType::Aerial),
            _ => None,
        }
    }
}

/// Relative UAV-to-gNB geometry plus the gNB type, the 5-dim model input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCondition {
    /// UAV position minus gNB position, meters.
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub gnb_type: GnbType,
}

impl LinkCondition {
    /// Condition as the 5-vector `[dx, dy, dz, terrestrial, aerial]`.
    pub fn to_vec(&self) -> [f64; COND_DIM] {
        let (t, a) = match self.gnb_type {
            GnbType::Terrestrial => (1.0, 0.0),
            GnbType::Aerial => (0.0, 1.0),
        };
        [self.dx, self.dy, self.dz, t, a]
    }

    /// Horizontal distance, meters.
    pub fn distance_2d(&self) -> f64 {
        self.dx.hypot(self.dy)
    }

    /// Euclidean distance, meters.
    pub fn distance_3d(&self) -> f64 {
        (self.dx * self.dx + self.dy * self.dy + self.dz * self.dz).sqrt()
    }

    /// UAV altitude implied by the relative geometry, meters.
    pub fn uav_height(&self) -> f64 {
        self.dz + self.gnb_type.height_m()
    }
}

/// Fixed-layout path matrix: 20 paths x (loss dB, delay ns, AoA azimuth,
/// AoA elevation, AoD azimuth, AoD elevation).
#[derive(Debug, Clone, PartialEq)]
pub struct PathVector(pub [f64; PATH_DIM]);

impl PathVector {
    /// All-sentinel matrix used for no-link records.
    pub fn sentinel() -> PathVector {
        let mut v = [0.0; PATH_DIM];
        for p in 0..NUM_PATHS {
            v[p * PARAMS_PER_PATH] = MAX_PATH_LOSS_DB;
        }
        PathVector(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Loss of path `p` in dB.
    pub fn path_loss(&self, p: usize) -> f64 {
        self.0[p * PARAMS_PER_PATH]
    }

    /// Minimum loss over all 20 paths — the strongest path.
    pub fn strongest_loss(&self) -> f64 {
        (0..NUM_PATHS)
            .map(|p| self.path_loss(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when every path slot holds the 200 dB sentinel.
    pub fn is_all_sentinel(&self) -> bool {
        (0..NUM_PATHS).all(|p| self.path_loss(p) >= MAX_PATH_LOSS_DB)
    }
}

/// One UAV-gNB link: condition, state, and the path matrix (all-sentinel
/// when the state is `NoLink`).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRecord {
    pub condition: LinkCondition,
    pub state: LinkState,
    pub paths: PathVector,
}

/// How link states are assigned during generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateMode {
    /// States drawn from the closed-form probability model.
    Probabilistic,
    /// Deterministic distance thresholds (the 50% contours of the
    /// probabilistic model); makes the classes exactly separable.
    HardThresholds,
}

impl StateMode {
    pub fn label(self) -> &'static str {
        match self {
            StateMode::Probabilistic => "probabilistic",
            StateMode::HardThresholds => "hard",
        }
    }

    pub fn from_label(label: &str) -> Option<StateMode> {
        match label {
            "probabilistic" => Some(StateMode::Probabilistic),
            "hard" => Some(StateMode::HardThresholds),
            _ => None,
        }
    }
}

/// Ground-truth generator parameters for one city.
#[derive(Debug, Clone, PartialEq)]
pub struct CityProfile {
    pub city_id: String,
    /// Path-loss intercept at 1 m, dB.
    pub pl0: f64,
    /// Exponent below the breakpoint.
    pub slope1: f64,
    /// Additional exponent beyond the breakpoint; must exceed `slope1`.
    pub slope2: f64,
    /// Breakpoint distance, meters.
    pub d_break: f64,
    /// Lognormal shadowing standard deviation, dB.
    pub shadow_sigma: f64,
    /// LOS probability decay rate, 1/m.
    pub los_decay: f64,
    /// Distance scale at which links start disappearing, meters.
    pub nolink_range: f64,
    pub seed: u64,
    pub state_mode: StateMode,
}

impl CityProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.slope2 > self.slope1 && self.slope1 > 0.0) {
            return Err(SynthError::BadMeta {
                path: self.city_id.clone(),
                msg: format!(
                    "profile requires slope2 > slope1 > 0, got {} and {}",
                    self.slope1, self.slope2
                ),
            });
        }
        if self.shadow_sigma < 0.0 {
            return Err(SynthError::BadMeta {
                path: self.city_id.clone(),
                msg: "shadow_sigma must be non-negative".into(),
            });
        }
        Ok(())
    }
}

/// The three default city profiles, `alpha`, `bravo`, and `charlie`.
///
/// Each gets a distinct intercept, slope pair, breakpoint, shadowing, and
/// link-state geometry so federated clients see genuinely heterogeneous
/// distributions; per-profile seeds derive from `base_seed`.
pub fn default_profiles(base_seed: u64) -> Vec<CityProfile> {
    let presets = [
        ("alpha", 61.4, 2.0, 3.6, 300.0, 8.0, 0.0045, 700.0),
        ("bravo", 58.0, 2.2, 3.2, 250.0, 7.0, 0.006, 600.0),
        ("charlie", 64.0, 1.9, 4.0, 350.0, 9.0, 0.004, 800.0),
    ];
    presets
        .iter()
        .enumerate()
        .map(
            |(i, &(id, pl0, slope1, slope2, d_break, shadow_sigma, los_decay, nolink_range))| {
                CityProfile {
                    city_id: id.to_string(),
                    pl0,
                    slope1,
                    slope2,
                    d_break,
                    shadow_sigma,
                    los_decay,
                    nolink_range,
                    seed: crate::seeds::mix(base_seed, crate::seeds::purpose::CITY_PROFILE ^ (i as u64) << 8),
                    state_mode: StateMode::Probabilistic,
                }
            },
        )
        .collect()
}

/// A generated city dataset. Records are ordered; `n_train + n_test`
/// always equals the record count (an unsplit dataset is all-train).
#[derive(Debug, Clone, PartialEq)]
pub struct CityDataset {
    pub profile: CityProfile,
    pub records: Vec<LinkRecord>,
    pub n_train: usize,
    pub n_test: usize,
}

impl CityDataset {
    /// Records usable for path-model training: state is LOS or NLOS.
    pub fn eligible_records(&self) -> Vec<LinkRecord> {
        self.records
            .iter()
            .filter(|r| r.state != LinkState::NoLink)
            .cloned()
            .collect()
    }

    pub fn state_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for r in &self.records {
            counts[r.state.index()] += 1;
        }
        counts
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinel_path_vector_is_all_sentinel() {
        let v = PathVector::sentinel();
        assert!(v.is_all_sentinel());
        assert_eq!(v.strongest_loss(), MAX_PATH_LOSS_DB);
        assert_eq!(v.path_loss(19), MAX_PATH_LOSS_DB);
    }

    #[test]
    fn condition_vector_is_one_hot_in_type() {
        let c = LinkCondition {
            dx: 3.0,
            dy: -4.0,
            dz: 50.0,
            gnb_type: GnbType::Aerial,
        };
        assert_eq!(c.to_vec(), [3.0, -4.0, 50.0, 0.0, 1.0]);
        assert!((c.distance_2d() - 5.0).abs() < 1e-12);
        assert!((c.uav_height() - (50.0 + AERIAL_GNB_HEIGHT_M)).abs() < 1e-12);
    }

    #[test]
    fn profile_validation_enforces_dual_slope() {
        let mut p = CityProfile {
            city_id: "t".into(),
            pl0: 60.0,
            slope1: 2.0,
            slope2: 3.5,
            d_break: 300.0,
            shadow_sigma: 8.0,
            los_decay: 0.006,
            nolink_range: 700.0,
            seed: 1,
            state_mode: StateMode::Probabilistic,
        };
        assert!(p.validate().is_ok());
        p.slope2 = 1.5;
        assert!(p.validate().is_err());
    }
}
