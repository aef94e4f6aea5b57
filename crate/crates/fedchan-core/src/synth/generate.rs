//! Link-state model, path sampler, dataset generation, and splitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use super::*;
use crate::seeds;

/// Mean of the exponential excess-loss gaps between successive paths, dB.
const EXCESS_MEAN_DB: f64 = 10.0;
/// Tallest UAV altitude; anchors the height factor below.
const HEIGHT_MAX_M: f64 = 120.0;

/// Height factor multiplying the LOS decay rate. Decreasing in the height
/// deficit `HEIGHT_MAX - uav_height`, equal to 1 at the top altitude.
fn height_factor(uav_height: f64) -> f64 {
    let deficit = (HEIGHT_MAX_M - uav_height).max(0.0);
    1.0 / (1.0 + deficit / HEIGHT_MAX_M)
}

/// Smoothstep ramp for the no-link probability: 0 below `nolink_range / 2`,
/// 1 beyond `2 * nolink_range`.
fn nolink_ramp(d2: f64, nolink_range: f64) -> f64 {
    let t = ((d2 - 0.5 * nolink_range) / (1.5 * nolink_range)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Closed-form state probabilities `[P(NoLink), P(LOS), P(NLOS)]`, indexed
/// by `LinkState` code.
///
/// `P(LOS) = exp(-d2 * los_decay * f(height))`, the remaining mass split by
/// a distance ramp that reaches the no-link regime at `2 * nolink_range`.
pub fn state_probabilities(profile: &CityProfile, condition: &LinkCondition) -> [f64; 3] {
    let d2 = condition.distance_2d();
    let f = height_factor(condition.uav_height());
    let p_los = (-d2 * profile.los_decay * f).exp();
    let ramp = nolink_ramp(d2, profile.nolink_range);
    let p_nolink = (1.0 - p_los) * ramp;
    let p_nlos = (1.0 - p_los) * (1.0 - ramp);
    [p_nolink, p_los, p_nlos]
}

/// 50% contours of the probabilistic model, used by hard-threshold mode:
/// returns `(los_radius, nolink_radius)` in meters for this condition.
pub fn hard_state_thresholds(profile: &CityProfile, condition: &LinkCondition) -> (f64, f64) {
    let f = height_factor(condition.uav_height());
    let los_radius = std::f64::consts::LN_2 / (profile.los_decay * f);
    let nolink_radius = 1.25 * profile.nolink_range;
    (los_radius, nolink_radius)
}

/// Draw the link state for one condition.
pub fn sample_link_state<R: Rng>(
    profile: &CityProfile,
    condition: &LinkCondition,
    rng: &mut R,
) -> LinkState {
    match profile.state_mode {
        StateMode::HardThresholds => {
            let d2 = condition.distance_2d();
            let (los_r, nolink_r) = hard_state_thresholds(profile, condition);
            if d2 >= nolink_r {
                LinkState::NoLink
            } else if d2 <= los_r {
                LinkState::Los
            } else {
                LinkState::Nlos
            }
        }
        StateMode::Probabilistic => {
            let [p_nolink, p_los, _] = state_probabilities(profile, condition);
            let u: f64 = rng.random();
            if u < p_los {
                LinkState::Los
            } else if u < p_los + p_nolink {
                LinkState::NoLink
            } else {
                LinkState::Nlos
            }
        }
    }
}

/// Mean strongest-path loss of the dual-slope law, before shadowing.
pub fn mean_strongest_loss(profile: &CityProfile, d3: f64, state: LinkState) -> f64 {
    let d = d3.max(1.0);
    let mut loss = profile.pl0 + 10.0 * profile.slope1 * d.log10();
    if d > profile.d_break {
        loss += 10.0 * profile.slope2 * (d / profile.d_break).log10();
    }
    if state == LinkState::Nlos {
        loss += NLOS_EXCESS_DB;
    }
    loss
}

/// Draw a 20-path parameter matrix for an existing link.
///
/// The strongest path follows the dual-slope law plus `N(0, shadow_sigma^2)`
/// shadowing; the remaining 19 paths add sorted positive excess losses.
/// Every loss is clamped to the 200 dB ceiling, and delays are at least the
/// straight-line propagation time.
pub fn sample_paths<R: Rng>(
    profile: &CityProfile,
    condition: &LinkCondition,
    state: LinkState,
    rng: &mut R,
) -> Result<PathVector> {
    if state == LinkState::NoLink {
        return Err(SynthError::NoLinkHasNoPaths);
    }
    let d3 = condition.distance_3d();
    let mut strongest = mean_strongest_loss(profile, d3, state);
    if profile.shadow_sigma > 0.0 {
        let shadow = Normal::new(0.0, profile.shadow_sigma).expect("sigma checked non-negative");
        strongest += shadow.sample(rng);
    }
    strongest = strongest.min(MAX_PATH_LOSS_DB);

    let excess = Exp::new(1.0 / EXCESS_MEAN_DB).expect("positive rate");
    let mut gaps: Vec<f64> = (0..NUM_PATHS - 1).map(|_| excess.sample(rng)).collect();
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let base_delay_ns = d3 / SPEED_OF_LIGHT_M_S * 1e9;
    let d2 = condition.distance_2d().max(1e-9);
    // Geometric arrival/departure bearings for the direct path.
    let aoa_az = condition.dy.atan2(condition.dx).to_degrees();
    let aoa_el = condition.dz.atan2(d2).to_degrees();
    let aod_az = (-condition.dy).atan2(-condition.dx).to_degrees();
    let aod_el = (-condition.dz).atan2(d2).to_degrees();

    let mut v = [0.0; PATH_DIM];
    for p in 0..NUM_PATHS {
        let extra = if p == 0 { 0.0 } else { gaps[p - 1] };
        let loss = (strongest + extra).min(MAX_PATH_LOSS_DB);
        let delay = base_delay_ns * (1.0 + extra / 40.0);
        let direct = p == 0 && state == LinkState::Los;
        let (a_az, a_el, d_az, d_el) = if direct {
            (aoa_az, aoa_el, aod_az, aod_el)
        } else {
            (
                rng.random_range(-180.0..180.0),
                rng.random_range(-90.0..=90.0),
                rng.random_range(-180.0..180.0),
                rng.random_range(-90.0..=90.0),
            )
        };
        let o = p * PARAMS_PER_PATH;
        v[o] = loss;
        v[o + 1] = delay;
        v[o + 2] = a_az;
        v[o + 3] = a_el;
        v[o + 4] = d_az;
        v[o + 5] = d_el;
    }
    Ok(PathVector(v))
}

/// Generate a city dataset of `n_links` records.
///
/// UAVs are placed uniformly over a disc spanning all state regimes, with
/// altitude drawn uniformly from `height_set` and the gNB type alternating
/// so both types are always represented. Each record derives its own RNG
/// stream from `(profile.seed, index)`, so generation is a pure function of
/// the profile, the count, and the seed — and shards can reproduce any
/// sub-range independently.
pub fn generate_city(
    profile: &CityProfile,
    n_links: usize,
    height_set: &[f64],
) -> Result<CityDataset> {
    if height_set.is_empty() {
        return Err(SynthError::EmptyHeightSet);
    }
    profile.validate()?;
    // Spans every state regime while keeping linked records the majority.
    let placement_radius = 1.5 * profile.nolink_range;
    let mut records = Vec::with_capacity(n_links);
    for i in 0..n_links {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::record_seed(profile.seed, i));
        let gnb_type = if i % 2 == 0 {
            GnbType::Terrestrial
        } else {
            GnbType::Aerial
        };
        let r = placement_radius * rng.random::<f64>().sqrt();
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let height = height_set[rng.random_range(0..height_set.len())];
        let condition = LinkCondition {
            dx: r * theta.cos(),
            dy: r * theta.sin(),
            dz: height - gnb_type.height_m(),
            gnb_type,
        };
        let state = sample_link_state(profile, &condition, &mut rng);
        let paths = if state == LinkState::NoLink {
            PathVector::sentinel()
        } else {
            sample_paths(profile, &condition, state, &mut rng)?
        };
        records.push(LinkRecord {
            condition,
            state,
            paths,
        });
    }
    let n_train = records.len();
    Ok(CityDataset {
        profile: profile.clone(),
        records,
        n_train,
        n_test: 0,
    })
}

/// Split a dataset into disjoint, exhaustive train and test parts,
/// stratified by link state.
///
/// The overall test count is `round(n * test_fraction)`; per-state quotas
/// are assigned by largest remainder so each stratum stays within one
/// record of proportonality.
pub fn split_train_test(
    dataset: &CityDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(CityDataset, CityDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SynthError::InvalidFraction(test_fraction));
    }
    let n = dataset.records.len();
    if n == 0 {
        return Err(SynthError::EmptyDataset);
    }
    let total_test = ((n as f64) * test_fraction).round() as usize;

    // Group record indices by state, preserving order.
    let mut groups: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (i, r) in dataset.records.iter().enumerate() {
        groups[r.state.index()].push(i);
    }

    // Largest-remainder allocation of the test quota across states.
    let mut quotas = [0usize; 3];
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0;
    for (s, g) in groups.iter().enumerate() {
        let ideal = g.len() as f64 * total_test as f64 / n as f64;
        quotas[s] = (ideal.floor() as usize).min(g.len());
        assigned += quotas[s];
        remainders.push((s, ideal - ideal.floor()));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut left = total_test.saturating_sub(assigned);
    for (s, _) in remainders {
        if left == 0 {
            break;
        }
        if quotas[s] < groups[s].len() {
            quotas[s] += 1;
            left -= 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_mask = vec![false; n];
    for (s, group) in groups.iter().enumerate() {
        let mut idxs = group.clone();
        // Fisher-Yates driven by the split seed.
        for i in (1..idxs.len()).rev() {
            let j = rng.random_range(0..=i);
            idxs.swap(i, j);
        }
        for &i in idxs.iter().take(quotas[s]) {
            test_mask[i] = true;
        }
    }

    let mut train = Vec::with_capacity(n - total_test);
    let mut test = Vec::with_capacity(total_test);
    for (i, r) in dataset.records.iter().enumerate() {
        if test_mask[i] {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    let train_ds = CityDataset {
        profile: dataset.profile.clone(),
        n_train: train.len(),
        n_test: 0,
        records: train,
    };
    let test_ds = CityDataset {
        profile: dataset.profile.clone(),
        n_train: 0,
        n_test: test.len(),
        records: test,
    };
    Ok((train_ds, test_ds))
}
