//! Experiment configuration: TOML file with CLI-flag overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use fedchan_core::seeds;
use fedchan_core::synth::{default_profiles, CityProfile, StateMode};

/// Per-city dataset sizes used by `--paper-scale`.
pub const PAPER_SCALE_LINKS: [usize; 3] = [36_000, 25_800, 23_000];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedSection {
    pub rounds: usize,
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CitySection {
    pub id: String,
    pub pl0: f64,
    pub slope1: f64,
    pub slope2: f64,
    pub d_break: f64,
    pub shadow_sigma: f64,
    pub los_decay: f64,
    pub nolink_range: f64,
    /// `probabilistic` (default) or `hard`.
    #[serde(default)]
    pub state_mode: Option<String>,
    /// Overrides the experiment-wide links-per-city count.
    #[serde(default)]
    pub links: Option<usize>,
}

/// Raw TOML schema; every field optional so partial files work.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    links_per_city: Option<usize>,
    test_fraction: Option<f64>,
    paper_scale: Option<bool>,
    link: Option<TrainSection>,
    standalone: Option<TrainSection>,
    federation: Option<FedSection>,
    #[serde(default)]
    city: Vec<CitySection>,
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub links_per_city: usize,
    pub test_fraction: f64,
    pub paper_scale: bool,
    pub link: TrainSection,
    pub standalone: TrainSection,
    pub federation: FedSection,
    pub cities: Vec<CitySection>,
}

impl ExperimentConfig {
    /// Built-in defaults: 3 cities at desk scale, published hyperparameter
    /// defaults for every trainer (link 30 epochs at 1e-3, generative
    /// models 5 local epochs at 1e-4, 100 communication rounds, batch 100,
    /// standalone budget 500 epochs).
    pub fn defaults() -> ExperimentConfig {
        ExperimentConfig {
            seed: 42,
            out_dir: PathBuf::from("runs/default"),
            links_per_city: 5000,
            test_fraction: 0.2,
            paper_scale: false,
            link: TrainSection {
                epochs: 30,
                learning_rate: 1e-3,
                batch_size: 100,
            },
            standalone: TrainSection {
                epochs: 500,
                learning_rate: 1e-4,
                batch_size: 100,
            },
            federation: FedSection {
                rounds: 100,
                local_epochs: 5,
                learning_rate: 1e-4,
                batch_size: 100,
            },
            cities: default_profiles(0)
                .into_iter()
                .map(|p| CitySection {
                    id: p.city_id,
                    pl0: p.pl0,
                    slope1: p.slope1,
                    slope2: p.slope2,
                    d_break: p.d_break,
                    shadow_sigma: p.shadow_sigma,
                    los_decay: p.los_decay,
                    nolink_range: p.nolink_range,
                    state_mode: None,
                    links: None,
                })
                .collect(),
        }
    }

    /// Load a TOML file over the defaults, then apply flag overrides.
    pub fn load(
        config_path: Option<&Path>,
        seed: Option<u64>,
        out: Option<PathBuf>,
        paper_scale: bool,
    ) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::defaults();
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let raw: RawConfig = toml::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?;
            if let Some(v) = raw.seed {
                cfg.seed = v;
            }
            if let Some(v) = raw.out_dir {
                cfg.out_dir = v;
            }
            if let Some(v) = raw.links_per_city {
                cfg.links_per_city = v;
            }
            if let Some(v) = raw.test_fraction {
                cfg.test_fraction = v;
            }
            if let Some(v) = raw.paper_scale {
                cfg.paper_scale = v;
            }
            if let Some(v) = raw.link {
                cfg.link = v;
            }
            if let Some(v) = raw.standalone {
                cfg.standalone = v;
            }
            if let Some(v) = raw.federation {
                cfg.federation = v;
            }
            if !raw.city.is_empty() {
                cfg.cities = raw.city;
            }
        }
        if let Some(v) = seed {
            cfg.seed = v;
        }
        if let Some(v) = out {
            cfg.out_dir = v;
        }
        if paper_scale {
            cfg.paper_scale = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.cities.is_empty() {
            bail!("config must declare at least one city");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            bail!("test_fraction must lie strictly between 0 and 1");
        }
        if self.paper_scale && self.cities.len() != PAPER_SCALE_LINKS.len() {
            bail!(
                "--paper-scale defines link counts for exactly {} cities, config has {}",
                PAPER_SCALE_LINKS.len(),
                self.cities.len()
            );
        }
        let mut ids: Vec<&str> = self.cities.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.cities.len() {
            bail!("city ids must be unique");
        }
        for c in &self.cities {
            if let Some(mode) = &c.state_mode {
                if StateMode::from_label(mode).is_none() {
                    bail!("city {}: unknown state_mode {mode:?}", c.id);
                }
            }
        }
        Ok(())
    }

    /// Ground-truth profile for city index `i`, seeded from the experiment
    /// seed and the city index.
    pub fn profile(&self, i: usize) -> Result<CityProfile> {
        let c = self
            .cities
            .get(i)
            .with_context(|| format!("no city at index {i}"))?;
        let state_mode = match &c.state_mode {
            None => StateMode::Probabilistic,
            Some(label) => {
                StateMode::from_label(label).with_context(|| format!("bad state_mode {label:?}"))?
            }
        };
        Ok(CityProfile {
            city_id: c.id.clone(),
            pl0: c.pl0,
            slope1: c.slope1,
            slope2: c.slope2,
            d_break: c.d_break,
            shadow_sigma: c.shadow_sigma,
            los_decay: c.los_decay,
            nolink_range: c.nolink_range,
            seed: seeds::mix(self.seed, seeds::purpose::CITY_PROFILE ^ (i as u64) << 8),
            state_mode,
        })
    }

    /// Links generated for city index `i`.
    pub fn links_for_city(&self, i: usize) -> usize {
        if self.paper_scale {
            PAPER_SCALE_LINKS[i % PAPER_SCALE_LINKS.len()]
        } else {
            self.cities
                .get(i)
                .and_then(|c| c.links)
                .unwrap_or(self.links_per_city)
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.out_dir.join("models")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out_dir.join("eval")
    }

    pub fn fed_dir(&self, mode: &str) -> PathBuf {
        self.out_dir.join(format!("fed_{mode}"))
    }

    pub fn dataset_path(&self, city: &str) -> PathBuf {
        self.data_dir().join(format!("{city}.csv"))
    }
}
