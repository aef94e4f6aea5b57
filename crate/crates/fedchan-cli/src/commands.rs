//! Subcommand implementations for the experiment pipeline.

use std::fs;

use anyhow::{anyhow, bail, Result};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use fedchan_core::fed::{run_federation, write_history, FedClient, FedConfig, ModelKind, PathModel};
use fedchan_core::link::{self, LinkModel};
use fedchan_core::metrics::{
    self, emit_cdf_csv, emit_report, evaluate_model, reference, EvalRow, MetricsReport,
};
use fedchan_core::nn::{read_weights, write_weights, TrainConfig};
use fedchan_core::seeds::{self, purpose};
use fedchan_core::synth::{
    fit_scaler, generate_city, read_dataset, split_train_test, write_dataset, CityDataset,
    FeatureScaler, LinkRecord, UAV_HEIGHTS_M,
};

use crate::config::ExperimentConfig;

/// Training mode for the `train` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TrainMode {
    /// Standalone conditional VAE for one city.
    Vae,
    /// Standalone conditional GAN for one city.
    Gan,
    /// Federated VAE over all configured cities.
    FlVae,
    /// Federated GAN over all configured cities.
    FlGan,
}

impl TrainMode {
    pub fn label(self) -> &'static str {
        match self {
            TrainMode::Vae => "vae",
            TrainMode::Gan => "gan",
            TrainMode::FlVae => "fl-vae",
            TrainMode::FlGan => "fl-gan",
        }
    }

    fn is_federated(self) -> bool {
        matches!(self, TrainMode::FlVae | TrainMode::FlGan)
    }

    fn kind(self) -> ModelKind {
        match self {
            TrainMode::Vae | TrainMode::FlVae => ModelKind::Vae,
            TrainMode::Gan | TrainMode::FlGan => ModelKind::Gan,
        }
    }
}

/// One city's loaded dataset, split deterministically from the experiment
/// seed, plus the derived training artifacts.
struct CityData {
    id: String,
    train: CityDataset,
    test: CityDataset,
    eligible_train: Vec<LinkRecord>,
    scaler: FeatureScaler,
}

fn split_seed(cfg: &ExperimentConfig, city_index: usize) -> u64 {
    seeds::mix(cfg.seed, purpose::SPLIT ^ (city_index as u64) << 8)
}

fn load_city(cfg: &ExperimentConfig, i: usize) -> Result<CityData> {
    let id = cfg.cities[i].id.clone();
    let path = cfg.dataset_path(&id);
    if !path.exists() {
        bail!(
            "dataset {} not found; run `fedchan gen-data` first",
            path.display()
        );
    }
    let ds = read_dataset(&path)?;
    let (train, test) = split_train_test(&ds, cfg.test_fraction, split_seed(cfg, i))?;
    let eligible_train = train.eligible_records();
    if eligible_train.is_empty() {
        bail!("city {id}: no linked records in the training split");
    }
    let scaler = fit_scaler(&eligible_train)?;
    Ok(CityData {
        id,
        train,
        test,
        eligible_train,
        scaler,
    })
}

fn link_model_path(cfg: &ExperimentConfig, city: &str) -> std::path::PathBuf {
    cfg.models_dir().join(format!("link_{city}.fcw"))
}

fn load_link_model(cfg: &ExperimentConfig, city: &str) -> Result<LinkModel> {
    let path = link_model_path(cfg, city);
    if !path.exists() {
        bail!(
            "link model {} not found; run `fedchan train-link` first",
            path.display()
        );
    }
    let file = read_weights(&path)?;
    if file.specs != link::link_model_specs() {
        bail!("{}: unexpected link-model architecture", path.display());
    }
    Ok(LinkModel::new(file.weights))
}

fn save_path_model(cfg: &ExperimentConfig, model: &PathModel, tag: &str) -> Result<()> {
    let dir = cfg.models_dir();
    fs::create_dir_all(&dir)?;
    match model {
        PathModel::Vae(v) => {
            write_weights(
                dir.join(format!("vae_enc_{tag}.fcw")),
                "encoder",
                v.encoder_specs(),
                &v.encoder,
            )?;
            write_weights(
                dir.join(format!("vae_dec_{tag}.fcw")),
                "decoder",
                v.decoder_specs(),
                &v.decoder,
            )?;
        }
        PathModel::Gan(g) => {
            write_weights(
                dir.join(format!("gan_gen_{tag}.fcw")),
                "generator",
                g.generator_specs(),
                &g.generator,
            )?;
            write_weights(
                dir.join(format!("gan_disc_{tag}.fcw")),
                "discriminator",
                g.discriminator_specs(),
                &g.discriminator,
            )?;
        }
    }
    Ok(())
}

/// Load a saved path model by kind and tag; `Ok(None)` when absent.
fn load_path_model(cfg: &ExperimentConfig, kind: ModelKind, tag: &str) -> Result<Option<PathModel>> {
    let dir = cfg.models_dir();
    let template = PathModel::init(kind, 0);
    let (a, b) = match kind {
        ModelKind::Vae => (format!("vae_enc_{tag}.fcw"), format!("vae_dec_{tag}.fcw")),
        ModelKind::Gan => (format!("gan_gen_{tag}.fcw"), format!("gan_disc_{tag}.fcw")),
    };
    let (pa, pb) = (dir.join(&a), dir.join(&b));
    if !pa.exists() || !pb.exists() {
        return Ok(None);
    }
    let fa = read_weights(&pa)?;
    let fb = read_weights(&pb)?;
    let model = match (&template, kind) {
        (PathModel::Vae(v), ModelKind::Vae) => {
            if fa.specs != v.encoder_specs() || fb.specs != v.decoder_specs() {
                bail!("{a}/{b}: unexpected VAE architecture");
            }
            PathModel::Vae(v.with_weights(fa.weights, fb.weights)?)
        }
        (PathModel::Gan(g), ModelKind::Gan) => {
            if fa.specs != g.generator_specs() || fb.specs != g.discriminator_specs() {
                bail!("{a}/{b}: unexpected GAN architecture");
            }
            PathModel::Gan(g.with_weights(fa.weights, fb.weights)?)
        }
        _ => unreachable!(),
    };
    Ok(Some(model))
}

/// Generate every configured city dataset and its metadata sidecar.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(cfg.data_dir())?;
    for i in 0..cfg.cities.len() {
        let profile = cfg.profile(i)?;
        let n = cfg.links_for_city(i);
        let ds = generate_city(&profile, n, &UAV_HEIGHTS_M)?;
        let counts = ds.state_counts();
        let path = cfg.dataset_path(&profile.city_id);
        write_dataset(&ds, &path)?;
        println!(
            "gen-data {}: {} links (no-link {}, los {}, nlos {}) -> {}",
            profile.city_id,
            n,
            counts[0],
            counts[1],
            counts[2],
            path.display()
        );
    }
    Ok(())
}

/// Train and save one link-state classifier per city.
pub fn cmd_train_link(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(cfg.models_dir())?;
    for i in 0..cfg.cities.len() {
        let city = load_city(cfg, i)?;
        let train_cfg = TrainConfig::new(
            cfg.link.learning_rate,
            cfg.link.epochs,
            cfg.link.batch_size,
            seeds::mix(cfg.seed, purpose::LINK_TRAIN ^ (i as u64) << 8),
        );
        let (model, losses) = link::train_link_model(&city.train.records, &train_cfg)?;
        let train_acc = link::accuracy(&model, &city.train.records)?;
        let test_acc = link::accuracy(&model, &city.test.records)?;
        let path = link_model_path(cfg, &city.id);
        write_weights(&path, "link", &link::link_model_specs(), &model.weights)?;
        println!(
            "train-link {}: {} epochs, loss {:.4} -> {:.4}, accuracy train {:.3} test {:.3} -> {}",
            city.id,
            cfg.link.epochs,
            losses.first().copied().unwrap_or(f64::NAN),
            losses.last().copied().unwrap_or(f64::NAN),
            train_acc,
            test_acc,
            path.display()
        );
    }
    Ok(())
}

fn train_standalone(cfg: &ExperimentConfig, mode: TrainMode, city_id: &str) -> Result<()> {
    let index = cfg
        .cities
        .iter()
        .position(|c| c.id == city_id)
        .ok_or_else(|| anyhow!("city {city_id} is not in the configuration"))?;
    let city = load_city(cfg, index)?;
    let kind = mode.kind();
    let init_seed = seeds::mix(
        cfg.seed,
        purpose::MODEL_INIT ^ (index as u64) << 8 ^ kind_bit(kind),
    );
    let train_seed = seeds::mix(
        cfg.seed,
        purpose::STANDALONE_TRAIN ^ (index as u64) << 8 ^ kind_bit(kind),
    );
    let train_cfg = TrainConfig::new(
        cfg.standalone.learning_rate,
        cfg.standalone.epochs,
        cfg.standalone.batch_size,
        train_seed,
    );
    let initial = PathModel::init(kind, init_seed);
    let (trained, mean_loss) = initial
        .train_local(&city.eligible_train, &city.scaler, &train_cfg)
        .map_err(|e| anyhow!("training {} for {city_id}: {e}", mode.label()))?;
    save_path_model(cfg, &trained, &city.id)?;
    println!(
        "train {} {}: {} epochs over {} records, mean loss {:.4}, checksum {}",
        mode.label(),
        city.id,
        cfg.standalone.epochs,
        city.eligible_train.len(),
        mean_loss,
        &trained.checksum()[..12]
    );
    Ok(())
}

fn kind_bit(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Vae => 0,
        ModelKind::Gan => 1 << 32,
    }
}

fn train_federated(cfg: &ExperimentConfig, mode: TrainMode) -> Result<()> {
    let kind = mode.kind();
    let mut clients = Vec::with_capacity(cfg.cities.len());
    for i in 0..cfg.cities.len() {
        let city = load_city(cfg, i)?;
        let link_model = load_link_model(cfg, &city.id).ok();
        println!(
            "client {}: {} eligible records",
            city.id,
            city.eligible_train.len()
        );
        clients.push(FedClient {
            id: city.id.clone(),
            records: city.eligible_train,
            scaler: city.scaler,
            link_model,
        });
    }
    let fed_cfg = FedConfig {
        rounds: cfg.federation.rounds,
        local_epochs: cfg.federation.local_epochs,
        batch_size: cfg.federation.batch_size,
        learning_rate: cfg.federation.learning_rate,
        model_kind: kind,
        seed: seeds::mix(cfg.seed, purpose::FEDERATION ^ kind_bit(kind)),
    };
    let exchange_dir = cfg.fed_dir(mode.label());
    fs::create_dir_all(&exchange_dir)?;
    let (global, history) = run_federation(&fed_cfg, &clients, Some(&exchange_dir))?;
    write_history(&history, exchange_dir.join("history.csv"))?;
    save_path_model(cfg, &global, "global")?;
    let last = history.last();
    println!(
        "train {}: {} rounds x {} epochs over {} clients, final losses {:?}, checksum {}",
        mode.label(),
        cfg.federation.rounds,
        cfg.federation.local_epochs,
        clients.len(),
        last.map(|r| r
            .clients
            .iter()
            .map(|c| (c.client_id.clone(), c.mean_local_loss))
            .collect::<Vec<_>>())
            .unwrap_or_default(),
        &global.checksum()[..12]
    );
    Ok(())
}

/// Train a path model: standalone (per city) or federated (all cities).
pub fn cmd_train(cfg: &ExperimentConfig, mode: TrainMode, city: Option<String>) -> Result<()> {
    match (mode.is_federated(), city) {
        (true, Some(c)) => bail!(
            "mode {} trains over all configured cities; remove --city {c}",
            mode.label()
        ),
        (true, None) => train_federated(cfg, mode),
        (false, None) => bail!("mode {} requires --city", mode.label()),
        (false, Some(c)) => train_standalone(cfg, mode, &c),
    }
}

/// The (method label, kind, weight tag) cells eval looks for.
fn method_cells(city: &str) -> [(&'static str, ModelKind, String); 4] {
    [
        ("VAE", ModelKind::Vae, city.to_string()),
        ("GAN", ModelKind::Gan, city.to_string()),
        ("FL-VAE", ModelKind::Vae, "global".to_string()),
        ("FL-GAN", ModelKind::Gan, "global".to_string()),
    ]
}

/// Evaluate every trained (city, method) cell on the held-out split;
/// writes per-cell CDF CSVs and the metrics report.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(cfg.eval_dir())?;
    let mut report = MetricsReport::default();
    let mut evaluated = 0usize;
    for i in 0..cfg.cities.len() {
        let city = load_city(cfg, i)?;
        let link_model = load_link_model(cfg, &city.id)?;
        for (method, kind, tag) in method_cells(&city.id) {
            let Some(model) = load_path_model(cfg, kind, &tag)? else {
                continue;
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(
                cfg.seed,
                purpose::EVALUATION ^ (i as u64) << 8 ^ kind_bit(kind) ^ ((tag == "global") as u64) << 40,
            ));
            let scaler = &city.scaler;
            let outcome = evaluate_model(
                &city.id,
                method,
                |cond, rng| {
                    model
                        .sample_paths(scaler, cond, rng)
                        .expect("canonical model dims")
                },
                &link_model,
                &city.test.records,
                &mut rng,
            )?;
            let cdf_path = cfg
                .eval_dir()
                .join(format!("cdf_{}_{}.csv", city.id, method.to_lowercase()));
            emit_cdf_csv(
                &[
                    ("test".to_string(), &outcome.test_losses),
                    (method.to_string(), &outcome.generated_losses),
                ],
                &cdf_path,
            )?;
            println!(
                "eval {} {}: kl {:.4} wasserstein {:.3} dB (link agreement {:.3}) -> {}",
                city.id,
                method,
                outcome.row.kl,
                outcome.row.wasserstein,
                outcome.link_agreement,
                cdf_path.display()
            );
            report.rows.push(outcome.row);
            evaluated += 1;
        }
    }
    if evaluated == 0 {
        bail!("no trained models found under {}", cfg.models_dir().display());
    }
    let report_path = cfg.eval_dir().join("report.csv");
    emit_report(&report, &report_path)?;
    println!("eval: {} cells -> {}", evaluated, report_path.display());
    Ok(())
}

/// Merge metrics and federation history into a summary annotated with the
/// external benchmark reference distances.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<()> {
    let report_path = cfg.eval_dir().join("report.csv");
    if !report_path.exists() {
        bail!(
            "no evaluation results at {}; run `fedchan eval` first",
            report_path.display()
        );
    }
    let report = metrics::read_report(&report_path)?;
    let mut rows = report.rows.clone();
    rows.sort_by(|a, b| (a.city.clone(), method_order(&a.method)).cmp(&(b.city.clone(), method_order(&b.method))));

    let history_summary = |mode: &str| -> Option<(usize, f64)> {
        let path = cfg.fed_dir(mode).join("history.csv");
        let text = fs::read_to_string(path).ok()?;
        let mut rounds = 0usize;
        let mut last_losses: Vec<f64> = Vec::new();
        let mut last_round = None;
        for line in text.lines().skip(1) {
            let mut parts = line.split(',');
            let round: usize = parts.next()?.parse().ok()?;
            let _client = parts.next()?;
            let loss: f64 = parts.next()?.parse().ok()?;
            if last_round != Some(round) {
                last_round = Some(round);
                rounds = rounds.max(round + 1);
                last_losses.clear();
            }
            last_losses.push(loss);
        }
        let mean = last_losses.iter().sum::<f64>() / last_losses.len().max(1) as f64;
        Some((rounds, mean))
    };

    let summary_path = cfg.out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)?;
    w.write_record([
        "city",
        "method",
        "kl",
        "wasserstein",
        "kl_reference",
        "wasserstein_reference",
        "fed_rounds",
        "fed_final_mean_loss",
    ])?;
    for row in &rows {
        let reference = reference::reference_for(&row.city, &row.method);
        let fed = match row.method.as_str() {
            "FL-VAE" => history_summary("fl-vae"),
            "FL-GAN" => history_summary("fl-gan"),
            _ => None,
        };
        w.write_record([
            row.city.clone(),
            row.method.clone(),
            format!("{}", row.kl),
            format!("{}", row.wasserstein),
            reference.map(|r| r.kl.to_string()).unwrap_or_default(),
            reference.map(|r| r.wasserstein.to_string()).unwrap_or_default(),
            fed.map(|f| f.0.to_string()).unwrap_or_default(),
            fed.map(|f| format!("{:.6}", f.1)).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    println!("report: {} rows -> {}", rows.len(), summary_path.display());
    for row in &rows {
        let annotation = reference::reference_for(&row.city, &row.method)
            .map(|r| format!(" [reference kl {} w1 {}]", r.kl, r.wasserstein))
            .unwrap_or_default();
        println!(
            "  {} {}: kl {:.4} wasserstein {:.3}{}",
            row.city, row.method, row.kl, row.wasserstein, annotation
        );
    }
    print_trend(&rows);
    Ok(())
}

fn method_order(m: &str) -> usize {
    ["VAE", "GAN", "FL-VAE", "FL-GAN"]
        .iter()
        .position(|x| *x == m)
        .unwrap_or(usize::MAX)
}

/// Non-gating qualitative comparison: does the federated variant beat the
/// standalone one per city? Printed only; synthetic-data trends carry no
/// variance bounds.
fn print_trend(rows: &[EvalRow]) {
    let get = |city: &str, method: &str| -> Option<f64> {
        rows.iter()
            .find(|r| r.city == city && r.method == method)
            .map(|r| r.wasserstein)
    };
    let mut cities: Vec<&str> = rows.iter().map(|r| r.city.as_str()).collect();
    cities.sort_unstable();
    cities.dedup();
    for city in cities {
        for (sa, fl) in [("VAE", "FL-VAE"), ("GAN", "FL-GAN")] {
            if let (Some(s), Some(f)) = (get(city, sa), get(city, fl)) {
                println!(
                    "  trend {city}: {fl} w1 {f:.3} {} {sa} w1 {s:.3}",
                    if f <= s { "<=" } else { ">" }
                );
            }
        }
    }
}
