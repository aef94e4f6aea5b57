//! Dataset CSV format plus the `.meta` key=value sidecar.
//!
//! Header: `city,gnb_type,dx,dy,dz,state` followed by the 120 path columns
//! `p01_pl,p01_delay,p01_aoa_az,p01_aoa_el,p01_aod_az,p01_aod_el,...`,
//! 126 data columns in total. Floats are written shortest-round-trip so a
//! read-back is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::*;

const PATH_FIELDS: [&str; PARAMS_PER_PATH] = ["pl", "delay", "aoa_az", "aoa_el", "aod_az", "aod_el"];

fn header() -> Vec<String> {
    let mut cols = vec![
        "city".to_string(),
        "gnb_type".to_string(),
        "dx".to_string(),
        "dy".to_string(),
        "dz".to_string(),
        "state".to_string(),
    ];
    for p in 1..=NUM_PATHS {
        for f in PATH_FIELDS {
            cols.push(format!("p{p:02}_{f}"));
        }
    }
    cols
}

fn meta_path(csv_path: &Path) -> PathBuf {
    let mut p = csv_path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

/// Write the dataset CSV and its metadata sidecar.
pub fn write_dataset(dataset: &CityDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header())
        .map_err(|e| csv_error(path, &e))?;
    let mut buf = String::new();
    for r in &dataset.records {
        let mut rec = Vec::with_capacity(6 + PATH_DIM);
        rec.push(dataset.profile.city_id.clone());
        rec.push(r.condition.gnb_type.label().to_string());
        for v in [r.condition.dx, r.condition.dy, r.condition.dz] {
            buf.clear();
            write!(buf, "{v}").unwrap();
            rec.push(buf.clone());
        }
        rec.push(r.state.code().to_string());
        for v in r.paths.as_slice() {
            buf.clear();
            write!(buf, "{v}").unwrap();
            rec.push(buf.clone());
        }
        w.write_record(&rec).map_err(|e| csv_error(path, &e))?;
    }
    w.flush()?;

    let p = &dataset.profile;
    let meta = format!(
        "city_id={}\npl0={}\nslope1={}\nslope2={}\nd_break={}\nshadow_sigma={}\nlos_decay={}\nnolink_range={}\nseed={}\nstate_mode={}\nn_train={}\nn_test={}\nfrequency_ghz={}\n",
        p.city_id,
        p.pl0,
        p.slope1,
        p.slope2,
        p.d_break,
        p.shadow_sigma,
        p.los_decay,
        p.nolink_range,
        p.seed,
        p.state_mode.label(),
        dataset.n_train,
        dataset.n_test,
        FREQUENCY_GHZ,
    );
    fs::write(meta_path(path), meta)?;
    Ok(())
}

fn csv_error(path: &Path, e: &csv::Error) -> SynthError {
    let line = match e.position() {
        Some(pos) => pos.line() as usize,
        None => 0,
    };
    SynthError::Parse {
        path: path.display().to_string(),
        line,
        msg: e.to_string(),
    }
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> SynthError {
    SynthError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(path: &Path, line: usize, field: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .map_err(|_| parse_error(path, line, format!("bad float for {field}: {raw:?}")))
}

/// Read a dataset CSV and its metadata sidecar.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<CityDataset> {
    let path = path.as_ref();
    let meta_file = meta_path(path);
    let meta_text = fs::read_to_string(&meta_file)?;
    let get = |key: &str| -> Result<String> {
        meta_text
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{key}=")))
            .map(str::to_string)
            .ok_or_else(|| SynthError::BadMeta {
                path: meta_file.display().to_string(),
                msg: format!("missing key {key}"),
            })
    };
    let bad_meta = |msg: String| SynthError::BadMeta {
        path: meta_file.display().to_string(),
        msg,
    };
    let parse_meta_f64 = |key: &str, raw: String| {
        raw.parse::<f64>()
            .map_err(|_| bad_meta(format!("bad float for {key}: {raw:?}")))
    };
    let state_mode_raw = get("state_mode")?;
    let profile = CityProfile {
        city_id: get("city_id")?,
        pl0: parse_meta_f64("pl0", get("pl0")?)?,
        slope1: parse_meta_f64("slope1", get("slope1")?)?,
        slope2: parse_meta_f64("slope2", get("slope2")?)?,
        d_break: parse_meta_f64("d_break", get("d_break")?)?,
        shadow_sigma: parse_meta_f64("shadow_sigma", get("shadow_sigma")?)?,
        los_decay: parse_meta_f64("los_decay", get("los_decay")?)?,
        nolink_range: parse_meta_f64("nolink_range", get("nolink_range")?)?,
        seed: get("seed")?
            .parse::<u64>()
            .map_err(|_| bad_meta("bad seed".into()))?,
        state_mode: StateMode::from_label(&state_mode_raw)
            .ok_or_else(|| bad_meta(format!("unknown state_mode {state_mode_raw:?}")))?,
    };
    let n_train = get("n_train")?
        .parse::<usize>()
        .map_err(|_| bad_meta("bad n_train".into()))?;
    let n_test = get("n_test")?
        .parse::<usize>()
        .map_err(|_| bad_meta("bad n_test".into()))?;

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    {
        let got = rdr.headers().map_err(|e| csv_error(path, &e))?;
        let want = header();
        if got.len() != want.len() {
            return Err(parse_error(
                path,
                1,
                format!("expected {} columns, found {}", want.len(), got.len()),
            ));
        }
    }
    let expected_cols = 6 + PATH_DIM;
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_error(path, &e))?;
        let line = row
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(records.len() + 2);
        if row.len() != expected_cols {
            return Err(parse_error(
                path,
                line,
                format!("expected {expected_cols} fields, found {}", row.len()),
            ));
        }
        let gnb_type = GnbType::from_label(&row[1])
            .ok_or_else(|| parse_error(path, line, format!("unknown gnb_type {:?}", &row[1])))?;
        let condition = LinkCondition {
            dx: parse_f64(path, line, "dx", &row[2])?,
            dy: parse_f64(path, line, "dy", &row[3])?,
            dz: parse_f64(path, line, "dz", &row[4])?,
            gnb_type,
        };
        let state_code: u8 = row[5]
            .parse()
            .map_err(|_| parse_error(path, line, format!("bad state {:?}", &row[5])))?;
        let state = LinkState::from_code(state_code)
            .ok_or_else(|| parse_error(path, line, format!("unknown state code {state_code}")))?;
        let mut paths = [0.0; PATH_DIM];
        for (i, v) in paths.iter_mut().enumerate() {
            *v = parse_f64(path, line, &format!("path column {i}"), &row[6 + i])?;
        }
        records.push(LinkRecord {
            condition,
            state,
            paths: PathVector(paths),
        });
    }
    if records.is_empty() {
        return Err(SynthError::EmptyDataset);
    }
    let count = records.len();
    let split_valid = n_train + n_test == count;
    Ok(CityDataset {
        profile,
        records,
        n_train: if split_valid { n_train } else { count },
        n_test: if split_valid { n_test } else { 0 },
    })
}

#[cfg(test)]
mod tests {
    use super::super::generate::generate_city;
    use super::super::test_support::test_profile;
    use super::*;

    #[test]
    fn header_has_126_data_columns() {
        assert_eq!(header().len(), 126);
        assert_eq!(header()[6], "p01_pl");
        assert_eq!(header()[125], "p20_aod_el");
    }

    #[test]
    fn dataset_round_trips_exactly() {
        let ds = generate_city(&test_profile(), 200, &UAV_HEIGHTS_M).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alpha.csv");
        write_dataset(&ds, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn writes_are_byte_identical_across_runs() {
        let ds = generate_city(&test_profile(), 50, &UAV_HEIGHTS_M).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        write_dataset(&ds, &p1).unwrap();
        write_dataset(&ds, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn truncated_row_reports_line_number() {
        let ds = generate_city(&test_profile(), 5, &UAV_HEIGHTS_M).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alpha.csv");
        write_dataset(&ds, &path).unwrap();
        // Chop fields off the row on line 4 (header is line 1).
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        let truncated = lines[3]
            .split(',')
            .take(30)
            .collect::<Vec<_>>()
            .join(",");
        lines[3] = &truncated;
        fs::write(&path, lines.join("\n")).unwrap();
        match read_dataset(&path) {
            Err(SynthError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error with line, got {other:?}"),
        }
    }

    #[test]
    fn missing_meta_is_an_error() {
        let ds = generate_city(&test_profile(), 5, &UAV_HEIGHTS_M).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alpha.csv");
        write_dataset(&ds, &path).unwrap();
        fs::remove_file(meta_path(&path)).unwrap();
        assert!(read_dataset(&path).is_err());
    }
}
