//! Dataset file format.
//!
//! CSV with header `era,id,<feature names...>,<target names...>`. Era is a
//! positive integer, features are serialized as the integers -2..=2 and
//! targets as one of `-0.5`, `-0.25`, `0`, `0.25`, `0.5`. Rows are grouped by
//! era with eras ascending. Target columns are the trailing columns whose
//! name starts with `target`; everything between `id` and the first target
//! column is a feature.
//!
//! Feature groups live in an optional sidecar next to the data file
//! (`<stem>.groups.txt`), one line per group: `name: feat_a,feat_b,...`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{DatasetError, EraBlock, TemporalTabularDataset, FEATURE_BINS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Csv,
}

const TARGET_PREFIX: &str = "target";

fn groups_sidecar(path: &Path) -> PathBuf {
    let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.groups.txt"))
}

/// Loads a dataset (and, when present, its groups sidecar).
pub fn load_dataset(
    path: &Path,
    format: DataFormat,
) -> Result<TemporalTabularDataset, DatasetError> {
    match format {
        DataFormat::Csv => {}
    }
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| DatasetError::MalformedFile("empty file".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 4 || columns[0] != "era" || columns[1] != "id" {
        return Err(DatasetError::MalformedFile(format!(
            "header must be era,id,<features...>,<targets...>, got '{header}'"
        )));
    }
    let first_target = columns
        .iter()
        .position(|c| c.starts_with(TARGET_PREFIX))
        .ok_or_else(|| {
            DatasetError::MalformedFile("no target columns (names must start with 'target')".into())
        })?;
    if first_target < 3 {
        return Err(DatasetError::MalformedFile("no feature columns".into()));
    }
    if columns[first_target..].iter().any(|c| !c.starts_with(TARGET_PREFIX)) {
        return Err(DatasetError::MalformedFile(
            "target columns must be contiguous and trailing".into(),
        ));
    }
    let feature_names: Vec<String> = columns[2..first_target].iter().map(|s| s.to_string()).collect();
    let target_names: Vec<String> = columns[first_target..].iter().map(|s| s.to_string()).collect();
    let m = feature_names.len();
    let k = target_names.len();

    let mut eras: Vec<EraBlock> = Vec::new();
    let mut cur_era: Option<u32> = None;
    let mut ids: Vec<String> = Vec::new();
    let mut feats: Vec<i8> = Vec::new();
    let mut targs: Vec<f64> = Vec::new();

    let mut flush = |era: u32, ids: &mut Vec<String>, feats: &mut Vec<i8>, targs: &mut Vec<f64>| {
        eras.push(EraBlock::new(
            era,
            std::mem::take(ids),
            std::mem::take(feats),
            std::mem::take(targs),
            m,
            k,
        ));
    };

    for (line_idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = line_idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(DatasetError::MalformedFile(format!(
                "line {line_no}: expected {} fields, got {}",
                columns.len(),
                fields.len()
            )));
        }
        let era: u32 = fields[0].parse().map_err(|_| {
            DatasetError::MalformedFile(format!("line {line_no}: bad era '{}'", fields[0]))
        })?;
        if era == 0 {
            return Err(DatasetError::MalformedFile(format!(
                "line {line_no}: era must be >= 1"
            )));
        }
        match cur_era {
            None => cur_era = Some(era),
            Some(e) if era == e => {}
            Some(e) if era > e => {
                flush(e, &mut ids, &mut feats, &mut targs);
                cur_era = Some(era);
            }
            Some(e) => {
                return Err(DatasetError::MalformedFile(format!(
                    "line {line_no}: era {era} out of order after {e}"
                )));
            }
        }
        ids.push(fields[1].to_string());
        for (j, raw) in fields[2..2 + m].iter().enumerate() {
            let v: i8 = raw.parse().map_err(|_| DatasetError::IllegalBinValue {
                value: (*raw).to_string(),
                column: feature_names[j].clone(),
                line: line_no,
            })?;
            if !FEATURE_BINS.contains(&v) {
                return Err(DatasetError::IllegalBinValue {
                    value: raw.to_string(),
                    column: feature_names[j].clone(),
                    line: line_no,
                });
            }
            feats.push(v);
        }
        for (j, raw) in fields[2 + m..].iter().enumerate() {
            let v = parse_target_bin(raw).ok_or_else(|| DatasetError::IllegalBinValue {
                value: (*raw).to_string(),
                column: target_names[j].clone(),
                line: line_no,
            })?;
            targs.push(v);
        }
    }
    if let Some(e) = cur_era {
        flush(e, &mut ids, &mut feats, &mut targs);
    }

    let feature_groups = {
        let sidecar = groups_sidecar(path);
        if sidecar.exists() {
            parse_groups(&fs::read_to_string(&sidecar)?, &feature_names)?
        } else {
            BTreeMap::new()
        }
    };

    let dataset = TemporalTabularDataset {
        eras,
        feature_names,
        target_names,
        feature_groups,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn parse_target_bin(raw: &str) -> Option<f64> {
    match raw {
        "-0.5" => Some(-0.5),
        "-0.25" => Some(-0.25),
        "0" => Some(0.0),
        "0.25" => Some(0.25),
        "0.5" => Some(0.5),
        _ => None,
    }
}

fn format_target_bin(v: f64) -> &'static str {
    if v == -0.5 {
        "-0.5"
    } else if v == -0.25 {
        "-0.25"
    } else if v == 0.0 {
        "0"
    } else if v == 0.25 {
        "0.25"
    } else if v == 0.5 {
        "0.5"
    } else {
        unreachable!("target {v} outside the legal bins")
    }
}

fn parse_groups(
    text: &str,
    feature_names: &[String],
) -> Result<BTreeMap<String, BTreeSet<usize>>, DatasetError> {
    let index: BTreeMap<&str, usize> = feature_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut groups = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (name, members) = line.split_once(':').ok_or_else(|| {
            DatasetError::MalformedFile(format!("groups line {}: missing ':'", i + 1))
        })?;
        let mut set = BTreeSet::new();
        for feat in members.split(',') {
            let feat = feat.trim();
            if feat.is_empty() {
                continue;
            }
            let &j = index.get(feat).ok_or_else(|| {
                DatasetError::MalformedFile(format!(
                    "groups line {}: unknown feature '{feat}'",
                    i + 1
                ))
            })?;
            set.insert(j);
        }
        if groups.insert(name.trim().to_string(), set).is_some() {
            return Err(DatasetError::MalformedFile(format!(
                "groups line {}: duplicate group '{}'",
                i + 1,
                name.trim()
            )));
        }
    }
    Ok(groups)
}

/// Writes the dataset (and groups sidecar, if any) in the CSV format.
pub fn save_dataset(
    dataset: &TemporalTabularDataset,
    path: &Path,
    format: DataFormat,
) -> Result<(), DatasetError> {
    match format {
        DataFormat::Csv => {}
    }
    dataset.validate()?;
    let mut out = String::new();
    out.push_str("era,id");
    for n in &dataset.feature_names {
        out.push(',');
        out.push_str(n);
    }
    for n in &dataset.target_names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for block in &dataset.eras {
        for r in 0..block.n_rows() {
            let _ = write!(out, "{},{}", block.era, block.row_ids[r]);
            for j in 0..block.n_features() {
                let _ = write!(out, ",{}", block.feature(r, j));
            }
            for j in 0..block.n_targets() {
                let _ = write!(out, ",{}", format_target_bin(block.target(r, j)));
            }
            out.push('\n');
        }
    }
    fs::write(path, out)?;

    if !dataset.feature_groups.is_empty() {
        let mut gout = String::new();
        for (name, members) in &dataset.feature_groups {
            let names: Vec<&str> = members
                .iter()
                .map(|&j| dataset.feature_names[j].as_str())
                .collect();
            let _ = writeln!(gout, "{name}: {}", names.join(","));
        }
        fs::write(groups_sidecar(path), gout)?;
    }
    Ok(())
}
