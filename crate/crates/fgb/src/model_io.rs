//! Text format for trained flows.
//!
//! ```text
//! fgb-flow 1
//! dim 4
//! layers 2
//! hidden 8 8
//! mask halves
//! params 220
//! 0.0123...
//! ...
//! ```
//!
//! One parameter per line in Rust's shortest round-trip decimal form, so a
//! load reproduces θ bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use fgb_core::flow::{FlowModel, MaskPattern};

use crate::error::{AppError, AppResult};

const MAGIC: &str = "fgb-flow 1";

pub fn model_to_string(model: &FlowModel) -> String {
    let mut s = String::new();
    let hidden: Vec<String> = model.hidden_sizes().iter().map(|h| h.to_string()).collect();
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(s, "dim {}", model.dim()).unwrap();
    writeln!(s, "layers {}", model.layer_count()).unwrap();
    writeln!(s, "hidden {}", hidden.join(" ")).unwrap();
    writeln!(s, "mask {}", model.mask_pattern().name()).unwrap();
    writeln!(s, "params {}", model.param_count()).unwrap();
    for t in model.theta() {
        writeln!(s, "{t:?}").unwrap();
    }
    s
}

fn header_value<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> AppResult<(usize, &'a str)> {
    let (no, line) = lines.next().ok_or_else(|| AppError::ModelFile(format!("missing `{key}` header line")))?;
    match line.split_once(' ') {
        Some((k, v)) if k == key => Ok((no, v.trim())),
        _ => Err(AppError::ModelFile(format!("line {no}: expected `{key} ...`, found `{line}`"))),
    }
}

fn parse_usize(no: usize, v: &str) -> AppResult<usize> {
    v.parse().map_err(|_| AppError::ModelFile(format!("line {no}: `{v}` is not a non-negative integer")))
}

pub fn model_from_str(text: &str) -> AppResult<FlowModel> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        Some((_, l)) => return Err(AppError::ModelFile(format!("line 1: expected `{MAGIC}`, found `{l}`"))),
        None => return Err(AppError::ModelFile("empty model file".into())),
    }
    let (no, v) = header_value(&mut lines, "dim")?;
    let dim = parse_usize(no, v)?;
    let (no, v) = header_value(&mut lines, "layers")?;
    let layers = parse_usize(no, v)?;
    let (no, v) = header_value(&mut lines, "hidden")?;
    let hidden = v.split_whitespace().map(|h| parse_usize(no, h)).collect::<AppResult<Vec<_>>>()?;
    let (no, v) = header_value(&mut lines, "mask")?;
    let mask = MaskPattern::from_name(v).ok_or_else(|| AppError::ModelFile(format!("line {no}: unknown mask `{v}`")))?;
    let (no, v) = header_value(&mut lines, "params")?;
    let count = parse_usize(no, v)?;

    let mut model =
        FlowModel::zeros(dim, layers, &hidden, mask).map_err(|e| AppError::ModelFile(format!("header: {e}")))?;
    if model.param_count() != count {
        return Err(AppError::ModelFile(format!(
            "line {no}: header declares {count} parameters but the architecture has {}",
            model.param_count()
        )));
    }
    let theta = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, l)| l.trim().parse::<f64>().map_err(|_| AppError::ModelFile(format!("line {no}: `{l}` is not a number"))))
        .collect::<AppResult<Vec<f64>>>()?;
    if theta.len() != count {
        return Err(AppError::ModelFile(format!("expected {count} parameters, found {}", theta.len())));
    }
    model.set_theta(&theta).map_err(|e| AppError::ModelFile(e.to_string()))?;
    Ok(model)
}

pub fn save_model(model: &FlowModel, path: &Path) -> AppResult<()> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> AppResult<FlowModel> {
    model_from_str(&std::fs::read_to_string(path)?)
}
