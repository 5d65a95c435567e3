//! Plain-text persistence for level tensors and hierarchy states.
//!
//! A tensor file is CSV with one row per multi-index in lexicographic
//! order, preceded by comment lines recording the grid (`d`, `L`, `M`) and
//! the level `n`. A state bundle is a directory with one tensor file per
//! level and a small manifest. Values print in shortest round-trip form,
//! so write-then-read is bitwise faithful and reruns are byte-identical.

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::scalar::Real;
use crate::state::HierState;
use crate::tensor::LevelTensor;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write as _;
use std::path::Path;

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// One row per multi-index (lexicographic, which coincides with the flat
/// storage order), columns `i1..in,value`.
pub fn write_tensor_csv<T: Real>(path: &Path, grid: &TorusGrid<T>, tensor: &LevelTensor<T>) -> Result<()> {
    let n = tensor.level();
    let mut out = String::new();
    out.push_str("# symmetric level tensor, midpoint values on the cell grid\n");
    out.push_str(&format!(
        "# d = {}, L = {}, M = {}, n = {}\n",
        grid.dim(),
        grid.side(),
        grid.cells_per_side(),
        n
    ));
    for i in 1..=n {
        out.push_str(&format!("i{i},"));
    }
    out.push_str("value\n");
    let v = grid.n_cells();
    let rows = v.pow(n as u32);
    let mut tuple = vec![0usize; n];
    for row in 0..rows {
        // lexicographic order: i1 most significant
        let mut rest = row;
        for slot in (0..n).rev() {
            tuple[slot] = rest % v;
            rest /= v;
        }
        for &idx in &tuple {
            out.push_str(&format!("{idx},"));
        }
        let x = tensor.values()[tensor.flat(&tuple)];
        out.push_str(&format!("{x}\n"));
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Inverse of [`write_tensor_csv`]; the grid is reconstructed from the
/// header comments and returned alongside the tensor.
pub fn read_tensor_csv<T: Real>(path: &Path) -> Result<(TorusGrid<T>, LevelTensor<T>)> {
    let text = fs::read_to_string(path)?;
    let mut dims: Option<(usize, f64, usize, usize)> = None;
    let mut data_rows: Vec<&str> = Vec::new();
    let mut saw_header = false;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(parsed) = parse_grid_comment(rest) {
                dims = Some(parsed);
            }
            continue;
        }
        if !saw_header {
            // column names row
            saw_header = true;
            continue;
        }
        data_rows.push(line);
    }
    let (d, l, m, n) = dims.ok_or_else(|| {
        parse_err(path, "missing `# d = .., L = .., M = .., n = ..` header")
    })?;
    let grid = TorusGrid::new(d, m, T::of(l))?;
    let v = grid.n_cells();
    let expect = v.pow(n as u32);
    if data_rows.len() != expect {
        return Err(parse_err(
            path,
            format!("level {n} on this grid needs {expect} rows, found {}", data_rows.len()),
        ));
    }
    let mut tensor = LevelTensor::zeros(&grid, n);
    let mut tuple = vec![0usize; n];
    for row in data_rows {
        let mut fields = row.split(',');
        for slot in tuple.iter_mut() {
            let idx = fields
                .next()
                .ok_or_else(|| parse_err(path, format!("row `{row}` is missing index columns")))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|e| parse_err(path, format!("bad index `{idx}`: {e}")))?;
            if idx >= v {
                return Err(parse_err(path, format!("index {idx} outside 0..{v}")));
            }
            *slot = idx;
        }
        let value = fields
            .next()
            .ok_or_else(|| parse_err(path, format!("row `{row}` is missing the value column")))?;
        let x: f64 = value
            .trim()
            .parse()
            .map_err(|e| parse_err(path, format!("bad value `{value}`: {e}")))?;
        tensor.set(&tuple, T::of(x));
    }
    Ok((grid, tensor))
}

fn parse_grid_comment(rest: &str) -> Option<(usize, f64, usize, usize)> {
    let mut d = None;
    let mut l = None;
    let mut m = None;
    let mut n = None;
    for part in rest.split(',') {
        let mut kv = part.splitn(2, '=');
        let key = kv.next()?.trim();
        let value = kv.next()?.trim();
        match key {
            "d" => d = value.parse().ok(),
            "L" => l = value.parse().ok(),
            "M" => m = value.parse().ok(),
            "n" => n = value.parse().ok(),
            _ => {}
        }
    }
    Some((d?, l?, m?, n?))
}

#[derive(Serialize, Deserialize)]
struct BundleManifest {
    kind: String,
    d: usize,
    l: f64,
    m: usize,
    n_max: usize,
    levels: Vec<String>,
}

/// Write a hierarchy state as a directory: `level_0.csv .. level_N.csv`
/// plus `manifest.toml`. The directory is created if missing.
pub fn write_state_bundle<T: Real>(dir: &Path, state: &HierState<T>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let grid = state.grid();
    let mut levels = Vec::with_capacity(state.n_max() + 1);
    for (n, tensor) in state.levels().iter().enumerate() {
        let name = format!("level_{n}.csv");
        write_tensor_csv(&dir.join(&name), grid, tensor)?;
        levels.push(name);
    }
    let manifest = BundleManifest {
        kind: "hier-state".to_string(),
        d: grid.dim(),
        l: grid.side().dbl(),
        m: grid.cells_per_side(),
        n_max: state.n_max(),
        levels,
    };
    let text = toml::to_string(&manifest)
        .map_err(|e| parse_err(dir, format!("manifest serialization: {e}")))?;
    fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

pub fn read_state_bundle<T: Real>(dir: &Path) -> Result<HierState<T>> {
    let manifest_path = dir.join("manifest.toml");
    let text = fs::read_to_string(&manifest_path)?;
    let manifest: BundleManifest = toml::from_str(&text)
        .map_err(|e| parse_err(&manifest_path, e.to_string()))?;
    if manifest.kind != "hier-state" {
        return Err(parse_err(
            &manifest_path,
            format!("expected kind `hier-state`, found `{}`", manifest.kind),
        ));
    }
    if manifest.levels.len() != manifest.n_max + 1 {
        return Err(parse_err(
            &manifest_path,
            "level file list does not match n_max",
        ));
    }
    let grid: TorusGrid<T> = TorusGrid::new(manifest.d, manifest.m, T::of(manifest.l))?;
    let mut tensors = Vec::with_capacity(manifest.levels.len());
    for (n, name) in manifest.levels.iter().enumerate() {
        let path = dir.join(name);
        let (file_grid, tensor) = read_tensor_csv::<T>(&path)?;
        grid.same_as(&file_grid, "state bundle level file")?;
        if tensor.level() != n {
            return Err(parse_err(&path, format!("expected level {n}, found {}", tensor.level())));
        }
        tensors.push(tensor);
    }
    HierState::new(grid, tensors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tensor_csv_roundtrips_bitwise() {
        let grid: TorusGrid<f64> = TorusGrid::line(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut t = LevelTensor::from_fn(&grid, 2, |_| rng.random_range(-2.0..2.0));
        t.symmetrize();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_tensor_csv(&path, &grid, &t).unwrap();
        let (g2, t2) = read_tensor_csv::<f64>(&path).unwrap();
        assert!(grid.same_as(&g2, "roundtrip").is_ok());
        assert_eq!(t.values(), t2.values());

        // deterministic bytes on rewrite
        let first = std::fs::read(&path).unwrap();
        write_tensor_csv(&path, &grid, &t).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }

    #[test]
    fn state_bundle_roundtrips() {
        let grid: TorusGrid<f64> = TorusGrid::line(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let levels = (0..=2)
            .map(|n| {
                let mut t = LevelTensor::from_fn(&grid, n, |_| rng.random_range(-1.0..1.0));
                t.symmetrize();
                t
            })
            .collect();
        let state = HierState::new(grid, levels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bundle = dir.path().join("state");
        write_state_bundle(&bundle, &state).unwrap();
        let back: HierState<f64> = read_state_bundle(&bundle).unwrap();
        assert_eq!(back.n_max(), 2);
        for n in 0..=2 {
            assert_eq!(state.level(n).values(), back.level(n).values());
        }
    }

    #[test]
    fn malformed_files_are_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "i1,value\n0,1.0\n").unwrap();
        let err = read_tensor_csv::<f64>(&path).unwrap_err();
        assert!(err.to_string().contains("header"), "{err}");

        std::fs::write(
            &path,
            "# d = 1, L = 1, M = 3, n = 1\ni1,value\n0,1.0\n1,oops\n2,0.5\n",
        )
        .unwrap();
        let err = read_tensor_csv::<f64>(&path).unwrap_err();
        assert!(err.to_string().contains("oops"), "{err}");

        std::fs::write(&path, "# d = 1, L = 1, M = 3, n = 1\ni1,value\n0,1.0\n").unwrap();
        let err = read_tensor_csv::<f64>(&path).unwrap_err();
        assert!(err.to_string().contains("rows"), "{err}");
    }
}
