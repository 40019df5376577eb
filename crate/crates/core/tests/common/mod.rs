//! Random valid records, brute-force oracles and a catalogue of single-field
//! corruptions. Shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;

use vllens_core::dump::{blob, BitMask, ExampleRecord, Modality, Tensor, TokenInfo};
use vllens_core::embedding::{EmbeddingTracker, TokenRef};
use vllens_core::CorpusManifest;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const WORDS: &[&str] = &["a", "the", "person", "dog", "is", "red", "car", "on", "tree", "sky"];

/// Independent modality draws, so vision and language tokens interleave.
pub fn random_modalities(rng: &mut ChaCha8Rng, l: usize) -> Vec<Modality> {
    (0..l)
        .map(|_| if rng.random_bool(0.5) { Modality::Vision } else { Modality::Language })
        .collect()
}

/// Row-stochastic f32 rows.
pub fn random_plane_data(rng: &mut ChaCha8Rng, rows: usize, l: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(rows * l);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..l).map(|_| rng.random::<f64>() + 1e-3).collect();
        let sum: f64 = raw.iter().sum();
        out.extend(raw.iter().map(|v| (v / sum) as f32));
    }
    out
}

pub fn encode_png(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().unwrap();
        w.write_image_data(rgb).unwrap();
    }
    out
}

/// A record satisfying every invariant, with given modalities.
pub fn example_from_modalities(
    rng: &mut ChaCha8Rng,
    id: &str,
    modalities: &[Modality],
    n_layers: usize,
    n_heads: usize,
    hidden_dim: usize,
) -> ExampleRecord {
    let l = modalities.len();
    let n_vision = modalities.iter().filter(|&&m| m == Modality::Vision).count();
    let cols = ((n_vision as f64).sqrt().ceil() as usize).max(1);
    let rows = n_vision.div_ceil(cols).max(1) + usize::from(rng.random_bool(0.3));
    let mut cells: Vec<(usize, usize)> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
    cells.shuffle(rng);
    let mut cells = cells.into_iter();

    let tokens: Vec<TokenInfo> = modalities
        .iter()
        .enumerate()
        .map(|(i, m)| match m {
            Modality::Language => {
                let mut t = TokenInfo::text(i, WORDS[rng.random_range(0..WORDS.len())]);
                t.is_stopword = rng.random_bool(0.2);
                t.is_special = rng.random_bool(0.1);
                t
            }
            Modality::Vision => {
                let (r, c) = cells.next().unwrap();
                let mut t = TokenInfo::patch(i, r, c);
                t.is_background = rng.random_bool(0.2);
                t
            }
        })
        .collect();

    let attention = random_plane_data(rng, n_layers * n_heads * l, l);
    let hidden: Vec<f32> = (0..(n_layers + 1) * l * hidden_dim)
        .map(|_| StandardNormal.sample(rng))
        .collect();

    let mut masks = BTreeMap::new();
    let mut image = None;
    if rng.random_bool(0.6) {
        let (h, w) = (rows * 3 + rng.random_range(0..3), cols * 3 + rng.random_range(0..3));
        let rgb: Vec<u8> = (0..h * w * 3).map(|_| rng.random()).collect();
        image = Some(encode_png(w, h, &rgb));
        let language: Vec<usize> = (0..l).filter(|&i| modalities[i] == Modality::Language).collect();
        for &t in language.iter().take(rng.random_range(0..=2)) {
            masks.insert(t, BitMask::from_fn(h, w, |_, _| rng.random_bool(0.4)));
        }
    }
    let mut metadata = BTreeMap::new();
    metadata.insert("question".to_string(), Value::from(format!("what is in {id}?")));

    ExampleRecord {
        id: id.to_string(),
        tokens,
        grid_rows: rows,
        grid_cols: cols,
        attention: Tensor::new(vec![n_layers, n_heads, l, l], attention),
        hidden_states: Tensor::new(vec![n_layers + 1, l, hidden_dim], hidden),
        image,
        masks,
        metadata,
    }
}

pub fn random_example(
    rng: &mut ChaCha8Rng,
    id: &str,
    l: usize,
    n_layers: usize,
    n_heads: usize,
    hidden_dim: usize,
) -> ExampleRecord {
    let mods = random_modalities(rng, l);
    example_from_modalities(rng, id, &mods, n_layers, n_heads, hidden_dim)
}

/// A manifest and `n` records of random size sharing its shape parameters.
pub fn random_corpus(rng: &mut ChaCha8Rng, n: usize, max_l: usize) -> (CorpusManifest, Vec<ExampleRecord>) {
    let n_layers = rng.random_range(1..=3);
    let n_heads = rng.random_range(1..=3);
    let d = rng.random_range(1..=8);
    let manifest = CorpusManifest::new("random", n_layers, n_heads, d);
    let records = (0..n)
        .map(|i| {
            let l = rng.random_range(1..=max_l);
            random_example(rng, &format!("r{i:03}"), l, n_layers, n_heads, d)
        })
        .collect();
    (manifest, records)
}

/// All files under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

// ---------------------------------------------------------------- oracles

pub fn weight(ex: &ExampleRecord, layer: usize, head: usize, q: usize, k: usize) -> f64 {
    let l = ex.tokens.len();
    let flat = ((layer * ex.n_heads() + head) * l + q) * l + k;
    ex.attention.data()[flat] as f64
}

/// Naive gather of the (query modality, key modality) submatrix.
pub fn block_oracle(ex: &ExampleRecord, layer: usize, head: usize, qm: Modality, km: Modality) -> Vec<Vec<f64>> {
    let l = ex.tokens.len();
    let mut out = Vec::new();
    for q in 0..l {
        if ex.tokens[q].modality != qm {
            continue;
        }
        let mut row = Vec::new();
        for k in 0..l {
            if ex.tokens[k].modality == km {
                row.push(weight(ex, layer, head, q, k));
            }
        }
        out.push(row);
    }
    out
}

fn oracle_block_mean(
    ex: &ExampleRecord,
    layer: usize,
    head: usize,
    exclude: &BTreeSet<usize>,
    qm: Option<Modality>,
    km: Option<Modality>,
) -> Option<f64> {
    let l = ex.tokens.len();
    let (mut sum, mut n) = (0.0, 0usize);
    for q in 0..l {
        for k in 0..l {
            if exclude.contains(&q) || exclude.contains(&k) {
                continue;
            }
            if qm.is_some_and(|m| ex.tokens[q].modality != m) || km.is_some_and(|m| ex.tokens[k].modality != m) {
                continue;
            }
            sum += weight(ex, layer, head, q, k);
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Definitional value of a built-in metric; `None` means degenerate.
pub fn metric_oracle(ex: &ExampleRecord, layer: usize, head: usize, name: &str, exclude: &BTreeSet<usize>) -> Option<f64> {
    use Modality::{Language as L, Vision as V};
    let b = |qm, km| oracle_block_mean(ex, layer, head, exclude, Some(qm), Some(km));
    match name {
        "mean_all" => oracle_block_mean(ex, layer, head, exclude, None, None),
        "mean_l2l" => b(L, L),
        "mean_v2v" => b(V, V),
        "mean_v2l" => b(V, L),
        "mean_l2v" => b(L, V),
        "mean_cross_modal" => Some((b(V, L)? + b(L, V)?) / 2.0),
        "mean_intra_modal" => Some((b(V, V)? + b(L, L)?) / 2.0),
        "mean_v2v_without_self" => {
            let l = ex.tokens.len();
            let mut row_means = Vec::new();
            for q in 0..l {
                if exclude.contains(&q) || ex.tokens[q].modality != V {
                    continue;
                }
                let (qr, qc) = (ex.tokens[q].patch_row.unwrap() as i64, ex.tokens[q].patch_col.unwrap() as i64);
                let (mut sum, mut n) = (0.0, 0usize);
                for k in 0..l {
                    if exclude.contains(&k) || ex.tokens[k].modality != V {
                        continue;
                    }
                    let (kr, kc) = (ex.tokens[k].patch_row.unwrap() as i64, ex.tokens[k].patch_col.unwrap() as i64);
                    if (qr - kr).abs().max((qc - kc).abs()) <= 1 {
                        continue;
                    }
                    sum += weight(ex, layer, head, q, k);
                    n += 1;
                }
                if n > 0 {
                    row_means.push(sum / n as f64);
                }
            }
            (!row_means.is_empty()).then(|| row_means.iter().sum::<f64>() / row_means.len() as f64)
        }
        other => panic!("no oracle for {other}"),
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || a == b
}

/// Average ranks by counting, O(n²).
pub fn ranks_oracle(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let below = x.iter().filter(|&&v| v < xi).count() as f64;
            let equal = x.iter().filter(|&&v| v == xi).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    pearson_oracle(&ranks_oracle(x), &ranks_oracle(y))
}

/// Per-pixel average of each patch, by locating every pixel's patch.
pub fn mask_pixel_oracle(mask: &BitMask, grid_rows: usize, grid_cols: usize) -> Vec<f64> {
    let (h, w) = (mask.rows(), mask.cols());
    let owner = |p: usize, parts: usize, len: usize| (0..parts).find(|&i| i * len / parts <= p && p < (i + 1) * len / parts).unwrap();
    let mut on = vec![0u64; grid_rows * grid_cols];
    let mut all = vec![0u64; grid_rows * grid_cols];
    for y in 0..h {
        let r = owner(y, grid_rows, h);
        for x in 0..w {
            let c = owner(x, grid_cols, w);
            all[r * grid_cols + c] += 1;
            on[r * grid_cols + c] += u64::from(mask.get(y, x));
        }
    }
    on.iter().zip(&all).map(|(&a, &b)| a as f64 / b as f64).collect()
}

pub fn cosine_oracle(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na * nb)
}

/// Exhaustive scan; candidates sorted by (distance, example_id, token_index).
pub fn nearest_oracle(tracker: &EmbeddingTracker, query: &TokenRef, layer: usize) -> Option<(f64, String, usize)> {
    let examples = tracker.corpus().examples();
    let qe = examples.iter().find(|e| e.id == query.example_id)?;
    let want = qe.tokens[query.token_index].modality.opposite();
    let qv = qe.hidden(layer, query.token_index);
    let mut all = Vec::new();
    for (i, e) in examples.iter().enumerate() {
        for &t in tracker.retained(i) {
            if e.tokens[t].modality == want {
                all.push((cosine_oracle(qv, e.hidden(layer, t)), e.id.clone(), t));
            }
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| (&a.1, a.2).cmp(&(&b.1, b.2))));
    all.into_iter().next()
}

// ------------------------------------------------------------- corruptions

pub enum Scope {
    Manifest,
    Example,
}

pub struct Injection {
    pub name: &'static str,
    pub scope: Scope,
    /// Applies the corruption to `root`, targeting example `id` where relevant.
    /// Returns false when the target example has nothing to corrupt.
    pub apply: fn(&Path, &str) -> bool,
}

fn edit_json(path: &Path, f: impl FnOnce(&mut Value) -> bool) -> bool {
    let mut v: Value = serde_json::from_slice(&fs::read(path).unwrap()).unwrap();
    let changed = f(&mut v);
    if changed {
        fs::write(path, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    }
    changed
}

fn manifest(root: &Path, f: impl FnOnce(&mut Value) -> bool) -> bool {
    edit_json(&root.join("manifest.json"), f)
}

fn tokens(root: &Path, id: &str, f: impl FnOnce(&mut Value) -> bool) -> bool {
    edit_json(&root.join("examples").join(id).join("tokens.json"), f)
}

fn file(root: &Path, id: &str, name: &str) -> PathBuf {
    root.join("examples").join(id).join(name)
}

fn edit_tensor(path: &Path, f: impl FnOnce(&mut Vec<usize>, &mut Vec<f32>) -> bool) -> bool {
    let (mut dims, mut data) = blob::decode_f32(&fs::read(path).unwrap()).unwrap();
    let changed = f(&mut dims, &mut data);
    if changed {
        fs::write(path, blob::encode_f32(&dims, &data)).unwrap();
    }
    changed
}

fn edit_bytes(path: &Path, f: impl FnOnce(&mut Vec<u8>)) -> bool {
    let mut b = fs::read(path).unwrap();
    f(&mut b);
    fs::write(path, b).unwrap();
    true
}

fn token_where(v: &mut Value, modality: &str) -> Option<usize> {
    v["tokens"].as_array()?.iter().position(|t| t["modality"] == modality)
}

fn first_mask(root: &Path, id: &str) -> Option<PathBuf> {
    let dir = file(root, id, "masks");
    let mut entries: Vec<PathBuf> = fs::read_dir(dir).ok()?.map(|e| e.unwrap().path()).collect();
    entries.sort();
    entries.into_iter().next()
}

/// Offset of the first payload byte of a blob file.
pub fn payload_offset(bytes: &[u8]) -> usize {
    blob::split(bytes).unwrap().0.encoded_len()
}

pub fn injections() -> Vec<Injection> {
    use Scope::*;
    vec![
        Injection { name: "manifest format_version", scope: Manifest, apply: |r, _| manifest(r, |v| { v["format_version"] = 2.into(); true }) },
        Injection { name: "manifest n_heads zero", scope: Manifest, apply: |r, _| manifest(r, |v| { v["n_heads"] = 0.into(); true }) },
        Injection { name: "manifest n_layers", scope: Manifest, apply: |r, _| manifest(r, |v| { v["n_layers"] = (v["n_layers"].as_u64().unwrap() + 1).into(); true }) },
        Injection { name: "manifest hidden_dim", scope: Manifest, apply: |r, _| manifest(r, |v| { v["hidden_dim"] = (v["hidden_dim"].as_u64().unwrap() + 1).into(); true }) },
        Injection { name: "manifest duplicate id", scope: Manifest, apply: |r, id| manifest(r, |v| { v["example_ids"].as_array_mut().unwrap().push(id.into()); true }) },
        Injection { name: "manifest unknown id", scope: Manifest, apply: |r, _| manifest(r, |v| { v["example_ids"].as_array_mut().unwrap().push("ghost".into()); true }) },
        Injection { name: "manifest unsafe id", scope: Manifest, apply: |r, _| manifest(r, |v| { v["example_ids"].as_array_mut().unwrap().push("../x".into()); true }) },
        Injection { name: "manifest malformed", scope: Manifest, apply: |r, _| edit_bytes(&r.join("manifest.json"), |b| b.truncate(b.len() / 2)) },
        Injection { name: "tokens.json missing", scope: Example, apply: |r, id| fs::remove_file(file(r, id, "tokens.json")).is_ok() },
        Injection { name: "attention.bin missing", scope: Example, apply: |r, id| fs::remove_file(file(r, id, "attention.bin")).is_ok() },
        Injection { name: "hidden.bin missing", scope: Example, apply: |r, id| fs::remove_file(file(r, id, "hidden.bin")).is_ok() },
        Injection { name: "tokens.json malformed", scope: Example, apply: |r, id| edit_bytes(&file(r, id, "tokens.json"), |b| b.insert(0, b'x')) },
        Injection { name: "tokens id mismatch", scope: Example, apply: |r, id| tokens(r, id, |v| { v["id"] = "other".into(); true }) },
        Injection { name: "token index", scope: Example, apply: |r, id| tokens(r, id, |v| { v["tokens"][0]["index"] = 999.into(); true }) },
        Injection { name: "token dropped", scope: Example, apply: |r, id| tokens(r, id, |v| { v["tokens"].as_array_mut().unwrap().pop(); true }) },
        Injection { name: "grid rows zero", scope: Example, apply: |r, id| tokens(r, id, |v| { v["grid_rows"] = 0.into(); true }) },
        Injection { name: "patch outside grid", scope: Example, apply: |r, id| tokens(r, id, |v| match token_where(v, "VISION") {
            Some(i) => { v["tokens"][i]["patch_row"] = 10_000.into(); true }
            None => false,
        }) },
        Injection { name: "patch missing column", scope: Example, apply: |r, id| tokens(r, id, |v| match token_where(v, "VISION") {
            Some(i) => v["tokens"][i].as_object_mut().unwrap().remove("patch_col").is_some(),
            None => false,
        }) },
        Injection { name: "duplicate patch", scope: Example, apply: |r, id| tokens(r, id, |v| {
            let vis: Vec<usize> = v["tokens"].as_array().unwrap().iter().enumerate().filter(|(_, t)| t["modality"] == "VISION").map(|(i, _)| i).collect();
            if vis.len() < 2 { return false; }
            let (a, b) = (vis[0], vis[1]);
            v["tokens"][b]["patch_row"] = v["tokens"][a]["patch_row"].clone();
            v["tokens"][b]["patch_col"] = v["tokens"][a]["patch_col"].clone();
            true
        }) },
        Injection { name: "language token with patch", scope: Example, apply: |r, id| tokens(r, id, |v| match token_where(v, "LANGUAGE") {
            Some(i) => { v["tokens"][i]["patch_row"] = 0.into(); v["tokens"][i]["patch_col"] = 0.into(); true }
            None => false,
        }) },
        Injection { name: "background language token", scope: Example, apply: |r, id| tokens(r, id, |v| match token_where(v, "LANGUAGE") {
            Some(i) => { v["tokens"][i]["is_background"] = true.into(); true }
            None => false,
        }) },
        Injection { name: "unknown modality", scope: Example, apply: |r, id| tokens(r, id, |v| { v["tokens"][0]["modality"] = "AUDIO".into(); true }) },
        Injection { name: "attention magic", scope: Example, apply: |r, id| edit_bytes(&file(r, id, "attention.bin"), |b| b[0] = b'X') },
        Injection { name: "attention version", scope: Example, apply: |r, id| edit_bytes(&file(r, id, "attention.bin"), |b| b[4] = 2) },
        Injection { name: "attention dtype", scope: Example, apply: |r, id| edit_bytes(&file(r, id, "attention.bin"), |b| { let o = payload_offset(b); b[o - 1] = 7; }) },
        Injection { name: "attention truncated", scope: Example, apply: |r, id| edit_bytes(&file(r, id, "attention.bin"), |b| { b.pop(); }) },
        Injection { name: "attention trailing byte", scope: Example, apply: |r, id| edit_bytes(&file(r, id, "attention.bin"), |b| b.push(0)) },
        Injection { name: "attention row sum 0.9", scope: Example, apply: |r, id| edit_tensor(&file(r, id, "attention.bin"), |dims, data| {
            let l = dims[3];
            for v in &mut data[..l] { *v *= 0.9; }
            true
        }) },
        Injection { name: "attention NaN", scope: Example, apply: |r, id| edit_tensor(&file(r, id, "attention.bin"), |_, data| { data[0] = f32::NAN; true }) },
        Injection { name: "attention negative", scope: Example, apply: |r, id| edit_tensor(&file(r, id, "attention.bin"), |dims, data| {
            if dims[3] < 2 { return false; }
            let moved = data[0] + 0.5;
            data[0] = -0.5;
            data[1] += moved;
            true
        }) },
        Injection { name: "attention rank", scope: Example, apply: |r, id| edit_tensor(&file(r, id, "attention.bin"), |dims, _| {
            let l = dims.pop().unwrap();
            let last = dims.pop().unwrap();
            dims.push(last * l);
            true
        }) },
        Injection { name: "attention exponent byte", scope: Example, apply: |r, id| edit_bytes(&file(r, id, "attention.bin"), |b| { let o = payload_offset(b); b[o + 3] ^= 0x40; }) },
        Injection { name: "hidden n_layers slices", scope: Example, apply: |r, id| edit_tensor(&file(r, id, "hidden.bin"), |dims, data| {
            let slice = dims[1] * dims[2];
            dims[0] -= 1;
            data.truncate(data.len() - slice);
            true
        }) },
        Injection { name: "hidden infinite", scope: Example, apply: |r, id| edit_tensor(&file(r, id, "hidden.bin"), |_, data| { data[0] = f32::INFINITY; true }) },
        Injection { name: "hidden dim", scope: Example, apply: |r, id| edit_tensor(&file(r, id, "hidden.bin"), |dims, data| {
            let rows = dims[0] * dims[1];
            dims[2] += 1;
            data.extend(std::iter::repeat_n(0.0, rows));
            true
        }) },
        Injection { name: "mask on vision token", scope: Example, apply: |r, id| {
            let Some(path) = first_mask(r, id) else { return false };
            let t: Value = serde_json::from_slice(&fs::read(file(r, id, "tokens.json")).unwrap()).unwrap();
            let Some(vis) = t["tokens"].as_array().unwrap().iter().position(|t| t["modality"] == "VISION") else { return false };
            fs::rename(path, file(r, id, "masks").join(format!("{vis}.bin"))).unwrap();
            true
        } },
        Injection { name: "mask out of range key", scope: Example, apply: |r, id| {
            let Some(path) = first_mask(r, id) else { return false };
            fs::rename(path, file(r, id, "masks").join("100000.bin")).unwrap();
            true
        } },
        Injection { name: "mask bad name", scope: Example, apply: |r, id| {
            let Some(path) = first_mask(r, id) else { return false };
            fs::rename(path, file(r, id, "masks").join("person.bin")).unwrap();
            true
        } },
        Injection { name: "mask size", scope: Example, apply: |r, id| {
            let Some(path) = first_mask(r, id) else { return false };
            let (rows, cols, _) = blob::decode_packed_bits(&fs::read(&path).unwrap()).unwrap();
            let m = BitMask::new(rows + 1, cols);
            fs::write(path, blob::encode_packed_bits(rows + 1, cols, m.packed())).unwrap();
            true
        } },
        Injection { name: "mask padding bits", scope: Example, apply: |r, id| {
            let Some(path) = first_mask(r, id) else { return false };
            let (rows, cols, mut packed) = blob::decode_packed_bits(&fs::read(&path).unwrap()).unwrap();
            if cols % 8 == 0 { return false; }
            packed[cols.div_ceil(8) - 1] |= 1;
            fs::write(path, blob::encode_packed_bits(rows, cols, &packed)).unwrap();
            true
        } },
        Injection { name: "mask dtype", scope: Example, apply: |r, id| {
            let Some(path) = first_mask(r, id) else { return false };
            fs::write(path, blob::encode_f32(&[1], &[1.0])).unwrap();
            true
        } },
        Injection { name: "image not png", scope: Example, apply: |r, id| {
            let path = file(r, id, "image.png");
            path.exists() && edit_bytes(&path, |b| b[1] = b'X')
        } },
        Injection { name: "image size", scope: Example, apply: |r, id| {
            if first_mask(r, id).is_none() { return false; }
            let path = file(r, id, "image.png");
            fs::write(path, encode_png(1, 1, &[0, 0, 0])).unwrap();
            true
        } },
    ]
}

/// Conditional P_{j|i} for a given precision, from raw squared distances,
/// normalised with log-sum-exp.
pub fn conditional_oracle(x: &ndarray::Array2<f64>, i: usize, precision: f64) -> Vec<f64> {
    let n = x.nrows();
    let logits: Vec<f64> = (0..n)
        .map(|j| {
            if j == i {
                f64::NEG_INFINITY
            } else {
                let d2: f64 = x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (a - b).powi(2)).sum();
                -precision * d2
            }
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| (l - lse).exp()).collect()
}

/// 2^H of a distribution, H in bits.
pub fn perplexity_oracle(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum();
    h.exp2()
}

/// (P_{j|i} + P_{i|j}) / 2N, row-major.
pub fn joint_oracle(x: &ndarray::Array2<f64>, precisions: &[f64]) -> Vec<f64> {
    let n = x.nrows();
    let cond: Vec<Vec<f64>> = (0..n).map(|i| conditional_oracle(x, i, precisions[i])).collect();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i][j] + cond[j][i]) / (2.0 * n as f64);
        }
    }
    p
}

/// KL(P‖Q) with Student-t Q computed from the 2-D embedding `y`.
pub fn kl_oracle(p: &[f64], y: &ndarray::Array2<f64>) -> f64 {
    let n = y.nrows();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d2 = (y[[i, 0]] - y[[j, 0]]).powi(2) + (y[[i, 1]] - y[[j, 1]]).powi(2);
                num[i * n + j] = 1.0 / (1.0 + d2);
                z += num[i * n + j];
            }
        }
    }
    p.iter()
        .zip(&num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &q)| pij * (pij / (q / z)).ln())
        .sum()
}
