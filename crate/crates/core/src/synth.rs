//! Synthetic dumps with planted, checkable structure.
//!
//! Every example has the sequence `[CLS] w_1 … w_n [SEP] p_(0,0) … p_(R-1,C-1)`:
//! special tokens, words, then patches in row-major order. Unplanted attention
//! rows are independent uniform draws normalised to sum to one; hidden states
//! are standard normal.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dump::{BitMask, CorpusManifest, DumpWriter, ExampleRecord, Tensor, TokenInfo};
use crate::embedding::StopwordList;
use crate::error::SynthError;
use crate::metrics::mask::mask_to_patch_grid;

const VOCABULARY: &[&str] = &[
    "a", "the", "man", "woman", "dog", "is", "on", "holding", "red", "table", "plants", "of",
    "street", "car", "looking", "at", "with", "shirt", "sky", "window", "bicycle", "in", "tree",
    "umbrella",
];

/// Text given to the word a MASK_ALIGNED_HEAD plant targets.
pub const PLANTED_WORD: &str = "person";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlantKind {
    /// Vision rows of (layer, head) attend to a word in proportion to its mask.
    MaskAlignedHead,
    /// A patch's hidden state equals a word's at one hidden layer.
    CrossModalTwin,
    /// Every row of (layer, head) is uniform.
    UniformHead,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    /// Standard deviation of the uniform noise added before renormalising.
    #[serde(default)]
    pub noise: f64,
    /// Word position (0-based, excluding `[CLS]`). Defaults to 0.
    #[serde(default)]
    pub word: Option<usize>,
    /// Patch position in row-major grid order. Defaults to 0.
    #[serde(default)]
    pub patch: Option<usize>,
    /// Example index for CROSS_MODAL_TWIN. Defaults to 0.
    #[serde(default)]
    pub example: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plant {
    pub kind: PlantKind,
    pub layer: usize,
    #[serde(default)]
    pub head: usize,
    #[serde(default)]
    pub params: PlantParams,
}

fn default_model_name() -> String {
    "synthetic-vl".into()
}

fn default_patch_pixels() -> usize {
    16
}

fn default_background_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_model_name")]
    pub model_name: String,
    pub n_examples: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub n_text_tokens: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    /// Image pixels per patch side.
    #[serde(default = "default_patch_pixels")]
    pub patch_pixels: usize,
    /// Probability that an unplanted patch is flagged as background.
    #[serde(default = "default_background_fraction")]
    pub background_fraction: f64,
    #[serde(default)]
    pub plants: Vec<Plant>,
}

impl SynthSpec {
    pub fn new(
        n_examples: usize,
        n_layers: usize,
        n_heads: usize,
        grid: (usize, usize),
        n_text_tokens: usize,
        hidden_dim: usize,
        seed: u64,
    ) -> Self {
        Self {
            model_name: default_model_name(),
            n_examples,
            n_layers,
            n_heads,
            grid_rows: grid.0,
            grid_cols: grid.1,
            n_text_tokens,
            hidden_dim,
            seed,
            patch_pixels: default_patch_pixels(),
            background_fraction: default_background_fraction(),
            plants: Vec::new(),
        }
    }

    pub fn with_plant(mut self, plant: Plant) -> Self {
        self.plants.push(plant);
        self
    }

    pub fn seq_len(&self) -> usize {
        self.n_text_tokens + 2 + self.grid_rows * self.grid_cols
    }

    /// Sequence index of word `w`.
    pub fn word_index(w: usize) -> usize {
        w + 1
    }

    /// Sequence index of patch `p` (row-major).
    pub fn patch_index(&self, p: usize) -> usize {
        self.n_text_tokens + 2 + p
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: String| Err(SynthError::Spec(m));
        for (name, v) in [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("grid_rows", self.grid_rows),
            ("grid_cols", self.grid_cols),
            ("n_text_tokens", self.n_text_tokens),
            ("hidden_dim", self.hidden_dim),
            ("patch_pixels", self.patch_pixels),
        ] {
            if v == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.background_fraction) {
            return err("background_fraction must be in [0, 1]".into());
        }
        let n_patches = self.grid_rows * self.grid_cols;
        for (i, p) in self.plants.iter().enumerate() {
            let layer_limit = match p.kind {
                PlantKind::CrossModalTwin => self.n_layers + 1,
                _ => self.n_layers,
            };
            if p.layer >= layer_limit {
                return err(format!("plant {i}: layer {} out of range (< {layer_limit})", p.layer));
            }
            if p.kind != PlantKind::CrossModalTwin && p.head >= self.n_heads {
                return err(format!("plant {i}: head {} out of range (< {})", p.head, self.n_heads));
            }
            if !(p.params.noise.is_finite() && p.params.noise >= 0.0) {
                return err(format!("plant {i}: noise must be finite and non-negative"));
            }
            if p.params.word.unwrap_or(0) >= self.n_text_tokens {
                return err(format!("plant {i}: word out of range"));
            }
            if p.params.patch.unwrap_or(0) >= n_patches {
                return err(format!("plant {i}: patch out of range"));
            }
            if p.kind == PlantKind::CrossModalTwin && p.params.example.unwrap_or(0) >= self.n_examples {
                return err(format!("plant {i}: example out of range"));
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest::new(&self.model_name, self.n_layers, self.n_heads, self.hidden_dim)
    }

    pub fn example_id(i: usize) -> String {
        format!("ex{i:04}")
    }
}

/// Union of 5–8 random axis-aligned ellipses.
fn ellipse_union(rng: &mut ChaCha8Rng, height: usize, width: usize) -> BitMask {
    let n = rng.random_range(5..=8);
    let (h, w) = (height as f64, width as f64);
    let ellipses: Vec<(f64, f64, f64, f64)> = (0..n)
        .map(|_| {
            (
                rng.random_range(0.15..0.85) * h,
                rng.random_range(0.15..0.85) * w,
                rng.random_range(0.1..0.2) * h,
                rng.random_range(0.1..0.2) * w,
            )
        })
        .collect();
    BitMask::from_fn(height, width, |r, c| {
        let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
        ellipses
            .iter()
            .any(|&(cy, cx, ry, rx)| ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0)
    })
}

const BLOB_ATTEMPTS: usize = 64;
const MAX_EMPTY_PATCH_SHARE: f64 = 0.5;
const MAX_FULL_PATCH_SHARE: f64 = 0.3;

/// Ellipse union resampled until at most half the patches are empty and at
/// most 30% are full, so patch fractions are not dominated by tied values.
/// Falls back to the last draw after a fixed number of attempts.
fn blob_mask(rng: &mut ChaCha8Rng, spec: &SynthSpec, height: usize, width: usize) -> BitMask {
    let n_patches = (spec.grid_rows * spec.grid_cols) as f64;
    let mut mask = ellipse_union(rng, height, width);
    for _ in 1..BLOB_ATTEMPTS {
        let grid = mask_to_patch_grid(&mask, spec.grid_rows, spec.grid_cols)
            .expect("image is at least one pixel per patch");
        let empty = grid.values.iter().filter(|&&v| v == 0.0).count() as f64;
        let full = grid.values.iter().filter(|&&v| v == 1.0).count() as f64;
        if empty <= MAX_EMPTY_PATCH_SHARE * n_patches && full <= MAX_FULL_PATCH_SHARE * n_patches {
            break;
        }
        mask = ellipse_union(rng, height, width);
    }
    mask
}

fn encode_png(height: usize, width: usize, rgb: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().expect("in-memory PNG header");
        writer.write_image_data(rgb).expect("in-memory PNG data");
    }
    out
}

fn render_image(rng: &mut ChaCha8Rng, height: usize, width: usize, masks: &BTreeMap<usize, BitMask>) -> Vec<u8> {
    let tint: [u8; 3] = [rng.random(), rng.random(), rng.random()];
    let mut rgb = Vec::with_capacity(height * width * 3);
    for r in 0..height {
        for c in 0..width {
            let inside = masks.values().any(|m| m.get(r, c));
            if inside {
                rgb.extend_from_slice(&[220, tint[1] / 2, tint[2] / 2]);
            } else {
                rgb.extend_from_slice(&[
                    (r * 255 / height.max(1)) as u8,
                    (c * 255 / width.max(1)) as u8,
                    tint[0],
                ]);
            }
        }
    }
    encode_png(height, width, &rgb)
}

fn random_row(rng: &mut ChaCha8Rng, row: &mut [f32]) {
    let raw: Vec<f64> = (0..row.len()).map(|_| rng.random::<f64>()).collect();
    let sum: f64 = raw.iter().sum();
    for (dst, v) in row.iter_mut().zip(raw) {
        *dst = (v / sum) as f32;
    }
}

/// Generates one example. Deterministic in (spec, index).
pub fn generate_example(spec: &SynthSpec, index: usize) -> ExampleRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let stopwords = StopwordList::default();
    let l = spec.seq_len();
    let n_patches = spec.grid_rows * spec.grid_cols;
    let (img_h, img_w) = (spec.grid_rows * spec.patch_pixels, spec.grid_cols * spec.patch_pixels);

    let mask_words: Vec<usize> = spec
        .plants
        .iter()
        .filter(|p| p.kind == PlantKind::MaskAlignedHead)
        .map(|p| p.params.word.unwrap_or(0))
        .collect();
    let twins: Vec<&Plant> = spec
        .plants
        .iter()
        .filter(|p| p.kind == PlantKind::CrossModalTwin && p.params.example.unwrap_or(0) == index)
        .collect();

    let mut tokens = Vec::with_capacity(l);
    tokens.push(TokenInfo::special(0, "[CLS]"));
    for w in 0..spec.n_text_tokens {
        let mut word = VOCABULARY[rng.random_range(0..VOCABULARY.len())];
        let pinned = twins.iter().any(|p| p.params.word.unwrap_or(0) == w);
        if mask_words.contains(&w) {
            word = PLANTED_WORD;
        } else if pinned && stopwords.contains(word) {
            word = "plants";
        }
        let mut tok = TokenInfo::text(SynthSpec::word_index(w), word);
        tok.is_stopword = stopwords.contains(word);
        tokens.push(tok);
    }
    tokens.push(TokenInfo::special(spec.n_text_tokens + 1, "[SEP]"));
    for p in 0..n_patches {
        let mut tok = TokenInfo::patch(spec.patch_index(p), p / spec.grid_cols, p % spec.grid_cols);
        let pinned = twins.iter().any(|t| t.params.patch.unwrap_or(0) == p);
        tok.is_background = !pinned && rng.random_bool(spec.background_fraction);
        tokens.push(tok);
    }

    let mut masks = BTreeMap::new();
    for &w in &mask_words {
        masks
            .entry(SynthSpec::word_index(w))
            .or_insert_with(|| blob_mask(&mut rng, spec, img_h, img_w));
    }
    let image = render_image(&mut rng, img_h, img_w, &masks);

    let mut attention = Tensor::zeros(vec![spec.n_layers, spec.n_heads, l, l]);
    let data = attention.data_mut();
    for layer in 0..spec.n_layers {
        for head in 0..spec.n_heads {
            let plane = &mut data[(layer * spec.n_heads + head) * l * l..][..l * l];
            let plant = spec
                .plants
                .iter()
                .rev()
                .find(|p| p.kind != PlantKind::CrossModalTwin && p.layer == layer && p.head == head);
            match plant {
                Some(p) if p.kind == PlantKind::UniformHead => plane.fill(1.0 / l as f32),
                Some(p) => {
                    let target = SynthSpec::word_index(p.params.word.unwrap_or(0));
                    let grid = mask_to_patch_grid(&masks[&target], spec.grid_rows, spec.grid_cols)
                        .expect("image is at least one pixel per patch");
                    // uniform on [0, σ√12) has standard deviation σ
                    let width = p.params.noise * 12f64.sqrt();
                    for (q, row) in plane.chunks_exact_mut(l).enumerate() {
                        let Some(patch) = q.checked_sub(spec.patch_index(0)) else {
                            random_row(&mut rng, row);
                            continue;
                        };
                        let noise = if width > 0.0 { rng.random_range(0.0..width) } else { 0.0 };
                        let planted = grid.values[patch] + noise;
                        // the other keys share a fixed mass of 1, so the planted
                        // weight is a monotone function of fraction + noise
                        let others: Vec<f64> = (0..l - 1).map(|_| rng.random::<f64>()).collect();
                        let others_sum: f64 = others.iter().sum();
                        let total = 1.0 + planted;
                        let mut rest = others.into_iter();
                        for (k, dst) in row.iter_mut().enumerate() {
                            *dst = if k == target {
                                (planted / total) as f32
                            } else {
                                (rest.next().expect("l - 1 draws") / others_sum / total) as f32
                            };
                        }
                    }
                }
                None => {
                    for row in plane.chunks_exact_mut(l) {
                        random_row(&mut rng, row);
                    }
                }
            }
        }
    }

    let d = spec.hidden_dim;
    let mut hidden = Tensor::zeros(vec![spec.n_layers + 1, l, d]);
    for v in hidden.data_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
    for twin in &twins {
        let slice = twin.layer * l * d;
        let word = SynthSpec::word_index(twin.params.word.unwrap_or(0));
        let patch = spec.patch_index(twin.params.patch.unwrap_or(0));
        let data = hidden.data_mut();
        let src: Vec<f32> = data[slice + word * d..slice + (word + 1) * d].to_vec();
        data[slice + patch * d..slice + (patch + 1) * d].copy_from_slice(&src);
    }

    let words: Vec<&str> = tokens[1..=spec.n_text_tokens]
        .iter()
        .filter_map(|t| t.text.as_deref())
        .collect();
    let mut metadata = BTreeMap::new();
    metadata.insert("caption".to_string(), serde_json::Value::from(words.join(" ")));
    metadata.insert("source".to_string(), serde_json::Value::from("synth"));
    metadata.insert("example_index".to_string(), serde_json::Value::from(index));

    ExampleRecord {
        id: SynthSpec::example_id(index),
        tokens,
        grid_rows: spec.grid_rows,
        grid_cols: spec.grid_cols,
        attention,
        hidden_states: hidden,
        image: Some(image),
        masks,
        metadata,
    }
}

/// Generates the whole corpus in memory.
pub fn generate(spec: &SynthSpec) -> Result<(CorpusManifest, Vec<ExampleRecord>), SynthError> {
    spec.validate()?;
    let examples: Vec<ExampleRecord> = (0..spec.n_examples)
        .into_par_iter()
        .map(|i| generate_example(spec, i))
        .collect();
    let mut manifest = spec.manifest();
    manifest.example_ids = examples.iter().map(|e| e.id.clone()).collect();
    Ok((manifest, examples))
}

/// Generates a corpus and writes it as a dump.
pub fn synth(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<CorpusManifest, SynthError> {
    spec.validate()?;
    let mut writer = DumpWriter::create(out_dir, &spec.manifest())?;
    // bounded batches keep memory flat for large corpora
    for start in (0..spec.n_examples).step_by(16) {
        let end = (start + 16).min(spec.n_examples);
        let batch: Vec<ExampleRecord> = (start..end)
            .into_par_iter()
            .map(|i| generate_example(spec, i))
            .collect();
        for record in &batch {
            writer.append(record)?;
        }
    }
    Ok(writer.finish()?)
}
