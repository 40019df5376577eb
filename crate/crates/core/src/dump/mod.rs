//! On-disk dump: manifest plus one directory per example.
//!
//! ```text
//! <dump>/manifest.json
//! <dump>/examples/<id>/tokens.json
//! <dump>/examples/<id>/attention.bin     (n_layers, n_heads, L, L)  f32
//! <dump>/examples/<id>/hidden.bin        (n_layers + 1, L, d)       f32
//! <dump>/examples/<id>/image.png         optional
//! <dump>/examples/<id>/masks/<idx>.bin   optional, packed bits (H, W)
//! ```

pub mod blob;
pub mod types;
pub mod validate;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Check, DumpError};
use types::TokensFile;
pub use types::{BitMask, CorpusManifest, ExampleRecord, Modality, Tensor, TokenInfo};
pub use validate::Violation;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOKENS_FILE: &str = "tokens.json";
pub const ATTENTION_FILE: &str = "attention.bin";
pub const HIDDEN_FILE: &str = "hidden.bin";
pub const IMAGE_FILE: &str = "image.png";
pub const MASKS_DIR: &str = "masks";

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("dump JSON is always serializable");
    bytes.push(b'\n');
    bytes
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), DumpError> {
    fs::write(path, bytes).map_err(|e| DumpError::io(path, e))
}

/// Streams examples into a new dump directory. The manifest is written by
/// [`DumpWriter::finish`], once all example ids are known.
pub struct DumpWriter {
    root: PathBuf,
    manifest: CorpusManifest,
    expected_ids: Option<Vec<String>>,
}

impl DumpWriter {
    pub fn create(path: impl AsRef<Path>, manifest: &CorpusManifest) -> Result<Self, DumpError> {
        let root = path.as_ref().to_path_buf();
        let violations = validate::check_manifest(manifest);
        if let Some(v) = violations.into_iter().next() {
            return Err(DumpError::InvariantViolation {
                record: "manifest".into(),
                field: v.field,
                message: v.message,
            });
        }
        fs::create_dir_all(root.join("examples")).map_err(|e| DumpError::io(&root, e))?;
        let expected_ids = (!manifest.example_ids.is_empty()).then(|| manifest.example_ids.clone());
        let mut manifest = manifest.clone();
        manifest.example_ids.clear();
        Ok(Self {
            root,
            manifest,
            expected_ids,
        })
    }

    pub fn append(&mut self, record: &ExampleRecord) -> Result<(), DumpError> {
        let invalid = |field: String, message: String| DumpError::InvariantViolation {
            record: record.id.clone(),
            field,
            message,
        };
        if !validate::is_safe_example_id(&record.id) {
            return Err(invalid("id".into(), "example id is not a valid directory name".into()));
        }
        if self.manifest.example_ids.contains(&record.id) {
            return Err(invalid("id".into(), "duplicate example id".into()));
        }
        if let Some(v) = validate::check_record(&self.manifest, record).into_iter().next() {
            return Err(invalid(v.field, v.message));
        }

        let dir = self.root.join("examples").join(&record.id);
        fs::create_dir_all(&dir).map_err(|e| DumpError::io(&dir, e))?;
        let tokens = TokensFile {
            id: record.id.clone(),
            grid_rows: record.grid_rows,
            grid_cols: record.grid_cols,
            tokens: record.tokens.clone(),
            metadata: record.metadata.clone(),
        };
        write(&dir.join(TOKENS_FILE), &to_json_bytes(&tokens))?;
        write(
            &dir.join(ATTENTION_FILE),
            &blob::encode_f32(record.attention.dims(), record.attention.data()),
        )?;
        write(
            &dir.join(HIDDEN_FILE),
            &blob::encode_f32(record.hidden_states.dims(), record.hidden_states.data()),
        )?;
        if let Some(png) = &record.image {
            write(&dir.join(IMAGE_FILE), png)?;
        }
        if !record.masks.is_empty() {
            let masks = dir.join(MASKS_DIR);
            fs::create_dir_all(&masks).map_err(|e| DumpError::io(&masks, e))?;
            for (idx, mask) in &record.masks {
                write(
                    &masks.join(format!("{idx}.bin")),
                    &blob::encode_packed_bits(mask.rows(), mask.cols(), mask.packed()),
                )?;
            }
        }
        self.manifest.example_ids.push(record.id.clone());
        Ok(())
    }

    pub fn finish(self) -> Result<CorpusManifest, DumpError> {
        if let Some(expected) = &self.expected_ids {
            if expected != &self.manifest.example_ids {
                return Err(DumpError::InvariantViolation {
                    record: "manifest".into(),
                    field: "example_ids".into(),
                    message: "streamed examples do not match the manifest's example_ids".into(),
                });
            }
        }
        write(&self.root.join(MANIFEST_FILE), &to_json_bytes(&self.manifest))?;
        Ok(self.manifest)
    }
}

/// Writes a complete dump. The manifest's `example_ids`, if non-empty, must
/// list the streamed records in order; if empty it is filled from them.
pub fn write_dump<'a>(
    manifest: &CorpusManifest,
    examples: impl IntoIterator<Item = &'a ExampleRecord>,
    path: impl AsRef<Path>,
) -> Result<CorpusManifest, DumpError> {
    let mut writer = DumpWriter::create(path, manifest)?;
    for record in examples {
        writer.append(record)?;
    }
    writer.finish()
}

/// An opened dump. Holds only the manifest; examples are read on demand.
#[derive(Debug, Clone)]
pub struct Dump {
    root: PathBuf,
    manifest: CorpusManifest,
}

/// Each file of an example, read independently so validation can report all
/// of them.
struct ExampleParts {
    tokens: Result<TokensFile, DumpError>,
    attention: Result<Tensor, DumpError>,
    hidden: Result<Tensor, DumpError>,
    image: Result<Option<Vec<u8>>, DumpError>,
    masks: Result<BTreeMap<usize, BitMask>, DumpError>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DumpError> {
    let bytes = fs::read(path).map_err(|e| DumpError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| DumpError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn read_tensor(path: &Path) -> Result<Tensor, DumpError> {
    let bytes = fs::read(path).map_err(|e| DumpError::io(path, e))?;
    let (dims, data) = blob::decode_f32(&bytes).map_err(|source| DumpError::Format {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(Tensor::new(dims, data))
}

fn read_masks(dir: &Path, example: &str) -> Result<BTreeMap<usize, BitMask>, DumpError> {
    let mut masks = BTreeMap::new();
    let entries = match fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(masks),
        Err(e) => return Err(DumpError::io(dir, e)),
    };
    for entry in entries {
        let entry = entry.map_err(|e| DumpError::io(dir, e))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        let idx = name
            .strip_suffix(".bin")
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| DumpError::Validation {
                example: example.to_string(),
                check: Check::MaskKey,
                message: format!("mask file {name:?} is not named <token_index>.bin"),
            })?;
        let bytes = fs::read(&path).map_err(|e| DumpError::io(&path, e))?;
        let (rows, cols, packed) =
            blob::decode_packed_bits(&bytes).map_err(|source| DumpError::Format {
                path: path.clone(),
                source,
            })?;
        let mask = BitMask::from_packed(rows, cols, packed).map_err(|e| DumpError::Validation {
            example: example.to_string(),
            check: Check::MaskShape,
            message: format!("{name}: {e}"),
        })?;
        masks.insert(idx, mask);
    }
    Ok(masks)
}

impl Dump {
    /// Reads and checks `manifest.json`. No example files are touched.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, DumpError> {
        let root = path.as_ref().to_path_buf();
        let manifest: CorpusManifest = read_json(&root.join(MANIFEST_FILE))?;
        if let Some(v) = validate::check_manifest(&manifest).into_iter().next() {
            return Err(DumpError::Validation {
                example: "manifest".into(),
                check: v.check,
                message: format!("{}: {}", v.field, v.message),
            });
        }
        Ok(Self { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn example_dir(&self, id: &str) -> PathBuf {
        self.root.join("examples").join(id)
    }

    fn read_parts(&self, id: &str) -> ExampleParts {
        let dir = self.example_dir(id);
        let image_path = dir.join(IMAGE_FILE);
        ExampleParts {
            tokens: read_json(&dir.join(TOKENS_FILE)),
            attention: read_tensor(&dir.join(ATTENTION_FILE)),
            hidden: read_tensor(&dir.join(HIDDEN_FILE)),
            image: match fs::read(&image_path) {
                Ok(bytes) => Ok(Some(bytes)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(DumpError::io(image_path, e)),
            },
            masks: read_masks(&dir.join(MASKS_DIR), id),
        }
    }

    fn assemble(id: &str, tokens: TokensFile, parts: ExampleParts) -> Result<ExampleRecord, DumpError> {
        if tokens.id != id {
            return Err(DumpError::Validation {
                example: id.to_string(),
                check: Check::TokenConsistency,
                message: format!("tokens.json declares id {:?}", tokens.id),
            });
        }
        Ok(ExampleRecord {
            id: tokens.id,
            tokens: tokens.tokens,
            grid_rows: tokens.grid_rows,
            grid_cols: tokens.grid_cols,
            attention: parts.attention?,
            hidden_states: parts.hidden?,
            image: parts.image?,
            masks: parts.masks?,
            metadata: tokens.metadata,
        })
    }

    /// Loads and fully validates one example.
    pub fn load_example(&self, id: &str) -> Result<ExampleRecord, DumpError> {
        if !self.manifest.example_ids.iter().any(|e| e == id) {
            return Err(DumpError::UnknownExample(id.to_string()));
        }
        let mut parts = self.read_parts(id);
        let tokens = std::mem::replace(&mut parts.tokens, Err(DumpError::UnknownExample(String::new())))?;
        let record = Self::assemble(id, tokens, parts)?;
        if let Some(v) = validate::check_record(&self.manifest, &record).into_iter().next() {
            return Err(DumpError::Validation {
                example: id.to_string(),
                check: v.check,
                message: format!("{}: {}", v.field, v.message),
            });
        }
        Ok(record)
    }

    /// Loads every example in manifest order, in parallel.
    pub fn load_all(&self) -> Result<Vec<ExampleRecord>, DumpError> {
        use rayon::prelude::*;
        self.manifest
            .example_ids
            .par_iter()
            .map(|id| self.load_example(id))
            .collect()
    }

    fn check_example(&self, id: &str) -> Vec<Failure> {
        let mut parts = self.read_parts(id);
        let mut failures = Vec::new();
        let errors = [
            parts.tokens.as_ref().err(),
            parts.attention.as_ref().err(),
            parts.hidden.as_ref().err(),
            parts.image.as_ref().err(),
            parts.masks.as_ref().err(),
        ];
        failures.extend(errors.into_iter().flatten().map(Failure::from_error));
        if !failures.is_empty() {
            return failures;
        }
        let tokens = std::mem::replace(&mut parts.tokens, Err(DumpError::UnknownExample(String::new())))
            .expect("checked above");
        match Self::assemble(id, tokens, parts) {
            Err(e) => vec![Failure::from_error(&e)],
            Ok(record) => validate::check_record(&self.manifest, &record)
                .into_iter()
                .map(|v| Failure {
                    check: v.check,
                    message: format!("{}: {}", v.field, v.message),
                })
                .collect(),
        }
    }
}

/// Opens a dump; equivalent to [`Dump::open`].
pub fn read_dump(path: impl AsRef<Path>) -> Result<Dump, DumpError> {
    Dump::open(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub check: Check,
    pub message: String,
}

impl Failure {
    fn from_error(e: &DumpError) -> Self {
        let check = match e {
            DumpError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                Check::MissingFile
            }
            DumpError::Io { .. } => Check::MissingFile,
            DumpError::Format { .. } => Check::BlobFormat,
            DumpError::Json { .. } => Check::Json,
            DumpError::Validation { check, .. } => *check,
            DumpError::InvariantViolation { .. } | DumpError::UnknownExample(_) => Check::Manifest,
        };
        let message = match e {
            DumpError::Io { path, source } => format!("{}: {source}", path.display()),
            other => other.to_string(),
        };
        Self { check, message }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleReport {
    pub example_id: String,
    pub passed: bool,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub path: PathBuf,
    pub manifest_failures: Vec<Failure>,
    pub examples: Vec<ExampleReport>,
}

impl ValidationReport {
    /// Failing entries: the manifest counts as one entry, plus each failing example.
    pub fn failure_count(&self) -> usize {
        usize::from(!self.manifest_failures.is_empty())
            + self.examples.iter().filter(|e| !e.passed).count()
    }

    pub fn is_ok(&self) -> bool {
        self.failure_count() == 0
    }
}

/// Checks every example of a dump and reports all failures. Only fails when
/// `path` itself cannot be read.
pub fn validate_dump(path: impl AsRef<Path>) -> Result<ValidationReport, DumpError> {
    use rayon::prelude::*;

    let root = path.as_ref().to_path_buf();
    fs::read_dir(&root).map_err(|e| DumpError::io(&root, e))?;

    let mut report = ValidationReport {
        path: root.clone(),
        manifest_failures: Vec::new(),
        examples: Vec::new(),
    };
    let manifest: CorpusManifest = match read_json(&root.join(MANIFEST_FILE)) {
        Ok(m) => m,
        Err(e) => {
            report.manifest_failures.push(Failure::from_error(&e));
            return Ok(report);
        }
    };
    report.manifest_failures = validate::check_manifest(&manifest)
        .into_iter()
        .map(|v| Failure {
            check: v.check,
            message: format!("{}: {}", v.field, v.message),
        })
        .collect();
    let dump = Dump {
        root,
        manifest: manifest.clone(),
    };
    report.examples = manifest
        .example_ids
        .par_iter()
        .map(|id| {
            let failures = if validate::is_safe_example_id(id) {
                dump.check_example(id)
            } else {
                vec![Failure {
                    check: Check::Manifest,
                    message: format!("example id {id:?} is not a valid directory name"),
                }]
            };
            ExampleReport {
                example_id: id.clone(),
                passed: failures.is_empty(),
                failures,
            }
        })
        .collect();
    Ok(report)
}
