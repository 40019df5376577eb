use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub dump_path: PathBuf,
    pub bind_address: String,
    /// Defaults to `<dump>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub tsne_seed: u64,
    /// One word per line; the embedded English list is used when absent.
    pub stopword_file: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(dump_path: impl Into<PathBuf>) -> Self {
        Self {
            dump_path: dump_path.into(),
            bind_address: "127.0.0.1:8080".into(),
            cache_dir: None,
            tsne_seed: 0,
            stopword_file: None,
        }
    }

    pub fn with_cache_dir(mut self, dir: impl AsRef<Path>) -> Self {
        self.cache_dir = Some(dir.as_ref().to_path_buf());
        self
    }

    pub fn resolved_cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.dump_path.join("cache"))
    }
}
