use std::fmt;
use std::sync::Arc;

use crate::dump::{ExampleRecord, Modality};
use crate::error::{MetricError, RegistryError};

/// Result of evaluating a metric on one head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Value(f64),
    /// The metric's selection set was empty or its inputs were constant.
    Degenerate,
}

/// What a metric sees: one attention plane plus the tokens left after exclusion.
#[derive(Debug, Clone, Copy)]
pub struct HeadContext<'a> {
    pub example: &'a ExampleRecord,
    pub layer: usize,
    pub head: usize,
    /// Retained sequence positions, ascending.
    pub retained: &'a [usize],
}

impl<'a> HeadContext<'a> {
    pub fn weight(&self, query: usize, key: usize) -> f64 {
        let l = self.example.seq_len();
        self.example.plane(self.layer, self.head)[query * l + key] as f64
    }

    pub fn retained_of(&self, modality: Modality) -> Vec<usize> {
        self.retained
            .iter()
            .copied()
            .filter(|&i| self.example.tokens[i].modality == modality)
            .collect()
    }
}

pub trait HeadMetric: Send + Sync {
    fn compute(&self, ctx: &HeadContext<'_>) -> Result<MetricValue, MetricError>;
}

impl<F> HeadMetric for F
where
    F: Fn(&HeadContext<'_>) -> Result<MetricValue, MetricError> + Send + Sync,
{
    fn compute(&self, ctx: &HeadContext<'_>) -> Result<MetricValue, MetricError> {
        self(ctx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricScope {
    PerHead,
}

#[derive(Clone)]
pub struct MetricDescriptor {
    pub name: String,
    pub scope: MetricScope,
    pub compute: Arc<dyn HeadMetric>,
}

impl MetricDescriptor {
    pub fn per_head(name: impl Into<String>, compute: impl HeadMetric + 'static) -> Self {
        Self {
            name: name.into(),
            scope: MetricScope::PerHead,
            compute: Arc::new(compute),
        }
    }
}

impl fmt::Debug for MetricDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricDescriptor")
            .field("name", &self.name)
            .field("scope", &self.scope)
            .finish_non_exhaustive()
    }
}

/// Named head metrics, in registration order.
#[derive(Debug, Clone, Default)]
pub struct MetricRegistry {
    metrics: Vec<MetricDescriptor>,
}

impl MetricRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The eight built-in block means.
    pub fn with_builtins() -> Self {
        let mut registry = Self::empty();
        for d in crate::analytics::builtins::descriptors() {
            registry.register(d).expect("built-in names are unique");
        }
        registry
    }

    /// Built-ins plus the mask-alignment metric.
    pub fn standard() -> Self {
        let mut registry = Self::with_builtins();
        registry
            .register(super::alignment::descriptor())
            .expect("alignment metric name is unique");
        registry
    }

    pub fn register(&mut self, descriptor: MetricDescriptor) -> Result<(), RegistryError> {
        if self.get(&descriptor.name).is_some() {
            return Err(RegistryError::DuplicateName(descriptor.name));
        }
        self.metrics.push(descriptor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&MetricDescriptor> {
        self.metrics.iter().find(|d| d.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.metrics.iter().map(|d| d.name.clone()).collect()
    }
}
