use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::blocks::check_range;
use crate::dump::ExampleRecord;
use crate::error::AnalyticsError;
use crate::metrics::registry::{HeadContext, MetricRegistry, MetricValue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub layer: usize,
    pub head: usize,
    pub message: String,
}

/// A metric evaluated on every (layer, head), plus per-layer means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSummaryMatrix {
    pub metric_name: String,
    /// `values[layer][head]`; degenerate cells hold 0.
    pub values: Vec<Vec<f64>>,
    /// Mean over the non-degenerate cells of each layer (0 if there are none).
    pub layer_means: Vec<f64>,
    pub degenerate: Vec<(usize, usize)>,
    /// Cells whose metric failed. These are also listed in `degenerate`.
    pub errors: Vec<CellError>,
}

impl HeadSummaryMatrix {
    pub fn is_degenerate(&self, layer: usize, head: usize) -> bool {
        self.degenerate.contains(&(layer, head))
    }
}

pub fn head_summary(
    example: &ExampleRecord,
    registry: &MetricRegistry,
    metric_name: &str,
    exclude: &BTreeSet<usize>,
) -> Result<HeadSummaryMatrix, AnalyticsError> {
    let metric = registry
        .get(metric_name)
        .ok_or_else(|| AnalyticsError::UnknownMetric(metric_name.to_string()))?;
    let l = example.seq_len();
    if let Some(&bad) = exclude.iter().next_back() {
        check_range("exclude", bad, l)?;
    }
    let retained: Vec<usize> = (0..l).filter(|i| !exclude.contains(i)).collect();

    let (n_layers, n_heads) = (example.n_layers(), example.n_heads());
    let mut values = vec![vec![0.0; n_heads]; n_layers];
    let mut layer_means = vec![0.0; n_layers];
    let mut degenerate = Vec::new();
    let mut errors = Vec::new();
    for (layer, row) in values.iter_mut().enumerate() {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (head, cell) in row.iter_mut().enumerate() {
            let ctx = HeadContext {
                example,
                layer,
                head,
                retained: &retained,
            };
            match metric.compute.compute(&ctx) {
                Ok(MetricValue::Value(v)) if v.is_finite() => {
                    *cell = v;
                    sum += v;
                    count += 1;
                }
                Ok(MetricValue::Value(v)) => {
                    degenerate.push((layer, head));
                    errors.push(CellError {
                        layer,
                        head,
                        message: format!("metric returned non-finite value {v}"),
                    });
                }
                Ok(MetricValue::Degenerate) => degenerate.push((layer, head)),
                Err(e) => {
                    log::debug!("{metric_name} failed at layer {layer} head {head}: {e}");
                    degenerate.push((layer, head));
                    errors.push(CellError {
                        layer,
                        head,
                        message: e.0,
                    });
                }
            }
        }
        if count > 0 {
            layer_means[layer] = sum / count as f64;
        }
    }
    Ok(HeadSummaryMatrix {
        metric_name: metric_name.to_string(),
        values,
        layer_means,
        degenerate,
        errors,
    })
}
