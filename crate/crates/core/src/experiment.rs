//! Cross-validated runs and the pooling-method comparison table.

use serde::{Deserialize, Serialize};

use crate::arp::PoolingMethod;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::synth::{generate, SynthSpec};
use crate::train::{encode_dataset, evaluate, kfold_split, train, RunConfig};
use crate::volume::Volume;

/// Test-fold reports of one k-fold run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: PoolingMethod,
    pub seed: u64,
    pub folds: Vec<MetricsReport>,
}

/// The six columns of the comparison table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub acc: f64,
    pub auc: f64,
    pub f1: f64,
    pub pre: f64,
    pub rec: f64,
    pub ap: f64,
}

impl MetricMeans {
    pub fn of<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Result<Self> {
        let mut m = MetricMeans::default();
        let mut n = 0usize;
        for r in reports {
            m.acc += r.acc;
            m.auc += r.auc;
            m.f1 += r.f1;
            m.pre += r.pre;
            m.rec += r.rec;
            m.ap += r.ap;
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyInput("no reports to average".into()));
        }
        let k = n as f64;
        Ok(MetricMeans {
            acc: m.acc / k,
            auc: m.auc / k,
            f1: m.f1 / k,
            pre: m.pre / k,
            rec: m.rec / k,
            ap: m.ap / k,
        })
    }
}

impl CvReport {
    pub fn means(&self) -> Result<MetricMeans> {
        MetricMeans::of(&self.folds)
    }
}

/// k-fold cross-validation with `config.seed` driving the fold plan and the
/// model initialisation.
pub fn cross_validate(volumes: &[Volume], labels: &[usize], config: &RunConfig, k: usize) -> Result<CvReport> {
    let data = encode_dataset(volumes, labels, config.method, config.encode_seed)?;
    let plan = kfold_split(data.len(), k, config.seed)?;
    let mut folds = Vec::with_capacity(k);
    for fold in &plan.folds {
        let outcome = train(config, &data.subset(&fold.train))?;
        folds.push(evaluate(&outcome.trained, &data.subset(&fold.test))?);
    }
    Ok(CvReport {
        method: config.method,
        seed: config.seed,
        folds,
    })
}

/// Synthetic data, fold plan, model seed and stochastic-pooling seed all
/// derive from `seed`.
pub fn synthetic_cv(spec: &SynthSpec, config: &RunConfig, method: PoolingMethod, seed: u64, k: usize) -> Result<CvReport> {
    let spec = SynthSpec { seed, ..spec.clone() };
    let (volumes, labels) = generate(&spec)?;
    let config = RunConfig {
        method,
        seed,
        encode_seed: seed,
        ..config.clone()
    };
    cross_validate(&volumes, &labels, &config, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: PoolingMethod,
    #[serde(flatten)]
    pub means: MetricMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// Averages every report of each method over seeds and folds.
    pub fn from_reports(reports: &[CvReport]) -> Result<Self> {
        let mut rows = Vec::new();
        for method in PoolingMethod::ALL {
            let of_method: Vec<&MetricsReport> = reports
                .iter()
                .filter(|r| r.method == method)
                .flat_map(|r| &r.folds)
                .collect();
            if of_method.is_empty() {
                continue;
            }
            rows.push(ComparisonRow {
                method,
                means: MetricMeans::of(of_method)?,
            });
        }
        Ok(Self { rows })
    }

    pub fn row(&self, method: PoolingMethod) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,acc,auc,f1,pre,rec,ap\n");
        for r in &self.rows {
            let m = r.means;
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                r.method, m.acc, m.auc, m.f1, m.pre, m.rec, m.ap
            ));
        }
        out
    }
}

/// One cross-validated model per pooling method and seed on identical data
/// and folds.
pub fn pooling_comparison(spec: &SynthSpec, config: &RunConfig, seeds: &[u64], k: usize) -> Result<(ComparisonTable, Vec<CvReport>)> {
    let mut reports = Vec::with_capacity(seeds.len() * PoolingMethod::ALL.len());
    for method in PoolingMethod::ALL {
        for &seed in seeds {
            reports.push(synthetic_cv(spec, config, method, seed, k)?);
        }
    }
    Ok((ComparisonTable::from_reports(&reports)?, reports))
}
