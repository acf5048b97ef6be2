use super::{train, RunConfig};
use crate::error::Result;
use crate::model::KernelKind;
use crate::pde::Dataset;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    DenseMlp,
    Mercer,
    NoOrtho,
}

impl AblationKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dense-mlp" | "dense_mlp" => Some(Self::DenseMlp),
            "mercer" => Some(Self::Mercer),
            "no-ortho" | "no_ortho" => Some(Self::NoOrtho),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::DenseMlp => "dense_mlp",
            Self::Mercer => "mercer",
            Self::NoOrtho => "no_ortho",
        }
    }

    /// The base configuration with this ablation applied.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        match self {
            Self::DenseMlp => cfg.model.kernel_kind = KernelKind::DenseMlp,
            Self::Mercer => cfg.model.kernel_kind = KernelKind::Mercer,
            Self::NoOrtho => cfg.ortho_weight = 0.0,
        }
        cfg
    }
}

pub const ABLATION_HEADER: &str = "variant,seed,mean_l2_rel_pct,l_inf,l_ortho,epoch_time_ms";

/// Final-model test metrics of one trained variant.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub mean_l2_rel_pct: f64,
    pub l_inf: f64,
    pub l_ortho: f64,
    /// Mean epoch wall time; zero unless timing is enabled.
    pub epoch_time_ms: f64,
}

impl AblationRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.variant, self.seed, self.mean_l2_rel_pct, self.l_inf, self.l_ortho, self.epoch_time_ms
        )
    }
}

pub fn write_ablation_csv<W: Write>(mut out: W, rows: &[AblationRow]) -> Result<()> {
    writeln!(out, "{ABLATION_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

fn run_variant(cfg: &RunConfig, ds: &Dataset, variant: &str) -> Result<AblationRow> {
    let out = train(cfg, ds, None)?;
    let test = &out.test[0];
    let epoch_time_ms = if cfg.timing && !out.epoch_ms.is_empty() {
        out.epoch_ms.iter().sum::<f64>() / out.epoch_ms.len() as f64
    } else {
        0.0
    };
    Ok(AblationRow {
        variant: variant.to_string(),
        seed: cfg.seed,
        mean_l2_rel_pct: test.mean_l2_rel_pct,
        l_inf: test.l_inf,
        l_ortho: test.l_ortho,
        epoch_time_ms,
    })
}

/// For every seed, trains the base model and the ablated variant on the same
/// data with the same seed. Rows come in (base, variant) pairs.
pub fn run_ablation(base: &RunConfig, ds: &Dataset, kind: AblationKind, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(2 * seeds.len());
    for &seed in seeds {
        let cfg = RunConfig { seed, ..base.clone() };
        rows.push(run_variant(&cfg, ds, "svd")?);
        rows.push(run_variant(&kind.apply(&cfg), ds, kind.name())?);
    }
    Ok(rows)
}
