use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{Cell, ExperimentConfig, ModelKind};
use super::experiment::{attack_model, fit_estimate, series_length, truth_for};
use crate::attack::{
    completeness_experiment, soundness_experiment, AttackData, AttackRecord, CompletenessSummary, SoundnessSummary,
};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Soundness,
    Completeness,
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soundness" => Ok(AttackKind::Soundness),
            "completeness" => Ok(AttackKind::Completeness),
            o => Err(Error::Config(format!("unknown attack kind '{o}' (expected soundness or completeness)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackOutcome {
    Soundness { cell: Cell, summary: SoundnessSummary },
    Completeness { cell: Cell, summary: CompletenessSummary },
}

impl AttackOutcome {
    pub fn records(&self) -> &[AttackRecord] {
        match self {
            AttackOutcome::Soundness { summary, .. } => &summary.records,
            AttackOutcome::Completeness { summary, .. } => &summary.records,
        }
    }
}

/// Parameter attacked in a cell: the cell's truth, cut to the released
/// coefficients for the regression model.
pub fn attack_truth(cfg: &ExperimentConfig, cell: &Cell) -> Result<Vec<f64>> {
    let mut theta = truth_for(cfg, cell)?;
    if cfg.model == ModelKind::Nonparam {
        theta.resize(series_length(cfg, cell), 0.0);
    }
    Ok(theta)
}

/// Score-attack experiment against the configured private estimator. The
/// configuration must describe a single cell.
pub fn run_attack(cfg: &ExperimentConfig, kind: AttackKind, fd_step: f64) -> Result<AttackOutcome> {
    cfg.validate()?;
    let cells = cfg.cells();
    let [cell] = cells.as_slice() else {
        return Err(Error::Config(format!(
            "an attack run needs exactly one grid cell, got {}",
            cells.len()
        )));
    };
    let model = attack_model(cfg, cell)?;
    let theta = attack_truth(cfg, cell)?;
    let estimator = |data: &AttackData, rng: &mut SeededRng| fit_estimate(cfg, cell, data, rng);
    Ok(match kind {
        AttackKind::Soundness => AttackOutcome::Soundness {
            cell: *cell,
            summary: soundness_experiment(&model, &estimator, &theta, cell.n, cfg.replicates, cfg.seed)?,
        },
        AttackKind::Completeness => AttackOutcome::Completeness {
            cell: *cell,
            summary: completeness_experiment(
                &model,
                &estimator,
                &theta,
                cell.n,
                cfg.replicates,
                fd_step,
                cfg.seed,
                true,
            )?,
        },
    })
}
