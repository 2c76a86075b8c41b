//! Baseline assemblies: a molecular-weight-only model and the ligand-bias
//! model (ligand features across the whole global train set).

use crate::{fit_forest, predict, ForestConfig, ForestError, ForestModel, Result};
use affbench_core::featkit::{fit_assembler, FeatureSpec, FittedAssembler};
use affbench_core::structio::ComplexRecord;
use serde::{Deserialize, Serialize};

/// A forest bound to the feature assembler it was trained with.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedTabularModel {
    pub assembler: FittedAssembler,
    pub forest: ForestModel,
}

impl TrainedTabularModel {
    pub fn fit(
        train: &[&ComplexRecord],
        spec: &FeatureSpec,
        config: &ForestConfig,
    ) -> Result<Self> {
        let assembler = fit_assembler(spec, train)?;
        let table = assembler.transform(train)?;
        let labels: Vec<f64> = train.iter().map(|r| r.p_affinity).collect();
        let forest = fit_forest(&table.rows, &labels, config)?;
        Ok(TrainedTabularModel { assembler, forest })
    }

    pub fn predict(&self, records: &[&ComplexRecord]) -> Result<Vec<f64>> {
        let table = self.assembler.transform(records)?;
        predict(&self.forest, &table.rows)
    }
}

/// Local baseline on the single molecular-weight column.
pub fn molecular_weight_model(
    train: &[&ComplexRecord],
    config: &ForestConfig,
) -> Result<TrainedTabularModel> {
    TrainedTabularModel::fit(train, &FeatureSpec::molecular_weight_only(), config)
}

/// Global bias baseline: ligand-only features over the mixed train set of
/// all proteins. Rejects specs carrying interaction features.
pub fn ligand_bias_model(
    train: &[&ComplexRecord],
    spec: &FeatureSpec,
    config: &ForestConfig,
) -> Result<TrainedTabularModel> {
    if !spec.is_ligand_only() {
        return Err(ForestError::BadConfig(
            "ligand-bias model must not consume interaction features".into(),
        ));
    }
    TrainedTabularModel::fit(train, spec, config)
}
