use super::{mix_seed, predict_series, train, TrainConfig, TrainedModel, Variant};
use crate::error::Result;
use crate::grid::FieldSeries;
use crate::models::{MaunetLightModel, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub teacher: TrainedModel,
    pub gt: TrainedModel,
    pub mp: TrainedModel,
    pub kr: TrainedModel,
    /// Teacher output on the training inputs: the MP targets.
    pub teacher_pred: FieldSeries,
}

impl PipelineResult {
    pub fn variants(&self) -> [&TrainedModel; 4] {
        [&self.teacher, &self.gt, &self.mp, &self.kr]
    }
}

/// 1. teacher: MAUNet on (inputs, targets)
/// 2. GT: MAUNet-Light on (inputs, targets)
/// 3. MP: MAUNet-Light on (inputs, teacher predictions), same initial weights as GT
/// 4. KR: MP's best weights fine-tuned on (inputs, targets)
pub fn run_pipeline(inputs: &FieldSeries, targets: &FieldSeries, cfg: &TrainConfig) -> Result<PipelineResult> {
    let stage = |k: u64| cfg.with_seed(mix_seed(&[cfg.seed, k]));
    let teacher = train(Variant::Teacher, None, inputs, targets, &stage(1))?;
    let student_init = MaunetLightModel::init_seeded(mix_seed(&[cfg.seed, 0x5EED])).to_params();
    let gt = train(Variant::Gt, Some(&student_init), inputs, targets, &stage(2))?;
    let teacher_pred = predict_series(&teacher.predictor(), inputs)?.with_mask(targets.mask())?;
    let mp = train(Variant::Mp, Some(&student_init), inputs, &teacher_pred, &stage(3))?;
    let kr = train(Variant::Kr, Some(&mp.params()), inputs, targets, &stage(4))?;
    Ok(PipelineResult { teacher, gt, mp, kr, teacher_pred })
}
