use serde::{Deserialize, Serialize};

/// One line of the per-step metrics log. Validation fields are filled on
/// evaluation steps only.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: u64,
    pub epoch: u64,
    pub loss: f64,
    pub cross_entropy: f64,
    pub aux_loss: f64,
    pub aux_weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_nat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_man: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hinge_arg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scl_active: Option<bool>,
    pub lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_pauc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_frame_auc: Option<f64>,
}
