use chrono::{DateTime, Utc};
use orcaclass_core::segmenter::SegmentTimeline;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

/// Segmentation of one recording with one model, run in the background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub recording_id: String,
    pub model_id: String,
    pub state: JobState,
    pub created_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<SegmentTimeline>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Job {
    pub fn new(recording_id: &str, model_id: &str) -> Self {
        Self {
            id: uuid::Uuid::new_v4().to_string(),
            recording_id: recording_id.to_string(),
            model_id: model_id.to_string(),
            state: JobState::Queued,
            created_at: Utc::now(),
            finished_at: None,
            result: None,
            error: None,
        }
    }
}
