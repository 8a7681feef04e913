//! Image-to-text boundary for transfer receipts and chat screenshots.

use std::collections::HashMap;

use crate::envelope::AttachmentRef;

pub const OCR_UNAVAILABLE_MESSAGE: &str =
    "Sorry, I couldn't read that image. Could you type the transfer details instead?";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OcrError {
    #[error("no transcription available for attachment `{0}`")]
    Unavailable(String),
}

pub trait OcrEngine: Send + Sync {
    fn extract(&self, attachment: &AttachmentRef) -> Result<String, OcrError>;
}

/// Returns canned transcriptions keyed by attachment id.
#[derive(Debug, Clone, Default)]
pub struct FixtureOcr {
    texts: HashMap<String, String>,
}

impl FixtureOcr {
    pub fn new(texts: impl IntoIterator<Item = (String, String)>) -> Self {
        FixtureOcr {
            texts: texts.into_iter().collect(),
        }
    }

    /// Parses `{"<attachment id>": "<transcription>", ...}`.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let map: HashMap<String, String> = serde_json::from_str(text)?;
        Ok(FixtureOcr { texts: map })
    }

    pub fn builtin() -> Self {
        FixtureOcr::from_json(crate::defaults::OCR_FIXTURES_JSON).expect("built-in OCR fixtures parse")
    }
}

impl OcrEngine for FixtureOcr {
    fn extract(&self, attachment: &AttachmentRef) -> Result<String, OcrError> {
        self.texts
            .get(&attachment.id)
            .cloned()
            .ok_or_else(|| OcrError::Unavailable(attachment.id.clone()))
    }
}
