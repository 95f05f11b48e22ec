//! OpenAI-compatible chat-completions backend.
//!
//! Configured from the environment:
//! `MASKSELECT_LLM_URL` (full chat-completions endpoint), `MASKSELECT_LLM_KEY`
//! (optional bearer token), `MASKSELECT_DESCRIBER_MODEL`,
//! `MASKSELECT_QUESTION_MODEL`, and `MASKSELECT_IMAGE_DIR` holding
//! `<image_id>.jpg` or `<image_id>.png`.

use std::path::PathBuf;
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use crate::provider::{DescribeRequest, Provider, QuestionRequest};
use crate::DatasetError;

pub struct HttpProvider {
    client: reqwest::blocking::Client,
    url: String,
    key: Option<String>,
    describer_model: String,
    question_model: String,
    image_dir: PathBuf,
}

fn env(name: &str) -> Result<String, DatasetError> {
    std::env::var(name).map_err(|_| DatasetError::ProviderUnavailable(format!("{name} is not set")))
}

impl HttpProvider {
    pub fn from_env() -> Result<Self, DatasetError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| DatasetError::ProviderUnavailable(e.to_string()))?;
        Ok(HttpProvider {
            client,
            url: env("MASKSELECT_LLM_URL")?,
            key: std::env::var("MASKSELECT_LLM_KEY").ok(),
            describer_model: env("MASKSELECT_DESCRIBER_MODEL")?,
            question_model: env("MASKSELECT_QUESTION_MODEL")?,
            image_dir: PathBuf::from(env("MASKSELECT_IMAGE_DIR")?),
        })
    }

    fn image_data_url(&self, image_id: &str) -> Result<String, DatasetError> {
        for (ext, mime) in [("jpg", "image/jpeg"), ("png", "image/png")] {
            let path = self.image_dir.join(format!("{image_id}.{ext}"));
            if let Ok(bytes) = std::fs::read(&path) {
                let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
                return Ok(format!("data:{mime};base64,{b64}"));
            }
        }
        Err(DatasetError::ProviderUnavailable(format!("no image file for {image_id} in {}", self.image_dir.display())))
    }

    fn chat(&self, model: &str, content: Value) -> Result<String, DatasetError> {
        let body = json!({ "model": model, "messages": [{ "role": "user", "content": content }] });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(k) = &self.key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| DatasetError::ProviderUnavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(DatasetError::ProviderUnavailable(format!("HTTP {status}")));
        }
        let v: Value = resp.json().map_err(|e| DatasetError::MalformedResponse(e.to_string()))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| DatasetError::MalformedResponse("missing choices[0].message.content".into()))
    }
}

impl Provider for HttpProvider {
    fn name(&self) -> String {
        format!("http:{}", self.url)
    }

    fn describe_image(&self, request: &DescribeRequest<'_>) -> Result<String, DatasetError> {
        let url = self.image_data_url(request.image_id)?;
        let content = json!([
            { "type": "text", "text": request.prompt },
            { "type": "image_url", "image_url": { "url": url } }
        ]);
        self.chat(&self.describer_model, content)
    }

    fn generate_questions(&self, request: &QuestionRequest<'_>) -> Result<String, DatasetError> {
        self.chat(&self.question_model, Value::String(request.prompt.to_string()))
    }
}
