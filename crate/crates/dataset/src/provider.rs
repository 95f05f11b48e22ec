//! Text-generation backends for image descriptions and question lists.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::DatasetError;

#[derive(Debug, Clone, Copy)]
pub struct DescribeRequest<'a> {
    pub image_id: &'a str,
    pub prompt: &'a str,
}

#[derive(Debug, Clone, Copy)]
pub struct QuestionRequest<'a> {
    pub image_id: &'a str,
    pub prompt: &'a str,
    /// Category names substituted into the prompt.
    pub objects: &'a [String],
}

pub trait Provider: Send + Sync {
    fn name(&self) -> String;
    fn describe_image(&self, request: &DescribeRequest<'_>) -> Result<String, DatasetError>;
    fn generate_questions(&self, request: &QuestionRequest<'_>) -> Result<String, DatasetError>;
}

/// Parses a provider spec: `mock:<seed>`, or `http` for the OpenAI-compatible
/// backend configured through environment variables.
pub fn provider_from_spec(spec: &str) -> Result<Box<dyn Provider>, DatasetError> {
    if let Some(seed) = spec.strip_prefix("mock:") {
        let seed = seed
            .parse()
            .map_err(|_| DatasetError::ProviderUnavailable(format!("bad mock seed in {spec:?}")))?;
        return Ok(Box::new(MockProvider::new(seed)));
    }
    if spec == "http" {
        return http_provider();
    }
    Err(DatasetError::ProviderUnavailable(format!("unknown provider {spec:?} (expected mock:<seed> or http)")))
}

#[cfg(feature = "http")]
fn http_provider() -> Result<Box<dyn Provider>, DatasetError> {
    Ok(Box::new(crate::http::HttpProvider::from_env()?))
}

#[cfg(not(feature = "http"))]
fn http_provider() -> Result<Box<dyn Provider>, DatasetError> {
    Err(DatasetError::ProviderUnavailable("built without the `http` feature".into()))
}

/// FNV-1a, used to give every image its own mock random stream.
fn stream_id(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

const SCENE_OPENERS: &[&str] = &[
    "The image shows an indoor scene with several objects arranged around the frame.",
    "This photo captures an everyday setting under soft natural light.",
    "The picture was taken from eye level in a cluttered room.",
    "An outdoor view fills the frame with a mix of near and distant objects.",
];

const SCENE_DETAILS: &[&str] = &[
    "Some items are partly hidden behind others.",
    "The background is slightly out of focus.",
    "Colors are muted except for a few bright objects.",
    "Objects on the left are closer to the camera than those on the right.",
    "There are no people visible.",
    "Shadows suggest the light comes from a window.",
];

const ONE_TARGET: &[&str] = &[
    "Which part of this scene would you point to if someone asked for the {a}?",
    "What region of the picture shows the {a}?",
    "If the {a} were removed from the photo, which area would change?",
    "Where in the image would you look to find the {a}?",
];

const TWO_TARGETS: &[&str] = &[
    "Which objects would you need to outline to cover both the {a} and the {b}?",
    "What would you highlight to show where the {a} and the {b} are?",
];

/// Deterministic stand-in for real backends. Replies depend only on the seed
/// and the request, never on call order.
#[derive(Debug, Clone)]
pub struct MockProvider {
    seed: u64,
    questions_per_image: usize,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        MockProvider { seed, questions_per_image: 4 }
    }

    pub fn with_questions(mut self, n: usize) -> Self {
        self.questions_per_image = n.max(1);
        self
    }

    fn rng(&self, image_id: &str, purpose: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ purpose);
        rng.set_stream(stream_id(image_id));
        rng
    }
}

impl Provider for MockProvider {
    fn name(&self) -> String {
        format!("mock:{}", self.seed)
    }

    fn describe_image(&self, request: &DescribeRequest<'_>) -> Result<String, DatasetError> {
        let mut rng = self.rng(request.image_id, 1);
        let mut text = SCENE_OPENERS.choose(&mut rng).expect("nonempty").to_string();
        let n = rng.random_range(1..=3);
        for d in SCENE_DETAILS.choose_multiple(&mut rng, n) {
            text.push(' ');
            text.push_str(d);
        }
        Ok(text)
    }

    fn generate_questions(&self, request: &QuestionRequest<'_>) -> Result<String, DatasetError> {
        if request.objects.is_empty() {
            return Err(DatasetError::EmptyObjects);
        }
        let mut rng = self.rng(request.image_id, 2);
        let mut lines = Vec::with_capacity(self.questions_per_image);
        for i in 0..self.questions_per_image {
            let two = request.objects.len() >= 2 && rng.random_bool(0.3);
            let picked: Vec<&String> = request.objects.choose_multiple(&mut rng, if two { 2 } else { 1 }).collect();
            let template = if two { TWO_TARGETS } else { ONE_TARGET }.choose(&mut rng).expect("nonempty");
            let mut q = template.replace("{a}", picked[0]);
            if two {
                q = q.replace("{b}", picked[1]);
            }
            let cats: Vec<&str> = picked.iter().map(|s| s.as_str()).collect();
            lines.push(format!("{}. {} || {}", i + 1, q, cats.join("; ")));
        }
        Ok(lines.join("\n"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CallOptions {
    /// Maximum concurrent provider calls.
    pub max_in_flight: usize,
    /// Extra attempts per record after a failed call.
    pub retries: usize,
}

impl Default for CallOptions {
    fn default() -> Self {
        CallOptions { max_in_flight: 4, retries: 2 }
    }
}

/// Runs `f` up to `1 + retries` times, returning the first success or the
/// last error.
pub fn with_retries<T>(retries: usize, mut f: impl FnMut() -> Result<T, DatasetError>) -> Result<T, DatasetError> {
    let mut last = None;
    for _ in 0..=retries {
        match f() {
            Ok(v) => return Ok(v),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Maps `f` over `items` with at most `max_in_flight` calls running at once.
/// Results keep the order of `items`.
pub fn map_concurrent<I, T, F>(items: &[I], options: CallOptions, f: F) -> Result<Vec<Result<T, DatasetError>>, DatasetError>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> Result<T, DatasetError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.max_in_flight.max(1))
        .build()
        .map_err(|e| DatasetError::ProviderUnavailable(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(|item| with_retries(options.retries, || f(item))).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::parse_question_response;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn objects() -> Vec<String> {
        ["lamp", "sofa", "rug"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn mock_is_deterministic() {
        let objs = objects();
        let req = QuestionRequest { image_id: "img7", prompt: "p", objects: &objs };
        let a = MockProvider::new(3).generate_questions(&req).unwrap();
        assert_eq!(a, MockProvider::new(3).generate_questions(&req).unwrap());
        assert_ne!(a, MockProvider::new(4).generate_questions(&req).unwrap());
        let d = DescribeRequest { image_id: "img7", prompt: "p" };
        assert_eq!(MockProvider::new(3).describe_image(&d).unwrap(), MockProvider::new(3).describe_image(&d).unwrap());
    }

    #[test]
    fn mock_replies_parse_and_stay_in_vocabulary() {
        let objs = objects();
        let p = MockProvider::new(11);
        for id in 0..50 {
            let image_id = format!("i{id}");
            let text = p.generate_questions(&QuestionRequest { image_id: &image_id, prompt: "", objects: &objs }).unwrap();
            let parsed = parse_question_response(&text, &objs).unwrap();
            assert_eq!(parsed.questions.len(), 4);
            assert!(parsed.diagnostics.is_empty(), "{:?}", parsed.diagnostics);
            for q in &parsed.questions {
                assert!(!q.categories.is_empty());
                assert!(q.categories.iter().all(|c| objs.contains(c)));
            }
        }
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(provider_from_spec("mock:9").unwrap().name(), "mock:9");
        assert!(matches!(provider_from_spec("mock:x"), Err(DatasetError::ProviderUnavailable(_))));
        assert!(matches!(provider_from_spec("gpt"), Err(DatasetError::ProviderUnavailable(_))));
    }

    #[test]
    fn retries_then_succeeds() {
        let calls = AtomicUsize::new(0);
        let r = with_retries(2, || {
            if calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(DatasetError::ProviderUnavailable("flaky".into()))
            } else {
                Ok(5)
            }
        });
        assert_eq!(r.unwrap(), 5);
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        let r: Result<(), _> = with_retries(1, || Err(DatasetError::EmptyInput));
        assert!(matches!(r, Err(DatasetError::EmptyInput)));
    }

    #[test]
    fn concurrent_map_preserves_order_and_caps_in_flight() {
        let active = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        let items: Vec<usize> = (0..40).collect();
        let out = map_concurrent(&items, CallOptions { max_in_flight: 3, retries: 0 }, |&i| {
            let now = active.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(2));
            active.fetch_sub(1, Ordering::SeqCst);
            Ok(i * 2)
        })
        .unwrap();
        let values: Vec<usize> = out.into_iter().map(Result::unwrap).collect();
        assert_eq!(values, (0..40).map(|i| i * 2).collect::<Vec<_>>());
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }
}
