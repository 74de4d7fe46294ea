use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::adapter::{Completion, LlmAdapter, OfflineAdapter};
use super::answer::{answer, Answer};
use super::context::{ContextRegistry, PatientContext};
use super::parse::parse_query;
use super::prompt::{build_prompt, prompt_rows, PromptText};
use super::text::Lang;
use super::{PatientSelector, QueryConfig, QueryError};
use crate::store::Store;
use crate::time::{now_epoch, EpochSeconds};

/// The answer plus the prompt and adapter output for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub answer: Answer,
    pub lang: Lang,
    /// `answer.text_en` or `answer.text_zh` per `lang`.
    pub text: String,
    pub prompt: Option<PromptText>,
    pub completion: Completion,
}

/// Parses, answers and delegates questions against a shared store.
#[derive(Clone)]
pub struct QueryEngine {
    store: Arc<Store>,
    contexts: ContextRegistry,
    config: QueryConfig,
    adapter: Arc<dyn LlmAdapter>,
}

impl QueryEngine {
    pub fn new(store: Arc<Store>) -> QueryEngine {
        QueryEngine {
            store,
            contexts: ContextRegistry::new(),
            config: QueryConfig::default(),
            adapter: Arc::new(OfflineAdapter),
        }
    }

    pub fn with_contexts(mut self, contexts: ContextRegistry) -> QueryEngine {
        self.contexts = contexts;
        self
    }

    pub fn with_config(mut self, config: QueryConfig) -> QueryEngine {
        self.config = config;
        self
    }

    pub fn with_adapter(mut self, adapter: Arc<dyn LlmAdapter>) -> QueryEngine {
        self.adapter = adapter;
        self
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn contexts(&self) -> &ContextRegistry {
        &self.contexts
    }

    pub fn adapter_name(&self) -> &'static str {
        self.adapter.name()
    }

    /// The context for a selector; patients known only to the store get a
    /// bare context.
    pub fn resolve(&self, selector: &PatientSelector) -> Result<PatientContext, QueryError> {
        let pid = match selector {
            PatientSelector::Bed(b) => self
                .store
                .patient_at_bed(b)
                .or_else(|| self.contexts.by_bed(b).map(|c| c.patient_id.clone()))
                .ok_or_else(|| QueryError::UnknownPatient(format!("Bed {b}")))?,
            PatientSelector::Id(id)
                if self.store.has_patient(id) || self.contexts.get(id).is_some() =>
            {
                id.clone()
            }
            PatientSelector::Id(id) => return Err(QueryError::UnknownPatient(id.clone())),
        };
        let mut ctx = self
            .contexts
            .get(&pid)
            .cloned()
            .unwrap_or_else(|| PatientContext::bare(&pid, ""));
        if ctx.bed_id.is_empty() {
            ctx.bed_id = self.store.bed_of(&pid).unwrap_or_default();
        }
        Ok(ctx)
    }

    /// Answers `text`. `now` defaults to the newest stored sample time.
    pub fn ask(
        &self,
        text: &str,
        default_patient: Option<&str>,
        now: Option<EpochSeconds>,
        lang: Lang,
    ) -> Result<QueryResponse, QueryError> {
        let now = now
            .or_else(|| self.store.latest_time())
            .unwrap_or_else(now_epoch);
        let intent = parse_query(text, now, default_patient)?;
        let ctx = self.resolve(&intent.patient)?;
        let answer = answer(&intent, &self.store, &ctx, &self.config);
        let rows = prompt_rows(&self.store, &ctx.patient_id, &intent);
        let (prompt, completion) = match build_prompt(&intent, text, &ctx, &rows) {
            Ok(p) => {
                let c = self.adapter.complete(&p, &answer);
                (Some(p), c)
            }
            Err(e) => (
                None,
                Completion {
                    text: answer.text_en.clone(),
                    adapter: self.adapter.name().into(),
                    fallback: true,
                    fallback_reason: Some(e.to_string()),
                },
            ),
        };
        let text = answer.text(lang).to_string();
        Ok(QueryResponse {
            answer,
            lang,
            text,
            prompt,
            completion,
        })
    }
}
