//! LLM-driven classification of test records and explainability queries.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use airshield_core::adversary::LabeledSample;
use airshield_core::detector::{compute_macro_metrics, compute_metrics, MacroMetrics, Metrics};
use airshield_core::features::assemble_row;
use airshield_core::prompt_codec::{
    build_classify_prompt, build_explain_prompt, parse_verdict, ExplainBindings, PromptKind,
    Verdict, CLASSIFY_INSTRUCTION,
};

use crate::backend::Backend;
use crate::transcript::{TranscriptEntry, TranscriptStore};
use crate::{GatewayConfig, GatewayError, TransportStatus};

/// Runs `f(0..n)` with at most `max_parallel` invocations in flight; results
/// return in index order.
pub fn run_bounded<T, F>(n: usize, max_parallel: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..max_parallel.min(n).max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i);
                *slots[i].lock().expect("result slot poisoned") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot poisoned").expect("slot filled"))
        .collect()
}

/// Outcome of an LLM classification run over a test set.
#[derive(Debug, Clone)]
pub struct LlmEvaluation {
    pub verdicts: Vec<Verdict>,
    /// Labels fed to the metric harness; unparseable or failed records are
    /// scored as wrong for their true class.
    pub predicted: Vec<u8>,
    pub unparseable_count: usize,
    pub transport_failure_count: usize,
    pub metrics: Metrics,
    pub macro_metrics: MacroMetrics,
}

/// One classify prompt + completion + verdict per record, with bounded
/// parallelism and per-record transcript persistence. Records already present
/// in the store under `run_id` are not re-queried.
pub fn classify_with_llm(
    backend: &Backend,
    cfg: &GatewayConfig,
    testset: &[LabeledSample],
    transcripts: &TranscriptStore,
    run_id: &str,
) -> Result<LlmEvaluation, GatewayError> {
    cfg.validate()?;
    if testset.is_empty() {
        return Err(GatewayError::InvalidConfig("empty test set".into()));
    }
    let mut inputs = Vec::with_capacity(testset.len());
    for s in testset {
        let prompt = build_classify_prompt(&assemble_row(&s.x, s.y))?;
        inputs.push(prompt.input);
    }

    // Resume: reuse records that already completed successfully; failed or
    // missing records are (re-)queried. A re-query appends a fresh entry for
    // the same key, and the newest line wins on reload.
    let mut responses: Vec<Option<(TransportStatus, Option<String>)>> =
        vec![None; testset.len()];
    let mut pending = Vec::new();
    for (i, slot) in responses.iter_mut().enumerate() {
        match transcripts.get(run_id, i) {
            Some(entry) if entry.status == "ok" => {
                *slot = Some((TransportStatus::Ok, entry.response.clone()));
            }
            _ => pending.push(i),
        }
    }

    let fresh = run_bounded(pending.len(), cfg.max_parallel_requests, |k| {
        let i = pending[k];
        let result = backend.complete(cfg, CLASSIFY_INSTRUCTION, &inputs[i]);
        let entry = TranscriptEntry {
            run_id: run_id.to_string(),
            record_index: i,
            prompt_kind: "classify".into(),
            input: inputs[i].clone(),
            response: result.text.clone(),
            status: result.transport_status.name().into(),
            latency_ms: result.latency.as_millis() as u64,
        };
        let write = transcripts.append(&entry);
        (i, result, write)
    });
    for (i, result, write) in fresh {
        write?;
        responses[i] = Some((result.transport_status, result.text));
    }

    let mut verdicts = Vec::with_capacity(testset.len());
    let mut predicted = Vec::with_capacity(testset.len());
    let mut unparseable_count = 0;
    let mut transport_failure_count = 0;
    for (s, response) in testset.iter().zip(&responses) {
        let (status, text) = response.as_ref().expect("all records resolved");
        let verdict = match (status, text) {
            (TransportStatus::Ok, Some(t)) => parse_verdict(t),
            _ => {
                transport_failure_count += 1;
                Verdict::Unparseable
            }
        };
        if verdict == Verdict::Unparseable && *status == TransportStatus::Ok {
            unparseable_count += 1;
        }
        // Conservative scoring: a record without a usable verdict is wrong
        // for whichever class it truly belongs to.
        let label = match verdict {
            Verdict::Benign => 0,
            Verdict::Malicious => 1,
            Verdict::Unparseable => 1 - s.label,
        };
        verdicts.push(verdict);
        predicted.push(label);
    }

    if transport_failure_count > cfg.abort_after_transport_failures {
        return Err(GatewayError::TransportAborted {
            failures: transport_failure_count,
            threshold: cfg.abort_after_transport_failures,
        });
    }

    let truth: Vec<u8> = testset.iter().map(|s| s.label).collect();
    let metrics = compute_metrics(&predicted, &truth)
        .map_err(|e| GatewayError::InvalidConfig(e.to_string()))?;
    let macro_metrics = compute_macro_metrics(&predicted, &truth)
        .map_err(|e| GatewayError::InvalidConfig(e.to_string()))?;
    Ok(LlmEvaluation {
        verdicts,
        predicted,
        unparseable_count,
        transport_failure_count,
        metrics,
        macro_metrics,
    })
}

/// One explainability exchange, ready to be embedded as a report section.
#[derive(Debug, Clone)]
pub struct ExplanationTranscript {
    pub kind: PromptKind,
    pub prompt: String,
    pub response: Option<String>,
    pub status: TransportStatus,
}

/// Renders the prompt for `kind`, completes it, and returns the exchange.
pub fn explain_incident(
    backend: &Backend,
    cfg: &GatewayConfig,
    kind: PromptKind,
    bindings: &ExplainBindings,
) -> Result<ExplanationTranscript, GatewayError> {
    cfg.validate()?;
    let prompt = build_explain_prompt(kind, bindings)?;
    let result = backend.complete(cfg, &prompt, "");
    Ok(ExplanationTranscript {
        kind,
        prompt,
        response: result.text,
        status: result.transport_status,
    })
}
