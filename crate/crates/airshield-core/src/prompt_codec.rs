//! Bidirectional bridge between tabular telemetry and LLM text.
//!
//! A record renders as twelve descriptive lines, one per feature in canonical
//! column order, values in a fixed 2-decimal format (negative zero normalized
//! to "0.00"). Time of arrival displays in microseconds and power in
//! femtowatts so the 2-decimal rendering keeps both informative at desk
//! scale. Rendering is locale-free and byte-stable.
//!
//! The canonical-row helpers quantize values exactly the way the rendered
//! text does, which is what makes the detector path and the text round-trip
//! path bit-comparable.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

use crate::adversary::LabeledSample;
use crate::features::{assemble_row, split_row};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("non-finite feature value at column {0}")]
    NonFinite(usize),
    #[error("missing binding `{0}` for prompt kind `{1}`")]
    MissingBinding(&'static str, &'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad sft line {line}: {msg}")]
    BadSft { line: usize, msg: String },
}

/// Unit scale per canonical column: SI value = display value * scale.
pub const DISPLAY_SCALES: [f64; 12] = [
    1.0,   // x
    1.0,   // y
    1.0,   // distance, meters
    1.0,   // pathloss, dB
    1.0,   // doa_phi, degrees
    1.0,   // doa_theta, degrees
    1.0,   // dod_phi, degrees
    1.0,   // dod_theta, degrees
    1.0,   // phase, degrees
    1e-15, // power, displayed in femtowatts
    1e-6,  // toa, displayed in microseconds
    1.0,   // los
];

/// Display scales for the 11 model-input features (pathloss removed), in
/// canonical input order. SI value = display value * scale.
pub fn input_display_scales() -> Vec<f64> {
    DISPLAY_SCALES
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != crate::features::PATHLOSS_INDEX)
        .map(|(_, s)| *s)
        .collect()
}

/// Sentence fragments per canonical column: (prefix, suffix).
const FEATURE_LINES: [(&str, &str); 12] = [
    ("The X coordinate of the end user relative to the emulated area is ", "."),
    ("The Y coordinate of the end user relative to the emulated area is ", "."),
    ("The distance between the base station and the end user is ", " meters."),
    ("The combined path loss between sender and receiver is ", " decibels to 1 milliwatt."),
    ("The azimuth angle of signal arrival is ", " degrees."),
    ("The zenith angle of signal arrival is ", " degrees."),
    ("The azimuth angle of signal departure is ", " degrees."),
    ("The zenith angle of signal departure is ", " degrees."),
    ("The phase of the signal path is ", " degrees."),
    ("The power of the signal at the receiver is ", " femtowatts."),
    ("The signal arrival time is ", " microseconds."),
    ("The line of sight status between the base station and the end user is ", "."),
];

/// The classification prompt, verbatim.
pub const CLASSIFY_INSTRUCTION: &str = "Some wireless network state records were compromised by an adversarial attack: values were changed so that the predicted signal pathloss value was incorrect. Based on the information provided about numerical features of a wireless signal, give answer if network traffic either (Benign) or (Malicious) and write your answer in round brackets";

const REASONING_TEMPLATE: &str = "Based on {input} info you predicted {result}. Please write your chain of thoughts and reasoning for such an answer.";
const FEATURE_IMPORTANCE_TEMPLATE: &str = "What is the most important numerical feature of {input} in determining malicious intent?";
const PAIR_COMPARISON_TEMPLATE: &str = "Here is an example of a row of (Benign) traffic data {input1} and here is an example of a row of (Malicious) traffic data {input2}. Analyze both examples and write your thoughts on how adversarial attack affected data.";

/// Renders one display-unit value in the fixed 2-decimal format.
fn render_value(display: f64) -> String {
    let s = format!("{display:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

/// Quantizes one SI value to what the rendered text carries, in display units.
fn quantize_display(si: f64, column: usize) -> f64 {
    render_value(si / DISPLAY_SCALES[column])
        .parse()
        .expect("2-decimal rendering always parses")
}

/// The display-unit row exactly as a text round trip would recover it.
pub fn canonical_row(row_si: &[f64; 12]) -> [f64; 12] {
    let mut out = [0.0; 12];
    for (i, v) in row_si.iter().enumerate() {
        out[i] = quantize_display(*v, i);
    }
    out
}

/// Canonicalizes a labeled sample into display-quantized units.
pub fn canonical_sample(s: &LabeledSample) -> LabeledSample {
    let row = canonical_row(&assemble_row(&s.x, s.y));
    let (x, y) = split_row(&row);
    LabeledSample {
        x,
        y,
        label: s.label,
        source_index: s.source_index,
        applied_epsilon: s.applied_epsilon,
    }
}

/// Renders a record row (SI units) as descriptive text: twelve lines, one per
/// feature, canonical column order, no trailing newline.
pub fn serialize_record(row_si: &[f64; 12]) -> Result<String, CodecError> {
    let mut lines = Vec::with_capacity(12);
    for (i, v) in row_si.iter().enumerate() {
        if !v.is_finite() {
            return Err(CodecError::NonFinite(i));
        }
        let (prefix, suffix) = FEATURE_LINES[i];
        lines.push(format!("{prefix}{}{suffix}", render_value(v / DISPLAY_SCALES[i])));
    }
    Ok(lines.join("\n"))
}

/// Strict inverse of [`serialize_record`]: recovers the display-unit values,
/// or `None` when the text was not produced by the renderer.
pub fn parse_record_text(text: &str) -> Option<[f64; 12]> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != 12 {
        return None;
    }
    let mut out = [0.0; 12];
    for (i, line) in lines.iter().enumerate() {
        let (prefix, suffix) = FEATURE_LINES[i];
        let body = line.strip_prefix(prefix)?.strip_suffix(suffix)?;
        out[i] = body.parse().ok()?;
    }
    Some(out)
}

/// Classification prompt for one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifyPrompt {
    pub instruction: String,
    pub input: String,
}

pub fn build_classify_prompt(row_si: &[f64; 12]) -> Result<ClassifyPrompt, CodecError> {
    Ok(ClassifyPrompt {
        instruction: CLASSIFY_INSTRUCTION.to_string(),
        input: serialize_record(row_si)?,
    })
}

/// One instruction-tuning example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExample {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

pub const OUTPUT_BENIGN: &str = "(Benign)";
pub const OUTPUT_MALICIOUS: &str = "(Malicious)";

/// Maps labeled samples to instruction/input/output triples, order preserved.
pub fn build_sft_dataset(samples: &[LabeledSample]) -> Result<Vec<SftExample>, CodecError> {
    samples
        .iter()
        .map(|s| {
            let row = assemble_row(&s.x, s.y);
            Ok(SftExample {
                instruction: CLASSIFY_INSTRUCTION.to_string(),
                input: serialize_record(&row)?,
                output: if s.label == 1 {
                    OUTPUT_MALICIOUS.to_string()
                } else {
                    OUTPUT_BENIGN.to_string()
                },
            })
        })
        .collect()
}

/// Writes one JSON object per line with exactly the keys
/// `instruction`, `input`, `output`, UTF-8.
pub fn write_sft_jsonl(path: &Path, examples: &[SftExample]) -> Result<(), CodecError> {
    let mut w = BufWriter::new(File::create(path)?);
    for ex in examples {
        let line = serde_json::to_string(ex).expect("sft example always serializes");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sft_jsonl(path: &Path) -> Result<Vec<SftExample>, CodecError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: SftExample = serde_json::from_str(&line).map_err(|e| CodecError::BadSft {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(ex);
    }
    Ok(out)
}

/// The three explainability prompt kinds plus classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Classify,
    ExplainReasoning,
    ExplainFeatureImportance,
    ExplainPairComparison,
}

impl PromptKind {
    pub fn name(self) -> &'static str {
        match self {
            PromptKind::Classify => "classify",
            PromptKind::ExplainReasoning => "explain_reasoning",
            PromptKind::ExplainFeatureImportance => "explain_feature_importance",
            PromptKind::ExplainPairComparison => "explain_pair_comparison",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "classify" => Some(PromptKind::Classify),
            "explain_reasoning" => Some(PromptKind::ExplainReasoning),
            "explain_feature_importance" => Some(PromptKind::ExplainFeatureImportance),
            "explain_pair_comparison" => Some(PromptKind::ExplainPairComparison),
            _ => None,
        }
    }
}

/// Placeholder values for [`build_explain_prompt`].
#[derive(Debug, Clone, Default)]
pub struct ExplainBindings {
    pub input: Option<String>,
    pub result: Option<String>,
    pub input1: Option<String>,
    pub input2: Option<String>,
}

/// Renders one explainability prompt; every placeholder of the chosen kind
/// must be bound.
pub fn build_explain_prompt(
    kind: PromptKind,
    bindings: &ExplainBindings,
) -> Result<String, CodecError> {
    let need = |v: &Option<String>, name: &'static str| -> Result<String, CodecError> {
        v.clone()
            .ok_or(CodecError::MissingBinding(name, kind.name()))
    };
    match kind {
        PromptKind::Classify => Ok(CLASSIFY_INSTRUCTION.to_string()),
        PromptKind::ExplainReasoning => Ok(REASONING_TEMPLATE
            .replace("{input}", &need(&bindings.input, "input")?)
            .replace("{result}", &need(&bindings.result, "result")?)),
        PromptKind::ExplainFeatureImportance => Ok(FEATURE_IMPORTANCE_TEMPLATE
            .replace("{input}", &need(&bindings.input, "input")?)),
        PromptKind::ExplainPairComparison => Ok(PAIR_COMPARISON_TEMPLATE
            .replace("{input1}", &need(&bindings.input1, "input1")?)
            .replace("{input2}", &need(&bindings.input2, "input2")?)),
    }
}

/// LLM verdict extracted from a completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Benign,
    Malicious,
    Unparseable,
}

/// Case-insensitive scan for the literal tokens "(benign)" and "(malicious)".
/// Exactly one token kind present yields that verdict; both or neither is
/// Unparseable — never guessed.
pub fn parse_verdict(completion: &str) -> Verdict {
    let lower = completion.to_lowercase();
    let has_benign = lower.contains("(benign)");
    let has_malicious = lower.contains("(malicious)");
    match (has_benign, has_malicious) {
        (true, false) => Verdict::Benign,
        (false, true) => Verdict::Malicious,
        _ => Verdict::Unparseable,
    }
}
