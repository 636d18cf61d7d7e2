use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{TemplateError, TemplateSet};
use crate::gateway::{Backend, BackendError, ChatRequest, Sidecar, SidecarPayload};

/// The three cooperative-behavior labels. Any subset may apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BehaviorLabels {
    pub info_sharing: bool,
    pub leadership_assistance: bool,
    pub request_guidance: bool,
}

impl BehaviorLabels {
    pub fn from_bits(b: [u8; 3]) -> Self {
        BehaviorLabels {
            info_sharing: b[0] != 0,
            leadership_assistance: b[1] != 0,
            request_guidance: b[2] != 0,
        }
    }

    pub fn as_array(&self) -> [bool; 3] {
        [self.info_sharing, self.leadership_assistance, self.request_guidance]
    }

    /// The reply format the classifier is asked for.
    pub fn reply_text(&self) -> String {
        let [a, b, c] = self.as_array().map(u8::from);
        format!("LABEL1: {a}\nLABEL2: {b}\nLABEL3: {c}")
    }
}

/// Accepts the on-disk `[0, 1, 1]` form as well as the struct form.
#[derive(Deserialize)]
#[serde(untagged)]
enum LabelsRepr {
    Bits([u8; 3]),
    Named(BehaviorLabels),
}

fn labels_from_repr<'de, D: serde::Deserializer<'de>>(d: D) -> Result<BehaviorLabels, D::Error> {
    Ok(match LabelsRepr::deserialize(d)? {
        LabelsRepr::Bits(b) => BehaviorLabels::from_bits(b),
        LabelsRepr::Named(l) => l,
    })
}

fn opt_labels_from_repr<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<BehaviorLabels>, D::Error> {
    Ok(Option::<LabelsRepr>::deserialize(d)?.map(|r| match r {
        LabelsRepr::Bits(b) => BehaviorLabels::from_bits(b),
        LabelsRepr::Named(l) => l,
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub dialogue: String,
    #[serde(deserialize_with = "labels_from_repr")]
    pub human_labels: BehaviorLabels,
    #[serde(default, deserialize_with = "opt_labels_from_repr", skip_serializing_if = "Option::is_none")]
    pub predicted: Option<BehaviorLabels>,
    /// Labels a reference classifier gave the same sample, when known.
    #[serde(default, deserialize_with = "opt_labels_from_repr", skip_serializing_if = "Option::is_none")]
    pub reference_predictions: Option<BehaviorLabels>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub samples: Vec<LabeledSample>,
}

const APPENDIX_G: &str = include_str!("../../fixtures/appendix_g.json");

impl Corpus {
    /// The 20 human-labeled dialogue samples shipped with the crate.
    pub fn builtin() -> Self {
        serde_json::from_str(APPENDIX_G).expect("built-in corpus parses")
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn label_count(&self) -> usize {
        self.samples.len() * 3
    }

    pub fn true_label_count(&self) -> usize {
        self.samples
            .iter()
            .map(|s| s.human_labels.as_array().iter().filter(|b| **b).count())
            .sum()
    }
}

/// Parse `LABEL1: 0|1` lines. All three must be present.
pub fn parse_labels(reply: &str) -> Option<BehaviorLabels> {
    let mut bits: [Option<bool>; 3] = [None; 3];
    for line in reply.lines() {
        let line = line.trim().trim_start_matches(['*', '-', ' ']);
        let upper = line.to_ascii_uppercase();
        for (i, slot) in bits.iter_mut().enumerate() {
            let tag = format!("LABEL{}", i + 1);
            if let Some(rest) = upper.strip_prefix(&tag) {
                let v = rest.trim_start_matches(['*', ' ', ':']).trim_start();
                match v.chars().next() {
                    Some('1') => *slot = Some(true),
                    Some('0') => *slot = Some(false),
                    _ => {}
                }
            }
        }
    }
    Some(BehaviorLabels {
        info_sharing: bits[0]?,
        leadership_assistance: bits[1]?,
        request_guidance: bits[2]?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classified {
    pub labels: BehaviorLabels,
    /// Set when the reply could not be parsed even after a re-ask.
    pub warning: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Label one message. An unparsable reply is re-asked once, then treated as all-false.
pub fn classify_message(
    templates: &TemplateSet,
    dialogue: &str,
    backend: &mut dyn Backend,
) -> Result<Classified, ClassifyError> {
    if dialogue.trim().is_empty() {
        return Ok(Classified {
            labels: BehaviorLabels::default(),
            warning: None,
        });
    }
    let values: BTreeMap<String, String> = [("DIALOGUE".to_string(), dialogue.to_string())].into();
    let (system, user) = templates.classifier.render(&values)?;
    let request = ChatRequest::new(system, user).with_sidecar(Sidecar {
        fields: values,
        payload: SidecarPayload::Classify {
            dialogue: dialogue.to_string(),
        },
    });
    let first = backend.complete(&request)?.content;
    if let Some(labels) = parse_labels(&first) {
        return Ok(Classified { labels, warning: None });
    }
    let reask = request.reask(&first, "Answer with exactly three lines: LABEL1: 0 or 1, LABEL2: 0 or 1, LABEL3: 0 or 1.");
    let second = backend.complete(&reask)?.content;
    Ok(match parse_labels(&second) {
        Some(labels) => Classified { labels, warning: None },
        None => {
            let w = format!("classifier reply unparsable twice; labeling as none: {second:?}");
            tracing::warn!("{w}");
            Classified {
                labels: BehaviorLabels::default(),
                warning: Some(w),
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub matched: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.matched as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    /// 1-based sample row.
    pub row: usize,
    /// 1-based label number.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: Accuracy,
    pub mismatches: Vec<Mismatch>,
    pub predicted: Vec<BehaviorLabels>,
}

/// Accuracy of a set of predictions against the human labels, per binary label.
pub fn score(corpus: &Corpus, predicted: &[BehaviorLabels]) -> (Accuracy, Vec<Mismatch>) {
    let mut matched = 0;
    let mut mismatches = Vec::new();
    for (row, (s, p)) in corpus.samples.iter().zip(predicted).enumerate() {
        for (label, (h, q)) in s.human_labels.as_array().iter().zip(p.as_array()).enumerate() {
            if *h == q {
                matched += 1;
            } else {
                mismatches.push(Mismatch {
                    row: row + 1,
                    label: label + 1,
                });
            }
        }
    }
    (
        Accuracy {
            matched,
            total: corpus.label_count(),
        },
        mismatches,
    )
}

pub fn evaluate_classifier(
    templates: &TemplateSet,
    corpus: &Corpus,
    backend: &mut dyn Backend,
) -> Result<Evaluation, ClassifyError> {
    let predicted = corpus
        .samples
        .iter()
        .map(|s| classify_message(templates, &s.dialogue, backend).map(|c| c.labels))
        .collect::<Result<Vec<_>, _>>()?;
    let (accuracy, mismatches) = score(corpus, &predicted);
    Ok(Evaluation {
        accuracy,
        mismatches,
        predicted,
    })
}
