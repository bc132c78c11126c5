//! The six ensemble prompt templates, prompt rendering by slot substitution,
//! and the judge prompt builder.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{Answer, ParseStatus, PromptResponse};

pub const LABEL_SLOT: &str = "{label}";
pub const REPORT_SLOT: &str = "{report}";

/// One prompt template with `{label}` and `{report}` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: u32,
    pub body: String,
}

/// Ordered template set; the order indexes the weight vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub templates: Vec<PromptTemplate>,
}

const BUILTIN_BODIES: [&str; 6] = [
    r#"Does the following radiology report indicate that the patient has {label}? Here is the report: {report}. Answer shortly, format your answer as a JSON file using the following schema: {"Answer": "Yes/No", "Explanation": "str"}. Important: Only return a single piece of valid JSON text. For example: {"Answer": "Yes", "Explanation": "The report mentions that the patient has a severe case of the disease."}"#,
    r#"Does the radiology report below suggest that the patient is suffering from {label}? Here is the report: {report}. Please provide a concise answer, formatted as a JSON object using the following schema: {"Answer": "Yes/No", "Explanation": "str"}. Important: Ensure you return a single valid JSON object. For instance: {"Answer": "Yes", "Explanation": "The report indicates that the patient has severe symptoms of the condition."}"#,
    r#"Can the presence of {label} be confirmed from the following radiology report? Here is the report: {report}. Provide a brief response, formatted as a JSON object according to the following schema: {"Answer": "Yes/No", "Explanation": "str"}. Important: Only return a single valid JSON object."#,
    r#"Does the patient appear to have {label} based on the analysis of the radiology report provided? Here is the report: {report}. Please answer succinctly, formatted as a JSON object in the following schema: {"Answer": "Yes/No", "Explanation": "str"}. Important: Return only a single valid JSON object. For example: {"Answer": "Yes", "Explanation": "The report clearly states that the patient has a significant case of the condition."}"#,
    r#"Considering the radiology report presented, is there an indication that the patient has {label}? Here is the report: {report}. Provide a brief answer, formatted as a JSON object according to the schema: {"Answer": "Yes/No", "Explanation": "str"}. Important: Make sure to return a single valid JSON object. For instance: {"Answer": "Yes", "Explanation": "The report notes that the patient shows clear signs of the condition."}"#,
    r#"Is it possible to conclude from the following radiology report that the patient has {label}? Here is the report: {report}. Please provide a concise response, formatted as a JSON object using the schema: {"Answer": "Yes/No", "Explanation": "str"}. Important: Ensure only a single valid JSON object is returned. For instance: {"Answer": "Yes", "Explanation": "The report suggests that the patient has a pronounced case of the condition."}"#,
];

/// The five confidence categories the judge may emit, in display form.
pub const CATEGORY_NAMES: [&str; 5] = [
    "Definitely Yes",
    "Likely Yes",
    "Definitely No",
    "Likely No",
    "Uncertain",
];

fn count_occurrences(haystack: &str, needle: &str) -> usize {
    haystack.matches(needle).count()
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<()> {
        for slot in [LABEL_SLOT, REPORT_SLOT] {
            let found = count_occurrences(&self.body, slot);
            if found != 1 {
                return Err(Error::BadTemplateSlot {
                    template_id: self.template_id,
                    slot: if slot == LABEL_SLOT { "{label}" } else { "{report}" },
                    found,
                });
            }
        }
        Ok(())
    }
}

impl PromptSet {
    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for t in &self.templates {
            t.validate()?;
            if !seen.insert(t.template_id) {
                return Err(Error::DuplicateId(format!("template {}", t.template_id)));
            }
        }
        Ok(())
    }
}

/// The default six-template ensemble.
pub fn builtin_prompt_set() -> PromptSet {
    PromptSet {
        templates: BUILTIN_BODIES
            .iter()
            .enumerate()
            .map(|(i, body)| PromptTemplate {
                template_id: (i + 1) as u32,
                body: body.to_string(),
            })
            .collect(),
    }
}

/// Load a user-supplied template file: a JSON array of `{template_id, body}`.
pub fn load_prompt_set(path: &Path) -> Result<PromptSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let templates: Vec<PromptTemplate> = serde_json::from_str(&text)?;
    let set = PromptSet { templates };
    set.validate()?;
    Ok(set)
}

/// Substitute both slots in a single left-to-right pass over the template body.
/// Inserted text is never rescanned, so a report containing the literal
/// substring `{label}` is preserved verbatim.
pub fn render_prompt(
    template: &PromptTemplate,
    label_name: &str,
    report_text: &str,
) -> Result<String> {
    template.validate()?;
    if report_text.is_empty() {
        return Err(Error::EmptyReportText);
    }
    let body = &template.body;
    let mut out = String::with_capacity(body.len() + label_name.len() + report_text.len());
    let mut rest = body.as_str();
    loop {
        let label_pos = rest.find(LABEL_SLOT);
        let report_pos = rest.find(REPORT_SLOT);
        let (pos, slot, value) = match (label_pos, report_pos) {
            (Some(l), Some(r)) if l < r => (l, LABEL_SLOT, label_name),
            (Some(_), Some(r)) => (r, REPORT_SLOT, report_text),
            (Some(l), None) => (l, LABEL_SLOT, label_name),
            (None, Some(r)) => (r, REPORT_SLOT, report_text),
            (None, None) => break,
        };
        out.push_str(&rest[..pos]);
        out.push_str(value);
        rest = &rest[pos + slot.len()..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Build the judge prompt: enumerate each answer and explanation, state the
/// three evaluation factors, name the five categories, and demand the exact
/// output JSON shape.
pub fn build_agent_prompt(responses: &[PromptResponse], label_name: &str) -> Result<String> {
    let usable: Vec<&PromptResponse> = responses
        .iter()
        .filter(|r| r.parse_status != ParseStatus::Failed)
        .collect();
    if usable.is_empty() {
        return Err(Error::NoParsedResponses);
    }
    let mut prompt = format!(
        "You are reviewing several independent assessments of whether a radiology report \
         indicates that the patient has {label_name}. The assessments are listed below.\n\n"
    );
    for (i, r) in usable.iter().enumerate() {
        let answer = match r.answer {
            Answer::Yes => "Yes",
            Answer::No => "No",
        };
        prompt.push_str(&format!(
            "{}. Answer: {answer}\n   Explanation: {}\n",
            i + 1,
            r.explanation
        ));
    }
    prompt.push_str(
        "\nEvaluate the consistency of the answers, the clarity of their explanations, and \
         the degree of ambiguity. Based on these factors, choose exactly one decision from: \
         \"Definitely Yes\", \"Likely Yes\", \"Definitely No\", \"Likely No\", \"Uncertain\".\n\
         Respond with a single valid JSON object in exactly this shape: \
         {\"Decision\": \"str\", \"Explanation\": \"str\"}\n",
    );
    Ok(prompt)
}
