//! The five prompt templates and their byte-stable rendering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    CritDeleted,
    CritAddedOnly,
    CritReorder,
    PreFilter,
    Comparative,
}

impl TemplateId {
    pub fn name(&self) -> &'static str {
        match self {
            TemplateId::CritDeleted => "CRIT_DELETED",
            TemplateId::CritAddedOnly => "CRIT_ADDED_ONLY",
            TemplateId::CritReorder => "CRIT_REORDER",
            TemplateId::PreFilter => "PRE_FILTER",
            TemplateId::Comparative => "COMPARATIVE",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub role_text: &'static str,
    pub parameter_lines: &'static [&'static str],
    pub instruction_text: &'static str,
    pub output_format_text: &'static str,
}

const TUPLE_OUTPUT_DELETED: &str = "Output the above most important and representative lines in the format of a Python list [], each element in the list is a tuple (filename, functionname, linenum, line). The linenum is the line number inside the corresponding function. When printing the elements, each element is printed in one line instead of multiple lines.";

const TUPLE_OUTPUT_PRE_PATCH: &str = "Output the above most important and representative lines that exist before the patch in the format of a Python list [], each element in the list is a tuple (filename, functionname, linenum, line). The linenum is the line number inside the corresponding function. When printing the elements, each element is printed in one line instead of multiple lines.";

static CRIT_DELETED: PromptTemplate = PromptTemplate {
    id: TemplateId::CritDeleted,
    role_text: "You are an experienced Linux program analysis expert. I am working on analyzing the Linux kernel patches that fix vulnerabilities. I will give you the content of the patch. You should return the most important and representative lines which are deleted in the patch.",
    parameter_lines: &[
        "The patch is: ${patch_content}",
        "The complete functions before the patch are: ${function_content}",
    ],
    instruction_text: "Considering the purpose of the patch, from the lines which are deleted in the patch, pick the ${num_lines} important and representative lines which are closely related to the logic of the vulnerability.",
    output_format_text: TUPLE_OUTPUT_DELETED,
};

static CRIT_ADDED_ONLY: PromptTemplate = PromptTemplate {
    id: TemplateId::CritAddedOnly,
    role_text: "You are an experienced Linux program analysis expert. I am working on analyzing the Linux kernel patches that fix vulnerabilities. I will give you the content of the patch and You should return the most important and representative lines.",
    parameter_lines: &[
        "The patch is: ${patch_content}",
        "The complete functions before the patch are: ${function_content}",
    ],
    instruction_text: "Considering the purpose of the patch, list important and representative lines with the corresponding functions before the patch is applied. These lines must have data dependency with the added lines in the patch.",
    output_format_text: TUPLE_OUTPUT_PRE_PATCH,
};

static CRIT_REORDER: PromptTemplate = PromptTemplate {
    id: TemplateId::CritReorder,
    role_text: "You are an experienced Linux program analysis expert. I am working on analyzing the Linux kernel patches that fix vulnerabilities. I will give you the content of the patch and You should return the most important and representative lines.",
    parameter_lines: &[
        "The patch is: ${patch_content}",
        "The complete functions before the patch are: ${function_content}",
        "The identified reordered lines before the patch are: ${reorder_lines}",
    ],
    instruction_text: "Considering the purpose of the patch, list important and representative lines with the corresponding functions before the patch is applied. These lines must have data dependency with the reordered lines in the patch.",
    output_format_text: TUPLE_OUTPUT_PRE_PATCH,
};

static PRE_FILTER: PromptTemplate = PromptTemplate {
    id: TemplateId::PreFilter,
    role_text: "You are an experienced Linux program analysis expert. I am working on analyzing the Linux kernel patches that fix vulnerabilities. I will give you the content of the patch and the content of a previous commit. You should analyze the patch and understand the logic of the corresponding vulnerability, then determine whether the given commit introduced the vulnerability.",
    parameter_lines: &[
        "The patch is: ${patch_content}",
        "The content of a previous commit: ${commit_content}",
    ],
    instruction_text: "Analyzing the logic of the patch, determine whether the given commit introduced the vulnerability.",
    output_format_text: "If so, return True, otherwise return False. If you return True, please also explain the reason why you think the commit introduced the vulnerability.",
};

static COMPARATIVE: PromptTemplate = PromptTemplate {
    id: TemplateId::Comparative,
    role_text: "You are an experienced Linux program analysis expert. I am working on analyzing the Linux kernel patches that fix vulnerabilities. I will give you the content of the patch (and the corresponding complete function definitions before the patch), also I will provide a list of previous commits (and the corresponding complete function definitions before each commit). You should analyze the patch and understand the logic of the corresponding vulnerability, then determine which commit among the list introduced the vulnerability.",
    parameter_lines: &[
        "The patch is: ${patch_content}",
        "The below are the lists of previous commits: ${commit_content}",
    ],
    instruction_text: "Analyzing the logic of the patch, determine which commit among the list introduced the vulnerability.",
    output_format_text: "",
};

pub fn template(id: TemplateId) -> &'static PromptTemplate {
    match id {
        TemplateId::CritDeleted => &CRIT_DELETED,
        TemplateId::CritAddedOnly => &CRIT_ADDED_ONLY,
        TemplateId::CritReorder => &CRIT_REORDER,
        TemplateId::PreFilter => &PRE_FILTER,
        TemplateId::Comparative => &COMPARATIVE,
    }
}

/// Slot names referenced by a template, in first-appearance order.
pub fn parameter_slots(id: TemplateId) -> Vec<String> {
    let t = template(id);
    let mut slots = Vec::new();
    let mut scan = |text: &str| {
        let mut rest = text;
        while let Some(start) = rest.find("${") {
            let tail = &rest[start + 2..];
            let Some(end) = tail.find('}') else { break };
            let name = &tail[..end];
            if !slots.iter().any(|s| s == name) {
                slots.push(name.to_string());
            }
            rest = &tail[end + 1..];
        }
    };
    for line in t.parameter_lines {
        scan(line);
    }
    scan(t.instruction_text);
    scan(t.output_format_text);
    slots
}

/// Deterministic rendering: role, parameters, instruction, output format,
/// separated by blank lines. Fails if any `${slot}` is unfilled.
pub fn render_prompt(
    id: TemplateId,
    params: &BTreeMap<String, String>,
) -> Result<String, LlmError> {
    let t = template(id);
    for slot in parameter_slots(id) {
        if !params.contains_key(&slot) {
            return Err(LlmError::MissingSlot(slot));
        }
    }
    let substitute = |text: &str| -> String {
        let mut out = text.to_string();
        for (k, v) in params {
            out = out.replace(&format!("${{{k}}}"), v);
        }
        out
    };
    let mut sections: Vec<String> = vec![t.role_text.to_string()];
    sections.push(
        t.parameter_lines
            .iter()
            .map(|l| substitute(l))
            .collect::<Vec<_>>()
            .join("\n"),
    );
    sections.push(substitute(t.instruction_text));
    if !t.output_format_text.is_empty() {
        sections.push(substitute(t.output_format_text));
    }
    Ok(sections.join("\n\n"))
}
