//! Query and inpainting prompt templates.
//!
//! Templates use `{task}`, `{fore}`, `{back}` and `{candidates}`
//! placeholders. Overrides load from a plain-text file with one
//! `key = template` entry per line; `#` starts a comment.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PromptTemplates {
    pub caption_query: String,
    pub box_query: String,
    pub name_query: String,
    pub positive_inpaint: String,
    pub negative_inpaint: String,
    pub selection_query: String,
    pub box_selection_query: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            caption_query: "Describe this image in one sentence.".into(),
            box_query: "This image is from the {task} detection task, output the bounding box of the {task}."
                .into(),
            name_query: "Output the name of the {task} and its environment in one word.".into(),
            positive_inpaint: "{back}, high quality, detailed, blended to the original image.".into(),
            negative_inpaint: "{fore}, is a {task}".into(),
            selection_query: "This image is from the {task} detection task. Which of the following is the {task} in the image: {candidates}? Answer with one word."
                .into(),
            box_selection_query: "This image is from the {task} detection task, output the bounding box of the {task}. Choose one of: {candidates}."
                .into(),
        }
    }
}

const KEYS: [&str; 7] = [
    "caption_query",
    "box_query",
    "name_query",
    "positive_inpaint",
    "negative_inpaint",
    "selection_query",
    "box_selection_query",
];

/// Substitutes `{key}` placeholders. Unknown placeholders are left alone.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    vars.iter()
        .fold(template.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}

impl PromptTemplates {
    pub fn parse(text: &str) -> Result<Self> {
        let mut t = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("template line {} has no '='", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(Error::Config(format!("template '{key}' is empty")));
            }
            let slot = match key {
                "caption_query" => &mut t.caption_query,
                "box_query" => &mut t.box_query,
                "name_query" => &mut t.name_query,
                "positive_inpaint" => &mut t.positive_inpaint,
                "negative_inpaint" => &mut t.negative_inpaint,
                "selection_query" => &mut t.selection_query,
                "box_selection_query" => &mut t.box_selection_query,
                other => {
                    return Err(Error::Config(format!(
                        "unknown template key '{other}' (expected one of {})",
                        KEYS.join(", ")
                    )))
                }
            };
            *slot = value.to_string();
        }
        Ok(t)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn caption(&self) -> String {
        self.caption_query.clone()
    }

    pub fn box_query(&self, task: &str) -> String {
        render(&self.box_query, &[("task", task)])
    }

    pub fn name_query(&self, task: &str) -> String {
        render(&self.name_query, &[("task", task)])
    }

    pub fn positive(&self, background: &str) -> String {
        render(&self.positive_inpaint, &[("back", background)])
    }

    pub fn negative(&self, foreground: &str, task: &str) -> String {
        render(&self.negative_inpaint, &[("fore", foreground), ("task", task)])
    }

    pub fn selection(&self, task: &str, candidates: &[&str]) -> String {
        render(
            &self.selection_query,
            &[("task", task), ("candidates", &candidates.join(", "))],
        )
    }

    pub fn box_selection(&self, task: &str, candidates: &[String]) -> String {
        render(
            &self.box_selection_query,
            &[("task", task), ("candidates", &candidates.join(", "))],
        )
    }
}

/// Prefixes a query with the image caption produced earlier.
pub fn with_caption(caption: &str, query: &str) -> String {
    if caption.trim().is_empty() {
        query.to_string()
    } else {
        format!("Image caption: {}\n{query}", caption.trim())
    }
}
