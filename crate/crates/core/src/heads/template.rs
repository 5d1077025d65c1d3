use std::fmt::Write as _;
use std::path::Path;

use super::verbalizer::Verbalizer;
use crate::backbone::{Vocabulary, CLS, MASK, PAD};
use crate::error::{GleeError, Result};

const SLOT: &str = "{x}";
const MASK_TEXT: &str = "[MASK]";

/// Input pattern with exactly one `{x}` slot and exactly one `[MASK]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pattern: String,
}

impl Template {
    pub fn new(pattern: impl Into<String>) -> Result<Self> {
        let pattern = pattern.into();
        let slots = pattern.matches(SLOT).count();
        let masks = pattern.matches(MASK_TEXT).count();
        if slots != 1 {
            return Err(GleeError::Template(format!(
                "expected exactly one {SLOT} slot, found {slots} in {pattern:?}"
            )));
        }
        if masks != 1 {
            return Err(GleeError::Template(format!(
                "expected exactly one {MASK_TEXT}, found {masks} in {pattern:?}"
            )));
        }
        Ok(Template { pattern })
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn render(&self, x: &str) -> String {
        self.pattern.replacen(SLOT, x, 1)
    }

    /// Token ids of the rendered input, `[CLS]` first, padded to `max_len`.
    /// Only the `{x}` part is truncated, so the `[MASK]` always survives.
    pub fn encode(&self, x: &str, vocab: &Vocabulary, max_len: usize) -> Result<Vec<u32>> {
        let (before, after) = self.pattern.split_once(SLOT).expect("validated slot");
        let before = vocab.word_ids(before);
        let after = vocab.word_ids(after);
        self.assemble(&before, &vocab.word_ids(x), &after, max_len)
    }

    /// Positions the template itself occupies, `[MASK]` included.
    pub fn overhead(&self, vocab: &Vocabulary) -> usize {
        let (before, after) = self.pattern.split_once(SLOT).expect("validated slot");
        vocab.word_ids(before).len() + vocab.word_ids(after).len()
    }

    /// Renders an already-tokenized example (ids without `[CLS]`/`[PAD]`).
    pub fn encode_ids(&self, x: &[u32], vocab: &Vocabulary, max_len: usize) -> Result<Vec<u32>> {
        let (before, after) = self.pattern.split_once(SLOT).expect("validated slot");
        let body: Vec<u32> = x.iter().copied().filter(|&t| t != PAD && t != CLS).collect();
        self.assemble(&vocab.word_ids(before), &body, &vocab.word_ids(after), max_len)
    }

    fn assemble(&self, before: &[u32], body: &[u32], after: &[u32], max_len: usize) -> Result<Vec<u32>> {
        let fixed = 1 + before.len() + after.len();
        if fixed > max_len {
            return Err(GleeError::Template(format!(
                "template needs {fixed} positions but max_len is {max_len}"
            )));
        }
        if body.contains(&MASK) {
            return Err(GleeError::Template("input text already contains [MASK]".into()));
        }
        let keep = body.len().min(max_len - fixed);
        let mut ids = Vec::with_capacity(max_len);
        ids.push(CLS);
        ids.extend_from_slice(before);
        ids.extend_from_slice(&body[..keep]);
        ids.extend_from_slice(after);
        ids.resize(max_len, PAD);
        Ok(ids)
    }
}

pub fn render_template(t: &Template, x: &str) -> String {
    t.render(x)
}

/// Template plus verbalizer, as stored in the line-oriented prompt file:
///
/// ```text
/// template: {x}. It was [MASK].
/// class 0: great, good
/// class 1: bad
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptConfig {
    pub template: Template,
    pub verbalizer: Verbalizer,
}

impl PromptConfig {
    pub fn parse(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let mut template = None;
        let mut classes: Vec<Option<Vec<u32>>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(p) = line.strip_prefix("template:") {
                if template.is_some() {
                    return Err(GleeError::Template(format!("line {}: second template", lineno + 1)));
                }
                template = Some(Template::new(p.trim())?);
            } else if let Some(rest) = line.strip_prefix("class ") {
                let (id, toks) = rest.split_once(':').ok_or_else(|| {
                    GleeError::Verbalizer(format!("line {}: expected `class <id>: tokens`", lineno + 1))
                })?;
                let id: usize = id.trim().parse().map_err(|_| {
                    GleeError::Verbalizer(format!("line {}: bad class id {id:?}", lineno + 1))
                })?;
                let mut ids = Vec::new();
                for tok in toks.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                    ids.push(vocab.id(tok).ok_or_else(|| {
                        GleeError::Verbalizer(format!(
                            "line {}: token {tok:?} not in vocabulary",
                            lineno + 1
                        ))
                    })?);
                }
                if classes.len() <= id {
                    classes.resize(id + 1, None);
                }
                if classes[id].is_some() {
                    return Err(GleeError::Verbalizer(format!("class {id} defined twice")));
                }
                classes[id] = Some(ids);
            } else {
                return Err(GleeError::Verbalizer(format!(
                    "line {}: unrecognized entry {line:?}",
                    lineno + 1
                )));
            }
        }
        let template = template.ok_or_else(|| GleeError::Template("missing `template:` line".into()))?;
        let classes = classes
            .into_iter()
            .enumerate()
            .map(|(c, t)| t.ok_or_else(|| GleeError::Verbalizer(format!("class {c} missing"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(PromptConfig {
            template,
            verbalizer: Verbalizer::new(classes, vocab.len())?,
        })
    }

    pub fn to_text(&self, vocab: &Vocabulary) -> String {
        let mut s = format!("template: {}\n", self.template.pattern());
        for (c, toks) in self.verbalizer.iter().enumerate() {
            let words: Vec<&str> = toks.iter().map(|&t| vocab.token(t).unwrap_or("[UNK]")).collect();
            let _ = writeln!(s, "class {c}: {}", words.join(", "));
        }
        s
    }

    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GleeError::io(path, e))?;
        PromptConfig::parse(&text, vocab)
    }

    pub fn save(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        std::fs::write(path, self.to_text(vocab)).map_err(|e| GleeError::io(path, e))
    }
}
