//! Marker-based input formats for the encoder.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::vocab::{type_token, CLS, E1, E1_END, E2, E2_END, OBJ, SEP, SUBJ};
use crate::corpus::{EntitySpan, LinkedSentence};
use crate::error::{Error, Result};

/// What the encoder sees of the sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InputSetting {
    /// Context plus mentions.
    #[serde(rename = "C+M")]
    ContextMention,
    /// Context plus type tokens in place of mentions.
    #[serde(rename = "C+T")]
    ContextType,
    /// Context with mentions replaced by `[SUBJ]` / `[OBJ]`.
    #[serde(rename = "OnlyC")]
    OnlyContext,
    /// Mentions only.
    #[serde(rename = "OnlyM")]
    OnlyMention,
    /// Type tokens only.
    #[serde(rename = "OnlyT")]
    OnlyType,
}

impl InputSetting {
    pub const ALL: [InputSetting; 5] = [
        InputSetting::ContextMention,
        InputSetting::ContextType,
        InputSetting::OnlyContext,
        InputSetting::OnlyMention,
        InputSetting::OnlyType,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InputSetting::ContextMention => "C+M",
            InputSetting::ContextType => "C+T",
            InputSetting::OnlyContext => "OnlyC",
            InputSetting::OnlyMention => "OnlyM",
            InputSetting::OnlyType => "OnlyT",
        }
    }

    pub fn needs_types(self) -> bool {
        matches!(self, InputSetting::ContextType | InputSetting::OnlyType)
    }

    pub fn apply(self, s: &LinkedSentence) -> Result<Vec<String>> {
        match self {
            InputSetting::ContextMention => Ok(format_cm(s)),
            InputSetting::ContextType => format_ct(s),
            InputSetting::OnlyContext => Ok(format_onlyc(s)),
            InputSetting::OnlyMention => Ok(format_onlym(s)),
            InputSetting::OnlyType => format_onlyt(s),
        }
    }
}

impl fmt::Display for InputSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InputSetting::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown input setting {s:?}")))
    }
}

fn mention(s: &LinkedSentence, span: &EntitySpan) -> Vec<String> {
    s.tokens[span.start..span.end].to_vec()
}

fn typed(span: &EntitySpan, role: &'static str) -> Result<Vec<String>> {
    let ty = span.entity_type.as_deref().ok_or(Error::MissingType(role))?;
    Ok(vec![type_token(ty)])
}

/// Rewrites the sentence with each mention replaced by `head` / `tail` and
/// wrapped in its marker pair.
fn marked(s: &LinkedSentence, head: Vec<String>, tail: Vec<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(s.tokens.len() + 6);
    out.push(CLS.to_owned());
    let mut i = 0;
    let mut head = Some(head);
    let mut tail = Some(tail);
    while i < s.tokens.len() {
        if i == s.head.start {
            out.push(E1.to_owned());
            out.extend(head.take().unwrap_or_default());
            out.push(E1_END.to_owned());
            i = s.head.end;
        } else if i == s.tail.start {
            out.push(E2.to_owned());
            out.extend(tail.take().unwrap_or_default());
            out.push(E2_END.to_owned());
            i = s.tail.end;
        } else {
            out.push(s.tokens[i].clone());
            i += 1;
        }
    }
    out.push(SEP.to_owned());
    out
}

fn mentions_only(head: Vec<String>, tail: Vec<String>) -> Vec<String> {
    let mut out = vec![CLS.to_owned(), E1.to_owned()];
    out.extend(head);
    out.push(E1_END.to_owned());
    out.push(E2.to_owned());
    out.extend(tail);
    out.push(E2_END.to_owned());
    out.push(SEP.to_owned());
    out
}

pub fn format_cm(s: &LinkedSentence) -> Vec<String> {
    marked(s, mention(s, &s.head), mention(s, &s.tail))
}

pub fn format_ct(s: &LinkedSentence) -> Result<Vec<String>> {
    Ok(marked(s, typed(&s.head, "head")?, typed(&s.tail, "tail")?))
}

pub fn format_onlyc(s: &LinkedSentence) -> Vec<String> {
    marked(s, vec![SUBJ.to_owned()], vec![OBJ.to_owned()])
}

pub fn format_onlym(s: &LinkedSentence) -> Vec<String> {
    mentions_only(mention(s, &s.head), mention(s, &s.tail))
}

pub fn format_onlyt(s: &LinkedSentence) -> Result<Vec<String>> {
    Ok(mentions_only(typed(&s.head, "head")?, typed(&s.tail, "tail")?))
}
