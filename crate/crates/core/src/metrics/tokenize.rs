use serde::{Deserialize, Serialize};

/// An ordered token sequence with no empty tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    /// Build from pre-split tokens, dropping empty strings.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TokenSeq(tokens.into_iter().map(Into::into).filter(|t: &String| !t.is_empty()).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSeq {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        TokenSeq::from_tokens(iter)
    }
}

/// Han ideographs plus kana.
pub fn is_cjk(c: char) -> bool {
    matches!(u32::from(c),
        0x3040..=0x309F
        | 0x30A0..=0x30FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EBEF
        | 0x2F800..=0x2FA1F)
}

fn push_trimmed(out: &mut Vec<String>, buf: &mut String) {
    let token = buf.trim_matches(|c: char| !c.is_alphanumeric());
    if !token.is_empty() {
        out.push(token.to_string());
    }
    buf.clear();
}

/// Shared tokenizer for every metric.
///
/// Lowercases, splits on Unicode whitespace, emits each CJK codepoint as its
/// own token and trims non-alphanumeric characters from both ends of the
/// remaining runs. Inner punctuation (`step-by-step`, `3.5`) is kept.
pub fn tokenize(text: &str) -> TokenSeq {
    let mut out = Vec::new();
    let mut buf = String::new();
    for chunk in text.to_lowercase().split_whitespace() {
        for c in chunk.chars() {
            if is_cjk(c) {
                push_trimmed(&mut out, &mut buf);
                out.push(c.to_string());
            } else {
                buf.push(c);
            }
        }
        push_trimmed(&mut out, &mut buf);
    }
    TokenSeq(out)
}
