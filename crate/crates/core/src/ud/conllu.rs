//! Streaming CoNLL-U reader (UD v2).

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TokenId {
    Single(u32),
    /// Multiword token `3-4`.
    Range(u32, u32),
    /// Empty node `5.1` of the enhanced graph.
    Empty(u32, u32),
}

impl TokenId {
    pub fn is_range(self) -> bool {
        matches!(self, TokenId::Range(..))
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenId::Single(i) => write!(f, "{i}"),
            TokenId::Range(a, b) => write!(f, "{a}-{b}"),
            TokenId::Empty(a, b) => write!(f, "{a}.{b}"),
        }
    }
}

impl std::str::FromStr for TokenId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |x: &str| x.parse::<u32>().map_err(|_| format!("bad token id {s:?}"));
        if let Some((a, b)) = s.split_once('-') {
            Ok(TokenId::Range(num(a)?, num(b)?))
        } else if let Some((a, b)) = s.split_once('.') {
            Ok(TokenId::Empty(num(a)?, num(b)?))
        } else {
            Ok(TokenId::Single(num(s)?))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConlluToken {
    pub id: TokenId,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: BTreeMap<String, String>,
    /// Absent for multiword ranges and empty nodes.
    pub head: Option<u32>,
    pub deprel: Option<String>,
    pub misc: String,
}

impl ConlluToken {
    pub fn feat(&self, key: &str) -> Option<&str> {
        self.feats.get(key).map(String::as_str)
    }

    fn space_after(&self) -> bool {
        !self.misc.split('|').any(|m| m == "SpaceAfter=No")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConlluSentence {
    pub sent_id: String,
    pub text: String,
    pub tokens: Vec<ConlluToken>,
}

impl ConlluSentence {
    /// Syntactic words and empty nodes, i.e. every line but multiword ranges.
    pub fn word_count(&self) -> usize {
        self.tokens.iter().filter(|t| !t.id.is_range()).count()
    }

    /// Surface text rebuilt from the token forms, used when `# text` is absent.
    pub fn detokenize(&self) -> String {
        let mut out = String::new();
        let mut covered_until = 0;
        for t in &self.tokens {
            match t.id {
                TokenId::Range(_, end) => covered_until = end,
                TokenId::Single(i) if i <= covered_until => continue,
                TokenId::Empty(..) => continue,
                TokenId::Single(_) => {}
            }
            out.push_str(&t.form);
            if t.space_after() {
                out.push(' ');
            }
        }
        out.trim_end().to_string()
    }
}

fn parse_feats(raw: &str, line: usize) -> Result<BTreeMap<String, String>, ConlluError> {
    if raw == "_" {
        return Ok(BTreeMap::new());
    }
    raw.split('|')
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| ConlluError::Malformed { line, message: format!("bad feature {kv:?}") })
        })
        .collect()
}

fn parse_token(raw: &str, line: usize) -> Result<ConlluToken, ConlluError> {
    let malformed = |message: String| ConlluError::Malformed { line, message };
    let cols: Vec<&str> = raw.split('\t').collect();
    if cols.len() != 10 {
        return Err(malformed(format!("expected 10 tab-separated columns, found {}", cols.len())));
    }
    let id: TokenId = cols[0].parse().map_err(malformed)?;
    let (head, deprel) = match id {
        TokenId::Single(_) => {
            let head = cols[6].parse::<u32>().map_err(|_| malformed(format!("non-integer head {:?}", cols[6])))?;
            (Some(head), Some(cols[7].to_string()))
        }
        _ => (None, None),
    };
    Ok(ConlluToken {
        id,
        form: cols[1].to_string(),
        lemma: cols[2].to_string(),
        upos: cols[3].to_string(),
        xpos: cols[4].to_string(),
        feats: parse_feats(cols[5], line)?,
        head,
        deprel,
        misc: cols[9].to_string(),
    })
}

#[derive(Default)]
struct Pending {
    sent_id: Option<String>,
    text: Option<String>,
    tokens: Vec<ConlluToken>,
    start_line: usize,
}

impl Pending {
    fn finish(self, ordinal: usize) -> Result<ConlluSentence, ConlluError> {
        let mut expected = 1;
        for t in &self.tokens {
            if let TokenId::Single(i) = t.id {
                if i != expected {
                    return Err(ConlluError::Malformed {
                        line: self.start_line,
                        message: format!("token ids not contiguous: expected {expected}, found {i}"),
                    });
                }
                expected += 1;
            }
        }
        let mut sentence = ConlluSentence {
            sent_id: self.sent_id.unwrap_or_else(|| format!("s{ordinal}")),
            text: String::new(),
            tokens: self.tokens,
        };
        sentence.text = self.text.unwrap_or_else(|| sentence.detokenize());
        Ok(sentence)
    }
}

/// Parses a whole CoNLL-U stream. Errors carry 1-based line numbers.
pub fn parse_conllu<R: BufRead>(reader: R) -> Result<Vec<ConlluSentence>, ConlluError> {
    let mut out = Vec::new();
    let mut pending = Pending::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        let lineno = idx + 1;
        if line.trim().is_empty() {
            if !pending.tokens.is_empty() {
                let done = std::mem::take(&mut pending);
                out.push(done.finish(out.len() + 1)?);
            } else {
                pending = Pending::default();
            }
            continue;
        }
        if pending.tokens.is_empty() && pending.start_line == 0 {
            pending.start_line = lineno;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                match key.trim() {
                    "sent_id" => pending.sent_id = Some(value.trim().to_string()),
                    "text" => pending.text = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            continue;
        }
        pending.tokens.push(parse_token(line, lineno)?);
    }
    if !pending.tokens.is_empty() {
        out.push(pending.finish(out.len() + 1)?);
    }
    Ok(out)
}
