use serde::{Deserialize, Serialize};

use crate::model::CharSpan;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub span: CharSpan,
}

/// ASCII punctuation plus the typographic marks common in French text.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '«' | '»' | '…' | '’' | '‘' | '“' | '”' | '–' | '—' | '·' | '•' | '¿' | '¡' | '€' | '°'
        )
}

/// Splits on whitespace and isolates each punctuation character.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let flush = |tokens: &mut Vec<Token>, current: &mut String, start: usize, end: usize| {
        if !current.is_empty() {
            tokens.push(Token {
                text: std::mem::take(current),
                span: CharSpan::new(start, end),
            });
        }
    };
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            flush(&mut tokens, &mut current, start, i);
        } else if is_punctuation(c) {
            flush(&mut tokens, &mut current, start, i);
            tokens.push(Token {
                text: c.to_string(),
                span: CharSpan::new(i, i + 1),
            });
        } else {
            if current.is_empty() {
                start = i;
            }
            current.push(c);
        }
    }
    let n = text.chars().count();
    flush(&mut tokens, &mut current, start, n);
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(s: &str) -> Vec<String> {
        tokenize(s).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn examples() {
        assert!(tokenize("").is_empty());
        assert_eq!(texts("a,b"), ["a", ",", "b"]);
        assert_eq!(texts("Il faut agir."), ["Il", "faut", "agir", "."]);
        assert_eq!(texts("l'État  «vite»"), ["l", "'", "État", "«", "vite", "»"]);
    }

    proptest! {
        #[test]
        fn spans_reconstruct_the_text(s in "[a-zé ,.!'\\t\\n]{0,40}") {
            let chars: Vec<char> = s.chars().collect();
            let toks = tokenize(&s);
            let mut pos = 0;
            for t in &toks {
                prop_assert!(t.span.start >= pos);
                prop_assert!(chars[pos..t.span.start].iter().all(|c| c.is_whitespace()));
                let piece: String = chars[t.span.start..t.span.end].iter().collect();
                prop_assert_eq!(&piece, &t.text);
                pos = t.span.end;
            }
            prop_assert!(chars[pos..].iter().all(|c| c.is_whitespace()));
        }
    }
}
