/// A token: a maximal run of letters, digits, `.`, `-` and `_`, with
/// trailing periods (sentence punctuation) left out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Token<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

pub(crate) fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '.' | '-' | '_')
}

pub(crate) fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    let mut push = |s: usize, e: usize| {
        let raw = &text[s..e];
        let trimmed = raw.trim_end_matches('.');
        if !trimmed.is_empty() {
            tokens.push(Token {
                text: trimmed,
                start: s,
                end: s + trimmed.len(),
            });
        }
    };
    for (i, c) in text.char_indices() {
        match (is_token_char(c), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                push(s, i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        push(s, text.len());
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation() {
        let toks: Vec<_> = tokenize("We used SPSS (v3.2.1). scikit-learn's x_y...")
            .into_iter()
            .map(|t| t.text)
            .collect();
        assert_eq!(toks, ["We", "used", "SPSS", "v3.2.1", "scikit-learn", "s", "x_y"]);
    }

    #[test]
    fn offsets_are_bytes() {
        let t = tokenize("é R");
        assert_eq!((t[0].start, t[0].end), (0, 2));
        assert_eq!((t[1].start, t[1].end), (3, 4));
    }
}
