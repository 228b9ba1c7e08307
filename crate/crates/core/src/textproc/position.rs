use crate::corpus::LinkedSentence;

/// Relative-offset indices for the CNN position embeddings: for token `i`,
/// `(clamp(i - head.start, -clip, clip) + clip, clamp(i - tail.start, -clip, clip) + clip)`,
/// each in `0..=2 * clip`.
pub fn position_features(s: &LinkedSentence, clip: usize) -> Vec<(usize, usize)> {
    let d = clip as i64;
    let feature = |i: usize, anchor: usize| ((i as i64 - anchor as i64).clamp(-d, d) + d) as usize;
    (0..s.tokens.len())
        .map(|i| (feature(i, s.head.start), feature(i, s.tail.start)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SpanRecord;

    fn sentence(n: usize, head: (usize, usize), tail: (usize, usize)) -> LinkedSentence {
        LinkedSentence::new(
            (0..n).map(|i| format!("w{i}")).collect(),
            SpanRecord::new(head.0, head.1),
            SpanRecord::new(tail.0, tail.1),
            None,
        )
        .unwrap()
    }

    #[test]
    fn seven_token_sentence() {
        let s = sentence(7, (0, 1), (4, 6));
        let got = position_features(&s, 40);
        // hand-enumerated: offsets i-0 and i-4, shifted by 40
        let want = [(40, 36), (41, 37), (42, 38), (43, 39), (44, 40), (45, 41), (46, 42)];
        assert_eq!(got, want);
        assert_eq!(got[s.head.start].0, 40);
    }

    #[test]
    fn far_tokens_clamp() {
        let s = sentence(120, (0, 1), (10, 11));
        let f = position_features(&s, 40);
        assert_eq!(f[110].1, 80);
        assert_eq!(f[0].1, 30);
        let s = sentence(120, (0, 1), (115, 116));
        assert_eq!(position_features(&s, 40)[0].1, 0);
    }
}
