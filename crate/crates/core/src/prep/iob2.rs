use crate::corpus::EntitySpan;
use crate::iob::Tag;

use super::tokenize::{token_range, Token};
use super::PrepError;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Iob2Encoding {
    pub tags: Vec<Tag>,
    /// Entities whose boundaries were snapped outward to token edges.
    pub snapped: usize,
    /// Entities covering no token at all (dropped).
    pub unaligned: usize,
}

/// Encodes entity spans over `tokens` as IOB2 tags.
///
/// Both tokens and entities must use the same offset origin. Entities that do
/// not align with token edges are snapped outward and counted.
pub fn to_iob2(tokens: &[Token], entities: &[EntitySpan]) -> Result<Iob2Encoding, PrepError> {
    let mut order: Vec<&EntitySpan> = entities.iter().collect();
    order.sort_by_key(|e| e.span);
    for pair in order.windows(2) {
        if pair[0].span.overlaps(&pair[1].span) {
            return Err(PrepError::Overlap {
                first: pair[0].span,
                second: pair[1].span,
            });
        }
    }

    let mut enc = Iob2Encoding {
        tags: vec![Tag::O; tokens.len()],
        ..Default::default()
    };
    let mut owner: Vec<Option<usize>> = vec![None; tokens.len()];
    for (k, e) in order.iter().enumerate() {
        let Some((first, last)) = token_range(tokens, e.span) else {
            enc.unaligned += 1;
            continue;
        };
        if tokens[first].span.start != e.span.start || tokens[last - 1].span.end != e.span.end {
            enc.snapped += 1;
        }
        #[allow(clippy::needless_range_loop)] // indexes both owner and tags
        for t in first..last {
            if let Some(prev) = owner[t] {
                return Err(PrepError::Overlap {
                    first: order[prev].span,
                    second: e.span,
                });
            }
            owner[t] = Some(k);
            enc.tags[t] = if t == first {
                Tag::B(e.label.clone())
            } else {
                Tag::I(e.label.clone())
            };
        }
    }
    Ok(enc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CharSpan, LabelTag, Source};
    use crate::prep::tokenize::tokenize;

    fn ent(text: &str, s: usize, e: usize, label: &str) -> EntitySpan {
        EntitySpan {
            span: CharSpan::new(s, e),
            label: LabelTag::new(label).unwrap(),
            surface: text.chars().skip(s).take(e - s).collect(),
            source: Source::Gold,
            confidence: 1.0,
            cross_sentence: false,
        }
    }

    fn tags(enc: &Iob2Encoding) -> Vec<String> {
        enc.tags.iter().map(Tag::to_string).collect()
    }

    #[test]
    fn multi_token_entity() {
        let text = "Hans Meier klagt";
        let enc = to_iob2(&tokenize(text), &[ent(text, 0, 10, "PER")]).unwrap();
        assert_eq!(tags(&enc), ["B-PER", "I-PER", "O"]);
        assert_eq!(enc.snapped, 0);
    }

    #[test]
    fn no_entities_all_outside() {
        let enc = to_iob2(&tokenize("a b c"), &[]).unwrap();
        assert_eq!(tags(&enc), ["O", "O", "O"]);
    }

    #[test]
    fn adjacent_entities_of_different_labels() {
        let text = "in Zug AG";
        let enc = to_iob2(&tokenize(text), &[ent(text, 3, 6, "LOC"), ent(text, 7, 9, "ORG")]).unwrap();
        assert_eq!(tags(&enc), ["O", "B-LOC", "B-ORG"]);
    }

    #[test]
    fn partial_token_is_snapped_and_counted() {
        let text = "Herr Meiers Haus";
        let enc = to_iob2(&tokenize(text), &[ent(text, 5, 10, "PER")]).unwrap();
        assert_eq!(tags(&enc), ["O", "B-PER", "O"]);
        assert_eq!(enc.snapped, 1);
    }

    #[test]
    fn overlapping_entities_rejected() {
        let text = "Hans Meier klagt";
        let err = to_iob2(&tokenize(text), &[ent(text, 0, 10, "PER"), ent(text, 5, 16, "ORG")]);
        assert!(matches!(err, Err(PrepError::Overlap { .. })));
    }

    #[test]
    fn entities_sharing_a_token_after_snapping_rejected() {
        let text = "AB c";
        let err = to_iob2(&tokenize(text), &[ent(text, 0, 1, "PER"), ent(text, 1, 2, "ORG")]);
        assert!(matches!(err, Err(PrepError::Overlap { .. })));
    }
}
