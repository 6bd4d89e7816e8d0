//! Span-level errors of the kind a learned tagger or a hurried annotator
//! makes. Used to build noisy gold labels and noisy predictions.
//!
//! Every error kind here is one the domain rules undo exactly, so a
//! perturbed clean span corrects back to itself.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{EntitySpan, EntityType, Page, ReadingOrder, TokenId};
use crate::rules::RuleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// The field label in front of the value is included in the span.
    GlueLabel,
    /// A two-token patient name loses its first token.
    TruncateName,
    /// A physician name loses its trailing credential.
    DropCredential,
    /// An address loses its leading street number / cardinal letter.
    DropStreetNumber,
    /// An address swallows the phone number printed after it.
    AbsorbPhone,
    /// A physician name is typed as a patient name.
    CredentialConfusion,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 6] = [
        ErrorKind::GlueLabel,
        ErrorKind::TruncateName,
        ErrorKind::DropCredential,
        ErrorKind::DropStreetNumber,
        ErrorKind::AbsorbPhone,
        ErrorKind::CredentialConfusion,
    ];
}

/// Mix three integers into one seed (splitmix64 finalizer).
pub fn derive_seed(a: u64, b: u64, c: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(b.rotate_left(21))
        .wrapping_add(c.rotate_left(42) ^ 0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn text(page: &Page, id: TokenId) -> &str {
    page.token(id).map_or("", |t| t.text.as_str())
}

fn neighbor(id: TokenId, order: &ReadingOrder, step: isize) -> Option<TokenId> {
    let r = order.rank(id)? as isize + step;
    if r < 0 {
        return None;
    }
    order.token_at(r as usize)
}

fn same_line(a: TokenId, b: TokenId, page: &Page) -> bool {
    matches!((page.token(a), page.token(b)), (Some(x), Some(y)) if x.line_id == y.line_id)
}

fn is_street_prefix(t: &str, rules: &RuleSet) -> bool {
    (!t.is_empty() && t.chars().all(|c| c.is_ascii_digit())) || rules.is_cardinal(t)
}

/// Apply `kind` to `span`, or `None` when it does not apply.
pub fn apply_error(
    kind: ErrorKind,
    span: &EntitySpan,
    page: &Page,
    order: &ReadingOrder,
    rules: &RuleSet,
) -> Option<EntitySpan> {
    let ty = span.entity_type;
    let first = *span.token_ids.first()?;
    let last = *span.token_ids.last()?;
    let mut out = span.clone();
    match kind {
        ErrorKind::GlueLabel => {
            let mut prefix = Vec::new();
            let mut cursor = first;
            while prefix.len() < 4 {
                match neighbor(cursor, order, -1) {
                    Some(prev) if rules.is_stop_word(ty, text(page, prev)) => {
                        prefix.push(prev);
                        cursor = prev;
                    }
                    _ => break,
                }
            }
            if prefix.is_empty() {
                return None;
            }
            prefix.reverse();
            prefix.extend(span.token_ids.iter().copied());
            out.token_ids = prefix;
        }
        ErrorKind::TruncateName => {
            let ok = ty == EntityType::PatientName
                && span.len() == 2
                && same_line(span.token_ids[0], span.token_ids[1], page)
                && neighbor(span.token_ids[0], order, 1) == Some(span.token_ids[1]);
            if !ok {
                return None;
            }
            out.token_ids = vec![last];
        }
        ErrorKind::DropCredential => {
            if ty != EntityType::PhysicianName {
                return None;
            }
            while out
                .token_ids
                .last()
                .is_some_and(|&id| rules.is_credential(text(page, id)))
            {
                out.token_ids.pop();
            }
            if out.token_ids.is_empty() || out.len() == span.len() {
                return None;
            }
        }
        ErrorKind::DropStreetNumber => {
            if !ty.is_address() {
                return None;
            }
            let n = span
                .token_ids
                .iter()
                .take_while(|&&id| is_street_prefix(text(page, id), rules))
                .count();
            if n == 0 || n == span.len() || n > 4 {
                return None;
            }
            out.token_ids.drain(..n);
        }
        ErrorKind::AbsorbPhone => {
            if !ty.is_address() {
                return None;
            }
            let mut tail = Vec::new();
            let mut cursor = last;
            while let Some(next) = neighbor(cursor, order, 1) {
                if !same_line(next, last, page) || !rules.is_context_word(text(page, next)) {
                    break;
                }
                tail.push(next);
                cursor = next;
            }
            if tail.is_empty() {
                return None;
            }
            let mut window = Vec::new();
            let mut c = cursor;
            while window.len() < 3 {
                match neighbor(c, order, 1) {
                    Some(next) if same_line(next, last, page) => {
                        window.push(next);
                        c = next;
                    }
                    _ => break,
                }
            }
            let texts: Vec<&str> = window.iter().map(|&id| text(page, id)).collect();
            let len = rules.phone_match_len(&texts, true)?;
            tail.extend_from_slice(&window[..len]);
            out.token_ids.extend(tail);
        }
        ErrorKind::CredentialConfusion => {
            let has_cred = span.token_ids.iter().any(|&id| rules.is_credential(text(page, id)));
            if ty != EntityType::PhysicianName || !has_cred {
                return None;
            }
            out.entity_type = EntityType::PatientName;
        }
    }
    Some(out)
}

/// Kinds that change `span` on this page.
pub fn applicable(span: &EntitySpan, page: &Page, order: &ReadingOrder, rules: &RuleSet) -> Vec<ErrorKind> {
    ErrorKind::ALL
        .into_iter()
        .filter(|&k| apply_error(k, span, page, order, rules).is_some())
        .collect()
}

/// With probability `rate`, apply one applicable error chosen uniformly.
pub fn maybe_perturb<R: Rng>(
    span: &EntitySpan,
    page: &Page,
    order: &ReadingOrder,
    rules: &RuleSet,
    rate: f64,
    rng: &mut R,
) -> Option<(ErrorKind, EntitySpan)> {
    if rate <= 0.0 || rng.random::<f64>() >= rate {
        return None;
    }
    let kinds = applicable(span, page, order, rules);
    let &kind = kinds.choose(rng)?;
    apply_error(kind, span, page, order, rules).map(|s| (kind, s))
}
