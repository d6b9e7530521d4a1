//! Text and agreement metrics.
//!
//! Every metric shares one tokenization ([`tokenize`]): whitespace splitting
//! with punctuation characters isolated into their own tokens.

mod agreement;
mod assignment;
mod edit;
mod overlap;
mod prf;
mod rouge;
mod tags;
mod tokenize;
mod window_diff;

pub use agreement::{agreement_report, AgreementReport, DocumentPair, LambdaPrf};
pub use assignment::{max_weight_assignment, match_scores, match_spans, MatchConfig, MatchResult};
pub use edit::levenshtein;
pub use overlap::{constrained_overlap, overlap_score, token_set, unit_token_sets};
pub use prf::{span_prf, DocumentCounts, Prf, SpanPrf};
pub use rouge::{lcs_len, rouge, rouge_l_f1, Rouge, RougeVariant};
pub use tags::{tag_agreement, token_labels, TagAgreement, TokenTag};
pub use tokenize::{is_punctuation, tokenize, Token};
pub use window_diff::{unit_boundaries, window_diff};
