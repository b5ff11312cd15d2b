//! Reading and writing families.

mod dot;
mod format;

pub use dot::export_dot;
pub use format::{
    parse_document, parse_family, serialize_document, serialize_family, serialize_history_set, Document, FormatError,
    HistorySet, PositionedViolation, MAX_DIM,
};

/// Weights rounded to 12 decimals, printed with at least one decimal:
/// `0.25`, `1.0`, `0.0`.
pub fn format_weight(w: f64) -> String {
    let rounded = (w * 1e12).round() / 1e12;
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    let s = format!("{rounded:.12}");
    let trimmed = s.trim_end_matches('0');
    if trimmed.ends_with('.') {
        format!("{trimmed}0")
    } else {
        trimmed.to_string()
    }
}
