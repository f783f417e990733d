//! Fixed textual form for floats in every file the crate writes.

/// Decimal scientific notation with 17 significant digits, e.g.
/// `1.4142135623730951e0`. Round-trips every finite `f64` exactly.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}
