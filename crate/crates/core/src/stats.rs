//! Rank statistics.

use crate::error::{Error, Result};

/// Kendall tau by pair enumeration: (concordant - discordant) / C(n,2).
/// Pairs tied in either input contribute zero.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "kendall_tau".into(),
            expected: format!("{}", a.len()),
            got: format!("{}", b.len()),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "kendall_tau needs at least two items".into(),
        ));
    }
    let mut net = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let da = (a[i] - a[j]).signum();
            let db = (b[i] - b[j]).signum();
            if da != 0.0 && db != 0.0 {
                net += if da == db { 1 } else { -1 };
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(net as f64 / pairs)
}
