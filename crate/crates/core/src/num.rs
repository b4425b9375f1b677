// Float helpers that std would normally provide as inherent methods.

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Variance of `v` under the distribution `p`. Equal to `p·v² − (p·v)²`, but
/// summed in centered form so a constant `v` gives exactly 0 and not a
/// cancellation residue that a square root would blow up.
pub(crate) fn variance(p: &[f64], v: &[f64]) -> f64 {
    let mean = dot(p, v);
    p.iter().zip(v).map(|(w, x)| w * (x - mean) * (x - mean)).sum()
}
