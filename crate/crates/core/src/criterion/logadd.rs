use crate::scalar::Real;

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn logadd2<R: Real>(a: R, b: R) -> R {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == R::neg_infinity() || hi == R::infinity() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum(exp(v)))`, shifted by the maximum. The empty sum is `-inf`.
pub fn logadd<R: Real>(values: &[R]) -> R {
    let m = values.iter().copied().fold(R::neg_infinity(), R::max);
    if m == R::neg_infinity() || m == R::infinity() {
        return m;
    }
    let s: R = values.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}
