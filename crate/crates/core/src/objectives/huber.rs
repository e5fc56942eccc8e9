/// Huber loss: `x²` for `|x| ≤ m`, `2m|x| − m²` outside.
pub fn huber(x: f64, m: f64) -> f64 {
    let a = x.abs();
    if a <= m {
        x * x
    } else {
        2.0 * m * a - m * m
    }
}

/// Derivative of [`huber`].
pub fn huber_grad(x: f64, m: f64) -> f64 {
    if x.abs() <= m {
        2.0 * x
    } else {
        2.0 * m * x.signum()
    }
}
