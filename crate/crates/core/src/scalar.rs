//! Closed form of the joint RDF for a single canonical pair (`n = 1`).

use serde::Serialize;

/// Branch of the scalar closed form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ScalarRegion {
    /// `d² <= (1-Δ1)(1-Δ2)`: independent coding of the two sources.
    Independent = 1,
    /// Neither of the other two: joint coding with cross-correlated errors.
    Joint = 2,
    /// `d² >= min{(1-Δ2)/(1-Δ1), (1-Δ1)/(1-Δ2)}`: only the tighter budget binds.
    Degenerate = 3,
}

impl ScalarRegion {
    pub fn index(self) -> u8 {
        self as u8
    }
}

fn log_plus(x: f64) -> f64 {
    if x > 1.0 {
        x.ln()
    } else {
        0.0
    }
}

/// Joint RDF in nats of a unit-variance pair with correlation `d` and the
/// branch that produced it.
///
/// Boundary points that satisfy two branch conditions report the branch with
/// the smaller value; both agree there up to roundoff.
pub fn scalar_rdf(d: f64, delta1: f64, delta2: f64) -> (f64, ScalarRegion) {
    let d2 = d * d;
    let (x1, x2) = (1.0 - delta1, 1.0 - delta2);
    let product = x1 * x2;

    let independent = d2 <= product;
    let ratio = |num: f64, den: f64| {
        if den == 0.0 {
            // 1 - Δ = 0 on the denominator side: ratio is +inf unless the
            // numerator is nonpositive.
            if num <= 0.0 {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        } else {
            num / den
        }
    };
    let degenerate = d2 >= ratio(x2, x1).min(ratio(x1, x2));

    let value_independent = || 0.5 * log_plus((1.0 - d2) / (delta1 * delta2));
    let value_degenerate = || 0.5 * log_plus(1.0 / delta1.min(delta2));
    let value_joint = || {
        let gap = d - product.max(0.0).sqrt();
        0.5 * log_plus((1.0 - d2) / (delta1 * delta2 - gap * gap))
    };

    match (independent, degenerate) {
        (true, true) => {
            let (a, b) = (value_independent(), value_degenerate());
            if a <= b {
                (a, ScalarRegion::Independent)
            } else {
                (b, ScalarRegion::Degenerate)
            }
        }
        (true, false) => (value_independent(), ScalarRegion::Independent),
        (false, true) => (value_degenerate(), ScalarRegion::Degenerate),
        (false, false) => (value_joint(), ScalarRegion::Joint),
    }
}
