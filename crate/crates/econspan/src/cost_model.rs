//! Parametric bridge-cost functions and economic-span solvers.
//!
//! The per-unit-area cost of a bridge with span `x` is modeled as
//! `a + b*x^m + c*x^(-r)`: a span-independent deck-system term, a
//! load-bearing term that grows as a power of span, and a pier term that
//! falls with span because longer spans need fewer piers. The span that
//! minimizes the total is the economic span; it has the closed form
//! `(c*r / (b*m))^(1/(m+r))`, cross-checked here by a derivative-free
//! golden-section search.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CostModelError {
    #[error("span must be positive, got {0}")]
    NonPositiveSpan(f64),
    #[error("total length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("invalid material parameters: {0}")]
    InvalidParams(String),
    #[error("invalid search bracket: lo={lo}, hi={hi}")]
    InvalidBracket { lo: f64, hi: f64 },
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
}

/// Coefficients of one material's per-unit-area cost function.
///
/// `a` is the deck-system constant (yuan/m²), `b`/`m` the load-bearing
/// coefficient and exponent, `c`/`r` the pier coefficient and per-length
/// exponent. `r = 1 - 1/n` where `n > 1` is the pier cost exponent's
/// reciprocal, so `0 < r < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialCostParams {
    pub name: String,
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub c: f64,
    pub r: f64,
}

impl MaterialCostParams {
    pub fn new(
        name: impl Into<String>,
        a: f64,
        b: f64,
        m: f64,
        c: f64,
        r: f64,
    ) -> Result<Self, CostModelError> {
        let p = Self {
            name: name.into(),
            a,
            b,
            m,
            c,
            r,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CostModelError> {
        let bad = |msg: String| Err(CostModelError::InvalidParams(msg));
        for (sym, v) in [
            ("a", self.a),
            ("b", self.b),
            ("m", self.m),
            ("c", self.c),
            ("r", self.r),
        ] {
            if !v.is_finite() {
                return bad(format!("{sym} must be finite, got {v}"));
            }
        }
        if self.a < 0.0 {
            return bad(format!("a must be >= 0, got {}", self.a));
        }
        if self.b <= 0.0 {
            return bad(format!("b must be > 0, got {}", self.b));
        }
        if self.c <= 0.0 {
            return bad(format!("c must be > 0, got {}", self.c));
        }
        if self.m < 1.0 {
            return bad(format!("m must be >= 1, got {}", self.m));
        }
        if self.r <= 0.0 || self.r >= 1.0 {
            return bad(format!("r must be in (0, 1), got {}", self.r));
        }
        Ok(())
    }

    /// Concrete structure: superstructure 250 + 40 x^1.2, substructure 50000 x^-0.5.
    pub fn concrete() -> Self {
        Self {
            name: "concrete".into(),
            a: 250.0,
            b: 40.0,
            m: 1.2,
            c: 50000.0,
            r: 0.5,
        }
    }

    /// Steel-concrete composite: 500 + 90 x^1.07 and 45000 x^-0.5.
    pub fn composite() -> Self {
        Self {
            name: "composite".into(),
            a: 500.0,
            b: 90.0,
            m: 1.07,
            c: 45000.0,
            r: 0.5,
        }
    }

    /// Steel structure: 2000 + 140 x and 40000 x^-0.5.
    pub fn steel() -> Self {
        Self {
            name: "steel".into(),
            a: 2000.0,
            b: 140.0,
            m: 1.0,
            c: 40000.0,
            r: 0.5,
        }
    }

    /// The three built-in materials in grid-row order.
    pub fn builtin_materials() -> Vec<Self> {
        vec![Self::concrete(), Self::composite(), Self::steel()]
    }

    /// Looks up a built-in material by name.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "concrete" => Some(Self::concrete()),
            "composite" => Some(Self::composite()),
            "steel" => Some(Self::steel()),
            _ => None,
        }
    }
}

/// Superstructure/substructure cost split; `total` is always their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub superstructure: f64,
    pub substructure: f64,
    pub total: f64,
}

/// Result of an economic-span solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EconomicSpanResult {
    pub span_star: f64,
    pub unit_cost_star: f64,
    pub balance_ratio_star: f64,
}

fn check_span(x: f64) -> Result<(), CostModelError> {
    if !(x > 0.0) {
        return Err(CostModelError::NonPositiveSpan(x));
    }
    Ok(())
}

/// Cost of superstructure plus substructure per unit deck area, yuan/m².
pub fn unit_area_cost(p: &MaterialCostParams, x: f64) -> Result<f64, CostModelError> {
    check_span(x)?;
    Ok(p.a + p.b * x.powf(p.m) + p.c * x.powf(-p.r))
}

/// Per-unit-width totals over a bridge of total length `length`.
///
/// The pier count `length / x` is treated as continuous, matching the
/// differentiable analysis behind the closed-form solver.
pub fn total_cost(
    p: &MaterialCostParams,
    x: f64,
    length: f64,
) -> Result<CostBreakdown, CostModelError> {
    check_span(x)?;
    if !(length > 0.0) {
        return Err(CostModelError::NonPositiveLength(length));
    }
    let superstructure = (p.a + p.b * x.powf(p.m)) * length;
    let substructure = p.c * x.powf(-p.r) * length;
    Ok(CostBreakdown {
        superstructure,
        substructure,
        total: superstructure + substructure,
    })
}

/// Derivative of the per-unit-area cost with respect to span.
pub fn cost_derivative(p: &MaterialCostParams, x: f64) -> Result<f64, CostModelError> {
    check_span(x)?;
    Ok(p.b * p.m * x.powf(p.m - 1.0) - p.c * p.r * x.powf(-p.r - 1.0))
}

/// Ratio of single-span load-bearing cost to single-pier cost.
///
/// At the economic span this equals `r/m`, i.e. `(n-1)/(m*n)` with
/// `n = 1/(1-r)`.
pub fn balance_ratio(p: &MaterialCostParams, x: f64) -> Result<f64, CostModelError> {
    check_span(x)?;
    Ok((p.b * x.powf(p.m)) / (p.c * x.powf(-p.r)))
}

/// Closed-form economic span: the root of the cost derivative.
pub fn economic_span_closed_form(p: &MaterialCostParams) -> EconomicSpanResult {
    let span_star = (p.c * p.r / (p.b * p.m)).powf(1.0 / (p.m + p.r));
    // span_star > 0 for any valid parameter set, so these cannot fail.
    let unit_cost_star = unit_area_cost(p, span_star).expect("positive span");
    let balance_ratio_star = balance_ratio(p, span_star).expect("positive span");
    EconomicSpanResult {
        span_star,
        unit_cost_star,
        balance_ratio_star,
    }
}

// 1/phi and 1/phi^2 for the golden-section interval split.
const INV_PHI: f64 = 0.618_033_988_749_894_9;
const INV_PHI2: f64 = 0.381_966_011_250_105_1;

/// Golden-section minimization of the unit-area cost on `[lo, hi]`.
///
/// The cost is unimodal in span, so the search converges to the global
/// minimizer provided it lies inside the bracket. Serves as an
/// independent cross-check of [`economic_span_closed_form`].
pub fn economic_span_numeric(
    p: &MaterialCostParams,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<EconomicSpanResult, CostModelError> {
    if !(lo > 0.0 && lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(CostModelError::InvalidBracket { lo, hi });
    }
    if !(tol > 0.0) {
        return Err(CostModelError::NonPositiveTolerance(tol));
    }
    let f = |x: f64| unit_area_cost(p, x).expect("bracket is positive");

    let mut a = lo;
    let mut b = hi;
    let mut x1 = a + INV_PHI2 * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + INV_PHI2 * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    let span_star = 0.5 * (a + b);
    Ok(EconomicSpanResult {
        span_star,
        unit_cost_star: f(span_star),
        balance_ratio_star: balance_ratio(p, span_star)?,
    })
}
