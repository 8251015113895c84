//! Closed-form constants behind the contraction and chaos-propagation
//! envelopes.

use serde::{Deserialize, Serialize};

use crate::dynamics::QuadraticForm;
use crate::energy::{DeclaredConstants, KineticFields};

/// Result of the kinetic constant selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticConstants {
    /// `γ + [D]₁`.
    pub eta: f64,
    /// Feasibility threshold: smaller root of the selection polynomial,
    /// capped as described on [`eta0`].
    pub eta0: f64,
    pub epsilon: f64,
    /// Open window for `b`, before intersecting with `b > 1/√λ_B`.
    pub window: (f64, f64),
    pub b: f64,
    /// `Q_{λ_B b, b}`.
    pub form: QuadraticForm,
    /// Coefficients of `−E|p|²` and `−E|v|²` in the bound on `d/dt E[Q]`.
    pub slack_p: f64,
    pub slack_v: f64,
    /// `E[Q](t) ≤ e^{−2 C t} E[Q](0)` with `C = min(slack) / (2 λ_max(Q))`.
    pub rate_c: f64,
    pub feasible: bool,
    /// The first violated inequality, when infeasible.
    pub violated: Option<String>,
}

/// `(smaller root, cap, η₀)` for
/// `2η² − η(2 + [A]₁²/λ_B + λ_B + 4λ_A) + 2λ_Aλ_B`, where
/// `η₀ = min(root, 2λ_A, λ_B^{3/2}/(1 + 2√λ_B))`.
pub fn eta0(lip_a: f64, mono_a: f64, lambda_b: f64) -> (f64, f64, f64) {
    let b = 2.0 + lip_a * lip_a / lambda_b + lambda_b + 4.0 * mono_a;
    let c = 2.0 * mono_a * lambda_b;
    let disc = (b * b - 8.0 * c).max(0.0);
    let root = 2.0 * c / (b + disc.sqrt());
    let sq = lambda_b.sqrt();
    let cap = (2.0 * mono_a).min(lambda_b * sq / (1.0 + 2.0 * sq));
    (root, cap, root.min(cap))
}

/// Value of the selection polynomial at `eta`.
pub fn selection_polynomial(fields: &KineticFields, eta: f64) -> f64 {
    2.0 * eta * eta
        - eta
            * (2.0 + fields.lip_a.powi(2) / fields.lambda_b + fields.lambda_b + 4.0 * fields.mono_a)
        + 2.0 * fields.mono_a * fields.lambda_b
}

/// `((2 + [A]₁²/ε)/(2λ_A − η), (2λ_B − 2η − ε)/η)`; the upper end is
/// infinite at `η = 0`.
pub fn b_window(fields: &KineticFields, eta: f64, epsilon: f64) -> (f64, f64) {
    let lo = (2.0 + fields.lip_a.powi(2) / epsilon) / (2.0 * fields.mono_a - eta);
    let hi = if eta == 0.0 {
        f64::INFINITY
    } else {
        (2.0 * fields.lambda_b - 2.0 * eta - epsilon) / eta
    };
    (lo, hi)
}

/// `(slack_p, slack_v)` at a given `b`.
pub fn slacks(fields: &KineticFields, eta: f64, epsilon: f64, b: f64) -> (f64, f64) {
    (
        2.0 * fields.lambda_b - 2.0 * eta - epsilon - eta * b,
        (2.0 * fields.mono_a - eta) * b - 2.0 - fields.lip_a.powi(2) / epsilon,
    )
}

/// Left-hand sides of the two unsplit linear conditions at `a = λ_B b`:
/// `[A]₁ + [D]₁b − 2(λ_B − [D]₁ − γ − bγ/2)` and
/// `[A]₁ + [D]₁b − 2(λ_A b − 1 − bγ/2)`; both must be negative.
pub fn unsplit_conditions(fields: &KineticFields, gamma: f64, b: f64) -> (f64, f64) {
    let a1 = fields.lip_a;
    let d1 = fields.lip_d;
    (
        a1 + d1 * b - 2.0 * (fields.lambda_b - d1 - gamma - 0.5 * b * gamma),
        a1 + d1 * b - 2.0 * (fields.mono_a * b - 1.0 - 0.5 * b * gamma),
    )
}

/// Picks `(b, Q, C)` for the kinetic coupling with `η = γ + [D]₁`.
///
/// `epsilon` defaults to `λ_B`; `b` is the midpoint of the window
/// intersected with `b > 1/√λ_B` (twice its lower end when the window is
/// unbounded).
pub fn select_kinetic_constants(
    fields: &KineticFields,
    gamma: f64,
    epsilon: Option<f64>,
) -> KineticConstants {
    let eta = gamma + fields.lip_d;
    let epsilon = epsilon.unwrap_or(fields.lambda_b);
    let (_, _, eta0) = eta0(fields.lip_a, fields.mono_a, fields.lambda_b);
    let window = b_window(fields, eta, epsilon);
    let mut out = KineticConstants {
        eta,
        eta0,
        epsilon,
        window,
        b: f64::NAN,
        form: QuadraticForm {
            a: f64::NAN,
            b: f64::NAN,
        },
        slack_p: f64::NAN,
        slack_v: f64::NAN,
        rate_c: f64::NAN,
        feasible: false,
        violated: None,
    };
    let fail = |mut out: KineticConstants, why: String| {
        out.violated = Some(why);
        out
    };
    if !(fields.lip_a > 0.0 && fields.mono_a > 0.0 && fields.lambda_b > 0.0) {
        return fail(out, "[A]1, lambda_A and lambda_B must be positive".into());
    }
    if !(gamma >= 0.0 && fields.lip_d >= 0.0 && epsilon > 0.0) {
        return fail(
            out,
            "gamma, [D]1 and epsilon must be nonnegative (epsilon positive)".into(),
        );
    }
    if !(eta < 2.0 * fields.mono_a) {
        return fail(
            out,
            format!(
                "eta = {eta} must be below 2 lambda_A = {}",
                2.0 * fields.mono_a
            ),
        );
    }
    if !(eta < eta0) {
        return fail(
            out,
            format!(
                "eta = {eta} must be below eta0 = {eta0} (polynomial value {:.6e})",
                selection_polynomial(fields, eta)
            ),
        );
    }
    let lo = window.0.max(1.0 / fields.lambda_b.sqrt());
    let hi = window.1;
    if !(lo < hi) {
        return fail(
            out,
            format!("b window ({lo}, {hi}) is empty after requiring b > 1/sqrt(lambda_B)"),
        );
    }
    let b = if hi.is_finite() {
        0.5 * (lo + hi)
    } else {
        2.0 * lo
    };
    let form = QuadraticForm {
        a: fields.lambda_b * b,
        b,
    };
    let (sp, sv) = slacks(fields, eta, epsilon, b);
    if !(sp > 0.0 && sv > 0.0) {
        return fail(
            out,
            format!("slacks ({sp}, {sv}) must be positive at b = {b}"),
        );
    }
    out.b = b;
    out.form = form;
    out.slack_p = sp;
    out.slack_v = sv;
    out.rate_c = sp.min(sv) / (2.0 * form.eigenvalues().1);
    out.feasible = true;
    out
}

/// Constants of the over-damped chaos-propagation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PocConstants {
    /// `2d + 2G`, with `G = sup_μ ‖D_mH(μ, 0)‖`.
    pub alpha: f64,
    /// `−2(λ − G)`.
    pub beta: f64,
    /// `3‖D²_mH‖ − 2λ`.
    pub beta1: f64,
}

impl PocConstants {
    pub fn new(declared: &DeclaredConstants, dim: usize, grad_at_origin: f64) -> Self {
        PocConstants {
            alpha: 2.0 * dim as f64 + 2.0 * grad_at_origin,
            beta: -2.0 * (declared.lambda - grad_at_origin),
            beta1: 3.0 * declared.d2m_bound - 2.0 * declared.lambda,
        }
    }

    pub fn uniform(&self) -> bool {
        self.beta < 0.0 && self.beta1 < 0.0
    }
}

/// `3‖D²_mH‖ − 2λ` from the declared constants alone.
pub fn beta1(declared: &DeclaredConstants) -> f64 {
    3.0 * declared.d2m_bound - 2.0 * declared.lambda
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundBranch {
    /// `‖D²‖ C(d) / (2λ − 3‖D²‖) · (m₀ − α/β) · δ_d(n)`.
    Uniform,
    /// `α₁(T)/β₁ · (e^{β₁T} − 1)` (or `α₁(T) T` at `β₁ = 0`).
    FiniteHorizon,
}

/// Explicit bound on `sup_t E‖X⁽¹⁾ − X̃⁽¹⁾‖²` for one `n`.
///
/// `m0` is the initial second moment, `sup_moment` the largest recorded
/// second moment of the law over `[0, T]`.
#[allow(clippy::too_many_arguments)]
pub fn poc_explicit_bound(
    consts: &PocConstants,
    declared: &DeclaredConstants,
    c_d: f64,
    m0: f64,
    sup_moment: f64,
    delta: f64,
    horizon: f64,
) -> (f64, BoundBranch) {
    let d2 = declared.d2m_bound;
    if consts.uniform() {
        let value = d2 * c_d / (2.0 * declared.lambda - 3.0 * d2)
            * (m0 - consts.alpha / consts.beta)
            * delta;
        (value, BoundBranch::Uniform)
    } else {
        let alpha1 = d2 * c_d * sup_moment * delta;
        let value = if consts.beta1 == 0.0 {
            alpha1 * horizon
        } else {
            alpha1 / consts.beta1 * ((consts.beta1 * horizon).exp() - 1.0)
        };
        (value, BoundBranch::FiniteHorizon)
    }
}
