use std::fmt;

use super::ast::{Feature, Guard, Policy, ProbExpr};

/// Formats a float so that parsing the text recovers the exact bits
/// (Rust's shortest round-trip representation).
pub fn format_number(x: f64) -> String {
    format!("{x}")
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Var(name) => write!(f, "{name}"),
            Feature::Const(c, _) => write!(f, "{}", format_number(*c)),
            Feature::Add(a, b) => {
                write!(f, "{a} + ")?;
                write_operand(f, b)
            }
            Feature::Sub(a, b) => {
                write!(f, "{a} - ")?;
                write_operand(f, b)
            }
            Feature::App(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

// A right operand that is itself a sum needs parentheses to survive the
// left-associative grammar.
fn write_operand(f: &mut fmt::Formatter<'_>, b: &Feature) -> fmt::Result {
    match b {
        Feature::Add(..) | Feature::Sub(..) => write!(f, "({b})"),
        _ => write!(f, "{b}"),
    }
}

impl fmt::Display for ProbExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbExpr::Const(r) => write!(f, "{}", format_number(*r)),
            ProbExpr::Logistic { feature, x0, k } => {
                write!(f, "lgs({feature}, {}, {})", format_number(*x0), format_number(*k))
            }
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::Flip(p) => write!(f, "flp({p})"),
            Guard::And(a, b) => {
                write_and_operand(f, a)?;
                write!(f, " && ")?;
                write_and_operand(f, b)
            }
            Guard::Or(a, b) => write!(f, "{a} || {b}"),
        }
    }
}

// `&&` binds tighter than `||`, so a disjunction under a conjunction needs
// parentheses.
fn write_and_operand(f: &mut fmt::Formatter<'_>, g: &Guard) -> fmt::Result {
    match g {
        Guard::Or(..) => write!(f, "({g})"),
        _ => write!(f, "{g}"),
    }
}

/// Renders a policy in the one-rule-per-line text format.
pub fn serialize_policy(policy: &Policy) -> String {
    let actions = &policy.signature().actions;
    let mut out = String::new();
    for rule in policy.rules() {
        out.push_str(&format!(
            "if ({} and a == {}) then {}\n",
            rule.guard,
            actions.name(rule.from),
            actions.name(rule.to)
        ));
    }
    out
}
