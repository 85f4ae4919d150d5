use super::{BinOp, Expr, ExprError, Func};
use crate::dual::Dual;

fn domain(expr: &Expr, reason: &'static str) -> ExprError {
    ExprError::Domain {
        expr: expr.to_string(),
        reason,
    }
}

impl Expr {
    /// Evaluates at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        let duals: Vec<Dual> = x.iter().map(|&v| Dual::constant(v)).collect();
        Ok(self.eval_duals(&duals)?.value)
    }

    /// Value and directional derivative `∇expr(x)·seed`.
    pub fn eval_dual(&self, x: &[f64], seed: &[f64]) -> Result<Dual, ExprError> {
        if seed.len() != x.len() {
            return Err(ExprError::Dimension {
                index: seed.len(),
                dim: x.len(),
            });
        }
        let duals: Vec<Dual> = x.iter().zip(seed).map(|(&v, &d)| Dual::new(v, d)).collect();
        self.eval_duals(&duals)
    }

    /// Evaluates over dual-valued inputs.
    pub fn eval_duals(&self, x: &[Dual]) -> Result<Dual, ExprError> {
        let out = self.walk(x)?;
        if !out.is_finite() {
            return Err(domain(self, "non-finite result"));
        }
        Ok(out)
    }

    fn walk(&self, x: &[Dual]) -> Result<Dual, ExprError> {
        match self {
            Expr::Num(v) => Ok(Dual::constant(*v)),
            Expr::Var(i) => x.get(*i).copied().ok_or(ExprError::Dimension {
                index: i + 1,
                dim: x.len(),
            }),
            Expr::Neg(e) => Ok(-e.walk(x)?),
            Expr::Binary(op, a, b) => {
                let a = a.walk(x)?;
                let b = b.walk(x)?;
                match op {
                    BinOp::Add => Ok(a + b),
                    BinOp::Sub => Ok(a - b),
                    BinOp::Mul => Ok(a * b),
                    BinOp::Div => {
                        if b.value == 0.0 {
                            Err(domain(self, "division by zero"))
                        } else {
                            Ok(a / b)
                        }
                    }
                    BinOp::Pow => self.pow(a, b),
                }
            }
            Expr::Call(func, args) => {
                let a = args[0].walk(x)?;
                match func {
                    Func::Sin => Ok(a.sin()),
                    Func::Cos => Ok(a.cos()),
                    Func::Tan => Ok(a.tan()),
                    Func::Exp => Ok(a.exp()),
                    Func::Log => {
                        if a.value <= 0.0 {
                            Err(domain(self, "log of a non-positive number"))
                        } else {
                            Ok(a.ln())
                        }
                    }
                    Func::Sqrt => {
                        if a.value < 0.0 {
                            Err(domain(self, "sqrt of a negative number"))
                        } else if a.value == 0.0 && a.deriv != 0.0 {
                            Err(domain(self, "sqrt is not differentiable at 0"))
                        } else {
                            Ok(a.sqrt())
                        }
                    }
                    Func::Abs => Ok(a.abs()),
                    Func::Atan2 => {
                        let b = args[1].walk(x)?;
                        if a.value == 0.0 && b.value == 0.0 {
                            Err(domain(self, "atan2 at the origin"))
                        } else {
                            Ok(a.atan2(b))
                        }
                    }
                }
            }
        }
    }

    fn pow(&self, base: Dual, exp: Dual) -> Result<Dual, ExprError> {
        let integral = exp.value.fract() == 0.0;
        if base.value < 0.0 {
            if !integral {
                return Err(domain(self, "negative base with non-integer exponent"));
            }
            if exp.deriv != 0.0 {
                return Err(domain(self, "variable exponent on a negative base"));
            }
        }
        if base.value == 0.0 {
            if exp.value < 0.0 {
                return Err(domain(self, "division by zero"));
            }
            if exp.deriv != 0.0 {
                return Err(domain(self, "variable exponent on a zero base"));
            }
            if exp.value > 0.0 && exp.value < 1.0 && base.deriv != 0.0 {
                return Err(domain(self, "power is not differentiable at 0"));
            }
        }
        Ok(base.pow(exp))
    }
}

#[cfg(test)]
mod tests {
    use super::super::Scope;
    use super::*;

    fn e(text: &str, dim: usize) -> Expr {
        Expr::parse(text, &Scope::new(dim)).unwrap()
    }

    #[test]
    fn plain_values() {
        assert_eq!(e("cos(x3)", 3).eval(&[0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(e("x1^2 + x2", 2).eval(&[3.0, 4.0]).unwrap(), 13.0);
        assert_eq!(e("-x1^2", 1).eval(&[3.0]).unwrap(), -9.0);
        assert_eq!(e("2^3^2", 1).eval(&[0.0]).unwrap(), 512.0);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let err = e("1 + 1/x1", 1).eval(&[0.0]).unwrap_err();
        assert_eq!(
            err,
            ExprError::Domain {
                expr: "(1.0 / x1)".into(),
                reason: "division by zero"
            }
        );
        assert!(matches!(e("log(x1)", 1).eval(&[0.0]), Err(ExprError::Domain { .. })));
        assert!(matches!(e("sqrt(x1)", 1).eval(&[-1.0]), Err(ExprError::Domain { .. })));
        assert!(matches!(e("x1^0.5", 1).eval(&[-4.0]), Err(ExprError::Domain { .. })));
        assert!(matches!(e("atan2(x1, x1)", 1).eval(&[0.0]), Err(ExprError::Domain { .. })));
        assert!(matches!(e("exp(x1)", 1).eval(&[1e4]), Err(ExprError::Domain { .. })));
        assert_eq!(e("x1^3", 1).eval(&[-2.0]).unwrap(), -8.0);
    }

    #[test]
    fn too_short_input_is_a_dimension_error() {
        assert!(matches!(
            e("x1 + x2", 2).eval(&[1.0]),
            Err(ExprError::Dimension { index: 2, dim: 1 })
        ));
    }

    #[test]
    fn dual_examples() {
        assert_eq!(e("sin(x1)", 1).eval_dual(&[0.0], &[1.0]).unwrap(), Dual::new(0.0, 1.0));
        assert_eq!(
            e("x1*x2", 2).eval_dual(&[2.0, 3.0], &[1.0, 0.0]).unwrap(),
            Dual::new(6.0, 3.0)
        );
    }

    #[test]
    fn dual_matches_finite_difference() {
        let expr = e("exp(x1^2)", 1);
        let x = 0.7;
        let h = 1e-6;
        let d = expr.eval_dual(&[x], &[1.0]).unwrap();
        let fd = (expr.eval(&[x + h]).unwrap() - expr.eval(&[x - h]).unwrap()) / (2.0 * h);
        assert!(((d.deriv - fd) / d.deriv).abs() < 1e-6, "{} vs {fd}", d.deriv);
        assert_eq!(d.value, expr.eval(&[x]).unwrap());
    }

    #[test]
    fn power_rules() {
        // variable exponent on a positive base
        let d = e("x1^x1", 1).eval_dual(&[2.0], &[1.0]).unwrap();
        assert!((d.deriv - 4.0 * (2f64.ln() + 1.0)).abs() < 1e-12);
        // integer exponent on a negative base
        let d = e("x1^3", 1).eval_dual(&[-2.0], &[1.0]).unwrap();
        assert_eq!(d, Dual::new(-8.0, 12.0));
        assert!(e("x1^x1", 1).eval_dual(&[-2.0], &[1.0]).is_err());
        assert!(e("x1^0.5", 1).eval_dual(&[0.0], &[1.0]).is_err());
        assert_eq!(e("x1^2", 1).eval_dual(&[0.0], &[1.0]).unwrap(), Dual::new(0.0, 0.0));
    }

    #[test]
    fn abs_derivative_is_signed() {
        let ex = e("abs(x1)", 1);
        assert_eq!(ex.eval_dual(&[-3.0], &[1.0]).unwrap(), Dual::new(3.0, -1.0));
        assert_eq!(ex.eval_dual(&[3.0], &[1.0]).unwrap(), Dual::new(3.0, 1.0));
    }
}
