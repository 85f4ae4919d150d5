#![allow(dead_code)]

use aghf::exprlang::{BinOp, Expr, Func};
use rand::Rng;

fn num(v: f64) -> Expr {
    Expr::Num(v)
}

fn call(f: Func, args: Vec<Expr>) -> Expr {
    Expr::Call(f, args)
}

fn add(a: Expr, b: Expr) -> Expr {
    Expr::binary(BinOp::Add, a, b)
}

fn mul(a: Expr, b: Expr) -> Expr {
    Expr::binary(BinOp::Mul, a, b)
}

/// `c + e²` for a positive constant c.
fn positive(rng: &mut impl Rng, e: Expr) -> Expr {
    let c = rng.random_range(0.5..2.0);
    add(num(c), mul(e.clone(), e))
}

/// Random expression over `dim` states that is smooth and finite on all of
/// ℝ^dim, so derivative checks never hit a domain boundary.
pub fn smooth_expr(rng: &mut impl Rng, dim: usize, depth: usize) -> Expr {
    if depth == 0 || rng.random_bool(0.2) {
        return if rng.random_bool(0.7) {
            Expr::Var(rng.random_range(0..dim))
        } else {
            num((rng.random_range(-2.0..2.0f64) * 100.0).round() / 100.0)
        };
    }
    let sub = |rng: &mut _| smooth_expr(rng, dim, depth - 1);
    match rng.random_range(0..13) {
        0 => add(sub(rng), sub(rng)),
        1 => Expr::binary(BinOp::Sub, sub(rng), sub(rng)),
        2 => mul(sub(rng), sub(rng)),
        3 => {
            let a = sub(rng);
            let b = sub(rng);
            let d = add(num(2.0), call(Func::Cos, vec![b]));
            Expr::binary(BinOp::Div, a, d)
        }
        4 => call(Func::Sin, vec![sub(rng)]),
        5 => call(Func::Cos, vec![sub(rng)]),
        6 => call(Func::Exp, vec![call(Func::Sin, vec![sub(rng)])]),
        7 => {
            let e = sub(rng);
            call(Func::Log, vec![positive(rng, e)])
        }
        8 => {
            let e = sub(rng);
            call(Func::Sqrt, vec![positive(rng, e)])
        }
        9 => {
            let a = sub(rng);
            let b = sub(rng);
            call(Func::Atan2, vec![a, add(num(1.5), call(Func::Sin, vec![b]))])
        }
        10 => {
            let e = sub(rng);
            call(Func::Tan, vec![mul(num(0.5), call(Func::Sin, vec![e]))])
        }
        11 => {
            let e = sub(rng);
            let base = add(num(1.0), mul(num(0.5), call(Func::Sin, vec![e])));
            let k = [-1.5, -1.0, 0.5, 2.0, 3.0][rng.random_range(0..5)];
            Expr::binary(BinOp::Pow, base, num(k))
        }
        _ => Expr::Neg(Box::new(sub(rng))),
    }
}

/// Compares every partial derivative from dual numbers against a Richardson
/// extrapolated central difference. Returns the worst relative error.
pub fn fd_check(expr: &Expr, x: &[f64]) -> f64 {
    let f = |p: &[f64]| expr.eval(p).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let mut seed = vec![0.0; x.len()];
        seed[k] = 1.0;
        let exact = expr.eval_dual(x, &seed).unwrap().deriv;
        let central = |h: f64| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[k] += h;
            b[k] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        };
        let scale = x[k].abs().max(1.0);
        let best = [1e-2, 1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&h| {
                let fd = (4.0 * central(h * scale / 2.0) - central(h * scale)) / 3.0;
                (exact - fd).abs() / exact.abs().max(1.0)
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(best);
    }
    worst
}
