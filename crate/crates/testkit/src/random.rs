//! Seeded random instances for the solver oracles.

use rand::Rng;

use crate::DenseLp;

/// A random instance and which of its variables are integer.
#[derive(Debug, Clone)]
pub struct Instance {
    pub lp: DenseLp,
    pub integer: Vec<bool>,
}

/// With `binary`, 3 to 15 binary variables with integer costs; otherwise 1
/// to 6 boxed continuous variables. Up to five rows of small integer
/// coefficients, each a `<=`, `>=`, range or equality row.
pub fn instance(rng: &mut impl Rng, binary: bool) -> Instance {
    let n = if binary { rng.random_range(3..=15) } else { rng.random_range(1..=6) };
    let m = rng.random_range(1..=5);
    let mut lp = DenseLp {
        c: Vec::with_capacity(n),
        a: Vec::with_capacity(m),
        row_lo: Vec::with_capacity(m),
        row_hi: Vec::with_capacity(m),
        var_lo: Vec::with_capacity(n),
        var_hi: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let c = rng.random_range(-10..=10) as f64;
        if binary {
            lp.c.push(c);
            lp.var_lo.push(0.0);
            lp.var_hi.push(1.0);
        } else {
            let lo = rng.random_range(-3..=1) as f64;
            let hi = lo + rng.random_range(0..=6) as f64;
            lp.c.push(c + rng.random_range(-0.5..0.5));
            lp.var_lo.push(lo);
            lp.var_hi.push(hi);
        }
    }
    for _ in 0..m {
        let mut row = vec![0.0; n];
        for x in row.iter_mut() {
            if rng.random_bool(0.7) {
                *x = rng.random_range(-6..=6) as f64;
            }
        }
        let centre = rng.random_range(-4..=8) as f64;
        let (lo, hi) = match rng.random_range(0..4) {
            0 => (f64::NEG_INFINITY, centre),
            1 => (centre, f64::INFINITY),
            2 => (centre, centre + rng.random_range(0..=4) as f64),
            _ => (centre, centre),
        };
        lp.a.push(row);
        lp.row_lo.push(lo);
        lp.row_hi.push(hi);
    }
    Instance {
        lp,
        integer: vec![binary; n],
    }
}
