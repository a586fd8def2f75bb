//! Factorial and binomial tables shared by the Fock-space code.

use std::sync::OnceLock;

const TABLE_LEN: usize = 1024;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        // Kahan-compensated so ln(n!) stays accurate to ~1 ulp of its magnitude.
        let mut table = Vec::with_capacity(TABLE_LEN);
        let (mut sum, mut carry) = (0.0_f64, 0.0_f64);
        table.push(0.0);
        for i in 1..TABLE_LEN {
            let y = (i as f64).ln() - carry;
            let t = sum + y;
            carry = (t - sum) - y;
            sum = t;
            table.push(sum);
        }
        table
    })
}

/// `ln(n!)`, tabulated for `n < 1024`.
pub(crate) fn ln_factorial(n: usize) -> f64 {
    ln_factorial_table()[n]
}

/// `ln Γ(s/2 + 1)` for a non-negative integer `s`.
pub(crate) fn ln_gamma_half_plus_one(s: usize) -> f64 {
    if s % 2 == 0 {
        ln_factorial(s / 2)
    } else {
        // Γ(m + 1/2) = (2m)! √π / (4^m m!) with m = (s + 1) / 2
        let m = (s + 1) / 2;
        ln_factorial(2 * m) - (2 * m) as f64 * std::f64::consts::LN_2 - ln_factorial(m)
            + 0.5 * std::f64::consts::PI.ln()
    }
}

fn binomial_table() -> &'static [Vec<f64>] {
    static TABLE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n_rows = crate::fock::MODE_CAP + 1;
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_rows);
        for n in 0..n_rows {
            let mut row = vec![1.0; n + 1];
            for k in 1..n {
                row[k] = rows[n - 1][k - 1] + rows[n - 1][k];
            }
            rows.push(row);
        }
        rows
    })
}

/// Binomial coefficient `C(n, k)` for `n ≤ MODE_CAP`.
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        0.0
    } else {
        binomial_table()[n][k]
    }
}
