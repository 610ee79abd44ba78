//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use fpc_core::chain::BirthDeathChain;

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// `h(m) = P_m[hit b before a]` from `h(a) = 0`, `h(b) = 1` and
/// `h(m) = p_m h(m-1) + v_m h(m) + q_m h(m+1)`.
pub fn exit_oracle(chain: &BirthDeathChain, a: usize, b: usize) -> Vec<f64> {
    let len = b - a + 1;
    let mut mat = vec![vec![0.0; len]; len];
    let mut rhs = vec![0.0; len];
    mat[0][0] = 1.0;
    mat[len - 1][len - 1] = 1.0;
    rhs[len - 1] = 1.0;
    for m in a + 1..b {
        let r = m - a;
        mat[r][r - 1] = -chain.down(m);
        mat[r][r] = chain.down(m) + chain.up(m);
        mat[r][r + 1] = -chain.up(m);
    }
    dense_solve(mat, rhs)
}

pub fn time_oracle(chain: &BirthDeathChain, lo: usize, hi: usize) -> Vec<f64> {
    let len = hi - lo + 1;
    let mut mat = vec![vec![0.0; len]; len];
    let mut rhs = vec![1.0; len];
    mat[0][0] = 1.0;
    rhs[0] = 0.0;
    mat[len - 1][len - 1] = 1.0;
    rhs[len - 1] = 0.0;
    for m in lo + 1..hi {
        let r = m - lo;
        mat[r][r - 1] = -chain.down(m);
        mat[r][r] = chain.down(m) + chain.up(m);
        mat[r][r + 1] = -chain.up(m);
    }
    dense_solve(mat, rhs)
}

/// Counts `(1 -> 0, 0 -> 1)` events over `n * n^3` equally likely
/// (selected node, query triple) combinations. Honest nodes `0..m` hold 1,
/// `m..honest` hold 0, the rest are adversarial and vote for the honest
/// minority (1 on a tie).
pub fn enumerate(n: usize, adversaries: usize, m: usize) -> (i128, i128) {
    let honest = n - adversaries;
    let adversary_vote = if 2 * m <= honest { 1 } else { 0 };
    let vote = |j: usize| -> u32 {
        if j < m {
            1
        } else if j < honest {
            0
        } else {
            adversary_vote
        }
    };
    // Number of triples with 0, 1, 2 or 3 one-votes.
    let mut by_ones = [0i128; 4];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                by_ones[(vote(a) + vote(b) + vote(c)) as usize] += 1;
            }
        }
    }
    let to_zero = by_ones[0] + by_ones[1];
    let to_one = by_ones[2] + by_ones[3];
    let mut down = 0;
    let mut up = 0;
    for selected in 0..honest {
        if selected < m {
            down += to_zero;
        } else {
            up += to_one;
        }
    }
    (down, up)
}
