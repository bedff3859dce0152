//! Matrix exponential by scaling and squaring with diagonal Padé
//! approximants (Higham, SIAM J. Matrix Anal. Appl. 26(4), 2005).

use nalgebra::Matrix6;

use crate::error::{Error, Result};

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

type M6 = Matrix6<f64>;

fn one_norm(a: &M6) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Low-order approximant: returns (U, V) with U odd, V even.
fn pade_low(a: &M6, b: &[f64]) -> (M6, M6) {
    let id = M6::identity();
    let a2 = a * a;
    let m = b.len() - 1;
    let mut pow = id;
    let mut u = id * b[1];
    let mut v = id * b[0];
    for k in 1..=m / 2 {
        pow *= a2;
        v += pow * b[2 * k];
        u += pow * b[2 * k + 1];
    }
    (a * u, v)
}

fn pade13(a: &M6) -> (M6, M6) {
    let b = &B13;
    let id = M6::identity();
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a4 * a2;
    let u_inner = a6 * (a6 * b[13] + a4 * b[11] + a2 * b[9])
        + a6 * b[7]
        + a4 * b[5]
        + a2 * b[3]
        + id * b[1];
    let u = a * u_inner;
    let v = a6 * (a6 * b[12] + a4 * b[10] + a2 * b[8])
        + a6 * b[6]
        + a4 * b[4]
        + a2 * b[2]
        + id * b[0];
    (u, v)
}

fn solve_pade(u: &M6, v: &M6) -> Result<M6> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::ExpmOverflow(f64::NAN))
}

/// `exp(a)` for a 6x6 real matrix.
pub fn expm(a: &M6) -> Result<M6> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::ExpmOverflow(f64::INFINITY));
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::ExpmOverflow(norm));
    }
    if norm == 0.0 {
        return Ok(M6::identity());
    }
    for (theta, coeffs) in [
        (THETA_3, &B3[..]),
        (THETA_5, &B5[..]),
        (THETA_7, &B7[..]),
        (THETA_9, &B9[..]),
    ] {
        if norm <= theta {
            let (u, v) = pade_low(a, coeffs);
            return solve_pade(&u, &v);
        }
    }
    let s = (norm / THETA_13).log2().ceil().max(0.0);
    if s > 1023.0 {
        return Err(Error::ExpmOverflow(norm));
    }
    let scaled = a * 2f64.powi(-(s as i32));
    let (u, v) = pade13(&scaled);
    let mut x = solve_pade(&u, &v)?;
    for _ in 0..s as i32 {
        x = x * x;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::ExpmOverflow(norm));
    }
    Ok(x)
}
