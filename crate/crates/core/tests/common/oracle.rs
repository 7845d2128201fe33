//! Straight transcription of the key-rate formulas in double-double
//! arithmetic.
//!
//! Nothing here is shared with the library: excess noise, detector and line
//! noise, mutual information, the A/B/C/D coefficients and the eigenvalue
//! quadratics are all written out exactly as the textbook expressions, with
//! about 32 significant digits so the cancellation near `lambda = 1` stays
//! harmless. Only the final `G` is evaluated in `f64`, from `(lambda - 1)/2`
//! which is already accurate.

use twofloat::TwoFloat;

type Dd = TwoFloat;

fn dd(x: f64) -> Dd {
    Dd::from(x)
}

/// Quotient with one residual correction. The library's own division skips
/// the fused multiply-add in its reciprocal step and is only good to about
/// 16 digits.
fn div(a: Dd, b: Dd) -> Dd {
    let q = a / b;
    let r = a - q * b;
    q + r / b
}

fn half(x: Dd) -> Dd {
    x * dd(0.5)
}

fn to_f64(x: Dd) -> f64 {
    x.hi() + x.lo()
}

#[derive(Debug, Clone, Copy)]
pub struct Inputs {
    pub n0: f64,
    pub eta0: f64,
    pub a: f64,
    pub eta_ax: f64,
    pub nu_ax: f64,
    pub eta_bx: f64,
    pub nu_bx: f64,
    pub t: f64,
    pub f: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Output {
    pub v_a: f64,
    pub eps_a: f64,
    pub i_ab: f64,
    pub chi_be: f64,
    pub rate: f64,
    pub lambdas: [f64; 5],
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

fn g(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    ((x + 1.0) * x.ln_1p() - x * x.ln()) / std::f64::consts::LN_2
}

fn log2(x: Dd) -> f64 {
    // x >= 1 in every caller; split off the f64 part for precision.
    let hi = x.hi();
    let rest = x.lo() / hi;
    (hi.ln() + rest.ln_1p()) / std::f64::consts::LN_2
}

/// Larger and smaller root of `l^2 - s l + p = 0`, written as `[s +- sqrt(s^2 - 4p)] / 2`.
fn quadratic(s: Dd, p: Dd) -> (Dd, Dd) {
    let disc = s * s - dd(4.0) * p;
    let root = if to_f64(disc) > 0.0 { disc.sqrt() } else { dd(0.0) };
    (half(s + root), half(s - root))
}

pub fn evaluate(x: &Inputs) -> Output {
    let v_a = dd(x.eta0) * dd(x.n0);
    let eta0 = dd(x.eta0);
    let eta_ax = dd(x.eta_ax);
    let nu1 = dd(x.nu_ax) + dd(1.0);
    let a = dd(x.a);
    let eps = div(
        dd(2.0) * v_a * eta0 * nu1 + v_a * v_a * eta_ax * (dd(1.0) - a * a),
        v_a * eta_ax + dd(2.0) * eta0 * nu1,
    );

    let t = dd(x.t);
    let eta_b = dd(x.eta_bx);
    let chi_het = div(dd(1.0) + (dd(1.0) - eta_b) + dd(2.0) * dd(x.nu_bx), eta_b);
    let chi_line = div(dd(1.0), t) - dd(1.0) + eps;
    let chi_tot = chi_line + div(chi_het, t);
    let v = v_a + dd(1.0);
    let i_ab = log2(div(v + chi_tot, dd(1.0) + chi_tot));

    let cap_a = v * v * (dd(1.0) - dd(2.0) * t) + dd(2.0) * t + t * t * (v + chi_line) * (v + chi_line);
    let sqrt_b = t * (v * chi_line + dd(1.0));
    let cap_b = sqrt_b * sqrt_b;
    let norm = t * (v + chi_tot);
    let cap_c = div(
        cap_a * chi_het * chi_het
            + cap_b
            + dd(1.0)
            + dd(2.0) * chi_het * (v * sqrt_b + t * (v + chi_line))
            + dd(2.0) * t * (v * v - dd(1.0)),
        norm * norm,
    );
    let ratio = div(v + sqrt_b * chi_het, norm);
    let cap_d = ratio * ratio;

    let (l1, l2) = quadratic(cap_a, cap_b);
    let (l3, l4) = quadratic(cap_c, cap_d);
    let lambdas = [l1.sqrt(), l2.sqrt(), l3.sqrt(), l4.sqrt(), dd(1.0)];
    let nus = lambdas.map(|l| to_f64(half(l - dd(1.0))).max(0.0));
    let chi_be = g(nus[0]) + g(nus[1]) - g(nus[2]) - g(nus[3]) - g(nus[4]);
    Output {
        v_a: to_f64(v_a),
        eps_a: to_f64(eps),
        i_ab,
        chi_be,
        rate: x.f * i_ab - chi_be,
        lambdas: lambdas.map(to_f64),
        a: to_f64(cap_a),
        b: to_f64(cap_b),
        c: to_f64(cap_c),
        d: to_f64(cap_d),
    }
}
