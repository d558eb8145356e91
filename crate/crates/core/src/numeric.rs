//! Log-domain summation helpers.
//!
//! Every sum in the calculus runs over thousands of terms whose magnitudes
//! span hundreds of orders of magnitude, so sums are taken as
//! `max + ln(sum(exp(x - max)))` with Neumaier-compensated accumulation.

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// `ln(sum(exp(terms)))`; `-inf` for an empty slice or all-`-inf` terms.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let acc: CompensatedSum = terms.iter().map(|&x| (x - max).exp()).collect();
    max + acc.total().ln()
}

/// Same as [`log_sum_exp`] over terms produced on the fly by `term(i)` for `i in range`.
///
/// The closure is called twice per index, so it must be cheap and pure.
pub fn log_sum_exp_by<F>(range: std::ops::RangeInclusive<usize>, term: F) -> f64
where
    F: Fn(usize) -> f64,
{
    let mut max = f64::NEG_INFINITY;
    for i in range.clone() {
        max = max.max(term(i));
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut acc = CompensatedSum::new();
    for i in range {
        acc.add((term(i) - max).exp());
    }
    max + acc.total().ln()
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(1 - exp(x))` for `x < 0`.
pub fn log_one_minus_exp(x: f64) -> f64 {
    debug_assert!(x <= 0.0);
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Difference `b - a` of two log-values where `-inf - -inf` counts as no growth.
#[inline]
pub(crate) fn log_increment(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        if b == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    } else {
        b - a
    }
}

/// Terms this far below the largest term of a sum are not exponentiated;
/// they are bounded above by `exp(max - PRUNE)` each instead.
const PRUNE: f64 = 60.0;

/// Linear-domain results below this (relative to the tilted scale) are
/// recomputed in the log domain.
const LINEAR_FLOOR: f64 = 1e-250;

/// `z[d] = ln Σ_{t=0..=d} exp(lx[d-t] + ly[t])` for `d < n`.
pub fn log_convolve(lx: &[f64], ly: &[f64], n: usize) -> Vec<f64> {
    assert!(lx.len() >= n && ly.len() >= n);
    let (lx, ly) = (&lx[..n], &ly[..n]);
    let reversed: Vec<f64> = lx.iter().rev().copied().collect();
    // lx[d - t] = reversed[n - 1 - d + t]
    let unimodal = is_log_concave(lx) && is_log_concave(ly);
    let mut peak = 0;
    let mut exact = |d: usize| {
        if unimodal {
            window_sum(|t| lx[d - t] + ly[t], d, &mut peak)
        } else {
            log_sum_exp_pairs(&reversed[n - 1 - d..], &ly[..=d])
        }
    };
    let a = -chord_slope(lx).max(chord_slope(ly));
    let (Some((xs, mx)), Some((ys, my))) = (tilt(lx, a), tilt(ly, a)) else {
        return (0..n).map(exact).collect();
    };
    let mut z = vec![0.0; n];
    for (t, &yt) in ys.iter().enumerate() {
        if yt != 0.0 {
            for (zd, &xv) in z[t..].iter_mut().zip(&xs) {
                *zd += yt * xv;
            }
        }
    }
    z.iter()
        .enumerate()
        .map(|(d, &v)| {
            if v > LINEAR_FLOOR {
                v.ln() + mx + my - a * d as f64
            } else {
                exact(d)
            }
        })
        .collect()
}

/// `z[d] = ln Σ_{t < ly.len()} exp(lx[d+t] + ly[t])` for `d < n`.
pub fn log_correlate(lx: &[f64], ly: &[f64], n: usize) -> Vec<f64> {
    let m = ly.len();
    assert!(m > 0 && lx.len() + 1 >= n + m);
    let lx = &lx[..n + m - 1];
    let unimodal = is_log_concave(lx) && is_log_concave(ly);
    let mut peak = 0;
    let mut exact = |d: usize| {
        if unimodal {
            window_sum(|t| lx[d + t] + ly[t], m - 1, &mut peak)
        } else {
            log_sum_exp_pairs(&lx[d..d + m], ly)
        }
    };
    let a = chord_slope(lx);
    let (Some((xs, mx)), Some((ys, my))) = (tilt(lx, -a), tilt(ly, a)) else {
        return (0..n).map(exact).collect();
    };
    let mut z = vec![0.0; n];
    for (t, &yt) in ys.iter().enumerate() {
        if yt != 0.0 {
            for (zd, &xv) in z.iter_mut().zip(&xs[t..]) {
                *zd += yt * xv;
            }
        }
    }
    z.iter()
        .enumerate()
        .map(|(d, &v)| {
            if v > LINEAR_FLOOR {
                v.ln() + mx + my + a * d as f64
            } else {
                exact(d)
            }
        })
        .collect()
}

/// Concave up to rounding, with `-inf` allowed only as a trailing run.
fn is_log_concave(l: &[f64]) -> bool {
    let finite = l.iter().take_while(|v| v.is_finite()).count();
    if l[finite..].iter().any(|v| *v != f64::NEG_INFINITY) {
        return false;
    }
    let l = &l[..finite];
    l.windows(3).all(|w| {
        let tol = 1e-10 * w[0].abs().max(w[1].abs()).max(w[2].abs()).max(1.0);
        w[2] - w[1] <= w[1] - w[0] + tol
    })
}

/// Log-sum-exp of a unimodal term sequence over `0..=last`: climbs from
/// `peak` to the maximum, then sums outward until the terms drop below the
/// pruning cut. Everything beyond is bounded by the cut.
fn window_sum(term: impl Fn(usize) -> f64, last: usize, peak: &mut usize) -> f64 {
    let mut p = (*peak).min(last);
    while p < last && term(p + 1) >= term(p) {
        p += 1;
    }
    while p > 0 && term(p - 1) > term(p) {
        p -= 1;
    }
    *peak = p;
    let max = term(p);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    let cut = max - PRUNE;
    let mut acc = CompensatedSum::new();
    acc.add(1.0);
    let mut lo = p;
    while lo > 0 {
        let v = term(lo - 1);
        if v < cut {
            break;
        }
        acc.add((v - max).exp());
        lo -= 1;
    }
    let mut hi = p;
    while hi < last {
        let v = term(hi + 1);
        if v < cut {
            break;
        }
        acc.add((v - max).exp());
        hi += 1;
    }
    let dropped = (last + 1 - (hi - lo + 1)) as f64;
    acc.add(dropped * (-PRUNE).exp());
    max + acc.total().ln()
}

fn chord_slope(l: &[f64]) -> f64 {
    let first = l.iter().position(|v| v.is_finite());
    let last = l.iter().rposition(|v| v.is_finite());
    match (first, last) {
        (Some(i), Some(j)) if j > i => (l[j] - l[i]) / (j - i) as f64,
        _ => 0.0,
    }
}

/// `exp(l[k] + a k - M)` with `M` the maximum exponent; `None` if the
/// sequence holds no finite value, or `+inf` or `NaN`.
fn tilt(l: &[f64], a: f64) -> Option<(Vec<f64>, f64)> {
    if l.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return None;
    }
    let m = l
        .iter()
        .enumerate()
        .map(|(k, &v)| v + a * k as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return None;
    }
    let v = l
        .iter()
        .enumerate()
        .map(|(k, &v)| (v + a * k as f64 - m).exp())
        .collect();
    Some((v, m))
}

/// `ln Σ exp(a[i] + b[i])` over the common length, skipping exponentials of
/// negligible terms and adding a conservative bound for them, so the result
/// never undershoots.
pub fn log_sum_exp_pairs(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().min(b.len());
    let (a, b) = (&a[..len], &b[..len]);
    let mut lanes = [f64::NEG_INFINITY; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            let v = x[i] + y[i];
            lanes[i] = if v > lanes[i] { v } else { lanes[i] };
        }
    }
    let mut max = lanes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        max = max.max(x + y);
    }
    if a.iter().zip(b).any(|(x, y)| (x + y).is_nan()) {
        return f64::NAN;
    }
    if max.is_infinite() {
        return max;
    }
    let cut = max - PRUNE;
    let mut acc = CompensatedSum::new();
    let mut dropped = 0u64;
    for (x, y) in a.iter().zip(b) {
        let v = x + y;
        if v >= cut {
            acc.add((v - max).exp());
        } else if v > f64::NEG_INFINITY {
            dropped += 1;
        }
    }
    acc.add(dropped as f64 * (-PRUNE).exp());
    max + acc.total().ln()
}
