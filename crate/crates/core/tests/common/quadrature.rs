//! Adaptive quadrature oracles: Gauss-Kronrod (7/15) in one dimension and the
//! Genz-Malik degree-7/5 embedded rule on hyper-rectangles otherwise.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone)]
struct Region {
    lo: Vec<f64>,
    hi: Vec<f64>,
    value: f64,
    error: f64,
    split: usize,
}

impl PartialEq for Region {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Region {}
impl PartialOrd for Region {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Region {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(&[f64]) -> f64>(f: &F, lo: f64, hi: f64) -> Region {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let mut k = 0.0;
    let mut g = 0.0;
    for i in 0..8 {
        if i == 7 {
            let v = f(&[c]);
            k += WGK[7] * v;
            g += WG[3] * v;
        } else {
            let v = f(&[c - h * XGK[i]]) + f(&[c + h * XGK[i]]);
            k += WGK[i] * v;
            if i % 2 == 1 {
                g += WG[i / 2] * v;
            }
        }
    }
    Region {
        lo: vec![lo],
        hi: vec![hi],
        value: k * h,
        error: ((k - g) * h).abs(),
        split: 0,
    }
}

fn genz_malik<F: Fn(&[f64]) -> f64>(f: &F, lo: &[f64], hi: &[f64]) -> Region {
    let n = lo.len();
    let nf = n as f64;
    let l2 = (9.0f64 / 70.0).sqrt();
    let l3 = (9.0f64 / 10.0).sqrt();
    let l4 = (9.0f64 / 10.0).sqrt();
    let l5 = (9.0f64 / 19.0).sqrt();
    let w1 = (12824.0 - 9120.0 * nf + 400.0 * nf * nf) / 19683.0;
    let w2 = 980.0 / 6561.0;
    let w3 = (1820.0 - 400.0 * nf) / 19683.0;
    let w4 = 200.0 / 19683.0;
    let w5 = 6859.0 / 19683.0 / 2f64.powi(n as i32);
    let v1 = (729.0 - 950.0 * nf + 50.0 * nf * nf) / 729.0;
    let v2 = 245.0 / 486.0;
    let v3 = (265.0 - 100.0 * nf) / 1458.0;
    let v4 = 25.0 / 729.0;

    let c: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let h: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).collect();
    let volume: f64 = h.iter().map(|v| 2.0 * v).product();
    let mut p = c.clone();
    let f0 = f(&c);

    let mut s2 = 0.0;
    let mut s3 = 0.0;
    let mut best = (0usize, -1.0f64);
    for i in 0..n {
        let mut pair = |lam: f64| {
            p[i] = c[i] + lam * h[i];
            let a = f(&p);
            p[i] = c[i] - lam * h[i];
            let b = f(&p);
            p[i] = c[i];
            a + b
        };
        let a2 = pair(l2);
        let a3 = pair(l3);
        s2 += a2;
        s3 += a3;
        let diff = ((a2 - 2.0 * f0) - (l2 * l2 / (l3 * l3)) * (a3 - 2.0 * f0)).abs();
        if diff > best.1 + 1e-300 * best.1.abs() {
            best = (i, diff);
        }
    }
    let mut s4 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                p[i] = c[i] + si * l4 * h[i];
                p[j] = c[j] + sj * l4 * h[j];
                s4 += f(&p);
            }
            p[i] = c[i];
            p[j] = c[j];
        }
    }
    let mut s5 = 0.0;
    for mask in 0..(1usize << n) {
        for i in 0..n {
            let s = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
            p[i] = c[i] + s * l5 * h[i];
        }
        s5 += f(&p);
    }
    let i7 = volume * (w1 * f0 + w2 * s2 + w3 * s3 + w4 * s4 + w5 * s5);
    let i5 = volume * (v1 * f0 + v2 * s2 + v3 * s3 + v4 * s4);
    Region {
        lo: lo.to_vec(),
        hi: hi.to_vec(),
        value: i7,
        error: (i7 - i5).abs(),
        split: best.0,
    }
}

fn widest(r: &Region) -> usize {
    (0..r.lo.len())
        .max_by(|&a, &b| (r.hi[a] - r.lo[a]).total_cmp(&(r.hi[b] - r.lo[b])))
        .unwrap()
}

/// Integral of `f` over the box `[lo, hi]` to `max(abs_tol, rel_tol |I|)`.
/// Returns `(value, error estimate)`.
pub fn integrate<F: Fn(&[f64]) -> f64>(
    f: F,
    lo: &[f64],
    hi: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_regions: usize,
) -> (f64, f64) {
    assert_eq!(lo.len(), hi.len());
    let one_d = lo.len() == 1;
    let rule = |a: &[f64], b: &[f64]| if one_d { gauss_kronrod(&f, a[0], b[0]) } else { genz_malik(&f, a, b) };
    let mut heap = BinaryHeap::new();
    let first = rule(lo, hi);
    let (mut value, mut error) = (first.value, first.error);
    heap.push(first);
    let mut regions = 1;
    while error > abs_tol.max(rel_tol * value.abs()) && regions < max_regions {
        let r = heap.pop().unwrap();
        value -= r.value;
        error -= r.error;
        // Split along the largest fourth difference, unless that axis is already
        // far narrower than the widest one.
        let mut axis = r.split;
        let w = widest(&r);
        if (r.hi[axis] - r.lo[axis]) < 1e-3 * (r.hi[w] - r.lo[w]) {
            axis = w;
        }
        let mid = 0.5 * (r.lo[axis] + r.hi[axis]);
        let mut hi_a = r.hi.clone();
        hi_a[axis] = mid;
        let mut lo_b = r.lo.clone();
        lo_b[axis] = mid;
        for child in [rule(&r.lo, &hi_a), rule(&lo_b, &r.hi)] {
            value += child.value;
            error += child.error;
            heap.push(child);
        }
        regions += 1;
    }
    // Re-sum to shed accumulated cancellation in the running totals.
    let value: f64 = heap.iter().map(|r| r.value).sum();
    let error: f64 = heap.iter().map(|r| r.error).sum();
    (value, error)
}

#[cfg(test)]
mod tests {
    #[test]
    fn integrates_polynomials_and_gaussians() {
        let (v, _) = super::integrate(|x| x[0] * x[0], &[0.0], &[3.0], 1e-12, 0.0, 1000);
        assert!((v - 9.0).abs() < 1e-12);
        let (v, _) = super::integrate(
            |x| (-0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp(),
            &[-10.0; 3],
            &[10.0; 3],
            1e-10,
            0.0,
            200_000,
        );
        let exact = (2.0 * std::f64::consts::PI).powf(1.5);
        assert!((v / exact - 1.0).abs() < 1e-9, "{v} vs {exact}");
    }
}
