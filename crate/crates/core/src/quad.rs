//! Gauss-Legendre and Gauss-Kronrod rules.

/// Abscissae of the 15-point Kronrod rule on [-1, 1] (non-negative half,
/// descending; the last entry is the centre).
pub const XGK15: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

/// Kronrod weights matching [`XGK15`].
pub const WGK15: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// Weights of the embedded 7-point Gauss rule (nodes XGK15[1], [3], [5], [7]).
pub const WG7: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Nodes and weights of the 15-point Kronrod rule mapped to [a, b], with a
/// flag marking the nodes shared with the 7-point Gauss rule.
pub fn kronrod15(a: f64, b: f64) -> [(f64, f64, Option<f64>); 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [(0.0, 0.0, None); 15];
    let mut i = 0;
    for j in 0..7 {
        let gauss = if j % 2 == 1 { Some(WG7[j / 2] * h) } else { None };
        out[i] = (c - h * XGK15[j], WGK15[j] * h, gauss);
        out[i + 1] = (c + h * XGK15[j], WGK15[j] * h, gauss);
        i += 2;
    }
    out[14] = (c, WGK15[7] * h, Some(WG7[3] * h));
    out
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Adaptive Gauss-Kronrod (7/15) integration of a scalar function.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_depth: usize,
) -> (f64, f64) {
    fn panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
        let mut k = 0.0;
        let mut g = 0.0;
        for (x, wk, wg) in kronrod15(a, b) {
            let v = f(x);
            k += wk * v;
            if let Some(wg) = wg {
                g += wg * v;
            }
        }
        (k, (k - g).abs())
    }
    fn rec<F: FnMut(f64) -> f64>(
        f: &mut F,
        a: f64,
        b: f64,
        whole: (f64, f64),
        tol: f64,
        depth: usize,
    ) -> (f64, f64) {
        if whole.1 <= tol || depth == 0 {
            return whole;
        }
        let m = 0.5 * (a + b);
        let l = panel(f, a, m);
        let r = panel(f, m, b);
        let l = rec(f, a, m, l, 0.5 * tol, depth - 1);
        let r = rec(f, m, b, r, 0.5 * tol, depth - 1);
        (l.0 + r.0, l.1 + r.1)
    }
    let whole = panel(f, a, b);
    let tol = abs_tol.max(rel_tol * whole.0.abs());
    rec(f, a, b, whole, tol, max_depth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn kronrod_weights_sum_to_length() {
        let r = kronrod15(0.0, 3.0);
        let k: f64 = r.iter().map(|p| p.1).sum();
        let g: f64 = r.iter().filter_map(|p| p.2).sum();
        assert!((k - 3.0).abs() < 1e-14);
        assert!((g - 3.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_peaks() {
        let mut f = |x: f64| 1.0 / (1e-4 + (x - 0.3) * (x - 0.3));
        let (v, _) = integrate_adaptive(&mut f, 0.0, 1.0, 1e-12, 1e-13, 40);
        let exact = 100.0 * ((0.7f64 / 0.01).atan() + (0.3f64 / 0.01).atan());
        assert!((v - exact).abs() < 1e-9 * exact);
    }
}
