//! Closed-form reference values, written independently of `csiq-core`, that
//! the acceptance suite compares the library against.

/// `ln(1 + μx) / ln(1 + μ)` for `x ≥ 0`.
pub fn mu_law(x: f64, mu: f64) -> f64 {
    (mu * x).ln_1p() / mu.ln_1p()
}

/// Inverse of [`mu_law`]: `((1 + μ)^y − 1) / μ`.
pub fn mu_law_inverse(y: f64, mu: f64) -> f64 {
    ((1.0 + mu).powf(y) - 1.0) / mu
}

/// Widest magnitude cell of a `bits`-bit sign-magnitude μ-law quantizer:
/// the outermost one, `[Φ⁻¹((L−1)/L), 1]` with `L = 2^(bits−1)`.
pub fn widest_mu_law_cell(bits: u32, mu: f64) -> f64 {
    let levels = (1u64 << (bits - 1)) as f64;
    (0..levels as u64)
        .map(|k| mu_law_inverse((k + 1) as f64 / levels, mu) - mu_law_inverse(k as f64 / levels, mu))
        .fold(0.0, f64::max)
}

/// Dense layer `n_in → n_out` with bias.
pub fn dense_params(n_in: usize, n_out: usize) -> usize {
    n_in * n_out + n_out
}

/// Parameters of each adaptor at codeword length `m`: the full-width
/// three-layer network, the `m/8` bottleneck, and the `m/8` plus `m/16`
/// parallel bottlenecks.
pub fn adaptor_params(m: usize) -> [usize; 3] {
    let bottle = |w: usize| dense_params(m, w) + dense_params(w, m);
    [3 * dense_params(m, m), bottle(m / 8), bottle(m / 8) + bottle(m / 16)]
}

/// `E[‖v‖² / ‖v − q‖²]` in dB over rows of `width`, skipping exact rows.
pub fn mean_ratio_db(v: &[f64], q: &[f64], width: usize) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in v.chunks_exact(width).zip(q.chunks_exact(width)) {
        let signal: f64 = a.iter().map(|x| x * x).sum();
        let noise: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        if noise > 0.0 {
            sum += signal / noise;
            n += 1;
        }
    }
    10.0 * (sum / n as f64).log10()
}

/// Median of a non-empty slice, averaging the middle pair.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
