//! L2 projection onto non-decreasing sequences (pool adjacent violators).

/// Returns the non-decreasing sequence closest to `y` in (unweighted) least squares.
pub fn project_monotone(y: &[f64]) -> Vec<f64> {
    // blocks of (sum, count), merged while the previous block mean exceeds the current one
    let mut sums: Vec<f64> = Vec::with_capacity(y.len());
    let mut counts: Vec<usize> = Vec::with_capacity(y.len());
    for &v in y {
        sums.push(v);
        counts.push(1);
        while sums.len() > 1 {
            let n = sums.len();
            let prev = sums[n - 2] / counts[n - 2] as f64;
            let cur = sums[n - 1] / counts[n - 1] as f64;
            if prev <= cur {
                break;
            }
            let s = sums.pop().unwrap();
            let c = counts.pop().unwrap();
            sums[n - 2] += s;
            counts[n - 2] += c;
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (s, c) in sums.iter().zip(&counts) {
        out.extend(std::iter::repeat_n(s / *c as f64, *c));
    }
    // block means computed from float sums can tie-break downwards by an ulp
    for k in 1..out.len() {
        if out[k] < out[k - 1] {
            out[k] = out[k - 1];
        }
    }
    out
}
