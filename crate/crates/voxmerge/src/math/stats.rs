//! Order statistics and population moments over small samples.

/// Variance below this is treated as degenerate: skewness and excess
/// kurtosis are defined as 0 to keep constant inputs finite.
pub const DEGENERATE_VAR: f64 = 1e-12;

/// The ten summary statistics used by interface feature blocks, in a fixed
/// order: mean, median, variance, skewness, kurtosis, Q1, Q3, count, min, max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats10 {
    pub mean: f64,
    pub median: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub q1: f64,
    pub q3: f64,
    pub count: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats10 {
    pub fn to_array(self) -> [f64; 10] {
        [
            self.mean,
            self.median,
            self.variance,
            self.skewness,
            self.kurtosis,
            self.q1,
            self.q3,
            self.count,
            self.min,
            self.max,
        ]
    }

    pub const FIELDS: [&'static str; 10] = [
        "mean", "median", "var", "skew", "kurt", "q1", "q3", "count", "min", "max",
    ];
}

/// Quantile by linear interpolation between order statistics of a sorted
/// slice (the same convention as numpy's default).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Compute all ten statistics. Returns `None` for an empty sample; callers
/// substitute their documented sentinel.
pub fn stats10(values: &[f64]) -> Option<Stats10> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    // Population moments; degenerate samples get zero higher moments.
    let (skewness, kurtosis) = if m2 < DEGENERATE_VAR {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };

    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Some(Stats10 {
        mean,
        median: quantile_sorted(&sorted, 0.5),
        variance: m2,
        skewness,
        kurtosis,
        q1: quantile_sorted(&sorted, 0.25),
        q3: quantile_sorted(&sorted, 0.75),
        count: n,
        min: sorted[0],
        max: sorted[n as usize - 1],
    })
}

/// Mean and (population) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
