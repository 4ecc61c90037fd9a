//! Scalar per-pixel reference implementations written from the textbook
//! formulas, deliberately naive.

/// `logits[n][k][p]` for `N x K x P` nested vectors.
pub type Logits = Vec<Vec<Vec<f64>>>;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn d_uncond(real: &[f64], fake: &[f64]) -> f64 {
    let r: f64 = real.iter().map(|&x| -sigmoid(x).ln()).sum::<f64>() / real.len() as f64;
    let f: f64 = fake.iter().map(|&x| -(1.0 - sigmoid(x)).ln()).sum::<f64>() / fake.len() as f64;
    r + f
}

pub fn g_uncond(fake: &[f64]) -> f64 {
    fake.iter().map(|&x| -sigmoid(x).ln()).sum::<f64>() / fake.len() as f64
}

/// Labels `labels[n][p]` in `0..c`; returns per-class weights.
pub fn class_weights(labels: &[Vec<usize>], c: usize) -> Vec<f64> {
    let mut counts = vec![0.0; c];
    let mut total = 0.0;
    for map in labels {
        for &l in map {
            counts[l] += 1.0;
            total += 1.0;
        }
    }
    let present = counts.iter().filter(|&&x| x > 0.0).count() as f64;
    counts.iter().map(|&n| if n > 0.0 { 1.0 / ((n / total) * present) } else { 0.0 }).collect()
}

fn softmax_at(logits: &[Vec<f64>], p: usize, k: usize) -> f64 {
    let denom: f64 = logits.iter().map(|ch| ch[p].exp()).sum();
    logits[k][p].exp() / denom
}

fn weighted_ce(logits: &Logits, labels: &[Vec<usize>], alpha: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut count = 0.0;
    for (n, map) in labels.iter().enumerate() {
        for (p, &l) in map.iter().enumerate() {
            total += -alpha[l] * softmax_at(&logits[n], p, l).ln();
            count += 1.0;
        }
    }
    total / count
}

pub fn d_cond(real: &Logits, labels: &[Vec<usize>], fake: &Logits, alpha: &[f64]) -> f64 {
    let fake_class = fake[0].len() - 1;
    let mut f = 0.0;
    let mut count = 0.0;
    for img in fake {
        for p in 0..img[0].len() {
            f += -softmax_at(img, p, fake_class).ln();
            count += 1.0;
        }
    }
    weighted_ce(real, labels, alpha) + f / count
}

pub fn g_cond(fake: &Logits, labels: &[Vec<usize>], alpha: &[f64]) -> f64 {
    weighted_ce(fake, labels, alpha)
}
