use serde::{Deserialize, Serialize};

/// Training objective over the bin probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Negative multinomial log-likelihood (cross-entropy over unordered bins).
    Multinomial,
    /// Joint binary cross-entropy: one BCE term per cut-point, scored against
    /// the CDF obtained from cumulative bin probabilities.
    Jbce,
}

impl Loss {
    pub fn name(self) -> &'static str {
        match self {
            Loss::Multinomial => "multinomial",
            Loss::Jbce => "jbce",
        }
    }
}

impl std::fmt::Display for Loss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Loss {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "multinomial" => Ok(Loss::Multinomial),
            "jbce" => Ok(Loss::Jbce),
            other => Err(format!("unknown loss `{other}`")),
        }
    }
}

/// Running sums `F_j = p_0 + ... + p_j`.
pub fn cumulative(probs: &[f64]) -> Vec<f64> {
    probs
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// `-log(max(p[target], clip))`.
pub fn loss_multinomial(probs: &[f64], target: usize, clip: f64) -> f64 {
    -probs[target].max(clip).ln()
}

/// Sum over cut-points `j` of the binary cross-entropy between `I(target <= j)`
/// and `F_j`, with `F_j` clipped to `[clip, 1 - clip]`.
pub fn loss_jbce(probs: &[f64], target: usize, clip: f64) -> f64 {
    let mut g = vec![0.0; probs.len()];
    loss_and_grad(probs, target, Loss::Jbce, clip, &mut g)
}

/// Per-observation loss; writes the gradient with respect to the logits
/// into `grad`.
pub(crate) fn loss_and_grad(
    probs: &[f64],
    target: usize,
    loss: Loss,
    clip: f64,
    grad: &mut [f64],
) -> f64 {
    match loss {
        Loss::Multinomial => {
            let pt = probs[target];
            if pt > clip {
                grad.copy_from_slice(probs);
                grad[target] -= 1.0;
            } else {
                grad.fill(0.0);
            }
            -pt.max(clip).ln()
        }
        Loss::Jbce => jbce_and_grad(probs, target, clip, grad),
    }
}

fn jbce_and_grad(probs: &[f64], target: usize, clip: f64, grad: &mut [f64]) -> f64 {
    let bins = probs.len();
    let m = bins - 1;
    // suffix[j] = p_{j+1} + ... + p_m, i.e. 1 - F_j without cancellation
    let mut suffix = vec![0.0; bins];
    for j in (0..m).rev() {
        suffix[j] = suffix[j + 1] + probs[j + 1];
    }
    let hi = 1.0 - clip;
    let mut value = 0.0;
    // d loss / d F_j for cuts at or above the target, d loss / d S_j below it
    let mut d_cdf = vec![0.0; m];
    let mut d_surv = vec![0.0; m];
    let mut cdf = 0.0;
    for j in 0..m {
        cdf += probs[j];
        if target <= j {
            let f = cdf.clamp(clip, hi);
            value -= f.ln();
            if cdf > clip && cdf < hi {
                d_cdf[j] = -1.0 / cdf;
            }
        } else {
            let s = suffix[j];
            let sc = s.clamp(clip, hi);
            value -= sc.ln();
            if s > clip && s < hi {
                d_surv[j] = -1.0 / s;
            }
        }
    }
    // dL/dp_i = sum_{j >= i} d_cdf[j] + sum_{j < i} d_surv[j]
    let mut tail = 0.0;
    for i in (0..bins).rev() {
        if i < m {
            tail += d_cdf[i];
        }
        grad[i] = tail;
    }
    let mut head = 0.0;
    for i in 0..bins {
        grad[i] += head;
        if i < m {
            head += d_surv[i];
        }
    }
    // through the softmax: dz_k = p_k (g_k - sum_i p_i g_i)
    let mean: f64 = probs.iter().zip(grad.iter()).map(|(p, g)| p * g).sum();
    for (g, &p) in grad.iter_mut().zip(probs) {
        *g = p * (*g - mean);
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multinomial_values() {
        let uniform = [0.25; 4];
        for t in 0..4 {
            assert!((loss_multinomial(&uniform, t, 1e-12) - 1.386_294_361_119_890_6).abs() < 1e-12);
        }
        assert_eq!(loss_multinomial(&[0.0, 1.0, 0.0], 1, 1e-12), 0.0);
        let clipped = loss_multinomial(&[1.0, 0.0], 1, 1e-12);
        assert!((clipped - 27.631_021_115_928_547).abs() < 1e-9);
    }

    #[test]
    fn jbce_values() {
        assert!((loss_jbce(&[0.5, 0.5], 0, 1e-12) - 0.693_147_180_559_945_3).abs() < 1e-12);
        // -ln 0.8 - ln 0.5
        assert!((loss_jbce(&[0.2, 0.3, 0.5], 2, 1e-12) - 0.916_290_731_874_155).abs() < 1e-12);
    }

    #[test]
    fn jbce_vanishes_on_perfect_cdf() {
        let mut prev = f64::INFINITY;
        for clip in [1e-4, 1e-8, 1e-12] {
            let l = loss_jbce(&[0.0, 1.0, 0.0, 0.0], 1, clip);
            assert!(l >= 0.0 && l < prev);
            prev = l;
        }
        assert!(prev < 1e-10);
    }

    #[test]
    fn jbce_single_cut_gradient_sign() {
        // p = softmax(z) = [0.5, 0.5], target below the cut: L = -ln p_0,
        // dL/dz_0 = -(1 - p_0) = -0.5, dL/dz_1 = p_1 = 0.5
        let mut g = [0.0; 2];
        loss_and_grad(&[0.5, 0.5], 0, Loss::Jbce, 1e-12, &mut g);
        assert!((g[0] + 0.5).abs() < 1e-15);
        assert!((g[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn loss_parse() {
        assert_eq!("JBCE".parse::<Loss>().unwrap(), Loss::Jbce);
        assert!("hinge".parse::<Loss>().is_err());
        assert_eq!(serde_json::to_string(&Loss::Multinomial).unwrap(), "\"multinomial\"");
    }
}
