//! Slope estimation and rank correlation.

use crate::error::{Error, Result};

/// Pooled OLS slope of score on alpha with a 95% normal-approximation CI.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeEstimate {
    pub beta: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub residual_std: f64,
}

/// Fit `s = intercept + beta * alpha` by least squares over (alpha, score)
/// points. CI = beta +/- 1.96 * SE with SE = residual_std / sqrt(Sxx).
pub fn ols_slope_ci(points: &[(f64, f64)]) -> Result<SlopeEstimate> {
    let n = points.len();
    if n < 3 {
        return Err(Error::DegenerateDesign(format!(
            "need at least 3 points, got {n}"
        )));
    }
    let nf = n as f64;
    let mean_a = points.iter().map(|(a, _)| a).sum::<f64>() / nf;
    let mean_s = points.iter().map(|(_, s)| s).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|(a, _)| (a - mean_a) * (a - mean_a)).sum();
    let all_equal = points.iter().all(|(a, _)| *a == points[0].0);
    if sxx <= 0.0 || all_equal {
        return Err(Error::DegenerateDesign(
            "no variance in alpha".into(),
        ));
    }
    let sxy: f64 = points
        .iter()
        .map(|(a, s)| (a - mean_a) * (s - mean_s))
        .sum();
    let beta = sxy / sxx;
    let intercept = mean_s - beta * mean_a;
    let ss_resid: f64 = points
        .iter()
        .map(|(a, s)| {
            let e = s - (intercept + beta * a);
            e * e
        })
        .sum();
    // dof n-2; exactly-linear data gives residual_std = 0 and a zero-width CI
    let residual_std = (ss_resid / (nf - 2.0)).max(0.0).sqrt();
    let se = residual_std / sxx.sqrt();
    Ok(SlopeEstimate {
        beta,
        intercept,
        ci_low: beta - 1.96 * se,
        ci_high: beta + 1.96 * se,
        n,
        residual_std,
    })
}

/// Spearman rank correlation. Ties get average ranks.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DegenerateDesign(format!(
            "rank correlation over {} vs {} values",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateDesign(
            "rank correlation needs at least 2 values".into(),
        ));
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    pearson(&rx, &ry)
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::DegenerateDesign(
            "constant sequence in correlation".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, RandomStream};

    #[test]
    fn exact_line_recovers_slope_with_zero_width_ci() {
        let points: Vec<(f64, f64)> = (0..11)
            .map(|i| {
                let a = -0.5 + 0.1 * i as f64;
                (a, a + 0.5)
            })
            .collect();
        let fit = ols_slope_ci(&points).unwrap();
        assert!((fit.beta - 1.0).abs() <= 1e-12);
        assert!((fit.ci_high - fit.ci_low).abs() <= 1e-12);
        assert!(fit.residual_std <= 1e-12);
        assert!(fit.ci_low <= fit.beta && fit.beta <= fit.ci_high);
    }

    #[test]
    fn constant_scores_give_zero_slope() {
        let points: Vec<(f64, f64)> = (0..11)
            .map(|i| (-0.5 + 0.1 * i as f64, 0.37))
            .collect();
        let fit = ols_slope_ci(&points).unwrap();
        assert!(fit.beta.abs() <= 1e-12);
    }

    #[test]
    fn degenerate_designs_are_rejected() {
        assert!(ols_slope_ci(&[(0.0, 1.0), (0.1, 1.1)]).is_err());
        assert!(ols_slope_ci(&[(0.2, 1.0), (0.2, 1.1), (0.2, 0.9)]).is_err());
    }

    #[test]
    fn noisy_slope_lands_near_truth() {
        let mut s = RandomStream::new(404, domain::SYNTH);
        let points: Vec<(f64, f64)> = (0..1000)
            .map(|_| {
                let a = s.uniform(-0.5, 0.5);
                (a, 0.9 * a + 0.05 * s.normal())
            })
            .collect();
        let fit = ols_slope_ci(&points).unwrap();
        assert!(fit.beta > 0.85 && fit.beta < 0.95, "beta {}", fit.beta);
        assert!(fit.ci_low < 0.9 && 0.9 < fit.ci_high);
    }

    #[test]
    fn spearman_handles_monotone_and_reversed_data() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [0.1, 0.5, 0.7, 2.0];
        assert!((spearman_rho(&xs, &ys).unwrap() - 1.0).abs() <= 1e-12);
        let rev = [2.0, 0.7, 0.5, 0.1];
        assert!((spearman_rho(&xs, &rev).unwrap() + 1.0).abs() <= 1e-12);
    }

    #[test]
    fn spearman_gives_average_ranks_to_ties() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [1.0, 1.0, 2.0, 3.0, 4.0];
        let rho = spearman_rho(&xs, &ys).unwrap();
        assert!(rho > 0.9 && rho <= 1.0, "rho {rho}");
    }
}
