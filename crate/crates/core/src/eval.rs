//! Detection metrics, seed aggregation, and Welch's t-test.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scores::ScoreSet;

/// Default true positive rate for [`fpr_at_tpr`].
pub const DEFAULT_TPR: f64 = 0.95;

fn check_sides<T>(s: &ScoreSet<T>) -> Result<()> {
    if s.id_scores.is_empty() || s.ood_scores.is_empty() {
        return Err(Error::InvalidInput(
            "both in-distribution and OOD scores are required".into(),
        ));
    }
    Ok(())
}

fn sorted_f64<T: Scalar>(xs: &[T]) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = xs.iter().map(|x| x.as_f64()).collect();
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("score set".into()));
    }
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `P(id > ood) + P(id = ood)/2` over all pairs.
pub fn auroc<T: Scalar>(scores: &ScoreSet<T>) -> Result<f64> {
    check_sides(scores)?;
    let ood = sorted_f64(&scores.ood_scores)?;
    // twice the Mann-Whitney statistic, kept integral
    let mut twice: u128 = 0;
    for s in &scores.id_scores {
        let s = s.as_f64();
        if s.is_nan() {
            return Err(Error::NonFinite("score set".into()));
        }
        let below = ood.partition_point(|&o| o < s);
        let not_above = ood.partition_point(|&o| o <= s);
        twice += 2 * below as u128 + (not_above - below) as u128;
    }
    let pairs = scores.id_scores.len() as f64 * scores.ood_scores.len() as f64;
    Ok(twice as f64 / 2.0 / pairs)
}

/// Fraction of OOD scores at or above the threshold that keeps `tpr` of the
/// in-distribution scores: the `⌈tpr·N⌉`-th largest ID score.
pub fn fpr_at_tpr<T: Scalar>(scores: &ScoreSet<T>, tpr: f64) -> Result<f64> {
    check_sides(scores)?;
    if !(tpr > 0.0 && tpr <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "tpr must be in (0, 1], got {tpr}"
        )));
    }
    let id = sorted_f64(&scores.id_scores)?;
    let n = id.len();
    // smallest count k with k / n >= tpr, found without trusting ceil(tpr * n)
    let mut k = ((tpr * n as f64).ceil() as usize).clamp(1, n);
    while k > 1 && (k - 1) as f64 / n as f64 >= tpr {
        k -= 1;
    }
    while k < n && (k as f64 / n as f64) < tpr {
        k += 1;
    }
    let threshold = id[n - k];
    let ood = sorted_f64(&scores.ood_scores)?;
    let at_or_above = ood.len() - ood.partition_point(|&o| o < threshold);
    Ok(at_or_above as f64 / ood.len() as f64)
}

/// Threshold-free summary of one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub auroc: f64,
    pub fpr_at_95tpr: f64,
    pub chosen_k: usize,
}

impl EvalReport {
    pub fn from_scores<T: Scalar>(scores: &ScoreSet<T>, chosen_k: usize) -> Result<Self> {
        Ok(Self {
            auroc: auroc(scores)?,
            fpr_at_95tpr: fpr_at_tpr(scores, DEFAULT_TPR)?,
            chosen_k,
        })
    }

    /// `auroc=… fpr95=… k=…`
    pub fn summary_line(&self) -> String {
        format!(
            "auroc={:.6} fpr95={:.6} k={}",
            self.auroc, self.fpr_at_95tpr, self.chosen_k
        )
    }

    /// One `key=value` pair per line.
    pub fn key_values(&self) -> String {
        format!(
            "auroc={}\nfpr95={}\nk={}\n",
            self.auroc, self.fpr_at_95tpr, self.chosen_k
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4}±{:.4}", self.mean, self.std)
    }
}

/// Sample mean and standard deviation (`n - 1` denominator, zero for `n = 1`).
pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(Error::InvalidInput("no values to aggregate".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(MeanStd { mean, std })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedSummary {
    pub auroc: MeanStd,
    pub fpr_at_95tpr: MeanStd,
    pub seeds: usize,
}

/// Mean and standard deviation of each metric across per-seed reports.
pub fn aggregate(reports: &[EvalReport]) -> Result<SeedSummary> {
    let a: Vec<f64> = reports.iter().map(|r| r.auroc).collect();
    let f: Vec<f64> = reports.iter().map(|r| r.fpr_at_95tpr).collect();
    Ok(SeedSummary {
        auroc: mean_std(&a)?,
        fpr_at_95tpr: mean_std(&f)?,
        seeds: reports.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
    /// Both samples have zero variance.
    pub degenerate: bool,
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of
/// freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput(
            "each sample needs at least two values".into(),
        ));
    }
    let (sa, sb) = (mean_std(a)?, mean_std(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sa.std * sa.std / na, sb.std * sb.std / nb);
    let se2 = va + vb;
    let diff = sa.mean - sb.mean;
    if se2 == 0.0 {
        let (t, p) = if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        };
        return Ok(WelchTest {
            t,
            df: na + nb - 2.0,
            p,
            degenerate: true,
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(WelchTest {
        t,
        df,
        p: student_t_two_sided(t, df),
        degenerate: false,
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// `ln Γ(x)` for `x > 0`, Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(id: &[f64], ood: &[f64]) -> ScoreSet<f64> {
        ScoreSet::new(id.to_vec(), ood.to_vec())
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&set(&[0.9, 0.8], &[0.1, 0.2])).unwrap(), 1.0);
        assert_eq!(auroc(&set(&[1.0, 3.0], &[2.0, 4.0])).unwrap(), 0.25);
        assert_eq!(
            auroc(&set(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0])).unwrap(),
            0.5
        );
        assert!(auroc(&set(&[], &[1.0])).is_err());
    }

    #[test]
    fn fpr_examples() {
        let id: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(
            fpr_at_tpr(&set(&id, &[0.0, 1.5, 3.0, 5.0]), 0.95).unwrap(),
            0.5
        );
        assert_eq!(
            fpr_at_tpr(&set(&[5.0, 6.0], &[1.0, 2.0]), 0.95).unwrap(),
            0.0
        );
        assert_eq!(
            fpr_at_tpr(&set(&[1.0, 2.0], &[3.0, 4.0]), 0.95).unwrap(),
            1.0
        );
        assert!(fpr_at_tpr(&set(&[1.0], &[1.0]), 0.0).is_err());
        assert!(fpr_at_tpr(&set(&[1.0], &[]), 0.5).is_err());
    }

    #[test]
    fn welch_examples() {
        let w = welch_t_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((w.t + 3.674).abs() < 1e-3);
        assert!((w.df - 4.0).abs() < 1e-12);
        assert!((w.p - 0.021).abs() < 1e-3);
        let swapped = welch_t_test(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(swapped.t, -w.t);
        assert_eq!(swapped.p, w.p);
        let same = welch_t_test(&[1.0, 2.5, 3.0], &[1.0, 2.5, 3.0]).unwrap();
        assert_eq!((same.t, same.p), (0.0, 1.0));
        let flat = welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).unwrap();
        assert!(flat.degenerate && flat.p == 0.0);
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let r = |a: f64| EvalReport {
            auroc: a,
            fpr_at_95tpr: 1.0 - a,
            chosen_k: 1,
        };
        let s = aggregate(&[r(0.7)]).unwrap();
        assert_eq!(s.auroc.std, 0.0);
        let s = mean_std(&[10.0, 20.0]).unwrap();
        assert_eq!(s.mean, 15.0);
        assert!((s.std - 7.0711).abs() < 1e-4);
        let a = aggregate(&[r(0.1), r(0.5), r(0.9)]).unwrap();
        let b = aggregate(&[r(0.9), r(0.1), r(0.5)]).unwrap();
        assert!((a.auroc.mean - b.auroc.mean).abs() < 1e-15);
        assert!((a.auroc.std - b.auroc.std).abs() < 1e-15);
    }

    #[test]
    fn gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn report_formatting() {
        let r = EvalReport {
            auroc: 0.5,
            fpr_at_95tpr: 0.25,
            chosen_k: 5,
        };
        assert_eq!(r.summary_line(), "auroc=0.500000 fpr95=0.250000 k=5");
        assert_eq!(r.key_values(), "auroc=0.5\nfpr95=0.25\nk=5\n");
    }
}
