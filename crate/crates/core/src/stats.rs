//! Small-sample statistics used by the evaluators.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

/// Sample mean and standard error of the mean (n−1 denominator).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WelchTest {
    pub mean_difference: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-sided Welch two-sample t-test of `a` against `b`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> WelchTest {
    let (ma, _) = mean_and_stderr(a);
    let (mb, _) = mean_and_stderr(b);
    let diff = ma - mb;
    let va = sample_variance(a) / a.len().max(1) as f64;
    let vb = sample_variance(b) / b.len().max(1) as f64;
    let se2 = va + vb;
    if se2 <= 0.0 {
        let p = if diff == 0.0 { 1.0 } else { 0.0 };
        let t = if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY };
        return WelchTest { mean_difference: diff, t, df: f64::NAN, p_value: p };
    }
    let t = diff / se2.sqrt();
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let df = se2.powi(2) / (va.powi(2) / (na - 1.0).max(1.0) + vb.powi(2) / (nb - 1.0).max(1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    WelchTest { mean_difference: diff, t, df, p_value }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnovaResult {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
}

/// One-way ANOVA across groups.
pub fn one_way_anova(groups: &[&[f64]]) -> AnovaResult {
    let k = groups.len();
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n.max(1) as f64;
    let mut between = 0.0;
    let mut within = 0.0;
    for g in groups {
        if g.is_empty() {
            continue;
        }
        let m = g.iter().sum::<f64>() / g.len() as f64;
        between += g.len() as f64 * (m - grand).powi(2);
        within += g.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    let df_between = k.saturating_sub(1);
    let df_within = n.saturating_sub(k);
    if df_between == 0 || df_within == 0 {
        return AnovaResult { f: f64::NAN, df_between, df_within, p_value: 1.0 };
    }
    let msb = between / df_between as f64;
    let msw = within / df_within as f64;
    if msw <= 0.0 {
        let (f, p) = if msb == 0.0 { (0.0, 1.0) } else { (f64::INFINITY, 0.0) };
        return AnovaResult { f, df_between, df_within, p_value: p };
    }
    let f = msb / msw;
    let dist = FisherSnedecor::new(df_between as f64, df_within as f64).expect("valid df");
    AnovaResult { f, df_between, df_within, p_value: dist.sf(f) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stderr_of_known_sample() {
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // var = 5/3, se = sqrt(5/12)
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn welch_matches_reference_values() {
        // scipy.stats.ttest_ind(a, b, equal_var=False)
        let a = [19.8, 20.4, 19.6, 17.8, 18.5, 18.9, 18.3, 18.9, 19.5, 22.0];
        let b = [28.2, 26.6, 20.1, 23.3, 25.2, 22.1, 17.7, 27.6, 20.6, 13.7, 23.2, 17.5, 20.6, 18.0, 23.9, 21.6, 24.3, 20.4, 23.9, 13.3];
        let w = welch_t_test(&a, &b);
        assert!((w.t - (-2.225512039969852)).abs() < 1e-9, "t = {}", w.t);
        assert!((w.df - 24.524634944257343).abs() < 1e-9, "df = {}", w.df);
        assert!((w.p_value - 0.035484530830010325).abs() < 1e-9, "p = {}", w.p_value);
    }

    #[test]
    fn anova_of_two_groups_is_squared_pooled_t() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 9.0];
        let r = one_way_anova(&[&a, &b]);
        // pooled t: diff = -2.75, sp^2 = (5/3 + 8.9167)/2
        let sp2 = (5.0 / 3.0 + 26.75 / 3.0) / 2.0;
        let t = -2.75 / (sp2 * 0.5f64).sqrt();
        assert!((r.f - t * t).abs() < 1e-12);
        assert_eq!((r.df_between, r.df_within), (1, 6));
        // scipy.stats.f_oneway
        assert!((r.p_value - 0.1418603602858506).abs() < 1e-9);
    }

    #[test]
    fn identical_samples_are_not_significant() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(welch_t_test(&a, &a).p_value, 1.0);
        let z = [0.0; 5];
        assert_eq!(welch_t_test(&z, &z).p_value, 1.0);
        assert_eq!(one_way_anova(&[&z, &z]).p_value, 1.0);
    }
}
