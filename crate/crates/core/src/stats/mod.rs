//! One-way ANOVA and two-sample t-tests on listener ratings, with p-values
//! from an in-house regularized incomplete beta function.

mod special;

pub use special::{f_sf, ln_beta, ln_gamma, reg_inc_beta, t_two_sided};

use std::io::{Read, Write};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("incomplete beta outside its domain: x={x}, a={a}, b={b}")]
    Domain { x: f64, a: f64, b: f64 },
    #[error("need at least {needed} groups, got {found}")]
    TooFewGroups { needed: usize, found: usize },
    #[error("group `{0}` needs at least two ratings")]
    SmallGroup(String),
    #[error("rating {rating} for `{model}` outside {lo}..={hi}")]
    OutOfScale { model: String, rating: f64, lo: f64, hi: f64 },
    #[error("evaluation needs exactly 3 groups, got {0}")]
    NotThreeGroups(usize),
    #[error("ratings csv: {0}")]
    Csv(String),
}

pub const SCALE: (f64, f64) = (1.0, 5.0);

#[derive(Debug, Clone, PartialEq)]
pub struct RatingsTable {
    pub groups: Vec<(String, Vec<f64>)>,
}

impl RatingsTable {
    pub fn new(groups: Vec<(String, Vec<f64>)>) -> Self {
        Self { groups }
    }

    /// Rejects ratings outside `lo..=hi` or non-finite.
    pub fn check_scale(&self, lo: f64, hi: f64) -> Result<(), StatsError> {
        for (name, r) in &self.groups {
            if let Some(&bad) = r.iter().find(|&&v| !(lo..=hi).contains(&v)) {
                return Err(StatsError::OutOfScale { model: name.clone(), rating: bad, lo, hi });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TVariant {
    Pooled,
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    Anova,
    T(TVariant),
}

/// Cases where the statistic is not finite and the p-value is set by rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degenerate {
    /// No spread within groups but the means differ: p = 0.
    ZeroWithinVariance,
    /// Every value identical: p = 1.
    AllIdentical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub df: (f64, Option<f64>),
    pub p_value: f64,
    pub degenerate: Option<Degenerate>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sum_sq_dev(x: &[f64], m: f64) -> f64 {
    x.iter().map(|v| (v - m) * (v - m)).sum()
}

pub fn one_way_anova(table: &RatingsTable) -> Result<TestResult, StatsError> {
    let k = table.groups.len();
    if k < 2 {
        return Err(StatsError::TooFewGroups { needed: 2, found: k });
    }
    if let Some((name, _)) = table.groups.iter().find(|(_, r)| r.len() < 2) {
        return Err(StatsError::SmallGroup(name.clone()));
    }
    let n: usize = table.groups.iter().map(|(_, r)| r.len()).sum();
    let grand = table.groups.iter().flat_map(|(_, r)| r).sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for (_, r) in &table.groups {
        let m = mean(r);
        ssb += r.len() as f64 * (m - grand) * (m - grand);
        ssw += sum_sq_dev(r, m);
    }
    let (d1, d2) = ((k - 1) as f64, (n - k) as f64);
    let kind = TestKind::Anova;
    if ssw == 0.0 {
        let (statistic, p_value, degenerate) =
            if ssb == 0.0 { (f64::NAN, 1.0, Degenerate::AllIdentical) } else { (f64::INFINITY, 0.0, Degenerate::ZeroWithinVariance) };
        return Ok(TestResult { kind, statistic, df: (d1, Some(d2)), p_value, degenerate: Some(degenerate) });
    }
    let f = (ssb / d1) / (ssw / d2);
    Ok(TestResult { kind, statistic: f, df: (d1, Some(d2)), p_value: f_sf(f, d1, d2)?, degenerate: None })
}

/// Two-sided unpaired two-sample t-test of `a` against `b`.
pub fn t_test(a: &[f64], b: &[f64], variant: TVariant) -> Result<TestResult, StatsError> {
    for (name, x) in [("a", a), ("b", b)] {
        if x.len() < 2 {
            return Err(StatsError::SmallGroup(name.into()));
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sum_sq_dev(a, ma) / (na - 1.0), sum_sq_dev(b, mb) / (nb - 1.0));
    let kind = TestKind::T(variant);
    let (se2, df) = match variant {
        TVariant::Pooled => {
            let df = na + nb - 2.0;
            let sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            (sp2 * (1.0 / na + 1.0 / nb), df)
        }
        TVariant::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let df = (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            (qa + qb, df)
        }
    };
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        let result = if ma == mb {
            (0.0, 1.0, Degenerate::AllIdentical)
        } else {
            ((ma - mb).signum() * f64::INFINITY, 0.0, Degenerate::ZeroWithinVariance)
        };
        return Ok(TestResult { kind, statistic: result.0, df: (df, None), p_value: result.1, degenerate: Some(result.2) });
    }
    let t = (ma - mb) / se2.sqrt();
    Ok(TestResult { kind, statistic: t, df: (df, None), p_value: t_two_sided(t, df)?, degenerate: None })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    /// Mean squared deviation from the group mean, used as the error bar.
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub groups: Vec<GroupSummary>,
    pub anova: TestResult,
    /// Pairwise t-tests `(i, j, result)` for `i < j`.
    pub pairs: Vec<(usize, usize, TestResult)>,
}

pub fn summarize(name: &str, ratings: &[f64]) -> GroupSummary {
    let m = mean(ratings);
    GroupSummary { name: name.into(), n: ratings.len(), mean: m, mse: sum_sq_dev(ratings, m) / ratings.len() as f64 }
}

/// One ANOVA over the three models and the three pairwise t-tests.
pub fn evaluate_models(table: &RatingsTable, variant: TVariant) -> Result<EvaluationReport, StatsError> {
    if table.groups.len() != 3 {
        return Err(StatsError::NotThreeGroups(table.groups.len()));
    }
    let anova = one_way_anova(table)?;
    let mut pairs = Vec::new();
    for i in 0..3 {
        for j in i + 1..3 {
            pairs.push((i, j, t_test(&table.groups[i].1, &table.groups[j].1, variant)?));
        }
    }
    let groups = table.groups.iter().map(|(n, r)| summarize(n, r)).collect();
    Ok(EvaluationReport { groups, anova, pairs })
}

fn csv_err(e: impl std::fmt::Display) -> StatsError {
    StatsError::Csv(e.to_string())
}

/// Reads `sample_id,model_name,rating`; groups keep first-appearance order.
pub fn read_ratings_csv<R: Read>(r: R) -> Result<RatingsTable, StatsError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = reader.headers().map_err(csv_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| StatsError::Csv(format!("missing column `{name}`")));
    let (model_col, rating_col) = (col("model_name")?, col("rating")?);
    col("sample_id")?;
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let model = rec.get(model_col).unwrap_or_default().to_string();
        let rating: f64 = rec
            .get(rating_col)
            .unwrap_or_default()
            .parse()
            .map_err(|_| StatsError::Csv(format!("row {}: rating is not a number", line + 2)))?;
        match groups.iter_mut().find(|(n, _)| *n == model) {
            Some((_, v)) => v.push(rating),
            None => groups.push((model, vec![rating])),
        }
    }
    let table = RatingsTable::new(groups);
    table.check_scale(SCALE.0, SCALE.1)?;
    Ok(table)
}

pub fn write_ratings_csv<W: Write>(w: W, rows: &[(String, String, f64)]) -> Result<(), StatsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sample_id", "model_name", "rating"]).map_err(csv_err)?;
    for (id, model, rating) in rows {
        out.write_record([id.clone(), model.clone(), rating.to_string()]).map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}

/// `test,group_a,group_b,statistic,df1,df2,p_value,degenerate` followed by
/// nothing else; group summaries go through [`write_summary_csv`].
pub fn write_report_csv<W: Write>(w: W, report: &EvaluationReport) -> Result<(), StatsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["test", "group_a", "group_b", "statistic", "df1", "df2", "p_value", "degenerate"]).map_err(csv_err)?;
    let fmt_deg = |d: Option<Degenerate>| match d {
        None => String::new(),
        Some(Degenerate::ZeroWithinVariance) => "zero_within_variance".into(),
        Some(Degenerate::AllIdentical) => "all_identical".into(),
    };
    let a = &report.anova;
    out.write_record([
        "anova".to_string(),
        String::new(),
        String::new(),
        a.statistic.to_string(),
        a.df.0.to_string(),
        a.df.1.map(|v| v.to_string()).unwrap_or_default(),
        a.p_value.to_string(),
        fmt_deg(a.degenerate),
    ])
    .map_err(csv_err)?;
    for (i, j, t) in &report.pairs {
        out.write_record([
            "t".to_string(),
            report.groups[*i].name.clone(),
            report.groups[*j].name.clone(),
            t.statistic.to_string(),
            t.df.0.to_string(),
            String::new(),
            t.p_value.to_string(),
            fmt_deg(t.degenerate),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}

/// `model_name,n,mean,mse`.
pub fn write_summary_csv<W: Write>(w: W, groups: &[GroupSummary]) -> Result<(), StatsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model_name", "n", "mean", "mse"]).map_err(csv_err)?;
    for g in groups {
        out.write_record([g.name.clone(), g.n.to_string(), g.mean.to_string(), g.mse.to_string()]).map_err(csv_err)?;
    }
    out.flush().map_err(csv_err)
}
