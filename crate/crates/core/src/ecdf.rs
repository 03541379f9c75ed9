//! Sorted, optionally labeled p-value samples and their empirical CDFs.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// P-values sorted ascending, with truth labels carried along when known.
///
/// Counts are exact integers; ratios are formed only by the accessors.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pvalues: Vec<f64>,
    labels: Option<Vec<bool>>,
    original_index: Vec<usize>,
    // null_prefix[k] = number of nulls among the k smallest p-values.
    null_prefix: Vec<usize>,
}

impl LabeledSample {
    /// Stable sort by p-value; ties keep input order.
    pub fn from_raw(pvalues: &[f64], is_null: &[bool]) -> Result<Self> {
        if pvalues.len() != is_null.len() {
            return Err(Error::Validation(format!(
                "{} p-values but {} labels",
                pvalues.len(),
                is_null.len()
            )));
        }
        Self::build(pvalues, Some(is_null))
    }

    pub fn unlabeled(pvalues: &[f64]) -> Result<Self> {
        Self::build(pvalues, None)
    }

    fn build(pvalues: &[f64], labels: Option<&[bool]>) -> Result<Self> {
        if let Some((i, p)) = pvalues
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::Validation(format!("p-value {p} at position {i} is outside [0,1]")));
        }
        let mut order: Vec<usize> = (0..pvalues.len()).collect();
        order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
        let sorted = order.iter().map(|&i| pvalues[i]).collect();
        let labels = labels.map(|l| order.iter().map(|&i| l[i]).collect::<Vec<_>>());
        Ok(Self::assemble(sorted, labels, order))
    }

    /// Builds from (p-value, is_null) pairs already sorted ascending.
    pub(crate) fn from_sorted_pairs(pairs: &[(f64, bool)]) -> Self {
        debug_assert!(pairs.windows(2).all(|w| w[0].0 <= w[1].0));
        let pvalues = pairs.iter().map(|p| p.0).collect();
        let labels = pairs.iter().map(|p| p.1).collect();
        Self::assemble(pvalues, Some(labels), (0..pairs.len()).collect())
    }

    fn assemble(pvalues: Vec<f64>, labels: Option<Vec<bool>>, original_index: Vec<usize>) -> Self {
        let null_prefix = match &labels {
            Some(l) => {
                let mut acc = Vec::with_capacity(l.len() + 1);
                acc.push(0);
                let mut n = 0;
                for &is_null in l {
                    n += usize::from(is_null);
                    acc.push(n);
                }
                acc
            }
            None => Vec::new(),
        };
        LabeledSample {
            pvalues,
            labels,
            original_index,
            null_prefix,
        }
    }

    pub fn m(&self) -> usize {
        self.pvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pvalues.is_empty()
    }

    /// Number of true nulls, if labels are known.
    pub fn m0(&self) -> Option<usize> {
        self.null_prefix.last().copied()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    /// Sorted p-values.
    pub fn pvalues(&self) -> &[f64] {
        &self.pvalues
    }

    /// Labels in sorted order.
    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    /// Input position of each sorted entry.
    pub fn original_indices(&self) -> &[usize] {
        &self.original_index
    }

    /// R(t) = #{i: Pᵢ ≤ t}.
    pub fn count_le(&self, t: f64) -> usize {
        self.pvalues.partition_point(|&p| p <= t)
    }

    /// V(t) = #{null i: Pᵢ ≤ t}.
    pub fn null_count_le(&self, t: f64) -> Option<usize> {
        self.labels.as_ref()?;
        Some(self.null_prefix[self.count_le(t)])
    }

    /// Ĝₘ(t). Returns 0 for an empty sample.
    pub fn ecdf(&self, t: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.count_le(t) as f64 / self.m() as f64
    }

    /// Ĝ₀,ₘ(t).
    pub fn ecdf0(&self, t: f64) -> Result<f64> {
        let m0 = self.m0().ok_or(Error::UndefinedDenominator("sample has no labels"))?;
        if m0 == 0 {
            return Err(Error::UndefinedDenominator("no true nulls (m0 = 0)"));
        }
        Ok(self.null_prefix[self.count_le(t)] as f64 / m0 as f64)
    }

    /// Ĝ₁,ₘ(t).
    pub fn ecdf1(&self, t: f64) -> Result<f64> {
        let m0 = self.m0().ok_or(Error::UndefinedDenominator("sample has no labels"))?;
        let m1 = self.m() - m0;
        if m1 == 0 {
            return Err(Error::UndefinedDenominator("no alternatives (m0 = m)"));
        }
        let r = self.count_le(t);
        Ok((r - self.null_prefix[r]) as f64 / m1 as f64)
    }

    /// V/(R ∨ 1) at threshold t.
    pub fn fdp_at(&self, t: f64) -> Result<f64> {
        let labels_missing = Error::UndefinedDenominator("sample has no labels");
        let r = self.count_le(t);
        let v = self.null_count_le(t).ok_or(labels_missing)?;
        Ok(v as f64 / r.max(1) as f64)
    }

    /// Fraction of alternatives not rejected at threshold t.
    pub fn fnp_at(&self, t: f64) -> Result<f64> {
        let m0 = self.m0().ok_or(Error::UndefinedDenominator("sample has no labels"))?;
        let m1 = self.m() - m0;
        if m1 == 0 {
            return Err(Error::UndefinedDenominator("no alternatives (m0 = m)"));
        }
        let r = self.count_le(t);
        let true_rejections = r - self.null_prefix[r];
        Ok((m1 - true_rejections) as f64 / m1 as f64)
    }

    /// Input positions of hypotheses with Pᵢ ≤ t, ascending.
    pub fn rejected_indices(&self, t: f64) -> Vec<usize> {
        let mut idx = self.original_index[..self.count_le(t)].to_vec();
        idx.sort_unstable();
        idx
    }

    /// Reads CSV with header `pvalue` and optional `is_null` column.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let p_col = find("pvalue")
            .ok_or_else(|| Error::Validation("CSV header must contain a `pvalue` column".into()))?;
        let null_col = find("is_null");
        let mut pvalues = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = line + 2;
            let field = |c: usize| rec.get(c).unwrap_or("");
            let p: f64 = field(p_col)
                .parse()
                .map_err(|_| Error::Validation(format!("row {row}: bad pvalue `{}`", field(p_col))))?;
            pvalues.push(p);
            if let Some(c) = null_col {
                labels.push(parse_bool(field(c)).ok_or_else(|| {
                    Error::Validation(format!("row {row}: bad is_null `{}`", field(c)))
                })?);
            }
        }
        match null_col {
            Some(_) => Self::from_raw(&pvalues, &labels),
            None => Self::unlabeled(&pvalues),
        }
    }

    /// Writes `pvalue,is_null` rows in sorted order (labels omitted if unknown).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        match &self.labels {
            Some(labels) => {
                w.write_record(["pvalue", "is_null"])?;
                for (p, l) in self.pvalues.iter().zip(labels) {
                    w.write_record([format!("{p:.16e}"), l.to_string()])?;
                }
            }
            None => {
                w.write_record(["pvalue"])?;
                for p in &self.pvalues {
                    w.write_record([format!("{p:.16e}")])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}
