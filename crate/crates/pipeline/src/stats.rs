//! Per-theme corpus counts with row-wise segment-type percentages.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use clarify_core::model::{AnnotationRecord, Contribution, RecordStatus, SegmentType, Theme};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    /// `None` for the total row.
    pub theme: Option<Theme>,
    pub contributions: u64,
    pub units: u64,
    pub segments: BTreeMap<SegmentType, u64>,
    /// Share of each segment type among the row's segments, in percent; all
    /// zero when the row has no segments.
    pub percentages: BTreeMap<SegmentType, f64>,
}

impl StatsRow {
    fn empty(theme: Option<Theme>) -> Self {
        StatsRow {
            theme,
            contributions: 0,
            units: 0,
            segments: SegmentType::ALL.iter().map(|t| (*t, 0)).collect(),
            percentages: SegmentType::ALL.iter().map(|t| (*t, 0.0)).collect(),
        }
    }

    fn add(&mut self, r: &AnnotationRecord) {
        self.contributions += 1;
        self.units += r.units.len() as u64;
        for s in r.segments() {
            *self.segments.entry(s.kind).or_default() += 1;
        }
    }

    fn finish(&mut self) {
        let total: u64 = self.segments.values().sum();
        for (kind, n) in &self.segments {
            let pct = if total == 0 { 0.0 } else { 100.0 * *n as f64 / total as f64 };
            self.percentages.insert(*kind, pct);
        }
    }

    pub fn label(&self) -> &'static str {
        self.theme.map_or("total", Theme::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// One row per theme in fixed order, then the total.
    pub rows: Vec<StatsRow>,
}

impl CorpusStats {
    pub fn total(&self) -> &StatsRow {
        self.rows.last().expect("total row present")
    }

    pub fn row(&self, theme: Theme) -> &StatsRow {
        self.rows.iter().find(|r| r.theme == Some(theme)).expect("every theme has a row")
    }
}

/// Counts completed records by theme. A contribution annotated several times
/// counts once, through the record with the smallest annotator id.
pub fn corpus_stats(records: &[AnnotationRecord], corpus: &[Contribution]) -> Result<CorpusStats> {
    let themes: HashMap<&str, Theme> = corpus.iter().map(|c| (c.id.as_str(), c.theme)).collect();
    let mut chosen: BTreeMap<&str, &AnnotationRecord> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == RecordStatus::Completed) {
        chosen
            .entry(r.contribution_id.as_str())
            .and_modify(|cur| {
                if r.annotator_id < cur.annotator_id {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    let mut rows: Vec<StatsRow> = Theme::ALL.iter().map(|t| StatsRow::empty(Some(*t))).collect();
    let mut total = StatsRow::empty(None);
    for (id, r) in chosen {
        let theme = *themes.get(id).ok_or_else(|| PipelineError::UnknownContribution(id.to_string()))?;
        let i = Theme::ALL.iter().position(|t| *t == theme).expect("theme listed");
        rows[i].add(r);
        total.add(r);
    }
    rows.push(total);
    for r in &mut rows {
        r.finish();
    }
    Ok(CorpusStats { rows })
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<20} {:>13} {:>7} {:>16} {:>16} {:>16}",
            "theme", "contributions", "units", "statements", "solutions", "premises"
        )?;
        for r in &self.rows {
            write!(f, "{:<20} {:>13} {:>7}", r.label(), r.contributions, r.units)?;
            for t in [SegmentType::Statement, SegmentType::Solution, SegmentType::Premise] {
                write!(f, " {:>16}", format!("{} ({:.1}%)", r.segments[&t], r.percentages[&t]))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clarify_core::model::{ArgumentativeUnit, CharSpan, LabeledSegment, Phase};

    fn record(id: &str, annotator: &str, kinds: &[SegmentType]) -> AnnotationRecord {
        let segments = kinds.iter().enumerate().map(|(i, k)| LabeledSegment::new(i * 2, i * 2 + 1, *k)).collect();
        let unit = ArgumentativeUnit::new("au1", vec![CharSpan::new(0, kinds.len() * 2)], segments);
        AnnotationRecord::completed(id, annotator, Phase::Phase1, vec![unit])
    }

    #[test]
    fn empty_dataset_gives_zero_table() {
        let s = corpus_stats(&[], &[]).unwrap();
        assert_eq!(s.rows.len(), 5);
        assert!(s.rows.iter().all(|r| r.contributions == 0 && r.percentages.values().all(|p| *p == 0.0)));
    }

    #[test]
    fn single_solution_is_all_solutions() {
        let corpus = [Contribution::new("c1", Theme::Ecology, "Planter des arbres.")];
        let s = corpus_stats(&[record("c1", "a", &[SegmentType::Solution])], &corpus).unwrap();
        let row = s.row(Theme::Ecology);
        assert_eq!(row.percentages[&SegmentType::Solution], 100.0);
        assert_eq!(s.total().units, 1);
        assert_eq!(s.row(Theme::Taxation).contributions, 0);
    }

    #[test]
    fn doubles_count_once_and_rows_sum_to_hundred() {
        let corpus = [
            Contribution::new("c1", Theme::Taxation, "abcdefgh"),
            Contribution::new("c2", Theme::Taxation, "abcdefgh"),
        ];
        use SegmentType::*;
        let recs = [
            record("c1", "b", &[Solution, Solution, Premise]),
            record("c1", "a", &[Statement]),
            record("c2", "a", &[Solution, Premise, Premise]),
        ];
        let s = corpus_stats(&recs, &corpus).unwrap();
        let t = s.total();
        assert_eq!((t.contributions, t.units), (2, 2));
        assert_eq!(t.segments[&Statement], 1);
        assert_eq!(t.segments[&Premise], 2);
        let sum: f64 = t.percentages.values().sum();
        assert!((sum - 100.0).abs() < 1e-9);
        assert!(s.to_string().contains("taxation"));
    }

    #[test]
    fn unknown_contribution_is_an_error() {
        assert!(corpus_stats(&[record("x", "a", &[SegmentType::Solution])], &[]).is_err());
    }
}
