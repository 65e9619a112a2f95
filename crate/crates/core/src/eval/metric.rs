use serde::{Deserialize, Serialize};

use super::{Event, EventList};

/// Collar tolerances in seconds; the offset collar is
/// `max(offset_collar_s, offset_fraction * reference duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollarParams {
    pub onset_collar_s: f64,
    pub offset_collar_s: f64,
    pub offset_fraction: f64,
}

impl Default for CollarParams {
    fn default() -> Self {
        Self { onset_collar_s: 0.2, offset_collar_s: 0.2, offset_fraction: 0.2 }
    }
}

impl CollarParams {
    pub fn compatible(&self, reference: &Event, estimate: &Event) -> bool {
        let offset_collar = self.offset_collar_s.max(self.offset_fraction * reference.duration());
        (estimate.onset - reference.onset).abs() <= self.onset_collar_s
            && (estimate.offset - reference.offset).abs() <= offset_collar
    }
}

/// One-to-one greedy matching: references in ascending onset order each take the
/// earliest-onset unmatched compatible estimate. Returns the number of matches.
/// Both slices must be sorted by onset.
pub fn match_greedy(reference: &[Event], estimate: &[Event], params: &CollarParams) -> usize {
    let mut used = vec![false; estimate.len()];
    let mut hits = 0;
    for r in reference {
        if let Some(j) = (0..estimate.len()).find(|&j| !used[j] && params.compatible(r, &estimate[j])) {
            used[j] = true;
            hits += 1;
        }
    }
    hits
}

/// Maximum-cardinality matching by augmenting paths; used to cross-check the greedy rule.
pub fn match_optimal(reference: &[Event], estimate: &[Event], params: &CollarParams) -> usize {
    fn augment(
        r: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for &e in &adj[r] {
            if seen[e] {
                continue;
            }
            seen[e] = true;
            if owner[e].is_none_or(|o| augment(o, adj, seen, owner)) {
                owner[e] = Some(r);
                return true;
            }
        }
        false
    }
    let adj: Vec<Vec<usize>> = reference
        .iter()
        .map(|r| (0..estimate.len()).filter(|&j| params.compatible(r, &estimate[j])).collect())
        .collect();
    let mut owner = vec![None; estimate.len()];
    (0..reference.len())
        .filter(|&r| augment(r, &adj, &mut vec![false; estimate.len()], &mut owner))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { tp, fp, fn_, precision, recall, f1 }
    }

    pub fn is_active(&self) -> bool {
        self.tp + self.fp + self.fn_ > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean of F1 over classes with any reference or estimated event.
    pub macro_f1: f64,
    pub active_classes: usize,
}

impl MetricReport {
    pub fn from_classes(per_class: Vec<ClassMetrics>) -> Self {
        let active: Vec<f64> = per_class.iter().filter(|c| c.is_active()).map(|c| c.f1).collect();
        let macro_f1 = if active.is_empty() { 0.0 } else { active.iter().sum::<f64>() / active.len() as f64 };
        Self { active_classes: active.len(), per_class, macro_f1 }
    }

    /// Aligned plain-text table, one row per class plus the macro average.
    pub fn to_table(&self, class_names: Option<&[String]>) -> String {
        let mut s = format!(
            "{:<14} {:>5} {:>5} {:>5} {:>9} {:>9} {:>9}\n",
            "class", "TP", "FP", "FN", "precision", "recall", "F1"
        );
        for (i, c) in self.per_class.iter().enumerate() {
            let name = class_names.and_then(|n| n.get(i).cloned()).unwrap_or_else(|| format!("class_{i}"));
            s.push_str(&format!(
                "{:<14} {:>5} {:>5} {:>5} {:>9.4} {:>9.4} {:>9.4}\n",
                name, c.tp, c.fp, c.fn_, c.precision, c.recall, c.f1
            ));
        }
        s.push_str(&format!("{:<14} {:>47.4}\n", "macro F1", self.macro_f1));
        s
    }
}

/// Sums TP/FP/FN per class over many clips before computing F1.
#[derive(Debug, Clone)]
pub struct CountAccumulator {
    params: CollarParams,
    counts: Vec<(usize, usize, usize)>,
}

impl CountAccumulator {
    pub fn new(n_classes: usize, params: CollarParams) -> Self {
        Self { params, counts: vec![(0, 0, 0); n_classes] }
    }

    pub fn add(&mut self, reference: &EventList, estimate: &EventList) {
        let reference = sorted(reference);
        let estimate = sorted(estimate);
        assert_eq!(reference.n_classes(), self.counts.len(), "class count mismatch");
        assert_eq!(estimate.n_classes(), self.counts.len(), "class count mismatch");
        for (c, acc) in self.counts.iter_mut().enumerate() {
            let (r, e) = (&reference.classes[c], &estimate.classes[c]);
            let tp = match_greedy(r, e, &self.params);
            acc.0 += tp;
            acc.1 += e.len() - tp;
            acc.2 += r.len() - tp;
        }
    }

    pub fn report(&self) -> MetricReport {
        MetricReport::from_classes(
            self.counts.iter().map(|&(tp, fp, fn_)| ClassMetrics::from_counts(tp, fp, fn_)).collect(),
        )
    }
}

fn sorted(list: &EventList) -> std::borrow::Cow<'_, EventList> {
    if list.is_sorted() {
        std::borrow::Cow::Borrowed(list)
    } else {
        log::warn!("event list was not sorted by onset; sorting before matching");
        let mut owned = list.clone();
        owned.sort();
        std::borrow::Cow::Owned(owned)
    }
}

/// Event-based collar F1 for one reference/estimate pair.
pub fn collar_f1(reference: &EventList, estimate: &EventList, params: &CollarParams) -> MetricReport {
    let mut acc = CountAccumulator::new(reference.n_classes(), *params);
    acc.add(reference, estimate);
    acc.report()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(on: f64, off: f64) -> EventList {
        let mut l = EventList::new(1);
        l.push(0, on, off);
        l
    }

    #[test]
    fn rule_cases() {
        let p = CollarParams::default();
        assert_eq!(collar_f1(&single(1.0, 2.0), &single(1.1, 2.1), &p).macro_f1, 1.0);
        let miss = collar_f1(&single(1.0, 2.0), &single(1.3, 2.0), &p);
        assert_eq!(miss.macro_f1, 0.0);
        assert_eq!((miss.per_class[0].fp, miss.per_class[0].fn_), (1, 1));
        assert_eq!(collar_f1(&single(0.0, 5.0), &single(0.1, 5.9), &p).macro_f1, 1.0);
    }

    #[test]
    fn inactive_classes_excluded() {
        let mut r = EventList::new(3);
        r.push(1, 1.0, 2.0);
        let rep = collar_f1(&r, &r, &CollarParams::default());
        assert_eq!(rep.active_classes, 1);
        assert_eq!(rep.macro_f1, 1.0);
        let empty = collar_f1(&EventList::new(2), &EventList::new(2), &CollarParams::default());
        assert_eq!(empty.macro_f1, 0.0);
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let mut r = EventList::new(1);
        r.push(0, 5.0, 6.0);
        r.push(0, 1.0, 2.0);
        let mut e = r.clone();
        e.sort();
        assert_eq!(collar_f1(&r, &e, &CollarParams::default()).macro_f1, 1.0);
    }

    #[test]
    fn greedy_can_be_suboptimal_on_crowded_references() {
        // Two overlapping short references compete for the same estimate.
        let p = CollarParams::default();
        let r = [Event::new(1.0, 2.0), Event::new(1.1, 2.3)];
        let e = [Event::new(0.95, 2.15), Event::new(1.05, 2.05)];
        assert_eq!(match_greedy(&r, &e, &p), 1);
        assert_eq!(match_optimal(&r, &e, &p), 2);
    }

    #[test]
    fn table_has_macro_row() {
        let rep = collar_f1(&single(1.0, 2.0), &single(1.0, 2.0), &CollarParams::default());
        let t = rep.to_table(None);
        assert!(t.contains("macro F1"));
        assert!(t.contains("class_0"));
    }
}
