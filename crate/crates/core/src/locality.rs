//! Alert locality relative to the vulnerable code.
//!
//! Project level asks whether alerts land in (or near) the vulnerable files;
//! file level asks whether alerts inside a vulnerable file overlap the
//! vulnerable lines. Every metric is a ratio of counts, so the functions are
//! generic over [`Scalar`] and can be evaluated exactly.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::corpus::FixDelta;
use crate::num::Scalar;
use crate::path::components;
use crate::sarifread::AlertSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocalityError {
    #[error("fix delta has no files")]
    EmptyFixDelta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalityReport<T> {
    pub cve_id: String,
    pub version_id: String,
    pub hard_project: Option<T>,
    pub soft_project: Option<T>,
    pub hard_file: Option<T>,
    pub soft_file: Option<T>,
    pub total_alerts: usize,
    pub alerts_in_vulnerable_files: usize,
}

impl<T: Scalar> LocalityReport<T> {
    pub fn compute(vul_alerts: &AlertSet, fix_delta: &FixDelta) -> Self {
        let has_files = !fix_delta.files().is_empty();
        Self {
            cve_id: vul_alerts.cve_id.clone(),
            version_id: vul_alerts.version_id.clone(),
            hard_project: hard_project_locality(vul_alerts, fix_delta),
            soft_project: if has_files { soft_project_locality(vul_alerts, fix_delta).ok().flatten() } else { None },
            hard_file: hard_file_locality(vul_alerts, fix_delta),
            soft_file: if has_files { soft_file_locality(vul_alerts, fix_delta).ok() } else { None },
            total_alerts: vul_alerts.alerts.len(),
            alerts_in_vulnerable_files: in_vulnerable_files(vul_alerts, fix_delta),
        }
    }

    /// The same report in another scalar type.
    pub fn to_f64(&self) -> LocalityReport<f64> {
        let f = |v: &Option<T>| v.as_ref().map(Scalar::to_f64);
        LocalityReport {
            cve_id: self.cve_id.clone(),
            version_id: self.version_id.clone(),
            hard_project: f(&self.hard_project),
            soft_project: f(&self.soft_project),
            hard_file: f(&self.hard_file),
            soft_file: f(&self.soft_file),
            total_alerts: self.total_alerts,
            alerts_in_vulnerable_files: self.alerts_in_vulnerable_files,
        }
    }
}

fn depth(path: &str) -> usize {
    components(path).count()
}

/// Depth of the lowest common ancestor over the larger of the two depths.
/// The repository root has depth 0 and a file is its own ancestor.
pub fn tree_similarity<T: Scalar>(p: &str, q: &str) -> T {
    let lca = components(p).zip(components(q)).take_while(|(a, b)| a == b).count();
    let deepest = depth(p).max(depth(q));
    if deepest == 0 {
        return T::one();
    }
    T::ratio(lca, deepest)
}

fn in_vulnerable_files(alerts: &AlertSet, delta: &FixDelta) -> usize {
    alerts.alerts.iter().filter(|a| delta.contains_file(&a.file)).count()
}

pub fn hard_project_locality<T: Scalar>(vul_alerts: &AlertSet, fix_delta: &FixDelta) -> Option<T> {
    let total = vul_alerts.alerts.len();
    (total > 0).then(|| T::ratio(in_vulnerable_files(vul_alerts, fix_delta), total))
}

pub fn soft_project_locality<T: Scalar>(
    vul_alerts: &AlertSet,
    fix_delta: &FixDelta,
) -> Result<Option<T>, LocalityError> {
    if fix_delta.files().is_empty() {
        return Err(LocalityError::EmptyFixDelta);
    }
    let total = vul_alerts.alerts.len();
    if total == 0 {
        return Ok(None);
    }
    let mut sum = T::zero();
    for alert in &vul_alerts.alerts {
        let mut best = T::zero();
        for file in fix_delta.files() {
            let sim: T = tree_similarity(&alert.file, file);
            if sim > best {
                best = sim;
            }
        }
        sum = sum + best;
    }
    Ok(Some(sum / T::from_count(total)))
}

pub fn hard_file_locality<T: Scalar>(vul_alerts: &AlertSet, fix_delta: &FixDelta) -> Option<T> {
    let in_file: Vec<_> = vul_alerts.alerts.iter().filter(|a| fix_delta.contains_file(&a.file)).collect();
    if in_file.is_empty() {
        return None;
    }
    let overlapping = in_file.iter().filter(|a| fix_delta.lines_in(&a.file).any(|l| a.lines.contains(l))).count();
    Some(T::ratio(overlapping, in_file.len()))
}

/// Mean over vulnerable files of the Jaccard index between the file's
/// vulnerable lines and the lines covered by alerts in that file.
pub fn soft_file_locality<T: Scalar>(vul_alerts: &AlertSet, fix_delta: &FixDelta) -> Result<T, LocalityError> {
    let files = fix_delta.files();
    if files.is_empty() {
        return Err(LocalityError::EmptyFixDelta);
    }
    let mut sum = T::zero();
    for file in files {
        let vulnerable: BTreeSet<u32> = fix_delta.lines_in(file).collect();
        let covered: BTreeSet<u32> =
            vul_alerts.alerts.iter().filter(|a| &a.file == file).flat_map(|a| a.lines.lines()).collect();
        let union = vulnerable.union(&covered).count();
        if union > 0 {
            sum = sum + T::ratio(vulnerable.intersection(&covered).count(), union);
        }
    }
    Ok(sum / T::from_count(files.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CommitKind, Location, Suite};
    use crate::sarifread::{Alert, LineRange, Precision};
    use num_rational::Rational64;

    fn alert(file: &str, start: u32, end: u32) -> Alert {
        Alert {
            query: "q".into(),
            file: file.into(),
            lines: LineRange::new(start, end),
            fingerprints: Default::default(),
            version_id: "v".into(),
            precision: Precision::Unknown,
        }
    }

    fn alerts(list: Vec<Alert>) -> AlertSet {
        AlertSet {
            cve_id: "c".into(),
            version_id: "v".into(),
            commit_kind: CommitKind::Vulnerable,
            suite: Suite::Default,
            alerts: list,
            skipped: 0,
        }
    }

    fn delta(file: &str, lines: &[u32]) -> FixDelta {
        FixDelta::new([file.to_owned()].into(), lines.iter().map(|&l| Location::new(file, l)).collect()).unwrap()
    }

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(tree_similarity::<Rational64>("d1/d2/vuln.c", "d1/d2/vuln.c"), r(1, 1));
        assert_eq!(tree_similarity::<Rational64>("d1/d2/vuln.c", "d1/d2/other.c"), r(2, 3));
        assert_eq!(tree_similarity::<Rational64>("d1/d2/vuln.c", "d1/other.c"), r(1, 3));
        assert_eq!(tree_similarity::<Rational64>("a.txt", "b.txt"), r(0, 1));
        assert_eq!(tree_similarity::<Rational64>("x/a", "y/a"), r(0, 1));
    }

    #[test]
    fn hard_project_counts_alerts_in_vulnerable_files() {
        let d = delta("d1/d2/vuln.c", &[10]);
        let set = alerts(vec![
            alert("d1/d2/vuln.c", 1, 1),
            alert("d1/d2/vuln.c", 2, 2),
            alert("d1/d2/vuln.c", 3, 3),
            alert("d1/d2/other.c", 1, 1),
            alert("d1/x.c", 1, 1),
            alert("d1/y.c", 1, 1),
        ]);
        assert_eq!(hard_project_locality::<Rational64>(&set, &d), Some(r(3, 6)));
        assert_eq!(soft_project_locality::<Rational64>(&set, &d), Ok(Some(r(13, 18))));
        assert_eq!(hard_project_locality::<Rational64>(&alerts(vec![]), &d), None);
        let all_in = alerts(vec![alert("d1/d2/vuln.c", 1, 1)]);
        assert_eq!(hard_project_locality::<Rational64>(&all_in, &d), Some(r(1, 1)));
        assert_eq!(soft_project_locality::<Rational64>(&all_in, &d), Ok(Some(r(1, 1))));
    }

    #[test]
    fn soft_project_takes_closest_vulnerable_file() {
        let d = FixDelta::new(
            ["a/b/c.c".to_owned(), "x/y.c".to_owned()].into(),
            [Location::new("a/b/c.c", 1), Location::new("x/y.c", 1)].into(),
        )
        .unwrap();
        let set = alerts(vec![alert("x/z.c", 1, 1)]);
        assert_eq!(soft_project_locality::<Rational64>(&set, &d), Ok(Some(r(1, 2))));
    }

    #[test]
    fn empty_fix_delta_is_an_error_for_soft_metrics() {
        let set = alerts(vec![alert("a", 1, 1)]);
        assert_eq!(soft_project_locality::<f64>(&set, &FixDelta::default()), Err(LocalityError::EmptyFixDelta));
        assert_eq!(soft_file_locality::<f64>(&set, &FixDelta::default()), Err(LocalityError::EmptyFixDelta));
        let report = LocalityReport::<f64>::compute(&set, &FixDelta::default());
        assert_eq!(report.soft_file, None);
        assert_eq!(report.soft_project, None);
        assert_eq!(report.hard_project, Some(0.0));
    }

    #[test]
    fn file_level_example() {
        // 4 vulnerable lines; one alert covers 3 of them plus 2 more lines,
        // two alerts elsewhere in the file cover 4 and 3 lines.
        let d = delta("f.c", &[10, 11, 12, 13]);
        let set = alerts(vec![alert("f.c", 11, 15), alert("f.c", 20, 23), alert("f.c", 30, 32)]);
        assert_eq!(hard_file_locality::<Rational64>(&set, &d), Some(r(1, 3)));
        assert_eq!(soft_file_locality::<Rational64>(&set, &d), Ok(r(3, 13)));
    }

    #[test]
    fn file_level_edge_cases() {
        let d = delta("f.c", &[10, 11]);
        assert_eq!(hard_file_locality::<Rational64>(&alerts(vec![alert("g.c", 10, 11)]), &d), None);
        let exact = alerts(vec![alert("f.c", 10, 11)]);
        assert_eq!(hard_file_locality::<Rational64>(&exact, &d), Some(r(1, 1)));
        assert_eq!(soft_file_locality::<Rational64>(&exact, &d), Ok(r(1, 1)));
        // alerts elsewhere do not enter the file's union
        let elsewhere = alerts(vec![alert("f.c", 10, 11), alert("g.c", 1, 100)]);
        assert_eq!(soft_file_locality::<Rational64>(&elsewhere, &d), Ok(r(1, 1)));
        assert_eq!(soft_file_locality::<Rational64>(&alerts(vec![]), &d), Ok(r(0, 1)));
    }

    #[test]
    fn report_invariants() {
        let d = delta("f.c", &[10]);
        let report = LocalityReport::<Rational64>::compute(&alerts(vec![]), &d);
        assert_eq!((report.hard_project, report.hard_file, report.soft_project), (None, None, None));
        assert_eq!(report.soft_file, Some(r(0, 1)));
        let report = LocalityReport::<Rational64>::compute(&alerts(vec![alert("g.c", 1, 1)]), &d);
        assert_eq!(report.total_alerts, 1);
        assert_eq!(report.alerts_in_vulnerable_files, 0);
        assert_eq!(report.hard_file, None);
        assert_eq!(report.to_f64().hard_project, Some(0.0));
    }

    #[test]
    fn float_and_exact_agree() {
        let d = delta("d1/d2/vuln.c", &[10]);
        let set = alerts(vec![alert("d1/d2/vuln.c", 10, 10), alert("d1/q.c", 1, 1)]);
        let exact = LocalityReport::<Rational64>::compute(&set, &d).to_f64();
        let float = LocalityReport::<f64>::compute(&set, &d);
        assert_eq!(exact, float);
    }
}
