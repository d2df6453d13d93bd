use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::ranking::RankingEntry;
use super::report::{ClassMetrics, EvalReport};
use crate::error::{Error, Result};
use crate::fsio;
use crate::geodata::SizeClass;

pub const REPORT_HEADER: &str = "class,auc,accuracy,n_pairs";
pub const RANKING_HEADER: &str = "date,period_tag,win_fraction,n_opponents";
/// Class column value of the pooled row.
pub const OVERALL_ROW: &str = "overall";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    SvgBars,
}

#[derive(Serialize, Deserialize)]
struct ReportRow {
    class: String,
    auc: f64,
    accuracy: f64,
    n_pairs: usize,
}

#[derive(Serialize, Deserialize)]
struct RankingRow {
    date: NaiveDate,
    period_tag: String,
    win_fraction: f64,
    n_opponents: usize,
}

fn csv_error(e: csv::Error) -> Error {
    let offset = e.position().map(|p| p.byte() as usize).unwrap_or(0);
    Error::Parse {
        offset,
        message: e.to_string(),
    }
}

fn write_rows<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}

fn read_rows<R: serde::de::DeserializeOwned>(text: &str, header: &str) -> Result<Vec<R>> {
    let first = text.lines().next().unwrap_or("");
    if first != header {
        return Err(Error::Parse {
            offset: 0,
            message: format!("expected header `{header}`, found `{first}`"),
        });
    }
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}

/// Class rows in report order followed by the pooled `overall` row.
pub fn report_to_csv(report: &EvalReport) -> Result<String> {
    let row = |class: &str, m: &ClassMetrics| ReportRow {
        class: class.to_string(),
        auc: m.auc,
        accuracy: m.accuracy,
        n_pairs: m.n_pairs,
    };
    let rows = report
        .classes
        .iter()
        .map(|(c, m)| row(c.as_str(), m))
        .chain(std::iter::once(row(OVERALL_ROW, &report.overall)));
    write_rows(rows)
}

pub fn parse_report_csv(text: &str) -> Result<EvalReport> {
    let mut classes = BTreeMap::new();
    let mut overall = None;
    for r in read_rows::<ReportRow>(text, REPORT_HEADER)? {
        let m = ClassMetrics {
            auc: r.auc,
            accuracy: r.accuracy,
            n_pairs: r.n_pairs,
        };
        if r.class == OVERALL_ROW {
            overall = Some(m);
        } else {
            let class: SizeClass = r.class.parse()?;
            if classes.insert(class, m).is_some() {
                return Err(Error::invalid(format!("class {class} listed twice")));
            }
        }
    }
    let overall = overall.ok_or_else(|| Error::invalid("report has no overall row"))?;
    Ok(EvalReport { classes, overall })
}

pub fn ranking_to_csv(entries: &[RankingEntry]) -> Result<String> {
    if entries.is_empty() {
        return Err(Error::invalid("empty ranking"));
    }
    write_rows(entries.iter().map(|e| RankingRow {
        date: e.date,
        period_tag: e.period_tag.clone(),
        win_fraction: e.win_fraction,
        n_opponents: e.n_opponents,
    }))
}

pub fn parse_ranking_csv(text: &str) -> Result<Vec<RankingEntry>> {
    Ok(read_rows::<RankingRow>(text, RANKING_HEADER)?
        .into_iter()
        .map(|r| RankingEntry {
            date: r.date,
            period_tag: r.period_tag,
            win_fraction: r.win_fraction,
            n_opponents: r.n_opponents,
        })
        .collect())
}

const PALETTE: [&str; 6] = [
    "#1b6ca8", "#d1495b", "#66a182", "#edae49", "#8d6a9f", "#555555",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Static bar chart of win fractions. Bars are grouped by period tag (groups in
/// order of each tag's earliest date) and sorted by date inside a group.
pub fn ranking_to_svg(entries: &[RankingEntry]) -> Result<String> {
    if entries.is_empty() {
        return Err(Error::invalid("empty ranking"));
    }
    let mut sorted: Vec<&RankingEntry> = entries.iter().collect();
    sorted.sort_by_key(|e| e.date);
    let mut tags: Vec<&str> = Vec::new();
    for e in &sorted {
        if !tags.contains(&e.period_tag.as_str()) {
            tags.push(&e.period_tag);
        }
    }
    let (bar, gap, group_gap) = (18.0, 4.0, 16.0);
    let (left, top, plot_h, bottom) = (48.0, 28.0, 200.0, 70.0);
    let mut body = String::new();
    let mut x = left + group_gap;
    for (gi, tag) in tags.iter().enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        let group: Vec<&&RankingEntry> = sorted.iter().filter(|e| e.period_tag == *tag).collect();
        let x0 = x;
        for e in &group {
            let h = e.win_fraction.clamp(0.0, 1.0) * plot_h;
            body.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{bar}\" height=\"{h:.1}\" fill=\"{color}\"><title>{} {:.4}</title></rect>\n",
                top + plot_h - h,
                e.date,
                e.win_fraction
            ));
            body.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"9\" transform=\"rotate(60 {:.1} {:.1})\">{}</text>\n",
                x + 4.0,
                top + plot_h + 10.0,
                x + 4.0,
                top + plot_h + 10.0,
                e.date
            ));
            x += bar + gap;
        }
        body.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            (x0 + x - gap) / 2.0,
            top - 10.0,
            xml_escape(tag)
        ));
        x += group_gap;
    }
    let width = x + 10.0;
    let height = top + plot_h + bottom;
    let mut axis = String::new();
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let y = top + plot_h - v * plot_h;
        axis.push_str(&format!(
            "<line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"9\" text-anchor=\"end\">{v:.2}</text>\n",
            width - 10.0,
            left - 4.0,
            y + 3.0
        ));
    }
    Ok(format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{axis}{body}\
         <line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{:.1}\" stroke=\"black\"/>\n</svg>\n",
        top + plot_h
    ))
}

pub fn export_report(report: &EvalReport, path: &Path) -> Result<()> {
    fsio::write_atomic(path, report_to_csv(report)?.as_bytes())
}

pub fn export_ranking(entries: &[RankingEntry], path: &Path, format: ExportFormat) -> Result<()> {
    let text = match format {
        ExportFormat::Csv => ranking_to_csv(entries)?,
        ExportFormat::SvgBars => ranking_to_svg(entries)?,
    };
    fsio::write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(day: u32, tag: &str, w: f64) -> RankingEntry {
        RankingEntry {
            date: NaiveDate::from_ymd_opt(2020, 1, day).unwrap(),
            period_tag: tag.into(),
            win_fraction: w,
            n_opponents: 1,
        }
    }

    #[test]
    fn two_entry_ranking_csv() {
        let r = vec![entry(4, "pre", 0.9), entry(5, "post", 0.1)];
        let csv = ranking_to_csv(&r).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], RANKING_HEADER);
        assert_eq!(lines[1], "2020-01-04,pre,0.9,1");
        assert_eq!(parse_ranking_csv(&csv).unwrap(), r);
    }

    #[test]
    fn empty_ranking_is_an_error() {
        assert!(ranking_to_csv(&[]).is_err());
        assert!(ranking_to_svg(&[]).is_err());
    }

    #[test]
    fn wrong_header_is_a_parse_error() {
        assert!(matches!(
            parse_report_csv("a,b\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn svg_has_one_bar_per_entry() {
        let r = vec![
            entry(4, "pre", 0.9),
            entry(5, "post", 0.1),
            entry(6, "pre", 0.5),
        ];
        let svg = ranking_to_svg(&r).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<rect x=").count(), 3);
        assert!(!svg.contains("href"));
    }

    fn metrics() -> impl Strategy<Value = ClassMetrics> {
        (0.0f64..=1.0, 0.0f64..=1.0, 1usize..10_000).prop_map(|(auc, accuracy, n_pairs)| {
            ClassMetrics {
                auc,
                accuracy,
                n_pairs,
            }
        })
    }

    proptest! {
        #[test]
        fn report_csv_round_trips(
            large in proptest::option::of(metrics()),
            medium in proptest::option::of(metrics()),
            small in proptest::option::of(metrics()),
            overall in metrics(),
        ) {
            let mut classes = BTreeMap::new();
            for (c, m) in [(SizeClass::Small, small), (SizeClass::Large, large), (SizeClass::Medium, medium)] {
                if let Some(m) = m {
                    classes.insert(c, m);
                }
            }
            let report = EvalReport { classes, overall };
            let csv = report_to_csv(&report).unwrap();
            prop_assert_eq!(csv.lines().next().unwrap(), REPORT_HEADER);
            prop_assert_eq!(parse_report_csv(&csv).unwrap(), report);
        }

        #[test]
        fn ranking_csv_round_trips(ws in prop::collection::vec(0.0f64..=1.0, 1..20)) {
            let r: Vec<RankingEntry> = ws.iter().enumerate().map(|(i, &w)| entry(i as u32 + 1, "sat", w)).collect();
            prop_assert_eq!(parse_ranking_csv(&ranking_to_csv(&r).unwrap()).unwrap(), r);
        }
    }
}
