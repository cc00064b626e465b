//! Sweep result persistence (CSV, stable column order), convex hulls per
//! (sequence, filter), BD-BR tables against a reference filter, and
//! plot-ready curve data.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::eval::bdrate::bd_br;
use crate::eval::hull::convex_hull;
use crate::eval::sweep::RDPoint;
use crate::resample::ScaleRatio;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub sequence: String,
    pub filter: String,
    pub point: RDPoint,
    /// Externally computed score (e.g. VMAF) imported via
    /// [`merge_external_scores`].
    pub ext: Option<f64>,
}

pub const CSV_HEADER: &str =
    "sequence,filter,scale,q,rate_bpp,psnr_y,psnr_weighted,ssim_y,bits,frames,ext";

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let p = &r.point;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.sequence,
            r.filter,
            p.scale,
            p.q,
            p.rate_bpp,
            p.psnr_y,
            p.psnr_weighted,
            p.ssim_y,
            p.bits,
            p.frames,
            r.ext.map_or(String::new(), |v| v.to_string()),
        ));
    }
    out
}

pub fn rows_from_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Other("empty sweep CSV".into()))?;
    if header != CSV_HEADER {
        return Err(Error::Other(format!("unexpected sweep CSV header: {header}")));
    }
    let mut rows = Vec::new();
    for (num, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Other(format!(
                "sweep CSV line {}: expected 11 fields, got {}",
                num + 2,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Other(format!("sweep CSV line {}: bad number `{s}`", num + 2)))
        };
        let scale: ScaleRatio = fields[2].parse()?;
        rows.push(SweepRow {
            sequence: fields[0].to_string(),
            filter: fields[1].to_string(),
            point: RDPoint {
                scale,
                q: parse(fields[3])?,
                rate_bpp: parse(fields[4])?,
                psnr_y: parse(fields[5])?,
                psnr_weighted: parse(fields[6])?,
                ssim_y: parse(fields[7])?,
                bits: parse(fields[8])? as u64,
                frames: parse(fields[9])? as usize,
            },
            ext: if fields[10].is_empty() {
                None
            } else {
                Some(parse(fields[10])?)
            },
        });
    }
    Ok(rows)
}

/// Quality axis used for hulls and BD-BR.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    PsnrY,
    PsnrWeighted,
    SsimY,
    /// Imported external scores.
    Ext,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::PsnrY => "psnr_y",
            Metric::PsnrWeighted => "psnr_weighted",
            Metric::SsimY => "ssim_y",
            Metric::Ext => "ext",
        }
    }

    pub fn parse(name: &str) -> Result<Metric> {
        match name {
            "psnr_y" => Ok(Metric::PsnrY),
            "psnr_weighted" => Ok(Metric::PsnrWeighted),
            "ssim_y" => Ok(Metric::SsimY),
            "ext" => Ok(Metric::Ext),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }

    pub fn value(&self, row: &SweepRow) -> Option<f64> {
        match self {
            Metric::PsnrY => Some(row.point.psnr_y),
            Metric::PsnrWeighted => Some(row.point.psnr_weighted),
            Metric::SsimY => Some(row.point.ssim_y),
            Metric::Ext => row.ext,
        }
    }
}

/// Merge externally computed quality scores (e.g. VMAF from standalone
/// tooling) into sweep rows. CSV columns: sequence,filter,scale,q,value.
/// Returns how many rows matched.
pub fn merge_external_scores(rows: &mut [SweepRow], csv: &str) -> Result<usize> {
    let mut merged = 0;
    for (num, line) in csv.lines().enumerate() {
        if num == 0 && line.starts_with("sequence") {
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Other(format!(
                "external scores line {}: expected 5 fields",
                num + 1
            )));
        }
        let scale: ScaleRatio = fields[2].parse()?;
        let q: f64 = fields[3]
            .parse()
            .map_err(|_| Error::Other(format!("external scores line {}: bad q", num + 1)))?;
        let value: f64 = fields[4]
            .parse()
            .map_err(|_| Error::Other(format!("external scores line {}: bad value", num + 1)))?;
        for row in rows.iter_mut() {
            if row.sequence == fields[0]
                && row.filter == fields[1]
                && row.point.scale == scale
                && row.point.q == q
            {
                row.ext = Some(value);
                merged += 1;
            }
        }
    }
    Ok(merged)
}

/// Hull of one (sequence, filter) group on the (rate, metric) plane,
/// returned as (rate, quality) pairs sorted by rate.
pub fn group_hull(rows: &[&SweepRow], metric: Metric) -> Result<Vec<(f64, f64)>> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| metric.value(r).map(|v| (r.point.rate_bpp, v)))
        .collect();
    if pts.is_empty() {
        return Err(Error::Other(format!(
            "no points with metric {} to build a hull from",
            metric.name()
        )));
    }
    Ok(convex_hull(&pts).into_iter().map(|i| pts[i]).collect())
}

#[derive(Clone, Debug)]
pub struct BdEntry {
    pub filter: String,
    pub metric: &'static str,
    pub per_sequence: Vec<(String, f64)>,
    pub average: f64,
}

fn group_rows<'a>(rows: &'a [SweepRow]) -> BTreeMap<(String, String), Vec<&'a SweepRow>> {
    let mut groups: BTreeMap<(String, String), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.sequence.clone(), r.filter.clone()))
            .or_default()
            .push(r);
    }
    groups
}

/// BD-BR of every non-reference filter against the reference filter's hull,
/// per sequence and averaged per filter.
pub fn bd_report(rows: &[SweepRow], reference: &str, metrics: &[Metric]) -> Result<Vec<BdEntry>> {
    let groups = group_rows(rows);
    let sequences: Vec<String> = {
        let mut s: Vec<String> = groups.keys().map(|(seq, _)| seq.clone()).collect();
        s.dedup();
        s
    };
    let filters: Vec<String> = {
        let mut f: Vec<String> = groups.keys().map(|(_, f)| f.clone()).collect();
        f.sort();
        f.dedup();
        f
    };
    if !filters.iter().any(|f| f == reference) {
        return Err(Error::Config(format!(
            "reference filter `{reference}` has no sweep rows"
        )));
    }
    let mut entries = Vec::new();
    for metric in metrics {
        for filter in filters.iter().filter(|f| f.as_str() != reference) {
            let mut per_sequence = Vec::new();
            for seq in &sequences {
                let test = groups.get(&(seq.clone(), filter.clone()));
                let refr = groups.get(&(seq.clone(), reference.to_string()));
                let (Some(test), Some(refr)) = (test, refr) else {
                    return Err(Error::Config(format!(
                        "sequence `{seq}` is missing rows for `{filter}` or `{reference}`"
                    )));
                };
                let test_hull = group_hull(test, *metric)?;
                let ref_hull = group_hull(refr, *metric)?;
                per_sequence.push((seq.clone(), bd_br(&ref_hull, &test_hull)?));
            }
            let average =
                per_sequence.iter().map(|(_, v)| v).sum::<f64>() / per_sequence.len().max(1) as f64;
            entries.push(BdEntry {
                filter: filter.clone(),
                metric: metric.name(),
                per_sequence,
                average,
            });
        }
    }
    Ok(entries)
}

pub fn render_bd_csv(entries: &[BdEntry]) -> String {
    let mut out = String::from("filter,metric,sequence,bd_br_percent\n");
    for e in entries {
        for (seq, v) in &e.per_sequence {
            out.push_str(&format!("{},{},{},{:.4}\n", e.filter, e.metric, seq, v));
        }
        out.push_str(&format!(
            "{},{},average,{:.4}\n",
            e.filter, e.metric, e.average
        ));
    }
    out
}

pub fn render_bd_text(entries: &[BdEntry], reference: &str) -> String {
    let mut out = format!("BD-BR vs `{reference}` hull (negative = rate savings)\n\n");
    let width = entries
        .iter()
        .map(|e| e.filter.len())
        .max()
        .unwrap_or(6)
        .max("filter".len());
    out.push_str(&format!(
        "{:<width$}  {:<13}  {:>10}  sequences\n",
        "filter", "metric", "avg BD-BR%",
    ));
    for e in entries {
        let seqs = e
            .per_sequence
            .iter()
            .map(|(s, v)| format!("{s}: {v:+.2}%"))
            .collect::<Vec<_>>()
            .join(", ");
        out.push_str(&format!(
            "{:<width$}  {:<13}  {:>+10.3}  {}\n",
            e.filter, e.metric, e.average, seqs,
        ));
    }
    out
}

/// Per (sequence, filter) curve files for external plotting: every point plus
/// its hull membership on the rate/psnr_y plane.
pub fn curve_files(rows: &[SweepRow]) -> Vec<(String, String)> {
    let groups = group_rows(rows);
    let mut out = Vec::new();
    for ((seq, filter), rows) in groups {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r.point.rate_bpp, r.point.psnr_y))
            .collect();
        let hull: std::collections::BTreeSet<usize> = convex_hull(&pts).into_iter().collect();
        let mut body = String::from("scale,q,rate_bpp,psnr_y,psnr_weighted,ssim_y,on_hull\n");
        for (i, r) in rows.iter().enumerate() {
            body.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.point.scale,
                r.point.q,
                r.point.rate_bpp,
                r.point.psnr_y,
                r.point.psnr_weighted,
                r.point.ssim_y,
                if hull.contains(&i) { 1 } else { 0 }
            ));
        }
        let safe_seq = seq.replace(['/', ','], "_");
        let safe_filter = filter.replace(['/', ',', ':'], "_");
        out.push((format!("curve_{safe_seq}_{safe_filter}.csv"), body));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mk_row(seq: &str, filter: &str, scale: (u32, u32), q: f64, rate: f64, psnr: f64) -> SweepRow {
        SweepRow {
            sequence: seq.into(),
            filter: filter.into(),
            point: RDPoint {
                scale: ScaleRatio::new(scale.0, scale.1).unwrap(),
                q,
                rate_bpp: rate,
                psnr_y: psnr,
                psnr_weighted: psnr - 0.4,
                ssim_y: 1.0 - 1.0 / psnr,
                bits: (rate * 1e4) as u64,
                frames: 3,
            },
            ext: None,
        }
    }

    fn ladder(seq: &str, filter: &str, scale_rate: f64) -> Vec<SweepRow> {
        (0..6)
            .map(|i| {
                mk_row(
                    seq,
                    filter,
                    (1, 2),
                    17.0 + 3.0 * i as f64,
                    scale_rate * 2f64.powi(-(i as i32)),
                    42.0 - 2.0 * i as f64,
                )
            })
            .collect()
    }

    #[test]
    fn csv_roundtrip_is_lossless() {
        let rows = ladder("seq_a", "lanczos", 1.0);
        let text = rows_to_csv(&rows);
        let back = rows_from_csv(&text).unwrap();
        assert_eq!(back, rows);
        // and byte-identical when re-rendered
        assert_eq!(rows_to_csv(&back), text);
    }

    #[test]
    fn identical_sweeps_report_zero() {
        let mut rows = ladder("seq_a", "lanczos", 1.0);
        rows.extend(ladder("seq_a", "learned", 1.0));
        let entries = bd_report(&rows, "lanczos", &[Metric::PsnrY]).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].average, 0.0);
    }

    #[test]
    fn rate_inflation_reports_plus_ten_percent() {
        let mut rows = ladder("seq_a", "lanczos", 1.0);
        rows.extend(ladder("seq_a", "learned", 1.1));
        let entries = bd_report(&rows, "lanczos", &[Metric::PsnrY]).unwrap();
        assert!((entries[0].average - 10.0).abs() < 0.1, "{}", entries[0].average);
    }

    #[test]
    fn averages_across_sequences() {
        let mut rows = Vec::new();
        rows.extend(ladder("a", "lanczos", 1.0));
        rows.extend(ladder("a", "learned", 1.1)); // +10%
        rows.extend(ladder("b", "lanczos", 1.0));
        rows.extend(ladder("b", "learned", 1.21)); // +21%
        let entries = bd_report(&rows, "lanczos", &[Metric::PsnrY]).unwrap();
        let want = (10.0 + 21.0) / 2.0;
        assert!(
            (entries[0].average - want).abs() < 0.2,
            "{} vs {want}",
            entries[0].average
        );
    }

    #[test]
    fn missing_reference_is_an_error() {
        let rows = ladder("seq_a", "learned", 1.0);
        assert!(bd_report(&rows, "lanczos", &[Metric::PsnrY]).is_err());
    }

    #[test]
    fn external_scores_merge_and_report() {
        let mut rows = ladder("a", "lanczos", 1.0);
        rows.extend(ladder("a", "learned", 1.0));
        let mut csv = String::from("sequence,filter,scale,q,value\n");
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                r.sequence,
                r.filter,
                r.point.scale,
                r.point.q,
                r.point.psnr_y * 2.0
            ));
        }
        let merged = merge_external_scores(&mut rows, &csv).unwrap();
        assert_eq!(merged, rows.len());
        let entries = bd_report(&rows, "lanczos", &[Metric::Ext]).unwrap();
        assert_eq!(entries[0].average, 0.0);
    }

    #[test]
    fn curve_files_flag_hull_points() {
        let rows = ladder("a", "lanczos", 1.0);
        let files = curve_files(&rows);
        assert_eq!(files.len(), 1);
        assert!(files[0].0.starts_with("curve_a_"));
        assert!(files[0].1.lines().skip(1).any(|l| l.ends_with(",1")));
    }
}
