//! Metric CSV files and the markdown tables rendered from them.
//!
//! Rendering is a pure function of the parsed rows: the same CSV always
//! yields byte-identical output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::{aggregate, Aggregate, MetricRecord, Stat};

pub const COLUMNS: [&str; 9] = ["fold", "epoch", "train_loss", "val_loss", "iou", "dice", "psnr_db", "ssim", "lpips"];
pub const NA: &str = "n/a";

/// One CSV line: a metric record, optionally tagged with an ablation variant.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub variant: Option<String>,
    pub record: MetricRecord,
}

impl CsvRow {
    pub fn new(variant: Option<&str>, record: MetricRecord) -> Self {
        Self {
            variant: variant.map(str::to_string),
            record,
        }
    }
}

/// Serialize rows. A leading `variant` column is written when any row has
/// one. Floats use shortest round-trip formatting.
pub fn to_csv(rows: &[CsvRow]) -> String {
    let tagged = rows.iter().any(|r| r.variant.is_some());
    let mut s = String::new();
    if tagged {
        s.push_str("variant,");
    }
    s.push_str(&COLUMNS.join(","));
    s.push('\n');
    for row in rows {
        let r = &row.record;
        if tagged {
            let _ = write!(s, "{},", row.variant.as_deref().unwrap_or(""));
        }
        let lpips = r.lpips.map_or_else(|| NA.to_string(), |v| v.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.fold, r.epoch, r.train_loss, r.val_loss, r.iou, r.dice, r.psnr_db, r.ssim, lpips
        );
    }
    s
}

fn line_error(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("line {line}: {msg}"))
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines.next().ok_or_else(|| line_error(1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let tagged = match cols.as_slice() {
        [first, rest @ ..] if *first == "variant" && rest == COLUMNS => true,
        c if c == COLUMNS => false,
        _ => {
            return Err(line_error(
                1,
                format!("header must be [variant,]{}, got {header:?}", COLUMNS.join(",")),
            ))
        }
    };
    let expected = COLUMNS.len() + usize::from(tagged);
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != expected {
            return Err(line_error(n, format!("{} fields, expected {expected}", fields.len())));
        }
        let (variant, f) = if tagged {
            if fields[0].is_empty() {
                return Err(line_error(n, "empty variant"));
            }
            (Some(fields[0].to_string()), &fields[1..])
        } else {
            (None, &fields[..])
        };
        let int = |i: usize| -> Result<usize> {
            f[i].parse()
                .map_err(|_| line_error(n, format!("{}: not an integer: {:?}", COLUMNS[i], f[i])))
        };
        let float = |i: usize| -> Result<f64> {
            f[i].parse()
                .map_err(|_| line_error(n, format!("{}: not a number: {:?}", COLUMNS[i], f[i])))
        };
        let epoch = int(1)?;
        if epoch == 0 {
            return Err(line_error(n, "epochs are numbered from 1"));
        }
        rows.push(CsvRow {
            variant,
            record: MetricRecord {
                fold: int(0)?,
                epoch,
                train_loss: float(2)?,
                val_loss: float(3)?,
                iou: float(4)?,
                dice: float(5)?,
                psnr_db: float(6)?,
                ssim: float(7)?,
                lpips: if f[8] == NA { None } else { Some(float(8)?) },
            },
        });
    }
    if rows.is_empty() {
        return Err(line_error(1, "no data rows"));
    }
    Ok(rows)
}

/// Rows grouped by variant (untagged rows form one unnamed group), in order
/// of first appearance.
fn by_variant(rows: &[CsvRow]) -> Vec<(Option<&str>, Vec<&MetricRecord>)> {
    let mut groups: Vec<(Option<&str>, Vec<&MetricRecord>)> = Vec::new();
    for r in rows {
        let key = r.variant.as_deref();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(&r.record),
            None => groups.push((key, vec![&r.record])),
        }
    }
    groups
}

/// Per fold, the record with the lowest validation loss; ties go to the
/// earlier epoch.
pub fn best_per_fold<'a>(records: impl IntoIterator<Item = &'a MetricRecord>) -> Vec<MetricRecord> {
    let mut best: BTreeMap<usize, &MetricRecord> = BTreeMap::new();
    for r in records {
        let e = best.entry(r.fold).or_insert(r);
        if r.val_loss < e.val_loss || (r.val_loss == e.val_loss && r.epoch < e.epoch) {
            *e = r;
        }
    }
    best.into_values().cloned().collect()
}

fn fixed(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

fn stat(s: &Stat, decimals: usize) -> String {
    format!("{:.d$} ± {:.d$}", s.mean, s.std, d = decimals)
}

fn opt_stat(s: &Option<Stat>) -> String {
    s.as_ref().map_or_else(|| NA.to_string(), |s| stat(s, 3))
}

const FOLD_HEADER: &str = "| Fold | Epoch | Train loss | Val loss | IoU | Dice | PSNR (dB) | SSIM | LPIPS |\n\
                           |---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";

fn fold_table(best: &[MetricRecord], agg: Option<&Aggregate>) -> String {
    let mut s = String::from(FOLD_HEADER);
    for r in best {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.fold,
            r.epoch,
            fixed(r.train_loss, 3),
            fixed(r.val_loss, 3),
            fixed(r.iou, 3),
            fixed(r.dice, 3),
            fixed(r.psnr_db, 1),
            fixed(r.ssim, 3),
            r.lpips.map_or_else(|| NA.to_string(), |v| fixed(v, 3)),
        );
    }
    if let Some(a) = agg {
        let _ = writeln!(
            s,
            "| Mean ± Std | | {} | {} | {} | {} | {} | {} | {} |",
            stat(&a.train_loss, 3),
            stat(&a.val_loss, 3),
            stat(&a.iou, 3),
            stat(&a.dice, 3),
            stat(&a.psnr_db, 1),
            stat(&a.ssim, 3),
            opt_stat(&a.lpips),
        );
    }
    s
}

/// Markdown report: a per-fold table for each variant and, when more than
/// one variant is present, an ablation summary. A single fold has no
/// aggregate row.
pub fn render_report(rows: &[CsvRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Data("no metric rows to report".into()));
    }
    let groups = by_variant(rows);
    let mut s = String::new();
    let mut summary = Vec::new();
    for (variant, records) in &groups {
        let best = best_per_fold(records.iter().copied());
        let agg = (best.len() >= 2).then(|| aggregate(&best)).transpose()?;
        let title = variant.unwrap_or("Cross-validation");
        let _ = writeln!(s, "## {title}\n");
        let _ = writeln!(s, "Best validation-loss epoch of each of {} fold(s).", best.len());
        if agg.is_some() {
            s.push_str("The last row is the arithmetic mean ± sample standard deviation of the rows above.\n");
        }
        s.push('\n');
        s.push_str(&fold_table(&best, agg.as_ref()));
        s.push('\n');
        summary.push((title, best, agg));
    }
    if groups.len() > 1 {
        s.push_str("## Ablation\n\n");
        s.push_str("| Variant | Folds | IoU | Dice | PSNR (dB) | SSIM | LPIPS |\n|---|---:|---:|---:|---:|---:|---:|\n");
        for (title, best, agg) in &summary {
            match agg {
                Some(a) => {
                    let _ = writeln!(
                        s,
                        "| {title} | {} | {} | {} | {} | {} | {} |",
                        best.len(),
                        stat(&a.iou, 3),
                        stat(&a.dice, 3),
                        stat(&a.psnr_db, 1),
                        stat(&a.ssim, 3),
                        opt_stat(&a.lpips)
                    );
                }
                None => {
                    let r = &best[0];
                    let _ = writeln!(
                        s,
                        "| {title} | 1 | {} | {} | {} | {} | {} |",
                        fixed(r.iou, 3),
                        fixed(r.dice, 3),
                        fixed(r.psnr_db, 1),
                        fixed(r.ssim, 3),
                        r.lpips.map_or_else(|| NA.to_string(), |v| fixed(v, 3))
                    );
                }
            }
        }
        s.push('\n');
    }
    Ok(s)
}

/// Losses and validation Dice per epoch, for plotting learning curves.
pub fn learning_curve_csv(rows: &[CsvRow]) -> String {
    let mut s = String::from("variant,fold,epoch,train_loss,val_loss,dice\n");
    let mut sorted: Vec<&CsvRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (a.variant.as_deref(), a.record.fold, a.record.epoch).cmp(&(b.variant.as_deref(), b.record.fold, b.record.epoch))
    });
    for r in sorted {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.variant.as_deref().unwrap_or(""),
            r.record.fold,
            r.record.epoch,
            r.record.train_loss,
            r.record.val_loss,
            r.record.dice
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(fold: usize, epoch: usize, val: f64) -> MetricRecord {
        MetricRecord {
            fold,
            epoch,
            train_loss: 0.5,
            val_loss: val,
            iou: 0.8,
            dice: 0.9,
            psnr_db: 20.25,
            ssim: 0.7,
            lpips: None,
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut r = rec(0, 1, 0.1 + 0.2);
        r.lpips = Some(1.0 / 3.0);
        let rows = vec![CsvRow::new(Some("Full"), r), CsvRow::new(Some("No Dropout"), rec(1, 2, 0.4))];
        assert_eq!(parse_csv(&to_csv(&rows)).unwrap(), rows);
        let plain = vec![CsvRow::new(None, rec(3, 4, 1e-300))];
        assert_eq!(parse_csv(&to_csv(&plain)).unwrap(), plain);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = "fold,epoch,train_loss,val_loss,iou,dice,psnr_db,ssim,lpips\n0,1,1,1,1,1,1,1,n/a\n0,x,1,1,1,1,1,1,n/a\n";
        let err = parse_csv(text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(parse_csv("a,b\n").unwrap_err().to_string().contains("line 1"));
    }

    #[test]
    fn best_epoch_prefers_lowest_then_earliest() {
        let rows = [rec(0, 1, 0.5), rec(0, 2, 0.3), rec(0, 3, 0.3), rec(1, 1, 0.2)];
        let best = best_per_fold(rows.iter());
        assert_eq!(best.iter().map(|r| (r.fold, r.epoch)).collect::<Vec<_>>(), vec![(0, 2), (1, 1)]);
    }

    #[test]
    fn single_fold_has_no_aggregate() {
        let rows = vec![CsvRow::new(None, rec(0, 1, 0.5))];
        let md = render_report(&rows).unwrap();
        assert!(!md.contains("Mean ± Std"));
        let rows = vec![CsvRow::new(None, rec(0, 1, 0.5)), CsvRow::new(None, rec(1, 1, 0.4))];
        let md = render_report(&rows).unwrap();
        assert!(md.contains("| Mean ± Std | | 0.500 ± 0.000 | 0.450 ± 0.071 |"), "{md}");
        assert!(md.contains("20.2 ± 0.0") || md.contains("20.3 ± 0.0"));
    }
}
