mod common;

use common::REFERENCE_FOLDS;
use hairseg::metrics::{aggregate, MetricRecord};
use hairseg::report::{learning_curve_csv, parse_csv, render_report, to_csv, CsvRow};
use proptest::prelude::*;

fn reference_rows(variant: Option<&str>) -> Vec<CsvRow> {
    REFERENCE_FOLDS
        .iter()
        .enumerate()
        .map(|(i, r)| {
            CsvRow::new(
                variant,
                MetricRecord {
                    fold: i + 1,
                    epoch: 1,
                    train_loss: r[0],
                    val_loss: r[1],
                    iou: r[2],
                    dice: r[3],
                    psnr_db: r[4],
                    ssim: r[5],
                    lpips: Some(r[6]),
                },
            )
        })
        .collect()
}

#[test]
fn reference_table_aggregates() {
    let records: Vec<MetricRecord> = reference_rows(None).into_iter().map(|r| r.record).collect();
    let a = aggregate(&records).unwrap();
    let iou_mean = REFERENCE_FOLDS.iter().map(|r| r[2]).sum::<f64>() / 10.0;
    assert!((a.iou.mean - 0.9349).abs() < 1e-12 && (a.iou.mean - iou_mean).abs() < 1e-12);
    assert!((a.dice.mean - 0.9650).abs() < 1e-12);
    let var = REFERENCE_FOLDS.iter().map(|r| (r[2] - iou_mean).powi(2)).sum::<f64>() / 9.0;
    assert!((a.iou.std - var.sqrt()).abs() < 1e-12);
    assert_eq!(a.iou.n, 10);

    let md = render_report(&reference_rows(None)).unwrap();
    let footer = md.lines().find(|l| l.starts_with("| Mean ± Std")).unwrap();
    assert!(footer.contains("| 0.935 ± 0.006 | 0.965 ± 0.004 |"), "{footer}");
    assert!(footer.contains("34.5 ± 0.7"), "{footer}");
    assert_eq!(md.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| Fold") && !l.starts_with("| Mean")).count(), 10);
}

#[test]
fn ablation_csv_gives_three_row_comparison() {
    let mut rows = Vec::new();
    for v in ["Full", "No Dropout", "No Pretraining"] {
        rows.extend(reference_rows(Some(v)));
    }
    let back = parse_csv(&to_csv(&rows)).unwrap();
    assert_eq!(back, rows);
    let md = render_report(&back).unwrap();
    let ablation = md.split("## Ablation").nth(1).unwrap();
    let header = ablation.lines().find(|l| l.starts_with("| Variant")).unwrap();
    assert_eq!(header, "| Variant | Folds | IoU | Dice | PSNR (dB) | SSIM | LPIPS |");
    let body: Vec<&str> = ablation.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| Variant")).collect();
    assert_eq!(body.len(), 3);
    for (line, v) in body.iter().zip(["Full", "No Dropout", "No Pretraining"]) {
        assert!(line.starts_with(&format!("| {v} | 10 |")), "{line}");
    }
}

#[test]
fn report_is_a_pure_function_of_the_csv() {
    let text = to_csv(&reference_rows(None));
    let a = render_report(&parse_csv(&text).unwrap()).unwrap();
    let b = render_report(&parse_csv(&text).unwrap()).unwrap();
    assert_eq!(a, b);
    let curves = learning_curve_csv(&parse_csv(&text).unwrap());
    assert_eq!(curves.lines().count(), 11);
    assert!(curves.starts_with("variant,fold,epoch,train_loss,val_loss,dice\n"));
}

#[test]
fn malformed_csv_reports_line() {
    let good = to_csv(&reference_rows(None));
    let mut lines: Vec<&str> = good.lines().collect();
    lines[4] = "3,1,0.1,oops,0.9,0.9,30,0.9,n/a";
    let err = parse_csv(&lines.join("\n")).unwrap_err().to_string();
    assert!(err.contains("line 5") && err.contains("val_loss"), "{err}");
    lines[4] = "3,1,0.1";
    assert!(parse_csv(&lines.join("\n")).unwrap_err().to_string().contains("line 5"));
}

proptest! {
    #[test]
    fn csv_round_trips_any_finite_record(
        fold in 0usize..100, epoch in 1usize..21,
        v in proptest::array::uniform6(-1e6f64..1e6),
        lp in proptest::option::of(0.0f64..2.0),
    ) {
        let r = MetricRecord {
            fold, epoch, train_loss: v[0], val_loss: v[1], iou: v[2], dice: v[3], psnr_db: v[4], ssim: v[5], lpips: lp,
        };
        let rows = vec![CsvRow::new(None, r)];
        prop_assert_eq!(parse_csv(&to_csv(&rows)).unwrap(), rows);
    }

    #[test]
    fn aggregate_ignores_record_order(vals in proptest::collection::vec(0.0f64..1.0, 2..12), seed in any::<u64>()) {
        let recs: Vec<MetricRecord> = vals.iter().enumerate().map(|(i, &x)| MetricRecord {
            fold: i, epoch: 1, train_loss: x, val_loss: x, iou: x, dice: x, psnr_db: x, ssim: x, lpips: None,
        }).collect();
        let mut shuffled = recs.clone();
        hairseg::rng::Rng::new(seed).shuffle(&mut shuffled);
        prop_assert_eq!(aggregate(&recs).unwrap(), aggregate(&shuffled).unwrap());
    }
}
