//! Confusion counting, the undefined-metric convention, and the
//! anomalous-run rejection rule.
//!
//! Run: cargo run --example evaluate_metrics

use nid_augment::eval::{confusion, metrics, reject_anomalous, render_percent, Aggregate};

fn main() {
    // ordinary counts
    let labels = vec![1, 1, 0, 0, 1, 0, 0, 0];
    let preds = vec![1, 0, 1, 0, 1, 0, 0, 0];
    let counts = confusion(&labels, &preds, &1).unwrap();
    println!(
        "tp {} tn {} fp {} fn {}",
        counts.tp, counts.tn, counts.fp, counts.fn_
    );
    let report = metrics(&counts).unwrap();
    println!(
        "accuracy {:.3}, precision {:?}, recall {:?}, f1 {:?}",
        report.accuracy, report.precision, report.recall, report.f1
    );

    // a detector that never fires has no defined precision or F1; the
    // report renders those cells as 0.00 and a dash
    let silent = confusion(&labels, &vec![0; 8], &1).unwrap();
    let silent_report = metrics(&silent).unwrap();
    println!("\nsilent detector:");
    println!("  accuracy  {:.2}", silent_report.accuracy * 100.0);
    println!(
        "  precision {}",
        render_percent(
            silent_report.precision.map(|p| Aggregate { mean: p, std: 0.0, count: 1 }),
            "0.00"
        )
    );
    println!(
        "  f1        {}",
        render_percent(
            silent_report.f1.map(|f| Aggregate { mean: f, std: 0.0, count: 1 }),
            "-"
        )
    );

    // rejection rule: one collapsed run among repeats is discarded before
    // aggregation, bounded by a third of the runs
    let run_f1 = [0.90, 0.91, 0.90, 0.02];
    let (accepted, rejected) = reject_anomalous(&run_f1);
    println!("\nrun F1 scores {run_f1:?}");
    println!("accepted runs {accepted:?}, rejected runs {rejected:?}");
    let kept: Vec<f64> = accepted.iter().map(|&i| run_f1[i]).collect();
    let agg = Aggregate::from_values(&kept).unwrap();
    println!(
        "aggregate over accepted runs: {:.2} ± {:.2} percent",
        agg.mean * 100.0,
        agg.std * 100.0
    );
}
