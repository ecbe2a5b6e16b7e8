use std::fmt::Write;

use sdlc_sim::metrics::{Report, Summary};

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

fn mean_sd(s: &Summary) -> String {
    match (s.mean, s.std) {
        (Some(m), Some(sd)) => format!("{m:.2} (sd {sd:.2})"),
        (Some(m), None) => format!("{m:.2}"),
        _ => "-".to_string(),
    }
}

/// Human-readable summary: project flow per replication and class, then
/// time-weighted pool occupancy averaged over replications.
pub fn summary_table(report: &Report) -> String {
    let config = &report.scenario;
    let mut t = String::new();
    let w = &mut t;
    writeln!(
        w,
        "seed {}, {} replication(s) × {} projects",
        report.seed,
        report.replications.len(),
        config.project_limit
    )
    .unwrap();
    writeln!(w).unwrap();
    writeln!(w, "Projects").unwrap();
    writeln!(
        w,
        "{:>4}  {:<12} {:>9} {:>10} {:>12} {:>13}",
        "rep", "class", "received", "delivered", "arrival ArT", "delivery ArT"
    )
    .unwrap();
    for rep in &report.replications {
        for (c, class) in config.classes.iter().enumerate() {
            writeln!(
                w,
                "{:>4}  {:<12} {:>9} {:>10} {:>12} {:>13}",
                rep.replication,
                class.name,
                rep.received_per_class[c],
                rep.delivered_per_class[c],
                cell(rep.arrival_art_per_class[c]),
                cell(rep.delivery_art_per_class[c]),
            )
            .unwrap();
        }
        writeln!(
            w,
            "{:>4}  {:<12} {:>9} {:>10} {:>12} {:>13}",
            rep.replication,
            "all",
            rep.received_per_class.iter().sum::<u64>(),
            rep.delivered_per_class.iter().sum::<u64>(),
            cell(rep.arrival_art),
            cell(rep.delivery_art),
        )
        .unwrap();
    }
    let agg = &report.aggregate;
    writeln!(w, "Average ArT mean: arrival {}, delivery {}", mean_sd(&agg.arrival_art), mean_sd(&agg.delivery_art))
        .unwrap();
    writeln!(w).unwrap();

    writeln!(w, "Resource pools (mean over replications)").unwrap();
    writeln!(
        w,
        "{:<14} {:>8} {:>9} {:>11} {:>12} {:>14}",
        "pool", "capacity", "avg busy", "avg demand", "utilization", "mean wait (d)"
    )
    .unwrap();
    for pool in &agg.pools {
        writeln!(
            w,
            "{:<14} {:>8} {:>9} {:>11} {:>12} {:>14}",
            pool.name,
            pool.capacity,
            cell(pool.avg_busy.mean),
            cell(pool.avg_demand.mean),
            pool.utilization.mean.map_or_else(|| "-".to_string(), |u| format!("{u:.3}")),
            cell(pool.mean_wait.mean),
        )
        .unwrap();
    }
    writeln!(
        w,
        "Note: utilization is redefined as time-averaged busy units divided by capacity;\n\
         avg busy and avg demand are time-weighted unit counts (held, and held + queued)."
    )
    .unwrap();
    t
}
