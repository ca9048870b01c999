//! Rank three models on hand-made query results, including excluded queries.

use conjugation_bn::inference::{Backend, QueryResult, QueryStatus};
use conjugation_bn::ranking::{rank, render_report, ProbTable, TotalMode};

fn result(trial: &str, model: &str, cell: &str, status: QueryStatus, log_prob: f64) -> QueryResult {
    QueryResult {
        trial_id: trial.into(),
        model: model.into(),
        query_cell: cell.into(),
        threshold_min: 60.0,
        status,
        log_prob,
        elapsed_ms: 0,
        peak_cost: 0.0,
        backend: Backend::Exact,
        note: None,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    use QueryStatus::{Impossible, Incalculable, Ok as Scored};
    let models: Vec<String> = ["A", "B", "C"].map(String::from).to_vec();
    let ninf = f64::NEG_INFINITY;
    let rows = vec![
        result("t1", "A", "q1", Scored, -3.0),
        result("t1", "B", "q1", Scored, -4.0),
        result("t1", "C", "q1", Scored, -5.0),
        result("t1", "A", "q2", Scored, -6.0),
        result("t1", "B", "q2", Scored, -2.0),
        result("t1", "C", "q2", Impossible, ninf),
        result("t2", "A", "q3", Impossible, ninf),
        result("t2", "B", "q3", Impossible, ninf),
        result("t2", "C", "q3", Impossible, ninf),
        result("t2", "A", "q4", Scored, -1.0),
        result("t2", "B", "q4", Incalculable, f64::NAN),
        result("t2", "C", "q4", Scored, -1.5),
        result("t2", "A", "q5", Scored, -2.5),
        result("t2", "B", "q5", Scored, -2.0),
        result("t2", "C", "q5", Scored, -3.0),
    ];
    let table = ProbTable::from_results(&models, &rows)?;
    let report = rank(&table, TotalMode::Linear)?;
    print!("{}", render_report(&report));
    for e in &report.exclusions {
        println!("excluded {}/{}: {}", e.trial, e.query_cell, e.reason.name());
    }
    Ok(())
}
