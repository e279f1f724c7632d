//! Monte Carlo mutual information between an item index and a Gaussian
//! channel, on channels with known answers, then normalised shared
//! information between two channels.
//!
//! Usage: cargo run --release --example mutual_information -- [draws]

use vib_vit::analysis::{mi_monte_carlo, nmi_heads, GaussianChannel};

fn channel(means: Vec<Vec<f64>>, sigma: f64) -> GaussianChannel {
    let n = means.len();
    let d = means[0].len();
    GaussianChannel::new(means, vec![vec![sigma; d]; n]).expect("valid channel")
}

fn main() -> vib_vit::Result<()> {
    let draws: usize = std::env::args().nth(1).map_or(200_000, |s| s.parse().expect("draws"));
    let cases = [
        ("16 separated items", channel((0..16).map(|i| vec![50.0 * i as f64]).collect(), 1.0), 16f64.ln()),
        ("two clusters of 8", channel((0..16).map(|i| vec![if i < 8 { -30.0 } else { 30.0 }]).collect(), 1.0), 2f64.ln()),
        ("constant", channel(vec![vec![0.0, 1.0]; 16], 1.0), 0.0),
    ];
    println!("{:<20} {:>10} {:>10} {:>10}", "channel", "estimate", "stderr", "exact");
    for (name, ch, exact) in &cases {
        let e = mi_monte_carlo(ch, draws, 0)?;
        println!("{name:<20} {:>10.5} {:>10.5} {:>10.5}", e.value, e.stderr, exact);
    }

    // a 4x4 grid of items: `row` sees only the row, `col` only the column
    let row = channel((0..16).map(|i| vec![3.0 * (i / 4) as f64, 0.0]).collect(), 1.0);
    let col = channel((0..16).map(|i| vec![0.0, 3.0 * (i % 4) as f64]).collect(), 1.0);
    let both = row.concat(&col)?;
    println!();
    for (name, u, v) in [("row vs row", &row, &row), ("row vs column", &row, &col), ("row vs row+column", &row, &both)] {
        match nmi_heads(u, v, draws, 1) {
            Ok(e) => println!("{name:<20} NMI {:.4} +- {:.4} (shared {:.4} nats)", e.nmi, e.stderr, e.shared),
            Err(err) => println!("{name:<20} {err}"),
        }
    }
    Ok(())
}
