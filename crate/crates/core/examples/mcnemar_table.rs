//! Exact McNemar p-values and BH flags for a family of paired comparisons.
//!
//! Usage: `cargo run --example mcnemar_table [b,c ...]`

use scopemem::stats::{bh_fdr, format_p, mcnemar_exact, mcnemar_p, significance_marker};

fn main() {
    let mut pairs: Vec<(u64, u64)> = std::env::args()
        .skip(1)
        .filter_map(|a| {
            let (b, c) = a.split_once(',')?;
            Some((b.trim().parse().ok()?, c.trim().parse().ok()?))
        })
        .collect();
    if pairs.is_empty() {
        pairs = vec![(5, 2), (8, 2), (6, 0), (17, 3), (10, 2), (8, 6)];
    }
    let p: Vec<f64> = pairs.iter().map(|&(b, c)| mcnemar_p(b, c)).collect();
    let bh = bh_fdr(&p, 0.05).expect("valid p-values");
    println!("{:>4} {:>4}  {:>7}  {:<3} {:>9}  BH", "b", "c", "p", "sig", "threshold");
    for (i, &(b, c)) in pairs.iter().enumerate() {
        let exact = mcnemar_exact(b, c);
        println!(
            "{b:>4} {c:>4}  {:>7}  {:<3} {:>9.6}  {}",
            format_p(&exact),
            significance_marker(p[i]),
            bh.thresholds[i],
            if bh.rejected[i] { "reject" } else { "-" }
        );
    }
}
