use geotopo::{generate_pfp, PfpParams};

fn main() {
    for seed in 0..8u64 {
        let g = generate_pfp(&PfpParams::default(), seed).unwrap();
        let low = g.degrees().iter().filter(|&&d| d <= 2).count();
        println!(
            "seed {seed}: edges {} max degree {} degree<=2 {:.3}",
            g.edge_count(),
            g.max_degree(),
            low as f64 / g.node_count() as f64
        );
    }
}
