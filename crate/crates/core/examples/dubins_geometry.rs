//! Target and obstacle functions of the Dubins scene sampled on the grid,
//! saved in the binary field format and exported to CSV for plotting.

use std::fs::File;
use std::io::BufWriter;

use discount_reach::cli::write_field_csv_to;
use discount_reach::geometry::{max_slope, sample_to_field};
use discount_reach::grid::{read_field, write_field};
use discount_reach::scenarios::{dubins, dubins_obstacles};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = dubins([61, 61, 40]);
    let ell = sample_to_field(&s.target, &s.grid)?;
    let c = sample_to_field(&s.constraint, &s.grid)?;
    let count = |m: Vec<bool>| m.iter().filter(|&&b| b).count();
    println!("{} nodes", s.grid.len());
    println!("target: {} nodes inside, max slope {:.3}", count(ell.negative_mask()), max_slope(&ell));
    println!("safe set: {} nodes, max slope {:.3}", count(c.negative_mask()), max_slope(&c));
    for (k, obstacle) in dubins_obstacles().iter().enumerate() {
        let inside = (0..s.grid.len()).filter(|&i| obstacle.evaluate(&s.grid.node(i)) > 0.0).count();
        println!("obstacle {k}: {inside} nodes");
    }
    for p in [[-4.0, 4.0, 0.0], [3.5, 3.5, 0.0], [-2.0, -2.0, 1.0], [1.0, 0.5, 0.0]] {
        println!("{p:?}: l = {:7.3}, c = {:7.3}", s.target.evaluate(&p), s.constraint.evaluate(&p));
    }

    std::fs::create_dir_all("out/examples")?;
    write_field("out/examples/constraint.drfd", &c)?;
    let back = read_field("out/examples/constraint.drfd")?;
    assert_eq!(back, c);
    write_field_csv_to(&back, BufWriter::new(File::create("out/examples/constraint.csv")?))?;
    println!("wrote out/examples/constraint.drfd and constraint.csv");
    Ok(())
}
