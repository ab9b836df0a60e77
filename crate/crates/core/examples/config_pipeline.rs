//! The command-line pipeline driven from code: load a bundled config, solve
//! stabilize-avoid, simulate, and export the value to CSV. Everything lands
//! in `out/examples/pipeline`.

use std::path::Path;

use discount_reach::cli;

fn main() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/integrator1d_sa.toml");
    let out = Path::new("out/examples/pipeline");
    let cfg = match cli::load_config(&config, Some(out)) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    };
    println!("{}", cfg.to_toml().expect("config serializes"));

    for (name, code) in [("solve-sa", cli::cmd_solve_sa(&cfg)), ("simulate", cli::cmd_simulate(&cfg))] {
        println!("{name}: exit {code}");
        if code != cli::EXIT_OK {
            std::process::exit(code);
        }
    }
    let code = cli::cmd_export(&out.join("sa/sa.drfd"), "csv", None);
    println!("export: exit {code}");

    let mut files: Vec<String> = walk(out).into_iter().map(|p| p.display().to_string()).collect();
    files.sort();
    let (snaps, rest): (Vec<String>, Vec<String>) = files.into_iter().partition(|f| f.contains("/snapshots/"));
    for f in rest {
        println!("  {f}");
    }
    println!("  and {} snapshot slices", snaps.len());
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        let p = entry.path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
