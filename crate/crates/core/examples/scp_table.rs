//! Prints the SCP table of a built-in scene.
//!
//! `cargo run --release -p sensocom-core --example scp_table -- room12 1000 long`

use sensocom::engine::{estimate_scp_all, ScpParams};
use sensocom::sim::SceneDocument;
use sensocom::{fixtures, World};

fn main() -> sensocom::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let scene = args.get(1).map(String::as_str).unwrap_or("room12");
    let n = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let agent = args.get(3).map(String::as_str).unwrap_or("short");
    let env = if scene.ends_with(".json") {
        SceneDocument::load(std::path::Path::new(scene))?.environment()?
    } else {
        fixtures::environment(scene)?
    };
    let world = World::load(env, fixtures::agent(agent)?)?;
    let t0 = std::time::Instant::now();
    let table = estimate_scp_all(&world, &ScpParams { n_trials: n, ..ScpParams::default() })?;
    print!("{}", table.to_csv());
    eprintln!("{:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
