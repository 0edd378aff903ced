//! Running commands in the subprocess sandbox.

use reflexive::sandbox::{run_code, SandboxConfig};

fn main() -> anyhow::Result<()> {
    let cfg = SandboxConfig::default();
    let out = run_code("echo hello from sh; echo oops >&2; exit 3", "sh", &cfg)?;
    println!("{}", out.summary());

    let out = run_code("print(sum(range(10)))", "python3", &cfg)?;
    println!(
        "python3: {:?} (network isolated: {})",
        out.stdout.trim(),
        out.network_isolated
    );

    let quick = SandboxConfig {
        timeout_secs: 0.5,
        ..cfg
    };
    match run_code("sleep 5", "sh", &quick) {
        Err(e) => println!("sleep 5: {e}"),
        Ok(o) => println!("sleep 5 unexpectedly finished: {}", o.summary()),
    }
    Ok(())
}
