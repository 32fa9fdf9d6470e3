use std::io::Write;

use anyhow::Context;

fn main() -> anyhow::Result<()> {
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let code = votelaw::cli::run(std::env::args_os(), &mut out, &mut std::io::stderr().lock());
    out.flush().context("writing standard output")?;
    drop(out);
    std::process::exit(code)
}
