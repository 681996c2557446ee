//! Writes the deterministic 1000-record demo access log to a file.
//!
//! Usage: `cargo run -p navrec --example synth_log -- [PATH]`

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "access.log".to_string());
    std::fs::write(&path, navrec::synth::noise_corpus_log()).expect("write demo log");
    eprintln!("wrote {path}");
}
