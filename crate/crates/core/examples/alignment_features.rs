//! Phone-level mean log-F0 and duration from an alignment file.

use std::path::Path;

use prosodic::alignment::{parse_alignment_str, phoneme_prosody, write_alignment};
use prosodic::pitch::{extract_log_f0, PitchConfig};
use prosodic::synth::{default_voices, synthesize};

fn main() -> prosodic::Result<()> {
    let utt = synthesize(&default_voices()[2], "demo", 3, 8);
    let tsv = write_alignment(&utt.segments);
    print!("{tsv}");

    let segments = parse_alignment_str(&tsv, Path::new("demo.tsv"))?;
    let (_, log_f0) = extract_log_f0(&utt.audio, &PitchConfig::default())?;
    println!("\nphoneme,mean_log_f0,f0_hz,duration");
    for p in phoneme_prosody(&log_f0, &segments)? {
        println!("{},{:.4},{:.1},{:.4}", p.label, p.mean_log_f0, p.mean_log_f0.exp(), p.duration);
    }
    Ok(())
}
