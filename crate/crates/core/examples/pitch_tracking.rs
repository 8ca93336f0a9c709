//! Pitch of a synthetic utterance: raw estimate, then interpolated,
//! smoothed and log-compressed track.

use prosodic::pitch::{estimate_f0, extract_log_f0, PitchConfig};
use prosodic::synth::{default_voices, synthesize};

fn main() -> prosodic::Result<()> {
    let voice = &default_voices()[1];
    let utt = synthesize(voice, "demo", 4, 11);
    let cfg = PitchConfig::default();

    let raw = estimate_f0(&utt.audio, &cfg)?;
    let (smoothed, log) = extract_log_f0(&utt.audio, &cfg)?;
    println!(
        "{:.2}s of audio, {} frames, {:.0}% voiced",
        utt.audio.duration(),
        raw.len(),
        100.0 * raw.voiced_fraction()
    );
    println!("time_sec,raw_hz,voiced,smoothed_hz,log_f0");
    for i in (0..raw.len()).step_by(5) {
        println!(
            "{:.3},{:.1},{},{:.1},{:.4}",
            raw.center(i),
            raw.f0[i],
            raw.voiced[i],
            smoothed.f0[i],
            log.f0[i]
        );
    }
    Ok(())
}
