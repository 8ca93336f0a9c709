//! Log-mel spectrogram and mel cepstrum of a synthetic utterance.

use prosodic::signal::{inverse_cepstrum, mel_cepstrum, mel_spectrogram, MelConfig};
use prosodic::synth::{default_voices, synthesize, SAMPLE_RATE};

fn main() -> prosodic::Result<()> {
    let utt = synthesize(&default_voices()[0], "demo", 3, 5);
    let cfg = MelConfig {
        frame_len: 640,
        hop: 160,
        n_fft: 1024,
        n_mels: 40,
        fmin: 0.0,
        fmax: SAMPLE_RATE as f64 / 2.0,
    };
    let spec = mel_spectrogram(&utt.audio, &cfg)?;
    let full = mel_cepstrum(&spec, cfg.n_mels)?;
    let mid = spec.n_frames() / 2;
    let back = inverse_cepstrum(full.row(mid));
    let err = back
        .iter()
        .zip(spec.frames.row(mid).iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("{} frames x {} mel bands, hop {:.3}s", spec.n_frames(), spec.n_mels, spec.frame_hop);
    println!("first 13 cepstral coefficients of frame {mid}:");
    for (i, c) in full.row(mid).iter().take(13).enumerate() {
        println!("  c{i:<2} {c:>9.3}");
    }
    println!("max reconstruction error from the full cepstrum: {err:.2e}");
    Ok(())
}
