//! MCD, FFE, VDE and GPE between a synthetic utterance and a slower,
//! higher-pitched rendition of the same voice.

use prosodic::metrics::{compare_audio, report_csv, MetricsConfig};
use prosodic::pitch::PitchConfig;
use prosodic::synth::{default_voices, synthesize, Voice};

fn main() -> prosodic::Result<()> {
    let voice = default_voices()[1].clone();
    let reference = synthesize(&voice, "ref", 4, 21);
    let mut reports = vec![compare_audio("identical", &reference.audio, &reference.audio, &PitchConfig::default(), &MetricsConfig::default())?];
    for (name, f0, tempo) in [("pitch_up_3st", 1.189, 1.0), ("slower", 1.0, 0.8), ("pitch_up_30pct", 1.3, 1.0)] {
        let variant = Voice {
            base_f0: voice.base_f0 * f0,
            tempo: voice.tempo * tempo,
            ..voice.clone()
        };
        let test = synthesize(&variant, name, 4, 21);
        reports.push(compare_audio(name, &reference.audio, &test.audio, &PitchConfig::default(), &MetricsConfig::default())?);
    }
    print!("{}", report_csv(&reports));
    Ok(())
}
