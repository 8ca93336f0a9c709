//! Trains a prosody codebook on three synthetic speakers, labels an
//! utterance, then adds an unseen speaker without touching the clusters.

use prosodic::alignment::phoneme_prosody;
use prosodic::clustering::{build_label_sequence, train_codebook, ClusteringConfig};
use prosodic::features::{Corpus, Utterance};
use prosodic::pitch::{extract_log_f0, PitchConfig};
use prosodic::synth::{default_voices, synthesize, unseen_voice, Voice};

fn features(voice: &Voice, n: usize, seed: u64) -> prosodic::Result<Vec<Utterance>> {
    (0..n)
        .map(|i| {
            let utt = synthesize(voice, &format!("{}_{i:02}", voice.speaker_id), 5, seed + i as u64);
            let (_, log) = extract_log_f0(&utt.audio, &PitchConfig::default())?;
            Ok(Utterance {
                id: utt.id,
                speaker: utt.speaker,
                phones: phoneme_prosody(&log, &utt.segments)?,
            })
        })
        .collect()
}

fn main() -> prosodic::Result<()> {
    let mut corpus = Corpus::new();
    for (v, voice) in default_voices().iter().enumerate() {
        for u in features(voice, 12, 100 * v as u64)? {
            corpus.insert(u.id.clone(), u);
        }
    }
    let (mut book, warnings) = train_codebook(&corpus, &ClusteringConfig::default(), 3)?;
    println!("{} sparse phonemes use quantile intervals", warnings.len());
    println!("F0 centroids (z): {:.2?}", book.f0_centroids);
    let hash = book.content_hash();

    let first = corpus.values().next().unwrap();
    let labels = build_label_sequence(first, &book)?;
    println!("\n{} ({}):", first.id, first.speaker);
    for i in 0..labels.len() {
        println!("  {:<3} f0 {:>2}  dur {:>2}", labels.phones[i], labels.f0_tokens[i], labels.dur_tokens[i]);
    }

    let new = features(&unseen_voice(), 6, 900)?;
    let f0: Vec<f64> = new.iter().flat_map(|u| u.phones.iter().map(|p| p.mean_log_f0)).collect();
    let dur: Vec<f64> = new.iter().flat_map(|u| u.phones.iter().map(|p| p.duration)).collect();
    book.adapt(&unseen_voice().speaker_id, &f0, &dur)?;
    assert_eq!(book.content_hash(), hash);
    let stats = &book.speakers[&unseen_voice().speaker_id];
    println!("\nadapted {}: mu {:.3} sigma {:.3}, clusters unchanged", stats.speaker_id, stats.mu, stats.sigma);
    let tokens = build_label_sequence(&new[0], &book)?;
    println!("{} F0 tokens: {:?}", new[0].id, tokens.f0_tokens);
    Ok(())
}
