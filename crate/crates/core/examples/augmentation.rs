//! Assigns the twelve pitch/tempo transforms over a small feature corpus and
//! shows one original utterance next to its transformed copy.

use prosodic::alignment::PhonemeProsody;
use prosodic::augment::{augment_corpus, make_plan, RateSemantics, Transform, AUG_SUFFIX};
use prosodic::features::{Corpus, Utterance};

fn main() -> prosodic::Result<()> {
    let mut corpus = Corpus::new();
    for i in 0..24 {
        let id = format!("utt{i:02}");
        let phones = ["HH", "AH", "L", "OW"]
            .iter()
            .enumerate()
            .map(|(j, l)| PhonemeProsody {
                label: l.to_string(),
                mean_log_f0: (120.0 + 10.0 * j as f64 + i as f64).ln(),
                duration: 0.06 + 0.01 * j as f64,
            })
            .collect();
        corpus.insert(id.clone(), Utterance { id, speaker: "spk".into(), phones });
    }
    let ids: Vec<&String> = corpus.keys().collect();
    let plan = make_plan(&ids, 42)?;
    for (t, n) in Transform::all().iter().zip(plan.counts()) {
        println!("{:<12} {:>5}  {n} utterances", t.kind(), t.parameter());
    }

    let doubled = augment_corpus(&corpus, &plan, RateSemantics::SpeakingRate)?;
    println!("\n{} utterances -> {}", corpus.len(), doubled.len());
    let t = plan.assignments["utt00"];
    println!("utt00 gets {} {}", t.kind(), t.parameter());
    let copy = &doubled[&format!("utt00{AUG_SUFFIX}")];
    for (a, b) in corpus["utt00"].phones.iter().zip(&copy.phones) {
        println!(
            "  {:<3} {:6.1} Hz {:.3}s  ->  {:6.1} Hz {:.3}s",
            a.label,
            a.mean_log_f0.exp(),
            a.duration,
            b.mean_log_f0.exp(),
            b.duration
        );
    }
    Ok(())
}
