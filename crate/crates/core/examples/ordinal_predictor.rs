//! Trains the token predictor on a rule-based synthetic corpus and compares
//! it with uniformly random labels.

use prosodic::predictor::{
    encode_ordinal, loss_trace_csv, model_for, predict_labels, random_labels, score_labels,
    synthetic_rule_corpus, train, PredictorConfig,
};

fn main() -> prosodic::Result<()> {
    println!("rank 3 of 15 as cumulative target: {:?}", encode_ordinal(3, 15)?.as_f64());
    let k = 15;
    let data = synthetic_rule_corpus(300, 10, k, 0.03, 1);
    let (train_set, test_set) = data.split_at(250);
    let cfg = PredictorConfig {
        epochs: 20,
        ..PredictorConfig::default()
    };
    let (model, trace) = train(model_for(train_set, k, cfg, 2)?, train_set, 3)?;
    print!("{}", loss_trace_csv(&trace));

    let truth: Vec<_> = test_set.iter().map(|u| u.labels.clone()).collect();
    let predicted = test_set
        .iter()
        .map(|u| predict_labels(&model, &u.labels.utterance_id, &u.labels.phones, &u.speaker, None))
        .collect::<prosodic::Result<Vec<_>>>()?;
    for (name, labels) in [("predictor", predicted), ("random", random_labels(&truth, k, 9))] {
        let s = score_labels(&labels, &truth)?;
        println!(
            "{name:<9} accuracy f0 {:.3} dur {:.3}  mean abs token error {:.3}",
            s.accuracy_f0,
            s.accuracy_dur,
            s.mae()
        );
    }
    Ok(())
}
