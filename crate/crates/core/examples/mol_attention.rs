//! Mixture-of-logistics attention stepping over a random encoder sequence.
//! Prints the alignment as a coarse text heat map.

use ndarray::Array2;
use prosodic::mol::{run_alignment, QueryProjection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> prosodic::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (steps, n, hidden) = (30, 24, 16);
    let mut proj = QueryProjection::random(hidden, 8, 3, 0.3, &mut rng);
    // push the mean increments toward roughly one encoder position per step
    for i in 0..3 {
        proj.b2[i] = -0.8;
    }
    let queries = Array2::from_shape_fn((steps, hidden), |_| rng.gen_range(-1.0..1.0));
    let encoder = Array2::from_shape_fn((n, 4), |_| rng.gen_range(-1.0..1.0));
    let run = run_alignment(queries.view(), encoder.view(), &proj)?;

    let shades = [' ', '.', ':', '+', '#'];
    for (t, row) in run.alignment.rows().into_iter().enumerate() {
        let line: String = row.iter().map(|&a| shades[((a * 10.0) as usize).min(4)]).collect();
        let mu = run.mu_trajectory.row(t);
        println!("{t:>2} |{line}| mass {:.3}  mu {:.2?}", row.sum(), mu.to_vec());
    }
    Ok(())
}
