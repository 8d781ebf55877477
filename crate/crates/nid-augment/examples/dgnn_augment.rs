//! Two-fold adversarial training on a toy target, then refined generation.
//!
//! The generator pre-trains against a synthesised stand-in pool, fine-tunes
//! against the scarce "real" records, and then emits refined samples from
//! `G(y + z)`. On a 2-D shifted Gaussian the generated mean recovers the
//! target.
//!
//! Run: cargo run --release --example dgnn_augment [--full]

use ndarray::Array2;
use nid_augment::dgnn::{build_gan, generate_augmented, train_dgnn, TrainSchedule};
use nid_augment::rng::RandomSource;

fn target_sample(rng: &mut RandomSource, n: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, 2));
    for v in out.iter_mut() {
        *v = rng.sample_gaussian(3.0, 0.1f64.sqrt()).unwrap().max(0.0);
    }
    out
}

fn main() {
    let full = std::env::args().any(|a| a == "--full");
    let schedule = if full {
        TrainSchedule::default()
    } else {
        // a shortened run for a quick demo; pass --full for the real one
        TrainSchedule {
            pretrain_iters: 600,
            finetune_iters: 60,
            ..TrainSchedule::default()
        }
    };
    println!(
        "schedule: batch {}, {}+{} iterations, {} d-steps / {} g-steps per iteration",
        schedule.batch,
        schedule.pretrain_iters,
        schedule.finetune_iters,
        schedule.d_steps,
        schedule.g_steps
    );

    let mut rng = RandomSource::new(9001);
    let real = target_sample(&mut rng, 50); // the scarce records
    let synthesised = target_sample(&mut rng, 500); // stand-in for the Gibbs pool

    // architecture for 2-dimensional records
    let probe = build_gan(2, &mut rng.clone());
    println!(
        "discriminator {:?} ({} parameters), generator {:?} ({} parameters)",
        probe.d_net.dims(),
        probe.d_net.parameter_count(),
        probe.g_net.dims(),
        probe.g_net.parameter_count()
    );

    let trained = train_dgnn(&mut rng, &real, &synthesised, &schedule).unwrap();
    println!(
        "\ntrained: {} discriminator updates, {} generator updates",
        trained.audit.d_updates, trained.audit.g_updates
    );
    println!(
        "pre-training never saw a seed record: {}",
        trained.audit.pretrain_real_rows_from_seeds == 0
    );

    // objective trace, first and last few records
    for record in trained.history.iter().take(2) {
        println!(
            "  iteration {:4} {:8} {} value {:+.4}",
            record.iteration,
            record.phase.name(),
            record.step.name(),
            record.value
        );
    }
    println!("  ...");
    for record in trained.history.iter().rev().take(2).collect::<Vec<_>>().iter().rev() {
        println!(
            "  iteration {:4} {:8} {} value {:+.4}",
            record.iteration,
            record.phase.name(),
            record.step.name(),
            record.value
        );
    }

    let set = generate_augmented(&mut rng, &trained.pair, &synthesised, 1000).unwrap();
    let mean0 = set.samples.column(0).sum() / 1000.0;
    let mean1 = set.samples.column(1).sum() / 1000.0;
    println!("\ngenerated 1000 samples; mean ({mean0:.3}, {mean1:.3}), target (3.000, 3.000)");
    println!("generator checkpoint {}...", &set.generator_checkpoint[..16]);
    if !full {
        println!("(shortened schedule; run with --full for the complete one)");
    }
}
