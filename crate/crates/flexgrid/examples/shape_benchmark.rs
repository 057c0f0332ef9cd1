//! Miniature end-to-end benchmark: generate the three-class shape data,
//! embed both splits, train the classifier head, report test accuracy.

use flexgrid::bench::{embed_set, synthetic_dataset};
use flexgrid::config::Config;
use flexgrid::learn::{evaluate, train, MlpModel};

fn main() -> flexgrid::Result<()> {
    let mut config = Config::default();
    config.train.epochs = 40;
    let dataset = synthetic_dataset(20, 10, 96, 0.3, config.seed)?;
    println!(
        "dataset {:?}: {} train / {} test, classes {:?}",
        dataset.manifest.name,
        dataset.train.len(),
        dataset.test.len(),
        dataset.manifest.class_names
    );

    let (train_set, sec) = embed_set(&dataset.train, &config)?;
    println!("embedded train split at {:.1} images/s", 1.0 / sec);
    let (test_set, _) = embed_set(&dataset.test, &config)?;

    let dim = train_set[0].0.len();
    let model = MlpModel::init(&[dim, config.train.hidden, 3], config.seed)?;
    let (model, history) = train(
        model,
        &train_set,
        &test_set,
        config.train.epochs,
        config.train.batch,
        config.train.lr,
        config.seed,
    )?;
    for (i, stats) in history.iter().enumerate().step_by(5) {
        println!(
            "epoch {:>2}: train loss {:.4}, test acc {:.3}",
            i + 1,
            stats.train_loss,
            stats.test_acc
        );
    }

    let (acc, loss) = evaluate(&model, &test_set)?;
    println!("final: test accuracy {acc:.3}, test loss {loss:.4}");
    Ok(())
}
