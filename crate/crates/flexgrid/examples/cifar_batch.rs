//! Decode CIFAR-10 binary records and wrap them as a dataset. The batch
//! here is fabricated in memory so the example runs without downloads;
//! point the same calls at real data_batch_*.bin files to use the originals.

use flexgrid::bench::{cifar_dataset, CIFAR10_CLASSES};
use flexgrid::config::Config;
use flexgrid::embed::embed_image;
use flexgrid::ingest::{load_cifar10_batch, CIFAR_RECORD_LEN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fake_batch(records: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bytes = Vec::with_capacity(records * CIFAR_RECORD_LEN);
    for _ in 0..records {
        bytes.push(rng.gen_range(0..10u8));
        bytes.extend((0..CIFAR_RECORD_LEN - 1).map(|_| rng.gen::<u8>()));
    }
    bytes
}

fn main() -> flexgrid::Result<()> {
    let train_bytes = fake_batch(8, 1);
    let test_bytes = fake_batch(4, 2);

    let records = load_cifar10_batch(&train_bytes)?;
    let (label, image) = &records[0];
    println!(
        "first record: {}x{} RGB, label {label} = {:?}",
        image.width, image.height, CIFAR10_CLASSES[*label as usize]
    );

    let dataset = cifar_dataset(&[&train_bytes], &test_bytes, Some(6), None)?;
    println!(
        "dataset {:?}: {} train / {} test, {} classes",
        dataset.manifest.name,
        dataset.train.len(),
        dataset.test.len(),
        dataset.manifest.class_names.len()
    );

    // 32x32 inputs need a tighter pipeline than the defaults.
    let mut config = Config::default();
    config.keypoints.target = 40;
    config.patch.side = 8;
    config.grid.rows = 3;
    config.grid.cols = 3;
    let embedding = embed_image(&dataset.train[0].0, &config)?;
    println!("embedded one 32x32 record into {} dims", embedding.len());
    Ok(())
}
