//! Rate coding round trip: encode a gradient image, decode the firing rate back.

use spikedyn::encoding::{format_spike_train, poisson_encode, rate_decode, timing_encode, RateVariant, TimingVariant};

fn main() -> spikedyn::Result<()> {
    let image: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
    let steps = 2000;
    let train = poisson_encode(&image, steps, 42)?;
    println!("channel  intensity  empirical rate");
    for (c, x) in image.iter().enumerate() {
        println!("{c:7}  {x:9.3}  {:14.3}", train.count(c) as f64 / steps as f64);
    }

    // pooled population rate over a 100-step window
    let rates = rate_decode(&train, 100, RateVariant::Population, 1, image.len())?;
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    println!("mean population rate {mean:.3} (expected {:.3})", image.iter().sum::<f64>() / 8.0);

    let short = poisson_encode(&image[5..], 12, 1)?;
    print!("{}", format_spike_train(&short));
    let isi = timing_encode(&short, TimingVariant::Isi);
    println!("inter-spike intervals of channel 0: {:?}", isi.timings[0]);
    Ok(())
}
