//! A single LIF neuron under constant drive, and the spike-response form of the same run.

use spikedyn::neuron::{lif_step, srm_membrane, NeuronParams, NeuronState};

fn main() -> spikedyn::Result<()> {
    let params = NeuronParams::new(20.0, 20.0, 1.0, 0.0, 1.0)?;
    let drive = 0.08;
    let mut state = NeuronState::at(0.0);
    let mut fired = Vec::new();
    for step in 0..100 {
        let (next, spikes) = lif_step(state, drive, &params)?;
        if spikes > 0 {
            fired.push(step);
        }
        state = next;
    }
    println!("constant drive {drive}: spikes at steps {fired:?}");

    // steady state tau_r * drive = 1.6 > threshold, so the neuron fires periodically
    let gaps: Vec<usize> = fired.windows(2).map(|w| w[1] - w[0]).collect();
    println!("inter-spike gaps {gaps:?}");

    let drives = vec![drive; 10];
    let mut s = NeuronState::at(0.0);
    for &d in &drives {
        s = lif_step(s, d, &params)?.0;
    }
    println!("after 10 steps: iterated {:.12}, closed form {:.12}", s.u, srm_membrane(&drives, 0, 9, &params)?);
    Ok(())
}
