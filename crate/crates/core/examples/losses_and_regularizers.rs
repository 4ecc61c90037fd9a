//! The adversarial losses on hand-picked logits, R1 on a linear critic and
//! LabelMix on a random discriminator.

use ocogan::autograd::{Tensor, Var};
use ocogan::losses::{
    class_weights, labelmix_loss, labelmix_mask, loss_d_cond, loss_d_uncond, loss_g_cond, loss_g_uncond, r1_penalty,
};
use ocogan::datagen::one_hot_batch;
use ocogan::{Discriminator, RunConfig};
use rand::SeedableRng;

fn main() -> ocogan::Result<()> {
    let zero = Var::constant(Tensor::<f64>::zeros(&[4]));
    println!("uncond D at 0 = {:.6} (2 ln 2)", loss_d_uncond(&zero, &zero).item());
    println!("uncond G at 0 = {:.6} (ln 2)", loss_g_uncond(&zero).item());

    let labels = [0u8, 0, 1, 2];
    let seg: Tensor<f64> = one_hot_batch(&[&labels], 2, 2, 3)?;
    let alpha = class_weights(&seg);
    let flat = Var::constant(Tensor::zeros(&[1, 4, 2, 2]));
    println!("class weights {:?}", alpha.data());
    println!("cond D at flat logits = {:.6} (2 ln 4)", loss_d_cond(&flat, &seg, &flat, &alpha).item());
    println!("cond G at flat logits = {:.6} (ln 4)", loss_g_cond(&flat, &seg, &alpha).item());

    let w = Tensor::<f64>::from_fn(&[1, 3, 2, 2], |i| i as f64 / 10.0);
    let x = Tensor::from_fn(&[2, 3, 2, 2], |i| (i as f64).sin());
    let r1 = r1_penalty(&x, 10.0, |x| {
        let n = x.shape()[0];
        Ok(x.mul(&Var::constant(w.broadcast_to(x.shape()))).sum_keep(&[1, 2, 3]).reshape(&[n]))
    })?;
    let norm2: f64 = w.data().iter().map(|v| v * v).sum();
    println!("R1 of a linear critic = {:.6} (gamma/2 |w|^2 = {:.6})", r1.item(), 5.0 * norm2);

    let cfg = RunConfig::tiny();
    let res = cfg.data.resolution;
    let d: Discriminator<f64> = Discriminator::new(&cfg.model, res, 4, 0)?;
    let maps: Vec<u8> = (0..res * res).map(|p| ((p / res) * 4 / res) as u8).collect();
    let seg: Tensor<f64> = one_hot_batch(&[&maps], res, res, 4)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mask = labelmix_mask(&seg, &mut rng);
    let real = Tensor::from_fn(&[1, 3, res, res], |i| ((i % 7) as f64 - 3.0) / 3.0);
    let fake = real.map(|v| -v);
    let lm = labelmix_loss(&real, &fake, &mask, |x| Ok(d.forward(x)?.pixel_logits))?;
    println!("LabelMix consistency on a random D = {:.6}", lm.item());
    Ok(())
}
