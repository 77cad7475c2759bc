//! Dense layers with exact backprop: checks one gradient against a finite
//! difference, then fits y = sin(x) with Adam.

use ndarray::Array2;

use fetalguard::nn::{adam_step, chain_specs, init_network, Activation, AdamConfig, AdamState, LayerSpec};

fn main() -> fetalguard::Result<()> {
    let mut specs = chain_specs(&[1, 32, 32], Activation::Relu);
    specs.push(LayerSpec::new(32, 1, Activation::Identity));
    let mut net = init_network(&specs, 3)?;
    println!("parameters: {}", net.parameter_count());

    let xs: Vec<f64> = (0..64).map(|i| -3.0 + 6.0 * i as f64 / 63.0).collect();
    let x = Array2::from_shape_vec((64, 1), xs.clone())?;
    let y = Array2::from_shape_vec((64, 1), xs.iter().map(|v| v.sin()).collect())?;
    let mse = |net: &fetalguard::nn::DenseNetwork| -> fetalguard::Result<f64> {
        let out = net.infer_batch(x.view())?;
        Ok((&out - &y).mapv(|d| d * d).mean().unwrap())
    };

    // dL/dout for the mean squared error
    let grads = |net: &fetalguard::nn::DenseNetwork| -> fetalguard::Result<_> {
        let (out, cache) = net.forward_batch(x.view())?;
        let g = (&out - &y) * (2.0 / y.len() as f64);
        Ok(net.backward(&cache, g.view())?.0)
    };

    let analytic = grads(&net)?.flatten();
    let k = 40;
    let h = 1e-6;
    let base = *net.parameter_mut(k);
    *net.parameter_mut(k) = base + h;
    let up = mse(&net)?;
    *net.parameter_mut(k) = base - h;
    let down = mse(&net)?;
    *net.parameter_mut(k) = base;
    println!("dL/dw[{k}] analytic {:.8} numeric {:.8}", analytic[k], (up - down) / (2.0 * h));

    let mut state = AdamState::new(&net, AdamConfig::new(0.01, 0.9));
    for step in 0..=1500 {
        if step % 300 == 0 {
            println!("step {step:>4}  mse {:.5}", mse(&net)?);
        }
        let g = grads(&net)?;
        adam_step(&mut net, &g, &mut state)?;
    }
    Ok(())
}
