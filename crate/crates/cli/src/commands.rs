//! Subcommand implementations. Each returns a process exit code and
//! reports failures on stderr.

use std::fs;
use std::path::Path;

use convnet_core::error::Result;
use convnet_core::planner::{lint as lint_arch, plan, ArchSpec, LayerSpec, Severity};
use convnet_core::trainer::{evaluate, init_network, network_forward, train as train_loop, TrainConfig};
use convnet_core::{archfile, mnist, store, Error};

use crate::pgm;

fn read_arch(path: &Path) -> std::result::Result<ArchSpec, (u8, String)> {
    let text = fs::read_to_string(path)
        .map_err(|e| (2u8, format!("cannot read {}: {e}", path.display())))?;
    let default_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "arch".to_string());
    archfile::parse(&text, &default_name).map_err(|e| (2u8, e.to_string()))
}

pub fn lint(path: &Path, bytes_per_element: usize, json: bool) -> u8 {
    let arch = match read_arch(path) {
        Ok(arch) => arch,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return code;
        }
    };
    let diagnostics = lint_arch(&arch);
    let report = plan(&arch, bytes_per_element).ok();

    if json {
        let doc = serde_json::json!({
            "arch": arch.name,
            "plan": report,
            "diagnostics": diagnostics,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("report serializes"));
    } else {
        if let Some(report) = &report {
            println!("{:<6} {:<24} {:<12} {:>10} {:>12}", "layer", "spec", "output", "params", "activations");
            for layer in &report.layers {
                let shape = format!("{}x{}x{}", layer.output.0, layer.output.1, layer.output.2);
                println!(
                    "{:<6} {:<24} {:<12} {:>10} {:>12}",
                    layer.index, layer.layer, shape, layer.params, layer.activations
                );
            }
            println!(
                "total params {}  activations {}  activation bytes {} ({} per element)",
                report.total_params,
                report.total_activations,
                report.activation_bytes,
                report.bytes_per_element
            );
        }
        for d in &diagnostics {
            println!("{} {} layer {}: {}", d.severity, d.rule, d.layer, d.message);
        }
    }

    if diagnostics.iter().any(|d| d.severity == Severity::Error) {
        1
    } else {
        0
    }
}

pub fn train(
    arch_path: &Path,
    data_dir: &Path,
    out: &Path,
    lr: f64,
    batch: usize,
    epochs: usize,
    seed: u64,
) -> u8 {
    let arch = match read_arch(arch_path) {
        Ok(arch) => arch,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return code;
        }
    };
    match run_train(&arch, data_dir, out, lr, batch, epochs, seed) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run_train(
    arch: &ArchSpec,
    data_dir: &Path,
    out: &Path,
    lr: f64,
    batch: usize,
    epochs: usize,
    seed: u64,
) -> Result<()> {
    let data = mnist::load_train(data_dir)?;
    let cfg = TrainConfig {
        learning_rate: lr,
        batch_size: batch,
        epochs,
        rng_seed: seed,
        weight_init_scale: 1.0,
    };
    let mut net = init_network(arch, cfg.rng_seed, cfg.weight_init_scale)?;
    train_loop(&mut net, &data, &cfg, |r| {
        println!("epoch {} loss {:.6} acc {:.4}", r.epoch + 1, r.mean_loss, r.accuracy);
    })?;
    let bytes = store::save_to_path(&net, out)?;
    println!("checkpoint {} ({bytes} bytes)", out.display());
    Ok(())
}

pub fn eval(checkpoint: &Path, data_dir: &Path) -> u8 {
    match run_eval(checkpoint, data_dir) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run_eval(checkpoint: &Path, data_dir: &Path) -> Result<()> {
    let mut net = store::load_from_path(checkpoint)?;
    let data = mnist::load_test(data_dir)?;
    let accuracy = evaluate(&mut net, &data)?;
    println!("accuracy {accuracy:.4}");
    Ok(())
}

pub fn activations(checkpoint: &Path, index: usize, data_dir: &Path, out_dir: &Path) -> u8 {
    match run_activations(checkpoint, index, data_dir, out_dir) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run_activations(checkpoint: &Path, index: usize, data_dir: &Path, out_dir: &Path) -> Result<()> {
    let mut net = store::load_from_path(checkpoint)?;
    let conv_index = net
        .arch()
        .layers
        .iter()
        .position(|l| matches!(l, LayerSpec::Conv { .. }))
        .ok_or_else(|| Error::Arch("architecture has no convolutional layer".to_string()))?;

    let data = mnist::load_test(data_dir)?;
    if index >= data.len() {
        return Err(Error::Index(format!(
            "image index {index} out of range for {} test images",
            data.len()
        )));
    }

    network_forward(&mut net, data.image(index))?;
    let maps = &net.activations().expect("forward just ran")[conv_index];
    fs::create_dir_all(out_dir)?;
    for k in 0..maps.depth() {
        let pixels = pgm::scale_slice(maps, k);
        pgm::write(&out_dir.join(format!("act_{k}.pgm")), maps.width(), maps.height(), &pixels)?;
    }
    println!("wrote {} activation maps to {}", maps.depth(), out_dir.display());
    Ok(())
}
