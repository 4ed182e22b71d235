//! Finite-difference checks of the complete loss in every mode.

mod common;

use common::{example, micro, random};
use tec_grad::gradcheck::{check_gradients, GradCheckConfig, Stencil};
use tec_model::{variant_factory, Mode};

fn check(mode: Mode) {
    let model = variant_factory(mode, &micro(mode)).unwrap();
    let mut store = model.init_params(11).unwrap();
    // Zero biases put the first prenet step exactly on a ReLU kink.
    let names: Vec<String> = store.trainable_names().map(str::to_string).collect();
    for (k, n) in names.iter().enumerate() {
        if !n.starts_with("attention") && (n.ends_with("bias") || n.ends_with("beta") || n.ends_with("gamma")) {
            let shape = store.get(n).unwrap().shape().to_vec();
            let mut t = random(&shape, 500 + k as u64, 0.1);
            if n.ends_with("gamma") {
                t.data_mut().iter_mut().for_each(|v| *v += 1.0);
            }
            store.set(n, t).unwrap();
        }
    }
    let batch = vec![example(mode, 9, 8, 1), example(mode, 7, 8, 2)];
    // Training-mode batch norm over a handful of rows has strong curvature;
    // the five-point stencil keeps truncation error well below tolerance.
    let cfg = GradCheckConfig { stencil: Stencil::FivePoint, ..Default::default() };
    let report = check_gradients(&store, true, &cfg, |g| {
        Ok(model.batch_loss(g, &batch).map_err(|e| tec_grad::Error::Invalid { op: "loss", msg: e.to_string() })?.0)
    })
    .unwrap();
    eprintln!("{mode}: {} entries, {} skipped at kinks, max rel {:e}", report.checked, report.skipped, report.max_rel_error);
    assert!(report.skipped * 20 < report.checked, "{mode}: too many kink crossings ({})", report.skipped);
    assert!(report.passed(), "{mode}: {:?}", &report.failures[..report.failures.len().min(5)]);
}

#[test]
fn tec_loss_gradients() {
    check(Mode::Tec);
}

#[test]
fn vanilla_loss_gradients() {
    check(Mode::Vanilla);
}

#[test]
fn aec_loss_gradients() {
    check(Mode::AecSeq2seq);
}
