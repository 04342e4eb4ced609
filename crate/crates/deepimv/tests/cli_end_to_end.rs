//! End-to-end runs of the command-line surface, in process.

use deepimv::cli::run;

fn argv(parts: &[&str]) -> Vec<String> {
    std::iter::once("deepimv")
        .chain(parts.iter().copied())
        .map(str::to_string)
        .collect()
}

/// A config small enough that the whole pipeline runs in seconds.
fn tiny_config(data_dir: &str, out_dir: &str) -> String {
    format!(
        "data_dir = {data_dir}\n\
         output_dir = {out_dir}\n\
         synth_samples = 220\n\
         synth_views = 2\n\
         synth_factors = 4\n\
         synth_view_dim = 5\n\
         synth_noise = 0.1\n\
         synth_label_flip = 0.02\n\
         epochs = 8\n\
         patience = 8\n\
         batch_size = 32\n\
         learning_rate = 0.002\n\
         dropout = 0.2\n\
         latent_dim = 3\n\
         encoder_hidden = 8\n\
         predictor_hidden = 4\n\
         seed = 17\n\
         repeats = 1\n\
         r_grid = 0,0.5\n"
    )
}

#[test]
fn synth_train_eval_predict_project_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    let out_dir = tmp.path().join("out");
    let cfg_path = tmp.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        tiny_config(data_dir.to_str().unwrap(), out_dir.to_str().unwrap()),
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();

    assert_eq!(run(&argv(&["synth", "--config", cfg])), 0);
    assert!(data_dir.join("view_1.csv").exists());
    assert!(data_dir.join("view_2.csv").exists());
    assert!(data_dir.join("labels.csv").exists());
    assert!(data_dir.join("mask.csv").exists());

    assert_eq!(run(&argv(&["train", "--config", cfg])), 0);
    assert!(out_dir.join("checkpoint.json").exists());
    assert!(out_dir.join("history.csv").exists());
    assert!(out_dir.join("config_echo.txt").exists());

    assert_eq!(run(&argv(&["eval", "--config", cfg])), 0);
    assert!(out_dir.join("metrics.csv").exists());
    assert!(out_dir.join("metrics_long.csv").exists());

    assert_eq!(run(&argv(&["predict", "--config", cfg, "views=1"])), 0);
    let predictions = std::fs::read_to_string(out_dir.join("predictions.csv")).unwrap();
    assert!(predictions.starts_with("id,label,p0,p1\n"));
    assert_eq!(predictions.lines().count(), 221);

    assert_eq!(run(&argv(&["project", "--config", cfg])), 0);
    let projection = std::fs::read_to_string(out_dir.join("projection.csv")).unwrap();
    assert!(projection.starts_with("id,label,pc1,pc2\n"));

    assert_eq!(run(&argv(&["gradcheck", "--config", cfg])), 0);
    assert!(out_dir.join("gradcheck.txt").exists());
}

#[test]
fn rerunning_the_echoed_config_reproduces_outputs_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    let out_a = tmp.path().join("out_a");
    let out_b = tmp.path().join("out_b");
    let cfg_path = tmp.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        tiny_config(data_dir.to_str().unwrap(), out_a.to_str().unwrap()),
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();

    assert_eq!(run(&argv(&["synth", "--config", cfg])), 0);
    assert_eq!(run(&argv(&["train", "--config", cfg])), 0);

    // Re-run from the echoed config into a second output directory.
    let echo_path = out_a.join("config_echo.txt");
    assert!(echo_path.exists());
    let echo = echo_path.to_str().unwrap();
    assert_eq!(
        run(&argv(&[
            "train",
            "--config",
            echo,
            &format!("output_dir={}", out_b.to_str().unwrap()),
        ])),
        0
    );

    let history_a = std::fs::read(out_a.join("history.csv")).unwrap();
    let history_b = std::fs::read(out_b.join("history.csv")).unwrap();
    assert_eq!(history_a, history_b);
    let ckpt_a = std::fs::read(out_a.join("checkpoint.json")).unwrap();
    let ckpt_b = std::fs::read(out_b.join("checkpoint.json")).unwrap();
    assert_eq!(ckpt_a, ckpt_b);
}

#[test]
fn sweep_and_ablate_emit_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    let out_dir = tmp.path().join("out");
    let cfg_path = tmp.path().join("run.cfg");
    let mut text = tiny_config(data_dir.to_str().unwrap(), out_dir.to_str().unwrap());
    text.push_str("epochs = 3\nmissing_rate = 0.4\n");
    std::fs::write(&cfg_path, text).unwrap();
    let cfg = cfg_path.to_str().unwrap();

    assert_eq!(run(&argv(&["synth", "--config", cfg])), 0);
    assert_eq!(run(&argv(&["sweep", "--config", cfg])), 0);
    let sweep = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    // header + (deepimv + base1) x 2 rates
    assert_eq!(sweep.lines().count(), 5);
    assert!(out_dir.join("sweep_long.csv").exists());

    assert_eq!(run(&argv(&["ablate", "--config", cfg])), 0);
    let ablation = std::fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    // header + 4 variants x 2 view counts
    assert_eq!(ablation.lines().count(), 9);
}

#[test]
fn usage_and_io_failures_map_to_exit_codes() {
    // unknown command -> 1
    assert_eq!(run(&argv(&["wat"])), 1);
    // missing data -> 2 (the directory does not exist)
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    assert_eq!(
        run(&argv(&[
            "train",
            &format!("data_dir={}", missing.to_str().unwrap()),
            &format!("output_dir={}", tmp.path().join("o").to_str().unwrap()),
        ])),
        2
    );
}

#[test]
fn commands_do_not_mutate_the_input_data_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    let out_dir = tmp.path().join("out");
    let cfg_path = tmp.path().join("run.cfg");
    std::fs::write(
        &cfg_path,
        tiny_config(data_dir.to_str().unwrap(), out_dir.to_str().unwrap()),
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();
    assert_eq!(run(&argv(&["synth", "--config", cfg])), 0);

    let snapshot: Vec<(String, Vec<u8>)> = {
        let mut entries: Vec<_> = std::fs::read_dir(&data_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        entries
            .iter()
            .map(|p| {
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    std::fs::read(p).unwrap(),
                )
            })
            .collect()
    };

    assert_eq!(run(&argv(&["train", "--config", cfg])), 0);
    assert_eq!(run(&argv(&["eval", "--config", cfg])), 0);
    assert_eq!(run(&argv(&["predict", "--config", cfg])), 0);

    for (name, bytes) in snapshot {
        let now = std::fs::read(data_dir.join(&name)).unwrap();
        assert_eq!(now, bytes, "{name} changed");
    }
}
