// Copyright (c) 2026 expdate authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: dataset generation, training, end-to-end
// evaluation, and single-image inference.

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <string>

#include "expdate/expdate.hpp"

namespace {

using namespace expdate;

void print_rows(const std::string& title, const std::vector<LayerRow>& rows) {
  std::cout << title << "\n";
  for (const LayerRow& r : rows)
    std::cout << "  " << std::left << std::setw(22) << r.name << std::setw(24)
              << r.output_shape << std::right << std::setw(12) << r.params << "\n";
}

struct GenDataArgs {
  std::string kind = "unrealistic";
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t height = 64, width = 256;
  std::size_t jobs = 0;
};

int run_gen_data(const GenDataArgs& a) {
  DatasetManifest manifest = generate_dataset(a.count, *parse_date_kind(a.kind), a.seed,
                                              a.height, a.width, a.out, a.jobs);
  std::cout << "wrote " << manifest.records.size() << " " << a.kind << " pairs ("
            << a.height << "x" << a.width << ") to " << a.out << "\n"
            << "manifest: " << a.out << "/manifest.jsonl" << std::endl;
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string scale = "toy";
  std::size_t epochs = 50;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::string optimizer = "adam";
  std::string out;
  std::string metrics;
  bool dry_run = false;
};

int check_train_args(const TrainArgs& a) {
  if (a.dry_run) return 0;
  if (a.data.empty()) {
    std::cerr << "error: --data is required unless --dry-run is given" << std::endl;
    return 2;
  }
  if (a.out.empty()) {
    std::cerr << "error: --out is required unless --dry-run is given" << std::endl;
    return 2;
  }
  return 0;
}

TrainOptions train_options(const TrainArgs& a) {
  TrainOptions opt;
  opt.epochs = a.epochs;
  opt.batch_size = a.batch;
  opt.lr = a.lr;
  opt.seed = a.seed;
  opt.optimizer = parse_optimizer(a.optimizer);
  opt.out = a.out;
  opt.metrics = a.metrics.empty() ? a.out + ".metrics.csv" : a.metrics;
  opt.log = &std::cout;
  return opt;
}

int run_train_vae(const TrainArgs& a) {
  if (int rc = check_train_args(a)) return rc;
  VaeConfig cfg = a.scale == "paper" ? VaeConfig::paper() : VaeConfig::toy();
  validate_config(cfg);
  if (a.dry_run) {
    Rng rng(a.seed);
    VaeParams<float> params = vae_init<float>(rng, cfg);
    std::size_t live = 0;
    params.visit([&](const std::string&, Tensor<float>& t, bool) { live += t.size(); });
    print_rows("Encoder", encoder_summary(cfg));
    std::cout << "  encoder parameters: " << encoder_param_count(cfg) << "\n";
    print_rows("Decoder", decoder_summary(cfg));
    std::cout << "  decoder parameters: " << decoder_param_count(cfg) << "\n"
              << "total parameters: "
              << encoder_param_count(cfg) + decoder_param_count(cfg)
              << " (allocated " << live << ")" << std::endl;
    return 0;
  }
  Dataset<float> data = load_dataset<float>(a.data);
  std::cout << "training vae (" << a.scale << ") on " << data.samples.size()
            << " pairs from " << a.data << std::endl;
  train_vae(cfg, data, train_options(a));
  std::cout << "checkpoint: " << a.out << std::endl;
  return 0;
}

int run_train_crnn(const TrainArgs& a) {
  if (int rc = check_train_args(a)) return rc;
  CrnnConfig cfg = a.scale == "paper" ? CrnnConfig::paper() : CrnnConfig::toy();
  validate_config(cfg);
  if (a.dry_run) {
    Rng rng(a.seed);
    CrnnParams<float> params = crnn_init<float>(rng, cfg);
    std::size_t live = 0;
    params.visit([&](const std::string&, Tensor<float>& t, bool) { live += t.size(); });
    print_rows("CRNN", crnn_summary(cfg));
    std::cout << "total parameters: " << crnn_param_count(cfg) << " (allocated "
              << live << ")" << std::endl;
    return 0;
  }
  Dataset<float> data = load_dataset<float>(a.data);
  std::cout << "training crnn (" << a.scale << ") on " << data.samples.size()
            << " filled-in targets from " << a.data << std::endl;
  train_crnn(cfg, data, train_options(a));
  std::cout << "checkpoint: " << a.out << std::endl;
  return 0;
}

struct EvalArgs {
  std::string vae_ckpt, crnn_ckpt, data, report, grid;
  bool ascii = false;
};

int run_eval(const EvalArgs& a) {
  auto [vcfg, vae, vmeta] = load_vae_checkpoint<float>(a.vae_ckpt);
  auto [ccfg, crnn, cmeta] = load_crnn_checkpoint<float>(a.crnn_ckpt);
  Dataset<float> data = load_dataset<float>(a.data);
  PipelineReport report = evaluate_pipeline(vcfg, vae, ccfg, crnn, data);
  report.dataset_dir = a.data;
  report.vae_checkpoint = a.vae_ckpt;
  report.vae_epoch = vmeta.epoch;
  report.crnn_checkpoint = a.crnn_ckpt;
  report.crnn_epoch = cmeta.epoch;
  save_pipeline_report(a.report, report);
  if (!a.grid.empty()) write_png_gray(a.grid, reconstruction_grid(vcfg, vae, data));
  std::cout << "samples:  " << report.sample_count << "\n"
            << "accuracy: " << detail::fmt_g(report.accuracy) << "\n"
            << "latency:  " << detail::fmt_g(report.mean_latency_ms)
            << " ms/image\nreport:   " << a.report << std::endl;
  if (!a.grid.empty()) std::cout << "grid:     " << a.grid << std::endl;
  return 0;
}

struct InferArgs {
  std::string vae_ckpt, crnn_ckpt, image, dump;
  bool ascii = false;
};

int run_infer(const InferArgs& a) {
  auto [vcfg, vae, vmeta] = load_vae_checkpoint<float>(a.vae_ckpt);
  auto [ccfg, crnn, cmeta] = load_crnn_checkpoint<float>(a.crnn_ckpt);
  GrayImage img = read_png_gray(a.image);
  if (img.height != vcfg.height || img.width != vcfg.width) {
    std::cerr << "error: image is " << img.height << "x" << img.width
              << ", the translator expects " << vcfg.height << "x" << vcfg.width
              << std::endl;
    return 1;
  }
  Tensor<float> x = image_to_tensor<float>(img);
  Rng unused(0);
  Tensor<float> recon = translate(vcfg, vae, x, /*deterministic=*/true, unused);
  if (!a.dump.empty()) write_png_gray(a.dump, tensor_to_image(recon));
  Tensor<float> log_probs = crnn_forward(ccfg, crnn, recon);
  std::string text = Charset::decode(ctc_greedy_decode(log_probs));
  std::cout << (a.ascii ? to_ascii_digits(text) : text) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dot-matrix expiry date translation and recognition"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* cmd_gen = app.add_subcommand("gen-data", "generate a paired dataset");
  cmd_gen->add_option("--kind", gen.kind, "unrealistic | realistic")
      ->check(CLI::IsMember({"unrealistic", "realistic"}))
      ->required();
  cmd_gen->add_option("--count", gen.count, "number of pairs")
      ->check(CLI::PositiveNumber)
      ->required();
  cmd_gen->add_option("--seed", gen.seed, "RNG seed")->required();
  cmd_gen->add_option("--out", gen.out, "output directory")->required();
  cmd_gen->add_option("--height", gen.height, "canvas height");
  cmd_gen->add_option("--width", gen.width, "canvas width");
  cmd_gen->add_option("--jobs", gen.jobs, "worker threads (0 = all cores)");

  CLI::App* cmd_train = app.add_subcommand("train", "train a model");
  cmd_train->require_subcommand(1);
  TrainArgs tr;
  auto add_train_flags = [&tr](CLI::App* c) {
    c->add_option("--data", tr.data, "dataset directory");
    c->add_option("--scale", tr.scale, "paper | toy")
        ->check(CLI::IsMember({"paper", "toy"}))
        ->required();
    c->add_option("--epochs", tr.epochs, "training epochs");
    c->add_option("--batch", tr.batch, "batch size")->check(CLI::PositiveNumber);
    c->add_option("--lr", tr.lr, "learning rate");
    c->add_option("--seed", tr.seed, "RNG seed");
    c->add_option("--optimizer", tr.optimizer, "sgd | momentum | adam")
        ->check(CLI::IsMember({"sgd", "momentum", "adam"}));
    c->add_option("--out", tr.out, "checkpoint path");
    c->add_option("--metrics", tr.metrics, "metrics CSV path (default OUT.metrics.csv)");
    c->add_flag("--dry-run", tr.dry_run, "build and summarize, no training or writes");
  };
  CLI::App* cmd_train_vae = cmd_train->add_subcommand("vae", "train the translator");
  add_train_flags(cmd_train_vae);
  CLI::App* cmd_train_crnn = cmd_train->add_subcommand("crnn", "train the recognizer");
  add_train_flags(cmd_train_crnn);

  EvalArgs ev;
  CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate the full pipeline");
  cmd_eval->add_option("--vae", ev.vae_ckpt, "translator checkpoint")->required();
  cmd_eval->add_option("--crnn", ev.crnn_ckpt, "recognizer checkpoint")->required();
  cmd_eval->add_option("--data", ev.data, "test dataset directory")->required();
  cmd_eval->add_option("--report", ev.report, "JSON report path")->required();
  cmd_eval->add_option("--grid", ev.grid, "reconstruction grid PNG path");
  cmd_eval->add_flag("--ascii-digits", ev.ascii, "transliterate printed dates");

  InferArgs inf;
  CLI::App* cmd_infer = app.add_subcommand("infer", "decode one image");
  cmd_infer->add_option("--vae", inf.vae_ckpt, "translator checkpoint")->required();
  cmd_infer->add_option("--crnn", inf.crnn_ckpt, "recognizer checkpoint")->required();
  cmd_infer->add_option("--image", inf.image, "input PNG")->required();
  cmd_infer->add_option("--dump-reconstruction", inf.dump, "write the translated image");
  cmd_infer->add_flag("--ascii-digits", inf.ascii, "transliterate the printed date");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_gen->parsed()) return run_gen_data(gen);
    if (cmd_train->parsed()) {
      if (cmd_train_vae->parsed()) return run_train_vae(tr);
      if (cmd_train_crnn->parsed()) return run_train_crnn(tr);
    }
    if (cmd_eval->parsed()) return run_eval(ev);
    if (cmd_infer->parsed()) return run_infer(inf);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
