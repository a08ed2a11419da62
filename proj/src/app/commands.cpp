#include "ossdet/app/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "ossdet/app/checkpoint.hpp"
#include "ossdet/app/config.hpp"
#include "ossdet/app/pipeline.hpp"
#include "ossdet/app/verify.hpp"
#include "ossdet/data/spectral.hpp"
#include "ossdet/data/stats.hpp"
#include "ossdet/tensor/tensor.hpp"

namespace ossdet::app {

namespace fs = std::filesystem;

namespace {

std::string scene_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05zu", i);
  return buf;
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void add_gen_options(CLI::App& app, GenOptions& o) {
  add_config_option(app);
  app.add_option("--out", o.out, "Output dataset directory")->required();
  app.add_option("--scenes", o.scenes, "Number of scenes")->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed, "Base seed")->required();
  app.add_flag("--force", o.force, "Replace a non-empty output directory");
  app.add_option("--train_fraction", o.train_fraction, "Share of scenes in the train split")
      ->check(CLI::Range(0.0, 1.0));
  data::GenConfig& g = o.gen;
  app.add_option("--height", g.height)->check(CLI::PositiveNumber);
  app.add_option("--width", g.width)->check(CLI::PositiveNumber);
  app.add_option("--min_instances", g.min_instances);
  app.add_option("--max_instances", g.max_instances);
  app.add_option("--noise_sigma", g.noise_sigma)->check(CLI::NonNegativeNumber);
  app.add_option("--clutter_density", g.clutter_density)->check(CLI::Range(0.0, 1.0));
  app.add_option("--clutter_min_size", g.clutter_min_size)->check(CLI::PositiveNumber);
  app.add_option("--clutter_max_size", g.clutter_max_size)->check(CLI::PositiveNumber);
  app.add_option("--illumination", g.illumination)->check(CLI::PositiveNumber);
  app.add_option("--blur_sigma", g.blur_sigma)->check(CLI::NonNegativeNumber);
  app.add_option("--truncation_prob", g.truncation_prob)->check(CLI::Range(0.0, 1.0));
  app.add_option("--size_scale", g.size_scale)->check(CLI::PositiveNumber);
  app.add_option("--max_overlap", g.max_overlap)->check(CLI::Range(0.0, 1.0));
  app.add_option("--max_attempts", g.max_attempts)->check(CLI::PositiveNumber);
  app.add_option("--signature_separation", g.signature_separation)->check(CLI::NonNegativeNumber);
}

void print_metrics(std::ostream& out, const eval::EvalResult& r) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "mAP50 %.4f  mAP75 %.4f  mAP %.4f\n", r.map50, r.map75, r.map);
  out << buf;
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    if (!r.has_gt[c]) continue;
    std::snprintf(buf, sizeof buf, "  %-12s AP50 %.4f\n", r.classes[c].c_str(), r.ap[c][0]);
    out << buf;
  }
}

}  // namespace

data::Dataset generate_dataset(const GenOptions& opt, std::size_t threads) {
  if (opt.gen.min_instances > opt.gen.max_instances) {
    throw std::invalid_argument("min_instances exceeds max_instances");
  }
  const data::ClassTable table = data::default_class_table();
  std::vector<data::Scene> scenes(opt.scenes);
  std::vector<std::exception_ptr> errors(opt.scenes);
  threads = std::max<std::size_t>(1, std::min(threads, opt.scenes));
  auto work = [&](std::size_t t) {
    for (std::size_t i = t; i < opt.scenes; i += threads) {
      try {
        scenes[i] = data::generate_scene(opt.gen, table, data::scene_seed(opt.seed, i), scene_id(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(work, t);
  work(0);
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  data::Dataset ds;
  ds.manifest.band_centers = table.band_centers;
  ds.manifest.classes = table.names();
  ds.manifest.height = opt.gen.height;
  ds.manifest.width = opt.gen.width;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < opt.scenes; ++i) ids.push_back(scene_id(i));
  data::assign_split(ds.manifest, ids, opt.train_fraction);
  ds.scenes = std::move(scenes);
  return ds;
}

data::Dataset cmd_gen(const GenOptions& opt, std::size_t threads) {
  if (fs::exists(opt.out)) {
    if (!fs::is_directory(opt.out)) throw UsageError(opt.out.string() + " exists and is not a directory");
    if (!fs::is_empty(opt.out)) {
      if (!opt.force) throw UsageError(opt.out.string() + " is not empty; pass --force to replace it");
      fs::remove_all(opt.out);
    }
  }
  data::Dataset ds = generate_dataset(opt, threads);
  data::write_dataset(opt.out, ds);
  return ds;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("Multispectral oriented object detection toolkit", "ossdet");
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  GenOptions gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "Generate a synthetic multispectral dataset");
  add_gen_options(*gen_cmd, gen);

  RunConfig train_cfg;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a detector");
  add_run_options(*train_cmd, train_cfg);

  fs::path eval_ckpt, eval_data, eval_out;
  std::optional<BandMode> eval_bands;
  Split eval_split = Split::test;
  model::DecodeOptions decode;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--dataset", eval_data, "Dataset directory")->required();
  eval_cmd->add_option("--out", eval_out, "Report directory")->required();
  const std::map<std::string, BandMode> band_map{{"msi8", BandMode::msi8}, {"rgb3", BandMode::rgb3}};
  const std::map<std::string, Split> split_map{{"train", Split::train}, {"test", Split::test}, {"all", Split::all}};
  eval_cmd->add_option("--bands", eval_bands, "Expected band mode (must match the checkpoint)")
      ->transform(CLI::CheckedTransformer(band_map));
  eval_cmd->add_option("--eval_split", eval_split, "train, test or all")->transform(CLI::CheckedTransformer(split_map));
  eval_cmd->add_option("--score_thresh", decode.score_thresh)->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--nms_iou", decode.iou_thresh)->check(CLI::Range(0.0, 1.0));

  fs::path stats_data, stats_out;
  CLI::App* stats_cmd = app.add_subcommand("stats", "Dataset statistics and plots");
  stats_cmd->add_option("--dataset", stats_data)->required();
  stats_cmd->add_option("--out", stats_out)->required();

  std::uint64_t verify_seed = 1;
  std::size_t verify_rounds = 3;
  std::string corrupt_op;
  CLI::App* verify_cmd = app.add_subcommand("verify", "Run the invariant and gradient suite");
  verify_cmd->add_option("--seed", verify_seed);
  verify_cmd->add_option("--rounds", verify_rounds, "Randomised shape draws per operator")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--corrupt_backward", corrupt_op, "Test hook: perturb one operator's backward rule");

  try {
    std::vector<std::string> args(argv + std::min(argc, 1), argv + argc);
    try {
      args = expand_config(std::move(args), 1);
    } catch (const std::invalid_argument& e) {
      err << "error: " << e.what() << "\n";
      return kUsage;
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) {
      data::Dataset ds = cmd_gen(gen, worker_threads());
      out << "wrote " << ds.scenes.size() << " scenes (" << ds.manifest.train.size() << " train, "
          << ds.manifest.test.size() << " test) to " << gen.out.string() << "\n";
    } else if (*train_cmd) {
      validate(train_cfg);
      TrainSummary s = train(train_cfg, &err);
      out << "final checkpoint " << s.final_checkpoint.string() << "\n";
    } else if (*eval_cmd) {
      const Checkpoint ck = load_checkpoint(eval_ckpt);
      const data::Dataset ds = data::read_dataset(eval_data);
      EvalRun run = evaluate_checkpoint(ck, ds, eval_split, decode, eval_bands, worker_threads());
      write_eval(run, ck.meta.classes, eval_out);
      print_metrics(out, run.result);
    } else if (*stats_cmd) {
      data::StatsReport r = data::dataset_stats(stats_data, stats_out);
      out << r.images << " images, " << r.instances << " instances\n";
    } else if (*verify_cmd) {
      if (!corrupt_op.empty()) tensor::testing::corrupt_backward(corrupt_op);
      const std::vector<Check> checks = run_verify(verify_seed, verify_rounds);
      tensor::testing::corrupt_backward(std::nullopt);
      out << format_table(checks);
      for (const Check& c : checks)
        if (!c.passed) return kVerifyFailed;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const TrainingDiverged& e) {
    err << "training diverged: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}

}  // namespace ossdet::app
