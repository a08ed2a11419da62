#include "ossdet/app/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

namespace ossdet::app {

namespace {

const std::map<std::string, BandMode> kBands = {{"msi8", BandMode::msi8}, {"rgb3", BandMode::rgb3}};
const std::map<std::string, OptimizerKind> kOptim = {{"sgd", OptimizerKind::sgd}, {"adam", OptimizerKind::adam}};
const std::map<std::string, Split> kSplit = {{"train", Split::train}, {"test", Split::test}, {"all", Split::all}};
const std::map<std::string, model::CsspFusion> kFusion = {{"concat_conv", model::CsspFusion::concat_conv},
                                                          {"sum", model::CsspFusion::sum}};
const std::map<std::string, model::SoftmaxAxis> kAxis = {{"row", model::SoftmaxAxis::row},
                                                         {"col", model::SoftmaxAxis::col}};

template <class E>
std::string_view name_of(const std::map<std::string, E>& table, E v) {
  for (const auto& [k, e] : table)
    if (e == v) return k;
  return "?";
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Options shared by the CLI and the checkpoint parser.
void add_training_options(CLI::App& app, RunConfig& c) {
  app.add_option("--bands", c.bands, "Band mode: msi8 or rgb3")->transform(CLI::CheckedTransformer(kBands));
  app.add_option("--channels", c.channels, "Pyramid channel width C");
  app.add_option("--levels", c.levels, "Detection levels (fixed at 4)");
  app.add_option("--sfa_k", c.sfa_k, "SFA patch size (odd, 3..9)");
  app.add_option("--gamma", c.gamma, "Weight of L_D in L_act");
  app.add_option("--alpha", c.alpha, "Weight of L_act in the total loss");
  app.add_option("--cssp_fusion", c.cssp_fusion, "concat_conv or sum")->transform(CLI::CheckedTransformer(kFusion));
  app.add_option("--cafr_axis", c.cafr_axis, "row or col")->transform(CLI::CheckedTransformer(kAxis));
  app.add_option("--optimizer", c.optimizer, "sgd or adam")->transform(CLI::CheckedTransformer(kOptim));
  app.add_option("--lr", c.lr, "Learning rate");
  app.add_option("--momentum", c.momentum, "SGD momentum / Adam beta1");
  app.add_option("--weight_decay", c.weight_decay, "L2 weight decay");
  app.add_option("--grad_clip", c.grad_clip, "Global gradient norm clip (0 disables)");
  app.add_option("--iterations", c.iterations, "Training iterations");
  app.add_option("--batch_size", c.batch_size, "Images per iteration");
  app.add_option("--checkpoint_every", c.checkpoint_every, "Checkpoint period in iterations (0: only first and last)");
  app.add_option("--augment", c.augment, "Random flips (0 or 1)");
  app.add_option("--train_split", c.train_split, "Scenes to train on: train, test or all")
      ->transform(CLI::CheckedTransformer(kSplit));
  app.add_option("--seed", c.seed, "Run seed (required for training)");
}

}  // namespace

void add_config_option(CLI::App& app) {
  // Consumed by expand_config before parsing; registered for --help and so
  // that a leftover occurrence is not reported as unknown.
  app.add_option_function<std::string>("--config", [](const std::string&) {},
                                       "Flat key=value file; explicit flags take precedence");
}

std::vector<std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file " + path.string());
  auto trim = [](std::string v) {
    const auto b = v.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return v.substr(b, v.find_last_not_of(" \t\r") - b + 1);
  };
  std::vector<std::string> out;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string key = eq == std::string::npos ? "" : trim(line.substr(0, eq));
    if (key.empty() || key.find_first_of(" \t-") != std::string::npos) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(no) + ": expected key=value");
    }
    out.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  return out;
}

std::vector<std::string> expand_config(std::vector<std::string> args, std::size_t insert_at) {
  std::vector<std::string> file_args, rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string file;
    if (i >= insert_at && args[i] == "--config" && i + 1 < args.size()) {
      file = args[++i];
    } else if (i >= insert_at && args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
      continue;
    }
    auto more = read_config_file(file);
    file_args.insert(file_args.end(), more.begin(), more.end());
  }
  rest.insert(rest.begin() + std::ptrdiff_t(std::min(insert_at, rest.size())), file_args.begin(), file_args.end());
  return rest;
}

std::string to_string(BandMode m) { return std::string(name_of(kBands, m)); }
std::string to_string(OptimizerKind k) { return std::string(name_of(kOptim, k)); }
std::string to_string(Split s) { return std::string(name_of(kSplit, s)); }

void add_run_options(CLI::App& app, RunConfig& c) {
  add_config_option(app);
  app.add_option("--dataset", c.dataset, "Dataset directory");
  app.add_option("--out", c.out, "Output directory");
  add_training_options(app, c);
  app.add_option("--eval_split", c.eval_split, "Scenes to evaluate: train, test or all")
      ->transform(CLI::CheckedTransformer(kSplit));
  app.add_option("--score_thresh", c.score_thresh, "Minimum detection score");
  app.add_option("--nms_iou", c.nms_iou, "Rotated NMS IoU threshold");
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw std::invalid_argument(m); };
  if (c.channels == 0) fail("channels must be positive");
  if (c.levels != 4) fail("levels must be 4 (got " + std::to_string(c.levels) + ")");
  if (c.sfa_k < 3 || c.sfa_k > 9 || c.sfa_k % 2 == 0) fail("sfa_k must be one of 3, 5, 7, 9");
  if (!(c.gamma > 0)) fail("gamma must be positive");
  if (!(c.alpha >= 0)) fail("alpha must be non-negative");
  if (!(c.lr > 0)) fail("lr must be positive");
  if (!(c.momentum >= 0 && c.momentum < 1)) fail("momentum must be in [0, 1)");
  if (!(c.weight_decay >= 0)) fail("weight_decay must be non-negative");
  if (!(c.grad_clip >= 0)) fail("grad_clip must be non-negative");
  if (c.batch_size == 0) fail("batch_size must be positive");
  if (!(c.score_thresh > 0 && c.score_thresh < 1)) fail("score_thresh must be in (0, 1)");
  if (!(c.nms_iou > 0 && c.nms_iou < 1)) fail("nms_iou must be in (0, 1)");
}

std::string training_text(const RunConfig& c) {
  std::ostringstream os;
  os << "bands=" << to_string(c.bands) << "\n"
     << "channels=" << c.channels << "\n"
     << "levels=" << c.levels << "\n"
     << "sfa_k=" << c.sfa_k << "\n"
     << "gamma=" << num(c.gamma) << "\n"
     << "alpha=" << num(c.alpha) << "\n"
     << "cssp_fusion=" << name_of(kFusion, c.cssp_fusion) << "\n"
     << "cafr_axis=" << name_of(kAxis, c.cafr_axis) << "\n"
     << "optimizer=" << to_string(c.optimizer) << "\n"
     << "lr=" << num(c.lr) << "\n"
     << "momentum=" << num(c.momentum) << "\n"
     << "weight_decay=" << num(c.weight_decay) << "\n"
     << "grad_clip=" << num(c.grad_clip) << "\n"
     << "iterations=" << c.iterations << "\n"
     << "batch_size=" << c.batch_size << "\n"
     << "checkpoint_every=" << c.checkpoint_every << "\n"
     << "augment=" << (c.augment ? 1 : 0) << "\n"
     << "train_split=" << to_string(c.train_split) << "\n";
  if (c.seed) os << "seed=" << *c.seed << "\n";
  return os.str();
}

RunConfig parse_training_text(const std::string& text) {
  RunConfig c;
  CLI::App app;
  app.allow_config_extras(false);
  add_training_options(app, c);
  std::istringstream in(text);
  try {
    app.parse_from_stream(in);
  } catch (const CLI::ParseError& e) {
    throw std::invalid_argument(std::string("bad stored configuration: ") + e.what());
  }
  return c;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("OSSDET_THREADS")) {
    std::size_t v = 0;
    const char* end = env + std::char_traits<char>::length(env);
    auto [p, ec] = std::from_chars(env, end, v);
    if (ec == std::errc() && p == end && v >= 1) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace ossdet::app
