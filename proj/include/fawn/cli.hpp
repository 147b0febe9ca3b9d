#ifndef FAWN_CLI_HPP
#define FAWN_CLI_HPP

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fawn/errors.hpp"
#include "fawn/io.hpp"
#include "fawn/model.hpp"
#include "fawn/scene.hpp"
#include "fawn/train.hpp"

namespace fawn::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Usage problems detected after flag parsing (e.g. an index past the end).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training writes its history next to the model under this suffix.
inline std::filesystem::path training_report_path(const std::filesystem::path& model) {
  return model.string() + ".report.json";
}

inline unsigned generation_threads() {
  if (const char* env = std::getenv("FAWN_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return 1;
}

struct GenerateArgs {
  std::string out;
  std::size_t n = 400;
  std::uint64_t seed = 42;
  double noise = 0.01;
};

inline int cmd_generate(const GenerateArgs& a, std::ostream& out, std::ostream& err) {
  (void)err;
  if (a.n == 0) throw UsageError("--n must be at least 1");
  if (!(a.noise >= 0.0)) throw UsageError("--noise must be non-negative");
  ScattererModel model;
  model.noise_sigma = a.noise;
  const std::vector<CsiSample> data = generate_dataset(a.n, a.seed, RoomLayout{}, model, generation_threads());
  write_dataset(data, a.out);
  std::size_t empty = 0, person = 0, robot = 0, both = 0;
  for (const CsiSample& s : data) {
    if (s.label.person && s.label.robot) ++both;
    else if (s.label.person) ++person;
    else if (s.label.robot) ++robot;
    else ++empty;
  }
  out << "wrote " << data.size() << " samples to " << a.out << "\n"
      << "  empty: " << empty << "  person only: " << person << "  robot only: " << robot << "  both: " << both
      << "\n";
  return kOk;
}

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config;
  std::optional<std::uint64_t> seed;
};

inline TrainConfig resolve_config(const std::string& config_path, std::optional<std::uint64_t> seed) {
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : read_config(config_path);
  if (seed) cfg.seed = *seed;
  return cfg;
}

/// Split seed for training and evaluation, and the stream that drives
/// initialization and shuffling.
inline Rng training_rng(const TrainConfig& cfg) { return Rng(child_seed(cfg.seed, 1)); }

inline int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = resolve_config(a.config, a.seed);
  const std::vector<CsiSample> data = read_dataset(a.data);
  const DatasetSplit split = split_dataset(data, cfg.split, cfg.seed);
  if (split.train.empty()) throw UsageError("training split is empty");
  out << "split: " << split.train.size() << " train / " << split.val.size() << " val / " << split.test.size()
      << " test\n";
  Rng rng = training_rng(cfg);
  const TrainResult result =
      train(split.train, split.val, cfg, rng, [&err](std::size_t epoch, double tl, std::optional<double> vl) {
        err << "epoch " << std::setw(4) << epoch + 1 << "  train " << std::setprecision(6) << tl;
        if (vl) err << "  val " << *vl;
        err << "\n";
      });
  save_model(result.params, a.out);

  nlohmann::ordered_json doc;
  doc["config"] = config_to_json(cfg);
  doc["history"] = {{"train_loss", result.history.train_loss},
                    {"val_loss", result.history.val_loss},
                    {"best_epoch", result.history.best_epoch}};
  io_detail::write_text(training_report_path(a.out), doc.dump(2) + "\n");
  out << "saved best checkpoint (epoch " << result.history.best_epoch + 1 << ") to " << a.out << "\n";
  return kOk;
}

struct EvalArgs {
  std::string data;
  std::string model;
  std::string report;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t timing_reps = 0;
  bool ablate_wifi = false;
};

/// Zeroes the Wi-Fi tensor of every sample (5G-only ablation).
inline void zero_wifi(std::vector<CsiSample>& samples) {
  for (CsiSample& s : samples) std::fill(s.csi_wifi.data().begin(), s.csi_wifi.data().end(), 0.0);
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  (void)err;
  // Split settings: explicit flags, else the training report next to the model, else defaults.
  TrainConfig cfg;
  nlohmann::json training_doc;
  const auto sibling = training_report_path(a.model);
  if (std::filesystem::exists(sibling)) {
    const auto bytes = io_detail::read_file(sibling);
    training_doc = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
    if (training_doc.is_discarded()) throw ConfigError(sibling.string(), "invalid JSON");
    if (a.config.empty() && training_doc.contains("config")) cfg = parse_config(training_doc["config"]);
  }
  if (!a.config.empty()) cfg = read_config(a.config);
  if (a.seed) cfg.seed = *a.seed;

  const FawnParams params = load_model(a.model);
  const std::vector<CsiSample> data = read_dataset(a.data);
  DatasetSplit split = split_dataset(data, cfg.split, cfg.seed);
  if (split.test.empty()) throw UsageError("test split is empty; dataset too small for the split fractions");
  if (a.ablate_wifi) zero_wifi(split.test);

  EvalReport report = evaluate(params, split.test);
  if (training_doc.is_object() && training_doc.contains("history")) {
    report.train_loss = training_doc["history"].value("train_loss", std::vector<double>{});
    report.val_loss = training_doc["history"].value("val_loss", std::vector<double>{});
  }
  if (a.timing_reps > 0) {
    if (a.timing_reps < 10) throw UsageError("--timing-reps must be 0 or at least 10");
    report.timing = measure_inference_time(params, split.test.front(), a.timing_reps);
  }
  write_report(report, a.report);

  out << std::fixed << std::setprecision(4) << "test samples: " << split.test.size() << "\n"
      << "accuracy: " << report.accuracy << "\n"
      << "f1_macro: " << report.f1_macro << (report.f1_zero_denominator ? " (zero-denominator F1 set to 0)" : "")
      << "\n"
      << "ecdf@0.6m: " << ecdf_at(report.ecdf, 0.6) << "\n"
      << "ecdf@1.2m: " << ecdf_at(report.ecdf, 1.2) << "\n";
  if (report.ecdf_empty) out << "ecdf: no truly-present entities in the test split\n";
  if (report.timing) {
    out << std::setprecision(1) << "inference: " << report.timing->mean_us << " +- " << report.timing->stdev_us
        << " us\n";
  }
  return kOk;
}

struct InferArgs {
  std::string model;
  std::string data;
  std::size_t index = 0;
};

inline void print_top3(std::ostream& out, const char* head, const std::vector<double>& logits) {
  const Tensor p = softmax_values(Tensor(Shape{logits.size()}, logits));
  std::vector<std::size_t> order(logits.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&p](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  out << "  " << head << ":";
  for (std::size_t i = 0; i < 3 && i < order.size(); ++i) out << "  " << order[i] << " (" << p[order[i]] << ")";
  out << "\n";
}

inline int cmd_infer(const InferArgs& a, std::ostream& out, std::ostream& err) {
  (void)err;
  const FawnParams params = load_model(a.model);
  const std::vector<CsiSample> data = read_dataset(a.data);
  if (a.index >= data.size()) {
    throw UsageError("--index " + std::to_string(a.index) + " out of range (dataset has " +
                     std::to_string(data.size()) + " samples)");
  }
  const SceneEstimate est = fawn_forward(data[a.index], params);
  auto entity = [&out](const char* name, bool present, double prob, Cell c) {
    out << name << ": " << (present ? "present" : "absent") << " (p=" << std::setprecision(4) << std::fixed
        << prob << ")  cell (" << int(c.ix) << "," << int(c.iy) << ")  center (" << std::setprecision(1)
        << c.x_m() << " m, " << c.y_m() << " m)\n";
  };
  entity("person", est.person_present(), SceneEstimate::sigmoid(est.presence[0]), est.person_cell());
  entity("robot", est.robot_present(), SceneEstimate::sigmoid(est.presence[1]), est.robot_cell());
  out << std::setprecision(4) << "top-3 per head:\n";
  print_top3(out, "person x", est.px);
  print_top3(out, "person y", est.py);
  print_top3(out, "robot x", est.rx);
  print_top3(out, "robot y", est.ry);
  return kOk;
}

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"FAWN: dual-encoder CSI fusion for indoor scene inference"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Simulate a labeled CSI dataset");
  g->add_option("--out", gen.out, "Output dataset file")->required();
  g->add_option("--n", gen.n, "Number of samples")->capture_default_str();
  g->add_option("--seed", gen.seed, "Dataset seed")->capture_default_str();
  g->add_option("--noise", gen.noise, "Noise sigma relative to line of sight")->capture_default_str();

  TrainArgs tr;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "Train a model on a dataset's training split");
  t->add_option("--data", tr.data, "Dataset file")->required();
  t->add_option("--out", tr.out, "Output model file")->required();
  t->add_option("--config", tr.config, "JSON training config");
  auto* t_seed = t->add_option("--seed", train_seed, "Split/initialization seed (overrides config; default 42)");

  EvalArgs ev;
  std::uint64_t eval_seed = 0;
  auto* e = app.add_subcommand("eval", "Evaluate a model on the test split and write a report");
  e->add_option("--data", ev.data, "Dataset file")->required();
  e->add_option("--model", ev.model, "Model file")->required();
  e->add_option("--report", ev.report, "Output report (JSON)")->required();
  e->add_option("--config", ev.config, "JSON training config (split settings)");
  auto* e_seed = e->add_option("--seed", eval_seed, "Split seed (default: from the training report, else 42)");
  e->add_option("--timing-reps", ev.timing_reps, "Inference timing repetitions (0 disables)")->capture_default_str();
  e->add_flag("--ablate-wifi", ev.ablate_wifi, "Zero the Wi-Fi CSI before evaluating");

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Print the scene estimate for one sample");
  i->add_option("--model", inf.model, "Model file")->required();
  i->add_option("--data", inf.data, "Dataset file")->required();
  i->add_option("--index", inf.index, "Sample index")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsage;
  }
  if (*t_seed) tr.seed = train_seed;
  if (*e_seed) ev.seed = eval_seed;

  try {
    if (*g) return cmd_generate(gen, out, err);
    if (*t) return cmd_train(tr, out, err);
    if (*e) return cmd_eval(ev, out, err);
    if (*i) return cmd_infer(inf, out, err);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kUsage;
  } catch (const NumericError& ex) {
    err << "numeric failure: " << ex.what() << "\n";
    return kNumeric;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace fawn::cli

#endif  // FAWN_CLI_HPP
