// sonopipe: train, evaluate and run the ultrasound gesture pipeline.

#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "sonopipe/pipeline.hpp"
#include "sonopipe/simd/kernels.hpp"

namespace {

using namespace sonopipe;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct Overrides {
  std::string config;
  std::string source;
  std::optional<std::size_t> k;
  std::optional<std::size_t> folds;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> debounce;
  std::optional<std::uint16_t> tcp_port;
  std::optional<std::uint16_t> ws_port;
  std::optional<std::string> metrics_out;
  std::optional<std::string> templates;
  std::optional<std::string> model;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON pipeline config");
  cmd->add_option("--k", o.k, "neighbours for the kNN classifier");
  cmd->add_option("--seed", o.seed, "seed for folds and synthetic data");
  cmd->add_option("--templates", o.templates, "template directory");
  cmd->add_option("--model", o.model, "model file");
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
  out << text;
}

// "synthetic", "replay:<dir>", "tcp:<port>" or "tcp:<host>:<port>".
void apply_source(SourceConfig& s, const std::string& spec) {
  if (spec.empty()) return;
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  s.kind = kind;
  if (kind == "replay") {
    if (!rest.empty()) s.dir = rest;
  } else if (kind == "tcp") {
    if (!rest.empty()) {
      const auto c2 = rest.rfind(':');
      try {
        if (c2 != std::string::npos) {
          s.host = rest.substr(0, c2);
          s.port = static_cast<std::uint16_t>(std::stoul(rest.substr(c2 + 1)));
        } else {
          s.port = static_cast<std::uint16_t>(std::stoul(rest));
        }
      } catch (const std::exception&) {
        throw ConfigError(fmt::format("bad tcp source '{}'", spec));
      }
    }
  } else if (kind != "synthetic") {
    throw ConfigError(fmt::format("unknown source '{}'", spec));
  }
}

PipelineConfig resolve(const Overrides& o) {
  PipelineConfig c = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  apply_source(c.source, o.source);
  if (o.k) c.k = *o.k;
  if (o.folds) c.folds = *o.folds;
  if (o.seed) c.seed = *o.seed;
  if (o.debounce) c.debounce = *o.debounce;
  if (o.tcp_port) c.tcp_port = *o.tcp_port;
  if (o.ws_port) c.ws_port = *o.ws_port;
  if (o.metrics_out) c.metrics_out = *o.metrics_out;
  if (o.templates) c.templates = *o.templates;
  if (o.model) c.model = *o.model;
  c.validate();
  return c;
}

// Frames from a dataset manifest, or from <dir>/<gesture>/*.pgm.
std::vector<synth::LabeledFrame> load_training_frames(const std::string& dataset,
                                                      const std::string& frames_dir) {
  if (!dataset.empty()) return synth::load_dataset(dataset);
  if (frames_dir.empty()) throw ConfigError("train needs --dataset or --frames-dir");
  std::vector<synth::LabeledFrame> out;
  std::uint64_t seq = 0;
  for (GestureLabel g : kAllGestures) {
    const fs::path dir = fs::path(frames_dir) / gesture_name(g);
    std::vector<fs::path> files;
    if (fs::is_directory(dir)) {
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".pgm") files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back({load_pgm(f).restamped(0, seq++), g});
  }
  return out;
}

int cmd_synth_gen(const Overrides& o, const std::string& out_dir, std::optional<double> sigma,
                  std::optional<std::size_t> per_class, std::optional<std::size_t> size,
                  std::optional<double> speckle) {
  PipelineConfig c = resolve(o);
  synth::PhantomSpec spec = c.source.phantom;
  if (o.seed) spec.seed = *o.seed;
  if (sigma) spec.noise_sigma = *sigma;
  if (size) spec.width = spec.height = *size;
  if (speckle) spec.speckle_strength = *speckle;
  const auto manifest = synth::generate_dataset(spec, per_class.value_or(10), out_dir);
  fmt::print("wrote {} frames ({} per gesture, {}x{}, sigma {}) to {}\n",
             manifest.entries.size(), manifest.per_class, spec.width, spec.height,
             spec.noise_sigma, out_dir);
  return kExitOk;
}

int cmd_train(const Overrides& o, const std::string& dataset, const std::string& frames_dir) {
  const PipelineConfig c = resolve(o);
  const auto frames = load_training_frames(dataset, frames_dir);
  const TrainResult r = train(c, frames);
  save_store(r.store, c.templates);
  save_model(r.model, c.model);
  for (GestureLabel g : kAllGestures) {
    fmt::print("{:<16} {} frames\n", gesture_name(g), r.per_class[ordinal(g)]);
  }
  fmt::print("templates -> {}\nmodel ({} samples, k={}) -> {}\n", c.templates.string(),
             r.model.samples().size(), r.model.k(), c.model.string());
  return kExitOk;
}

int cmd_eval(const Overrides& o, const std::string& dataset, const std::string& out_dir) {
  const PipelineConfig c = resolve(o);
  if (dataset.empty()) throw ConfigError("eval needs --dataset");
  const TemplateStore store = load_store(c.templates);
  if (store.width() != c.width || store.height() != c.height) {
    throw ConfigError("template store size does not match the configured frame size");
  }
  const auto frames = synth::load_dataset(dataset);
  const auto samples = extract_samples(c, store, frames);
  EvalResult r;
  try {
    r = evaluate(samples, c.k, c.folds, c.seed);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  const fs::path out = out_dir;
  write_file(out / "eval_full.json", report_to_json(r.full));
  write_file(out / "eval_full.csv", confusion_to_csv(r.full.confusion));
  write_file(out / "eval_without_rest.json", report_to_json(r.without_rest));
  write_file(out / "eval_without_rest.csv", confusion_to_csv(r.without_rest.confusion));
  fmt::print("accuracy (all gestures):   {:.4f}\n", r.full.accuracy);
  fmt::print("accuracy (rest excluded):  {:.4f}\n", r.without_rest.accuracy);
  fmt::print("{}", confusion_to_csv(r.full.confusion));
  return kExitOk;
}

int cmd_run(const Overrides& o, std::optional<double> rate, std::optional<std::size_t> frames,
            std::optional<std::string> capture, bool allow_commands, bool no_serve) {
  PipelineConfig c = resolve(o);
  if (rate) c.source.rate_hz = *rate;
  if (frames) c.source.frames = *frames;
  if (capture) c.capture = fs::path(*capture);
  if (allow_commands) c.allow_commands = true;
  if (no_serve) c.serve = false;
  c.validate();

  const TemplateStore store = load_store(c.templates);
  if (store.width() != c.width || store.height() != c.height) {
    throw ConfigError(fmt::format("templates are {}x{} but the pipeline is {}x{}", store.width(),
                                  store.height(), c.width, c.height));
  }
  KnnModel model = load_model(c.model);
  if (o.k && *o.k != model.k()) {
    try {
      model = knn_fit(model.samples(), *o.k);
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
  }
  const PosePresets presets = c.poses ? load_presets(*c.poses) : default_presets();

  const PipelineClock clock;
  std::unique_ptr<FrameSource> source;
  SyntheticSource* synthetic = nullptr;
  if (c.source.kind == "synthetic") {
    auto s = std::make_unique<SyntheticSource>(c.source.phantom, c.source.script,
                                               c.source.rate_hz, clock, c.source.frames);
    synthetic = s.get();
    source = std::move(s);
  } else if (c.source.kind == "replay") {
    source = std::make_unique<DirectoryReplaySource>(c.source.dir, c.source.rate_hz, clock);
  } else {
    source = std::make_unique<TcpFrameSource>(c.source.host, c.source.port, clock);
  }

  std::unique_ptr<StreamServer> server;
  if (c.serve) {
    server = std::make_unique<StreamServer>(StreamServerOptions{
        c.bind, c.tcp_port, c.ws_port, c.subscriber_queue, 0});
    server->start();
    fmt::print("streaming on tcp {} and websocket {}\n", server->tcp_port(), server->ws_port());
  }
  std::unique_ptr<CommandServer> commands;
  if (c.allow_commands) {
    if (!synthetic) throw ConfigError("--allow-commands needs the synthetic source");
    commands = std::make_unique<CommandServer>(
        c.bind, c.command_port, [synthetic](GestureLabel g) { synthetic->set_target(g); });
    commands->start();
    fmt::print("accepting commands on websocket {}\n", commands->port());
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  RunHooks hooks;
  hooks.clock = clock;
  hooks.stop = &g_stop;
  const Metrics m = run_pipeline(c, *source, store, model, presets, server.get(), hooks);
  if (commands) commands->stop();
  if (server) server->stop();

  write_file(c.metrics_out, m.to_json());
  fmt::print("{}metrics -> {}\n", m.summary(), c.metrics_out.string());
  return m.source_error.empty() ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ultrasound gesture recognition pipeline"};
  app.require_subcommand(1);

  Overrides o;

  auto* synth_cmd = app.add_subcommand("synth-gen", "write a synthetic labeled dataset");
  std::string synth_out;
  std::optional<double> sigma;
  std::optional<double> speckle;
  std::optional<std::size_t> per_class;
  std::optional<std::size_t> size;
  add_common(synth_cmd, o);
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--sigma", sigma, "additive noise sigma");
  synth_cmd->add_option("--per-class", per_class, "frames per gesture (default 10)");
  synth_cmd->add_option("--size", size, "frame width and height");
  synth_cmd->add_option("--speckle", speckle, "speckle strength");

  auto* train_cmd = app.add_subcommand("train", "build templates and fit the classifier");
  std::string dataset;
  std::string frames_dir;
  add_common(train_cmd, o);
  train_cmd->add_option("--dataset", dataset, "dataset directory with manifest.json");
  train_cmd->add_option("--frames-dir", frames_dir, "directory with one subdirectory per gesture");

  auto* eval_cmd = app.add_subcommand("eval", "cross-validate on a labeled dataset");
  std::string eval_out = ".";
  add_common(eval_cmd, o);
  eval_cmd->add_option("--dataset", dataset, "dataset directory with manifest.json")->required();
  eval_cmd->add_option("--folds", o.folds, "cross-validation folds");
  eval_cmd->add_option("--out", eval_out, "directory for reports");

  auto* run_cmd = app.add_subcommand("run", "classify a live frame stream and publish poses");
  std::optional<double> rate;
  std::optional<std::size_t> frames;
  std::optional<std::string> capture;
  bool allow_commands = false;
  bool no_serve = false;
  add_common(run_cmd, o);
  run_cmd->add_option("--source", o.source, "synthetic | replay:<dir> | tcp:[host:]<port>");
  run_cmd->add_option("--debounce", o.debounce, "debounce window");
  run_cmd->add_option("--tcp-port", o.tcp_port, "NDJSON TCP port");
  run_cmd->add_option("--ws-port", o.ws_port, "WebSocket port");
  run_cmd->add_option("--metrics-out", o.metrics_out, "metrics JSON path");
  run_cmd->add_option("--rate", rate, "source frame rate (0 = unpaced)");
  run_cmd->add_option("--frames", frames, "stop the synthetic source after N frames");
  run_cmd->add_option("--capture", capture, "also write every message to this NDJSON file");
  run_cmd->add_flag("--allow-commands", allow_commands, "enable the command socket");
  run_cmd->add_flag("--no-serve", no_serve, "do not open streaming ports");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth_gen(o, synth_out, sigma, per_class, size, speckle);
    if (train_cmd->parsed()) return cmd_train(o, dataset, frames_dir);
    if (eval_cmd->parsed()) return cmd_eval(o, dataset, eval_out);
    if (run_cmd->parsed()) return cmd_run(o, rate, frames, capture, allow_commands, no_serve);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
