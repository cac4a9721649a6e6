#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"
#include "sonopipe/pipeline.hpp"

namespace sonopipe {

using nlohmann::json;

void PipelineConfig::validate() const {
  if (width == 0 || height == 0) throw ConfigError("pipeline width and height must be positive");
  if (debounce < 1) throw ConfigError("debounce window must be at least 1");
  if (!(transition_s > 0.0)) throw ConfigError("transition_s must be positive");
  if (queue_capacity < 1) throw ConfigError("queue_capacity must be at least 1");
  if (subscriber_queue < 1) throw ConfigError("subscriber_queue must be at least 1");
  if (k < 1) throw ConfigError("k must be at least 1");
  if (folds < 2) throw ConfigError("folds must be at least 2");
  if (template_frames < 1) throw ConfigError("template_frames must be at least 1");
  if (roi && (roi->w < 1 || roi->h < 1)) throw ConfigError("roi extent must be positive");
  if (!(source.rate_hz >= 0.0)) throw ConfigError("source rate must be non-negative");
  if (source.kind != "synthetic" && source.kind != "replay" && source.kind != "tcp") {
    throw ConfigError(fmt::format("unknown source kind '{}'", source.kind));
  }
  if (source.kind == "replay" && source.dir.empty()) {
    throw ConfigError("replay source needs a directory");
  }
  try {
    source.phantom.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

namespace {

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key) && !obj[key].is_null()) out = obj[key].get<T>();
}

void read_path(const json& obj, const char* key, std::filesystem::path& out) {
  if (obj.contains(key) && !obj[key].is_null()) out = obj[key].get<std::string>();
}

void read_opt_path(const json& obj, const char* key, std::optional<std::filesystem::path>& out) {
  if (obj.contains(key) && !obj[key].is_null()) out = obj[key].get<std::string>();
}

synth::PhantomSpec parse_phantom(const json& j, synth::PhantomSpec spec) {
  read(j, "seed", spec.seed);
  read(j, "width", spec.width);
  read(j, "height", spec.height);
  read(j, "n_bands", spec.n_bands);
  read(j, "speckle_strength", spec.speckle_strength);
  read(j, "noise_sigma", spec.noise_sigma);
  return spec;
}

}  // namespace

PipelineConfig parse_config(std::string_view json_text) {
  PipelineConfig c;
  try {
    const json doc = json::parse(json_text);
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");

    if (doc.contains("source")) {
      const json& s = doc["source"];
      read(s, "kind", c.source.kind);
      read(s, "rate_hz", c.source.rate_hz);
      read_path(s, "dir", c.source.dir);
      read(s, "host", c.source.host);
      read(s, "port", c.source.port);
      read(s, "frames", c.source.frames);
      if (s.contains("phantom")) c.source.phantom = parse_phantom(s["phantom"], c.source.phantom);
      if (s.contains("script")) {
        for (const json& step : s["script"]) {
          const auto name = step.at("gesture").get<std::string>();
          const auto g = parse_gesture(name);
          if (!g) throw ConfigError(fmt::format("unknown gesture '{}' in script", name));
          c.source.script.push_back({*g, step.at("frames").get<std::size_t>()});
        }
      }
    }
    if (doc.contains("roi") && !doc["roi"].is_null()) {
      const json& r = doc["roi"];
      c.roi = Roi{r.at("x").get<std::size_t>(), r.at("y").get<std::size_t>(),
                  r.at("w").get<std::size_t>(), r.at("h").get<std::size_t>()};
    }
    read(doc, "width", c.width);
    read(doc, "height", c.height);
    read_path(doc, "templates", c.templates);
    read_path(doc, "model", c.model);
    read_opt_path(doc, "poses", c.poses);
    read(doc, "k", c.k);
    read(doc, "template_frames", c.template_frames);
    read(doc, "folds", c.folds);
    read(doc, "seed", c.seed);
    read(doc, "debounce", c.debounce);
    read(doc, "transition_s", c.transition_s);
    read(doc, "queue_capacity", c.queue_capacity);
    read(doc, "serve", c.serve);
    read(doc, "bind", c.bind);
    read(doc, "tcp_port", c.tcp_port);
    read(doc, "ws_port", c.ws_port);
    read(doc, "command_port", c.command_port);
    read(doc, "allow_commands", c.allow_commands);
    read(doc, "subscriber_queue", c.subscriber_queue);
    read_path(doc, "metrics_out", c.metrics_out);
    read_opt_path(doc, "capture", c.capture);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace sonopipe
