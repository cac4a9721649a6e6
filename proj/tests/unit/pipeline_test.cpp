#include <doctest.h>

#include <fstream>
#include <thread>

#include "clients.hpp"
#include "fixtures.hpp"
#include "json.hpp"
#include "sonopipe/pipeline.hpp"
#include "temp_dir.hpp"

using namespace sonopipe;

namespace {

/// Emits `n` identical constant frames.
class ConstantSource final : public FrameSource {
 public:
  explicit ConstantSource(std::size_t n, std::size_t size) : n_(n), size_(size) {}
  std::optional<Frame> next() override {
    if (i_ == n_) return std::nullopt;
    ++i_;
    return Frame::filled(size_, size_, 0.4, i_ * 1000, i_);
  }

 private:
  std::size_t n_, size_, i_ = 0;
};

std::vector<GestureLabel> run_debounce(std::size_t window, const std::vector<GestureLabel>& raw) {
  Debouncer d(window);
  std::vector<GestureLabel> shown;
  for (GestureLabel g : raw) shown.push_back(d.update(g));
  return shown;
}

constexpr auto R = GestureLabel::Rest;
constexpr auto G = GestureLabel::PowerGrip;
constexpr auto W = GestureLabel::WristPronation;
constexpr auto P = GestureLabel::Point;

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("window 1 passes predictions through") {
  const std::vector raw = {R, G, W, W, P, R, G};
  CHECK(run_debounce(1, raw) == raw);
  CHECK_THROWS_AS(Debouncer(0), ArgumentError);
}

TEST_CASE("debouncer needs a strict majority") {
  Debouncer d(5);
  // Two of five is not a majority; the third vote is.
  for (GestureLabel g : {G, G, R, R}) CHECK(d.update(g) == R);
  CHECK(d.update(G) == G);
  CHECK(d.changed());
  CHECK(d.changes() == 1);
  CHECK(d.update(G) == G);
  CHECK(!d.changed());
}

TEST_CASE("debouncer changes at most once per window") {
  std::mt19937_64 gen(1);
  for (std::size_t m : {2u, 3u, 5u, 8u}) {
    std::vector<GestureLabel> raw;
    for (int i = 0; i < 3000; ++i) raw.push_back(static_cast<GestureLabel>(gen() % 4));
    const auto shown = run_debounce(m, raw);
    std::size_t last_change = 0;
    bool any = false;
    for (std::size_t i = 1; i < shown.size(); ++i) {
      if (shown[i] != shown[i - 1]) {
        if (any) CHECK(i - last_change >= m);
        last_change = i;
        any = true;
      }
    }
  }
}

TEST_CASE("isolated flips never move the output") {
  for (std::size_t m : {3u, 5u, 7u}) {
    std::vector<GestureLabel> raw(1000, G);
    for (std::size_t i = 10; i < raw.size(); i += 20) raw[i] = P;
    Debouncer d(m, G);
    for (GestureLabel g : raw) CHECK(d.update(g) == G);
    CHECK(d.changes() == 0);
  }
}

TEST_CASE("motion planner blends toward the new pose") {
  const PosePresets& p = default_presets();
  MotionPlanner mp(p, 0.6);
  CHECK(mp.at(0) == p.pose(R));
  CHECK(mp.at(5'000'000) == p.pose(R));
  mp.retarget(G, 1'000'000);
  CHECK(mp.at(1'000'000) == p.pose(R));
  CHECK(mp.at(1'600'000) == p.pose(G));
  CHECK(mp.at(9'000'000) == p.pose(G));
  const JointState half = mp.at(1'300'000);
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    CHECK(half[j] == doctest::Approx((p.pose(R)[j] + p.pose(G)[j]) / 2).epsilon(1e-12));
  }
  // A new target mid-move starts from where the hand is.
  mp.retarget(P, 1'300'000);
  CHECK(mp.at(1'300'000) == half);
  CHECK(mp.at(1'900'000) == p.pose(P));
  CHECK_THROWS_AS(MotionPlanner(p, 0.0), ArgumentError);
}

TEST_CASE("latency histogram percentiles stay within a bucket of the exact value") {
  std::mt19937_64 gen(2);
  std::lognormal_distribution<double> dist(8.0, 1.5);
  LatencyHistogram h;
  std::vector<std::uint64_t> xs;
  for (int i = 0; i < 5000; ++i) {
    const auto v = static_cast<std::uint64_t>(dist(gen));
    xs.push_back(v);
    h.record(v);
  }
  std::sort(xs.begin(), xs.end());
  CHECK(h.count() == xs.size());
  CHECK(h.min() == xs.front());
  CHECK(h.max() == xs.back());
  for (double p : {0.01, 0.5, 0.9, 0.99, 1.0}) {
    const auto exact = xs[static_cast<std::size_t>(std::ceil(p * xs.size())) - 1];
    const auto got = h.percentile(p);
    CHECK(got >= exact);
    CHECK(static_cast<double>(got) <= static_cast<double>(exact) * 1.0101 + 1.0);
  }
  std::uint64_t total = 0;
  for (const auto& [edge, n] : h.buckets()) total += n;
  CHECK(total == xs.size());
  CHECK(LatencyHistogram().percentile(0.5) == 0);
}

TEST_CASE("config parsing") {
  const PipelineConfig d = parse_config("{}");
  CHECK(d.width == 480);
  CHECK(d.k == 3);
  CHECK(d.debounce == 5);
  CHECK(d.folds == 5);
  CHECK(d.tcp_port == 7071);
  CHECK(d.ws_port == 7072);
  CHECK(d.command_port == 7073);
  CHECK(!d.allow_commands);
  CHECK(d.transition_s == 0.6);
  CHECK(d.queue_capacity == 4);

  const PipelineConfig c = parse_config(R"({
    "source": {"kind": "synthetic", "rate_hz": 10,
               "script": [{"gesture": "rest", "frames": 3}, {"gesture": "point", "frames": 2}],
               "phantom": {"seed": 9, "width": 64, "height": 48, "noise_sigma": 0.2}},
    "roi": {"x": 1, "y": 2, "w": 30, "h": 40},
    "width": 64, "height": 48, "k": 5, "debounce": 3, "ws_port": 9000,
    "capture": "out.ndjson", "poses": "p.json"})");
  CHECK(c.source.rate_hz == 10);
  REQUIRE(c.source.script.size() == 2);
  CHECK(c.source.script[1].gesture == GestureLabel::Point);
  CHECK(c.source.phantom.seed == 9);
  CHECK(c.source.phantom.height == 48);
  CHECK(c.roi == Roi{1, 2, 30, 40});
  CHECK(c.k == 5);
  CHECK(c.ws_port == 9000);
  CHECK(c.capture == std::filesystem::path("out.ndjson"));
  CHECK(c.poses == std::filesystem::path("p.json"));

  for (const char* bad : {"[", "[]", R"({"debounce": 0})", R"({"k": 0})",
                          R"({"source": {"kind": "camera"}})", R"({"source": {"kind": "replay"}})",
                          R"({"width": "wide"})",
                          R"({"source": {"script": [{"gesture": "fist", "frames": 1}]}})",
                          R"({"source": {"phantom": {"width": 8}}})", R"({"transition_s": 0})"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
  }
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("frame processor") {
  const auto t = test::train_small();
  const FrameProcessor proc(std::nullopt, 64, 64, t.result.store, t.result.model);
  const Frame base = synth::make_phantom(t.config.source.phantom);
  const Frame big = resize(synth::render_gesture(base, W, 1.0, t.config.source.phantom, 99), 64, 64);
  const auto c = proc.process(big.restamped(5, 6));
  CHECK(c.predicted == W);
  CHECK(c.seq == 6);
  CHECK(c.timestamp_us == 5);
  CHECK_THROWS_AS(proc.process(Frame::filled(64, 64, 0.3)), ZeroVarianceError);
  CHECK_THROWS_AS(FrameProcessor(std::nullopt, 32, 64, t.result.store, t.result.model),
                  ConfigError);
  // Frames of another size are cropped and resized to the template size.
  const FrameProcessor cropping(Roi{0, 0, 50, 50}, 64, 64, t.result.store, t.result.model);
  CHECK(cropping.preprocess(Frame::filled(80, 60, 0.5)).width() == 64);
  CHECK_THROWS_AS(cropping.process(Frame::filled(40, 40, 0.5)), ArgumentError);
}

TEST_CASE("scripted rest to power grip makes one transition near the boundary") {
  auto t = test::train_small();
  t.config.source.script = {{R, 50}, {G, 50}};
  t.config.transition_s = 0.1;
  SyntheticSource src(t.config.source.phantom, t.config.source.script, 200.0);
  std::vector<PoseMessage> msgs;
  RunHooks hooks;
  hooks.on_publish = [&](const PoseMessage& m) { msgs.push_back(m); };
  const Metrics m = run_pipeline(t.config, src, t.result.store, t.result.model, default_presets(),
                                 nullptr, hooks);
  REQUIRE(msgs.size() == 100);
  CHECK(m.processed == 100);
  CHECK(m.frames_in == 100);
  CHECK(m.dropped == 0);
  std::vector<std::size_t> changes;
  for (std::size_t i = 1; i < msgs.size(); ++i) {
    CHECK(msgs[i].seq == msgs[i - 1].seq + 1);
    CHECK(msgs[i].timestamp_us >= msgs[i - 1].timestamp_us);
    if (msgs[i].gesture != msgs[i - 1].gesture) changes.push_back(i);
  }
  REQUIRE(changes.size() == 1);
  CHECK(changes[0] >= 50);
  CHECK(changes[0] <= 60);
  CHECK(msgs.front().gesture == R);
  CHECK(msgs.back().gesture == G);
  CHECK(m.prediction_changes == 1);
  // The hand arrives at the grip pose once the transition has elapsed.
  CHECK(msgs.back().joints == default_presets().pose(G));
  CHECK(msgs.front().joints == default_presets().pose(R));
  for (const auto& msg : msgs) CHECK(msg.confidence == msg.features[ordinal(msg.gesture)]);
  CHECK(m.end_to_end.count() == m.processed);
  CHECK(m.preprocess.count() == m.processed);
}

TEST_CASE("constant frames are counted as invalid and never published") {
  const auto t = test::train_small();
  ConstantSource src(20, 64);
  std::size_t published = 0;
  RunHooks hooks;
  hooks.on_publish = [&](const PoseMessage&) { ++published; };
  const Metrics m = run_pipeline(t.config, src, t.result.store, t.result.model, default_presets(),
                                 nullptr, hooks);
  CHECK(m.frames_in == 20);
  CHECK(m.invalid + m.dropped == 20);
  CHECK(m.invalid > 0);
  CHECK(m.processed == 0);
  CHECK(published == 0);
  CHECK(nlohmann::json::parse(m.to_json())["invalid"] == m.invalid);
}

TEST_CASE("runs with a server and no subscribers, and with one subscriber") {
  auto t = test::train_small();
  t.config.source.script = {{R, 10}, {P, 10}};
  StreamServer server({"127.0.0.1", 0, 0, 64, 0});
  server.start();
  {
    SyntheticSource src(t.config.source.phantom, t.config.source.script, 200.0);
    const Metrics m = run_pipeline(t.config, src, t.result.store, t.result.model,
                                   default_presets(), &server);
    CHECK(m.processed == 20);
    CHECK(server.published() == 20);
  }
  test::LineClient client(server.tcp_port());
  REQUIRE(test::eventually([&] { return server.subscriber_count() == 1; }));
  SyntheticSource src(t.config.source.phantom, t.config.source.script, 200.0);
  run_pipeline(t.config, src, t.result.store, t.result.model, default_presets(), &server);
  for (std::uint64_t i = 0; i < 20; ++i) CHECK(decode_message(client.read_line()).seq == i);
  server.stop();
}

TEST_CASE("stop request ends an unbounded run") {
  const auto t = test::train_small();
  SyntheticSource src(t.config.source.phantom, {}, 100.0);
  std::atomic<bool> stop{false};
  RunHooks hooks;
  hooks.stop = &stop;
  std::thread stopper([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    stop = true;
  });
  const auto start = std::chrono::steady_clock::now();
  const Metrics m = run_pipeline(t.config, src, t.result.store, t.result.model, default_presets(),
                                 nullptr, hooks);
  stopper.join();
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(3));
  CHECK(m.processed > 0);
  CHECK(m.processed + m.dropped + m.invalid <= m.frames_in);
}

TEST_CASE("capture file holds every published line") {
  test::TempDir dir;
  auto t = test::train_small();
  t.config.source.script = {{W, 15}};
  t.config.capture = dir / "cap.ndjson";
  SyntheticSource src(t.config.source.phantom, t.config.source.script, 300.0);
  run_pipeline(t.config, src, t.result.store, t.result.model, default_presets(), nullptr);
  std::ifstream in(*t.config.capture);
  std::string line;
  std::uint64_t n = 0;
  while (std::getline(in, line)) CHECK(decode_message(line).seq == n++);
  CHECK(n == 15);
}

TEST_CASE("training") {
  const auto spec = [] {
    synth::PhantomSpec s;
    s.width = s.height = 64;
    s.noise_sigma = 0.05;
    return s;
  }();
  PipelineConfig c;
  c.width = c.height = 64;
  const auto frames = test::render_set(spec, 10);

  SUBCASE("counts and determinism") {
    const TrainResult a = train(c, frames);
    CHECK(a.model.samples().size() == 40);
    for (auto n : a.per_class) CHECK(n == 10);
    for (GestureLabel g : kAllGestures) CHECK(a.store.at(g).n_frames == 10);
    const TrainResult b = train(c, frames);
    CHECK(model_to_json(a.model) == model_to_json(b.model));
  }
  SUBCASE("frames equal to their templates classify perfectly") {
    const TrainResult a = train(c, frames);
    std::vector<synth::LabeledFrame> exact;
    for (GestureLabel g : kAllGestures) exact.push_back({a.store.at(g).image, g});
    PipelineConfig nearest = c;
    nearest.k = 1;
    const TrainResult self = train(nearest, exact);
    ConfusionMatrix m;
    for (const auto& s : extract_samples(c, self.store, exact)) {
      m.add(s.label, knn_predict(self.model, s.features));
    }
    CHECK(m.accuracy() == 1.0);
  }
  SUBCASE("missing gesture data") {
    std::vector<synth::LabeledFrame> partial(frames.begin(), frames.begin() + 30);
    CHECK_THROWS_AS(train(c, partial), ConfigError);
  }
}

TEST_CASE("evaluation reports") {
  const auto spec = [] {
    synth::PhantomSpec s;
    s.width = s.height = 64;
    s.noise_sigma = 0.3;
    return s;
  }();
  PipelineConfig c;
  c.width = c.height = 64;
  const auto frames = test::render_set(spec, 15);
  const TrainResult tr = train(c, frames);
  const auto samples = extract_samples(c, tr.store, frames);
  const EvalResult r = evaluate(samples, 3, 5, 42);
  CHECK(r.full.confusion.total() == 60);
  CHECK(r.without_rest.confusion.total() == 45);
  CHECK(r.without_rest.confusion.row_sum(R) == 0);
  const auto doc = nlohmann::json::parse(report_to_json(r.full));
  CHECK(doc["accuracy"] == r.full.accuracy);
  CHECK(doc["per_fold"].size() == 5);
  CHECK(doc["confusion"][1][1] == r.full.confusion.counts[1][1]);
}

}  // TEST_SUITE
