#include "sonopipe/streamwire.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <fmt/format.h>

#include "json.hpp"
#include "sonopipe/error.hpp"

namespace sonopipe {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using asio::ip::tcp;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Message codec

namespace {

void append_real(std::string& out, double v) {
  if (!std::isfinite(v)) throw ArgumentError("pose message contains a non-finite value");
  fmt::format_to(std::back_inserter(out), "{:.9g}", v);
}

template <std::size_t N>
void append_array(std::string& out, const std::array<double, N>& values) {
  out += '[';
  for (std::size_t i = 0; i < N; ++i) {
    if (i) out += ',';
    append_real(out, values[i]);
  }
  out += ']';
}

template <std::size_t N>
std::array<double, N> read_array(const json& doc, const char* key) {
  const json& arr = doc.at(key);
  if (!arr.is_array() || arr.size() != N) {
    throw FormatError(fmt::format("'{}' must be an array of {} numbers", key, N));
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!arr[i].is_number()) throw FormatError(fmt::format("'{}'[{}] is not a number", key, i));
    out[i] = arr[i].get<double>();
  }
  return out;
}

constexpr std::array<const char*, 6> kMessageKeys = {"seq",        "timestamp_us", "gesture",
                                                     "confidence", "features",     "joints"};

}  // namespace

std::string encode_message(const PoseMessage& m) {
  std::string out;
  out.reserve(320);
  fmt::format_to(std::back_inserter(out), R"({{"seq":{},"timestamp_us":{},"gesture":"{}","confidence":)",
                 m.seq, m.timestamp_us, gesture_name(m.gesture));
  append_real(out, m.confidence);
  out += R"(,"features":)";
  append_array(out, m.features);
  out += R"(,"joints":)";
  append_array(out, m.joints);
  out += "}\n";
  return out;
}

PoseMessage decode_message(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (line.find('\n') != std::string_view::npos) {
    throw FormatError("pose message spans more than one line");
  }
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("pose message is not valid JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw FormatError("pose message must be a JSON object");
  for (const char* key : kMessageKeys) {
    if (!doc.contains(key)) throw FormatError(fmt::format("pose message is missing '{}'", key));
  }
  if (doc.size() != kMessageKeys.size()) throw FormatError("pose message has unexpected keys");

  PoseMessage m;
  try {
    if (!doc["seq"].is_number_unsigned() || !doc["timestamp_us"].is_number_unsigned()) {
      throw FormatError("seq and timestamp_us must be non-negative integers");
    }
    m.seq = doc["seq"].get<std::uint64_t>();
    m.timestamp_us = doc["timestamp_us"].get<std::uint64_t>();
    if (!doc["gesture"].is_string()) throw FormatError("gesture must be a string");
    const auto name = doc["gesture"].get<std::string>();
    const auto g = parse_gesture(name);
    if (!g) throw FormatError(fmt::format("unknown gesture '{}'", name));
    m.gesture = *g;
    if (!doc["confidence"].is_number()) throw FormatError("confidence must be a number");
    m.confidence = doc["confidence"].get<double>();
    m.features = read_array<kNumGestures>(doc, "features");
    m.joints = read_array<kNumJoints>(doc, "joints");
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("pose message: {}", e.what()));
  }
  return m;
}

PoseMessage canonical_rest_message() {
  PoseMessage m;
  m.gesture = GestureLabel::Rest;
  m.confidence = 1.0;
  m.features = {1.0, 0.0, 0.0, 0.0};
  return m;
}

// ---------------------------------------------------------------------------
// Subscriber queue

SubscriberQueue::SubscriberQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ArgumentError("subscriber queue capacity must be positive");
}

bool SubscriberQueue::push(Payload p) {
  bool dropped = false;
  if (items_.size() == capacity_) {
    items_.pop_front();
    ++dropped_;
    dropped = true;
  }
  items_.push_back(std::move(p));
  return dropped;
}

std::optional<SubscriberQueue::Payload> SubscriberQueue::pop() {
  if (items_.empty()) return std::nullopt;
  Payload p = std::move(items_.front());
  items_.pop_front();
  return p;
}

// ---------------------------------------------------------------------------
// Stream server

namespace {

std::uint16_t bind_acceptor(tcp::acceptor& acceptor, const std::string& host,
                            std::uint16_t port) {
  try {
    const tcp::endpoint ep(asio::ip::make_address(host), port);
    acceptor.open(ep.protocol());
    acceptor.set_option(tcp::acceptor::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen();
    return acceptor.local_endpoint().port();
  } catch (const boost::system::system_error& e) {
    throw Error(fmt::format("cannot bind {}:{}: {}", host, port, e.what()));
  }
}

}  // namespace

struct StreamServer::Impl {
  struct Subscription : std::enable_shared_from_this<Subscription> {
    Subscription(Impl& server, std::uint64_t id, tcp::socket socket, bool is_ws)
        : server(server), id(id), is_ws(is_ws), queue(server.options.queue_capacity) {
      if (is_ws) {
        ws = std::make_unique<websocket::stream<tcp::socket>>(std::move(socket));
      } else {
        raw = std::make_unique<tcp::socket>(std::move(socket));
      }
    }

    tcp::socket& lowest() { return is_ws ? ws->next_layer() : *raw; }

    void enqueue(const SubscriberQueue::Payload& p) {
      std::lock_guard lock(mu);
      if (closed) return;
      queue.push(p);
      if (!writing) {
        writing = true;
        asio::post(server.io, [self = shared_from_this()] { self->write_next(); });
      }
    }

    void write_next() {
      {
        std::lock_guard lock(mu);
        auto next = queue.pop();
        if (closed || !next) {
          writing = false;
          return;
        }
        inflight = std::move(*next);
      }
      auto on_written = [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return self->close();
        {
          std::lock_guard lock(self->mu);
          ++self->delivered;
        }
        self->write_next();
      };
      if (is_ws) {
        ws->async_write(asio::buffer(*inflight), on_written);
      } else {
        asio::async_write(*raw, asio::buffer(*inflight), on_written);
      }
    }

    // Subscribers never send anything meaningful; reading detects hangups
    // and lets the WebSocket layer answer pings and close frames.
    void read_loop() {
      auto on_read = [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return self->close();
        self->sink.consume(self->sink.size());
        self->read_loop();
      };
      if (is_ws) {
        ws->async_read(sink, on_read);
      } else {
        raw->async_read_some(sink.prepare(512), [self = shared_from_this()](
                                                    beast::error_code ec, std::size_t) {
          if (ec) return self->close();
          self->read_loop();
        });
      }
    }

    void close() {
      {
        std::lock_guard lock(mu);
        if (closed) return;
        closed = true;
      }
      beast::error_code ignored;
      lowest().shutdown(tcp::socket::shutdown_both, ignored);
      lowest().close(ignored);
      server.forget(id);
    }

    SubscriberStats stats() {
      std::lock_guard lock(mu);
      return {id, is_ws, delivered, queue.dropped()};
    }

    Impl& server;
    const std::uint64_t id;
    const bool is_ws;
    std::unique_ptr<tcp::socket> raw;
    std::unique_ptr<websocket::stream<tcp::socket>> ws;
    beast::flat_buffer sink;

    std::mutex mu;
    SubscriberQueue queue;
    SubscriberQueue::Payload inflight;
    bool writing = false;
    bool closed = false;
    std::uint64_t delivered = 0;
  };

  explicit Impl(StreamServerOptions opts) : options(std::move(opts)) {}

  void accept_tcp() {
    tcp_acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      configure(socket);
      auto sub = std::make_shared<Subscription>(*this, next_id++, std::move(socket), false);
      remember(sub);
      sub->read_loop();
      accept_tcp();
    });
  }

  void accept_ws() {
    ws_acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      configure(socket);
      auto sub = std::make_shared<Subscription>(*this, next_id++, std::move(socket), true);
      sub->ws->text(true);
      sub->ws->async_accept([this, sub](beast::error_code hs_ec) {
        if (hs_ec) return;
        remember(sub);
        sub->read_loop();
      });
      accept_ws();
    });
  }

  void configure(tcp::socket& socket) {
    beast::error_code ignored;
    socket.set_option(tcp::no_delay(true), ignored);
    if (options.socket_send_buffer > 0) {
      socket.set_option(asio::socket_base::send_buffer_size(options.socket_send_buffer),
                        ignored);
    }
  }

  void remember(const std::shared_ptr<Subscription>& sub) {
    std::lock_guard lock(subs_mu);
    subs[sub->id] = sub;
  }

  void forget(std::uint64_t id) {
    std::lock_guard lock(subs_mu);
    auto it = subs.find(id);
    if (it == subs.end()) return;
    const SubscriberStats s = it->second->stats();
    closed_dropped += s.dropped;
    subs.erase(it);
  }

  std::vector<std::shared_ptr<Subscription>> snapshot() const {
    std::lock_guard lock(subs_mu);
    std::vector<std::shared_ptr<Subscription>> out;
    out.reserve(subs.size());
    for (const auto& [id, sub] : subs) out.push_back(sub);
    return out;
  }

  StreamServerOptions options;
  asio::io_context io;
  tcp::acceptor tcp_acceptor{io};
  tcp::acceptor ws_acceptor{io};
  std::thread thread;
  std::mutex lifecycle_mu;
  bool running = false;
  std::uint16_t tcp_bound = 0;
  std::uint16_t ws_bound = 0;
  std::uint64_t next_id = 1;

  mutable std::mutex subs_mu;
  std::map<std::uint64_t, std::shared_ptr<Subscription>> subs;
  std::uint64_t closed_dropped = 0;
  std::atomic<std::uint64_t> published{0};
};

StreamServer::StreamServer(StreamServerOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

StreamServer::~StreamServer() { stop(); }

void StreamServer::start() {
  std::lock_guard lock(impl_->lifecycle_mu);
  if (impl_->running) return;
  Impl& s = *impl_;
  s.io.restart();
  s.tcp_acceptor = tcp::acceptor(s.io);
  s.ws_acceptor = tcp::acceptor(s.io);
  s.tcp_bound = bind_acceptor(s.tcp_acceptor, s.options.bind, s.options.tcp_port);
  try {
    s.ws_bound = bind_acceptor(s.ws_acceptor, s.options.bind, s.options.ws_port);
  } catch (...) {
    s.tcp_acceptor.close();
    throw;
  }
  s.accept_tcp();
  s.accept_ws();
  s.thread = std::thread([&s] {
    auto guard = asio::make_work_guard(s.io);
    s.io.run();
  });
  s.running = true;
}

void StreamServer::stop() {
  std::lock_guard lock(impl_->lifecycle_mu);
  if (!impl_->running) return;
  Impl& s = *impl_;
  asio::post(s.io, [&s] {
    beast::error_code ignored;
    s.tcp_acceptor.close(ignored);
    s.ws_acceptor.close(ignored);
    for (const auto& sub : s.snapshot()) sub->close();
    s.io.stop();
  });
  s.thread.join();
  s.running = false;
}

bool StreamServer::running() const {
  std::lock_guard lock(impl_->lifecycle_mu);
  return impl_->running;
}

std::uint16_t StreamServer::tcp_port() const { return impl_->tcp_bound; }
std::uint16_t StreamServer::ws_port() const { return impl_->ws_bound; }

void StreamServer::publish(const PoseMessage& m) { publish_line(encode_message(m)); }

void StreamServer::publish_line(std::string line) {
  auto payload = std::make_shared<const std::string>(std::move(line));
  impl_->published.fetch_add(1, std::memory_order_relaxed);
  std::lock_guard lock(impl_->subs_mu);
  for (const auto& [id, sub] : impl_->subs) sub->enqueue(payload);
}

std::size_t StreamServer::subscriber_count() const {
  std::lock_guard lock(impl_->subs_mu);
  return impl_->subs.size();
}

std::vector<SubscriberStats> StreamServer::subscriber_stats() const {
  std::vector<SubscriberStats> out;
  for (const auto& sub : impl_->snapshot()) out.push_back(sub->stats());
  return out;
}

std::uint64_t StreamServer::total_dropped() const {
  std::uint64_t total;
  {
    std::lock_guard lock(impl_->subs_mu);
    total = impl_->closed_dropped;
  }
  for (const auto& s : subscriber_stats()) total += s.dropped;
  return total;
}

std::uint64_t StreamServer::published() const { return impl_->published.load(); }

// ---------------------------------------------------------------------------
// Command server

struct CommandServer::Impl {
  struct Session : std::enable_shared_from_this<Session> {
    Session(Impl& owner, tcp::socket socket) : owner(owner), ws(std::move(socket)) {}

    void run() {
      ws.text(true);
      ws.async_accept([self = shared_from_this()](beast::error_code ec) {
        if (!ec) self->read();
      });
    }

    void read() {
      ws.async_read(buffer, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return;
        self->reply = self->owner.handle(beast::buffers_to_string(self->buffer.data()));
        self->buffer.consume(self->buffer.size());
        self->ws.async_write(asio::buffer(self->reply),
                             [self](beast::error_code wec, std::size_t) {
                               if (!wec) self->read();
                             });
      });
    }

    Impl& owner;
    websocket::stream<tcp::socket> ws;
    beast::flat_buffer buffer;
    std::string reply;
  };

  std::string handle(std::string_view text) {
    try {
      const json doc = json::parse(text);
      if (!doc.is_object() || !doc.contains("cmd") || !doc["cmd"].is_string()) {
        return R"({"ok":false,"error":"missing cmd"})";
      }
      const auto cmd = doc["cmd"].get<std::string>();
      if (cmd != "set_gesture") {
        return json{{"ok", false}, {"error", "unknown command " + cmd}}.dump();
      }
      if (!doc.contains("gesture") || !doc["gesture"].is_string()) {
        return R"({"ok":false,"error":"missing gesture"})";
      }
      const auto name = doc["gesture"].get<std::string>();
      const auto g = parse_gesture(name);
      if (!g) return json{{"ok", false}, {"error", "unknown gesture " + name}}.dump();
      on_set_gesture(*g);
      return R"({"ok":true})";
    } catch (const json::exception&) {
      return R"({"ok":false,"error":"malformed json"})";
    }
  }

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto session = std::make_shared<Session>(*this, std::move(socket));
      sessions.push_back(session);
      session->run();
      accept();
    });
  }

  std::string bind;
  std::uint16_t requested_port;
  Handler on_set_gesture;
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::vector<std::weak_ptr<Session>> sessions;
  std::thread thread;
  std::mutex lifecycle_mu;
  bool running = false;
  std::uint16_t bound = 0;
};

CommandServer::CommandServer(std::string bind, std::uint16_t port, Handler on_set_gesture)
    : impl_(std::make_unique<Impl>()) {
  impl_->bind = std::move(bind);
  impl_->requested_port = port;
  impl_->on_set_gesture = std::move(on_set_gesture);
}

CommandServer::~CommandServer() { stop(); }

void CommandServer::start() {
  std::lock_guard lock(impl_->lifecycle_mu);
  if (impl_->running) return;
  Impl& s = *impl_;
  s.io.restart();
  s.acceptor = tcp::acceptor(s.io);
  s.bound = bind_acceptor(s.acceptor, s.bind, s.requested_port);
  s.accept();
  s.thread = std::thread([&s] {
    auto guard = asio::make_work_guard(s.io);
    s.io.run();
  });
  s.running = true;
}

void CommandServer::stop() {
  std::lock_guard lock(impl_->lifecycle_mu);
  if (!impl_->running) return;
  Impl& s = *impl_;
  asio::post(s.io, [&s] {
    beast::error_code ignored;
    s.acceptor.close(ignored);
    for (auto& weak : s.sessions) {
      if (auto session = weak.lock()) session->ws.next_layer().close(ignored);
    }
    s.sessions.clear();
    s.io.stop();
  });
  s.thread.join();
  s.running = false;
}

std::uint16_t CommandServer::port() const { return impl_->bound; }

std::string CommandServer::handle(std::string_view text) { return impl_->handle(text); }

}  // namespace sonopipe
