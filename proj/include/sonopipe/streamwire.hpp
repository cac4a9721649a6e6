#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sonopipe/gesture.hpp"
#include "sonopipe/kinematics.hpp"

namespace sonopipe {

/// One joint-state update as carried on the wire.
struct PoseMessage {
  std::uint64_t seq = 0;
  std::uint64_t timestamp_us = 0;
  GestureLabel gesture = GestureLabel::Rest;
  double confidence = 0.0;
  std::array<double, kNumGestures> features{};
  JointState joints{};

  friend bool operator==(const PoseMessage&, const PoseMessage&) = default;
};

/// One JSON object with keys in the order seq, timestamp_us, gesture,
/// confidence, features, joints; reals printed with %.9g; terminated by a
/// single '\n'.
std::string encode_message(const PoseMessage& m);

/// Parses one line (the trailing newline is optional). Throws FormatError
/// for malformed JSON, a missing or extra key, a wrong array length or an
/// unknown gesture.
PoseMessage decode_message(std::string_view line);

/// The canonical message used for the golden wire file: seq 0, timestamp 0,
/// rest, confidence 1, features [1,0,0,0], all joints zero.
PoseMessage canonical_rest_message();

/// Bounded FIFO of encoded payloads for one subscriber. When full, the
/// oldest undelivered payload is discarded and counted.
class SubscriberQueue {
 public:
  using Payload = std::shared_ptr<const std::string>;

  explicit SubscriberQueue(std::size_t capacity);

  /// Returns true if an older payload was dropped to make room.
  bool push(Payload p);
  std::optional<Payload> pop();
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t dropped() const { return dropped_; }

 private:
  std::size_t capacity_;
  std::deque<Payload> items_;
  std::uint64_t dropped_ = 0;
};

struct StreamServerOptions {
  std::string bind = "127.0.0.1";
  std::uint16_t tcp_port = 7071;  // 0 picks an ephemeral port
  std::uint16_t ws_port = 7072;
  std::size_t queue_capacity = 64;
  /// SO_SNDBUF for accepted sockets; 0 keeps the OS default.
  int socket_send_buffer = 0;
};

struct SubscriberStats {
  std::uint64_t id;
  bool websocket;
  std::uint64_t delivered;
  std::uint64_t dropped;
};

/// Fan-out server for NDJSON pose messages over plain TCP and WebSocket.
///
/// publish() never waits on a subscriber: it encodes once, appends to each
/// subscriber's bounded queue and returns. Each connection has its own
/// writer; an I/O error ends only that subscription.
class StreamServer {
 public:
  explicit StreamServer(StreamServerOptions options);
  ~StreamServer();
  StreamServer(const StreamServer&) = delete;
  StreamServer& operator=(const StreamServer&) = delete;

  /// Binds both ports and starts the I/O thread. Throws Error on bind
  /// failure. Calling start() on a running server does nothing.
  void start();
  /// Closes every connection and joins the I/O thread. Idempotent.
  void stop();
  bool running() const;

  std::uint16_t tcp_port() const;
  std::uint16_t ws_port() const;

  void publish(const PoseMessage& m);
  /// Publishes an already encoded line (must end in '\n').
  void publish_line(std::string line);

  std::size_t subscriber_count() const;
  std::vector<SubscriberStats> subscriber_stats() const;
  /// Drops summed over current and closed subscriptions.
  std::uint64_t total_dropped() const;
  std::uint64_t published() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// WebSocket endpoint accepting {"cmd":"set_gesture","gesture":<name>}.
/// Each command gets a one-line JSON reply: {"ok":true} or
/// {"ok":false,"error":...}.
class CommandServer {
 public:
  using Handler = std::function<void(GestureLabel)>;

  CommandServer(std::string bind, std::uint16_t port, Handler on_set_gesture);
  ~CommandServer();
  CommandServer(const CommandServer&) = delete;
  CommandServer& operator=(const CommandServer&) = delete;

  void start();
  void stop();
  std::uint16_t port() const;

  /// Parses and applies one command; returns the reply text.
  std::string handle(std::string_view text);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sonopipe
