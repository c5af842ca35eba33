#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "exerclass/landmarks.hpp"
#include "exerclass/model.hpp"

namespace exerclass {

inline constexpr int kDefaultWindowSize = 8;

struct ClassificationResult {
  std::vector<double> probs;
  int label = 0;
  int window_fill = 0;  // real frames currently in the window
};

/// One client's sliding window over the most recent frames.
///
/// Every pushed frame, including one sanitized to padding, enters the
/// window and evicts the oldest beyond window_size. The model input is the
/// window contents followed by tail padding up to max_seq_len.
class Session {
 public:
  /// Throws ConfigError unless 1 <= window_size <= model->config.max_seq_len.
  Session(std::shared_ptr<const LoadedModel> model, int window_size = kDefaultWindowSize);

  /// Sanitizes 33x4 raw values and classifies the updated window.
  /// Throws MalformedInput on a wrong-sized payload; the window is untouched then.
  ClassificationResult push_frame(std::span<const float> raw);
  ClassificationResult push_frame(const LandmarkFrame& frame);

  void reset();

  int window_size() const noexcept { return window_size_; }
  int window_fill() const noexcept;
  const std::deque<LandmarkFrame>& window() const noexcept { return window_; }
  std::uint64_t frames_received() const noexcept { return frames_received_; }
  std::uint64_t frames_dropped() const noexcept { return frames_dropped_; }
  const LoadedModel& model() const noexcept { return *model_; }

  /// The padded sequence that the next classification would see.
  PoseSequence window_sequence() const;

 private:
  ClassificationResult classify_window() const;

  std::shared_ptr<const LoadedModel> model_;
  int window_size_;
  std::deque<LandmarkFrame> window_;
  std::uint64_t frames_received_ = 0;
  std::uint64_t frames_dropped_ = 0;
};

/// Text protocol over one session. Inbound messages:
///   {"type":"frame","seq_no":N,"landmarks":[[x,y,z,v] x 33]}   ("NaN" or null allowed)
///   {"type":"reset"}
/// Outbound:
///   {"type":"classification","seq_no":N,"probs":{name:p,...},"label":name,"window_fill":k}
///   {"type":"error","reason":"...","seq_no":N?}
class ProtocolSession {
 public:
  using LogSink = std::function<void(const ClassificationResult&, std::uint64_t seq_no)>;

  ProtocolSession(std::shared_ptr<const LoadedModel> model, int window_size = kDefaultWindowSize);

  /// Returns the reply, or nothing for messages that have none (reset).
  std::optional<std::string> handle(std::string_view message);

  void set_log_sink(LogSink sink) { log_ = std::move(sink); }
  const Session& session() const noexcept { return session_; }

 private:
  Session session_;
  LogSink log_;
};

std::string format_classification(const ClassificationResult& result, std::uint64_t seq_no,
                                  const ClassRegistry& registry);
std::string format_error(std::string_view reason, std::optional<std::uint64_t> seq_no = std::nullopt);

}  // namespace exerclass
