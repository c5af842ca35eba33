#include "exerclass/session.hpp"

#include <algorithm>

#include "exerclass/errors.hpp"

namespace exerclass {

Session::Session(std::shared_ptr<const LoadedModel> model, int window_size)
    : model_(std::move(model)), window_size_(window_size) {
  if (!model_) throw ConfigError("session requires a loaded model");
  if (window_size_ < 1) throw ConfigError("window size must be >= 1");
  if (window_size_ > model_->config.max_seq_len) {
    throw ConfigError("window size " + std::to_string(window_size_) + " exceeds the model's max_seq_len " +
                      std::to_string(model_->config.max_seq_len));
  }
  if (model_->config.input_dim != static_cast<int>(kFrameFeatures)) {
    throw ConfigError("serving requires a landmark model (input_dim 132)");
  }
}

ClassificationResult Session::push_frame(std::span<const float> raw) {
  return push_frame(sanitize_frame(raw));
}

ClassificationResult Session::push_frame(const LandmarkFrame& frame) {
  ++frames_received_;
  if (frame.is_padding) ++frames_dropped_;
  window_.push_back(frame);
  while (window_.size() > static_cast<std::size_t>(window_size_)) window_.pop_front();
  return classify_window();
}

void Session::reset() { window_.clear(); }

int Session::window_fill() const noexcept {
  return static_cast<int>(std::count_if(window_.begin(), window_.end(),
                                        [](const LandmarkFrame& f) { return !f.is_padding; }));
}

PoseSequence Session::window_sequence() const {
  PoseSequence seq;
  seq.frames.assign(window_.begin(), window_.end());
  seq.frames.resize(static_cast<std::size_t>(model_->config.max_seq_len), LandmarkFrame::padding());
  seq.real_len = window_fill();
  return seq;
}

ClassificationResult Session::classify_window() const {
  const auto out = classify(window_sequence(), model_->params, model_->config);
  return {out.probabilities.probs, out.probabilities.argmax, window_fill()};
}

}  // namespace exerclass
