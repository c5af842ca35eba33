#include <array>
#include <charconv>
#include <limits>

#include <json.hpp>

#include "exerclass/errors.hpp"
#include "exerclass/session.hpp"

namespace exerclass {
namespace {

using nlohmann::json;

void append_float(std::string& out, float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

float landmark_value(const json& v) {
  if (v.is_number()) return static_cast<float>(v.get<double>());
  if (v.is_null()) return std::numeric_limits<float>::quiet_NaN();
  if (v.is_string() && v.get_ref<const std::string&>() == "NaN") {
    return std::numeric_limits<float>::quiet_NaN();
  }
  throw MalformedInput("landmark values must be numbers, \"NaN\" or null");
}

std::array<float, kFrameFeatures> read_landmarks(const json& msg) {
  const auto it = msg.find("landmarks");
  if (it == msg.end() || !it->is_array()) throw MalformedInput("'landmarks' must be an array");
  if (it->size() != kNumLandmarks) {
    throw MalformedInput("expected 33 landmarks, got " + std::to_string(it->size()));
  }
  std::array<float, kFrameFeatures> raw{};
  for (std::size_t p = 0; p < kNumLandmarks; ++p) {
    const auto& point = (*it)[p];
    if (!point.is_array() || point.size() != kFeaturesPerLandmark) {
      throw MalformedInput("landmark " + std::to_string(p) + " must be [x, y, z, visibility]");
    }
    for (std::size_t k = 0; k < kFeaturesPerLandmark; ++k) {
      raw[kFeaturesPerLandmark * p + k] = landmark_value(point[k]);
    }
  }
  return raw;
}

}  // namespace

std::string format_classification(const ClassificationResult& result, std::uint64_t seq_no,
                                  const ClassRegistry& registry) {
  std::string out = "{\"type\":\"classification\",\"seq_no\":" + std::to_string(seq_no) + ",\"probs\":{";
  for (std::size_t c = 0; c < result.probs.size(); ++c) {
    if (c) out += ',';
    out += json(registry.name(c)).dump();
    out += ':';
    append_float(out, static_cast<float>(result.probs[c]));
  }
  out += "},\"label\":";
  out += json(registry.name(static_cast<std::size_t>(result.label))).dump();
  out += ",\"window_fill\":" + std::to_string(result.window_fill) + "}";
  return out;
}

std::string format_error(std::string_view reason, std::optional<std::uint64_t> seq_no) {
  json j;
  j["type"] = "error";
  j["reason"] = std::string(reason);
  if (seq_no) j["seq_no"] = *seq_no;
  return j.dump();
}

ProtocolSession::ProtocolSession(std::shared_ptr<const LoadedModel> model, int window_size)
    : session_(std::move(model), window_size) {}

std::optional<std::string> ProtocolSession::handle(std::string_view message) {
  json msg;
  try {
    msg = json::parse(message);
  } catch (const json::parse_error&) {
    return format_error("message is not valid JSON");
  }
  if (!msg.is_object()) return format_error("message must be a JSON object");
  const auto type = msg.find("type");
  if (type == msg.end() || !type->is_string()) return format_error("missing 'type'");

  const auto& kind = type->get_ref<const std::string&>();
  if (kind == "reset") {
    session_.reset();
    return std::nullopt;
  }
  if (kind != "frame") return format_error("unknown message type '" + kind + "'");

  const auto seq = msg.find("seq_no");
  if (seq == msg.end() || !seq->is_number_unsigned()) {
    return format_error("'seq_no' must be a non-negative integer");
  }
  const auto seq_no = seq->get<std::uint64_t>();
  try {
    const auto raw = read_landmarks(msg);
    const auto result = session_.push_frame(std::span<const float>(raw));
    if (log_) log_(result, seq_no);
    return format_classification(result, seq_no, session_.model().registry);
  } catch (const MalformedInput& e) {
    return format_error(e.what(), seq_no);
  }
}

}  // namespace exerclass
