#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "exerclass/errors.hpp"
#include "exerclass/landmarks.hpp"

namespace exerclass {
namespace {

using nlohmann::json;

constexpr const char* kFormatTag = "exerclass-landmarks";

void append_float(std::string& out, float v) {
  if (!std::isfinite(v)) {
    out += "\"NaN\"";
    return;
  }
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

void append_json_string(std::string& out, const std::string& s) { out += json(s).dump(); }

float read_float(const json& value, std::size_t line, const std::string& where) {
  if (value.is_number()) return static_cast<float>(value.get<double>());
  if (value.is_string()) {
    const auto& s = value.get_ref<const std::string&>();
    if (s == "NaN") return std::numeric_limits<float>::quiet_NaN();
    if (s == "Infinity") return std::numeric_limits<float>::infinity();
    if (s == "-Infinity") return -std::numeric_limits<float>::infinity();
  }
  throw ParseError(line, where + ": expected a number or \"NaN\"");
}

std::vector<LandmarkFrame> read_frames(const json& frames, std::size_t line,
                                       const std::string& record) {
  if (!frames.is_array()) throw ParseError(line, record + ": 'frames' must be an array");
  if (frames.empty()) throw ParseError(line, record + ": 'frames' must not be empty");
  std::vector<LandmarkFrame> out;
  out.reserve(frames.size());
  std::array<float, kFrameFeatures> raw{};
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& frame = frames[f];
    const std::string where = record + " frame " + std::to_string(f);
    if (!frame.is_array() || frame.size() != kNumLandmarks) {
      throw ParseError(line, where + ": expected " + std::to_string(kNumLandmarks) +
                                 " landmarks, got " +
                                 (frame.is_array() ? std::to_string(frame.size()) : "non-array"));
    }
    for (std::size_t p = 0; p < kNumLandmarks; ++p) {
      const auto& point = frame[p];
      if (!point.is_array() || point.size() != kFeaturesPerLandmark) {
        throw ParseError(line, where + " landmark " + std::to_string(p) +
                                   ": expected [x, y, z, visibility]");
      }
      for (std::size_t k = 0; k < kFeaturesPerLandmark; ++k) {
        raw[kFeaturesPerLandmark * p + k] =
            read_float(point[k], line, where + " landmark " + std::to_string(p));
      }
    }
    out.push_back(sanitize_frame(std::span<const float>(raw)));
  }
  return out;
}

}  // namespace

std::string format_landmark_text(const LandmarkDataset& dataset) {
  std::string out;
  out += "{\"format\":\"";
  out += kFormatTag;
  out += "\",\"format_version\":" + std::to_string(kLandmarkFormatVersion);
  if (dataset.fps) {
    out += ",\"fps\":";
    append_float(out, *dataset.fps);
  }
  out += ",\"class_registry\":[";
  for (std::size_t i = 0; i < dataset.registry.size(); ++i) {
    if (i) out += ',';
    append_json_string(out, dataset.registry.name(i));
  }
  out += "]}\n";

  for (const auto& clip : dataset.clips) {
    out += "{\"sequence_id\":";
    append_json_string(out, clip.sequence_id);
    if (clip.label) {
      out += ",\"label\":";
      append_json_string(out, dataset.registry.name(static_cast<std::size_t>(*clip.label)));
    }
    out += ",\"frames\":[";
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      if (f) out += ',';
      out += '[';
      const auto& frame = clip.frames[f];
      for (std::size_t p = 0; p < kNumLandmarks; ++p) {
        if (p) out += ',';
        out += '[';
        if (frame.is_padding) {
          out += "\"NaN\",\"NaN\",\"NaN\",\"NaN\"";
        } else {
          const auto& pt = frame.points[p];
          append_float(out, pt.x);
          out += ',';
          append_float(out, pt.y);
          out += ',';
          append_float(out, pt.z);
          out += ',';
          append_float(out, pt.visibility);
        }
        out += ']';
      }
      out += ']';
    }
    out += "]}\n";
  }
  return out;
}

LandmarkDataset parse_landmark_text(std::string_view text) {
  LandmarkDataset dataset;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object()) throw ParseError(line_no, "record must be a JSON object");

    if (!have_header) {
      if (record.value("format", std::string{}) != kFormatTag) {
        throw ParseError(line_no, "header: 'format' must be \"" + std::string(kFormatTag) + "\"");
      }
      const auto version = record.find("format_version");
      if (version == record.end() || !version->is_number_integer() ||
          version->get<int>() != kLandmarkFormatVersion) {
        throw ParseError(line_no, "header: unsupported 'format_version'");
      }
      if (auto fps = record.find("fps"); fps != record.end() && !fps->is_null()) {
        if (!fps->is_number()) throw ParseError(line_no, "header: 'fps' must be a number");
        dataset.fps = static_cast<float>(fps->get<double>());
      }
      const auto reg = record.find("class_registry");
      if (reg == record.end() || !reg->is_array()) {
        throw ParseError(line_no, "header: 'class_registry' must be an array of names");
      }
      std::vector<std::string> names;
      for (const auto& n : *reg) {
        if (!n.is_string()) throw ParseError(line_no, "header: class names must be strings");
        names.push_back(n.get<std::string>());
      }
      try {
        dataset.registry = ClassRegistry(std::move(names));
      } catch (const ConfigError& e) {
        throw ParseError(line_no, std::string("header: ") + e.what());
      }
      have_header = true;
      continue;
    }

    Clip clip;
    const auto id = record.find("sequence_id");
    if (id == record.end() || !id->is_string()) {
      throw ParseError(line_no, "record: 'sequence_id' must be a string");
    }
    clip.sequence_id = id->get<std::string>();
    const std::string where = "sequence '" + clip.sequence_id + "'";
    if (auto label = record.find("label"); label != record.end() && !label->is_null()) {
      if (!label->is_string()) throw ParseError(line_no, where + ": 'label' must be a string");
      const auto index = dataset.registry.index_of(label->get<std::string>());
      if (!index) {
        throw ParseError(line_no, where + ": unknown label '" + label->get<std::string>() + "'");
      }
      clip.label = *index;
    }
    const auto frames = record.find("frames");
    if (frames == record.end()) throw ParseError(line_no, where + ": missing 'frames'");
    clip.frames = read_frames(*frames, line_no, where);
    dataset.clips.push_back(std::move(clip));
  }
  if (!have_header) throw ParseError(line_no == 0 ? 1 : line_no, "missing header record");
  return dataset;
}

LandmarkDataset load_landmark_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open landmark file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_landmark_text(buf.str());
}

void save_landmark_file(const LandmarkDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write landmark file '" + path + "'");
  const auto text = format_landmark_text(dataset);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("failed writing landmark file '" + path + "'");
}

}  // namespace exerclass
