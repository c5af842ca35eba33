#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

#include "exerclass/errors.hpp"
#include "exerclass/model.hpp"

namespace exerclass {
namespace {

constexpr std::string_view kMagic = "EXERCLASS-MODEL";
constexpr std::string_view kHeaderEnd = "end_header\n";
constexpr std::string_view kGateOrder = "i f g o";
constexpr std::string_view kKernelLayout = "input-major";

struct TensorEntry {
  std::string name;
  std::vector<std::size_t> shape;

  std::size_t elements() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

std::vector<TensorEntry> tensor_table(const ModelConfig& config) {
  std::vector<TensorEntry> table;
  for (std::size_t l = 0; l < config.lstm_units.size(); ++l) {
    const auto u = static_cast<std::size_t>(config.lstm_units[l]);
    const auto d = static_cast<std::size_t>(config.layer_input_dim(l));
    const std::string p = "lstm" + std::to_string(l);
    table.push_back({p + ".input_kernel", {d, 4 * u}});
    table.push_back({p + ".recurrent_kernel", {u, 4 * u}});
    table.push_back({p + ".bias", {4 * u}});
  }
  const auto u_last = static_cast<std::size_t>(config.lstm_units.back());
  const auto k = static_cast<std::size_t>(config.num_classes);
  table.push_back({"dense.kernel", {u_last, k}});
  table.push_back({"dense.bias", {k}});
  return table;
}

std::string format_shape(const std::vector<std::size_t>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

std::string format_float(float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::uint32_t crc32_of(std::string_view a, std::string_view b) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(a.data()), static_cast<uInt>(a.size()));
  crc = crc32(crc, reinterpret_cast<const Bytef*>(b.data()), static_cast<uInt>(b.size()));
  return static_cast<std::uint32_t>(crc);
}

void append_le(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>(bits & 0xffu));
    bits >>= 8;
  }
}

float read_le(const char* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) {
    bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  }
  return std::bit_cast<float>(bits);
}

template <typename V>
V parse_number(std::string_view text, const std::string& field) {
  V value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc{} || res.ptr != last) {
    throw ModelFormatError(field, "cannot parse '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::string_view> split_spaces(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto start = s.find_first_not_of(' ', pos);
    if (start == std::string_view::npos) break;
    auto end = s.find(' ', start);
    if (end == std::string_view::npos) end = s.size();
    parts.push_back(s.substr(start, end - start));
    pos = end;
  }
  return parts;
}

}  // namespace

std::string serialize_model(const ModelParams& params, const ModelConfig& config,
                            const ClassRegistry& registry) {
  config.validate();
  check_shapes(params, config);
  if (registry.size() != static_cast<std::size_t>(config.num_classes)) {
    throw ContractViolation("class registry size does not match num_classes");
  }

  std::string payload;
  payload.reserve(params.scalar_count() * 4);
  params.visit([&payload](std::span<const float> t) {
    for (float v : t) append_le(payload, v);
  });

  std::ostringstream h;
  h << kMagic << '\n';
  h << "format_version: " << kModelFormatVersion << '\n';
  h << "input_dim: " << config.input_dim << '\n';
  h << "lstm_units:";
  for (int u : config.lstm_units) h << ' ' << u;
  h << '\n';
  h << "num_classes: " << config.num_classes << '\n';
  h << "max_seq_len: " << config.max_seq_len << '\n';
  h << "pad_value: " << format_float(config.pad_value) << '\n';
  h << "class_registry: " << nlohmann::json(registry.names()).dump() << '\n';
  h << "gate_order: " << kGateOrder << '\n';
  h << "kernel_layout: " << kKernelLayout << '\n';
  h << "byte_order: little-endian float32\n";
  h << "tensors:";
  for (const auto& entry : tensor_table(config)) {
    h << ' ' << entry.name << '[' << format_shape(entry.shape) << ']';
  }
  h << '\n';
  h << "payload_bytes: " << payload.size() << '\n';
  const std::string prefix = h.str();

  char crc_hex[16];
  std::snprintf(crc_hex, sizeof(crc_hex), "%08x", crc32_of(prefix, payload));
  std::string out = prefix;
  out += "checksum_crc32: ";
  out += crc_hex;
  out += '\n';
  out += kHeaderEnd;
  out += payload;
  return out;
}

LoadedModel deserialize_model(std::string_view bytes) {
  const auto end_pos = bytes.find(std::string("\n") + std::string(kHeaderEnd));
  if (bytes.substr(0, kMagic.size()) != kMagic) {
    throw ModelFormatError("magic", "not an exerclass model file");
  }
  if (end_pos == std::string_view::npos) {
    throw ModelFormatError("checksum", "header terminator missing (file truncated?)");
  }
  const auto header = bytes.substr(0, end_pos + 1);
  const auto payload = bytes.substr(end_pos + 1 + kHeaderEnd.size());

  // key -> value, in order, for the lines after the magic line.
  std::vector<std::pair<std::string_view, std::string_view>> fields;
  std::size_t pos = kMagic.size() + 1;
  std::size_t checksum_line_start = std::string_view::npos;
  while (pos < header.size()) {
    const auto nl = header.find('\n', pos);
    const auto line = header.substr(pos, nl - pos);
    const auto colon = line.find(": ");
    if (colon == std::string_view::npos) {
      throw ModelFormatError("header", "malformed line '" + std::string(line) + "'");
    }
    if (line.substr(0, colon) == "checksum_crc32") checksum_line_start = pos;
    fields.emplace_back(line.substr(0, colon), line.substr(colon + 2));
    pos = nl + 1;
  }
  auto get = [&fields](std::string_view key) -> std::string_view {
    for (const auto& [k, v] : fields) {
      if (k == key) return v;
    }
    throw ModelFormatError(std::string(key), "missing from header");
  };

  const auto version = parse_number<int>(get("format_version"), "format_version");
  if (version != kModelFormatVersion) {
    throw ModelFormatError("format_version", "unsupported version " + std::to_string(version) +
                                                 " (expected " +
                                                 std::to_string(kModelFormatVersion) + ")");
  }
  if (get("gate_order") != kGateOrder) {
    throw ModelFormatError("gate_order", "expected '" + std::string(kGateOrder) + "'");
  }
  if (get("kernel_layout") != kKernelLayout) {
    throw ModelFormatError("kernel_layout", "expected '" + std::string(kKernelLayout) + "'");
  }

  LoadedModel model;
  auto& config = model.config;
  config.input_dim = parse_number<int>(get("input_dim"), "input_dim");
  config.lstm_units.clear();
  for (auto part : split_spaces(get("lstm_units"))) {
    config.lstm_units.push_back(parse_number<int>(part, "lstm_units"));
  }
  config.num_classes = parse_number<int>(get("num_classes"), "num_classes");
  config.max_seq_len = parse_number<int>(get("max_seq_len"), "max_seq_len");
  config.pad_value = parse_number<float>(get("pad_value"), "pad_value");
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw ModelFormatError("config", e.what());
  }

  try {
    const auto names = nlohmann::json::parse(get("class_registry")).get<std::vector<std::string>>();
    model.registry = ClassRegistry(names);
  } catch (const ModelFormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw ModelFormatError("class_registry", e.what());
  }
  if (model.registry.size() != static_cast<std::size_t>(config.num_classes)) {
    throw ModelFormatError("class_registry", "size does not match num_classes");
  }

  const auto expected = tensor_table(config);
  const auto declared = split_spaces(get("tensors"));
  std::size_t expected_bytes = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const std::string want = expected[i].name + "[" + format_shape(expected[i].shape) + "]";
    if (i < declared.size() && declared[i] != want) {
      throw ModelFormatError(expected[i].name, "shape mismatch: file declares '" +
                                                   std::string(declared[i]) + "', config requires '" +
                                                   want + "'");
    }
    expected_bytes += expected[i].elements() * 4;
  }
  if (declared.size() != expected.size()) {
    throw ModelFormatError("tensors", "expected " + std::to_string(expected.size()) +
                                          " tensors for the declared lstm_units, found " +
                                          std::to_string(declared.size()));
  }
  const auto payload_bytes = parse_number<std::size_t>(get("payload_bytes"), "payload_bytes");
  if (payload_bytes != expected_bytes) {
    throw ModelFormatError("payload_bytes", "declares " + std::to_string(payload_bytes) +
                                                " bytes, tensors require " +
                                                std::to_string(expected_bytes));
  }

  if (checksum_line_start == std::string_view::npos) {
    throw ModelFormatError("checksum", "missing from header");
  }
  char crc_hex[16];
  std::snprintf(crc_hex, sizeof(crc_hex), "%08x",
                crc32_of(header.substr(0, checksum_line_start), payload));
  if (get("checksum_crc32") != crc_hex || payload.size() != expected_bytes) {
    throw ModelFormatError("checksum", "content checksum mismatch (file corrupted or truncated)");
  }

  model.params = ModelParams::zeros(config);
  const char* cursor = payload.data();
  model.params.visit([&cursor](std::span<float> t) {
    for (auto& v : t) {
      v = read_le(cursor);
      cursor += 4;
    }
  });
  return model;
}

void save_model(const ModelParams& params, const ModelConfig& config,
                const ClassRegistry& registry, const std::string& path) {
  const auto bytes = serialize_model(params, config, registry);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write model file '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing model file '" + path + "'");
}

LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace exerclass
