#include <sstream>

#include "t4c/binary_io.hpp"
#include "t4c/models.hpp"

namespace t4c {
namespace {
constexpr char kMagic[8] = {'S', 'F', 'C', 'K', 'P', 'T', 0, 0};
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelState<float>& state) {
  auto kv = state.config.to_map();
  std::string config;
  for (const auto& [k, v] : kv) config += k + "=" + v + "\n";
  config += "step=" + std::to_string(state.step) + "\n";

  ByteWriter w;
  w.magic({kMagic, 8});
  w.le(kVersion);
  w.str(config);
  w.le(static_cast<std::uint32_t>(state.params.size()));
  for (const auto& [name, t] : state.params) {
    w.str(name);
    w.le(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.le(static_cast<std::uint64_t>(d));
    for (float v : t.data()) w.f32(v);
  }
  return w.take();
}

ModelState<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "checkpoint");
  r.expect_magic({kMagic, 8});
  const auto version = r.le<std::uint32_t>();
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));

  const std::size_t config_at = r.offset();
  std::map<std::string, std::string> kv;
  std::istringstream lines(r.str());
  std::int64_t step = 0;
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint: config line without '='", config_at);
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    if (key == "step") {
      try {
        step = std::stoll(value);
      } catch (const std::exception&) {
        throw FormatError("checkpoint: bad step '" + value + "'", config_at);
      }
    } else {
      kv[key] = value;
    }
  }
  ModelState<float> st;
  try {
    st.config = ModelConfig::from_map(kv);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what(), config_at);
  }
  st.step = step;

  const auto expected = parameter_shapes(st.config);
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    auto name = r.str();
    const auto rank = r.le<std::uint32_t>();
    if (rank > 8) r.fail("parameter '" + name + "' has rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto v = r.le<std::uint64_t>();
      if (v == 0 || v > (1ull << 32)) r.fail("parameter '" + name + "' has an invalid dimension");
      shape.push_back(static_cast<std::int64_t>(v));
    }
    auto it = expected.find(name);
    if (it == expected.end()) throw FormatError("checkpoint: unexpected parameter '" + name + "'", at);
    if (it->second != shape) {
      throw FormatError("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) + ", the config expects " +
                            shape_str(it->second),
                        at);
    }
    const auto n = static_cast<std::size_t>(shape_numel(shape));
    r.need(n * 4);
    std::vector<float> values(n);
    for (auto& v : values) v = r.f32();
    if (!st.params.emplace(std::move(name), Tensor<float>(shape, std::move(values))).second) {
      throw FormatError("checkpoint: duplicate parameter", at);
    }
  }
  r.expect_end();
  for (const auto& [name, shape] : expected) {
    if (!st.params.count(name)) throw FormatError("checkpoint: missing parameter '" + name + "'", r.offset());
  }
  return st;
}

void save_checkpoint(const std::string& path, const ModelState<float>& state) {
  write_file_bytes(path, encode_checkpoint(state));
}

ModelState<float> load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace t4c
