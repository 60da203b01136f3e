#include "nesppo/transfer.h"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "nesppo/errors.h"

namespace nesppo {

namespace {

constexpr std::size_t kMagicSize = 8;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[at + i]) << (8 * i);
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = s.find(sep, start);
    parts.push_back(s.substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return parts;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw FormatError("bad integer for " + what + ": '" + s + "'");
  }
  return v;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ',';
    out += fmt(items[i]);
  }
  return out;
}

std::string printable(std::span<const std::uint8_t> bytes) {
  std::string out;
  for (std::uint8_t b : bytes) {
    if (b >= 0x20 && b < 0x7f) {
      out += static_cast<char>(b);
    } else {
      char buf[8];
      std::snprintf(buf, sizeof(buf), "\\x%02x", b);
      out += buf;
    }
  }
  return out;
}

const std::vector<std::string>& algorithms() {
  static const std::vector<std::string> names = {"nes", "ppo", "noisy-ppo"};
  return names;
}

// Key/value map of spec fields, shared by the header and the inline form.
std::map<std::string, std::string> spec_fields(const NetSpec& spec) {
  return {
      {"layer_sizes", join(spec.layer_sizes, [](std::size_t v) { return std::to_string(v); })},
      {"activations",
       join(spec.activations, [](Activation a) { return std::string(to_string(a)); })},
      {"layer_kinds",
       join(spec.layer_kinds, [](LayerKind k) { return std::string(to_string(k)); })},
      {"head", std::string(to_string(spec.head))},
  };
}

NetSpec spec_from_fields(const std::map<std::string, std::string>& fields) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw FormatError("network description lacks '" + key + "'");
    return it->second;
  };
  NetSpec spec;
  try {
    for (const auto& s : split(get("layer_sizes"), ',')) {
      spec.layer_sizes.push_back(parse_u64(s, "layer_sizes"));
    }
    const std::string& acts = get("activations");
    if (!acts.empty()) {
      for (const auto& s : split(acts, ',')) spec.activations.push_back(parse_activation(s));
    }
    for (const auto& s : split(get("layer_kinds"), ',')) {
      spec.layer_kinds.push_back(parse_layer_kind(s));
    }
    spec.head = parse_head_kind(get("head"));
    spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid network description: ") + e.what());
  }
  return spec;
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string spec_to_string(const NetSpec& spec) {
  std::string out;
  for (const auto& [key, value] : spec_fields(spec)) {
    if (!out.empty()) out += ';';
    out += key + "=" + value;
  }
  return out;
}

NetSpec spec_from_string(const std::string& text) {
  std::map<std::string, std::string> fields;
  for (const auto& item : split(text, ';')) {
    if (item.empty()) continue;
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos) throw FormatError("bad network description item '" + item + "'");
    fields[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return spec_from_fields(fields);
}

std::vector<std::uint8_t> encode_checkpoint(const NetSpec& spec, const ParamVector& params,
                                            const Provenance& provenance) {
  if (params.layout() != make_layout(spec)) {
    throw ConfigError("parameter layout is inconsistent with the network spec");
  }
  if (std::find(algorithms().begin(), algorithms().end(), provenance.algorithm) ==
      algorithms().end()) {
    throw ConfigError("unknown provenance algorithm '" + provenance.algorithm + "'");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::isfinite(params.data()[i])) {
      throw NumericError("parameter " + std::to_string(i) + " is not finite");
    }
  }

  std::string header = "format_version=" + std::to_string(kCheckpointVersion) + "\n";
  for (const auto& [key, value] : spec_fields(spec)) header += "spec." + key + "=" + value + "\n";
  header += "provenance.algorithm=" + provenance.algorithm + "\n";
  header += "provenance.run_seed=" + std::to_string(provenance.run_seed) + "\n";
  header += "provenance.steps=" + std::to_string(provenance.steps) + "\n";
  header += "param_count=" + std::to_string(params.size()) + "\n";
  for (const auto& b : params.layout()) {
    header += "block=" + b.name + "," + std::to_string(b.offset) + "," +
              std::to_string(b.length) + "\n";
  }

  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + kMagicSize);
  put_u64(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  for (double v : params.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  put_u64(out, fnv1a64(out));
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagicSize) {
    throw FormatError("bad magic: file is only " + std::to_string(bytes.size()) + " bytes");
  }
  const auto magic = bytes.first(kMagicSize);
  const std::string expected(kCheckpointMagic, kMagicSize);
  if (std::string(magic.begin(), magic.end()) != expected) {
    const bool same_family = std::equal(expected.begin(), expected.begin() + 6, magic.begin()) &&
                             magic[7] == '\n';
    if (same_family) {
      throw VersionError("unsupported checkpoint version '" + printable(magic.subspan(6, 1)) +
                         "', this reader understands version " +
                         std::to_string(kCheckpointVersion));
    }
    throw FormatError("bad magic: found '" + printable(magic) + "', expected '" +
                      printable(std::span<const std::uint8_t>(
                          reinterpret_cast<const std::uint8_t*>(expected.data()), kMagicSize)) +
                      "'");
  }
  if (bytes.size() < kMagicSize + 16) throw IntegrityError("checkpoint truncated before header");
  const std::uint64_t stored_digest = get_u64(bytes, bytes.size() - 8);
  if (fnv1a64(bytes.first(bytes.size() - 8)) != stored_digest) {
    throw IntegrityError("checkpoint digest mismatch (file corrupt or truncated)");
  }
  const std::uint64_t header_len = get_u64(bytes, kMagicSize);
  if (header_len > bytes.size() - kMagicSize - 16) {
    throw IntegrityError("declared header length exceeds file size");
  }
  const std::string header(bytes.begin() + kMagicSize + 8,
                           bytes.begin() + static_cast<std::ptrdiff_t>(kMagicSize + 8 + header_len));

  std::map<std::string, std::string> spec_map;
  std::map<std::string, std::string> values;
  std::vector<Block> table;
  std::istringstream lines(header);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("corrupt header line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "block") {
      const auto parts = split(value, ',');
      if (parts.size() != 3) throw FormatError("corrupt block table entry '" + value + "'");
      table.push_back({parts[0], parse_u64(parts[1], "block offset"),
                       parse_u64(parts[2], "block length")});
    } else if (key.rfind("spec.", 0) == 0) {
      spec_map[key.substr(5)] = value;
    } else {
      values[key] = value;
    }
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = values.find(key);
    if (it == values.end()) throw FormatError("checkpoint header lacks '" + key + "'");
    return it->second;
  };
  const std::uint64_t version = parse_u64(get("format_version"), "format_version");
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint format_version " + std::to_string(version));
  }

  Checkpoint ckpt;
  ckpt.spec = spec_from_fields(spec_map);
  ckpt.provenance.algorithm = get("provenance.algorithm");
  ckpt.provenance.run_seed = parse_u64(get("provenance.run_seed"), "provenance.run_seed");
  ckpt.provenance.steps = parse_u64(get("provenance.steps"), "provenance.steps");
  const std::uint64_t count = parse_u64(get("param_count"), "param_count");

  if (table != make_layout(ckpt.spec)) {
    throw FormatError("corrupt block table: does not match the declared network");
  }
  std::uint64_t table_total = 0;
  for (const auto& b : table) table_total += b.length;
  if (table_total != count) {
    throw IntegrityError("block table covers " + std::to_string(table_total) +
                         " values, header declares " + std::to_string(count));
  }
  const std::uint64_t payload_at = kMagicSize + 8 + header_len;
  if (bytes.size() != payload_at + 8 * count + 8) {
    throw IntegrityError("payload holds " +
                         std::to_string((bytes.size() - payload_at - 8) / 8) +
                         " values, header declares " + std::to_string(count));
  }
  std::vector<double> data(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<double>(get_u64(bytes, payload_at + 8 * i));
  }
  ckpt.params = ParamVector(std::move(table), std::move(data));
  return ckpt;
}

void save_checkpoint(const std::string& path, const NetSpec& spec, const ParamVector& params,
                     const Provenance& provenance) {
  const auto bytes = encode_checkpoint(spec, params, provenance);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::optional<std::string> transfer_mismatch(const NetSpec& source, const NetSpec& target) {
  if (source.layer_sizes.size() != target.layer_sizes.size()) {
    return "depth: source has " + std::to_string(source.num_layers()) + " layers, target has " +
           std::to_string(target.num_layers());
  }
  for (std::size_t i = 0; i < source.layer_sizes.size(); ++i) {
    if (source.layer_sizes[i] != target.layer_sizes[i]) {
      return "layer_sizes[" + std::to_string(i) + "]: source " +
             std::to_string(source.layer_sizes[i]) + ", target " +
             std::to_string(target.layer_sizes[i]);
    }
  }
  for (std::size_t i = 0; i < source.activations.size(); ++i) {
    if (source.activations[i] != target.activations[i]) {
      return "activations[" + std::to_string(i) + "]: source " +
             std::string(to_string(source.activations[i])) + ", target " +
             std::string(to_string(target.activations[i]));
    }
  }
  if (source.head != target.head) {
    return "head: source " + std::string(to_string(source.head)) + ", target " +
           std::string(to_string(target.head));
  }
  for (std::size_t l = 0; l < source.layer_kinds.size(); ++l) {
    const LayerKind s = source.layer_kinds[l];
    const LayerKind t = target.layer_kinds[l];
    if (s != t && s != LayerKind::kPlain) {
      return "layer_kinds[" + std::to_string(l) + "]: source " + std::string(to_string(s)) +
             ", target " + std::string(to_string(t));
    }
  }
  return std::nullopt;
}

ParamVector transplant(const Checkpoint& source, const NetSpec& target_spec) {
  source.spec.validate();
  target_spec.validate();
  if (auto mismatch = transfer_mismatch(source.spec, target_spec)) {
    throw TransferError("incompatible networks: " + *mismatch);
  }
  ParamVector target = make_params(target_spec);
  for (std::size_t l = 0; l < target_spec.num_layers(); ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    if (source.spec.layer_kinds[l] == target_spec.layer_kinds[l]) {
      for (const char* suffix : {"w", "b", "mu_w", "sigma_w", "mu_b", "sigma_b"}) {
        if (source.params.find(p + suffix) == nullptr) continue;
        const auto from = source.params.block(p + suffix);
        std::copy(from.begin(), from.end(), target.block(p + suffix).begin());
      }
      continue;
    }
    const auto w = source.params.block(p + "w");
    const auto b = source.params.block(p + "b");
    std::copy(w.begin(), w.end(), target.block(p + "mu_w").begin());
    std::copy(b.begin(), b.end(), target.block(p + "mu_b").begin());
  }
  if (target_spec.head == HeadKind::kGaussian) {
    const auto from = source.params.block("log_std");
    std::copy(from.begin(), from.end(), target.block("log_std").begin());
  }
  // Sigma for layers that arrived plain; layers that were already noisy
  // keep the sigma they were trained with.
  NetSpec fresh = target_spec;
  for (std::size_t l = 0; l < fresh.num_layers(); ++l) {
    if (source.spec.layer_kinds[l] == target_spec.layer_kinds[l]) {
      fresh.layer_kinds[l] = LayerKind::kPlain;
    }
  }
  if (fresh.has_noisy_layers()) init_sigma_blocks(fresh, target);
  return target;
}

}  // namespace nesppo
