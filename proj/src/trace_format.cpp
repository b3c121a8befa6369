#include "hoplens/trace_format.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace hoplens {

using json = nlohmann::json;

std::size_t TraceHeader::n_tracked_total() const {
  std::size_t total = 0;
  for (const auto& set : tracked_sets) total += set.token_ids.size();
  return total;
}

const TrackedSet* TraceHeader::find_set(std::string_view label) const {
  for (const auto& set : tracked_sets)
    if (set.label == label) return &set;
  return nullptr;
}

std::optional<std::size_t> TraceHeader::set_offset(std::string_view label) const {
  std::size_t offset = 0;
  for (const auto& set : tracked_sets) {
    if (set.label == label) return offset;
    offset += set.token_ids.size();
  }
  return std::nullopt;
}

ActivationTensor::ActivationTensor(std::size_t n_prompts, std::size_t n_layers,
                                   std::size_t n_tracked, float fill)
    : n_prompts_(n_prompts),
      n_layers_(n_layers),
      n_tracked_(n_tracked),
      values_(n_prompts * n_layers * n_tracked, fill) {}

ActivationTensor::ActivationTensor(std::size_t n_prompts, std::size_t n_layers,
                                   std::size_t n_tracked, std::vector<float> values)
    : n_prompts_(n_prompts), n_layers_(n_layers), n_tracked_(n_tracked), values_(std::move(values)) {
  if (values_.size() != n_prompts * n_layers * n_tracked)
    throw Error("activation tensor: value count " + std::to_string(values_.size()) +
                " does not match shape " + std::to_string(n_prompts) + "x" +
                std::to_string(n_layers) + "x" + std::to_string(n_tracked));
}

LayerView ActivationTensor::layer(std::size_t layer) const {
  if (layer >= n_layers_)
    throw Error("layer " + std::to_string(layer) + " out of range [0, " +
                std::to_string(n_layers_) + ")");
  const float* base = values_.data() + layer * n_tracked_;
  return LayerView(base, static_cast<Eigen::Index>(n_prompts_),
                   static_cast<Eigen::Index>(n_tracked_),
                   Eigen::OuterStride<>(static_cast<Eigen::Index>(n_layers_ * n_tracked_)));
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

ValidationReport validate_trace(const ActivationTrace& trace) {
  ValidationReport report;
  auto violate = [&](std::string field, std::vector<std::size_t> idx, std::string msg) {
    report.violations.push_back({std::move(field), std::move(idx), std::move(msg)});
  };
  const auto& h = trace.header;

  if (h.version != kTraceVersion)
    violate("version", {}, "unsupported version " + std::to_string(h.version));
  if (h.dtype != kTraceDtype) violate("dtype", {}, "dtype must be f32le, got '" + h.dtype + "'");
  if (h.n_stored_layers != h.n_layers + 1)
    violate("n_stored_layers", {},
            "expected n_layers + 1 = " + std::to_string(h.n_layers + 1) + ", got " +
                std::to_string(h.n_stored_layers));

  std::set<std::string> labels;
  for (std::size_t s = 0; s < h.tracked_sets.size(); ++s) {
    const auto& set = h.tracked_sets[s];
    if (set.label != "A1" && set.label != "A2" && set.label != "TOPK")
      violate("tracked_sets.label", {s}, "unknown label '" + set.label + "'");
    if (!labels.insert(set.label).second)
      violate("tracked_sets.label", {s}, "duplicate label '" + set.label + "'");
    std::unordered_map<TokenId, std::size_t> seen;
    for (std::size_t i = 0; i < set.token_ids.size(); ++i) {
      const TokenId id = set.token_ids[i];
      if (id >= h.vocab_size)
        violate("tracked_sets." + set.label + ".token_ids", {i},
                "token id " + std::to_string(id) + " >= vocab_size " +
                    std::to_string(h.vocab_size));
      if (auto [it, inserted] = seen.emplace(id, i); !inserted)
        violate("tracked_sets." + set.label + ".token_ids", {it->second, i},
                "duplicate token id " + std::to_string(id));
    }
  }

  if (trace.metas.size() != h.n_prompts)
    violate("prompts", {},
            "expected " + std::to_string(h.n_prompts) + " prompt records, got " +
                std::to_string(trace.metas.size()));

  auto contains = [&](std::string_view label, TokenId id) {
    const auto* set = h.find_set(label);
    return set && std::find(set->token_ids.begin(), set->token_ids.end(), id) !=
                      set->token_ids.end();
  };
  std::unordered_map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < trace.metas.size(); ++i) {
    const auto& m = trace.metas[i];
    if (auto [it, inserted] = ids.emplace(m.prompt_id, i); !inserted)
      violate("prompts.prompt_id", {it->second, i}, "duplicate prompt_id '" + m.prompt_id + "'");
    if (m.gold_a1_token && !contains("A1", *m.gold_a1_token))
      violate("prompts.gold_a1_token", {i},
              "prompt '" + m.prompt_id + "': gold A1 token not in tracked set A1");
    if (m.gold_a2_token && !contains("A2", *m.gold_a2_token))
      violate("prompts.gold_a2_token", {i},
              "prompt '" + m.prompt_id + "': gold A2 token not in tracked set A2");
  }

  const auto& t = trace.tensor;
  if (t.n_prompts() != h.n_prompts || t.n_layers() != h.n_stored_layers ||
      t.n_tracked() != h.n_tracked_total()) {
    violate("tensor", {},
            "shape " + std::to_string(t.n_prompts()) + "x" + std::to_string(t.n_layers()) + "x" +
                std::to_string(t.n_tracked()) + " does not match header " +
                std::to_string(h.n_prompts) + "x" + std::to_string(h.n_stored_layers) + "x" +
                std::to_string(h.n_tracked_total()));
  }
  const auto values = t.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      violate("tensor.values", {i}, "non-finite value at flat index " + std::to_string(i));
      break;
    }
  }
  return report;
}

std::string format_report(const ValidationReport& report) {
  std::ostringstream out;
  for (const auto& v : report.violations) {
    out << v.field;
    if (!v.indices.empty()) {
      out << '[';
      for (std::size_t i = 0; i < v.indices.size(); ++i) out << (i ? "," : "") << v.indices[i];
      out << ']';
    }
    out << ": " << v.message << '\n';
  }
  return out.str();
}

namespace {

json header_to_json(const TraceHeader& h, const std::vector<PromptTraceMeta>& metas) {
  json sets = json::array();
  for (const auto& set : h.tracked_sets)
    sets.push_back({{"label", set.label}, {"token_ids", set.token_ids}});
  json prompts = json::array();
  auto opt = [](const std::optional<TokenId>& v) { return v ? json(*v) : json(nullptr); };
  for (const auto& m : metas) {
    prompts.push_back({{"prompt_id", m.prompt_id},
                       {"question_type", m.question_type},
                       {"subject", m.subject},
                       {"gold_a1_token", opt(m.gold_a1_token)},
                       {"gold_a2_token", opt(m.gold_a2_token)},
                       {"is_fictitious", m.is_fictitious}});
  }
  return {{"model_id", h.model_id},     {"n_layers", h.n_layers},
          {"n_stored_layers", h.n_stored_layers}, {"vocab_size", h.vocab_size},
          {"n_prompts", h.n_prompts},   {"tracked_sets", std::move(sets)},
          {"dtype", h.dtype},           {"metadata", h.metadata},
          {"prompts", std::move(prompts)}};
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t n) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

[[noreturn]] void fail(TraceError::Kind kind, const std::string& msg) { throw TraceError(kind, msg); }

}  // namespace

std::vector<std::uint8_t> write_trace(const ActivationTrace& trace) {
  const auto report = validate_trace(trace);
  if (!report.ok()) fail(TraceError::Kind::kInvalid, "invalid trace:\n" + format_report(report));

  const std::string header = header_to_json(trace.header, trace.metas).dump();
  const auto values = trace.tensor.values();

  std::vector<std::uint8_t> out;
  out.reserve(4 + 2 + 4 + header.size() + values.size() * 4 + 8);
  out.insert(out.end(), kTraceMagic.begin(), kTraceMagic.end());
  put_u16(out, kTraceVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  const std::size_t payload_begin = out.size();
  for (float v : values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  const auto checksum =
      fnv1a64(std::span<const std::uint8_t>(out).subspan(payload_begin, values.size() * 4));
  put_u64(out, checksum);
  return out;
}

ActivationTrace read_trace(std::span<const std::uint8_t> bytes) {
  using K = TraceError::Kind;
  const std::size_t magic_len = std::min<std::size_t>(bytes.size(), kTraceMagic.size());
  if (!std::equal(bytes.begin(), bytes.begin() + magic_len, kTraceMagic.begin()))
    fail(K::kNotATrace, "not a trace: bad magic");
  if (bytes.size() < 10) fail(K::kTruncated, "truncated: stream ends inside the preamble");

  const auto version = static_cast<std::uint16_t>(get_le(bytes.subspan(4), 2));
  if (version != kTraceVersion)
    fail(K::kUnsupportedVersion, "unsupported trace version " + std::to_string(version));
  const auto header_len = static_cast<std::size_t>(get_le(bytes.subspan(6), 4));
  if (bytes.size() < 10 + header_len) fail(K::kTruncated, "truncated: stream ends inside the header");

  json j;
  try {
    j = json::parse(bytes.begin() + 10, bytes.begin() + 10 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    fail(K::kInvalid, std::string("malformed header JSON: ") + e.what());
  }

  ActivationTrace trace;
  auto& h = trace.header;
  try {
    h.version = version;
    h.model_id = j.at("model_id").get<std::string>();
    h.n_layers = j.at("n_layers").get<std::uint32_t>();
    h.n_stored_layers = j.at("n_stored_layers").get<std::uint32_t>();
    h.vocab_size = j.at("vocab_size").get<std::uint32_t>();
    h.n_prompts = j.at("n_prompts").get<std::uint32_t>();
    h.dtype = j.at("dtype").get<std::string>();
    h.metadata = j.value("metadata", std::map<std::string, std::string>{});
    for (const auto& s : j.at("tracked_sets"))
      h.tracked_sets.push_back(
          {s.at("label").get<std::string>(), s.at("token_ids").get<std::vector<TokenId>>()});
    for (const auto& p : j.at("prompts")) {
      PromptTraceMeta m;
      m.prompt_id = p.at("prompt_id").get<std::string>();
      m.question_type = p.at("question_type").get<std::string>();
      m.subject = p.at("subject").get<std::string>();
      if (!p.at("gold_a1_token").is_null()) m.gold_a1_token = p["gold_a1_token"].get<TokenId>();
      if (!p.at("gold_a2_token").is_null()) m.gold_a2_token = p["gold_a2_token"].get<TokenId>();
      m.is_fictitious = p.at("is_fictitious").get<bool>();
      trace.metas.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    fail(K::kInvalid, std::string("malformed header: ") + e.what());
  }
  if (h.dtype != kTraceDtype) fail(K::kInvalid, "unsupported dtype '" + h.dtype + "'");

  const std::size_t n_values =
      std::size_t{h.n_prompts} * h.n_stored_layers * h.n_tracked_total();
  const std::size_t payload_begin = 10 + header_len;
  const std::size_t payload_len = n_values * 4;
  if (bytes.size() < payload_begin + payload_len + 8)
    fail(K::kTruncated, "truncated: expected " + std::to_string(payload_begin + payload_len + 8) +
                            " bytes, got " + std::to_string(bytes.size()));
  if (bytes.size() > payload_begin + payload_len + 8)
    fail(K::kInvalid, "trailing bytes after checksum");

  const auto payload = bytes.subspan(payload_begin, payload_len);
  if (fnv1a64(payload) != get_le(bytes.subspan(payload_begin + payload_len), 8))
    fail(K::kCorruptPayload, "corrupt payload: checksum mismatch");

  std::vector<float> values(n_values);
  for (std::size_t i = 0; i < n_values; ++i)
    values[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(payload.subspan(i * 4), 4)));
  trace.tensor = ActivationTensor(h.n_prompts, h.n_stored_layers, h.n_tracked_total(),
                                  std::move(values));
  return trace;
}

void save_trace(const std::filesystem::path& path, const ActivationTrace& trace) {
  const auto bytes = write_trace(trace);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

ActivationTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open trace '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return read_trace(bytes);
}

}  // namespace hoplens
