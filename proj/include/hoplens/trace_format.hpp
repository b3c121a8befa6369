#pragma once

// Binary container for per-layer, per-prompt logit-lens activations (.drt).
//
// Layout: magic(4) | version(u16 LE) | header_len(u32 LE) | header JSON |
//         payload (f32 LE, [prompt][layer][tracked]) | checksum(u64 LE)

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hoplens/error.hpp"

namespace hoplens {

using TokenId = std::uint32_t;

inline constexpr std::array<char, 4> kTraceMagic{'D', 'R', 'T', '1'};
inline constexpr std::uint16_t kTraceVersion = 1;
inline constexpr std::string_view kTraceDtype = "f32le";

struct TrackedSet {
  std::string label;  // "A1", "A2" or "TOPK"
  std::vector<TokenId> token_ids;

  bool operator==(const TrackedSet&) const = default;
};

struct TraceHeader {
  std::uint16_t version = kTraceVersion;
  std::string model_id;
  std::uint32_t n_layers = 0;
  std::uint32_t n_stored_layers = 0;  // n_layers + 1; index 0 is the embedding output
  std::uint32_t vocab_size = 0;
  std::uint32_t n_prompts = 0;
  std::vector<TrackedSet> tracked_sets;
  std::string dtype{kTraceDtype};
  // Free-form capture conventions (e.g. intervention site); not interpreted here.
  std::map<std::string, std::string> metadata;

  std::size_t n_tracked_total() const;
  const TrackedSet* find_set(std::string_view label) const;
  /// Column offset of a set inside the concatenated tracked axis.
  std::optional<std::size_t> set_offset(std::string_view label) const;

  bool operator==(const TraceHeader&) const = default;
};

struct PromptTraceMeta {
  std::string prompt_id;
  std::string question_type;
  std::string subject;
  std::optional<TokenId> gold_a1_token;
  std::optional<TokenId> gold_a2_token;
  bool is_fictitious = false;

  bool operator==(const PromptTraceMeta&) const = default;
};

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using LayerView = Eigen::Map<const RowMatrixXf, Eigen::Unaligned, Eigen::OuterStride<>>;

/// Row-major float tensor of shape [n_prompts][n_layers][n_tracked].
class ActivationTensor {
 public:
  ActivationTensor() = default;
  ActivationTensor(std::size_t n_prompts, std::size_t n_layers, std::size_t n_tracked,
                   float fill = 0.0f);
  ActivationTensor(std::size_t n_prompts, std::size_t n_layers, std::size_t n_tracked,
                   std::vector<float> values);

  std::size_t n_prompts() const { return n_prompts_; }
  std::size_t n_layers() const { return n_layers_; }
  std::size_t n_tracked() const { return n_tracked_; }
  std::size_t size() const { return values_.size(); }

  float& operator()(std::size_t prompt, std::size_t layer, std::size_t tracked) {
    return values_[index(prompt, layer, tracked)];
  }
  float operator()(std::size_t prompt, std::size_t layer, std::size_t tracked) const {
    return values_[index(prompt, layer, tracked)];
  }

  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }

  /// [n_prompts x n_tracked] strided view of one layer; no copy.
  LayerView layer(std::size_t layer) const;

  bool operator==(const ActivationTensor&) const = default;

 private:
  std::size_t index(std::size_t p, std::size_t l, std::size_t t) const {
    return (p * n_layers_ + l) * n_tracked_ + t;
  }

  std::size_t n_prompts_ = 0;
  std::size_t n_layers_ = 0;
  std::size_t n_tracked_ = 0;
  std::vector<float> values_;
};

struct ActivationTrace {
  TraceHeader header;
  std::vector<PromptTraceMeta> metas;
  ActivationTensor tensor;

  bool operator==(const ActivationTrace&) const = default;
};

class TraceError : public Error {
 public:
  enum class Kind { kNotATrace, kCorruptPayload, kTruncated, kUnsupportedVersion, kInvalid };

  TraceError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Violation {
  std::string field;
  std::vector<std::size_t> indices;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// 64-bit FNV-1a. Every single-byte change of the input changes the digest.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

ValidationReport validate_trace(const ActivationTrace& trace);

/// Throws TraceError(kInvalid) listing violations before producing any bytes.
std::vector<std::uint8_t> write_trace(const ActivationTrace& trace);
ActivationTrace read_trace(std::span<const std::uint8_t> bytes);

void save_trace(const std::filesystem::path& path, const ActivationTrace& trace);
ActivationTrace load_trace(const std::filesystem::path& path);

std::string format_report(const ValidationReport& report);

}  // namespace hoplens
