#pragma once

// Feature sets, the TTF1 binary container, label encoding and fold splitting.
//
// TTF1 layout (all integers and floats little-endian):
//
//   offset  size      field
//   0       4         magic "TTF1"
//   4       4         u32 version (= 1)
//   8       8         u64 n   (rows)
//   16      4         u32 d   (feature width)
//   20      4         u32 C   (class count)
//   24      4*n*d     f32 features, row-major
//   ...     4*n       u32 labels
//
// A UTF-8 JSON manifest lives next to the file at `<path>.json`.

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "toptune/errors.hpp"
#include "toptune/random.hpp"

namespace toptune {

using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Label = std::uint32_t;

struct FeatureSet {
  FeatureMatrix features;  // n x d
  std::vector<Label> labels;
  std::uint32_t num_classes = 0;

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }

  /// Throws ValidationError unless n >= 1, d >= 1, C >= 1, every label < C and
  /// every feature is finite.
  void validate() const {
    if (features.rows() < 1 || features.cols() < 1) {
      throw ValidationError("feature set must have n >= 1 and d >= 1 (got " +
                            std::to_string(features.rows()) + "x" +
                            std::to_string(features.cols()) + ")");
    }
    if (num_classes < 1) throw ValidationError("feature set must have C >= 1");
    if (labels.size() != size()) {
      throw ValidationError("label count " + std::to_string(labels.size()) +
                            " does not match row count " + std::to_string(size()));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= num_classes) {
        throw ValidationError("label " + std::to_string(labels[i]) + " at row " +
                              std::to_string(i) + " is out of range for C=" +
                              std::to_string(num_classes));
      }
    }
    if (!features.allFinite()) throw ValidationError("feature matrix contains non-finite values");
  }

  /// Features promoted to 64-bit for the solvers.
  Matrix promoted() const { return features.cast<double>(); }
};

struct DatasetManifest {
  std::string dataset_name;
  std::vector<std::string> class_names;
  std::string backbone_name;
  std::string preprocessing_tag;
  std::uint64_t n = 0;
  std::uint32_t d = 0;
  std::uint32_t num_classes = 0;

  /// Manifest with placeholder names matching the shape of `fs`.
  static DatasetManifest describe(const FeatureSet& fs, std::string dataset_name = "unnamed") {
    DatasetManifest m;
    m.dataset_name = std::move(dataset_name);
    for (std::uint32_t c = 0; c < fs.num_classes; ++c) m.class_names.push_back(std::to_string(c));
    m.backbone_name = "unknown";
    m.preprocessing_tag = "none";
    m.n = fs.size();
    m.d = static_cast<std::uint32_t>(fs.dim());
    m.num_classes = fs.num_classes;
    return m;
  }

  void validate_against(const FeatureSet& fs) const {
    if (class_names.size() != num_classes) {
      throw ValidationError("manifest lists " + std::to_string(class_names.size()) +
                            " class names but C=" + std::to_string(num_classes));
    }
    if (n != fs.size() || d != fs.dim() || num_classes != fs.num_classes) {
      throw ValidationError("manifest shape (n=" + std::to_string(n) + ", d=" + std::to_string(d) +
                            ", C=" + std::to_string(num_classes) +
                            ") does not match the feature set (n=" + std::to_string(fs.size()) +
                            ", d=" + std::to_string(fs.dim()) +
                            ", C=" + std::to_string(fs.num_classes) + ")");
    }
  }
};

inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
  j = nlohmann::json{{"dataset_name", m.dataset_name},
                     {"class_names", m.class_names},
                     {"backbone_name", m.backbone_name},
                     {"preprocessing_tag", m.preprocessing_tag},
                     {"n", m.n},
                     {"d", m.d},
                     {"C", m.num_classes}};
}

inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
  j.at("dataset_name").get_to(m.dataset_name);
  j.at("class_names").get_to(m.class_names);
  j.at("backbone_name").get_to(m.backbone_name);
  j.at("preprocessing_tag").get_to(m.preprocessing_tag);
  j.at("n").get_to(m.n);
  j.at("d").get_to(m.d);
  j.at("C").get_to(m.num_classes);
}

namespace ttf1 {

inline constexpr char kMagic[4] = {'T', 'T', 'F', '1'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 4 + 4;

inline std::uint64_t payload_bytes(std::uint64_t n, std::uint64_t d) { return 4 * n * d + 4 * n; }

inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int b = 3; b >= 0; --b) v = (v << 8) | p[b];
  return v;
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int b = 7; b >= 0; --b) v = (v << 8) | p[b];
  return v;
}

}  // namespace detail

/// Serializes `fs` to the TTF1 byte layout.
inline std::string encode(const FeatureSet& fs) {
  const std::uint64_t n = fs.size();
  const std::uint64_t d = fs.dim();
  std::string out;
  out.reserve(kHeaderBytes + payload_bytes(n, d));
  out.append(kMagic, 4);
  detail::put_u32(out, kVersion);
  detail::put_u64(out, n);
  detail::put_u32(out, static_cast<std::uint32_t>(d));
  detail::put_u32(out, fs.num_classes);
  const float* values = fs.features.data();
  for (std::uint64_t i = 0; i < n * d; ++i) detail::put_u32(out, std::bit_cast<std::uint32_t>(values[i]));
  for (Label y : fs.labels) detail::put_u32(out, y);
  return out;
}

/// Parses and validates a TTF1 byte buffer.
inline FeatureSet decode(const std::string& bytes, const std::string& origin = "<buffer>") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < kHeaderBytes) {
    throw FormatError(origin + ": truncated header: expected " + std::to_string(kHeaderBytes) +
                      " bytes, got " + std::to_string(bytes.size()));
  }
  if (std::memcmp(p, kMagic, 4) != 0) {
    throw FormatError(origin + ": bad magic \"" + bytes.substr(0, 4) + "\" (expected \"TTF1\")");
  }
  const std::uint32_t version = detail::get_u32(p + 4);
  if (version != kVersion) {
    throw FormatError(origin + ": unsupported TTF1 version " + std::to_string(version));
  }
  const std::uint64_t n = detail::get_u64(p + 8);
  const std::uint64_t d = detail::get_u32(p + 16);
  const std::uint32_t num_classes = detail::get_u32(p + 20);
  if (n == 0 || d == 0 || num_classes == 0) {
    throw FormatError(origin + ": header declares an empty shape (n=" + std::to_string(n) +
                      ", d=" + std::to_string(d) + ", C=" + std::to_string(num_classes) + ")");
  }
  // Each row carries d features plus one label, 4 bytes each.
  const std::uint64_t row_bytes = 4 * (d + 1);
  const std::uint64_t available = bytes.size() - kHeaderBytes;
  if (n > available / row_bytes) {
    const bool representable = n <= (UINT64_MAX - kHeaderBytes) / row_bytes;
    throw FormatError(origin + ": truncated payload: expected " +
                      (representable ? std::to_string(kHeaderBytes + n * row_bytes)
                                     : std::string("more than 2^64")) +
                      " bytes, got " + std::to_string(bytes.size()));
  }
  if (n * row_bytes != available) {
    throw FormatError(origin + ": trailing data: expected " +
                      std::to_string(kHeaderBytes + n * row_bytes) + " bytes, got " +
                      std::to_string(bytes.size()));
  }

  FeatureSet fs;
  fs.num_classes = num_classes;
  fs.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const unsigned char* cursor = p + kHeaderBytes;
  float* values = fs.features.data();
  for (std::uint64_t i = 0; i < n * d; ++i, cursor += 4) {
    values[i] = std::bit_cast<float>(detail::get_u32(cursor));
    if (!std::isfinite(values[i])) {
      throw FormatError(origin + ": non-finite feature at row " + std::to_string(i / d) +
                        ", column " + std::to_string(i % d));
    }
  }
  fs.labels.resize(n);
  for (std::uint64_t i = 0; i < n; ++i, cursor += 4) {
    fs.labels[i] = detail::get_u32(cursor);
    if (fs.labels[i] >= num_classes) {
      throw FormatError(origin + ": label " + std::to_string(fs.labels[i]) + " at row " +
                        std::to_string(i) + " is out of range for C=" + std::to_string(num_classes));
    }
  }
  return fs;
}

}  // namespace ttf1

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

/// Writes `fs` as TTF1 to `path` and the manifest to `path + ".json"`.
/// All validation happens before the first byte is written.
inline void write_feature_file(const FeatureSet& fs, const DatasetManifest& manifest,
                               const std::filesystem::path& path) {
  fs.validate();
  manifest.validate_against(fs);
  const std::string bytes = ttf1::encode(fs);
  const std::string sidecar = nlohmann::json(manifest).dump(2) + "\n";
  write_file_bytes(path, bytes);
  write_file_bytes(ttf1::sidecar_path(path), sidecar);
}

struct LoadedFeatures {
  FeatureSet features;
  DatasetManifest manifest;
};

/// Reads a TTF1 file and its manifest. A missing manifest is replaced by
/// DatasetManifest::describe() named after the file stem.
inline LoadedFeatures read_feature_file(const std::filesystem::path& path) {
  LoadedFeatures out;
  out.features = ttf1::decode(read_file_bytes(path), path.string());
  const auto sidecar = ttf1::sidecar_path(path);
  if (std::filesystem::exists(sidecar)) {
    try {
      out.manifest = nlohmann::json::parse(read_file_bytes(sidecar)).get<DatasetManifest>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(sidecar.string() + ": invalid manifest: " + e.what());
    }
    try {
      out.manifest.validate_against(out.features);
    } catch (const ValidationError& e) {
      throw FormatError(sidecar.string() + ": " + e.what());
    }
  } else {
    out.manifest = DatasetManifest::describe(out.features, path.stem().string());
  }
  return out;
}

/// Row subset of a feature set (labels follow the rows).
inline FeatureSet subset(const FeatureSet& fs, const std::vector<std::size_t>& rows) {
  FeatureSet out;
  out.num_classes = fs.num_classes;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), fs.features.cols());
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = fs.features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels[i] = fs.labels[rows[i]];
  }
  return out;
}

/// One-hot n x C target matrix.
inline Matrix encode_targets(const std::vector<Label>& labels, std::uint32_t num_classes) {
  Matrix targets = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " is out of range for C=" +
                            std::to_string(num_classes));
    }
    targets(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return targets;
}

struct SplitPlan {
  std::uint32_t k = 0;
  std::vector<std::uint32_t> assignments;  // fold id per sample
  std::uint64_t seed = 0;
  std::vector<Label> undersized_classes;   // classes with fewer than k samples

  std::vector<std::size_t> test_indices(std::uint32_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
      if (assignments[i] == fold) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> train_indices(std::uint32_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
      if (assignments[i] != fold) out.push_back(i);
    return out;
  }
};

/// Seeded stratified k-fold assignment.
///
/// Each class's samples are shuffled and dealt round-robin over the folds; the
/// dealing position carries over from one class to the next so total fold
/// sizes also differ by at most one. Classes with fewer than k samples are
/// listed in `undersized_classes` (they cannot appear in every fold).
inline SplitPlan stratified_kfold(const std::vector<Label>& labels, std::uint32_t k,
                                  std::uint64_t seed) {
  if (k < 2) throw ValidationError("fold count must be >= 2 (got " + std::to_string(k) + ")");
  if (labels.size() < k) {
    throw ValidationError("cannot split " + std::to_string(labels.size()) + " samples into " +
                          std::to_string(k) + " folds");
  }
  const Label num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  SplitPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(labels.size(), 0);
  Rng rng(seed);
  std::uint32_t next_fold = 0;
  for (Label c = 0; c < num_classes; ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    if (members.size() < k) plan.undersized_classes.push_back(c);
    shuffle(members, rng);
    for (std::size_t idx : members) {
      plan.assignments[idx] = next_fold;
      next_fold = (next_fold + 1) % k;
    }
  }
  return plan;
}

/// Per-column z-scoring fitted on one set of rows and applied to others.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    const double n = static_cast<double>(x.rows());
    s.mean = x.colwise().sum() / n;
    s.scale.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - s.mean(j)).square().sum() / n;
      s.scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

  Matrix apply(const Matrix& x) const {
    return (x.rowwise() - mean).array().rowwise() / scale.array();
  }
};

}  // namespace toptune
