#pragma once

// Model files ("TTM1").
//
//   offset  size  field
//   0       4     magic "TTM1"
//   4       4     u32 version (= 1), little-endian
//   8       8     u64 H, byte length of the JSON header
//   16      H     UTF-8 JSON header
//   16+H    ...   payload: the arrays listed in header["arrays"], in order,
//                 each rows*cols little-endian IEEE-754 float64, row-major
//
// Header keys: kind ("nystrom" | "exact" | "linear"), d, C, M (kernel kinds),
// gamma and lambda (kernel kinds), alpha (linear), center_indices (nystrom),
// training_log, standardized, arrays [{name, rows, cols}].
//
// When standardized is true, two 1 x d arrays "standardize_mean" and
// "standardize_scale" follow the model arrays and are applied to inputs before
// scoring.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>

#include <json.hpp>

#include "toptune/errors.hpp"
#include "toptune/feature_store.hpp"
#include "toptune/krr.hpp"

namespace toptune {

inline nlohmann::json training_log_json(const TrainingLog& log) {
  return {{"preconditioner", log.preconditioner},
          {"relative_jitter", log.relative_jitter},
          {"iterations", log.iterations},
          {"relative_residuals", log.relative_residuals},
          {"converged", log.converged},
          {"fit_seconds", log.fit_seconds}};
}

inline TrainingLog training_log_from_json(const nlohmann::json& j) {
  TrainingLog log;
  j.at("preconditioner").get_to(log.preconditioner);
  j.at("relative_jitter").get_to(log.relative_jitter);
  j.at("iterations").get_to(log.iterations);
  j.at("relative_residuals").get_to(log.relative_residuals);
  j.at("converged").get_to(log.converged);
  j.at("fit_seconds").get_to(log.fit_seconds);
  return log;
}

/// A model plus the input standardization it was trained with, if any.
struct SavedModel {
  Model model;
  std::optional<Standardizer> standardizer;
};

inline Matrix predict_scores(const SavedModel& saved, const Matrix& x) {
  if (!saved.standardizer) return predict_scores(saved.model, x);
  if (x.cols() != saved.standardizer->mean.cols()) {
    throw ValidationError("feature dimension mismatch: model expects d=" +
                          std::to_string(saved.standardizer->mean.cols()) + ", got d=" +
                          std::to_string(x.cols()));
  }
  return predict_scores(saved.model, saved.standardizer->apply(x));
}

namespace model_file {

inline constexpr char kMagic[4] = {'T', 'T', 'M', '1'};
inline constexpr std::uint32_t kVersion = 1;

namespace detail {

inline void append_array(std::string& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(m.data()[i]);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
  }
}

inline nlohmann::json array_entry(const char* name, const Matrix& m) {
  return {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}};
}

struct Reader {
  const std::string& bytes;
  std::size_t offset;
  std::string origin;

  Matrix next_array(const nlohmann::json& entry, const char* expected_name) {
    if (entry.at("name").get<std::string>() != expected_name) {
      throw FormatError(origin + ": expected array \"" + expected_name + "\", found \"" +
                        entry.at("name").get<std::string>() + "\"");
    }
    const auto rows = entry.at("rows").get<std::uint64_t>();
    const auto cols = entry.at("cols").get<std::uint64_t>();
    const std::size_t remaining = bytes.size() - offset;
    if (cols != 0 && rows > remaining / 8 / cols) {
      throw FormatError(origin + ": truncated payload in array \"" + expected_name + "\"");
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
    for (Eigen::Index i = 0; i < m.size(); ++i, p += 8) {
      std::uint64_t bits = 0;
      for (int b = 7; b >= 0; --b) bits = (bits << 8) | p[b];
      m.data()[i] = std::bit_cast<double>(bits);
    }
    offset += static_cast<std::size_t>(m.size()) * 8;
    if (!m.allFinite()) throw FormatError(origin + ": non-finite values in \"" + expected_name + "\"");
    return m;
  }
};

}  // namespace detail

inline std::string encode(const Model& model, const std::optional<Standardizer>& standardizer = {}) {
  nlohmann::json header;
  std::string payload;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        header["training_log"] = training_log_json(m.log);
        if constexpr (std::is_same_v<T, NystromModel>) {
          header["kind"] = "nystrom";
          header["gamma"] = m.params.gamma;
          header["lambda"] = m.lambda;
          header["M"] = m.centers.rows();
          header["d"] = m.centers.cols();
          header["C"] = m.coefficients.cols();
          header["center_indices"] = m.center_indices;
          header["arrays"] = {detail::array_entry("centers", m.centers),
                              detail::array_entry("coefficients", m.coefficients)};
          detail::append_array(payload, m.centers);
          detail::append_array(payload, m.coefficients);
        } else if constexpr (std::is_same_v<T, ExactModel>) {
          header["kind"] = "exact";
          header["gamma"] = m.params.gamma;
          header["lambda"] = m.lambda;
          header["M"] = m.support.rows();
          header["d"] = m.support.cols();
          header["C"] = m.coefficients.cols();
          header["arrays"] = {detail::array_entry("support", m.support),
                              detail::array_entry("coefficients", m.coefficients)};
          detail::append_array(payload, m.support);
          detail::append_array(payload, m.coefficients);
        } else {
          header["kind"] = "linear";
          header["alpha"] = m.alpha;
          header["d"] = m.weights.rows();
          header["C"] = m.weights.cols();
          header["arrays"] = {detail::array_entry("weights", m.weights)};
          detail::append_array(payload, m.weights);
        }
      },
      model);
  header["standardized"] = standardizer.has_value();
  if (standardizer) {
    const Matrix mean = standardizer->mean;
    const Matrix scale = standardizer->scale;
    if (mean.cols() != header["d"].get<Eigen::Index>() || scale.cols() != mean.cols()) {
      throw ValidationError("standardizer width does not match the model");
    }
    header["arrays"].push_back(detail::array_entry("standardize_mean", mean));
    header["arrays"].push_back(detail::array_entry("standardize_scale", scale));
    detail::append_array(payload, mean);
    detail::append_array(payload, scale);
  }

  const std::string header_text = header.dump();
  std::string out(kMagic, 4);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((kVersion >> (8 * b)) & 0xFFu));
  const std::uint64_t h = header_text.size();
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((h >> (8 * b)) & 0xFFu));
  out += header_text;
  out += payload;
  return out;
}

inline std::string encode(const SavedModel& saved) { return encode(saved.model, saved.standardizer); }

inline SavedModel decode(const std::string& bytes, const std::string& origin = "<buffer>") {
  if (bytes.size() < 16) throw FormatError(origin + ": truncated model header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(origin + ": bad magic \"" + bytes.substr(0, 4) + "\" (expected \"TTM1\")");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::uint32_t version = 0;
  for (int b = 3; b >= 0; --b) version = (version << 8) | p[4 + b];
  if (version != kVersion) throw FormatError(origin + ": unsupported model version " + std::to_string(version));
  std::uint64_t header_len = 0;
  for (int b = 7; b >= 0; --b) header_len = (header_len << 8) | p[8 + b];
  if (header_len > bytes.size() - 16) throw FormatError(origin + ": truncated model header");

  try {
    const auto header = nlohmann::json::parse(bytes.substr(16, header_len));
    detail::Reader reader{bytes, 16 + header_len, origin};
    const auto& arrays = header.at("arrays");
    const std::string kind = header.at("kind");
    const std::size_t model_arrays = kind == "linear" ? 1 : 2;
    Model model;
    if (kind == "nystrom") {
      NystromModel m;
      m.params.gamma = header.at("gamma");
      m.lambda = header.at("lambda");
      m.center_indices = header.at("center_indices").get<std::vector<std::size_t>>();
      m.centers = reader.next_array(arrays.at(0), "centers");
      m.coefficients = reader.next_array(arrays.at(1), "coefficients");
      m.log = training_log_from_json(header.at("training_log"));
      if (m.coefficients.rows() != m.centers.rows())
        throw FormatError(origin + ": centers/coefficients row mismatch");
      model = std::move(m);
    } else if (kind == "exact") {
      ExactModel m;
      m.params.gamma = header.at("gamma");
      m.lambda = header.at("lambda");
      m.support = reader.next_array(arrays.at(0), "support");
      m.coefficients = reader.next_array(arrays.at(1), "coefficients");
      m.log = training_log_from_json(header.at("training_log"));
      if (m.coefficients.rows() != m.support.rows())
        throw FormatError(origin + ": support/coefficients row mismatch");
      model = std::move(m);
    } else if (kind == "linear") {
      LinearModel m;
      m.alpha = header.at("alpha");
      m.weights = reader.next_array(arrays.at(0), "weights");
      m.log = training_log_from_json(header.at("training_log"));
      model = std::move(m);
    } else {
      throw FormatError(origin + ": unknown model kind \"" + kind + "\"");
    }
    SavedModel saved{std::move(model), std::nullopt};
    if (header.value("standardized", false)) {
      const Matrix mean = reader.next_array(arrays.at(model_arrays), "standardize_mean");
      const Matrix scale = reader.next_array(arrays.at(model_arrays + 1), "standardize_scale");
      const auto d = header.at("d").get<Eigen::Index>();
      if (mean.rows() != 1 || mean.cols() != d || scale.rows() != 1 || scale.cols() != d)
        throw FormatError(origin + ": standardizer shape does not match d=" + std::to_string(d));
      if ((scale.array() <= 0.0).any()) throw FormatError(origin + ": non-positive standardizer scale");
      saved.standardizer = Standardizer{mean.row(0), scale.row(0)};
    }
    if (reader.offset != bytes.size()) throw FormatError(origin + ": trailing bytes after payload");
    return saved;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": invalid model header: " + e.what());
  }
}

}  // namespace model_file

inline void save_model(const Model& model, const std::filesystem::path& path,
                       const std::optional<Standardizer>& standardizer = {}) {
  write_file_bytes(path, model_file::encode(model, standardizer));
}

inline SavedModel load_model(const std::filesystem::path& path) {
  return model_file::decode(read_file_bytes(path), path.string());
}

}  // namespace toptune
