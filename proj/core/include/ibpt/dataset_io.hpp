#pragma once

// Dataset files: {"px": [..], "py_given_x": [[..]]} or {"pxy": [[..]]}.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ibpt/prob_core.hpp"

namespace ibpt {

// Row sums must lie within this of 1 before renormalization.
inline constexpr double kLoaderSumTol = 1e-9;

struct Dataset {
  Vector px;
  Matrix py_given_x;
  std::vector<std::string> y_labels;  // optional class names

  JointDistribution joint() const { return JointDistribution::from_conditional(px, py_given_x); }
  std::size_t nx() const { return static_cast<std::size_t>(px.size()); }
  std::size_t ny() const { return static_cast<std::size_t>(py_given_x.cols()); }

  // Validates and renormalizes; the result is a fixed point of itself.
  static Dataset from_conditional(Vector px, Matrix py_given_x, std::vector<std::string> y_labels = {});
  static Dataset from_joint(const Matrix& pxy);
};

Dataset dataset_from_json(std::string_view text);
std::string dataset_to_json(const Dataset& ds);

Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);

// An N x C table of p(y|x) (whitespace- or comma-separated, '#' comments),
// paired with uniform p(x) over its rows.
Dataset dataset_from_pyx_text(std::string_view text);
Dataset load_pyx_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// 64-bit FNV-1a, lowercase hex.
std::string fnv1a64_hex(std::string_view bytes);

}  // namespace ibpt
